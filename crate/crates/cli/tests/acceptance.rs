//! Acceptance harness. Runs every criterion in sequence, prints one
//! PASS/FAIL line each and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lsm_core::enhance::{bin_velocity, enhance_level, fuse, screen_points, DeformationLevelRaster, DeformationPoint};
use lsm_core::eval::{confusion_metrics, roc_auroc, EvalReport};
use lsm_core::features::{class_counts, Feature, LabeledSample};
use lsm_core::forest::{train_forest, ForestConfig};
use lsm_core::io::write_samples;
use lsm_core::meta::{adapt, meta_train, task_gradient, task_objective, AdaptConfig, MetaConfig, MetaState, OuterOptimizer};
use lsm_core::mlp::{loss, loss_and_grad, Example, MlpParams, DEFAULT_ARCHITECTURE};
use lsm_core::raster::{ClassBreaks, GridGeometry, SusceptibilityRaster};
use lsm_core::rng;
use lsm_core::shapley::{shapley_exact, shapley_mc, Attribution, Ranking, ShapleyMode};
use lsm_core::synth::{generate, linear_task_family, SynthConfig};
use lsm_core::tasks::{build_meta_pool, build_year_tasks, route_model, MetaPoolConfig, Route};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

type Check = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Check, u64);

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

const TABLE: [[u8; 5]; 5] = [
    [0, 1, 2, 3, 4],
    [1, 1, 2, 3, 4],
    [2, 2, 3, 3, 4],
    [3, 3, 4, 4, 4],
    [4, 4, 4, 4, 4],
];

fn enhancement_matrix() -> Check {
    let mut mismatches = 0;
    let mut lowered = 0;
    for d in 0..5u8 {
        for l in 0..5u8 {
            let out = enhance_level(d, l);
            mismatches += usize::from(out != TABLE[d as usize][l as usize]);
            lowered += usize::from(out < d || out < l);
        }
    }
    // Same property through the raster fusion path.
    let g = GridGeometry::new(5, 5, 0.0, 0.0, 1.0).map_err(fail)?;
    let probs: Vec<Option<f64>> = (0..25).map(|i| Some((i % 5) as f64 * 0.2 + 0.1)).collect();
    let initial = SusceptibilityRaster::from_probabilities(g, probs, &ClassBreaks::EqualInterval).map_err(fail)?;
    let deform = DeformationLevelRaster {
        geometry: g,
        level: (0..25).map(|i| (i / 5) as u8).collect(),
    };
    let fused = fuse(&initial, &deform).map_err(fail)?;
    let raster_ok = (0..25).all(|i| fused.level[i] == Some(TABLE[i / 5][i % 5]));
    Ok((
        mismatches == 0 && lowered == 0 && raster_ok,
        format!("25 cases: {mismatches} mismatches, {lowered} lowered, raster path ok={raster_ok}"),
    ))
}

// ---------------------------------------------------------------- 2

fn binning_and_screening() -> Check {
    let bins = [(-12.0, 4u8), (0.0, 0), (-10.0, 4)];
    let bins_ok = bins.iter().all(|&(v, l)| bin_velocity(v).ok() == Some(l));
    let pt = |aspect, slope| DeformationPoint {
        easting: 0.0,
        northing: 0.0,
        velocity: -5.0,
        aspect,
        slope,
    };
    let kept = |a, s| !screen_points(&[pt(a, s)], 5.0).is_empty();
    let screen_ok = !kept(5.0, 30.0) && kept(90.0, 30.0) && !kept(90.0, 2.0) && !kept(180.0, 30.0) && !kept(355.0, 30.0);
    let nan_rejected = bin_velocity(f64::NAN).is_err();
    let mut prev = 4u8;
    let mut monotone = true;
    for i in 0..10_000 {
        let v = -20.0 + 25.0 * i as f64 / 9_999.0;
        let l = bin_velocity(v).map_err(fail)?;
        monotone &= l <= prev;
        prev = l;
    }
    Ok((
        bins_ok && screen_ok && nan_rejected && monotone,
        format!("bin examples={bins_ok}, screening examples={screen_ok}, NaN rejected={nan_rejected}, 10k sweep monotone={monotone}"),
    ))
}

// ---------------------------------------------------------------- 3

fn examples(seed: u64, n: usize, d: usize) -> Vec<Example> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| Example {
            x: (0..d).map(|_| r.gen_range(-2.0..2.0)).collect(),
            y: r.gen_range(0..2),
        })
        .collect()
}

fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            let t = p[i];
            p[i] = t + h;
            let up = f(&p);
            p[i] = t - h;
            let down = f(&p);
            p[i] = t;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest component error relative to the largest component magnitude.
fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn gradients() -> Check {
    let mut worst_mlp = 0.0f64;
    let mut worst_meta = 0.0f64;
    for seed in 0..20u64 {
        let p = MlpParams::init(&DEFAULT_ARCHITECTURE, seed);
        let batch = examples(seed + 100, 16, 15);
        let (_, g) = loss_and_grad(&p.sizes, &p.theta, &batch);
        let fd = central_diff(|t| loss(&p.sizes, t, &batch), &p.theta, 1e-5);
        worst_mlp = worst_mlp.max(max_rel(&g, &fd));

        let sizes = [15, 4, 2];
        let q = MlpParams::init(&sizes, seed + 1000);
        let (support, query) = (examples(seed + 200, 8, 15), examples(seed + 300, 8, 15));
        let alpha = 0.05;
        let tg = task_gradient(&sizes, &q.theta, alpha, &support, &query, 5, 4, true);
        let fd = central_diff(|t| task_objective(&sizes, t, alpha, &support, &query, 5, 4), &q.theta, 1e-5);
        let h = 1e-6;
        let fd_alpha = (task_objective(&sizes, &q.theta, alpha + h, &support, &query, 5, 4)
            - task_objective(&sizes, &q.theta, alpha - h, &support, &query, 5, 4))
            / (2.0 * h);
        let mut analytic = tg.d_theta.clone();
        analytic.push(tg.d_alpha);
        let mut numeric = fd;
        numeric.push(fd_alpha);
        worst_meta = worst_meta.max(max_rel(&analytic, &numeric));
    }
    Ok((
        worst_mlp < 1e-4 && worst_meta < 1e-4,
        format!("20 seeds: max relative error MLP {worst_mlp:.2e}, second-order meta {worst_meta:.2e} (tol 1e-4)"),
    ))
}

// ---------------------------------------------------------------- 4

fn rows(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect()
}

fn nonlinear(x: &[f64]) -> f64 {
    let s: f64 = x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * 0.3 * v).sum();
    1.0 / (1.0 + (-(s + x[0] * x.get(1).copied().unwrap_or(0.0))).exp())
}

fn shapley_axioms() -> Check {
    let mut worst_eff = 0.0f64;
    let mut worst_lin = 0.0f64;
    for seed in 0..20u64 {
        let d = 2 + (seed as usize % 7);
        let bg = rows(seed, 6, d);
        let x = &rows(seed + 50, 1, d)[0];
        let a = shapley_exact(&nonlinear, x, &bg).map_err(fail)?;
        worst_eff = worst_eff.max((a.phi.iter().sum::<f64>() - (a.prediction - a.base_value)).abs());

        let w: Vec<f64> = rows(seed + 70, 1, d)[0].iter().map(|v| 3.0 * v).collect();
        let lin = |z: &[f64]| w.iter().zip(z).map(|(w, z)| w * z).sum::<f64>() + 0.5;
        let a = shapley_exact(&lin, x, &bg).map_err(fail)?;
        for i in 0..d {
            let m = bg.iter().map(|b| b[i]).sum::<f64>() / bg.len() as f64;
            worst_lin = worst_lin.max((a.phi[i] - w[i] * (x[i] - m)).abs());
        }
    }

    // Feature 2 is ignored; features 0 and 1 enter symmetrically and share
    // their background column, so every coalition pair evaluates identically.
    let sym = |z: &[f64]| (z[0] * z[1]).tanh() + z[0] + z[1] + 0.5 * z[3] * z[3];
    let mut bg = rows(9, 8, 4);
    for r in &mut bg {
        r[1] = r[0];
    }
    let x = [0.4, 0.4, -3.0, 0.7];
    let a = shapley_exact(&sym, &x, &bg).map_err(fail)?;
    let dummy = a.phi[2] == 0.0;
    let symmetric = a.phi[0] == a.phi[1];

    let mut worst_mc = 0.0f64;
    for seed in 0..3u64 {
        let bg = rows(seed + 400, 4, 8);
        let x = &rows(seed + 500, 1, 8)[0];
        let exact = shapley_exact(&nonlinear, x, &bg).map_err(fail)?;
        let mc = shapley_mc(&nonlinear, x, &bg, 20_000, seed).map_err(fail)?;
        worst_mc = worst_mc.max(exact.phi.iter().zip(&mc.phi).fold(0.0f64, |m, (e, s)| m.max((e - s).abs())));
    }
    Ok((
        worst_eff < 1e-9 && worst_lin < 1e-9 && dummy && symmetric && worst_mc < 0.01,
        format!(
            "efficiency {worst_eff:.1e}, linear closed form {worst_lin:.1e}, dummy={dummy}, symmetry={symmetric}, MC(n=8, 20k) max dev {worst_mc:.4}"
        ),
    ))
}

// ---------------------------------------------------------------- 5

fn metric_oracles() -> Check {
    let mut r = rng::seeded(5);
    let mut exact = true;
    let mut worst_auc = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(2..60);
        let y: Vec<u8> = (0..n).map(|_| r.gen_range(0..2)).collect();
        let p: Vec<u8> = (0..n).map(|_| r.gen_range(0..2)).collect();
        let m = confusion_metrics(&y, &p).map_err(fail)?;
        let count = |a: u8, b: u8| y.iter().zip(&p).filter(|&(&t, &q)| t == a && q == b).count();
        let (tp, tn, fp, fn_) = (count(1, 1), count(0, 0), count(0, 1), count(1, 0));
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        exact &= m.confusion.tp == tp && m.confusion.tn == tn && m.confusion.fp == fp && m.confusion.fn_ == fn_;
        exact &= m.accuracy == (tp + tn) as f64 / n as f64 && m.precision == precision && m.recall == recall;
        exact &= match (m.f1, f1) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-15,
            (a, b) => a == b,
        };

        // Scores on a coarse lattice so ties occur.
        let s: Vec<f64> = (0..n).map(|_| r.gen_range(0..8) as f64 / 8.0).collect();
        let (npos, nneg) = (y.iter().filter(|&&v| v == 1).count(), y.iter().filter(|&&v| v == 0).count());
        if npos > 0 && nneg > 0 {
            let (_, auc) = roc_auroc(&y, &s).map_err(fail)?;
            let mut u = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if y[i] == 1 && y[j] == 0 {
                        u += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                    }
                }
            }
            worst_auc = worst_auc.max((auc - u / (npos * nneg) as f64).abs());
        }
    }
    Ok((
        exact && worst_auc < 1e-12,
        format!("1000 vectors: confusion metrics exact={exact}, AUROC vs Mann-Whitney max dev {worst_auc:.1e}"),
    ))
}

// ---------------------------------------------------------------- 6

const RICH_YEARS: std::ops::Range<i32> = 2001..2009;
const SCARCE_YEARS: [i32; 3] = [2010, 2011, 2012];

fn meta_config(seed: u64) -> MetaConfig {
    MetaConfig {
        iterations: 300,
        meta_batch: 8,
        outer_lr: 0.003,
        optimizer: OuterOptimizer::Adam,
        seed,
        ..MetaConfig::default()
    }
}

fn accuracy(m: &lsm_core::meta::AdaptedModel, query: &[LabeledSample]) -> f64 {
    query
        .iter()
        .filter(|s| (m.predict_proba(&s.features.model_input()) >= 0.5) == s.label.is_positive())
        .count() as f64
        / query.len() as f64
}

struct SeedResult {
    meta: f64,
    scratch: f64,
    /// Accuracy after L = 1..=5 updates, per scarce year.
    by_updates: Vec<[f64; 5]>,
}

fn adaptation_seed(seed: u64) -> Result<SeedResult, String> {
    let mut years: Vec<(i32, usize)> = RICH_YEARS.map(|y| (y, 64)).collect();
    years.extend(SCARCE_YEARS.iter().map(|&y| (y, 8)));
    let samples = linear_task_family(seed, &years, 0.3);
    let tasks = build_year_tasks(&samples, (2001, 2012), rng::derive(seed, 1));
    let pool = build_meta_pool(&tasks, &MetaPoolConfig::default(), rng::derive(seed, 2)).map_err(fail)?;
    let cfg = meta_config(seed);
    let state = meta_train(&pool, &cfg).map_err(fail)?;
    // Same architecture, rate, schedule and data; only the initialisation differs.
    let scratch_cfg = MetaConfig {
        inner_lr: state.inner_lr(),
        seed: rng::derive(seed, 3),
        ..cfg
    };
    let scratch = MetaState::fresh(&scratch_cfg, state.standardizer.clone()).map_err(fail)?;
    let mut out = SeedResult {
        meta: 0.0,
        scratch: 0.0,
        by_updates: Vec::new(),
    };
    for task in tasks.iter().filter(|t| SCARCE_YEARS.contains(&t.year)) {
        if route_model(task, 50) != Some(Route::FewShot) {
            return Err(format!("year {} not routed to few-shot", task.year));
        }
        let (support, query) = (task.support_samples(), task.query_samples());
        let ac = |steps| AdaptConfig {
            steps,
            batch_size: 8,
            seed: rng::derive(seed, 4),
        };
        let m = adapt(&state, task.year, &support, &ac(5)).map_err(fail)?;
        let s = adapt(&scratch, task.year, &support, &ac(5)).map_err(fail)?;
        out.meta += accuracy(&m, &query) / SCARCE_YEARS.len() as f64;
        out.scratch += accuracy(&s, &query) / SCARCE_YEARS.len() as f64;
        let mut by = [0.0; 5];
        for (l, slot) in by.iter_mut().enumerate() {
            *slot = accuracy(&adapt(&state, task.year, &support, &ac(l + 1)).map_err(fail)?, &query);
        }
        out.by_updates.push(by);
    }
    Ok(out)
}

fn adaptation_gain() -> Check {
    let results = (0..20u64).into_par_iter().map(adaptation_seed).collect::<Result<Vec<_>, _>>()?;
    let n = results.len() as f64;
    let meta = results.iter().map(|r| r.meta).sum::<f64>() / n;
    let scratch = results.iter().map(|r| r.scratch).sum::<f64>() / n;
    let gain = meta - scratch;

    let per_l: Vec<Vec<f64>> = (0..5)
        .map(|l| results.iter().flat_map(|r| r.by_updates.iter().map(move |b| b[l])).collect())
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let means: Vec<f64> = per_l.iter().map(|v| mean(v)).collect();
    let pooled = (per_l
        .iter()
        .zip(&means)
        .map(|(v, m)| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64)
        .sum::<f64>()
        / 5.0)
        .sqrt();
    let nondecreasing = means.windows(2).all(|w| w[1] >= w[0] - pooled);
    let curve: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    Ok((
        gain >= 0.10 && nondecreasing,
        format!(
            "20 seeds, scarce years: meta {meta:.3} vs scratch {scratch:.3} (gain {gain:.3}, need 0.10); OA for L=1..5 [{}], pooled std {pooled:.3}",
            curve.join(", ")
        ),
    ))
}

// ---------------------------------------------------------------- 7

fn planted_world(seed: u64) -> SynthConfig {
    SynthConfig {
        ncols: 80,
        nrows: 80,
        first_year: 2012,
        landslides_per_year: vec![120, 90, 30, 8],
        extreme_years: vec![2013],
        n_deformation_points: 100,
        seed,
        ..SynthConfig::default()
    }
}

fn planted_ranking(seed: u64) -> Result<Ranking, String> {
    let cfg = planted_world(seed);
    let world = generate(&cfg).map_err(fail)?;
    let tasks = build_year_tasks(&world.samples, (cfg.first_year, cfg.last_year()), rng::derive(seed, 1));
    let mut pooled: Vec<Attribution> = Vec::new();
    for task in tasks.iter().filter(|t| route_model(t, 50) == Some(Route::Forest)) {
        let fc = ForestConfig {
            n_trees: 60,
            seed: rng::derive(seed, task.year as u64),
            ..ForestConfig::default()
        };
        let model = train_forest(&task.samples, &fc).map_err(fail)?;
        let mut s = task.samples.clone();
        s.sort_by_key(|x| x.id);
        let instances: Vec<Vec<f64>> = (0..40).map(|i| s[i * s.len() / 40].features.model_input().to_vec()).collect();
        s.shuffle(&mut rng::stream(seed, 7));
        let background: Vec<Vec<f64>> = s[..16].iter().map(|x| x.features.model_input().to_vec()).collect();
        let (_, attrs) = lsm_core::shapley::rank_features(
            &model,
            &instances,
            &background,
            ShapleyMode::Auto { permutations: 32 },
            rng::derive(seed, 8),
        )
        .map_err(fail)?;
        pooled.extend(attrs);
    }
    Ranking::from_attributions(None, &pooled).map_err(fail)
}

fn planted_attribution() -> Check {
    let ranks = (0..20u64)
        .into_par_iter()
        .map(|s| planted_ranking(s + 100))
        .collect::<Result<Vec<_>, _>>()?;
    let hits = ranks
        .iter()
        .filter(|r| r.rank_of(Feature::Slope.index()) == 1 && r.rank_of(Feature::ExtremeRainfallDays.index()) <= 3)
        .count();
    let aerd: Vec<String> = ranks.iter().map(|r| r.rank_of(Feature::ExtremeRainfallDays.index()).to_string()).collect();
    Ok((
        hits >= 18,
        format!("slope first and AERD in top 3 in {hits}/20 seeds (need 18); AERD ranks [{}]", aerd.join(" ")),
    ))
}

// ---------------------------------------------------------------- 8

const E2E_CONFIG: &str = "seed = 42\n\n[meta]\niterations = 300\n";
const STAGES: [&str; 7] = ["synth", "featurize", "train", "map", "explain", "enhance", "eval"];

fn run_lsm(root: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lsm"))
        .arg("--config")
        .arg(root.join("lsm.toml"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(fail)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("lsm {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).expect("readable dir").flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pipeline_run(root: &Path) -> Result<Duration, String> {
    fs::write(root.join("lsm.toml"), E2E_CONFIG).map_err(fail)?;
    let t = Instant::now();
    for stage in STAGES {
        run_lsm(root, &[stage])?;
    }
    Ok(t.elapsed())
}

fn end_to_end() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(fail)?, tempfile::tempdir().map_err(fail)?);
    let ta = pipeline_run(a.path())?;
    let tb = pipeline_run(b.path())?;
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();

    let cfg = SynthConfig::default();
    let props = fs::read_to_string(a.path().join(format!("out/enhance/proportions_{}.csv", cfg.last_year()))).map_err(fail)?;
    let mut initial = [0.0; 5];
    let mut enhanced = [0.0; 5];
    for (l, line) in props.lines().skip(1).enumerate() {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        initial[l] = v[1];
        enhanced[l] = v[2];
    }
    let sums_ok = (initial.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && (enhanced.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
    let (hi0, hi1) = (initial[3] + initial[4], enhanced[3] + enhanced[4]);
    let limit = Duration::from_secs(60);
    Ok((
        differing.is_empty() && ta < limit && tb < limit && sums_ok && hi1 >= hi0,
        format!(
            "200x200x8 years: runs {:.1}s / {:.1}s, {} files, {} differing; proportions sum to 1: {sums_ok}; high+very high {:.3} -> {:.3}",
            ta.as_secs_f64(),
            tb.as_secs_f64(),
            fa.len(),
            differing.len(),
            hi0,
            hi1
        ),
    ))
}

// ---------------------------------------------------------------- 9

fn external_data() -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let root = dir.path();
    // Stand-in for a real sample table in the published CSV schema.
    let samples = linear_task_family(77, &[(2015, 90), (2016, 70), (2017, 12)], 0.2);
    fs::create_dir_all(root.join("data")).map_err(fail)?;
    write_samples(root.join("data/samples.csv"), &samples).map_err(fail)?;
    fs::write(
        root.join("lsm.toml"),
        "span = [2015, 2017]\n\n[paths]\nsamples = \"data/samples.csv\"\n\n[meta]\niterations = 100\n",
    )
    .map_err(fail)?;
    run_lsm(root, &["eval"])?;
    let report: EvalReport = lsm_core::io::read_json(root.join("out/eval/report.json")).map_err(fail)?;
    let complete = |m: &lsm_core::eval::ModelEval| {
        m.accuracy.is_some() && m.precision.is_some() && m.recall.is_some() && m.f1.is_some() && m.auroc.is_some()
    };
    let names: Vec<&str> = report.overall.iter().chain(&report.periodic).map(|m| m.name.as_str()).collect();
    let overall_ok = report.overall.len() == 2 && report.overall.iter().all(complete);
    let files_ok = ["metrics.csv", "roc.csv", "adaptation.csv", "manifest.json"]
        .iter()
        .all(|f| root.join("out/eval").join(f).exists());
    let (pos, neg) = class_counts(&samples);
    Ok((
        overall_ok && files_ok && !report.periodic.is_empty(),
        format!(
            "{} external samples ({pos}+/{neg}-): models [{}], full metric suite={overall_ok}, report files={files_ok}",
            samples.len(),
            names.join(", ")
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 enhancement matrix", enhancement_matrix, 1),
        ("2 velocity binning and screening", binning_and_screening, 1),
        ("3 gradient correctness", gradients, 30),
        ("4 shapley axioms", shapley_axioms, 120),
        ("5 metric oracles", metric_oracles, 10),
        ("6 adaptation gain", adaptation_gain, 600),
        ("7 planted-factor attribution", planted_attribution, 300),
        ("8 end-to-end determinism and scale", end_to_end, 150),
        ("9 external data evaluation", external_data, 120),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok && secs < limit as f64, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!("{} [{name}] {detail} ({secs:.2}s, limit {limit}s)", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
