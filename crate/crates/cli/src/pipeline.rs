//! The pipeline stages behind each subcommand. Every stage reads its inputs
//! from the run configuration, writes into `<out_dir>/<stage>/` and leaves a
//! manifest there.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lsm_core::enhance::{fuse, level_points, level_proportions, rasterize_levels, screen_points};
use lsm_core::eval::{
    adaptation_csv, adaptation_study, roc_csv, shuffled_eval, EvalReport, ModelEval, ModelFactory, Summary,
};
use lsm_core::features::{class_counts, Feature, LabeledSample, FEATURE_COUNT};
use lsm_core::featurize::{featurize_inventory, fill_missing, FeaturizeSummary, Featurizer};
use lsm_core::forest::{train_forest, ForestConfig};
use lsm_core::io::{read_deformation, read_inventory, read_json, read_samples, write_json, write_samples};
use lsm_core::meta::{adapt, meta_train, AdaptConfig, MetaConfig, MetaState};
use lsm_core::mlp::Standardizer;
use lsm_core::raster::{Raster, SusceptibilityRaster};
use lsm_core::rng;
use lsm_core::shapley::{
    attribution_csv, ranking_csv, trajectory_csv, write_text, yearly_rankings, Ranking, YearInput, YearRanking,
};
use lsm_core::synth::{generate, write_world, WorldPaths};
use lsm_core::tasks::{build_meta_pool, build_year_tasks, route_model, PoolManifest, Route, YearTask};
use lsm_core::{Error, Predictor, Result, YearModel};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, require_exists, RunConfig};

// Seed streams for the stages that draw random numbers.
const NEGATIVES_STREAM: u64 = 1;
const TASKS_STREAM: u64 = 2;
const POOL_STREAM: u64 = 3;
const EXPLAIN_STREAM: u64 = 4;
const EVAL_STREAM: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Written next to every stage's outputs. Holds no timestamps, so identical
/// runs leave identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub details: serde_json::Value,
}

fn digest(cfg: &RunConfig, p: &Path) -> Result<FileDigest> {
    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
    let shown = p.strip_prefix(&cfg.root).unwrap_or(p);
    Ok(FileDigest {
        path: shown.to_string_lossy().replace('\\', "/"),
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

fn write_manifest(
    cfg: &RunConfig,
    stage_dir: &Path,
    command: &str,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    details: serde_json::Value,
) -> Result<()> {
    let seeds = BTreeMap::from([
        ("run".to_string(), cfg.seed),
        ("forest".to_string(), cfg.forest.seed),
        ("meta".to_string(), cfg.meta.seed),
        ("adapt".to_string(), cfg.adapt.seed),
        ("synth".to_string(), cfg.synth.seed),
    ]);
    let m = Manifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seeds,
        inputs: inputs.iter().map(|p| digest(cfg, p)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| digest(cfg, p)).collect::<Result<_>>()?,
        details,
    };
    write_json(stage_dir.join("manifest.json"), &m)?;
    write_text(stage_dir.join("config.toml"), &cfg.to_toml())
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn stack_inputs(cfg: &RunConfig) -> Vec<PathBuf> {
    cfg.stack_paths().all().iter().map(|(_, p)| p.to_path_buf()).collect()
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(cfg: &RunConfig) -> Result<WorldPaths> {
    let dir = cfg.resolve(&cfg.paths.world);
    let t = Instant::now();
    let world = generate(&cfg.synth)?;
    let paths = write_world(&world, &dir)?;
    log::info!(
        "synthetic world: {}x{} cells, {} landslides, {} deformation points in {:.2?}",
        cfg.synth.ncols,
        cfg.synth.nrows,
        world.inventory.len(),
        world.deformation.len(),
        t.elapsed()
    );
    let mut outputs = stack_inputs(cfg);
    outputs.extend([
        paths.inventory.clone(),
        paths.deformation.clone(),
        paths.planted_samples.clone(),
        paths.rules.clone(),
    ]);
    let per_year: BTreeMap<i32, usize> = cfg
        .synth
        .years()
        .map(|y| (y, world.inventory.iter().filter(|r| r.year == y).count()))
        .collect();
    write_manifest(
        cfg,
        &dir,
        "synth",
        &[],
        &outputs,
        serde_json::json!({ "landslides_per_year": per_year }),
    )?;
    Ok(paths)
}

// ------------------------------------------------------------ featurize

fn featurize_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("featurize")
}

pub fn cmd_featurize(cfg: &RunConfig) -> Result<(Vec<LabeledSample>, FeaturizeSummary)> {
    let stack_paths = cfg.stack_paths();
    let inventory_path = cfg.inventory_path();
    require_exists("landslide inventory", &inventory_path)?;
    let stack = stack_paths.load()?;
    let all = read_inventory(&inventory_path)?;
    let (first, last) = cfg.span;
    let inventory: Vec<_> = all.iter().copied().filter(|r| (first..=last).contains(&r.year)).collect();
    if inventory.len() < all.len() {
        log::warn!("dropped {} landslides outside {first}-{last}", all.len() - inventory.len());
    }
    if inventory.is_empty() {
        return Err(Error::Data(format!(
            "no landslides in {} within {first}-{last}",
            inventory_path.display()
        )));
    }
    let locations: Vec<(f64, f64)> = inventory.iter().map(|r| (r.easting, r.northing)).collect();
    let featurizer = Featurizer::new(stack, &locations)?;
    let (samples, summary) = featurize_inventory(
        &featurizer,
        &inventory,
        &cfg.negatives,
        rng::derive(cfg.seed, NEGATIVES_STREAM),
    )?;
    for (year, n) in &summary.positives_per_year {
        log::info!(
            "{year}: {n} landslides, {} non-landslides",
            summary.negatives_per_year.get(year).unwrap_or(&0)
        );
    }

    let dir = featurize_dir(cfg);
    ensure_dir(&dir)?;
    let samples_path = cfg.samples_path();
    if let Some(parent) = samples_path.parent() {
        ensure_dir(parent)?;
    }
    write_samples(&samples_path, &samples)?;
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    let mut inputs = stack_inputs(cfg);
    inputs.push(inventory_path);
    write_manifest(
        cfg,
        &dir,
        "featurize",
        &inputs,
        &[samples_path, summary_path],
        serde_json::json!({
            "samples": samples.len(),
            "imputation_means": summary.imputation_means,
            "missing_counts": summary.missing_counts,
        }),
    )?;
    Ok((samples, summary))
}

// ---------------------------------------------------------------- train

fn models_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("models")
}

fn model_file(year: i32) -> String {
    format!("year_{year}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingEntry {
    pub year: i32,
    pub positives: usize,
    pub negatives: usize,
    pub route: Option<Route>,
    pub model: Option<String>,
}

fn load_samples(cfg: &RunConfig) -> Result<Vec<LabeledSample>> {
    let p = cfg.samples_path();
    require_exists("sample table", &p)?;
    read_samples(&p)
}

fn year_tasks(cfg: &RunConfig, samples: &[LabeledSample]) -> Vec<YearTask> {
    build_year_tasks(samples, cfg.span, rng::derive(cfg.seed, TASKS_STREAM))
}

fn year_forest_config(cfg: &RunConfig, year: i32) -> ForestConfig {
    ForestConfig {
        seed: rng::derive(cfg.forest.seed, year as u64),
        ..cfg.forest
    }
}

fn year_adapt_config(cfg: &RunConfig, year: i32) -> AdaptConfig {
    AdaptConfig {
        seed: rng::derive(cfg.adapt.seed, year as u64),
        ..cfg.adapt
    }
}

/// Meta-train on the rich years, if the data allow it.
fn train_meta(cfg: &RunConfig, tasks: &[YearTask]) -> Result<(MetaState, PoolManifest)> {
    let mut pool_cfg = cfg.pool;
    pool_cfg.rich_threshold = cfg.thresholds.rich_threshold;
    let pool = build_meta_pool(tasks, &pool_cfg, rng::derive(cfg.seed, POOL_STREAM))?;
    log::info!(
        "meta-training on {} subtasks ({} held out), {} iterations",
        pool.train.len(),
        pool.test.len(),
        cfg.meta.iterations
    );
    let t = Instant::now();
    let state = meta_train(&pool, &cfg.meta)?;
    log::info!("meta-training took {:.2?}; inner rate {:.5}", t.elapsed(), state.inner_lr());
    Ok((state, PoolManifest::from(&pool)))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<RoutingEntry>> {
    let samples = load_samples(cfg)?;
    let tasks = year_tasks(cfg, &samples);
    let dir = models_dir(cfg);
    ensure_dir(&dir)?;

    let routes: Vec<Option<Route>> = tasks
        .iter()
        .map(|t| route_model(t, cfg.thresholds.rich_threshold))
        .collect();
    let needs_meta = routes.contains(&Some(Route::FewShot));
    let has_forest = routes.contains(&Some(Route::Forest));
    let meta = if needs_meta {
        match train_meta(cfg, &tasks) {
            Ok(m) => Some(m),
            Err(e @ Error::Data(_)) if has_forest => {
                log::warn!("few-shot years left without models: {e}");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let mut outputs = Vec::new();
    if let Some((state, pool)) = &meta {
        let p = dir.join("meta_state.json");
        write_json(&p, state)?;
        outputs.push(p);
        let p = dir.join("pool.json");
        write_json(&p, pool)?;
        outputs.push(p);
    }

    let built: Vec<Result<Option<YearModel>>> = tasks
        .par_iter()
        .zip(&routes)
        .map(|(task, route)| match route {
            Some(Route::Forest) => Ok(Some(YearModel::Forest(train_forest(
                &task.samples,
                &year_forest_config(cfg, task.year),
            )?))),
            Some(Route::FewShot) => {
                let Some((state, _)) = &meta else { return Ok(None) };
                match adapt(state, task.year, &task.samples, &year_adapt_config(cfg, task.year)) {
                    Ok(m) => Ok(Some(YearModel::FewShot(m))),
                    Err(Error::Data(msg)) => {
                        log::warn!("{msg}");
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            }
            None => Ok(None),
        })
        .collect();

    let mut routing = Vec::new();
    for ((task, route), model) in tasks.iter().zip(&routes).zip(built) {
        let model = model?;
        let file = match &model {
            Some(m) => {
                let name = model_file(task.year);
                let p = dir.join(&name);
                write_json(&p, m)?;
                outputs.push(p);
                Some(name)
            }
            None => None,
        };
        routing.push(RoutingEntry {
            year: task.year,
            positives: task.positives(),
            negatives: task.negatives(),
            route: file.as_ref().and(*route),
            model: file,
        });
    }
    if routing.iter().all(|r| r.model.is_none()) {
        return Err(Error::Data("no year could be trained".into()));
    }
    for r in &routing {
        log::info!("{}: {} positives -> {:?}", r.year, r.positives, r.route);
    }
    let routing_path = dir.join("routing.json");
    write_json(&routing_path, &routing)?;
    outputs.push(routing_path);
    write_manifest(
        cfg,
        &dir,
        "train",
        &[cfg.samples_path()],
        &outputs,
        serde_json::json!({ "routing": routing }),
    )?;
    Ok(routing)
}

fn load_routing(cfg: &RunConfig) -> Result<Vec<RoutingEntry>> {
    let p = models_dir(cfg).join("routing.json");
    require_exists("model routing (run `train` first)", &p)?;
    read_json(&p)
}

fn load_model(cfg: &RunConfig, entry: &RoutingEntry) -> Result<Option<YearModel>> {
    match &entry.model {
        Some(name) => {
            let p = models_dir(cfg).join(name);
            require_exists("model file", &p)?;
            Ok(Some(read_json(&p)?))
        }
        None => Ok(None),
    }
}

fn selected_years(cfg: &RunConfig, routing: &[RoutingEntry], year: Option<i32>) -> Result<Vec<i32>> {
    match year {
        Some(y) => {
            if !routing.iter().any(|r| r.year == y && r.model.is_some()) {
                return Err(Error::Config(format!("no trained model for year {y}")));
            }
            Ok(vec![y])
        }
        None => Ok(routing
            .iter()
            .filter(|r| r.model.is_some() && (cfg.span.0..=cfg.span.1).contains(&r.year))
            .map(|r| r.year)
            .collect()),
    }
}

// ------------------------------------------------------------------ map

fn maps_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("maps")
}

pub fn probability_map_path(cfg: &RunConfig, year: i32) -> PathBuf {
    maps_dir(cfg).join(format!("lsm_{year}_probability.asc"))
}

pub fn level_map_path(cfg: &RunConfig, year: i32) -> PathBuf {
    maps_dir(cfg).join(format!("lsm_{year}_level.asc"))
}

pub fn cmd_map(cfg: &RunConfig, year: Option<i32>) -> Result<Vec<(i32, SusceptibilityRaster)>> {
    let summary_path = featurize_dir(cfg).join("summary.json");
    require_exists("featurize summary (run `featurize` first)", &summary_path)?;
    let summary: FeaturizeSummary = read_json(&summary_path)?;
    let routing = load_routing(cfg)?;
    let years = selected_years(cfg, &routing, year)?;
    let stack = cfg.stack_paths().load()?;
    let featurizer = Featurizer::with_tables(stack, summary.lithology_table.clone(), summary.landuse_table.clone())?;
    let g = featurizer.stack.geometry();

    let t = Instant::now();
    let statics: Vec<Option<lsm_core::RawFeatures>> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let loc = g.center_of(i);
            let f = featurizer.static_features(loc);
            let valid = f.get(Feature::Elevation).is_some() && f.get(Feature::Slope).is_some();
            valid.then_some(f)
        })
        .collect();
    log::info!("static factors for {} cells in {:.2?}", g.len(), t.elapsed());

    let dir = maps_dir(cfg);
    ensure_dir(&dir)?;
    let mut out = Vec::new();
    let mut outputs = Vec::new();
    let mut details = BTreeMap::new();
    for y in years {
        let entry = routing.iter().find(|r| r.year == y).expect("selected from routing");
        let model = load_model(cfg, entry)?.expect("selected years have models");
        let t = Instant::now();
        let probs: Vec<Option<f64>> = statics
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                f.map(|mut f| {
                    featurizer.set_rainfall(&mut f, g.center_of(i), y);
                    let x = fill_missing(&[f], &summary.imputation_means)[0];
                    model.predict_proba(&x.model_input())
                })
            })
            .collect();
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Divergence(format!("year {y}: probability outside [0, 1]")));
        }
        let raster = SusceptibilityRaster::from_probabilities(g, probs, &cfg.breaks)?;
        let valid = raster.probability.iter().flatten().count();
        log::info!("{y}: mapped {valid} valid cells in {:.2?}", t.elapsed());
        let (pp, lp) = (probability_map_path(cfg, y), level_map_path(cfg, y));
        raster.probability_raster().write_ascii(&pp)?;
        raster.level_raster().write_ascii(&lp)?;
        outputs.extend([pp, lp]);
        details.insert(y, serde_json::json!({ "valid_cells": valid, "model": entry.model }));
        out.push((y, raster));
    }
    let mut inputs = stack_inputs(cfg);
    inputs.push(summary_path);
    write_manifest(cfg, &dir, "map", &inputs, &outputs, serde_json::json!(details))?;
    Ok(out)
}

// -------------------------------------------------------------- explain

fn explain_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("explain")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutput {
    pub years: Vec<YearRanking>,
    /// Aggregated over the forest-routed years (all modelled years when
    /// there is none).
    pub overall: Option<Ranking>,
}

/// Up to `k` samples spread evenly over the id order.
fn evenly(samples: &[LabeledSample], k: usize) -> Vec<LabeledSample> {
    let mut s = samples.to_vec();
    s.sort_by_key(|x| x.id);
    if s.len() <= k {
        return s;
    }
    (0..k).map(|i| s[i * s.len() / k]).collect()
}

fn rows(samples: &[LabeledSample]) -> Vec<Vec<f64>> {
    samples.iter().map(|s| s.features.model_input().to_vec()).collect()
}

pub fn cmd_explain(cfg: &RunConfig, year: Option<i32>) -> Result<ExplainOutput> {
    let samples = load_samples(cfg)?;
    let routing = load_routing(cfg)?;
    let chosen = selected_years(cfg, &routing, year)?;
    let ec = &cfg.explain;

    let mut models: BTreeMap<i32, YearModel> = BTreeMap::new();
    for r in &routing {
        if chosen.contains(&r.year) {
            if let Some(m) = load_model(cfg, r)? {
                models.insert(r.year, m);
            }
        }
    }
    let listed: Vec<i32> = match year {
        Some(y) => vec![y],
        None => cfg.years().collect(),
    };
    let inputs: Vec<YearInput<'_>> = listed
        .iter()
        .map(|&y| {
            let ys: Vec<LabeledSample> = samples.iter().filter(|s| s.year == y).copied().collect();
            let (pos, _) = class_counts(&ys);
            let mut rng = rng::stream(cfg.seed, EXPLAIN_STREAM.wrapping_add((y as u64) << 8));
            let mut bg = ys.clone();
            bg.sort_by_key(|s| s.id);
            bg.shuffle(&mut rng);
            bg.truncate(ec.background);
            bg.sort_by_key(|s| s.id);
            YearInput {
                year: y,
                n_positives: pos,
                model: models.get(&y).map(|m| m as &dyn Predictor),
                instances: rows(&evenly(&ys, ec.max_instances)),
                background: rows(&bg),
            }
        })
        .collect();

    let t = Instant::now();
    let ranked = yearly_rankings(&inputs, ec.mode, rng::derive(cfg.seed, EXPLAIN_STREAM))?;
    log::info!("attributions for {} years in {:.2?}", ranked.len(), t.elapsed());

    let dir = explain_dir(cfg);
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    for yr in &ranked {
        let Some(r) = &yr.ranking else { continue };
        let ys: Vec<LabeledSample> = samples.iter().filter(|s| s.year == yr.year).copied().collect();
        let ids: Vec<usize> = evenly(&ys, ec.max_instances).iter().map(|s| s.id).collect();
        let rp = dir.join(format!("ranking_{}.csv", yr.year));
        write_text(&rp, &ranking_csv(r))?;
        let ap = dir.join(format!("attribution_{}.csv", yr.year));
        write_text(&ap, &attribution_csv(&ids, &yr.attributions))?;
        outputs.extend([rp, ap]);
    }
    let tp = dir.join("trajectory.csv");
    write_text(&tp, &trajectory_csv(&ranked, ec.top_k))?;
    outputs.push(tp);

    let forest_years: Vec<i32> = routing
        .iter()
        .filter(|r| r.route == Some(Route::Forest))
        .map(|r| r.year)
        .collect();
    let pick = |only_forest: bool| -> Vec<lsm_core::shapley::Attribution> {
        ranked
            .iter()
            .filter(|r| !only_forest || forest_years.contains(&r.year))
            .flat_map(|r| r.attributions.iter().cloned())
            .collect()
    };
    let mut pooled = pick(true);
    if pooled.is_empty() {
        pooled = pick(false);
    }
    let overall = if pooled.is_empty() {
        None
    } else {
        Some(Ranking::from_attributions(None, &pooled)?)
    };
    if let Some(r) = &overall {
        let p = dir.join("overall_ranking.csv");
        write_text(&p, &ranking_csv(r))?;
        outputs.push(p);
        let names: Vec<&str> = r.order.iter().take(3).map(|&i| Feature::ALL[i].column()).collect();
        log::info!("most influential factors: {}", names.join(", "));
    }
    let jp = dir.join("rankings.json");
    write_json(&jp, &ranked)?;
    outputs.push(jp);
    write_manifest(
        cfg,
        &dir,
        "explain",
        &[cfg.samples_path()],
        &outputs,
        serde_json::json!({ "mode": ec.mode, "forest_years": forest_years }),
    )?;
    Ok(ExplainOutput { years: ranked, overall })
}

// -------------------------------------------------------------- enhance

fn enhance_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("enhance")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceOutput {
    pub year: i32,
    pub points: usize,
    pub screened: usize,
    pub initial: [f64; 5],
    pub enhanced: [f64; 5],
}

pub fn cmd_enhance(cfg: &RunConfig, year: Option<i32>) -> Result<EnhanceOutput> {
    let year = match year {
        Some(y) => y,
        None => (cfg.span.0..=cfg.span.1)
            .rev()
            .find(|&y| level_map_path(cfg, y).exists())
            .ok_or_else(|| Error::Config("no susceptibility map found (run `map` first)".into()))?,
    };
    let (pp, lp) = (probability_map_path(cfg, year), level_map_path(cfg, year));
    require_exists("probability map", &pp)?;
    require_exists("level map", &lp)?;
    let dp = cfg.deformation_path();
    require_exists("deformation points", &dp)?;

    let initial = SusceptibilityRaster::from_rasters(&Raster::read_ascii(&pp)?, &Raster::read_ascii(&lp)?)?;
    let points = read_deformation(&dp)?;
    let screened = screen_points(&points, cfg.thresholds.slope_min);
    log::info!("{} of {} deformation points kept after screening", screened.len(), points.len());
    let levels = level_points(&screened)?;
    let deform = rasterize_levels(&levels, &initial.geometry, cfg.thresholds.deformation_cutoff);
    let enhanced = fuse(&initial, &deform)?;
    let (a, b) = (level_proportions(&initial)?, level_proportions(&enhanced)?);
    log::info!(
        "high + very high: {:.1}% -> {:.1}%",
        100.0 * (a[3] + a[4]),
        100.0 * (b[3] + b[4])
    );

    let dir = enhance_dir(cfg);
    ensure_dir(&dir)?;
    let dl = dir.join("deformation_level.asc");
    deform.to_raster().write_ascii(&dl)?;
    let el = dir.join(format!("lsm_{year}_enhanced_level.asc"));
    enhanced.level_raster().write_ascii(&el)?;
    let pc = dir.join(format!("proportions_{year}.csv"));
    let mut csv = String::from("level,initial,enhanced\n");
    for l in 0..5 {
        csv.push_str(&format!("{l},{},{}\n", a[l], b[l]));
    }
    write_text(&pc, &csv)?;
    let out = EnhanceOutput {
        year,
        points: points.len(),
        screened: screened.len(),
        initial: a,
        enhanced: b,
    };
    write_manifest(
        cfg,
        &dir,
        "enhance",
        &[pp, lp, dp],
        &[dl, el, pc],
        serde_json::to_value(&out)?,
    )?;
    Ok(out)
}

// ----------------------------------------------------------------- eval

fn eval_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("eval")
}

fn forest_factory(cfg: &RunConfig) -> impl Fn(&[LabeledSample], u64) -> Result<Box<dyn Predictor>> + Sync + '_ {
    move |train, seed| {
        let fc = ForestConfig { seed, ..cfg.forest };
        Ok(Box::new(train_forest(train, &fc)?) as Box<dyn Predictor>)
    }
}

/// Plain supervised MLP from a random initialisation.
fn mlp_factory(cfg: &RunConfig) -> impl Fn(&[LabeledSample], u64) -> Result<Box<dyn Predictor>> + Sync + '_ {
    move |train, seed| {
        let mc = MetaConfig {
            inner_lr: cfg.eval.mlp_lr,
            seed,
            ..cfg.meta.clone()
        };
        let state = MetaState::fresh(&mc, Standardizer::fit_samples(train)?)?;
        let ac = AdaptConfig {
            steps: cfg.eval.mlp_epochs,
            batch_size: cfg.adapt.batch_size,
            seed,
        };
        Ok(Box::new(adapt(&state, 0, train, &ac)?) as Box<dyn Predictor>)
    }
}

fn summary_cells(s: &Option<Summary>) -> String {
    match s {
        Some(s) => format!("{},{}", s.mean, s.std),
        None => ",".to_string(),
    }
}

/// Table of mean and std per metric, one row per evaluated model.
pub fn metrics_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "regime,model,runs,accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,auroc_mean,auroc_std\n",
    );
    for (regime, models) in [("overall", &report.overall), ("periodic", &report.periodic)] {
        for m in models {
            out.push_str(&format!(
                "{regime},{},{},{},{},{},{},{}\n",
                m.name,
                m.runs.len(),
                summary_cells(&m.accuracy),
                summary_cells(&m.precision),
                summary_cells(&m.recall),
                summary_cells(&m.f1),
                summary_cells(&m.auroc),
            ));
        }
    }
    out
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let samples = load_samples(cfg)?;
    let (pos, neg) = class_counts(&samples);
    if pos < 2 || neg < 2 {
        return Err(Error::Data(format!("evaluation needs both classes ({pos} positive, {neg} negative)")));
    }
    let ec = &cfg.eval;
    let seed = rng::derive(cfg.seed, EVAL_STREAM);
    let t = Instant::now();

    let forest = forest_factory(cfg);
    let mlp = mlp_factory(cfg);
    let overall = vec![
        shuffled_eval("forest", &forest, &samples, ec.repeats, ec.train_fraction, seed)?,
        shuffled_eval("mlp", &mlp, &samples, ec.repeats, ec.train_fraction, seed)?,
    ];

    let tasks = year_tasks(cfg, &samples);
    let state_path = models_dir(cfg).join("meta_state.json");
    let needs_meta = tasks
        .iter()
        .any(|t| route_model(t, cfg.thresholds.rich_threshold) == Some(Route::FewShot));
    let state: Option<MetaState> = if !needs_meta {
        None
    } else if state_path.exists() {
        Some(read_json(&state_path)?)
    } else {
        match train_meta(cfg, &tasks) {
            Ok((s, _)) => Some(s),
            Err(Error::Data(msg)) => {
                log::warn!("few-shot evaluation skipped: {msg}");
                None
            }
            Err(e) => return Err(e),
        }
    };

    let mut periodic: Vec<ModelEval> = Vec::new();
    for task in &tasks {
        let year_samples: Vec<LabeledSample> = samples.iter().filter(|s| s.year == task.year).copied().collect();
        let (p, n) = class_counts(&year_samples);
        if p < 2 || n < 2 {
            continue;
        }
        let result = match route_model(task, cfg.thresholds.rich_threshold) {
            Some(Route::Forest) => {
                shuffled_eval(&format!("forest_{}", task.year), &forest, &year_samples, ec.repeats, ec.train_fraction, seed)
            }
            Some(Route::FewShot) => {
                let Some(state) = &state else { continue };
                let year = task.year;
                let factory = move |train: &[LabeledSample], s: u64| -> Result<Box<dyn Predictor>> {
                    let ac = AdaptConfig { seed: s, ..cfg.adapt };
                    Ok(Box::new(adapt(state, year, train, &ac)?))
                };
                let f: &ModelFactory<'_> = &factory;
                shuffled_eval(&format!("few_shot_{}", task.year), f, &year_samples, ec.repeats, ec.train_fraction, seed)
            }
            None => continue,
        };
        match result {
            Ok(m) => periodic.push(m),
            Err(Error::Data(msg)) => log::warn!("year {}: skipped ({msg})", task.year),
            Err(e) => return Err(e),
        }
    }

    let adaptation = match &state {
        Some(state) => {
            let scarce: Vec<YearTask> = tasks
                .iter()
                .filter(|t| route_model(t, cfg.thresholds.rich_threshold) == Some(Route::FewShot))
                .cloned()
                .collect();
            let study = lsm_core::eval::AdaptationStudyConfig {
                seed: rng::derive(seed, 77),
                ..ec.adaptation
            };
            adaptation_study(state, &scarce, &ec.adaptation_updates, &study)?
        }
        None => Vec::new(),
    };
    log::info!("evaluation finished in {:.2?}", t.elapsed());

    let report = EvalReport {
        repeats: ec.repeats,
        train_fraction: ec.train_fraction,
        overall,
        periodic,
        adaptation,
    };
    let dir = eval_dir(cfg);
    ensure_dir(&dir)?;
    let paths = [
        dir.join("report.json"),
        dir.join("metrics.csv"),
        dir.join("roc.csv"),
        dir.join("adaptation.csv"),
    ];
    write_json(&paths[0], &report)?;
    write_text(&paths[1], &metrics_csv(&report))?;
    let all: Vec<ModelEval> = report.overall.iter().chain(&report.periodic).cloned().collect();
    write_text(&paths[2], &roc_csv(&all))?;
    write_text(&paths[3], &adaptation_csv(&report.adaptation))?;
    let mut inputs = vec![cfg.samples_path()];
    if state_path.exists() {
        inputs.push(state_path);
    }
    write_manifest(
        cfg,
        &dir,
        "eval",
        &inputs,
        &paths,
        serde_json::json!({ "samples": samples.len(), "feature_count": FEATURE_COUNT }),
    )?;
    Ok(report)
}
