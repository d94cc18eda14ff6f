use std::collections::HashSet;

use lsm_core::features::Feature;
use lsm_core::featurize::{featurize_inventory, generate_negatives, Featurizer, NegativeSamplingConfig, StackPaths};
use lsm_core::io::{read_deformation, read_inventory, read_samples};
use lsm_core::synth::{generate, mean_aerd, slope_aspect, write_world, SynthConfig};

fn small() -> SynthConfig {
    SynthConfig {
        ncols: 60,
        nrows: 50,
        first_year: 2010,
        landslides_per_year: vec![60, 8, 70, 20],
        extreme_years: vec![2012],
        n_deformation_points: 400,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn per_year_counts_match_configuration() {
    let cfg = small();
    let w = generate(&cfg).unwrap();
    for (k, year) in cfg.years().enumerate() {
        let pos = w.samples.iter().filter(|s| s.year == year && s.label.is_positive()).count();
        let neg = w.samples.iter().filter(|s| s.year == year && !s.label.is_positive()).count();
        assert!(pos.abs_diff(cfg.landslides_per_year[k]) <= 2);
        assert_eq!(pos, neg);
        assert_eq!(w.inventory.iter().filter(|r| r.year == year).count(), pos);
    }
    assert_eq!(w.deformation.len(), 400);
}

#[test]
fn generation_is_deterministic() {
    let a = generate(&small()).unwrap();
    let b = generate(&small()).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.stack.elevation, b.stack.elevation);
    assert_eq!(a.deformation, b.deformation);
    let c = generate(&SynthConfig { seed: 12, ..small() }).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn aspect_points_downhill() {
    let w = generate(&small()).unwrap();
    let e = &w.stack.elevation;
    let g = e.geometry;
    let z = |r: usize, c: usize| e.data[g.index(r, c)];
    for r in 1..g.nrows - 1 {
        for c in 1..g.ncols - 1 {
            let dzdx = (z(r, c + 1) - z(r, c - 1)) / (2.0 * g.cellsize);
            let dzdy = (z(r - 1, c) - z(r + 1, c)) / (2.0 * g.cellsize);
            if dzdx.hypot(dzdy) < 1e-6 {
                continue;
            }
            let a = w.stack.aspect.data[g.index(r, c)].to_radians();
            // Unit step along the aspect azimuth (east = sin, north = cos) descends.
            let along = a.sin() * dzdx + a.cos() * dzdy;
            assert!((along + dzdx.hypot(dzdy)).abs() < 1e-9 * dzdx.hypot(dzdy).max(1.0));
        }
    }
    let (s2, a2) = slope_aspect(e);
    assert_eq!(s2, w.stack.slope);
    assert_eq!(a2, w.stack.aspect);
}

#[test]
fn extreme_years_are_wetter() {
    let cfg = SynthConfig {
        extreme_years: vec![2011, 2013],
        ..small()
    };
    let w = generate(&cfg).unwrap();
    let extreme = (mean_aerd(&w.stack.stations, 2011) + mean_aerd(&w.stack.stations, 2013)) / 2.0;
    let normal = (mean_aerd(&w.stack.stations, 2010) + mean_aerd(&w.stack.stations, 2012)) / 2.0;
    assert!(extreme > normal, "{extreme} vs {normal}");
}

#[test]
fn deformation_tracks_planted_susceptibility() {
    let w = generate(&small()).unwrap();
    let slope: Vec<f64> = w.deformation.iter().map(|p| p.slope).collect();
    let vel: Vec<f64> = w.deformation.iter().map(|p| p.velocity).collect();
    let n = slope.len() as f64;
    let (ms, mv) = (slope.iter().sum::<f64>() / n, vel.iter().sum::<f64>() / n);
    let cov: f64 = slope.iter().zip(&vel).map(|(s, v)| (s - ms) * (v - mv)).sum();
    assert!(cov < 0.0);
}

#[test]
fn degenerate_grid_is_rejected() {
    assert!(generate(&SynthConfig { ncols: 0, ..small() }).is_err());
    assert!(generate(&SynthConfig { cellsize: -1.0, ..small() }).is_err());
    assert!(generate(&SynthConfig { landslides_per_year: vec![], ..small() }).is_err());
}

#[test]
fn written_world_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let w = generate(&small()).unwrap();
    let paths = write_world(&w, dir.path()).unwrap();
    assert_eq!(paths.stack, StackPaths::under(dir.path()));
    let stack = paths.stack.load().unwrap();
    assert_eq!(stack.slope.geometry, w.stack.slope.geometry);
    assert_eq!(stack.stations.len(), w.stack.stations.len());
    assert_eq!(read_inventory(&paths.inventory).unwrap().len(), w.inventory.len());
    assert_eq!(read_deformation(&paths.deformation).unwrap().len(), w.deformation.len());
    assert_eq!(read_samples(&paths.planted_samples).unwrap().len(), w.samples.len());

    std::fs::remove_file(&paths.stack.roads).unwrap();
    let err = paths.stack.load().unwrap_err().to_string();
    assert!(err.contains("roads"), "{err}");
}

#[test]
fn negatives_are_disjoint_deterministic_and_mostly_flat() {
    let w = generate(&small()).unwrap();
    let locs: Vec<(f64, f64)> = w.inventory.iter().map(|r| (r.easting, r.northing)).collect();
    let fz = Featurizer::new(w.stack.clone(), &locs).unwrap();
    let positives: Vec<_> = w.samples.iter().filter(|s| s.label.is_positive()).copied().collect();
    let cfg = NegativeSamplingConfig::default();
    let a = generate_negatives(&positives, &fz, &cfg, 5).unwrap();
    let b = generate_negatives(&positives, &fz, &cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), positives.len());

    let g = w.stack.geometry();
    let occupied: HashSet<_> = positives.iter().map(|p| g.cell_at(p.easting, p.northing).unwrap()).collect();
    let chosen: HashSet<_> = a.iter().map(|n| g.cell_at(n.easting, n.northing).unwrap()).collect();
    assert_eq!(chosen.len(), a.len());
    assert!(chosen.is_disjoint(&occupied));

    let flat = a
        .iter()
        .filter(|n| n.features.get(Feature::Slope).unwrap() < cfg.low_slope_deg)
        .count();
    assert!(2 * flat >= a.len(), "{flat} of {}", a.len());

    let mut want: Vec<i32> = positives.iter().map(|p| p.year).collect();
    let mut got: Vec<i32> = a.iter().map(|n| n.year).collect();
    want.sort_unstable();
    got.sort_unstable();
    assert_eq!(want, got);
}

#[test]
fn featurized_inventory_is_balanced_and_complete() {
    let w = generate(&small()).unwrap();
    let locs: Vec<(f64, f64)> = w.inventory.iter().map(|r| (r.easting, r.northing)).collect();
    let fz = Featurizer::new(w.stack.clone(), &locs).unwrap();
    let (samples, summary) = featurize_inventory(&fz, &w.inventory, &Default::default(), 1).unwrap();
    assert_eq!(samples.len(), 2 * w.inventory.len());
    assert_eq!(summary.positives_per_year, summary.negatives_per_year);
    for s in &samples {
        s.features.validate().unwrap();
    }
    assert!(featurize_inventory(&fz, &[], &Default::default(), 1).is_err());
}

#[test]
fn linear_task_family_is_balanced_and_seeded() {
    let years = [(2001, 30), (2002, 4)];
    let a = lsm_core::synth::linear_task_family(3, &years, 0.3);
    assert_eq!(a, lsm_core::synth::linear_task_family(3, &years, 0.3));
    assert_ne!(a, lsm_core::synth::linear_task_family(4, &years, 0.3));
    for (y, n) in years {
        let ys: Vec<_> = a.iter().filter(|s| s.year == y).collect();
        assert_eq!(lsm_core::features::class_counts(ys.iter().copied()), (n, n));
        assert!(ys.iter().all(|s| s.features.validate().is_ok()));
    }
}
