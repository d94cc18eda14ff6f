//! Deterministic synthetic study areas.
//!
//! Topography comes from a seeded sum of smooth waves; slope and aspect are
//! central differences of that elevation so the layers are mutually
//! consistent. Landslides follow a planted logistic rule dominated by slope
//! and extreme-rainfall days with year-varying coefficients, and
//! deformation velocities fall with the planted susceptibility.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::enhance::DeformationPoint;
use crate::error::{Error, Result};
use crate::features::{Feature, Label, LabeledSample, FEATURE_COUNT, NDVI_SCALE};
use crate::featurize::{
    fill_missing, idw_at, Featurizer, LineLayer, PolygonLayer, StackPaths, StationRecord, ThematicStack,
    DEFAULT_IDW_POWER,
};
use crate::io::{
    write_deformation, write_inventory, write_json, write_ndjson, write_samples, write_stations, InventoryRecord,
    VectorFeature,
};
use crate::raster::{GridGeometry, Raster};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
    pub xll: f64,
    pub yll: f64,
    pub first_year: i32,
    /// Landslides per year, starting at `first_year`.
    pub landslides_per_year: Vec<usize>,
    pub extreme_years: Vec<i32>,
    pub n_stations: usize,
    /// Logit contribution per 10° of slope.
    pub slope_coef: f64,
    /// Logit contribution per within-year standard deviation of extreme-rainfall days.
    pub aerd_coef: f64,
    /// Logit contribution of the remaining factors (NDVI, drainage distance).
    pub minor_coef: f64,
    /// Relative spread of the per-year coefficients.
    pub year_variation: f64,
    pub n_deformation_points: usize,
    /// Velocity (mm/year) per unit planted probability; applied negatively.
    pub velocity_scale: f64,
    pub velocity_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            ncols: 200,
            nrows: 200,
            cellsize: 10.0,
            xll: 800_000.0,
            yll: 810_000.0,
            first_year: 2012,
            landslides_per_year: vec![120, 70, 30, 8, 150, 90, 20, 5],
            extreme_years: vec![2016, 2017],
            n_stations: 6,
            slope_coef: 4.0,
            aerd_coef: 3.0,
            minor_coef: 0.3,
            year_variation: 0.25,
            n_deformation_points: 3000,
            velocity_scale: 14.0,
            velocity_noise: 1.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.landslides_per_year.len()).map(|k| self.first_year + k as i32)
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.landslides_per_year.len() as i32 - 1
    }

    pub fn validate(&self) -> Result<()> {
        GridGeometry::new(self.ncols, self.nrows, self.xll, self.yll, self.cellsize)?;
        if self.ncols < 3 || self.nrows < 3 {
            return Err(Error::InvalidInput("synthetic grid must be at least 3x3".into()));
        }
        if self.landslides_per_year.is_empty() || self.n_stations == 0 {
            return Err(Error::InvalidInput("need at least one year and one station".into()));
        }
        let cells = self.ncols * self.nrows;
        if self.landslides_per_year.iter().any(|&n| 4 * n > cells) {
            return Err(Error::InvalidInput("too many landslides for the grid size".into()));
        }
        Ok(())
    }
}

/// Per-year planted rule: logit = slope_w·(slope−25)/10 + aerd_w·z(aerd)
/// + minor_w·(ndvi − 0.4)·(−2) + minor_w·(300 − d_drain)/300 + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub year: i32,
    pub slope_w: f64,
    pub aerd_w: f64,
    pub minor_w: f64,
    pub intercept: f64,
    pub aerd_mean: f64,
    pub aerd_std: f64,
}

impl PlantedRule {
    pub fn logit(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        let slope = x[Feature::Slope.index()];
        let aerd = x[Feature::ExtremeRainfallDays.index()];
        let ndvi = x[Feature::Ndvi.index()] / NDVI_SCALE;
        let drain = x[Feature::DistDrainage.index()];
        self.slope_w * (slope - 25.0) / 10.0
            + self.aerd_w * (aerd - self.aerd_mean) / self.aerd_std
            + self.minor_w * (0.4 - ndvi) * 2.0
            + self.minor_w * (300.0 - drain.min(600.0)) / 300.0
            + self.intercept
    }

    pub fn probability(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        1.0 / (1.0 + (-self.logit(x)).exp())
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub stack: ThematicStack,
    /// Vector layers as written to disk.
    pub faults: Vec<VectorFeature>,
    pub drainage: Vec<VectorFeature>,
    pub roads: Vec<VectorFeature>,
    pub lithology: Vec<VectorFeature>,
    pub landuse: Vec<VectorFeature>,
    pub catchments: Vec<VectorFeature>,
    pub inventory: Vec<InventoryRecord>,
    /// Positives and rule-labelled negatives, featurized directly.
    pub samples: Vec<LabeledSample>,
    pub deformation: Vec<DeformationPoint>,
    pub rules: BTreeMap<i32, PlantedRule>,
}

struct Wave {
    amp: f64,
    kx: f64,
    ky: f64,
    phase: f64,
}

fn waves(rng: &mut rng::Rng, n: usize, amp: f64, min_wl: f64, max_wl: f64) -> Vec<Wave> {
    (0..n)
        .map(|_| {
            let wl = rng.gen_range(min_wl..max_wl);
            let dir = rng.gen_range(0.0..2.0 * PI);
            let k = 2.0 * PI / wl;
            Wave {
                amp: amp * rng.gen_range(0.5..1.0),
                kx: k * dir.cos(),
                ky: k * dir.sin(),
                phase: rng.gen_range(0.0..2.0 * PI),
            }
        })
        .collect()
}

fn eval_waves(w: &[Wave], x: f64, y: f64) -> f64 {
    w.iter().map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).sin()).sum()
}

fn smooth_raster(g: &GridGeometry, w: &[Wave], offset: f64, lo: f64, hi: f64) -> Raster {
    Raster::from_fn(*g, |r, c| {
        let (x, y) = g.center(r, c);
        (offset + eval_waves(w, x - g.xll, y - g.yll)).clamp(lo, hi)
    })
}

/// Central-difference (slope°, aspect°) of an elevation raster. Aspect is the
/// compass azimuth of the downslope direction; one-sided differences at edges.
pub fn slope_aspect(elev: &Raster) -> (Raster, Raster) {
    let g = elev.geometry;
    let z = |r: usize, c: usize| elev.data[g.index(r, c)];
    let mut slope = Raster::filled(g, 0.0);
    let mut aspect = Raster::filled(g, 0.0);
    for r in 0..g.nrows {
        for c in 0..g.ncols {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(g.ncols - 1));
            let (rn, rs) = (r.saturating_sub(1), (r + 1).min(g.nrows - 1));
            let dzdx = (z(r, cr) - z(r, cl)) / ((cr - cl) as f64 * g.cellsize);
            // Row index grows southwards.
            let dzdy = (z(rn, c) - z(rs, c)) / ((rs - rn) as f64 * g.cellsize);
            let i = g.index(r, c);
            slope.data[i] = dzdx.hypot(dzdy).atan().to_degrees();
            aspect.data[i] = if dzdx == 0.0 && dzdy == 0.0 {
                0.0
            } else {
                (-dzdx).atan2(-dzdy).to_degrees().rem_euclid(360.0)
            };
        }
    }
    (slope, aspect)
}

fn laplacian(elev: &Raster) -> Raster {
    let g = elev.geometry;
    let z = |r: usize, c: usize| elev.data[g.index(r, c)];
    Raster::from_fn(g, |r, c| {
        let (cl, cr) = (c.saturating_sub(1), (c + 1).min(g.ncols - 1));
        let (rn, rs) = (r.saturating_sub(1), (r + 1).min(g.nrows - 1));
        let lap = (z(r, cl) + z(r, cr) + z(rn, c) + z(rs, c) - 4.0 * z(r, c)) / (g.cellsize * g.cellsize);
        // Scaled to the usual GIS convention (1/100 m).
        -100.0 * lap
    })
}

fn random_polyline(rng: &mut rng::Rng, g: &GridGeometry, id: u64, vertices: usize) -> VectorFeature {
    let (w, h) = (g.xright() - g.xll, g.ytop() - g.yll);
    let horizontal = rng.gen_bool(0.5);
    let base = rng.gen_range(0.1..0.9);
    let drift = rng.gen_range(-0.3..0.3);
    let coords = (0..vertices)
        .map(|k| {
            let t = k as f64 / (vertices - 1) as f64;
            let across = (base + drift * t + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0);
            if horizontal {
                [g.xll + t * w, g.yll + across * h]
            } else {
                [g.xll + across * w, g.yll + t * h]
            }
        })
        .collect();
    VectorFeature {
        id,
        category: String::new(),
        coords,
    }
}

fn tiles(rng: &mut rng::Rng, g: &GridGeometry, nx: usize, ny: usize, cats: &[&str]) -> Vec<VectorFeature> {
    let (w, h) = ((g.xright() - g.xll) / nx as f64, (g.ytop() - g.yll) / ny as f64);
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (x0, y0) = (g.xll + i as f64 * w, g.yll + j as f64 * h);
            let category = if cats.is_empty() {
                format!("c{}", out.len())
            } else {
                cats[rng.gen_range(0..cats.len())].to_string()
            };
            out.push(VectorFeature {
                id: out.len() as u64,
                category,
                coords: vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]],
            });
        }
    }
    out
}

pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let g = GridGeometry::new(config.ncols, config.nrows, config.xll, config.yll, config.cellsize)?;
    let mut rng = rng::stream(config.seed, 1);
    let extent = (g.xright() - g.xll).max(g.ytop() - g.yll);

    // Relief scales with extent so slope statistics do not depend on grid size.
    let relief = extent / 2000.0;
    let mut elev_waves = waves(&mut rng, 4, 60.0 * relief, 0.4 * extent, 1.2 * extent);
    elev_waves.extend(waves(&mut rng, 6, 25.0 * relief, 0.1 * extent, 0.4 * extent));
    let elevation = Raster::from_fn(g, |r, c| {
        let (x, y) = g.center(r, c);
        300.0 + eval_waves(&elev_waves, x - g.xll, y - g.yll)
    });
    let (slope, aspect) = slope_aspect(&elevation);
    let curvature = laplacian(&elevation);
    let ndvi_w = waves(&mut rng, 5, 0.25, 0.2 * extent, 0.8 * extent);
    let ndvi = {
        let mut r = smooth_raster(&g, &ndvi_w, 0.45, -0.2, 0.95);
        r.data.iter_mut().for_each(|v| *v = (*v * NDVI_SCALE).round());
        r
    };
    let spi_w = waves(&mut rng, 5, 0.8, 0.1 * extent, 0.5 * extent);
    let spi = smooth_raster(&g, &spi_w, 1.5, 0.0, 5.0);
    let twi_w = waves(&mut rng, 5, 2.0, 0.1 * extent, 0.5 * extent);
    let twi = smooth_raster(&g, &twi_w, 7.0, 1.0, 15.0);

    let faults: Vec<VectorFeature> = (0..3).map(|i| random_polyline(&mut rng, &g, i, 12)).collect();
    let drainage: Vec<VectorFeature> = (0..5).map(|i| random_polyline(&mut rng, &g, i, 20)).collect();
    let roads: Vec<VectorFeature> = (0..4).map(|i| random_polyline(&mut rng, &g, i, 10)).collect();
    let lithology = tiles(&mut rng, &g, 4, 3, &["granite", "volcanic", "sedimentary", "superficial"]);
    let landuse = tiles(&mut rng, &g, 3, 3, &["forest", "shrub", "urban", "grass"]);
    let catchments = tiles(&mut rng, &g, 5, 5, &[]);

    // Stations: fixed sites with persistent local factors, yearly regime.
    let sites: Vec<(f64, f64, f64, f64)> = (0..config.n_stations)
        .map(|_| {
            (
                rng.gen_range(g.xll..g.xright()),
                rng.gen_range(g.yll..g.ytop()),
                rng.gen_range(0.7..1.3),
                rng.gen_range(0.4..1.6),
            )
        })
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut stations = Vec::new();
    for year in config.years() {
        let extreme = config.extreme_years.contains(&year);
        let base_ar = 2400.0 * if extreme { 1.35 } else { 1.0 } + 150.0 * noise.sample(&mut rng);
        let base_aerd = 12.0 * if extreme { 1.7 } else { 1.0 } + 0.8 * noise.sample(&mut rng);
        for &(x, y, ar_local, aerd_local) in &sites {
            stations.push(StationRecord {
                year,
                easting: x,
                northing: y,
                ar: (base_ar * ar_local + 60.0 * noise.sample(&mut rng)).max(0.0),
                aerd: (base_aerd * aerd_local + 0.5 * noise.sample(&mut rng)).max(0.0).round(),
            });
        }
    }

    let stack = ThematicStack {
        elevation,
        slope,
        curvature,
        aspect,
        ndvi,
        spi,
        twi,
        faults: LineLayer::from_features(&faults),
        drainage: LineLayer::from_features(&drainage),
        roads: LineLayer::from_features(&roads),
        lithology: PolygonLayer::from_features(&lithology),
        landuse: PolygonLayer::from_features(&landuse),
        catchments: PolygonLayer::from_features(&catchments),
        stations,
    };

    // AERD enters the rule standardized over the grid within its year.
    let lattice: Vec<(f64, f64)> = (0..20)
        .flat_map(|i| (0..20).map(move |j| (i, j)))
        .map(|(i, j)| g.center(i * g.nrows / 20, j * g.ncols / 20))
        .collect();
    let rules: BTreeMap<i32, PlantedRule> = config
        .years()
        .map(|year| {
            let refs: Vec<&StationRecord> = stack.stations.iter().filter(|s| s.year == year).collect();
            let field: Vec<f64> = lattice
                .iter()
                .map(|&loc| idw_at(&refs, loc, DEFAULT_IDW_POWER).map_or(0.0, |v| v.1))
                .collect();
            let m = field.iter().sum::<f64>() / field.len() as f64;
            let sd = (field.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / field.len() as f64).sqrt();
            let mut v = || 1.0 + config.year_variation * rng.gen_range(-1.0..1.0);
            let rule = PlantedRule {
                year,
                slope_w: config.slope_coef * v(),
                aerd_w: config.aerd_coef * v(),
                minor_w: config.minor_coef * v(),
                intercept: 0.0,
                aerd_mean: m,
                aerd_std: if sd > 1e-9 { sd } else { 1.0 },
            };
            (year, rule)
        })
        .collect();

    // Frequency tables need landslide locations, which need features; the
    // planted rule does not use the ordinal scores, so a provisional
    // featurizer is enough for drawing samples.
    let provisional = Featurizer::new(stack.clone(), &[])?;
    let mut drawn: Vec<Drawn> = Vec::new();
    let mut used = std::collections::HashSet::new();
    let means = [0.0; FEATURE_COUNT];
    for (k, year) in config.years().enumerate() {
        let want = config.landslides_per_year[k];
        let rule = rules[&year];
        let (mut pos, mut neg) = (0, 0);
        let mut attempts = 0usize;
        while pos < want || neg < want {
            attempts += 1;
            if attempts > 1000 * (want + 10) {
                return Err(Error::Data(format!("could not place {want} landslides in {year}")));
            }
            let (r, c) = (rng.gen_range(0..g.nrows), rng.gen_range(0..g.ncols));
            if !used.insert((r, c)) {
                continue;
            }
            let (cx, cy) = g.center(r, c);
            let loc = (
                cx + rng.gen_range(-0.4..0.4) * g.cellsize,
                cy + rng.gen_range(-0.4..0.4) * g.cellsize,
            );
            let x = fill_missing(&[provisional.featurize(loc, year)], &means)[0].0;
            let p = rule.probability(&x);
            let slide = rng.gen_bool(p.clamp(0.0, 1.0));
            if slide && pos < want {
                pos += 1;
                drawn.push((year, loc, Label::Landslide, x));
            } else if !slide && neg < want {
                neg += 1;
                drawn.push((year, loc, Label::NonLandslide, x));
            } else {
                used.remove(&(r, c));
            }
        }
    }

    let inventory: Vec<InventoryRecord> = drawn
        .iter()
        .filter(|d| d.2.is_positive())
        .map(|d| InventoryRecord {
            year: d.0,
            easting: d.1 .0,
            northing: d.1 .1,
        })
        .collect();
    let slide_locs: Vec<(f64, f64)> = inventory.iter().map(|r| (r.easting, r.northing)).collect();
    let featurizer = Featurizer::new(stack.clone(), &slide_locs)?;
    let samples: Vec<LabeledSample> = drawn
        .iter()
        .enumerate()
        .map(|(id, d)| {
            let features = fill_missing(&[featurizer.featurize(d.1, d.0)], &means)[0];
            LabeledSample {
                id,
                year: d.0,
                easting: d.1 .0,
                northing: d.1 .1,
                label: d.2,
                features,
            }
        })
        .collect();

    // Deformation: velocity falls with the mean planted probability.
    let vnoise = Normal::new(0.0, config.velocity_noise.max(1e-12)).expect("positive std");
    let deformation = (0..config.n_deformation_points)
        .map(|_| {
            let loc = (rng.gen_range(g.xll..g.xright()), rng.gen_range(g.yll..g.ytop()));
            let f = featurizer.static_features(loc);
            let mut p = 0.0;
            for year in config.years() {
                let mut raw = f;
                featurizer.set_rainfall(&mut raw, loc, year);
                p += rules[&year].probability(&fill_missing(&[raw], &means)[0].0);
            }
            p /= config.landslides_per_year.len() as f64;
            DeformationPoint {
                easting: loc.0,
                northing: loc.1,
                velocity: -config.velocity_scale * p + vnoise.sample(&mut rng),
                aspect: f.get(Feature::Aspect).unwrap_or(0.0),
                slope: f.get(Feature::Slope).unwrap_or(0.0),
            }
        })
        .collect();

    Ok(SynthWorld {
        config: config.clone(),
        stack,
        faults,
        drainage,
        roads,
        lithology,
        landuse,
        catchments,
        inventory,
        samples,
        deformation,
        rules,
    })
}

/// Files written for a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldPaths {
    pub stack: StackPaths,
    pub inventory: PathBuf,
    pub deformation: PathBuf,
    /// Rule-labelled samples, useful as an external evaluation table.
    pub planted_samples: PathBuf,
    pub rules: PathBuf,
}

impl WorldPaths {
    pub fn under(dir: impl AsRef<Path>) -> WorldPaths {
        let d = dir.as_ref();
        WorldPaths {
            stack: StackPaths::under(d),
            inventory: d.join("inventory.csv"),
            deformation: d.join("deformation.csv"),
            planted_samples: d.join("planted_samples.csv"),
            rules: d.join("planted_rules.json"),
        }
    }
}

pub fn write_world(world: &SynthWorld, dir: impl AsRef<Path>) -> Result<WorldPaths> {
    let paths = WorldPaths::under(&dir);
    for sub in ["rasters", "vectors"] {
        let p = dir.as_ref().join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let s = &paths.stack;
    let st = &world.stack;
    for (raster, path) in [
        (&st.elevation, &s.elevation),
        (&st.slope, &s.slope),
        (&st.curvature, &s.curvature),
        (&st.aspect, &s.aspect),
        (&st.ndvi, &s.ndvi),
        (&st.spi, &s.spi),
        (&st.twi, &s.twi),
    ] {
        raster.write_ascii(path)?;
    }
    for (features, path) in [
        (&world.faults, &s.faults),
        (&world.drainage, &s.drainage),
        (&world.roads, &s.roads),
        (&world.lithology, &s.lithology),
        (&world.landuse, &s.landuse),
        (&world.catchments, &s.catchments),
    ] {
        write_ndjson(path, features)?;
    }
    write_stations(&s.stations, &st.stations)?;
    write_inventory(&paths.inventory, &world.inventory)?;
    write_deformation(&paths.deformation, &world.deformation)?;
    write_samples(&paths.planted_samples, &world.samples)?;
    let rules: Vec<&PlantedRule> = world.rules.values().collect();
    write_json(&paths.rules, &rules)?;
    Ok(paths)
}

/// A drawn sample before final featurization: year, location, label, raw factors.
type Drawn = (i32, (f64, f64), Label, [f64; FEATURE_COUNT]);

/// Mean AERD of a year's stations.
pub fn mean_aerd(stations: &[StationRecord], year: i32) -> f64 {
    let v: Vec<f64> = stations.iter().filter(|s| s.year == year).map(|s| s.aerd).collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// A family of yearly classification tasks: inputs uniform over the
/// feature box, labels from the sign of `w_y · x` where `w_y` is a shared
/// direction plus a per-year perturbation of size `drift`. Each year gets
/// exactly `per_class` samples of each class.
pub fn linear_task_family(seed: u64, years: &[(i32, usize)], drift: f64) -> Vec<LabeledSample> {
    let mut r = rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let ordinal = |i: usize| Feature::ALL[i].is_ordinal();
    let mut base: Vec<f64> = (0..FEATURE_COUNT)
        .map(|i| if ordinal(i) { 0.0 } else { normal.sample(&mut r) })
        .collect();
    let norm = base.iter().map(|w| w * w).sum::<f64>().sqrt();
    base.iter_mut().for_each(|w| *w /= norm);

    let mut out = Vec::new();
    for &(year, per_class) in years {
        let mut yr = rng::stream(seed, year as u64);
        let w: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, b)| if ordinal(i) { 0.0 } else { b + drift * normal.sample(&mut yr) / (FEATURE_COUNT as f64).sqrt() })
            .collect();
        let (mut pos, mut neg) = (0, 0);
        while pos < per_class || neg < per_class {
            let mut x = [0.0; FEATURE_COUNT];
            for (i, v) in x.iter_mut().enumerate() {
                *v = if ordinal(i) {
                    yr.gen_range(1..=3) as f64
                } else {
                    yr.gen_range(-1.0..1.0)
                };
            }
            let score: f64 = w.iter().zip(&x).map(|(w, x)| w * x).sum();
            let positive = score > 0.0;
            if positive && pos < per_class {
                pos += 1;
            } else if !positive && neg < per_class {
                neg += 1;
            } else {
                continue;
            }
            x[Feature::Ndvi.index()] *= NDVI_SCALE;
            let label = if positive { Label::Landslide } else { Label::NonLandslide };
            out.push(LabeledSample {
                id: out.len(),
                year,
                easting: 0.0,
                northing: 0.0,
                label,
                features: crate::features::FeatureVector(x),
            });
        }
    }
    out
}
