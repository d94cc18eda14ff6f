//! From thematic layers and point records to feature vectors: raster
//! lookups, distance-to-line factors, polygon frequency scores, IDW
//! rainfall, mean imputation and non-landslide sample generation.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureVector, Label, LabeledSample, RawFeatures, FEATURE_COUNT};
use crate::io::{read_ndjson, read_stations, InventoryRecord, VectorFeature};
use crate::raster::{GridGeometry, Raster};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub year: i32,
    pub easting: f64,
    pub northing: f64,
    /// Annual rainfall, mm.
    pub ar: f64,
    /// Annual extreme-rainfall days.
    pub aerd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Segment {
    pub fn distance(&self, p: (f64, f64)) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        };
        let (fx, fy) = (self.a.0 + t * dx, self.a.1 + t * dy);
        (p.0 - fx).hypot(p.1 - fy)
    }
}

/// Polyline layer (faults, drainage, roads) flattened to segments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineLayer {
    pub segments: Vec<Segment>,
}

impl LineLayer {
    pub fn from_features(features: &[VectorFeature]) -> Self {
        let segments = features
            .iter()
            .flat_map(|f| {
                f.coords.windows(2).map(|w| Segment {
                    a: (w[0][0], w[0][1]),
                    b: (w[1][0], w[1][1]),
                })
            })
            .collect();
        LineLayer { segments }
    }
}

/// Minimum point-to-segment distance over a line layer.
pub fn dist_to_lines(layer: &LineLayer, location: (f64, f64)) -> Result<f64> {
    if layer.segments.is_empty() {
        return Err(Error::Config("line layer has no segments".into()));
    }
    Ok(layer
        .segments
        .iter()
        .map(|s| s.distance(location))
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub category: String,
    /// Outer ring; closing vertex optional.
    pub ring: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        let n = self.ring.len();
        if n < 3 {
            return false;
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = self.ring[i];
            let (xj, yj) = self.ring[j];
            if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    pub fn area(&self) -> f64 {
        let n = self.ring.len();
        let mut s = 0.0;
        for i in 0..n {
            let (x0, y0) = self.ring[i];
            let (x1, y1) = self.ring[(i + 1) % n];
            s += x0 * y1 - x1 * y0;
        }
        (s / 2.0).abs()
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.ring.len();
        (0..n).map(move |i| Segment {
            a: self.ring[i],
            b: self.ring[(i + 1) % n],
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolygonLayer {
    pub polygons: Vec<Polygon>,
}

impl PolygonLayer {
    pub fn from_features(features: &[VectorFeature]) -> Self {
        PolygonLayer {
            polygons: features
                .iter()
                .map(|f| Polygon {
                    category: f.category.clone(),
                    ring: f.coords.iter().map(|c| (c[0], c[1])).collect(),
                })
                .collect(),
        }
    }

    /// Category of the first polygon containing the location.
    pub fn category_at(&self, p: (f64, f64)) -> Option<&str> {
        self.polygons
            .iter()
            .find(|poly| poly.contains(p))
            .map(|poly| poly.category.as_str())
    }

    /// All polygon edges as a line layer (used for distance-to-boundary).
    pub fn boundaries(&self) -> LineLayer {
        LineLayer {
            segments: self.polygons.iter().flat_map(|p| p.edges()).collect(),
        }
    }
}

/// Landslide density per category and the derived 1..=3 scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    /// Landslides per unit area, per category.
    pub density: BTreeMap<String, f64>,
    pub score: BTreeMap<String, u8>,
}

impl FrequencyTable {
    /// Count landslides per category, normalise by category area, and assign
    /// terciles of the ascending (density, name) order.
    pub fn from_landslides(layer: &PolygonLayer, landslides: &[(f64, f64)]) -> Self {
        let mut area: BTreeMap<String, f64> = BTreeMap::new();
        for p in &layer.polygons {
            *area.entry(p.category.clone()).or_default() += p.area();
        }
        let mut counts: BTreeMap<String, f64> = area.keys().map(|k| (k.clone(), 0.0)).collect();
        for &loc in landslides {
            if let Some(cat) = layer.category_at(loc) {
                *counts.get_mut(cat).expect("category registered from layer") += 1.0;
            }
        }
        let density: BTreeMap<String, f64> = counts
            .into_iter()
            .map(|(k, c)| {
                let a = area[&k];
                (k, if a > 0.0 { c / a } else { 0.0 })
            })
            .collect();
        Self::from_density(density)
    }

    pub fn from_density(density: BTreeMap<String, f64>) -> Self {
        let mut order: Vec<(&String, f64)> = density.iter().map(|(k, v)| (k, *v)).collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        let k = order.len() as f64;
        let score = order
            .iter()
            .enumerate()
            .map(|(r, (name, _))| {
                let q = (r as f64 + 0.5) / k;
                let s = if q < 1.0 / 3.0 {
                    1
                } else if q < 2.0 / 3.0 {
                    2
                } else {
                    3
                };
                ((*name).clone(), s)
            })
            .collect();
        FrequencyTable { density, score }
    }
}

/// Tercile frequency score of the category containing `location`.
pub fn polygon_score(layer: &PolygonLayer, location: (f64, f64), table: &FrequencyTable) -> Option<u8> {
    layer
        .category_at(location)
        .and_then(|c| table.score.get(c).copied())
}

/// Value of the cell containing `location` in one raster layer.
pub fn sample_raster(raster: &Raster, location: (f64, f64)) -> Option<f64> {
    raster.sample(location.0, location.1)
}

pub const DEFAULT_IDW_POWER: f64 = 2.0;

/// Inverse-distance-weighted (ar, aerd) at a point. A point coincident with
/// a station takes that station's values.
pub fn idw_at(stations: &[&StationRecord], location: (f64, f64), power: f64) -> Option<(f64, f64)> {
    if stations.is_empty() {
        return None;
    }
    let (mut wsum, mut ar, mut aerd) = (0.0, 0.0, 0.0);
    for s in stations {
        let d = (s.easting - location.0).hypot(s.northing - location.1);
        if d < 1e-9 {
            return Some((s.ar, s.aerd));
        }
        let w = d.powf(-power);
        wsum += w;
        ar += w * s.ar;
        aerd += w * s.aerd;
    }
    Some((ar / wsum, aerd / wsum))
}

/// Interpolate one year's station records onto a grid: (ar, aerd) rasters.
pub fn idw_rainfall(stations: &[StationRecord], geometry: &GridGeometry, power: f64) -> Result<(Raster, Raster)> {
    if stations.is_empty() {
        return Err(Error::Config("IDW needs at least one station".into()));
    }
    let refs: Vec<&StationRecord> = stations.iter().collect();
    let values: Vec<(f64, f64)> = (0..geometry.len())
        .into_par_iter()
        .map(|i| idw_at(&refs, geometry.center_of(i), power).expect("nonempty stations"))
        .collect();
    let ar = Raster {
        geometry: *geometry,
        data: values.iter().map(|v| v.0).collect(),
    };
    let aerd = Raster {
        geometry: *geometry,
        data: values.iter().map(|v| v.1).collect(),
    };
    Ok((ar, aerd))
}

/// Replace each missing slot with the mean of the valid values in its
/// dimension. Returns the completed vectors and the per-dimension means.
pub fn impute(samples: &[RawFeatures]) -> Result<(Vec<FeatureVector>, [f64; FEATURE_COUNT])> {
    let mut means = [0.0; FEATURE_COUNT];
    for f in Feature::ALL {
        let (sum, n) = samples
            .iter()
            .filter_map(|s| s.get(f))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            return Err(Error::Data(format!("dimension {f} has no valid values to impute from")));
        }
        means[f.index()] = sum / n as f64;
    }
    Ok((fill_missing(samples, &means), means))
}

/// Fill missing slots with precomputed means.
pub fn fill_missing(samples: &[RawFeatures], means: &[f64; FEATURE_COUNT]) -> Vec<FeatureVector> {
    samples
        .iter()
        .map(|s| {
            let mut v = [0.0; FEATURE_COUNT];
            for i in 0..FEATURE_COUNT {
                v[i] = s.0[i].unwrap_or(means[i]);
            }
            FeatureVector(v)
        })
        .collect()
}

/// All inputs needed to featurize a location in a given year.
#[derive(Debug, Clone)]
pub struct ThematicStack {
    pub elevation: Raster,
    pub slope: Raster,
    pub curvature: Raster,
    pub aspect: Raster,
    pub ndvi: Raster,
    pub spi: Raster,
    pub twi: Raster,
    pub faults: LineLayer,
    pub drainage: LineLayer,
    pub roads: LineLayer,
    pub lithology: PolygonLayer,
    pub landuse: PolygonLayer,
    pub catchments: PolygonLayer,
    pub stations: Vec<StationRecord>,
}

impl ThematicStack {
    pub fn geometry(&self) -> GridGeometry {
        self.elevation.geometry
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry();
        for (name, r) in self.rasters() {
            if !r.geometry.same_as(&g) {
                return Err(Error::Config(format!("raster {name} does not share the elevation grid")));
            }
        }
        for (name, l) in [("faults", &self.faults), ("drainage", &self.drainage), ("roads", &self.roads)] {
            if l.segments.is_empty() {
                return Err(Error::Config(format!("line layer {name} is empty")));
            }
        }
        if self.catchments.polygons.is_empty() {
            return Err(Error::Config("catchment layer is empty".into()));
        }
        Ok(())
    }

    pub fn rasters(&self) -> [(&'static str, &Raster); 7] {
        [
            ("elevation", &self.elevation),
            ("slope", &self.slope),
            ("curvature", &self.curvature),
            ("aspect", &self.aspect),
            ("ndvi", &self.ndvi),
            ("spi", &self.spi),
            ("twi", &self.twi),
        ]
    }
}

/// Where each thematic layer lives on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackPaths {
    pub elevation: PathBuf,
    pub slope: PathBuf,
    pub curvature: PathBuf,
    pub aspect: PathBuf,
    pub ndvi: PathBuf,
    pub spi: PathBuf,
    pub twi: PathBuf,
    pub faults: PathBuf,
    pub drainage: PathBuf,
    pub roads: PathBuf,
    pub lithology: PathBuf,
    pub landuse: PathBuf,
    pub catchments: PathBuf,
    pub stations: PathBuf,
}

impl StackPaths {
    /// Conventional layout: `rasters/<name>.asc`, `vectors/<name>.ndjson`
    /// and `stations.csv` under `dir`.
    pub fn under(dir: impl AsRef<Path>) -> StackPaths {
        let d = dir.as_ref();
        let r = |n: &str| d.join("rasters").join(format!("{n}.asc"));
        let v = |n: &str| d.join("vectors").join(format!("{n}.ndjson"));
        StackPaths {
            elevation: r("elevation"),
            slope: r("slope"),
            curvature: r("curvature"),
            aspect: r("aspect"),
            ndvi: r("ndvi"),
            spi: r("spi"),
            twi: r("twi"),
            faults: v("faults"),
            drainage: v("drainage"),
            roads: v("roads"),
            lithology: v("lithology"),
            landuse: v("landuse"),
            catchments: v("catchments"),
            stations: d.join("stations.csv"),
        }
    }

    pub fn all(&self) -> [(&'static str, &Path); 14] {
        [
            ("elevation", &self.elevation),
            ("slope", &self.slope),
            ("curvature", &self.curvature),
            ("aspect", &self.aspect),
            ("ndvi", &self.ndvi),
            ("spi", &self.spi),
            ("twi", &self.twi),
            ("faults", &self.faults),
            ("drainage", &self.drainage),
            ("roads", &self.roads),
            ("lithology", &self.lithology),
            ("landuse", &self.landuse),
            ("catchments", &self.catchments),
            ("stations", &self.stations),
        ]
    }

    pub fn load(&self) -> Result<ThematicStack> {
        for (name, path) in self.all() {
            if !path.exists() {
                return Err(Error::Config(format!("missing layer {name}: {}", path.display())));
            }
        }
        let lines = |p: &Path| -> Result<LineLayer> { Ok(LineLayer::from_features(&read_ndjson(p)?)) };
        let polys = |p: &Path| -> Result<PolygonLayer> { Ok(PolygonLayer::from_features(&read_ndjson(p)?)) };
        let stack = ThematicStack {
            elevation: Raster::read_ascii(&self.elevation)?,
            slope: Raster::read_ascii(&self.slope)?,
            curvature: Raster::read_ascii(&self.curvature)?,
            aspect: Raster::read_ascii(&self.aspect)?,
            ndvi: Raster::read_ascii(&self.ndvi)?,
            spi: Raster::read_ascii(&self.spi)?,
            twi: Raster::read_ascii(&self.twi)?,
            faults: lines(&self.faults)?,
            drainage: lines(&self.drainage)?,
            roads: lines(&self.roads)?,
            lithology: polys(&self.lithology)?,
            landuse: polys(&self.landuse)?,
            catchments: polys(&self.catchments)?,
            stations: read_stations(&self.stations)?,
        };
        stack.validate()?;
        Ok(stack)
    }
}

/// A thematic stack with its landslide-frequency tables and per-year
/// station lookup, ready to featurize arbitrary locations.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub stack: ThematicStack,
    pub lithology_table: FrequencyTable,
    pub landuse_table: FrequencyTable,
    catchment_edges: LineLayer,
    stations_by_year: BTreeMap<i32, Vec<StationRecord>>,
    pub idw_power: f64,
}

impl Featurizer {
    pub fn new(stack: ThematicStack, landslides: &[(f64, f64)]) -> Result<Self> {
        let lithology_table = FrequencyTable::from_landslides(&stack.lithology, landslides);
        let landuse_table = FrequencyTable::from_landslides(&stack.landuse, landslides);
        Self::with_tables(stack, lithology_table, landuse_table)
    }

    pub fn with_tables(
        stack: ThematicStack,
        lithology_table: FrequencyTable,
        landuse_table: FrequencyTable,
    ) -> Result<Self> {
        stack.validate()?;
        let mut stations_by_year: BTreeMap<i32, Vec<StationRecord>> = BTreeMap::new();
        for s in &stack.stations {
            stations_by_year.entry(s.year).or_default().push(*s);
        }
        Ok(Featurizer {
            catchment_edges: stack.catchments.boundaries(),
            stack,
            lithology_table,
            landuse_table,
            stations_by_year,
            idw_power: DEFAULT_IDW_POWER,
        })
    }

    pub fn years_with_stations(&self) -> impl Iterator<Item = i32> + '_ {
        self.stations_by_year.keys().copied()
    }

    pub fn stations(&self, year: i32) -> &[StationRecord] {
        self.stations_by_year.get(&year).map_or(&[], Vec::as_slice)
    }

    /// Static (year-independent) factors at a location.
    pub fn static_features(&self, loc: (f64, f64)) -> RawFeatures {
        let s = &self.stack;
        let mut f = RawFeatures::default();
        f.set(Feature::Elevation, sample_raster(&s.elevation, loc));
        f.set(Feature::Slope, sample_raster(&s.slope, loc));
        f.set(Feature::Curvature, sample_raster(&s.curvature, loc));
        f.set(Feature::Aspect, sample_raster(&s.aspect, loc));
        f.set(Feature::Ndvi, sample_raster(&s.ndvi, loc));
        f.set(Feature::Spi, sample_raster(&s.spi, loc));
        f.set(Feature::Twi, sample_raster(&s.twi, loc));
        f.set(
            Feature::Lithology,
            polygon_score(&s.lithology, loc, &self.lithology_table).map(f64::from),
        );
        f.set(
            Feature::LandUse,
            polygon_score(&s.landuse, loc, &self.landuse_table).map(f64::from),
        );
        // Layers are validated nonempty, so distances always exist.
        f.set(Feature::DistFaults, dist_to_lines(&s.faults, loc).ok());
        f.set(Feature::DistDrainage, dist_to_lines(&s.drainage, loc).ok());
        f.set(Feature::DistRoads, dist_to_lines(&s.roads, loc).ok());
        f.set(Feature::DistCatchment, dist_to_lines(&self.catchment_edges, loc).ok());
        f
    }

    pub fn set_rainfall(&self, f: &mut RawFeatures, loc: (f64, f64), year: i32) {
        let refs: Vec<&StationRecord> = self.stations(year).iter().collect();
        let (ar, aerd) = idw_at(&refs, loc, self.idw_power).unzip();
        f.set(Feature::AnnualRainfall, ar);
        f.set(Feature::ExtremeRainfallDays, aerd);
    }

    pub fn featurize(&self, loc: (f64, f64), year: i32) -> RawFeatures {
        let mut f = self.static_features(loc);
        self.set_rainfall(&mut f, loc, year);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegativeSamplingConfig {
    /// Cells below this slope (degrees) count as flat for prioritised sampling.
    pub low_slope_deg: f64,
    /// Fraction drawn uniformly at random; the rest are prioritised.
    pub random_fraction: f64,
}

impl Default for NegativeSamplingConfig {
    fn default() -> Self {
        NegativeSamplingConfig {
            low_slope_deg: 15.0,
            random_fraction: 0.5,
        }
    }
}

/// Draw as many non-landslide locations as there are landslides. Half are
/// uniform over valid cells; the rest come from flat cells, preferring
/// low-frequency lithology or land-use categories. Years are assigned by a
/// one-to-one pairing with the shuffled positives.
pub fn generate_negatives(
    positives: &[LabeledSample],
    featurizer: &Featurizer,
    config: &NegativeSamplingConfig,
    seed: u64,
) -> Result<Vec<RawNegative>> {
    let stack = &featurizer.stack;
    let g = stack.geometry();
    let n = positives.len();
    let occupied: HashSet<(usize, usize)> = positives
        .iter()
        .filter_map(|p| g.cell_at(p.easting, p.northing))
        .collect();
    let valid: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let rc = g.row_col(i);
            !occupied.contains(&rc) && stack.slope.get(rc.0, rc.1).is_some() && stack.elevation.get(rc.0, rc.1).is_some()
        })
        .collect();
    if valid.len() < n {
        return Err(Error::Data(format!(
            "only {} valid non-landslide cells for {} negatives",
            valid.len(),
            n
        )));
    }

    let mut rng = rng::stream(seed, 0);
    let n_random = ((n as f64) * config.random_fraction).floor() as usize;
    let mut chosen: Vec<usize> = valid.choose_multiple(&mut rng, n_random).copied().collect();
    let mut taken: HashSet<usize> = chosen.iter().copied().collect();

    let low_slope = |i: usize| {
        let (r, c) = g.row_col(i);
        stack.slope.get(r, c).is_some_and(|s| s < config.low_slope_deg)
    };
    let low_freq = |i: usize| {
        let loc = g.center_of(i);
        polygon_score(&stack.lithology, loc, &featurizer.lithology_table) == Some(1)
            || polygon_score(&stack.landuse, loc, &featurizer.landuse_table) == Some(1)
    };
    let tiers: [Vec<usize>; 3] = [
        valid.iter().copied().filter(|&i| low_slope(i) && low_freq(i)).collect(),
        valid.iter().copied().filter(|&i| low_slope(i) && !low_freq(i)).collect(),
        valid.iter().copied().filter(|&i| !low_slope(i)).collect(),
    ];
    for mut tier in tiers {
        if chosen.len() == n {
            break;
        }
        tier.retain(|i| !taken.contains(i));
        let want = n - chosen.len();
        for &i in tier.choose_multiple(&mut rng, want) {
            chosen.push(i);
            taken.insert(i);
        }
    }

    let mut years: Vec<i32> = positives.iter().map(|p| p.year).collect();
    years.shuffle(&mut rng);

    Ok(chosen
        .into_iter()
        .zip(years)
        .map(|(cell, year)| {
            let loc = g.center_of(cell);
            RawNegative {
                year,
                easting: loc.0,
                northing: loc.1,
                features: featurizer.featurize(loc, year),
            }
        })
        .collect())
}

/// A generated non-landslide location, featurized but not yet imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawNegative {
    pub year: i32,
    pub easting: f64,
    pub northing: f64,
    pub features: RawFeatures,
}

/// Summary written alongside the featurized sample table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeSummary {
    pub imputation_means: [f64; FEATURE_COUNT],
    pub missing_counts: [usize; FEATURE_COUNT],
    pub positives_per_year: BTreeMap<i32, usize>,
    pub negatives_per_year: BTreeMap<i32, usize>,
    pub lithology_table: FrequencyTable,
    pub landuse_table: FrequencyTable,
}

/// Featurize a landslide inventory, generate matching negatives and impute.
pub fn featurize_inventory(
    featurizer: &Featurizer,
    inventory: &[InventoryRecord],
    config: &NegativeSamplingConfig,
    seed: u64,
) -> Result<(Vec<LabeledSample>, FeaturizeSummary)> {
    if inventory.is_empty() {
        return Err(Error::Data("landslide inventory is empty".into()));
    }
    let mut raw: Vec<(i32, f64, f64, Label, RawFeatures)> = inventory
        .par_iter()
        .map(|r| {
            let loc = (r.easting, r.northing);
            (r.year, r.easting, r.northing, Label::Landslide, featurizer.featurize(loc, r.year))
        })
        .collect();

    // Negatives only need year/location from the positives.
    let stubs: Vec<LabeledSample> = raw
        .iter()
        .enumerate()
        .map(|(id, r)| LabeledSample {
            id,
            year: r.0,
            easting: r.1,
            northing: r.2,
            label: Label::Landslide,
            features: FeatureVector::default(),
        })
        .collect();
    let negatives = generate_negatives(&stubs, featurizer, config, seed)?;
    raw.extend(
        negatives
            .into_iter()
            .map(|n| (n.year, n.easting, n.northing, Label::NonLandslide, n.features)),
    );

    let feats: Vec<RawFeatures> = raw.iter().map(|r| r.4).collect();
    let mut missing_counts = [0usize; FEATURE_COUNT];
    for f in &feats {
        for (i, v) in f.0.iter().enumerate() {
            if v.is_none() {
                missing_counts[i] += 1;
            }
        }
    }
    let (complete, means) = impute(&feats)?;

    let mut positives_per_year = BTreeMap::new();
    let mut negatives_per_year = BTreeMap::new();
    let samples: Vec<LabeledSample> = raw
        .iter()
        .zip(complete)
        .enumerate()
        .map(|(id, (r, features))| {
            let counter = if r.3.is_positive() {
                &mut positives_per_year
            } else {
                &mut negatives_per_year
            };
            *counter.entry(r.0).or_insert(0) += 1;
            LabeledSample {
                id,
                year: r.0,
                easting: r.1,
                northing: r.2,
                label: r.3,
                features,
            }
        })
        .collect();

    Ok((
        samples,
        FeaturizeSummary {
            imputation_means: means,
            missing_counts,
            positives_per_year,
            negatives_per_year,
            lithology_table: featurizer.lithology_table.clone(),
            landuse_table: featurizer.landuse_table.clone(),
        },
    ))
}
