//! Enhancement of susceptibility maps with ground-deformation velocities:
//! aspect/slope screening, velocity binning, nearest-neighbour
//! rasterization and the 5×5 fusion matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GridGeometry, Raster, SusceptibilityRaster};

/// A deformation measurement point. Negative velocity is motion away from
/// the sensor along the line of sight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationPoint {
    pub easting: f64,
    pub northing: f64,
    /// mm/year
    pub velocity: f64,
    /// degrees
    pub aspect: f64,
    /// degrees
    pub slope: f64,
}

pub const DEFAULT_SLOPE_MIN: f64 = 5.0;

/// True when the aspect faces (near) north or south and the point should be
/// dropped: (348.75, 360) ∪ [0, 11.25) or (168.75, 191.25).
pub fn aspect_excluded(aspect: f64) -> bool {
    let a = aspect.rem_euclid(360.0);
    !(11.25..=348.75).contains(&a) || (a > 168.75 && a < 191.25)
}

/// A screened point keeps its index in the original list as its id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenedPoint {
    pub id: usize,
    pub point: DeformationPoint,
}

pub fn screen_points(points: &[DeformationPoint], slope_min: f64) -> Vec<ScreenedPoint> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| !aspect_excluded(p.aspect) && p.slope >= slope_min)
        .map(|(id, p)| ScreenedPoint { id, point: *p })
        .collect()
}

/// Velocity (mm/year) to deformation level 0..=4. Boundary values belong to
/// the more severe level.
pub fn bin_velocity(v: f64) -> Result<u8> {
    if v.is_nan() {
        return Err(Error::InvalidInput("velocity is NaN".into()));
    }
    Ok(if v <= -10.0 {
        4
    } else if v <= -8.0 {
        3
    } else if v <= -4.0 {
        2
    } else if v <= -2.0 {
        1
    } else {
        0
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPoint {
    pub id: usize,
    pub easting: f64,
    pub northing: f64,
    pub level: u8,
}

pub fn level_points(screened: &[ScreenedPoint]) -> Result<Vec<LevelPoint>> {
    screened
        .iter()
        .map(|s| {
            Ok(LevelPoint {
                id: s.id,
                easting: s.point.easting,
                northing: s.point.northing,
                level: bin_velocity(s.point.velocity)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationLevelRaster {
    pub geometry: GridGeometry,
    pub level: Vec<u8>,
}

impl DeformationLevelRaster {
    pub fn to_raster(&self) -> Raster {
        Raster {
            geometry: self.geometry,
            data: self.level.iter().map(|&l| f64::from(l)).collect(),
        }
    }
}

/// Nearest-neighbour level per cell centre, ties to the lowest point id.
/// Cells farther than `cutoff` from every point get level 0. An empty point
/// set yields an all-zero raster.
pub fn rasterize_levels(points: &[LevelPoint], geometry: &GridGeometry, cutoff: Option<f64>) -> DeformationLevelRaster {
    if points.is_empty() {
        log::warn!("no deformation points survived screening; deformation levels are all 0");
        return DeformationLevelRaster {
            geometry: *geometry,
            level: vec![0; geometry.len()],
        };
    }
    let index = BucketIndex::new(points, geometry);
    let cutoff2 = cutoff.map(|c| c * c);
    let level = (0..geometry.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = geometry.center_of(i);
            let (p, d2) = index.nearest(points, x, y);
            if cutoff2.is_some_and(|c| d2 > c) {
                0
            } else {
                p.level
            }
        })
        .collect();
    DeformationLevelRaster {
        geometry: *geometry,
        level,
    }
}

/// Uniform bucket grid over points and raster extent for nearest lookups.
struct BucketIndex {
    x0: f64,
    y0: f64,
    size: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl BucketIndex {
    fn new(points: &[LevelPoint], g: &GridGeometry) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (g.xll, g.yll, g.xright(), g.ytop());
        for p in points {
            x0 = x0.min(p.easting);
            y0 = y0.min(p.northing);
            x1 = x1.max(p.easting);
            y1 = y1.max(p.northing);
        }
        let area = ((x1 - x0) * (y1 - y0)).max(f64::MIN_POSITIVE);
        let size = (area / points.len() as f64).sqrt().max(g.cellsize).max(1e-9);
        let nx = (((x1 - x0) / size).floor() as usize + 1).min(4096);
        let ny = (((y1 - y0) / size).floor() as usize + 1).min(4096);
        let size = size.max((x1 - x0) / nx as f64).max((y1 - y0) / ny as f64);
        let mut index = BucketIndex {
            x0,
            y0,
            size,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (k, p) in points.iter().enumerate() {
            let (i, j) = index.bucket(p.easting, p.northing);
            index.buckets[j * nx + i].push(k);
        }
        index
    }

    fn bucket(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - self.x0) / self.size).floor().max(0.0) as usize;
        let j = ((y - self.y0) / self.size).floor().max(0.0) as usize;
        (i.min(self.nx - 1), j.min(self.ny - 1))
    }

    /// Nearest point (lowest id among equidistant ones) and its squared distance.
    fn nearest<'a>(&self, points: &'a [LevelPoint], x: f64, y: f64) -> (&'a LevelPoint, f64) {
        let (qi, qj) = self.bucket(x, y);
        let mut best: Option<(&LevelPoint, f64)> = None;
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            if let Some((_, d2)) = best {
                // Anything outside the searched block is at least this far away.
                let reach = (ring as f64 - 1.0).max(0.0) * self.size;
                if d2 < reach * reach {
                    break;
                }
            }
            let (i0, i1) = (qi as i64 - ring as i64, qi as i64 + ring as i64);
            let (j0, j1) = (qj as i64 - ring as i64, qj as i64 + ring as i64);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let on_ring = i == i0 || i == i1 || j == j0 || j == j1;
                    if !on_ring || i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                        continue;
                    }
                    for &k in &self.buckets[j as usize * self.nx + i as usize] {
                        let p = &points[k];
                        let d2 = (p.easting - x).powi(2) + (p.northing - y).powi(2);
                        let better = match best {
                            None => true,
                            Some((b, bd)) => d2 < bd || (d2 == bd && p.id < b.id),
                        };
                        if better {
                            best = Some((p, d2));
                        }
                    }
                }
            }
        }
        best.expect("nonempty point set")
    }
}

/// Final level indexed by `[deformation level][initial level]`.
pub const ENHANCEMENT_MATRIX: [[u8; 5]; 5] = [
    [0, 1, 2, 3, 4],
    [1, 1, 2, 3, 4],
    [2, 2, 3, 3, 4],
    [3, 3, 4, 4, 4],
    [4, 4, 4, 4, 4],
];

pub fn enhance_level(deformation: u8, initial: u8) -> u8 {
    ENHANCEMENT_MATRIX[deformation.min(4) as usize][initial.min(4) as usize]
}

/// Fuse an initial susceptibility raster with deformation levels. Nodata
/// stays nodata; probabilities are carried through unchanged.
pub fn fuse(initial: &SusceptibilityRaster, deform: &DeformationLevelRaster) -> Result<SusceptibilityRaster> {
    if !initial.geometry.same_as(&deform.geometry) {
        return Err(Error::InvalidInput("susceptibility and deformation grids differ".into()));
    }
    let level = initial
        .level
        .iter()
        .zip(&deform.level)
        .map(|(l, &d)| l.map(|l| enhance_level(d, l)))
        .collect();
    Ok(SusceptibilityRaster {
        geometry: initial.geometry,
        probability: initial.probability.clone(),
        level,
    })
}

/// Fraction of valid cells at each level.
pub fn level_proportions(raster: &SusceptibilityRaster) -> Result<[f64; 5]> {
    let mut counts = [0usize; 5];
    for l in raster.level.iter().flatten() {
        counts[*l as usize] += 1;
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::InvalidInput("raster has no valid cells".into()));
    }
    Ok(counts.map(|c| c as f64 / n as f64))
}

pub fn proportions_csv(props: &[f64; 5]) -> String {
    let mut out = String::from("level,proportion\n");
    for (l, p) in props.iter().enumerate() {
        out.push_str(&format!("{l},{p}\n"));
    }
    out
}
