//! Grid geometry, floating-point rasters with ESRI ASCII grid I/O, and the
//! susceptibility raster with its five-level classification.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Geometry of a north-up grid. Row 0 is the northernmost row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
}

impl GridGeometry {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidInput(format!("degenerate grid {ncols}x{nrows}")));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) || !xll.is_finite() || !yll.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bad grid origin/cellsize ({xll}, {yll}, {cellsize})"
            )));
        }
        Ok(GridGeometry {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
        })
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ytop(&self) -> f64 {
        self.yll + self.nrows as f64 * self.cellsize
    }

    pub fn xright(&self) -> f64 {
        self.xll + self.ncols as f64 * self.cellsize
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.ncols, index % self.ncols)
    }

    /// Coordinates of a cell center.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.ytop() - (row as f64 + 0.5) * self.cellsize,
        )
    }

    pub fn center_of(&self, index: usize) -> (f64, f64) {
        let (r, c) = self.row_col(index);
        self.center(r, c)
    }

    /// Cell containing a location, `None` outside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fc = (x - self.xll) / self.cellsize;
        let fr = (self.ytop() - y) / self.cellsize;
        if !(fc >= 0.0 && fr >= 0.0) {
            return None;
        }
        let (c, r) = (fc.floor() as usize, fr.floor() as usize);
        (c < self.ncols && r < self.nrows).then_some((r, c))
    }

    pub fn same_as(&self, other: &GridGeometry) -> bool {
        let tol = 1e-9 * self.cellsize.max(1.0);
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && (self.xll - other.xll).abs() <= tol
            && (self.yll - other.yll).abs() <= tol
            && (self.cellsize - other.cellsize).abs() <= tol
    }
}

/// A single-band raster. Nodata cells are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub geometry: GridGeometry,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn filled(geometry: GridGeometry, value: f64) -> Self {
        Raster {
            geometry,
            data: vec![value; geometry.len()],
        }
    }

    pub fn from_fn(geometry: GridGeometry, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(geometry.len());
        for r in 0..geometry.nrows {
            for c in 0..geometry.ncols {
                data.push(f(r, c));
            }
        }
        Raster { geometry, data }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.data[self.geometry.index(row, col)];
        (!v.is_nan()).then_some(v)
    }

    /// Value of the cell containing a location; `None` outside or at nodata.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (r, c) = self.geometry.cell_at(x, y)?;
        self.get(r, c)
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn read_ascii(path: impl AsRef<Path>) -> Result<Raster> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_ascii(&text).map_err(|(line, msg)| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })
    }

    pub fn write_ascii(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ascii()).map_err(|e| Error::io(path, e))
    }

    pub fn to_ascii(&self) -> String {
        let g = &self.geometry;
        let mut out = String::with_capacity(g.len() * 8 + 128);
        let _ = writeln!(out, "ncols {}", g.ncols);
        let _ = writeln!(out, "nrows {}", g.nrows);
        let _ = writeln!(out, "xllcorner {}", g.xll);
        let _ = writeln!(out, "yllcorner {}", g.yll);
        let _ = writeln!(out, "cellsize {}", g.cellsize);
        let _ = writeln!(out, "NODATA_value {}", DEFAULT_NODATA);
        for row in self.data.chunks(g.ncols) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                if v.is_nan() {
                    let _ = write!(out, "{}", DEFAULT_NODATA);
                } else {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn parse_ascii(text: &str) -> std::result::Result<Raster, (usize, String)> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut center_registered = false;
    let mut cellsize = None;
    let mut nodata = DEFAULT_NODATA;

    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(lineno, line)) = lines.peek() {
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        if key.parse::<f64>().is_ok() {
            break;
        }
        let val = toks
            .next()
            .ok_or((lineno + 1, format!("missing value for {key}")))?;
        let num: f64 = val
            .parse()
            .map_err(|_| (lineno + 1, format!("bad number {val:?} for {key}")))?;
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(num as usize),
            "nrows" => nrows = Some(num as usize),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => {
                xll = Some(num);
                center_registered = true;
            }
            "yllcenter" => {
                yll = Some(num);
                center_registered = true;
            }
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = num,
            other => return Err((lineno + 1, format!("unknown header key {other}"))),
        }
        lines.next();
    }

    let missing = |k: &str| (0, format!("missing header {k}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    let (mut xll, mut yll) = (
        xll.ok_or_else(|| missing("xllcorner"))?,
        yll.ok_or_else(|| missing("yllcorner"))?,
    );
    if center_registered {
        xll -= cellsize / 2.0;
        yll -= cellsize / 2.0;
    }
    let geometry = GridGeometry::new(ncols, nrows, xll, yll, cellsize).map_err(|e| (0, e.to_string()))?;

    let mut data = Vec::with_capacity(geometry.len());
    for (lineno, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| (lineno + 1, format!("bad cell value {tok:?}")))?;
            data.push(if v == nodata || !v.is_finite() { f64::NAN } else { v });
        }
    }
    if data.len() != geometry.len() {
        return Err((0, format!("expected {} cells, found {}", geometry.len(), data.len())));
    }
    Ok(Raster { geometry, data })
}

/// Probability-to-level break rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassBreaks {
    /// Left-closed intervals at 0.2 steps.
    #[default]
    EqualInterval,
    /// Explicit ascending cut points, typically the 20/40/60/80% quantiles
    /// of a probability map (see [`ClassBreaks::quantiles`]).
    Cuts { cuts: [f64; 4] },
}

impl ClassBreaks {
    pub const EQUAL_CUTS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

    pub fn cuts(&self) -> [f64; 4] {
        match self {
            ClassBreaks::EqualInterval => Self::EQUAL_CUTS,
            ClassBreaks::Cuts { cuts } => *cuts,
        }
    }

    /// Quantile breaks over the valid probabilities.
    pub fn quantiles(probabilities: &[f64]) -> Result<ClassBreaks> {
        let mut v: Vec<f64> = probabilities.iter().copied().filter(|p| !p.is_nan()).collect();
        if v.is_empty() {
            return Err(Error::InvalidInput("no valid probabilities for quantile breaks".into()));
        }
        v.sort_by(f64::total_cmp);
        let q = |f: f64| v[((f * v.len() as f64).floor() as usize).min(v.len() - 1)];
        Ok(ClassBreaks::Cuts {
            cuts: [q(0.2), q(0.4), q(0.6), q(0.8)],
        })
    }

    pub fn level(&self, probability: f64) -> Result<u8> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::InvalidInput(format!(
                "probability {probability} outside [0,1]"
            )));
        }
        Ok(self.cuts().iter().filter(|&&c| probability >= c).count() as u8)
    }
}

/// Map a probability to a level 0..=4 with equal-interval breaks.
pub fn class_breaks(probability: f64) -> Result<u8> {
    ClassBreaks::EqualInterval.level(probability)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SusceptibilityRaster {
    pub geometry: GridGeometry,
    pub probability: Vec<Option<f64>>,
    pub level: Vec<Option<u8>>,
}

impl SusceptibilityRaster {
    pub fn from_probabilities(
        geometry: GridGeometry,
        probability: Vec<Option<f64>>,
        breaks: &ClassBreaks,
    ) -> Result<Self> {
        if probability.len() != geometry.len() {
            return Err(Error::InvalidInput("probability length does not match grid".into()));
        }
        let level = probability
            .iter()
            .map(|p| p.map(|p| breaks.level(p)).transpose())
            .collect::<Result<Vec<_>>>()?;
        Ok(SusceptibilityRaster {
            geometry,
            probability,
            level,
        })
    }

    pub fn probability_raster(&self) -> Raster {
        Raster {
            geometry: self.geometry,
            data: self.probability.iter().map(|p| p.unwrap_or(f64::NAN)).collect(),
        }
    }

    pub fn level_raster(&self) -> Raster {
        Raster {
            geometry: self.geometry,
            data: self.level.iter().map(|l| l.map_or(f64::NAN, f64::from)).collect(),
        }
    }

    /// Rebuild from a probability raster and a level raster.
    pub fn from_rasters(probability: &Raster, level: &Raster) -> Result<Self> {
        if !probability.geometry.same_as(&level.geometry) {
            return Err(Error::InvalidInput("probability/level geometry mismatch".into()));
        }
        let level = level
            .data
            .iter()
            .map(|v| {
                if v.is_nan() {
                    Ok(None)
                } else if (0.0..=4.0).contains(v) && v.fract() == 0.0 {
                    Ok(Some(*v as u8))
                } else {
                    Err(Error::InvalidInput(format!("level {v} not in 0..=4")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SusceptibilityRaster {
            geometry: probability.geometry,
            probability: probability.data.iter().map(|v| (!v.is_nan()).then_some(*v)).collect(),
            level,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn class_break_examples() {
        assert_eq!(class_breaks(0.0).unwrap(), 0);
        assert_eq!(class_breaks(1.0).unwrap(), 4);
        assert_eq!(class_breaks(0.4).unwrap(), 2);
        assert_eq!(class_breaks(0.19999).unwrap(), 0);
        assert_eq!(class_breaks(0.6).unwrap(), 3);
        assert_eq!(class_breaks(0.8).unwrap(), 4);
        assert!(class_breaks(f64::NAN).is_err());
        assert!(class_breaks(1.01).is_err());
        assert!(class_breaks(-0.1).is_err());
    }

    #[test]
    fn quantile_breaks_balance_levels() {
        let p: Vec<f64> = (0..100).map(|i| i as f64 / 1000.0).collect();
        let b = ClassBreaks::quantiles(&p).unwrap();
        let mut counts = [0; 5];
        for &x in &p {
            counts[b.level(x).unwrap() as usize] += 1;
        }
        assert_eq!(counts, [20; 5]);
    }

    #[test]
    fn cell_lookup() {
        let g = GridGeometry::new(3, 2, 100.0, 200.0, 10.0).unwrap();
        assert_eq!(g.cell_at(105.0, 215.0), Some((0, 0)));
        assert_eq!(g.cell_at(125.0, 201.0), Some((1, 2)));
        assert_eq!(g.cell_at(99.0, 215.0), None);
        assert_eq!(g.cell_at(130.0, 215.0), None);
        assert_eq!(g.center(1, 2), (125.0, 205.0));
        assert_eq!(g.cell_at(125.0, 205.0), Some((1, 2)));
    }

    #[test]
    fn ascii_parse_rejects_wrong_cell_count() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 3\n";
        assert!(parse_ascii(text).is_err());
    }

    #[test]
    fn ascii_reads_center_registration_and_nodata() {
        let text = "NCOLS 2\nNROWS 1\nXLLCENTER 5\nYLLCENTER 5\nCELLSIZE 10\nNODATA_VALUE -1\n7 -1\n";
        let r = parse_ascii(text).unwrap();
        assert_eq!(r.geometry.xll, 0.0);
        assert_eq!(r.get(0, 0), Some(7.0));
        assert_eq!(r.get(0, 1), None);
    }

    proptest! {
        #[test]
        fn class_breaks_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(class_breaks(lo).unwrap() <= class_breaks(hi).unwrap());
        }

        #[test]
        fn ascii_round_trip(
            ncols in 1usize..6,
            nrows in 1usize..6,
            xll in -1e6f64..1e6,
            yll in -1e6f64..1e6,
            cellsize in 0.5f64..100.0,
            seed in proptest::collection::vec(proptest::option::of(-1e5f64..1e5), 36),
        ) {
            let g = GridGeometry::new(ncols, nrows, xll, yll, cellsize).unwrap();
            let r = Raster {
                geometry: g,
                data: (0..g.len()).map(|i| seed[i].unwrap_or(f64::NAN)).collect(),
            };
            let back = parse_ascii(&r.to_ascii()).unwrap();
            prop_assert_eq!(back.geometry, r.geometry);
            for (a, b) in back.data.iter().zip(&r.data) {
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }
}
