//! Tabular and vector file formats.
//!
//! * samples: `year,easting,northing,label,<15 factor columns>`, empty cell = missing
//! * landslide inventory: `year,easting,northing`
//! * stations: `year,easting,northing,ar,aerd`
//! * deformation points: `easting,northing,velocity,aspect,slope`
//! * vector layers: newline-delimited JSON `{id, category, coords}`

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::enhance::DeformationPoint;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureVector, Label, LabeledSample, RawFeatures, FEATURE_COUNT};
use crate::featurize::StationRecord;

pub const SAMPLE_HEADER: [&str; 4] = ["year", "easting", "northing", "label"];

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn column_map(path: &Path, headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("missing column {name}"),
            })
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line() as usize);
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad value {raw:?} for {name}"),
    })
}

fn sample_columns() -> Vec<&'static str> {
    SAMPLE_HEADER
        .iter()
        .copied()
        .chain(Feature::ALL.iter().map(|f| f.column()))
        .collect()
}

/// A sample row whose factor values may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub year: i32,
    pub easting: f64,
    pub northing: f64,
    pub label: Label,
    pub features: RawFeatures,
}

pub fn read_raw_samples(path: impl AsRef<Path>) -> Result<Vec<RawSample>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let cols = column_map(path, rdr.headers()?, &sample_columns())?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label: u8 = field(path, &rec, cols[3], "label")?;
        let mut features = RawFeatures::default();
        for (k, f) in Feature::ALL.iter().enumerate() {
            let raw = rec.get(cols[4 + k]).unwrap_or("");
            let v = if raw.is_empty() {
                None
            } else {
                Some(field::<f64>(path, &rec, cols[4 + k], f.column())?)
            };
            features.set(*f, v);
        }
        out.push(RawSample {
            year: field(path, &rec, cols[0], "year")?,
            easting: field(path, &rec, cols[1], "easting")?,
            northing: field(path, &rec, cols[2], "northing")?,
            label: Label::try_from(label)?,
            features,
        });
    }
    Ok(out)
}

/// Read complete samples; any missing factor is an error. Ids are row indices.
pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    read_raw_samples(path)?
        .into_iter()
        .enumerate()
        .map(|(id, r)| {
            let features = r.features.complete().ok_or_else(|| {
                Error::Data(format!(
                    "{}: row {} has missing factors; run featurize/impute first",
                    path.display(),
                    id + 1
                ))
            })?;
            Ok(LabeledSample {
                id,
                year: r.year,
                easting: r.easting,
                northing: r.northing,
                label: r.label,
                features,
            })
        })
        .collect()
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<()> {
    let rows: Vec<RawSample> = samples
        .iter()
        .map(|s| RawSample {
            year: s.year,
            easting: s.easting,
            northing: s.northing,
            label: s.label,
            features: s.features.into(),
        })
        .collect();
    write_raw_samples(path, &rows)
}

pub fn write_raw_samples(path: impl AsRef<Path>, samples: &[RawSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(sample_columns())?;
    for s in samples {
        let mut rec: Vec<String> = vec![
            s.year.to_string(),
            s.easting.to_string(),
            s.northing.to_string(),
            (s.label as u8).to_string(),
        ];
        rec.extend(s.features.0.iter().map(|v| v.map_or(String::new(), |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One recorded landslide (positive) location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryRecord {
    pub year: i32,
    pub easting: f64,
    pub northing: f64,
}

pub fn read_inventory(path: impl AsRef<Path>) -> Result<Vec<InventoryRecord>> {
    read_serde_csv(path.as_ref())
}

pub fn write_inventory(path: impl AsRef<Path>, records: &[InventoryRecord]) -> Result<()> {
    write_serde_csv(path.as_ref(), records)
}

pub fn read_stations(path: impl AsRef<Path>) -> Result<Vec<StationRecord>> {
    let recs: Vec<StationRecord> = read_serde_csv(path.as_ref())?;
    for s in &recs {
        if !(s.ar >= 0.0 && s.aerd >= 0.0) {
            return Err(Error::Data(format!(
                "{}: station record with negative rainfall ({:?})",
                path.as_ref().display(),
                s
            )));
        }
    }
    Ok(recs)
}

pub fn write_stations(path: impl AsRef<Path>, records: &[StationRecord]) -> Result<()> {
    write_serde_csv(path.as_ref(), records)
}

pub fn read_deformation(path: impl AsRef<Path>) -> Result<Vec<DeformationPoint>> {
    let pts: Vec<DeformationPoint> = read_serde_csv(path.as_ref())?;
    if let Some(p) = pts.iter().find(|p| !p.velocity.is_finite()) {
        return Err(Error::Data(format!("non-finite velocity at ({}, {})", p.easting, p.northing)));
    }
    Ok(pts)
}

pub fn write_deformation(path: impl AsRef<Path>, points: &[DeformationPoint]) -> Result<()> {
    write_serde_csv(path.as_ref(), points)
}

fn read_serde_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

fn write_serde_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One polyline or polygon ring with its category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFeature {
    pub id: u64,
    #[serde(default)]
    pub category: String,
    pub coords: Vec<[f64; 2]>,
}

pub fn read_ndjson(path: impl AsRef<Path>) -> Result<Vec<VectorFeature>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let feat: VectorFeature = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(feat);
    }
    Ok(out)
}

pub fn write_ndjson(path: impl AsRef<Path>, features: &[VectorFeature]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for f in features {
        serde_json::to_writer(&mut buf, f)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Write any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Convenience for tests: a complete sample from a plain array.
pub fn sample_from_array(id: usize, year: i32, label: Label, x: [f64; FEATURE_COUNT]) -> LabeledSample {
    LabeledSample {
        id,
        year,
        easting: 0.0,
        northing: 0.0,
        label,
        features: FeatureVector(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_sample() -> impl Strategy<Value = RawSample> {
        (
            1990i32..2030,
            -1e6f64..1e6,
            -1e6f64..1e6,
            any::<bool>(),
            proptest::collection::vec(proptest::option::of(-1e4f64..1e4), FEATURE_COUNT),
        )
            .prop_map(|(year, e, n, pos, vals)| {
                let mut features = RawFeatures::default();
                for (f, v) in Feature::ALL.iter().zip(vals) {
                    features.set(*f, v);
                }
                RawSample {
                    year,
                    easting: e,
                    northing: n,
                    label: if pos { Label::Landslide } else { Label::NonLandslide },
                    features,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sample_csv_round_trip(rows in proptest::collection::vec(arb_sample(), 0..20)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.csv");
            write_raw_samples(&p, &rows).unwrap();
            let back = read_raw_samples(&p).unwrap();
            prop_assert_eq!(back, rows);
        }
    }

    #[test]
    fn missing_cells_are_none() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(
            &p,
            "year,easting,northing,label,elev,slope,curv,aspect,litho,landuse,ndvi,spi,twi,ar,aerd,d_fault,d_drain,d_catch,d_road\n\
             2001,1,2,1,10,,0,90,1,2,5000,1,2,2000,10,5,5,5,5\n",
        )
        .unwrap();
        let rows = read_raw_samples(&p).unwrap();
        assert_eq!(rows[0].features.get(Feature::Slope), None);
        assert_eq!(rows[0].features.get(Feature::Elevation), Some(10.0));
        assert!(read_samples(&p).is_err());
    }

    #[test]
    fn bad_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(
            &p,
            "year,easting,northing,label,elev,slope,curv,aspect,litho,landuse,ndvi,spi,twi,ar,aerd,d_fault,d_drain,d_catch,d_road\n\
             2001,1,2,3,10,1,0,90,1,2,5000,1,2,2000,10,5,5,5,5\n",
        )
        .unwrap();
        assert!(read_raw_samples(&p).is_err());
    }

    #[test]
    fn ndjson_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.ndjson");
        let feats = vec![VectorFeature {
            id: 3,
            category: "granite".into(),
            coords: vec![[0.0, 0.0], [1.5, 2.0]],
        }];
        write_ndjson(&p, &feats).unwrap();
        assert_eq!(read_ndjson(&p).unwrap(), feats);
    }
}
