//! Landslide-inducing factors and labelled samples.
//!
//! The factor order below is part of the file-format contract: CSV columns,
//! model weights and attribution outputs all align by index.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 15;

/// NDVI thematic layers carry values amplified by this factor.
pub const NDVI_SCALE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    Elevation,
    Slope,
    Curvature,
    Aspect,
    Lithology,
    LandUse,
    Ndvi,
    Spi,
    Twi,
    AnnualRainfall,
    ExtremeRainfallDays,
    DistFaults,
    DistDrainage,
    DistCatchment,
    DistRoads,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::Elevation,
        Feature::Slope,
        Feature::Curvature,
        Feature::Aspect,
        Feature::Lithology,
        Feature::LandUse,
        Feature::Ndvi,
        Feature::Spi,
        Feature::Twi,
        Feature::AnnualRainfall,
        Feature::ExtremeRainfallDays,
        Feature::DistFaults,
        Feature::DistDrainage,
        Feature::DistCatchment,
        Feature::DistRoads,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Feature> {
        Self::ALL.get(i).copied()
    }

    /// Column name in the sample CSV schema.
    pub fn column(self) -> &'static str {
        match self {
            Feature::Elevation => "elev",
            Feature::Slope => "slope",
            Feature::Curvature => "curv",
            Feature::Aspect => "aspect",
            Feature::Lithology => "litho",
            Feature::LandUse => "landuse",
            Feature::Ndvi => "ndvi",
            Feature::Spi => "spi",
            Feature::Twi => "twi",
            Feature::AnnualRainfall => "ar",
            Feature::ExtremeRainfallDays => "aerd",
            Feature::DistFaults => "d_fault",
            Feature::DistDrainage => "d_drain",
            Feature::DistCatchment => "d_catch",
            Feature::DistRoads => "d_road",
        }
    }

    pub fn from_column(name: &str) -> Option<Feature> {
        Self::ALL.iter().copied().find(|f| f.column() == name)
    }

    pub fn is_ordinal(self) -> bool {
        matches!(self, Feature::Lithology | Feature::LandUse)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// Feature values before imputation; `None` marks a missing slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawFeatures(pub [Option<f64>; FEATURE_COUNT]);

impl RawFeatures {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.0[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: Option<f64>) {
        self.0[f.index()] = v.filter(|x| x.is_finite());
    }

    pub fn has_missing(&self) -> bool {
        self.0.iter().any(Option::is_none)
    }

    /// Complete vector if nothing is missing.
    pub fn complete(&self) -> Option<FeatureVector> {
        let mut out = [0.0; FEATURE_COUNT];
        for (o, v) in out.iter_mut().zip(self.0.iter()) {
            *o = (*v)?;
        }
        Some(FeatureVector(out))
    }
}

impl From<FeatureVector> for RawFeatures {
    fn from(v: FeatureVector) -> Self {
        RawFeatures(v.0.map(Some))
    }
}

/// A complete set of the 15 factor values, NDVI in its amplified form.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.0[f.index()] = v;
    }

    /// Values as fed to models: NDVI converted back to [-1, 1].
    pub fn model_input(&self) -> [f64; FEATURE_COUNT] {
        let mut x = self.0;
        x[Feature::Ndvi.index()] /= NDVI_SCALE;
        x
    }

    pub fn validate(&self) -> Result<()> {
        for f in Feature::ALL {
            let v = self.get(f);
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{f} is not finite")));
            }
            if f.is_ordinal() && !matches!(v as i64, 1..=3) {
                return Err(Error::InvalidInput(format!("{f} score {v} outside {{1,2,3}}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NonLandslide = 0,
    Landslide = 1,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Landslide
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn class_index(self) -> usize {
        self as usize
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::NonLandslide),
            1 => Ok(Label::Landslide),
            other => Err(Error::InvalidInput(format!("label {other} not in {{0,1}}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    /// Row index in the sample table this sample was read from.
    pub id: usize,
    pub year: i32,
    pub easting: f64,
    pub northing: f64,
    pub label: Label,
    pub features: FeatureVector,
}

impl LabeledSample {
    pub fn location(&self) -> (f64, f64) {
        (self.easting, self.northing)
    }
}

/// Count (positives, negatives).
pub fn class_counts<'a>(samples: impl IntoIterator<Item = &'a LabeledSample>) -> (usize, usize) {
    samples.into_iter().fold((0, 0), |(p, n), s| {
        if s.label.is_positive() {
            (p + 1, n)
        } else {
            (p, n + 1)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_order_matches_schema() {
        let cols: Vec<_> = Feature::ALL.iter().map(|f| f.column()).collect();
        assert_eq!(
            cols.join(","),
            "elev,slope,curv,aspect,litho,landuse,ndvi,spi,twi,ar,aerd,d_fault,d_drain,d_catch,d_road"
        );
        for (i, f) in Feature::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(Feature::from_column(f.column()), Some(*f));
        }
    }

    #[test]
    fn ndvi_is_descaled_for_models() {
        let mut v = FeatureVector([1.0; FEATURE_COUNT]);
        v.set(Feature::Ndvi, 6500.0);
        assert_eq!(v.model_input()[Feature::Ndvi.index()], 0.65);
    }

    #[test]
    fn ordinal_scores_are_validated() {
        let mut v = FeatureVector([1.0; FEATURE_COUNT]);
        assert!(v.validate().is_ok());
        v.set(Feature::LandUse, 4.0);
        assert!(v.validate().is_err());
    }

    #[test]
    fn label_from_u8() {
        assert_eq!(Label::try_from(1).unwrap(), Label::Landslide);
        assert!(Label::try_from(2).is_err());
    }
}
