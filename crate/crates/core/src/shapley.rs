//! Shapley-value attribution with interventional coalition values.
//!
//! The value of a coalition `S` for instance `x` is the mean model output
//! over background rows `b` with features in `S` taken from `x` and the rest
//! from `b`. Exact attribution enumerates all `2^n` coalitions; the Monte
//! Carlo estimator walks random feature permutations against every
//! background row, so the per-permutation contributions telescope and
//! efficiency holds exactly for any sample count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::model::Predictor;
use crate::rng;

pub const MAX_EXACT_FEATURES: usize = 20;
pub const AUTO_EXACT_LIMIT: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    /// Mean model output over the background.
    pub base_value: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMode {
    Exact,
    MonteCarlo { permutations: usize },
    /// Exact up to 13 features, Monte Carlo beyond.
    Auto { permutations: usize },
}

impl Default for ShapleyMode {
    fn default() -> Self {
        ShapleyMode::Auto { permutations: 32 }
    }
}

fn check_inputs(x: &[f64], background: &[Vec<f64>]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::InvalidInput("background sample is empty".into()));
    }
    if background.iter().any(|b| b.len() != x.len()) {
        return Err(Error::InvalidInput("background rows differ in width from the instance".into()));
    }
    Ok(())
}

/// Interventional coalition value; `in_coalition[j]` selects `x_j`.
pub fn coalition_value<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    in_coalition: &[bool],
    background: &[Vec<f64>],
) -> Result<f64> {
    check_inputs(x, background)?;
    let mut z = vec![0.0; x.len()];
    let total: f64 = background
        .iter()
        .map(|b| {
            for j in 0..x.len() {
                z[j] = if in_coalition[j] { x[j] } else { b[j] };
            }
            model.predict_proba(&z)
        })
        .sum();
    Ok(total / background.len() as f64)
}

fn mean_output<P: Predictor + ?Sized>(model: &P, background: &[Vec<f64>]) -> f64 {
    background.iter().map(|b| model.predict_proba(b)).sum::<f64>() / background.len() as f64
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact Shapley values by enumerating every coalition.
pub fn shapley_exact<P: Predictor + ?Sized>(model: &P, x: &[f64], background: &[Vec<f64>]) -> Result<Attribution> {
    check_inputs(x, background)?;
    let n = x.len();
    if n > MAX_EXACT_FEATURES {
        return Err(Error::InvalidInput(format!(
            "exact Shapley enumeration supports at most {MAX_EXACT_FEATURES} features (got {n}); use the Monte Carlo estimator"
        )));
    }
    let n_masks = 1usize << n;
    let mut values = vec![0.0; n_masks];
    let mut z = vec![0.0; n];
    for (mask, value) in values.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in background {
            for j in 0..n {
                z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
            }
            total += model.predict_proba(&z);
        }
        *value = total / background.len() as f64;
    }
    // weight(|S|) = |S|! (n - |S| - 1)! / n! = 1 / (n * C(n-1, |S|))
    let weights: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in (0..n_masks).filter(|m| m & bit == 0) {
            let s = mask.count_ones() as usize;
            *p += weights[s] * (values[mask | bit] - values[mask]);
        }
    }
    Ok(Attribution {
        phi,
        base_value: values[0],
        prediction: values[n_masks - 1],
    })
}

/// Permutation-sampling estimate of the Shapley values.
pub fn shapley_mc<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: &[Vec<f64>],
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    check_inputs(x, background)?;
    if n_permutations == 0 {
        return Err(Error::InvalidInput("need at least one permutation".into()));
    }
    let n = x.len();
    let mut rng = rng::seeded(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    let mut z = vec![0.0; n];
    for _ in 0..n_permutations {
        perm.shuffle(&mut rng);
        for b in background {
            z.copy_from_slice(b);
            let mut prev = model.predict_proba(&z);
            for &j in &perm {
                z[j] = x[j];
                let cur = model.predict_proba(&z);
                phi[j] += cur - prev;
                prev = cur;
            }
        }
    }
    let scale = 1.0 / (n_permutations * background.len()) as f64;
    phi.iter_mut().for_each(|p| *p *= scale);
    Ok(Attribution {
        phi,
        base_value: mean_output(model, background),
        prediction: model.predict_proba(x),
    })
}

pub fn attribute<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: &[Vec<f64>],
    mode: ShapleyMode,
    seed: u64,
) -> Result<Attribution> {
    match mode {
        ShapleyMode::Exact => shapley_exact(model, x, background),
        ShapleyMode::MonteCarlo { permutations } => shapley_mc(model, x, background, permutations, seed),
        ShapleyMode::Auto { permutations } => {
            if x.len() <= AUTO_EXACT_LIMIT {
                shapley_exact(model, x, background)
            } else {
                shapley_mc(model, x, background, permutations, seed)
            }
        }
    }
}

/// Features ordered by mean absolute Shapley value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub year: Option<i32>,
    /// Feature indices, most influential first; ties by index.
    pub order: Vec<usize>,
    /// Mean |φ| per feature, indexed by feature.
    pub mean_abs: Vec<f64>,
}

impl Ranking {
    pub fn from_attributions(year: Option<i32>, attributions: &[Attribution]) -> Result<Ranking> {
        let Some(first) = attributions.first() else {
            return Err(Error::InvalidInput("ranking needs at least one instance".into()));
        };
        let n = first.phi.len();
        let mut mean_abs = vec![0.0; n];
        for a in attributions {
            for (m, p) in mean_abs.iter_mut().zip(&a.phi) {
                *m += p.abs();
            }
        }
        mean_abs.iter_mut().for_each(|m| *m /= attributions.len() as f64);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
        Ok(Ranking { year, order, mean_abs })
    }

    /// 1-based rank of a feature.
    pub fn rank_of(&self, feature: usize) -> usize {
        self.order.iter().position(|&f| f == feature).map_or(usize::MAX, |p| p + 1)
    }
}

/// Attribute every instance and rank features by mean |φ|.
pub fn rank_features<P: Predictor + ?Sized>(
    model: &P,
    instances: &[Vec<f64>],
    background: &[Vec<f64>],
    mode: ShapleyMode,
    seed: u64,
) -> Result<(Ranking, Vec<Attribution>)> {
    if instances.is_empty() {
        return Err(Error::InvalidInput("ranking needs at least one instance".into()));
    }
    let attributions = instances
        .par_iter()
        .enumerate()
        .map(|(i, x)| attribute(model, x, background, mode, rng::derive(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((Ranking::from_attributions(None, &attributions)?, attributions))
}

/// Sample-count confidence tag of a year.
pub fn confidence_tag(n_positives: usize, has_model: bool) -> &'static str {
    if !has_model || n_positives == 0 {
        "none"
    } else if n_positives > 50 {
        ">50"
    } else if n_positives >= 10 {
        "10-50"
    } else {
        "<10"
    }
}

pub struct YearInput<'a> {
    pub year: i32,
    pub n_positives: usize,
    pub model: Option<&'a dyn Predictor>,
    pub instances: Vec<Vec<f64>>,
    pub background: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRanking {
    pub year: i32,
    pub n_positives: usize,
    pub confidence: String,
    pub ranking: Option<Ranking>,
    #[serde(skip)]
    pub attributions: Vec<Attribution>,
}

/// One ranking per year; years without a model or instances yield no-data rows.
pub fn yearly_rankings(inputs: &[YearInput<'_>], mode: ShapleyMode, seed: u64) -> Result<Vec<YearRanking>> {
    inputs
        .iter()
        .map(|inp| {
            let ranked = match inp.model {
                Some(m) if !inp.instances.is_empty() && !inp.background.is_empty() => {
                    let (mut r, a) = rank_features(m, &inp.instances, &inp.background, mode, rng::derive(seed, inp.year as u64))?;
                    r.year = Some(inp.year);
                    Some((r, a))
                }
                _ => None,
            };
            let confidence = confidence_tag(inp.n_positives, ranked.is_some()).to_string();
            let (ranking, attributions) = ranked.map_or((None, Vec::new()), |(r, a)| (Some(r), a));
            Ok(YearRanking {
                year: inp.year,
                n_positives: inp.n_positives,
                confidence,
                ranking,
                attributions,
            })
        })
        .collect()
}

fn feature_name(i: usize) -> String {
    Feature::from_index(i).map_or_else(|| format!("f{i}"), |f| f.column().to_string())
}

pub fn trajectory_csv(rows: &[YearRanking], top_k: usize) -> String {
    let mut out = String::from("year,n_positives,confidence");
    for k in 1..=top_k {
        let _ = write!(out, ",top{k}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.year, r.n_positives, r.confidence);
        for k in 0..top_k {
            let cell = r
                .ranking
                .as_ref()
                .and_then(|rk| rk.order.get(k))
                .map_or_else(|| "no-data".to_string(), |&f| feature_name(f));
            let _ = write!(out, ",{cell}");
        }
        out.push('\n');
    }
    out
}

pub fn ranking_csv(r: &Ranking) -> String {
    let mut out = String::from("rank,feature,mean_abs_phi\n");
    for (k, &f) in r.order.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", k + 1, feature_name(f), r.mean_abs[f]);
    }
    out
}

pub fn attribution_csv(instance_ids: &[usize], attributions: &[Attribution]) -> String {
    let mut out = String::from("instance_id,feature,phi\n");
    for (id, a) in instance_ids.iter().zip(attributions) {
        for (j, p) in a.phi.iter().enumerate() {
            let _ = writeln!(out, "{id},{},{p}", feature_name(j));
        }
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
