//! Classification metrics, ROC/AUROC, shuffled repeat evaluation and the
//! few-shot adaptation study.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LabeledSample;
use crate::meta::{adapt, AdaptConfig, MetaState};
use crate::mlp;
use crate::model::Predictor;
use crate::rng;
use crate::tasks::YearTask;

pub const DECISION_THRESHOLD: f64 = 0.5;
pub const ROC_LATTICE_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Metrics of one evaluation. Ratios with a zero denominator are `None`
/// (serialized as `null`), never substituted with 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auroc: Option<f64>,
    pub roc_curve: Vec<(f64, f64)>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(labels: &[u8], predicted: &[u8]) -> Result<Metrics> {
    if labels.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} predictions",
            labels.len(),
            predicted.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("no labels to evaluate".into()));
    }
    let mut c = Confusion::default();
    for (&y, &p) in labels.iter().zip(predicted) {
        match (y != 0, p != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        confusion: c,
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision,
        recall,
        f1,
        auroc: None,
        roc_curve: Vec::new(),
    })
}

/// ROC points (fpr, tpr) from (0,0) to (1,1), one point per distinct score
/// (descending), and the trapezoid area under them.
pub fn roc_auroc(labels: &[u8], scores: &[f64]) -> Result<(Vec<(f64, f64)>, f64)> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput("labels and scores differ in length".into()));
    }
    let pos = labels.iter().filter(|&&y| y != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput("ROC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let s = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == s {
            if labels[idx[k]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (x0, y0) = *curve.last().unwrap();
        let pt = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        area += (pt.0 - x0) * (pt.1 + y0) / 2.0;
        curve.push(pt);
    }
    Ok((curve, area))
}

/// Metrics at the 0.5 threshold plus ROC/AUROC (when both classes exist).
pub fn score_metrics(labels: &[u8], scores: &[f64]) -> Result<Metrics> {
    let predicted: Vec<u8> = scores.iter().map(|&s| u8::from(s >= DECISION_THRESHOLD)).collect();
    let mut m = confusion_metrics(labels, &predicted)?;
    if let Ok((curve, auc)) = roc_auroc(labels, scores) {
        m.auroc = Some(auc);
        m.roc_curve = curve;
    }
    Ok(m)
}

/// TPR of a curve at a given FPR: the top of any vertical segment at `fpr`,
/// linear interpolation elsewhere.
pub fn tpr_at(curve: &[(f64, f64)], fpr: f64) -> f64 {
    let i = curve.iter().rposition(|p| p.0 <= fpr).unwrap_or(0);
    match curve.get(i + 1) {
        Some(&(x1, y1)) if x1 > curve[i].0 => {
            let (x0, y0) = curve[i];
            y0 + (y1 - y0) * (fpr - x0) / (x1 - x0)
        }
        _ => curve[i].1,
    }
}

/// Vertical average of several ROC curves on an evenly spaced FPR lattice.
pub fn mean_roc(curves: &[Vec<(f64, f64)>], points: usize) -> Vec<(f64, f64)> {
    if curves.is_empty() || points < 2 {
        return Vec::new();
    }
    (0..points)
        .map(|k| {
            let f = k as f64 / (points - 1) as f64;
            let t = curves.iter().map(|c| tpr_at(c, f)).sum::<f64>() / curves.len() as f64;
            (f, t)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Summary {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub name: String,
    pub runs: Vec<Metrics>,
    pub accuracy: Option<Summary>,
    pub precision: Option<Summary>,
    pub recall: Option<Summary>,
    pub f1: Option<Summary>,
    pub auroc: Option<Summary>,
    pub mean_roc: Vec<(f64, f64)>,
}

impl ModelEval {
    pub fn from_runs(name: &str, runs: Vec<Metrics>) -> ModelEval {
        let collect = |f: &dyn Fn(&Metrics) -> Option<f64>| -> Option<Summary> {
            let v: Vec<f64> = runs.iter().filter_map(f).collect();
            Summary::of(&v)
        };
        let curves: Vec<Vec<(f64, f64)>> = runs
            .iter()
            .filter(|m| !m.roc_curve.is_empty())
            .map(|m| m.roc_curve.clone())
            .collect();
        ModelEval {
            name: name.to_string(),
            accuracy: collect(&|m| Some(m.accuracy)),
            precision: collect(&|m| m.precision),
            recall: collect(&|m| m.recall),
            f1: collect(&|m| m.f1),
            auroc: collect(&|m| m.auroc),
            mean_roc: mean_roc(&curves, ROC_LATTICE_POINTS),
            runs,
        }
    }
}

/// Builds a predictor from training samples and a seed.
pub type ModelFactory<'a> = dyn Fn(&[LabeledSample], u64) -> Result<Box<dyn Predictor>> + Sync + 'a;

/// Repeat `n_repeats` times: shuffle, split `train_fraction` / rest, train,
/// and score the held-out part.
pub fn shuffled_eval(
    name: &str,
    factory: &ModelFactory<'_>,
    dataset: &[LabeledSample],
    n_repeats: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<ModelEval> {
    if dataset.len() < 4 {
        return Err(Error::Data("dataset too small to split".into()));
    }
    let runs = (0..n_repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let mut data = dataset.to_vec();
            data.sort_by_key(|s| s.id);
            data.shuffle(&mut rng);
            let n_train = ((data.len() as f64) * train_fraction).round() as usize;
            let n_train = n_train.clamp(1, data.len() - 1);
            let (train, test) = data.split_at(n_train);
            let model = factory(train, rng::derive(seed, 1000 + r as u64))?;
            let labels: Vec<u8> = test.iter().map(|s| s.label as u8).collect();
            let scores: Vec<f64> = test
                .iter()
                .map(|s| model.predict_proba(&s.features.model_input()))
                .collect();
            score_metrics(&labels, &scores)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelEval::from_runs(name, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRow {
    pub year: i32,
    pub updates: usize,
    pub accuracy: Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationStudyConfig {
    pub repeats: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AdaptationStudyConfig {
    fn default() -> Self {
        AdaptationStudyConfig {
            repeats: 10,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Stratified half/half split of a year's samples.
fn split_half(samples: &[LabeledSample], rng: &mut rng::Rng) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|s| s.id);
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = sorted.into_iter().partition(|s| s.label.is_positive());
    pos.shuffle(rng);
    neg.shuffle(rng);
    let (hp, hn) = (pos.len().div_ceil(2), neg.len().div_ceil(2));
    let support = pos[..hp].iter().chain(&neg[..hn]).copied().collect();
    let query = pos[hp..].iter().chain(&neg[hn..]).copied().collect();
    (support, query)
}

/// Overall accuracy on held-out query samples after `L` adaptation updates,
/// summarised over seeded repeats, per (year, L). `L = 0` scores the
/// unadapted meta model.
pub fn adaptation_study(
    state: &MetaState,
    tasks: &[YearTask],
    updates: &[usize],
    config: &AdaptationStudyConfig,
) -> Result<Vec<AdaptationRow>> {
    let mut rows = Vec::new();
    for task in tasks {
        if task.positives() < 2 || task.negatives() < 2 {
            continue;
        }
        let per_repeat: Vec<Vec<f64>> = (0..config.repeats)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng::stream(config.seed, (task.year as u64) << 16 | r as u64);
                let (support, query) = split_half(&task.samples, &mut rng);
                let q = state.standardizer.examples(&query);
                updates
                    .iter()
                    .map(|&l| {
                        if l == 0 {
                            return Ok(mlp::accuracy(&state.params.sizes, &state.params.theta, &q));
                        }
                        let cfg = AdaptConfig {
                            steps: l,
                            batch_size: config.batch_size,
                            seed: rng::derive(config.seed, r as u64),
                        };
                        let m = adapt(state, task.year, &support, &cfg)?;
                        Ok(mlp::accuracy(&m.params.sizes, &m.params.theta, &q))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, &l) in updates.iter().enumerate() {
            let acc: Vec<f64> = per_repeat.iter().map(|v| v[k]).collect();
            rows.push(AdaptationRow {
                year: task.year,
                updates: l,
                accuracy: Summary::of(&acc).expect("repeats > 0"),
            });
        }
    }
    Ok(rows)
}

pub fn adaptation_csv(rows: &[AdaptationRow]) -> String {
    let mut out = String::from("year,updates,mean,std,min,max,repeats\n");
    for r in rows {
        let a = &r.accuracy;
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.year, r.updates, a.mean, a.std, a.min, a.max, a.n);
    }
    out
}

pub fn roc_csv(models: &[ModelEval]) -> String {
    let mut out = String::from("model,run,fpr,tpr\n");
    for m in models {
        for (r, run) in m.runs.iter().enumerate() {
            for (f, t) in &run.roc_curve {
                let _ = writeln!(out, "{},{r},{f},{t}", m.name);
            }
        }
        for (f, t) in &m.mean_roc {
            let _ = writeln!(out, "{},mean,{f},{t}", m.name);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub repeats: usize,
    pub train_fraction: f64,
    pub overall: Vec<ModelEval>,
    /// Per-year models evaluated on their own held-out split.
    pub periodic: Vec<ModelEval>,
    pub adaptation: Vec<AdaptationRow>,
}
