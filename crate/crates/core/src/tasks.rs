//! Yearly tasks, the meta-task pool and model routing.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{class_counts, LabeledSample};
use crate::rng;

pub const DEFAULT_RICH_THRESHOLD: usize = 50;
pub const DEFAULT_SHOT_SIZE: usize = 16;

/// Labelled samples of one calendar year with a disjoint support/query split
/// (indices into `samples`). Training losses are cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearTask {
    pub year: i32,
    pub samples: Vec<LabeledSample>,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
}

impl YearTask {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        class_counts(&self.samples).0
    }

    pub fn negatives(&self) -> usize {
        class_counts(&self.samples).1
    }

    pub fn support_samples(&self) -> Vec<LabeledSample> {
        self.support.iter().map(|&i| self.samples[i]).collect()
    }

    pub fn query_samples(&self) -> Vec<LabeledSample> {
        self.query.iter().map(|&i| self.samples[i]).collect()
    }
}

/// Group samples by year over `[year_min, year_max]`, one task per year
/// (possibly empty). Each task keeps equal positives and negatives, dropping
/// a random surplus, and is split half/half into support and query.
pub fn build_year_tasks(samples: &[LabeledSample], span: (i32, i32), seed: u64) -> Vec<YearTask> {
    let (lo, hi) = span;
    let mut by_year: BTreeMap<i32, Vec<LabeledSample>> = (lo..=hi).map(|y| (y, Vec::new())).collect();
    let mut outside = 0usize;
    for s in samples {
        match by_year.get_mut(&s.year) {
            Some(v) => v.push(*s),
            None => outside += 1,
        }
    }
    if outside > 0 {
        log::warn!("{outside} samples fall outside the study span {lo}-{hi} and were ignored");
    }

    by_year
        .into_iter()
        .map(|(year, mut samples)| {
            let mut rng = rng::stream(seed, year as u64);
            // Canonical order first so the result does not depend on input order.
            samples.sort_by_key(|s| s.id);
            let (mut pos, mut neg): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.label.is_positive());
            let keep = pos.len().min(neg.len());
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            pos.truncate(keep);
            neg.truncate(keep);
            let mut kept: Vec<LabeledSample> = pos.into_iter().chain(neg).collect();
            kept.sort_by_key(|s| s.id);

            let mut order: Vec<usize> = (0..kept.len()).collect();
            order.shuffle(&mut rng);
            let half = kept.len().div_ceil(2);
            let mut support = order[..half].to_vec();
            let mut query = order[half..].to_vec();
            support.sort_unstable();
            query.sort_unstable();
            YearTask {
                year,
                samples: kept,
                support,
                query,
            }
        })
        .collect()
}

/// One meta-learning subtask: a support set for the inner loop and a query
/// set for the outer objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTask {
    pub year: i32,
    pub support: Vec<LabeledSample>,
    pub query: Vec<LabeledSample>,
}

impl MetaTask {
    pub fn len(&self) -> usize {
        self.support.len() + self.query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPool {
    pub train: Vec<MetaTask>,
    pub test: Vec<MetaTask>,
    pub shot_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaPoolConfig {
    pub rich_threshold: usize,
    pub shot_size: usize,
    /// Also carve training subtasks out of sample-poor years.
    pub include_scarce_years: bool,
}

impl Default for MetaPoolConfig {
    fn default() -> Self {
        MetaPoolConfig {
            rich_threshold: DEFAULT_RICH_THRESHOLD,
            shot_size: DEFAULT_SHOT_SIZE,
            include_scarce_years: false,
        }
    }
}

fn carve_subtasks(task: &YearTask, shot: usize, seed: u64) -> Vec<MetaTask> {
    let mut rng = rng::stream(seed, 0x5eed_0000 + task.year as u64);
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = task.samples.iter().copied().partition(|s| s.label.is_positive());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let n_sub = pos.len().min(neg.len()) / shot;
    let h = shot / 2;
    (0..n_sub)
        .map(|k| {
            let p = &pos[k * shot..(k + 1) * shot];
            let n = &neg[k * shot..(k + 1) * shot];
            MetaTask {
                year: task.year,
                support: p[..h].iter().chain(&n[..shot - h]).copied().collect(),
                query: p[h..].iter().chain(&n[shot - h..]).copied().collect(),
            }
        })
        .collect()
}

/// Partition every year with more than `rich_threshold` positives into
/// disjoint subtasks of `shot_size` positives plus `shot_size` negatives,
/// half of each subtask in support and half in query, then split subtasks
/// 3:1 into train and test pools. Remainders are dropped.
pub fn build_meta_pool(year_tasks: &[YearTask], config: &MetaPoolConfig, seed: u64) -> Result<TaskPool> {
    let shot = config.shot_size;
    if shot < 2 {
        return Err(Error::Config(format!("shot_size must be >= 2, got {shot}")));
    }
    let mut subtasks = Vec::new();
    let mut scarce = Vec::new();
    for t in year_tasks {
        if t.positives() > config.rich_threshold {
            subtasks.extend(carve_subtasks(t, shot, seed));
        } else if config.include_scarce_years {
            scarce.extend(carve_subtasks(t, shot, seed));
        }
    }
    if subtasks.is_empty() {
        return Err(Error::Data(format!(
            "no year has more than {} landslide samples; meta-learning needs at least one",
            config.rich_threshold
        )));
    }
    let mut rng = rng::stream(seed, 0x9001);
    subtasks.shuffle(&mut rng);
    let n_train = ((subtasks.len() as f64) * 0.75).round() as usize;
    let n_train = n_train.clamp(1, subtasks.len());
    let test = subtasks.split_off(n_train);
    let mut train = subtasks;
    train.extend(scarce);
    Ok(TaskPool {
        train,
        test,
        shot_size: shot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Forest,
    FewShot,
}

/// Forest when the year has at least `rich_threshold` positives, few-shot
/// adaptation otherwise; `None` for a year without samples.
pub fn route_model(task: &YearTask, rich_threshold: usize) -> Option<Route> {
    if task.is_empty() {
        return None;
    }
    Some(if task.positives() >= rich_threshold {
        Route::Forest
    } else {
        Route::FewShot
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskManifest {
    pub year: i32,
    pub support_ids: Vec<usize>,
    pub query_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub shot_size: usize,
    pub train: Vec<SubtaskManifest>,
    pub test: Vec<SubtaskManifest>,
}

impl From<&TaskPool> for PoolManifest {
    fn from(pool: &TaskPool) -> Self {
        let m = |t: &MetaTask| SubtaskManifest {
            year: t.year,
            support_ids: t.support.iter().map(|s| s.id).collect(),
            query_ids: t.query.iter().map(|s| s.id).collect(),
        };
        PoolManifest {
            shot_size: pool.shot_size,
            train: pool.train.iter().map(m).collect(),
            test: pool.test.iter().map(m).collect(),
        }
    }
}
