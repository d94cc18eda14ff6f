//! Two-loop meta-learning over the MLP and few-shot adaptation.
//!
//! Inner loop: `θ_i' = θ − α ∇L_support(θ)` repeated for a few steps.
//! Outer loop: minimise `Σ w_i L_query(θ_i')` over a meta-batch with
//! respect to the shared initialisation θ and (optionally) the inner
//! learning rate α = softplus(ρ).
//!
//! The meta-gradient is exact: the backward pass through each inner step
//! applies `v ← v − α H v` with Hessian-vector products from
//! [`grad_and_hvp`]. The first-order variant drops the Hessian term.

use rand::seq::{index::sample as sample_indices, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{class_counts, LabeledSample};
use crate::mlp::{grad_and_hvp, loss_and_grad, Example, MlpParams, Standardizer, DEFAULT_ARCHITECTURE};
use crate::rng;
use crate::tasks::{MetaTask, TaskPool};

pub const META_SCHEMA_VERSION: u32 = 1;

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OuterOptimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub architecture: Vec<usize>,
    pub iterations: usize,
    pub inner_steps: usize,
    pub inner_batch: usize,
    /// Subtasks per outer step.
    pub meta_batch: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub learn_inner_lr: bool,
    pub second_order: bool,
    pub optimizer: OuterOptimizer,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            architecture: DEFAULT_ARCHITECTURE.to_vec(),
            iterations: 3000,
            inner_steps: 5,
            inner_batch: 16,
            meta_batch: 16,
            inner_lr: 0.01,
            outer_lr: 0.001,
            learn_inner_lr: true,
            second_order: true,
            optimizer: OuterOptimizer::Sgd,
            seed: 0,
        }
    }
}

/// Meta-learned initialisation plus everything needed to adapt it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub version: u32,
    pub params: MlpParams,
    /// Unconstrained inner learning rate; α = softplus(inner_lr_raw).
    pub inner_lr_raw: f64,
    pub outer_lr: f64,
    /// Weight of each training subtask in the meta objective.
    pub task_weights: Vec<f64>,
    pub standardizer: Standardizer,
    /// Meta objective per outer iteration.
    pub loss_trace: Vec<f64>,
    pub config: MetaConfig,
}

impl MetaState {
    /// Untrained state: Glorot initialisation and the configured α.
    pub fn fresh(config: &MetaConfig, standardizer: Standardizer) -> Result<MetaState> {
        if config.architecture.len() < 2 || *config.architecture.last().unwrap() != 2 {
            return Err(Error::Config("architecture must end in 2 output classes".into()));
        }
        if config.architecture[0] != standardizer.mean.len() {
            return Err(Error::Config("architecture input width differs from the data".into()));
        }
        if config.inner_lr.is_nan() || config.inner_lr <= 0.0 {
            return Err(Error::Config("inner learning rate must be positive".into()));
        }
        Ok(MetaState {
            version: META_SCHEMA_VERSION,
            params: MlpParams::init(&config.architecture, rng::derive(config.seed, 0x1417)),
            inner_lr_raw: inverse_softplus(config.inner_lr),
            outer_lr: config.outer_lr,
            task_weights: Vec::new(),
            standardizer,
            loss_trace: Vec::new(),
            config: config.clone(),
        })
    }

    pub fn inner_lr(&self) -> f64 {
        softplus(self.inner_lr_raw)
    }
}

/// Run `steps` plain gradient steps `θ ← θ − α g` cycling through
/// consecutive mini-batches of `support`.
pub fn inner_update(params: &MlpParams, alpha: f64, support: &[Example], steps: usize, batch_size: usize) -> MlpParams {
    let mut theta = params.theta.clone();
    let batches: Vec<&[Example]> = support.chunks(batch_size.max(1)).collect();
    for k in 0..steps {
        let (_, g) = loss_and_grad(&params.sizes, &theta, batches[k % batches.len()]);
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= alpha * gi;
        }
    }
    MlpParams {
        sizes: params.sizes.clone(),
        theta,
    }
}

/// Query loss after adapting to the support set. This is the per-task meta
/// objective as a plain function of (θ, α).
pub fn task_objective(
    sizes: &[usize],
    theta: &[f64],
    alpha: f64,
    support: &[Example],
    query: &[Example],
    steps: usize,
    batch_size: usize,
) -> f64 {
    let p = MlpParams {
        sizes: sizes.to_vec(),
        theta: theta.to_vec(),
    };
    let adapted = inner_update(&p, alpha, support, steps, batch_size);
    crate::mlp::loss(sizes, &adapted.theta, query)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGradient {
    pub query_loss: f64,
    pub d_theta: Vec<f64>,
    pub d_alpha: f64,
}

/// Gradient of [`task_objective`] with respect to θ and α.
#[allow(clippy::too_many_arguments)]
pub fn task_gradient(
    sizes: &[usize],
    theta: &[f64],
    alpha: f64,
    support: &[Example],
    query: &[Example],
    steps: usize,
    batch_size: usize,
    second_order: bool,
) -> TaskGradient {
    let batches: Vec<&[Example]> = support.chunks(batch_size.max(1)).collect();
    let mut path = Vec::with_capacity(steps);
    let mut cur = theta.to_vec();
    let mut grads = Vec::with_capacity(steps);
    for k in 0..steps {
        let (_, g) = loss_and_grad(sizes, &cur, batches[k % batches.len()]);
        let next: Vec<f64> = cur.iter().zip(&g).map(|(t, gi)| t - alpha * gi).collect();
        path.push(std::mem::replace(&mut cur, next));
        grads.push(g);
    }
    let (query_loss, mut v) = loss_and_grad(sizes, &cur, query);
    let mut d_alpha = 0.0;
    for k in (0..steps).rev() {
        d_alpha -= grads[k].iter().zip(&v).map(|(g, vi)| g * vi).sum::<f64>();
        if second_order {
            let (_, hv) = grad_and_hvp(sizes, &path[k], batches[k % batches.len()], &v);
            for (vi, h) in v.iter_mut().zip(&hv) {
                *vi -= alpha * h;
            }
        }
    }
    TaskGradient {
        query_loss,
        d_theta: v,
        d_alpha,
    }
}

struct PreparedTask {
    support: Vec<Example>,
    query: Vec<Example>,
}

#[derive(Default)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        if self.m.is_empty() {
            self.m = vec![0.0; x.len()];
            self.v = vec![0.0; x.len()];
        }
        self.t += 1;
        let (c1, c2) = (1.0 - B1.powi(self.t), 1.0 - B2.powi(self.t));
        for i in 0..x.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Meta objective `Σ w_i L_i` for a set of (weight, query loss) pairs.
pub fn weighted_meta_loss(weights: &[f64], query_losses: &[f64]) -> f64 {
    weights.iter().zip(query_losses).map(|(w, l)| w * l).sum()
}

/// Meta-train an initialisation on the pool's training subtasks.
pub fn meta_train(pool: &TaskPool, config: &MetaConfig) -> Result<MetaState> {
    if pool.train.is_empty() {
        return Err(Error::Data("task pool has no training subtasks".into()));
    }
    let all: Vec<LabeledSample> = pool
        .train
        .iter()
        .flat_map(|t| t.support.iter().chain(&t.query).copied())
        .collect();
    let standardizer = Standardizer::fit_samples(&all)?;
    let mut state = MetaState::fresh(config, standardizer)?;
    state.task_weights = vec![1.0; pool.train.len()];
    meta_train_from(state, &pool.train, config)
}

/// Continue meta-training an existing state on `tasks`.
pub fn meta_train_from(mut state: MetaState, tasks: &[MetaTask], config: &MetaConfig) -> Result<MetaState> {
    if state.task_weights.len() != tasks.len() {
        state.task_weights = vec![1.0; tasks.len()];
    }
    let prepared: Vec<PreparedTask> = tasks
        .iter()
        .map(|t| PreparedTask {
            support: state.standardizer.examples(&t.support),
            query: state.standardizer.examples(&t.query),
        })
        .collect();
    let sizes = state.params.sizes.clone();
    let mut rng = rng::stream(config.seed, 0x4d41);
    let mut adam_theta = Adam::default();
    let mut adam_rho = Adam::default();
    let mb = config.meta_batch.clamp(1, prepared.len());

    for it in 0..config.iterations {
        let mut picked = sample_indices(&mut rng, prepared.len(), mb).into_vec();
        picked.sort_unstable();
        let alpha = state.inner_lr();
        let theta = &state.params.theta;
        let grads: Vec<TaskGradient> = picked
            .par_iter()
            .map(|&i| {
                let t = &prepared[i];
                task_gradient(
                    &sizes,
                    theta,
                    alpha,
                    &t.support,
                    &t.query,
                    config.inner_steps,
                    config.inner_batch,
                    config.second_order,
                )
            })
            .collect();

        let mut d_theta = vec![0.0; theta.len()];
        let mut d_alpha = 0.0;
        let mut meta_loss = 0.0;
        for (&i, g) in picked.iter().zip(&grads) {
            let w = state.task_weights[i];
            meta_loss += w * g.query_loss;
            d_alpha += w * g.d_alpha;
            for (d, gi) in d_theta.iter_mut().zip(&g.d_theta) {
                *d += w * gi;
            }
        }
        if !meta_loss.is_finite() || d_theta.iter().any(|v| !v.is_finite()) || !d_alpha.is_finite() {
            return Err(Error::Divergence(format!(
                "meta objective became non-finite at iteration {it} (alpha = {alpha})"
            )));
        }
        state.loss_trace.push(meta_loss);

        let d_rho = d_alpha * sigmoid(state.inner_lr_raw);
        match config.optimizer {
            OuterOptimizer::Sgd => {
                for (t, d) in state.params.theta.iter_mut().zip(&d_theta) {
                    *t -= config.outer_lr * d;
                }
                if config.learn_inner_lr {
                    state.inner_lr_raw -= config.outer_lr * d_rho;
                }
            }
            OuterOptimizer::Adam => {
                adam_theta.step(&mut state.params.theta, &d_theta, config.outer_lr);
                if config.learn_inner_lr {
                    let mut r = [state.inner_lr_raw];
                    adam_rho.step(&mut r, &[d_rho], config.outer_lr);
                    state.inner_lr_raw = r[0];
                }
            }
        }
        if !state.params.is_finite() || !state.inner_lr_raw.is_finite() {
            return Err(Error::Divergence(format!("parameters became non-finite at iteration {it}")));
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Passes over the task's samples (gradient updates L).
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            steps: 5,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// A per-year predictor adapted from a meta state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedModel {
    pub version: u32,
    pub params: MlpParams,
    pub standardizer: Standardizer,
    pub year: i32,
    pub n_updates: usize,
    /// Mini-batch gradient steps actually applied.
    pub micro_updates: usize,
    pub inner_lr: f64,
}

impl AdaptedModel {
    /// Probability of landslide for a model-input feature row.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.params.class_probs(&self.standardizer.apply(x))[1]
    }
}

/// Adapt the meta initialisation to one year's samples: `steps` passes over
/// all samples in shuffled mini-batches at the meta-learned rate α.
pub fn adapt(state: &MetaState, year: i32, samples: &[LabeledSample], config: &AdaptConfig) -> Result<AdaptedModel> {
    let (pos, neg) = class_counts(samples);
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "year {year}: adaptation needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    let mut ordered: Vec<LabeledSample> = samples.to_vec();
    ordered.sort_by_key(|s| s.id);
    let examples = state.standardizer.examples(&ordered);
    let alpha = state.inner_lr();
    let sizes = &state.params.sizes;
    let mut theta = state.params.theta.clone();
    let mut rng = rng::stream(config.seed, year as u64);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut micro = 0;
    let bs = config.batch_size.max(1);
    for _ in 0..config.steps {
        order.shuffle(&mut rng);
        for chunk in order.chunks(bs) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (_, g) = loss_and_grad(sizes, &theta, &batch);
            for (t, gi) in theta.iter_mut().zip(&g) {
                *t -= alpha * gi;
            }
            micro += 1;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("year {year}: adaptation produced non-finite weights")));
    }
    Ok(AdaptedModel {
        version: META_SCHEMA_VERSION,
        params: MlpParams {
            sizes: sizes.clone(),
            theta,
        },
        standardizer: state.standardizer.clone(),
        year,
        n_updates: config.steps,
        micro_updates: micro,
        inner_lr: alpha,
    })
}
