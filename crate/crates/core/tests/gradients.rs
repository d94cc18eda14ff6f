use lsm_core::meta::{inner_update, task_gradient, task_objective};
use lsm_core::mlp::{grad_and_hvp, loss, loss_and_grad, Example, MlpParams, DEFAULT_ARCHITECTURE};
use lsm_core::rng;
use rand::Rng;

fn examples(seed: u64, n: usize, d: usize) -> Vec<Example> {
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| Example {
            x: (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            y: rng.gen_range(0..2),
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            let t = p[i];
            p[i] = t + h;
            let up = f(&p);
            p[i] = t - h;
            let down = f(&p);
            p[i] = t;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let p = MlpParams::init(&DEFAULT_ARCHITECTURE, seed);
        let batch = examples(seed + 50, 8, 15);
        let (_, g) = loss_and_grad(&p.sizes, &p.theta, &batch);
        let fd = central_diff(|t| loss(&p.sizes, t, &batch), &p.theta, 1e-5);
        let e = rel_err(&g, &fd);
        assert!(e < 1e-4, "seed {seed}: relative error {e}");
    }
}

#[test]
fn hessian_vector_product_matches_gradient_differences() {
    let sizes = [6, 5, 2];
    for seed in 0..5 {
        let p = MlpParams::init(&sizes, seed);
        let batch = examples(seed, 10, 6);
        let mut rng = rng::seeded(seed + 9);
        let v: Vec<f64> = (0..p.theta.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (g, hv) = grad_and_hvp(&sizes, &p.theta, &batch, &v);
        let (_, g0) = loss_and_grad(&sizes, &p.theta, &batch);
        assert!(rel_err(&g, &g0) < 1e-12);
        let h = 1e-5;
        let shifted = |s: f64| -> Vec<f64> {
            let t: Vec<f64> = p.theta.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            loss_and_grad(&sizes, &t, &batch).1
        };
        let (gp, gm) = (shifted(h), shifted(-h));
        let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        assert!(rel_err(&hv, &fd) < 1e-5);
    }
}

#[test]
fn second_order_meta_gradient_matches_finite_differences() {
    let sizes = [15, 4, 2];
    for seed in 0..20 {
        let p = MlpParams::init(&sizes, seed);
        let support = examples(seed + 100, 8, 15);
        let query = examples(seed + 200, 8, 15);
        let alpha = 0.05;
        let g = task_gradient(&sizes, &p.theta, alpha, &support, &query, 3, 4, true);
        let fd = central_diff(|t| task_objective(&sizes, t, alpha, &support, &query, 3, 4), &p.theta, 1e-5);
        let e = rel_err(&g.d_theta, &fd);
        assert!(e < 1e-4, "seed {seed}: theta error {e}");
        let h = 1e-6;
        let fa = (task_objective(&sizes, &p.theta, alpha + h, &support, &query, 3, 4)
            - task_objective(&sizes, &p.theta, alpha - h, &support, &query, 3, 4))
            / (2.0 * h);
        let ea = (g.d_alpha - fa).abs() / g.d_alpha.abs().max(fa.abs()).max(1e-12);
        assert!(ea < 1e-4, "seed {seed}: alpha error {ea}");
        let q = task_objective(&sizes, &p.theta, alpha, &support, &query, 3, 4);
        assert!((g.query_loss - q).abs() < 1e-12);
    }
}

#[test]
fn first_order_gradient_drops_curvature_terms() {
    let sizes = [15, 4, 2];
    let p = MlpParams::init(&sizes, 2);
    let support = examples(1, 8, 15);
    let query = examples(2, 8, 15);
    let g1 = task_gradient(&sizes, &p.theta, 0.05, &support, &query, 3, 8, false);
    let adapted = inner_update(&p, 0.05, &support, 3, 8);
    let (_, gq) = loss_and_grad(&sizes, &adapted.theta, &query);
    assert_eq!(g1.d_theta, gq);
}

#[test]
fn one_inner_step_is_plain_gradient_descent() {
    let p = MlpParams::init(&DEFAULT_ARCHITECTURE, 11);
    let support = examples(12, 16, 15);
    let alpha = 0.01;
    let (_, g) = loss_and_grad(&p.sizes, &p.theta, &support);
    let q = inner_update(&p, alpha, &support, 1, 16);
    for ((a, t), gi) in q.theta.iter().zip(&p.theta).zip(&g) {
        assert!((a - (t - alpha * gi)).abs() < 1e-12);
    }
}

#[test]
fn small_inner_steps_reduce_support_loss() {
    for seed in 0..10 {
        let p = MlpParams::init(&DEFAULT_ARCHITECTURE, seed);
        let support = examples(seed + 7, 16, 15);
        let before = loss(&p.sizes, &p.theta, &support);
        let q = inner_update(&p, 1e-3, &support, 1, 16);
        assert!(loss(&q.sizes, &q.theta, &support) < before);
    }
}
