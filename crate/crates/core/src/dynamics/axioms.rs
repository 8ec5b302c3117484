use super::{bsde_solve_from, CoefficientSpec, PathTree, Tree};
use crate::error::Result;
use crate::risk::AxiomResult;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const STEPS: usize = 6;
const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct DynamicAxiomReport {
    pub p1_convexity: AxiomResult,
    pub p2_monotonicity: AxiomResult,
    pub p3_translation: AxiomResult,
    pub p4_time_consistency: AxiomResult,
    pub p5_arbitrage_free: AxiomResult,
    pub p6_conditional_invariance: AxiomResult,
    pub p7_homogeneity: AxiomResult,
    pub centered: bool,
    pub homogeneous: bool,
}

/// All node values of `R^g(xi)`, steps `0..=N`.
fn risk(coef: &CoefficientSpec, tree: &PathTree, xi: &[f64]) -> Result<Vec<Vec<f64>>> {
    let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
    Ok(bsde_solve_from(coef, tree, tree.steps(), &neg, f64::INFINITY)?.y.values)
}

/// Walk value at step `h` along terminal path `i`.
fn walk_at(tree: &PathTree, h: usize, i: usize) -> f64 {
    tree.brownian(h, i >> (tree.steps() - h))
}

/// Smooth, path-dependent payoff of moderate slope.
fn random_payoff(rng: &mut ChaCha8Rng, tree: &PathTree) -> Vec<f64> {
    let n = tree.steps();
    let (a, b, c, d) = (
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let e: f64 = rng.gen_range(-0.3..0.3);
    (0..tree.width(n))
        .map(|i| a * (b * tree.brownian(n, i) + c).tanh() + d + e * walk_at(tree, n / 2, i).tanh())
        .collect()
}

fn positive_bump(rng: &mut ChaCha8Rng, tree: &PathTree) -> Vec<f64> {
    let n = tree.steps();
    let (u, b, c) = (rng.gen_range(0.1..0.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    (0..tree.width(n))
        .map(|i| u * 0.5 * (1.0 + (b * tree.brownian(n, i) + c).tanh()))
        .collect()
}

fn max_node_diff(x: &[Vec<f64>], y: &[Vec<f64>], f: impl Fn(f64, f64) -> f64) -> f64 {
    x.iter()
        .flatten()
        .zip(y.iter().flatten())
        .map(|(&a, &b)| f(a, b))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn scale(x: &[Vec<f64>]) -> f64 {
    1.0 + x.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Randomized check of the dynamic axioms on a path tree of six steps.
pub fn axiom_check_dynamic(coef: &CoefficientSpec, trials: usize, seed: u64) -> Result<DynamicAxiomReport> {
    coef.validate()?;
    let tree = PathTree::new(STEPS, 1.0)?;
    let n = tree.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p1 = AxiomResult::new();
    let mut p2 = AxiomResult::new();
    let mut p3 = AxiomResult::new();
    let mut p4 = AxiomResult::new();
    let mut p5 = AxiomResult::new();
    let mut p6 = AxiomResult::new();
    let mut p7 = AxiomResult::new();
    let zero_risk = risk(coef, &tree, &vec![0.0; tree.width(n)])?;

    for _ in 0..trials {
        let x = random_payoff(&mut rng, &tree);
        let y = random_payoff(&mut rng, &tree);
        let rx = risk(coef, &tree, &x)?;
        let ry = risk(coef, &tree, &y)?;
        let s = scale(&rx) + scale(&ry);

        let t: f64 = rng.gen_range(0.0..1.0);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let rm = risk(coef, &tree, &mix)?;
        let bound: Vec<Vec<f64>> = rx
            .iter()
            .zip(&ry)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| t * u + (1.0 - t) * v).collect())
            .collect();
        let v = max_node_diff(&rm, &bound, |a, b| a - b);
        p1.record(v, TOL * s, || vec![x.clone(), y.clone(), vec![t]]);

        let bump = positive_bump(&mut rng, &tree);
        let up: Vec<f64> = x.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let ru = risk(coef, &tree, &up)?;
        let v = max_node_diff(&ru, &rx, |a, b| a - b);
        p2.record(v, TOL * s, || vec![x.clone(), up.clone()]);

        let m: f64 = rng.gen_range(-2.0..2.0);
        let shifted: Vec<f64> = x.iter().map(|a| a + m).collect();
        let rs = risk(coef, &tree, &shifted)?;
        let v = max_node_diff(&rs, &rx, |a, b| (a - (b - m)).abs());
        p3.record(v, TOL * (s + m.abs()), || vec![x.clone(), vec![m]]);

        let k = rng.gen_range(1..n);
        let part = bsde_solve_from(coef, &tree, k, &rx[k], f64::INFINITY)?;
        let v = max_node_diff(&part.y.values, &rx[..=k], |a, b| (a - b).abs());
        p4.record(v, TOL * s, || vec![x.clone(), vec![k as f64]]);

        let rb = risk(coef, &tree, &bump)?;
        let gap = rb[0][0] - zero_risk[0][0];
        let v = if gap < 0.0 { 0.0 } else { gap.max(f64::MIN_POSITIVE) };
        p5.record(v, 0.0, || vec![bump.clone()]);

        let h = rng.gen_range(1..n);
        let set: Vec<bool> = (0..tree.width(h)).map(|_| rng.gen_bool(0.5)).collect();
        let local: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| if set[i >> (n - h)] { v } else { 0.0 })
            .collect();
        let rl = risk(coef, &tree, &local)?;
        let v = (0..tree.width(h))
            .map(|j| {
                let expect = if set[j] { rx[h][j] } else { 0.0 };
                (rl[h][j] - expect).abs()
            })
            .fold(0.0, f64::max);
        p6.record(v, TOL * s, || vec![local.clone()]);

        let lambda: f64 = rng.gen_range(0.1..3.0);
        let scaled: Vec<f64> = x.iter().map(|a| lambda * a).collect();
        let rl = risk(coef, &tree, &scaled)?;
        let v = max_node_diff(&rl, &rx, |a, b| (a - lambda * b).abs());
        p7.record(v, TOL * lambda * s, || vec![x.clone(), vec![lambda]]);
    }
    Ok(DynamicAxiomReport {
        p1_convexity: p1,
        p2_monotonicity: p2,
        p3_translation: p3,
        p4_time_consistency: p4,
        p5_arbitrage_free: p5,
        p6_conditional_invariance: p6,
        p7_homogeneity: p7,
        centered: coef.is_centered(),
        homogeneous: coef.is_homogeneous(),
    })
}
