use super::{value_and_measure, RiskMeasureSpec};
use crate::error::Result;
use crate::market::ProbSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const ORDER_TOL: f64 = 1e-9;
const CASH_TOL: f64 = 1e-12;
const HOMOGENEITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct AxiomResult {
    pub passed: bool,
    pub max_violation: f64,
    pub trials: usize,
    /// Positions of the worst violation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Vec<Vec<f64>>>,
}

impl AxiomResult {
    pub(crate) fn new() -> Self {
        AxiomResult {
            passed: true,
            max_violation: 0.0,
            trials: 0,
            counterexample: None,
        }
    }

    pub(crate) fn record(&mut self, violation: f64, tol: f64, witness: impl FnOnce() -> Vec<Vec<f64>>) {
        self.trials += 1;
        if violation > self.max_violation {
            self.max_violation = violation;
            if violation > tol {
                self.counterexample = Some(witness());
            }
        }
        if violation > tol {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub convexity: AxiomResult,
    pub monotonicity: AxiomResult,
    pub cash_invariance: AxiomResult,
    pub homogeneity: AxiomResult,
}

/// Pairs of disjoint small-probability losses whose mix breaks quantile
/// based measures: `-1_A`, `-1_B` with `P(A), P(B)` small, `P(A u B)` large.
fn crafted_pairs(space: &ProbSpace) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = space.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut a = vec![0.0; n];
                let mut b = vec![0.0; n];
                a[i] = -1.0;
                b[j] = -1.0;
                out.push((a, b));
            }
        }
    }
    out.truncate(64);
    out
}

fn random_position(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()
}

/// Randomized check of convexity, monotonicity, cash invariance and
/// positive homogeneity, plus crafted convexity counterexample candidates.
pub fn axiom_check(spec: &RiskMeasureSpec, space: &ProbSpace, trials: usize, seed: u64) -> Result<AxiomReport> {
    spec.validate()?;
    let n = space.len();
    let rho = |x: &[f64]| -> Result<f64> { Ok(value_and_measure(spec, space, x)?.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut convexity = AxiomResult::new();
    let mut monotonicity = AxiomResult::new();
    let mut cash = AxiomResult::new();
    let mut homogeneity = AxiomResult::new();

    for (a, b) in crafted_pairs(space) {
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * u + 0.5 * v).collect();
        let viol = rho(&mix)? - 0.5 * rho(&a)? - 0.5 * rho(&b)?;
        convexity.record(viol, ORDER_TOL, || vec![a.clone(), b.clone()]);
    }

    for _ in 0..trials {
        let x = random_position(&mut rng, n);
        let y = random_position(&mut rng, n);
        let t: f64 = rng.gen_range(0.0..1.0);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| t * u + (1.0 - t) * v).collect();
        let (rx, ry) = (rho(&x)?, rho(&y)?);
        let viol = rho(&mix)? - t * rx - (1.0 - t) * ry;
        convexity.record(viol, ORDER_TOL * (1.0 + rx.abs() + ry.abs()), || vec![x.clone(), y.clone()]);

        let up: Vec<f64> = x.iter().map(|v| v + rng.gen_range(0.0..2.0)).collect();
        let viol = rho(&up)? - rx;
        monotonicity.record(viol, ORDER_TOL * (1.0 + rx.abs()), || vec![x.clone(), up.clone()]);

        let m: f64 = rng.gen_range(-3.0..3.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + m).collect();
        let viol = (rho(&shifted)? - (rx - m)).abs();
        cash.record(viol, CASH_TOL, || vec![x.clone(), vec![m]]);

        let s: f64 = rng.gen_range(0.1..4.0);
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let viol = (rho(&scaled)? - s * rx).abs();
        homogeneity.record(viol, HOMOGENEITY_TOL * (1.0 + s * rx.abs()), || vec![x.clone(), vec![s]]);
    }
    Ok(AxiomReport {
        convexity,
        monotonicity,
        cash_invariance: cash,
        homogeneity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::S;

    #[test]
    fn var_fails_convexity_on_crafted_pair() {
        let s = ProbSpace::uniform(4);
        let r = axiom_check(&S::VaR { eps: 0.25 }, &s, 50, 1).unwrap();
        assert!(!r.convexity.passed);
        assert!(r.convexity.max_violation >= 0.5 - 1e-12);
        assert!(r.cash_invariance.passed && r.monotonicity.passed && r.homogeneity.passed);
    }

    #[test]
    fn entropic_is_convex_not_coherent() {
        let s = ProbSpace::from_probs(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let r = axiom_check(&S::entropic(1.3), &s, 200, 3).unwrap();
        assert!(r.convexity.passed && r.monotonicity.passed && r.cash_invariance.passed);
        assert!(!r.homogeneity.passed);
    }

    #[test]
    fn worst_case_passes_all() {
        let s = ProbSpace::uniform(5);
        let r = axiom_check(&S::WorstCase, &s, 200, 5).unwrap();
        assert!(r.convexity.passed && r.monotonicity.passed && r.cash_invariance.passed && r.homogeneity.passed);
    }
}
