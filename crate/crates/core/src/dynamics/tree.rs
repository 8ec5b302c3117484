use crate::error::{validation, Result};
use serde::Serialize;

/// Largest step count of a [`PathTree`] (`2^16` terminal paths).
pub const N_PATH_MAX: usize = 16;

/// Discrete filtration of a symmetric random walk with increments `±sqrt(dt)`.
pub trait Tree {
    fn steps(&self) -> usize;
    fn horizon(&self) -> f64;
    fn dt(&self) -> f64 {
        self.horizon() / self.steps() as f64
    }
    /// Number of nodes at step `k`.
    fn width(&self, k: usize) -> usize;
    /// `(down, up)` children at step `k + 1` of node `i` at step `k`.
    fn children(&self, k: usize, i: usize) -> (usize, usize);
    /// Value of the walk at a node.
    fn brownian(&self, k: usize, i: usize) -> f64;
    /// Reference probability of reaching a node.
    fn prob(&self, k: usize, i: usize) -> f64;
    /// Whether distinct paths share nodes.
    fn recombining(&self) -> bool;

    fn terminal_brownian(&self) -> Vec<f64> {
        let n = self.steps();
        (0..self.width(n)).map(|i| self.brownian(n, i)).collect()
    }

    fn terminal_probs(&self) -> Vec<f64> {
        let n = self.steps();
        (0..self.width(n)).map(|i| self.prob(n, i)).collect()
    }
}

fn check_horizon(steps: usize, horizon: f64) -> Result<()> {
    if steps == 0 {
        return validation("step count must be positive");
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return validation(format!("horizon must be positive, got {horizon}"));
    }
    Ok(())
}

/// Recombining binomial lattice; node `(k, j)` has `j` up-moves.
#[derive(Debug, Clone, Serialize)]
pub struct Lattice {
    steps: usize,
    horizon: f64,
    #[serde(skip)]
    weights: Vec<Vec<f64>>,
}

impl Lattice {
    pub const MAX_STEPS: usize = 5000;

    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        check_horizon(steps, horizon)?;
        if steps > Self::MAX_STEPS {
            return validation(format!("lattice supports at most {} steps", Self::MAX_STEPS));
        }
        let mut weights = vec![vec![1.0]];
        for k in 1..=steps {
            let prev = &weights[k - 1];
            let row: Vec<f64> = (0..=k)
                .map(|j| {
                    let a = if j > 0 { prev[j - 1] } else { 0.0 };
                    let b = if j < k { prev[j] } else { 0.0 };
                    0.5 * (a + b)
                })
                .collect();
            weights.push(row);
        }
        Ok(Lattice { steps, horizon, weights })
    }
}

impl Tree for Lattice {
    fn steps(&self) -> usize {
        self.steps
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn width(&self, k: usize) -> usize {
        k + 1
    }
    fn children(&self, _k: usize, j: usize) -> (usize, usize) {
        (j, j + 1)
    }
    fn brownian(&self, k: usize, j: usize) -> f64 {
        (2.0 * j as f64 - k as f64) * self.dt().sqrt()
    }
    fn prob(&self, k: usize, j: usize) -> f64 {
        self.weights[k][j]
    }
    fn recombining(&self) -> bool {
        true
    }
}

/// Non-recombining tree of all paths; node `i` at step `k` encodes the path
/// in its bits (most recent move in bit 0, `1` = up).
#[derive(Debug, Clone, Serialize)]
pub struct PathTree {
    steps: usize,
    horizon: f64,
}

impl PathTree {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        check_horizon(steps, horizon)?;
        if steps > N_PATH_MAX {
            return validation(format!("path tree supports at most {N_PATH_MAX} steps, got {steps}"));
        }
        Ok(PathTree { steps, horizon })
    }
}

impl Tree for PathTree {
    fn steps(&self) -> usize {
        self.steps
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn width(&self, k: usize) -> usize {
        1 << k
    }
    fn children(&self, _k: usize, i: usize) -> (usize, usize) {
        (2 * i, 2 * i + 1)
    }
    fn brownian(&self, k: usize, i: usize) -> f64 {
        (2.0 * i.count_ones() as f64 - k as f64) * self.dt().sqrt()
    }
    fn prob(&self, k: usize, _i: usize) -> f64 {
        0.5f64.powi(k as i32)
    }
    fn recombining(&self) -> bool {
        false
    }
}
