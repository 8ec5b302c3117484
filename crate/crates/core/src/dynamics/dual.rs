use super::{conditional_risk, CoefficientSpec, LatticeProcess, Role, Tree};
use crate::error::{validation, Result, RiskError};
use serde::Serialize;

/// Tilted transition probabilities and the density process.
#[derive(Debug, Clone, Serialize)]
pub struct Reweighting {
    /// `(1 + mu sqrt(dt)) / 2` per node, steps `0..N`.
    pub p_up: Vec<Vec<f64>>,
    /// Tilted probability of each node, steps `0..=N`.
    pub node_mass: Vec<Vec<f64>>,
    /// Density against the reference node probabilities. On a path tree
    /// this is the multiplicative martingale; on a recombining lattice it
    /// is the density of the node marginals.
    pub gamma: LatticeProcess,
}

fn check_shape<T: Tree + ?Sized>(mu: &LatticeProcess, tree: &T) -> Result<()> {
    if mu.values.len() != tree.steps() || (0..tree.steps()).any(|k| mu.values[k].len() != tree.width(k)) {
        return validation("control must have one value per node on steps 0..N");
    }
    Ok(())
}

fn p_up(mu: f64, sq: f64, k: usize, i: usize) -> Result<f64> {
    let v = mu.abs() * sq;
    if !(v < 1.0) {
        return Err(RiskError::ControlTooLarge { step: k, node: i, value: v });
    }
    Ok(0.5 * (1.0 + mu * sq))
}

pub fn girsanov_reweight<T: Tree + ?Sized>(mu: &LatticeProcess, tree: &T) -> Result<Reweighting> {
    check_shape(mu, tree)?;
    let n = tree.steps();
    let sq = tree.dt().sqrt();
    let mut probs = Vec::with_capacity(n);
    let mut mass = vec![vec![1.0]];
    for k in 0..n {
        let row: Vec<f64> = (0..tree.width(k))
            .map(|i| p_up(mu.at(k, i), sq, k, i))
            .collect::<Result<_>>()?;
        let mut next = vec![0.0; tree.width(k + 1)];
        for (i, &p) in row.iter().enumerate() {
            let (d, u) = tree.children(k, i);
            next[u] += mass[k][i] * p;
            next[d] += mass[k][i] * (1.0 - p);
        }
        probs.push(row);
        mass.push(next);
    }
    let gamma = LatticeProcess::from_fn(Role::Gamma, tree, n + 1, |k, i| mass[k][i] / tree.prob(k, i));
    Ok(Reweighting {
        p_up: probs,
        node_mass: mass,
        gamma,
    })
}

/// `E_{Q^mu}[-xi - sum_k G(mu_k) dt]`, with `G` the conjugate of the
/// coefficient; a lower bound of `R^g_0(xi)`.
pub fn dual_bound<T: Tree + ?Sized>(coef: &CoefficientSpec, xi: &[f64], mu: &LatticeProcess, tree: &T) -> Result<f64> {
    coef.validate()?;
    check_shape(mu, tree)?;
    let n = tree.steps();
    if xi.len() != tree.width(n) {
        return validation("terminal must have one value per terminal node");
    }
    let dt = tree.dt();
    let sq = dt.sqrt();
    let mut v: Vec<f64> = xi.iter().map(|x| -x).collect();
    for k in (0..n).rev() {
        v = (0..tree.width(k))
            .map(|i| {
                let m = mu.at(k, i);
                let p = p_up(m, sq, k, i)?;
                let (d, u) = tree.children(k, i);
                Ok(p * v[u] + (1.0 - p) * v[d] - coef.polar(k, m) * dt)
            })
            .collect::<Result<_>>()?;
    }
    Ok(v[0])
}

/// `mu_bar` in the subdifferential of the coefficient at `Z` of `R^g(xi)`.
pub fn dual_optimal_control<T: Tree + ?Sized>(coef: &CoefficientSpec, xi: &[f64], tree: &T) -> Result<LatticeProcess> {
    let sol = conditional_risk(coef, xi, tree)?;
    Ok(LatticeProcess::from_fn(Role::Mu, tree, tree.steps(), |k, i| {
        coef.subgradient(k, sol.z.at(k, i))
    }))
}
