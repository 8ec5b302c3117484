//! g-conditional risk measures on binomial trees.
//!
//! The backward scheme is the explicit one:
//! `Z = (Y_up - Y_down) / (2 sqrt(dt))`, `Y = (Y_up + Y_down) / 2 + g(Z) dt`.
//! `R^g_t(xi)` is the solution with terminal value `-xi`.

mod axioms;
mod coefficient;
mod dual;
mod infconv;
mod payoff;
mod tree;

pub use axioms::{axiom_check_dynamic, DynamicAxiomReport};
pub use coefficient::{CoefficientSpec, Growth};
pub use dual::{dual_bound, dual_optimal_control, girsanov_reweight, Reweighting};
pub use infconv::{dynamic_inf_convolve, split_argmin, DynamicInfConv};
pub use payoff::PayoffExpr;
pub use tree::{Lattice, PathTree, Tree, N_PATH_MAX};

use crate::error::{validation, Result, RiskError};
use serde::Serialize;
use std::io::Write;

/// Default bound on `|terminal|` for quadratic-growth coefficients.
pub const DEFAULT_TERMINAL_BOUND: f64 = 10.0;

/// Tolerance of discrete dual equality, `5 dt (1 + |xi|_inf)`.
pub fn tol_disc(dt: f64, sup_norm: f64) -> f64 {
    5.0 * dt * (1.0 + sup_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Y,
    Z,
    Mu,
    Gamma,
    Theta,
    Payoff,
}

/// Adapted process: `values[k][i]` at node `i` of step `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeProcess {
    pub role: Role,
    pub values: Vec<Vec<f64>>,
}

impl LatticeProcess {
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.values[k][i]
    }

    pub fn root(&self) -> f64 {
        self.values[0][0]
    }

    /// Nodes over the first `steps` steps (`0..steps`).
    pub fn zeros<T: Tree + ?Sized>(role: Role, tree: &T, steps: usize) -> Self {
        LatticeProcess {
            role,
            values: (0..steps).map(|k| vec![0.0; tree.width(k)]).collect(),
        }
    }

    pub fn from_fn<T: Tree + ?Sized>(role: Role, tree: &T, steps: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        LatticeProcess {
            role,
            values: (0..steps).map(|k| (0..tree.width(k)).map(|i| f(k, i)).collect()).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BsdeSolution {
    /// Steps `0..=end`.
    pub y: LatticeProcess,
    /// Steps `0..end`.
    pub z: LatticeProcess,
}

impl BsdeSolution {
    pub fn root(&self) -> f64 {
        self.y.root()
    }
}

fn check_terminal<T: Tree + ?Sized>(coef: &CoefficientSpec, tree: &T, step: usize, terminal: &[f64], bound: f64) -> Result<()> {
    if terminal.len() != tree.width(step) {
        return validation(format!(
            "terminal has {} values, step {step} has {} nodes",
            terminal.len(),
            tree.width(step)
        ));
    }
    if terminal.iter().any(|v| !v.is_finite()) {
        return validation("terminal values must be finite");
    }
    if coef.growth() == Growth::H3 {
        let sup = terminal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > bound {
            return validation(format!(
                "quadratic-growth coefficient needs |terminal| <= {bound}, got {sup}"
            ));
        }
    }
    Ok(())
}

/// Backward recursion from `terminal` at step `end` down to the root.
pub fn bsde_solve_from<T: Tree + ?Sized>(
    coef: &CoefficientSpec,
    tree: &T,
    end: usize,
    terminal: &[f64],
    bound: f64,
) -> Result<BsdeSolution> {
    coef.validate()?;
    if end > tree.steps() {
        return validation(format!("step {end} beyond tree depth {}", tree.steps()));
    }
    check_terminal(coef, tree, end, terminal, bound)?;
    let dt = tree.dt();
    let sq = dt.sqrt();
    let mut ys = vec![Vec::new(); end + 1];
    let mut zs = vec![Vec::new(); end];
    ys[end] = terminal.to_vec();
    for k in (0..end).rev() {
        let w = tree.width(k);
        let mut yk = Vec::with_capacity(w);
        let mut zk = Vec::with_capacity(w);
        for i in 0..w {
            let (d, u) = tree.children(k, i);
            let (yd, yu) = (ys[k + 1][d], ys[k + 1][u]);
            let z = (yu - yd) / (2.0 * sq);
            let g = coef.eval(k, z);
            if !g.is_finite() {
                return Err(RiskError::Domain(format!(
                    "coefficient is {g} at z = {z} (step {k}, node {i})"
                )));
            }
            yk.push(0.5 * (yu + yd) + g * dt);
            zk.push(z);
        }
        ys[k] = yk;
        zs[k] = zk;
    }
    Ok(BsdeSolution {
        y: LatticeProcess { role: Role::Y, values: ys },
        z: LatticeProcess { role: Role::Z, values: zs },
    })
}

/// Solution of the BSDE with terminal value `terminal` at the last step.
pub fn bsde_solve<T: Tree + ?Sized>(coef: &CoefficientSpec, terminal: &[f64], tree: &T) -> Result<BsdeSolution> {
    bsde_solve_from(coef, tree, tree.steps(), terminal, DEFAULT_TERMINAL_BOUND)
}

/// `R^g_t(xi)`: the BSDE solution with terminal value `-xi`.
pub fn conditional_risk<T: Tree + ?Sized>(coef: &CoefficientSpec, xi: &[f64], tree: &T) -> Result<BsdeSolution> {
    let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
    bsde_solve(coef, &neg, tree)
}

/// `gamma ln E[exp(-xi / gamma) | node]` by exact backward recursion.
pub fn entropic_exact<T: Tree + ?Sized>(gamma: f64, xi: &[f64], tree: &T) -> Result<LatticeProcess> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return validation(format!("entropic tolerance must be positive, got {gamma}"));
    }
    let n = tree.steps();
    if xi.len() != tree.width(n) || xi.iter().any(|v| !v.is_finite()) {
        return validation("terminal must be finite with one value per terminal node");
    }
    let mut logs = vec![Vec::new(); n + 1];
    logs[n] = xi.iter().map(|v| -v / gamma).collect();
    for k in (0..n).rev() {
        logs[k] = (0..tree.width(k))
            .map(|i| {
                let (d, u) = tree.children(k, i);
                let (a, b) = (logs[k + 1][d], logs[k + 1][u]);
                let m = a.max(b);
                m + (0.5 * ((a - m).exp() + (b - m).exp())).ln()
            })
            .collect();
    }
    let values = logs
        .into_iter()
        .map(|row| row.into_iter().map(|l| gamma * l).collect())
        .collect();
    Ok(LatticeProcess { role: Role::Y, values })
}

/// Optimal hedge under a cone restriction.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeHedge {
    pub y: LatticeProcess,
    pub z: LatticeProcess,
    pub theta: LatticeProcess,
}

/// Hedged risk `R^{g^m}(xi)` with `g^m = min_{x in cone} g(. - x)`, and the
/// hedge `theta* = Z - argmin` per node.
pub fn lattice_hedge<T: Tree + ?Sized>(coef: &CoefficientSpec, xi: &[f64], cone: &[(f64, f64)], tree: &T) -> Result<LatticeHedge> {
    let restricted = CoefficientSpec::RestrictedToCone {
        base: Box::new(coef.clone()),
        cone: cone.to_vec(),
    };
    let sol = conditional_risk(&restricted, xi, tree)?;
    let theta = LatticeProcess::from_fn(Role::Theta, tree, tree.steps(), |k, i| restricted.hedge(k, sol.z.at(k, i)));
    Ok(LatticeHedge {
        y: sol.y,
        z: sol.z,
        theta,
    })
}

/// Writes `step,node,w,y,z[,mu_bar][,gamma]` rows; `z` and `mu_bar` are
/// empty at the last step.
pub fn write_csv<T: Tree + ?Sized, W: Write>(
    tree: &T,
    sol: &BsdeSolution,
    mu: Option<&LatticeProcess>,
    gamma: Option<&LatticeProcess>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| RiskError::Internal(format!("csv write failed: {e}"));
    let mut header = vec!["step", "node", "w", "y", "z"];
    if mu.is_some() {
        header.push("mu_bar");
    }
    if gamma.is_some() {
        header.push("gamma");
    }
    w.write_record(&header).map_err(io)?;
    let last = sol.y.values.len() - 1;
    for k in 0..=last {
        for i in 0..tree.width(k) {
            let opt = |p: Option<&LatticeProcess>| -> Option<String> {
                p.map(|p| p.values.get(k).and_then(|r| r.get(i)).map(|v| v.to_string()).unwrap_or_default())
            };
            let mut rec = vec![
                k.to_string(),
                i.to_string(),
                tree.brownian(k, i).to_string(),
                sol.y.at(k, i).to_string(),
                if k < last { sol.z.at(k, i).to_string() } else { String::new() },
            ];
            rec.extend(opt(mu));
            rec.extend(opt(gamma));
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush().map_err(|e| RiskError::Internal(format!("csv flush failed: {e}")))?;
    Ok(())
}
