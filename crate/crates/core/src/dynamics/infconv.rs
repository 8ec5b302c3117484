use super::{bsde_solve_from, CoefficientSpec, Growth, LatticeProcess, Role, Tree, DEFAULT_TERMINAL_BOUND};
use crate::error::{validation, Result, RiskError};
use crate::kernel::min_at;
use serde::Serialize;

use CoefficientSpec as C;

const GOLDEN_ITERS: usize = 200;

/// `argmin_x a(z - x) + b(x)`: the share `x` of `z` carried by `b`.
pub fn split_argmin(a: &CoefficientSpec, b: &CoefficientSpec, k: usize, z: f64) -> Result<f64> {
    Ok(match (a, b) {
        (C::Quadratic { gamma: ga }, C::Quadratic { gamma: gb }) => gb / (ga + gb) * z,
        (C::Linear { k: ka }, C::Quadratic { gamma: gb }) => z.clamp(-ka * gb, ka * gb),
        (C::Quadratic { gamma: ga }, C::Linear { k: kb }) => z - z.clamp(-kb * ga, kb * ga),
        (C::Linear { k: ka }, C::Linear { k: kb }) => {
            if kb < ka {
                z
            } else {
                0.0
            }
        }
        (C::Grid { function: fa, .. }, C::Grid { function: fb, .. }) => match min_at(fa, fb, z) {
            Some((x, _)) => x,
            None => {
                return Err(RiskError::Domain(format!(
                    "z = {z} outside the domain of the inf-convolution at step {k}"
                )))
            }
        },
        _ => golden_split(a, b, k, z)?,
    })
}

fn golden_split(a: &CoefficientSpec, b: &CoefficientSpec, k: usize, z: f64) -> Result<f64> {
    let (ma, mb) = (a.minimizer(k)?, b.minimizer(k)?);
    if !(ma.is_finite() && mb.is_finite()) {
        return Err(RiskError::Capability(
            "inf-convolution of coefficients without finite minimizers".into(),
        ));
    }
    // the minimizer lies between the two partial minimizers, within both domains
    let (alo, ahi) = a.domain(k);
    let (blo, bhi) = b.domain(k);
    let (dl, du) = (blo.max(z - ahi), bhi.min(z - alo));
    if dl > du {
        return Err(RiskError::Domain(format!(
            "z = {z} outside the domain of the inf-convolution at step {k}"
        )));
    }
    let (l, u) = (mb.min(z - ma), mb.max(z - ma));
    let (mut lo, mut hi) = (l.clamp(dl, du), u.clamp(dl, du));
    let phi = |x: f64| a.eval(k, z - x) + b.eval(k, x);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut f1, mut f2) = (phi(x1), phi(x2));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo <= 1e-15 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = phi(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = phi(x2);
        }
    }
    let best = [lo, x1, x2, hi]
        .into_iter()
        .min_by(|&p, &q| phi(p).total_cmp(&phi(q)))
        .unwrap();
    Ok(best)
}

/// Checks `a_{0+}(d) + b_{0+}(-d) > 0` for `d = ±1` at every step.
fn check_feasible<T: Tree + ?Sized>(a: &CoefficientSpec, b: &CoefficientSpec, tree: &T) -> Result<()> {
    for k in 0..tree.steps() {
        for d in [1.0, -1.0] {
            let value = a.recession(k, d) + b.recession(k, -d);
            if !(value > 1e-12) {
                return Err(RiskError::Feasibility { direction: d, value });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicInfConv {
    /// `R^{A □ B}(xi)`.
    pub y: LatticeProcess,
    pub z: LatticeProcess,
    /// Share of `Z` carried by `B`.
    pub zhat_b: LatticeProcess,
    /// Optimal transfer at the terminal nodes.
    pub f_star: Vec<f64>,
    pub value: f64,
    /// `R^A_0(xi - F*)`.
    pub value_a: f64,
    /// `R^B_0(F*)`.
    pub value_b: f64,
    /// `value - value_a - value_b`.
    pub residual: f64,
    /// Largest disagreement of the forward transfer across merging paths.
    pub recombination_error: f64,
}

/// Solves the BSDE of `a □ b`, splits `Z` per node and builds the transfer
/// `F*_{k+1} = F*_k + b(Zhat) dt - Zhat dW` forward.
pub fn dynamic_inf_convolve<T: Tree + ?Sized>(
    a: &CoefficientSpec,
    b: &CoefficientSpec,
    xi: &[f64],
    tree: &T,
) -> Result<DynamicInfConv> {
    a.validate()?;
    b.validate()?;
    check_feasible(a, b, tree)?;
    let quadratic_pair = matches!((a, b), (C::Quadratic { .. }, C::Quadratic { .. }));
    if tree.recombining() && !quadratic_pair {
        return Err(RiskError::Capability(format!(
            "the optimal transfer is path-dependent for this pair; use a path tree with N <= {} or a quadratic pair",
            super::N_PATH_MAX
        )));
    }
    let n = tree.steps();
    if xi.len() != tree.width(n) || xi.iter().any(|v| !v.is_finite()) {
        return validation("terminal must be finite with one value per terminal node");
    }
    let sup = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if (a.growth() == Growth::H3 && b.growth() == Growth::H3) && sup > DEFAULT_TERMINAL_BOUND {
        return validation(format!(
            "quadratic-growth pair needs |terminal| <= {DEFAULT_TERMINAL_BOUND}, got {sup}"
        ));
    }
    let dt = tree.dt();
    let sq = dt.sqrt();

    let mut ys = vec![Vec::new(); n + 1];
    let mut zs = vec![Vec::new(); n];
    let mut xs = vec![Vec::new(); n];
    ys[n] = xi.iter().map(|v| -v).collect();
    for k in (0..n).rev() {
        let w = tree.width(k);
        let (mut yk, mut zk, mut xk) = (Vec::with_capacity(w), Vec::with_capacity(w), Vec::with_capacity(w));
        for i in 0..w {
            let (d, u) = tree.children(k, i);
            let (yd, yu) = (ys[k + 1][d], ys[k + 1][u]);
            let z = (yu - yd) / (2.0 * sq);
            let x = split_argmin(a, b, k, z)?;
            let g = a.eval(k, z - x) + b.eval(k, x);
            if !g.is_finite() {
                return Err(RiskError::Domain(format!(
                    "inf-convolution is {g} at z = {z} (step {k}, node {i})"
                )));
            }
            yk.push(0.5 * (yu + yd) + g * dt);
            zk.push(z);
            xk.push(x);
        }
        ys[k] = yk;
        zs[k] = zk;
        xs[k] = xk;
    }

    let mut f = vec![vec![0.0]];
    let mut recombination_error = 0.0f64;
    for k in 0..n {
        let mut next = vec![f64::NAN; tree.width(k + 1)];
        for i in 0..tree.width(k) {
            let x = xs[k][i];
            let drift = f[k][i] + b.eval(k, x) * dt;
            let (d, u) = tree.children(k, i);
            for (c, v) in [(u, drift - x * sq), (d, drift + x * sq)] {
                if next[c].is_nan() {
                    next[c] = v;
                } else {
                    recombination_error = recombination_error.max((next[c] - v).abs());
                }
            }
        }
        f.push(next);
    }
    let f_star = f.pop().unwrap();

    let resid_a: Vec<f64> = xi.iter().zip(&f_star).map(|(x, f)| -(x - f)).collect();
    let neg_f: Vec<f64> = f_star.iter().map(|v| -v).collect();
    let value_a = bsde_solve_from(a, tree, n, &resid_a, f64::INFINITY)?.root();
    let value_b = bsde_solve_from(b, tree, n, &neg_f, f64::INFINITY)?.root();
    let value = ys[0][0];
    Ok(DynamicInfConv {
        y: LatticeProcess { role: Role::Y, values: ys },
        z: LatticeProcess { role: Role::Z, values: zs },
        zhat_b: LatticeProcess { role: Role::Z, values: xs },
        f_star,
        value,
        value_a,
        value_b,
        residual: value - value_a - value_b,
        recombination_error,
    })
}
