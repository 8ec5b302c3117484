//! Box-constrained convex minimization: projected BFGS with Armijo
//! backtracking, then a Polyak subgradient phase for nonsmooth objectives.

use crate::error::{Result, RiskError};

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stationarity tolerance on the projected gradient, relative to `1 + |f|`.
    pub grad_tol: f64,
    /// Stagnation tolerance on the objective, relative to `1 + |f|`.
    pub value_tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: 10_000,
            grad_tol: 1e-11,
            value_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Norm of the projected gradient at `x`.
    pub grad_norm: f64,
    /// Decrease achieved over the last stretch of the subgradient phase.
    pub last_decrease: f64,
    pub stationary: bool,
    pub converged: bool,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn projected_grad(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` (value and a (sub)gradient) over the box from each start,
/// keeping the best result; earlier starts win ties.
pub fn minimize<F>(f: F, bounds: &[(f64, f64)], starts: &[Vec<f64>], opts: &MinimizeOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut best: Option<Minimum> = None;
    let mut total = 0;
    for s in starts {
        let mut res = minimize_from(&f, bounds, s, opts)?;
        total += res.iterations;
        res.iterations = total;
        let better = match &best {
            None => true,
            Some(b) => res.value < b.value - opts.value_tol * (1.0 + b.value.abs()),
        };
        if better {
            best = Some(res);
        } else if let Some(b) = best.as_mut() {
            b.iterations = total;
        }
    }
    best.ok_or_else(|| RiskError::Internal("minimize needs at least one start".into()))
}

fn minimize_from<F>(f: &F, bounds: &[(f64, f64)], start: &[f64], opts: &MinimizeOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = start.len();
    let mut x = start.to_vec();
    project(&mut x, bounds);
    let (mut fx, mut g) = f(&x)?;
    let mut iterations = 0;
    let mut h = identity(n);
    let mut stationary = false;
    let mut flat_steps = 0;

    while iterations < opts.max_iter {
        let pg = projected_grad(&x, &g, bounds);
        if norm(&pg) <= opts.grad_tol * (1.0 + fx.abs()) {
            stationary = true;
            break;
        }
        // variables pinned at a bound stay out of the quasi-Newton step
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= bounds[i].0 && g[i] > 0.0) || (x[i] >= bounds[i].1 && g[i] < 0.0)))
            .collect();
        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if free[i] {
                    -(0..n).filter(|&j| free[j]).map(|j| h[i][j] * pg[j]).sum::<f64>()
                } else {
                    0.0
                }
            })
            .collect();
        if dotp(&d, &pg) >= 0.0 {
            h = identity(n);
            d = pg.iter().map(|v| -v).collect();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xn, bounds);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dotp(&g, &step);
            let (fn_, gn) = f(&xn)?;
            if fn_ <= fx + 1e-4 * decrease && decrease < 0.0 {
                accepted = Some((xn, fn_, gn, step));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some((xn, fn_, gn, s)) = accepted else {
            break;
        };
        let y: Vec<f64> = (0..n).map(|i| if free[i] { gn[i] - g[i] } else { 0.0 }).collect();
        let sy = dotp(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let improvement = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        if improvement <= opts.value_tol * (1.0 + fx.abs()) {
            flat_steps += 1;
            if flat_steps >= 5 {
                break;
            }
        } else {
            flat_steps = 0;
        }
    }

    let grad_norm = norm(&projected_grad(&x, &g, bounds));
    stationary |= grad_norm <= opts.grad_tol * (1.0 + fx.abs());
    if stationary || iterations >= opts.max_iter {
        return Ok(Minimum {
            x,
            value: fx,
            iterations,
            grad_norm,
            last_decrease: 0.0,
            stationary,
            converged: stationary,
        });
    }
    polyak_phase(f, bounds, x, fx, g, iterations, opts)
}

/// Polyak steps toward an adaptively lowered target `f_best - delta`.
fn polyak_phase<F>(
    f: &F,
    bounds: &[(f64, f64)],
    x0: Vec<f64>,
    f0: f64,
    g0: Vec<f64>,
    mut iterations: usize,
    opts: &MinimizeOptions,
) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const WINDOW: usize = 500;
    let mut best_x = x0.clone();
    let mut best_f = f0;
    let mut x = x0;
    let mut g = g0;
    let mut fx = f0;
    let mut delta = (0.1 * norm(&g)).max(1e-6) * (1.0 + f0.abs()).min(1.0);
    let mut since_improve = 0;
    let mut window_start = f0;
    let mut last_decrease = f64::INFINITY;
    let mut steps = 0;
    while iterations < opts.max_iter {
        let pg = projected_grad(&x, &g, bounds);
        let gn2 = dotp(&pg, &pg);
        if gn2 == 0.0 {
            break;
        }
        let target = best_f - delta;
        let alpha = (fx - target) / gn2;
        let mut xn: Vec<f64> = x.iter().zip(&pg).map(|(a, b)| a - alpha * b).collect();
        project(&mut xn, bounds);
        let (fn_, gn) = f(&xn)?;
        iterations += 1;
        steps += 1;
        x = xn;
        fx = fn_;
        g = gn;
        if fx < best_f {
            best_f = fx;
            best_x = x.clone();
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= 20 {
                delta *= 0.5;
                since_improve = 0;
                x = best_x.clone();
                let (v, gb) = f(&x)?;
                fx = v;
                g = gb;
            }
        }
        if steps % WINDOW == 0 {
            last_decrease = window_start - best_f;
            window_start = best_f;
            if last_decrease <= opts.value_tol * (1.0 + best_f.abs()) {
                break;
            }
        }
        if delta <= opts.value_tol * (1.0 + best_f.abs()) {
            last_decrease = 0.0;
            break;
        }
    }
    let (v, gb) = f(&best_x)?;
    let grad_norm = norm(&projected_grad(&best_x, &gb, bounds));
    let converged = last_decrease <= 1e3 * opts.value_tol * (1.0 + v.abs());
    Ok(Minimum {
        x: best_x,
        value: v,
        iterations,
        grad_norm,
        last_decrease,
        stationary: false,
        converged,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| dotp(&h[i], y)).collect();
    let yhy = dotp(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((v, g))
        };
        let m = minimize(f, &[FREE, FREE], &[vec![-1.2, 1.0]], &MinimizeOptions::default()).unwrap();
        assert!(m.stationary);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pinned_coordinate_stays_at_its_bound() {
        let f = |x: &[f64]| {
            let u = x[1] - 0.9;
            let v = u * u + x[0] * x[0] + x[0] * (1.0 - 2.0 * u);
            Ok((v, vec![2.0 * x[0] + 1.0 - 2.0 * u, 2.0 * u - 2.0 * x[0]]))
        };
        let m = minimize(f, &[(0.0, f64::INFINITY), FREE], &[vec![0.0, 0.0]], &MinimizeOptions::default()).unwrap();
        assert!(m.stationary && m.iterations < 20, "{m:?}");
        assert!(m.x[0] == 0.0 && (m.x[1] - 0.9).abs() < 1e-10);
    }

    #[test]
    fn box_constrained_quadratic() {
        let f = |x: &[f64]| Ok(((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]));
        let m = minimize(f, &[(0.0, 1.0), (0.0, 1.0)], &[vec![0.5, 0.5]], &MinimizeOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-12 && m.x[1].abs() < 1e-12);
        assert!(m.converged);
    }

    #[test]
    fn nonsmooth_max_of_affine() {
        // f(x) = max(|x0 - 1|, |x1 + 2|) + 0.1 |x0|, minimum 0.1 at (1, -2)
        let f = |x: &[f64]| {
            let a = (x[0] - 1.0).abs();
            let b = (x[1] + 2.0).abs();
            let mut g = vec![0.1 * x[0].signum(), 0.0];
            if a >= b {
                g[0] += (x[0] - 1.0).signum();
            } else {
                g[1] += (x[1] + 2.0).signum();
            }
            Ok((a.max(b) + 0.1 * x[0].abs(), g))
        };
        let m = minimize(f, &[FREE, FREE], &[vec![0.0, 0.0]], &MinimizeOptions::default()).unwrap();
        assert!((m.value - 0.1).abs() < 1e-5, "{}", m.value);
    }
}
