use super::{uniform_grid, Extension, GridConvexFunction};
use crate::error::{validation, Result, RiskError};

/// Polar function `G(mu) = sup_z (-mu z - f(z))` sampled on `dual_grid`.
///
/// The supremum runs over the piecewise-linear extension of `f`, so `G` is
/// `+inf` wherever `-mu` lies outside the range of recession slopes of an
/// affinely extended `f`. Each dual point is resolved by a monotone argmax
/// sweep, linear in `f.len() + dual_grid.len()`.
pub fn legendre_transform(f: &GridConvexFunction, dual_grid: &[f64]) -> Result<GridConvexFunction> {
    if dual_grid.is_empty() || dual_grid.windows(2).any(|w| w[1] <= w[0]) {
        return validation("dual grid must be nonempty and strictly increasing");
    }
    let (lo, hi) = f.finite_range();
    let z = f.grid();
    let v = f.values();
    let s_left = f.left_recession_slope();
    let s_right = f.right_recession_slope();
    let h = |i: usize, mu: f64| -mu * z[i] - v[i];

    let mut out = Vec::with_capacity(dual_grid.len());
    let mut p = hi;
    for &mu in dual_grid {
        let slope = -mu;
        let eps = 1e-12 * (1.0 + slope.abs());
        if slope < s_left - eps || slope > s_right + eps {
            out.push(f64::INFINITY);
            continue;
        }
        while p > lo && h(p - 1, mu) >= h(p, mu) {
            p -= 1;
        }
        out.push(h(p, mu));
    }
    let extension = if f.domain().0.is_infinite() && f.domain().1.is_infinite() {
        Extension::PlusInfinity
    } else {
        Extension::Affine
    };
    GridConvexFunction::new(dual_grid.to_vec(), out, extension).map_err(|e| match e {
        RiskError::Domain(_) => RiskError::Domain(
            "polar is +inf on the whole dual grid; widen the dual grid".to_string(),
        ),
        other => other,
    })
}

/// Polar `sup_z (-mu z - f(z))` at a single point, `+inf` off-domain.
pub fn polar_at(f: &GridConvexFunction, mu: f64) -> f64 {
    let slope = -mu;
    let eps = 1e-12 * (1.0 + slope.abs());
    if slope < f.left_recession_slope() - eps || slope > f.right_recession_slope() + eps {
        return f64::INFINITY;
    }
    let (lo, hi) = f.finite_range();
    (lo..=hi)
        .map(|i| -mu * f.grid()[i] - f.values()[i])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Dual grid with `n` points covering `-mu` over the cell slopes of `f`.
pub fn slope_dual_grid(f: &GridConvexFunction, n: usize) -> Vec<f64> {
    let (lo, hi) = f.finite_range();
    let z = f.grid();
    let v = f.values();
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    for i in lo..hi {
        let s = (v[i + 1] - v[i]) / (z[i + 1] - z[i]);
        s_min = s_min.min(s);
        s_max = s_max.max(s);
    }
    if !s_min.is_finite() {
        // single finite point: any slope is a subgradient
        s_min = -1.0;
        s_max = 1.0;
    }
    if s_max - s_min <= 1e-12 * (1.0 + s_max.abs()) {
        let centre = -s_min;
        let n = n | 1;
        let half = (n / 2) as f64;
        return (0..n).map(|i| centre + (i as f64 - half) / half).collect();
    }
    uniform_grid(-s_max, -s_min, n.max(2))
}

/// `max |f - f**|` over interior grid points, using a dual grid of the same
/// size spanning the slopes of `f`.
pub fn biconjugate_check(f: &GridConvexFunction) -> Result<f64> {
    if f.values().iter().any(|v| !v.is_finite()) {
        return validation("biconjugate check needs f finite on its whole grid");
    }
    let dual = slope_dual_grid(f, f.len());
    let polar = legendre_transform(f, &dual)?;
    let bi = legendre_transform(&polar, f.grid())?;
    let n = f.len();
    let gap = (1..n.saturating_sub(1))
        .map(|i| (f.values()[i] - bi.values()[i]).abs())
        .fold(0.0_f64, f64::max);
    Ok(gap)
}
