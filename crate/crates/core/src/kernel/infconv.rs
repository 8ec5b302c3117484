use super::{Extension, GridConvexFunction};
use crate::error::{Result, RiskError};

/// Result of `fa □ fb` on a grid, with one minimizer per grid point.
#[derive(Debug, Clone)]
pub struct InfConvolution {
    pub value: GridConvexFunction,
    /// `x*(z)` with `h(z) = fa(z - x*) + fb(x*)`; `NaN` off-domain.
    pub argmin: Vec<f64>,
}

/// Checks `fa_{0+}(z) + fb_{0+}(-z) > 0` for `z = ±1` (both recession
/// functions are positively homogeneous, so this covers every `z != 0`).
pub fn check_recession_feasibility(fa: &GridConvexFunction, fb: &GridConvexFunction) -> Result<()> {
    for direction in [1.0, -1.0] {
        let value = fa.recession_at(direction) + fb.recession_at(-direction);
        if !(value > 1e-12) {
            return Err(RiskError::Feasibility { direction, value });
        }
    }
    Ok(())
}

/// `h(z) = min_x fa(z - x) + fb(x)` on the grid of `fa`.
pub fn inf_convolve(fa: &GridConvexFunction, fb: &GridConvexFunction) -> Result<InfConvolution> {
    inf_convolve_on(fa, fb, fa.grid())
}

/// `fa □ fb` on a caller-supplied grid.
pub fn inf_convolve_on(
    fa: &GridConvexFunction,
    fb: &GridConvexFunction,
    grid: &[f64],
) -> Result<InfConvolution> {
    check_recession_feasibility(fa, fb)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut argmin = Vec::with_capacity(grid.len());
    for &z in grid {
        match min_at(fa, fb, z) {
            Some((x, v)) => {
                values.push(v);
                argmin.push(x);
            }
            None => {
                values.push(f64::INFINITY);
                argmin.push(f64::NAN);
            }
        }
    }
    let (a0, a1) = fa.domain();
    let (b0, b1) = fb.domain();
    let extension = if (a0 + b0).is_infinite() && (a1 + b1).is_infinite() {
        Extension::Affine
    } else {
        Extension::PlusInfinity
    };
    let value = GridConvexFunction::new(grid.to_vec(), values, extension)?;
    Ok(InfConvolution { value, argmin })
}

/// Minimizes the convex piecewise-linear `x -> fa(z - x) + fb(x)` over its
/// breakpoints; ties resolve to the smallest minimizer.
pub(crate) fn min_at(fa: &GridConvexFunction, fb: &GridConvexFunction, z: f64) -> Option<(f64, f64)> {
    let (alo, ahi) = fa.finite_range();
    let (blo, bhi) = fb.finite_range();
    let mut cands: Vec<(f64, f64)> = Vec::with_capacity(ahi - alo + bhi - blo + 2);

    let mut hint = ahi;
    for j in blo..=bhi {
        let x = fb.grid()[j];
        let va = fa.eval_near(z - x, &mut hint);
        if va.is_finite() {
            cands.push((x, va + fb.values()[j]));
        }
    }
    let mut hint = bhi;
    for i in alo..=ahi {
        let x = z - fa.grid()[i];
        let vb = fb.eval_near(x, &mut hint);
        if vb.is_finite() {
            cands.push((x, fa.values()[i] + vb));
        }
    }
    let best = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let tol = 1e-12 * (1.0 + best.abs());
    let x = cands
        .iter()
        .filter(|c| c.1 <= best + tol)
        .map(|c| c.0)
        .fold(f64::INFINITY, f64::min);
    Some((x, best))
}
