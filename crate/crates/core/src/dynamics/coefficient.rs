use crate::error::{validation, Result, RiskError};
use crate::kernel::{polar_at, GridConvexFunction};
use serde::{Deserialize, Serialize};

/// Growth class of a coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Growth {
    /// Lipschitz in `z`.
    H1,
    /// Quadratic (or faster) growth; needs bounded terminal data.
    H3,
}

/// Convex BSDE coefficient depending on `z` (and, for cone restrictions, on
/// the step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// `z^2 / (2 gamma)`.
    Quadratic { gamma: f64 },
    /// `k |z|`.
    Linear { k: f64 },
    Grid {
        function: GridConvexFunction,
        #[serde(default)]
        non_centered: bool,
    },
    /// `min_{x in cone_k} base(z - x)`; one interval per step, or a single
    /// interval for all steps.
    RestrictedToCone {
        base: Box<CoefficientSpec>,
        cone: Vec<(f64, f64)>,
    },
}

use CoefficientSpec as C;

impl CoefficientSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            C::Quadratic { gamma } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return validation(format!("quadratic coefficient needs gamma > 0, got {gamma}"));
                }
            }
            C::Linear { k } => {
                if !(*k >= 0.0 && k.is_finite()) {
                    return validation(format!("linear coefficient needs k >= 0, got {k}"));
                }
            }
            C::Grid { function, non_centered } => {
                let g0 = function.eval(0.0);
                if !*non_centered && !(g0.abs() <= 1e-12) {
                    return Err(RiskError::Normalization(format!(
                        "grid coefficient has g(0) = {g0}; set non_centered to allow it"
                    )));
                }
            }
            C::RestrictedToCone { base, cone } => {
                base.validate()?;
                if cone.is_empty() {
                    return validation("cone restriction needs at least one interval");
                }
                for &(a, b) in cone {
                    if a.is_nan() || b.is_nan() || !(a <= 0.0 && 0.0 <= b) {
                        return validation(format!("cone interval [{a}, {b}] must contain 0"));
                    }
                }
                base.minimizer(0)?;
            }
        }
        Ok(())
    }

    pub fn growth(&self) -> Growth {
        match self {
            C::Quadratic { .. } => Growth::H3,
            C::Linear { .. } => Growth::H1,
            C::Grid { function, .. } => {
                let (a, b) = function.domain();
                if a.is_infinite() && b.is_infinite() {
                    Growth::H1
                } else {
                    Growth::H3
                }
            }
            C::RestrictedToCone { base, .. } => base.growth(),
        }
    }

    pub fn is_centered(&self) -> bool {
        self.eval(0, 0.0) == 0.0
    }

    /// Positively homogeneous coefficients give homogeneous risk measures.
    pub fn is_homogeneous(&self) -> bool {
        match self {
            C::Quadratic { .. } => false,
            C::Linear { .. } => true,
            C::Grid { function, .. } => {
                let rec = |z: f64| function.recession_at(z);
                function
                    .grid()
                    .iter()
                    .zip(function.values())
                    .all(|(&z, &v)| (v - rec(z)).abs() <= 1e-12 * (1.0 + v.abs()))
            }
            C::RestrictedToCone { base, cone } => {
                base.is_homogeneous() && cone.iter().all(|&(a, b)| (a == 0.0 || a.is_infinite()) && (b == 0.0 || b.is_infinite()))
            }
        }
    }

    fn cone_at(cone: &[(f64, f64)], k: usize) -> (f64, f64) {
        cone[k.min(cone.len() - 1)]
    }

    /// A minimizer of the coefficient in `z` (possibly infinite).
    pub(crate) fn minimizer(&self, k: usize) -> Result<f64> {
        Ok(match self {
            C::Quadratic { .. } | C::Linear { .. } => 0.0,
            C::Grid { function, .. } => {
                if function.right_recession_slope() < 0.0 {
                    f64::INFINITY
                } else if function.left_recession_slope() > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let (lo, hi) = function.finite_range();
                    let best = (lo..=hi)
                        .min_by(|&i, &j| function.values()[i].total_cmp(&function.values()[j]))
                        .unwrap();
                    function.grid()[best]
                }
            }
            C::RestrictedToCone { base, .. } => base.minimizer(k)?,
        })
    }

    /// Effective domain in `z`.
    pub fn domain(&self, k: usize) -> (f64, f64) {
        match self {
            C::Quadratic { .. } | C::Linear { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            C::Grid { function, .. } => function.domain(),
            C::RestrictedToCone { base, cone } => {
                let (lo, hi) = base.domain(k);
                let (a, b) = Self::cone_at(cone, k);
                (lo + a, hi + b)
            }
        }
    }

    /// Closest point to the base minimizer reachable from `z` by a cone
    /// move: `argmin_{y in z - cone} base(y)`.
    fn restricted_point(base: &CoefficientSpec, cone: (f64, f64), k: usize, z: f64) -> f64 {
        let m = base.minimizer(k).unwrap_or(0.0);
        let (lo, hi) = (z - cone.1, z - cone.0);
        m.clamp(lo, hi)
    }

    /// `g_k(z)`; `+inf` off-domain, `-inf` when a cone restriction of an
    /// unbounded-below coefficient is used.
    pub fn eval(&self, k: usize, z: f64) -> f64 {
        match self {
            C::Quadratic { gamma } => z * z / (2.0 * gamma),
            C::Linear { k: c } => c * z.abs(),
            C::Grid { function, .. } => function.eval(z),
            C::RestrictedToCone { base, cone } => {
                let y = Self::restricted_point(base, Self::cone_at(cone, k), k, z);
                if y.is_infinite() {
                    f64::NEG_INFINITY
                } else {
                    base.eval(k, y)
                }
            }
        }
    }

    /// Optimal hedge `x*` of a cone restriction at `z` (zero otherwise).
    pub fn hedge(&self, k: usize, z: f64) -> f64 {
        match self {
            C::RestrictedToCone { base, cone } => z - Self::restricted_point(base, Self::cone_at(cone, k), k, z),
            _ => 0.0,
        }
    }

    /// Minimal-norm subgradient at `z`.
    pub fn subgradient(&self, k: usize, z: f64) -> f64 {
        match self {
            C::Quadratic { gamma } => z / gamma,
            C::Linear { k: c } => {
                if z > 0.0 {
                    *c
                } else if z < 0.0 {
                    -c
                } else {
                    0.0
                }
            }
            C::Grid { function, .. } => match function.subdifferential(z) {
                Some((l, r)) => 0f64.clamp(l, r),
                None => f64::NAN,
            },
            C::RestrictedToCone { base, cone } => {
                let y = Self::restricted_point(base, Self::cone_at(cone, k), k, z);
                base.subgradient(k, y)
            }
        }
    }

    /// Conjugate `sup_z (mu z - g_k(z))`.
    pub fn polar(&self, k: usize, mu: f64) -> f64 {
        match self {
            C::Quadratic { gamma } => gamma * mu * mu / 2.0,
            C::Linear { k: c } => {
                if mu.abs() <= c + 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            C::Grid { function, .. } => polar_at(function, -mu),
            C::RestrictedToCone { base, cone } => {
                let (a, b) = Self::cone_at(cone, k);
                let support = if mu > 0.0 {
                    b * mu
                } else if mu < 0.0 {
                    a * mu
                } else {
                    0.0
                };
                base.polar(k, mu) + support
            }
        }
    }

    /// Recession function at `d = ±1`.
    pub fn recession(&self, k: usize, d: f64) -> f64 {
        match self {
            C::Quadratic { .. } => f64::INFINITY,
            C::Linear { k: c } => c * d.abs(),
            C::Grid { function, .. } => function.recession_at(d),
            C::RestrictedToCone { base, cone } => {
                let (a, b) = Self::cone_at(cone, k);
                let rc = (
                    if a.is_infinite() { f64::NEG_INFINITY } else { 0.0 },
                    if b.is_infinite() { f64::INFINITY } else { 0.0 },
                );
                // inf of the homogeneous base recession over d - rc(cone)
                homogeneous_inf(base.recession(k, 1.0), base.recession(k, -1.0), d - rc.1, d - rc.0)
            }
        }
    }
}

/// Infimum over `[lo, hi]` of the homogeneous function with values `rp` at
/// `1` and `rm` at `-1`.
fn homogeneous_inf(rp: f64, rm: f64, lo: f64, hi: f64) -> f64 {
    let h = |y: f64| {
        if y > 0.0 {
            y * rp
        } else if y < 0.0 {
            -y * rm
        } else {
            0.0
        }
    };
    if (hi == f64::INFINITY && rp < 0.0) || (lo == f64::NEG_INFINITY && rm < 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut best = f64::INFINITY;
    if lo <= 0.0 && 0.0 <= hi {
        best = 0.0;
    }
    for y in [lo, hi] {
        if y.is_finite() {
            best = best.min(h(y));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{symmetric_grid, Extension};

    #[test]
    fn quadratic_polar_and_subgradient() {
        let g = C::Quadratic { gamma: 2.0 };
        assert_eq!(g.eval(0, 2.0), 1.0);
        assert_eq!(g.subgradient(0, 2.0), 1.0);
        assert_eq!(g.polar(0, 1.0), 1.0);
        // Fenchel equality at the subgradient
        let z = 0.7;
        let mu = g.subgradient(0, z);
        assert!((g.polar(0, mu) - (mu * z - g.eval(0, z))).abs() < 1e-15);
        assert_eq!(g.growth(), Growth::H3);
        assert!(!g.is_homogeneous());
    }

    #[test]
    fn cone_restriction_projects() {
        let g = C::RestrictedToCone {
            base: Box::new(C::Quadratic { gamma: 1.0 }),
            cone: vec![(0.0, 0.5)],
        };
        g.validate().unwrap();
        assert_eq!(g.eval(0, 0.3), 0.0);
        assert_eq!(g.hedge(0, 0.3), 0.3);
        assert_eq!(g.hedge(0, 2.0), 0.5);
        assert!((g.eval(0, 2.0) - 1.5 * 1.5 / 2.0).abs() < 1e-15);
        assert_eq!(g.eval(0, -1.0), 0.5);
        assert_eq!(g.recession(0, 1.0), f64::INFINITY);
        let unbounded = C::RestrictedToCone {
            base: Box::new(C::Linear { k: 1.0 }),
            cone: vec![(0.0, f64::INFINITY)],
        };
        assert_eq!(unbounded.recession(0, 1.0), 0.0);
        assert_eq!(unbounded.recession(0, -1.0), 1.0);
    }

    #[test]
    fn grid_centering_enforced() {
        let f = GridConvexFunction::from_fn(symmetric_grid(3.0, 61), Extension::Affine, |z| z * z + 0.5).unwrap();
        let g = C::Grid { function: f.clone(), non_centered: false };
        assert!(matches!(g.validate(), Err(RiskError::Normalization(_))));
        let g = C::Grid { function: f, non_centered: true };
        g.validate().unwrap();
        assert!(!g.is_centered());
    }

    #[test]
    fn homogeneous_grid_detected() {
        let f = GridConvexFunction::from_fn(symmetric_grid(2.0, 41), Extension::Affine, |z| 2.0 * z.abs()).unwrap();
        assert!(C::Grid { function: f, non_centered: false }.is_homogeneous());
    }
}
