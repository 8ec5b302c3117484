use super::infconv::inf_convolve_on;
use super::{Extension, GridConvexFunction};
use crate::error::{validation, Result};

/// Moreau–Yosida envelope `f □ (k/2)|.|^2` on the grid of `f`.
///
/// The quadratic kernel is used in closed form, so the envelope is exact for
/// the piecewise-linear `f` (each cell contributes a clamped prox step).
pub fn moreau_yosida(f: &GridConvexFunction, k: f64) -> Result<GridConvexFunction> {
    if !(k > 0.0 && k.is_finite()) {
        return validation(format!("regularization constant must be positive, got {k}"));
    }
    let (lo, hi) = f.finite_range();
    let x = f.grid();
    let v = f.values();
    let s_left = f.left_recession_slope();
    let s_right = f.right_recession_slope();
    let values = x
        .iter()
        .map(|&z| {
            let piece = |xi: f64, vi: f64, s: f64, a: f64, b: f64| {
                let xs = (z - s / k).clamp(a, b);
                vi + s * (xs - xi) + 0.5 * k * (z - xs) * (z - xs)
            };
            let mut best = if lo == hi {
                v[lo] + 0.5 * k * (z - x[lo]) * (z - x[lo])
            } else {
                f64::INFINITY
            };
            for i in lo..hi {
                let s = (v[i + 1] - v[i]) / (x[i + 1] - x[i]);
                best = best.min(piece(x[i], v[i], s, x[i], x[i + 1]));
            }
            if s_left.is_finite() {
                best = best.min(piece(x[0], v[0], s_left, f64::NEG_INFINITY, x[0]));
            }
            if s_right.is_finite() {
                let n = x.len() - 1;
                best = best.min(piece(x[n], v[n], s_right, x[n], f64::INFINITY));
            }
            best
        })
        .collect();
    GridConvexFunction::new(x.to_vec(), values, Extension::Affine)
}

/// Lipschitz regularization `f □ k|.|` on the grid of `f`.
pub fn lipschitz_regularize(f: &GridConvexFunction, k: f64) -> Result<GridConvexFunction> {
    if !(k > 0.0 && k.is_finite()) {
        return validation(format!("regularization constant must be positive, got {k}"));
    }
    let kernel = GridConvexFunction::new(vec![-1.0, 0.0, 1.0], vec![k, 0.0, k], Extension::Affine)?;
    let res = inf_convolve_on(f, &kernel, f.grid())?;
    GridConvexFunction::new(f.grid().to_vec(), res.value.values().to_vec(), Extension::Affine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::symmetric_grid;

    fn huber(z: f64) -> f64 {
        if z.abs() <= 1.0 {
            0.5 * z * z
        } else {
            z.abs() - 0.5
        }
    }

    #[test]
    fn point_indicator_gives_quadratic() {
        let ind = GridConvexFunction::indicator(symmetric_grid(2.0, 41), 0.0, 0.0).unwrap();
        let my = moreau_yosida(&ind, 3.0).unwrap();
        for (z, v) in my.grid().iter().zip(my.values()) {
            assert!((v - 1.5 * z * z).abs() < 1e-12);
        }
    }

    #[test]
    fn abs_envelope_is_huber() {
        let f = GridConvexFunction::from_fn(symmetric_grid(5.0, 2001), Extension::Affine, f64::abs).unwrap();
        let my = moreau_yosida(&f, 1.0).unwrap();
        for (z, v) in my.grid().iter().zip(my.values()) {
            // brute-force oracle over a fine x grid
            if (z * 7.0).fract() == 0.0 {
                let brute = (0..=200_000)
                    .map(|i| {
                        let x = -10.0 + 1e-4 * i as f64;
                        x.abs() + 0.5 * (z - x) * (z - x)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!((v - brute).abs() < 1e-7);
            }
            assert!((v - huber(*z)).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn half_square_envelope_halves() {
        let f = GridConvexFunction::from_fn(symmetric_grid(5.0, 1001), Extension::Affine, |z| 0.5 * z * z)
            .unwrap();
        let my = moreau_yosida(&f, 1.0).unwrap();
        let h = 0.01;
        for (z, v) in my.grid().iter().zip(my.values()) {
            if z.abs() < 4.0 {
                assert!((v - 0.25 * z * z).abs() < h * h, "z={z}");
            }
        }
    }

    #[test]
    fn envelope_is_monotone_in_f_and_k() {
        let g = symmetric_grid(3.0, 301);
        let f1 = GridConvexFunction::from_fn(g.clone(), Extension::Affine, |z| z * z).unwrap();
        let f2 = GridConvexFunction::from_fn(g.clone(), Extension::Affine, |z| z * z + z.abs()).unwrap();
        let a = moreau_yosida(&f1, 2.0).unwrap();
        let b = moreau_yosida(&f2, 2.0).unwrap();
        let c = moreau_yosida(&f1, 4.0).unwrap();
        for i in 0..g.len() {
            assert!(a.values()[i] <= b.values()[i] + 1e-12);
            assert!(a.values()[i] <= c.values()[i] + 1e-12);
        }
    }

    #[test]
    fn lipschitz_of_interval_indicator_is_scaled_distance() {
        let f = GridConvexFunction::indicator(symmetric_grid(4.0, 81), -1.0, 0.5).unwrap();
        let l = lipschitz_regularize(&f, 2.0).unwrap();
        for (z, v) in l.grid().iter().zip(l.values()) {
            let dist = if *z < -1.0 {
                -1.0 - z
            } else if *z > 0.5 {
                z - 0.5
            } else {
                0.0
            };
            assert!((v - 2.0 * dist).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn lipschitz_leaves_flat_functions_alone() {
        let f = GridConvexFunction::from_fn(symmetric_grid(2.0, 201), Extension::Affine, |z| {
            0.5 * z * z
        })
        .unwrap();
        let l = lipschitz_regularize(&f, 100.0).unwrap();
        for i in 0..f.len() {
            assert!((l.values()[i] - f.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_of_square_matches_brute_force() {
        let g = symmetric_grid(3.0, 601);
        let f = GridConvexFunction::from_fn(g.clone(), Extension::Affine, |z| z * z).unwrap();
        let l = lipschitz_regularize(&f, 1.0).unwrap();
        let slopes_ok = l
            .values()
            .windows(2)
            .zip(g.windows(2))
            .all(|(v, z)| ((v[1] - v[0]) / (z[1] - z[0])).abs() <= 1.0 + 1e-9);
        assert!(slopes_ok);
        for (i, &z) in g.iter().enumerate().step_by(11) {
            let brute = (0..=60_000)
                .map(|k| {
                    let x = -3.0 + 1e-4 * k as f64;
                    x * x + (z - x).abs()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((l.values()[i] - brute).abs() < 1e-4, "z={z}");
        }
    }
}
