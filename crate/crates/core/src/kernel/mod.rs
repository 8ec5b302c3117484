//! Convex analysis on one-dimensional grids.
//!
//! A [`GridConvexFunction`] is the piecewise-linear interpolant of convex
//! samples, extended outside the grid either affinely or by `+inf`. All the
//! operations below (conjugates, inf-convolutions, regularizations) are exact
//! for that piecewise-linear function; grid resolution is the only source of
//! error with respect to a smooth function being sampled.

mod conjugate;
mod infconv;
mod regularize;

pub use conjugate::{biconjugate_check, legendre_transform, polar_at, slope_dual_grid};
pub(crate) use infconv::min_at;
pub use infconv::{check_recession_feasibility, inf_convolve, inf_convolve_on, InfConvolution};
pub use regularize::{lipschitz_regularize, moreau_yosida};

use crate::error::{validation, Result, RiskError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Default absolute tolerance on second divided differences.
pub const TOL_CONVEXITY: f64 = 1e-9;

/// Default number of grid points for caller-less grids.
pub const DEFAULT_GRID_POINTS: usize = 2001;

/// Behaviour of a grid function outside `[z_0, z_{m-1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// Continue the outermost finite cell linearly.
    Affine,
    /// `+inf` outside the grid.
    PlusInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridConvexFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    extension: Extension,
    /// First and last finite indices.
    lo: usize,
    hi: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    grid: Vec<f64>,
    values: Vec<Option<f64>>,
    extension: Extension,
}

impl TryFrom<RawGrid> for GridConvexFunction {
    type Error = RiskError;
    fn try_from(raw: RawGrid) -> Result<Self> {
        let values = raw
            .values
            .into_iter()
            .map(|v| v.unwrap_or(f64::INFINITY))
            .collect();
        GridConvexFunction::new(raw.grid, values, raw.extension)
    }
}

impl From<GridConvexFunction> for RawGrid {
    fn from(f: GridConvexFunction) -> Self {
        RawGrid {
            values: f.values.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            grid: f.grid,
            extension: f.extension,
        }
    }
}

/// `n` equally spaced abscissae from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && hi > lo, "uniform_grid needs n >= 2 and hi > lo");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

/// Symmetric grid `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, n: usize) -> Vec<f64> {
    uniform_grid(-half_width, half_width, n)
}

impl GridConvexFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, extension: Extension) -> Result<Self> {
        Self::with_tolerance(grid, values, extension, TOL_CONVEXITY)
    }

    pub fn with_tolerance(
        grid: Vec<f64>,
        values: Vec<f64>,
        extension: Extension,
        tol_convexity: f64,
    ) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return validation(format!(
                "grid ({}) and values ({}) must be nonempty and of equal length",
                grid.len(),
                values.len()
            ));
        }
        if grid.iter().any(|z| !z.is_finite()) {
            return validation("grid abscissae must be finite");
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return validation("grid must be strictly increasing");
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return validation("values must be real or +inf");
        }
        let lo = values
            .iter()
            .position(|v| v.is_finite())
            .ok_or_else(|| RiskError::Domain("grid function has empty effective domain".into()))?;
        let hi = values.iter().rposition(|v| v.is_finite()).unwrap();
        if values[lo..=hi].iter().any(|v| !v.is_finite()) {
            return validation("effective domain must be a contiguous index range");
        }
        let scale = values[lo..=hi].iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let tol = tol_convexity * scale;
        for i in lo + 1..hi {
            let s0 = (values[i] - values[i - 1]) / (grid[i] - grid[i - 1]);
            let s1 = (values[i + 1] - values[i]) / (grid[i + 1] - grid[i]);
            let dd = (s1 - s0) / (grid[i + 1] - grid[i - 1]);
            if dd < -tol {
                return validation(format!(
                    "values are not convex at z = {} (second divided difference {dd:e})",
                    grid[i]
                ));
            }
        }
        Ok(GridConvexFunction {
            grid,
            values,
            extension,
            lo,
            hi,
        })
    }

    pub fn from_fn(grid: Vec<f64>, extension: Extension, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&z| f(z)).collect();
        Self::new(grid, values, extension)
    }

    /// Indicator of the closed interval `[a, b]` sampled on `grid`.
    pub fn indicator(grid: Vec<f64>, a: f64, b: f64) -> Result<Self> {
        let eps = 1e-12 * (1.0 + a.abs().max(b.abs()));
        Self::from_fn(grid, Extension::PlusInfinity, |z| {
            if z >= a - eps && z <= b + eps {
                0.0
            } else {
                f64::INFINITY
            }
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Index range `[lo, hi]` of finite values.
    pub fn finite_range(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    fn cell_slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.grid[i + 1] - self.grid[i])
    }

    fn open_left(&self) -> bool {
        self.extension == Extension::Affine && self.lo == 0 && self.hi > self.lo
    }

    fn open_right(&self) -> bool {
        self.extension == Extension::Affine && self.hi == self.len() - 1 && self.hi > self.lo
    }

    /// Slope of the function as `z -> -inf`; `-inf` when the domain is
    /// bounded on the left.
    pub fn left_recession_slope(&self) -> f64 {
        if self.open_left() {
            self.cell_slope(0)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Slope of the function as `z -> +inf`; `+inf` when the domain is
    /// bounded on the right.
    pub fn right_recession_slope(&self) -> f64 {
        if self.open_right() {
            self.cell_slope(self.len() - 2)
        } else {
            f64::INFINITY
        }
    }

    /// Effective domain as a closed interval (endpoints may be infinite).
    pub fn domain(&self) -> (f64, f64) {
        let a = if self.open_left() {
            f64::NEG_INFINITY
        } else {
            self.grid[self.lo]
        };
        let b = if self.open_right() {
            f64::INFINITY
        } else {
            self.grid[self.hi]
        };
        (a, b)
    }

    /// Index `i` with `grid[i] <= z < grid[i+1]`, clamped to valid cells.
    fn cell_of(&self, z: f64) -> usize {
        let n = self.len();
        if n == 1 {
            return 0;
        }
        match self.grid.binary_search_by(|g| g.partial_cmp(&z).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Evaluates the piecewise-linear extension at `z` (`+inf` off-domain).
    pub fn eval(&self, z: f64) -> f64 {
        let n = self.len();
        let (z0, zn) = (self.grid[self.lo], self.grid[self.hi]);
        if z < z0 {
            if self.open_left() {
                return self.values[0] + self.cell_slope(0) * (z - self.grid[0]);
            }
            return f64::INFINITY;
        }
        if z > zn {
            if self.open_right() {
                return self.values[n - 1] + self.cell_slope(n - 2) * (z - self.grid[n - 1]);
            }
            return f64::INFINITY;
        }
        if self.lo == self.hi {
            return self.values[self.lo];
        }
        let i = self.cell_of(z).clamp(self.lo, self.hi - 1);
        let t = (z - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        if t <= 0.0 {
            self.values[i]
        } else if t >= 1.0 {
            self.values[i + 1]
        } else {
            self.values[i] + t * (self.values[i + 1] - self.values[i])
        }
    }

    /// Like [`eval`](Self::eval) but starts the cell search from `hint`,
    /// which is updated; cheap for monotone query sequences.
    pub fn eval_near(&self, z: f64, hint: &mut usize) -> f64 {
        let (z0, zn) = (self.grid[self.lo], self.grid[self.hi]);
        if z < z0 || z > zn || self.lo == self.hi {
            return self.eval(z);
        }
        let mut i = (*hint).clamp(self.lo, self.hi - 1);
        while i > self.lo && z < self.grid[i] {
            i -= 1;
        }
        while i + 1 < self.hi && z >= self.grid[i + 1] {
            i += 1;
        }
        *hint = i;
        let t = (z - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        if t <= 0.0 {
            self.values[i]
        } else if t >= 1.0 {
            self.values[i + 1]
        } else {
            self.values[i] + t * (self.values[i + 1] - self.values[i])
        }
    }

    /// One-sided slopes `[left, right]` bracketing the subdifferential at
    /// `z`; `None` when `z` is outside the effective domain.
    pub fn subdifferential(&self, z: f64) -> Option<(f64, f64)> {
        let (a, b) = self.domain();
        if z < a || z > b {
            return None;
        }
        let n = self.len();
        if self.lo == self.hi {
            return Some((f64::NEG_INFINITY, f64::INFINITY));
        }
        let (z0, zn) = (self.grid[self.lo], self.grid[self.hi]);
        if z < z0 {
            let s = self.cell_slope(0);
            return Some((s, s));
        }
        if z > zn {
            let s = self.cell_slope(n - 2);
            return Some((s, s));
        }
        let tol = 1e-12 * (1.0 + z.abs());
        let i = self.cell_of(z).clamp(self.lo, self.hi - 1);
        let at_left = (z - self.grid[i]).abs() <= tol;
        let at_right = (z - self.grid[i + 1]).abs() <= tol;
        if !at_left && !at_right {
            let s = self.cell_slope(i);
            return Some((s, s));
        }
        let k = if at_right { i + 1 } else { i };
        let left = if k > self.lo {
            self.cell_slope(k - 1)
        } else if self.open_left() {
            self.cell_slope(0)
        } else {
            f64::NEG_INFINITY
        };
        let right = if k < self.hi {
            self.cell_slope(k)
        } else if self.open_right() {
            self.cell_slope(n - 2)
        } else {
            f64::INFINITY
        };
        Some((left, right))
    }

    /// Recession function `g_{0+}`, sampled on the grid (with `0` inserted
    /// if absent). Outer slopes are read from the outermost cells.
    pub fn recession_function(&self) -> GridConvexFunction {
        let left = self.left_recession_slope();
        let right = self.right_recession_slope();
        let mut grid = self.grid.clone();
        if let Err(pos) = grid.binary_search_by(|g| g.partial_cmp(&0.0).unwrap()) {
            grid.insert(pos, 0.0);
        }
        let values = grid
            .iter()
            .map(|&z| recession_value(left, right, z))
            .collect();
        GridConvexFunction::new(grid, values, Extension::Affine)
            .expect("recession function of a valid grid function is valid")
    }

    /// `g_{0+}(z)` at an arbitrary point.
    pub fn recession_at(&self, z: f64) -> f64 {
        recession_value(self.left_recession_slope(), self.right_recession_slope(), z)
    }

    /// `gamma * f(z / gamma)`, exact on the dilated grid.
    pub fn dilate(&self, gamma: f64) -> Result<GridConvexFunction> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return validation(format!("dilation factor must be positive, got {gamma}"));
        }
        let grid = self.grid.iter().map(|z| z * gamma).collect();
        let values = self.values.iter().map(|v| v * gamma).collect();
        GridConvexFunction::new(grid, values, self.extension)
    }

    /// Perspective `gamma * f(z / gamma)`, extended by the recession function
    /// at `gamma = 0`. Requires `f(0) = 0`.
    pub fn perspective(&self, gamma: f64, z: f64) -> Result<f64> {
        let f0 = self.eval(0.0);
        if !(f0.abs() <= 1e-12) {
            return Err(RiskError::Normalization(format!(
                "perspective requires f(0) = 0, got {f0}"
            )));
        }
        if gamma < 0.0 || gamma.is_nan() {
            return validation(format!("perspective needs gamma >= 0, got {gamma}"));
        }
        if gamma == 0.0 {
            Ok(self.recession_at(z))
        } else {
            Ok(gamma * self.eval(z / gamma))
        }
    }

    /// Writes `z,value` rows with an `inf` sentinel.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| RiskError::Internal(format!("csv write failed: {e}"));
        wr.write_record(["z", "value"]).map_err(io)?;
        for (z, v) in self.grid.iter().zip(&self.values) {
            let v = if v.is_finite() {
                format!("{v:.17e}")
            } else {
                "inf".to_string()
            };
            wr.write_record([format!("{z:.17e}"), v]).map_err(io)?;
        }
        wr.flush()
            .map_err(|e| RiskError::Internal(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, extension: Extension) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(line + 2, "record", &e.to_string()))?;
            if rec.len() != 2 {
                return Err(parse_err(line + 2, "record", "expected two columns"));
            }
            let z: f64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(line + 2, "z", "not a number"))?;
            let v = match rec[1].trim() {
                "inf" | "+inf" => f64::INFINITY,
                s => s
                    .parse()
                    .map_err(|_| parse_err(line + 2, "value", "not a number or inf"))?,
            };
            grid.push(z);
            values.push(v);
        }
        GridConvexFunction::new(grid, values, extension)
    }
}

fn parse_err(line: usize, field: &str, msg: &str) -> RiskError {
    RiskError::Parse {
        line,
        column: 0,
        field: field.to_string(),
        message: msg.to_string(),
    }
}

fn recession_value(left: f64, right: f64, z: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else if z > 0.0 {
        if right.is_finite() {
            right * z
        } else {
            f64::INFINITY
        }
    } else if left.is_finite() {
        left * z
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_fn(k: f64) -> GridConvexFunction {
        GridConvexFunction::from_fn(symmetric_grid(5.0, 201), Extension::Affine, |z| k * z.abs())
            .unwrap()
    }

    #[test]
    fn rejects_nonconvex_and_gapped_domains() {
        let g = vec![-1.0, 0.0, 1.0];
        assert!(GridConvexFunction::new(g.clone(), vec![0.0, 1.0, 0.0], Extension::Affine).is_err());
        let g5 = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let gapped = vec![0.0, f64::INFINITY, 0.0, 1.0, 2.0];
        assert!(GridConvexFunction::new(g5, gapped, Extension::Affine).is_err());
        assert!(GridConvexFunction::new(vec![0.0, 0.0], vec![0.0, 0.0], Extension::Affine).is_err());
        let all_inf = vec![f64::INFINITY; 3];
        assert!(matches!(
            GridConvexFunction::new(g, all_inf, Extension::Affine),
            Err(RiskError::Domain(_))
        ));
    }

    #[test]
    fn affine_extension_and_plus_infinity() {
        let f = abs_fn(2.0);
        assert!((f.eval(7.0) - 14.0).abs() < 1e-12);
        assert!((f.eval(-7.5) - 15.0).abs() < 1e-12);
        let g = GridConvexFunction::from_fn(symmetric_grid(1.0, 11), Extension::PlusInfinity, |z| z * z)
            .unwrap();
        assert_eq!(g.eval(1.5), f64::INFINITY);
        assert!((g.eval(0.25) - 0.07).abs() < 1e-12);
    }

    #[test]
    fn subdifferential_of_abs_and_square() {
        let f = abs_fn(1.0);
        let (l, r) = f.subdifferential(0.0).unwrap();
        assert!((l + 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);
        let h = 0.05;
        let sq = GridConvexFunction::from_fn(symmetric_grid(5.0, 201), Extension::Affine, |z| z * z)
            .unwrap();
        let (l, r) = sq.subdifferential(1.0).unwrap();
        assert!(l <= 2.0 && r >= 2.0);
        assert!(2.0 - l <= h + 1e-9 && r - 2.0 <= h + 1e-9);
        let ind = GridConvexFunction::indicator(symmetric_grid(1.0, 5), -0.5, 0.5).unwrap();
        assert!(ind.subdifferential(0.9).is_none());
    }

    #[test]
    fn recession_examples() {
        let f = GridConvexFunction::from_fn(symmetric_grid(5.0, 101), Extension::Affine, |z| {
            3.0 + 2.0 * z.abs()
        })
        .unwrap();
        for z in [-3.0, -0.5, 0.0, 1.0, 4.0] {
            assert!((f.recession_at(z) - 2.0 * f64::abs(z)).abs() < 1e-10);
        }
        let sq = GridConvexFunction::from_fn(symmetric_grid(5.0, 101), Extension::PlusInfinity, |z| {
            z * z
        })
        .unwrap();
        let rec = sq.recession_function();
        assert_eq!(rec.finite_range().0, rec.finite_range().1);
        assert_eq!(rec.eval(0.0), 0.0);
        assert_eq!(rec.eval(0.3), f64::INFINITY);
        let aff = GridConvexFunction::from_fn(symmetric_grid(5.0, 11), Extension::Affine, |z| {
            1.0 - 0.5 * z
        })
        .unwrap();
        assert!((aff.recession_at(2.0) + 1.0).abs() < 1e-12);
        assert!((aff.recession_at(-2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recession_of_affine_extended_square_grows_with_span() {
        let slope = |span: f64| {
            GridConvexFunction::from_fn(symmetric_grid(span, 201), Extension::Affine, |z| z * z)
                .unwrap()
                .recession_at(1.0)
        };
        assert!(slope(10.0) > slope(5.0) && slope(5.0) > 9.0);
    }

    #[test]
    fn perspective_examples() {
        let sq = GridConvexFunction::from_fn(symmetric_grid(8.0, 1601), Extension::PlusInfinity, |z| {
            z * z
        })
        .unwrap();
        assert!((sq.perspective(2.0, 2.0).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(sq.perspective(0.0, 1.0).unwrap(), f64::INFINITY);
        let ab = abs_fn(1.0);
        assert!((ab.perspective(0.5, 3.0).unwrap() - 3.0).abs() < 1e-12);
        let shifted = GridConvexFunction::from_fn(symmetric_grid(1.0, 11), Extension::Affine, |z| {
            1.0 + z * z
        })
        .unwrap();
        assert!(matches!(
            shifted.perspective(1.0, 0.0),
            Err(RiskError::Normalization(_))
        ));
    }

    #[test]
    fn csv_round_trip_keeps_sentinel() {
        let ind = GridConvexFunction::indicator(symmetric_grid(2.0, 9), -1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        ind.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("z,value\n"));
        assert!(text.contains(",inf"));
        let back = GridConvexFunction::read_csv(buf.as_slice(), Extension::PlusInfinity).unwrap();
        assert_eq!(back, ind);
    }

    #[test]
    fn serde_uses_null_for_infinity() {
        let ind = GridConvexFunction::indicator(vec![-1.0, 0.0, 1.0], 0.0, 0.0).unwrap();
        let s = serde_json::to_string(&ind).unwrap();
        assert!(s.contains("null"));
        let back: GridConvexFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ind);
    }
}
