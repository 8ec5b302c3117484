//! Dense two-phase simplex with Bland's rule.
//!
//! Problems are stated with bounded variables and `<=`/`>=`/`=` rows and
//! minimized. Solutions carry row duals, a complementary-slackness residual
//! and the primal-dual gap; failures carry a Farkas vector or a ray.

use crate::error::{Result, RiskError};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
const MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `min c.x` subject to rows and `lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row; `>= 0` for `Ge`, `<= 0` for `Le` rows.
    pub duals: Vec<f64>,
    /// `max_j |x_j d_j|` over standard-form columns.
    pub complementarity: f64,
    /// Primal objective minus dual objective in standard form.
    pub duality_gap: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            rows: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) {
        self.rows.push(Row { coeffs, kind, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution> {
        solve(self)
    }

    /// Maximizes the objective; returned objective and duals refer to the
    /// maximization.
    pub fn solve_max(&self) -> Result<LpSolution> {
        let mut neg = self.clone();
        for c in &mut neg.objective {
            *c = -*c;
        }
        let mut sol = solve(&neg)?;
        sol.objective = -sol.objective;
        for y in &mut sol.duals {
            *y = -*y;
        }
        Ok(sol)
    }
}

/// Column of the standard form in terms of an original variable.
struct VarMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    c0: f64,
    vars: Vec<VarMap>,
    /// Sign applied to each row to make its rhs nonnegative.
    sign: Vec<f64>,
    n_orig_rows: usize,
}

fn standardize(lp: &LinearProgram) -> Result<StandardForm> {
    let n = lp.objective.len();
    if lp.bounds.len() != n || lp.rows.iter().any(|r| r.coeffs.len() != n) {
        return Err(RiskError::Internal("LP dimensions are inconsistent".into()));
    }
    let mut vars = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for &(l, u) in &lp.bounds {
        if l > u {
            return Err(RiskError::Infeasible { farkas: vec![] });
        }
        let map = if l.is_finite() {
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            VarMap {
                offset: l,
                cols: vec![(ncols, 1.0)],
            }
        } else if u.is_finite() {
            VarMap {
                offset: u,
                cols: vec![(ncols, -1.0)],
            }
        } else {
            ncols += 1;
            VarMap {
                offset: 0.0,
                cols: vec![(ncols - 1, 1.0), (ncols, -1.0)],
            }
        };
        ncols += 1;
        vars.push(map);
    }
    let n_slack = lp.rows.iter().filter(|r| r.kind != RowKind::Eq).count() + bound_rows.len();
    let total = ncols + n_slack;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut slack = ncols;
    for row in &lp.rows {
        let mut r = vec![0.0; total];
        let mut rhs = row.rhs;
        for (j, &aij) in row.coeffs.iter().enumerate() {
            if aij == 0.0 {
                continue;
            }
            rhs -= aij * vars[j].offset;
            for &(c, s) in &vars[j].cols {
                r[c] += aij * s;
            }
        }
        match row.kind {
            RowKind::Le => {
                r[slack] = 1.0;
                slack += 1;
            }
            RowKind::Ge => {
                r[slack] = -1.0;
                slack += 1;
            }
            RowKind::Eq => {}
        }
        a.push(r);
        b.push(rhs);
    }
    for &(c, width) in &bound_rows {
        let mut r = vec![0.0; total];
        r[c] = 1.0;
        r[slack] = 1.0;
        slack += 1;
        a.push(r);
        b.push(width);
    }
    let mut sign = vec![1.0; a.len()];
    for i in 0..a.len() {
        if b[i] < 0.0 {
            sign[i] = -1.0;
            b[i] = -b[i];
            for v in &mut a[i] {
                *v = -*v;
            }
        }
    }
    let mut c = vec![0.0; total];
    let mut c0 = 0.0;
    for (j, &cj) in lp.objective.iter().enumerate() {
        c0 += cj * vars[j].offset;
        for &(col, s) in &vars[j].cols {
            c[col] += cj * s;
        }
    }
    Ok(StandardForm {
        a,
        b,
        c,
        c0,
        vars,
        sign,
        n_orig_rows: lp.rows.len(),
    })
}

/// Tableau over `[structural | artificial | rhs]`; the artificial block
/// holds `B^{-1}` throughout since the starting basis is the identity.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    active: Vec<bool>,
    n: usize,
    m: usize,
    iterations: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.n + self.m]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.n + self.m + 1;
        let p = self.t[r][c];
        for k in 0..width {
            self.t[r][k] /= p;
        }
        let pivot_row = self.t[r].clone();
        for i in 0..self.m {
            if i == r || !self.active[i] {
                continue;
            }
            let f = self.t[i][c];
            if f != 0.0 {
                for k in 0..width {
                    self.t[i][k] -= f * pivot_row[k];
                }
                self.t[i][c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Duals `y = c_B B^{-1}` for the given costs (length `n + m`).
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            if !self.active[i] {
                continue;
            }
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += cb * self.t[i][self.n + k];
                }
            }
        }
        y
    }

    /// Runs Bland's simplex over columns `< limit`. Returns the entering
    /// column of an unbounded direction, if any.
    fn optimize(&mut self, cost: &[f64], a: &[Vec<f64>], limit: usize) -> Result<Option<usize>> {
        loop {
            if self.iterations > MAX_ITER {
                return Err(RiskError::NonConvergence {
                    iterations: self.iterations,
                    gap: f64::NAN,
                });
            }
            let y = self.duals(cost);
            let scale = 1.0 + cost.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            let entering = (0..limit).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let col_dot: f64 = if j < self.n {
                    (0..self.m).map(|i| y[i] * a[i][j]).sum()
                } else {
                    y[j - self.n]
                };
                cost[j] - col_dot < -COST_EPS * scale
            });
            let Some(c) = entering else {
                return Ok(None);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if !self.active[i] {
                    continue;
                }
                let tij = self.t[i][c];
                if tij > PIVOT_EPS {
                    let ratio = self.rhs(i) / tij;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(Some(c)),
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let sf = standardize(lp)?;
    let m = sf.a.len();
    let n = sf.c.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        t[i][..n].copy_from_slice(&sf.a[i]);
        t[i][n + i] = 1.0;
        t[i][n + m] = sf.b[i];
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        active: vec![true; m],
        n,
        m,
        iterations: 0,
    };

    // phase 1
    let mut cost1 = vec![0.0; n + m];
    for c in &mut cost1[n..] {
        *c = 1.0;
    }
    tab.optimize(&cost1, &sf.a, n + m)?;
    let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.rhs(i)).sum();
    let bscale = 1.0 + sf.b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if infeas > 1e-9 * bscale {
        let y = tab.duals(&cost1);
        // phase-1 duals satisfy y^T A <= 0 and y^T b > 0
        let farkas = (0..sf.n_orig_rows).map(|i| y[i] * sf.sign[i]).collect::<Vec<_>>();
        return Err(RiskError::Infeasible { farkas });
    }
    // drive remaining artificials out of the basis
    for r in 0..m {
        if tab.basis[r] < n {
            continue;
        }
        match (0..n).find(|&j| tab.t[r][j].abs() > 1e-9 && !tab.basis.contains(&j)) {
            Some(c) => tab.pivot(r, c),
            None => tab.active[r] = false,
        }
    }

    // phase 2
    let mut cost2 = sf.c.clone();
    cost2.extend(std::iter::repeat_n(0.0, m));
    if let Some(c) = tab.optimize(&cost2, &sf.a, n)? {
        let mut d = vec![0.0; n];
        d[c] = 1.0;
        for i in 0..m {
            if tab.active[i] && tab.basis[i] < n {
                d[tab.basis[i]] = -tab.t[i][c];
            }
        }
        let ray = sf
            .vars
            .iter()
            .map(|v| v.cols.iter().map(|&(col, s)| s * d[col]).sum())
            .collect();
        return Err(RiskError::Unbounded { ray });
    }

    let mut xs = vec![0.0; n];
    for i in 0..m {
        if tab.active[i] && tab.basis[i] < n {
            xs[tab.basis[i]] = tab.rhs(i).max(0.0);
        }
    }
    let y = tab.duals(&cost2);
    let mut complementarity = 0.0_f64;
    for j in 0..n {
        let d = sf.c[j] - (0..m).map(|i| y[i] * sf.a[i][j]).sum::<f64>();
        complementarity = complementarity.max((xs[j] * d).abs());
    }
    let primal: f64 = sf.c.iter().zip(&xs).map(|(c, x)| c * x).sum();
    let dual: f64 = y.iter().zip(&sf.b).map(|(y, b)| y * b).sum();
    let x: Vec<f64> = sf
        .vars
        .iter()
        .map(|v| v.offset + v.cols.iter().map(|&(col, s)| s * xs[col]).sum::<f64>())
        .collect();
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
    debug_assert!((objective - (primal + sf.c0)).abs() <= 1e-6 * (1.0 + primal.abs()));
    let duals = (0..sf.n_orig_rows).map(|i| sf.sign[i] * y[i]).collect();
    Ok(LpSolution {
        x,
        objective,
        duals,
        complementarity,
        duality_gap: primal - dual,
        iterations: tab.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Solves a square system by Gaussian elimination with partial pivoting.
    fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
            if a[p][col].abs() < 1e-10 {
                return None;
            }
            a.swap(col, p);
            b.swap(col, p);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..n {
                        a[r][k] -= f * a[col][k];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
        Some((0..n).map(|i| b[i] / a[i][i]).collect())
    }

    /// Minimum of `c.x` over `Ax = b, x >= 0` by enumerating every basis.
    fn vertex_enumeration(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
        let (m, n) = (a.len(), c.len());
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..m).collect();
        loop {
            let sub: Vec<Vec<f64>> = (0..m).map(|i| idx.iter().map(|&j| a[i][j]).collect()).collect();
            if let Some(xb) = gauss(sub, b.to_vec()) {
                if xb.iter().all(|v| *v >= -1e-9) {
                    let v: f64 = idx.iter().zip(&xb).map(|(&j, x)| c[j] * x).sum();
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
            // next combination
            let mut i = m;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < n - m + i {
                    idx[i] += 1;
                    for k in i + 1..m {
                        idx[k] = idx[k - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn small_textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![3.0, 5.0];
        lp.add_row(vec![1.0, 0.0], RowKind::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], RowKind::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], RowKind::Le, 18.0);
        let s = lp.solve_max().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        // shadow prices of the textbook example
        assert!(s.duals[0].abs() < 1e-9);
        assert!((s.duals[1] - 1.5).abs() < 1e-9);
        assert!((s.duals[2] - 1.0).abs() < 1e-9);
        assert!(s.duality_gap.abs() < 1e-9);
    }

    #[test]
    fn free_and_bounded_variables() {
        // min x - y, x free in row, -1 <= y <= 2, x + y >= -3, x >= -5
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, -1.0];
        lp.bounds = vec![(f64::NEG_INFINITY, f64::INFINITY), (-1.0, 2.0)];
        lp.add_row(vec![1.0, 1.0], RowKind::Ge, -3.0);
        lp.add_row(vec![1.0, 0.0], RowKind::Ge, -5.0);
        let s = lp.solve().unwrap();
        assert!((s.x[1] - 2.0).abs() < 1e-9);
        assert!((s.x[0] + 5.0).abs() < 1e-9);
        assert!((s.objective + 7.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_gives_farkas_vector() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![1.0], RowKind::Ge, 2.0);
        lp.add_row(vec![1.0], RowKind::Le, 1.0);
        match lp.solve() {
            Err(RiskError::Infeasible { farkas }) => {
                // y1 (x >= 2) and y2 (x <= 1) combine to 0 >= positive
                assert_eq!(farkas.len(), 2);
                assert!(farkas.iter().any(|v| v.abs() > 0.5));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_gives_ray() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.add_row(vec![1.0, -1.0], RowKind::Le, 1.0);
        match lp.solve() {
            Err(RiskError::Unbounded { ray }) => {
                assert!(ray[0] > 0.0);
                assert!(ray[0] - ray[1] <= 1e-12);
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(3);
        lp.objective = vec![1.0, 2.0, 3.0];
        lp.add_row(vec![1.0, 1.0, 1.0], RowKind::Eq, 1.0);
        lp.add_row(vec![2.0, 2.0, 2.0], RowKind::Eq, 2.0);
        lp.add_row(vec![0.0, 1.0, 1.0], RowKind::Ge, 0.5);
        let s = lp.solve().unwrap();
        assert!((s.objective - 1.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the largest-coefficient rule
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![-0.75, 20.0, -0.5, 6.0];
        lp.add_row(vec![0.25, -8.0, -1.0, 9.0], RowKind::Le, 0.0);
        lp.add_row(vec![0.5, -12.0, -0.5, 3.0], RowKind::Le, 0.0);
        lp.add_row(vec![0.0, 0.0, 1.0, 0.0], RowKind::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 1.25).abs() < 1e-9);
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (m, n) = (5, 8);
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = a.iter().map(|r| r.iter().zip(&x0).map(|(u, v)| u * v).sum()).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mut lp = LinearProgram::new(n);
            lp.objective = c.clone();
            for (r, bi) in a.iter().zip(&b) {
                lp.add_row(r.clone(), RowKind::Eq, *bi);
            }
            let s = lp.solve().unwrap();
            let oracle = vertex_enumeration(&a, &b, &c).unwrap();
            assert!((s.objective - oracle).abs() < 1e-8, "{} vs {oracle}", s.objective);
            assert!(s.duality_gap.abs() < 1e-8);
            assert!(s.complementarity < 1e-8);
            // dual feasibility: c - A^T y >= 0
            for j in 0..n {
                let d = c[j] - (0..m).map(|i| s.duals[i] * a[i][j]).sum::<f64>();
                assert!(d >= -1e-8);
            }
        }
    }
}
