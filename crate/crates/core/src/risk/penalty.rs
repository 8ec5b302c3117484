use super::{value_and_measure, RiskMeasureSpec, S};
use crate::error::{validation, Result, RiskError};
use crate::kernel::{polar_at, GridConvexFunction};
use crate::market::lp::{LinearProgram, RowKind};
use crate::market::{Measure, ProbSpace};
use crate::optim::{minimize, MinimizeOptions};
use serde::Serialize;

/// Value of a penalty, which may be infinite or only bounded from below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PenaltyValue {
    Finite { value: f64 },
    Infinite,
    /// A boxed numerical supremum hit the box; `best` is only a lower bound.
    PossiblyInfinite { best: f64 },
}

impl PenaltyValue {
    pub fn finite(value: f64) -> Self {
        if value == f64::INFINITY {
            PenaltyValue::Infinite
        } else {
            PenaltyValue::Finite { value }
        }
    }

    /// The value when it is known to be finite.
    pub fn value(&self) -> Option<f64> {
        match self {
            PenaltyValue::Finite { value } => Some(*value),
            _ => None,
        }
    }

    /// `+inf` for infinite, the lower bound for possibly infinite.
    pub fn lower_bound(&self) -> f64 {
        match self {
            PenaltyValue::Finite { value } => *value,
            PenaltyValue::Infinite => f64::INFINITY,
            PenaltyValue::PossiblyInfinite { best } => *best,
        }
    }

    fn scale(self, gamma: f64) -> Self {
        match self {
            PenaltyValue::Finite { value } => PenaltyValue::Finite { value: gamma * value },
            PenaltyValue::Infinite => PenaltyValue::Infinite,
            PenaltyValue::PossiblyInfinite { best } => PenaltyValue::PossiblyInfinite { best: gamma * best },
        }
    }

    fn add(self, other: Self) -> Self {
        use PenaltyValue::*;
        match (self, other) {
            (Infinite, _) | (_, Infinite) => Infinite,
            (Finite { value: a }, Finite { value: b }) => Finite { value: a + b },
            (a, b) => PossiblyInfinite {
                best: a.lower_bound() + b.lower_bound(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PenaltyEvaluation {
    pub measure: Measure,
    pub value: PenaltyValue,
    /// Position attaining the defining supremum, when one is produced.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attained_by: Option<Vec<f64>>,
}

/// Minimal penalty `alpha(Q) = sup_X E_Q[-X] - rho(X)`.
pub fn penalty(spec: &RiskMeasureSpec, space: &ProbSpace, q: &Measure) -> Result<PenaltyEvaluation> {
    spec.validate()?;
    if q.len() != space.len() {
        return validation("measure and space have different sizes");
    }
    let (value, attained_by) = penalty_value(spec, space, q)?;
    Ok(PenaltyEvaluation {
        measure: q.clone(),
        value,
        attained_by,
    })
}

fn penalty_value(spec: &RiskMeasureSpec, space: &ProbSpace, q: &Measure) -> Result<(PenaltyValue, Option<Vec<f64>>)> {
    let p = space.probs();
    let w = q.weights();
    Ok(match spec {
        S::Entropic { gamma } => {
            let h: f64 = w
                .iter()
                .zip(p)
                .filter(|(qi, _)| **qi > 0.0)
                .map(|(qi, pi)| qi * (qi / pi).ln())
                .sum();
            // attained at X = -gamma ln(dQ/dP) when Q ~ P
            let witness = if w.iter().all(|qi| *qi > 0.0) {
                Some(w.iter().zip(p).map(|(qi, pi)| -gamma * (qi / pi).ln()).collect())
            } else {
                None
            };
            (PenaltyValue::finite(gamma * h), witness)
        }
        S::WorstCase => (PenaltyValue::finite(0.0), Some(vec![0.0; p.len()])),
        S::AVaR { lambda } | S::CVaR { lambda } => avar_penalty_lp(*lambda, p, w)?,
        S::Shortfall { loss, anchor } => (shortfall_penalty(loss, *anchor, p, w), None),
        S::SetGenerated { .. } => (PenaltyValue::finite(spec.market()?.penalty(q)), None),
        S::Dilated { base, gamma } => {
            let (v, x) = penalty_value(base, space, q)?;
            (v.scale(*gamma), x.map(|x| x.iter().map(|v| v * gamma).collect()))
        }
        S::MarketModified { base, .. } => {
            let (v, _) = penalty_value(base, space, q)?;
            (v.add(PenaltyValue::finite(spec.market()?.penalty(q))), None)
        }
        S::InfConv { a, b } => {
            let (va, _) = penalty_value(a, space, q)?;
            let (vb, _) = penalty_value(b, space, q)?;
            (va.add(vb), None)
        }
        S::VaR { .. } => {
            let e = penalty_numerical(spec, space, q, 16.0)?;
            (e.value, e.attained_by)
        }
    })
}

/// `sup { E_Q[-X] : AVaR(X) <= 0 }` as a linear program over `(X, K, u)`.
fn avar_penalty_lp(lambda: f64, p: &[f64], q: &[f64]) -> Result<(PenaltyValue, Option<Vec<f64>>)> {
    let n = p.len();
    let nv = 2 * n + 1;
    let mut lp = LinearProgram::new(nv);
    for j in 0..=n {
        lp.bounds[j] = (f64::NEG_INFINITY, f64::INFINITY);
    }
    for i in 0..n {
        lp.objective[i] = -q[i];
    }
    // u_i + X_i - K >= 0
    for i in 0..n {
        let mut row = vec![0.0; nv];
        row[i] = 1.0;
        row[n] = -1.0;
        row[n + 1 + i] = 1.0;
        lp.add_row(row, RowKind::Ge, 0.0);
    }
    // (1/lambda) E[u] - K <= 0
    let mut row = vec![0.0; nv];
    row[n] = -1.0;
    for i in 0..n {
        row[n + 1 + i] = p[i] / lambda;
    }
    lp.add_row(row, RowKind::Le, 0.0);
    match lp.solve_max() {
        Ok(sol) => Ok((PenaltyValue::finite(sol.objective), Some(sol.x[..n].to_vec()))),
        Err(RiskError::Unbounded { .. }) => Ok((PenaltyValue::Infinite, None)),
        Err(e) => Err(e),
    }
}

/// `inf_{lambda > 0} (l0 + E_P[l*(lambda dQ/dP)]) / lambda`, minimized over
/// `t = 1/lambda` where the objective is a convex perspective.
fn shortfall_penalty(loss: &GridConvexFunction, l0: f64, p: &[f64], q: &[f64]) -> PenaltyValue {
    let r: Vec<f64> = q.iter().zip(p).map(|(a, b)| a / b).collect();
    let conj = |y: f64| polar_at(loss, -y);
    let phi = |t: f64| -> f64 {
        let s: f64 = p.iter().zip(&r).map(|(pi, ri)| pi * conj(ri / t)).sum();
        t * (l0 + s)
    };
    let r_max = r.iter().cloned().fold(0.0, f64::max);
    let r_min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let s_right = loss.right_recession_slope();
    let s_left = loss.left_recession_slope().max(0.0);
    let t_lo = if s_right.is_finite() { r_max / s_right } else { 0.0 };
    let t_hi = if s_left > 0.0 { r_min / s_left } else { f64::INFINITY };
    if t_lo > t_hi {
        return PenaltyValue::Infinite;
    }
    let mut a = t_lo.max(1e-300);
    let mut b = if t_hi.is_finite() { t_hi } else { (2.0 * a).max(1.0) };
    if t_hi.is_infinite() {
        let mut prev = phi(b);
        for _ in 0..200 {
            let next = phi(2.0 * b);
            if next >= prev {
                b *= 2.0;
                break;
            }
            prev = next;
            a = b;
            b *= 2.0;
        }
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..300 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = phi(d);
        }
        if b - a <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
    }
    let best = [phi(a), phi(b), fc, fd].into_iter().fold(f64::INFINITY, f64::min);
    PenaltyValue::finite(best)
}

/// Boxed numerical supremum of `E_Q[-X] - rho(X)` over `X in [-B, B]^n`.
/// An active box bound demotes the answer to `PossiblyInfinite`.
pub fn penalty_numerical(spec: &RiskMeasureSpec, space: &ProbSpace, q: &Measure, bound: f64) -> Result<PenaltyEvaluation> {
    let n = space.len();
    let w = q.weights();
    let neg_obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, qr) = value_and_measure(spec, space, x)?;
        let e: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        Ok((e + v, w.iter().zip(&qr).map(|(a, b)| a - b).collect()))
    };
    let bounds = vec![(-bound, bound); n];
    let opts = MinimizeOptions {
        max_iter: 2_000,
        ..MinimizeOptions::default()
    };
    let m = minimize(neg_obj, &bounds, &[vec![0.0; n]], &opts)?;
    let mut best = -m.value;
    let mut arg = m.x;
    if n <= 12 {
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { bound } else { -bound }).collect();
            let v = -neg_obj(&x)?.0;
            if v > best + 1e-12 * (1.0 + best.abs()) {
                best = v;
                arg = x;
            }
        }
    }
    let active = arg.iter().any(|v| v.abs() >= bound * (1.0 - 1e-9));
    let value = if active {
        PenaltyValue::PossiblyInfinite { best }
    } else {
        PenaltyValue::finite(best)
    };
    Ok(PenaltyEvaluation {
        measure: q.clone(),
        value,
        attained_by: Some(arg),
    })
}

/// Duality lower bound over a list of measures.
#[derive(Debug, Clone, Serialize)]
pub struct DualGap {
    pub value: f64,
    pub lower_bound: f64,
    /// `value - lower_bound`.
    pub gap: f64,
    /// Index of the measure attaining the lower bound.
    pub best: Option<usize>,
}

/// `sup_Q E_Q[-X] - alpha(Q)` over `measures`, compared with `rho(X)`.
/// Measures with infinite or unverified penalty are skipped.
pub fn dual_gap(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64], measures: &[Measure]) -> Result<DualGap> {
    if measures.is_empty() {
        return validation("dual_gap needs at least one measure");
    }
    let value = super::evaluate(spec, space, x)?;
    let mut lower_bound = f64::NEG_INFINITY;
    let mut best = None;
    for (k, q) in measures.iter().enumerate() {
        if let Some(a) = penalty(spec, space, q)?.value.value() {
            let cand = -q.expectation(x) - a;
            if cand > lower_bound {
                lower_bound = cand;
                best = Some(k);
            }
        }
    }
    Ok(DualGap {
        value,
        lower_bound,
        gap: value - lower_bound,
        best,
    })
}
