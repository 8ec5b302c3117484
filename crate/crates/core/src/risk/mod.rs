//! Static convex risk measures on a finite outcome set.

mod axioms;
mod hedged;
mod limits;
mod penalty;

pub use axioms::{axiom_check, AxiomReport, AxiomResult};
pub use hedged::{market_modified, HedgedEvaluation};
pub use limits::{conservative_limit, marginal_limit, LimitEstimate};
pub use penalty::{dual_gap, penalty, penalty_numerical, DualGap, PenaltyEvaluation, PenaltyValue};

use crate::error::{validation, Result, RiskError};
use crate::kernel::GridConvexFunction;
use crate::market::{superhedge_price, Constraint, Instrument, InstrumentSet, Measure, ProbSpace};
use serde::{Deserialize, Serialize};

pub const MAX_NESTING: usize = 8;

/// Allowance on cumulated probabilities when comparing with a level.
const PROB_TOL: f64 = 1e-12;

/// Tagged description of a risk measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskMeasureSpec {
    /// `gamma ln E[exp(-X / gamma)]`.
    Entropic { gamma: f64 },
    WorstCase,
    #[serde(rename = "var")]
    VaR { eps: f64 },
    #[serde(rename = "avar")]
    AVaR { lambda: f64 },
    #[serde(rename = "cvar")]
    CVaR { lambda: f64 },
    /// `inf { m : E[L(-X - m)] <= anchor }` for an increasing convex loss `L`.
    Shortfall { loss: GridConvexFunction, anchor: f64 },
    /// Superhedging price; missing fields are filled from the scenario market.
    SetGenerated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instruments: Option<Vec<Instrument>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constraint: Option<Constraint>,
    },
    /// `gamma rho(X / gamma)`.
    Dilated { base: Box<RiskMeasureSpec>, gamma: f64 },
    /// `min_theta rho(X + G(theta))`.
    MarketModified {
        base: Box<RiskMeasureSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instruments: Option<Vec<Instrument>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constraint: Option<Constraint>,
    },
    /// `inf_F rho_a(X - F) + rho_b(F)`.
    InfConv { a: Box<RiskMeasureSpec>, b: Box<RiskMeasureSpec> },
}

pub(crate) use RiskMeasureSpec as S;

impl RiskMeasureSpec {
    pub fn entropic(gamma: f64) -> Self {
        S::Entropic { gamma }
    }

    pub fn set_generated(set: &InstrumentSet) -> Self {
        S::SetGenerated {
            instruments: Some(set.instruments.clone()),
            constraint: Some(set.constraint),
        }
    }

    pub fn dilated(base: RiskMeasureSpec, gamma: f64) -> Self {
        S::Dilated {
            base: Box::new(base),
            gamma,
        }
    }

    pub fn market_modified(base: RiskMeasureSpec, set: &InstrumentSet) -> Self {
        S::MarketModified {
            base: Box::new(base),
            instruments: Some(set.instruments.clone()),
            constraint: Some(set.constraint),
        }
    }

    pub fn inf_conv(a: RiskMeasureSpec, b: RiskMeasureSpec) -> Self {
        S::InfConv {
            a: Box::new(a),
            b: Box::new(b),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            S::Dilated { base, .. } | S::MarketModified { base, .. } => 1 + base.depth(),
            S::InfConv { a, b } => 1 + a.depth().max(b.depth()),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() > MAX_NESTING {
            return validation(format!("risk measure nesting depth exceeds {MAX_NESTING}"));
        }
        self.validate_node()
    }

    fn validate_node(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                validation(format!("{name} must be positive and finite, got {v}"))
            }
        };
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                validation(format!("{name} must lie in (0, 1), got {v}"))
            }
        };
        match self {
            S::Entropic { gamma } => positive("gamma", *gamma),
            S::WorstCase => Ok(()),
            S::VaR { eps } => unit("eps", *eps),
            S::AVaR { lambda } | S::CVaR { lambda } => unit("lambda", *lambda),
            S::Shortfall { loss, anchor } => {
                if !anchor.is_finite() {
                    return validation("shortfall anchor must be finite");
                }
                let (lo, hi) = loss.finite_range();
                let v = loss.values();
                let sl = loss.left_recession_slope();
                if v[lo..=hi].windows(2).any(|w| w[1] < w[0]) || (sl.is_finite() && sl < 0.0) {
                    return validation("shortfall loss must be nondecreasing");
                }
                let s = loss.right_recession_slope();
                if !(s > 0.0 || loss.domain().1.is_finite()) {
                    return validation("shortfall loss must grow without bound");
                }
                Ok(())
            }
            S::SetGenerated { .. } => self.market().map(|_| ()),
            S::Dilated { base, gamma } => {
                positive("gamma", *gamma)?;
                base.validate_node()
            }
            S::MarketModified { base, .. } => {
                self.market()?;
                base.validate_node()
            }
            S::InfConv { a, b } => {
                a.validate_node()?;
                b.validate_node()
            }
        }
    }

    /// Instrument set of a `SetGenerated` or `MarketModified` node.
    pub fn market(&self) -> Result<InstrumentSet> {
        match self {
            S::SetGenerated {
                instruments,
                constraint,
            }
            | S::MarketModified {
                instruments,
                constraint,
                ..
            } => match (instruments, constraint) {
                (Some(i), Some(c)) => InstrumentSet::new(i.clone(), *c),
                _ => validation("instrument set not resolved; supply instruments and constraint"),
            },
            _ => Err(RiskError::Capability("risk measure has no instrument set".into())),
        }
    }

    /// Fills missing instrument sets from `default`, recursively.
    pub fn resolve_market(&mut self, default: &InstrumentSet) {
        match self {
            S::SetGenerated {
                instruments,
                constraint,
            } => {
                instruments.get_or_insert_with(|| default.instruments.clone());
                constraint.get_or_insert(default.constraint);
            }
            S::MarketModified {
                base,
                instruments,
                constraint,
            } => {
                instruments.get_or_insert_with(|| default.instruments.clone());
                constraint.get_or_insert(default.constraint);
                base.resolve_market(default);
            }
            S::Dilated { base, .. } => base.resolve_market(default),
            S::InfConv { a, b } => {
                a.resolve_market(default);
                b.resolve_market(default);
            }
            _ => {}
        }
    }

    /// Known positive homogeneity.
    pub fn is_coherent(&self) -> bool {
        match self {
            S::WorstCase | S::VaR { .. } | S::AVaR { .. } | S::CVaR { .. } => true,
            S::SetGenerated { .. } => self.market().map(|m| m.is_cone()).unwrap_or(false),
            S::Dilated { base, .. } => base.is_coherent(),
            S::MarketModified { base, .. } => {
                base.is_coherent() && self.market().map(|m| m.is_cone()).unwrap_or(false)
            }
            S::InfConv { a, b } => a.is_coherent() && b.is_coherent(),
            S::Entropic { .. } | S::Shortfall { .. } => false,
        }
    }

    /// Differentiable everywhere (drives solver tolerances).
    pub fn is_smooth(&self) -> bool {
        match self {
            S::Entropic { .. } => true,
            S::Dilated { base, .. } | S::MarketModified { base, .. } => base.is_smooth(),
            S::InfConv { a, b } => a.is_smooth() || b.is_smooth(),
            _ => false,
        }
    }

    pub fn evaluate(&self, space: &ProbSpace, x: &[f64]) -> Result<f64> {
        evaluate(self, space, x)
    }
}

/// `rho(X)`.
pub fn evaluate(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64]) -> Result<f64> {
    spec.validate()?;
    space.check_position(x)?;
    Ok(value_and_measure(spec, space, x)?.0)
}

/// A measure `Q` with `rho(X) = E_Q[-X] - alpha(Q)`.
pub fn subdifferential_measure(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64]) -> Result<Measure> {
    spec.validate()?;
    space.check_position(x)?;
    if contains_var(spec) {
        return Err(RiskError::Capability(
            "value at risk is not convex and has no subdifferential".into(),
        ));
    }
    let (_, q) = value_and_measure(spec, space, x)?;
    Measure::from_mass(q)
}

fn contains_var(spec: &RiskMeasureSpec) -> bool {
    match spec {
        S::VaR { .. } => true,
        S::Dilated { base, .. } | S::MarketModified { base, .. } => contains_var(base),
        S::InfConv { a, b } => contains_var(a) || contains_var(b),
        _ => false,
    }
}

/// Value and a gradient measure: `-q` is a (sub)gradient of `rho` at `x`
/// (for value at risk, the local derivative).
pub(crate) fn value_and_measure(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = space.probs();
    match spec {
        S::Entropic { gamma } => Ok(entropic(*gamma, p, x)),
        S::WorstCase => {
            let i = argmin(x);
            Ok((-x[i], unit_vector(x.len(), i)))
        }
        S::VaR { eps } => {
            let i = var_index(*eps, p, x);
            Ok((-x[i], unit_vector(x.len(), i)))
        }
        S::AVaR { lambda } => {
            let q = avar_measure(*lambda, p, x);
            let v = -q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            Ok((v, q))
        }
        S::CVaR { lambda } => Ok((cvar(*lambda, p, x), avar_measure(*lambda, p, x))),
        S::Shortfall { loss, anchor } => shortfall(loss, *anchor, p, x),
        S::SetGenerated { .. } => {
            let sh = superhedge_price(space, x, &spec.market()?)?;
            Ok((sh.price, sh.measure.weights().to_vec()))
        }
        S::Dilated { base, gamma } => {
            let scaled: Vec<f64> = x.iter().map(|v| v / gamma).collect();
            let (v, q) = value_and_measure(base, space, &scaled)?;
            Ok((gamma * v, q))
        }
        S::MarketModified { base, .. } => {
            let h = market_modified(base, &spec.market()?, space, x)?;
            Ok((h.value, h.measure.weights().to_vec()))
        }
        S::InfConv { a, b } => {
            let r = crate::transfer::inf_convolve_measures(a, b, space, x)?;
            Ok((r.value, r.measure_a.weights().to_vec()))
        }
    }
}

fn unit_vector(n: usize, i: usize) -> Vec<f64> {
    let mut q = vec![0.0; n];
    q[i] = 1.0;
    q
}

/// First index of the smallest entry.
fn argmin(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v < x[best] {
            best = i;
        }
    }
    best
}

fn entropic(gamma: f64, p: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
    let m = x.iter().map(|v| -v / gamma).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = p.iter().zip(x).map(|(pi, xi)| pi * (-xi / gamma - m).exp()).collect();
    let s: f64 = w.iter().sum();
    (gamma * (m + s.ln()), w.iter().map(|wi| wi / s).collect())
}

/// Indices sorted by value, ties by index.
fn sorted_indices(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(i.cmp(&j)));
    idx
}

/// Index attaining `max { x_i : P(X < x_i) <= eps }`.
fn var_index(eps: f64, p: &[f64], x: &[f64]) -> usize {
    let idx = sorted_indices(x);
    let mut below = 0.0;
    let mut best = idx[0];
    let mut k = 0;
    while k < idx.len() {
        let v = x[idx[k]];
        if below > eps + PROB_TOL {
            break;
        }
        best = idx[k];
        while k < idx.len() && x[idx[k]] == v {
            below += p[idx[k]];
            k += 1;
        }
    }
    best
}

/// Greedy packing of mass `p_i / lambda` on the lowest outcomes.
fn avar_measure(lambda: f64, p: &[f64], x: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; x.len()];
    let mut remaining = 1.0;
    for i in sorted_indices(x) {
        if remaining <= 0.0 {
            break;
        }
        let m = (p[i] / lambda).min(remaining);
        q[i] = m;
        remaining -= m;
    }
    q
}

/// `min_K (1/lambda) E[(K - X)^+] - K` over `K` in the outcome values.
fn cvar(lambda: f64, p: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .map(|&k| {
            let tail: f64 = p.iter().zip(x).map(|(pi, xi)| pi * (k - xi).max(0.0)).sum();
            tail / lambda - k
        })
        .fold(f64::INFINITY, f64::min)
}

fn shortfall(loss: &GridConvexFunction, anchor: f64, p: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let phi = |m: f64| -> f64 { p.iter().zip(x).map(|(pi, xi)| pi * loss.eval(-xi - m)).sum() };
    let xmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let xmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut span = xmax - xmin + 1.0;
    let mut lo = -xmax - span;
    let mut hi = -xmin + span;
    let mut tries = 0;
    while !(phi(hi) <= anchor) {
        tries += 1;
        if tries > 60 {
            return Err(RiskError::NoSolution(format!(
                "shortfall constraint E[L(-X - m)] <= {anchor} unattainable for m up to {hi}"
            )));
        }
        span *= 2.0;
        hi = -xmin + span;
    }
    let mut tries = 0;
    while phi(lo) <= anchor {
        tries += 1;
        if tries > 60 {
            return Err(RiskError::Domain("shortfall risk is unbounded below".into()));
        }
        span *= 2.0;
        lo = -xmax - span;
    }
    // phi(lo) > anchor >= phi(hi)
    while hi - lo > 1e-10 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if phi(mid) <= anchor {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // phi is affine between breakpoints m = -x_i - z_j: solve exactly
    let mut pts = vec![lo, hi];
    for xi in x {
        for z in loss.grid() {
            let b = -xi - z;
            if b > lo && b < hi {
                pts.push(b);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    let mut m_star = hi;
    for w in pts.windows(2) {
        let (fa, fc) = (phi(w[0]), phi(w[1]));
        if fa > anchor && fc <= anchor {
            m_star = if fa.is_finite() {
                w[0] + (fa - anchor) / (fa - fc) * (w[1] - w[0])
            } else {
                w[1]
            };
            break;
        }
    }
    let mass: Vec<f64> = p
        .iter()
        .zip(x)
        .map(|(pi, xi)| {
            let s = loss.subdifferential(-xi - m_star).map_or(0.0, |(_, r)| r);
            pi * if s.is_finite() { s.max(0.0) } else { 0.0 }
        })
        .collect();
    let total: f64 = mass.iter().sum();
    let q = if total > 0.0 {
        mass.iter().map(|m| m / total).collect()
    } else {
        p.to_vec()
    };
    Ok((m_star, q))
}
