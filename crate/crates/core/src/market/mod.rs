//! Finite probability spaces, payoffs, hedging instruments and the linear
//! programs behind superhedging prices.

pub mod lp;
mod superhedge;

pub use superhedge::{martingale_measures, superhedge_price, MartingaleCertificate, Superhedge};

use crate::error::{validation, Result};
use serde::{Deserialize, Serialize};
use std::ops::Deref;

const PROB_SUM_TOL: f64 = 1e-12;
const MEASURE_SUM_TOL: f64 = 1e-9;
/// Expected gains this small count as martingale (zero) in penalties.
pub const MARTINGALE_TOL: f64 = 1e-9;

/// Finite outcome set with a full-support reference probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbSpace {
    labels: Vec<String>,
    probs: Vec<f64>,
}

impl ProbSpace {
    pub fn new(labels: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || labels.len() != probs.len() {
            return validation("probability space needs one label per outcome and at least one outcome");
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return validation(format!("outcome probabilities must be positive, got {p}"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return validation(format!("outcome probabilities sum to {sum}, not 1"));
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return validation("outcome labels must be unique");
        }
        Ok(ProbSpace { labels, probs })
    }

    /// Unlabelled space (`w0`, `w1`, ...) from raw probabilities.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let labels = (0..probs.len()).map(|i| format!("w{i}")).collect();
        Self::new(labels, probs)
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_probs(vec![1.0 / n as f64; n]).expect("uniform space is valid")
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn expectation(&self, x: &[f64]) -> f64 {
        dot(&self.probs, x)
    }

    /// The reference probability as a [`Measure`].
    pub fn reference(&self) -> Measure {
        Measure {
            weights: self.probs.clone(),
        }
    }

    pub fn check_position(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return validation(format!(
                "position has {} entries, space has {} outcomes",
                x.len(),
                self.len()
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return validation("positions must be finite");
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Payoff at the horizon, one entry per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Position(pub Vec<f64>);

impl Position {
    pub fn constant(n: usize, c: f64) -> Self {
        Position(vec![c; n])
    }

    /// Copy shifted to zero mean under `space`.
    pub fn centered(&self, space: &ProbSpace) -> Position {
        let m = space.expectation(&self.0);
        Position(self.0.iter().map(|v| v - m).collect())
    }
}

impl Deref for Position {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Position {
    fn from(v: Vec<f64>) -> Self {
        Position(v)
    }
}

/// Probability vector on the outcome set (absolute continuity is automatic
/// since the reference measure has full support).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    /// Validates and renormalizes weights summing to one within `1e-9`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
            return validation("measure weights must be finite and nonempty");
        }
        if let Some(w) = weights.iter().find(|w| **w < -MEASURE_SUM_TOL) {
            return validation(format!("measure weights must be nonnegative, got {w}"));
        }
        let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        if (sum - 1.0).abs() > MEASURE_SUM_TOL {
            return validation(format!("measure weights sum to {sum}, not 1"));
        }
        Ok(Measure {
            weights: weights.iter().map(|w| w.max(0.0) / sum).collect(),
        })
    }

    /// Normalizes arbitrary nonnegative mass (used for Gibbs-type weights).
    pub fn from_mass(mass: Vec<f64>) -> Result<Self> {
        let sum: f64 = mass.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || mass.iter().any(|m| *m < 0.0) {
            return validation("cannot normalize mass vector");
        }
        Ok(Measure {
            weights: mass.iter().map(|m| m / sum).collect(),
        })
    }

    pub fn dirac(n: usize, i: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Measure { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn expectation(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x)
    }

    /// Convex combination `(1 - t) self + t other`.
    pub fn mix(&self, other: &Measure, t: f64) -> Measure {
        Measure {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
        }
    }
}

/// Trading restriction on instrument quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Any real quantity.
    #[serde(alias = "unconstrained")]
    Cone,
    /// Long positions only.
    Nonneg,
    /// Per-instrument `[lower, upper]` on the net quantity.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub name: String,
    /// Cash flow `C_i`, nonnegative per outcome.
    pub payoff: Vec<f64>,
    /// Price paid when buying (upper end of the coherent price band).
    pub bid: f64,
    /// Price received when selling; defaults to `bid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl Instrument {
    pub fn new(name: impl Into<String>, payoff: Vec<f64>, price: f64) -> Self {
        Instrument {
            name: name.into(),
            payoff,
            bid: price,
            ask: None,
            lower: None,
            upper: None,
        }
    }

    pub fn ask(&self) -> f64 {
        self.ask.unwrap_or(self.bid)
    }
}

/// Which side of an instrument a basic gain trades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Single price; quantity may carry either sign.
    Net,
    /// Buy at `bid`: gain `C - bid`, quantity >= 0.
    Long,
    /// Sell at `ask`: gain `ask - C`, quantity >= 0.
    Short,
}

/// Basic gain `G` with admissible quantity interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub instrument: usize,
    pub side: Side,
    pub payoff: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl Gain {
    /// Support function `sup_{theta in [lower, upper]} theta * e`, with
    /// `|e| <= MARTINGALE_TOL` treated as zero.
    pub fn support(&self, e: f64) -> f64 {
        if e.abs() <= MARTINGALE_TOL {
            0.0
        } else if e > 0.0 {
            if self.upper.is_finite() {
                self.upper * e
            } else {
                f64::INFINITY
            }
        } else if e < 0.0 {
            if self.lower.is_finite() {
                self.lower * e
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        }
    }
}

/// Hedging instruments with prices and a trading constraint.
///
/// Redundant instruments are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSet {
    pub instruments: Vec<Instrument>,
    pub constraint: Constraint,
}

impl InstrumentSet {
    pub fn new(instruments: Vec<Instrument>, constraint: Constraint) -> Result<Self> {
        let set = InstrumentSet {
            instruments,
            constraint,
        };
        set.validate(None)?;
        Ok(set)
    }

    pub fn empty() -> Self {
        InstrumentSet {
            instruments: Vec::new(),
            constraint: Constraint::Cone,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.instruments.len()
    }

    pub fn validate(&self, outcomes: Option<usize>) -> Result<()> {
        let mut names: Vec<&str> = self.instruments.iter().map(|i| i.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return validation("instrument names must be unique");
        }
        for ins in &self.instruments {
            if let Some(n) = outcomes {
                if ins.payoff.len() != n {
                    return validation(format!(
                        "instrument `{}` has {} payoff entries, expected {n}",
                        ins.name,
                        ins.payoff.len()
                    ));
                }
            }
            if ins.payoff.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return validation(format!(
                    "instrument `{}` must have finite nonnegative cash flows",
                    ins.name
                ));
            }
            if !ins.bid.is_finite() || !ins.ask().is_finite() {
                return validation(format!("instrument `{}` has a non-finite price", ins.name));
            }
            if ins.ask() > ins.bid {
                return validation(format!(
                    "instrument `{}`: ask {} exceeds bid {} (coherent quotes need ask <= bid)",
                    ins.name,
                    ins.ask(),
                    ins.bid
                ));
            }
            if self.constraint == Constraint::Box {
                let (lo, hi) = (ins.lower.unwrap_or(0.0), ins.upper.unwrap_or(0.0));
                if ins.lower.is_none() || ins.upper.is_none() {
                    return validation(format!(
                        "instrument `{}` needs lower and upper bounds under a box constraint",
                        ins.name
                    ));
                }
                if !(lo <= 0.0 && hi >= 0.0) {
                    return validation(format!(
                        "instrument `{}`: box [{lo}, {hi}] must contain 0",
                        ins.name
                    ));
                }
            }
        }
        Ok(())
    }

    /// Basic gains after bid/ask doubling. A single-priced instrument
    /// yields one `Net` gain; a quoted spread yields `Long` and `Short`
    /// gains with nonnegative quantities.
    pub fn gains(&self) -> Vec<Gain> {
        let mut out = Vec::new();
        for (i, ins) in self.instruments.iter().enumerate() {
            let (lo, hi) = match self.constraint {
                Constraint::Cone => (f64::NEG_INFINITY, f64::INFINITY),
                Constraint::Nonneg => (0.0, f64::INFINITY),
                Constraint::Box => (ins.lower.unwrap_or(0.0), ins.upper.unwrap_or(0.0)),
            };
            if ins.ask() == ins.bid {
                out.push(Gain {
                    instrument: i,
                    side: Side::Net,
                    payoff: ins.payoff.iter().map(|c| c - ins.bid).collect(),
                    lower: lo,
                    upper: hi,
                });
            } else {
                if hi > 0.0 {
                    out.push(Gain {
                        instrument: i,
                        side: Side::Long,
                        payoff: ins.payoff.iter().map(|c| c - ins.bid).collect(),
                        lower: 0.0,
                        upper: hi,
                    });
                }
                if lo < 0.0 {
                    out.push(Gain {
                        instrument: i,
                        side: Side::Short,
                        payoff: ins.payoff.iter().map(|c| ins.ask() - c).collect(),
                        lower: 0.0,
                        upper: -lo,
                    });
                }
            }
        }
        out
    }

    /// Whether the admissible set is a cone (coherent generated measure).
    pub fn is_cone(&self) -> bool {
        self.constraint != Constraint::Box
            || self
                .instruments
                .iter()
                .all(|i| i.lower.unwrap_or(0.0) == 0.0 && i.upper.unwrap_or(0.0) == 0.0)
    }

    /// Net quantity per instrument from per-gain quantities.
    pub fn net_quantities(&self, gains: &[Gain], theta: &[f64]) -> Vec<f64> {
        let mut net = vec![0.0; self.instruments.len()];
        for (g, t) in gains.iter().zip(theta) {
            match g.side {
                Side::Net | Side::Long => net[g.instrument] += t,
                Side::Short => net[g.instrument] -= t,
            }
        }
        net
    }

    /// `G(theta)` for per-gain quantities.
    pub fn gain_of(gains: &[Gain], theta: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (g, t) in gains.iter().zip(theta) {
            for (o, p) in out.iter_mut().zip(&g.payoff) {
                *o += t * p;
            }
        }
        out
    }

    /// `alpha^H(Q) = sup_{theta in K} E_Q[G(theta)]`.
    pub fn penalty(&self, q: &Measure) -> f64 {
        self.gains()
            .iter()
            .map(|g| g.support(q.expectation(&g.payoff)))
            .sum()
    }
}
