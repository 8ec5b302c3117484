use super::{evaluate, RiskMeasureSpec, S};
use crate::error::{Result, RiskError};
use crate::market::ProbSpace;
use serde::Serialize;

const LADDER_TOL: f64 = 1e-9;

/// Limit of a dilation ladder, with the ladder itself for inspection.
#[derive(Debug, Clone, Serialize)]
pub struct LimitEstimate {
    pub value: f64,
    pub closed_form: bool,
    /// `(gamma, rho_gamma(X) - gamma rho(0))` along the ladder.
    pub ladder: Vec<(f64, f64)>,
    pub monotone: bool,
}

fn ladder(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64], gammas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let zero = vec![0.0; x.len()];
    let rho0 = evaluate(spec, space, &zero)?;
    gammas
        .iter()
        .map(|&g| {
            let v = evaluate(&RiskMeasureSpec::dilated(spec.clone(), g), space, x)?;
            Ok((g, v - g * rho0))
        })
        .collect()
}

/// Ladder values must not increase along the ladder order.
fn non_increasing(l: &[(f64, f64)]) -> bool {
    l.windows(2)
        .all(|w| w[1].1 <= w[0].1 + LADDER_TOL * (1.0 + w[0].1.abs()))
}

fn marginal_closed_form(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64]) -> Result<Option<f64>> {
    Ok(match spec {
        S::Entropic { .. } => Some(-space.expectation(x)),
        S::Dilated { base, .. } => marginal_closed_form(base, space, x)?,
        s if s.is_coherent() => Some(evaluate(s, space, x)?),
        _ => None,
    })
}

fn conservative_closed_form(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64]) -> Result<Option<f64>> {
    Ok(match spec {
        S::Entropic { .. } | S::WorstCase => Some(x.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max)),
        S::Dilated { base, .. } => conservative_closed_form(base, space, x)?,
        s if s.is_coherent() => Some(evaluate(s, space, x)?),
        _ => None,
    })
}

/// `rho_inf(X) = lim_{gamma -> inf} rho_gamma(X)`; requires `rho(0) = 0`.
pub fn marginal_limit(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64]) -> Result<LimitEstimate> {
    let rho0 = evaluate(spec, space, &vec![0.0; x.len()])?;
    if rho0.abs() > 1e-10 {
        return Err(RiskError::Normalization(format!(
            "marginal limit requires rho(0) = 0, got {rho0}"
        )));
    }
    let gammas: Vec<f64> = (0..=8).map(|k| 10f64.powi(k)).collect();
    let lad = ladder(spec, space, x, &gammas)?;
    let monotone = non_increasing(&lad);
    let closed = marginal_closed_form(spec, space, x)?;
    Ok(LimitEstimate {
        value: closed.unwrap_or(lad.last().map(|l| l.1).unwrap_or(f64::NAN)),
        closed_form: closed.is_some(),
        ladder: lad,
        monotone,
    })
}

/// `rho_{0+}(X) = lim_{gamma -> 0+} rho_gamma(X) - gamma rho(0)`.
pub fn conservative_limit(spec: &RiskMeasureSpec, space: &ProbSpace, x: &[f64]) -> Result<LimitEstimate> {
    let gammas: Vec<f64> = (0..=8).map(|k| 10f64.powi(-k)).collect();
    let lad = ladder(spec, space, x, &gammas)?;
    // gamma decreases along the ladder, values must not decrease
    let rev: Vec<(f64, f64)> = lad.iter().rev().cloned().collect();
    let monotone = non_increasing(&rev);
    let closed = conservative_closed_form(spec, space, x)?;
    Ok(LimitEstimate {
        value: closed.unwrap_or(lad.last().map(|l| l.1).unwrap_or(f64::NAN)),
        closed_form: closed.is_some(),
        ladder: lad,
        monotone,
    })
}
