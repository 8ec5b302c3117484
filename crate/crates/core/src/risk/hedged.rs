use super::{value_and_measure, RiskMeasureSpec};
use crate::error::{Result, RiskError};
use crate::market::{dot, martingale_measures, superhedge_price, InstrumentSet, Measure, ProbSpace};
use crate::optim::{minimize, MinimizeOptions};
use serde::Serialize;

/// `min_{theta in K} rho(X + G(theta))` with its optimal hedge.
#[derive(Debug, Clone, Serialize)]
pub struct HedgedEvaluation {
    pub value: f64,
    /// Net quantity per instrument.
    pub theta: Vec<f64>,
    /// Quantity per basic gain.
    pub gain_theta: Vec<f64>,
    /// Gradient measure of `rho` at the hedged position.
    pub measure: Measure,
    pub iterations: usize,
}

/// Market-modified evaluation `rho □ nu^H (X)`.
pub fn market_modified(
    base: &RiskMeasureSpec,
    set: &InstrumentSet,
    space: &ProbSpace,
    x: &[f64],
) -> Result<HedgedEvaluation> {
    space.check_position(x)?;
    set.validate(Some(space.len()))?;
    let gains = set.gains();
    if gains.is_empty() {
        let (value, q) = value_and_measure(base, space, x)?;
        return Ok(HedgedEvaluation {
            value,
            theta: vec![0.0; set.len()],
            gain_theta: vec![],
            measure: Measure::from_mass(q)?,
            iterations: 0,
        });
    }
    if *base == RiskMeasureSpec::WorstCase {
        let sh = superhedge_price(space, x, set)?;
        return Ok(HedgedEvaluation {
            value: sh.price,
            theta: sh.theta,
            gain_theta: vec![],
            measure: sh.measure,
            iterations: 0,
        });
    }
    if gains.iter().any(|g| g.lower.is_infinite() || g.upper.is_infinite()) {
        martingale_measures(space, set)?;
    }
    let n = space.len();
    let bounds: Vec<(f64, f64)> = gains.iter().map(|g| (g.lower, g.upper)).collect();
    let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let hedged: Vec<f64> = InstrumentSet::gain_of(&gains, theta, n)
            .iter()
            .zip(x)
            .map(|(g, xi)| g + xi)
            .collect();
        let (v, q) = value_and_measure(base, space, &hedged)?;
        Ok((v, gains.iter().map(|g| -dot(&q, &g.payoff)).collect()))
    };
    let start = vec![0.0; gains.len()];
    let opts = MinimizeOptions::default();
    let m = minimize(objective, &bounds, &[start], &opts)?;
    if !m.converged {
        return Err(RiskError::NonConvergence {
            iterations: m.iterations,
            gap: m.last_decrease,
        });
    }
    let hedged: Vec<f64> = InstrumentSet::gain_of(&gains, &m.x, n)
        .iter()
        .zip(x)
        .map(|(g, xi)| g + xi)
        .collect();
    let (value, q) = value_and_measure(base, space, &hedged)?;
    Ok(HedgedEvaluation {
        value,
        theta: set.net_quantities(&gains, &m.x),
        gain_theta: m.x,
        measure: Measure::from_mass(q)?,
        iterations: m.iterations,
    })
}
