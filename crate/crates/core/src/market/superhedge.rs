use super::lp::{LinearProgram, RowKind};
use super::{dot, Gain, InstrumentSet, Measure, ProbSpace};
use crate::error::{Result, RiskError};
use serde::Serialize;

const ARBITRAGE_TOL: f64 = 1e-9;

/// Interior martingale measure witnessing absence of arbitrage.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleCertificate {
    pub measure: Measure,
    /// Smallest outcome weight; positive for an equivalent measure.
    pub min_weight: f64,
}

/// Superhedging price with its optimal strategy and dual measure.
#[derive(Debug, Clone, Serialize)]
pub struct Superhedge {
    pub price: f64,
    /// Net quantity per instrument.
    pub theta: Vec<f64>,
    /// Measure from the outcome-row duals.
    pub measure: Measure,
    /// `E_Q[-X] - alpha^H(Q)`, equal to `price` at optimality.
    pub dual_value: f64,
    pub duality_gap: f64,
}

/// Gains with quantity bounds widened to the cone they generate.
fn cone_bounds(g: &Gain) -> (f64, f64) {
    let lo = if g.lower < 0.0 { f64::NEG_INFINITY } else { 0.0 };
    let hi = if g.upper > 0.0 { f64::INFINITY } else { 0.0 };
    (lo, hi)
}

/// Finds an equivalent measure under which every admissible gain has
/// nonpositive expectation (zero for two-sided trades), maximizing the
/// smallest outcome weight. Errors with a strategy when arbitrage exists.
pub fn martingale_measures(space: &ProbSpace, set: &InstrumentSet) -> Result<MartingaleCertificate> {
    set.validate(Some(space.len()))?;
    let n = space.len();
    let gains = set.gains();
    if gains.is_empty() {
        let measure = space.reference();
        let min_weight = measure.weights().iter().cloned().fold(f64::INFINITY, f64::min);
        return Ok(MartingaleCertificate { measure, min_weight });
    }

    // arbitrage search: maximize total gain with 0 <= G(theta) <= 1
    let k = gains.len();
    let mut lp = LinearProgram::new(k);
    lp.bounds = gains.iter().map(cone_bounds).collect();
    lp.objective = (0..k).map(|j| gains[j].payoff.iter().sum()).collect();
    for w in 0..n {
        let row: Vec<f64> = gains.iter().map(|g| g.payoff[w]).collect();
        lp.add_row(row.clone(), RowKind::Ge, 0.0);
        lp.add_row(row, RowKind::Le, 1.0);
    }
    let arb = lp.solve_max()?;
    if arb.objective > ARBITRAGE_TOL {
        let gain = InstrumentSet::gain_of(&gains, &arb.x, n);
        return Err(RiskError::Arbitrage {
            theta: set.net_quantities(&gains, &arb.x),
            gain,
        });
    }

    // interior point: max t with q >= t, sum q = 1, E_q[G] in the polar cone
    let mut lp = LinearProgram::new(n + 1);
    lp.bounds[n] = (f64::NEG_INFINITY, f64::INFINITY);
    lp.objective[n] = 1.0;
    let mut ones = vec![1.0; n + 1];
    ones[n] = 0.0;
    lp.add_row(ones, RowKind::Eq, 1.0);
    for w in 0..n {
        let mut row = vec![0.0; n + 1];
        row[w] = 1.0;
        row[n] = -1.0;
        lp.add_row(row, RowKind::Ge, 0.0);
    }
    for g in &gains {
        let (lo, hi) = cone_bounds(g);
        let kind = match (lo < 0.0, hi > 0.0) {
            (true, true) => RowKind::Eq,
            (false, true) => RowKind::Le,
            (true, false) => RowKind::Ge,
            (false, false) => continue,
        };
        let mut row = g.payoff.clone();
        row.push(0.0);
        lp.add_row(row, kind, 0.0);
    }
    let sol = lp.solve_max().map_err(|e| match e {
        RiskError::Infeasible { .. } => {
            RiskError::Internal("no martingale measure although no arbitrage was found".into())
        }
        other => other,
    })?;
    if sol.objective <= 0.0 {
        return Err(RiskError::Internal(
            "martingale measures exist only on the boundary of the simplex".into(),
        ));
    }
    let measure = Measure::new(sol.x[..n].to_vec())?;
    Ok(MartingaleCertificate {
        measure,
        min_weight: sol.objective,
    })
}

/// `inf { m : m + X + G(theta) >= 0, theta in K }` by linear programming.
pub fn superhedge_price(space: &ProbSpace, x: &[f64], set: &InstrumentSet) -> Result<Superhedge> {
    space.check_position(x)?;
    set.validate(Some(space.len()))?;
    let n = space.len();
    let gains = set.gains();
    let k = gains.len();
    let mut lp = LinearProgram::new(k + 1);
    lp.objective[0] = 1.0;
    lp.bounds[0] = (f64::NEG_INFINITY, f64::INFINITY);
    for (j, g) in gains.iter().enumerate() {
        lp.bounds[j + 1] = (g.lower, g.upper);
    }
    for w in 0..n {
        let mut row = vec![1.0];
        row.extend(gains.iter().map(|g| g.payoff[w]));
        lp.add_row(row, RowKind::Ge, -x[w]);
    }
    let sol = lp.solve().map_err(|e| match e {
        RiskError::Unbounded { ray } => match martingale_measures(space, set) {
            Err(arb @ RiskError::Arbitrage { .. }) => arb,
            _ => RiskError::Internal(format!(
                "superhedging LP unbounded without arbitrage (ray {ray:?})"
            )),
        },
        other => other,
    })?;
    let measure = Measure::new(sol.duals.iter().map(|y| y.max(0.0)).collect())?;
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let dual_value = dot(measure.weights(), &neg_x) - set.penalty(&measure);
    let theta = set.net_quantities(&gains, &sol.x[1..]);
    Ok(Superhedge {
        price: sol.objective,
        theta,
        measure,
        dual_value,
        duality_gap: (sol.objective - dual_value).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Constraint, Instrument};

    fn binary() -> (ProbSpace, InstrumentSet) {
        let space = ProbSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let set = InstrumentSet::new(vec![Instrument::new("c", vec![2.0, 0.0], 1.0)], Constraint::Cone)
            .unwrap();
        (space, set)
    }

    #[test]
    fn binary_market_has_unique_measure() {
        let (space, set) = binary();
        let cert = martingale_measures(&space, &set).unwrap();
        assert!((cert.measure.weights()[0] - 0.5).abs() < 1e-12);
        assert!((cert.min_weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mispriced_instrument_is_an_arbitrage() {
        let space = ProbSpace::from_probs(vec![0.5, 0.5]).unwrap();
        let set = InstrumentSet::new(vec![Instrument::new("c", vec![2.0, 1.0], 0.5)], Constraint::Cone)
            .unwrap();
        match martingale_measures(&space, &set) {
            Err(RiskError::Arbitrage { theta, gain }) => {
                assert!(theta[0] > 0.0);
                assert!(gain.iter().all(|g| *g >= -1e-12));
                assert!(gain.iter().any(|g| *g > 1e-9));
            }
            other => panic!("expected arbitrage, got {other:?}"),
        }
    }

    #[test]
    fn replicable_claim_prices_at_expectation() {
        let (space, set) = binary();
        // X = -(C): superhedge cost of paying the claim is its price
        let x = vec![-2.0, 0.0];
        let sh = superhedge_price(&space, &x, &set).unwrap();
        assert!((sh.price - 1.0).abs() < 1e-9);
        assert!((sh.theta[0] - 1.0).abs() < 1e-9);
        assert!(sh.duality_gap < 1e-9);
    }

    #[test]
    fn no_instruments_gives_worst_case_loss() {
        let space = ProbSpace::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        let sh = superhedge_price(&space, &[1.0, -2.0, 0.5], &InstrumentSet::empty()).unwrap();
        assert!((sh.price - 2.0).abs() < 1e-12);
        assert!((sh.measure.weights()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spread_widens_superhedge_price() {
        let space = ProbSpace::uniform(3);
        let payoff = vec![3.0, 1.0, 0.0];
        let mut ins = Instrument::new("c", payoff, 1.5);
        let tight = InstrumentSet::new(vec![ins.clone()], Constraint::Cone).unwrap();
        ins.ask = Some(1.0);
        let wide = InstrumentSet::new(vec![ins], Constraint::Cone).unwrap();
        let x = vec![0.0, -1.0, 1.0];
        let a = superhedge_price(&space, &x, &tight).unwrap();
        let b = superhedge_price(&space, &x, &wide).unwrap();
        assert!(a.price <= b.price + 1e-12);
        assert!(b.duality_gap < 1e-9);
        martingale_measures(&space, &wide).unwrap();
    }

    #[test]
    fn box_constraint_dual_value() {
        let space = ProbSpace::uniform(3);
        let mut ins = Instrument::new("c", vec![3.0, 1.0, 0.0], 1.0);
        ins.lower = Some(-0.5);
        ins.upper = Some(0.5);
        let set = InstrumentSet::new(vec![ins], Constraint::Box).unwrap();
        let x = vec![-3.0, 0.0, 0.0];
        let sh = superhedge_price(&space, &x, &set).unwrap();
        // brute force over theta in the box
        let brute = (0..=10_000)
            .map(|i| {
                let t = -0.5 + 1e-4 * i as f64;
                let payoff = [3.0, 1.0, 0.0];
                (0..3).map(|w| -(x[w] + t * (payoff[w] - 1.0))).fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((sh.price - brute).abs() < 1e-9);
        assert!(sh.duality_gap < 1e-9);
    }
}
