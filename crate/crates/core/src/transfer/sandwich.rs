use crate::error::Result;
use crate::market::lp::{LinearProgram, RowKind};
use crate::market::{martingale_measures, Gain, InstrumentSet, Measure, ProbSpace};
use crate::risk::{conservative_limit, penalty, value_and_measure, RiskMeasureSpec, S};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const CORPUS: usize = 64;

/// Feasibility of `rho_a □ rho_b` with witnesses.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichVerdict {
    pub feasible: bool,
    /// Smallest `rho^a_{0+}(xi) + rho^b_{0+}(-xi)` seen.
    pub min_sum: f64,
    /// A position with negative sum, when infeasible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violating: Option<Vec<f64>>,
    /// A measure with both penalties finite, when found.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Measure>,
}

fn strip_dilation(spec: &RiskMeasureSpec) -> &RiskMeasureSpec {
    match spec {
        S::Dilated { base, .. } => strip_dilation(base),
        s => s,
    }
}

fn both_entropic(a: &RiskMeasureSpec, b: &RiskMeasureSpec) -> bool {
    matches!(strip_dilation(a), S::Entropic { .. }) && matches!(strip_dilation(b), S::Entropic { .. })
}

/// Strong arbitrage of the pooled gains: `G_a(theta_a) + G_b(theta_b) > 0`
/// everywhere. Returns `xi = -G_a(theta_a)` with its margin.
fn pooled_violation(ga: &[Gain], gb: &[Gain], n: usize) -> Result<Option<(Vec<f64>, f64)>> {
    let k = ga.len() + gb.len();
    if k == 0 {
        return Ok(None);
    }
    let all: Vec<&Gain> = ga.iter().chain(gb).collect();
    let mut lp = LinearProgram::new(k + 1);
    for (j, g) in all.iter().enumerate() {
        let lo = if g.lower < 0.0 { f64::NEG_INFINITY } else { 0.0 };
        let hi = if g.upper > 0.0 { f64::INFINITY } else { 0.0 };
        lp.bounds[j] = (lo, hi);
    }
    lp.bounds[k] = (f64::NEG_INFINITY, 1.0);
    lp.objective[k] = 1.0;
    for w in 0..n {
        let mut row: Vec<f64> = all.iter().map(|g| g.payoff[w]).collect();
        row.push(-1.0);
        lp.add_row(row, RowKind::Ge, 0.0);
    }
    // normalize the scale of the pooled strategy
    for w in 0..n {
        let mut row: Vec<f64> = all.iter().map(|g| g.payoff[w]).collect();
        row.push(0.0);
        lp.add_row(row, RowKind::Le, 1.0);
    }
    let sol = lp.solve_max()?;
    if sol.objective > 1e-9 {
        let ga_theta = InstrumentSet::gain_of(ga, &sol.x[..ga.len()], n);
        let xi = ga_theta.iter().map(|v| -v).collect();
        return Ok(Some((xi, sol.objective)));
    }
    Ok(None)
}

/// Tests `rho^a_{0+}(xi) + rho^b_{0+}(-xi) >= 0` on a seeded corpus, with an
/// exact linear-programming test for pairs of set-generated measures, and
/// searches a common-domain measure.
pub fn sandwich_check(a: &RiskMeasureSpec, b: &RiskMeasureSpec, space: &ProbSpace, seed: u64) -> Result<SandwichVerdict> {
    a.validate()?;
    b.validate()?;
    let n = space.len();
    let mut min_sum = f64::INFINITY;
    let mut violating = None;

    if let (S::SetGenerated { .. }, S::SetGenerated { .. }) = (strip_dilation(a), strip_dilation(b)) {
        let ma = strip_dilation(a).market()?;
        let mb = strip_dilation(b).market()?;
        if let Some((xi, margin)) = pooled_violation(&ma.gains(), &mb.gains(), n)? {
            min_sum = -margin;
            violating = Some(xi);
        }
    }

    if !both_entropic(a, b) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut corpus: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = s;
                corpus.push(e);
            }
        }
        for _ in 0..CORPUS {
            corpus.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        for xi in corpus {
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            let sum = conservative_limit(a, space, &xi)?.value + conservative_limit(b, space, &neg)?.value;
            if sum < min_sum {
                min_sum = sum;
                if sum < -1e-9 && violating.is_none() {
                    violating = Some(xi);
                }
            }
        }
    } else {
        min_sum = 0.0;
    }

    // common-domain witness
    let zero = vec![0.0; n];
    let mut cands = vec![space.reference()];
    cands.push(Measure::from_mass(value_and_measure(a, space, &zero)?.1)?);
    cands.push(Measure::from_mass(value_and_measure(b, space, &zero)?.1)?);
    for spec in [a, b] {
        if let S::SetGenerated { .. } = strip_dilation(spec) {
            if let Ok(c) = martingale_measures(space, &strip_dilation(spec).market()?) {
                cands.push(c.measure);
            }
        }
    }
    let mut witness = None;
    for q in cands {
        let pa = penalty(a, space, &q)?.value.value();
        let pb = penalty(b, space, &q)?.value.value();
        if pa.is_some() && pb.is_some() {
            witness = Some(q);
            break;
        }
    }
    Ok(SandwichVerdict {
        feasible: violating.is_none(),
        min_sum,
        violating,
        witness,
    })
}
