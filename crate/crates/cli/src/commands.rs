use crate::config::Tolerances;
use convexrisk::dynamics::{
    axiom_check_dynamic, bsde_solve_from, dual_bound, dual_optimal_control, dynamic_inf_convolve, entropic_exact,
    girsanov_reweight, lattice_hedge, write_csv, BsdeSolution, CoefficientSpec, Lattice, PathTree, Tree,
};
use convexrisk::market::{martingale_measures, superhedge_price};
use convexrisk::risk::{market_modified, penalty, subdifferential_measure, PenaltyValue, RiskMeasureSpec};
use convexrisk::scenario::{BsdeConfig, Scenario, TreeKind};
use convexrisk::transfer::{borch_closed_form, sandwich_check, solve_transfer, TransferProblem};
use convexrisk::{Result, RiskError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

/// One asserted certificate.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Command output before wrapping into a report.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub checks: Vec<Check>,
    /// Lattice rows for `--format csv` on dynamic commands.
    pub csv: Option<String>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        });
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub fn price(sc: &Scenario, tol: &Tolerances) -> Result<Outcome> {
    need(!sc.risk_measures.is_empty() && !sc.positions.is_empty(), "price needs risk_measures and positions")?;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for (rname, spec) in &sc.risk_measures {
        for (pname, x) in &sc.positions {
            let value = spec.evaluate(&sc.space, x)?;
            let mut row = json!({
                "risk_measure": rname,
                "position": pname,
                "value": value,
                "coherent": spec.is_coherent(),
            });
            match subdifferential_measure(spec, &sc.space, x) {
                Ok(q) => {
                    let pen = penalty(spec, &sc.space, &q)?;
                    let residual = match pen.value {
                        PenaltyValue::Finite { value: a } => value - (-q.expectation(x) - a),
                        _ => f64::INFINITY,
                    };
                    out.check(format!("fenchel/{rname}/{pname}"), residual.abs(), tol.get("fenchel"));
                    row["measure"] = to_value(&q);
                    row["penalty"] = to_value(&pen.value);
                    row["fenchel_residual"] = json!(residual);
                }
                Err(RiskError::Capability(m)) => row["certificate"] = json!(format!("unavailable: {m}")),
                Err(e) => return Err(e),
            }
            rows.push(row);
        }
    }
    out.result = json!({ "evaluations": rows });
    Ok(out)
}

pub fn penalties(sc: &Scenario) -> Result<Outcome> {
    need(!sc.risk_measures.is_empty(), "penalty needs risk_measures")?;
    let mut measures: Vec<(String, convexrisk::market::Measure)> =
        sc.measures.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    if !sc.measures.contains_key("reference") {
        measures.insert(0, ("reference".into(), sc.space.reference()));
    }
    let mut rows = Vec::new();
    for (rname, spec) in &sc.risk_measures {
        for (qname, q) in &measures {
            let p = penalty(spec, &sc.space, q)?;
            rows.push(json!({"risk_measure": rname, "measure": qname, "penalty": to_value(&p)}));
        }
    }
    Ok(Outcome {
        result: json!({ "penalties": rows }),
        ..Default::default()
    })
}

fn entropic_gamma(spec: &RiskMeasureSpec) -> Option<f64> {
    match spec {
        RiskMeasureSpec::Entropic { gamma } => Some(*gamma),
        RiskMeasureSpec::Dilated { base, gamma } => entropic_gamma(base).map(|g| g * gamma),
        _ => None,
    }
}

pub fn transfer(sc: &Scenario, tol: &Tolerances, seed: u64) -> Result<Outcome> {
    let t = sc
        .transfer
        .as_ref()
        .ok_or_else(|| RiskError::Validation("scenario has no transfer block".into()))?;
    let market = sc.market();
    let problem = TransferProblem {
        rho_a: sc.risk_measure(&t.rho_a)?.clone(),
        rho_b: sc.risk_measure(&t.rho_b)?.clone(),
        x_a: sc.position(&t.x_a)?.to_vec(),
        x_b: sc.position(&t.x_b)?.to_vec(),
        instruments_a: t.hedge_a.then(|| market.clone()),
        instruments_b: t.hedge_b.then(|| market.clone()),
    };
    let sol = solve_transfer(&sc.space, &problem)?;
    let verdict = sandwich_check(&problem.rho_a, &problem.rho_b, &sc.space, seed)?;
    let mut out = Outcome::default();
    let gap_tol = tol.get("transfer_gap");
    out.check("transfer/duality_gap", sol.duality_gap.abs(), gap_tol);
    out.check("transfer/residual_a", sol.certificate.residual_a.abs(), gap_tol);
    out.check("transfer/residual_b", sol.certificate.residual_b.abs(), gap_tol);
    out.check("transfer/spread_nonnegative", (-sol.spread).max(0.0), gap_tol);
    let mut result = json!({ "solution": to_value(&sol), "sandwich": to_value(&verdict) });
    if let (Some(ga), Some(gb), false, false) = (entropic_gamma(&problem.rho_a), entropic_gamma(&problem.rho_b), t.hedge_a, t.hedge_b) {
        let b = borch_closed_form(ga, gb, &problem.x_a, &problem.x_b, &RiskMeasureSpec::entropic(1.0))?;
        let mean = sc.space.expectation(&b.f_star);
        let centered: Vec<f64> = b.f_star.iter().map(|f| f - mean).collect();
        let dist = centered
            .iter()
            .zip(&sol.f_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        out.check("transfer/borch_f_star", dist, tol.get("borch"));
        result["borch"] = json!({ "f_star_centered": centered, "sup_distance": dist });
    }
    out.result = result;
    Ok(out)
}

pub fn hedge(sc: &Scenario, tol: &Tolerances) -> Result<Outcome> {
    need(!sc.risk_measures.is_empty() && !sc.positions.is_empty(), "hedge needs risk_measures and positions")?;
    let market = sc.market();
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for (rname, spec) in &sc.risk_measures {
        for (pname, x) in &sc.positions {
            let unhedged = spec.evaluate(&sc.space, x)?;
            let h = market_modified(spec, &market, &sc.space, x)?;
            out.check(
                format!("hedge/no_worse/{rname}/{pname}"),
                (h.value - unhedged).max(0.0),
                tol.get("fenchel"),
            );
            rows.push(json!({
                "risk_measure": rname,
                "position": pname,
                "unhedged": unhedged,
                "hedged": to_value(&h),
            }));
        }
    }
    let mut result = json!({ "hedges": rows });
    if let Some(cfg) = sc.bsde.as_ref().filter(|c| c.cone.is_some()) {
        let tree = build_tree(cfg)?;
        let xi = cfg.terminal.terminal(&*tree)?;
        let h = lattice_hedge(&cfg.coefficient, &xi, cfg.cone.as_deref().unwrap_or_default(), &*tree)?;
        let unhedged = risk(&cfg.coefficient, &xi, &*tree, tol)?.root();
        out.check("hedge/lattice_no_worse", (h.y.root() - unhedged).max(0.0), tol.get("fenchel"));
        result["lattice_hedge"] = json!({ "root": h.y.root(), "theta_root": h.theta.root(), "unhedged_root": unhedged });
    }
    out.result = result;
    Ok(out)
}

pub fn superhedge(sc: &Scenario, tol: &Tolerances) -> Result<Outcome> {
    let market = sc.market();
    let cert = martingale_measures(&sc.space, &market)?;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for (pname, x) in &sc.positions {
        let s = superhedge_price(&sc.space, x, &market)?;
        out.check(format!("superhedge/duality/{pname}"), s.duality_gap.abs(), tol.get("superhedge"));
        rows.push(json!({ "position": pname, "superhedge": to_value(&s) }));
    }
    out.result = json!({ "martingale_measure": to_value(&cert), "prices": rows });
    Ok(out)
}

fn build_tree(cfg: &BsdeConfig) -> Result<Box<dyn Tree>> {
    Ok(match cfg.tree {
        TreeKind::Lattice => Box::new(Lattice::new(cfg.steps, cfg.horizon)?),
        TreeKind::PathTree => Box::new(PathTree::new(cfg.steps, cfg.horizon)?),
    })
}

fn risk(coef: &CoefficientSpec, xi: &[f64], tree: &dyn Tree, tol: &Tolerances) -> Result<BsdeSolution> {
    let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
    bsde_solve_from(coef, tree, tree.steps(), &neg, tol.get("bsde_bound"))
}

fn bsde_config(sc: &Scenario) -> Result<&BsdeConfig> {
    sc.bsde
        .as_ref()
        .ok_or_else(|| RiskError::Validation("scenario has no bsde block".into()))
}

pub fn bsde(sc: &Scenario, tol: &Tolerances, seed: u64, want_csv: bool) -> Result<Outcome> {
    let cfg = bsde_config(sc)?;
    let tree = build_tree(cfg)?;
    let tree = &*tree;
    let mut out = Outcome::default();
    let xi = cfg.terminal.terminal(tree)?;
    let sol = risk(&cfg.coefficient, &xi, tree, tol)?;
    let mut result = json!({
        "steps": cfg.steps,
        "dt": tree.dt(),
        "root": sol.root(),
        "z_root": sol.z.root(),
        "growth": to_value(&cfg.coefficient.growth()),
    });
    if let CoefficientSpec::Quadratic { gamma } = cfg.coefficient {
        let exact = entropic_exact(gamma, &xi, tree)?.root();
        let err = (sol.root() - exact).abs();
        out.check("bsde/entropic_oracle", err, tol.get("entropic_oracle"));
        result["entropic_exact_root"] = json!(exact);
        result["entropic_error"] = json!(err);
    }
    if let Some(b) = &cfg.coefficient_b {
        let d = dynamic_inf_convolve(&cfg.coefficient, b, &xi, tree)?;
        out.check("bsde/decomposition", d.residual.abs(), tol.get("decomposition"));
        result["inf_convolution"] = json!({
            "value": d.value,
            "value_a": d.value_a,
            "value_b": d.value_b,
            "residual": d.residual,
            "recombination_error": d.recombination_error,
            "f_star": d.f_star,
        });
    }
    if let Some(cone) = &cfg.cone {
        let h = lattice_hedge(&cfg.coefficient, &xi, cone, tree)?;
        result["hedged_root"] = json!(h.y.root());
    }
    let axioms = axiom_check_dynamic(&cfg.coefficient, tol.get("axiom_trials") as usize, seed)?;
    result["axioms"] = to_value(&axioms);
    if want_csv {
        let mut buf = Vec::new();
        write_csv(tree, &sol, None, None, &mut buf)?;
        out.csv = Some(String::from_utf8(buf).expect("csv is utf-8"));
    }
    out.result = result;
    Ok(out)
}

pub fn dual(sc: &Scenario, tol: &Tolerances, seed: u64, want_csv: bool) -> Result<Outcome> {
    let cfg = bsde_config(sc)?;
    let tree = build_tree(cfg)?;
    let t = &*tree;
    let mut out = Outcome::default();
    let xi = cfg.terminal.terminal(t)?;
    let sol = risk(&cfg.coefficient, &xi, t, tol)?;
    let y0 = sol.root();
    let sup = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let td = tol.get("tol_disc_factor") * t.dt() * (1.0 + sup);
    let mu_bar = dual_optimal_control(&cfg.coefficient, &xi, t)?;
    let at_opt = dual_bound(&cfg.coefficient, &xi, &mu_bar, t)?;
    let rw = girsanov_reweight(&mu_bar, t)?;
    let n = t.steps();
    let norm: f64 = (0..t.width(n)).map(|i| rw.gamma.at(n, i) * t.prob(n, i)).sum();
    // perturbed admissible controls stay below the root
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = 0.99 / t.dt().sqrt();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cfg.controls {
        let mut mu = mu_bar.clone();
        for v in mu.values.iter_mut().flatten() {
            *v = (*v + rng.gen_range(-0.5..0.5)).clamp(-limit, limit);
        }
        worst = worst.max(dual_bound(&cfg.coefficient, &xi, &mu, t)? - y0);
    }
    out.check("dual/optimal_equality", (at_opt - y0).abs(), td);
    out.check("dual/random_controls_below", worst.max(0.0), td);
    out.check("dual/girsanov_normalization", (norm - 1.0).abs(), 1e-12);
    if want_csv {
        let mut buf = Vec::new();
        write_csv(t, &sol, Some(&mu_bar), Some(&rw.gamma), &mut buf)?;
        out.csv = Some(String::from_utf8(buf).expect("csv is utf-8"));
    }
    out.result = json!({
        "root": y0,
        "dual_bound_at_mu_bar": at_opt,
        "mu_bar_root": mu_bar.root(),
        "tol_disc": td,
        "controls": cfg.controls,
        "max_bound_minus_root": worst,
        "gamma_normalization": norm,
    });
    Ok(out)
}

fn need(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(RiskError::Validation(msg.into()))
    }
}
