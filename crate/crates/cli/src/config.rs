use clap::{Parser, ValueEnum};
use convexrisk::{Result, RiskError};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Evaluate every risk measure on every position, with dual certificates.
    Price,
    /// Penalties of every risk measure at every listed measure.
    Penalty,
    /// Optimal risk transfer between two agents.
    Transfer,
    /// Market-modified (hedged) risk of every position.
    Hedge,
    /// Superhedging prices and a martingale-measure certificate.
    Superhedge,
    /// BSDE lattice solve, oracle comparison and dynamic axioms.
    Bsde,
    /// Dual control representation on the lattice.
    Dual,
    /// Run every applicable suite on a scenario file or fixture directory.
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "convexrisk", version, about = "Convex risk measures, risk transfer and BSDE lattices")]
pub struct RunConfig {
    pub command: Command,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Tolerance override `KEY=VALUE`; see `Tolerances::DOCUMENTED`.
    #[arg(long = "tol", value_name = "KEY=VAL")]
    pub tol: Vec<String>,
}

/// Thresholds used for the certificate checks in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Tolerances {
    pub const DOCUMENTED: &'static [(&'static str, f64, &'static str)] = &[
        ("fenchel", 1e-8, "static Fenchel residual at the subdifferential measure"),
        ("superhedge", 1e-7, "superhedging primal/dual gap"),
        ("transfer_gap", 1e-5, "transfer duality gap and certificate residuals"),
        ("borch", 1e-4, "sup-norm distance to the quota-sharing transfer"),
        ("decomposition", 1e-8, "dynamic inf-convolution decomposition residual"),
        ("entropic_oracle", 5e-3, "quadratic BSDE root vs exact entropic value"),
        ("tol_disc_factor", 5.0, "C in the discrete dual tolerance C dt (1 + |xi|)"),
        ("bsde_bound", 10.0, "terminal bound for quadratic-growth coefficients"),
        ("axiom_trials", 100.0, "randomized trials per axiom"),
    ];

    pub fn parse(overrides: &[String]) -> Result<Self> {
        let mut map: BTreeMap<String, f64> =
            Self::DOCUMENTED.iter().map(|(k, v, _)| (k.to_string(), *v)).collect();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| RiskError::Validation(format!("tolerance override `{o}` is not KEY=VAL")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| RiskError::Validation(format!("tolerance `{k}` needs a number, got `{v}`")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(RiskError::Validation(format!("tolerance `{k}` must be finite and >= 0")));
            }
            match map.get_mut(k.trim()) {
                Some(slot) => *slot = v,
                None => {
                    return Err(RiskError::Validation(format!(
                        "unknown tolerance key `{k}`; documented keys: {}",
                        Self::DOCUMENTED.iter().map(|d| d.0).collect::<Vec<_>>().join(", ")
                    )))
                }
            }
        }
        Ok(Tolerances(map))
    }

    pub fn get(&self, key: &str) -> f64 {
        self.0[key]
    }
}
