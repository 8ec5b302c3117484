use super::Tree;
use crate::error::{validation, Result};
use serde::{Deserialize, Serialize};

/// Terminal payoff as a function of `W_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffExpr {
    /// `sum_i coeffs[i] w^i`.
    Poly { coeffs: Vec<f64> },
    /// `max(w - strike, 0)`.
    Call { strike: f64 },
    /// `max(strike - w, 0)`.
    Put { strike: f64 },
    /// `amplitude * tanh(of(w))`.
    Tanh {
        of: Box<PayoffExpr>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `sum of terms`, each scaled by `weight`.
    Sum { terms: Vec<(f64, PayoffExpr)> },
}

fn one() -> f64 {
    1.0
}

impl PayoffExpr {
    /// `tanh(w)`.
    pub fn tanh_w() -> Self {
        PayoffExpr::Tanh {
            of: Box::new(PayoffExpr::Poly { coeffs: vec![0.0, 1.0] }),
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                validation(format!("payoff {what} must be finite"))
            }
        };
        match self {
            PayoffExpr::Poly { coeffs } => {
                if coeffs.is_empty() {
                    return validation("polynomial payoff needs at least one coefficient");
                }
                coeffs.iter().try_for_each(|&c| finite(c, "coefficient"))
            }
            PayoffExpr::Call { strike } | PayoffExpr::Put { strike } => finite(*strike, "strike"),
            PayoffExpr::Tanh { of, amplitude } => {
                finite(*amplitude, "amplitude")?;
                of.validate()
            }
            PayoffExpr::Sum { terms } => terms.iter().try_for_each(|(w, t)| {
                finite(*w, "weight")?;
                t.validate()
            }),
        }
    }

    pub fn eval(&self, w: f64) -> f64 {
        match self {
            PayoffExpr::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * w + c),
            PayoffExpr::Call { strike } => (w - strike).max(0.0),
            PayoffExpr::Put { strike } => (strike - w).max(0.0),
            PayoffExpr::Tanh { of, amplitude } => amplitude * of.eval(w).tanh(),
            PayoffExpr::Sum { terms } => terms.iter().map(|(c, t)| c * t.eval(w)).sum(),
        }
    }

    /// Payoff on the terminal nodes of `tree`.
    pub fn terminal<T: Tree + ?Sized>(&self, tree: &T) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(tree.terminal_brownian().into_iter().map(|w| self.eval(w)).collect())
    }
}
