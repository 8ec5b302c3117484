//! Scenario files: a probability space with named positions, instruments,
//! risk measures, measures and optional transfer / BSDE settings.

use crate::dynamics::{CoefficientSpec, PayoffExpr};
use crate::error::{validation, Result, RiskError};
use crate::market::{Constraint, Instrument, InstrumentSet, Measure, ProbSpace};
use crate::risk::{RiskMeasureSpec, S};
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

/// Name-keyed map that rejects repeated keys while parsing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UniqueMap<V>(pub BTreeMap<String, V>);

impl<V> Default for UniqueMap<V> {
    fn default() -> Self {
        UniqueMap(BTreeMap::new())
    }
}

impl<'de, V: Deserialize<'de>> Deserialize<'de> for UniqueMap<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V_<V>(PhantomData<V>);
        impl<'de, V: Deserialize<'de>> Visitor<'de> for V_<V> {
            type Value = UniqueMap<V>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object with unique names")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = BTreeMap::new();
                while let Some(key) = map.next_key::<String>()? {
                    if out.contains_key(&key) {
                        return Err(de::Error::custom(format!("duplicate name `{key}`")));
                    }
                    let value = map.next_value()?;
                    out.insert(key, value);
                }
                Ok(UniqueMap(out))
            }
        }
        d.deserialize_map(V_(PhantomData))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutcome {
    label: String,
    prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    #[default]
    Lattice,
    PathTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub rho_a: String,
    pub rho_b: String,
    pub x_a: String,
    pub x_b: String,
    /// Agent A may hedge in the scenario market.
    #[serde(default)]
    pub hedge_a: bool,
    #[serde(default)]
    pub hedge_b: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeConfig {
    pub steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub tree: TreeKind,
    pub coefficient: CoefficientSpec,
    /// Second agent for dynamic inf-convolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient_b: Option<CoefficientSpec>,
    pub terminal: PayoffExpr,
    /// Trading interval(s) for lattice hedging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<Vec<(f64, f64)>>,
    /// Random controls audited by `dual`.
    #[serde(default = "default_controls")]
    pub controls: usize,
}

fn default_controls() -> usize {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    outcomes: Vec<RawOutcome>,
    #[serde(default)]
    positions: UniqueMap<Vec<f64>>,
    #[serde(default)]
    instruments: Vec<Instrument>,
    #[serde(default)]
    constraint: Option<Constraint>,
    #[serde(default)]
    risk_measures: UniqueMap<RiskMeasureSpec>,
    #[serde(default)]
    measures: UniqueMap<Vec<f64>>,
    #[serde(default)]
    transfer: Option<TransferConfig>,
    #[serde(default)]
    bsde: Option<BsdeConfig>,
}

/// Validated scenario; zero-probability outcomes are removed everywhere.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub space: ProbSpace,
    pub positions: BTreeMap<String, Vec<f64>>,
    pub instruments: Option<InstrumentSet>,
    pub risk_measures: BTreeMap<String, RiskMeasureSpec>,
    pub measures: BTreeMap<String, Measure>,
    pub transfer: Option<TransferConfig>,
    pub bsde: Option<BsdeConfig>,
    /// Labels of removed outcomes.
    pub dropped: Vec<String>,
}

impl Scenario {
    pub fn position(&self, name: &str) -> Result<&[f64]> {
        self.positions
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| RiskError::Validation(format!("unknown position `{name}`")))
    }

    pub fn risk_measure(&self, name: &str) -> Result<&RiskMeasureSpec> {
        self.risk_measures
            .get(name)
            .ok_or_else(|| RiskError::Validation(format!("unknown risk measure `{name}`")))
    }

    pub fn market(&self) -> InstrumentSet {
        self.instruments.clone().unwrap_or_else(InstrumentSet::empty)
    }
}

fn filter(values: &[f64], keep: &[bool]) -> Vec<f64> {
    values.iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect()
}

fn check_len(what: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return validation(format!("{what} has {len} values for {n} outcomes"));
    }
    Ok(())
}

fn restrict_instruments(list: &mut [Instrument], keep: &[bool], what: &str) -> Result<()> {
    for ins in list.iter_mut() {
        check_len(&format!("{what} instrument `{}`", ins.name), ins.payoff.len(), keep.len())?;
        ins.payoff = filter(&ins.payoff, keep);
    }
    Ok(())
}

/// Removes dropped outcomes from instruments written inside a risk measure.
fn restrict_spec(spec: &mut RiskMeasureSpec, keep: &[bool], name: &str) -> Result<()> {
    match spec {
        S::SetGenerated { instruments, .. } => {
            if let Some(list) = instruments {
                restrict_instruments(list, keep, &format!("risk measure `{name}`"))?;
            }
        }
        S::MarketModified { base, instruments, .. } => {
            if let Some(list) = instruments {
                restrict_instruments(list, keep, &format!("risk measure `{name}`"))?;
            }
            restrict_spec(base, keep, name)?;
        }
        S::Dilated { base, .. } => restrict_spec(base, keep, name)?,
        S::InfConv { a, b } => {
            restrict_spec(a, keep, name)?;
            restrict_spec(b, keep, name)?;
        }
        _ => {}
    }
    Ok(())
}

fn parse_error(e: serde_path_to_error::Error<serde_json::Error>) -> RiskError {
    let field = e.path().to_string();
    let inner = e.into_inner();
    RiskError::Parse {
        line: inner.line(),
        column: inner.column(),
        field,
        message: inner.to_string(),
    }
}

/// Parses and validates scenario JSON.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(parse_error)?;

    let n_full = raw.outcomes.len();
    if n_full == 0 {
        return validation("scenario needs at least one outcome");
    }
    for o in &raw.outcomes {
        if !(o.prob >= 0.0 && o.prob.is_finite()) {
            return validation(format!("outcome `{}` has invalid probability {}", o.label, o.prob));
        }
    }
    let keep: Vec<bool> = raw.outcomes.iter().map(|o| o.prob > 0.0).collect();
    let dropped = raw
        .outcomes
        .iter()
        .filter(|o| o.prob == 0.0)
        .map(|o| o.label.clone())
        .collect();
    let space = ProbSpace::new(
        raw.outcomes.iter().filter(|o| o.prob > 0.0).map(|o| o.label.clone()).collect(),
        raw.outcomes.iter().filter(|o| o.prob > 0.0).map(|o| o.prob).collect(),
    )?;
    let n = space.len();

    let mut positions = BTreeMap::new();
    for (name, x) in raw.positions.0 {
        check_len(&format!("position `{name}`"), x.len(), n_full)?;
        if x.iter().any(|v| !v.is_finite()) {
            return validation(format!("position `{name}` must be finite"));
        }
        positions.insert(name, filter(&x, &keep));
    }

    let mut list = raw.instruments;
    restrict_instruments(&mut list, &keep, "scenario")?;
    let instruments = if list.is_empty() && raw.constraint.is_none() {
        None
    } else {
        let set = InstrumentSet::new(list, raw.constraint.unwrap_or(Constraint::Cone))?;
        set.validate(Some(n))?;
        Some(set)
    };
    let default_market = instruments.clone().unwrap_or_else(InstrumentSet::empty);

    let mut risk_measures = BTreeMap::new();
    for (name, mut spec) in raw.risk_measures.0 {
        restrict_spec(&mut spec, &keep, &name)?;
        spec.resolve_market(&default_market);
        spec.validate()
            .map_err(|e| RiskError::Validation(format!("risk measure `{name}`: {e}")))?;
        risk_measures.insert(name, spec);
    }

    let mut measures = BTreeMap::new();
    for (name, w) in raw.measures.0 {
        check_len(&format!("measure `{name}`"), w.len(), n_full)?;
        if w.iter().zip(&keep).any(|(v, k)| !k && *v != 0.0) {
            return validation(format!(
                "measure `{name}` charges a zero-probability outcome"
            ));
        }
        measures.insert(name, Measure::new(filter(&w, &keep))?);
    }

    if let Some(t) = &raw.transfer {
        for r in [&t.rho_a, &t.rho_b] {
            if !risk_measures.contains_key(r) {
                return validation(format!("transfer refers to unknown risk measure `{r}`"));
            }
        }
        for x in [&t.x_a, &t.x_b] {
            if !positions.contains_key(x) {
                return validation(format!("transfer refers to unknown position `{x}`"));
            }
        }
    }
    if let Some(b) = &raw.bsde {
        b.coefficient.validate()?;
        if let Some(c) = &b.coefficient_b {
            c.validate()?;
        }
        b.terminal.validate()?;
        if let Some(cone) = &b.cone {
            if cone.iter().any(|&(a, c)| !(a <= 0.0 && 0.0 <= c)) {
                return validation("bsde cone intervals must contain 0");
            }
        }
    }

    Ok(Scenario {
        space,
        positions,
        instruments,
        risk_measures,
        measures,
        transfer: raw.transfer,
        bsde: raw.bsde,
        dropped,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| RiskError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}
