//! The TOML case format.
//!
//! ```toml
//! [params]
//! sigma = 1.0
//!
//! [[buses]]
//! id = 1
//! demand = 0.0
//!
//! [[generators]]
//! id = "g1"
//! bus = 1
//! pmax = 100.0
//! invest_cost = 0.0
//! marginal_cost = 1.0
//! existing = true
//!
//! [[branches]]
//! id = "e1"
//! from = 1
//! to = 2
//! susceptance = 10.0
//! capacity = 100.0
//! invest_cost = 0.0
//! existing = true
//! ```

use serde::{Deserialize, Serialize};

use gridsurv_core::model::{validate_system, Branch, Bus, Generator, PowerSystem, Violation, DEFAULT_SIGMA};

/// How to treat fields the format does not define.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("{0}")]
    Invalid(Violation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCase {
    pub system: PowerSystem,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Params>,
    #[serde(default)]
    buses: Vec<BusRow>,
    #[serde(default)]
    generators: Vec<GeneratorRow>,
    #[serde(default)]
    branches: Vec<BranchRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BusRow {
    id: u32,
    demand: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GeneratorRow {
    id: String,
    bus: u32,
    pmax: f64,
    #[serde(default)]
    invest_cost: f64,
    marginal_cost: f64,
    existing: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchRow {
    id: String,
    from: u32,
    to: u32,
    susceptance: f64,
    capacity: f64,
    #[serde(default)]
    invest_cost: f64,
    existing: bool,
}

/// Parses and validates a case. Unknown fields are errors in strict mode
/// and warnings in lenient mode; a missing `params.sigma` becomes 1.0 with
/// a warning. Warnings are also logged.
pub fn parse_case(text: &str, strictness: Strictness) -> Result<ParsedCase, CaseError> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::parse(text)?;
    let doc: CaseDoc = serde_ignored::deserialize(de, |path| unknown.push(path.to_string().replace(".?", "")))?;
    let mut warnings = Vec::new();
    if let Some(field) = unknown.first() {
        if strictness == Strictness::Strict {
            return Err(CaseError::UnknownField(field.clone()));
        }
        warnings.extend(unknown.iter().map(|f| format!("ignoring unknown field `{f}`")));
    }
    let sigma = match doc.params.and_then(|p| p.sigma) {
        Some(s) => s,
        None => {
            warnings.push(format!("params.sigma is missing; using {DEFAULT_SIGMA}"));
            DEFAULT_SIGMA
        }
    };
    let system = PowerSystem {
        buses: doc
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                demand: b.demand,
            })
            .collect(),
        generators: doc
            .generators
            .into_iter()
            .map(|g| Generator {
                id: g.id,
                bus: g.bus,
                pmax: g.pmax,
                invest_cost: g.invest_cost,
                marginal_cost: g.marginal_cost,
                existing: g.existing,
            })
            .collect(),
        branches: doc
            .branches
            .into_iter()
            .map(|b| Branch {
                id: b.id,
                from_bus: b.from,
                to_bus: b.to,
                susceptance: b.susceptance,
                capacity: b.capacity,
                invest_cost: b.invest_cost,
                existing: b.existing,
            })
            .collect(),
        sigma,
    };
    if let Some(v) = validate_system(&system).into_iter().next() {
        return Err(CaseError::Invalid(v));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ParsedCase { system, warnings })
}

/// Serializes a system in the case format; `parse_case` inverts it.
pub fn write_case(sys: &PowerSystem) -> String {
    let doc = CaseDoc {
        params: Some(Params { sigma: Some(sys.sigma) }),
        buses: sys
            .buses
            .iter()
            .map(|b| BusRow {
                id: b.id,
                demand: b.demand,
            })
            .collect(),
        generators: sys
            .generators
            .iter()
            .map(|g| GeneratorRow {
                id: g.id.clone(),
                bus: g.bus,
                pmax: g.pmax,
                invest_cost: g.invest_cost,
                marginal_cost: g.marginal_cost,
                existing: g.existing,
            })
            .collect(),
        branches: sys
            .branches
            .iter()
            .map(|b| BranchRow {
                id: b.id.clone(),
                from: b.from_bus,
                to: b.to_bus,
                susceptance: b.susceptance,
                capacity: b.capacity,
                invest_cost: b.invest_cost,
                existing: b.existing,
            })
            .collect(),
    };
    toml::to_string(&doc).expect("case documents always serialize")
}
