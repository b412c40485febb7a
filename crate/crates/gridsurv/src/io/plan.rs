//! Plan files: the candidates a plan builds plus its state-0 dispatch, keyed
//! by element id so they stay readable next to the case they belong to.
//!
//! ```toml
//! version = 1
//! objective = 100.0
//! builds = ["g2"]
//!
//! [[generator]]
//! id = "g1"
//! output = 80.0
//!
//! [[branch]]
//! id = "e1"
//! flow = 80.0
//!
//! [[bus]]
//! id = 1
//! angle = 0.0
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use gridsurv_core::model::{Design, Dispatch, Element, ExpansionPlan, PowerSystem};

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("plan file version {found} is not supported (expected {PLAN_VERSION})")]
    Version { found: u32 },
    #[error("{field}: unknown element `{id}`")]
    UnknownElement { field: &'static str, id: String },
    #[error("{field}: `{id}` is listed twice")]
    Duplicate { field: &'static str, id: String },
    #[error("{field}: no entry for `{id}`")]
    MissingEntry { field: &'static str, id: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    version: u32,
    objective: f64,
    builds: Vec<String>,
    #[serde(default)]
    generator: Vec<GeneratorEntry>,
    #[serde(default)]
    branch: Vec<BranchEntry>,
    #[serde(default)]
    bus: Vec<BusEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorEntry {
    id: String,
    output: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchEntry {
    id: String,
    flow: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusEntry {
    id: u32,
    angle: f64,
}

/// Serializes a plan; negative zeros are written as `0.0`.
pub fn write_plan(sys: &PowerSystem, plan: &ExpansionPlan) -> String {
    let doc = PlanDoc {
        version: PLAN_VERSION,
        objective: plan.objective,
        builds: plan
            .design
            .builds(sys)
            .into_iter()
            .map(|e| sys.element_name(e).to_string())
            .collect(),
        generator: sys
            .generators
            .iter()
            .zip(&plan.dispatch.generation)
            .map(|(g, &output)| GeneratorEntry {
                id: g.id.clone(),
                output: output + 0.0,
            })
            .collect(),
        branch: sys
            .branches
            .iter()
            .zip(&plan.dispatch.flows)
            .map(|(b, &flow)| BranchEntry {
                id: b.id.clone(),
                flow: flow + 0.0,
            })
            .collect(),
        bus: sys
            .buses
            .iter()
            .zip(&plan.dispatch.angles)
            .map(|(b, &angle)| BusEntry {
                id: b.id,
                angle: angle + 0.0,
            })
            .collect(),
    };
    toml::to_string(&doc).expect("plan documents always serialize")
}

/// Collects `id -> value` in system order, rejecting unknown, repeated and
/// missing ids.
fn by_id<K: Ord + Clone + ToString>(
    field: &'static str,
    order: impl Iterator<Item = K>,
    entries: impl Iterator<Item = (K, f64)>,
) -> Result<Vec<f64>, PlanError> {
    let order: Vec<K> = order.collect();
    let mut values = BTreeMap::new();
    for (id, v) in entries {
        if !order.contains(&id) {
            return Err(PlanError::UnknownElement { field, id: id.to_string() });
        }
        if values.insert(id.clone(), v).is_some() {
            return Err(PlanError::Duplicate { field, id: id.to_string() });
        }
    }
    order
        .into_iter()
        .map(|id| {
            values
                .get(&id)
                .copied()
                .ok_or_else(|| PlanError::MissingEntry { field, id: id.to_string() })
        })
        .collect()
}

/// Reads a plan written by [`write_plan`] for the same system.
pub fn read_plan(text: &str, sys: &PowerSystem) -> Result<ExpansionPlan, PlanError> {
    let doc: PlanDoc = toml::from_str(text)?;
    if doc.version != PLAN_VERSION {
        return Err(PlanError::Version { found: doc.version });
    }
    let mut builds: Vec<Element> = Vec::with_capacity(doc.builds.len());
    for id in &doc.builds {
        let e = sys.find_element(id).ok_or_else(|| PlanError::UnknownElement {
            field: "builds",
            id: id.clone(),
        })?;
        if builds.contains(&e) {
            return Err(PlanError::Duplicate {
                field: "builds",
                id: id.clone(),
            });
        }
        builds.push(e);
    }
    let generation = by_id(
        "generator",
        sys.generators.iter().map(|g| g.id.clone()),
        doc.generator.into_iter().map(|g| (g.id, g.output)),
    )?;
    let flows = by_id(
        "branch",
        sys.branches.iter().map(|b| b.id.clone()),
        doc.branch.into_iter().map(|b| (b.id, b.flow)),
    )?;
    let angles = by_id("bus", sys.buses.iter().map(|b| b.id), doc.bus.into_iter().map(|b| (b.id, b.angle)))?;
    Ok(ExpansionPlan {
        design: Design::with_builds(sys, builds),
        dispatch: Dispatch { generation, flows, angles },
        objective: doc.objective,
    })
}
