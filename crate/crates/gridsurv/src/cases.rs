//! Named cases available without a file.

use gridsurv_core::model::{augment_with_duplicates, fixtures, CostRule, PowerSystem};

use crate::io::matpower::parse_matpower;

pub const CASE30: &str = include_str!("../data/case30.m");

/// Cost factor per MW for the duplicated candidates of the augmented
/// IEEE-30 case.
pub const AUGMENT_COST_FACTOR: f64 = 0.5;

pub const BUILTIN_NAMES: [&str; 5] = ["t2", "t3", "t3-cand", "ieee30", "ieee30-aug"];

/// IEEE 30-bus system with every element existing.
pub fn ieee30() -> PowerSystem {
    parse_matpower(CASE30).expect("embedded case parses")
}

/// IEEE 30-bus system plus a candidate duplicate of every element, priced
/// at [`AUGMENT_COST_FACTOR`] per MW of rating.
pub fn ieee30_augmented() -> PowerSystem {
    let rule = CostRule::PerMw(AUGMENT_COST_FACTOR);
    augment_with_duplicates(&ieee30(), rule, rule)
}

pub fn builtin(name: &str) -> Option<PowerSystem> {
    Some(match name {
        "t2" => fixtures::t2(),
        "t3" => fixtures::t3(),
        "t3-cand" => fixtures::t3_with_candidates(),
        "ieee30" => ieee30(),
        "ieee30-aug" => ieee30_augmented(),
        _ => return None,
    })
}
