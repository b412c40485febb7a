//! Power-system data model, survivability policy, contingencies and plans.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub type BusId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    /// Real power demand in MW.
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    pub bus: BusId,
    /// Capacity in MW.
    pub pmax: f64,
    pub invest_cost: f64,
    /// Cost per MWh of state-0 production.
    pub marginal_cost: f64,
    pub existing: bool,
}

/// A transmission line or transformer. Flow is positive from `from_bus`
/// (tail) to `to_bus` (head).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub susceptance: f64,
    /// Thermal rating in MW.
    pub capacity: f64,
    pub invest_cost: f64,
    pub existing: bool,
}

impl Generator {
    /// Investment cost charged when building; zero for existing units.
    pub fn build_cost(&self) -> f64 {
        if self.existing {
            0.0
        } else {
            self.invest_cost
        }
    }
}

impl Branch {
    pub fn build_cost(&self) -> f64 {
        if self.existing {
            0.0
        } else {
            self.invest_cost
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    /// Weight of state-0 operating cost against investment cost.
    pub sigma: f64,
}

pub const DEFAULT_SIGMA: f64 = 1.0;

/// A failable element, addressed by its position in the system. Generators
/// order before branches; this is the canonical element order used for
/// contingency enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    Generator(usize),
    Branch(usize),
}

impl PowerSystem {
    /// Number of failable elements `|G| + |E|`.
    pub fn num_elements(&self) -> usize {
        self.generators.len() + self.branches.len()
    }

    /// The `i`-th element in canonical order.
    pub fn element(&self, i: usize) -> Element {
        if i < self.generators.len() {
            Element::Generator(i)
        } else {
            Element::Branch(i - self.generators.len())
        }
    }

    pub fn element_index(&self, e: Element) -> usize {
        match e {
            Element::Generator(g) => g,
            Element::Branch(b) => self.generators.len() + b,
        }
    }

    pub fn element_name(&self, e: Element) -> &str {
        match e {
            Element::Generator(g) => &self.generators[g].id,
            Element::Branch(b) => &self.branches[b].id,
        }
    }

    /// Looks an element up by id, generators first.
    pub fn find_element(&self, id: &str) -> Option<Element> {
        self.generators
            .iter()
            .position(|g| g.id == id)
            .map(Element::Generator)
            .or_else(|| self.branches.iter().position(|b| b.id == id).map(Element::Branch))
    }

    /// Maps bus ids to positions in `buses`. Duplicate ids keep the first.
    pub fn bus_positions(&self) -> BTreeMap<BusId, usize> {
        let mut map = BTreeMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            map.entry(b.id).or_insert(i);
        }
        map
    }

    pub fn total_demand(&self) -> f64 {
        total_demand(self)
    }
}

/// Sum of all bus demands.
pub fn total_demand(sys: &PowerSystem) -> f64 {
    sys.buses.iter().map(|b| b.demand).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    NoBuses,
    DuplicateId,
    NegativeDemand,
    NonFiniteValue,
    DanglingBusReference,
    NonPositiveCapacity,
    NegativeInvestCost,
    NonPositiveSusceptance,
    SelfLoop,
    NonPositiveSigma,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::NoBuses => "no buses",
            Rule::DuplicateId => "duplicate id",
            Rule::NegativeDemand => "negative demand",
            Rule::NonFiniteValue => "non-finite value",
            Rule::DanglingBusReference => "dangling bus reference",
            Rule::NonPositiveCapacity => "non-positive capacity",
            Rule::NegativeInvestCost => "negative investment cost",
            Rule::NonPositiveSusceptance => "non-positive susceptance",
            Rule::SelfLoop => "self-loop",
            Rule::NonPositiveSigma => "non-positive sigma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The offending element, e.g. `bus 3`, `generator g1`, `branch e2`.
    pub element: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.rule.as_str())
    }
}

/// Lists every broken data-model invariant; empty means valid.
pub fn validate_system(sys: &PowerSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |element: String, rule: Rule| out.push(Violation { element, rule });

    if sys.buses.is_empty() {
        push(String::from("system"), Rule::NoBuses);
    }
    if !sys.sigma.is_finite() || sys.sigma <= 0.0 {
        push(String::from("params"), Rule::NonPositiveSigma);
    }
    let mut seen = BTreeSet::new();
    for b in &sys.buses {
        let name = format!("bus {}", b.id);
        if !seen.insert(b.id) {
            push(name.clone(), Rule::DuplicateId);
        }
        if !b.demand.is_finite() {
            push(name, Rule::NonFiniteValue);
        } else if b.demand < 0.0 {
            push(name, Rule::NegativeDemand);
        }
    }

    let mut seen = BTreeSet::new();
    for g in &sys.generators {
        let name = format!("generator {}", g.id);
        if !seen.insert(g.id.as_str()) {
            push(name.clone(), Rule::DuplicateId);
        }
        if !sys.buses.iter().any(|b| b.id == g.bus) {
            push(name.clone(), Rule::DanglingBusReference);
        }
        if !(g.pmax.is_finite() && g.invest_cost.is_finite() && g.marginal_cost.is_finite()) {
            push(name.clone(), Rule::NonFiniteValue);
            continue;
        }
        if g.pmax <= 0.0 {
            push(name.clone(), Rule::NonPositiveCapacity);
        }
        if g.invest_cost < 0.0 {
            push(name, Rule::NegativeInvestCost);
        }
    }

    let mut seen = BTreeSet::new();
    for e in &sys.branches {
        let name = format!("branch {}", e.id);
        if !seen.insert(e.id.as_str()) {
            push(name.clone(), Rule::DuplicateId);
        }
        for bus in [e.from_bus, e.to_bus] {
            if !sys.buses.iter().any(|b| b.id == bus) {
                push(name.clone(), Rule::DanglingBusReference);
                break;
            }
        }
        if e.from_bus == e.to_bus {
            push(name.clone(), Rule::SelfLoop);
        }
        if !(e.susceptance.is_finite() && e.capacity.is_finite() && e.invest_cost.is_finite()) {
            push(name.clone(), Rule::NonFiniteValue);
            continue;
        }
        if e.susceptance <= 0.0 {
            push(name.clone(), Rule::NonPositiveSusceptance);
        }
        if e.capacity <= 0.0 {
            push(name.clone(), Rule::NonPositiveCapacity);
        }
        if e.invest_cost < 0.0 {
            push(name, Rule::NegativeInvestCost);
        }
    }
    out
}

/// Contingency budget and the per-cardinality loss-of-load allowance.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivabilityPolicy {
    pub k: usize,
    /// `epsilon[j - 1]` is the fraction of total demand that may be shed in
    /// a state with exactly `j` failed elements.
    pub epsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("epsilon for cardinality {0} must lie in [0, 1], got {1}")]
    EpsilonOutOfRange(usize, f64),
    #[error("cardinality {0} is outside 1..={1}")]
    CardinalityOutOfRange(usize, usize),
    #[error("epsilon for single failures must be 0 unless explicitly overridden")]
    NonzeroSingleFailureEpsilon,
}

impl SurvivabilityPolicy {
    /// No shedding after single failures, `eps` for two or more.
    pub fn with_epsilon(k: usize, eps: f64) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(PolicyError::EpsilonOutOfRange(2, eps));
        }
        let epsilon = (1..=k).map(|j| if j == 1 { 0.0 } else { eps }).collect();
        let p = SurvivabilityPolicy { k, epsilon };
        p.check()?;
        Ok(p)
    }

    /// Explicit schedule; cardinalities missing from `schedule` get 0. A
    /// nonzero entry for cardinality 1 requires `allow_single_failure_shed`.
    pub fn from_schedule(k: usize, schedule: &BTreeMap<usize, f64>, allow_single_failure_shed: bool) -> Result<Self, PolicyError> {
        for &j in schedule.keys() {
            if j == 0 || j > k {
                return Err(PolicyError::CardinalityOutOfRange(j, k));
            }
        }
        let epsilon: Vec<f64> = (1..=k).map(|j| schedule.get(&j).copied().unwrap_or(0.0)).collect();
        if !allow_single_failure_shed && epsilon.first().is_some_and(|&e| e != 0.0) {
            return Err(PolicyError::NonzeroSingleFailureEpsilon);
        }
        let p = SurvivabilityPolicy { k, epsilon };
        p.check()?;
        Ok(p)
    }

    /// The schedule used for the IEEE experiments: epsilon 0, 0, 0.05, 0.10,
    /// 0.20 for k = 0..4, with single failures always held at 0.
    pub fn table_one(k: usize) -> Self {
        let eps = match k {
            0 | 1 => 0.0,
            2 => 0.05,
            3 => 0.10,
            _ => 0.20,
        };
        SurvivabilityPolicy::with_epsilon(k, eps).expect("table values are in range")
    }

    fn check(&self) -> Result<(), PolicyError> {
        for (i, &e) in self.epsilon.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(PolicyError::EpsilonOutOfRange(i + 1, e));
            }
        }
        Ok(())
    }

    pub fn epsilon_for(&self, j: usize) -> Result<f64, PolicyError> {
        if j == 0 || j > self.k {
            return Err(PolicyError::CardinalityOutOfRange(j, self.k));
        }
        Ok(self.epsilon[j - 1])
    }

    /// Largest admissible shed `eps_j * total_demand` for cardinality `j`.
    pub fn threshold(&self, j: usize, sys: &PowerSystem) -> Result<f64, PolicyError> {
        Ok(self.epsilon_for(j)? * total_demand(sys))
    }
}

/// A set of simultaneously failed elements (positions into the system's
/// generator and branch lists). The empty contingency is state 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Contingency {
    pub generators: Vec<usize>,
    pub branches: Vec<usize>,
}

impl Contingency {
    pub fn none() -> Self {
        Contingency::default()
    }

    pub fn from_elements<I: IntoIterator<Item = Element>>(elements: I) -> Self {
        let mut c = Contingency::default();
        for e in elements {
            match e {
                Element::Generator(g) => c.generators.push(g),
                Element::Branch(b) => c.branches.push(b),
            }
        }
        c.generators.sort_unstable();
        c.generators.dedup();
        c.branches.sort_unstable();
        c.branches.dedup();
        c
    }

    pub fn cardinality(&self) -> usize {
        self.generators.len() + self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cardinality() == 0
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        self.generators
            .iter()
            .map(|&g| Element::Generator(g))
            .chain(self.branches.iter().map(|&b| Element::Branch(b)))
    }

    pub fn contains(&self, e: Element) -> bool {
        match e {
            Element::Generator(g) => self.generators.binary_search(&g).is_ok(),
            Element::Branch(b) => self.branches.binary_search(&b).is_ok(),
        }
    }

    pub fn generator_failed(&self, g: usize) -> bool {
        self.generators.binary_search(&g).is_ok()
    }

    pub fn branch_failed(&self, b: usize) -> bool {
        self.branches.binary_search(&b).is_ok()
    }

    /// Element ids joined with commas, e.g. `g1,e2`; `-` when empty.
    pub fn describe(&self, sys: &PowerSystem) -> String {
        if self.is_empty() {
            return String::from("-");
        }
        let names: Vec<&str> = self.elements().map(|e| sys.element_name(e)).collect();
        names.join(",")
    }
}

/// Binary build decisions `x` for every element. Existing elements are
/// always built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Design {
    pub generators: Vec<bool>,
    pub branches: Vec<bool>,
}

impl Design {
    /// Builds nothing beyond the existing elements.
    pub fn existing_only(sys: &PowerSystem) -> Self {
        Design {
            generators: sys.generators.iter().map(|g| g.existing).collect(),
            branches: sys.branches.iter().map(|b| b.existing).collect(),
        }
    }

    pub fn all_built(sys: &PowerSystem) -> Self {
        Design {
            generators: vec![true; sys.generators.len()],
            branches: vec![true; sys.branches.len()],
        }
    }

    /// Existing elements plus the candidates named in `build`.
    pub fn with_builds<I: IntoIterator<Item = Element>>(sys: &PowerSystem, build: I) -> Self {
        let mut d = Design::existing_only(sys);
        for e in build {
            d.set(e, true);
        }
        d
    }

    /// Forces every existing element to built.
    pub fn normalized(mut self, sys: &PowerSystem) -> Self {
        for (x, g) in self.generators.iter_mut().zip(&sys.generators) {
            *x |= g.existing;
        }
        for (x, b) in self.branches.iter_mut().zip(&sys.branches) {
            *x |= b.existing;
        }
        self
    }

    pub fn is_built(&self, e: Element) -> bool {
        match e {
            Element::Generator(g) => self.generators[g],
            Element::Branch(b) => self.branches[b],
        }
    }

    pub fn set(&mut self, e: Element, built: bool) {
        match e {
            Element::Generator(g) => self.generators[g] = built,
            Element::Branch(b) => self.branches[b] = built,
        }
    }

    /// Candidate elements this design builds.
    pub fn builds(&self, sys: &PowerSystem) -> Vec<Element> {
        let gens = sys
            .generators
            .iter()
            .enumerate()
            .filter(|(i, g)| !g.existing && self.generators[*i])
            .map(|(i, _)| Element::Generator(i));
        let branches = sys
            .branches
            .iter()
            .enumerate()
            .filter(|(i, b)| !b.existing && self.branches[*i])
            .map(|(i, _)| Element::Branch(i));
        gens.chain(branches).collect()
    }

    pub fn investment_cost(&self, sys: &PowerSystem) -> f64 {
        let g: f64 = sys
            .generators
            .iter()
            .zip(&self.generators)
            .filter(|(_, &x)| x)
            .map(|(g, _)| g.build_cost())
            .sum();
        let b: f64 = sys
            .branches
            .iter()
            .zip(&self.branches)
            .filter(|(_, &x)| x)
            .map(|(b, _)| b.build_cost())
            .sum();
        g + b
    }
}

/// State-0 operating point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dispatch {
    pub generation: Vec<f64>,
    pub flows: Vec<f64>,
    pub angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPlan {
    pub design: Design,
    pub dispatch: Dispatch,
    /// Investment plus weighted state-0 operating cost.
    pub objective: f64,
}

impl ExpansionPlan {
    /// Largest bus-balance mismatch of the state-0 dispatch (zero shed).
    pub fn balance_residual(&self, sys: &PowerSystem) -> f64 {
        let pos = sys.bus_positions();
        let mut net: Vec<f64> = sys.buses.iter().map(|b| -b.demand).collect();
        for (g, &p) in sys.generators.iter().zip(&self.dispatch.generation) {
            net[pos[&g.bus]] += p;
        }
        for (e, &f) in sys.branches.iter().zip(&self.dispatch.flows) {
            net[pos[&e.from_bus]] -= f;
            net[pos[&e.to_bus]] += f;
        }
        net.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// How candidate copies of existing elements are priced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostRule {
    Fixed(f64),
    /// Cost factor times the element's MW rating.
    PerMw(f64),
}

impl CostRule {
    fn cost(self, rating: f64) -> f64 {
        match self {
            CostRule::Fixed(c) => c,
            CostRule::PerMw(f) => f * rating,
        }
    }
}

/// Adds a candidate duplicate of every existing element. Duplicates get the
/// suffix `_c` on their id and the same electrical data.
pub fn augment_with_duplicates(sys: &PowerSystem, generator_cost: CostRule, branch_cost: CostRule) -> PowerSystem {
    let mut out = sys.clone();
    for g in sys.generators.iter().filter(|g| g.existing) {
        out.generators.push(Generator {
            id: format!("{}_c", g.id),
            invest_cost: generator_cost.cost(g.pmax),
            existing: false,
            ..g.clone()
        });
    }
    for b in sys.branches.iter().filter(|b| b.existing) {
        out.branches.push(Branch {
            id: format!("{}_c", b.id),
            invest_cost: branch_cost.cost(b.capacity),
            existing: false,
            ..b.clone()
        });
    }
    out
}

/// Small reference systems with hand-checkable optima.
pub mod fixtures {
    use super::*;

    fn gen(id: &str, bus: BusId, pmax: f64, invest_cost: f64, marginal_cost: f64, existing: bool) -> Generator {
        Generator {
            id: String::from(id),
            bus,
            pmax,
            invest_cost,
            marginal_cost,
            existing,
        }
    }

    fn branch(id: &str, from: BusId, to: BusId, b: f64, cap: f64, invest_cost: f64, existing: bool) -> Branch {
        Branch {
            id: String::from(id),
            from_bus: from,
            to_bus: to,
            susceptance: b,
            capacity: cap,
            invest_cost,
            existing,
        }
    }

    /// Two buses joined by an existing and a candidate parallel line; an
    /// existing generator at the supply bus and a candidate at the load.
    pub fn t2() -> PowerSystem {
        PowerSystem {
            buses: vec![Bus { id: 1, demand: 0.0 }, Bus { id: 2, demand: 80.0 }],
            generators: vec![gen("g1", 1, 100.0, 0.0, 1.0, true), gen("g2", 2, 100.0, 20.0, 2.0, false)],
            branches: vec![
                branch("e1", 1, 2, 10.0, 100.0, 0.0, true),
                branch("e2", 1, 2, 10.0, 100.0, 10.0, false),
            ],
            sigma: 1.0,
        }
    }

    /// Triangle fed from bus 1, everything existing.
    pub fn t3() -> PowerSystem {
        PowerSystem {
            buses: vec![Bus { id: 1, demand: 0.0 }, Bus { id: 2, demand: 60.0 }, Bus { id: 3, demand: 40.0 }],
            generators: vec![gen("g1", 1, 120.0, 0.0, 1.0, true)],
            branches: vec![
                branch("e1", 1, 2, 10.0, 80.0, 0.0, true),
                branch("e2", 1, 3, 10.0, 50.0, 0.0, true),
                branch("e3", 2, 3, 10.0, 30.0, 0.0, true),
            ],
            sigma: 1.0,
        }
    }

    /// T3 plus a candidate duplicate of each element at cost 5.
    pub fn t3_with_candidates() -> PowerSystem {
        augment_with_duplicates(&t3(), CostRule::Fixed(5.0), CostRule::Fixed(5.0))
    }
}
