//! Worst-case contingency search: the interdiction MILP obtained by
//! dualizing the loss-of-load subproblem, and a brute-force reference.
//!
//! For a fixed plan the attacker picks at most `k` built elements to fail
//! and the operator then minimizes shed. Replacing the inner problem by its
//! dual gives a single maximization over failure indicators `d` and dual
//! prices; products of `d` with dual variables are linearized using finite
//! bounds on the duals ([`DualBounds`]).
//!
//! Failed and unbuilt lines are modelled with zero Kirchhoff duals, which is
//! the subproblem with those lines removed. This coincides with the big-M
//! subproblem whenever the big-M constants are valid, and it keeps the
//! constants out of the MILP.

use alloc::vec::Vec;

use crate::clock::{Clock, Executor, NoClock, Sequential};
use crate::contingency::{count_states, enumerate_states};
use crate::model::{total_demand, Contingency, Design, Element, PowerSystem};
use crate::opf::{solve_psp_with, BigM, OpfError, PspResult, SHED_TOL};
use crate::solver::{
    Backend, BuiltinSolver, LinearProgram, MipOptions, MipStatus, MixedIntegerProgram, Relation, Sense, SolverError, VarId,
};

/// Bounds on the dual prices of the loss-of-load subproblem.
///
/// Bus prices are confined to `[-price, price]`; every other bound follows
/// from that and from the fact that no nonpositive term of the dual
/// objective can exceed total demand in magnitude at an optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBounds {
    /// Bus balance duals lie in `[-price, price]`.
    pub price: f64,
    /// Lower bound of `q <= D` duals.
    pub shed: f64,
    /// Per branch: lower bound of each Kirchhoff dual on in-service lines.
    pub kirchhoff: Vec<f64>,
    /// Per branch: lower bound of each flow-limit dual.
    pub flow: Vec<f64>,
    /// Per generator: lower bound of the capacity dual.
    pub generation: Vec<f64>,
}

/// Bus-price bound used by default: ten times the unit price of shedding.
pub const DEFAULT_PRICE_BOUND: f64 = 10.0;

impl DualBounds {
    pub fn derive(sys: &PowerSystem, price: f64) -> Self {
        let demand = total_demand(sys);
        DualBounds {
            price,
            shed: -(price + 1.0),
            kirchhoff: sys.branches.iter().map(|e| -(2.0 * price + demand / e.capacity)).collect(),
            flow: sys.branches.iter().map(|e| -(2.0 * price).max(demand / e.capacity)).collect(),
            generation: sys.generators.iter().map(|_| -price).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationOptions {
    pub big_m: BigM,
    pub price_bound: f64,
    /// Largest state count `brute_force_worst_case` will enumerate.
    pub guard: u64,
    pub node_limit: Option<usize>,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions {
            big_m: BigM::default(),
            price_bound: DEFAULT_PRICE_BOUND,
            guard: 100_000,
            node_limit: None,
        }
    }
}

/// Interdiction MILP with handles to the failure indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct DpsipModel {
    pub mip: MixedIntegerProgram,
    /// Failure indicator per generator; `None` for unbuilt units.
    pub fail_generator: Vec<Option<VarId>>,
    pub fail_branch: Vec<Option<VarId>>,
    pub alpha: Vec<VarId>,
}

impl DpsipModel {
    /// Reads the contingency encoded by a MILP point.
    pub fn contingency(&self, x: &[f64]) -> Contingency {
        let on = |v: &Option<VarId>| v.is_some_and(|v| x[v.0] > 0.5);
        let gens = self
            .fail_generator
            .iter()
            .enumerate()
            .filter(|(_, v)| on(v))
            .map(|(i, _)| Element::Generator(i));
        let branches = self
            .fail_branch
            .iter()
            .enumerate()
            .filter(|(_, v)| on(v))
            .map(|(i, _)| Element::Branch(i));
        Contingency::from_elements(gens.chain(branches))
    }
}

/// Builds the interdiction MILP `max_{|d| <= k} min shed(x, d)` in dual
/// form.
pub fn build_dpsip(sys: &PowerSystem, design: &Design, k: usize, bounds: &DualBounds) -> DpsipModel {
    build_dpsip_range(sys, design, 0, k, bounds)
}

/// As [`build_dpsip`], restricted to states that can be completed to
/// between `min_k` and `k` failures. Unbuilt elements carry no indicator,
/// so the lower bound on built failures is `min_k` minus their number.
pub fn build_dpsip_range(sys: &PowerSystem, design: &Design, min_k: usize, k: usize, bounds: &DualBounds) -> DpsipModel {
    let design = design.clone().normalized(sys);
    let pos = sys.bus_positions();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let p = bounds.price;

    let alpha: Vec<VarId> = sys.buses.iter().map(|b| lp.add_var(-p, p, b.demand)).collect();
    // alpha + lambda <= 1 wherever demand can be shed
    for (i, b) in sys.buses.iter().enumerate() {
        if b.demand > 0.0 {
            let lambda = lp.add_var(bounds.shed, 0.0, b.demand);
            lp.add_constraint(alpha_plus(alpha[i], lambda), Relation::Le, 1.0);
        }
    }

    let mut mip_binaries = Vec::new();
    let mut budget = Vec::new();
    let mut theta_rows: Vec<Vec<(VarId, f64)>> = sys.buses.iter().map(|_| Vec::new()).collect();

    let mut fail_branch = Vec::with_capacity(sys.branches.len());
    for (i, e) in sys.branches.iter().enumerate() {
        if !design.branches[i] {
            fail_branch.push(None);
            continue;
        }
        let d = lp.add_var(0.0, 1.0, 0.0);
        mip_binaries.push(d);
        budget.push((d, 1.0));
        fail_branch.push(Some(d));

        let from = pos[&e.from_bus];
        let to = pos[&e.to_bus];
        let lb = bounds.kirchhoff[i];
        let beta_up = lp.add_var(lb, 0.0, 0.0);
        let beta_lo = lp.add_var(lb, 0.0, 0.0);
        // Kirchhoff duals vanish on failed lines: beta >= lb (1 - d)
        lp.add_constraint(alloc::vec![(beta_up, 1.0), (d, lb)], Relation::Ge, lb);
        lp.add_constraint(alloc::vec![(beta_lo, 1.0), (d, lb)], Relation::Ge, lb);

        let fl = bounds.flow[i];
        let delta = lp.add_var(fl, 0.0, e.capacity);
        let eta = lp.add_var(fl, 0.0, e.capacity);
        // w = d (delta + eta), priced at -F
        let w = lp.add_var(fl * 2.0, 0.0, -e.capacity);
        lp.add_constraint(alloc::vec![(w, 1.0), (d, -2.0 * fl)], Relation::Ge, 0.0);
        lp.add_constraint(alloc::vec![(w, 1.0), (delta, -1.0), (eta, -1.0)], Relation::Ge, 0.0);

        // stationarity in the flow variable
        lp.add_constraint(
            alloc::vec![
                (alpha[to], 1.0),
                (alpha[from], -1.0),
                (beta_up, 1.0),
                (beta_lo, -1.0),
                (delta, 1.0),
                (eta, -1.0)
            ],
            Relation::Eq,
            0.0,
        );
        let b = e.susceptance;
        theta_rows[from].push((beta_up, -b));
        theta_rows[from].push((beta_lo, b));
        theta_rows[to].push((beta_up, b));
        theta_rows[to].push((beta_lo, -b));
    }
    // stationarity in the angles
    for row in theta_rows {
        if !row.is_empty() {
            lp.add_constraint(row, Relation::Eq, 0.0);
        }
    }

    let mut fail_generator = Vec::with_capacity(sys.generators.len());
    for (i, g) in sys.generators.iter().enumerate() {
        if !design.generators[i] {
            fail_generator.push(None);
            continue;
        }
        let d = lp.add_var(0.0, 1.0, 0.0);
        mip_binaries.push(d);
        budget.push((d, 1.0));
        fail_generator.push(Some(d));
        let lb = bounds.generation[i];
        let zeta = lp.add_var(lb, 0.0, g.pmax);
        let w = lp.add_var(lb, 0.0, -g.pmax);
        lp.add_constraint(alloc::vec![(w, 1.0), (d, -lb)], Relation::Ge, 0.0);
        lp.add_constraint(alloc::vec![(w, 1.0), (zeta, -1.0)], Relation::Ge, 0.0);
        lp.add_constraint(alloc::vec![(alpha[pos[&g.bus]], 1.0), (zeta, 1.0)], Relation::Le, 0.0);
    }

    let unbuilt = sys.num_elements() - budget.len();
    let floor = min_k.saturating_sub(unbuilt);
    if floor > 0 {
        lp.add_constraint(budget.clone(), Relation::Ge, floor as f64);
    }
    if !budget.is_empty() {
        lp.add_constraint(budget, Relation::Le, k as f64);
    }
    let mut mip = MixedIntegerProgram::new(lp);
    mip.binaries = mip_binaries;
    DpsipModel {
        mip,
        fail_generator,
        fail_branch,
        alpha,
    }
}

fn alpha_plus(alpha: VarId, lambda: VarId) -> Vec<(VarId, f64)> {
    alloc::vec![(alpha, 1.0), (lambda, 1.0)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub worst_contingency: Contingency,
    /// Shed of the worst contingency from a primal subproblem solve.
    pub worst_shed: f64,
    /// True when the worst shed is within the threshold.
    pub certificate: bool,
    /// Optimal value of the interdiction MILP (equals `worst_shed` for the
    /// brute-force oracle).
    pub bound: f64,
    /// Branch-and-bound nodes, or subproblems solved by brute force.
    pub work: usize,
    /// The subproblem at the worst contingency.
    pub psp: PspResult,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeparationError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error("interdiction MILP ended with status {0:?}")]
    Milp(MipStatus),
    #[error(
        "interdiction MILP value {milp} disagrees with the subproblem shed {psp} at its contingency; \
         dual bounds are too tight (raise the price bound)"
    )]
    DualBoundsViolation { milp: f64, psp: f64 },
    #[error("brute force would enumerate {states} states, above the guard of {guard}")]
    TooManyStates { states: u64, guard: u64 },
}

/// Finds the worst contingency with the interdiction MILP solved to a zero
/// gap and checks its value against a primal subproblem solve.
pub fn solve_separation(
    sys: &PowerSystem,
    design: &Design,
    k: usize,
    threshold: f64,
    opts: &SeparationOptions,
) -> Result<SeparationResult, SeparationError> {
    solve_separation_with(&BuiltinSolver::default(), &NoClock, sys, design, k, threshold, opts)
}

pub fn solve_separation_with(
    backend: &dyn Backend,
    clock: &dyn Clock,
    sys: &PowerSystem,
    design: &Design,
    k: usize,
    threshold: f64,
    opts: &SeparationOptions,
) -> Result<SeparationResult, SeparationError> {
    separate(backend, clock, sys, design, 0, k, threshold, opts)
}

/// Worst state with exactly `k` failed elements, `None` when the system has
/// fewer than `k` elements. Built failures are topped up with unbuilt
/// elements, which leaves the shed unchanged.
pub fn solve_separation_exact_with(
    backend: &dyn Backend,
    clock: &dyn Clock,
    sys: &PowerSystem,
    design: &Design,
    k: usize,
    threshold: f64,
    opts: &SeparationOptions,
) -> Result<Option<SeparationResult>, SeparationError> {
    if k > sys.num_elements() {
        return Ok(None);
    }
    let mut r = separate(backend, clock, sys, design, k, k, threshold, opts)?;
    if r.worst_contingency.cardinality() < k {
        let design = design.clone().normalized(sys);
        let mut elements: Vec<Element> = r.worst_contingency.elements().collect();
        let spare = (0..sys.num_elements())
            .map(|i| sys.element(i))
            .filter(|&e| !design.is_built(e) && !r.worst_contingency.contains(e));
        elements.extend(spare.take(k - elements.len()));
        let c = Contingency::from_elements(elements);
        r.psp = solve_psp_with(backend, sys, &design, &c, opts.big_m)?;
        r.worst_contingency = c;
    }
    Ok(Some(r))
}

#[allow(clippy::too_many_arguments)]
fn separate(
    backend: &dyn Backend,
    clock: &dyn Clock,
    sys: &PowerSystem,
    design: &Design,
    min_k: usize,
    k: usize,
    threshold: f64,
    opts: &SeparationOptions,
) -> Result<SeparationResult, SeparationError> {
    let bounds = DualBounds::derive(sys, opts.price_bound);
    let model = build_dpsip_range(sys, design, min_k, k, &bounds);
    let mip_opts = MipOptions {
        relative_gap: 0.0,
        absolute_gap: 1e-7,
        node_limit: opts.node_limit,
        ..MipOptions::default()
    };
    let sol = backend.solve_milp(&model.mip, &mip_opts, clock)?;
    let x = match (sol.status, &sol.x) {
        (MipStatus::Optimal, Some(x)) => x,
        (status, _) => return Err(SeparationError::Milp(status)),
    };
    let c = model.contingency(x);
    let psp = solve_psp_with(backend, sys, design, &c, opts.big_m)?;
    if (psp.shed - sol.objective).abs() > 1e-4 {
        return Err(SeparationError::DualBoundsViolation {
            milp: sol.objective,
            psp: psp.shed,
        });
    }
    Ok(SeparationResult {
        worst_contingency: c,
        worst_shed: psp.shed,
        certificate: psp.shed <= threshold + SHED_TOL,
        bound: sol.objective,
        work: sol.nodes,
        psp,
    })
}

/// Exact worst case by solving the subproblem for the empty contingency and
/// every state of `S(k)`. Ties go to the earliest state in enumeration order.
pub fn brute_force_worst_case(
    sys: &PowerSystem,
    design: &Design,
    k: usize,
    threshold: f64,
    opts: &SeparationOptions,
) -> Result<SeparationResult, SeparationError> {
    brute_force_worst_case_with(&BuiltinSolver::default(), &Sequential, sys, design, k, threshold, opts)
}

pub fn brute_force_worst_case_with<E: Executor>(
    backend: &dyn Backend,
    executor: &E,
    sys: &PowerSystem,
    design: &Design,
    k: usize,
    threshold: f64,
    opts: &SeparationOptions,
) -> Result<SeparationResult, SeparationError> {
    let states = count_states(sys.num_elements(), k).unwrap_or(u64::MAX);
    if states > opts.guard {
        return Err(SeparationError::TooManyStates { states, guard: opts.guard });
    }
    let mut all: Vec<Contingency> = Vec::with_capacity(states as usize + 1);
    all.push(Contingency::none());
    all.extend(enumerate_states(sys, k));
    let results = executor.map(all.len(), |i| solve_psp_with(backend, sys, design, &all[i], opts.big_m));
    let mut best: Option<PspResult> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.shed > b.shed + 1e-9) {
            best = Some(r);
        }
    }
    let psp = best.expect("the empty state is always present");
    Ok(SeparationResult {
        worst_contingency: psp.contingency.clone(),
        worst_shed: psp.shed,
        certificate: psp.shed <= threshold + SHED_TOL,
        bound: psp.shed,
        work: all.len(),
        psp,
    })
}
