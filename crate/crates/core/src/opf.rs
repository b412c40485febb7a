//! Contingency-state optimal power flow: the loss-of-load subproblem, its
//! duals, and the feasibility cuts derived from them.
//!
//! All rows and bounds are written so that their right-hand sides are affine
//! in the build decisions `x`. The dual of the subproblem therefore has a
//! feasible region independent of `x`, and any optimal dual point evaluated as
//! a function of `x` is a valid lower bound on the shed of every plan.

use alloc::vec;
use alloc::vec::Vec;

use crate::contingency::{check_contingency, ContingencyError};
use crate::model::{total_demand, Contingency, Design, PowerSystem};
use crate::solver::{Backend, BuiltinSolver, LinearProgram, LpSolution, LpStatus, Relation, RowId, Sense, SolverError, VarId};

/// Absolute tolerance when comparing shed against a threshold.
pub const SHED_TOL: f64 = 1e-6;

/// Big-M policy for the disjunctive Kirchhoff constraints:
/// `M_e = multiplier * B_e * (|I| - 1) * max_e' (F_e' / B_e')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigM {
    pub multiplier: f64,
}

impl Default for BigM {
    fn default() -> Self {
        BigM { multiplier: 1.0 }
    }
}

impl BigM {
    pub fn scaled(multiplier: f64) -> Self {
        BigM { multiplier }
    }

    /// One constant per branch.
    pub fn values(&self, sys: &PowerSystem) -> Vec<f64> {
        let spread = sys.branches.iter().map(|e| e.capacity / e.susceptance).fold(0.0, f64::max);
        let hops = sys.buses.len().saturating_sub(1).max(1) as f64;
        sys.branches
            .iter()
            .map(|e| self.multiplier * e.susceptance * hops * spread)
            .collect()
    }
}

/// How a build decision enters a state block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Build {
    Fixed(bool),
    Var(VarId),
}

impl Build {
    fn of_design(design: &[bool]) -> Vec<Build> {
        design.iter().map(|&b| Build::Fixed(b)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShedRule {
    /// No shedding variables (state 0).
    Forbidden,
    /// Shedding variables priced at 1 in the objective.
    Minimized,
    /// Unpriced shedding variables whose total is capped.
    Capped(f64),
}

pub struct BlockSpec<'a> {
    pub generators: &'a [Build],
    pub branches: &'a [Build],
    pub contingency: &'a Contingency,
    pub big_m: &'a [f64],
    pub shed: ShedRule,
    /// Multiplier on marginal generation costs in the objective.
    pub dispatch_weight: f64,
}

/// Variable and row handles of one power-flow copy.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBlock {
    pub angles: Vec<VarId>,
    pub flows: Vec<VarId>,
    pub generation: Vec<VarId>,
    /// `None` at buses without demand or where shedding is forbidden.
    pub shed: Vec<Option<VarId>>,
    pub balance: Vec<RowId>,
    pub kirchhoff_up: Vec<RowId>,
    pub kirchhoff_lo: Vec<RowId>,
}

/// Appends one copy of the DC power-flow constraints for a contingency.
///
/// With fixed build decisions, flow, generation and shed limits become
/// variable bounds; with decision variables they become rows.
pub fn add_state_block(lp: &mut LinearProgram, sys: &PowerSystem, spec: &BlockSpec<'_>) -> StateBlock {
    let pos = sys.bus_positions();
    let c = spec.contingency;
    let angles: Vec<VarId> = sys
        .buses
        .iter()
        .map(|_| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();

    let mut flows = Vec::with_capacity(sys.branches.len());
    let mut cap_rows = Vec::new();
    for (i, e) in sys.branches.iter().enumerate() {
        let failed = c.branch_failed(i);
        let f = match spec.branches[i] {
            Build::Fixed(b) => {
                let cap = if b && !failed { e.capacity } else { 0.0 };
                lp.add_var(-cap, cap, 0.0)
            }
            Build::Var(x) => {
                if failed {
                    lp.add_var(0.0, 0.0, 0.0)
                } else {
                    let f = lp.add_var(-e.capacity, e.capacity, 0.0);
                    cap_rows.push((vec![(f, 1.0), (x, -e.capacity)], 0.0));
                    cap_rows.push((vec![(f, -1.0), (x, -e.capacity)], 0.0));
                    f
                }
            }
        };
        flows.push(f);
    }

    let mut generation = Vec::with_capacity(sys.generators.len());
    for (i, g) in sys.generators.iter().enumerate() {
        let failed = c.generator_failed(i);
        let cost = spec.dispatch_weight * g.marginal_cost;
        let p = match spec.generators[i] {
            Build::Fixed(b) => lp.add_var(0.0, if b && !failed { g.pmax } else { 0.0 }, cost),
            Build::Var(x) => {
                if failed {
                    lp.add_var(0.0, 0.0, cost)
                } else {
                    let p = lp.add_var(0.0, g.pmax, cost);
                    cap_rows.push((vec![(p, 1.0), (x, -g.pmax)], 0.0));
                    p
                }
            }
        };
        generation.push(p);
    }

    let shed: Vec<Option<VarId>> = sys
        .buses
        .iter()
        .map(|b| match spec.shed {
            ShedRule::Forbidden => None,
            _ if b.demand <= 0.0 => None,
            ShedRule::Minimized => Some(lp.add_var(0.0, b.demand, 1.0)),
            ShedRule::Capped(_) => Some(lp.add_var(0.0, b.demand, 0.0)),
        })
        .collect();

    let mut rows: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); sys.buses.len()];
    for (i, g) in sys.generators.iter().enumerate() {
        rows[pos[&g.bus]].push((generation[i], 1.0));
    }
    for (i, e) in sys.branches.iter().enumerate() {
        rows[pos[&e.from_bus]].push((flows[i], -1.0));
        rows[pos[&e.to_bus]].push((flows[i], 1.0));
    }
    let mut balance = Vec::with_capacity(sys.buses.len());
    for (i, (b, mut coeffs)) in sys.buses.iter().zip(rows).enumerate() {
        if let Some(q) = shed[i] {
            coeffs.push((q, 1.0));
        }
        balance.push(lp.add_constraint(coeffs, Relation::Eq, b.demand));
    }

    // f - B (th_from - th_to) within M (1 - x + d) of zero.
    let mut kirchhoff_up = Vec::with_capacity(sys.branches.len());
    let mut kirchhoff_lo = Vec::with_capacity(sys.branches.len());
    for (i, e) in sys.branches.iter().enumerate() {
        let m = spec.big_m[i];
        let d = if c.branch_failed(i) { 1.0 } else { 0.0 };
        let from = angles[pos[&e.from_bus]];
        let to = angles[pos[&e.to_bus]];
        let (x_term, rhs) = match spec.branches[i] {
            Build::Fixed(b) => (None, m * (1.0 - if b { 1.0 } else { 0.0 } + d)),
            Build::Var(x) => (Some((x, m)), m * (1.0 + d)),
        };
        let mut up = vec![(flows[i], 1.0), (from, -e.susceptance), (to, e.susceptance)];
        let mut lo = vec![(flows[i], -1.0), (from, e.susceptance), (to, -e.susceptance)];
        if let Some(t) = x_term {
            up.push(t);
            lo.push(t);
        }
        kirchhoff_up.push(lp.add_constraint(up, Relation::Le, rhs));
        kirchhoff_lo.push(lp.add_constraint(lo, Relation::Le, rhs));
    }

    for (coeffs, rhs) in cap_rows {
        lp.add_constraint(coeffs, Relation::Le, rhs);
    }
    if let ShedRule::Capped(limit) = spec.shed {
        let coeffs: Vec<(VarId, f64)> = shed.iter().flatten().map(|&q| (q, 1.0)).collect();
        if !coeffs.is_empty() {
            lp.add_constraint(coeffs, Relation::Le, limit);
        }
    }

    StateBlock {
        angles,
        flows,
        generation,
        shed,
        balance,
        kirchhoff_up,
        kirchhoff_lo,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpfError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Contingency(#[from] ContingencyError),
    #[error("design covers {got} elements, system has {expected}")]
    DesignShape { expected: usize, got: usize },
    #[error("loss-of-load subproblem ended with status {0:?}")]
    NotOptimal(LpStatus),
    #[error("shed {shed} does not exceed threshold {threshold}; no cut to add")]
    NotViolated { shed: f64, threshold: f64 },
}

/// The loss-of-load subproblem for one plan and contingency.
#[derive(Debug, Clone, PartialEq)]
pub struct PspModel {
    pub lp: LinearProgram,
    pub block: StateBlock,
}

fn check_design(sys: &PowerSystem, design: &Design) -> Result<(), OpfError> {
    let expected = sys.num_elements();
    let got = design.generators.len() + design.branches.len();
    if design.generators.len() != sys.generators.len() || design.branches.len() != sys.branches.len() {
        return Err(OpfError::DesignShape { expected, got });
    }
    Ok(())
}

/// Minimize total shed under contingency `c` with the builds of `design`.
/// Angles are free; flow, generation and shed limits are variable bounds.
pub fn build_psp(sys: &PowerSystem, design: &Design, c: &Contingency, big_m: BigM) -> Result<PspModel, OpfError> {
    check_design(sys, design)?;
    check_contingency(sys, c)?;
    let design = design.clone().normalized(sys);
    let m = big_m.values(sys);
    let gens = Build::of_design(&design.generators);
    let branches = Build::of_design(&design.branches);
    let mut lp = LinearProgram::new(Sense::Minimize);
    let block = add_state_block(
        &mut lp,
        sys,
        &BlockSpec {
            generators: &gens,
            branches: &branches,
            contingency: c,
            big_m: &m,
            shed: ShedRule::Minimized,
            dispatch_weight: 0.0,
        },
    );
    Ok(PspModel { lp, block })
}

/// Optimal duals of the subproblem, one entry per bus, branch or generator.
/// Every row is read as `<=` (or `=` for balance) in a minimization, so all
/// but `alpha` are nonpositive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PspDuals {
    /// Bus balance.
    pub alpha: Vec<f64>,
    /// `f - B dtheta <= M (1 - x + d)`.
    pub beta_up: Vec<f64>,
    /// `-f + B dtheta <= M (1 - x + d)`.
    pub beta_lo: Vec<f64>,
    /// `f <= F x (1 - d)`.
    pub delta: Vec<f64>,
    /// `-f <= F x (1 - d)`.
    pub eta: Vec<f64>,
    /// `p <= Pmax x (1 - d)`.
    pub zeta: Vec<f64>,
    /// `q <= D`.
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PspResult {
    pub contingency: Contingency,
    /// The plan the subproblem was solved for, existing elements included.
    pub design: Design,
    pub shed: f64,
    pub shed_by_bus: Vec<f64>,
    pub flows: Vec<f64>,
    pub generation: Vec<f64>,
    pub angles: Vec<f64>,
    pub duals: PspDuals,
    /// Dual objective as reported by the LP engine.
    pub dual_objective: f64,
    pub iterations: usize,
}

impl PspResult {
    /// `|shed - dual objective|` relative to `1 + shed`.
    pub fn duality_gap(&self) -> f64 {
        (self.shed - self.dual_objective).abs() / (1.0 + self.shed.abs())
    }
}

pub fn solve_psp(sys: &PowerSystem, design: &Design, c: &Contingency, big_m: BigM) -> Result<PspResult, OpfError> {
    solve_psp_with(&BuiltinSolver::default(), sys, design, c, big_m)
}

pub fn solve_psp_with(
    backend: &dyn Backend,
    sys: &PowerSystem,
    design: &Design,
    c: &Contingency,
    big_m: BigM,
) -> Result<PspResult, OpfError> {
    let model = build_psp(sys, design, c, big_m)?;
    let sol = backend.solve_lp(&model.lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(OpfError::NotOptimal(sol.status));
    }
    Ok(read_result(sys, design.clone().normalized(sys), c.clone(), &model.block, &sol))
}

fn read_result(sys: &PowerSystem, design: Design, contingency: Contingency, block: &StateBlock, sol: &LpSolution) -> PspResult {
    let val = |v: VarId| sol.x[v.0];
    let rc = |v: VarId| sol.reduced_costs[v.0];
    let shed_by_bus: Vec<f64> = block.shed.iter().map(|q| q.map_or(0.0, |q| val(q).max(0.0))).collect();
    let duals = PspDuals {
        alpha: block.balance.iter().map(|r| sol.duals[r.0]).collect(),
        beta_up: block.kirchhoff_up.iter().map(|r| sol.duals[r.0].min(0.0)).collect(),
        beta_lo: block.kirchhoff_lo.iter().map(|r| sol.duals[r.0].min(0.0)).collect(),
        delta: block.flows.iter().map(|&f| rc(f).min(0.0)).collect(),
        eta: block.flows.iter().map(|&f| (-rc(f)).min(0.0)).collect(),
        zeta: block.generation.iter().map(|&p| rc(p).min(0.0)).collect(),
        lambda: block.shed.iter().map(|q| q.map_or(0.0, |q| rc(q).min(0.0))).collect(),
    };
    debug_assert_eq!(duals.lambda.len(), sys.buses.len());
    PspResult {
        contingency,
        design,
        shed: sol.objective,
        shed_by_bus,
        flows: block.flows.iter().map(|&f| val(f)).collect(),
        generation: block.generation.iter().map(|&p| val(p)).collect(),
        angles: block.angles.iter().map(|&t| val(t)).collect(),
        duals,
        dual_objective: sol.dual_objective,
        iterations: sol.iterations,
    }
}

/// A feasibility cut `constant + sum coeff * x <= rhs`. Coefficients of
/// existing elements are kept; their `x` is always 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCut {
    pub contingency: Contingency,
    pub duals: PspDuals,
    pub constant: f64,
    pub generator_coeffs: Vec<f64>,
    pub branch_coeffs: Vec<f64>,
    /// `eps_j * total demand` for the contingency's cardinality class.
    pub rhs: f64,
}

impl FeasibilityCut {
    /// Builds the linear form of a dual point for contingency `c`.
    pub fn from_duals(sys: &PowerSystem, c: &Contingency, duals: PspDuals, big_m: BigM, rhs: f64) -> Self {
        let m = big_m.values(sys);
        let mut constant = 0.0;
        for (i, b) in sys.buses.iter().enumerate() {
            constant += b.demand * (duals.alpha[i] + duals.lambda[i]);
        }
        let branch_coeffs = sys
            .branches
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let d = if c.branch_failed(i) { 1.0 } else { 0.0 };
                let beta = duals.beta_up[i] + duals.beta_lo[i];
                constant += m[i] * (1.0 + d) * beta;
                -m[i] * beta + e.capacity * (1.0 - d) * (duals.delta[i] + duals.eta[i])
            })
            .collect();
        let generator_coeffs = sys
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let d = if c.generator_failed(i) { 1.0 } else { 0.0 };
                g.pmax * (1.0 - d) * duals.zeta[i]
            })
            .collect();
        FeasibilityCut {
            contingency: c.clone(),
            duals,
            constant,
            generator_coeffs,
            branch_coeffs,
            rhs,
        }
    }

    /// Constant with existing elements folded in, and the coefficients of
    /// candidate elements only.
    pub fn folded(&self, sys: &PowerSystem) -> (f64, Vec<f64>, Vec<f64>) {
        let mut constant = self.constant;
        let mut gens = self.generator_coeffs.clone();
        let mut branches = self.branch_coeffs.clone();
        for (i, g) in sys.generators.iter().enumerate() {
            if g.existing {
                constant += gens[i];
                gens[i] = 0.0;
            }
        }
        for (i, e) in sys.branches.iter().enumerate() {
            if e.existing {
                constant += branches[i];
                branches[i] = 0.0;
            }
        }
        (constant, gens, branches)
    }

    pub fn is_violated_by(&self, design: &Design) -> bool {
        evaluate_cut(self, design) > self.rhs + SHED_TOL
    }
}

/// Left-hand side of `cut` at `design`. Existing elements must be marked
/// built in `design` (see [`Design::normalized`]).
pub fn evaluate_cut(cut: &FeasibilityCut, design: &Design) -> f64 {
    let on = |b: bool| if b { 1.0 } else { 0.0 };
    cut.constant
        + cut
            .generator_coeffs
            .iter()
            .zip(&design.generators)
            .map(|(a, &x)| a * on(x))
            .sum::<f64>()
        + cut.branch_coeffs.iter().zip(&design.branches).map(|(a, &x)| a * on(x)).sum::<f64>()
}

/// Turns an optimal subproblem whose shed exceeds `threshold` into a cut
/// `shed(x) <= threshold` that the generating plan violates.
pub fn extract_feasibility_cut(r: &PspResult, sys: &PowerSystem, big_m: BigM, threshold: f64) -> Result<FeasibilityCut, OpfError> {
    if r.shed <= threshold + SHED_TOL {
        return Err(OpfError::NotViolated { shed: r.shed, threshold });
    }
    Ok(FeasibilityCut::from_duals(sys, &r.contingency, r.duals.clone(), big_m, threshold))
}

/// Largest shed permitted for a cardinality `j` under relative allowance
/// `eps`.
pub fn shed_limit(sys: &PowerSystem, eps: f64) -> f64 {
    eps * total_demand(sys)
}
