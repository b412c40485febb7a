//! Survivable expansion planning: extensive form, Benders decomposition and
//! the cutting-plane algorithm.

use alloc::string::String;
use alloc::vec::Vec;

use crate::clock::{Clock, Executor, NoClock, Sequential};
use crate::contingency::{count_states, enumerate_states};
use crate::model::{Contingency, Design, Dispatch, Element, ExpansionPlan, PolicyError, PowerSystem, SurvivabilityPolicy};
use crate::opf::{
    add_state_block, extract_feasibility_cut, solve_psp_with, BigM, BlockSpec, Build, FeasibilityCut, OpfError, ShedRule, StateBlock,
    SHED_TOL,
};
use crate::separation::{solve_separation_exact_with, solve_separation_with, SeparationError, SeparationOptions};
use crate::solver::{
    Backend, BuiltinSolver, LinearProgram, MipOptions, MipSolution, MipStatus, MixedIntegerProgram, Relation, Sense, SolverError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Extensive,
    Benders,
    CuttingPlane,
}

impl Algorithm {
    pub fn short_name(self) -> &'static str {
        match self {
            Algorithm::Extensive => "ef",
            Algorithm::Benders => "bd",
            Algorithm::CuttingPlane => "cpa",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub algorithm: Algorithm,
    pub policy: SurvivabilityPolicy,
    /// Relative optimality gap of every master MILP.
    pub gap: f64,
    pub max_iterations: usize,
    pub big_m: BigM,
    /// Wall-clock budget in seconds for the whole run.
    pub time_limit: Option<f64>,
    /// Largest state count the extensive form will be built for.
    pub state_guard: u64,
    /// Caps the cuts Benders adds per iteration; `None` adds one per
    /// violated state.
    pub max_cuts_per_iteration: Option<usize>,
    /// Options of the cutting-plane separation oracle.
    pub separation: SeparationOptions,
}

impl PlannerConfig {
    pub fn new(algorithm: Algorithm, policy: SurvivabilityPolicy) -> Self {
        PlannerConfig {
            algorithm,
            policy,
            gap: 1e-3,
            max_iterations: 10_000,
            big_m: BigM::default(),
            time_limit: None,
            state_guard: 10_000,
            max_cuts_per_iteration: None,
            separation: SeparationOptions::default(),
        }
    }

    fn check(&self) -> Result<(), PlannerError> {
        if self.gap.is_nan() || self.gap < 0.0 {
            return Err(PlannerError::InvalidConfig(String::from("gap must be nonnegative")));
        }
        if self.max_iterations == 0 || self.time_limit.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return Err(PlannerError::InvalidConfig(String::from("limits must be positive")));
        }
        if self.policy.epsilon.len() != self.policy.k {
            return Err(PlannerError::InvalidConfig(String::from("epsilon schedule must cover 1..=k")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Optimal,
    Infeasible,
    IterationLimit,
    TimeLimit,
    NodeLimit,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Optimal => "optimal",
            Termination::Infeasible => "infeasible",
            Termination::IterationLimit => "iteration_limit",
            Termination::TimeLimit => "time_limit",
            Termination::NodeLimit => "node_limit",
        }
    }
}

/// Seconds spent in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimes {
    /// Master problem (or the extensive-form MILP).
    pub master: f64,
    /// Separation oracle.
    pub separation: f64,
    /// Loss-of-load subproblems solved to generate cuts.
    pub subproblem: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub algorithm: Algorithm,
    pub termination: Termination,
    /// Proven-compliant plan; present only when optimal.
    pub plan: Option<ExpansionPlan>,
    /// Last master solution, which may violate survivability when the run
    /// stopped early.
    pub last_master: Option<ExpansionPlan>,
    /// Lower bound from the last master solve.
    pub bound: Option<f64>,
    /// Master solves (1 for the extensive form).
    pub iterations: usize,
    pub cuts: Vec<FeasibilityCut>,
    pub times: PhaseTimes,
    pub total_time: f64,
    /// Size of the state space `S(k)`.
    pub states: u64,
}

impl PlanReport {
    pub fn objective(&self) -> Option<f64> {
        self.plan.as_ref().map(|p| p.objective)
    }

    pub fn builds(&self, sys: &PowerSystem) -> Option<Vec<Element>> {
        self.plan.as_ref().map(|p| p.design.builds(sys))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("extensive form needs {states} contingency states, above the guard of {guard}")]
    StateExplosion { states: u64, guard: u64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Separation(#[from] SeparationError),
    #[error("master MILP failed with status {0:?}")]
    Master(MipStatus),
}

/// Largest admissible shed for cardinality `j`.
pub fn threshold(policy: &SurvivabilityPolicy, j: usize, sys: &PowerSystem) -> Result<f64, PolicyError> {
    policy.threshold(j, sys)
}

/// A MILP over build decisions with one state-0 power flow: the relaxed
/// master problem, or the extensive form once contingency blocks are added.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterModel {
    pub mip: MixedIntegerProgram,
    pub generators: Vec<Build>,
    pub branches: Vec<Build>,
    pub state0: StateBlock,
    pub blocks: usize,
}

impl MasterModel {
    /// Investment cost plus `sigma` times state-0 dispatch cost, no cuts.
    pub fn relaxed(sys: &PowerSystem, big_m: BigM) -> Self {
        let mut mip = MixedIntegerProgram::new(LinearProgram::new(Sense::Minimize));
        let generators: Vec<Build> = sys
            .generators
            .iter()
            .map(|g| {
                if g.existing {
                    Build::Fixed(true)
                } else {
                    Build::Var(mip.add_binary(g.invest_cost))
                }
            })
            .collect();
        let branches: Vec<Build> = sys
            .branches
            .iter()
            .map(|e| {
                if e.existing {
                    Build::Fixed(true)
                } else {
                    Build::Var(mip.add_binary(e.invest_cost))
                }
            })
            .collect();
        let m = big_m.values(sys);
        let state0 = add_state_block(
            &mut mip.lp,
            sys,
            &BlockSpec {
                generators: &generators,
                branches: &branches,
                contingency: &Contingency::none(),
                big_m: &m,
                shed: ShedRule::Forbidden,
                dispatch_weight: sys.sigma,
            },
        );
        MasterModel {
            mip,
            generators,
            branches,
            state0,
            blocks: 1,
        }
    }

    /// Adds a power-flow copy for `c` whose total shed is capped by `limit`.
    pub fn add_state(&mut self, sys: &PowerSystem, c: &Contingency, limit: f64, m: &[f64]) {
        add_state_block(
            &mut self.mip.lp,
            sys,
            &BlockSpec {
                generators: &self.generators,
                branches: &self.branches,
                contingency: c,
                big_m: m,
                shed: ShedRule::Capped(limit),
                dispatch_weight: 0.0,
            },
        );
        self.blocks += 1;
    }

    pub fn add_cut(&mut self, sys: &PowerSystem, cut: &FeasibilityCut) {
        let (constant, gens, branches) = cut.folded(sys);
        let mut coeffs = Vec::new();
        for (b, a) in self.generators.iter().zip(gens).chain(self.branches.iter().zip(branches)) {
            if let Build::Var(v) = b {
                if a != 0.0 {
                    coeffs.push((*v, a));
                }
            }
        }
        self.mip.lp.add_constraint(coeffs, Relation::Le, cut.rhs - constant);
    }

    /// Reads the design, state-0 dispatch and objective from a MILP point.
    pub fn extract(&self, x: &[f64], objective: f64) -> ExpansionPlan {
        let read = |b: &Build| match b {
            Build::Fixed(v) => *v,
            Build::Var(v) => x[v.0] > 0.5,
        };
        ExpansionPlan {
            design: Design {
                generators: self.generators.iter().map(read).collect(),
                branches: self.branches.iter().map(read).collect(),
            },
            dispatch: Dispatch {
                generation: self.state0.generation.iter().map(|v| x[v.0]).collect(),
                flows: self.state0.flows.iter().map(|v| x[v.0]).collect(),
                angles: self.state0.angles.iter().map(|v| x[v.0]).collect(),
            },
            objective,
        }
    }
}

/// The extensive form: one power-flow copy per state in `{0} ∪ S(k)`.
pub fn build_ef(sys: &PowerSystem, policy: &SurvivabilityPolicy, big_m: BigM, guard: u64) -> Result<MasterModel, PlannerError> {
    let states = count_states(sys.num_elements(), policy.k).unwrap_or(u64::MAX);
    if states > guard {
        return Err(PlannerError::StateExplosion { states, guard });
    }
    let mut model = MasterModel::relaxed(sys, big_m);
    let m = big_m.values(sys);
    for c in enumerate_states(sys, policy.k) {
        let limit = policy.threshold(c.cardinality(), sys)?;
        model.add_state(sys, &c, limit, &m);
    }
    Ok(model)
}

/// Solver, clock and executor used by a planning run.
pub struct Runtime<'a, E> {
    pub backend: &'a dyn Backend,
    pub clock: &'a dyn Clock,
    pub executor: &'a E,
}

impl Runtime<'static, Sequential> {
    /// Built-in solver, no clock, single thread.
    pub fn basic() -> Self {
        static SOLVER: BuiltinSolver = BuiltinSolver {
            simplex: crate::solver::SimplexOptions {
                feasibility_tol: 1e-9,
                optimality_tol: 1e-9,
                max_iterations: None,
                bland_after: 60,
                refactor_every: 80,
            },
        };
        Runtime {
            backend: &SOLVER,
            clock: &NoClock,
            executor: &Sequential,
        }
    }
}

/// Runs the algorithm selected in `cfg` with the built-in solver.
pub fn plan(sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    plan_with(&Runtime::basic(), sys, cfg)
}

pub fn plan_with<E: Executor>(rt: &Runtime<'_, E>, sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    match cfg.algorithm {
        Algorithm::Extensive => solve_extensive_with(rt, sys, cfg),
        Algorithm::Benders => run_benders_with(rt, sys, cfg),
        Algorithm::CuttingPlane => run_cpa_with(rt, sys, cfg),
    }
}

pub fn solve_extensive(sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    solve_extensive_with(&Runtime::basic(), sys, cfg)
}

pub fn run_benders(sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    run_benders_with(&Runtime::basic(), sys, cfg)
}

pub fn run_cpa(sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    run_cpa_with(&Runtime::basic(), sys, cfg)
}

struct Run<'r, 'a, E> {
    rt: &'r Runtime<'a, E>,
    cfg: &'r PlannerConfig,
    start: f64,
    report: PlanReport,
}

enum MasterOutcome {
    Solved(ExpansionPlan),
    Stopped(Termination),
}

impl<'r, 'a, E: Executor> Run<'r, 'a, E> {
    fn new(rt: &'r Runtime<'a, E>, sys: &PowerSystem, cfg: &'r PlannerConfig) -> Result<Self, PlannerError> {
        cfg.check()?;
        Ok(Run {
            rt,
            cfg,
            start: rt.clock.now(),
            report: PlanReport {
                algorithm: cfg.algorithm,
                termination: Termination::Optimal,
                plan: None,
                last_master: None,
                bound: None,
                iterations: 0,
                cuts: Vec::new(),
                times: PhaseTimes::default(),
                total_time: 0.0,
                states: count_states(sys.num_elements(), cfg.policy.k).unwrap_or(u64::MAX),
            },
        })
    }

    fn elapsed(&self) -> f64 {
        self.rt.clock.now() - self.start
    }

    fn out_of_time(&self) -> bool {
        self.cfg.time_limit.is_some_and(|t| self.elapsed() > t)
    }

    fn solve_master(&mut self, master: &MasterModel) -> Result<MasterOutcome, PlannerError> {
        let opts = MipOptions {
            relative_gap: self.cfg.gap,
            time_limit: self.cfg.time_limit.map(|t| (t - self.elapsed()).max(0.0)),
            ..MipOptions::default()
        };
        let t0 = self.rt.clock.now();
        let sol: MipSolution = self.rt.backend.solve_milp(&master.mip, &opts, self.rt.clock)?;
        self.report.times.master += self.rt.clock.now() - t0;
        self.report.iterations += 1;
        match sol.status {
            MipStatus::Optimal => {
                let x = sol.x.as_deref().expect("optimal MILP has a point");
                self.report.bound = Some(sol.best_bound);
                let plan = master.extract(x, sol.objective);
                self.report.last_master = Some(plan.clone());
                Ok(MasterOutcome::Solved(plan))
            }
            MipStatus::Infeasible => Ok(MasterOutcome::Stopped(Termination::Infeasible)),
            MipStatus::TimeLimit => Ok(MasterOutcome::Stopped(Termination::TimeLimit)),
            MipStatus::NodeLimit => Ok(MasterOutcome::Stopped(Termination::NodeLimit)),
            status => Err(PlannerError::Master(status)),
        }
    }

    fn finish(mut self, termination: Termination, plan: Option<ExpansionPlan>) -> PlanReport {
        self.report.termination = termination;
        self.report.plan = if termination == Termination::Optimal { plan } else { None };
        self.report.total_time = self.elapsed();
        self.report
    }
}

pub fn solve_extensive_with<E: Executor>(rt: &Runtime<'_, E>, sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    let mut run = Run::new(rt, sys, cfg)?;
    let t0 = rt.clock.now();
    let model = build_ef(sys, &cfg.policy, cfg.big_m, cfg.state_guard)?;
    run.report.times.master += rt.clock.now() - t0;
    Ok(match run.solve_master(&model)? {
        MasterOutcome::Solved(plan) => run.finish(Termination::Optimal, Some(plan)),
        MasterOutcome::Stopped(t) => run.finish(t, None),
    })
}

/// Benders decomposition: solve the master, evaluate every state at the
/// master's plan, add a cut per violated state, repeat until none is
/// violated.
pub fn run_benders_with<E: Executor>(rt: &Runtime<'_, E>, sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    let mut run = Run::new(rt, sys, cfg)?;
    let policy = &cfg.policy;
    let states: Vec<Contingency> = enumerate_states(sys, policy.k).collect();
    let limits = states
        .iter()
        .map(|c| policy.threshold(c.cardinality(), sys))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut master = MasterModel::relaxed(sys, cfg.big_m);

    loop {
        if run.report.iterations >= cfg.max_iterations {
            return Ok(run.finish(Termination::IterationLimit, None));
        }
        if run.out_of_time() {
            return Ok(run.finish(Termination::TimeLimit, None));
        }
        let plan = match run.solve_master(&master)? {
            MasterOutcome::Solved(p) => p,
            MasterOutcome::Stopped(t) => return Ok(run.finish(t, None)),
        };
        let design = &plan.design;

        let t0 = rt.clock.now();
        // States failing only unbuilt elements leave the plan's base case
        // intact, which the master already keeps shed-free.
        let touches_plan = |c: &Contingency| c.elements().any(|e| design.is_built(e));
        let results = rt.executor.map(states.len(), |i| {
            if touches_plan(&states[i]) && limits[i] < sys.total_demand() {
                solve_psp_with(rt.backend, sys, design, &states[i], cfg.big_m).map(Some)
            } else {
                Ok(None)
            }
        });
        let mut added = 0usize;
        for (i, r) in results.into_iter().enumerate() {
            let Some(r) = r? else { continue };
            if r.shed > limits[i] + SHED_TOL {
                if cfg.max_cuts_per_iteration.is_some_and(|cap| added >= cap) {
                    break;
                }
                let cut = extract_feasibility_cut(&r, sys, cfg.big_m, limits[i])?;
                master.add_cut(sys, &cut);
                run.report.cuts.push(cut);
                added += 1;
            }
        }
        run.report.times.subproblem += rt.clock.now() - t0;
        log::debug!(
            "benders iteration {}: objective {:.6}, {} cuts added",
            run.report.iterations,
            plan.objective,
            added
        );
        if added == 0 {
            return Ok(run.finish(Termination::Optimal, Some(plan)));
        }
    }
}

/// Cardinality classes the cutting-plane algorithm must separate: class `j`
/// is implied by any larger class with an allowance no greater than its own.
fn classes_to_check(policy: &SurvivabilityPolicy, n: usize) -> Vec<usize> {
    let top = policy.k.min(n);
    (1..=top)
        .filter(|&j| policy.epsilon[j - 1] < 1.0)
        .filter(|&j| !(j + 1..=top).any(|l| policy.epsilon[l - 1] <= policy.epsilon[j - 1]))
        .collect()
}

/// Searches each exact cardinality up to `j` against its own allowance.
/// Line failures are not monotone in shed, so a worst state below `j` that
/// is within its own allowance says nothing about the states of size `j`.
fn class_violation<E: Executor>(
    rt: &Runtime<'_, E>,
    sys: &PowerSystem,
    design: &Design,
    cfg: &PlannerConfig,
    j: usize,
) -> Result<Option<FeasibilityCut>, PlannerError> {
    for i in 1..=j {
        if cfg.policy.epsilon_for(i)? >= 1.0 {
            continue;
        }
        let limit = cfg.policy.threshold(i, sys)?;
        let Some(sep) = solve_separation_exact_with(rt.backend, rt.clock, sys, design, i, limit, &cfg.separation)? else {
            break;
        };
        if !sep.certificate {
            return Ok(Some(extract_feasibility_cut(&sep.psp, sys, cfg.big_m, limit)?));
        }
    }
    Ok(None)
}

/// The cutting-plane algorithm: solve the master, ask the separation oracle
/// for a violated contingency, add one cut for it, repeat until the oracle
/// certifies the plan.
pub fn run_cpa_with<E: Executor>(rt: &Runtime<'_, E>, sys: &PowerSystem, cfg: &PlannerConfig) -> Result<PlanReport, PlannerError> {
    let mut run = Run::new(rt, sys, cfg)?;
    let policy = &cfg.policy;
    let classes = classes_to_check(policy, sys.num_elements());
    let mut master = MasterModel::relaxed(sys, cfg.big_m);

    loop {
        if run.report.iterations >= cfg.max_iterations {
            return Ok(run.finish(Termination::IterationLimit, None));
        }
        if run.out_of_time() {
            return Ok(run.finish(Termination::TimeLimit, None));
        }
        let plan = match run.solve_master(&master)? {
            MasterOutcome::Solved(p) => p,
            MasterOutcome::Stopped(t) => return Ok(run.finish(t, None)),
        };
        let design = &plan.design;

        let mut cut = None;
        for &j in &classes {
            let limit = policy.threshold(j, sys)?;
            let t0 = rt.clock.now();
            let sep = solve_separation_with(rt.backend, rt.clock, sys, design, j, limit, &cfg.separation)?;
            run.report.times.separation += rt.clock.now() - t0;
            if sep.certificate {
                continue;
            }
            let t0 = rt.clock.now();
            let d = &sep.worst_contingency;
            let own = (!d.is_empty()).then(|| policy.threshold(d.cardinality(), sys)).transpose()?;
            let c = match own {
                Some(own) if sep.worst_shed > own + SHED_TOL => Some(extract_feasibility_cut(&sep.psp, sys, cfg.big_m, own)?),
                _ => class_violation(rt, sys, design, cfg, j)?,
            };
            run.report.times.subproblem += rt.clock.now() - t0;
            if c.is_some() {
                cut = c;
                break;
            }
        }
        let Some(cut) = cut else {
            return Ok(run.finish(Termination::Optimal, Some(plan)));
        };
        log::debug!(
            "cpa iteration {}: objective {:.6}, cut for {} elements",
            run.report.iterations,
            plan.objective,
            cut.contingency.cardinality()
        );
        master.add_cut(sys, &cut);
        run.report.cuts.push(cut);
    }
}

/// A state whose shed exceeds its allowance.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceViolation {
    pub contingency: Contingency,
    pub shed: f64,
    pub limit: f64,
}

/// Checks a design against every state of `S(k)` by enumeration.
pub fn verify_compliance(
    sys: &PowerSystem,
    design: &Design,
    policy: &SurvivabilityPolicy,
    big_m: BigM,
    guard: u64,
) -> Result<Vec<ComplianceViolation>, PlannerError> {
    let states = count_states(sys.num_elements(), policy.k).unwrap_or(u64::MAX);
    if states > guard {
        return Err(PlannerError::StateExplosion { states, guard });
    }
    let mut out = Vec::new();
    let base = crate::opf::solve_psp(sys, design, &Contingency::none(), big_m)?;
    if base.shed > SHED_TOL {
        out.push(ComplianceViolation {
            contingency: Contingency::none(),
            shed: base.shed,
            limit: 0.0,
        });
    }
    for c in enumerate_states(sys, policy.k) {
        let limit = policy.threshold(c.cardinality(), sys)?;
        let r = crate::opf::solve_psp(sys, design, &c, big_m)?;
        if r.shed > limit + SHED_TOL {
            out.push(ComplianceViolation {
                contingency: c,
                shed: r.shed,
                limit,
            });
        }
    }
    Ok(out)
}
