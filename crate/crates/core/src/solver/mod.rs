//! Linear and mixed-binary programming.
//!
//! Problems are described with [`LinearProgram`] and [`MixedIntegerProgram`]
//! and handed to a [`Backend`]. [`BuiltinSolver`] is a bounded revised
//! simplex (sparse LU, product-form updates, Harris ratio test, Bland
//! fallback) driving a best-bound branch-and-bound.
//!
//! Dual values follow one convention throughout: the dual of a constraint is
//! the rate of change of the optimal objective per unit increase of its
//! right-hand side, in the problem's own sense. For a minimization, duals of
//! `<=` rows are nonpositive and duals of `>=` rows nonnegative.

mod lu;
mod milp;
mod simplex;

use alloc::string::String;
use alloc::vec::Vec;

use crate::clock::Clock;

pub use milp::MipOptions;

/// Objective direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Index of a variable inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Index of a constraint inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Constant added to the objective.
    pub offset: f64,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            vars: Vec::new(),
            constraints: Vec::new(),
            offset: 0.0,
        }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable { lower, upper, cost });
        VarId(self.vars.len() - 1)
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(VarId, f64)>, relation: Relation, rhs: f64) -> RowId {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        RowId(self.constraints.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Objective value of `x`, offset included.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset + self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum::<f64>()
    }

    /// Largest violation of any bound or constraint by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for c in &self.constraints {
            let act: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j.0]).sum();
            let viol = match c.relation {
                Relation::Le => act - c.rhs,
                Relation::Ge => c.rhs - act,
                Relation::Eq => (act - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(SolverError::InvalidProblem(alloc::format!(
                    "variable {j} has a NaN bound or non-finite cost"
                )));
            }
            if v.lower > v.upper {
                return Err(SolverError::InvalidProblem(alloc::format!(
                    "variable {j} has lower bound {} above upper bound {}",
                    v.lower,
                    v.upper
                )));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SolverError::InvalidProblem(alloc::format!(
                    "constraint {i} has a non-finite right-hand side"
                )));
            }
            for &(j, a) in &c.coeffs {
                if j.0 >= self.vars.len() {
                    return Err(SolverError::InvalidProblem(alloc::format!(
                        "constraint {i} references undeclared variable {}",
                        j.0
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::InvalidProblem(alloc::format!(
                        "constraint {i} has a non-finite coefficient"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A linear program some of whose variables are restricted to {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedIntegerProgram {
    pub lp: LinearProgram,
    pub binaries: Vec<VarId>,
}

impl MixedIntegerProgram {
    pub fn new(lp: LinearProgram) -> Self {
        MixedIntegerProgram { lp, binaries: Vec::new() }
    }

    pub fn add_binary(&mut self, cost: f64) -> VarId {
        let v = self.lp.add_var(0.0, 1.0, cost);
        self.binaries.push(v);
        v
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        for &b in &self.binaries {
            let v = self
                .lp
                .vars
                .get(b.0)
                .ok_or_else(|| SolverError::InvalidProblem(alloc::format!("binary marker references undeclared variable {}", b.0)))?;
            if v.lower < 0.0 || v.upper > 1.0 {
                return Err(SolverError::InvalidProblem(alloc::format!(
                    "binary variable {} has bounds outside [0, 1]",
                    b.0
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The iteration limit was reached, usually a symptom of numerical
    /// trouble on these problem sizes.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One dual per constraint.
    pub duals: Vec<f64>,
    /// One reduced cost per variable; together with `duals` these certify
    /// optimality.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    /// Objective of the dual solution, computed from right-hand sides and
    /// bounds only.
    pub dual_objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// |primal - dual| relative to `1 + |primal|`.
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs() / (1.0 + self.objective.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
    TimeLimit,
    /// An LP relaxation could not be solved reliably.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: MipStatus,
    /// Best integer-feasible point found, if any.
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    pub best_bound: f64,
    /// Relative gap between incumbent and bound, `inc - bound` over `max(|inc|, 1)`.
    pub gap: f64,
    pub nodes: usize,
}

impl MipSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == MipStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// Narrow interface to an LP/MILP engine.
pub trait Backend: Sync {
    fn solve_lp(&self, lp: &LinearProgram) -> Result<LpSolution, SolverError>;

    fn solve_milp(&self, mip: &MixedIntegerProgram, options: &MipOptions, clock: &dyn Clock) -> Result<MipSolution, SolverError>;
}

/// Tuning knobs of the built-in engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            max_iterations: None,
            bland_after: 60,
            refactor_every: 80,
        }
    }
}

/// The built-in simplex and branch-and-bound engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSolver {
    pub simplex: SimplexOptions,
}

impl Backend for BuiltinSolver {
    fn solve_lp(&self, lp: &LinearProgram) -> Result<LpSolution, SolverError> {
        lp.validate()?;
        Ok(simplex::solve(lp, &self.simplex))
    }

    fn solve_milp(&self, mip: &MixedIntegerProgram, options: &MipOptions, clock: &dyn Clock) -> Result<MipSolution, SolverError> {
        mip.validate()?;
        Ok(milp::branch_and_bound(mip, options, &self.simplex, clock))
    }
}

/// Solves `lp` with the built-in engine.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, SolverError> {
    BuiltinSolver::default().solve_lp(lp)
}

/// Solves `mip` with the built-in engine to the requested relative gap.
pub fn solve_milp(mip: &MixedIntegerProgram, gap: f64) -> Result<MipSolution, SolverError> {
    let options = MipOptions {
        relative_gap: gap,
        ..MipOptions::default()
    };
    BuiltinSolver::default().solve_milp(mip, &options, &crate::clock::NoClock)
}
