//! Best-bound branch-and-bound over binary variables.

use alloc::collections::BinaryHeap;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::simplex::{Basis, Engine};
use super::{LpStatus, MipSolution, MipStatus, MixedIntegerProgram, Sense, SimplexOptions};
use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MipOptions {
    /// Stop once `incumbent - bound <= relative_gap * |incumbent|`.
    pub relative_gap: f64,
    /// Absolute slack always granted on top of the relative gap.
    pub absolute_gap: f64,
    pub integrality_tol: f64,
    pub node_limit: Option<usize>,
    /// Wall-clock limit in seconds, measured with the supplied clock.
    pub time_limit: Option<f64>,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            relative_gap: 1e-3,
            absolute_gap: 1e-6,
            integrality_tol: 1e-6,
            node_limit: None,
            time_limit: None,
        }
    }
}

struct Node {
    /// LP bound of the parent in minimization form.
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, bool)>,
    parent: usize,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: "greater" is popped first, i.e. smaller bound, deeper, older
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

pub(crate) fn branch_and_bound(
    mip: &MixedIntegerProgram,
    options: &MipOptions,
    simplex: &SimplexOptions,
    clock: &dyn Clock,
) -> MipSolution {
    let lp = &mip.lp;
    let sign = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let started = clock.now();
    let mut engine = Engine::new(lp, simplex);
    let root_bounds: Vec<(f64, f64)> = mip.binaries.iter().map(|b| (lp.vars[b.0].lower, lp.vars[b.0].upper)).collect();
    let binaries: Vec<usize> = mip.binaries.iter().map(|b| b.0).collect();

    let allowed = |inc: f64| options.absolute_gap.max(options.relative_gap * inc.abs());

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
        fixings: Vec::new(),
        parent: usize::MAX,
        basis: None,
    });
    let mut seq = 1usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut last_solved = usize::MAX;
    let mut numerical_trouble = false;

    let finish = |status: MipStatus, incumbent: Option<(f64, Vec<f64>)>, bound: f64, nodes: usize| {
        let (obj, x) = match incumbent {
            Some((o, x)) => (o, Some(x)),
            None => (f64::INFINITY, None),
        };
        let bound = if x.is_some() { bound.min(obj) } else { bound };
        let gap = if x.is_some() {
            (obj - bound).max(0.0) / obj.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        MipSolution {
            status,
            x,
            objective: sign * obj,
            best_bound: sign * bound,
            gap,
            nodes,
        }
    };

    let mut proven_bound = f64::INFINITY;
    while let Some(node) = heap.pop() {
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |i| i.0);
        if node.bound >= inc_obj - allowed(inc_obj) {
            // the heap is ordered by bound, so everything left is pruned too
            proven_bound = node.bound;
            heap.clear();
            break;
        }
        if let Some(limit) = options.node_limit {
            if nodes >= limit {
                heap.push(node);
                let bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
                return finish(MipStatus::NodeLimit, incumbent, bound, nodes);
            }
        }
        if let Some(limit) = options.time_limit {
            if clock.now() - started > limit {
                heap.push(node);
                let bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
                return finish(MipStatus::TimeLimit, incumbent, bound, nodes);
            }
        }
        nodes += 1;

        for (k, &j) in binaries.iter().enumerate() {
            engine.set_bounds(j, root_bounds[k].0, root_bounds[k].1);
        }
        for &(k, v) in &node.fixings {
            let val = if v { 1.0 } else { 0.0 };
            engine.set_bounds(binaries[k], val, val);
        }
        if node.parent != last_solved {
            if let Some(b) = &node.basis {
                engine.set_basis(b);
            }
        }
        let this_id = node.seq;
        last_solved = this_id;

        let mut status = engine.run();
        if status == LpStatus::IterationLimit {
            // retry once from a clean slack basis
            let mut fresh = Engine::new(lp, simplex);
            for (k, &j) in binaries.iter().enumerate() {
                fresh.set_bounds(j, root_bounds[k].0, root_bounds[k].1);
            }
            for &(k, v) in &node.fixings {
                let val = if v { 1.0 } else { 0.0 };
                fresh.set_bounds(binaries[k], val, val);
            }
            engine = fresh;
            last_solved = usize::MAX;
            status = engine.run();
        }
        match status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if node.depth == 0 {
                    return finish(MipStatus::Unbounded, None, f64::NEG_INFINITY, nodes);
                }
                continue;
            }
            LpStatus::IterationLimit => {
                numerical_trouble = true;
                continue;
            }
            LpStatus::Optimal => {}
        }
        let z = sign * engine.objective();
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |i| i.0);
        if z >= inc_obj - allowed(inc_obj) {
            continue;
        }
        let x = engine.primal();

        // most fractional binary, ties to the lowest index
        let mut branch: Option<(usize, f64)> = None;
        for (k, &j) in binaries.iter().enumerate() {
            let f = x[j] - libm::floor(x[j]);
            let dist = f.min(1.0 - f);
            if dist > options.integrality_tol {
                let score = dist;
                if branch.is_none_or(|(_, s)| score > s + 1e-12) {
                    branch = Some((k, score));
                }
            }
        }

        match branch {
            None => {
                // integral: polish continuous part with binaries fixed exactly
                for &j in &binaries {
                    let v = libm::round(x[j]);
                    engine.set_bounds(j, v, v);
                }
                let polished = engine.run();
                last_solved = usize::MAX;
                if polished != LpStatus::Optimal {
                    numerical_trouble = true;
                    continue;
                }
                let z = sign * engine.objective();
                let mut xs = engine.primal();
                for &j in &binaries {
                    xs[j] = libm::round(xs[j]);
                }
                if z < inc_obj {
                    log::debug!("new incumbent {} at node {}", sign * z, nodes);
                    incumbent = Some((z, xs));
                }
            }
            Some((k, _)) => {
                let basis = Rc::new(engine.basis());
                let up_first = x[binaries[k]] >= 0.5;
                for &v in if up_first { &[true, false] } else { &[false, true] } {
                    let mut fixings = node.fixings.clone();
                    fixings.push((k, v));
                    heap.push(Node {
                        bound: z,
                        depth: node.depth + 1,
                        seq,
                        fixings,
                        parent: this_id,
                        basis: Some(basis.clone()),
                    });
                    seq += 1;
                }
            }
        }
    }

    let status = match (&incumbent, numerical_trouble) {
        (_, true) => MipStatus::NumericalFailure,
        (Some(_), false) => MipStatus::Optimal,
        (None, false) => MipStatus::Infeasible,
    };
    finish(status, incumbent, proven_bound, nodes)
}
