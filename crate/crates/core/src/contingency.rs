//! Counting, enumerating and applying contingency states.

use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::model::{Contingency, Design, Element, PowerSystem};

/// The state space `S(k)`: every nonempty failure set of at most `k` out of
/// `n_failable` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub n_failable: usize,
    pub k: usize,
}

impl StateSpace {
    pub fn of(sys: &PowerSystem, k: usize) -> Self {
        StateSpace {
            n_failable: sys.num_elements(),
            k,
        }
    }

    pub fn count(&self) -> Result<u64, CountOverflow> {
        count_states(self.n_failable, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("number of contingency states for n = {n}, k = {k} exceeds 64 bits")]
pub struct CountOverflow {
    pub n: usize,
    pub k: usize,
}

/// `sum_{j=1..k} C(n, j)` computed exactly. Budgets above `n` count every
/// nonempty subset.
pub fn count_states_exact(n: usize, k: usize) -> BigUint {
    let mut total = BigUint::zero();
    let mut binom = BigUint::one();
    for j in 1..=k.min(n) {
        binom = binom * BigUint::from(n - j + 1) / BigUint::from(j);
        total += &binom;
    }
    total
}

/// [`count_states_exact`] narrowed to `u64`, failing instead of wrapping.
pub fn count_states(n: usize, k: usize) -> Result<u64, CountOverflow> {
    count_states_exact(n, k).to_u64().ok_or(CountOverflow { n, k })
}

/// Lazily yields the nonempty failure sets of cardinality at most `k`:
/// cardinality-major, then lexicographic in canonical element order
/// (generators before branches, each in declaration order).
pub fn enumerate_states(sys: &PowerSystem, k: usize) -> StateIter<'_> {
    StateIter::new(sys, k)
}

#[derive(Debug, Clone)]
pub struct StateIter<'a> {
    sys: &'a PowerSystem,
    n: usize,
    k: usize,
    /// Current combination of element positions; empty before the first
    /// call and after exhaustion.
    combo: Vec<usize>,
    done: bool,
}

impl<'a> StateIter<'a> {
    fn new(sys: &'a PowerSystem, k: usize) -> Self {
        let n = sys.num_elements();
        StateIter {
            sys,
            n,
            k: k.min(n),
            combo: Vec::with_capacity(k.min(n)),
            done: k == 0 || n == 0,
        }
    }

    fn advance(&mut self) -> bool {
        let j = self.combo.len();
        if j == 0 {
            self.combo.push(0);
            return true;
        }
        // Rightmost position that can still move.
        let mut i = j;
        while i > 0 {
            i -= 1;
            if self.combo[i] < self.n - (j - i) {
                self.combo[i] += 1;
                for t in i + 1..j {
                    self.combo[t] = self.combo[t - 1] + 1;
                }
                return true;
            }
        }
        if j == self.k {
            return false;
        }
        self.combo.clear();
        self.combo.extend(0..j + 1);
        true
    }
}

impl Iterator for StateIter<'_> {
    type Item = Contingency;

    fn next(&mut self) -> Option<Contingency> {
        if self.done {
            return None;
        }
        if !self.advance() {
            self.done = true;
            return None;
        }
        let sys = self.sys;
        Some(Contingency::from_elements(self.combo.iter().map(|&i| sys.element(i))))
    }
}

/// Per-element availability `x * (1 - d)` after a contingency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveNetwork {
    pub generators: Vec<bool>,
    pub branches: Vec<bool>,
}

impl EffectiveNetwork {
    pub fn is_available(&self, e: Element) -> bool {
        match e {
            Element::Generator(g) => self.generators[g],
            Element::Branch(b) => self.branches[b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContingencyError {
    #[error("contingency references generator #{0}, which does not exist")]
    UnknownGenerator(usize),
    #[error("contingency references branch #{0}, which does not exist")]
    UnknownBranch(usize),
}

/// Checks that every element of `c` exists in `sys`.
pub fn check_contingency(sys: &PowerSystem, c: &Contingency) -> Result<(), ContingencyError> {
    if let Some(&g) = c.generators.iter().find(|&&g| g >= sys.generators.len()) {
        return Err(ContingencyError::UnknownGenerator(g));
    }
    if let Some(&b) = c.branches.iter().find(|&&b| b >= sys.branches.len()) {
        return Err(ContingencyError::UnknownBranch(b));
    }
    Ok(())
}

pub fn apply_contingency(sys: &PowerSystem, design: &Design, c: &Contingency) -> Result<EffectiveNetwork, ContingencyError> {
    check_contingency(sys, c)?;
    let design = design.clone().normalized(sys);
    Ok(EffectiveNetwork {
        generators: (0..sys.generators.len())
            .map(|g| design.generators[g] && !c.generator_failed(g))
            .collect(),
        branches: (0..sys.branches.len()).map(|b| design.branches[b] && !c.branch_failed(b)).collect(),
    })
}
