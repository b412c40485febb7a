//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! The factorization is left-looking: basis columns are eliminated one at a
//! time against the already computed part of `L`, with threshold partial
//! pivoting biased towards sparse rows. After a basis change the factors are
//! not touched; instead an eta column is appended, and the caller refactors
//! once the eta file grows long.

use alloc::vec;
use alloc::vec::Vec;

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

/// A basis column in coordinate form (row index, value).
pub(crate) type Column<'a> = &'a [(usize, f64)];

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// Outcome of a refactorization: positions whose column had no usable pivot,
/// paired with the row that was left without one. The caller must put the
/// logical variable of that row into the position.
pub(crate) type Repairs = Vec<(usize, usize)>;

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactor {
    m: usize,
    /// Pivot row of elimination step `k`.
    prow: Vec<usize>,
    /// Basis position eliminated at step `k`.
    qpos: Vec<usize>,
    l_start: Vec<usize>,
    l_entries: Vec<(usize, f64)>,
    u_start: Vec<usize>,
    u_entries: Vec<(usize, f64)>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
}

impl LuFactor {
    pub(crate) fn eta_count(&self) -> usize {
        self.etas.len()
    }

    /// Factorizes the basis whose column at position `p` is `columns[p]`.
    ///
    /// `row_counts[r]` is the number of nonzeros of row `r` in the basis and
    /// drives the sparsity preference among acceptable pivots.
    pub(crate) fn factorize(columns: &[Column<'_>], m: usize) -> (Self, Repairs) {
        debug_assert_eq!(columns.len(), m);
        let mut row_counts = vec![0usize; m];
        for col in columns {
            for &(r, _) in col.iter() {
                row_counts[r] += 1;
            }
        }

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (columns[p].len(), p));

        let mut lu = LuFactor {
            m,
            prow: Vec::with_capacity(m),
            qpos: Vec::with_capacity(m),
            l_start: Vec::with_capacity(m + 1),
            l_entries: Vec::new(),
            u_start: Vec::with_capacity(m + 1),
            u_entries: Vec::new(),
            u_diag: Vec::with_capacity(m),
            etas: Vec::new(),
        };
        lu.l_start.push(0);
        lu.u_start.push(0);

        let mut step_of_row = vec![usize::MAX; m];
        let mut work = vec![0.0f64; m];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; m];
        let mut deficient: Vec<usize> = Vec::new();

        for &pos in &order {
            for &(r, v) in columns[pos].iter() {
                if !mark[r] {
                    mark[r] = true;
                    touched.push(r);
                }
                work[r] += v;
            }
            // apply previous elimination steps in order
            let k = lu.prow.len();
            // Steps are applied in increasing order; only steps whose pivot row
            // is currently nonzero contribute.
            let mut active_steps: Vec<usize> = touched
                .iter()
                .filter_map(|&r| {
                    let s = step_of_row[r];
                    (s != usize::MAX).then_some(s)
                })
                .collect();
            active_steps.sort_unstable();
            let mut cursor = 0;
            while cursor < active_steps.len() {
                let t = active_steps[cursor];
                cursor += 1;
                let z = work[lu.prow[t]];
                if z == 0.0 {
                    continue;
                }
                for &(r, l) in &lu.l_entries[lu.l_start[t]..lu.l_start[t + 1]] {
                    if !mark[r] {
                        mark[r] = true;
                        touched.push(r);
                        let s = step_of_row[r];
                        if s != usize::MAX {
                            // keep the worklist sorted: insert after cursor
                            let tail = &active_steps[cursor..];
                            let at = cursor + tail.partition_point(|&x| x < s);
                            active_steps.insert(at, s);
                        }
                    }
                    work[r] -= l * z;
                }
            }

            // choose pivot among rows not yet eliminated
            let mut max_abs = 0.0f64;
            for &r in &touched {
                if step_of_row[r] == usize::MAX {
                    max_abs = max_abs.max(work[r].abs());
                }
            }
            if max_abs < SINGULAR_TOL {
                deficient.push(pos);
                for &r in &touched {
                    work[r] = 0.0;
                    mark[r] = false;
                }
                touched.clear();
                continue;
            }
            let mut best: Option<(usize, usize, f64)> = None;
            for &r in &touched {
                if step_of_row[r] != usize::MAX {
                    continue;
                }
                let a = work[r].abs();
                if a < PIVOT_THRESHOLD * max_abs {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((br, bc, ba)) => row_counts[r] < bc || (row_counts[r] == bc && (a > ba || (a == ba && r < br))),
                };
                if better {
                    best = Some((r, row_counts[r], a));
                }
            }
            let (piv_row, _, _) = best.expect("pivot candidate exists");
            let piv = work[piv_row];

            for &r in &touched {
                let v = work[r];
                if r == piv_row || v.abs() <= DROP_TOL {
                    continue;
                }
                let s = step_of_row[r];
                if s != usize::MAX {
                    lu.u_entries.push((s, v));
                } else {
                    lu.l_entries.push((r, v / piv));
                }
            }
            lu.u_diag.push(piv);
            lu.u_start.push(lu.u_entries.len());
            lu.l_start.push(lu.l_entries.len());
            lu.prow.push(piv_row);
            lu.qpos.push(pos);
            step_of_row[piv_row] = k;

            for &r in &touched {
                work[r] = 0.0;
                mark[r] = false;
            }
            touched.clear();
        }

        // Rows never chosen as pivots receive the deficient positions. The
        // logical column of row r is -e_r.
        let mut repairs = Vec::new();
        if !deficient.is_empty() {
            let free_rows: Vec<usize> = (0..m).filter(|&r| step_of_row[r] == usize::MAX).collect();
            debug_assert_eq!(free_rows.len(), deficient.len());
            for (&pos, &row) in deficient.iter().zip(free_rows.iter()) {
                let k = lu.prow.len();
                lu.u_diag.push(-1.0);
                lu.u_start.push(lu.u_entries.len());
                lu.l_start.push(lu.l_entries.len());
                lu.prow.push(row);
                lu.qpos.push(pos);
                step_of_row[row] = k;
                repairs.push((pos, row));
            }
        }
        (lu, repairs)
    }

    /// Solves `B x = b` in place; `rhs` is indexed by row on entry and by
    /// basis position on exit.
    pub(crate) fn ftran(&self, rhs: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        scratch.clear();
        scratch.resize(m, 0.0);
        for k in 0..m {
            let z = rhs[self.prow[k]];
            if z != 0.0 {
                for &(r, l) in &self.l_entries[self.l_start[k]..self.l_start[k + 1]] {
                    rhs[r] -= l * z;
                }
            }
            scratch[k] = z;
        }
        for k in (0..m).rev() {
            let v = scratch[k] / self.u_diag[k];
            scratch[k] = v;
            if v != 0.0 {
                for &(t, u) in &self.u_entries[self.u_start[k]..self.u_start[k + 1]] {
                    scratch[t] -= u * v;
                }
            }
        }
        for k in 0..m {
            rhs[self.qpos[k]] = scratch[k];
        }
        for eta in &self.etas {
            let xp = rhs[eta.pos] / eta.pivot;
            rhs[eta.pos] = xp;
            if xp != 0.0 {
                for &(i, a) in &eta.entries {
                    rhs[i] -= a * xp;
                }
            }
        }
    }

    /// Solves `B^T y = c` in place; `rhs` is indexed by basis position on
    /// entry and by row on exit.
    pub(crate) fn btran(&self, rhs: &mut [f64], scratch: &mut Vec<f64>) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut v = rhs[eta.pos];
            for &(i, a) in &eta.entries {
                v -= a * rhs[i];
            }
            rhs[eta.pos] = v / eta.pivot;
        }
        scratch.clear();
        scratch.resize(m, 0.0);
        for k in 0..m {
            let mut v = rhs[self.qpos[k]];
            for &(t, u) in &self.u_entries[self.u_start[k]..self.u_start[k + 1]] {
                v -= u * scratch[t];
            }
            scratch[k] = v / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let mut v = scratch[k];
            for &(r, l) in &self.l_entries[self.l_start[k]..self.l_start[k + 1]] {
                v -= l * rhs[r];
            }
            rhs[self.prow[k]] = v;
        }
    }

    /// Records that the basic variable at `pos` was replaced by a column whose
    /// FTRAN image is `alpha` (indexed by basis position).
    pub(crate) fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}
