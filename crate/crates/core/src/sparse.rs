//! Sparse symmetric matrices and an up-looking LDLᵀ factorization.
//!
//! Patterns are stored in full (both triangles) compressed-column form. The
//! fill-reducing ordering is a minimum-degree elimination on a node graph,
//! expanded to the degrees of freedom of every node.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{Error, Result};

/// Full symmetric sparsity pattern with sorted row indices per column.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
}

impl Pattern {
    /// Pattern with all diagonal entries plus the symmetric closure of `pairs`.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|k| alloc::vec![k]).collect();
        for (i, j) in pairs {
            if i != j {
                cols[j].push(i);
                cols[i].push(j);
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut c in cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(&c);
            col_ptr.push(row_idx.len());
        }
        Self { n, col_ptr, row_idx }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        self.row_idx[a..b].binary_search(&i).ok().map(|k| a + k)
    }
}

/// Values on a [`Pattern`].
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    pub values: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(p: &Pattern) -> Self {
        Self { values: alloc::vec![0.0; p.nnz()] }
    }

    /// Adds `v` to entry (i, j) only; callers add both triangles.
    ///
    /// Panics if the entry is not in the pattern.
    pub fn add(&mut self, p: &Pattern, i: usize, j: usize, v: f64) {
        let k = p.position(i, j).expect("entry outside sparsity pattern");
        self.values[k] += v;
    }

    pub fn mul_vec(&self, p: &Pattern, x: &[f64]) -> Vec<f64> {
        let mut y = alloc::vec![0.0; p.n];
        for j in 0..p.n {
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                y[p.row_idx[k]] += self.values[k] * x[j];
            }
        }
        y
    }
}

/// Minimum-degree elimination order of an undirected graph.
///
/// Ties go to the lowest index so the order is deterministic.
pub fn minimum_degree_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut g: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(v, a)| {
            let mut a: Vec<usize> = a.iter().copied().filter(|&u| u != v).collect();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let mut done = alloc::vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((g[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if done[v] || deg != g[v].len() {
            continue;
        }
        done[v] = true;
        order.push(v);
        let nb = core::mem::take(&mut g[v]);
        for &u in &nb {
            // adj(u) := adj(u) ∪ nb minus {u, v}
            merged.clear();
            let (a, b) = (&g[u], &nb);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let x = match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if x != u && x != v {
                    merged.push(x);
                }
            }
            core::mem::swap(&mut g[u], &mut merged);
            heap.push(Reverse((g[u].len(), u)));
        }
    }
    order
}

/// Inverse of a permutation.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = alloc::vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Elimination tree and column counts of L for a pattern and ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbolic {
    pub n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    lp: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl Symbolic {
    /// `perm[k]` is the original index eliminated in step `k`.
    pub fn analyze(p: &Pattern, perm: Vec<usize>) -> Self {
        let n = p.n;
        assert_eq!(perm.len(), n);
        let pinv = invert(&perm);
        let mut parent = alloc::vec![NONE; n];
        let mut flag = alloc::vec![NONE; n];
        let mut lnz = alloc::vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let kk = perm[k];
            for q in p.col_ptr[kk]..p.col_ptr[kk + 1] {
                let mut i = pinv[p.row_idx[q]];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = alloc::vec![0; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        Self { n, perm, pinv, parent, lp }
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }
}

/// Numeric LDLᵀ factors.
#[derive(Clone, Debug)]
pub struct Ldl {
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    /// Factors `a`; fails on a zero or non-finite pivot.
    pub fn factor(s: &Symbolic, p: &Pattern, a: &SymMatrix) -> Result<Self> {
        Self::factor_with_tolerance(s, p, a, 0.0)
    }

    /// Factors `a`, rejecting pivots with `|d_k| <= rel * |a_kk|` as singular.
    pub fn factor_with_tolerance(s: &Symbolic, p: &Pattern, a: &SymMatrix, rel: f64) -> Result<Self> {
        let n = s.n;
        let nnz = s.factor_nnz();
        let mut li = alloc::vec![0usize; nnz];
        let mut lx = alloc::vec![0.0; nnz];
        let mut d = alloc::vec![0.0; n];
        let mut y = alloc::vec![0.0; n];
        let mut pattern = alloc::vec![0usize; n];
        let mut flag = alloc::vec![NONE; n];
        let mut lnz = alloc::vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let kk = s.perm[k];
            let mut diag = 0.0;
            for q in p.col_ptr[kk]..p.col_ptr[kk + 1] {
                let mut i = s.pinv[p.row_idx[q]];
                if i == k {
                    diag = a.values[q];
                }
                if i <= k {
                    y[i] += a.values[q];
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = s.parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                let yi = y[i];
                y[i] = 0.0;
                let end = s.lp[i] + lnz[i];
                for q in s.lp[i]..end {
                    y[li[q]] -= lx[q] * yi;
                }
                let lki = yi / d[i];
                d[k] -= lki * yi;
                li[end] = k;
                lx[end] = lki;
                lnz[i] += 1;
                top += 1;
            }
            if d[k].abs() <= rel * diag.abs() || !d[k].is_finite() {
                return Err(Error::Singular(kk));
            }
        }
        Ok(Self { li, lx, d })
    }

    /// Solves A x = b in place.
    pub fn solve(&self, s: &Symbolic, b: &mut [f64]) {
        let n = s.n;
        let mut y: Vec<f64> = (0..n).map(|k| b[s.perm[k]]).collect();
        for j in 0..n {
            let yj = y[j];
            for q in s.lp[j]..s.lp[j + 1] {
                y[self.li[q]] -= self.lx[q] * yj;
            }
        }
        for j in 0..n {
            y[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut yj = y[j];
            for q in s.lp[j]..s.lp[j + 1] {
                yj -= self.lx[q] * y[self.li[q]];
            }
            y[j] = yj;
        }
        for k in 0..n {
            b[s.perm[k]] = y[k];
        }
    }

    /// Number of negative pivots (the inertia index of A).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }
}

/// Orders the degrees of freedom of `adj`'s nodes, `block` per node, keeping only those with `free[dof] = Some(_)`.
///
/// Returns the permutation in the numbering of the free unknowns.
pub fn block_order(adj: &[Vec<usize>], block: usize, free: &[Option<usize>]) -> Vec<usize> {
    let mut perm = Vec::new();
    for v in minimum_degree_order(adj) {
        for c in 0..block {
            if let Some(f) = free[block * v + c] {
                perm.push(f);
            }
        }
    }
    perm
}
