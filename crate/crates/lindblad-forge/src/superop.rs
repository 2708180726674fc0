//! Generator representation for master equations in the split form
//!
//! ρ̇ = L·ρ + ρ·R + Σ_k w_k · P_k ρ Q_k
//!
//! with sparse factors. Keeping the left/right/jump structure instead of one
//! dense dim²×dim² matrix makes an application cost O(nnz·dim) rather than
//! O(dim⁴), which is what lets the composite-space benchmark solver run at
//! dimensions in the thousands. `to_dense` materializes the dim²×dim² matrix
//! under the column-stacking convention (vec(AρB) = (Bᵀ ⊗ A) vec(ρ)) for
//! spectra and for small-system cross-checks.

use crate::error::{Error, Result};
use crate::operator::{kron, CMatrix, C64};

/// Compressed-sparse-row matrix over complex entries.
#[derive(Clone, Debug)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    /// Build from a dense matrix, dropping exact zeros.
    pub fn from_dense(m: &CMatrix) -> Csr {
        let (nrows, ncols) = m.shape();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Build from (row, col, value) triplets: duplicates are summed, zeros
    /// (including sums that cancel exactly) are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, C64)>,
    ) -> Result<Csr> {
        for &(r, c, _) in &triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::DimensionMismatch {
                    what: "triplet index out of bounds",
                    expected: nrows * ncols,
                    got: r * ncols + c,
                });
            }
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut cur = 0usize;
        let mut k = 0usize;
        while k < triplets.len() {
            let (r, c, mut v) = triplets[k];
            k += 1;
            while k < triplets.len() && triplets[k].0 == r && triplets[k].1 == c {
                v += triplets[k].2;
                k += 1;
            }
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            while cur < r {
                cur += 1;
                row_ptr[cur] = col_idx.len();
            }
            col_idx.push(c);
            vals.push(v);
        }
        while cur < nrows {
            cur += 1;
            row_ptr[cur] = col_idx.len();
        }
        Ok(Csr {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[p])] = self.vals[p];
            }
        }
        m
    }

    /// out += scale · (self × x); column-oriented so the inner loops touch
    /// contiguous storage.
    pub fn mul_dense_acc(&self, x: &CMatrix, scale: C64, out: &mut CMatrix) {
        debug_assert_eq!(self.ncols, x.nrows());
        debug_assert_eq!(self.nrows, out.nrows());
        debug_assert_eq!(x.ncols(), out.ncols());
        let m = x.nrows();
        let n = self.nrows;
        let ncols = x.ncols();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for c in 0..ncols {
            let xcol = &xs[c * m..(c + 1) * m];
            let ocol = &mut os[c * n..(c + 1) * n];
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.vals[p] * xcol[self.col_idx[p]];
                }
                ocol[i] += scale * acc;
            }
        }
    }

    /// out += scale · (x × self); runs as axpy over output columns.
    pub fn dense_mul_acc(&self, x: &CMatrix, scale: C64, out: &mut CMatrix) {
        debug_assert_eq!(x.ncols(), self.nrows);
        debug_assert_eq!(out.nrows(), x.nrows());
        debug_assert_eq!(out.ncols(), self.ncols);
        let n = x.nrows();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for r in 0..self.nrows {
            let xcol = &xs[r * n..(r + 1) * n];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let j = self.col_idx[p];
                let w = scale * self.vals[p];
                let ocol = &mut os[j * n..(j + 1) * n];
                for i in 0..n {
                    ocol[i] += w * xcol[i];
                }
            }
        }
    }
}

/// One sandwich term w · P ρ Q.
#[derive(Clone, Debug)]
pub struct Jump {
    pub weight: C64,
    pub pre: Csr,
    pub post: Csr,
}

/// Linear map on density matrices, ρ̇ = L·ρ + ρ·R + Σ_k w_k·P_k ρ Q_k.
#[derive(Clone, Debug)]
pub struct Superoperator {
    dim: usize,
    left: Option<Csr>,
    right: Option<Csr>,
    jumps: Vec<Jump>,
}

impl Superoperator {
    /// The zero generator (constant evolution).
    pub fn zero(dim: usize) -> Superoperator {
        Superoperator {
            dim,
            left: None,
            right: None,
            jumps: Vec::new(),
        }
    }

    /// Assemble from dense factors; every factor must be dim×dim.
    pub fn from_parts(
        dim: usize,
        left: Option<&CMatrix>,
        right: Option<&CMatrix>,
        jumps: &[(C64, &CMatrix, &CMatrix)],
    ) -> Result<Superoperator> {
        let check = |m: &CMatrix, what: &'static str| -> Result<()> {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: dim,
                    got: m.nrows(),
                });
            }
            Ok(())
        };
        if let Some(l) = left {
            check(l, "superoperator left factor")?;
        }
        if let Some(r) = right {
            check(r, "superoperator right factor")?;
        }
        for (_, pre, post) in jumps {
            check(pre, "superoperator jump pre factor")?;
            check(post, "superoperator jump post factor")?;
        }
        Ok(Superoperator {
            dim,
            left: left.map(Csr::from_dense),
            right: right.map(Csr::from_dense),
            jumps: jumps
                .iter()
                .map(|&(weight, pre, post)| Jump {
                    weight,
                    pre: Csr::from_dense(pre),
                    post: Csr::from_dense(post),
                })
                .collect(),
        })
    }

    /// Assemble from pre-built sparse factors (used by the composite-space
    /// benchmark solver, where dense factors would be wasteful).
    pub fn from_sparse_parts(
        dim: usize,
        left: Option<Csr>,
        right: Option<Csr>,
        jumps: Vec<Jump>,
    ) -> Result<Superoperator> {
        let check = |m: &Csr, what: &'static str| -> Result<()> {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: dim,
                    got: m.nrows(),
                });
            }
            Ok(())
        };
        if let Some(l) = &left {
            check(l, "superoperator left factor")?;
        }
        if let Some(r) = &right {
            check(r, "superoperator right factor")?;
        }
        for j in &jumps {
            check(&j.pre, "superoperator jump pre factor")?;
            check(&j.post, "superoperator jump post factor")?;
        }
        Ok(Superoperator {
            dim,
            left,
            right,
            jumps,
        })
    }

    /// Hilbert-space dimension the map acts on (states are dim×dim).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// out = action on rho; `scratch` must be dim×dim and is clobbered.
    pub fn apply_into(&self, rho: &CMatrix, scratch: &mut CMatrix, out: &mut CMatrix) {
        out.fill(C64::new(0.0, 0.0));
        let one = C64::new(1.0, 0.0);
        if let Some(l) = &self.left {
            l.mul_dense_acc(rho, one, out);
        }
        if let Some(r) = &self.right {
            r.dense_mul_acc(rho, one, out);
        }
        for j in &self.jumps {
            scratch.fill(C64::new(0.0, 0.0));
            j.pre.mul_dense_acc(rho, one, scratch);
            j.post.dense_mul_acc(scratch, j.weight, out);
        }
    }

    /// Allocating convenience wrapper around [`apply_into`](Self::apply_into).
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut scratch = CMatrix::zeros(self.dim, self.dim);
        let mut out = CMatrix::zeros(self.dim, self.dim);
        self.apply_into(rho, &mut scratch, &mut out);
        out
    }

    /// Dense dim²×dim² matrix acting on column-stacked states.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.dim;
        let id = CMatrix::identity(n, n);
        let mut acc = CMatrix::zeros(n * n, n * n);
        if let Some(l) = &self.left {
            acc += kron(&id, &l.to_dense());
        }
        if let Some(r) = &self.right {
            acc += kron(&r.to_dense().transpose(), &id);
        }
        for j in &self.jumps {
            acc += kron(&j.post.to_dense().transpose(), &j.pre.to_dense()) * j.weight;
        }
        acc
    }
}
