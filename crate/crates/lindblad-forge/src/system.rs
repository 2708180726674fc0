//! System description and its eigenbasis transition data: the jump operators
//! σ_j = |n_j⟩⟨m_j| between energy eigenstates, their frequencies
//! ω_j = E_{m_j} − E_{n_j}, and the coupling matrix elements picked up by
//! each environment channel.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::operator::{
    self, herm_eig, relative_hermiticity_defect, C64, CMatrix,
};

/// Relative Hermiticity tolerance for user-supplied system matrices.
pub const SYSTEM_HERMITICITY_TOL: f64 = 1e-10;

/// Eigenvalues closer than this (eV) are treated as one degenerate block
/// when fixing the eigenbasis.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

/// Numerically-zero coupling elements below this threshold are dropped from
/// the transition table.
pub const DEFAULT_ELEMENT_TOL: f64 = 1e-12;

/// A system Hamiltonian plus the dimensionless operators through which each
/// environment channel couples to it (coupling scales live in the bath).
#[derive(Clone, Debug)]
pub struct SystemSpec {
    hamiltonian: CMatrix,
    coupling_ops: Vec<CMatrix>,
}

impl SystemSpec {
    pub fn new(hamiltonian: CMatrix, coupling_ops: Vec<CMatrix>) -> Result<SystemSpec> {
        let dim = hamiltonian.nrows();
        if dim == 0 {
            return Err(Error::EmptyInput("system Hamiltonian"));
        }
        if hamiltonian.ncols() != dim {
            return Err(Error::DimensionMismatch {
                what: "system Hamiltonian (must be square)",
                expected: dim,
                got: hamiltonian.ncols(),
            });
        }
        if coupling_ops.is_empty() {
            return Err(Error::EmptyInput("system coupling operators"));
        }
        if !operator::is_finite(&hamiltonian) {
            return Err(Error::invalid(
                "system Hamiltonian",
                "all entries finite",
                f64::NAN,
            ));
        }
        let check_herm = |m: &CMatrix, what: &'static str| -> Result<()> {
            let defect = relative_hermiticity_defect(m);
            if defect > SYSTEM_HERMITICITY_TOL {
                return Err(Error::NotHermitian {
                    what,
                    defect,
                    tol: SYSTEM_HERMITICITY_TOL,
                });
            }
            Ok(())
        };
        check_herm(&hamiltonian, "system Hamiltonian")?;
        for a in &coupling_ops {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    what: "coupling operator",
                    expected: dim,
                    got: a.nrows(),
                });
            }
            if !operator::is_finite(a) {
                return Err(Error::invalid(
                    "coupling operator",
                    "all entries finite",
                    f64::NAN,
                ));
            }
            check_herm(a, "coupling operator")?;
        }
        Ok(SystemSpec {
            hamiltonian,
            coupling_ops,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// Number of environment channels M.
    pub fn channels(&self) -> usize {
        self.coupling_ops.len()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn coupling_ops(&self) -> &[CMatrix] {
        &self.coupling_ops
    }
}

/// Result of diagonalizing the system Hamiltonian: ascending energies and a
/// unitary whose columns are the corresponding eigenstates, with a
/// deterministic gauge so repeated runs agree bit-for-bit.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub energies: DVector<f64>,
    pub basis: CMatrix,
}

impl EigenSystem {
    /// Transform an operator into the eigenbasis: V† A V.
    pub fn to_eigenbasis(&self, a: &CMatrix) -> CMatrix {
        self.basis.adjoint() * a * &self.basis
    }

    /// Transform an operator back to the input basis: V A V†.
    pub fn from_eigenbasis(&self, a: &CMatrix) -> CMatrix {
        &self.basis * a * self.basis.adjoint()
    }
}

/// Diagonalize the system Hamiltonian. Within any block of eigenvalues
/// closer than `degeneracy_tol` the eigensolver's basis choice is arbitrary,
/// so the block is re-orthonormalized (modified Gram-Schmidt in solver
/// order) and re-gauged to keep the output a pure function of the input.
pub fn diagonalize_system(spec: &SystemSpec, degeneracy_tol: f64) -> Result<EigenSystem> {
    let eig = herm_eig(spec.hamiltonian())?;
    let n = spec.dim();
    let mut basis = eig.vectors;
    let energies = eig.values;

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && energies[end] - energies[end - 1] <= degeneracy_tol {
            end += 1;
        }
        if end - start > 1 {
            for k in start..end {
                let mut col = basis.column(k).clone_owned();
                for prev in start..k {
                    let p = basis.column(prev);
                    let overlap: C64 = p.dotc(&col);
                    col -= p.clone_owned() * overlap;
                }
                let norm = col.norm();
                if norm > 0.0 {
                    col.unscale_mut(norm);
                }
                // Re-fix the phase: largest-modulus entry real ≥ 0.
                let mut imax = 0;
                let mut best = 0.0f64;
                for (i, v) in col.iter().enumerate() {
                    if v.norm_sqr() > best {
                        best = v.norm_sqr();
                        imax = i;
                    }
                }
                if best > 0.0 {
                    let phase = col[imax] / col[imax].norm();
                    let corr = phase.conj();
                    for v in col.iter_mut() {
                        *v *= corr;
                    }
                }
                basis.set_column(k, &col);
            }
        }
        start = end;
    }
    Ok(EigenSystem { energies, basis })
}

/// One jump operator σ_j = |n_j⟩⟨m_j| between eigenstates, its frequency,
/// and the coupling element each channel attaches to it.
#[derive(Clone, Debug)]
pub struct Transition {
    pub index: usize,
    /// Eigenstate the transition lands in (bra side of σ_j).
    pub bra: usize,
    /// Eigenstate the transition departs from (ket side of σ_j).
    pub ket: usize,
    /// ω_j = E_ket − E_bra (eV); positive for decay toward lower energy.
    pub frequency: f64,
    /// (A_α)_j = Tr{σ_j† A_α} in the eigenbasis, one entry per channel.
    pub elements: Vec<C64>,
}

/// All retained transitions of a system, with the eigendata they refer to.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    pub transitions: Vec<Transition>,
    pub eigen_energies: DVector<f64>,
    pub basis: CMatrix,
    dim: usize,
    channels: usize,
}

impl TransitionTable {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.frequency).collect()
    }

    /// σ_j as a dense matrix in the eigenbasis.
    pub fn sigma_dense(&self, j: usize) -> CMatrix {
        let t = &self.transitions[j];
        let mut m = CMatrix::zeros(self.dim, self.dim);
        m[(t.bra, t.ket)] = C64::new(1.0, 0.0);
        m
    }

    /// σ_i† σ_j; nonzero only when both transitions share the bra state.
    pub fn sigma_pair_dense(&self, i: usize, j: usize) -> CMatrix {
        let ti = &self.transitions[i];
        let tj = &self.transitions[j];
        let mut m = CMatrix::zeros(self.dim, self.dim);
        if ti.bra == tj.bra {
            m[(ti.ket, tj.ket)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Σ_j (A_α)_j σ_j — reproduces the channel operator in the eigenbasis
    /// up to the elements dropped by the enumeration threshold.
    pub fn reconstruct_coupling(&self, alpha: usize) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for t in &self.transitions {
            m[(t.bra, t.ket)] += t.elements[alpha];
        }
        m
    }
}

/// Enumerate every transition whose coupling element survives `element_tol`
/// on at least one channel. Ordered pairs are scanned row-major over
/// (bra, ket); off-diagonal pairs represent jumps between distinct levels,
/// diagonal pairs the pure-dephasing channel at ω = 0.
pub fn enumerate_transitions(
    spec: &SystemSpec,
    eig: &EigenSystem,
    element_tol: f64,
) -> TransitionTable {
    let dim = spec.dim();
    let channels = spec.channels();
    // V†AV is Hermitian analytically; symmetrizing removes the last-ulp
    // asymmetry of the two matrix products so that conjugate transition
    // pairs carry exactly conjugated elements.
    let transformed: Vec<CMatrix> = spec
        .coupling_ops()
        .iter()
        .map(|a| operator::hermitian_part(&eig.to_eigenbasis(a)))
        .collect();

    let mut transitions = Vec::new();
    for bra in 0..dim {
        for ket in 0..dim {
            let elements: Vec<C64> = transformed.iter().map(|a| a[(bra, ket)]).collect();
            let max_el = elements
                .iter()
                .map(|e| e.norm())
                .fold(0.0f64, f64::max);
            if max_el <= element_tol {
                continue;
            }
            transitions.push(Transition {
                index: transitions.len(),
                bra,
                ket,
                frequency: eig.energies[ket] - eig.energies[bra],
                elements,
            });
        }
    }
    TransitionTable {
        transitions,
        eigen_energies: eig.energies.clone(),
        basis: eig.basis.clone(),
        dim,
        channels,
    }
}

/// A group of transitions treated as sharing one frequency.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// Transition indices, ascending.
    pub members: Vec<usize>,
    /// Arithmetic mean of the member frequencies (eV).
    pub mean_frequency: f64,
}

/// Partition of a transition table into frequency clusters.
#[derive(Clone, Debug)]
pub struct Clustering {
    /// Clusters ordered by ascending mean frequency.
    pub clusters: Vec<Cluster>,
    /// Transition index → cluster index.
    pub assignment: Vec<usize>,
}

/// Single-linkage clustering of transition frequencies: two transitions end
/// up in one cluster when a chain of gaps each ≤ `cluster_width` connects
/// them. Width 0 keeps exactly-equal frequencies together.
pub fn cluster_transitions(table: &TransitionTable, cluster_width: f64) -> Result<Clustering> {
    if !(cluster_width >= 0.0) {
        return Err(Error::invalid(
            "cluster_width",
            "must be ≥ 0",
            cluster_width,
        ));
    }
    let n = table.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        table.transitions[a]
            .frequency
            .total_cmp(&table.transitions[b].frequency)
    });

    let mut clusters: Vec<Cluster> = Vec::new();
    let mut assignment = vec![0usize; n];
    let mut current: Vec<usize> = Vec::new();
    let mut prev_freq = f64::NEG_INFINITY;
    for &j in &order {
        let f = table.transitions[j].frequency;
        if !current.is_empty() && f - prev_freq > cluster_width {
            clusters.push(finish_cluster(std::mem::take(&mut current), table));
        }
        current.push(j);
        prev_freq = f;
    }
    if !current.is_empty() {
        clusters.push(finish_cluster(current, table));
    }
    for (c, cluster) in clusters.iter().enumerate() {
        for &j in &cluster.members {
            assignment[j] = c;
        }
    }
    Ok(Clustering {
        clusters,
        assignment,
    })
}

fn finish_cluster(mut members: Vec<usize>, table: &TransitionTable) -> Cluster {
    members.sort_unstable();
    let mean = members
        .iter()
        .map(|&j| table.transitions[j].frequency)
        .sum::<f64>()
        / members.len() as f64;
    Cluster {
        members,
        mean_frequency: mean,
    }
}
