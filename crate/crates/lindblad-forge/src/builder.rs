//! Master-equation construction.
//!
//! Starting point is the second-order (Bloch-Redfield) generator, whose
//! rates sample the bath at two different frequencies per transition pair
//! and therefore do not form a Lindblad dissipator. This module builds:
//!
//! * the raw generator itself ([`build_bre`]),
//! * its exact refactoring into shift + pair-rate (Kossakowski) matrices
//!   ([`bre_lindblad_form`]) — same dynamics, Lindblad-shaped bookkeeping,
//! * one-frequency-per-pair prescriptions that reconcile the two samples by
//!   a geometric mean, an arithmetic mean, or evaluation at clustered mean
//!   frequencies ([`build_prescription`]),
//! * the positivity repair that projects the pair-rate matrix onto the
//!   nearest positive-semidefinite one ([`MasterEquation::repair_positive`]).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::bath::SpectralModel;
use crate::error::{Error, Result};
use crate::operator::{
    herm_eig, hermitian_part, hermiticity_defect, nearest_psd,
    relative_hermiticity_defect, C64, CMatrix,
};
use crate::superop::Superoperator;
use crate::system::{cluster_transitions, TransitionTable};

/// How the two bath samples Γ_ij(ω_i), Γ_ij(ω_j) of a transition pair are
/// reconciled into a single pair rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mean {
    /// (X(ω_i) + X(ω_j)) / 2.
    Arithmetic,
    /// √X(ω_i) · √X(ω_j), factor-wise principal square roots.
    Geometric,
    /// Evaluate at mean frequencies of transition clusters (treating the
    /// members of a cluster as degenerate); cross-cluster pairs average the
    /// evaluations at the two cluster means.
    Clustered,
}

impl Mean {
    fn letter(self) -> char {
        match self {
            Mean::Arithmetic => 'a',
            Mean::Geometric => 'g',
            Mean::Clustered => 'd', // d = degenerate (clustered) frequencies
        }
    }

    fn from_letter(c: char) -> Option<Mean> {
        match c {
            'a' => Some(Mean::Arithmetic),
            'g' => Some(Mean::Geometric),
            'd' => Some(Mean::Clustered),
            _ => None,
        }
    }
}

/// Which generator to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    /// Exact refactoring of the second-order generator; the pair-rate
    /// matrix mixes both frequency samples and is generally indefinite.
    BreForm,
    /// One mean for the shift part (L, from λ) and one for the decay part
    /// (G, from γ = 2πJ).
    Prescribed { shift: Mean, decay: Mean },
}

/// Full build recipe: the method plus its tuning knobs.
#[derive(Clone, Debug, PartialEq)]
pub struct Prescription {
    pub kind: MethodKind,
    /// Frequency window for [`Mean::Clustered`]; must be > 0 when used.
    pub cluster_width: Option<f64>,
    /// If set, zero all cross terms between transitions whose frequencies
    /// differ by more than this (secular approximation).
    pub secular_cutoff: Option<f64>,
}

impl Prescription {
    pub fn bre() -> Prescription {
        Prescription {
            kind: MethodKind::BreForm,
            cluster_width: None,
            secular_cutoff: None,
        }
    }

    pub fn new(shift: Mean, decay: Mean) -> Prescription {
        Prescription {
            kind: MethodKind::Prescribed { shift, decay },
            cluster_width: None,
            secular_cutoff: None,
        }
    }

    pub fn with_cluster_width(mut self, width: f64) -> Prescription {
        self.cluster_width = Some(width);
        self
    }

    pub fn with_secular_cutoff(mut self, cutoff: f64) -> Prescription {
        self.secular_cutoff = Some(cutoff);
        self
    }

    fn uses_clustering(&self) -> bool {
        matches!(
            self.kind,
            MethodKind::Prescribed {
                shift: Mean::Clustered,
                ..
            } | MethodKind::Prescribed {
                decay: Mean::Clustered,
                ..
            }
        )
    }
}

/// Method label as used in configs, reports, and CSV columns.
///
/// String form: `Exact`, `BRE`, or `<s>L<d>G` where `s`/`d` pick the mean
/// for the shift/decay part (`a`rithmetic, `g`eometric, `d` = clustered
/// degenerate frequencies), e.g. `aLgG`. A trailing `+` marks the
/// positivity-repaired variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodTag {
    /// Benchmark propagation of the full system+modes model.
    Exact,
    Generator { kind: MethodKind, repaired: bool },
}

impl MethodTag {
    pub fn repaired(&self) -> bool {
        matches!(
            self,
            MethodTag::Generator { repaired: true, .. }
        )
    }

    pub fn kind(&self) -> Option<MethodKind> {
        match self {
            MethodTag::Exact => None,
            MethodTag::Generator { kind, .. } => Some(*kind),
        }
    }

    /// All tags an ensemble comparison runs by default.
    pub fn ensemble_set() -> Vec<MethodTag> {
        let p = |shift, decay, repaired| MethodTag::Generator {
            kind: MethodKind::Prescribed { shift, decay },
            repaired,
        };
        vec![
            MethodTag::Exact,
            MethodTag::Generator {
                kind: MethodKind::BreForm,
                repaired: false,
            },
            MethodTag::Generator {
                kind: MethodKind::BreForm,
                repaired: true,
            },
            p(Mean::Arithmetic, Mean::Arithmetic, false),
            p(Mean::Arithmetic, Mean::Arithmetic, true),
            p(Mean::Arithmetic, Mean::Geometric, false),
            p(Mean::Arithmetic, Mean::Geometric, true),
        ]
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodTag::Exact => write!(f, "Exact"),
            MethodTag::Generator { kind, repaired } => {
                match kind {
                    MethodKind::BreForm => write!(f, "BRE")?,
                    MethodKind::Prescribed { shift, decay } => {
                        write!(f, "{}L{}G", shift.letter(), decay.letter())?
                    }
                }
                if *repaired {
                    write!(f, "+")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<MethodTag> {
        if s == "Exact" {
            return Ok(MethodTag::Exact);
        }
        let (body, repaired) = match s.strip_suffix('+') {
            Some(b) => (b, true),
            None => (s, false),
        };
        if body == "BRE" {
            return Ok(MethodTag::Generator {
                kind: MethodKind::BreForm,
                repaired,
            });
        }
        let chars: Vec<char> = body.chars().collect();
        if chars.len() == 4 && chars[1] == 'L' && chars[3] == 'G' {
            if let (Some(shift), Some(decay)) =
                (Mean::from_letter(chars[0]), Mean::from_letter(chars[2]))
            {
                return Ok(MethodTag::Generator {
                    kind: MethodKind::Prescribed { shift, decay },
                    repaired,
                });
            }
        }
        Err(Error::UnknownMethod(s.to_string()))
    }
}

/// Bath overlaps for every ordered transition pair, evaluated at the row
/// transition's frequency and at the column transition's frequency:
/// Γ_ij(ω) = Σ_αβ (A_α)_i* γ_αβ(ω) (A_β)_j, and likewise Λ from λ.
#[derive(Clone, Debug)]
pub struct RateTensors {
    /// [(i, j)] = Γ_ij(ω_j).
    pub gamma_col: CMatrix,
    /// [(i, j)] = Γ_ij(ω_i); equals `gamma_col.adjoint()` exactly.
    pub gamma_row: CMatrix,
    /// [(i, j)] = Λ_ij(ω_j).
    pub lambda_col: CMatrix,
    /// [(i, j)] = Λ_ij(ω_i).
    pub lambda_row: CMatrix,
}

/// Overlap matrices (Γ(ω), Λ(ω)) for every pair, at one shared frequency.
fn pair_matrices(
    table: &TransitionTable,
    bath: &SpectralModel,
    omega: f64,
) -> Result<(CMatrix, CMatrix)> {
    let t = table.len();
    let m = table.channels();
    let eval = bath.eval(omega)?;
    let gamma_ch = CMatrix::from_fn(m, m, |a, b| {
        C64::new(2.0 * std::f64::consts::PI * eval.j[(a, b)], 0.0)
    });
    let lambda_ch = CMatrix::from_fn(m, m, |a, b| C64::new(eval.lambda[(a, b)], 0.0));
    // Channel-element matrix E[α, j] = (A_α)_j.
    let e = CMatrix::from_fn(m, t, |a, j| table.transitions[j].elements[a]);
    let gamma = e.adjoint() * gamma_ch * &e;
    let lambda = e.adjoint() * lambda_ch * &e;
    // Hermitian analytically (the channel matrices are real symmetric);
    // symmetrize so conjugate-pair bookkeeping is exact.
    Ok((hermitian_part(&gamma), hermitian_part(&lambda)))
}

/// Evaluate the pair overlaps at each transition's own frequency.
pub fn rate_tensors(table: &TransitionTable, bath: &SpectralModel) -> Result<RateTensors> {
    if table.channels() != bath.channels() {
        return Err(Error::DimensionMismatch {
            what: "bath channels vs system coupling operators",
            expected: table.channels(),
            got: bath.channels(),
        });
    }
    let t = table.len();
    let mut gamma_col = CMatrix::zeros(t, t);
    let mut lambda_col = CMatrix::zeros(t, t);
    // One bath evaluation per distinct frequency.
    let mut cache: std::collections::BTreeMap<u64, (CMatrix, CMatrix)> =
        std::collections::BTreeMap::new();
    for j in 0..t {
        let freq = table.transitions[j].frequency;
        let key = freq.to_bits();
        if !cache.contains_key(&key) {
            cache.insert(key, pair_matrices(table, bath, freq)?);
        }
        let (gamma, lambda) = &cache[&key];
        gamma_col.set_column(j, &gamma.column(j));
        lambda_col.set_column(j, &lambda.column(j));
    }
    // Γ_ij(ω) = conj(Γ_ji(ω)), so the row-frequency tensor is exactly the
    // adjoint of the column-frequency one.
    Ok(RateTensors {
        gamma_row: gamma_col.adjoint(),
        lambda_row: lambda_col.adjoint(),
        gamma_col,
        lambda_col,
    })
}

/// A generator in shift + pair-rate form: ρ̇ = −i[H + Δ, ρ] +
/// Σ_ij (K_ij/2)(−{σ_i†σ_j, ρ} + 2 σ_j ρ σ_i†), with H the diagonalized
/// system Hamiltonian. All matrices live in the system eigenbasis.
#[derive(Clone, Debug)]
pub struct MasterEquation {
    pub table: Arc<TransitionTable>,
    pub prescription: Prescription,
    /// Whether the pair-rate matrix has been projected onto the nearest PSD
    /// matrix (the `+` variants).
    pub repaired: bool,
    /// Energy-shift matrix Δ, dim×dim. Hermitian for every method except a
    /// geometric-mean shift, whose non-Hermitian Δ is kept as built.
    pub delta: CMatrix,
    /// Pair-rate (Kossakowski) matrix over transitions, stored symmetrized.
    pub kossakowski: CMatrix,
    /// ‖K − K†‖_F of the raw build before symmetrization. Geometric means
    /// of complex multi-channel rates are branch-ambiguous; the defect is
    /// recorded rather than hidden (it is round-off-small in practice).
    pub kossakowski_defect: f64,
    /// ‖Δ − Δ†‖_F of the raw build. The stored Δ keeps this defect only
    /// for geometric-mean shifts; other methods symmetrize it away.
    pub delta_defect: f64,
}

/// Relative Hermiticity defect above which a shift matrix disqualifies the
/// generator from positivity repair.
const REPAIR_HERMITICITY_TOL: f64 = 1e-9;

/// Relative PSD tolerance for collapse-operator extraction.
const PSD_TOL: f64 = 1e-12;

impl MasterEquation {
    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    /// Method label for this generator.
    pub fn tag(&self) -> MethodTag {
        MethodTag::Generator {
            kind: self.prescription.kind,
            repaired: self.repaired,
        }
    }

    /// Project the pair-rate matrix onto the nearest positive-semidefinite
    /// matrix (eigenvalues below zero are discarded in its own eigenbasis).
    /// The shift matrix is left untouched, so the repaired generator keeps
    /// the same coherent part.
    pub fn repair_positive(&self) -> Result<MasterEquation> {
        let delta_rel = relative_hermiticity_defect(&self.delta);
        if delta_rel > REPAIR_HERMITICITY_TOL {
            return Err(Error::NonHermitianKossakowski { defect: delta_rel });
        }
        let mut out = self.clone();
        out.kossakowski = nearest_psd(&self.kossakowski)?;
        out.repaired = true;
        Ok(out)
    }

    /// Assemble the generator as a superoperator acting on eigenbasis
    /// density matrices.
    pub fn to_liouvillian(&self) -> Superoperator {
        let dim = self.dim();
        let t = self.table.len();
        let mut h_eff = CMatrix::zeros(dim, dim);
        for k in 0..dim {
            h_eff[(k, k)] = C64::new(self.table.eigen_energies[k], 0.0);
        }
        h_eff += &self.delta;

        // M = Σ_ij K_ij σ_i†σ_j collapses to bra-sharing pairs.
        let mut m = CMatrix::zeros(dim, dim);
        for i in 0..t {
            for j in 0..t {
                let k = self.kossakowski[(i, j)];
                if k == C64::new(0.0, 0.0) {
                    continue;
                }
                let ti = &self.table.transitions[i];
                let tj = &self.table.transitions[j];
                if ti.bra == tj.bra {
                    m[(ti.ket, tj.ket)] += k;
                }
            }
        }

        let minus_i = C64::new(0.0, -1.0);
        let plus_i = C64::new(0.0, 1.0);
        let left = h_eff.clone() * minus_i - m.scale(0.5);
        let right = h_eff * plus_i - m.scale(0.5);

        // Jump part Σ_ij K_ij σ_j ρ σ_i† grouped by the pre factor:
        // Σ_j σ_j ρ B_j with B_j = Σ_i K_ij σ_i†.
        let mut jumps: Vec<(C64, CMatrix, CMatrix)> = Vec::new();
        for j in 0..t {
            let mut post = CMatrix::zeros(dim, dim);
            let mut any = false;
            for i in 0..t {
                let k = self.kossakowski[(i, j)];
                if k == C64::new(0.0, 0.0) {
                    continue;
                }
                let ti = &self.table.transitions[i];
                post[(ti.ket, ti.bra)] += k;
                any = true;
            }
            if any {
                jumps.push((C64::new(1.0, 0.0), self.table.sigma_dense(j), post));
            }
        }
        let jump_refs: Vec<(C64, &CMatrix, &CMatrix)> =
            jumps.iter().map(|(w, p, q)| (*w, p, q)).collect();
        Superoperator::from_parts(dim, Some(&left), Some(&right), &jump_refs)
            .expect("internally consistent dimensions")
    }

    /// Diagonalize the pair-rate matrix into collapse operators:
    /// K = U diag(r) U† gives L_k = Σ_j conj(U_jk) σ_j with rate r_k, so
    /// that Σ_k r_k L_k ρ L_k† = Σ_ij K_ij σ_j ρ σ_i† exactly.
    /// Requires a PSD pair-rate matrix — repair first if needed.
    /// Returned in descending-rate order; numerically-zero rates dropped.
    pub fn collapse_operators(&self) -> Result<Vec<(f64, CMatrix)>> {
        let t = self.table.len();
        if t == 0 {
            return Ok(Vec::new());
        }
        let eig = herm_eig(&self.kossakowski)?;
        let norm = self.kossakowski.norm();
        let min = eig.values[0];
        if min < -PSD_TOL * norm {
            return Err(Error::NotPositiveSemidefinite {
                what: "pair-rate (Kossakowski) matrix",
                min_eigenvalue: min,
                tol: PSD_TOL * norm,
            });
        }
        let max = eig.values[t - 1].max(0.0);
        let dim = self.dim();
        let mut out = Vec::new();
        for k in (0..t).rev() {
            let rate = eig.values[k];
            if rate <= PSD_TOL * max {
                continue;
            }
            let mut op = CMatrix::zeros(dim, dim);
            for j in 0..t {
                let tj = &self.table.transitions[j];
                op[(tj.bra, tj.ket)] += eig.vectors[(j, k)].conj();
            }
            out.push((rate, op));
        }
        Ok(out)
    }
}

/// Principal square root with the branch pinned for real negatives: a zero
/// imaginary part (either sign, e.g. from an adjoint) is treated as +0, so
/// √(−x) = +i√x always. Without this, conjugation artifacts (−0.0i) would
/// flip the branch and silently symmetrize geometric means.
fn principal_sqrt(z: C64) -> C64 {
    let z = if z.im == 0.0 { C64::new(z.re, 0.0) } else { z };
    z.sqrt()
}

/// Shared pair-data container while assembling a build.
struct PairData {
    /// Pair-rate matrix (K or Γ̃), T×T.
    rates: CMatrix,
    /// Shift contribution per pair (Λ̃ or the refactored commutator
    /// coefficient already divided by i), T×T.
    shift: CMatrix,
}

fn secular_zeroing(table: &TransitionTable, cutoff: f64, data: &mut PairData) {
    let t = table.len();
    for i in 0..t {
        for j in 0..t {
            if i == j {
                continue;
            }
            let gap =
                (table.transitions[i].frequency - table.transitions[j].frequency).abs();
            if gap > cutoff {
                data.rates[(i, j)] = C64::new(0.0, 0.0);
                data.shift[(i, j)] = C64::new(0.0, 0.0);
            }
        }
    }
}

/// Σ_ij S_ij σ_i†σ_j as a dim×dim matrix.
fn assemble_shift(table: &TransitionTable, shift: &CMatrix) -> CMatrix {
    let dim = table.dim();
    let t = table.len();
    let mut delta = CMatrix::zeros(dim, dim);
    for i in 0..t {
        for j in 0..t {
            let s = shift[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            let ti = &table.transitions[i];
            let tj = &table.transitions[j];
            if ti.bra == tj.bra {
                delta[(ti.ket, tj.ket)] += s;
            }
        }
    }
    delta
}

/// Build a generator for the given prescription.
pub fn build_prescription(
    table: &Arc<TransitionTable>,
    bath: &SpectralModel,
    prescription: &Prescription,
) -> Result<MasterEquation> {
    if let Some(cutoff) = prescription.secular_cutoff {
        if !(cutoff >= 0.0) {
            return Err(Error::invalid("secular_cutoff", "≥ 0", cutoff));
        }
    }
    let rt = rate_tensors(table, bath)?;
    let t = table.len();

    let mut data = match prescription.kind {
        MethodKind::BreForm => {
            // K_ij = K⁺_ij(ω_j) + K⁻_ij(ω_i) and the commutator coefficient
            // C_ij = (K⁺_ij(ω_j) − K⁻_ij(ω_i))/2, with K± = Γ/2 ± iΛ; the
            // shift entry is C/i so that Δ enters as −i[Δ, ρ].
            let i_unit = C64::new(0.0, 1.0);
            let rates = CMatrix::from_fn(t, t, |i, j| {
                let k_plus = 0.5 * rt.gamma_col[(i, j)] + i_unit * rt.lambda_col[(i, j)];
                let k_minus = 0.5 * rt.gamma_row[(i, j)] - i_unit * rt.lambda_row[(i, j)];
                k_plus + k_minus
            });
            let shift = CMatrix::from_fn(t, t, |i, j| {
                let k_plus = 0.5 * rt.gamma_col[(i, j)] + i_unit * rt.lambda_col[(i, j)];
                let k_minus = 0.5 * rt.gamma_row[(i, j)] - i_unit * rt.lambda_row[(i, j)];
                (k_plus - k_minus) * 0.5 / i_unit
            });
            PairData { rates, shift }
        }
        MethodKind::Prescribed { shift, decay } => {
            let clustering = if prescription.uses_clustering() {
                let width = prescription.cluster_width.ok_or_else(|| {
                    Error::invalid(
                        "cluster_width",
                        "set and > 0 for clustered prescriptions",
                        f64::NAN,
                    )
                })?;
                if !(width > 0.0) {
                    return Err(Error::invalid(
                        "cluster_width",
                        "set and > 0 for clustered prescriptions",
                        width,
                    ));
                }
                Some(cluster_transitions(table, width)?)
            } else {
                None
            };
            // Pair matrices at each cluster's mean frequency, on demand.
            let cluster_eval: Option<Vec<(CMatrix, CMatrix)>> = match &clustering {
                Some(cl) => {
                    let mut evals = Vec::with_capacity(cl.clusters.len());
                    for c in &cl.clusters {
                        evals.push(pair_matrices(table, bath, c.mean_frequency)?);
                    }
                    Some(evals)
                }
                None => None,
            };

            let combine = |mean: Mean, row: &CMatrix, col: &CMatrix, which: usize| -> CMatrix {
                match mean {
                    Mean::Arithmetic => CMatrix::from_fn(t, t, |i, j| {
                        (row[(i, j)] + col[(i, j)]) * 0.5
                    }),
                    Mean::Geometric => CMatrix::from_fn(t, t, |i, j| {
                        principal_sqrt(row[(i, j)]) * principal_sqrt(col[(i, j)])
                    }),
                    Mean::Clustered => {
                        let cl = clustering.as_ref().expect("validated above");
                        let evals = cluster_eval.as_ref().expect("validated above");
                        CMatrix::from_fn(t, t, |i, j| {
                            let ci = cl.assignment[i];
                            let cj = cl.assignment[j];
                            let pick = |c: usize| -> C64 {
                                let (ref gamma, ref lambda) = evals[c];
                                if which == 0 {
                                    gamma[(i, j)]
                                } else {
                                    lambda[(i, j)]
                                }
                            };
                            (pick(ci) + pick(cj)) * 0.5
                        })
                    }
                }
            };

            let rates = combine(decay, &rt.gamma_row, &rt.gamma_col, 0);
            let shift = combine(shift, &rt.lambda_row, &rt.lambda_col, 1);
            PairData { rates, shift }
        }
    };

    if let Some(cutoff) = prescription.secular_cutoff {
        secular_zeroing(table, cutoff, &mut data);
    }

    let kossakowski_defect = hermiticity_defect(&data.rates);
    let kossakowski = hermitian_part(&data.rates);

    let delta_raw = assemble_shift(table, &data.shift);
    let delta_defect = hermiticity_defect(&delta_raw);
    let keep_raw_delta = matches!(
        prescription.kind,
        MethodKind::Prescribed {
            shift: Mean::Geometric,
            ..
        }
    );
    let delta = if keep_raw_delta {
        delta_raw
    } else {
        hermitian_part(&delta_raw)
    };

    Ok(MasterEquation {
        table: Arc::clone(table),
        prescription: prescription.clone(),
        repaired: false,
        delta,
        kossakowski,
        kossakowski_defect,
        delta_defect,
    })
}

/// The second-order generator in shift + pair-rate form (exact rewrite).
pub fn bre_lindblad_form(
    table: &Arc<TransitionTable>,
    bath: &SpectralModel,
) -> Result<MasterEquation> {
    build_prescription(table, bath, &Prescription::bre())
}

/// Build the master equation a non-benchmark tag names, applying the
/// positivity repair for `+` variants. `cluster_width` is consumed only by
/// clustered (`d…`) prescriptions; those fail without one.
pub fn build_generator(
    tag: &MethodTag,
    table: &Arc<TransitionTable>,
    bath: &SpectralModel,
    cluster_width: Option<f64>,
) -> Result<MasterEquation> {
    let kind = tag.kind().ok_or_else(|| {
        Error::Config("'Exact' is the benchmark solver, not a master-equation method".into())
    })?;
    let me = match kind {
        MethodKind::BreForm => bre_lindblad_form(table, bath)?,
        MethodKind::Prescribed { shift, decay } => {
            let mut prescription = Prescription::new(shift, decay);
            if let Some(width) = cluster_width {
                prescription = prescription.with_cluster_width(width);
            }
            build_prescription(table, bath, &prescription)?
        }
    };
    if tag.repaired() {
        me.repair_positive()
    } else {
        Ok(me)
    }
}

/// Assemble the second-order generator directly from its four sum terms:
///
///   ρ̇ = −i[H,ρ] + Σ_ij { −K⁺_ij(ω_j)·σ_i†σ_j ρ − K⁻_ij(ω_i)·ρ σ_i†σ_j
///                         + (K⁺_ij(ω_j) + K⁻_ij(ω_i))·σ_j ρ σ_i† }.
///
/// Used as a cross-check: [`bre_lindblad_form`]'s Liouvillian must match
/// this operator (the refactoring is an algebraic identity).
pub fn build_bre(table: &TransitionTable, bath: &SpectralModel) -> Result<Superoperator> {
    let rt = rate_tensors(table, bath)?;
    let t = table.len();
    let dim = table.dim();
    let i_unit = C64::new(0.0, 1.0);

    let mut h = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        h[(k, k)] = C64::new(table.eigen_energies[k], 0.0);
    }

    // Left/right one-sided coefficient matrices Σ_ij K±_ij σ_i†σ_j.
    let mut m_plus = CMatrix::zeros(dim, dim);
    let mut m_minus = CMatrix::zeros(dim, dim);
    for i in 0..t {
        for j in 0..t {
            let ti = &table.transitions[i];
            let tj = &table.transitions[j];
            if ti.bra != tj.bra {
                continue;
            }
            let k_plus = 0.5 * rt.gamma_col[(i, j)] + i_unit * rt.lambda_col[(i, j)];
            let k_minus = 0.5 * rt.gamma_row[(i, j)] - i_unit * rt.lambda_row[(i, j)];
            m_plus[(ti.ket, tj.ket)] += k_plus;
            m_minus[(ti.ket, tj.ket)] += k_minus;
        }
    }

    let left = h.clone() * (-i_unit) - m_plus;
    let right = h * i_unit - m_minus;

    // Refilling term grouped by the pre factor σ_j.
    let mut jumps: Vec<(C64, CMatrix, CMatrix)> = Vec::new();
    for j in 0..t {
        let mut post = CMatrix::zeros(dim, dim);
        let mut any = false;
        for i in 0..t {
            let ti = &table.transitions[i];
            let k_plus = 0.5 * rt.gamma_col[(i, j)] + i_unit * rt.lambda_col[(i, j)];
            let k_minus = 0.5 * rt.gamma_row[(i, j)] - i_unit * rt.lambda_row[(i, j)];
            let w = k_plus + k_minus;
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            post[(ti.ket, ti.bra)] += w;
            any = true;
        }
        if any {
            let mut pre = CMatrix::zeros(dim, dim);
            let tj = &table.transitions[j];
            pre[(tj.bra, tj.ket)] = C64::new(1.0, 0.0);
            jumps.push((C64::new(1.0, 0.0), pre, post));
        }
    }
    let jump_refs: Vec<(C64, &CMatrix, &CMatrix)> =
        jumps.iter().map(|(w, p, q)| (*w, p, q)).collect();
    Superoperator::from_parts(dim, Some(&left), Some(&right), &jump_refs)
}
