//! Dense complex-matrix utilities consumed by every other module: Hermitian
//! eigendecomposition, nearest-PSD projection, partial trace, vectorization.
//!
//! Conventions used throughout the crate: ħ = 1, energies in eV, times in
//! eV⁻¹; vectorization is column-stacking, so vec(AρB) = (Bᵀ ⊗ A) vec(ρ).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative Hermiticity tolerance accepted by [`herm_eig`] and [`nearest_psd`].
pub const HERMITICITY_TOL: f64 = 1e-9;

/// (M + M†) / 2.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// ‖M − M†‖_F (absolute).
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

/// ‖M − M†‖_F / ‖M‖_F, with the convention 0/0 = 0.
pub fn relative_hermiticity_defect(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        0.0
    } else {
        hermiticity_defect(m) / norm
    }
}

/// ‖A − B‖_F.
pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            what: "frobenius_distance operands",
            expected: a.nrows() * a.ncols(),
            got: b.nrows() * b.ncols(),
        });
    }
    Ok((a - b).norm())
}

/// True iff every entry is finite (no NaN/Inf in either component).
pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// a unitary matrix whose columns are the matching eigenvectors.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl HermitianEig {
    /// V diag(values) V†.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        let diag = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(self.values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        &self.vectors * diag * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition with deterministic ordering and phase gauge.
///
/// The input must be Hermitian to [`HERMITICITY_TOL`] (relative); the
/// residual asymmetry is discarded by symmetrizing before the solve.
/// Eigenvalues come out ascending; each eigenvector is scaled so its
/// largest-modulus entry is real and positive, making the output a pure
/// function of the input (no run-to-run or thread dependence).
pub fn herm_eig(m: &CMatrix) -> Result<HermitianEig> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what: "herm_eig input (must be square)",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.is_empty() {
        return Err(Error::EmptyInput("herm_eig input"));
    }
    let defect = hermiticity_defect(m);
    let tol = HERMITICITY_TOL * m.norm();
    if defect > tol {
        return Err(Error::NotHermitian {
            what: "herm_eig input",
            defect,
            tol,
        });
    }
    let n = m.nrows();
    let h = hermitian_part(m);

    // Exactly-diagonal input: sort the diagonal instead of iterating, so
    // diagonal Hamiltonians keep their energies bit-exactly.
    if (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == C64::new(0.0, 0.0))) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| h[(a, a)].re.total_cmp(&h[(b, b)].re));
        let mut values = DVector::zeros(n);
        let mut vectors = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            values[dst] = h[(src, src)].re;
            vectors[(src, dst)] = C64::new(1.0, 0.0);
        }
        return Ok(HermitianEig { values, vectors });
    }

    let eig = nalgebra::SymmetricEigen::new(h);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = DVector::zeros(n);
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // Phase gauge: rotate so the largest-|entry| component is real ≥ 0.
        let mut imax = 0;
        let mut best = 0.0f64;
        for (i, v) in col.iter().enumerate() {
            let a = v.norm_sqr();
            if a > best {
                best = a;
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
        vectors.set_column(dst, &col);
    }
    Ok(HermitianEig { values, vectors })
}

/// Smallest eigenvalue of the Hermitian part of `m`.
///
/// Diagnostic helper: no Hermiticity validation, so it is usable on the
/// slightly non-Hermitian states a pathological generator can produce.
pub fn min_herm_eigenvalue(m: &CMatrix) -> f64 {
    let h = hermitian_part(m);
    h.symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// Closest (Frobenius) positive-semidefinite matrix: negative eigenvalues
/// are clamped to zero in the input's own eigenbasis.
pub fn nearest_psd(m: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(m)?;
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.values[k];
        if lam <= 0.0 {
            continue;
        }
        let v = eig.vectors.column(k);
        for j in 0..n {
            let w = C64::new(lam, 0.0) * v[j].conj();
            for i in 0..n {
                out[(i, j)] += v[i] * w;
            }
        }
    }
    // Symmetrize away accumulation round-off so the result is exactly usable
    // as a Hermitian input downstream.
    Ok(hermitian_part(&out))
}

/// Kronecker product (first factor owns the most significant index).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Trace out all factors except `keep` from a state on a tensor-product
/// space with the given factor dimensions (first factor most significant,
/// matching [`kron`]).
pub fn partial_trace(rho: &CMatrix, dims: &[usize], keep: usize) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if rho.nrows() != rho.ncols() {
        return Err(Error::DimensionMismatch {
            what: "partial_trace input (must be square)",
            expected: rho.nrows(),
            got: rho.ncols(),
        });
    }
    if rho.nrows() != total {
        return Err(Error::DimensionMismatch {
            what: "partial_trace input vs subsystem dims",
            expected: total,
            got: rho.nrows(),
        });
    }
    if keep >= dims.len() {
        return Err(Error::DimensionMismatch {
            what: "partial_trace keep index",
            expected: dims.len(),
            got: keep,
        });
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::EmptyInput("partial_trace subsystem dimension"));
    }

    // Strides of the row-major multi-index over `dims`.
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for k in (0..n - 1).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let dk = dims[keep];
    let sk = strides[keep];

    let rest: usize = total / dk;
    let mut out = CMatrix::zeros(dk, dk);
    for r in 0..rest {
        // Decompose r over the traced-out factors to get the base offset.
        let mut rem = r;
        let mut offset = 0usize;
        for k in (0..n).rev() {
            if k == keep {
                continue;
            }
            offset += (rem % dims[k]) * strides[k];
            rem /= dims[k];
        }
        for b in 0..dk {
            let col = offset + b * sk;
            for a in 0..dk {
                out[(a, b)] += rho[(offset + a * sk, col)];
            }
        }
    }
    Ok(out)
}

/// Column-stacking vectorization.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &CVector, nrows: usize, ncols: usize) -> Result<CMatrix> {
    if v.len() != nrows * ncols {
        return Err(Error::DimensionMismatch {
            what: "unvectorize length",
            expected: nrows * ncols,
            got: v.len(),
        });
    }
    Ok(CMatrix::from_column_slice(nrows, ncols, v.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::testkit::{rand_density, rand_hermitian, rand_matrix};
    use approx::assert_abs_diff_eq;

    fn cm(rows: usize, cols: usize, entries: &[(f64, f64)]) -> CMatrix {
        // Entries listed row-major for readability.
        assert_eq!(entries.len(), rows * cols);
        CMatrix::from_fn(rows, cols, |i, j| {
            let (re, im) = entries[i * cols + j];
            C64::new(re, im)
        })
    }

    #[test]
    fn herm_eig_identity_is_fixed_point() {
        let eig = herm_eig(&CMatrix::identity(3, 3)).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(eig.values[k], 1.0, epsilon = 1e-14);
        }
        assert!((&eig.vectors - CMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn herm_eig_sorts_diagonal_ascending() {
        let m = cm(2, 2, &[(2.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)]);
        let eig = herm_eig(&m).unwrap();
        assert_abs_diff_eq!(eig.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn herm_eig_two_by_two_closed_form() {
        let m = cm(2, 2, &[(1.0, 0.0), (2.0, 0.0), (2.0, 0.0), (1.0, 0.0)]);
        let eig = herm_eig(&m).unwrap();
        assert_abs_diff_eq!(eig.values[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn herm_eig_complex_offdiagonal() {
        let m = cm(2, 2, &[(1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 0.0)]);
        let eig = herm_eig(&m).unwrap();
        assert_abs_diff_eq!(eig.values[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let m = cm(2, 2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        match herm_eig(&m) {
            Err(Error::NotHermitian { defect, .. }) => {
                assert_abs_diff_eq!(defect, 2.0f64.sqrt(), epsilon = 1e-14);
            }
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn herm_eig_reconstruction_and_unitarity() {
        let mut rng = Rng::new(7);
        for n in [2usize, 3, 6, 8] {
            let m = rand_hermitian(&mut rng, n);
            let eig = herm_eig(&m).unwrap();
            let rec_err = (&eig.reconstruct() - &m).norm();
            assert!(rec_err <= 1e-10 * m.norm().max(1.0), "rec_err {rec_err}");
            let gram = eig.vectors.adjoint() * &eig.vectors;
            assert!((gram - CMatrix::identity(n, n)).norm() < 1e-10);
            for k in 1..n {
                assert!(eig.values[k] >= eig.values[k - 1]);
            }
        }
    }

    #[test]
    fn herm_eig_phase_gauge_is_deterministic() {
        let mut rng = Rng::new(11);
        let m = rand_hermitian(&mut rng, 5);
        let a = herm_eig(&m).unwrap();
        let b = herm_eig(&m.clone()).unwrap();
        assert_eq!(a.vectors.as_slice(), b.vectors.as_slice());
        // Largest component of every eigenvector is real non-negative.
        for k in 0..5 {
            let col = a.vectors.column(k);
            let vmax = col.iter().cloned().fold(C64::new(0.0, 0.0), |acc, v| {
                if v.norm_sqr() > acc.norm_sqr() {
                    v
                } else {
                    acc
                }
            });
            assert!(vmax.im.abs() < 1e-12 && vmax.re > 0.0);
        }
    }

    #[test]
    fn nearest_psd_clamps_diagonal() {
        let m = cm(2, 2, &[(2.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)]);
        let p = nearest_psd(&m).unwrap();
        let want = cm(2, 2, &[(2.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        assert!((p - want).norm() < 1e-12);
    }

    #[test]
    fn nearest_psd_two_by_two_projection() {
        let m = cm(2, 2, &[(1.0, 0.0), (2.0, 0.0), (2.0, 0.0), (1.0, 0.0)]);
        let p = nearest_psd(&m).unwrap();
        let want = cm(2, 2, &[(1.5, 0.0), (1.5, 0.0), (1.5, 0.0), (1.5, 0.0)]);
        assert!((p - want).norm() < 1e-12);
    }

    #[test]
    fn nearest_psd_fixes_psd_input_and_is_idempotent() {
        let mut rng = Rng::new(13);
        for _ in 0..20 {
            let m = rand_matrix(&mut rng, 4);
            let psd = &m * m.adjoint();
            let p = nearest_psd(&psd).unwrap();
            assert!((&p - &psd).norm() <= 1e-12 * psd.norm());

            let h = rand_hermitian(&mut rng, 4);
            let p1 = nearest_psd(&h).unwrap();
            let p2 = nearest_psd(&p1).unwrap();
            assert!((&p2 - &p1).norm() <= 1e-12 * p1.norm().max(1.0));
            assert!(min_herm_eigenvalue(&p1) >= -1e-12 * h.norm());
        }
    }

    #[test]
    fn partial_trace_product_state() {
        let mut rng = Rng::new(17);
        let a = rand_density(&mut rng, 3);
        let vac = {
            let mut v = CMatrix::zeros(4, 4);
            v[(0, 0)] = C64::new(1.0, 0.0);
            v
        };
        let composite = kron(&a, &vac);
        let red = partial_trace(&composite, &[3, 4], 0).unwrap();
        assert!((red - &a).norm() < 1e-13);
    }

    #[test]
    fn partial_trace_maximally_mixed() {
        let mixed = CMatrix::identity(4, 4).scale(0.25);
        for keep in [0usize, 1] {
            let red = partial_trace(&mixed, &[2, 2], keep).unwrap();
            assert!((red - CMatrix::identity(2, 2).scale(0.5)).norm() < 1e-14);
        }
    }

    #[test]
    fn partial_trace_bell_state() {
        // (|00⟩ + |11⟩)/√2 reduces to I/2 on either qubit.
        let mut psi = CVector::zeros(4);
        psi[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi[3] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho = &psi * psi.adjoint();
        for keep in [0usize, 1] {
            let red = partial_trace(&rho, &[2, 2], keep).unwrap();
            assert!((red - CMatrix::identity(2, 2).scale(0.5)).norm() < 1e-14);
        }
    }

    #[test]
    fn partial_trace_three_factors_and_linearity() {
        let mut rng = Rng::new(19);
        let a = rand_density(&mut rng, 2);
        let b = rand_density(&mut rng, 3);
        let c = rand_density(&mut rng, 2);
        let abc = kron(&kron(&a, &b), &c);
        let red = partial_trace(&abc, &[2, 3, 2], 1).unwrap();
        assert!((&red - &b).norm() < 1e-13);

        let x = rand_matrix(&mut rng, 12);
        let y = rand_matrix(&mut rng, 12);
        let alpha = C64::new(0.3, -0.7);
        let beta = C64::new(-1.1, 0.2);
        let lhs = partial_trace(&(&x * alpha + &y * beta), &[2, 3, 2], 1).unwrap();
        let rhs = partial_trace(&x, &[2, 3, 2], 1).unwrap() * alpha
            + partial_trace(&y, &[2, 3, 2], 1).unwrap() * beta;
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_preserves_trace_and_rejects_bad_dims() {
        let mut rng = Rng::new(23);
        let m = rand_matrix(&mut rng, 6);
        let red = partial_trace(&m, &[2, 3], 0).unwrap();
        let tr_in: C64 = m.trace();
        let tr_out: C64 = red.trace();
        assert!((tr_in - tr_out).norm() < 1e-13);

        assert!(matches!(
            partial_trace(&m, &[2, 2], 0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            partial_trace(&m, &[2, 3], 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frobenius_distance_basics() {
        let mut rng = Rng::new(29);
        let m = rand_matrix(&mut rng, 4);
        assert_abs_diff_eq!(frobenius_distance(&m, &m).unwrap(), 0.0);
        assert_abs_diff_eq!(
            frobenius_distance(&CMatrix::zeros(4, 4), &m).unwrap(),
            m.norm(),
            epsilon = 1e-15
        );
        let d1 = cm(2, 2, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let d2 = cm(2, 2, &[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert_abs_diff_eq!(
            frobenius_distance(&d1, &d2).unwrap(),
            2.0f64.sqrt(),
            epsilon = 1e-15
        );
        assert!(matches!(
            frobenius_distance(&d1, &CMatrix::zeros(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hermiticity_defect_values() {
        let m = cm(2, 2, &[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        assert_abs_diff_eq!(hermiticity_defect(&m), 2.0f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(
            relative_hermiticity_defect(&m),
            2.0f64.sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(relative_hermiticity_defect(&CMatrix::zeros(2, 2)), 0.0);
        let mut rng = Rng::new(31);
        let h = rand_hermitian(&mut rng, 5);
        assert!(relative_hermiticity_defect(&h) < 1e-15);
    }

    #[test]
    fn vectorize_roundtrip_and_kron_identity() {
        let mut rng = Rng::new(37);
        let rho = rand_matrix(&mut rng, 3);
        let v = vectorize(&rho);
        let back = unvectorize(&v, 3, 3).unwrap();
        assert_eq!(back.as_slice(), rho.as_slice());

        // vec(AρB) = (Bᵀ ⊗ A) vec(ρ) under column stacking.
        let a = rand_matrix(&mut rng, 3);
        let b = rand_matrix(&mut rng, 3);
        let lhs = vectorize(&(&a * &rho * &b));
        let rhs = kron(&b.transpose(), &a) * vectorize(&rho);
        assert!((lhs - rhs).norm() < 1e-12);

        assert!(matches!(
            unvectorize(&v, 2, 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn finiteness_detector() {
        let mut m = CMatrix::zeros(2, 2);
        assert!(is_finite(&m));
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(!is_finite(&m));
        m[(0, 1)] = C64::new(0.0, f64::INFINITY);
        assert!(!is_finite(&m));
    }
}
