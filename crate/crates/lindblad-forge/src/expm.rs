//! Dense matrix exponential via scaling and squaring.
//!
//! The Taylor polynomial of degree 16 is evaluated in Paterson–Stockmeyer
//! form after scaling the argument to unit 1-norm, then the result is
//! repeatedly squared. Everything is a pure function of the input bits, so
//! propagators built from it are reproducible run to run.
//!
//! Complex products go through [`gemm`], which splits the factors into
//! real/imaginary planes and runs three real matrix products instead of one
//! complex one. The real products hit the SIMD-blocked kernel, which is
//! over an order of magnitude faster than the generic complex path at the
//! dimensions the vectorized generators reach.

use crate::operator::{C64, CMatrix};
use nalgebra::DMatrix;

type RMatrix = DMatrix<f64>;

/// Below this size the plane-splitting overhead outweighs the kernel win.
const PLANE_SPLIT_MIN: usize = 64;

/// Scaling target for the 1-norm; degree-16 Taylor truncation at this
/// radius is below double roundoff.
const TAYLOR_THETA: f64 = 1.0;

const MAX_SQUARINGS: u32 = 60;

fn planes(a: &CMatrix) -> (RMatrix, RMatrix) {
    let mut re = RMatrix::zeros(a.nrows(), a.ncols());
    let mut im = RMatrix::zeros(a.nrows(), a.ncols());
    for ((r, i), z) in re
        .as_mut_slice()
        .iter_mut()
        .zip(im.as_mut_slice())
        .zip(a.as_slice())
    {
        *r = z.re;
        *i = z.im;
    }
    (re, im)
}

fn join(re: &RMatrix, im: &RMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(re.nrows(), re.ncols());
    for (z, (r, i)) in out
        .as_mut_slice()
        .iter_mut()
        .zip(re.as_slice().iter().zip(im.as_slice()))
    {
        *z = C64::new(*r, *i);
    }
    out
}

/// Matrix product through three real products (Karatsuba-style):
/// (Ar + iAi)(Br + iBi) = ArBr − AiBi + i[(Ar+Ai)(Br+Bi) − ArBr − AiBi].
pub fn gemm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions must agree");
    if a.nrows().min(b.ncols()).min(a.ncols()) < PLANE_SPLIT_MIN {
        return a * b;
    }
    let (ar, ai) = planes(a);
    let (br, bi) = planes(b);
    let t1 = &ar * &br;
    let t2 = &ai * &bi;
    let t3 = (ar + ai) * (br + bi);
    join(&(&t1 - &t2), &(t3 - t1 - t2))
}

/// Max column sum of moduli.
fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Degree-16 Taylor sum in Paterson–Stockmeyer form: 6 products total.
fn taylor16(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let id = CMatrix::identity(n, n);
    let a2 = gemm(a, a);
    let a3 = gemm(&a2, a);
    let a4 = gemm(&a3, a);

    let mut inv_fact = [0.0f64; 17];
    inv_fact[0] = 1.0;
    for k in 1..17 {
        inv_fact[k] = inv_fact[k - 1] / (k as f64);
    }
    let chunk = |c: &[f64]| -> CMatrix {
        id.scale(c[0]) + a.scale(c[1]) + a2.scale(c[2]) + a3.scale(c[3])
    };

    let b0 = chunk(&inv_fact[0..4]);
    let b1 = chunk(&inv_fact[4..8]);
    let b2 = chunk(&inv_fact[8..12]);
    // Fold the degree-16 tail into the last chunk: B3 + A⁴/16!.
    let b3 = chunk(&inv_fact[12..16]) + a4.scale(inv_fact[16]);

    b0 + gemm(&a4, &(b1 + gemm(&a4, &(b2 + gemm(&a4, &b3)))))
}

/// e^A for a square complex matrix.
///
/// Overflow during squaring (possible when A has eigenvalues with large
/// positive real part) yields non-finite entries rather than an error;
/// callers that propagate states check finiteness per step.
pub fn expm(a: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), a.ncols(), "expm needs a square matrix");
    let norm = one_norm(a);
    let s = if !norm.is_finite() {
        MAX_SQUARINGS
    } else if norm > TAYLOR_THETA {
        (((norm / TAYLOR_THETA).log2()).ceil() as u32).min(MAX_SQUARINGS)
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(s as i32));
    let mut t = taylor16(&scaled);
    for _ in 0..s {
        t = gemm(&t, &t);
    }
    t
}
