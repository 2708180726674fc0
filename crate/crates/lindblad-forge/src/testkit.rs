//! Deterministic random matrices for unit tests.

use crate::operator::{hermitian_part, C64, CMatrix};
use crate::rng::Rng;

pub fn rand_matrix(rng: &mut Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0))
    })
}

pub fn rand_hermitian(rng: &mut Rng, n: usize) -> CMatrix {
    hermitian_part(&rand_matrix(rng, n))
}

/// Random full-rank density matrix (Hermitian, PSD, unit trace).
pub fn rand_density(rng: &mut Rng, n: usize) -> CMatrix {
    let m = rand_matrix(rng, n);
    let p = &m * m.adjoint();
    let tr: C64 = p.trace();
    p.unscale(tr.re)
}
