//! Time propagation of density matrices under a fixed generator.
//!
//! Two drivers share the [`Trajectory`] output format:
//!
//! * [`integrate`] — classic RK4 with per-interval Richardson step control:
//!   each output interval is integrated twice, with m and 2m uniform
//!   substeps, and the step count doubles until the Richardson error
//!   estimate ‖y_m − y_2m‖_F / 15 meets the local tolerance. Step placement
//!   is a pure function of the accepted step counts, so runs are
//!   bit-reproducible.
//! * [`exponential_trajectory`] — one dense exponential of the generator
//!   times the grid spacing, applied repeatedly. Accuracy per point is at
//!   roundoff regardless of how many oscillation periods an interval
//!   spans, which is what makes horizons of 10⁵ inverse energy units with
//!   eV-scale coherences affordable; the cost is densifying the generator,
//!   so it suits the small dimensions master equations live at.
//!
//! A generator with runaway growth (possible for indefinite or
//! non-Hermitian constructions) defeats either driver; that is reported as
//! a [`Divergence`] flag on the truncated trajectory rather than an error,
//! so sweeps can record it and move on.

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::operator::{
    hermiticity_defect, min_herm_eigenvalue, unvectorize, vectorize, C64, CMatrix,
};
use crate::superop::Superoperator;

/// Uniform output grid: `n_steps + 1` points from `t_start` to `t_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<TimeGrid> {
        if !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::invalid("time grid bounds", "finite", t_end));
        }
        if !(t_end > t_start) {
            return Err(Error::invalid("t_end", "> t_start", t_end));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps", "≥ 1", 0.0));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            n_steps,
        })
    }

    /// Grid starting at t = 0.
    pub fn to_end(t_end: f64, n_steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(0.0, t_end, n_steps)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of output points (intervals + 1).
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// i-th output time; the endpoints are exactly `t_start` / `t_end`.
    pub fn time(&self, i: usize) -> f64 {
        if i == 0 {
            self.t_start
        } else if i == self.n_steps {
            self.t_end
        } else {
            self.t_start + (self.t_end - self.t_start) * (i as f64) / (self.n_steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn span(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Step-control knobs for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    /// Richardson error bound per output interval.
    pub local_tol: f64,
    /// Maximum step-count doublings per interval before the interval is
    /// declared divergent.
    pub max_refinement: u32,
}

impl Default for IntegrateOptions {
    fn default() -> IntegrateOptions {
        IntegrateOptions {
            local_tol: 1e-9,
            max_refinement: 20,
        }
    }
}

/// Health metrics recorded at every output point.
#[derive(Clone, Copy, Debug)]
pub struct PointDiagnostics {
    pub time: f64,
    pub trace: C64,
    /// Smallest eigenvalue of the Hermitian part of the state.
    pub min_eigenvalue: f64,
    /// ‖ρ − ρ†‖_F.
    pub hermiticity_defect: f64,
}

/// Why and where an integration gave up.
#[derive(Clone, Debug)]
pub struct Divergence {
    /// End of the interval that could not be completed.
    pub at_time: f64,
    pub reason: String,
}

/// Output of [`integrate`]: states at the output times, with per-point
/// diagnostics. On divergence the vectors are truncated to the points
/// actually reached and `divergence` says why.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    pub diagnostics: Vec<PointDiagnostics>,
    pub divergence: Option<Divergence>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> Option<&CMatrix> {
        self.states.last()
    }

    /// Time series of one matrix element across the stored states.
    pub fn element(&self, row: usize, col: usize) -> Vec<C64> {
        self.states.iter().map(|s| s[(row, col)]).collect()
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }
}

struct Rk4Buffers {
    k: [CMatrix; 4],
    stage: CMatrix,
    scratch: CMatrix,
}

impl Rk4Buffers {
    fn new(dim: usize) -> Rk4Buffers {
        let z = || CMatrix::zeros(dim, dim);
        Rk4Buffers {
            k: [z(), z(), z(), z()],
            stage: z(),
            scratch: z(),
        }
    }
}

/// y += a·x, elementwise.
fn saxpy(y: &mut CMatrix, a: C64, x: &CMatrix) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * *xi;
    }
}

/// Advance `state` in place by `steps` RK4 steps of size `h`.
fn rk4_advance(
    gen: &Superoperator,
    state: &mut CMatrix,
    h: f64,
    steps: usize,
    bufs: &mut Rk4Buffers,
) {
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let w_edge = C64::new(h / 6.0, 0.0);
    let w_mid = C64::new(h / 3.0, 0.0);
    for _ in 0..steps {
        let (k, stage, scratch) = (&mut bufs.k, &mut bufs.stage, &mut bufs.scratch);
        gen.apply_into(state, scratch, &mut k[0]);
        stage.copy_from(state);
        saxpy(stage, half, &k[0]);
        gen.apply_into(stage, scratch, &mut k[1]);
        stage.copy_from(state);
        saxpy(stage, half, &k[1]);
        gen.apply_into(stage, scratch, &mut k[2]);
        stage.copy_from(state);
        saxpy(stage, full, &k[2]);
        gen.apply_into(stage, scratch, &mut k[3]);
        saxpy(state, w_edge, &k[0]);
        saxpy(state, w_mid, &k[1]);
        saxpy(state, w_mid, &k[2]);
        saxpy(state, w_edge, &k[3]);
    }
}

fn finite(m: &CMatrix) -> bool {
    m.as_slice()
        .iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
}

fn diagnostics_for(time: f64, state: &CMatrix) -> PointDiagnostics {
    PointDiagnostics {
        time,
        trace: state.trace(),
        min_eigenvalue: min_herm_eigenvalue(state),
        hermiticity_defect: hermiticity_defect(state),
    }
}

/// Propagate `rho0` under `gen` over `grid`, transforming every stored
/// state through `map` first (the integrator itself always advances the
/// full-dimension state). `map` returning an error aborts the whole
/// integration with that error; use it for truncation monitors.
pub fn integrate_mapped<F>(
    gen: &Superoperator,
    rho0: &CMatrix,
    grid: &TimeGrid,
    opts: &IntegrateOptions,
    mut map: F,
) -> Result<Trajectory>
where
    F: FnMut(f64, &CMatrix) -> Result<CMatrix>,
{
    let dim = gen.dim();
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(Error::DimensionMismatch {
            what: "initial state vs generator",
            expected: dim,
            got: rho0.nrows(),
        });
    }
    if !finite(rho0) {
        return Err(Error::invalid("initial state", "finite entries", f64::NAN));
    }
    if !(opts.local_tol > 0.0) {
        return Err(Error::invalid("local_tol", "> 0", opts.local_tol));
    }

    let n_out = grid.len();
    let mut times = Vec::with_capacity(n_out);
    let mut states = Vec::with_capacity(n_out);
    let mut diagnostics = Vec::with_capacity(n_out);

    let mapped0 = map(grid.t_start(), rho0)?;
    diagnostics.push(diagnostics_for(grid.t_start(), &mapped0));
    times.push(grid.t_start());
    states.push(mapped0);

    let mut bufs = Rk4Buffers::new(dim);
    let mut current = rho0.clone();
    let mut y_coarse = CMatrix::zeros(dim, dim);
    let mut y_fine = CMatrix::zeros(dim, dim);
    let mut hint: usize = 1;
    let mut divergence = None;

    'intervals: for i in 0..grid.n_steps() {
        let t0 = grid.time(i);
        let t1 = grid.time(i + 1);
        let dt = t1 - t0;

        let mut m = hint.max(1);
        y_coarse.copy_from(&current);
        rk4_advance(gen, &mut y_coarse, dt / (m as f64), m, &mut bufs);

        let mut accepted = false;
        for refinement in 0..=opts.max_refinement {
            y_fine.copy_from(&current);
            rk4_advance(gen, &mut y_fine, dt / ((2 * m) as f64), 2 * m, &mut bufs);
            if !finite(&y_fine) || !finite(&y_coarse) {
                divergence = Some(Divergence {
                    at_time: t1,
                    reason: "state became non-finite".to_string(),
                });
                break 'intervals;
            }
            let err = (&y_fine - &y_coarse).norm() / 15.0;
            if err < opts.local_tol {
                accepted = true;
                break;
            }
            if refinement == opts.max_refinement {
                divergence = Some(Divergence {
                    at_time: t1,
                    reason: format!(
                        "local error {err:.3e} above tolerance {:.3e} after {} step doublings",
                        opts.local_tol, opts.max_refinement
                    ),
                });
                break 'intervals;
            }
            std::mem::swap(&mut y_coarse, &mut y_fine);
            m *= 2;
        }
        debug_assert!(accepted);

        current.copy_from(&y_fine);
        hint = (m / 2).max(1);

        let mapped = map(t1, &current)?;
        diagnostics.push(diagnostics_for(t1, &mapped));
        times.push(t1);
        states.push(mapped);
    }

    Ok(Trajectory {
        times,
        states,
        diagnostics,
        divergence,
    })
}

/// Propagate `rho0` under `gen` over `grid`, storing the states as-is.
pub fn integrate(
    gen: &Superoperator,
    rho0: &CMatrix,
    grid: &TimeGrid,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    integrate_mapped(gen, rho0, grid, opts, |_, state| Ok(state.clone()))
}

/// Knobs for [`exponential_trajectory`].
#[derive(Clone, Copy, Debug)]
pub struct StepperOptions {
    /// Frobenius-norm bound beyond which the state counts as divergent.
    /// The exponential map itself never fails, so runaway growth from an
    /// unstable generator is detected by watching the state norm.
    pub norm_cap: f64,
}

impl Default for StepperOptions {
    fn default() -> StepperOptions {
        StepperOptions { norm_cap: 1e6 }
    }
}

/// Propagate by repeated application of e^{L·dt} on the uniform grid,
/// transforming every stored state through `map` (same contract as
/// [`integrate_mapped`]). States are advanced in vectorized form; the one
/// dense exponential is reused for all intervals.
pub fn exponential_trajectory_mapped<F>(
    gen: &Superoperator,
    rho0: &CMatrix,
    grid: &TimeGrid,
    opts: &StepperOptions,
    mut map: F,
) -> Result<Trajectory>
where
    F: FnMut(f64, &CMatrix) -> Result<CMatrix>,
{
    let dim = gen.dim();
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(Error::DimensionMismatch {
            what: "initial state vs generator",
            expected: dim,
            got: rho0.nrows(),
        });
    }
    if !finite(rho0) {
        return Err(Error::invalid("initial state", "finite entries", f64::NAN));
    }
    if !(opts.norm_cap > 0.0) {
        return Err(Error::invalid("norm_cap", "> 0", opts.norm_cap));
    }

    let dt = grid.span() / (grid.n_steps() as f64);
    let step = expm(&gen.to_dense().scale(dt));

    let n_out = grid.len();
    let mut times = Vec::with_capacity(n_out);
    let mut states = Vec::with_capacity(n_out);
    let mut diagnostics = Vec::with_capacity(n_out);

    let mapped0 = map(grid.t_start(), rho0)?;
    diagnostics.push(diagnostics_for(grid.t_start(), &mapped0));
    times.push(grid.t_start());
    states.push(mapped0);

    let mut v = vectorize(rho0);
    let mut divergence = None;
    for i in 0..grid.n_steps() {
        let t1 = grid.time(i + 1);
        v = &step * &v;
        let ok = v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        // ‖vec ρ‖₂ = ‖ρ‖_F.
        if !ok || v.norm() > opts.norm_cap {
            divergence = Some(Divergence {
                at_time: t1,
                reason: if ok {
                    format!("state norm exceeded cap {:.1e}", opts.norm_cap)
                } else {
                    "state became non-finite".to_string()
                },
            });
            break;
        }
        let state = unvectorize(&v, dim, dim)?;
        let mapped = map(t1, &state)?;
        diagnostics.push(diagnostics_for(t1, &mapped));
        times.push(t1);
        states.push(mapped);
    }

    Ok(Trajectory {
        times,
        states,
        diagnostics,
        divergence,
    })
}

/// [`exponential_trajectory_mapped`] with the identity map.
pub fn exponential_trajectory(
    gen: &Superoperator,
    rho0: &CMatrix,
    grid: &TimeGrid,
    opts: &StepperOptions,
) -> Result<Trajectory> {
    exponential_trajectory_mapped(gen, rho0, grid, opts, |_, state| Ok(state.clone()))
}
