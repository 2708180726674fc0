//! Numerically exact benchmark: propagate the system together with the
//! pseudomode network as one composite Lindblad problem.
//!
//! Each mode is a damped harmonic oscillator truncated at `n_max` quanta;
//! the system couples to every mode through the full (counter-rotating
//! included) interaction A_α g_αβ (a_β† + a_β). The composite state is
//! propagated with the same integrator as the reduced models and traced
//! down to the system at every output time, so the result is directly
//! comparable to any reduced-generator trajectory.
//!
//! Truncation is validated, not assumed: if the population of the highest
//! Fock layer ever exceeds a threshold the run is rejected and retried
//! with a deeper ladder.

use crate::bath::PseudomodeNetwork;
use crate::error::{Error, Result};
use crate::operator::{partial_trace, C64, CMatrix};
use crate::propagate::{
    exponential_trajectory_mapped, integrate_mapped, IntegrateOptions, StepperOptions, TimeGrid,
    Trajectory,
};
use crate::superop::{Csr, Jump, Superoperator};
use crate::system::TransitionTable;

/// Which driver advances the composite state.
#[derive(Clone, Copy, Debug)]
pub enum Backend {
    /// RK4 with Richardson step control; keeps the generator sparse, best
    /// for short horizons.
    RungeKutta(IntegrateOptions),
    /// Repeated dense exponential of generator × grid spacing; per-point
    /// cost is independent of how many oscillation periods an interval
    /// spans, which long weak-coupling horizons need.
    Exponential(StepperOptions),
}

impl Default for Backend {
    fn default() -> Backend {
        Backend::RungeKutta(IntegrateOptions::default())
    }
}

/// Truncation and sizing knobs for the composite solver.
#[derive(Clone, Debug)]
pub struct ExactOptions {
    /// Fock levels per mode run from 0 to `n_max` inclusive.
    pub n_max: usize,
    /// How many times `n_max` may be incremented after a truncation
    /// rejection before giving up.
    pub max_retries: usize,
    /// Highest-layer population above which the truncation is rejected.
    pub top_tol: f64,
    /// Largest allowed composite Hilbert-space dimension.
    pub dim_cap: usize,
    pub backend: Backend,
}

impl Default for ExactOptions {
    fn default() -> ExactOptions {
        ExactOptions {
            n_max: 3,
            max_retries: 2,
            top_tol: 1e-6,
            dim_cap: 4096,
            backend: Backend::default(),
        }
    }
}

/// A finished composite run: reduced-system trajectory plus the ladder
/// depth that passed the truncation check.
#[derive(Clone, Debug)]
pub struct ExactRun {
    pub trajectory: Trajectory,
    pub n_max_used: usize,
}

/// Index bookkeeping for the composite space
/// (system ⊗ mode_0 ⊗ … ⊗ mode_{N−1}, system most significant).
struct Layout {
    sys_dim: usize,
    n_modes: usize,
    /// Fock levels per mode.
    depth: usize,
    /// Stride of each mode in the flattened index.
    mode_stride: Vec<usize>,
    /// Stride of the system index (= depth^n_modes).
    sys_stride: usize,
    total: usize,
}

impl Layout {
    fn new(sys_dim: usize, n_modes: usize, depth: usize) -> Layout {
        let mut mode_stride = vec![0usize; n_modes];
        let mut stride = 1usize;
        for b in (0..n_modes).rev() {
            mode_stride[b] = stride;
            stride *= depth;
        }
        Layout {
            sys_dim,
            n_modes,
            depth,
            mode_stride,
            sys_stride: stride,
            total: sys_dim * stride,
        }
    }

    fn system_of(&self, x: usize) -> usize {
        x / self.sys_stride
    }

    fn level_of(&self, x: usize, mode: usize) -> usize {
        (x / self.mode_stride[mode]) % self.depth
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(1 + self.n_modes);
        d.push(self.sys_dim);
        d.extend(std::iter::repeat(self.depth).take(self.n_modes));
        d
    }
}

/// Assemble the composite Lindblad generator at ladder depth `n_max`.
pub fn build_exact(
    table: &TransitionTable,
    network: &PseudomodeNetwork,
    n_max: usize,
    dim_cap: usize,
) -> Result<Superoperator> {
    if table.channels() != network.channels() {
        return Err(Error::DimensionMismatch {
            what: "network channels vs system coupling operators",
            expected: table.channels(),
            got: network.channels(),
        });
    }
    if n_max == 0 {
        return Err(Error::invalid("n_max", "≥ 1", 0.0));
    }
    let sys_dim = table.dim();
    let n_modes = network.modes();
    let depth = n_max + 1;
    let total = sys_dim
        .checked_mul(depth.checked_pow(n_modes as u32).ok_or(Error::DimensionCap {
            dim: usize::MAX,
            cap: dim_cap,
        })?)
        .ok_or(Error::DimensionCap {
            dim: usize::MAX,
            cap: dim_cap,
        })?;
    if total > dim_cap {
        return Err(Error::DimensionCap {
            dim: total,
            cap: dim_cap,
        });
    }
    let layout = Layout::new(sys_dim, n_modes, depth);

    // Per-mode effective system coupling B_β = Σ_α g_αβ A_α (Hermitian).
    let mut mode_coupling = Vec::with_capacity(n_modes);
    for b in 0..n_modes {
        let mut m = CMatrix::zeros(sys_dim, sys_dim);
        for a in 0..table.channels() {
            let g = network.g()[(a, b)];
            if g != 0.0 {
                m += table.reconstruct_coupling(a).scale(g);
            }
        }
        mode_coupling.push(m);
    }

    // Composite Hamiltonian triplets.
    let mut h_trip: Vec<(usize, usize, C64)> = Vec::new();
    for x in 0..layout.total {
        let s = layout.system_of(x);
        // Diagonal: system energy + mode self-energies.
        let mut diag = table.eigen_energies[s];
        for b in 0..n_modes {
            diag += network.omega()[(b, b)] * layout.level_of(x, b) as f64;
        }
        h_trip.push((x, x, C64::new(diag, 0.0)));

        // Mode-mode hopping Ω_βγ a_β† a_γ (β ≠ γ).
        for beta in 0..n_modes {
            for gamma in 0..n_modes {
                if beta == gamma {
                    continue;
                }
                let w = network.omega()[(beta, gamma)];
                if w == 0.0 {
                    continue;
                }
                let n_g = layout.level_of(x, gamma);
                let n_b = layout.level_of(x, beta);
                if n_g >= 1 && n_b + 1 < depth {
                    let y = x - layout.mode_stride[gamma] + layout.mode_stride[beta];
                    let amp = w * (n_g as f64).sqrt() * ((n_b + 1) as f64).sqrt();
                    h_trip.push((y, x, C64::new(amp, 0.0)));
                }
            }
        }

        // System-mode coupling B_β ⊗ (a_β† + a_β).
        for b in 0..n_modes {
            let coupling = &mode_coupling[b];
            let n_b = layout.level_of(x, b);
            for s_to in 0..sys_dim {
                let amp = coupling[(s_to, s)];
                if amp == C64::new(0.0, 0.0) {
                    continue;
                }
                let base = x - s * layout.sys_stride + s_to * layout.sys_stride;
                if n_b + 1 < depth {
                    let y = base + layout.mode_stride[b];
                    h_trip.push((y, x, amp * ((n_b + 1) as f64).sqrt()));
                }
                if n_b >= 1 {
                    let y = base - layout.mode_stride[b];
                    h_trip.push((y, x, amp * (n_b as f64).sqrt()));
                }
            }
        }
    }

    // Left/right one-sided matrices: ∓iH − ½ Σ_β κ_β n̂_β.
    let minus_i = C64::new(0.0, -1.0);
    let plus_i = C64::new(0.0, 1.0);
    let mut left_trip: Vec<(usize, usize, C64)> = Vec::with_capacity(h_trip.len() + layout.total);
    let mut right_trip: Vec<(usize, usize, C64)> = Vec::with_capacity(h_trip.len() + layout.total);
    for &(r, c, v) in &h_trip {
        left_trip.push((r, c, minus_i * v));
        right_trip.push((r, c, plus_i * v));
    }
    for x in 0..layout.total {
        let mut damp = 0.0;
        for b in 0..n_modes {
            damp += network.kappa()[b] * layout.level_of(x, b) as f64;
        }
        if damp != 0.0 {
            let v = C64::new(-0.5 * damp, 0.0);
            left_trip.push((x, x, v));
            right_trip.push((x, x, v));
        }
    }
    let left = Csr::from_triplets(layout.total, layout.total, left_trip)?;
    let right = Csr::from_triplets(layout.total, layout.total, right_trip)?;

    // One jump per mode: κ_β a_β ρ a_β†.
    let mut jumps = Vec::with_capacity(n_modes);
    for b in 0..n_modes {
        let mut pre_trip = Vec::new();
        let mut post_trip = Vec::new();
        for x in 0..layout.total {
            let n_b = layout.level_of(x, b);
            if n_b >= 1 {
                let y = x - layout.mode_stride[b];
                let amp = C64::new((n_b as f64).sqrt(), 0.0);
                pre_trip.push((y, x, amp));
                post_trip.push((x, y, amp));
            }
        }
        jumps.push(Jump {
            weight: C64::new(network.kappa()[b], 0.0),
            pre: Csr::from_triplets(layout.total, layout.total, pre_trip)?,
            post: Csr::from_triplets(layout.total, layout.total, post_trip)?,
        });
    }

    Superoperator::from_sparse_parts(layout.total, Some(left), Some(right), jumps)
}

/// Propagate the composite problem and return the reduced system states.
/// The initial state is `rho0` (system, eigenbasis) with every mode in
/// vacuum. Retries with a deeper Fock ladder when the truncation check
/// fails, up to `opts.max_retries` times.
pub fn exact_trajectory(
    table: &TransitionTable,
    network: &PseudomodeNetwork,
    rho0: &CMatrix,
    grid: &TimeGrid,
    opts: &ExactOptions,
) -> Result<ExactRun> {
    let sys_dim = table.dim();
    if rho0.nrows() != sys_dim || rho0.ncols() != sys_dim {
        return Err(Error::DimensionMismatch {
            what: "initial state vs system",
            expected: sys_dim,
            got: rho0.nrows(),
        });
    }
    let mut last_err = None;
    for attempt in 0..=opts.max_retries {
        let n_max = opts.n_max + attempt;
        match run_once(table, network, rho0, grid, opts, n_max) {
            Ok(trajectory) => {
                return Ok(ExactRun {
                    trajectory,
                    n_max_used: n_max,
                })
            }
            Err(e @ Error::TruncationUnconverged { .. }) => last_err = Some(e),
            Err(other) => return Err(other),
        }
    }
    Err(last_err.expect("loop ran at least once"))
}

fn run_once(
    table: &TransitionTable,
    network: &PseudomodeNetwork,
    rho0: &CMatrix,
    grid: &TimeGrid,
    opts: &ExactOptions,
    n_max: usize,
) -> Result<Trajectory> {
    let gen = build_exact(table, network, n_max, opts.dim_cap)?;
    let layout = Layout::new(table.dim(), network.modes(), n_max + 1);
    let dims = layout.dims();

    // Indices with any mode in the top Fock layer; their total population
    // is the truncation monitor.
    let top: Vec<usize> = (0..layout.total)
        .filter(|&x| (0..layout.n_modes).any(|b| layout.level_of(x, b) == layout.depth - 1))
        .collect();

    // System state ⊗ all-modes vacuum.
    let mut full0 = CMatrix::zeros(layout.total, layout.total);
    for r in 0..layout.sys_dim {
        for c in 0..layout.sys_dim {
            full0[(r * layout.sys_stride, c * layout.sys_stride)] = rho0[(r, c)];
        }
    }

    let top_tol = opts.top_tol;
    let monitor = move |_: f64, full: &CMatrix| {
        let population: f64 = top.iter().map(|&x| full[(x, x)].re).sum();
        if population > top_tol {
            return Err(Error::TruncationUnconverged {
                population,
                tol: top_tol,
                n_max,
            });
        }
        partial_trace(full, &dims, 0)
    };
    match opts.backend {
        Backend::RungeKutta(io) => integrate_mapped(&gen, &full0, grid, &io, monitor),
        Backend::Exponential(so) => exponential_trajectory_mapped(&gen, &full0, grid, &so, monitor),
    }
}
