//! Reproducible random ensembles: instance generation, execution of every
//! generator method against the composite benchmark, and deviation /
//! Kossakowski-spectrum statistics.
//!
//! Reproducibility contract: instance `k` of a run draws from
//! `Rng::substream(seed, k)` in a documented order (system energies, mode
//! energies, mode couplings, mode rates, coupling operators row-major upper
//! triangle, channel-mode couplings row-major, state amplitudes, state
//! phases), so the full report is bit-identical for a fixed seed and config
//! regardless of parallel scheduling. Aggregation is a sequential reduction
//! in instance order.
//!
//! Failure policy: anything that stops one cell (Fock truncation that will
//! not converge under the dimension cap, runaway growth of an indefinite
//! generator) is recorded as a flag on that cell and excluded from
//! aggregates; it never aborts the ensemble. Flagged + aggregated = number
//! of systems, for every cell.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{PseudomodeNetwork, RMatrix, SpectralModel};
use crate::builder::{build_generator, MethodTag};
use crate::error::{Error, Result};
use crate::exact::{exact_trajectory, Backend, ExactOptions};
use crate::metrics;
use crate::operator::{herm_eig, C64, CMatrix, CVector};
use crate::propagate::{exponential_trajectory, StepperOptions, TimeGrid, Trajectory};
use crate::rng::Rng;
use crate::system::{
    diagonalize_system, enumerate_transitions, SystemSpec, TransitionTable,
    DEFAULT_DEGENERACY_TOL, DEFAULT_ELEMENT_TOL,
};

/// `n` points spaced evenly in log₁₀ between `lo` and `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (llo, lhi) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                10f64.powf(llo + (lhi - llo) * (k as f64) / ((n - 1) as f64))
            }
        })
        .collect()
}

/// Everything a run needs. Serialized into the report verbatim; missing
/// keys in a parsed config take the defaults below, unknown keys are
/// rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_systems: usize,
    /// System levels L.
    pub levels: usize,
    /// Coupling channels M.
    pub channels: usize,
    /// Environment modes N.
    pub modes: usize,
    /// Multipliers applied to the spectral density, weakest first by
    /// convention (aggregates keep the given order).
    pub strength_factors: Vec<f64>,
    pub seed: u64,
    /// Output points per trajectory (including t = 0).
    pub n_time_points: usize,
    /// Fixed horizon override (eV⁻¹); None applies the per-instance rule:
    /// 10 / slowest nonzero first-channel golden-rule rate, clamped.
    pub t_fixed: Option<f64>,
    /// Clamp range for the per-instance horizon rule (eV⁻¹).
    pub t_clamp: (f64, f64),
    /// State-norm bound beyond which a propagation counts as divergent.
    pub norm_cap: f64,
    /// Composite Hilbert-space cap for the benchmark solver; escalation
    /// past it flags the cell rather than growing without bound.
    pub exact_dim_cap: usize,
    /// Collect Kossakowski spectra only: no benchmark run, no propagation,
    /// no deviations. Orders of magnitude faster when only the eigenvalue
    /// statistics are wanted.
    pub eigenvalues_only: bool,
}

impl Default for EnsembleConfig {
    fn default() -> EnsembleConfig {
        EnsembleConfig {
            n_systems: 200,
            levels: 3,
            channels: 2,
            modes: 2,
            strength_factors: log_spaced(1.0, 1e4, 7),
            seed: 1_234_321,
            n_time_points: 200,
            t_fixed: None,
            t_clamp: (1e2, 1e5),
            norm_cap: 1e6,
            exact_dim_cap: 64,
            eigenvalues_only: false,
        }
    }
}

/// One random draw: system, environment, and initial pure state (in the
/// level basis the energies were drawn in).
#[derive(Clone, Debug)]
pub struct Instance {
    pub system: SystemSpec,
    pub network: PseudomodeNetwork,
    pub state: CVector,
}

/// Draw one instance. The draw order is part of the reproducibility
/// contract (see module docs); changing it changes every seeded ensemble.
pub fn gen_instance(
    rng: &mut Rng,
    levels: usize,
    channels: usize,
    modes: usize,
) -> Result<Instance> {
    let mut h = CMatrix::zeros(levels, levels);
    for k in 0..levels {
        h[(k, k)] = C64::new(rng.uniform_in(0.1, 5.0), 0.0);
    }

    let mut omega = RMatrix::zeros(modes, modes);
    for b in 0..modes {
        omega[(b, b)] = rng.uniform_in(0.3, 2.0);
    }
    for b in 0..modes {
        for c in (b + 1)..modes {
            let v = rng.uniform_in(0.0, 1.0);
            omega[(b, c)] = v;
            omega[(c, b)] = v;
        }
    }
    let kappa: Vec<f64> = (0..modes).map(|_| rng.uniform_in(0.2, 0.5)).collect();

    let mut coupling_ops = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut a = CMatrix::zeros(levels, levels);
        for r in 0..levels {
            for c in (r + 1)..levels {
                let v = rng.uniform_in(0.0, 1.0);
                a[(r, c)] = C64::new(v, 0.0);
                a[(c, r)] = C64::new(v, 0.0);
            }
        }
        coupling_ops.push(a);
    }

    // Channel-mode couplings are drawn in meV and stored in eV.
    let mut g = RMatrix::zeros(channels, modes);
    for a in 0..channels {
        for b in 0..modes {
            g[(a, b)] = 1e-3 * rng.uniform_in(0.0, 1.0);
        }
    }

    // All amplitudes first, then all phases.
    let amplitudes: Vec<f64> = (0..levels).map(|_| rng.uniform()).collect();
    let phases: Vec<f64> = (0..levels)
        .map(|_| rng.uniform_in(0.0, std::f64::consts::TAU))
        .collect();
    let mut state = CVector::from_iterator(
        levels,
        amplitudes
            .iter()
            .zip(&phases)
            .map(|(&a, &p)| C64::from_polar(a, p)),
    );
    let norm = state.norm();
    if norm > 0.0 {
        state.unscale_mut(norm);
    }

    Ok(Instance {
        system: SystemSpec::new(h, coupling_ops)?,
        network: PseudomodeNetwork::new(omega, kappa, g)?,
        state,
    })
}

/// Per-instance horizon: 10 / (slowest nonzero golden-rule rate 2πJ₁₁(ω)
/// over the positive transition frequencies), clamped; the clamp maximum
/// when no rate is positive.
fn horizon_for(table: &TransitionTable, base: &SpectralModel, cfg: &EnsembleConfig) -> Result<f64> {
    if let Some(t) = cfg.t_fixed {
        return Ok(t);
    }
    let mut slowest = f64::INFINITY;
    for w in table.frequencies().into_iter().filter(|w| *w > 0.0) {
        let rate = 2.0 * std::f64::consts::PI * base.eval_j(w)?[(0, 0)];
        if rate > 0.0 {
            slowest = slowest.min(rate);
        }
    }
    if slowest == f64::INFINITY {
        return Ok(cfg.t_clamp.1);
    }
    Ok((10.0 / slowest).clamp(cfg.t_clamp.0, cfg.t_clamp.1))
}

/// Normalize a Hermitian spectrum by its largest eigenvalue, ascending.
/// The largest entry maps to exactly 1.
pub fn normalize_spectrum(values: &[f64]) -> Result<Vec<f64>> {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    if !(max > 0.0) {
        return Err(Error::DegenerateNormalization { max });
    }
    let mut out: Vec<f64> = values.iter().map(|v| v / max).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// One method at one strength factor of one instance.
#[derive(Clone, Debug, Serialize)]
pub struct MethodCell {
    pub method: String,
    /// Time-averaged Frobenius distance to the benchmark; None when the
    /// cell is excluded (own divergence, or no benchmark reference).
    pub deviation: Option<f64>,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    /// Why the deviation is missing, when it is.
    pub skip: Option<String>,
    /// Ladder depth the benchmark converged at (benchmark row only).
    pub n_max_used: Option<usize>,
    /// Kossakowski spectrum normalized by its largest positive eigenvalue,
    /// ascending; empty for the benchmark row and for degenerate spectra.
    pub kossakowski_eigenvalues: Vec<f64>,
    pub degenerate_normalization: bool,
    /// Smallest state eigenvalue along the propagated points.
    pub min_eigenvalue: Option<f64>,
    /// Largest |Tr ρ − 1| along the propagated points.
    pub max_trace_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorBlock {
    pub factor: f64,
    /// Cells in the fixed method order of [`MethodTag::ensemble_set`].
    pub methods: Vec<MethodCell>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceReport {
    pub index: usize,
    /// Horizon T (eV⁻¹) this instance was propagated to.
    pub horizon: f64,
    pub factors: Vec<FactorBlock>,
}

/// Ensemble aggregate for one (factor, method) cell.
#[derive(Clone, Debug, Serialize)]
pub struct AggregateCell {
    pub factor: f64,
    pub method: String,
    /// exp(mean ln Δ) over included systems; Some(0) when any included
    /// deviation is exactly zero (the benchmark against itself).
    pub geo_mean_deviation: Option<f64>,
    /// Population standard deviation of log₁₀ Δ (None when undefined).
    pub log10_std: Option<f64>,
    pub included: usize,
    pub excluded: usize,
    pub diverged: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleReport {
    pub config: EnsembleConfig,
    pub instances: Vec<InstanceReport>,
    pub aggregates: Vec<AggregateCell>,
}

fn trajectory_extremes(traj: &Trajectory) -> (Option<f64>, Option<f64>) {
    if traj.diagnostics.is_empty() {
        return (None, None);
    }
    let min_eig = traj
        .diagnostics
        .iter()
        .map(|d| d.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    let max_tr = traj
        .diagnostics
        .iter()
        .map(|d| (d.trace - C64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    (Some(min_eig), Some(max_tr))
}

fn skipped_cell(method: &MethodTag, reason: String) -> MethodCell {
    MethodCell {
        method: method.to_string(),
        deviation: None,
        diverged: false,
        divergence_time: None,
        skip: Some(reason),
        n_max_used: None,
        kossakowski_eigenvalues: Vec::new(),
        degenerate_normalization: false,
        min_eigenvalue: None,
        max_trace_error: None,
    }
}

fn run_instance(cfg: &EnsembleConfig, index: usize) -> Result<InstanceReport> {
    let mut rng = Rng::substream(cfg.seed, index as u64);
    let instance = gen_instance(&mut rng, cfg.levels, cfg.channels, cfg.modes)?;
    let eig = diagonalize_system(&instance.system, DEFAULT_DEGENERACY_TOL)?;
    let table = Arc::new(enumerate_transitions(
        &instance.system,
        &eig,
        DEFAULT_ELEMENT_TOL,
    ));
    let rho_user: CMatrix = &instance.state * instance.state.adjoint();
    let rho0 = eig.to_eigenbasis(&rho_user);

    let base = SpectralModel::network(instance.network.clone());
    let horizon = horizon_for(&table, &base, cfg)?;
    let grid = TimeGrid::to_end(horizon, cfg.n_time_points - 1)?;
    let stepper = StepperOptions {
        norm_cap: cfg.norm_cap,
    };

    let methods = MethodTag::ensemble_set();
    let mut n_hint = 1usize;
    let mut factors = Vec::with_capacity(cfg.strength_factors.len());

    for &factor in &cfg.strength_factors {
        let bath = SpectralModel::scaled(base.clone(), factor)?;

        // Benchmark reference first; everything at this factor compares to it.
        let exact_opts = ExactOptions {
            n_max: n_hint,
            max_retries: 3,
            dim_cap: cfg.exact_dim_cap,
            backend: Backend::Exponential(stepper),
            ..Default::default()
        };
        let exact_outcome = if cfg.eigenvalues_only {
            None
        } else {
            Some(exact_trajectory(
                &table,
                &bath.to_network()?,
                &rho0,
                &grid,
                &exact_opts,
            ))
        };

        let mut cells = Vec::with_capacity(methods.len());
        let mut reference: Option<&Trajectory> = None;
        match &exact_outcome {
            None => {
                cells.push(skipped_cell(&methods[0], "eigenvalues-only run".into()));
            }
            Some(Ok(run)) => {
                n_hint = run.n_max_used;
                let (min_eig, max_tr) = trajectory_extremes(&run.trajectory);
                if let Some(div) = &run.trajectory.divergence {
                    cells.push(MethodCell {
                        method: methods[0].to_string(),
                        deviation: None,
                        diverged: true,
                        divergence_time: Some(div.at_time),
                        skip: Some(format!("benchmark diverged: {}", div.reason)),
                        n_max_used: Some(run.n_max_used),
                        kossakowski_eigenvalues: Vec::new(),
                        degenerate_normalization: false,
                        min_eigenvalue: min_eig,
                        max_trace_error: max_tr,
                    });
                } else {
                    reference = Some(&run.trajectory);
                    cells.push(MethodCell {
                        method: methods[0].to_string(),
                        deviation: Some(0.0),
                        diverged: false,
                        divergence_time: None,
                        skip: None,
                        n_max_used: Some(run.n_max_used),
                        kossakowski_eigenvalues: Vec::new(),
                        degenerate_normalization: false,
                        min_eigenvalue: min_eig,
                        max_trace_error: max_tr,
                    });
                }
            }
            Some(Err(e)) => {
                cells.push(skipped_cell(&methods[0], format!("benchmark failed: {e}")));
            }
        }

        for tag in &methods[1..] {
            let me = match build_generator(tag, &table, &bath, None) {
                Ok(me) => me,
                Err(e) => {
                    cells.push(skipped_cell(tag, format!("build failed: {e}")));
                    continue;
                }
            };
            let eig_k = herm_eig(&me.kossakowski)?;
            let raw: Vec<f64> = eig_k.values.iter().copied().collect();
            let (spectrum, degenerate) = match normalize_spectrum(&raw) {
                Ok(s) => (s, false),
                Err(Error::DegenerateNormalization { .. }) => (Vec::new(), true),
                Err(other) => return Err(other),
            };

            if cfg.eigenvalues_only {
                cells.push(MethodCell {
                    method: tag.to_string(),
                    deviation: None,
                    diverged: false,
                    divergence_time: None,
                    skip: Some("eigenvalues-only run".to_string()),
                    n_max_used: None,
                    kossakowski_eigenvalues: spectrum,
                    degenerate_normalization: degenerate,
                    min_eigenvalue: None,
                    max_trace_error: None,
                });
                continue;
            }

            let traj = exponential_trajectory(&me.to_liouvillian(), &rho0, &grid, &stepper)?;
            let (min_eig, max_tr) = trajectory_extremes(&traj);
            let (deviation, skip) = if traj.divergence.is_some() {
                (None, None)
            } else if let Some(reference) = reference {
                (
                    Some(metrics::deviation(reference, &traj)?.time_average),
                    None,
                )
            } else {
                (None, Some("no benchmark reference".to_string()))
            };
            cells.push(MethodCell {
                method: tag.to_string(),
                deviation,
                diverged: traj.divergence.is_some(),
                divergence_time: traj.divergence.as_ref().map(|d| d.at_time),
                skip,
                n_max_used: None,
                kossakowski_eigenvalues: spectrum,
                degenerate_normalization: degenerate,
                min_eigenvalue: min_eig,
                max_trace_error: max_tr,
            });
        }

        factors.push(FactorBlock {
            factor,
            methods: cells,
        });
    }

    Ok(InstanceReport {
        index,
        horizon,
        factors,
    })
}

fn validate(cfg: &EnsembleConfig) -> Result<()> {
    if cfg.n_systems == 0 {
        return Err(Error::Config("n_systems must be ≥ 1".into()));
    }
    if cfg.levels < 2 {
        return Err(Error::Config("levels must be ≥ 2".into()));
    }
    if cfg.channels == 0 || cfg.modes == 0 {
        return Err(Error::Config("channels and modes must be ≥ 1".into()));
    }
    if cfg.strength_factors.is_empty() {
        return Err(Error::Config("strength_factors must be non-empty".into()));
    }
    for &f in &cfg.strength_factors {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::invalid("strength factor", "positive and finite", f));
        }
    }
    if cfg.n_time_points < 2 {
        return Err(Error::Config("n_time_points must be ≥ 2".into()));
    }
    let (lo, hi) = cfg.t_clamp;
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::Config("t_clamp must satisfy 0 < lo ≤ hi < ∞".into()));
    }
    if let Some(t) = cfg.t_fixed {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid("t_fixed", "positive and finite", t));
        }
    }
    if !(cfg.norm_cap > 0.0) {
        return Err(Error::invalid("norm_cap", "> 0", cfg.norm_cap));
    }
    Ok(())
}

fn aggregate(cfg: &EnsembleConfig, instances: &[InstanceReport]) -> Result<Vec<AggregateCell>> {
    let methods = MethodTag::ensemble_set();
    let mut out = Vec::with_capacity(cfg.strength_factors.len() * methods.len());
    for (fi, &factor) in cfg.strength_factors.iter().enumerate() {
        for (mi, tag) in methods.iter().enumerate() {
            let mut deviations = Vec::with_capacity(instances.len());
            let mut diverged = 0usize;
            for inst in instances {
                let cell = &inst.factors[fi].methods[mi];
                if cell.diverged {
                    diverged += 1;
                }
                if let Some(d) = cell.deviation {
                    deviations.push(d);
                }
            }
            let included = deviations.len();
            let excluded = cfg.n_systems - included;
            let (geo, spread) = if deviations.is_empty() {
                (None, None)
            } else if deviations.iter().any(|d| *d == 0.0) {
                // Exactly-zero deviations (benchmark vs itself) have no
                // log-domain mean; the limit is zero.
                (Some(0.0), None)
            } else {
                let (g, s) = metrics::geo_mean_log(&deviations)?;
                (Some(g), Some(s))
            };
            out.push(AggregateCell {
                factor,
                method: tag.to_string(),
                geo_mean_deviation: geo,
                log10_std: spread,
                included,
                excluded,
                diverged,
            });
        }
    }
    Ok(out)
}

/// Run the full ensemble. Instances execute in parallel; the report is a
/// pure function of the config.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleReport> {
    validate(cfg)?;
    let instances: Result<Vec<InstanceReport>> = (0..cfg.n_systems)
        .into_par_iter()
        .map(|i| run_instance(cfg, i))
        .collect();
    let instances = instances?;
    let aggregates = aggregate(cfg, &instances)?;
    Ok(EnsembleReport {
        config: cfg.clone(),
        instances,
        aggregates,
    })
}

/// |v| below this counts as zero in the signed-log binning.
pub const HIST_FLOOR_LOG10: f64 = -8.0;
/// log₁₀ bin width of the spectrum histograms.
pub const HIST_BIN_WIDTH: f64 = 0.25;

/// One non-empty histogram bin.
#[derive(Clone, Debug, Serialize)]
pub struct HistogramRow {
    pub method: String,
    /// Rank in the ascending normalized spectrum (0 = most negative).
    pub rank: usize,
    /// −1 → negative half-axis, 0 → |v| < 10^floor, +1 → positive half-axis.
    pub sign: i8,
    /// Lower edge of the log₁₀|v| bin (floor value for the near-zero bucket).
    pub bin_lo: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenvalueStats {
    pub bin_width: f64,
    pub floor_log10: f64,
    /// Non-empty bins ordered by (method, rank, sign, bin).
    pub rows: Vec<HistogramRow>,
    /// Cells whose spectrum had no positive eigenvalue to normalize by.
    pub degenerate: usize,
    /// Cells whose spectra were pooled.
    pub pooled_cells: usize,
}

/// Pool the normalized Kossakowski spectra of a report into signed-log
/// histograms, one per (method, rank).
pub fn eigenvalue_stats(report: &EnsembleReport) -> EigenvalueStats {
    let methods = MethodTag::ensemble_set();
    // Key: (method position, rank, sign, bin index) → count.
    let mut bins: std::collections::BTreeMap<(usize, usize, i8, i64), usize> =
        std::collections::BTreeMap::new();
    let mut degenerate = 0usize;
    let mut pooled = 0usize;

    for inst in &report.instances {
        for block in &inst.factors {
            for (mi, cell) in block.methods.iter().enumerate() {
                if cell.degenerate_normalization {
                    degenerate += 1;
                    continue;
                }
                if cell.kossakowski_eigenvalues.is_empty() {
                    continue;
                }
                pooled += 1;
                for (rank, &v) in cell.kossakowski_eigenvalues.iter().enumerate() {
                    let (sign, idx) = if v.abs() < 10f64.powf(HIST_FLOOR_LOG10) {
                        (0i8, 0i64)
                    } else {
                        let l = v.abs().log10();
                        (
                            if v < 0.0 { -1 } else { 1 },
                            ((l - HIST_FLOOR_LOG10) / HIST_BIN_WIDTH).floor() as i64,
                        )
                    };
                    *bins.entry((mi, rank, sign, idx)).or_insert(0) += 1;
                }
            }
        }
    }

    let rows = bins
        .into_iter()
        .map(|((mi, rank, sign, idx), count)| HistogramRow {
            method: methods[mi].to_string(),
            rank,
            sign,
            bin_lo: if sign == 0 {
                HIST_FLOOR_LOG10
            } else {
                HIST_FLOOR_LOG10 + HIST_BIN_WIDTH * (idx as f64)
            },
            count,
        })
        .collect();

    EigenvalueStats {
        bin_width: HIST_BIN_WIDTH,
        floor_log10: HIST_FLOOR_LOG10,
        rows,
        degenerate,
        pooled_cells: pooled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> EnsembleConfig {
        // Two-level system, single channel and mode: the benchmark stays
        // at composite dimension ≤ 10 so the whole flow runs in
        // milliseconds while exercising every code path.
        EnsembleConfig {
            n_systems: 3,
            levels: 2,
            channels: 1,
            modes: 1,
            strength_factors: vec![5.0, 50.0],
            seed: 1_234_321,
            n_time_points: 40,
            t_fixed: Some(200.0),
            ..Default::default()
        }
    }

    #[test]
    fn instances_are_identical_for_identical_streams() {
        let a = gen_instance(&mut Rng::substream(1_234_321, 7), 3, 2, 2).unwrap();
        let b = gen_instance(&mut Rng::substream(1_234_321, 7), 3, 2, 2).unwrap();
        assert_eq!(
            a.system.hamiltonian().as_slice(),
            b.system.hamiltonian().as_slice()
        );
        for (x, y) in a.system.coupling_ops().iter().zip(b.system.coupling_ops()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
        assert_eq!(a.network.omega().as_slice(), b.network.omega().as_slice());
        assert_eq!(a.network.kappa(), b.network.kappa());
        assert_eq!(a.network.g().as_slice(), b.network.g().as_slice());
        assert_eq!(a.state.as_slice(), b.state.as_slice());
        // A different substream draws a different instance.
        let c = gen_instance(&mut Rng::substream(1_234_321, 8), 3, 2, 2).unwrap();
        assert_ne!(
            a.system.hamiltonian().as_slice(),
            c.system.hamiltonian().as_slice()
        );
    }

    #[test]
    fn sampled_parameters_stay_in_their_intervals() {
        for k in 0..50 {
            let inst = gen_instance(&mut Rng::substream(9, k), 3, 2, 2).unwrap();
            let h = inst.system.hamiltonian();
            for i in 0..3 {
                let e = h[(i, i)].re;
                assert!((0.1..5.0).contains(&e), "energy {e}");
                for j in 0..3 {
                    if i != j {
                        assert_eq!(h[(i, j)], C64::new(0.0, 0.0));
                    }
                }
            }
            let om = inst.network.omega();
            for b in 0..2 {
                assert!((0.3..2.0).contains(&om[(b, b)]));
            }
            assert!((0.0..1.0).contains(&om[(0, 1)]));
            assert_eq!(om[(0, 1)], om[(1, 0)]);
            for &kap in inst.network.kappa() {
                assert!((0.2..0.5).contains(&kap));
            }
            for a in inst.system.coupling_ops() {
                for i in 0..3 {
                    assert_eq!(a[(i, i)], C64::new(0.0, 0.0));
                    for j in 0..3 {
                        assert_eq!(a[(i, j)], a[(j, i)].conj());
                        assert!((0.0..1.0).contains(&a[(i, j)].re) || i == j);
                        assert_eq!(a[(i, j)].im, 0.0);
                    }
                }
            }
            let g = inst.network.g();
            for a in 0..2 {
                for b in 0..2 {
                    assert!((0.0..1e-3).contains(&g[(a, b)]), "g = {}", g[(a, b)]);
                }
            }
            assert!((inst.state.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_spectra_are_positive_semidefinite() {
        use crate::operator::min_herm_eigenvalue;
        let mut probe = Rng::new(77);
        for k in 0..20 {
            let inst = gen_instance(&mut Rng::substream(31, k), 3, 2, 2).unwrap();
            let model = SpectralModel::network(inst.network);
            for _ in 0..10 {
                let w = probe.uniform_in(-6.0, 6.0);
                let j = model.eval_j(w).unwrap();
                let jc = CMatrix::from_fn(2, 2, |r, c| C64::new(j[(r, c)], 0.0));
                let min = min_herm_eigenvalue(&jc);
                assert!(min > -1e-12, "J(ω = {w}) has eigenvalue {min}");
            }
        }
    }

    #[test]
    fn horizon_rule_clamps_and_fixed_override_wins() {
        let cfg = EnsembleConfig {
            t_fixed: None,
            t_clamp: (50.0, 60.0),
            ..Default::default()
        };
        let inst = gen_instance(&mut Rng::substream(cfg.seed, 0), 3, 2, 2).unwrap();
        let eig = diagonalize_system(&inst.system, DEFAULT_DEGENERACY_TOL).unwrap();
        let table = enumerate_transitions(&inst.system, &eig, DEFAULT_ELEMENT_TOL);
        let base = SpectralModel::network(inst.network.clone());
        let t = horizon_for(&table, &base, &cfg).unwrap();
        assert!((50.0..=60.0).contains(&t));
        // meV couplings → golden-rule rates around 1e-6 eV → the raw rule
        // value is far above this clamp, so it must sit at the maximum.
        assert_eq!(t, 60.0);
        let fixed = EnsembleConfig {
            t_fixed: Some(123.0),
            ..cfg
        };
        assert_eq!(horizon_for(&table, &base, &fixed).unwrap(), 123.0);
    }

    #[test]
    fn normalize_spectrum_contract() {
        let got = normalize_spectrum(&[-1.0, 0.0, 4.0]).unwrap();
        assert_eq!(got, vec![-0.25, 0.0, 1.0]);
        assert!(matches!(
            normalize_spectrum(&[-2.0, -1.0, 0.0]),
            Err(Error::DegenerateNormalization { .. })
        ));
    }

    #[test]
    fn tiny_ensemble_report_shape_and_accounting() {
        let cfg = tiny_config();
        let report = run_ensemble(&cfg).unwrap();
        assert_eq!(report.instances.len(), 3);
        let methods = MethodTag::ensemble_set();
        for inst in &report.instances {
            assert_eq!(inst.horizon, 200.0);
            assert_eq!(inst.factors.len(), 2);
            for block in &inst.factors {
                assert_eq!(block.methods.len(), methods.len());
                for (cell, tag) in block.methods.iter().zip(&methods) {
                    assert_eq!(cell.method, tag.to_string());
                }
                // Benchmark row: zero deviation, a ladder depth, no spectrum.
                let exact = &block.methods[0];
                assert_eq!(exact.deviation, Some(0.0));
                assert!(exact.n_max_used.is_some());
                assert!(exact.kossakowski_eigenvalues.is_empty());
                // Generator rows: deviation present and positive, spectrum
                // normalized with top entry exactly 1, ascending.
                for cell in &block.methods[1..] {
                    let d = cell.deviation.expect("no divergence expected here");
                    assert!(d > 0.0 && d < 10.0, "Δ = {d}");
                    let s = &cell.kossakowski_eigenvalues;
                    assert!(!s.is_empty());
                    assert_eq!(*s.last().unwrap(), 1.0);
                    assert!(s.windows(2).all(|w| w[0] <= w[1]));
                    assert!(!cell.degenerate_normalization);
                    // Repaired methods must stay physical along the way.
                    if cell.method.ends_with('+') {
                        assert!(cell.min_eigenvalue.unwrap() > -1e-8);
                        assert!(cell.max_trace_error.unwrap() < 1e-8);
                    }
                }
            }
        }
        // Exclusion accounting on every aggregate cell.
        assert_eq!(report.aggregates.len(), 2 * methods.len());
        for agg in &report.aggregates {
            assert_eq!(agg.included + agg.excluded, cfg.n_systems);
            if agg.method == "Exact" {
                assert_eq!(agg.geo_mean_deviation, Some(0.0));
            } else {
                assert!(agg.geo_mean_deviation.unwrap() > 0.0);
                assert!(agg.log10_std.is_some());
            }
        }
    }

    #[test]
    fn report_is_byte_identical_across_runs() {
        let cfg = tiny_config();
        let a = serde_json::to_string(&run_ensemble(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_ensemble(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn indefinite_generators_diverge_and_are_excluded() {
        // Three levels, so the pair-rate matrix mixes enough transitions
        // for the unrepaired constructions to acquire growing modes at an
        // extreme strength factor; repaired ones stay put. Two-level
        // systems only go transiently negative, they never blow up. The
        // benchmark is capped out deliberately (the flow must keep going
        // without a reference).
        let cfg = EnsembleConfig {
            n_systems: 2,
            levels: 3,
            channels: 2,
            modes: 2,
            strength_factors: vec![1e2, 1e8],
            t_fixed: Some(2e4),
            n_time_points: 30,
            exact_dim_cap: 16,
            ..tiny_config()
        };
        let report = run_ensemble(&cfg).unwrap();
        let mut divergent_counts = Vec::new();
        for (fi, _) in cfg.strength_factors.iter().enumerate() {
            let mut count = 0;
            for inst in &report.instances {
                for cell in &inst.factors[fi].methods {
                    if cell.diverged {
                        assert!(cell.deviation.is_none(), "{}", cell.method);
                        assert!(cell.divergence_time.is_some());
                        assert!(!cell.method.ends_with('+'), "{}", cell.method);
                        count += 1;
                    }
                }
            }
            divergent_counts.push(count);
        }
        // Monotone in the factor, and the strong factor genuinely diverges.
        assert!(divergent_counts[1] >= divergent_counts[0]);
        assert!(divergent_counts[1] > 0, "expected divergences at 1e8");
        for agg in &report.aggregates {
            assert_eq!(agg.included + agg.excluded, cfg.n_systems);
            assert!(agg.diverged <= agg.excluded, "diverged cells are excluded");
        }
    }

    #[test]
    fn eigenvalue_stats_bins_and_excludes() {
        let report = run_ensemble(&tiny_config()).unwrap();
        let stats = eigenvalue_stats(&report);
        assert_eq!(stats.degenerate, 0);
        // 3 instances × 2 factors × 6 generator methods.
        assert_eq!(stats.pooled_cells, 36);
        let methods = MethodTag::ensemble_set();
        let top_rank = report.instances[0].factors[0].methods[1]
            .kossakowski_eigenvalues
            .len()
            - 1;
        for tag in &methods[1..] {
            let rows: Vec<&HistogramRow> = stats
                .rows
                .iter()
                .filter(|r| r.method == tag.to_string() && r.rank == top_rank)
                .collect();
            // The top normalized eigenvalue is exactly 1 in every cell:
            // a single positive bin with lower edge log₁₀ 1 = 0.
            assert_eq!(rows.len(), 1, "{tag}");
            assert_eq!(rows[0].sign, 1);
            assert_eq!(rows[0].bin_lo, 0.0);
            assert_eq!(rows[0].count, 6);
            // Repaired spectra have no negative mass anywhere.
            if tag.to_string().ends_with('+') {
                assert!(stats
                    .rows
                    .iter()
                    .all(|r| !(r.method == tag.to_string() && r.sign == -1)));
            }
        }
    }

    #[test]
    fn eigenvalues_only_skips_all_propagation() {
        let cfg = EnsembleConfig {
            n_systems: 4,
            levels: 3,
            channels: 2,
            modes: 2,
            strength_factors: vec![1.0],
            eigenvalues_only: true,
            ..Default::default()
        };
        let report = run_ensemble(&cfg).unwrap();
        for inst in &report.instances {
            for cell in &inst.factors[0].methods {
                assert!(cell.deviation.is_none());
                assert!(!cell.diverged);
                assert_eq!(cell.skip.as_deref(), Some("eigenvalues-only run"));
                if cell.method != "Exact" {
                    assert_eq!(*cell.kossakowski_eigenvalues.last().unwrap(), 1.0);
                }
            }
            // Typical spectral signatures at baseline strength: the raw
            // second-order form is strongly indefinite, the geometric-decay
            // construction only slightly.
            let block = &inst.factors[0].methods;
            let most_negative =
                |cell: &MethodCell| cell.kossakowski_eigenvalues.first().copied().unwrap();
            assert!(most_negative(&block[1]) < -1e-3, "BRE {}", most_negative(&block[1]));
            assert!(most_negative(&block[5]) > -1e-1, "aLgG {}", most_negative(&block[5]));
            // Repaired spectra are clamped at zero.
            assert!(most_negative(&block[2]) >= -1e-12);
        }
        for agg in &report.aggregates {
            assert_eq!(agg.included, 0);
            assert_eq!(agg.excluded, cfg.n_systems);
        }
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let bad = EnsembleConfig {
            n_systems: 0,
            ..Default::default()
        };
        assert!(run_ensemble(&bad).is_err());
        let bad = EnsembleConfig {
            strength_factors: vec![1.0, -2.0],
            ..tiny_config()
        };
        assert!(run_ensemble(&bad).is_err());
        let bad = EnsembleConfig {
            n_time_points: 1,
            ..tiny_config()
        };
        assert!(run_ensemble(&bad).is_err());
    }

    #[test]
    fn log_spacing_hits_endpoints() {
        let f = log_spaced(1.0, 1e4, 7);
        assert_eq!(f.len(), 7);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[6], 1e4);
        for w in f.windows(2) {
            assert!(w[1] > w[0]);
            let ratio = w[1] / w[0];
            assert!((ratio - f[1] / f[0]).abs() < 1e-9);
        }
    }
}
