//! Deviation measures and diagnostics shared by the comparison and
//! ensemble flows.

use crate::error::{Error, Result};
use crate::operator::{hermiticity_defect, min_herm_eigenvalue, CMatrix};
use crate::propagate::Trajectory;

/// Per-time Frobenius distance between two trajectories, with its
/// trapezoidal time average.
#[derive(Clone, Debug)]
pub struct DeviationSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// (1/T) ∫ ‖ρ_a − ρ_b‖_F dt over the common grid, trapezoidal rule.
    pub time_average: f64,
}

/// Trapezoidal mean of `values` over `times` (assumed increasing).
pub fn time_average(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len(), "series lengths must match");
    if times.len() < 2 {
        return values.first().copied().unwrap_or(0.0);
    }
    let mut integral = 0.0;
    for k in 0..times.len() - 1 {
        integral += 0.5 * (values[k] + values[k + 1]) * (times[k + 1] - times[k]);
    }
    integral / (times[times.len() - 1] - times[0])
}

/// Pointwise Frobenius distance between two trajectories on one grid.
pub fn deviation(a: &Trajectory, b: &Trajectory) -> Result<DeviationSeries> {
    if a.times.len() != b.times.len() {
        return Err(Error::GridMismatch(format!(
            "trajectory lengths differ: {} vs {}",
            a.times.len(),
            b.times.len()
        )));
    }
    for (x, y) in a.times.iter().zip(&b.times) {
        if x != y {
            return Err(Error::GridMismatch(format!(
                "trajectory times differ: {x} vs {y}"
            )));
        }
    }
    let values: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x - y).norm())
        .collect();
    let time_average = time_average(&a.times, &values);
    Ok(DeviationSeries {
        times: a.times.clone(),
        values,
        time_average,
    })
}

/// Geometric mean and log₁₀ dispersion of strictly positive values.
///
/// Returns (exp of the mean natural log, population standard deviation of
/// the log₁₀ values).
pub fn geo_mean_log(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("geo_mean_log values"));
    }
    for &v in values {
        if !(v > 0.0) {
            return Err(Error::NonPositiveValue(v));
        }
    }
    let n = values.len() as f64;
    let mean_ln = values.iter().map(|v| v.ln()).sum::<f64>() / n;
    let mean_l10 = values.iter().map(|v| v.log10()).sum::<f64>() / n;
    let var_l10 = values
        .iter()
        .map(|v| {
            let d = v.log10() - mean_l10;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok((mean_ln.exp(), var_l10.sqrt()))
}

/// Health numbers for a state (or any square matrix, e.g. a shift matrix).
#[derive(Clone, Copy, Debug)]
pub struct Diagnostics {
    /// ‖X − X†‖_F.
    pub hermiticity_defect: f64,
    /// Smallest real part along the diagonal.
    pub min_population: f64,
    /// Smallest eigenvalue of the Hermitian part.
    pub min_eigenvalue: f64,
    /// |Tr X − 1|.
    pub trace_error: f64,
}

pub fn diagnose(m: &CMatrix) -> Diagnostics {
    assert_eq!(m.nrows(), m.ncols(), "diagnose needs a square matrix");
    let min_population = (0..m.nrows())
        .map(|k| m[(k, k)].re)
        .fold(f64::INFINITY, f64::min);
    let tr = m.trace();
    Diagnostics {
        hermiticity_defect: hermiticity_defect(m),
        min_population,
        min_eigenvalue: min_herm_eigenvalue(m),
        trace_error: ((tr.re - 1.0).powi(2) + tr.im.powi(2)).sqrt(),
    }
}

/// Remove 2π jumps: each step is mapped into (−π, π] and accumulated.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut prev_raw = 0.0;
    let mut prev_unwrapped = 0.0;
    for (k, &p) in phases.iter().enumerate() {
        if k == 0 {
            out.push(p);
            prev_raw = p;
            prev_unwrapped = p;
            continue;
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut d = (p - prev_raw) % two_pi;
        if d > std::f64::consts::PI {
            d -= two_pi;
        } else if d <= -std::f64::consts::PI {
            d += two_pi;
        }
        prev_unwrapped += d;
        out.push(prev_unwrapped);
        prev_raw = p;
    }
    out
}

/// Modulus and unwrapped argument of one diagonal element over time.
/// For a non-Hermitian evolution the "population" is genuinely complex;
/// both parts of the story are returned.
pub fn population_modulus_phase(traj: &Trajectory, level: usize) -> (Vec<f64>, Vec<f64>) {
    let series = traj.element(level, level);
    let modulus: Vec<f64> = series.iter().map(|z| z.norm()).collect();
    let raw: Vec<f64> = series.iter().map(|z| z.arg()).collect();
    (modulus, unwrap_phase(&raw))
}

/// Lifetime from a log-linear least-squares fit of a decaying population,
/// restricted to the window where it lies in [0.05, 0.5] of its initial
/// value. `None` when fewer than two window points exist or the fitted
/// slope is not a decay.
pub fn fit_lifetime(times: &[f64], populations: &[f64]) -> Option<f64> {
    assert_eq!(times.len(), populations.len(), "series lengths must match");
    let p0 = *populations.first()?;
    if !(p0 > 0.0) {
        return None;
    }
    let (lo, hi) = (0.05 * p0, 0.5 * p0);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(populations)
        .filter(|&(_, &p)| p > 0.0 && p >= lo && p <= hi)
        .map(|(&t, &p)| (t, p.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|&(t, _)| t).sum::<f64>() / n;
    let y_mean = pts.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, y) in &pts {
        num += (t - t_mean) * (y - y_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return None;
    }
    let slope = num / den;
    if slope >= 0.0 {
        return None;
    }
    Some(-1.0 / slope)
}
