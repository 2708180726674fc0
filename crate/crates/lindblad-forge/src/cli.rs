//! Command implementations behind the binary. Each command takes a parsed
//! config plus an output directory and returns every file it wrote; the
//! binary maps that to the exit code (0 iff all requested outputs landed).
//!
//! CSV conventions: UTF-8, comma-separated, '.' decimal point, floats in
//! scientific notation with 17 significant digits, one header row, empty
//! cell for "not available". Parallel work (the ensemble) is reduced first
//! and written by a single writer.

use std::path::{Path, PathBuf};

use crate::bath::SpectralModel;
use crate::builder::{build_generator, MethodTag};
use crate::config::{
    master_equation_export, parse_methods, resolve_system, BuildConfig, Observable,
    ResolvedScenario, ScenarioCase, ScenarioConfig, SpectraConfig, SystemIn,
};
use crate::ensemble::{eigenvalue_stats, run_ensemble, EnsembleConfig};
use crate::error::{Error, Result};
use crate::exact::{exact_trajectory, Backend};
use crate::metrics::{diagnose, fit_lifetime, unwrap_phase};
use crate::operator::C64;
use crate::propagate::{exponential_trajectory, integrate, Trajectory};
use crate::system::{
    diagonalize_system, enumerate_transitions, DEFAULT_DEGENERACY_TOL, DEFAULT_ELEMENT_TOL,
};

/// 17 significant digits: enough to round-trip any f64.
fn c(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(c).unwrap_or_default()
}

/// Method tag as a file-name stem ('+' is not universally path-safe).
fn method_stem(tag: &MethodTag) -> String {
    tag.to_string().replace('+', "_plus")
}

/// `<stem>[_<label>][_<method>].csv`
fn csv_name(stem: &str, label: Option<&str>, method: Option<&MethodTag>) -> String {
    let mut name = stem.to_string();
    if let Some(l) = label {
        name.push('_');
        name.push_str(l);
    }
    if let Some(m) = method {
        name.push('_');
        name.push_str(&method_stem(m));
    }
    name.push_str(".csv");
    name
}

/// Tiny CSV assembler; rows must match the header width.
struct Csv {
    text: String,
    cols: usize,
}

impl Csv {
    fn new(header: &[&str]) -> Csv {
        Csv {
            text: header.join(",") + "\n",
            cols: header.len(),
        }
    }

    fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.cols, "CSV row width");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

fn write_out(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    written.push(path);
    Ok(())
}

/// Run one method of one case. The benchmark converts the bath to its mode
/// network (exact for a Lorentzian line); generator methods integrate with
/// the configured backend.
fn propagate_method(
    tag: &MethodTag,
    case: &ScenarioCase,
    r: &ResolvedScenario,
) -> Result<Trajectory> {
    match tag {
        MethodTag::Exact => {
            let network = case.bath.to_network()?;
            let run = exact_trajectory(&case.table, &network, &case.rho0, &r.grid, &r.exact)?;
            Ok(run.trajectory)
        }
        MethodTag::Generator { .. } => {
            let me = build_generator(tag, &case.table, &case.bath, r.cluster_width)?;
            let gen = me.to_liouvillian();
            match r.backend {
                Backend::RungeKutta(o) => integrate(&gen, &case.rho0, &r.grid, &o),
                Backend::Exponential(o) => exponential_trajectory(&gen, &case.rho0, &r.grid, &o),
            }
        }
    }
}

/// Observables default to every level population when none are requested.
fn effective_observables(requested: &[Observable], dim: usize) -> Vec<Observable> {
    if requested.is_empty() {
        (0..dim).map(Observable::Population).collect()
    } else {
        requested.to_vec()
    }
}

/// Matrix-element series of one observable, in the user's input basis.
fn element_series(traj: &Trajectory, case: &ScenarioCase, j: usize, k: usize) -> Vec<C64> {
    traj.states
        .iter()
        .map(|s| case.eig.from_eigenbasis(s)[(j, k)])
        .collect()
}

/// One trajectory as CSV: time, the requested observables (user basis),
/// trace, and the smallest state eigenvalue. A diverged run simply has
/// fewer rows (it stops where the state blew up).
fn trajectory_csv(traj: &Trajectory, case: &ScenarioCase, observables: &[Observable]) -> String {
    let obs = effective_observables(observables, case.spec.dim());
    let mut header: Vec<String> = vec!["t_inv_eV".into()];
    let mut series: Vec<Vec<String>> = Vec::new();
    for o in &obs {
        let (j, k) = o.indices();
        let elems = element_series(traj, case, j, k);
        match o {
            Observable::Phase(_) => {
                let phases: Vec<f64> = elems.iter().map(|z| z.arg()).collect();
                header.push(format!("mod_{}", o.column_stub()));
                header.push(format!("phase_{}", o.column_stub()));
                series.push(elems.iter().map(|z| c(z.norm())).collect());
                series.push(unwrap_phase(&phases).iter().map(|p| c(*p)).collect());
            }
            _ => {
                header.push(format!("re_{}", o.column_stub()));
                header.push(format!("im_{}", o.column_stub()));
                series.push(elems.iter().map(|z| c(z.re)).collect());
                series.push(elems.iter().map(|z| c(z.im)).collect());
            }
        }
    }
    header.extend(["trace_re".into(), "trace_im".into(), "min_eig".into()]);

    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);
    for (i, (t, d)) in traj.times.iter().zip(&traj.diagnostics).enumerate() {
        let mut row = vec![c(*t)];
        for s in &series {
            row.push(s[i].clone());
        }
        row.extend([c(d.trace.re), c(d.trace.im), c(d.min_eigenvalue)]);
        csv.row(&row);
    }
    csv.text
}

const DIAG_HEADER: [&str; 6] = [
    "method",
    "t_inv_eV",
    "trace_error",
    "hermiticity_defect",
    "min_population",
    "min_eigenvalue",
];

/// State-quality series of every method of one case, long format.
fn diagnostics_rows(csv: &mut Csv, tag: &MethodTag, traj: &Trajectory, case: &ScenarioCase) {
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let d = diagnose(&case.eig.from_eigenbasis(state));
        csv.row(&[
            tag.to_string(),
            c(*t),
            c(d.trace_error),
            c(d.hermiticity_defect),
            c(d.min_population),
            c(d.min_eigenvalue),
        ]);
    }
}

/// Trajectories plus a per-case diagnostics table.
pub fn cmd_run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let r = cfg.resolve()?;
    let mut written = Vec::new();
    for case in &r.cases {
        let mut diag = Csv::new(&DIAG_HEADER);
        for tag in &r.methods {
            let traj = propagate_method(tag, case, &r)?;
            let name = csv_name("traj", case.label.as_deref(), Some(tag));
            write_out(out_dir, &name, &trajectory_csv(&traj, case, &r.observables), &mut written)?;
            diagnostics_rows(&mut diag, tag, &traj, case);
        }
        let name = csv_name("diag", case.label.as_deref(), None);
        write_out(out_dir, &name, &diag.text, &mut written)?;
    }
    Ok(written)
}

/// ‖ρ_a(t) − ρ_b(t)‖_F over the common prefix of two runs.
fn distance_series(a: &Trajectory, b: &Trajectory) -> Vec<f64> {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x - y).norm())
        .collect()
}

/// Population series of the lifetime-fit observable, user basis.
fn fit_series(traj: &Trajectory, case: &ScenarioCase, level: usize) -> Vec<f64> {
    element_series(traj, case, level, level)
        .iter()
        .map(|z| z.re)
        .collect()
}

/// Golden-rule inverse rate 1/(2πJ₁₁(ω)) of a bath.
fn inverse_rate(bath: &SpectralModel, omega: f64) -> Result<f64> {
    let j = bath.eval_j(omega)?[(0, 0)];
    Ok(1.0 / (2.0 * std::f64::consts::PI * j))
}

/// Everything `cmd_run` writes, plus deviation-from-benchmark series and,
/// when configured, a fitted-lifetime table across the sweep.
pub fn cmd_compare(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let r = cfg.resolve()?;
    if !r.methods.contains(&MethodTag::Exact) {
        return Err(Error::Config(
            "compare needs the Exact method in the methods list".into(),
        ));
    }
    let fit_level = match r.lifetime_fit {
        None => None,
        Some(Observable::Population(k)) => Some(k),
        Some(_) => {
            return Err(Error::Config(
                "lifetime_fit must target a population (pop:k)".into(),
            ))
        }
    };

    let mut written = Vec::new();
    let mut lifetimes = {
        let mut header: Vec<String> = vec!["label".into()];
        header.extend(r.methods.iter().map(|m| format!("lifetime_{m}")));
        header.push("reference_inv_rate".into());
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        Csv::new(&refs)
    };

    for case in &r.cases {
        let mut runs: Vec<(MethodTag, Trajectory)> = Vec::with_capacity(r.methods.len());
        for tag in &r.methods {
            let traj = propagate_method(tag, case, &r)?;
            let name = csv_name("traj", case.label.as_deref(), Some(tag));
            write_out(out_dir, &name, &trajectory_csv(&traj, case, &r.observables), &mut written)?;
            runs.push((*tag, traj));
        }
        let exact = &runs
            .iter()
            .find(|(t, _)| *t == MethodTag::Exact)
            .expect("checked above")
            .1;

        let rest: Vec<&(MethodTag, Trajectory)> = runs
            .iter()
            .filter(|(t, _)| *t != MethodTag::Exact)
            .collect();
        let devs: Vec<Vec<f64>> = rest
            .iter()
            .map(|(_, traj)| distance_series(exact, traj))
            .collect();
        let mut header: Vec<String> = vec!["t_inv_eV".into()];
        header.extend(rest.iter().map(|(t, _)| format!("dev_{t}")));
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut dev_csv = Csv::new(&refs);
        for (i, t) in exact.times.iter().enumerate() {
            let mut row = vec![c(*t)];
            for d in &devs {
                row.push(if i < d.len() { c(d[i]) } else { String::new() });
            }
            dev_csv.row(&row);
        }
        let name = csv_name("dev", case.label.as_deref(), None);
        write_out(out_dir, &name, &dev_csv.text, &mut written)?;

        if let Some(level) = fit_level {
            let mut row = vec![case.label.clone().unwrap_or_else(|| "base".into())];
            for (_, traj) in &runs {
                let pops = fit_series(traj, case, level);
                row.push(opt(fit_lifetime(&traj.times, &pops)));
            }
            let reference = case
                .reference_omega
                .map(|w| inverse_rate(&case.bath, w))
                .transpose()?;
            row.push(opt(reference));
            lifetimes.row(&row);
        }
    }
    if fit_level.is_some() {
        write_out(out_dir, "lifetimes.csv", &lifetimes.text, &mut written)?;
    }
    Ok(written)
}

/// Full report as JSON plus the aggregate and histogram tables as CSV.
pub fn cmd_ensemble(cfg: &EnsembleConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let report = run_ensemble(cfg)?;
    let stats = eigenvalue_stats(&report);
    let mut written = Vec::new();

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_out(out_dir, "report.json", &json, &mut written)?;

    let mut agg = Csv::new(&[
        "factor",
        "method",
        "geo_mean_deviation",
        "log10_std",
        "included",
        "excluded",
        "diverged",
    ]);
    for cell in &report.aggregates {
        agg.row(&[
            c(cell.factor),
            cell.method.clone(),
            opt(cell.geo_mean_deviation),
            opt(cell.log10_std),
            cell.included.to_string(),
            cell.excluded.to_string(),
            cell.diverged.to_string(),
        ]);
    }
    write_out(out_dir, "aggregates.csv", &agg.text, &mut written)?;

    let mut hist = Csv::new(&["method", "rank", "bin_edge", "count"]);
    for row in &stats.rows {
        let edge = f64::from(row.sign) * 10f64.powf(row.bin_lo);
        hist.row(&[
            row.method.clone(),
            row.rank.to_string(),
            c(edge),
            row.count.to_string(),
        ]);
    }
    write_out(out_dir, "histograms.csv", &hist.text, &mut written)?;
    Ok(written)
}

/// J(ω) and λ(ω) tabulated on a frequency grid; a system section adds its
/// transition frequencies as a marker table.
pub fn cmd_spectra(cfg: &SpectraConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if cfg.n_points == 0 {
        return Err(Error::Config("spectra grid has zero points".into()));
    }
    if !(cfg.omega_min.is_finite() && cfg.omega_max.is_finite() && cfg.omega_min <= cfg.omega_max)
    {
        return Err(Error::Config(format!(
            "spectra range [{}, {}] is not an interval",
            cfg.omega_min, cfg.omega_max
        )));
    }

    let (bath, markers) = match &cfg.system {
        None => {
            let bath = cfg
                .bath
                .as_ref()
                .ok_or_else(|| Error::Config("spectra needs a bath section".into()))?
                .build()?;
            (bath, None)
        }
        Some(system) => {
            let (spec, bath, _) = resolve_system(system, cfg.bath.as_ref(), None)?;
            let eig = diagonalize_system(&spec, DEFAULT_DEGENERACY_TOL)?;
            let table = enumerate_transitions(&spec, &eig, DEFAULT_ELEMENT_TOL);
            (bath, Some(table))
        }
    };

    let m = bath.channels();
    let mut header: Vec<String> = vec!["omega_eV".into()];
    for i in 0..m {
        for j in i..m {
            header.push(format!("J_{}{}", i + 1, j + 1));
        }
    }
    for i in 0..m {
        for j in i..m {
            header.push(format!("lambda_{}{}", i + 1, j + 1));
        }
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&refs);
    for p in 0..cfg.n_points {
        let omega = if cfg.n_points == 1 {
            cfg.omega_min
        } else {
            let s = p as f64 / (cfg.n_points - 1) as f64;
            cfg.omega_min + s * (cfg.omega_max - cfg.omega_min)
        };
        let jm = bath.eval_j(omega)?;
        let lm = bath.eval_lambda(omega)?;
        let mut row = vec![c(omega)];
        for mat in [&jm, &lm] {
            for i in 0..m {
                for j in i..m {
                    row.push(c(mat[(i, j)]));
                }
            }
        }
        csv.row(&row);
    }

    let mut written = Vec::new();
    write_out(out_dir, "spectra.csv", &csv.text, &mut written)?;
    if let Some(table) = markers {
        let mut tcsv = Csv::new(&["index", "bra", "ket", "frequency_eV"]);
        for t in &table.transitions {
            tcsv.row(&[
                t.index.to_string(),
                t.bra.to_string(),
                t.ket.to_string(),
                c(t.frequency),
            ]);
        }
        write_out(out_dir, "transitions.csv", &tcsv.text, &mut written)?;
    }
    Ok(written)
}

/// One master-equation JSON export per requested method.
pub fn cmd_build(cfg: &BuildConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let methods = parse_methods(&cfg.methods)?;
    let (spec, bath, _) = resolve_system(&cfg.system, cfg.bath.as_ref(), None)?;
    let eig = diagonalize_system(&spec, DEFAULT_DEGENERACY_TOL)?;
    let table = std::sync::Arc::new(enumerate_transitions(&spec, &eig, DEFAULT_ELEMENT_TOL));

    let mut written = Vec::new();
    for tag in &methods {
        let me = build_generator(tag, &table, &bath, cfg.cluster_width)?;
        let export = master_equation_export(tag, &me)?;
        let mut json = serde_json::to_string_pretty(&export)?;
        json.push('\n');
        let name = format!("master_equation_{}.json", method_stem(tag));
        write_out(out_dir, &name, &json, &mut written)?;
    }
    Ok(written)
}

/// Point every generated-system section at a new seed (the --seed flag).
pub fn override_scenario_seed(cfg: &mut ScenarioConfig, seed: u64) {
    override_system_seed(&mut cfg.system, seed);
    for p in &mut cfg.sweep {
        if let Some(system) = &mut p.system {
            override_system_seed(system, seed);
        }
    }
}

pub fn override_system_seed(system: &mut SystemIn, seed: u64) {
    if let SystemIn::Generated { seed: s, .. } = system {
        *s = seed;
    }
}

/// --threads beats the LINDBLAD_FORGE_THREADS environment variable.
pub fn thread_override(cli_threads: Option<usize>) -> Result<Option<usize>> {
    if cli_threads.is_some() {
        return Ok(cli_threads);
    }
    match std::env::var("LINDBLAD_FORGE_THREADS") {
        Err(_) => Ok(None),
        Ok(text) => text.trim().parse::<usize>().map(Some).map_err(|_| {
            Error::Config(format!("LINDBLAD_FORGE_THREADS must be an integer, got '{text}'"))
        }),
    }
}
