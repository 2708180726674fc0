//! JSON scenario schema: one config file per command, schema-validated
//! before any computation (unknown keys are rejected everywhere). All
//! energies are in eV with ħ = 1; times are in eV⁻¹.
//!
//! Complex entries are written as a plain number (real) or a `[re, im]`
//! pair; matrices are row-major nested arrays. States and operators are
//! given in the basis of the Hamiltonian as written in the config; the
//! resolver moves them to the eigenbasis internally and observables are
//! reported back in the input basis.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bath::{PseudomodeNetwork, RMatrix, SpectralModel};
use crate::builder::{MasterEquation, MethodTag};
use crate::ensemble::{gen_instance, EnsembleConfig};
use crate::error::{Error, Result};
use crate::exact::{Backend, ExactOptions};
use crate::operator::{C64, CMatrix, CVector};
use crate::propagate::{IntegrateOptions, StepperOptions, TimeGrid};
use crate::rng::Rng;
use crate::system::{
    diagonalize_system, enumerate_transitions, EigenSystem, SystemSpec, TransitionTable,
    DEFAULT_DEGENERACY_TOL, DEFAULT_ELEMENT_TOL,
};

/// Complex scalar in a config: `1.5` or `[1.5, -0.25]`.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum ComplexIn {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexIn {
    pub fn to_c64(self) -> C64 {
        match self {
            ComplexIn::Real(re) => C64::new(re, 0.0),
            ComplexIn::Pair([re, im]) => C64::new(re, im),
        }
    }
}

fn complex_matrix(rows: &[Vec<ComplexIn>], what: &str) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Config(format!("{what}: empty matrix")));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{what}: ragged rows")));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| rows[i][j].to_c64()))
}

fn real_matrix(rows: &[Vec<f64>], what: &str) -> Result<RMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Config(format!("{what}: empty matrix")));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{what}: ragged rows")));
    }
    Ok(RMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// System section: written out in full, or drawn from the seeded ensemble
/// generator (in which case the bath and state come from the same draw and
/// their sections must be absent).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum SystemIn {
    Inline {
        hamiltonian: Vec<Vec<ComplexIn>>,
        coupling_ops: Vec<Vec<Vec<ComplexIn>>>,
    },
    Generated {
        seed: u64,
        index: u64,
        levels: usize,
        channels: usize,
        modes: usize,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum BathIn {
    Lorentzian {
        g: f64,
        omega_m: f64,
        kappa: f64,
        #[serde(default)]
        scale: Option<f64>,
    },
    Network {
        omega: Vec<Vec<f64>>,
        kappa: Vec<f64>,
        g: Vec<Vec<f64>>,
        #[serde(default)]
        scale: Option<f64>,
    },
}

impl BathIn {
    pub fn build(&self) -> Result<SpectralModel> {
        let (model, scale) = match self {
            BathIn::Lorentzian {
                g,
                omega_m,
                kappa,
                scale,
            } => (SpectralModel::lorentzian(*g, *omega_m, *kappa)?, *scale),
            BathIn::Network {
                omega,
                kappa,
                g,
                scale,
            } => {
                let network = PseudomodeNetwork::new(
                    real_matrix(omega, "bath.omega")?,
                    kappa.clone(),
                    real_matrix(g, "bath.g")?,
                )?;
                (SpectralModel::network(network), *scale)
            }
        };
        match scale {
            Some(f) => SpectralModel::scaled(model, f),
            None => Ok(model),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum StateIn {
    /// Pure state; amplitudes are normalized.
    Pure { amplitudes: Vec<ComplexIn> },
    /// Density matrix; must be Hermitian with trace ≈ 1 (renormalized).
    Density { matrix: Vec<Vec<ComplexIn>> },
}

impl StateIn {
    /// Build the density matrix in the input basis.
    pub fn density(&self, dim: usize) -> Result<CMatrix> {
        match self {
            StateIn::Pure { amplitudes } => {
                if amplitudes.len() != dim {
                    return Err(Error::Config(format!(
                        "state has {} amplitudes, system has {dim} levels",
                        amplitudes.len()
                    )));
                }
                let mut v = CVector::from_iterator(dim, amplitudes.iter().map(|c| c.to_c64()));
                let norm = v.norm();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::Config("state amplitudes are all zero".into()));
                }
                v.unscale_mut(norm);
                Ok(&v * v.adjoint())
            }
            StateIn::Density { matrix } => {
                let rho = complex_matrix(matrix, "state.matrix")?;
                if rho.nrows() != dim || rho.ncols() != rho.nrows() {
                    return Err(Error::Config(format!(
                        "state matrix is {}×{}, system has {dim} levels",
                        rho.nrows(),
                        rho.ncols()
                    )));
                }
                let defect = crate::operator::relative_hermiticity_defect(&rho);
                if defect > 1e-9 {
                    return Err(Error::Config(format!(
                        "state matrix is not Hermitian (relative defect {defect:.3e})"
                    )));
                }
                let tr = rho.trace();
                if (tr - C64::new(1.0, 0.0)).norm() > 1e-6 {
                    return Err(Error::Config(format!(
                        "state trace is {tr}, expected 1"
                    )));
                }
                Ok(rho.unscale(tr.re))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridIn {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    /// Number of intervals; output has n_steps + 1 points.
    pub n_steps: usize,
}

impl GridIn {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_start, self.t_end, self.n_steps)
    }
}

/// Which time stepper propagates the generator methods.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum PropagatorIn {
    Rk4 {
        #[serde(default)]
        local_tol: Option<f64>,
        #[serde(default)]
        max_refinement: Option<u32>,
    },
    Exponential {
        #[serde(default)]
        norm_cap: Option<f64>,
    },
}

impl Default for PropagatorIn {
    fn default() -> PropagatorIn {
        PropagatorIn::Rk4 {
            local_tol: None,
            max_refinement: None,
        }
    }
}

impl PropagatorIn {
    pub fn backend(self) -> Backend {
        match self {
            PropagatorIn::Rk4 {
                local_tol,
                max_refinement,
            } => {
                let d = IntegrateOptions::default();
                Backend::RungeKutta(IntegrateOptions {
                    local_tol: local_tol.unwrap_or(d.local_tol),
                    max_refinement: max_refinement.unwrap_or(d.max_refinement),
                })
            }
            PropagatorIn::Exponential { norm_cap } => {
                let d = StepperOptions::default();
                Backend::Exponential(StepperOptions {
                    norm_cap: norm_cap.unwrap_or(d.norm_cap),
                })
            }
        }
    }
}

/// Knobs for the benchmark solver; anything missing takes the defaults.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactIn {
    pub n_max: Option<usize>,
    pub max_retries: Option<usize>,
    pub top_tol: Option<f64>,
    pub dim_cap: Option<usize>,
}

impl ExactIn {
    pub fn resolve(self, backend: Backend) -> ExactOptions {
        let d = ExactOptions::default();
        ExactOptions {
            n_max: self.n_max.unwrap_or(d.n_max),
            max_retries: self.max_retries.unwrap_or(d.max_retries),
            top_tol: self.top_tol.unwrap_or(d.top_tol),
            dim_cap: self.dim_cap.unwrap_or(d.dim_cap),
            backend,
        }
    }
}

/// What to extract from each stored state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    /// Diagonal element k ("pop:k").
    Population(usize),
    /// Off-diagonal element (j, k) ("coh:j:k").
    Coherence(usize, usize),
    /// Modulus and unwrapped complex phase of diagonal element k
    /// ("pha:k"). The phase of a population is identically zero for a
    /// Hermitian state; a drifting phase is the non-Hermiticity signature
    /// some generators exhibit.
    Phase(usize),
}

impl Observable {
    /// Stub used in CSV column names: `pop_2`, `coh_0_1`, `pha_1`.
    pub fn column_stub(&self) -> String {
        match self {
            Observable::Population(k) => format!("pop_{k}"),
            Observable::Coherence(j, k) => format!("coh_{j}_{k}"),
            Observable::Phase(k) => format!("pha_{k}"),
        }
    }

    pub fn indices(&self) -> (usize, usize) {
        match *self {
            Observable::Population(k) => (k, k),
            Observable::Coherence(j, k) => (j, k),
            Observable::Phase(k) => (k, k),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Observable> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad =
            || Error::Config(format!("unknown observable '{s}' (use pop:k, coh:j:k, or pha:k)"));
        match parts.as_slice() {
            ["pop", k] => Ok(Observable::Population(k.parse().map_err(|_| bad())?)),
            ["coh", j, k] => Ok(Observable::Coherence(
                j.parse().map_err(|_| bad())?,
                k.parse().map_err(|_| bad())?,
            )),
            ["pha", k] => Ok(Observable::Phase(k.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// One labeled case of a sweep (label lands in file names). Whichever of
/// the system/bath sections is present replaces the base one; anything
/// absent is inherited, so a coupling sweep overrides the bath point by
/// point while a level-detuning sweep overrides the system.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub label: String,
    #[serde(default)]
    pub system: Option<SystemIn>,
    #[serde(default)]
    pub bath: Option<BathIn>,
    /// Golden-rule reference frequency for this case's lifetime row
    /// (overrides the `lifetime_fit` default).
    #[serde(default)]
    pub reference_omega: Option<f64>,
}

/// Decay-fit request: fit the observable's exponential tail per case and
/// tabulate it next to the golden-rule reference 1/(2πJ₁₁(ω)) of each
/// case's bath at that case's reference frequency.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeFitIn {
    pub observable: String,
    /// Default reference frequency; sweep points may override it.
    #[serde(default)]
    pub reference_omega: Option<f64>,
}

/// Config for the `run` and `compare` commands.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemIn,
    #[serde(default)]
    pub bath: Option<BathIn>,
    pub methods: Vec<String>,
    #[serde(default)]
    pub state: Option<StateIn>,
    pub grid: GridIn,
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default)]
    pub sweep: Vec<SweepPoint>,
    #[serde(default)]
    pub propagator: PropagatorIn,
    #[serde(default)]
    pub exact: ExactIn,
    #[serde(default)]
    pub lifetime_fit: Option<LifetimeFitIn>,
    /// Single-linkage width (eV) for clustered (`d…`) prescriptions.
    #[serde(default)]
    pub cluster_width: Option<f64>,
}

/// Config for the `spectra` command.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    /// Required unless the system is generated (which brings its own bath).
    #[serde(default)]
    pub bath: Option<BathIn>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
    /// When present, the system's transition frequencies are tabulated as
    /// markers next to the spectra.
    #[serde(default)]
    pub system: Option<SystemIn>,
}

/// Config for the `build` command.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub system: SystemIn,
    #[serde(default)]
    pub bath: Option<BathIn>,
    /// One JSON export is written per method.
    pub methods: Vec<String>,
    #[serde(default)]
    pub cluster_width: Option<f64>,
}

/// One fully lowered system/bath/state combination of a scenario.
pub struct ScenarioCase {
    /// Sweep label; None for the single unswept case.
    pub label: Option<String>,
    pub spec: SystemSpec,
    pub eig: EigenSystem,
    pub table: Arc<TransitionTable>,
    pub bath: SpectralModel,
    /// Initial state in the eigenbasis.
    pub rho0: CMatrix,
    pub reference_omega: Option<f64>,
}

/// A scenario lowered to domain objects, ready to execute.
pub struct ResolvedScenario {
    pub cases: Vec<ScenarioCase>,
    pub methods: Vec<MethodTag>,
    pub grid: TimeGrid,
    pub observables: Vec<Observable>,
    pub backend: Backend,
    pub exact: ExactOptions,
    pub cluster_width: Option<f64>,
    pub lifetime_fit: Option<Observable>,
}

/// System + bath + state from the system section, honoring the
/// inline-vs-generated exclusivity rules. An inline system may omit the
/// state (commands that never propagate don't need one); a generated
/// system draws its own bath and state, though the state may be replaced.
pub fn resolve_system(
    system: &SystemIn,
    bath: Option<&BathIn>,
    state: Option<&StateIn>,
) -> Result<(SystemSpec, SpectralModel, Option<CMatrix>)> {
    match system {
        SystemIn::Inline {
            hamiltonian,
            coupling_ops,
        } => {
            let h = complex_matrix(hamiltonian, "system.hamiltonian")?;
            let ops = coupling_ops
                .iter()
                .enumerate()
                .map(|(k, rows)| complex_matrix(rows, &format!("system.coupling_ops[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            let spec = SystemSpec::new(h, ops)?;
            let bath = bath
                .ok_or_else(|| Error::Config("inline system requires a bath section".into()))?
                .build()?;
            let rho = state.map(|s| s.density(spec.dim())).transpose()?;
            Ok((spec, bath, rho))
        }
        SystemIn::Generated {
            seed,
            index,
            levels,
            channels,
            modes,
        } => {
            if bath.is_some() {
                return Err(Error::Config(
                    "generated system draws its own bath; remove the bath section".into(),
                ));
            }
            let mut rng = Rng::substream(*seed, *index);
            let instance = gen_instance(&mut rng, *levels, *channels, *modes)?;
            let rho = match state {
                Some(s) => s.density(instance.system.dim())?,
                None => &instance.state * instance.state.adjoint(),
            };
            Ok((
                instance.system,
                SpectralModel::network(instance.network),
                Some(rho),
            ))
        }
    }
}

pub fn parse_methods(methods: &[String]) -> Result<Vec<MethodTag>> {
    if methods.is_empty() {
        return Err(Error::Config("methods list is empty".into()));
    }
    methods.iter().map(|s| s.parse()).collect()
}

fn check_observable_range(obs: &Observable, dim: usize, label: Option<&str>) -> Result<()> {
    let (j, k) = obs.indices();
    if j >= dim || k >= dim {
        let case = label.map(|l| format!(" (case '{l}')")).unwrap_or_default();
        return Err(Error::Config(format!(
            "observable {} is out of range for a {dim}-level system{case}",
            obs.column_stub(),
        )));
    }
    Ok(())
}

impl ScenarioConfig {
    fn lower_case(
        &self,
        label: Option<&str>,
        point: Option<&SweepPoint>,
        observables: &[Observable],
        lifetime_fit: Option<&Observable>,
    ) -> Result<ScenarioCase> {
        let system = point.and_then(|p| p.system.as_ref()).unwrap_or(&self.system);
        let bath_in = point.and_then(|p| p.bath.as_ref()).or(self.bath.as_ref());
        let (spec, bath, rho_user) = resolve_system(system, bath_in, self.state.as_ref())?;
        let rho_user = rho_user.ok_or_else(|| {
            Error::Config("this command propagates states; add a state section".into())
        })?;
        for obs in observables.iter().chain(lifetime_fit) {
            check_observable_range(obs, spec.dim(), label)?;
        }
        let eig = diagonalize_system(&spec, DEFAULT_DEGENERACY_TOL)?;
        let table = Arc::new(enumerate_transitions(&spec, &eig, DEFAULT_ELEMENT_TOL));
        let rho0 = eig.to_eigenbasis(&rho_user);
        let reference_omega = point
            .and_then(|p| p.reference_omega)
            .or(self.lifetime_fit.as_ref().and_then(|f| f.reference_omega));
        Ok(ScenarioCase {
            label: label.map(str::to_owned),
            spec,
            eig,
            table,
            bath,
            rho0,
            reference_omega,
        })
    }

    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let methods = parse_methods(&self.methods)?;
        let grid = self.grid.build()?;
        let observables = self
            .observables
            .iter()
            .map(|s| s.parse::<Observable>())
            .collect::<Result<Vec<_>>>()?;
        let lifetime_fit = self
            .lifetime_fit
            .as_ref()
            .map(|f| f.observable.parse::<Observable>())
            .transpose()?;

        let mut seen = std::collections::HashSet::new();
        for p in &self.sweep {
            if !seen.insert(p.label.as_str()) {
                return Err(Error::Config(format!("duplicate sweep label '{}'", p.label)));
            }
        }
        let cases = if self.sweep.is_empty() {
            vec![self.lower_case(None, None, &observables, lifetime_fit.as_ref())?]
        } else {
            self.sweep
                .iter()
                .map(|p| {
                    if p.label.is_empty()
                        || !p
                            .label
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
                    {
                        return Err(Error::Config(format!(
                            "sweep label '{}' (use only letters, digits, '.', '_', '-')",
                            p.label
                        )));
                    }
                    if p.system.is_none() && p.bath.is_none() {
                        return Err(Error::Config(format!(
                            "sweep point '{}' overrides neither the system nor the bath",
                            p.label
                        )));
                    }
                    self.lower_case(Some(&p.label), Some(p), &observables, lifetime_fit.as_ref())
                })
                .collect::<Result<Vec<_>>>()?
        };

        let backend = self.propagator.backend();
        Ok(ResolvedScenario {
            cases,
            methods,
            grid,
            observables,
            backend,
            exact: self.exact.resolve(backend),
            cluster_width: self.cluster_width,
            lifetime_fit,
        })
    }
}

fn matrix_out(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Transition metadata rows in a master-equation export.
#[derive(Clone, Debug, Serialize)]
pub struct TransitionMeta {
    pub index: usize,
    pub bra: usize,
    pub ket: usize,
    pub frequency: f64,
}

/// JSON view of a built master equation (the `build` command's output).
#[derive(Clone, Debug, Serialize)]
pub struct MasterEquationExport {
    pub method: String,
    pub repaired: bool,
    pub transitions: Vec<TransitionMeta>,
    /// Complex entries as [re, im], row-major.
    pub delta: Vec<Vec<[f64; 2]>>,
    pub kossakowski: Vec<Vec<[f64; 2]>>,
    /// Kossakowski spectrum, ascending (eV).
    pub kossakowski_eigenvalues: Vec<f64>,
    pub delta_defect: f64,
    pub kossakowski_defect: f64,
}

pub fn master_equation_export(
    method: &MethodTag,
    me: &MasterEquation,
) -> Result<MasterEquationExport> {
    let eig = crate::operator::herm_eig(&me.kossakowski)?;
    Ok(MasterEquationExport {
        method: method.to_string(),
        repaired: me.repaired,
        transitions: me
            .table
            .transitions
            .iter()
            .map(|t| TransitionMeta {
                index: t.index,
                bra: t.bra,
                ket: t.ket,
                frequency: t.frequency,
            })
            .collect(),
        delta: matrix_out(&me.delta),
        kossakowski: matrix_out(&me.kossakowski),
        kossakowski_eigenvalues: eig.values.iter().copied().collect(),
        delta_defect: me.delta_defect,
        kossakowski_defect: me.kossakowski_defect,
    })
}

fn parse_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    parse_file(path)
}

pub fn load_ensemble(path: &Path) -> Result<EnsembleConfig> {
    parse_file(path)
}

pub fn load_spectra(path: &Path) -> Result<SpectraConfig> {
    parse_file(path)
}

pub fn load_build(path: &Path) -> Result<BuildConfig> {
    parse_file(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inline_scenario_json() -> &'static str {
        r#"{
            "system": {
                "kind": "inline",
                "hamiltonian": [[1.0, 0.0], [0.0, 2.5]],
                "coupling_ops": [[[0.0, [1.0, 0.0]], [[1.0, -0.0], 0.0]]]
            },
            "bath": { "kind": "lorentzian", "g": 0.001, "omega_m": 1.5, "kappa": 0.01 },
            "methods": ["BRE", "aLgG+"],
            "state": { "kind": "pure", "amplitudes": [[0.70710678, 0.0], [-0.70710678, 0.0]] },
            "grid": { "t_end": 100.0, "n_steps": 50 },
            "observables": ["pop:0", "coh:0:1"]
        }"#
    }

    #[test]
    fn inline_scenario_parses_and_resolves() {
        let cfg: ScenarioConfig = serde_json::from_str(inline_scenario_json()).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.cases.len(), 1);
        assert_eq!(r.cases[0].label, None);
        assert_eq!(r.cases[0].spec.dim(), 2);
        assert_eq!(r.methods.len(), 2);
        assert!(r.methods[1].repaired());
        assert_eq!(r.grid.len(), 51);
        assert_eq!(r.observables[0], Observable::Population(0));
        assert_eq!(r.observables[1], Observable::Coherence(0, 1));
        assert!(matches!(r.backend, Backend::RungeKutta(_)));
        // Initial state is a valid density matrix in the eigenbasis.
        assert!((r.cases[0].rho0.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(inline_scenario_json()).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ScenarioConfig>(v).is_err());

        let bad_bath = r#"{ "kind": "lorentzian", "g": 1.0, "omega_m": 1.0, "kappa": 0.1, "x": 0 }"#;
        assert!(serde_json::from_str::<BathIn>(bad_bath).is_err());
    }

    #[test]
    fn empty_methods_is_a_config_error() {
        let mut v: serde_json::Value = serde_json::from_str(inline_scenario_json()).unwrap();
        v["methods"] = serde_json::json!([]);
        let cfg: ScenarioConfig = serde_json::from_value(v).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn generated_system_excludes_bath_but_takes_a_state_override() {
        let text = r#"{
            "system": { "kind": "generated", "seed": 1234321, "index": 0,
                        "levels": 3, "channels": 2, "modes": 2 },
            "methods": ["Exact", "BRE"],
            "grid": { "t_end": 10.0, "n_steps": 10 }
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.cases[0].spec.dim(), 3);
        assert!(matches!(r.cases[0].bath, SpectralModel::Network(_)));

        let with_bath = r#"{
            "system": { "kind": "generated", "seed": 1, "index": 0,
                        "levels": 3, "channels": 2, "modes": 2 },
            "bath": { "kind": "lorentzian", "g": 0.001, "omega_m": 1.0, "kappa": 0.01 },
            "methods": ["BRE"],
            "grid": { "t_end": 10.0, "n_steps": 10 }
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(with_bath).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));

        // A state section replaces the drawn state without touching the
        // system/bath draw.
        let with_state = r#"{
            "system": { "kind": "generated", "seed": 1234321, "index": 0,
                        "levels": 3, "channels": 2, "modes": 2 },
            "state": { "kind": "pure", "amplitudes": [0.0, 0.5773502691896258, 0.816496580927726] },
            "methods": ["BRE"],
            "grid": { "t_end": 10.0, "n_steps": 10 }
        }"#;
        let plain = cfg_case(text);
        let overridden = cfg_case(with_state);
        assert_eq!(
            plain.spec.hamiltonian(),
            overridden.spec.hamiltonian(),
            "the draw must be unaffected by the state override"
        );
        assert!((plain.rho0.clone() - overridden.rho0.clone()).norm() > 1e-3);
    }

    fn cfg_case(text: &str) -> ScenarioCase {
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        cfg.resolve().unwrap().cases.remove(0)
    }

    #[test]
    fn sweep_overrides_system_and_carries_references() {
        let mut v: serde_json::Value = serde_json::from_str(inline_scenario_json()).unwrap();
        v["lifetime_fit"] = serde_json::json!({ "observable": "pop:1" });
        v["sweep"] = serde_json::json!([
            { "label": "d_0",
              "system": { "kind": "inline",
                          "hamiltonian": [[1.0, 0.0], [0.0, 2.0]],
                          "coupling_ops": [[[0.0, 1.0], [1.0, 0.0]]] },
              "reference_omega": 1.5 },
            { "label": "d_1", "bath": { "kind": "lorentzian", "g": 0.002, "omega_m": 1.4, "kappa": 0.01 } }
        ]);
        let cfg: ScenarioConfig = serde_json::from_value(v.clone()).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.cases.len(), 2);
        assert_eq!(r.cases[0].label.as_deref(), Some("d_0"));
        assert_eq!(r.cases[0].spec.hamiltonian()[(1, 1)].re, 2.0);
        assert_eq!(r.cases[0].reference_omega, Some(1.5));
        // Second point inherits the base system, overrides the bath, and
        // has no reference of its own (the fit section gave no default).
        assert_eq!(r.cases[1].spec.hamiltonian()[(1, 1)].re, 2.5);
        assert_eq!(r.cases[1].reference_omega, None);
        assert_eq!(r.lifetime_fit, Some(Observable::Population(1)));

        // Duplicate labels collide in file names.
        v["sweep"][1]["label"] = serde_json::json!("d_0");
        let cfg: ScenarioConfig = serde_json::from_value(v.clone()).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
        // A point that overrides nothing is a mistake.
        v["sweep"] = serde_json::json!([{ "label": "noop" }]);
        let cfg: ScenarioConfig = serde_json::from_value(v).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn observables_validate_names_and_ranges() {
        assert!("pop:1".parse::<Observable>().is_ok());
        assert!("coh:0:2".parse::<Observable>().is_ok());
        assert_eq!("pha:1".parse::<Observable>().unwrap(), Observable::Phase(1));
        assert!("xyz".parse::<Observable>().is_err());
        assert!("pop:x".parse::<Observable>().is_err());
        let mut v: serde_json::Value = serde_json::from_str(inline_scenario_json()).unwrap();
        v["observables"] = serde_json::json!(["pop:5"]);
        let cfg: ScenarioConfig = serde_json::from_value(v).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn state_section_is_validated() {
        // Non-Hermitian density matrix.
        let bad = StateIn::Density {
            matrix: vec![
                vec![ComplexIn::Real(0.5), ComplexIn::Pair([0.1, 0.2])],
                vec![ComplexIn::Pair([0.1, 0.2]), ComplexIn::Real(0.5)],
            ],
        };
        assert!(bad.density(2).is_err());
        // Wrong trace.
        let bad = StateIn::Density {
            matrix: vec![
                vec![ComplexIn::Real(0.9), ComplexIn::Real(0.0)],
                vec![ComplexIn::Real(0.0), ComplexIn::Real(0.3)],
            ],
        };
        assert!(bad.density(2).is_err());
        // Pure state is normalized.
        let ok = StateIn::Pure {
            amplitudes: vec![ComplexIn::Real(3.0), ComplexIn::Real(4.0)],
        };
        let rho = ok.density(2).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!((rho[(0, 0)].re - 0.36).abs() < 1e-12);
    }

    #[test]
    fn bath_scale_multiplies_the_spectrum() {
        let plain: BathIn = serde_json::from_str(
            r#"{ "kind": "lorentzian", "g": 0.002, "omega_m": 1.0, "kappa": 0.1 }"#,
        )
        .unwrap();
        let scaled: BathIn = serde_json::from_str(
            r#"{ "kind": "lorentzian", "g": 0.002, "omega_m": 1.0, "kappa": 0.1, "scale": 4.0 }"#,
        )
        .unwrap();
        let j0 = plain.build().unwrap().eval_j(1.0).unwrap()[(0, 0)];
        let j4 = scaled.build().unwrap().eval_j(1.0).unwrap()[(0, 0)];
        assert!((j4 / j0 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ensemble_config_defaults_and_strictness() {
        let cfg: EnsembleConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.seed, 1_234_321);
        assert_eq!(cfg.n_systems, 200);
        let cfg: EnsembleConfig =
            serde_json::from_str(r#"{ "n_systems": 7, "strength_factors": [1.0, 10.0] }"#).unwrap();
        assert_eq!(cfg.n_systems, 7);
        assert_eq!(cfg.strength_factors, vec![1.0, 10.0]);
        assert!(serde_json::from_str::<EnsembleConfig>(r#"{ "bogus": 1 }"#).is_err());
    }

    #[test]
    fn build_export_shape() {
        use crate::builder::build_generator;
        let cfg: ScenarioConfig = serde_json::from_str(inline_scenario_json()).unwrap();
        let r = cfg.resolve().unwrap();
        let case = &r.cases[0];
        let tag: MethodTag = "aLaG".parse().unwrap();
        let me = build_generator(&tag, &case.table, &case.bath, None).unwrap();
        let export = master_equation_export(&tag, &me).unwrap();
        assert_eq!(export.method, "aLaG");
        let t = export.transitions.len();
        assert_eq!(export.kossakowski.len(), t);
        assert_eq!(export.delta.len(), t);
        assert_eq!(export.kossakowski_eigenvalues.len(), t);
        assert!(export
            .kossakowski_eigenvalues
            .windows(2)
            .all(|w| w[0] <= w[1]));
        let text = serde_json::to_string(&export).unwrap();
        assert!(text.contains("\"kossakowski\""));
    }

    #[test]
    fn sweep_labels_are_restricted() {
        let mut v: serde_json::Value = serde_json::from_str(inline_scenario_json()).unwrap();
        v["sweep"] = serde_json::json!([
            { "label": "g 0.1",
              "bath": { "kind": "lorentzian", "g": 0.1, "omega_m": 1.0, "kappa": 0.01 } }
        ]);
        let cfg: ScenarioConfig = serde_json::from_value(v.clone()).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
        v["sweep"][0]["label"] = serde_json::json!("g_0.1");
        let cfg: ScenarioConfig = serde_json::from_value(v).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.cases.len(), 1);
        assert_eq!(r.cases[0].label.as_deref(), Some("g_0.1"));
    }
}
