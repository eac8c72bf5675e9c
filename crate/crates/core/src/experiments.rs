//! Named experiment runs shared by the `qte` binary and the examples.
//!
//! A run is described by one JSON document ([`ExperimentConfig`]). Missing
//! keys take the defaults of the selected experiment, unknown keys are
//! rejected, and the fully resolved document is echoed into `summary.json`.
//!
//! Every replica `k` draws from RNG streams `16·k + c` of the master seed,
//! where `c` is a [`Component`].

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    bures_distance, correlation, error_bound_series, integrated_bures, loglog_fit, product_state_diagnostic,
    runtime_estimate, sample_bound_dual, sample_bound_varqte, DeviceTimings, DiagnosticConfig, MethodTag, RateKind,
    ResourceLedger,
};
use crate::dualqte::{dual_loss_gradient, dualqte_evolve, gradient_descent, DualConfig, StopRule};
use crate::estimators::{energy_gradient_b_imag, fidelity, qgt_exact, GradientMethod, Sampler, ShotConfig};
use crate::hamiltonian::{
    energy_extremes, expectation, gibbs_expectation, heisenberg, ExactEvolver, ExtremesMode, HeisenbergSpec, Pauli,
    PauliSum, TimeMode, Topology,
};
use crate::metts::{mean_stddev, qmetts_chain, BasisSchedule, MettsConfig, MettsEvolver, MettsResult};
use crate::sim::{
    build_ansatz, initial_parameter_binding, inner_product, AnsatzSpec, Gate, InitialState, ParameterMap,
    ParameterizedCircuit, StateVector,
};
use crate::varqte::{varqte_evolve, EvolutionConfig, RegularizationPolicy, Trajectory};
use crate::{QteError, Result};

/// RNG streams reserved per replica.
pub const STREAMS_PER_REPLICA: u64 = 16;

/// Consumer of a replica's random numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    /// Shot noise of the evolution (gradients, fidelities, QGT).
    Evolution = 0,
    /// Readout of observables.
    Observable = 1,
    /// Basis collapses of the QMETTS chain.
    Chain = 2,
    /// Product-state sampling study.
    Diagnostics = 3,
}

pub fn stream_id(replica: usize, component: Component) -> u64 {
    replica as u64 * STREAMS_PER_REPLICA + component as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EvolveImag,
    EvolveReal,
    Qmetts,
    SizeScaling,
    #[serde(rename = "illustrative_1q")]
    Illustrative1q,
    ProductStateDiagnostic,
    RuntimeTable,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::EvolveImag,
        Self::EvolveReal,
        Self::Qmetts,
        Self::SizeScaling,
        Self::Illustrative1q,
        Self::ProductStateDiagnostic,
        Self::RuntimeTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::EvolveImag => "evolve_imag",
            Self::EvolveReal => "evolve_real",
            Self::Qmetts => "qmetts",
            Self::SizeScaling => "size_scaling",
            Self::Illustrative1q => "illustrative_1q",
            Self::ProductStateDiagnostic => "product_state_diagnostic",
            Self::RuntimeTable => "runtime_table",
        }
    }

    /// The figure or table the run regenerates.
    pub fn reproduces(self) -> &'static str {
        match self {
            Self::EvolveImag => "imaginary-time energy tracking and I_B vs total measurements",
            Self::EvolveReal => "real-time magnetization and a-posteriori error bounds",
            Self::Qmetts => "QMETTS energy per site vs beta",
            Self::SizeScaling => "measurements to reach I_B <= 0.1 vs parameter count",
            Self::Illustrative1q => "single-qubit loss landscape and update error vs delta_tau",
            Self::ProductStateDiagnostic => "sampling-error scaling on a product state",
            Self::RuntimeTable => "hardware runtime vs parameter count",
        }
    }

    fn uses_replicas(self) -> bool {
        matches!(self, Self::EvolveImag | Self::EvolveReal | Self::Qmetts | Self::SizeScaling)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Varqte,
    Dualqte,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientChoice {
    Psr,
    Lcu,
}

impl GradientChoice {
    fn method(self) -> GradientMethod {
        match self {
            Self::Psr => GradientMethod::psr(),
            Self::Lcu => GradientMethod::DerivativeState,
        }
    }
}

/// Per-size settings of the scaling study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingRow {
    pub n: usize,
    pub varqte_shots: u64,
    pub dual_shots: u64,
    pub k0: usize,
    pub k_warm: usize,
    pub eta: f64,
}

/// `N(d) = prefactor · d^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub prefactor: f64,
    pub exponent: f64,
}

impl PowerLaw {
    /// The law with `exponent` passing through `(d0, n0)`.
    pub fn through(d0: f64, n0: f64, exponent: f64) -> Self {
        Self { prefactor: n0 / d0.powf(exponent), exponent }
    }

    pub fn eval(&self, d: f64) -> f64 {
        self.prefactor * d.powf(self.exponent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeFits {
    pub varqte: PowerLaw,
    pub dualqte: PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub system: HeisenbergSpec,
    pub ansatz: AnsatzSpec,
    pub method: MethodChoice,
    pub gradient: GradientChoice,
    pub dt: f64,
    pub t_final: f64,
    pub delta_tau: f64,
    pub eta: f64,
    pub k0: usize,
    pub k_warm: usize,
    /// Loss-change stopping rule for exact-mode optimizations.
    pub stop_tolerance: Option<f64>,
    /// Shots per circuit; `null` for exact expectation values.
    pub shots: Option<u64>,
    pub regularization: RegularizationPolicy,
    pub delta_c: f64,
    pub betas: Vec<f64>,
    /// QMETTS chain length M.
    pub samples: usize,
    pub observable_shots: Option<u64>,
    /// Also run the exact-evolution chain next to a variational QMETTS chain.
    pub metts_reference: bool,
    pub scaling: Vec<ScalingRow>,
    /// Target mean I_B of the scaling study; shots are tuned to reach it.
    pub target_integrated_bures: Option<f64>,
    pub max_shot_doublings: u32,
    pub shot_bisections: u32,
    pub delta_taus: Vec<f64>,
    pub diagnostic_sizes: Vec<usize>,
    pub diagnostic_repetitions: usize,
    pub runtime_d: Vec<u64>,
    pub runtime_fits: RuntimeFits,
    pub timings: DeviceTimings,
    pub seed: u64,
    pub replicas: usize,
    pub output_path: Option<String>,
}

fn heisenberg_spec(n: usize, topology: Topology) -> HeisenbergSpec {
    HeisenbergSpec { n, topology, j: 0.25, g_field: -1.0 }
}

impl ExperimentConfig {
    /// Fully resolved defaults of `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        // the two size-scaling points the runtime curves are anchored at (n = 4, r = 2, d = 24)
        let runtime_fits = RuntimeFits {
            varqte: PowerLaw::through(24.0, 4.2e7, 3.56),
            dualqte: PowerLaw::through(24.0, 8.8e7, 2.29),
        };
        let base = Self {
            experiment: kind,
            system: heisenberg_spec(12, Topology::Circle),
            ansatz: AnsatzSpec::efficient_su2(12, 3),
            method: MethodChoice::Dualqte,
            gradient: GradientChoice::Psr,
            dt: 0.01,
            t_final: 2.0,
            delta_tau: 0.01,
            eta: 0.1,
            k0: 100,
            k_warm: 10,
            stop_tolerance: None,
            shots: Some(1024),
            regularization: RegularizationPolicy::default(),
            delta_c: 1e-2,
            betas: vec![0.5, 1.0, 2.0, 3.0, 4.0],
            samples: 25,
            observable_shots: Some(1024),
            metts_reference: true,
            scaling: vec![
                ScalingRow { n: 4, varqte_shots: 500, dual_shots: 500, k0: 100, k_warm: 15, eta: 0.07 },
                ScalingRow { n: 6, varqte_shots: 1500, dual_shots: 600, k0: 200, k_warm: 25, eta: 0.07 },
                ScalingRow { n: 8, varqte_shots: 2500, dual_shots: 1000, k0: 100, k_warm: 20, eta: 0.1 },
            ],
            target_integrated_bures: Some(0.1),
            max_shot_doublings: 5,
            shot_bisections: 3,
            delta_taus: vec![1e-1, 1e-2, 1e-3],
            diagnostic_sizes: (2..=10).collect(),
            diagnostic_repetitions: 10,
            runtime_d: vec![10, 20, 50, 100, 200, 500, 1000],
            runtime_fits,
            timings: DeviceTimings::default(),
            seed: 0,
            replicas: 5,
            output_path: None,
        };
        match kind {
            ExperimentKind::EvolveImag | ExperimentKind::SizeScaling => base,
            ExperimentKind::EvolveReal => Self {
                system: heisenberg_spec(4, Topology::Chain),
                ansatz: AnsatzSpec::alternating_xy(4, 3),
                gradient: GradientChoice::Lcu,
                dt: 0.02,
                shots: Some(200),
                ..base
            },
            ExperimentKind::Qmetts => Self {
                system: heisenberg_spec(6, Topology::Chain),
                ansatz: AnsatzSpec::efficient_su2(6, 2),
                replicas: 1,
                ..base
            },
            ExperimentKind::Illustrative1q => Self { delta_tau: 0.5, shots: None, replicas: 1, ..base },
            ExperimentKind::ProductStateDiagnostic => Self { shots: Some(1000), replicas: 1, ..base },
            ExperimentKind::RuntimeTable => Self { replicas: 1, ..base },
        }
    }

    /// Parses a config document, filling missing keys from the defaults of
    /// its `experiment`. Nested objects merge key by key unless they carry a
    /// `kind` tag, in which case they replace the default.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| QteError::Config(format!("invalid JSON: {e}")))?;
        let obj = user.as_object().ok_or_else(|| QteError::Config("config must be a JSON object".into()))?;
        let kind_value = obj.get("experiment").ok_or_else(|| QteError::Config("missing key \"experiment\"".into()))?;
        let kind: ExperimentKind = serde_json::from_value(kind_value.clone())
            .map_err(|e| QteError::Config(format!("unknown experiment {kind_value}: {e}")))?;
        let mut merged = serde_json::to_value(Self::defaults(kind))?;
        merge(&mut merged, &user);
        let config: Self = serde_json::from_value(merged).map_err(|e| QteError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| QteError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QteError::Config(msg));
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if self.shots == Some(0) || self.observable_shots == Some(0) {
            return bad("shot counts must be positive (use null for exact values)".into());
        }
        self.timings.validate()?;
        match self.experiment {
            ExperimentKind::EvolveImag | ExperimentKind::EvolveReal => {
                self.check_system()?;
                if self.method != MethodChoice::Exact {
                    self.check_ansatz_width()?;
                }
                match self.method {
                    MethodChoice::Dualqte => self.dual_config(self.mode(), self.t_final, 0).validate()?,
                    _ => self.varqte_config(self.mode(), self.t_final, 0).validate()?,
                }
            }
            ExperimentKind::Qmetts => {
                self.check_system()?;
                if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
                    return bad("betas must be a non-empty list of positive values".into());
                }
                if self.samples == 0 {
                    return bad("samples must be at least 1".into());
                }
                if self.ansatz.reps == 0 {
                    return bad("QMETTS needs ansatz.reps >= 1".into());
                }
                match self.method {
                    MethodChoice::Dualqte => self.dual_config(TimeMode::Imaginary, self.dt, 0).validate()?,
                    MethodChoice::Varqte => self.varqte_config(TimeMode::Imaginary, self.dt, 0).validate()?,
                    MethodChoice::Exact => {}
                }
            }
            ExperimentKind::SizeScaling => {
                if self.scaling.is_empty() {
                    return bad("scaling needs at least one row".into());
                }
                for row in &self.scaling {
                    if row.n < 2 || row.varqte_shots == 0 || row.dual_shots == 0 || !(row.eta > 0.0) {
                        return bad(format!("invalid scaling row {row:?}"));
                    }
                    if row.k_warm < 1 || row.k0 < row.k_warm {
                        return bad(format!("scaling row for n = {} needs k0 >= k_warm >= 1", row.n));
                    }
                }
                if let Some(t) = self.target_integrated_bures {
                    if !(t > 0.0) {
                        return bad("target_integrated_bures must be positive".into());
                    }
                }
                self.varqte_config(TimeMode::Imaginary, self.t_final, 0).validate()?;
            }
            ExperimentKind::Illustrative1q => {
                if !(self.delta_tau > 0.0) || self.delta_taus.iter().any(|d| !(*d > 0.0)) {
                    return bad("delta_tau values must be positive".into());
                }
            }
            ExperimentKind::ProductStateDiagnostic => {
                if self.diagnostic_sizes.is_empty() || self.diagnostic_sizes.contains(&0) {
                    return bad("diagnostic_sizes must be non-empty and positive".into());
                }
                if self.shots.is_none() {
                    return bad("the product-state diagnostic needs a finite shot count".into());
                }
                if self.diagnostic_repetitions == 0 || !(self.delta_c > 0.0) || !(self.dt > 0.0) {
                    return bad("diagnostic needs positive repetitions, delta_c and dt".into());
                }
            }
            ExperimentKind::RuntimeTable => {
                if self.ansatz.reps == 0 || self.runtime_d.contains(&0) {
                    return bad("runtime table needs reps >= 1 and positive d values".into());
                }
            }
        }
        Ok(())
    }

    fn check_system(&self) -> Result<()> {
        if self.system.n < 2 {
            return Err(QteError::Config(format!("system.n must be at least 2, got {}", self.system.n)));
        }
        Ok(())
    }

    fn check_ansatz_width(&self) -> Result<()> {
        if self.ansatz.n_qubits != self.system.n {
            return Err(QteError::Config(format!(
                "ansatz.n_qubits = {} does not match system.n = {}",
                self.ansatz.n_qubits, self.system.n
            )));
        }
        Ok(())
    }

    fn mode(&self) -> TimeMode {
        match self.experiment {
            ExperimentKind::EvolveReal => TimeMode::Real,
            _ => TimeMode::Imaginary,
        }
    }

    fn gradient_method(&self, mode: TimeMode) -> GradientMethod {
        match mode {
            TimeMode::Real => GradientMethod::DerivativeState,
            TimeMode::Imaginary => self.gradient.method(),
        }
    }

    fn shot_config(&self, shots: Option<u64>, replica: usize, component: Component) -> ShotConfig {
        match shots {
            Some(s) => ShotConfig::sampled(s, self.seed, stream_id(replica, component)),
            None => ShotConfig::exact(),
        }
    }

    fn dual_config(&self, mode: TimeMode, t_final: f64, replica: usize) -> DualConfig {
        DualConfig {
            delta_tau: self.delta_tau,
            eta: self.eta,
            k0: self.k0,
            k_warm: self.k_warm,
            warm_start: true,
            dt: self.dt,
            t_final,
            shots: self.shot_config(self.shots, replica, Component::Evolution),
            mode,
            gradient_method: self.gradient_method(mode),
            stop_tolerance: self.stop_tolerance,
            max_iterations: 100_000,
        }
    }

    fn varqte_config(&self, mode: TimeMode, t_final: f64, replica: usize) -> EvolutionConfig {
        EvolutionConfig {
            mode,
            dt: self.dt,
            t_final,
            shots: self.shot_config(self.shots, replica, Component::Evolution),
            gradient_method: self.gradient_method(mode),
            regularization: self.regularization.clone(),
        }
    }

    fn effective_replicas(&self) -> usize {
        if self.experiment.uses_replicas() {
            self.replicas
        } else {
            1
        }
    }
}

fn merge(base: &mut Value, user: &Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, u) => *b = u.clone(),
    }
}

/// One line of `qte list`.
#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub name: &'static str,
    pub reproduces: &'static str,
    pub default_config: ExperimentConfig,
}

pub fn list_experiments() -> Vec<ManifestEntry> {
    ExperimentKind::ALL
        .iter()
        .map(|&k| ManifestEntry { name: k.name(), reproduces: k.reproduces(), default_config: ExperimentConfig::defaults(k) })
        .collect()
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub exact_shots: bool,
}

impl RunOptions {
    pub fn apply(&self, mut config: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(k) = self.replicas {
            config.replicas = k;
        }
        if self.exact_shots {
            config.shots = None;
            config.observable_shots = None;
        }
        if let Some(dir) = &self.out_dir {
            config.output_path = Some(dir.to_string_lossy().into_owned());
        }
        config.validate()?;
        Ok(config)
    }
}

/// Process exit code for a failed run: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &QteError) -> i32 {
    match err {
        QteError::NumericalAbort { .. } | QteError::SingularSystem(_) => 3,
        _ => 2,
    }
}

/// Worker count from `QTE_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("QTE_THREADS").ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs `f` on a pool capped by `QTE_THREADS` (all cores when unset).
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads_from_env() {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header plus rows, written with LF endings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Files and summary produced by a run, before they are written.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<(String, Table)>,
    pub summary: Value,
    /// First numerical failure; reported after the outputs are written.
    pub abort: Option<String>,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, table) in &self.tables {
            table.write(&dir.join(name))?;
        }
        let mut text = serde_json::to_string_pretty(&self.summary)?;
        text.push('\n');
        fs::write(dir.join("summary.json"), text)?;
        Ok(())
    }
}

/// Runs the experiment and writes its files into `dir`. A numerical failure
/// is returned as an error after the partial outputs are on disk.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    let out = run(config)?;
    out.write(dir)?;
    if let Some(reason) = &out.abort {
        return Err(QteError::NumericalAbort { step: 0, reason: reason.clone() });
    }
    Ok(out)
}

/// Runs the experiment in memory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut out = match config.experiment {
        ExperimentKind::EvolveImag | ExperimentKind::EvolveReal => run_evolution(config)?,
        ExperimentKind::Qmetts => run_qmetts(config)?,
        ExperimentKind::SizeScaling => run_size_scaling(config)?,
        ExperimentKind::Illustrative1q => run_illustrative(config)?,
        ExperimentKind::ProductStateDiagnostic => run_diagnostic(config)?,
        ExperimentKind::RuntimeTable => run_runtime_table(config)?,
    };
    let summary = out.summary.as_object_mut().expect("summaries are objects");
    summary.insert("experiment".into(), json!(config.experiment.name()));
    summary.insert("seed".into(), json!(config.seed));
    summary.insert("abort".into(), json!(out.abort));
    summary.insert("config".into(), serde_json::to_value(config)?);
    Ok(out)
}

fn is_numerical(err: &QteError) -> bool {
    matches!(err, QteError::NumericalAbort { .. } | QteError::SingularSystem(_))
}

/// Outcome of one variational (or exact) evolution with its reference.
pub struct EvolutionRun {
    pub circuit: Option<ParameterizedCircuit>,
    pub trajectory: Trajectory,
    pub states: Vec<StateVector>,
    pub reference: Vec<StateVector>,
    pub ledger: Option<ResourceLedger>,
}

impl EvolutionRun {
    pub fn bures(&self) -> Result<Vec<f64>> {
        self.states.iter().zip(&self.reference).map(|(a, b)| bures_distance(a, b)).collect()
    }

    pub fn integrated_bures(&self) -> Result<f64> {
        integrated_bures(&self.trajectory.times, &self.bures()?)
    }
}

/// Evolves `|+⟩^n` under the configured system with `method`.
pub fn evolve(config: &ExperimentConfig, method: MethodChoice, replica: usize) -> Result<EvolutionRun> {
    let h = heisenberg(&config.system)?;
    let mode = config.mode();
    let n = config.system.n;
    let psi0 = StateVector::product(&vec![crate::sim::basis_state(crate::sim::Basis::X, 0); n])?;
    let evolver = ExactEvolver::new(&h)?;
    let steps = (config.t_final / config.dt).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * config.dt).collect();
    let mut reference = evolver.evolve_grid(&psi0, &grid, mode)?;
    for s in &mut reference {
        s.normalize()?;
    }
    if method == MethodChoice::Exact {
        let trajectory = Trajectory { times: grid, thetas: Vec::new(), steps: Vec::new() };
        return Ok(EvolutionRun { circuit: None, trajectory, states: reference.clone(), reference, ledger: None });
    }
    let circuit = build_ansatz(&config.ansatz)?;
    let theta0 = initial_parameter_binding(&circuit, &InitialState::PlusAll)?;
    let (trajectory, dual) = match method {
        MethodChoice::Dualqte => (dualqte_evolve(&circuit, &h, &theta0, &config.dual_config(mode, config.t_final, replica))?, true),
        _ => (varqte_evolve(&circuit, &h, &theta0, &config.varqte_config(mode, config.t_final, replica))?, false),
    };
    let states = trajectory.thetas.par_iter().map(|t| circuit.run(t)).collect::<Result<Vec<_>>>()?;
    let tag = MethodTag::new(dual, mode, config.gradient_method(mode))?;
    let ledger = Some(ResourceLedger::from_trajectory(&trajectory, tag, config.shots));
    Ok(EvolutionRun { circuit: Some(circuit), trajectory, states, reference, ledger })
}

struct ReplicaTables {
    trajectory: Table,
    resources: Table,
    error_bound: Option<Table>,
    summary: Value,
}

fn evolution_replica(config: &ExperimentConfig, replica: usize) -> Result<ReplicaTables> {
    let h = heisenberg(&config.system)?;
    let run = evolve(config, config.method, replica)?;
    let real = config.mode() == TimeMode::Real;
    let n = config.system.n;
    let mx = PauliSum::uniform_field(n, Pauli::X, 1.0 / n as f64)?;
    let mz = PauliSum::uniform_field(n, Pauli::Z, 1.0 / n as f64)?;

    let d = run.circuit.as_ref().map_or(0, |c| c.n_params());
    let mut header: Vec<String> = vec!["time".into()];
    header.extend((0..d).map(|i| format!("theta_{i}")));
    header.extend(["energy", "fidelity_to_exact", "bures_to_exact"].map(String::from));
    if real {
        header.extend(
            ["magnetization_x", "magnetization_z", "exact_magnetization_x", "exact_magnetization_z"].map(String::from),
        );
    }
    let mut trajectory = Table { header, rows: Vec::new() };
    let bures = run.bures()?;
    for (k, (state, exact)) in run.states.iter().zip(&run.reference).enumerate() {
        let mut row = vec![num(run.trajectory.times[k])];
        if let Some(theta) = run.trajectory.thetas.get(k) {
            row.extend(theta.iter().map(|v| num(*v)));
        }
        row.push(num(expectation(&h, state)?));
        row.push(num(inner_product(state, exact)?.norm_sqr()));
        row.push(num(bures[k]));
        if real {
            for (op, s) in [(&mx, state), (&mz, state), (&mx, exact), (&mz, exact)] {
                row.push(num(expectation(op, s)?));
            }
        }
        trajectory.rows.push(row);
    }

    let mut resources = Table::new(&["step", "circuits", "shots", "cumulative_N"]);
    let (mut circuits, mut measurements, mut matches) = (0, 0, None);
    if let Some(ledger) = &run.ledger {
        for (k, (c, cum)) in ledger.circuits_per_step.iter().zip(&ledger.cumulative_measurements).enumerate() {
            resources.rows.push(vec![
                k.to_string(),
                c.to_string(),
                ledger.shots_per_circuit.unwrap_or(0).to_string(),
                cum.to_string(),
            ]);
        }
        circuits = ledger.total_circuits();
        measurements = ledger.total_measurements();
        matches = Some(ledger.matches_closed_form(d as u64, h.n_measured_terms() as u64)?);
    }

    let error_bound = match (&run.circuit, real) {
        (Some(circuit), true) => {
            let kind = match config.method {
                MethodChoice::Dualqte => RateKind::DualQrte { delta_tau: config.delta_tau },
                _ => RateKind::VarQrte,
            };
            let series = error_bound_series(circuit, &h, &run.trajectory, kind, 8)?;
            let mut t = Table::new(&["time", "rate", "bound", "realized"]);
            for k in 0..series.times.len() {
                let rate = series.rates.get(k).copied().unwrap_or(f64::NAN);
                t.rows.push(vec![num(series.times[k]), num(rate), num(series.cumulative[k]), num(series.realized[k])]);
            }
            Some(t)
        }
        _ => None,
    };

    let integrated = run.integrated_bures()?;
    let final_energy = expectation(&h, run.states.last().expect("grid holds t = 0"))?;
    let exact_final_energy = expectation(&h, run.reference.last().expect("grid holds t = 0"))?;
    let runtime = runtime_estimate(config.ansatz.reps.max(1) as u32, measurements as f64, &config.timings)?;
    let summary = json!({
        "replica": replica,
        "evolution_stream": stream_id(replica, Component::Evolution),
        "integrated_bures": integrated,
        "final_energy": final_energy,
        "exact_final_energy": exact_final_energy,
        "total_circuits": circuits,
        "measurements": measurements,
        "runtime_estimate_seconds": runtime,
        "ledger_matches_closed_form": matches,
    });
    Ok(ReplicaTables { trajectory, resources, error_bound, summary })
}

fn run_evolution(config: &ExperimentConfig) -> Result<RunOutput> {
    let results: Vec<Result<ReplicaTables>> =
        (0..config.effective_replicas()).into_par_iter().map(|k| evolution_replica(config, k)).collect();
    let mut out = RunOutput::default();
    let mut replicas = Vec::new();
    let mut ib = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => {
                ib.push(t.summary["integrated_bures"].as_f64().unwrap_or(f64::NAN));
                out.tables.push((format!("trajectory_r{k}.csv"), t.trajectory));
                out.tables.push((format!("resources_r{k}.csv"), t.resources));
                if let Some(e) = t.error_bound {
                    out.tables.push((format!("error_bound_r{k}.csv"), e));
                }
                replicas.push(t.summary);
            }
            Err(e) if is_numerical(&e) => {
                out.abort.get_or_insert_with(|| format!("replica {k}: {e}"));
                replicas.push(json!({ "replica": k, "abort": e.to_string() }));
            }
            Err(e) => return Err(e),
        }
    }
    let (mean, std) = mean_stddev(&ib);
    out.summary = json!({
        "replicas": replicas,
        "mean_integrated_bures": if ib.is_empty() { None } else { Some(mean) },
        "stddev_integrated_bures": if ib.is_empty() { None } else { Some(std) },
    });
    Ok(out)
}

fn metts_evolver(config: &ExperimentConfig, replica: usize) -> MettsEvolver {
    match config.method {
        MethodChoice::Exact => MettsEvolver::Exact,
        MethodChoice::Dualqte => MettsEvolver::Dual(config.dual_config(TimeMode::Imaginary, config.dt, replica)),
        MethodChoice::Varqte => MettsEvolver::VarQte(config.varqte_config(TimeMode::Imaginary, config.dt, replica)),
    }
}

fn metts_label(e: &MettsEvolver) -> &'static str {
    match e {
        MettsEvolver::Exact => "exact",
        MettsEvolver::Dual(_) => "dualqte",
        MettsEvolver::VarQte(_) => "varqte",
    }
}

fn run_qmetts(config: &ExperimentConfig) -> Result<RunOutput> {
    let h = heisenberg(&config.system)?;
    let n = config.system.n;
    let observable = h.scaled(1.0 / n as f64);
    let mut jobs = Vec::new();
    for replica in 0..config.effective_replicas() {
        for &beta in &config.betas {
            let primary = metts_evolver(config, replica);
            let reference = config.metts_reference && config.method != MethodChoice::Exact;
            jobs.push((replica, beta, primary));
            if reference {
                jobs.push((replica, beta, MettsEvolver::Exact));
            }
        }
    }
    let results: Vec<(usize, f64, &'static str, Result<MettsResult>)> = jobs
        .into_par_iter()
        .map(|(replica, beta, evolver)| {
            let label = metts_label(&evolver);
            let mut mc = MettsConfig::new(beta, config.samples, observable.clone());
            mc.schedule = BasisSchedule::AlternatingXy;
            mc.evolver = evolver;
            mc.observable_shots = config.shot_config(config.observable_shots, replica, Component::Observable);
            mc.rng_seed = config.seed;
            mc.chain_stream = stream_id(replica, Component::Chain);
            mc.reps = config.ansatz.reps;
            (replica, beta, label, qmetts_chain(&h, &mc))
        })
        .collect();
    let gibbs: Vec<f64> =
        config.betas.par_iter().map(|&b| gibbs_expectation(&h, &observable, b)).collect::<Result<_>>()?;

    let mut out = RunOutput::default();
    let mut stats = Table::new(&["replica", "beta", "evolver", "samples", "mean", "stddev", "standard_error", "gibbs"]);
    let mut samples =
        Table::new(&["replica", "beta", "evolver", "index", "basis", "outcome", "value", "circuits", "measurements"]);
    let mut rows = Vec::new();
    for (replica, beta, label, res) in results {
        let g = gibbs[config.betas.iter().position(|b| *b == beta).expect("beta from the list")];
        let res = res?;
        if let Some(e) = &res.abort {
            out.abort.get_or_insert_with(|| format!("replica {replica}, beta {beta}, {label}: {e}"));
        }
        stats.rows.push(vec![
            replica.to_string(),
            num(beta),
            label.into(),
            res.samples.len().to_string(),
            num(res.mean),
            num(res.stddev),
            num(res.standard_error()),
            num(g),
        ]);
        for s in &res.samples {
            let outcome: String = s.outcome.iter().map(|b| char::from(b'0' + b)).collect();
            samples.rows.push(vec![
                replica.to_string(),
                num(beta),
                label.into(),
                s.index.to_string(),
                format!("{:?}", s.basis),
                outcome,
                num(s.value),
                s.circuits.to_string(),
                s.measurements.to_string(),
            ]);
        }
        rows.push(json!({
            "replica": replica, "beta": beta, "evolver": label, "mean": res.mean,
            "stddev": res.stddev, "gibbs": g, "abort": res.abort.as_ref().map(|e| e.to_string()),
        }));
    }
    out.tables.push(("qmetts.csv".into(), stats));
    out.tables.push(("qmetts_samples.csv".into(), samples));
    out.summary = json!({ "chains": rows });
    Ok(out)
}

/// Settings and outcome of one (method, size) cell of the scaling study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCell {
    pub method: MethodChoice,
    pub n: usize,
    pub d: usize,
    pub shots: u64,
    pub k0: usize,
    pub k_warm: usize,
    pub eta: f64,
    pub integrated_bures: Vec<f64>,
    pub measurements: Vec<u64>,
}

impl ScalingCell {
    pub fn mean_integrated_bures(&self) -> f64 {
        mean_stddev(&self.integrated_bures).0
    }

    pub fn mean_measurements(&self) -> f64 {
        mean_stddev(&self.measurements.iter().map(|&m| m as f64).collect::<Vec<_>>()).0
    }
}

fn scaling_config(config: &ExperimentConfig, row: &ScalingRow, method: MethodChoice, shots: u64) -> ExperimentConfig {
    let reps = (row.n as f64).log2().ceil().max(1.0) as usize;
    ExperimentConfig {
        experiment: ExperimentKind::EvolveImag,
        system: HeisenbergSpec { n: row.n, ..config.system },
        ansatz: AnsatzSpec { n_qubits: row.n, reps, ..config.ansatz },
        method,
        shots: Some(shots),
        eta: if method == MethodChoice::Dualqte { row.eta } else { config.eta },
        k0: row.k0,
        k_warm: row.k_warm,
        ..config.clone()
    }
}

/// Runs one scaling cell with its replicas. With a target I_B the shot count
/// is bracketed by doubling or halving from the row's value and then refined
/// by bisection in log-shots; the cheapest evaluated count that reaches the
/// target is returned (or the largest tried if none does).
pub fn scaling_cell(config: &ExperimentConfig, row: &ScalingRow, method: MethodChoice) -> Result<ScalingCell> {
    let eval = |shots: u64| -> Result<ScalingCell> {
        let cfg = scaling_config(config, row, method, shots);
        let runs: Vec<(f64, u64)> = (0..config.replicas)
            .into_par_iter()
            .map(|k| {
                let run = evolve(&cfg, method, k)?;
                Ok((run.integrated_bures()?, run.ledger.as_ref().map_or(0, |l| l.total_measurements())))
            })
            .collect::<Result<_>>()?;
        Ok(ScalingCell {
            method,
            n: row.n,
            d: cfg.ansatz.n_params(),
            shots,
            k0: row.k0,
            k_warm: row.k_warm,
            eta: cfg.eta,
            integrated_bures: runs.iter().map(|r| r.0).collect(),
            measurements: runs.iter().map(|r| r.1).collect(),
        })
    };
    let start = if method == MethodChoice::Dualqte { row.dual_shots } else { row.varqte_shots };
    let Some(target) = config.target_integrated_bures else {
        return eval(start);
    };
    let reached = |c: &ScalingCell| c.mean_integrated_bures() <= target;

    let first = eval(start)?;
    // (failing shots, passing cell)
    let (mut lo, mut hi) = if reached(&first) {
        let mut hi = first;
        let mut lo = None;
        for _ in 0..config.max_shot_doublings {
            if hi.shots < 2 {
                break;
            }
            let c = eval(hi.shots / 2)?;
            if reached(&c) {
                hi = c;
            } else {
                lo = Some(c.shots);
                break;
            }
        }
        match lo {
            Some(lo) => (lo, hi),
            None => return Ok(hi),
        }
    } else {
        let mut lo = first.shots;
        let mut found = None;
        for _ in 0..config.max_shot_doublings {
            let c = eval(lo * 2)?;
            if reached(&c) {
                found = Some(c);
                break;
            }
            lo = c.shots;
        }
        match found {
            Some(hi) => (lo, hi),
            None => return eval(lo),
        }
    };
    for _ in 0..config.shot_bisections {
        let mid = ((lo as f64) * (hi.shots as f64)).sqrt().round() as u64;
        if mid <= lo || mid >= hi.shots {
            break;
        }
        let c = eval(mid)?;
        if reached(&c) {
            hi = c;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn run_size_scaling(config: &ExperimentConfig) -> Result<RunOutput> {
    let jobs: Vec<(ScalingRow, MethodChoice)> = config
        .scaling
        .iter()
        .flat_map(|r| [(*r, MethodChoice::Varqte), (*r, MethodChoice::Dualqte)])
        .collect();
    let cells: Vec<ScalingCell> =
        jobs.par_iter().map(|(row, m)| scaling_cell(config, row, *m)).collect::<Result<_>>()?;

    let mut per_run = Table::new(&["method", "n", "d", "replica", "shots", "N", "I_B"]);
    let mut table = Table::new(&[
        "method", "n", "d", "shots", "K0", "K_warm", "eta", "N", "I_B_mean", "I_B_stddev", "N_bound",
    ]);
    for c in &cells {
        let h = heisenberg(&HeisenbergSpec { n: c.n, ..config.system })?;
        let e_max = energy_extremes(&h, ExtremesMode::Auto).1.abs().max(energy_extremes(&h, ExtremesMode::Auto).0.abs());
        let (ib, ib_std) = mean_stddev(&c.integrated_bures);
        let dual = c.method == MethodChoice::Dualqte;
        let bound = if dual {
            sample_bound_dual(c.d as f64, c.k_warm as f64, config.dt, config.delta_tau, e_max, ib)?
        } else {
            sample_bound_varqte(c.d as f64, e_max, config.dt, config.delta_c, ib)?
        };
        let label = if dual { "dualqte" } else { "varqte" };
        for (k, (i, m)) in c.integrated_bures.iter().zip(&c.measurements).enumerate() {
            per_run.rows.push(vec![
                label.into(),
                c.n.to_string(),
                c.d.to_string(),
                k.to_string(),
                c.shots.to_string(),
                m.to_string(),
                num(*i),
            ]);
        }
        table.rows.push(vec![
            label.into(),
            c.n.to_string(),
            c.d.to_string(),
            c.shots.to_string(),
            if dual { c.k0.to_string() } else { String::new() },
            if dual { c.k_warm.to_string() } else { String::new() },
            if dual { num(c.eta) } else { String::new() },
            num(c.mean_measurements()),
            num(ib),
            num(ib_std),
            num(bound),
        ]);
    }
    let exponent = |m: MethodChoice| -> Option<f64> {
        let sel: Vec<&ScalingCell> = cells.iter().filter(|c| c.method == m).collect();
        let d: Vec<f64> = sel.iter().map(|c| c.d as f64).collect();
        let n: Vec<f64> = sel.iter().map(|c| c.mean_measurements()).collect();
        loglog_fit(&d, &n).ok().map(|f| f.0)
    };
    let mut out = RunOutput::default();
    out.tables.push(("size_scaling.csv".into(), table));
    out.tables.push(("size_scaling_runs.csv".into(), per_run));
    out.summary = json!({
        "exponent_varqte": exponent(MethodChoice::Varqte),
        "exponent_dualqte": exponent(MethodChoice::Dualqte),
        "cells": cells,
    });
    Ok(out)
}

/// `RZ(θ)RY(θ)|0⟩` with one shared angle, written as a two-slot circuit plus
/// the map that ties the slots together.
pub fn shared_angle_qubit() -> Result<(ParameterizedCircuit, ParameterMap)> {
    let circuit = ParameterizedCircuit::new(1, vec![Gate::ry(0, 0), Gate::rz(0, 1)])?;
    Ok((circuit, ParameterMap::shared(&[vec![0, 1]], 2)?))
}

/// Loss landscape and update step of the single-qubit shared-angle model
/// with `H = Z` around a given angle.
pub struct SingleQubitModel {
    circuit: ParameterizedCircuit,
    map: ParameterMap,
    slots: Vec<f64>,
    /// Imaginary-time evolution gradient and metric of the shared angle.
    pub b: f64,
    pub g: f64,
    b_slots: crate::estimators::EvolutionGradient,
}

impl SingleQubitModel {
    pub fn new(theta: f64) -> Result<Self> {
        let (circuit, map) = shared_angle_qubit()?;
        let h = PauliSum::from_labels(&[("Z", 1.0)])?;
        let slots = map.expand(&[theta]);
        let b_slots = energy_gradient_b_imag(&circuit, &slots, &h, GradientMethod::psr(), &mut Sampler::exact())?;
        let b = map.pull_back(&b_slots.values)[0];
        let g = map.pull_back_matrix(&qgt_exact(&circuit, &slots)?.g)[(0, 0)];
        Ok(Self { circuit, map, slots, b, g, b_slots })
    }

    pub fn infidelity(&self, delta: f64) -> Result<f64> {
        let moved: Vec<f64> = self.slots.iter().zip(self.map.expand(&[delta])).map(|(a, b)| a + b).collect();
        Ok(1.0 - fidelity(&self.circuit, &self.slots, &moved, &mut Sampler::exact())?)
    }

    pub fn dual_loss(&self, delta: f64, delta_tau: f64) -> Result<f64> {
        Ok(self.infidelity(delta)? / 2.0 - delta_tau * self.b * delta)
    }

    /// Loss with the infidelity replaced by the metric norm `g·δ²`.
    pub fn metric_loss(&self, delta: f64, delta_tau: f64) -> f64 {
        self.g * delta * delta / 2.0 - delta_tau * self.b * delta
    }

    /// `θ̇ = b/g` of the QGT-based update.
    pub fn exact_rate(&self) -> f64 {
        self.b / self.g
    }

    /// `δ*/δτ` from converged gradient descent on the dual loss.
    pub fn dual_rate(&self, delta_tau: f64) -> Result<f64> {
        let grad = |x: &[f64]| -> Result<Vec<f64>> {
            let slots_delta = self.map.expand(x);
            let gs = dual_loss_gradient(
                &slots_delta,
                &self.slots,
                &self.b_slots,
                delta_tau,
                &self.circuit,
                GradientMethod::psr(),
                &mut Sampler::exact(),
            )?;
            Ok(self.map.pull_back(&gs))
        };
        let loss = |x: &[f64]| self.dual_loss(x[0], delta_tau);
        let (x, _, _) = gradient_descent(vec![0.0], 1.0 / self.g, StopRule::LossChange { tol: 1e-20, max: 2000 }, grad, loss)?;
        Ok(x[0] / delta_tau)
    }
}

fn run_illustrative(config: &ExperimentConfig) -> Result<RunOutput> {
    let model = SingleQubitModel::new(std::f64::consts::FRAC_PI_4)?;
    let dtau = config.delta_tau;
    let mut curve =
        Table::new(&["delta_theta", "dual_loss", "metric_loss", "infidelity", "metric_norm", "difference"]);
    let mut max_dev_03: f64 = 0.0;
    for k in -180i32..=180 {
        let delta = k as f64 * std::f64::consts::PI / 180.0;
        let inf = model.infidelity(delta)?;
        let dual = model.dual_loss(delta, dtau)?;
        let metric = model.metric_loss(delta, dtau);
        if delta.abs() <= 0.3 + 1e-12 {
            max_dev_03 = max_dev_03.max((dual - metric).abs());
        }
        curve.rows.push(vec![
            num(delta),
            num(dual),
            num(metric),
            num(inf),
            num(model.g * delta * delta),
            num(dual - metric),
        ]);
    }
    let mut update = Table::new(&["delta_tau", "theta_dot_dual", "theta_dot_exact", "error"]);
    let (mut taus, mut errs) = (Vec::new(), Vec::new());
    for &dt in &config.delta_taus {
        let rate = model.dual_rate(dt)?;
        let err = (rate - model.exact_rate()).abs();
        update.rows.push(vec![num(dt), num(rate), num(model.exact_rate()), num(err)]);
        taus.push(dt);
        errs.push(err);
    }
    let slope = loglog_fit(&taus, &errs).ok().map(|f| f.0);
    let mut out = RunOutput::default();
    out.tables.push(("loss_curve.csv".into(), curve));
    out.tables.push(("update_error.csv".into(), update));
    out.summary = json!({
        "b": model.b,
        "g": model.g,
        "loss_difference_at_zero": model.dual_loss(0.0, dtau)? - model.metric_loss(0.0, dtau),
        "max_loss_difference_within_0_3": max_dev_03,
        "update_error_slope": slope,
    });
    Ok(out)
}

fn run_diagnostic(config: &ExperimentConfig) -> Result<RunOutput> {
    let dc = DiagnosticConfig {
        sizes: config.diagnostic_sizes.clone(),
        shots: config.shots.expect("validated"),
        delta_c: config.delta_c,
        repetitions: config.diagnostic_repetitions,
        dt: config.dt,
        seed: config.seed,
    };
    let samples = product_state_diagnostic(&dc)?;
    let mut t = Table::new(&[
        "n", "d", "repetition", "theta_dot_norm", "theta_dot_exact_norm", "delta_theta_dot", "delta_g", "delta_b", "eps_s",
    ]);
    for s in &samples {
        t.rows.push(vec![
            s.n.to_string(),
            s.d.to_string(),
            s.repetition.to_string(),
            num(s.theta_dot_norm),
            num(s.theta_dot_exact_norm),
            num(s.delta_theta_dot),
            num(s.delta_g),
            num(s.delta_b),
            num(s.eps_s),
        ]);
    }
    let eps: Vec<f64> = samples.iter().map(|s| s.eps_s).collect();
    let dth: Vec<f64> = samples.iter().map(|s| s.delta_theta_dot).collect();
    let exponent = |f: &dyn Fn(&crate::analysis::DiagnosticSample) -> f64| -> Option<f64> {
        let (mut d, mut y) = (Vec::new(), Vec::new());
        for &n in &config.diagnostic_sizes {
            let vals: Vec<f64> = samples.iter().filter(|s| s.n == n).map(f).collect();
            d.push(samples.iter().find(|s| s.n == n)?.d as f64);
            y.push(mean_stddev(&vals).0);
        }
        loglog_fit(&d, &y).ok().map(|p| p.0)
    };
    let mut out = RunOutput::default();
    out.tables.push(("diagnostic.csv".into(), t));
    out.summary = json!({
        "correlation_eps_s_delta_theta_dot": correlation(&eps, &dth),
        "exponent_theta_dot_norm": exponent(&|s| s.theta_dot_norm),
        "exponent_delta_theta_dot": exponent(&|s| s.delta_theta_dot),
        "exponent_delta_g": exponent(&|s| s.delta_g),
        "exponent_delta_b": exponent(&|s| s.delta_b),
    });
    Ok(out)
}

/// Rows `d, t_shot, N and runtime per method` from the configured power laws.
pub fn runtime_table(config: &ExperimentConfig) -> Result<Table> {
    let r = config.ansatz.reps as u32;
    let mut t = Table::new(&[
        "d",
        "t_shot_ns",
        "measurements_varqte",
        "measurements_dualqte",
        "runtime_varqte_s",
        "runtime_dualqte_s",
    ]);
    for &d in &config.runtime_d {
        let nv = config.runtime_fits.varqte.eval(d as f64);
        let nd = config.runtime_fits.dualqte.eval(d as f64);
        t.rows.push(vec![
            d.to_string(),
            num(config.timings.shot_ns(r)),
            num(nv),
            num(nd),
            num(runtime_estimate(r, nv, &config.timings)?),
            num(runtime_estimate(r, nd, &config.timings)?),
        ]);
    }
    Ok(t)
}

fn run_runtime_table(config: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    out.tables.push(("runtime.csv".into(), runtime_table(config)?));
    out.summary = json!({ "t_shot_ns": config.timings.shot_ns(config.ansatz.reps as u32) });
    Ok(out)
}

/// Summary entries keyed by name, for callers that only need numbers.
pub fn summary_number(out: &RunOutput, key: &str) -> Option<f64> {
    out.summary.get(key).and_then(Value::as_f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::defaults(kind);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_json_str(&cfg.to_json_string()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json_str(r#"{"experiment": "evolve_imag", "system": {"n": 4}, "ansatz": {"n_qubits": 4}}"#)
            .unwrap();
        assert_eq!(cfg.system.n, 4);
        assert_eq!(cfg.system.j, 0.25);
        assert_eq!(cfg.ansatz.reps, 3);
        assert_eq!((cfg.k0, cfg.k_warm, cfg.eta, cfg.delta_tau, cfg.dt), (100, 10, 0.1, 0.01, 0.01));
    }

    #[test]
    fn evolve_imag_defaults_are_the_reference_settings() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::EvolveImag);
        assert_eq!(cfg.system, heisenberg_spec(12, Topology::Circle));
        assert_eq!(cfg.ansatz, AnsatzSpec::efficient_su2(12, 3));
        assert_eq!((cfg.dt, cfg.delta_tau, cfg.eta, cfg.k0, cfg.k_warm), (0.01, 0.01, 0.1, 100, 10));
        assert_eq!(cfg.replicas, 5);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for text in [
            r#"{"experiment": "evolve_imag", "bogus": 1}"#,
            r#"{"experiment": "evolve_imag", "system": {"n": 4, "spin": 2}}"#,
            r#"{"experiment": "nope"}"#,
            r#"{"system": {"n": 4}}"#,
            "not json",
            r#"{"experiment": "evolve_imag", "shots": 0}"#,
        ] {
            let err = ExperimentConfig::from_json_str(text).unwrap_err();
            assert_eq!(exit_code(&err), 2, "{text}: {err}");
        }
    }

    #[test]
    fn stream_ids_do_not_collide() {
        let mut seen = std::collections::HashSet::new();
        for r in 0..8 {
            for c in [Component::Evolution, Component::Observable, Component::Chain, Component::Diagnostics] {
                assert!(seen.insert(stream_id(r, c)));
            }
        }
        assert_eq!(stream_id(2, Component::Chain), 34);
    }

    #[test]
    fn manifest_lists_every_experiment() {
        let m = list_experiments();
        assert_eq!(m.len(), 7);
        let names: Vec<&str> = m.iter().map(|e| e.name).collect();
        for n in ["evolve_imag", "illustrative_1q", "product_state_diagnostic", "runtime_table"] {
            assert!(names.contains(&n));
        }
    }

    #[test]
    fn runtime_table_uses_shot_time() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::RuntimeTable);
        let t = runtime_table(&cfg).unwrap();
        assert_eq!(t.rows.len(), cfg.runtime_d.len());
        assert_eq!(t.rows[0][1].parse::<f64>().unwrap(), 5854.0);
    }

    #[test]
    fn small_imaginary_run_is_reproducible() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::EvolveImag);
        cfg.system.n = 2;
        cfg.ansatz = AnsatzSpec::efficient_su2(2, 1);
        cfg.t_final = 0.1;
        cfg.shots = Some(100);
        cfg.replicas = 2;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.tables, b.tables);
        let tr = a.table("trajectory_r0.csv").unwrap();
        assert_eq!(tr.rows.len(), 11);
        assert_eq!(tr.header.len(), 1 + 8 + 3);
        assert_ne!(a.table("trajectory_r0.csv"), a.table("trajectory_r1.csv"));
        let res = a.table("resources_r0.csv").unwrap();
        assert_eq!(res.rows.len(), 10);
        assert!(a.summary["replicas"][0]["ledger_matches_closed_form"].as_bool().unwrap());
        let back: ExperimentConfig = serde_json::from_value(a.summary["config"].clone()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn exact_method_has_zero_distance() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::EvolveReal);
        cfg.method = MethodChoice::Exact;
        cfg.t_final = 0.2;
        let out = run(&cfg).unwrap();
        assert_eq!(out.summary["mean_integrated_bures"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn single_qubit_model_matches_metric_at_zero() {
        let m = SingleQubitModel::new(std::f64::consts::FRAC_PI_4).unwrap();
        assert_eq!(m.dual_loss(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(m.metric_loss(0.0, 0.5), 0.0);
        let err = |dt: f64| (m.dual_rate(dt).unwrap() - m.exact_rate()).abs();
        assert!(err(1e-3) < err(1e-2));
    }
}
