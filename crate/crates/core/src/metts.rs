//! Quantum minimally entangled typical thermal states (QMETTS).
//!
//! A Markov chain over product states: each is evolved in imaginary time to
//! β/2, the observable is measured, and the evolved state is collapsed onto a
//! fresh product state in the next scheduled basis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dualqte::{dualqte_evolve, DualConfig};
use crate::estimators::{energy_from_readout, rotate_to_basis, ShotConfig};
use crate::hamiltonian::{expectation, ExactEvolver, Pauli, PauliSum, TimeMode};
use crate::sim::{
    basis_state, build_ansatz, initial_parameter_binding, AnsatzSpec, Basis, InitialState, ParameterizedCircuit,
    RotationPair, StateVector,
};
use crate::varqte::{varqte_evolve, EvolutionConfig, Trajectory};
use crate::{QteError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "basis")]
pub enum BasisSchedule {
    /// X for even sample indices, Y for odd ones.
    AlternatingXy,
    Fixed(Basis),
}

impl BasisSchedule {
    pub fn basis(&self, m: usize) -> Basis {
        match self {
            BasisSchedule::AlternatingXy if m.is_multiple_of(2) => Basis::X,
            BasisSchedule::AlternatingXy => Basis::Y,
            BasisSchedule::Fixed(b) => *b,
        }
    }
}

/// Imaginary-time evolver used for every chain sample. The variational
/// templates supply step size, shots and optimizer settings; their final
/// time is replaced by β/2.
#[derive(Clone, Debug, PartialEq)]
pub enum MettsEvolver {
    Exact,
    Dual(DualConfig),
    VarQte(EvolutionConfig),
}

#[derive(Clone, Debug)]
pub struct MettsConfig {
    pub beta: f64,
    pub samples: usize,
    pub schedule: BasisSchedule,
    pub observable: PauliSum,
    pub evolver: MettsEvolver,
    /// Readout shots per measurement setting of the observable.
    pub observable_shots: ShotConfig,
    pub rng_seed: u64,
    /// RNG stream for the basis collapses.
    pub chain_stream: u64,
    /// Samples discarded from the statistics (they are still generated).
    pub burn_in: usize,
    /// Repetitions of the QMETTS ansatz.
    pub reps: usize,
}

impl MettsConfig {
    /// Exact evolver, alternating XY schedule, 1024 readout shots, r = 2.
    pub fn new(beta: f64, samples: usize, observable: PauliSum) -> Self {
        Self {
            beta,
            samples,
            schedule: BasisSchedule::AlternatingXy,
            observable,
            evolver: MettsEvolver::Exact,
            observable_shots: ShotConfig::sampled(1024, 0, 1),
            rng_seed: 0,
            chain_stream: 2,
            burn_in: 0,
            reps: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(QteError::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.samples == 0 {
            return Err(QteError::Config("need at least one chain sample".into()));
        }
        if self.burn_in >= self.samples {
            return Err(QteError::Config("burn-in must leave at least one sample".into()));
        }
        if let MettsEvolver::Dual(_) | MettsEvolver::VarQte(_) = self.evolver {
            if self.reps == 0 {
                return Err(QteError::Config("variational evolvers need reps >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MettsSample {
    pub index: usize,
    pub basis: Basis,
    /// Product-state bits, qubit 0 first.
    pub outcome: Vec<u8>,
    pub value: f64,
    pub evolution_steps: usize,
    pub circuits: u64,
    pub measurements: u64,
}

#[derive(Debug)]
pub struct MettsResult {
    pub samples: Vec<MettsSample>,
    pub mean: f64,
    pub stddev: f64,
    /// Set when an evolver failure ended the chain early.
    pub abort: Option<QteError>,
}

impl MettsResult {
    pub fn standard_error(&self) -> f64 {
        self.stddev / (self.samples.len() as f64).sqrt()
    }
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Projectively measures every qubit of `psi` in `basis` (one Born-rule draw).
pub fn collapse_to_product(psi: &StateVector, basis: Basis, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = psi.n_qubits();
    let mut amps = psi.amplitudes().to_vec();
    let letter = match basis {
        Basis::X => Pauli::X,
        Basis::Y => Pauli::Y,
        Basis::Z => Pauli::Z,
    };
    rotate_to_basis(&mut amps, &vec![letter; n]);
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let u = rng.random::<f64>() * norm;
    let mut acc = 0.0;
    let mut idx = amps.len() - 1;
    for (i, a) in amps.iter().enumerate() {
        acc += a.norm_sqr();
        if u < acc {
            idx = i;
            break;
        }
    }
    (0..n).map(|q| ((idx >> q) & 1) as u8).collect()
}

/// `⟨H⟩/n` for a state.
pub fn energy_per_site(h: &PauliSum, psi: &StateVector) -> Result<f64> {
    Ok(expectation(h, psi)? / h.n_qubits() as f64)
}

/// Circuit used for product states in `basis`: X (and Z) need RY–RZ layers,
/// Y needs RX–RZ layers.
fn metts_circuit(n: usize, reps: usize, basis: Basis) -> Result<ParameterizedCircuit> {
    let rotations = if basis == Basis::Y { RotationPair::Xz } else { RotationPair::Yz };
    build_ansatz(&AnsatzSpec::efficient_su2(n, reps).with_rotations(rotations))
}

/// Step size that divides `t` exactly and does not exceed `dt`.
fn fitted_step(dt: f64, t: f64) -> f64 {
    let k = (t / dt).ceil().max(1.0);
    t / k
}

struct Evolved {
    state: StateVector,
    steps: usize,
    circuits: u64,
    measurements: u64,
}

fn trajectory_state(circuit: &ParameterizedCircuit, traj: &Trajectory) -> Result<Evolved> {
    Ok(Evolved {
        state: circuit.run(traj.final_theta())?,
        steps: traj.steps.len(),
        circuits: traj.total_circuits(),
        measurements: traj.total_measurements(),
    })
}

/// Distinct evolver stream for each chain sample.
fn sample_shots(base: ShotConfig, m: usize) -> ShotConfig {
    ShotConfig { stream_id: base.stream_id.wrapping_add((m as u64 + 1) << 32), ..base }
}

/// Runs the chain. Evolver failures stop the chain and are reported in
/// [`MettsResult::abort`] alongside the samples collected so far.
pub fn qmetts_chain(h: &PauliSum, config: &MettsConfig) -> Result<MettsResult> {
    config.validate()?;
    let n = h.n_qubits();
    if config.observable.n_qubits() != n {
        return Err(QteError::DimensionMismatch { expected: n, got: config.observable.n_qubits() });
    }
    let exact = match config.evolver {
        MettsEvolver::Exact => Some(ExactEvolver::new(h)?),
        _ => None,
    };
    let circuits: Vec<(Basis, ParameterizedCircuit)> = match config.evolver {
        MettsEvolver::Exact => Vec::new(),
        _ => [Basis::X, Basis::Y, Basis::Z]
            .into_iter()
            .map(|b| metts_circuit(n, config.reps, b).map(|c| (b, c)))
            .collect::<Result<_>>()?,
    };
    let t = config.beta / 2.0;
    let mut chain_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    chain_rng.set_stream(config.chain_stream);
    let mut readout = config.observable_shots.sampler();

    let mut samples = Vec::with_capacity(config.samples);
    let mut outcome = vec![0u8; n];
    let mut abort = None;
    for m in 0..config.samples {
        let basis = config.schedule.basis(m);
        let evolved = (|| -> Result<Evolved> {
            match &config.evolver {
                MettsEvolver::Exact => {
                    let factors: Vec<_> = outcome.iter().map(|&b| basis_state(basis, b)).collect();
                    let psi0 = StateVector::product(&factors)?;
                    let mut state = exact.as_ref().expect("exact evolver").evolve(&psi0, t, TimeMode::Imaginary)?;
                    state.normalize()?;
                    Ok(Evolved { state, steps: 0, circuits: 0, measurements: 0 })
                }
                MettsEvolver::Dual(template) => {
                    let circuit = &circuits.iter().find(|(b, _)| *b == basis).expect("circuit per basis").1;
                    let theta0 = initial_parameter_binding(circuit, &InitialState::Product { basis, outcome: outcome.clone() })?;
                    let cfg = DualConfig {
                        dt: fitted_step(template.dt, t),
                        t_final: t,
                        mode: TimeMode::Imaginary,
                        shots: sample_shots(template.shots, m),
                        ..template.clone()
                    };
                    trajectory_state(circuit, &dualqte_evolve(circuit, h, &theta0, &cfg)?)
                }
                MettsEvolver::VarQte(template) => {
                    let circuit = &circuits.iter().find(|(b, _)| *b == basis).expect("circuit per basis").1;
                    let theta0 = initial_parameter_binding(circuit, &InitialState::Product { basis, outcome: outcome.clone() })?;
                    let cfg = EvolutionConfig {
                        dt: fitted_step(template.dt, t),
                        t_final: t,
                        mode: TimeMode::Imaginary,
                        shots: sample_shots(template.shots, m),
                        ..template.clone()
                    };
                    trajectory_state(circuit, &varqte_evolve(circuit, h, &theta0, &cfg)?)
                }
            }
        })();
        let evolved = match evolved {
            Ok(e) => e,
            Err(e @ (QteError::NumericalAbort { .. } | QteError::SingularSystem(_))) => {
                abort = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        let value = match readout.shots() {
            None => expectation(&config.observable, &evolved.state)?,
            Some(shots) => energy_from_readout(&config.observable, &evolved.state, shots, &mut readout)?,
        };
        if !value.is_finite() {
            abort = Some(QteError::NumericalAbort { step: m, reason: "non-finite observable estimate".into() });
            break;
        }
        samples.push(MettsSample {
            index: m,
            basis,
            outcome: outcome.clone(),
            value,
            evolution_steps: evolved.steps,
            circuits: evolved.circuits,
            measurements: evolved.measurements,
        });
        outcome = collapse_to_product(&evolved.state, config.schedule.basis(m + 1), &mut chain_rng);
    }
    let kept: Vec<f64> = samples.iter().skip(config.burn_in).map(|s| s.value).collect();
    let (mean, stddev) = mean_stddev(&kept);
    let samples = samples.into_iter().skip(config.burn_in).collect();
    Ok(MettsResult { samples, mean, stddev, abort })
}
