//! QGT-free variational time evolution.
//!
//! Each timestep minimizes `L(δθ) = (1 − F(θ, θ+δθ))/2 − δτ·δθᵀb(θ)` by
//! fixed-step gradient descent and then advances `θ ← θ + Δt·δθ/δτ`. The
//! minimizer approximates `δτ·θ̇` without ever forming the QGT.

use serde::{Deserialize, Serialize};

use crate::estimators::{fidelity_gradient, real_gradient_scale, EvolutionGradient, GradientMethod, Sampler, ShotConfig};
use crate::hamiltonian::{PauliSum, TimeMode};
use crate::sim::{dot, ParameterizedCircuit};
use crate::varqte::{check_finite, evolution_gradient, n_steps, validate_grid, StepRecord, Trajectory};
use crate::{QteError, Result};

/// Settings of the dual evolver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub delta_tau: f64,
    pub eta: f64,
    /// Iterations in the first (zero-initialized) timestep.
    pub k0: usize,
    /// Iterations in warm-started timesteps.
    pub k_warm: usize,
    pub warm_start: bool,
    pub dt: f64,
    pub t_final: f64,
    pub shots: ShotConfig,
    pub mode: TimeMode,
    pub gradient_method: GradientMethod,
    /// Exact-mode stopping rule: stop once the loss decrease falls below
    /// this value (iteration counts then ignore `k0`/`k_warm`).
    pub stop_tolerance: Option<f64>,
    /// Upper bound on iterations when `stop_tolerance` is set.
    pub max_iterations: usize,
}

impl DualConfig {
    /// δτ = 0.01, η = 0.1, 100 first-step and 10 warm-started iterations.
    pub fn imaginary(dt: f64, t_final: f64) -> Self {
        Self {
            delta_tau: 0.01,
            eta: 0.1,
            k0: 100,
            k_warm: 10,
            warm_start: true,
            dt,
            t_final,
            shots: ShotConfig::exact(),
            mode: TimeMode::Imaginary,
            gradient_method: GradientMethod::psr(),
            stop_tolerance: None,
            max_iterations: 100_000,
        }
    }

    pub fn real(dt: f64, t_final: f64) -> Self {
        Self { mode: TimeMode::Real, gradient_method: GradientMethod::DerivativeState, ..Self::imaginary(dt, t_final) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_tau > 0.0) {
            return Err(QteError::Config(format!("delta_tau must be positive, got {}", self.delta_tau)));
        }
        if !(self.eta > 0.0) {
            return Err(QteError::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.k_warm < 1 || self.k0 < self.k_warm {
            return Err(QteError::Config(format!(
                "iteration counts need k0 >= k_warm >= 1, got k0 = {}, k_warm = {}",
                self.k0, self.k_warm
            )));
        }
        if let Some(tol) = self.stop_tolerance {
            if !(tol > 0.0) || self.max_iterations == 0 {
                return Err(QteError::Config("stopping rule needs a positive tolerance and iteration cap".into()));
            }
        }
        validate_grid(self.dt, self.t_final)?;
        if self.mode == TimeMode::Real && self.gradient_method != GradientMethod::DerivativeState {
            return Err(QteError::IncompatibleMethod(
                "real-time gradients are only available from derivative states (LCU)".into(),
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        n_steps(self.dt, self.t_final)
    }
}

/// Result of one timestep's optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSolution {
    pub delta: Vec<f64>,
    /// Loss after every iteration.
    pub loss_trace: Vec<f64>,
    /// ‖∇L‖₂ at the start of every iteration.
    pub gradient_norm_trace: Vec<f64>,
    /// ‖∇F‖₂ of the fidelity gradient in every iteration.
    pub fidelity_gradient_trace: Vec<f64>,
    pub circuits_used: u64,
    pub measurements_used: u64,
}

impl StepSolution {
    pub fn iterations(&self) -> usize {
        self.loss_trace.len()
    }
}

fn shifted(theta: &[f64], delta: &[f64]) -> Vec<f64> {
    theta.iter().zip(delta).map(|(a, b)| a + b).collect()
}

fn linear_term(delta: &[f64], b: &[f64]) -> f64 {
    delta.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(1 − F(θ, θ+δθ))/2 − δτ·δθᵀb` with the fidelity under the shot model.
pub fn dual_loss(
    delta: &[f64],
    theta: &[f64],
    b: &EvolutionGradient,
    delta_tau: f64,
    circuit: &ParameterizedCircuit,
    sampler: &mut Sampler,
) -> Result<f64> {
    check_len(circuit, b)?;
    let f = crate::estimators::fidelity(circuit, theta, &shifted(theta, delta), sampler)?;
    Ok((1.0 - f) / 2.0 - delta_tau * linear_term(delta, &b.values))
}

/// Exact loss, used for diagnostics only (not charged).
fn exact_loss(delta: &[f64], theta: &[f64], b: &[f64], delta_tau: f64, circuit: &ParameterizedCircuit) -> Result<f64> {
    let a = circuit.run(theta)?;
    let c = circuit.run(&shifted(theta, delta))?;
    let f = dot(a.amplitudes(), c.amplitudes()).norm_sqr();
    Ok((1.0 - f) / 2.0 - delta_tau * linear_term(delta, b))
}

/// `∇L = −∇F/2 − δτ·b`, with the fidelity gradient from `method`.
pub fn dual_loss_gradient(
    delta: &[f64],
    theta: &[f64],
    b: &EvolutionGradient,
    delta_tau: f64,
    circuit: &ParameterizedCircuit,
    method: GradientMethod,
    sampler: &mut Sampler,
) -> Result<Vec<f64>> {
    check_len(circuit, b)?;
    let gf = fidelity_gradient(circuit, theta, delta, method, sampler)?;
    Ok(gf.iter().zip(&b.values).map(|(g, bi)| -g / 2.0 - delta_tau * bi).collect())
}

fn check_len(circuit: &ParameterizedCircuit, b: &EvolutionGradient) -> Result<()> {
    if b.values.len() != circuit.n_params() {
        return Err(QteError::ParameterLength { expected: circuit.n_params(), got: b.values.len() });
    }
    Ok(())
}

/// Outcome of [`check_delta_tau_feasibility`].
#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    /// Components with `δτ > 1/(4|b_i|)`.
    pub violations: Vec<usize>,
    /// Largest δτ satisfying every component's condition.
    pub max_delta_tau: f64,
}

impl Feasibility {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Necessary condition `δτ ≤ 1/(4|b_i|)`: the fidelity gradient is bounded
/// by 1/2, so larger perturbations push the stationary point out of reach.
pub fn check_delta_tau_feasibility(b: &[f64], delta_tau: f64) -> Feasibility {
    let limit = |bi: f64| if bi == 0.0 { f64::INFINITY } else { 1.0 / (4.0 * bi.abs()) };
    let violations = b.iter().enumerate().filter(|(_, &bi)| delta_tau > limit(bi)).map(|(i, _)| i).collect();
    let max_delta_tau = b.iter().map(|&bi| limit(bi)).fold(f64::INFINITY, f64::min);
    Feasibility { violations, max_delta_tau }
}

/// When [`gradient_descent`] stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    Fixed(usize),
    /// Stop when `|L_k − L_{k+1}| < tol`, after at most `max` iterations.
    LossChange { tol: f64, max: usize },
}

/// Fixed-step gradient descent `x ← x − η ∇f(x)`. `grad` returns the
/// gradient; `loss` is evaluated after every update for the trace.
pub fn gradient_descent(
    x0: Vec<f64>,
    eta: f64,
    stop: StopRule,
    mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut x = x0;
    let mut losses = Vec::new();
    let mut norms = Vec::new();
    let (max, tol) = match stop {
        StopRule::Fixed(k) => (k, None),
        StopRule::LossChange { tol, max } => (max, Some(tol)),
    };
    let mut previous = if tol.is_some() { Some(loss(&x)?) } else { None };
    for k in 0..max {
        let g = grad(&x)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(QteError::NumericalAbort { step: k, reason: "non-finite loss gradient".into() });
        }
        norms.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= eta * gi);
        let l = loss(&x)?;
        if !l.is_finite() {
            return Err(QteError::NumericalAbort { step: k, reason: "non-finite loss".into() });
        }
        losses.push(l);
        if let (Some(tol), Some(prev)) = (tol, previous) {
            if (prev - l).abs() < tol {
                break;
            }
        }
        previous = Some(l);
    }
    Ok((x, losses, norms))
}

/// One timestep: `iterations` gradient-descent updates from `init` (zero
/// when `None`), or the config's stopping rule when set.
pub fn solve_step(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    b: &EvolutionGradient,
    config: &DualConfig,
    init: Option<&[f64]>,
    iterations: usize,
    sampler: &mut Sampler,
) -> Result<StepSolution> {
    check_len(circuit, b)?;
    let d = circuit.n_params();
    let x0 = match init {
        Some(v) => {
            circuit.check_params(v)?;
            v.to_vec()
        }
        None => vec![0.0; d],
    };
    let stop = match config.stop_tolerance {
        Some(tol) => StopRule::LossChange { tol, max: config.max_iterations },
        None => StopRule::Fixed(iterations),
    };
    let (c0, m0) = (sampler.circuits(), sampler.measurements());
    let method = config.gradient_method;
    let dtau = config.delta_tau;
    let mut fidelity_gradient_trace = Vec::new();
    let (delta, loss_trace, gradient_norm_trace) = gradient_descent(
        x0,
        config.eta,
        stop,
        |x| {
            let gf = fidelity_gradient(circuit, theta, x, method, sampler)?;
            fidelity_gradient_trace.push(gf.iter().map(|v| v * v).sum::<f64>().sqrt());
            Ok(gf.iter().zip(&b.values).map(|(g, bi)| -g / 2.0 - dtau * bi).collect())
        },
        |x| exact_loss(x, theta, &b.values, dtau, circuit),
    )?;
    Ok(StepSolution {
        delta,
        loss_trace,
        gradient_norm_trace,
        fidelity_gradient_trace,
        circuits_used: sampler.circuits() - c0,
        measurements_used: sampler.measurements() - m0,
    })
}

/// Runs `round(T/Δt)` steps of `θ ← θ + Δt·δθ/δτ`, warm-starting each
/// optimization from the previous `δθ` when enabled.
pub fn dualqte_evolve(
    circuit: &ParameterizedCircuit,
    h: &PauliSum,
    theta0: &[f64],
    config: &DualConfig,
) -> Result<Trajectory> {
    config.validate()?;
    circuit.check_params(theta0)?;
    let mut sampler = config.shots.sampler();
    let real_scale = if config.mode == TimeMode::Real && !sampler.is_exact() { real_gradient_scale(h) } else { 1.0 };
    let mut traj = Trajectory::start(theta0);
    let mut theta = theta0.to_vec();
    let mut previous: Option<Vec<f64>> = None;
    for step in 0..config.n_steps() {
        let (c0, m0) = (sampler.circuits(), sampler.measurements());
        let b = evolution_gradient(circuit, &theta, h, config.mode, config.gradient_method, real_scale, &mut sampler)?;
        check_finite(step, "evolution gradient", &b.values)?;
        let init = if config.warm_start { previous.as_deref() } else { None };
        let k = if init.is_some() { config.k_warm } else { config.k0 };
        let sol = solve_step(circuit, &theta, &b, config, init, k, &mut sampler).map_err(|e| match e {
            QteError::NumericalAbort { reason, .. } => QteError::NumericalAbort { step, reason },
            other => other,
        })?;
        let theta_dot: Vec<f64> = sol.delta.iter().map(|x| x / config.delta_tau).collect();
        check_finite(step, "parameter update", &theta_dot)?;
        theta.iter_mut().zip(&theta_dot).for_each(|(t, v)| *t += config.dt * v);
        let record = StepRecord {
            iterations: sol.iterations(),
            circuits: sampler.circuits() - c0,
            measurements: sampler.measurements() - m0,
            b_norm: b.norm(),
            losses: sol.loss_trace,
            gradient_norms: sol.gradient_norm_trace,
            fidelity_gradient_norms: sol.fidelity_gradient_trace,
            theta_dot,
        };
        previous = Some(sol.delta);
        traj.push(config.dt, theta.clone(), record);
    }
    Ok(traj)
}
