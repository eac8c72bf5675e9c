//! Distances, error bounds, resource accounting and diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{
    energy_gradient_b_imag, evolution_gradient_b_real, qgt_exact, qgt_psr, CostTag, GradientMethod, QgtMatrix,
    Sampler, ShotConfig,
};
use crate::hamiltonian::{variance, ExactEvolver, Pauli, PauliSum, TimeMode};
use crate::sim::{inner_product, ParameterizedCircuit, StateVector};
use crate::varqte::{solve_update, RegularizationPolicy, Trajectory};
use crate::{QteError, Result};

const RATE_TOL: f64 = 1e-9;
/// Bures distances below this are roundoff: an overlap error of 1e-16 already
/// gives √(2·1e-16) ≈ 1.4e-8.
pub const BURES_FLOOR: f64 = 1e-7;

/// `√(2(1 − |⟨ψ|φ⟩|))`, in `[0, √2]`.
pub fn bures_distance(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    let overlap = inner_product(psi, phi)?.norm().min(1.0);
    Ok((2.0 * (1.0 - overlap)).max(0.0).sqrt())
}

/// Exact evolution of the trajectory's initial state on its time grid.
pub fn exact_reference(
    h: &PauliSum,
    circuit: &ParameterizedCircuit,
    traj: &Trajectory,
    mode: TimeMode,
) -> Result<Vec<StateVector>> {
    let psi0 = circuit.run(&traj.thetas[0])?;
    let evolver = ExactEvolver::new(h)?;
    let mut states = evolver.evolve_grid(&psi0, &traj.times, mode)?;
    for s in &mut states {
        s.normalize()?;
    }
    Ok(states)
}

/// Bures distance between the variational and reference states at every grid time.
pub fn bures_series(circuit: &ParameterizedCircuit, traj: &Trajectory, reference: &[StateVector]) -> Result<Vec<f64>> {
    if reference.len() != traj.thetas.len() {
        return Err(QteError::DimensionMismatch { expected: traj.thetas.len(), got: reference.len() });
    }
    traj.thetas
        .par_iter()
        .zip(reference)
        .map(|(theta, r)| bures_distance(&circuit.run(theta)?, r))
        .collect()
}

/// Time average `(1/T)∫D_B dt` by the trapezoid rule. A single grid point
/// (T = 0) returns that point's distance.
pub fn integrated_bures(times: &[f64], distances: &[f64]) -> Result<f64> {
    if times.len() != distances.len() || times.is_empty() {
        return Err(QteError::DimensionMismatch { expected: times.len(), got: distances.len() });
    }
    let span = times[times.len() - 1] - times[0];
    if times.len() == 1 || span == 0.0 {
        return Ok(distances[0]);
    }
    let area: f64 = times
        .windows(2)
        .zip(distances.windows(2))
        .map(|(t, d)| (t[1] - t[0]) * (d[0] + d[1]) / 2.0)
        .sum();
    Ok(area / span)
}

/// `I_B` of a trajectory against its exact reference.
pub fn trajectory_integrated_bures(
    circuit: &ParameterizedCircuit,
    traj: &Trajectory,
    reference: &[StateVector],
) -> Result<f64> {
    integrated_bures(&traj.times, &bures_series(circuit, traj, reference)?)
}

/// `Var(H) + θ̇ᵀgθ̇ − 2θ̇ᵀb^R`, the squared norm of the real-time residual
/// `Σθ̇_k|∂_kφ⟩ + iH|φ⟩` projected off the state. Roundoff negatives above
/// −1e-9 clamp to 0.
pub fn varqrte_error_rate(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    theta_dot: &[f64],
    h: &PauliSum,
) -> Result<f64> {
    circuit.check_params(theta)?;
    circuit.check_params(theta_dot)?;
    let var = variance(h, &circuit.run(theta)?)?;
    let g = qgt_exact(circuit, theta)?;
    let b = evolution_gradient_b_real(circuit, theta, h, &mut Sampler::exact())?;
    let v = nalgebra::DVector::from_column_slice(theta_dot);
    let quad = (v.transpose() * &g.g * &v)[(0, 0)];
    let lin: f64 = theta_dot.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let rate = var + quad - 2.0 * lin;
    if rate < -RATE_TOL {
        return Err(QteError::NumericalAbort { step: 0, reason: format!("negative error rate {rate}") });
    }
    Ok(rate.max(0.0))
}

/// `Var(H) + 2L(δθ)/δτ²` from the accepted loss value. Carries an O(δτ)
/// bias relative to [`varqrte_error_rate`] and may dip slightly below zero.
pub fn dual_error_rate(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    delta_tau: f64,
    h: &PauliSum,
    loss: f64,
) -> Result<f64> {
    if !(delta_tau > 0.0) {
        return Err(QteError::InvalidArgument(format!("delta_tau must be positive, got {delta_tau}")));
    }
    Ok(variance(h, &circuit.run(theta)?)? + 2.0 * loss / (delta_tau * delta_tau))
}

/// Cumulative left-endpoint integral: entry k is `Σ_{j<k} rate_j·Δt`, so
/// the output has one more entry than `rates`.
pub fn integrate_error_bound(rates: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(QteError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(rates.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for (k, &r) in rates.iter().enumerate() {
        if r < -RATE_TOL || !r.is_finite() {
            return Err(QteError::InvalidArgument(format!("rate {r} at step {k} is negative or non-finite")));
        }
        acc += r.max(0.0) * dt;
        out.push(acc);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RateKind {
    /// From the recorded θ̇ with exact g and b.
    VarQrte,
    /// From the recorded final loss of each step.
    DualQrte { delta_tau: f64 },
}

/// Real-time error budget along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundSeries {
    pub times: Vec<f64>,
    /// Squared residual norm at the start of every step.
    pub rates: Vec<f64>,
    /// `∫√rate dt`, one entry per grid time.
    pub cumulative: Vec<f64>,
    /// Realized Bures distance to exact evolution per grid time.
    pub realized: Vec<f64>,
}

impl ErrorBoundSeries {
    /// Whether the bound covers the realized distance at every grid time,
    /// up to [`BURES_FLOOR`].
    pub fn holds(&self) -> bool {
        self.worst_margin() >= -BURES_FLOOR
    }

    /// Smallest `bound − realized` over the grid.
    pub fn worst_margin(&self) -> f64 {
        self.cumulative.iter().zip(&self.realized).map(|(b, r)| b - r).fold(f64::INFINITY, f64::min)
    }
}

fn dual_rate_exact(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    delta: &[f64],
    delta_tau: f64,
    h: &PauliSum,
) -> Result<f64> {
    let a = circuit.run(theta)?;
    let shifted: Vec<f64> = theta.iter().zip(delta).map(|(t, x)| t + x).collect();
    let f = inner_product(&a, &circuit.run(&shifted)?)?.norm_sqr();
    let b = evolution_gradient_b_real(circuit, theta, h, &mut Sampler::exact())?;
    let lin: f64 = delta.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    dual_error_rate(circuit, theta, delta_tau, h, (1.0 - f) / 2.0 - delta_tau * lin)
}

/// Error rates along a real-time trajectory and their integral.
///
/// The rates are squared residual norms, so the bound integrates their
/// square roots. Between grid points the parameters move linearly with the
/// step's θ̇, and the residual of that realized path is integrated with the
/// trapezoid rule on `substeps` panels per step. The integral then also
/// covers the Euler integration error; `substeps = 1` gives the cheaper
/// endpoint-only estimate.
pub fn error_bound_series(
    circuit: &ParameterizedCircuit,
    h: &PauliSum,
    traj: &Trajectory,
    kind: RateKind,
    substeps: usize,
) -> Result<ErrorBoundSeries> {
    if substeps == 0 {
        return Err(QteError::InvalidArgument("need at least one substep".into()));
    }
    let reference = exact_reference(h, circuit, traj, TimeMode::Real)?;
    let realized = bures_series(circuit, traj, &reference)?;
    let dt = if traj.times.len() > 1 { traj.times[1] - traj.times[0] } else { 1.0 };
    let rate_at = |theta: &[f64], theta_dot: &[f64]| match kind {
        RateKind::VarQrte => varqrte_error_rate(circuit, theta, theta_dot, h),
        RateKind::DualQrte { delta_tau } => {
            let delta: Vec<f64> = theta_dot.iter().map(|v| v * delta_tau).collect();
            dual_rate_exact(circuit, theta, &delta, delta_tau, h)
        }
    };
    let per_step = traj
        .steps
        .par_iter()
        .zip(&traj.thetas)
        .map(|(step, theta)| {
            let roots = (0..=substeps)
                .map(|j| {
                    let s = dt * j as f64 / substeps as f64;
                    let point: Vec<f64> = theta.iter().zip(&step.theta_dot).map(|(t, v)| t + s * v).collect();
                    Ok(rate_at(&point, &step.theta_dot)?.max(0.0).sqrt())
                })
                .collect::<Result<Vec<f64>>>()?;
            let left = roots[0] * roots[0];
            let area = if substeps == 1 {
                roots[0] * dt
            } else {
                let w = dt / substeps as f64;
                roots.windows(2).map(|r| w * (r[0] + r[1]) / 2.0).sum()
            };
            Ok((left, area))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let rates: Vec<f64> = per_step.iter().map(|p| p.0).collect();
    let areas: Vec<f64> = per_step.iter().map(|p| p.1 / dt).collect();
    let cumulative = integrate_error_bound(&areas, dt)?;
    Ok(ErrorBoundSeries { times: traj.times.clone(), rates, cumulative, realized })
}

/// Estimator family behind a run, for the closed-form circuit counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "VarQITE-PSR")]
    VarQitePsr,
    #[serde(rename = "VarQITE-LCU")]
    VarQiteLcu,
    #[serde(rename = "VarQRTE-LCU")]
    VarQrteLcu,
    #[serde(rename = "DualQITE-PSR")]
    DualQitePsr,
    #[serde(rename = "DualQITE-LCU")]
    DualQiteLcu,
    #[serde(rename = "DualQRTE-LCU")]
    DualQrteLcu,
}

impl MethodTag {
    pub fn new(dual: bool, mode: TimeMode, method: GradientMethod) -> Result<Self> {
        Ok(match (dual, mode, method.cost_tag()) {
            (false, TimeMode::Imaginary, CostTag::Psr) => MethodTag::VarQitePsr,
            (false, TimeMode::Imaginary, CostTag::Lcu) => MethodTag::VarQiteLcu,
            (false, TimeMode::Real, CostTag::Lcu) => MethodTag::VarQrteLcu,
            (true, TimeMode::Imaginary, CostTag::Psr) => MethodTag::DualQitePsr,
            (true, TimeMode::Imaginary, CostTag::Lcu) => MethodTag::DualQiteLcu,
            (true, TimeMode::Real, CostTag::Lcu) => MethodTag::DualQrteLcu,
            (_, TimeMode::Real, CostTag::Psr) => {
                return Err(QteError::IncompatibleMethod("real time needs derivative-state gradients".into()))
            }
        })
    }

    pub fn is_dual(&self) -> bool {
        matches!(self, MethodTag::DualQitePsr | MethodTag::DualQiteLcu | MethodTag::DualQrteLcu)
    }

    pub fn label(&self) -> &'static str {
        match self {
            MethodTag::VarQitePsr => "VarQITE-PSR",
            MethodTag::VarQiteLcu => "VarQITE-LCU",
            MethodTag::VarQrteLcu => "VarQRTE-LCU",
            MethodTag::DualQitePsr => "DualQITE-PSR",
            MethodTag::DualQiteLcu => "DualQITE-LCU",
            MethodTag::DualQrteLcu => "DualQRTE-LCU",
        }
    }
}

/// Circuits per timestep for `d` parameters, `p` measured Hamiltonian terms
/// and `k` optimizer iterations.
pub fn circuit_counts(method: MethodTag, d: u64, p: u64, k: Option<u64>) -> Result<u64> {
    if d == 0 || p == 0 {
        return Err(QteError::InvalidArgument("d and P must be at least 1".into()));
    }
    let need_k = || {
        k.filter(|&k| k >= 1)
            .ok_or_else(|| QteError::InvalidArgument(format!("{} needs an iteration count", method.label())))
    };
    Ok(match method {
        MethodTag::VarQitePsr => 2 * d * (d + p + 1),
        MethodTag::VarQiteLcu | MethodTag::VarQrteLcu => d * (d + 5) / 2 + p * d,
        MethodTag::DualQiteLcu | MethodTag::DualQrteLcu => p * d + need_k()? * d,
        MethodTag::DualQitePsr => 2 * (p * d + need_k()? * d),
    })
}

fn check_positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(QteError::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Order-of-magnitude measurement bound for QGT-based evolution (unit
/// constant): `d³E_max²Δt² / (δ_c⁴ε_S²)`.
pub fn sample_bound_varqte(d: f64, e_max: f64, dt: f64, delta_c: f64, eps_s: f64) -> Result<f64> {
    check_positive(&[("d", d), ("E_max", e_max), ("dt", dt), ("delta_c", delta_c), ("eps_s", eps_s)])?;
    Ok(d.powi(3) * e_max * e_max * dt * dt / (delta_c.powi(4) * eps_s * eps_s))
}

/// Order-of-magnitude measurement bound for the dual method (unit constant):
/// `d²K²Δt² / (δτ²ε_S²) · (1/δτ + E_max)²`.
pub fn sample_bound_dual(d: f64, k: f64, dt: f64, delta_tau: f64, e_max: f64, eps_s: f64) -> Result<f64> {
    check_positive(&[("d", d), ("K", k), ("dt", dt), ("delta_tau", delta_tau), ("E_max", e_max), ("eps_s", eps_s)])?;
    Ok(d * d * k * k * dt * dt / (delta_tau * delta_tau * eps_s * eps_s) * (1.0 / delta_tau + e_max).powi(2))
}

/// Gate, readout and reset durations in nanoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceTimings {
    pub t_cx: f64,
    pub t_sqrt_x: f64,
    pub t_meas: f64,
    pub t_reset: f64,
}

impl Default for DeviceTimings {
    /// Superconducting-device figures: CX 451 ns, √X 36 ns, readout 860 ns, reset 2 µs.
    fn default() -> Self {
        Self { t_cx: 451.0, t_sqrt_x: 36.0, t_meas: 860.0, t_reset: 2000.0 }
    }
}

impl DeviceTimings {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[("t_cx", self.t_cx), ("t_sqrt_x", self.t_sqrt_x), ("t_meas", self.t_meas), ("t_reset", self.t_reset)])
    }

    /// Nanoseconds per shot of an `r`-repetition circuit:
    /// `2r·t_CX + 2(r+1)·t_√X + t_meas + t_reset`.
    pub fn shot_ns(&self, r: u32) -> f64 {
        let r = r as f64;
        2.0 * r * self.t_cx + 2.0 * (r + 1.0) * self.t_sqrt_x + self.t_meas + self.t_reset
    }
}

/// Wall-clock seconds for `n_measurements` shots. The per-shot time depends
/// only on the circuit depth, not the qubit count.
pub fn runtime_estimate(r: u32, n_measurements: f64, timings: &DeviceTimings) -> Result<f64> {
    timings.validate()?;
    if r == 0 || !(n_measurements >= 0.0) {
        return Err(QteError::InvalidArgument("need r >= 1 and a non-negative measurement count".into()));
    }
    Ok(n_measurements * timings.shot_ns(r) * 1e-9)
}

/// Per-step circuits and cumulative measurements of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceLedger {
    pub method: MethodTag,
    /// `None` for exact expectation values (circuits are still counted).
    pub shots_per_circuit: Option<u64>,
    pub circuits_per_step: Vec<u64>,
    pub iterations_per_step: Vec<usize>,
    pub cumulative_measurements: Vec<u64>,
}

impl ResourceLedger {
    pub fn from_trajectory(traj: &Trajectory, method: MethodTag, shots: Option<u64>) -> Self {
        let mut acc = 0;
        let cumulative_measurements = traj
            .steps
            .iter()
            .map(|s| {
                acc += s.circuits * shots.unwrap_or(0);
                acc
            })
            .collect();
        Self {
            method,
            shots_per_circuit: shots,
            circuits_per_step: traj.steps.iter().map(|s| s.circuits).collect(),
            iterations_per_step: traj.steps.iter().map(|s| s.iterations).collect(),
            cumulative_measurements,
        }
    }

    pub fn total_circuits(&self) -> u64 {
        self.circuits_per_step.iter().sum()
    }

    pub fn total_measurements(&self) -> u64 {
        self.cumulative_measurements.last().copied().unwrap_or(0)
    }

    /// Whether every step's count equals the closed form (K taken from the
    /// recorded iterations).
    pub fn matches_closed_form(&self, d: u64, p: u64) -> Result<bool> {
        for (c, &k) in self.circuits_per_step.iter().zip(&self.iterations_per_step) {
            let k = if self.method.is_dual() { Some(k as u64) } else { None };
            if circuit_counts(self.method, d, p, k)? != *c {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Gradient norms recorded during a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradNormTrace {
    /// Start time of every step.
    pub times: Vec<f64>,
    pub b_norms: Vec<f64>,
    /// ‖∇F‖₂ per optimizer iteration, per step.
    pub fidelity_gradient_norms: Vec<Vec<f64>>,
    /// ‖∇L‖₂ per optimizer iteration, per step.
    pub loss_gradient_norms: Vec<Vec<f64>>,
}

pub fn grad_norm_trace(traj: &Trajectory) -> GradNormTrace {
    GradNormTrace {
        times: traj.times.iter().take(traj.steps.len()).copied().collect(),
        b_norms: traj.steps.iter().map(|s| s.b_norm).collect(),
        fidelity_gradient_norms: traj.steps.iter().map(|s| s.fidelity_gradient_norms.clone()).collect(),
        loss_gradient_norms: traj.steps.iter().map(|s| s.gradient_norms.clone()).collect(),
    }
}

/// Least-squares fit of `ln y = slope·ln x + intercept`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(QteError::InvalidArgument("log-log fit needs two or more paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(QteError::InvalidArgument("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(QteError::InvalidArgument("log-log fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Pearson correlation coefficient (NaN for constant input).
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// One repetition of the product-state sampling study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub n: usize,
    pub d: usize,
    pub repetition: usize,
    /// ‖θ̇‖₂ of the sampled update.
    pub theta_dot_norm: f64,
    pub theta_dot_exact_norm: f64,
    pub delta_theta_dot: f64,
    pub delta_g: f64,
    pub delta_b: f64,
    /// Bures distance after one step between sampled and exact updates.
    pub eps_s: f64,
}

/// Settings of the product-state sampling study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    pub sizes: Vec<usize>,
    pub shots: u64,
    pub delta_c: f64,
    pub repetitions: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self { sizes: (2..=10).collect(), shots: 1000, delta_c: 1e-2, repetitions: 10, dt: 0.01, seed: 0 }
    }
}

/// First imaginary-time step of `H = Σ Z_i` with one RY layer at π/2:
/// compares the update from sampled QGT and gradient against the exact one.
/// Every `(n, repetition)` pair draws from its own stream.
pub fn product_state_diagnostic(config: &DiagnosticConfig) -> Result<Vec<DiagnosticSample>> {
    if config.shots == 0 || config.repetitions == 0 || !(config.delta_c > 0.0) || !(config.dt > 0.0) {
        return Err(QteError::Config("diagnostic needs positive shots, repetitions, delta_c and dt".into()));
    }
    let jobs: Vec<(usize, usize)> =
        config.sizes.iter().flat_map(|&n| (0..config.repetitions).map(move |r| (n, r))).collect();
    jobs.into_par_iter()
        .map(|(n, rep)| {
            let circuit =
                ParameterizedCircuit::new(n, (0..n).map(|q| crate::sim::Gate::ry(q, q)).collect())?;
            let h = PauliSum::uniform_field(n, Pauli::Z, 1.0)?;
            let theta = vec![std::f64::consts::FRAC_PI_2; n];
            let policy = RegularizationPolicy::DiagonalShift { delta: config.delta_c };
            let method = GradientMethod::psr();

            let g = qgt_exact(&circuit, &theta)?;
            let b = energy_gradient_b_imag(&circuit, &theta, &h, method, &mut Sampler::exact())?;
            let exact_dot = solve_update(&g, &b, &policy)?;

            let stream = (((n as u64) << 16 | rep as u64) << 4) | 3;
            let mut sampler = ShotConfig::sampled(config.shots, config.seed, stream).sampler();
            let g_s: QgtMatrix = qgt_psr(&circuit, &theta, &mut sampler)?;
            let b_s = energy_gradient_b_imag(&circuit, &theta, &h, method, &mut sampler)?;
            let sampled_dot = solve_update(&g_s, &b_s, &policy)?;

            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = sampled_dot.iter().zip(&exact_dot).map(|(a, b)| a - b).collect();
            let db: Vec<f64> = b_s.values.iter().zip(&b.values).map(|(a, b)| a - b).collect();
            let step = |dot: &[f64]| -> Vec<f64> { theta.iter().zip(dot).map(|(t, v)| t + config.dt * v).collect() };
            let eps_s = bures_distance(&circuit.run(&step(&sampled_dot))?, &circuit.run(&step(&exact_dot))?)?;
            Ok(DiagnosticSample {
                n,
                d: n,
                repetition: rep,
                theta_dot_norm: norm(&sampled_dot),
                theta_dot_exact_norm: norm(&exact_dot),
                delta_theta_dot: norm(&diff),
                delta_g: spectral_norm(&(&g_s.g - &g.g)),
                delta_b: norm(&db),
                eps_s,
            })
        })
        .collect()
}
