//! QGT-based variational time evolution: solve `g θ̇ = b` every step and
//! integrate with forward Euler.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::estimators::{
    energy_gradient_b_imag, evolution_gradient_b_real_scaled, qgt, real_gradient_scale, EvolutionGradient,
    GradientMethod, QgtMatrix, Sampler, ShotConfig,
};
use crate::hamiltonian::{PauliSum, TimeMode};
use crate::sim::ParameterizedCircuit;
use crate::{QteError, Result};

/// How the possibly ill-conditioned system `g θ̇ = b` is stabilized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RegularizationPolicy {
    /// `(g + δ·I) θ̇ = b`.
    DiagonalShift { delta: f64 },
    /// Pseudo-inverse keeping singular values `≥ cutoff`.
    TruncatedSvd { cutoff: f64 },
    /// Ridge solutions `argmin ‖gx − b‖² + λ‖x‖²` over `grid`, picking the
    /// corner (maximum curvature) of the log-residual / log-norm curve.
    LCurve { grid: Vec<f64> },
}

impl RegularizationPolicy {
    /// 16 log-spaced ridge strengths over `[1e-6, 1e-1]`.
    pub fn default_l_curve() -> Self {
        Self::LCurve { grid: log_grid(1e-6, 1e-1, 16) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::DiagonalShift { delta } if !(*delta > 0.0) => {
                Err(QteError::Config(format!("diagonal shift must be positive, got {delta}")))
            }
            Self::TruncatedSvd { cutoff } if !(*cutoff >= 0.0) => {
                Err(QteError::Config(format!("SVD cutoff must be non-negative, got {cutoff}")))
            }
            Self::LCurve { grid } => {
                if grid.len() < 8 || grid.iter().any(|l| !(*l > 0.0)) {
                    return Err(QteError::Config("L-curve grid needs at least 8 positive values".into()));
                }
                let (lo, hi) = grid.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
                if (hi / lo).log10() < 4.0 - 1e-9 {
                    return Err(QteError::Config("L-curve grid must span at least 4 decades".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl Default for RegularizationPolicy {
    fn default() -> Self {
        Self::default_l_curve()
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Solves `g θ̇ = b` under `policy`.
pub fn solve_update(g: &QgtMatrix, b: &EvolutionGradient, policy: &RegularizationPolicy) -> Result<Vec<f64>> {
    let d = g.dim();
    if b.values.len() != d || g.g.ncols() != d {
        return Err(QteError::DimensionMismatch { expected: d, got: b.values.len() });
    }
    let rhs = DVector::from_column_slice(&b.values);
    let x = match policy {
        RegularizationPolicy::DiagonalShift { delta } => {
            let shifted = &g.g + DMatrix::identity(d, d) * *delta;
            let lu = shifted.lu();
            let x = lu.solve(&rhs).ok_or_else(|| {
                QteError::SingularSystem(format!("g + {delta}·I is singular"))
            })?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(QteError::SingularSystem(format!("g + {delta}·I is singular")));
            }
            x
        }
        RegularizationPolicy::TruncatedSvd { cutoff } => {
            let svd = g.g.clone().svd(true, true);
            let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
            let coeffs = u.tr_mul(&rhs);
            let mut x = DVector::zeros(d);
            for (k, &s) in svd.singular_values.iter().enumerate() {
                if s >= *cutoff && s > 0.0 {
                    x += vt.row(k).transpose() * (coeffs[k] / s);
                }
            }
            x
        }
        RegularizationPolicy::LCurve { grid } => l_curve_solve(&g.g, &rhs, grid),
    };
    Ok(x.iter().copied().collect())
}

/// Ridge solution for every λ in `grid`, choosing the point of maximal
/// curvature on the (log ‖gx−b‖, log ‖x‖) curve parameterized by log λ.
fn l_curve_solve(g: &DMatrix<f64>, b: &DVector<f64>, grid: &[f64]) -> DVector<f64> {
    let d = g.nrows();
    let svd = g.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let beta = u.tr_mul(b);
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let solve = |lam: f64| {
        let mut x = DVector::zeros(d);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            x += vt.row(k).transpose() * (s * beta[k] / (s * s + lam));
        }
        x
    };
    let sols: Vec<DVector<f64>> = lambdas.iter().map(|&l| solve(l)).collect();
    let tiny = 1e-300;
    let rho: Vec<f64> = sols.iter().map(|x| ((g * x - b).norm() + tiny).ln()).collect();
    let eta: Vec<f64> = sols.iter().map(|x| (x.norm() + tiny).ln()).collect();
    let t: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();

    let mut best = lambdas.len() - 1;
    let mut best_kappa = f64::NEG_INFINITY;
    for k in 1..lambdas.len() - 1 {
        let (h1, h2) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        let d1 = |f: &[f64]| (f[k + 1] - f[k - 1]) / (h1 + h2);
        let d2 = |f: &[f64]| 2.0 * ((f[k + 1] - f[k]) / h2 - (f[k] - f[k - 1]) / h1) / (h1 + h2);
        let (r1, r2, e1, e2) = (d1(&rho), d2(&rho), d1(&eta), d2(&eta));
        let denom = (r1 * r1 + e1 * e1).powf(1.5);
        if !(denom > 1e-300) {
            continue;
        }
        let kappa = (r1 * e2 - r2 * e1) / denom;
        // ascending λ, so ">=" breaks ties toward the larger λ
        if kappa.is_finite() && kappa >= best_kappa {
            best_kappa = kappa;
            best = k;
        }
    }
    sols[best].clone()
}

/// Settings shared by the QGT-based evolver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub mode: TimeMode,
    pub dt: f64,
    pub t_final: f64,
    pub shots: ShotConfig,
    pub gradient_method: GradientMethod,
    pub regularization: RegularizationPolicy,
}

impl EvolutionConfig {
    pub fn imaginary(dt: f64, t_final: f64) -> Self {
        Self {
            mode: TimeMode::Imaginary,
            dt,
            t_final,
            shots: ShotConfig::exact(),
            gradient_method: GradientMethod::psr(),
            regularization: RegularizationPolicy::default(),
        }
    }

    pub fn real(dt: f64, t_final: f64) -> Self {
        Self {
            mode: TimeMode::Real,
            gradient_method: GradientMethod::DerivativeState,
            ..Self::imaginary(dt, t_final)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.regularization.validate()?;
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

pub(crate) fn validate_grid(dt: f64, t_final: f64) -> Result<()> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(QteError::Config(format!("total time must be non-negative, got {t_final}")));
    }
    if !(dt > 0.0) || (t_final > 0.0 && dt > t_final * (1.0 + 1e-12)) {
        return Err(QteError::Config(format!("timestep {dt} must satisfy 0 < dt <= T = {t_final}")));
    }
    Ok(())
}

pub(crate) fn n_steps(dt: f64, t_final: f64) -> usize {
    (t_final / dt).round() as usize
}

/// What happened in one timestep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Optimizer iterations (zero for the QGT-based evolver).
    pub iterations: usize,
    pub circuits: u64,
    pub measurements: u64,
    /// Loss after each optimizer iteration.
    pub losses: Vec<f64>,
    /// ‖∇L‖₂ at the start of each optimizer iteration.
    pub gradient_norms: Vec<f64>,
    /// ‖∇F‖₂ of the fidelity gradient in each optimizer iteration.
    #[serde(default)]
    pub fidelity_gradient_norms: Vec<f64>,
    /// ‖b‖₂ of the evolution gradient used in the step.
    pub b_norm: f64,
    /// Parameter update divided by the timestep.
    pub theta_dot: Vec<f64>,
}

/// Parameter path on a uniform time grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub(crate) fn start(theta0: &[f64]) -> Self {
        Self { times: vec![0.0], thetas: vec![theta0.to_vec()], steps: Vec::new() }
    }

    pub(crate) fn push(&mut self, dt: f64, theta: Vec<f64>, record: StepRecord) {
        let k = self.times.len();
        self.times.push(k as f64 * dt);
        self.thetas.push(theta);
        self.steps.push(record);
    }

    pub fn final_theta(&self) -> &[f64] {
        self.thetas.last().expect("trajectory always holds θ0")
    }

    pub fn total_circuits(&self) -> u64 {
        self.steps.iter().map(|s| s.circuits).sum()
    }

    pub fn total_measurements(&self) -> u64 {
        self.steps.iter().map(|s| s.measurements).sum()
    }
}

/// Evolution gradient for `mode` with `method`'s cost model.
pub(crate) fn evolution_gradient(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    h: &PauliSum,
    mode: TimeMode,
    method: GradientMethod,
    real_scale: f64,
    sampler: &mut Sampler,
) -> Result<EvolutionGradient> {
    match mode {
        TimeMode::Imaginary => energy_gradient_b_imag(circuit, theta, h, method, sampler),
        TimeMode::Real => evolution_gradient_b_real_scaled(circuit, theta, h, real_scale, sampler),
    }
}

pub(crate) fn check_finite(step: usize, what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(QteError::NumericalAbort { step, reason: format!("non-finite {what}") })
    }
}

/// Runs `round(T/Δt)` Euler steps of `θ ← θ + Δt·θ̇` with `g θ̇ = b`.
pub fn varqte_evolve(
    circuit: &ParameterizedCircuit,
    h: &PauliSum,
    theta0: &[f64],
    config: &EvolutionConfig,
) -> Result<Trajectory> {
    config.validate()?;
    circuit.check_params(theta0)?;
    let mut sampler = config.shots.sampler();
    let real_scale = if config.mode == TimeMode::Real && !sampler.is_exact() { real_gradient_scale(h) } else { 1.0 };
    let mut traj = Trajectory::start(theta0);
    let mut theta = theta0.to_vec();
    for step in 0..config.n_steps() {
        let (c0, m0) = (sampler.circuits(), sampler.measurements());
        let g = qgt(circuit, &theta, config.gradient_method, &mut sampler)?;
        let b = evolution_gradient(circuit, &theta, h, config.mode, config.gradient_method, real_scale, &mut sampler)?;
        check_finite(step, "evolution gradient", &b.values)?;
        let theta_dot = solve_update(&g, &b, &config.regularization).map_err(|e| QteError::NumericalAbort {
            step,
            reason: e.to_string(),
        })?;
        check_finite(step, "parameter derivative", &theta_dot)?;
        theta.iter_mut().zip(&theta_dot).for_each(|(t, v)| *t += config.dt * v);
        let record = StepRecord {
            iterations: 0,
            circuits: sampler.circuits() - c0,
            measurements: sampler.measurements() - m0,
            losses: Vec::new(),
            gradient_norms: Vec::new(),
            fidelity_gradient_norms: Vec::new(),
            b_norm: b.norm(),
            theta_dot,
        };
        traj.push(config.dt, theta.clone(), record);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::GradientKind;
    use crate::hamiltonian::{expectation, heisenberg, ExactEvolver, HeisenbergSpec, Pauli, Topology};
    use crate::sim::{build_ansatz, initial_parameter_binding, AnsatzSpec, Gate, InitialState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn grad(v: &[f64]) -> EvolutionGradient {
        EvolutionGradient { values: v.to_vec(), kind: GradientKind::Imaginary }
    }

    fn qgt_of(rows: usize, v: &[f64]) -> QgtMatrix {
        QgtMatrix { g: DMatrix::from_row_slice(rows, rows, v) }
    }

    #[test]
    fn diagonal_and_truncated_solves() {
        let g = qgt_of(2, &[0.25, 0.0, 0.0, 0.25]);
        let x = solve_update(&g, &grad(&[0.5, 0.0]), &RegularizationPolicy::DiagonalShift { delta: 0.0 }).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14 && x[1].abs() < 1e-14);
        let g = qgt_of(2, &[1.0, 0.0, 0.0, 0.0]);
        let x = solve_update(&g, &grad(&[1.0, 1.0]), &RegularizationPolicy::TruncatedSvd { cutoff: 0.5 }).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && x[1].abs() < 1e-14);
        assert!(matches!(
            solve_update(&g, &grad(&[1.0, 1.0]), &RegularizationPolicy::DiagonalShift { delta: 0.0 }),
            Err(QteError::SingularSystem(_))
        ));
    }

    fn random_spd(d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    #[test]
    fn diagonal_shift_error_is_linear_in_delta() {
        let g = QgtMatrix { g: random_spd(6, 1) };
        let b = grad(&[0.3, -0.2, 0.9, 0.1, -0.5, 0.4]);
        let exact = g.g.clone().lu().solve(&DVector::from_column_slice(&b.values)).unwrap();
        let err = |delta: f64| {
            let x = solve_update(&g, &b, &RegularizationPolicy::DiagonalShift { delta }).unwrap();
            (DVector::from_vec(x) - &exact).norm()
        };
        let (e1, e2) = (err(1e-3), err(1e-4));
        assert!((e1 / e2 - 10.0).abs() < 0.1, "{}", e1 / e2);
    }

    #[test]
    fn shifted_solution_norm_is_bounded() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-0.3..0.3));
            let g = QgtMatrix { g: &a * a.transpose() };
            let b = grad(&(0..5).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
            let x = solve_update(&g, &b, &RegularizationPolicy::DiagonalShift { delta: 1e-2 }).unwrap();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= b.norm() / 1e-2 + 1e-9);
        }
    }

    #[test]
    fn l_curve_recovers_well_conditioned_solution() {
        let g = QgtMatrix { g: random_spd(4, 3) };
        let b = grad(&[0.2, 0.4, -0.1, 0.3]);
        let x = solve_update(&g, &b, &RegularizationPolicy::default()).unwrap();
        let exact = g.g.clone().lu().solve(&DVector::from_column_slice(&b.values)).unwrap();
        assert!((DVector::from_vec(x) - exact).norm() < 0.05);
    }

    #[test]
    fn policy_validation() {
        assert!(RegularizationPolicy::DiagonalShift { delta: 0.0 }.validate().is_err());
        assert!(RegularizationPolicy::LCurve { grid: log_grid(1e-3, 1e-1, 16) }.validate().is_err());
        assert!(RegularizationPolicy::LCurve { grid: log_grid(1e-6, 1e-1, 4) }.validate().is_err());
        assert!(RegularizationPolicy::default().validate().is_ok());
        let g = log_grid(1e-6, 1e-1, 16);
        assert!((g[0] - 1e-6).abs() < 1e-18 && (g[15] - 1e-1).abs() < 1e-15);
    }

    #[test]
    fn single_qubit_imaginary_evolution_reaches_ground_state() {
        let c = ParameterizedCircuit::new(1, vec![Gate::ry(0, 0)]).unwrap();
        let z = PauliSum::from_labels(&[("Z", 1.0)]).unwrap();
        let mut cfg = EvolutionConfig::imaginary(0.01, 5.0);
        cfg.regularization = RegularizationPolicy::DiagonalShift { delta: 1e-8 };
        let traj = varqte_evolve(&c, &z, &[FRAC_PI_2], &cfg).unwrap();
        assert_eq!(traj.thetas.len(), 501);
        let e = expectation(&z, &c.run(traj.final_theta()).unwrap()).unwrap();
        assert!((e + 1.0).abs() < 1e-3, "{e}");
    }

    #[test]
    fn zero_time_is_initial_point() {
        let c = build_ansatz(&AnsatzSpec::efficient_su2(2, 1)).unwrap();
        let h = heisenberg(&HeisenbergSpec { n: 2, topology: Topology::Chain, j: 1.0, g_field: 0.5 }).unwrap();
        let theta0 = vec![0.1; 8];
        let traj = varqte_evolve(&c, &h, &theta0, &EvolutionConfig::imaginary(0.01, 0.0)).unwrap();
        assert_eq!(traj.thetas, vec![theta0]);
        assert!(traj.steps.is_empty());
    }

    #[test]
    fn real_mode_requires_derivative_states() {
        let mut cfg = EvolutionConfig::real(0.1, 1.0);
        cfg.gradient_method = GradientMethod::psr();
        assert!(matches!(cfg.validate(), Err(QteError::IncompatibleMethod(_))));
    }

    #[test]
    fn imaginary_energy_is_non_increasing() {
        let spec = AnsatzSpec::efficient_su2(4, 2);
        let c = build_ansatz(&spec).unwrap();
        let h = heisenberg(&HeisenbergSpec { n: 4, topology: Topology::Circle, j: 0.25, g_field: -1.0 }).unwrap();
        let theta0 = initial_parameter_binding(&c, &InitialState::PlusAll).unwrap();
        let traj = varqte_evolve(&c, &h, &theta0, &EvolutionConfig::imaginary(0.01, 1.0)).unwrap();
        let energies: Vec<f64> = traj.thetas.iter().map(|t| expectation(&h, &c.run(t).unwrap()).unwrap()).collect();
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
    }

    #[test]
    fn real_mode_conserves_magnetization() {
        let c = build_ansatz(&AnsatzSpec::alternating_xy(4, 3)).unwrap();
        let h = heisenberg(&HeisenbergSpec { n: 4, topology: Topology::Chain, j: 0.25, g_field: -1.0 }).unwrap();
        let theta0 = initial_parameter_binding(&c, &InitialState::PlusAll).unwrap();
        let traj = varqte_evolve(&c, &h, &theta0, &EvolutionConfig::real(0.02, 2.0)).unwrap();
        let mz = PauliSum::uniform_field(4, Pauli::Z, 0.25).unwrap();
        for t in &traj.thetas {
            assert!(expectation(&mz, &c.run(t).unwrap()).unwrap().abs() < 0.02);
        }
    }

    #[test]
    fn halving_the_timestep_shrinks_the_error_quadratically_per_step() {
        // single-step local error of Euler vs the exact flow projected to the model
        let c = build_ansatz(&AnsatzSpec::efficient_su2(3, 1)).unwrap();
        let h = heisenberg(&HeisenbergSpec { n: 3, topology: Topology::Chain, j: 0.25, g_field: -1.0 }).unwrap();
        let theta0 = initial_parameter_binding(&c, &InitialState::PlusAll).unwrap();
        let ev = ExactEvolver::new(&h).unwrap();
        let psi0 = c.run(&theta0).unwrap();
        let mut cfg = EvolutionConfig::imaginary(0.0, 0.0);
        cfg.regularization = RegularizationPolicy::DiagonalShift { delta: 1e-9 };
        let mut local = |dt: f64| {
            cfg.dt = dt;
            cfg.t_final = dt;
            let one = varqte_evolve(&c, &h, &theta0, &cfg).unwrap();
            cfg.dt = dt / 2.0;
            let two = varqte_evolve(&c, &h, &theta0, &cfg).unwrap();
            let exact = ev.evolve(&psi0, dt, TimeMode::Imaginary).unwrap();
            let bures = |t: &[f64]| (2.0 * (1.0 - c.run(t).unwrap().inner(&exact).unwrap().norm())).max(0.0).sqrt();
            (bures(one.final_theta()) - bures(two.final_theta())).abs()
        };
        let (a, b) = (local(0.02), local(0.01));
        let ratio = a / b;
        assert!(ratio > 3.0, "{ratio}");
    }

    #[test]
    fn ledger_counts_match_closed_forms() {
        let c = build_ansatz(&AnsatzSpec::efficient_su2(2, 1)).unwrap();
        let h = heisenberg(&HeisenbergSpec { n: 2, topology: Topology::Chain, j: 0.25, g_field: -1.0 }).unwrap();
        let (d, p) = (c.n_params() as u64, h.n_terms() as u64);
        let theta0 = vec![0.3; d as usize];
        let mut cfg = EvolutionConfig::imaginary(0.1, 0.3);
        cfg.shots = ShotConfig::sampled(100, 1, 0);
        let traj = varqte_evolve(&c, &h, &theta0, &cfg).unwrap();
        for s in &traj.steps {
            assert_eq!(s.circuits, 2 * d * (d + p + 1));
            assert_eq!(s.measurements, s.circuits * 100);
        }
        cfg.gradient_method = GradientMethod::DerivativeState;
        let traj = varqte_evolve(&c, &h, &theta0, &cfg).unwrap();
        for s in &traj.steps {
            assert_eq!(s.circuits, d * (d + 5) / 2 + p * d);
        }
    }
}
