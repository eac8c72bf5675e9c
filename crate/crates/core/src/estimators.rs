//! Exact and shot-sampled estimators with circuit accounting.
//!
//! Sampled estimates start from the exact statevector value and apply the
//! statistics of the measurement that would produce it: a binomial on the
//! probability of the all-zeros outcome for compute-uncompute fidelities, a
//! ±1 outcome per Pauli term for energies, and a Hadamard-test style ±1
//! outcome (scaled by a known bound) for derivative-state quantities.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{energy_extremes, ExtremesMode, Pauli, PauliSum};
use crate::sim::{derivative_states, dot, pair_overlaps, shift_overlaps, ParameterizedCircuit, StateVector};
use crate::{QteError, Result, C64};

const PROB_TOL: f64 = 1e-9;

/// Shots per circuit (`None` means exact expectation values) plus the RNG stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub shots: Option<u64>,
    pub rng_seed: u64,
    pub stream_id: u64,
}

impl ShotConfig {
    pub fn exact() -> Self {
        Self { shots: None, rng_seed: 0, stream_id: 0 }
    }

    pub fn sampled(shots: u64, rng_seed: u64, stream_id: u64) -> Self {
        Self { shots: Some(shots), rng_seed, stream_id }
    }

    pub fn is_exact(&self) -> bool {
        self.shots.is_none()
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(self)
    }
}

/// Stateful measurement model: owns the RNG stream and counts circuits.
#[derive(Clone, Debug)]
pub struct Sampler {
    shots: Option<u64>,
    rng: ChaCha8Rng,
    circuits: u64,
}

impl Sampler {
    pub fn new(config: &ShotConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        rng.set_stream(config.stream_id);
        Self { shots: config.shots, rng, circuits: 0 }
    }

    pub fn exact() -> Self {
        Self::new(&ShotConfig::exact())
    }

    pub fn is_exact(&self) -> bool {
        self.shots.is_none()
    }

    pub fn shots(&self) -> Option<u64> {
        self.shots
    }

    /// Circuits charged so far.
    pub fn circuits(&self) -> u64 {
        self.circuits
    }

    /// Total measurements so far (zero in exact mode).
    pub fn measurements(&self) -> u64 {
        self.circuits * self.shots.unwrap_or(0)
    }

    pub fn charge(&mut self, circuits: u64) {
        self.circuits += circuits;
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Binomial frequency for a probability `p` (validated and clamped).
    pub fn binomial(&mut self, p: f64) -> Result<f64> {
        if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) || p.is_nan() {
            return Err(QteError::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        let p = p.clamp(0.0, 1.0);
        match self.shots {
            None => Ok(p),
            Some(n) => {
                let k = Binomial::new(n, p).expect("p clamped to [0,1]").sample(&mut self.rng);
                Ok(k as f64 / n as f64)
            }
        }
    }

    /// ±1-outcome estimate of a value `v` with `|v| ≤ scale`:
    /// `p = (1 + v/scale)/2`, returns `scale·(2k/N − 1)`.
    pub fn two_outcome(&mut self, v: f64, scale: f64) -> f64 {
        if self.shots.is_none() {
            return v;
        }
        let p = ((1.0 + v / scale) / 2.0).clamp(0.0, 1.0);
        let f = self.binomial(p).expect("clamped");
        scale * (2.0 * f - 1.0)
    }
}

/// Exact-mode returns `p_true`; sampled mode returns `k/shots`, `k ~ Binomial(shots, p_true)`.
pub fn sample_binomial_estimate(p_true: f64, sampler: &mut Sampler) -> Result<f64> {
    sampler.binomial(p_true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientKind {
    Imaginary,
    Real,
}

/// Right-hand side of the parameter equation of motion.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionGradient {
    pub values: Vec<f64>,
    pub kind: GradientKind,
}

impl EvolutionGradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Real part of the quantum geometric tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct QgtMatrix {
    pub g: DMatrix<f64>,
}

impl QgtMatrix {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.g - self.g.transpose()).abs().max()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.g + self.g.transpose()) * 0.5;
        let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap_or(&0.0)
    }
}

/// Which circuit family a gradient uses, and therefore how it is charged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostTag {
    Psr,
    Lcu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GradientMethod {
    /// Shifted evaluations at `θ ± s·e_i`.
    ParameterShift { shift: f64 },
    /// Derivative-state (generator insertion) evaluation, costed as LCU circuits.
    DerivativeState,
}

impl GradientMethod {
    pub fn psr() -> Self {
        Self::ParameterShift { shift: std::f64::consts::FRAC_PI_2 }
    }

    pub fn cost_tag(&self) -> CostTag {
        match self {
            Self::ParameterShift { .. } => CostTag::Psr,
            Self::DerivativeState => CostTag::Lcu,
        }
    }
}

impl Default for GradientMethod {
    fn default() -> Self {
        Self::psr()
    }
}

fn check_shift(shift: f64) -> Result<()> {
    if !(shift.sin().abs() > 1e-12) {
        return Err(QteError::InvalidArgument(format!("parameter shift {shift} has sin(s) = 0")));
    }
    Ok(())
}

/// Exact `⟨P⟩` for every term of `h`.
pub fn term_expectations(h: &PauliSum, amps: &[C64]) -> Vec<f64> {
    h.terms().iter().map(|t| t.expectation_unweighted(amps)).collect()
}

/// Energy from exact per-term values, sampling each non-identity term with
/// `p = (1 + ⟨P⟩)/2`; charges one circuit per measured term.
fn energy_from_terms(h: &PauliSum, values: &[f64], sampler: &mut Sampler) -> f64 {
    let mut e = 0.0;
    for (t, &v) in h.terms().iter().zip(values) {
        if t.is_identity() {
            e += t.coeff();
        } else {
            e += t.coeff() * sampler.two_outcome(v, 1.0);
        }
    }
    sampler.charge(h.n_measured_terms() as u64);
    e
}

/// `E(θ)` with per-term sampling.
pub fn energy(circuit: &ParameterizedCircuit, theta: &[f64], h: &PauliSum, sampler: &mut Sampler) -> Result<f64> {
    let state = circuit.run(theta)?;
    check_register(h, &state)?;
    let values = term_expectations(h, state.amplitudes());
    Ok(energy_from_terms(h, &values, sampler))
}

fn check_register(h: &PauliSum, state: &StateVector) -> Result<()> {
    if h.n_qubits() != state.n_qubits() {
        return Err(QteError::DimensionMismatch { expected: state.n_qubits(), got: h.n_qubits() });
    }
    Ok(())
}

/// `|⟨φ(θa)|φ(θb)⟩|²` under compute-uncompute statistics; one circuit.
pub fn fidelity(circuit: &ParameterizedCircuit, theta_a: &[f64], theta_b: &[f64], sampler: &mut Sampler) -> Result<f64> {
    sampler.charge(1);
    if theta_a == theta_b {
        circuit.check_params(theta_a)?;
        return Ok(1.0);
    }
    let a = circuit.run(theta_a)?;
    let b = circuit.run(theta_b)?;
    let f = dot(a.amplitudes(), b.amplitudes()).norm_sqr();
    sampler.binomial(f.min(1.0))
}

/// Imaginary-time gradient `b^I = −∇E/2`.
///
/// Parameter shift charges `2dP` circuits; derivative states charge `dP`
/// (one Hadamard test per parameter and term, each a ±1 outcome bounded by 1/2).
pub fn energy_gradient_b_imag(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    h: &PauliSum,
    method: GradientMethod,
    sampler: &mut Sampler,
) -> Result<EvolutionGradient> {
    circuit.check_params(theta)?;
    let d = circuit.n_params();
    let p = h.n_measured_terms() as u64;
    let state = circuit.run(theta)?;
    check_register(h, &state)?;

    if sampler.is_exact() {
        if let GradientMethod::ParameterShift { shift } = method {
            check_shift(shift)?;
        }
        let hphi = h.apply(state.amplitudes())?;
        let ov = shift_overlaps(circuit, &hphi, theta)?;
        // Re⟨∂φ|H|φ⟩ = Re⟨Hφ|A⟩/2
        let values = ov.inserted.iter().map(|a| -a.re / 2.0).collect();
        sampler.charge(match method.cost_tag() {
            CostTag::Psr => 2 * d as u64 * p,
            CostTag::Lcu => d as u64 * p,
        });
        return Ok(EvolutionGradient { values, kind: GradientKind::Imaginary });
    }

    let values = match method {
        GradientMethod::ParameterShift { shift } => {
            check_shift(shift)?;
            // exact per-term expectations at every shifted point, sampled in a fixed order
            let shifted: Vec<[Vec<f64>; 2]> = (0..d)
                .into_par_iter()
                .map(|i| {
                    let eval = |sign: f64| {
                        let mut t = theta.to_vec();
                        t[i] += sign * shift;
                        let s = circuit.run(&t).expect("length checked");
                        term_expectations(h, s.amplitudes())
                    };
                    [eval(1.0), eval(-1.0)]
                })
                .collect();
            let denom = 2.0 * shift.sin();
            shifted
                .iter()
                .map(|[plus, minus]| {
                    let ep = energy_from_terms(h, plus, sampler);
                    let em = energy_from_terms(h, minus, sampler);
                    -(ep - em) / denom / 2.0
                })
                .collect()
        }
        GradientMethod::DerivativeState => {
            let per_term = derivative_term_elements(circuit, theta, h, &state)?;
            let mut values = vec![0.0; d];
            for (t, row) in h.terms().iter().zip(&per_term) {
                if t.is_identity() {
                    continue;
                }
                for i in 0..d {
                    values[i] -= t.coeff() * sampler.two_outcome(row[i].re, 0.5);
                }
            }
            sampler.charge(d as u64 * p);
            values
        }
    };
    Ok(EvolutionGradient { values, kind: GradientKind::Imaginary })
}

/// `⟨∂_iφ|P_j|φ⟩` for every term `j` (rows) and parameter `i` (columns).
fn derivative_term_elements(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    h: &PauliSum,
    state: &StateVector,
) -> Result<Vec<Vec<C64>>> {
    h.terms()
        .par_iter()
        .map(|t| {
            let mut pphi = vec![C64::new(0.0, 0.0); state.dim()];
            t.accumulate(state.amplitudes(), C64::new(1.0, 0.0), &mut pphi);
            let ov = shift_overlaps(circuit, &pphi, theta)?;
            Ok(ov.inserted.iter().map(|a| a.conj() / 2.0).collect())
        })
        .collect()
}

/// Real-time gradient `b^R_i = Im(⟨∂_iφ|H|φ⟩ − ⟨∂_iφ|φ⟩E)`.
/// Sampled mode perturbs each exact component with Hadamard-test statistics at
/// scale `max(1, |E_max|)`. Charges `dP` circuits.
pub fn evolution_gradient_b_real(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    h: &PauliSum,
    sampler: &mut Sampler,
) -> Result<EvolutionGradient> {
    let scale = if sampler.is_exact() { 1.0 } else { real_gradient_scale(h) };
    evolution_gradient_b_real_scaled(circuit, theta, h, scale, sampler)
}

/// `max(1, |E_max|)`, the outcome scale of the real-time gradient model.
pub fn real_gradient_scale(h: &PauliSum) -> f64 {
    let (lo, hi) = energy_extremes(h, ExtremesMode::Auto);
    lo.abs().max(hi.abs()).max(1.0)
}

/// [`evolution_gradient_b_real`] with a precomputed outcome scale.
pub fn evolution_gradient_b_real_scaled(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    h: &PauliSum,
    v_scale: f64,
    sampler: &mut Sampler,
) -> Result<EvolutionGradient> {
    circuit.check_params(theta)?;
    let state = circuit.run(theta)?;
    check_register(h, &state)?;
    let hphi = h.apply(state.amplitudes())?;
    let e = dot(state.amplitudes(), &hphi).re;
    let with_h = shift_overlaps(circuit, &hphi, theta)?;
    let with_phi = shift_overlaps(circuit, state.amplitudes(), theta)?;
    let d = circuit.n_params();
    let values = (0..d)
        .map(|i| {
            let dh = with_h.inserted[i].conj() / 2.0;
            let dp = with_phi.inserted[i].conj() / 2.0;
            let v = (dh - dp * e).im;
            sampler.two_outcome(v, v_scale)
        })
        .collect();
    sampler.charge(d as u64 * h.n_measured_terms() as u64);
    Ok(EvolutionGradient { values, kind: GradientKind::Real })
}

/// `∂F(θ, θ+δθ)/∂δθ_i = (F(θ, θ+δθ+s·e_i) − F(θ, θ+δθ−s·e_i)) / (2 sin s)`.
/// Two fidelity circuits per component.
pub fn fidelity_gradient_psr(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    delta: &[f64],
    shift: f64,
    sampler: &mut Sampler,
) -> Result<Vec<f64>> {
    check_shift(shift)?;
    let (_, ov) = fidelity_overlaps(circuit, theta, delta)?;
    let d = circuit.n_params();
    let denom = 2.0 * shift.sin();
    let mut grad = Vec::with_capacity(d);
    for i in 0..d {
        let fp = ov.shifted(i, shift).norm_sqr().min(1.0);
        let fm = ov.shifted(i, -shift).norm_sqr().min(1.0);
        let (fp, fm) = (sampler.binomial(fp)?, sampler.binomial(fm)?);
        grad.push((fp - fm) / denom);
    }
    sampler.charge(2 * d as u64);
    Ok(grad)
}

/// Fidelity gradient from derivative-state overlaps, `2 Re(conj(o)·∂o)`, with
/// ±1-outcome statistics bounded by 1/2 per component. One circuit per component.
pub fn fidelity_gradient_lcu(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    delta: &[f64],
    sampler: &mut Sampler,
) -> Result<Vec<f64>> {
    let (_, ov) = fidelity_overlaps(circuit, theta, delta)?;
    let d = circuit.n_params();
    let grad = (0..d)
        .map(|i| {
            let v = (ov.base.conj() * ov.inserted[i]).re;
            sampler.two_outcome(v, 0.5)
        })
        .collect();
    sampler.charge(d as u64);
    Ok(grad)
}

/// Fidelity gradient by `method`: PSR charges `2d`, derivative states `d`.
pub fn fidelity_gradient(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    delta: &[f64],
    method: GradientMethod,
    sampler: &mut Sampler,
) -> Result<Vec<f64>> {
    match method {
        GradientMethod::ParameterShift { shift } => fidelity_gradient_psr(circuit, theta, delta, shift, sampler),
        GradientMethod::DerivativeState => fidelity_gradient_lcu(circuit, theta, delta, sampler),
    }
}

fn fidelity_overlaps(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
    delta: &[f64],
) -> Result<(StateVector, crate::sim::ShiftOverlaps)> {
    circuit.check_params(theta)?;
    circuit.check_params(delta)?;
    let bra = circuit.run(theta)?;
    let shifted: Vec<f64> = theta.iter().zip(delta).map(|(a, b)| a + b).collect();
    let ov = shift_overlaps(circuit, bra.amplitudes(), &shifted)?;
    Ok((bra, ov))
}

/// `g = Re(G)` from derivative states.
pub fn qgt_exact(circuit: &ParameterizedCircuit, theta: &[f64]) -> Result<QgtMatrix> {
    let (state, derivs) = derivative_states(circuit, theta)?;
    let d = derivs.len();
    let proj: Vec<C64> = derivs.iter().map(|dv| dot(state.amplitudes(), dv)).collect();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = (dot(&derivs[i], &derivs[j]) - proj[i].conj() * proj[j]).re;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(QgtMatrix { g })
}

/// `g_ij = −(F⁺⁺ − F⁺⁻ − F⁻⁺ + F⁻⁻)/8` with `±π/2` shifts on slots `i` and `j`,
/// each fidelity sampled independently, then symmetrized. Charges `2d(d+1)` circuits.
pub fn qgt_psr(circuit: &ParameterizedCircuit, theta: &[f64], sampler: &mut Sampler) -> Result<QgtMatrix> {
    let po = pair_overlaps(circuit, theta)?;
    let d = circuit.n_params();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut f = |si: f64, sj: f64| -> Result<f64> {
                if i == j && si != sj {
                    // zero net shift: coincident states, no circuit needed
                    return Ok(1.0);
                }
                sampler.binomial(po.double_shift(i, j, si, sj).norm_sqr().min(1.0))
            };
            let v = -(f(1.0, 1.0)? - f(1.0, -1.0)? - f(-1.0, 1.0)? + f(-1.0, -1.0)?) / 8.0;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    sampler.charge(2 * d as u64 * (d as u64 + 1));
    Ok(QgtMatrix { g: (&g + g.transpose()) * 0.5 })
}

/// Derivative-state QGT with ±1-outcome statistics bounded by 1/4 per entry.
/// Charges `d(d+5)/2` circuits: one per upper-triangular entry plus `2d` for
/// the projector terms.
pub fn qgt_lcu(circuit: &ParameterizedCircuit, theta: &[f64], sampler: &mut Sampler) -> Result<QgtMatrix> {
    let exact = qgt_exact(circuit, theta)?;
    let d = exact.dim();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = sampler.two_outcome(exact.g[(i, j)], 0.25);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    sampler.charge(d as u64 * (d as u64 + 5) / 2);
    Ok(QgtMatrix { g })
}

/// QGT by `method`'s cost model.
pub fn qgt(circuit: &ParameterizedCircuit, theta: &[f64], method: GradientMethod, sampler: &mut Sampler) -> Result<QgtMatrix> {
    match method.cost_tag() {
        CostTag::Psr => qgt_psr(circuit, theta, sampler),
        CostTag::Lcu => qgt_lcu(circuit, theta, sampler),
    }
}

/// Rotation taking `basis` eigenstates to the computational basis.
fn basis_rotation(basis: Pauli) -> Option<[[C64; 2]; 2]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (r, i) = (C64::new(h, 0.0), C64::new(0.0, h));
    match basis {
        Pauli::I | Pauli::Z => None,
        // Hadamard
        Pauli::X => Some([[r, r], [r, -r]]),
        // H·S†
        Pauli::Y => Some([[r, -i], [r, i]]),
    }
}

/// Rotates every qubit into the eigenbasis of `letters[q]` (X, Y or Z).
pub fn rotate_to_basis(amps: &mut [C64], letters: &[Pauli]) {
    for (q, &l) in letters.iter().enumerate() {
        if let Some(m) = basis_rotation(l) {
            crate::sim::apply_single_qubit(amps, q, &m);
        }
    }
}

/// Draws `shots` computational-basis outcomes from `probs` (returns indices).
pub fn sample_outcomes(probs: &[f64], shots: u64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let dist = rand_distr::weighted::WeightedIndex::new(probs.iter().map(|p| p.max(0.0))).expect("non-degenerate distribution");
    (0..shots).map(|_| dist.sample(rng)).collect()
}

/// Energy estimated from bitstring readout: the terms are grouped by
/// measurement setting (the Pauli letter on every qubit), each setting is
/// measured with `shots` bitstrings and every term in it is averaged from the
/// same outcomes. Terms mixing letters form settings of their own.
pub fn energy_from_readout(h: &PauliSum, state: &StateVector, shots: u64, sampler: &mut Sampler) -> Result<f64> {
    check_register(h, state)?;
    let n = h.n_qubits();
    let mut settings: Vec<Vec<Pauli>> = Vec::new();
    let mut setting_of = Vec::with_capacity(h.n_terms());
    for t in h.terms() {
        if t.is_identity() {
            setting_of.push(None);
            continue;
        }
        let fits = |s: &Vec<Pauli>| t.letters().iter().zip(s).all(|(a, b)| *a == Pauli::I || a == b);
        let idx = match settings.iter().position(fits) {
            Some(k) => k,
            None => {
                let letters = t.letters().to_vec();
                // uniform settings let later same-letter terms join
                let uniform = letters.iter().filter(|l| **l != Pauli::I).all(|l| *l == letters.iter().find(|l| **l != Pauli::I).copied().unwrap());
                let setting = if uniform {
                    let l = *letters.iter().find(|l| **l != Pauli::I).unwrap();
                    vec![l; n]
                } else {
                    letters.iter().map(|l| if *l == Pauli::I { Pauli::Z } else { *l }).collect()
                };
                settings.push(setting);
                settings.len() - 1
            }
        };
        setting_of.push(Some(idx));
    }
    let outcomes: Vec<Vec<usize>> = settings
        .iter()
        .map(|s| {
            let mut amps = state.amplitudes().to_vec();
            rotate_to_basis(&mut amps, s);
            let probs: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
            sample_outcomes(&probs, shots, sampler.rng())
        })
        .collect();
    sampler.charge(settings.len() as u64);
    let mut e = 0.0;
    for (t, s) in h.terms().iter().zip(&setting_of) {
        match s {
            None => e += t.coeff(),
            Some(k) => {
                let mask: usize = t.letters().iter().enumerate().filter(|(_, l)| **l != Pauli::I).map(|(q, _)| 1 << q).sum();
                let total: f64 = outcomes[*k]
                    .iter()
                    .map(|idx| if (idx & mask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 })
                    .sum();
                e += t.coeff() * total / shots as f64;
            }
        }
    }
    Ok(e)
}
