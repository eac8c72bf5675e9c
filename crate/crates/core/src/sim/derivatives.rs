//! Exact parameter derivatives and shifted-circuit overlaps.
//!
//! For a rotation `R(θ) = exp(-iθG/2)` a shift by `s` factorizes as
//! `R(θ+s) = (cos(s/2) - i sin(s/2) G) R(θ)`, so every shifted state is a
//! linear combination of the unshifted state and the state with `-iG` inserted
//! after the gate. The functions below compute those insertions for all slots
//! with forward/backward sweeps instead of one circuit run per shift.

use super::ansatz::ParameterizedCircuit;
use super::state::{dot, StateVector};
use crate::{Result, C64};

/// `⟨bra|φ(θ)⟩` and, per slot `s`, `⟨bra|A_s⟩` with `A_s = 2 ∂_s|φ(θ)⟩`.
#[derive(Clone, Debug)]
pub struct ShiftOverlaps {
    pub base: C64,
    pub inserted: Vec<C64>,
}

impl ShiftOverlaps {
    /// `⟨bra|φ(θ + s·e_slot)⟩`.
    pub fn shifted(&self, slot: usize, shift: f64) -> C64 {
        let (s, c) = (shift / 2.0).sin_cos();
        self.base * c + self.inserted[slot] * s
    }
}

fn slot_gates(circuit: &ParameterizedCircuit) -> Vec<usize> {
    let mut out = vec![0; circuit.n_params()];
    for (k, g) in circuit.gates().iter().enumerate() {
        if let Some(s) = g.param {
            out[s] = k;
        }
    }
    out
}

/// The prepared state and every derivative state `∂_s|φ(θ)⟩`.
pub fn derivative_states(
    circuit: &ParameterizedCircuit,
    theta: &[f64],
) -> Result<(StateVector, Vec<Vec<C64>>)> {
    circuit.check_params(theta)?;
    let gates = circuit.gates();
    let mut state = StateVector::zero(circuit.n_qubits())?;
    let mut derivs = vec![Vec::new(); circuit.n_params()];
    for (k, g) in gates.iter().enumerate() {
        g.apply(state.amplitudes_mut(), circuit.angle(g, theta));
        if let Some(slot) = g.param {
            let mut d = state.amplitudes().to_vec();
            g.apply_minus_i_generator(&mut d);
            for later in &gates[k + 1..] {
                later.apply(&mut d, circuit.angle(later, theta));
            }
            for a in &mut d {
                *a *= 0.5;
            }
            derivs[slot] = d;
        }
    }
    Ok((state, derivs))
}

/// Overlaps of `bra` with `φ(θ)` and with every generator-inserted state.
/// Costs two circuit passes regardless of the parameter count.
pub fn shift_overlaps(
    circuit: &ParameterizedCircuit,
    bra: &[C64],
    theta: &[f64],
) -> Result<ShiftOverlaps> {
    circuit.check_params(theta)?;
    let ket = circuit.run(theta)?;
    if bra.len() != ket.dim() {
        return Err(crate::QteError::DimensionMismatch { expected: ket.dim(), got: bra.len() });
    }
    let base = dot(bra, ket.amplitudes());
    let mut lam = bra.to_vec();
    let mut psi = ket.into_amplitudes();
    let mut inserted = vec![C64::new(0.0, 0.0); circuit.n_params()];
    let mut scratch = vec![C64::new(0.0, 0.0); psi.len()];
    for g in circuit.gates().iter().rev() {
        let angle = circuit.angle(g, theta);
        if let Some(slot) = g.param {
            // psi is the state right after this gate; G commutes with R.
            scratch.copy_from_slice(&psi);
            g.apply_minus_i_generator(&mut scratch);
            inserted[slot] = dot(&lam, &scratch);
        }
        g.apply_inverse(&mut lam, angle);
        g.apply_inverse(&mut psi, angle);
    }
    Ok(ShiftOverlaps { base, inserted })
}

/// Overlaps needed for the second-order shift rule at coincidence:
/// `single[i] = ⟨φ|A_i⟩` and, for `i ≠ j`, `pair[i][j] = ⟨φ|A_ij⟩`, where
/// `A_ij` inserts `-iG` after both gates. The diagonal of `pair` is unused.
#[derive(Clone, Debug)]
pub struct PairOverlaps {
    pub single: Vec<C64>,
    pub pair: Vec<Vec<C64>>,
}

impl PairOverlaps {
    /// `⟨φ(θ)|φ(θ + σ_i·π/2·e_i + σ_j·π/2·e_j)⟩` with `σ = ±1`.
    pub fn double_shift(&self, i: usize, j: usize, si: f64, sj: f64) -> C64 {
        if i == j {
            // total shift of (si+sj)·π/2 on a single slot
            let s = (si + sj) * std::f64::consts::FRAC_PI_2;
            let (sn, c) = (s / 2.0).sin_cos();
            return C64::new(c, 0.0) + self.single[i] * sn;
        }
        (C64::new(1.0, 0.0) + self.single[i] * si + self.single[j] * sj + self.pair[i][j] * (si * sj)) * 0.5
    }
}

pub fn pair_overlaps(circuit: &ParameterizedCircuit, theta: &[f64]) -> Result<PairOverlaps> {
    circuit.check_params(theta)?;
    let d = circuit.n_params();
    let gates = circuit.gates();
    let slot_gate = slot_gates(circuit);

    // forward[s]: state right after the gate of slot s
    let mut psi = StateVector::zero(circuit.n_qubits())?.into_amplitudes();
    let mut forward = vec![Vec::new(); d];
    for g in gates {
        g.apply(&mut psi, circuit.angle(g, theta));
        if let Some(s) = g.param {
            forward[s] = psi.clone();
        }
    }
    let phi = psi;

    // backward[s] = U_{>k}† |φ⟩ for the gate k of slot s
    let mut lam = phi.clone();
    let mut backward = vec![Vec::new(); d];
    for g in gates.iter().rev() {
        if let Some(s) = g.param {
            backward[s] = lam.clone();
        }
        g.apply_inverse(&mut lam, circuit.angle(g, theta));
    }

    let mut scratch = vec![C64::new(0.0, 0.0); phi.len()];
    let mut single = vec![C64::new(0.0, 0.0); d];
    for s in 0..d {
        scratch.copy_from_slice(&forward[s]);
        gates[slot_gate[s]].apply_minus_i_generator(&mut scratch);
        single[s] = dot(&backward[s], &scratch);
    }

    let mut pair = vec![vec![C64::new(0.0, 0.0); d]; d];
    for j in 0..d {
        let kj = slot_gate[j];
        // ⟨φ|U_{>kj}(-iG_j) X⟩ = ⟨(iG_j)B_j|X⟩ and iG = -(-iG)
        let mut mu = backward[j].clone();
        gates[kj].apply_minus_i_generator(&mut mu);
        for a in &mut mu {
            *a = -*a;
        }
        for k in (0..=kj).rev() {
            let g = &gates[k];
            g.apply_inverse(&mut mu, circuit.angle(g, theta));
            if k == 0 {
                break;
            }
            if let Some(i) = gates[k - 1].param {
                scratch.copy_from_slice(&forward[i]);
                gates[k - 1].apply_minus_i_generator(&mut scratch);
                let v = dot(&mu, &scratch);
                pair[i][j] = v;
                pair[j][i] = v;
            }
        }
    }
    Ok(PairOverlaps { single, pair })
}
