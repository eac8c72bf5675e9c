use serde::{Deserialize, Serialize};

use crate::{QteError, Result, C64};

/// Supported gate kinds. Rotations follow `R_P(θ) = exp(-iθP/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    RZZ,
    CX,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::CX)
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::RX | GateKind::RY | GateKind::RZ => 1,
            GateKind::RZZ | GateKind::CX => 2,
        }
    }
}

/// A gate on one or two qubits. Rotation gates read their angle from the
/// parameter slot `param`; `CX` carries none.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: [usize; 2],
    pub param: Option<usize>,
}

impl Gate {
    pub fn rx(q: usize, slot: usize) -> Self {
        Self { kind: GateKind::RX, qubits: [q, q], param: Some(slot) }
    }

    pub fn ry(q: usize, slot: usize) -> Self {
        Self { kind: GateKind::RY, qubits: [q, q], param: Some(slot) }
    }

    pub fn rz(q: usize, slot: usize) -> Self {
        Self { kind: GateKind::RZ, qubits: [q, q], param: Some(slot) }
    }

    pub fn rzz(a: usize, b: usize, slot: usize) -> Self {
        Self { kind: GateKind::RZZ, qubits: [a, b], param: Some(slot) }
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Self { kind: GateKind::CX, qubits: [control, target], param: None }
    }

    pub fn targets(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub(crate) fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.kind.is_rotation() != self.param.is_some() {
            return Err(QteError::InvalidGate(format!(
                "{:?} must {}carry a parameter slot",
                self.kind,
                if self.kind.is_rotation() { "" } else { "not " }
            )));
        }
        if self.targets().iter().any(|&q| q >= n_qubits) {
            return Err(QteError::InvalidGate(format!(
                "{:?} on {:?} exceeds {n_qubits} qubits",
                self.kind,
                self.targets()
            )));
        }
        if self.kind.arity() == 2 && self.qubits[0] == self.qubits[1] {
            return Err(QteError::InvalidGate(format!(
                "{:?} targets must be distinct",
                self.kind
            )));
        }
        Ok(())
    }

    /// Applies the gate (rotations at `angle`) to raw amplitudes.
    pub(crate) fn apply(&self, amps: &mut [C64], angle: f64) {
        let q = self.qubits[0];
        match self.kind {
            GateKind::RX => {
                let (s, c) = (angle / 2.0).sin_cos();
                let m = [
                    [C64::new(c, 0.0), C64::new(0.0, -s)],
                    [C64::new(0.0, -s), C64::new(c, 0.0)],
                ];
                apply_1q(amps, q, &m);
            }
            GateKind::RY => {
                let (s, c) = (angle / 2.0).sin_cos();
                let m = [
                    [C64::new(c, 0.0), C64::new(-s, 0.0)],
                    [C64::new(s, 0.0), C64::new(c, 0.0)],
                ];
                apply_1q(amps, q, &m);
            }
            GateKind::RZ => {
                let (s, c) = (angle / 2.0).sin_cos();
                apply_diag_1q(amps, q, C64::new(c, -s), C64::new(c, s));
            }
            GateKind::RZZ => {
                let (s, c) = (angle / 2.0).sin_cos();
                let even = C64::new(c, -s);
                let odd = C64::new(c, s);
                let (a, b) = (self.qubits[0], self.qubits[1]);
                for (idx, amp) in amps.iter_mut().enumerate() {
                    let parity = ((idx >> a) ^ (idx >> b)) & 1;
                    *amp *= if parity == 0 { even } else { odd };
                }
            }
            GateKind::CX => apply_cx(amps, self.qubits[0], self.qubits[1]),
        }
    }

    /// Applies the inverse gate.
    pub(crate) fn apply_inverse(&self, amps: &mut [C64], angle: f64) {
        self.apply(amps, -angle);
    }

    /// Applies `-i G` where `G` is the Hermitian generator of the rotation
    /// (X, Y, Z or Z⊗Z), so that `∂R(θ)/∂θ = (-i G / 2) R(θ)`.
    pub(crate) fn apply_minus_i_generator(&self, amps: &mut [C64]) {
        let q = self.qubits[0];
        let mi = C64::new(0.0, -1.0);
        match self.kind {
            GateKind::RX => {
                let m = [[C64::new(0.0, 0.0), mi], [mi, C64::new(0.0, 0.0)]];
                apply_1q(amps, q, &m);
            }
            GateKind::RY => {
                // -i Y = [[0, -1], [1, 0]]
                let m = [
                    [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
                    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                ];
                apply_1q(amps, q, &m);
            }
            GateKind::RZ => apply_diag_1q(amps, q, mi, -mi),
            GateKind::RZZ => {
                let (a, b) = (self.qubits[0], self.qubits[1]);
                for (idx, amp) in amps.iter_mut().enumerate() {
                    let parity = ((idx >> a) ^ (idx >> b)) & 1;
                    *amp *= if parity == 0 { mi } else { -mi };
                }
            }
            GateKind::CX => unreachable!("CX has no generator"),
        }
    }

    /// Dense 2^n × 2^n unitary, column-major over basis inputs. Test support.
    pub fn dense_unitary(&self, n_qubits: usize, angle: f64) -> Vec<Vec<C64>> {
        let dim = 1usize << n_qubits;
        let mut cols = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut e = vec![C64::new(0.0, 0.0); dim];
            e[j] = C64::new(1.0, 0.0);
            self.apply(&mut e, angle);
            cols.push(e);
        }
        cols
    }
}

pub(crate) fn apply_1q(amps: &mut [C64], q: usize, m: &[[C64; 2]; 2]) {
    let stride = 1usize << q;
    let dim = amps.len();
    let mut base = 0;
    while base < dim {
        for i in base..base + stride {
            let a0 = amps[i];
            let a1 = amps[i + stride];
            amps[i] = m[0][0] * a0 + m[0][1] * a1;
            amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
        }
        base += 2 * stride;
    }
}

fn apply_diag_1q(amps: &mut [C64], q: usize, d0: C64, d1: C64) {
    for (idx, amp) in amps.iter_mut().enumerate() {
        *amp *= if (idx >> q) & 1 == 0 { d0 } else { d1 };
    }
}

fn apply_cx(amps: &mut [C64], control: usize, target: usize) {
    let cmask = 1usize << control;
    let tmask = 1usize << target;
    for idx in 0..amps.len() {
        if idx & cmask != 0 && idx & tmask == 0 {
            amps.swap(idx, idx | tmask);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ket(amps: &[f64]) -> Vec<C64> {
        amps.iter().map(|&a| C64::new(a, 0.0)).collect()
    }

    #[test]
    fn ry_half_pi_makes_plus() {
        let mut v = ket(&[1.0, 0.0]);
        Gate::ry(0, 0).apply(&mut v, PI / 2.0);
        let h = 1.0 / 2f64.sqrt();
        assert!((v[0] - h).norm() < 1e-15 && (v[1] - h).norm() < 1e-15);
    }

    #[test]
    fn cx_flips_target_when_control_set() {
        // |q1 q0> = |01> (index 1) -> control q0 set -> |11> (index 3)
        let mut v = ket(&[0.0, 1.0, 0.0, 0.0]);
        Gate::cx(0, 1).apply(&mut v, 0.0);
        assert!((v[3] - 1.0).norm() < 1e-15);
    }

    #[test]
    fn inverse_undoes_every_kind() {
        let gates = [
            Gate::rx(0, 0),
            Gate::ry(1, 0),
            Gate::rz(0, 0),
            Gate::rzz(0, 1, 0),
            Gate::cx(1, 0),
        ];
        let start: Vec<C64> = (0..4).map(|k| C64::new(0.1 * k as f64 + 0.2, -0.05 * k as f64)).collect();
        for g in &gates {
            let mut v = start.clone();
            g.apply(&mut v, 0.731);
            g.apply_inverse(&mut v, 0.731);
            for (a, b) in v.iter().zip(&start) {
                assert!((a - b).norm() < 1e-14, "{:?}", g.kind);
            }
        }
    }

    #[test]
    fn generator_matches_finite_difference() {
        let start: Vec<C64> = (0..4).map(|k| C64::new(0.3 - 0.1 * k as f64, 0.07 * k as f64)).collect();
        let theta = 0.4;
        let h = 1e-6;
        for g in [Gate::rx(1, 0), Gate::ry(0, 0), Gate::rz(1, 0), Gate::rzz(0, 1, 0)] {
            let mut plus = start.clone();
            g.apply(&mut plus, theta + h);
            let mut minus = start.clone();
            g.apply(&mut minus, theta - h);
            let mut analytic = start.clone();
            g.apply(&mut analytic, theta);
            g.apply_minus_i_generator(&mut analytic);
            for k in 0..4 {
                let fd = (plus[k] - minus[k]) / (2.0 * h);
                assert!((fd - analytic[k] * 0.5).norm() < 1e-8, "{:?}", g.kind);
            }
        }
    }

    #[test]
    fn validation_rules() {
        assert!(Gate::cx(0, 0).validate(2).is_err());
        assert!(Gate::ry(2, 0).validate(2).is_err());
        let bad = Gate { kind: GateKind::CX, qubits: [0, 1], param: Some(0) };
        assert!(bad.validate(2).is_err());
        assert!(Gate::rzz(0, 1, 3).validate(2).is_ok());
    }
}
