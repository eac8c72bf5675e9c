use serde::{Deserialize, Serialize};

use super::gate::{Gate, GateKind};
use super::state::{check_qubits, StateVector};
use crate::{QteError, Result, C64};
use std::f64::consts::FRAC_PI_2;
use std::f64::consts::PI;

/// Which single-qubit rotations make up one EfficientSU2 rotation layer.
/// The first letter is applied first, followed by an `RZ` sub-layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationPair {
    Yz,
    Xz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AnsatzFamily {
    EfficientSu2 { rotations: RotationPair },
    AlternatingXy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entangler {
    /// CX on (0,1),(2,3),… then (1,2),(3,4),…: depth two per layer.
    PairwiseCx,
    /// Parameterized RZZ on (0,1),(1,2),…,(n-2,n-1).
    ChainRzz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub reps: usize,
    pub family: AnsatzFamily,
    pub entangler: Entangler,
    pub final_rotation_layer: bool,
}

impl AnsatzSpec {
    /// Y/Z rotation layers with pairwise CX entanglers and a final rotation layer.
    pub fn efficient_su2(n_qubits: usize, reps: usize) -> Self {
        Self {
            n_qubits,
            reps,
            family: AnsatzFamily::EfficientSu2 { rotations: RotationPair::Yz },
            entangler: Entangler::PairwiseCx,
            final_rotation_layer: true,
        }
    }

    pub fn with_rotations(mut self, rotations: RotationPair) -> Self {
        if let AnsatzFamily::EfficientSu2 { .. } = self.family {
            self.family = AnsatzFamily::EfficientSu2 { rotations };
        }
        self
    }

    /// Alternating RX / RY layers with chain RZZ entanglers.
    pub fn alternating_xy(n_qubits: usize, reps: usize) -> Self {
        Self {
            n_qubits,
            reps,
            family: AnsatzFamily::AlternatingXy,
            entangler: Entangler::ChainRzz,
            final_rotation_layer: true,
        }
    }

    /// Number of parameters the built circuit will have.
    pub fn n_params(&self) -> usize {
        let n = self.n_qubits;
        let rot_layers = self.reps + usize::from(self.final_rotation_layer);
        match self.family {
            AnsatzFamily::EfficientSu2 { .. } => 2 * n * rot_layers,
            AnsatzFamily::AlternatingXy => n * rot_layers + self.reps * n.saturating_sub(1),
        }
    }
}

/// One layer of identical single-qubit rotations; `slots[q]` is the slot of qubit `q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotationLayer {
    pub kind: GateKind,
    pub slots: Vec<usize>,
}

/// Ordered gate list with one parameter slot per rotation gate.
#[derive(Clone, Debug)]
pub struct ParameterizedCircuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_params: usize,
    spec: Option<AnsatzSpec>,
    layers: Vec<RotationLayer>,
}

impl ParameterizedCircuit {
    /// Builds a circuit from an explicit gate list. Every slot in `0..d` must be
    /// used by exactly one rotation gate.
    pub fn new(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        check_qubits(n_qubits)?;
        let mut used = Vec::new();
        for g in &gates {
            g.validate(n_qubits)?;
            if let Some(slot) = g.param {
                if slot >= used.len() {
                    used.resize(slot + 1, false);
                }
                if used[slot] {
                    return Err(QteError::InvalidGate(format!(
                        "parameter slot {slot} is used by more than one gate"
                    )));
                }
                used[slot] = true;
            }
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(QteError::InvalidGate(format!("parameter slot {missing} is unused")));
        }
        Ok(Self {
            n_qubits,
            gates,
            n_params: used.len(),
            spec: None,
            layers: Vec::new(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn spec(&self) -> Option<&AnsatzSpec> {
        self.spec.as_ref()
    }

    pub fn rotation_layers(&self) -> &[RotationLayer] {
        &self.layers
    }

    pub(crate) fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params {
            return Err(QteError::ParameterLength {
                expected: self.n_params,
                got: theta.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn angle(&self, gate: &Gate, theta: &[f64]) -> f64 {
        gate.param.map_or(0.0, |s| theta[s])
    }

    /// Prepares `U(θ)|0…0⟩`.
    pub fn run(&self, theta: &[f64]) -> Result<StateVector> {
        self.check_params(theta)?;
        let mut state = StateVector::zero(self.n_qubits)?;
        let amps = state.amplitudes_mut();
        for g in &self.gates {
            g.apply(amps, self.angle(g, theta));
        }
        Ok(state)
    }
}

/// Builds the layered ansatz described by `spec`.
pub fn build_ansatz(spec: &AnsatzSpec) -> Result<ParameterizedCircuit> {
    let n = spec.n_qubits;
    check_qubits(n)?;
    match (spec.family, spec.entangler) {
        (AnsatzFamily::EfficientSu2 { .. }, Entangler::PairwiseCx)
        | (AnsatzFamily::AlternatingXy, Entangler::ChainRzz) => {}
        (family, entangler) => {
            return Err(QteError::InvalidAnsatz(format!(
                "unsupported combination {family:?} with {entangler:?}"
            )))
        }
    }

    let mut gates = Vec::new();
    let mut layers = Vec::new();
    let mut next_slot = 0usize;
    fn rotation_layer(
        n: usize,
        kind: GateKind,
        next_slot: &mut usize,
        gates: &mut Vec<Gate>,
        layers: &mut Vec<RotationLayer>,
    ) {
        let mut slots = Vec::with_capacity(n);
        for q in 0..n {
            let slot = *next_slot;
            *next_slot += 1;
            slots.push(slot);
            gates.push(match kind {
                GateKind::RX => Gate::rx(q, slot),
                GateKind::RY => Gate::ry(q, slot),
                GateKind::RZ => Gate::rz(q, slot),
                _ => unreachable!(),
            });
        }
        layers.push(RotationLayer { kind, slots });
    }

    let n_rot = spec.reps + usize::from(spec.final_rotation_layer);
    match spec.family {
        AnsatzFamily::EfficientSu2 { rotations } => {
            let first = match rotations {
                RotationPair::Yz => GateKind::RY,
                RotationPair::Xz => GateKind::RX,
            };
            for layer in 0..n_rot {
                rotation_layer(n, first, &mut next_slot, &mut gates, &mut layers);
                rotation_layer(n, GateKind::RZ, &mut next_slot, &mut gates, &mut layers);
                if layer < spec.reps {
                    for offset in [0, 1] {
                        let mut q = offset;
                        while q + 1 < n {
                            gates.push(Gate::cx(q, q + 1));
                            q += 2;
                        }
                    }
                }
            }
        }
        AnsatzFamily::AlternatingXy => {
            for layer in 0..n_rot {
                let kind = if layer % 2 == 0 { GateKind::RX } else { GateKind::RY };
                rotation_layer(n, kind, &mut next_slot, &mut gates, &mut layers);
                if layer < spec.reps {
                    for q in 0..n.saturating_sub(1) {
                        gates.push(Gate::rzz(q, q + 1, next_slot));
                        next_slot += 1;
                    }
                }
            }
        }
    }

    let mut circuit = ParameterizedCircuit::new(n, gates)?;
    debug_assert_eq!(circuit.n_params, spec.n_params());
    circuit.spec = Some(*spec);
    circuit.layers = layers;
    Ok(circuit)
}

/// Measurement basis for product states and collapses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

/// Named initial states reachable by binding the final rotation layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialState {
    /// |+⟩ on every qubit.
    PlusAll,
    /// Product of basis eigenstates; outcome bit 0 ↦ |+⟩, |+i⟩ or |0⟩,
    /// bit 1 ↦ |−⟩, |−i⟩ or |1⟩. `outcome[q]` is qubit `q`.
    Product { basis: Basis, outcome: Vec<u8> },
}

impl InitialState {
    pub fn product_from_bits(basis: Basis, bits: &str) -> Result<Self> {
        let outcome = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(QteError::InvalidArgument(format!("bad outcome bit {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self::Product { basis, outcome })
    }
}

/// Parameter vector that makes `circuit` prepare `target`; every parameter
/// outside the final rotation layer is zero.
pub fn initial_parameter_binding(
    circuit: &ParameterizedCircuit,
    target: &InitialState,
) -> Result<Vec<f64>> {
    let spec = circuit.spec().ok_or_else(|| {
        QteError::InvalidAnsatz("initial bindings need a circuit built from an AnsatzSpec".into())
    })?;
    let n = spec.n_qubits;
    let mut theta = vec![0.0; circuit.n_params()];
    let last_of = |kind: GateKind| circuit.layers.iter().rev().find(|l| l.kind == kind);

    match target {
        InitialState::PlusAll => {
            let layer = last_of(GateKind::RY).ok_or_else(|| {
                QteError::InvalidAnsatz("plus state needs an RY rotation layer".into())
            })?;
            for &s in &layer.slots {
                theta[s] = FRAC_PI_2;
            }
        }
        InitialState::Product { basis, outcome } => {
            if outcome.len() != n {
                return Err(QteError::DimensionMismatch { expected: n, got: outcome.len() });
            }
            if !spec.final_rotation_layer {
                return Err(QteError::InvalidAnsatz(
                    "product states need a final rotation layer".into(),
                ));
            }
            let rotations = match spec.family {
                AnsatzFamily::EfficientSu2 { rotations } => rotations,
                AnsatzFamily::AlternatingXy => {
                    return Err(QteError::InvalidAnsatz(
                        "product bindings are defined for EfficientSU2 circuits".into(),
                    ))
                }
            };
            let z_layer = last_of(GateKind::RZ).expect("EfficientSU2 has RZ layers");
            match (basis, rotations) {
                (Basis::X, RotationPair::Yz) => {
                    let y_layer = last_of(GateKind::RY).expect("Yz family has RY layers");
                    for q in 0..n {
                        theta[y_layer.slots[q]] = if outcome[q] == 0 { FRAC_PI_2 } else { -FRAC_PI_2 };
                    }
                }
                (Basis::Z, RotationPair::Yz) => {
                    let y_layer = last_of(GateKind::RY).expect("Yz family has RY layers");
                    for q in 0..n {
                        theta[y_layer.slots[q]] = if outcome[q] == 0 { 0.0 } else { PI };
                    }
                }
                (Basis::Y, RotationPair::Xz) => {
                    let x_layer = last_of(GateKind::RX).expect("Xz family has RX layers");
                    for q in 0..n {
                        theta[x_layer.slots[q]] = FRAC_PI_2;
                        theta[z_layer.slots[q]] = if outcome[q] == 0 { PI } else { 0.0 };
                    }
                }
                (basis, rotations) => {
                    return Err(QteError::InvalidAnsatz(format!(
                        "{basis:?}-basis product states are not reachable with {rotations:?} rotation layers"
                    )))
                }
            }
        }
    }
    Ok(theta)
}

/// Single-qubit amplitudes of the basis eigenstate selected by `bit`.
pub fn basis_state(basis: Basis, bit: u8) -> [C64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match (basis, bit) {
        (Basis::X, 0) => [C64::new(h, 0.0), C64::new(h, 0.0)],
        (Basis::X, _) => [C64::new(h, 0.0), C64::new(-h, 0.0)],
        (Basis::Y, 0) => [C64::new(h, 0.0), C64::new(0.0, h)],
        (Basis::Y, _) => [C64::new(h, 0.0), C64::new(0.0, -h)],
        (Basis::Z, 0) => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        (Basis::Z, _) => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
    }
}

/// Free parameters mapped linearly onto circuit slots: `slot = Σ A[slot][k]·free[k]`.
/// Lets several gates share one logical parameter while every gate keeps its own
/// slot, so shift rules stay valid per slot.
#[derive(Clone, Debug)]
pub struct ParameterMap {
    n_free: usize,
    /// For each slot, the (free index, coefficient) pairs feeding it.
    rows: Vec<Vec<(usize, f64)>>,
}

impl ParameterMap {
    pub fn identity(d: usize) -> Self {
        Self { n_free: d, rows: (0..d).map(|i| vec![(i, 1.0)]).collect() }
    }

    /// `groups[k]` lists the slots that all take the value of free parameter `k`.
    pub fn shared(groups: &[Vec<usize>], n_slots: usize) -> Result<Self> {
        let mut rows = vec![Vec::new(); n_slots];
        for (k, group) in groups.iter().enumerate() {
            for &slot in group {
                if slot >= n_slots {
                    return Err(QteError::InvalidArgument(format!("slot {slot} out of range")));
                }
                rows[slot].push((k, 1.0));
            }
        }
        Ok(Self { n_free: groups.len(), rows })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_slots(&self) -> usize {
        self.rows.len()
    }

    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, c)| c * free[k]).sum())
            .collect()
    }

    /// `Aᵀ v` for a slot-space gradient `v`.
    pub fn pull_back(&self, slot_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (row, v) in self.rows.iter().zip(slot_values) {
            for &(k, c) in row {
                out[k] += c * v;
            }
        }
        out
    }

    /// `Aᵀ M A` for a slot-space matrix `M`.
    pub fn pull_back_matrix(&self, m: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.rows.len(), self.n_free);
        for (s, row) in self.rows.iter().enumerate() {
            for &(k, c) in row {
                a[(s, k)] += c;
            }
        }
        a.transpose() * m * a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::state::inner_product;

    #[test]
    fn efficient_su2_parameter_counts() {
        assert_eq!(build_ansatz(&AnsatzSpec::efficient_su2(12, 3)).unwrap().n_params(), 96);
        assert_eq!(build_ansatz(&AnsatzSpec::efficient_su2(2, 0)).unwrap().n_params(), 4);
        for n in 2..=14 {
            for r in 0..=6 {
                let c = build_ansatz(&AnsatzSpec::efficient_su2(n, r)).unwrap();
                assert_eq!(c.n_params(), 2 * n * (r + 1));
            }
        }
    }

    #[test]
    fn alternating_xy_matches_hand_enumeration() {
        let c = build_ansatz(&AnsatzSpec::alternating_xy(4, 3)).unwrap();
        let mut expected = Vec::new();
        let mut slot = 0;
        for layer in 0..4 {
            for q in 0..4 {
                expected.push(if layer % 2 == 0 { Gate::rx(q, slot) } else { Gate::ry(q, slot) });
                slot += 1;
            }
            if layer < 3 {
                for q in 0..3 {
                    expected.push(Gate::rzz(q, q + 1, slot));
                    slot += 1;
                }
            }
        }
        assert_eq!(c.gates(), expected.as_slice());
        assert_eq!(c.n_params(), 25);
    }

    #[test]
    fn pairwise_cx_pattern() {
        let c = build_ansatz(&AnsatzSpec::efficient_su2(5, 1)).unwrap();
        let cx: Vec<_> = c
            .gates()
            .iter()
            .filter(|g| g.kind == GateKind::CX)
            .map(|g| (g.qubits[0], g.qubits[1]))
            .collect();
        assert_eq!(cx, vec![(0, 1), (2, 3), (1, 2), (3, 4)]);
    }

    #[test]
    fn rejects_mismatched_entangler() {
        let mut spec = AnsatzSpec::efficient_su2(3, 1);
        spec.entangler = Entangler::ChainRzz;
        assert!(matches!(build_ansatz(&spec), Err(QteError::InvalidAnsatz(_))));
    }

    #[test]
    fn parameter_length_checked() {
        let c = build_ansatz(&AnsatzSpec::efficient_su2(2, 0)).unwrap();
        assert!(matches!(c.run(&[0.0; 3]), Err(QteError::ParameterLength { .. })));
    }

    #[test]
    fn custom_circuit_rejects_shared_slots() {
        let gates = vec![Gate::ry(0, 0), Gate::rz(0, 0)];
        assert!(ParameterizedCircuit::new(1, gates).is_err());
        let gates = vec![Gate::ry(0, 1)];
        assert!(ParameterizedCircuit::new(1, gates).is_err());
    }

    fn overlap_sq(a: &StateVector, b: &StateVector) -> f64 {
        inner_product(a, b).unwrap().norm_sqr()
    }

    #[test]
    fn plus_binding_prepares_plus_state() {
        for spec in [AnsatzSpec::efficient_su2(12, 3), AnsatzSpec::alternating_xy(4, 3)] {
            let c = build_ansatz(&spec).unwrap();
            let theta = initial_parameter_binding(&c, &InitialState::PlusAll).unwrap();
            let state = c.run(&theta).unwrap();
            let plus = StateVector::product(&vec![basis_state(Basis::X, 0); spec.n_qubits]).unwrap();
            assert!((overlap_sq(&state, &plus) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn product_bindings_single_qubit() {
        let yz = build_ansatz(&AnsatzSpec::efficient_su2(1, 2)).unwrap();
        let xz = build_ansatz(&AnsatzSpec::efficient_su2(1, 2).with_rotations(RotationPair::Xz)).unwrap();
        let cases = [
            (&yz, Basis::X, "0"),
            (&yz, Basis::X, "1"),
            (&yz, Basis::Z, "1"),
            (&xz, Basis::Y, "0"),
            (&xz, Basis::Y, "1"),
        ];
        for (c, basis, bits) in cases {
            let target = InitialState::product_from_bits(basis, bits).unwrap();
            let theta = initial_parameter_binding(c, &target).unwrap();
            let state = c.run(&theta).unwrap();
            let want = StateVector::product(&[basis_state(basis, bits.as_bytes()[0] - b'0')]).unwrap();
            assert!((overlap_sq(&state, &want) - 1.0).abs() < 1e-12, "{basis:?} {bits}");
        }
    }

    #[test]
    fn y_basis_needs_x_rotations() {
        let yz = build_ansatz(&AnsatzSpec::efficient_su2(2, 1)).unwrap();
        let target = InitialState::product_from_bits(Basis::Y, "01").unwrap();
        assert!(matches!(
            initial_parameter_binding(&yz, &target),
            Err(QteError::InvalidAnsatz(_))
        ));
    }

    #[test]
    fn multi_qubit_product_binding_survives_entanglers() {
        let c = build_ansatz(&AnsatzSpec::efficient_su2(4, 2).with_rotations(RotationPair::Xz)).unwrap();
        let target = InitialState::product_from_bits(Basis::Y, "0110").unwrap();
        let theta = initial_parameter_binding(&c, &target).unwrap();
        let state = c.run(&theta).unwrap();
        let factors: Vec<_> = [0u8, 1, 1, 0].iter().map(|&b| basis_state(Basis::Y, b)).collect();
        let want = StateVector::product(&factors).unwrap();
        assert!((overlap_sq(&state, &want) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parameter_map_shared_slots() {
        let map = ParameterMap::shared(&[vec![0, 1]], 2).unwrap();
        assert_eq!(map.expand(&[0.3]), vec![0.3, 0.3]);
        assert_eq!(map.pull_back(&[1.0, 2.0]), vec![3.0]);
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        assert_eq!(map.pull_back_matrix(&m)[(0, 0)], 10.0);
    }
}
