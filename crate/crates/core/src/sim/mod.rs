//! Dense statevector simulation of parameterized Pauli-rotation circuits.

mod ansatz;
mod derivatives;
mod gate;
mod state;

pub use ansatz::{
    basis_state, build_ansatz, initial_parameter_binding, AnsatzFamily, AnsatzSpec, Basis,
    Entangler, InitialState, ParameterMap, ParameterizedCircuit, RotationLayer, RotationPair,
};
pub use derivatives::{derivative_states, pair_overlaps, shift_overlaps, PairOverlaps, ShiftOverlaps};
pub use gate::{Gate, GateKind};
pub use state::{inner_product, StateVector, MAX_QUBITS};

pub(crate) use state::dot;

/// Applies a 2×2 matrix `m` (row-major) to qubit `q` of raw amplitudes.
pub fn apply_single_qubit(amps: &mut [crate::C64], q: usize, m: &[[crate::C64; 2]; 2]) {
    gate::apply_1q(amps, q, m);
}

/// Prepares `U(θ)|0…0⟩`; see [`ParameterizedCircuit::run`].
pub fn run_circuit(circuit: &ParameterizedCircuit, theta: &[f64]) -> crate::Result<StateVector> {
    circuit.run(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use proptest::prelude::*;

    fn dense_product(circuit: &ParameterizedCircuit, theta: &[f64]) -> Vec<C64> {
        let n = circuit.n_qubits();
        let dim = 1usize << n;
        // start from identity columns and multiply gate matrices on the left
        let mut u: Vec<Vec<C64>> = (0..dim)
            .map(|j| (0..dim).map(|i| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
            .collect();
        for g in circuit.gates() {
            let m = g.dense_unitary(n, g.param.map_or(0.0, |s| theta[s]));
            let prev = u.clone();
            for (col, out) in prev.iter().zip(u.iter_mut()) {
                for i in 0..dim {
                    out[i] = (0..dim).map(|k| m[k][i] * col[k]).sum();
                }
            }
        }
        u.swap_remove(0)
    }

    #[test]
    fn run_equals_dense_unitary_product() {
        let spec = AnsatzSpec::efficient_su2(3, 2);
        let c = build_ansatz(&spec).unwrap();
        let theta: Vec<f64> = (0..c.n_params()).map(|k| 0.37 * k as f64 - 1.1).collect();
        let state = run_circuit(&c, &theta).unwrap();
        let dense = dense_product(&c, &theta);
        for (a, b) in state.amplitudes().iter().zip(&dense) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn norm_and_overlap_bounds(
            n in 1usize..5,
            reps in 0usize..3,
            seed_a in proptest::collection::vec(-6.3f64..6.3, 64),
            seed_b in proptest::collection::vec(-6.3f64..6.3, 64),
            alt in any::<bool>(),
        ) {
            let spec = if alt && n >= 2 { AnsatzSpec::alternating_xy(n, reps) } else { AnsatzSpec::efficient_su2(n, reps) };
            let c = build_ansatz(&spec).unwrap();
            let d = c.n_params();
            prop_assume!(d <= 64);
            let a = c.run(&seed_a[..d]).unwrap();
            let b = c.run(&seed_b[..d]).unwrap();
            prop_assert!((a.norm_sqr() - 1.0).abs() < 1e-10);
            prop_assert!(inner_product(&a, &b).unwrap().norm() <= 1.0 + 1e-10);
        }

        #[test]
        fn small_circuits_match_dense_oracle(
            n in 1usize..4,
            reps in 0usize..3,
            theta in proptest::collection::vec(-6.3f64..6.3, 32),
        ) {
            let c = build_ansatz(&AnsatzSpec::efficient_su2(n, reps)).unwrap();
            let d = c.n_params();
            prop_assume!(d <= 32);
            let state = c.run(&theta[..d]).unwrap();
            let dense = dense_product(&c, &theta[..d]);
            for (a, b) in state.amplitudes().iter().zip(&dense) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }
    }
}
