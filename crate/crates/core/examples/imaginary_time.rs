//! Ground-state preparation on a small Heisenberg ring, with and without the QGT.
//!
//! Run with `cargo run --release --example imaginary_time`.

use dualqte::experiments::{evolve, ExperimentConfig, ExperimentKind, MethodChoice};
use dualqte::hamiltonian::{expectation, heisenberg, HeisenbergSpec, Topology};
use dualqte::sim::AnsatzSpec;

fn main() -> dualqte::Result<()> {
    let mut config = ExperimentConfig::defaults(ExperimentKind::EvolveImag);
    config.system = HeisenbergSpec { n: 4, topology: Topology::Circle, j: 0.25, g_field: -1.0 };
    config.ansatz = AnsatzSpec::efficient_su2(4, 2);
    config.t_final = 1.0;
    let h = heisenberg(&config.system)?;

    for shots in [None, Some(1024)] {
        config.shots = shots;
        for method in [MethodChoice::Varqte, MethodChoice::Dualqte] {
            let run = evolve(&config, method, 0)?;
            let energy = expectation(&h, run.states.last().unwrap())?;
            let exact = expectation(&h, run.reference.last().unwrap())?;
            let ledger = run.ledger.as_ref().unwrap();
            println!(
                "{method:?} shots={shots:?}: I_B = {:.4}, E(T) = {energy:.4} (exact {exact:.4}), circuits = {}",
                run.integrated_bures()?,
                ledger.total_circuits()
            );
        }
    }
    Ok(())
}
