//! Real-time quench of a Heisenberg chain from |+⟩^n with an a-posteriori
//! error bound along the trajectory.

use dualqte::analysis::{error_bound_series, RateKind};
use dualqte::dualqte::{dualqte_evolve, DualConfig};
use dualqte::hamiltonian::{expectation, heisenberg, HeisenbergSpec, Pauli, PauliSum, Topology};
use dualqte::sim::{build_ansatz, initial_parameter_binding, AnsatzSpec, InitialState};

fn main() -> dualqte::Result<()> {
    let n = 4;
    let h = heisenberg(&HeisenbergSpec { n, topology: Topology::Chain, j: 0.25, g_field: -1.0 })?;
    let circuit = build_ansatz(&AnsatzSpec::alternating_xy(n, 3))?;
    let theta0 = initial_parameter_binding(&circuit, &InitialState::PlusAll)?;

    let mut config = DualConfig::real(0.04, 2.0);
    config.delta_tau = 1e-3;
    let traj = dualqte_evolve(&circuit, &h, &theta0, &config)?;
    let bound = error_bound_series(&circuit, &h, &traj, RateKind::VarQrte, 8)?;

    let mx = PauliSum::uniform_field(n, Pauli::X, 1.0 / n as f64)?;
    println!("time      <X>      bound     realized");
    for (k, t) in traj.times.iter().enumerate().step_by(5) {
        let x = expectation(&mx, &circuit.run(&traj.thetas[k])?)?;
        println!("{t:5.2}  {x:8.4}  {:.2e}  {:.2e}", bound.cumulative[k], bound.realized[k]);
    }
    println!("bound holds: {}", bound.holds());
    Ok(())
}
