//! Estimating the metric and the evolution gradient with and without shot noise.

use dualqte::estimators::{energy_gradient_b_imag, qgt_exact, qgt_psr, GradientMethod, Sampler, ShotConfig};
use dualqte::hamiltonian::{heisenberg, HeisenbergSpec, Topology};
use dualqte::sim::{build_ansatz, AnsatzSpec};

fn main() -> dualqte::Result<()> {
    let circuit = build_ansatz(&AnsatzSpec::efficient_su2(3, 1))?;
    let h = heisenberg(&HeisenbergSpec { n: 3, topology: Topology::Chain, j: 0.25, g_field: -1.0 })?;
    let theta: Vec<f64> = (0..circuit.n_params()).map(|i| 0.3 * i as f64 - 1.0).collect();

    let exact = qgt_exact(&circuit, &theta)?;
    let mut sampler = ShotConfig::sampled(1000, 42, 0).sampler();
    let noisy = qgt_psr(&circuit, &theta, &mut sampler)?;
    println!("d = {}, lambda_max = {:.4}", exact.dim(), exact.max_eigenvalue());
    println!("max |g_sampled - g| = {:.4} from {} circuits", (&noisy.g - &exact.g).amax(), sampler.circuits());

    let b = energy_gradient_b_imag(&circuit, &theta, &h, GradientMethod::psr(), &mut Sampler::exact())?;
    println!("|b| = {:.4}", b.norm());
    Ok(())
}
