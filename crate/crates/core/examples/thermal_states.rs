//! Thermal energies from a QMETTS chain with a variational evolver,
//! compared against the dense Gibbs state.

use dualqte::dualqte::DualConfig;
use dualqte::hamiltonian::{gibbs_expectation, heisenberg, HeisenbergSpec, Topology};
use dualqte::metts::{qmetts_chain, MettsConfig, MettsEvolver};

fn main() -> dualqte::Result<()> {
    let n = 4;
    let h = heisenberg(&HeisenbergSpec { n, topology: Topology::Chain, j: 0.25, g_field: -1.0 })?;
    let per_site = h.scaled(1.0 / n as f64);
    for beta in [0.5, 1.0, 2.0] {
        let mut config = MettsConfig::new(beta, 30, per_site.clone());
        config.evolver = MettsEvolver::Dual(DualConfig::imaginary(0.01, beta / 2.0));
        config.rng_seed = 1;
        let chain = qmetts_chain(&h, &config)?;
        let gibbs = gibbs_expectation(&h, &per_site, beta)?;
        println!(
            "beta {beta:3}: QMETTS {:.4} +- {:.4}, Gibbs {gibbs:.4}",
            chain.mean,
            chain.standard_error()
        );
    }
    Ok(())
}
