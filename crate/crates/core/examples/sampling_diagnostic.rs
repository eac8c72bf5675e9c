//! How shot noise in g and b propagates into the parameter update on a product state.

use dualqte::analysis::{product_state_diagnostic, DiagnosticConfig};

fn main() -> dualqte::Result<()> {
    let config = DiagnosticConfig { sizes: (2..=6).collect(), repetitions: 5, ..DiagnosticConfig::default() };
    for s in product_state_diagnostic(&config)? {
        if s.repetition == 0 {
            println!(
                "n={} d={}: |theta_dot| = {:.3}, |d theta_dot| = {:.3}, eps_S = {:.2e}",
                s.n, s.d, s.theta_dot_norm, s.delta_theta_dot, s.eps_s
            );
        }
    }
    Ok(())
}
