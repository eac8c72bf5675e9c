//! The dual loss and its quadratic metric model on RZ(θ)RY(θ)|0⟩ with H = Z.

use dualqte::experiments::SingleQubitModel;

fn main() -> dualqte::Result<()> {
    let model = SingleQubitModel::new(std::f64::consts::FRAC_PI_4)?;
    let delta_tau = 0.5;
    println!("delta    dual      metric");
    for k in -6..=6 {
        let delta = 0.1 * k as f64;
        println!("{delta:5.2}  {:8.5}  {:8.5}", model.dual_loss(delta, delta_tau)?, model.metric_loss(delta, delta_tau));
    }
    for tau in [1e-1, 1e-2, 1e-3] {
        let err = (model.dual_rate(tau)? - model.exact_rate()).abs();
        println!("delta_tau {tau:e}: update error {err:.3e}");
    }
    Ok(())
}
