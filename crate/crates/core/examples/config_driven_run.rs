//! Running a named experiment from JSON, the way the `qte` binary does.

use dualqte::experiments::{run_to_dir, ExperimentConfig};

fn main() -> dualqte::Result<()> {
    let config = ExperimentConfig::from_json_str(
        r#"{ "experiment": "evolve_imag", "system": { "n": 4, "topology": "chain" },
             "ansatz": { "n_qubits": 4, "reps": 2 }, "t_final": 0.5, "replicas": 2, "shots": 256 }"#,
    )?;
    let dir = std::env::temp_dir().join("qte-example");
    let out = run_to_dir(&config, &dir)?;
    for (name, table) in &out.tables {
        println!("{name}: {} rows", table.rows.len());
    }
    println!("{}", serde_json::to_string_pretty(&out.summary["mean_integrated_bures"]).unwrap());
    println!("written to {}", dir.display());
    Ok(())
}
