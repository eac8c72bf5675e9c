//! Hardware runtime estimates for both methods over the number of parameters.

use dualqte::experiments::{runtime_table, ExperimentConfig, ExperimentKind};

fn main() -> dualqte::Result<()> {
    let table = runtime_table(&ExperimentConfig::defaults(ExperimentKind::RuntimeTable))?;
    println!("{}", table.header.join("\t"));
    for row in &table.rows {
        println!("{}", row.join("\t"));
    }
    Ok(())
}
