//! Runs the chain experiment for one seed and writes its diagnostics to a
//! directory given on the command line (default `chain_report`).

use blnet::testbed::{run_experiment, ExperimentConfig, ExperimentName};
use std::path::PathBuf;

fn main() -> blnet::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "chain_report".into());
    let mut config = ExperimentConfig::new(ExperimentName::Chain, 1);
    config.diagnostic_points = 200;
    let result = run_experiment(&config)?;
    println!("{}", result.table());
    result.write(&dir)?;
    println!("reports written to {}", dir.display());
    Ok(())
}
