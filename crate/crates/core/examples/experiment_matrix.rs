//! Runs the demo experiment config into a directory and prints the analysis.
//!
//! Usage: `cargo run --example experiment_matrix [out-dir]`

use std::path::PathBuf;

use scopemem::matrix::{run_matrix, ExperimentConfig};
use scopemem::stats::{analyze, ReportOptions};

fn main() -> Result<(), scopemem::Error> {
    let config_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo.toml");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("scopemem-demo"));
    let config = ExperimentConfig::load(&config_path)?;
    let manifest = run_matrix(&config, &out, 4)?;
    eprintln!("{} cells written to {}", manifest.cells.len(), out.display());
    let report = analyze(&out, &ReportOptions::default())?;
    print!("{}", report.to_text());
    Ok(())
}
