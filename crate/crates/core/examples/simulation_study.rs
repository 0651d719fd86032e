//! Seeded simulation study comparing the model with a Euclidean regression
//! baseline. Pass `--full` for the whole (n, p, zeta) lattice.
//!
//! cargo run --release --example simulation_study [-- --full]

use dido::cli::{LATTICE_N, LATTICE_P, LATTICE_ZETA};
use dido::simulate::{report_tables, run_lattice, ScenarioConfig};

fn main() -> dido::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let base = ScenarioConfig { reps: if full { 200 } else { 50 }, seed: 1, ..Default::default() };
    let reports = if full {
        run_lattice(&base, &LATTICE_N, &LATTICE_P, &LATTICE_ZETA)?
    } else {
        run_lattice(&base, &[100, 500], &[2, 10], &[0.01, 1.0])?
    };
    print!("{}", report_tables(&reports));
    for r in &reports {
        if r.failures > 0 {
            println!("n={} p={} zeta={}: {} replicates failed", r.config.n, r.config.p, r.config.zeta, r.failures);
        }
    }
    Ok(())
}
