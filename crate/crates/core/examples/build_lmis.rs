//! Assemble both LMI systems for Example 1 and dump them in SDPA format.
//!
//!     cargo run --example build_lmis -- [output-dir]

use tsfilt::lmi::{build_theorem1_system, build_theorem2_system, LmiOptions};
use tsfilt::model::{fixtures, membership_product_bounds};
use tsfilt::sdp::write_sdpa;

fn main() -> tsfilt::Result<()> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let model = fixtures::example1();
    let opts = LmiOptions::default();
    let bounds = membership_product_bounds(&model, &model.bounds)?;
    let systems = [
        ("theorem1", build_theorem1_system(&model, &opts)?.1),
        ("theorem2", build_theorem2_system(&model, &bounds, &opts)?.1),
    ];
    for (name, problem) in systems {
        let rows: usize = problem.constraints.iter().map(|c| c.expr.dim()).sum();
        println!(
            "{name}: {} scalar variables, {} constraints, {rows} block rows",
            problem.num_vars(),
            problem.constraints.len()
        );
        let path = dir.join(format!("example1_{name}.dat-s"));
        std::fs::write(&path, write_sdpa(&problem))?;
        println!("  written to {}", path.display());
    }
    Ok(())
}
