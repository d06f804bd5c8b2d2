//! The interior-point solver on problems with known answers: an eigenvalue
//! shift (optimum 3) and a nested pair whose optima must be ordered.

use tsfilt::sdp::{problems, solve, verify_solution, SdpOptions};

fn main() -> tsfilt::Result<()> {
    let opts = SdpOptions::default();
    let p = problems::eigenvalue_shift();
    let s = solve(&p, &opts)?;
    let rec = verify_solution(&p, &s, 1e-8);
    println!(
        "eigenvalue shift: {:?}, t* = {:.10}, {} iterations, verified {}",
        s.status, s.objective_value, s.iterations, rec.all_satisfied
    );
    for seed in 0..5 {
        let a = solve(&problems::random_nested(seed, 2), &opts)?;
        let b = solve(&problems::random_nested(seed, 3), &opts)?;
        println!(
            "seed {seed}: two blocks {:.6}, three blocks {:.6}",
            a.objective_value, b.objective_value
        );
    }
    Ok(())
}
