//! Design a filter for Example 1 at (rho, upsilon, h) = (0.2, 1, 0.5) and
//! save the report.
//!
//!     cargo run --release --example synthesize_filter -- [1|2] [report.json]

use tsfilt::lmi::Theorem;
use tsfilt::model::fixtures;
use tsfilt::synthesis::{synthesize, SynthesisOptions};

fn main() -> tsfilt::Result<()> {
    let mut args = std::env::args().skip(1);
    let theorem = Theorem::from_number(args.next().map_or(Ok(1), |s| s.parse()).unwrap_or(1))?;
    let model = fixtures::example1().with_parameters(0.5, 0.2, 1.0)?;
    let report = synthesize(&model, theorem, &SynthesisOptions::default())?;
    println!("status {:?}, gamma_min {:?}", report.status, report.gamma);
    if let Some(f) = &report.filter {
        println!("cond(M22t) = {:.3e}", f.m22t_condition);
        for (j, r) in f.rules.iter().enumerate() {
            println!("rule {}: A_f {:.4} B_f {:.4} C_f {:.4}", j + 1, r.a_f, r.b_f, r.c_f);
        }
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    if let Some(path) = args.next() {
        std::fs::write(&path, report.to_json()?)?;
        println!("report written to {path}");
    }
    Ok(())
}
