//! Design a filter, then drive plant and filter through every bundled
//! scenario and compare the measured gain with the certified bound.
//!
//!     cargo run --release --example simulate_filter -- [trace.csv]

use tsfilt::lmi::Theorem;
use tsfilt::model::fixtures;
use tsfilt::sim::{empirical_gain, Scenario, SCENARIOS};
use tsfilt::synthesis::{synthesize, SynthesisOptions};

fn main() -> tsfilt::Result<()> {
    let model = fixtures::example1();
    let report = synthesize(&model, Theorem::One, &SynthesisOptions::default())?;
    let filter = report.filter.expect("Example 1 is feasible under theorem 1");
    println!("gamma_min = {:.5}", filter.gamma);
    for name in SCENARIOS {
        let scenario = Scenario::bundled(name, &model, 7)?;
        let trace = scenario.run(&model, &filter.rules)?;
        if scenario.disturbance.is_zero() {
            println!("{name:>14}: terminal norm ratio {:.2e}", trace.terminal_norm_ratio());
            if let Some(path) = std::env::args().nth(1) {
                trace.write_csv(std::fs::File::create(&path)?)?;
                println!("{:>14}  trace written to {path}", "");
            }
        } else {
            println!("{name:>14}: empirical gain {:.5}", empirical_gain(&trace)?);
        }
    }
    Ok(())
}
