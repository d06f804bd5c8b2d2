//! Independent checks: the integral-inequality and relaxation suites, then
//! a full re-check of a fresh Example 1 design.

use tsfilt::lmi::Theorem;
use tsfilt::model::fixtures;
use tsfilt::report::{check_table, recheck};
use tsfilt::synthesis::{synthesize, SynthesisOptions};
use tsfilt::verify::{lemma1_suite, upsilon_suite};

fn main() -> tsfilt::Result<()> {
    let l = lemma1_suite(1, 200)?;
    println!("integral inequality: {} instances, min margin {:.3e}", l.instances, l.min_margin);
    let u = upsilon_suite(1, 200)?;
    println!("upsilon relaxation: {} draws, min eigenvalue {:.3e}", u.instances, u.min_margin);

    let model = fixtures::example1();
    let report = synthesize(&model, Theorem::One, &SynthesisOptions::default())?;
    print!("{}", check_table(&recheck(&model, &report, 7)?)?);
    Ok(())
}
