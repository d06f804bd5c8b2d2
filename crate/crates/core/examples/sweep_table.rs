//! A small gamma table for Example 1 over the delay bound, both theorems.

use tsfilt::lmi::DelayTerm;
use tsfilt::model::fixtures;
use tsfilt::report::{run_sweep, synthesis_options, SweepSpec, TheoremSelection};

fn main() -> tsfilt::Result<()> {
    let spec = SweepSpec {
        model: "example1".into(),
        theorem: TheoremSelection::One,
        h: vec![0.3, 0.5, 0.8],
        upsilon: vec![2.0],
        rho: 0.2,
        output: None,
        delay_term: DelayTerm::Derived,
    };
    let result = run_sweep(&spec, &fixtures::example1(), &synthesis_options(spec.delay_term))?;
    print!("{}", result.table_csv(false)?);
    print!("{}", result.cells_csv()?);
    Ok(())
}
