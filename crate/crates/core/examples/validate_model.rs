//! Load a model (a path, or the bundled Example 1 by default), print its
//! shape, a few membership values and the product-weight bounds.
//!
//!     cargo run --example validate_model -- [model.json]

use tsfilt::model::{evaluate_memberships, fixtures, load_model_file, membership_product_bounds};

fn main() -> tsfilt::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => load_model_file(path)?,
        None => fixtures::example1(),
    };
    println!(
        "{}: n={}, {} plant rules, {} filter rules, h={}, rho={}, upsilon={}",
        model.name,
        model.dims.n,
        model.p_rules(),
        model.filter_rule_count,
        model.delay.h,
        model.delay.rho,
        model.upsilon
    );
    for t in [0.0, 1.0, 5.0, 20.0] {
        let (phi, n) = evaluate_memberships(&model, t)?;
        println!("t={t:>4}: phi={phi:.4?} n={n:.4?}");
    }
    let b = membership_product_bounds(&model, &model.bounds)?;
    println!("product bounds over {:?} ({} points):", b.domain_used, b.grid_density);
    println!("lower {:.4}", b.d_lower);
    println!("upper {:.4}", b.d_upper);
    Ok(())
}
