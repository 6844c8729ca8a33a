//! Generated rounds of every design, checked against their own enumeration.
//!
//!     cargo run --release --example ground_truth

use cjmap::enumerate::{enumerate, Constraints, EnumerationOptions};
use cjmap::generator::{generate_sized, GeneratorParams};
use cjmap::model::Design;
use cjmap::preprocess::normalize_fees;

fn main() -> cjmap::error::Result<()> {
    let params = GeneratorParams::default();
    for design in Design::ALL {
        let gt = generate_sized(design, 10, 42, 0, &params)?;
        let ntx = normalize_fees(&gt.tx, &gt.policy)?;
        let res = enumerate(&ntx, &Constraints::for_design(design), &EnumerationOptions::default())?;
        println!(
            "{:<11} users {}  numeric {:>4}  concrete {:>8}  truth found {}",
            design.as_str(),
            gt.true_mapping.submappings.len(),
            res.numeric_count(),
            res.total_concrete,
            res.contains(&gt.true_signature()?)
        );
    }
    Ok(())
}
