//! A Wasabi 2.x round before and after fee normalization.

use cjmap::generator::{generate, GeneratorParams};
use cjmap::model::Design;
use cjmap::preprocess::normalize_fees;

fn main() -> cjmap::error::Result<()> {
    let gt = generate(Design::Wasabi2, 3, 11, &GeneratorParams::default())?;
    let ntx = normalize_fees(&gt.tx, &gt.policy)?;

    println!("{:>6} {:>12} {:>12}", "coin", "on chain", "normalized");
    for (raw, norm) in gt.tx.inputs.iter().zip(&ntx.base.inputs) {
        println!("{:>6} {:>12} {:>12}", raw.id, raw.value, norm.value);
    }
    for (raw, norm) in gt.tx.outputs.iter().zip(&ntx.base.outputs) {
        println!("{:>6} {:>12} {:>12}", raw.id, raw.value, norm.value);
    }
    let (lo, hi) = ntx.window();
    println!("fee {} sat, residual window [{lo}, {hi}]", gt.tx.fee());
    Ok(())
}
