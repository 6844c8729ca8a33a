//! Enumerates the nine-coin example transaction and prints every numeric
//! mapping with its multiplicity.
//!
//!     cargo run --example nine_coin_enumeration

use cjmap::enumerate::{enumerate, Constraints, EnumerationOptions};
use cjmap::model::{Coinjoin, Design};
use cjmap::preprocess::{FeePolicy, NormalizedCoinjoin};

fn main() -> cjmap::error::Result<()> {
    let tx = Coinjoin::from_values("nine_coin", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2]);
    let ntx = NormalizedCoinjoin::unadjusted(tx, FeePolicy::zero_fee(Design::Generic));
    let res = enumerate(&ntx, &Constraints::default(), &EnumerationOptions::default())?;

    for m in &res.numeric_mappings {
        let parts: Vec<String> = res
            .signatures(m)
            .into_iter()
            .map(|s| {
                let (i, o) = res.classes.values(s);
                format!("{i:?}->{o:?}")
            })
            .collect();
        println!("x{:<3} {}", m.multiplicity, parts.join("  "));
    }
    println!("{} numeric, {} concrete", res.numeric_count(), res.total_concrete);
    Ok(())
}
