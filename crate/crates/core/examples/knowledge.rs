//! Ownership knowledge shrinks the mapping space.

use cjmap::enumerate::{enumerate, Constraints, EnumerationOptions};
use cjmap::model::{CoinRef, Coinjoin, Design};
use cjmap::preprocess::{apply_knowledge, FeePolicy, Knowledge, NormalizedCoinjoin};

fn count(ntx: &NormalizedCoinjoin) -> cjmap::error::Result<String> {
    let res = enumerate(ntx, &Constraints::default(), &EnumerationOptions::default())?;
    Ok(format!("{} concrete / {} numeric", res.total_concrete, res.numeric_count()))
}

fn main() -> cjmap::error::Result<()> {
    let tx = Coinjoin::from_values("k", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2]);
    let ntx = NormalizedCoinjoin::unadjusted(tx, FeePolicy::zero_fee(Design::Generic));
    println!("no knowledge:        {}", count(&ntx)?);

    let same = Knowledge {
        same_owner_input_groups: vec![vec!["i2".into(), "i3".into()]],
        ..Default::default()
    };
    println!("i2, i3 same owner:   {}", count(&apply_knowledge(&ntx, &same)?)?);

    // Every output is even, so the two 3s can only belong to one user.
    let apart = Knowledge {
        distinct_owner_pairs: vec![(CoinRef::Input("i2".into()), CoinRef::Input("i3".into()))],
        ..Default::default()
    };
    println!("i2, i3 distinct:     {}", count(&apply_knowledge(&ntx, &apart)?)?);
    Ok(())
}
