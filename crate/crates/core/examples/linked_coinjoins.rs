//! Two coinjoins where the second spends an output of the first.

use cjmap::enumerate::EnumerationOptions;
use cjmap::model::{Coinjoin, Design};
use cjmap::multicj::{enumerate_linked, InternalCoin, LinkedSet, TxSetup};
use cjmap::enumerate::Constraints;
use cjmap::preprocess::FeePolicy;

fn main() -> cjmap::error::Result<()> {
    let set = LinkedSet {
        txs: vec![
            Coinjoin::from_values("a", Design::Generic, &[5, 3, 2], &[5, 3, 2]),
            Coinjoin::from_values("b", Design::Generic, &[5, 4], &[6, 3]),
        ],
        internal_coins: vec![InternalCoin {
            from: "a".into(),
            output: "o0".into(),
            to: "b".into(),
            input: "i0".into(),
        }],
        links: vec![],
    };
    let setups: Vec<TxSetup> = set
        .txs
        .iter()
        .map(|_| TxSetup {
            policy: FeePolicy::zero_fee(Design::Generic),
            constraints: Constraints::default(),
        })
        .collect();
    let lr = enumerate_linked(&set, &setups, &EnumerationOptions::default())?;

    let ids: Vec<&str> = lr.artificial.tx.inputs.iter().map(|c| c.id.as_str()).collect();
    println!("artificial inputs: {ids:?}");
    println!(
        "{} of {} numeric mappings survive routing, {} concrete",
        lr.result.numeric_count(),
        lr.unfiltered_count,
        lr.result.total_concrete
    );
    Ok(())
}
