mod common;

use std::collections::BTreeSet;

use cjmap::enumerate::{expand_concrete, EnumerationOptions};
use cjmap::error::Error;
use cjmap::model::{Coinjoin, Design, Mapping};
use cjmap::multicj::{build_artificial, enumerate_linked, joint_oracle, InternalCoin, Link, LinkedSet};
use proptest::prelude::*;

fn concrete(set: &LinkedSet, windows: &[i64]) -> (BTreeSet<Mapping>, BTreeSet<Mapping>) {
    let setups = common::zero_fee_setups(windows);
    let lr = enumerate_linked(set, &setups, &EnumerationOptions::default()).unwrap();
    let ours = expand_concrete(&lr.result, 1 << 20)
        .unwrap()
        .into_iter()
        .map(|c| c.mapping)
        .collect();
    (ours, joint_oracle(set, &setups).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_joint_oracle(seed in any::<u64>()) {
        let (set, windows) = common::random_linked(seed, 11);
        let (ours, oracle) = concrete(&set, &windows);
        prop_assert_eq!(ours, oracle);
    }

    #[test]
    fn linked_never_exceeds_loose(seed in any::<u64>()) {
        let (set, windows) = common::random_linked(seed, 11);
        let lr = enumerate_linked(&set, &common::zero_fee_setups(&windows), &EnumerationOptions::default()).unwrap();
        prop_assert!(lr.result.numeric_count() <= lr.unfiltered_count);
    }

    #[test]
    fn artificial_conserves_coins(seed in any::<u64>()) {
        let (set, _) = common::random_linked(seed, 11);
        let art = build_artificial(&set).unwrap();
        let internal = set.internal_coins.len();
        let ins: usize = set.txs.iter().map(|t| t.inputs.len()).sum();
        let outs: usize = set.txs.iter().map(|t| t.outputs.len()).sum();
        prop_assert_eq!(art.tx.inputs.len(), ins - internal);
        prop_assert_eq!(art.tx.outputs.len(), outs - internal);
    }
}

fn spend(from: &str, output: &str, to: &str, input: &str) -> InternalCoin {
    InternalCoin {
        from: from.into(),
        output: output.into(),
        to: to.into(),
        input: input.into(),
    }
}

#[test]
fn single_hop_user() {
    let a = Coinjoin::from_values("a", Design::Generic, &[4, 2], &[4, 2]);
    let b = Coinjoin::from_values("b", Design::Generic, &[4, 1], &[4, 1]);
    let set = LinkedSet {
        txs: vec![a, b],
        internal_coins: vec![spend("a", "o0", "b", "i0")],
        links: vec![],
    };
    let (ours, oracle) = concrete(&set, &[0, 0]);
    assert_eq!(ours, oracle);
    assert!(!ours.is_empty());
}

#[test]
fn declared_capacity_must_match() {
    let a = Coinjoin::from_values("a", Design::Generic, &[4, 2], &[4, 2]);
    let b = Coinjoin::from_values("b", Design::Generic, &[4, 1], &[4, 1]);
    let mut set = LinkedSet {
        txs: vec![a, b],
        internal_coins: vec![spend("a", "o0", "b", "i0")],
        links: vec![Link {
            from: "a".into(),
            to: "b".into(),
            capacity: 4,
        }],
    };
    assert!(set.validate().is_ok());
    set.links[0].capacity = 5;
    assert!(matches!(set.validate(), Err(Error::InvalidLinkedSet(_))));
    set.links.clear();
    set.internal_coins[0].input = "i9".into();
    assert!(matches!(set.validate(), Err(Error::DanglingLink(_))));
    set.internal_coins[0].input = "i1".into();
    assert!(matches!(set.validate(), Err(Error::ValueMismatch(_))));
}

#[test]
fn artificial_json_round_trip() {
    let (set, windows) = common::random_linked(7, 11);
    let lr = enumerate_linked(&set, &common::zero_fee_setups(&windows), &EnumerationOptions::default()).unwrap();
    let text = cjmap::io::to_json(&lr.artificial).unwrap();
    assert_eq!(cjmap::io::from_json::<cjmap::multicj::ArtificialTx>(&text).unwrap(), lr.artificial);
    let text = cjmap::io::to_json(&lr.normalized).unwrap();
    assert_eq!(cjmap::io::from_json::<cjmap::preprocess::NormalizedCoinjoin>(&text).unwrap(), lr.normalized);
}
