#![allow(dead_code)]

use cjmap::enumerate::Constraints;
use cjmap::model::{CoinRef, Coinjoin, Design};
use cjmap::preprocess::{apply_knowledge, FeePolicy, Knowledge, NormalizedCoinjoin};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small transaction with a design-specific window and constraints.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ntx: NormalizedCoinjoin,
    pub constraints: Constraints,
}

pub const DESIGNS: [Design; 5] = [
    Design::Whirlpool,
    Design::Wasabi1,
    Design::Wasabi2,
    Design::Joinmarket,
    Design::Generic,
];

fn window(design: Design, rng: &mut ChaCha8Rng) -> (i64, i64) {
    match design {
        Design::Whirlpool | Design::Wasabi1 => (0, 0),
        Design::Wasabi2 => (0, rng.gen_range(0..=3)),
        Design::Joinmarket => (-rng.gen_range(0..=2), rng.gen_range(0..=4)),
        Design::Generic => (0, rng.gen_range(0..=2)),
    }
}

fn constraints(design: Design, values: &[i64], rng: &mut ChaCha8Rng) -> Constraints {
    let mut c = Constraints::for_design(design);
    match design {
        Design::Wasabi2 if rng.gen_bool(0.4) => {
            let mut denoms: Vec<i64> = values.to_vec();
            denoms.shuffle(rng);
            denoms.truncate(rng.gen_range(1..=values.len().max(1)));
            c.change_denominations = denoms;
            c.max_change_outputs_per_user = Some(rng.gen_range(1..=2));
        }
        Design::Generic if rng.gen_bool(0.5) => {
            c.max_inputs_per_user = rng.gen_range(1..=3);
            c.max_outputs_per_user = rng.gen_range(1..=3);
        }
        Design::Generic if rng.gen_bool(0.3) => {
            c.max_positive_residual_submappings = Some(rng.gen_range(1..=2));
        }
        _ => {}
    }
    c
}

/// Users are planted so that most instances have mappings; a share of the
/// instances is perturbed afterwards and may have none.
pub fn random_instance(seed: u64, max_coins: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = *DESIGNS.choose(&mut rng).unwrap();
    let (lo, hi) = window(design, &mut rng);
    let mut ins: Vec<i64> = Vec::new();
    let mut outs: Vec<i64> = Vec::new();
    let top = if rng.gen_bool(0.5) { 4 } else { 9 };
    loop {
        let (mut ui, mut uo) = (Vec::new(), Vec::new());
        if design == Design::Whirlpool {
            ui.push(5);
            uo.push(5);
        } else {
            for _ in 0..rng.gen_range(1..=3) {
                ui.push(rng.gen_range(1..=top));
            }
            let r = rng.gen_range(lo..=hi);
            let mut left = ui.iter().sum::<i64>() - r;
            for _ in 0..rng.gen_range(1..=3) {
                if left <= 0 {
                    break;
                }
                let v = if rng.gen_bool(0.5) { left } else { rng.gen_range(1..=left) };
                uo.push(v);
                left -= v;
            }
            if left != 0 || uo.is_empty() {
                continue;
            }
        }
        if ins.len() + outs.len() + ui.len() + uo.len() > max_coins {
            break;
        }
        ins.extend(ui);
        outs.extend(uo);
    }
    if ins.is_empty() || outs.is_empty() {
        ins = vec![3];
        outs = vec![3];
    }
    if rng.gen_bool(0.2) {
        let k = rng.gen_range(0..outs.len());
        outs[k] = (outs[k] - 1).max(1);
    }
    let deficit = outs.iter().sum::<i64>() - ins.iter().sum::<i64>();
    if deficit > 0 {
        ins.push(deficit);
    }
    ins.shuffle(&mut rng);
    outs.shuffle(&mut rng);
    let tx = Coinjoin::from_values(format!("r{seed}"), design, &ins, &outs);
    let all: Vec<i64> = outs.clone();
    let constraints = constraints(design, &all, &mut rng);
    let policy = FeePolicy::zero_fee(design).with_window(lo, hi);
    let mut ntx = NormalizedCoinjoin::unadjusted(tx, policy);
    if design != Design::Whirlpool && rng.gen_bool(0.25) && ntx.base.inputs.len() >= 2 {
        let k = Knowledge {
            distinct_owner_pairs: vec![(CoinRef::Input("i0".into()), CoinRef::Input("i1".into()))],
            ..Default::default()
        };
        if let Ok(n) = apply_knowledge(&ntx, &k) {
            ntx = n;
        }
    }
    Instance { ntx, constraints }
}

pub fn nine_coin() -> Coinjoin {
    Coinjoin::from_values("nine_coin", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2])
}

pub fn nine_coin_normalized() -> NormalizedCoinjoin {
    NormalizedCoinjoin::unadjusted(nine_coin(), FeePolicy::zero_fee(Design::Generic))
}

/// Splits `total` into between one and three positive parts.
fn split(total: i64, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut out = Vec::new();
    let mut left = total;
    while left > 0 && out.len() < 2 {
        let v = rng.gen_range(1..=left);
        out.push(v);
        left -= v;
    }
    if left > 0 {
        out.push(left);
    }
    out
}

/// Planted users over the given inputs: returns outputs with each user's
/// residual drawn from `[0, hi]`.
fn planted_outputs(ins: &[i64], hi: i64, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut idx: Vec<usize> = (0..ins.len()).collect();
    idx.shuffle(rng);
    let cut = rng.gen_range(1..=idx.len());
    let mut outs = Vec::new();
    for group in [&idx[..cut], &idx[cut..]] {
        if group.is_empty() {
            continue;
        }
        let sum: i64 = group.iter().map(|&k| ins[k]).sum();
        let r = rng.gen_range(0..=hi.min(sum - 1));
        outs.extend(split(sum - r, rng));
    }
    outs
}

/// Two zero-fee transactions where `b` spends one or two outputs of `a`.
/// Returns the set and each member's window upper bound.
pub fn random_linked(seed: u64, max_total: usize) -> (cjmap::multicj::LinkedSet, [i64; 2]) {
    use cjmap::multicj::{InternalCoin, LinkedSet};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let ha = rng.gen_range(0..=1);
        let hb = rng.gen_range(0..=1);
        let a_in: Vec<i64> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=6)).collect();
        let a_out = planted_outputs(&a_in, ha, &mut rng);
        let k = rng.gen_range(1..=a_out.len().min(2));
        let mut b_in: Vec<i64> = a_out[..k].to_vec();
        for _ in 0..rng.gen_range(0..=2) {
            b_in.push(rng.gen_range(1..=6));
        }
        let b_out = planted_outputs(&b_in, hb, &mut rng);
        if a_in.len() + a_out.len() + b_in.len() + b_out.len() > max_total {
            continue;
        }
        let a = Coinjoin::from_values("a", Design::Generic, &a_in, &a_out);
        let b = Coinjoin::from_values("b", Design::Generic, &b_in, &b_out);
        let internal_coins = (0..k)
            .map(|j| InternalCoin {
                from: "a".into(),
                output: format!("o{j}"),
                to: "b".into(),
                input: format!("i{j}"),
            })
            .collect();
        let set = LinkedSet {
            txs: vec![a, b],
            internal_coins,
            links: vec![],
        };
        return (set, [ha, hb]);
    }
}

pub fn zero_fee_setups(windows: &[i64]) -> Vec<cjmap::multicj::TxSetup> {
    windows
        .iter()
        .map(|&hi| cjmap::multicj::TxSetup {
            policy: FeePolicy::zero_fee(Design::Generic).with_window(0, hi),
            constraints: Constraints::default(),
        })
        .collect()
}
