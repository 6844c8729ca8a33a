//! Acceptance gates. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero when any gate fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cjmap::anonloss::{compute_loss, BucketScheme, GraphInput, GraphOutput, GraphTx, Horizon, TxGraph, SECONDS_PER_DAY};
use cjmap::enumerate::{
    assemble_mappings, brute_force_concrete, brute_force_oracle, enumerate, enumerate_submappings, expand_concrete,
    Constraints, EnumerationOptions,
};
use cjmap::fit::{fit_trend, Aggregate};
use cjmap::generator::{generate, generate_sized, trend_dataset, GeneratorParams};
use cjmap::io::{to_json, ResultFile};
use cjmap::metrics::{entropy, link_probability, link_probability_exact, mapping_distribution, metrics_report, WeightTable};
use cjmap::model::{Coinjoin, Design, Mapping};
use cjmap::multicj::{enumerate_linked, joint_oracle, LinkedSet};
use cjmap::preprocess::normalize_fees;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;

const FIG1_RUNTIME: Duration = Duration::from_secs(1);
const ORACLE_INSTANCES: u64 = 500;
const ORACLE_MAX_SIZE: usize = 12;
const ORACLE_RUNTIME: Duration = Duration::from_secs(600);
const TRUTH_PER_SIZE: usize = 5;
const ENTROPY_TOL: f64 = 1e-9;
const SCALING_TOL: f64 = 1e-12;
const SCALE_FACTORS: [f64; 3] = [1e-6, 3.5, 1e9];
const LINKED_TOYS: u64 = 200;
const LINKED_MAX_SIZE: usize = 12;
const TREND_SIZES: std::ops::RangeInclusive<usize> = 6..=16;
const TREND_PER_SIZE: usize = 1000;
const TREND_SEEDS: (u64, u64) = (1, 2);
const TREND_MIN_R2: f64 = 0.9;
const TREND_SLOPE_TOL: f64 = 0.05;
const SIZE20_RUNTIME: Duration = Duration::from_secs(60);
const SIZE20_WORKERS: usize = 8;
const SCALE_MIN_NUMERIC: usize = 10_000;
const SCALE_RUNTIME: Duration = Duration::from_secs(600);

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_nine_coin() -> Outcome {
    let t = Instant::now();
    let ntx = common::nine_coin_normalized();
    let r = enumerate(&ntx, &Constraints::default(), &EnumerationOptions::default()).map_err(|e| e.to_string())?;
    let dt = t.elapsed();
    ensure(r.total_concrete == BigUint::from(24u32), || format!("total {}", r.total_concrete))?;
    ensure(dt < FIG1_RUNTIME, || format!("took {dt:?}"))?;
    Ok(format!("24 concrete mappings, {} numeric, {dt:?}", r.numeric_count()))
}

fn c2_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let opts = EnumerationOptions::with_threads(1);
    let mut nonempty = 0;
    let mut designs = BTreeSet::new();
    for seed in 0..ORACLE_INSTANCES {
        let inst = common::random_instance(seed, ORACLE_MAX_SIZE);
        designs.insert(inst.ntx.base.design);
        let subs = enumerate_submappings(&inst.ntx, &inst.constraints, &opts).map_err(|e| e.to_string())?;
        let ours = assemble_mappings(subs, &inst.ntx, &inst.constraints, &opts).map_err(|e| e.to_string())?;
        let oracle = brute_force_oracle(&inst.ntx, &inst.constraints).map_err(|e| e.to_string())?;
        ensure(ours.numeric_set() == oracle.numeric_set(), || format!("seed {seed} differs"))?;
        nonempty += usize::from(ours.numeric_count() > 0);
    }
    let dt = t.elapsed();
    ensure(designs.len() == 5, || format!("designs covered: {designs:?}"))?;
    ensure(dt < ORACLE_RUNTIME, || format!("took {dt:?}"))?;
    Ok(format!("{ORACLE_INSTANCES} instances ({nonempty} with mappings), {dt:.1?}"))
}

fn c3_truth_inclusion() -> Outcome {
    let params = GeneratorParams::default();
    let mut n = 0;
    for design in Design::ALL {
        for size in TREND_SIZES {
            if design == Design::Whirlpool && size % 2 == 1 {
                continue;
            }
            for k in 0..TRUTH_PER_SIZE {
                let gt = generate_sized(design, size, 77, k as u64, &params).map_err(|e| e.to_string())?;
                let ntx = normalize_fees(&gt.tx, &gt.policy).map_err(|e| e.to_string())?;
                let res = enumerate(&ntx, &Constraints::for_design(design), &EnumerationOptions::default())
                    .map_err(|e| e.to_string())?;
                let sig = gt.true_signature().map_err(|e| e.to_string())?;
                ensure(res.contains(&sig), || format!("{} misses its ground truth", gt.tx.txid))?;
                n += 1;
            }
        }
    }
    ensure(n >= 200, || format!("only {n} instances"))?;
    Ok(format!("{n}/{n} instances include the true mapping"))
}

fn c4_counting_identity() -> Outcome {
    let mut checked = 0;
    for seed in 0..ORACLE_INSTANCES {
        let inst = common::random_instance(seed, ORACLE_MAX_SIZE);
        let res = enumerate(&inst.ntx, &inst.constraints, &EnumerationOptions::default()).map_err(|e| e.to_string())?;
        let concrete = brute_force_concrete(&inst.ntx, &inst.constraints).map_err(|e| e.to_string())?;
        let sum: BigUint = res.numeric_mappings.iter().map(|m| &m.multiplicity).sum();
        ensure(sum == BigUint::from(concrete.len()), || format!("seed {seed}: {sum} vs {}", concrete.len()))?;
        ensure(sum == res.total_concrete, || format!("seed {seed}: total mismatch"))?;
        if concrete.is_empty() {
            continue;
        }
        let h = entropy(&mapping_distribution(&res, None).map_err(|e| e.to_string())?);
        let want = (concrete.len() as f64).log2();
        ensure((h - want).abs() <= ENTROPY_TOL, || format!("seed {seed}: H {h} vs {want}"))?;
        checked += 1;
    }
    Ok(format!("{ORACLE_INSTANCES} instances, entropy checked on {checked}"))
}

fn concrete_links(mappings: &[Mapping]) -> Vec<(String, String, BigRational)> {
    let mut counts: std::collections::BTreeMap<(String, String), u64> = Default::default();
    for m in mappings {
        for s in &m.submappings {
            for i in &s.input_ids {
                for o in &s.output_ids {
                    *counts.entry((i.clone(), o.clone())).or_default() += 1;
                }
            }
        }
    }
    let n = mappings.len() as u64;
    counts
        .into_iter()
        .map(|((i, o), c)| (i, o, BigRational::new(c.into(), n.into())))
        .collect()
}

fn c5_metrics_consistency() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..ORACLE_INSTANCES {
        let inst = common::random_instance(seed, ORACLE_MAX_SIZE);
        let res = enumerate(&inst.ntx, &inst.constraints, &EnumerationOptions::default()).map_err(|e| e.to_string())?;
        if res.numeric_count() == 0 {
            continue;
        }
        let concrete = brute_force_concrete(&inst.ntx, &inst.constraints).map_err(|e| e.to_string())?;
        let mut exact: Vec<_> = link_probability_exact(&res).into_iter().filter(|(_, _, p)| !p.is_zero()).collect();
        exact.sort();
        ensure(exact == concrete_links(&concrete), || format!("seed {seed}: link probabilities differ"))?;

        let mut w = WeightTable::default();
        for (k, s) in res.submappings.iter().enumerate() {
            let (i, o) = res.classes.values(s);
            w.set(&i, &o, 0.25 + (k % 7) as f64);
        }
        let base = mapping_distribution(&res, Some(&w)).map_err(|e| e.to_string())?;
        let base_links = link_probability(&res, &base);
        for f in SCALE_FACTORS {
            let d = mapping_distribution(&res, Some(&w.scaled(f))).map_err(|e| e.to_string())?;
            for (a, b) in base.mass.iter().zip(&d.mass) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((entropy(&base) - entropy(&d)).abs());
            let l = link_probability(&res, &d);
            for (ra, rb) in base_links.p.iter().zip(&l.p) {
                for (a, b) in ra.iter().zip(rb) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        ensure(worst <= SCALING_TOL, || format!("seed {seed}: scaling drift {worst:e}"))?;
        checked += 1;
    }
    Ok(format!("{checked} instances exact; max scaling drift {worst:.1e}"))
}

fn tx(txid: &str, day: f64, inputs: &[(&str, u32)], outputs: &[i64]) -> GraphTx {
    GraphTx {
        txid: txid.into(),
        timestamp: (day * SECONDS_PER_DAY as f64) as i64,
        height: None,
        inputs: inputs
            .iter()
            .map(|&(t, v)| GraphInput {
                txid: t.into(),
                vout: v,
                address: None,
            })
            .collect(),
        outputs: outputs.iter().map(|&v| GraphOutput { value: v, address: None }).collect(),
    }
}

fn c6_anonymity_loss() -> Outcome {
    // cj1: outputs 0,1 consolidated after half a day, output 2 joined with a
    // cj2 output on day 3, output 3 remixed into cj3.
    // cj2 (day 1): output 0 consolidated on day 3, outputs 1,2 on day 40.
    let g = TxGraph {
        transactions: vec![
            tx("cj1", 0.0, &[("ext", 0)], &[10, 10, 10, 10]),
            tx("a", 0.5, &[("cj1", 0), ("cj1", 1)], &[19]),
            tx("cj2", 1.0, &[("ext", 1)], &[5, 5, 7]),
            tx("cj3", 2.0, &[("cj1", 3), ("ext", 2)], &[10, 10]),
            tx("b", 3.0, &[("cj1", 2), ("cj2", 0)], &[14]),
            tx("c", 40.0, &[("cj2", 1), ("cj2", 2)], &[11]),
        ],
        coinjoin_ids: ["cj1", "cj2", "cj3"].iter().map(|s| s.to_string()).collect(),
    };
    let hs = [Horizon::Days(0), Horizon::Days(1), Horizon::Days(7), Horizon::Days(30), Horizon::Infinite];
    let r = compute_loss(&g, &hs, &BucketScheme::default()).map_err(|e| e.to_string())?;
    let expect = [
        ("cj1", vec![0.0, 0.5, 0.75, 0.75, 0.75]),
        ("cj2", vec![0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]),
        ("cj3", vec![0.0; 5]),
    ];
    for (id, want) in &expect {
        let got = &r.tx(id).ok_or_else(|| format!("{id} missing"))?.loss;
        ensure(got == want, || format!("{id}: {got:?} vs {want:?}"))?;
    }
    let dense: Vec<Horizon> = (0..=60).map(Horizon::Days).chain([Horizon::Infinite]).collect();
    let r = compute_loss(&g, &dense, &BucketScheme::default()).map_err(|e| e.to_string())?;
    for t in &r.per_tx {
        ensure(t.loss[0] == 0.0, || format!("{}: A_0 = {}", t.txid, t.loss[0]))?;
        ensure(t.loss.windows(2).all(|w| w[0] <= w[1]), || format!("{} not monotone", t.txid))?;
        ensure(t.loss.iter().all(|a| (0.0..=1.0).contains(a)), || format!("{} out of bounds", t.txid))?;
    }
    Ok("hand-computed A_d reproduced, A_0 = 0, monotone in d".into())
}

fn c7_multicj() -> Outcome {
    let opts = EnumerationOptions::default();
    let mut nonempty = 0;
    for seed in 0..LINKED_TOYS {
        let (set, windows) = common::random_linked(seed, LINKED_MAX_SIZE);
        let setups = common::zero_fee_setups(&windows);
        let lr = enumerate_linked(&set, &setups, &opts).map_err(|e| e.to_string())?;
        let ours: BTreeSet<Mapping> = expand_concrete(&lr.result, 1_000_000)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|c| c.mapping)
            .collect();
        let oracle = joint_oracle(&set, &setups).map_err(|e| e.to_string())?;
        ensure(ours == oracle, || format!("toy {seed}: {} vs {} mappings", ours.len(), oracle.len()))?;
        nonempty += usize::from(!ours.is_empty());
    }

    // No links: the artificial transaction factors into its members.
    let a = Coinjoin::from_values("a", Design::Generic, &[3, 3], &[3, 3]);
    let b = common::nine_coin();
    let unlinked = LinkedSet {
        txs: vec![a, b],
        internal_coins: vec![],
        links: vec![],
    };
    let lr = enumerate_linked(&unlinked, &common::zero_fee_setups(&[0, 0]), &opts).map_err(|e| e.to_string())?;
    ensure(lr.result.total_concrete == BigUint::from(3u32 * 24), || format!("product {}", lr.result.total_concrete))?;
    for c in expand_concrete(&lr.result, 1_000).map_err(|e| e.to_string())? {
        for s in &c.mapping.submappings {
            let origins: BTreeSet<&str> = s
                .input_ids
                .iter()
                .chain(&s.output_ids)
                .map(|id| id.split(':').next().unwrap_or(""))
                .collect();
            ensure(origins.len() == 1, || "a user spans both transactions without a link".into())?;
        }
    }

    // Full capacity: every output of `a` is spent by `b` and mirrors an input.
    let a = Coinjoin::from_values("a", Design::Generic, &[5, 3, 2], &[5, 3, 2]);
    let b = Coinjoin::from_values("b", Design::Generic, &[5, 3, 2, 4], &[5, 3, 6]);
    let full = LinkedSet {
        txs: vec![a, b],
        internal_coins: (0..3)
            .map(|j| cjmap::multicj::InternalCoin {
                from: "a".into(),
                output: format!("o{j}"),
                to: "b".into(),
                input: format!("i{j}"),
            })
            .collect(),
        links: vec![],
    };
    let lr = enumerate_linked(&full, &common::zero_fee_setups(&[0, 0]), &opts).map_err(|e| e.to_string())?;
    let plain = enumerate(&lr.normalized, &lr.loose_constraints, &opts).map_err(|e| e.to_string())?;
    ensure(lr.result.numeric_set() == plain.numeric_set(), || "full-capacity result differs from the artificial enumeration".into())?;
    ensure(lr.unfiltered_count == lr.result.numeric_count(), || "full-capacity filter removed mappings".into())?;
    Ok(format!(
        "{LINKED_TOYS} toys match the joint oracle ({nonempty} non-empty); zero and full capacity hold"
    ))
}

fn c8_trend() -> Outcome {
    let sizes: Vec<usize> = TREND_SIZES.collect();
    let params = GeneratorParams::default();
    let opts = EnumerationOptions::default();
    let fit = |seed| -> Result<_, String> {
        let rows = trend_dataset(Design::Generic, &sizes, TREND_PER_SIZE, seed, &params, &opts).map_err(|e| e.to_string())?;
        fit_trend(&rows, Aggregate::SizeMean).map_err(|e| e.to_string())
    };
    let (f1, f2) = (fit(TREND_SEEDS.0)?, fit(TREND_SEEDS.1)?);
    let rel = (f1.slope - f2.slope).abs() / f1.slope.abs().max(f2.slope.abs());
    let line = format!(
        "generic: slopes {:.4}/{:.4} (rel diff {:.3}), R2 {:.3}/{:.3}",
        f1.slope, f2.slope, rel, f1.r_squared, f2.r_squared
    );
    ensure(f1.slope > 0.0 && f2.slope > 0.0, || format!("{line}: slope not positive"))?;
    ensure(f1.r_squared >= TREND_MIN_R2 && f2.r_squared >= TREND_MIN_R2, || format!("{line}: R2 too low"))?;
    ensure(rel <= TREND_SLOPE_TOL, || format!("{line}: slopes unstable"))?;
    Ok(line)
}

fn result_bytes(ntx: &cjmap::preprocess::NormalizedCoinjoin, c: &Constraints, threads: usize) -> Result<(String, String), String> {
    let res = enumerate(ntx, c, &EnumerationOptions::with_threads(threads)).map_err(|e| e.to_string())?;
    let file = to_json(&ResultFile::new(&ntx.base.txid, ntx.base.design, &res)).map_err(|e| e.to_string())?;
    let report = metrics_report(&res, None, &[]).map_err(|e| e.to_string())?;
    Ok((file, to_json(&report).map_err(|e| e.to_string())?))
}

fn c9_determinism() -> Outcome {
    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
    let params = GeneratorParams::default();
    let mut cases = vec![(common::nine_coin_normalized(), Constraints::default())];
    for (design, users, seed) in [(Design::Wasabi2, 7, 1), (Design::Generic, 6, 2), (Design::Joinmarket, 5, 3)] {
        let gt = generate(design, users, seed, &params).map_err(|e| e.to_string())?;
        cases.push((normalize_fees(&gt.tx, &gt.policy).map_err(|e| e.to_string())?, Constraints::for_design(design)));
    }
    for (ntx, c) in &cases {
        let one = result_bytes(ntx, c, 1)?;
        for t in [4, max] {
            ensure(result_bytes(ntx, c, t)? == one, || format!("{} differs at {t} workers", ntx.base.txid))?;
        }
    }
    let mut slowest = Duration::ZERO;
    for design in Design::ALL {
        for seed in 0..3 {
            let gt = generate_sized(design, 20, seed, 0, &params).map_err(|e| e.to_string())?;
            let ntx = normalize_fees(&gt.tx, &gt.policy).map_err(|e| e.to_string())?;
            let t = Instant::now();
            enumerate(&ntx, &Constraints::for_design(design), &EnumerationOptions::with_threads(SIZE20_WORKERS))
                .map_err(|e| e.to_string())?;
            slowest = slowest.max(t.elapsed());
        }
    }
    ensure(slowest < SIZE20_RUNTIME, || format!("size-20 took {slowest:?}"))?;
    Ok(format!(
        "byte-identical at 1/4/{max} workers on {} instances; slowest size-20 run {slowest:.2?}",
        cases.len()
    ))
}

fn c10_scale() -> Outcome {
    let gt = generate(Design::Wasabi2, 9, 1, &GeneratorParams::default()).map_err(|e| e.to_string())?;
    let ntx = normalize_fees(&gt.tx, &gt.policy).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let res = enumerate(&ntx, &Constraints::for_design(Design::Wasabi2), &EnumerationOptions::default())
        .map_err(|e| e.to_string())?;
    let dt = t.elapsed();
    ensure(res.numeric_count() >= SCALE_MIN_NUMERIC, || format!("only {} numeric mappings", res.numeric_count()))?;
    ensure(dt < SCALE_RUNTIME, || format!("took {dt:?}"))?;
    let sig = gt.true_signature().map_err(|e| e.to_string())?;
    ensure(res.contains(&sig), || "ground truth missing".into())?;
    Ok(format!(
        "size {} wasabi2: {} numeric mappings ({} concrete, 2^{:.1}) in {dt:.1?}",
        gt.tx.size(),
        res.numeric_count(),
        res.total_concrete,
        cjmap::metrics::big_log2(&res.total_concrete)
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("nine-coin ground truth", c1_nine_coin),
        ("oracle equivalence", c2_oracle_equivalence),
        ("ground-truth inclusion", c3_truth_inclusion),
        ("counting identity", c4_counting_identity),
        ("metrics consistency", c5_metrics_consistency),
        ("anonymity loss", c6_anonymity_loss),
        ("multi-coinjoin soundness", c7_multicj),
        ("exponential trend", c8_trend),
        ("determinism and parallelism", c9_determinism),
        ("scale", c10_scale),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.1}s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{secs:.1}s]", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

