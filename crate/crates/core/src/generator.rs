//! Synthetic coinjoins with known ground truth.
//!
//! Users are sampled one at a time in the fee-normalized domain: raw inputs
//! are drawn, the design's fee policy is applied to them, and the normalized
//! sum is decomposed into outputs whose raw values are obtained by undoing the
//! output-side fees. Enumerating the result under the same policy therefore
//! sees every user's residual inside the window.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumerate::{enumerate, Constraints, EnumerationOptions};
use crate::error::{Error, Result};
use crate::model::{Coin, Coinjoin, Design, Mapping, Origin, SubMapping};
use crate::numeric::{ClassTable, Signature};
use crate::preprocess::{build_policy, normalize_fees, FeePolicy, PolicyParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub min_inputs_per_user: u32,
    pub max_inputs_per_user: u32,
    pub max_outputs_per_user: u32,
    pub min_input_value: i64,
    pub max_input_value: i64,
    /// Mining feerate for designs that split it per coin.
    pub feerate: i64,
    /// Smallest rung of the `base * 2^k` output ladder.
    pub ladder_base: i64,
    pub remix_probability: f64,
    /// Whirlpool pool size.
    pub pool_denomination: i64,
    /// Rejection-sampling budget per instance.
    pub max_attempts: u32,
    /// Overrides passed to the fee policy builder.
    pub policy: PolicyParams,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            min_inputs_per_user: 1,
            max_inputs_per_user: 3,
            max_outputs_per_user: 4,
            min_input_value: 100_000,
            max_input_value: 20_000_000,
            feerate: 10,
            ladder_base: 20_000,
            remix_probability: 0.3,
            pool_denomination: 1_000_000,
            max_attempts: 10_000,
            policy: PolicyParams::default(),
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self, design: Design) -> Result<()> {
        let fail = |m: &str| Err(Error::InfeasibleParams(m.to_string()));
        let limits = Constraints::for_design(design);
        if self.min_inputs_per_user == 0 || self.min_inputs_per_user > self.max_inputs_per_user {
            return fail("per-user input range is empty");
        }
        if self.max_outputs_per_user == 0 {
            return fail("users need at least one output");
        }
        if design != Design::Whirlpool
            && (self.max_inputs_per_user > limits.max_inputs_per_user
                || self.max_outputs_per_user > limits.max_outputs_per_user)
        {
            return fail("per-user coin counts exceed the design's constraints");
        }
        if self.min_input_value <= 0 || self.min_input_value > self.max_input_value {
            return fail("input value range is empty");
        }
        if self.feerate < 0 || self.ladder_base <= 0 || self.pool_denomination <= 0 {
            return fail("feerate, ladder base and pool denomination must be positive");
        }
        if !(0.0..=1.0).contains(&self.remix_probability) {
            return fail("remix probability must lie in [0, 1]");
        }
        if self.max_attempts == 0 {
            return fail("max_attempts must be positive");
        }
        Ok(())
    }

    /// The policy the generated transactions are built against.
    pub fn fee_policy(&self, design: Design) -> Result<FeePolicy> {
        let mut p = self.policy.clone();
        match design {
            Design::Wasabi1 | Design::Wasabi2 => p.feerate = p.feerate.or(Some(self.feerate)),
            Design::Whirlpool => p.pool_denomination = p.pool_denomination.or(Some(self.pool_denomination)),
            _ => {}
        }
        build_policy(design, &p)
    }
}

/// A generated coinjoin with the mapping that produced it. Residuals of the
/// true mapping are fee-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tx: Coinjoin,
    pub true_mapping: Mapping,
    pub seed: u64,
    pub design: Design,
    pub policy: FeePolicy,
}

impl GroundTruth {
    /// Numeric signature of the true mapping.
    pub fn true_signature(&self) -> Result<Vec<Signature>> {
        let ntx = normalize_fees(&self.tx, &self.policy)?;
        ClassTable::from_normalized(&ntx).signature_of(&self.true_mapping)
    }
}

/// RNG for instance `index` of a run seeded with `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws per user before the whole instance is rejected.
const USER_ATTEMPTS: u32 = 64;

struct User {
    inputs: Vec<Coin>,
    outputs: Vec<i64>,
}

struct Sampler<'a> {
    design: Design,
    params: &'a GeneratorParams,
    policy: &'a FeePolicy,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn log_uniform(&mut self, lo: i64, hi: i64) -> i64 {
        if lo >= hi {
            return lo;
        }
        let x: f64 = self.rng.gen_range((lo as f64).ln()..=(hi as f64).ln());
        (x.exp().round() as i64).clamp(lo, hi)
    }

    fn input_count(&mut self) -> u32 {
        self.rng.gen_range(self.params.min_inputs_per_user..=self.params.max_inputs_per_user)
    }

    fn ladder(&self) -> Vec<i64> {
        let mut rungs = vec![self.params.ladder_base];
        while let Some(&last) = rungs.last() {
            if last > self.params.max_input_value * i64::from(self.params.max_inputs_per_user) {
                break;
            }
            rungs.push(last * 2);
        }
        rungs
    }

    fn normalized_input(&self, c: &Coin) -> i64 {
        c.value - self.policy.input_coordination_fee(c) - self.policy.input_mining_fee()
    }

    fn fresh_inputs(&mut self, n: u32) -> Vec<Coin> {
        (0..n)
            .map(|_| {
                let v = self.log_uniform(self.params.min_input_value, self.params.max_input_value);
                Coin::new("", v).with_origin(Origin::Fresh)
            })
            .collect()
    }

    fn wasabi2(&mut self) -> Option<User> {
        let ladder = self.ladder();
        let remixable: Vec<i64> = ladder
            .iter()
            .copied()
            .filter(|&v| (self.params.min_input_value..=self.params.max_input_value).contains(&v))
            .collect();
        let n = self.input_count();
        let mut inputs = Vec::new();
        for _ in 0..n {
            if !remixable.is_empty() && self.rng.gen_bool(self.params.remix_probability) {
                let v = *remixable.choose(&mut self.rng)?;
                inputs.push(Coin::new("", v).with_origin(Origin::Remix));
            } else {
                inputs.extend(self.fresh_inputs(1));
            }
        }
        let fee_out = self.policy.output_mining_fee();
        let mut left: i64 = inputs.iter().map(|c| self.normalized_input(c)).sum();
        let mut outputs = Vec::new();
        while outputs.len() + 1 < self.params.max_outputs_per_user as usize {
            match ladder.iter().rev().find(|&&d| d + fee_out <= left) {
                Some(&d) => {
                    outputs.push(d);
                    left -= d + fee_out;
                }
                None => break,
            }
        }
        // Anything the window cannot absorb becomes change.
        if left > self.policy.residual_max {
            let change = left - fee_out;
            if change <= 0 {
                return None;
            }
            outputs.push(change);
        }
        (!outputs.is_empty()).then_some(User { inputs, outputs })
    }

    fn wasabi1(&mut self) -> Option<User> {
        let d = *self.policy.denominations.first()?;
        let n = self.input_count();
        let inputs = self.fresh_inputs(n);
        let have: i64 = inputs.iter().map(|c| self.normalized_input(c)).sum();
        let denom = Coin::new("", d);
        let need = d + self.policy.output_coordination_fee(&denom) + self.policy.output_mining_fee();
        let change = have - need - self.policy.output_mining_fee();
        if change <= 0 {
            return None;
        }
        Some(User {
            inputs,
            outputs: vec![d, change],
        })
    }

    fn whirlpool(&mut self) -> Option<User> {
        let pool = self.policy.pool_denomination.unwrap_or(self.params.pool_denomination);
        let input = if self.rng.gen_bool(self.params.remix_probability) {
            Coin::new("", pool).with_origin(Origin::Remix)
        } else {
            let premium = self.rng.gen_range(10_000..=60_000);
            Coin::new("", pool + premium).with_origin(Origin::Fresh)
        };
        Some(User {
            inputs: vec![input],
            outputs: vec![pool],
        })
    }

    fn generic(&mut self) -> Option<User> {
        let n = self.input_count();
        let inputs = self.fresh_inputs(n);
        let sum: i64 = inputs.iter().map(|c| self.normalized_input(c)).sum();
        let fee_out = self.policy.output_mining_fee();
        let m = self.rng.gen_range(1..=self.params.max_outputs_per_user) as i64;
        let spend = sum - m * fee_out;
        if spend < m {
            return None;
        }
        let mut cuts: BTreeSet<i64> = (1..m).map(|_| self.rng.gen_range(1..spend)).collect();
        cuts.insert(0);
        cuts.insert(spend);
        let cuts: Vec<i64> = cuts.into_iter().collect();
        let outputs = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        Some(User { inputs, outputs })
    }

    /// One taker followed by makers, all sending the same amount.
    fn joinmarket(&mut self, users: usize) -> Option<Vec<User>> {
        let amount = self.log_uniform(self.params.min_input_value, self.params.max_input_value / 2);
        let maker_max = -self.policy.residual_min;
        let mut out = Vec::new();
        let mut earned = 0;
        for _ in 1..users {
            let (inputs, have) = (0..USER_ATTEMPTS).find_map(|_| {
                let n = self.input_count();
                let inputs = self.fresh_inputs(n);
                let have: i64 = inputs.iter().map(|c| c.value).sum();
                (have > amount).then_some((inputs, have))
            })?;
            let fee = self.rng.gen_range(0..=maker_max);
            earned += fee;
            out.push(User {
                inputs,
                outputs: vec![amount, have - amount + fee],
            });
        }
        let n = self.input_count();
        let inputs = self.fresh_inputs(n);
        let have: i64 = inputs.iter().map(|c| c.value).sum();
        let mining = self.rng.gen_range(200..=5_000);
        let change = have - amount - earned - mining;
        if change <= 0 || earned + mining > self.policy.residual_max {
            return None;
        }
        out.insert(
            0,
            User {
                inputs,
                outputs: vec![amount, change],
            },
        );
        Some(out)
    }

    fn users(&mut self, n: usize) -> Option<Vec<User>> {
        if self.design == Design::Joinmarket {
            return self.joinmarket(n);
        }
        (0..n)
            .map(|_| {
                (0..USER_ATTEMPTS).find_map(|_| match self.design {
                    Design::Wasabi2 => self.wasabi2(),
                    Design::Wasabi1 => self.wasabi1(),
                    Design::Whirlpool => self.whirlpool(),
                    _ => self.generic(),
                })
            })
            .collect()
    }

    fn assemble(&mut self, seed: u64, users: Vec<User>) -> Result<GroundTruth> {
        let mut ins: Vec<(usize, Coin)> = Vec::new();
        let mut outs: Vec<(usize, i64)> = Vec::new();
        for (u, user) in users.into_iter().enumerate() {
            ins.extend(user.inputs.into_iter().map(|c| (u, c)));
            outs.extend(user.outputs.into_iter().map(|v| (u, v)));
        }
        ins.shuffle(&mut self.rng);
        outs.shuffle(&mut self.rng);
        let n_users = ins.iter().map(|(u, _)| u + 1).max().unwrap_or(0);
        let mut subs = vec![
            SubMapping {
                input_ids: BTreeSet::new(),
                output_ids: BTreeSet::new(),
                residual: 0,
            };
            n_users
        ];
        let mut tx = Coinjoin {
            txid: format!("gen-{}-{seed:016x}", self.design),
            design: self.design,
            declared_mining_feerate: matches!(self.design, Design::Wasabi1 | Design::Wasabi2)
                .then_some(self.policy.mining_feerate),
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        for (k, (u, c)) in ins.into_iter().enumerate() {
            let id = format!("i{k}");
            subs[u].input_ids.insert(id.clone());
            tx.inputs.push(Coin { id, ..c });
        }
        for (k, (u, v)) in outs.into_iter().enumerate() {
            let id = format!("o{k}");
            subs[u].output_ids.insert(id.clone());
            tx.outputs.push(Coin::new(id, v));
        }
        let ntx = normalize_fees(&tx, self.policy)?;
        let value = |side: &[Coin], id: &str| side.iter().find(|c| c.id == id).map_or(0, |c| c.value);
        for s in &mut subs {
            let i: i64 = s.input_ids.iter().map(|id| value(&ntx.base.inputs, id)).sum();
            let o: i64 = s.output_ids.iter().map(|id| value(&ntx.base.outputs, id)).sum();
            s.residual = i - o;
        }
        let true_mapping = Mapping::new(subs);
        let (lo, hi) = ntx.window();
        if !true_mapping.is_admissible(&ntx.base, lo, hi) {
            return Err(Error::InfeasibleParams(format!(
                "generated mapping leaves the residual window [{lo}, {hi}]"
            )));
        }
        Ok(GroundTruth {
            tx,
            true_mapping,
            seed,
            design: self.design,
            policy: self.policy.clone(),
        })
    }
}

fn sample(design: Design, seed: u64, rng: ChaCha8Rng, params: &GeneratorParams, users: impl Fn(&mut ChaCha8Rng) -> usize, accept: impl Fn(&Coinjoin) -> bool) -> Result<GroundTruth> {
    params.validate(design)?;
    let policy = params.fee_policy(design)?;
    let mut s = Sampler {
        design,
        params,
        policy: &policy,
        rng,
    };
    for _ in 0..params.max_attempts {
        let n = users(&mut s.rng);
        if let Some(us) = s.users(n) {
            let gt = s.assemble(seed, us)?;
            if accept(&gt.tx) {
                return Ok(gt);
            }
        }
    }
    Err(Error::InfeasibleParams(format!(
        "no {design} instance found in {} attempts",
        params.max_attempts
    )))
}

/// A coinjoin with `users` participants.
pub fn generate(design: Design, users: usize, seed: u64, params: &GeneratorParams) -> Result<GroundTruth> {
    if users == 0 {
        return Err(Error::InfeasibleParams("at least one user is required".into()));
    }
    sample(design, seed, instance_rng(seed, 0), params, |_| users, |_| true)
}

/// A coinjoin with exactly `size` coins, found by rejection sampling over
/// user counts and per-user draws.
pub fn generate_sized(design: Design, size: usize, seed: u64, index: u64, params: &GeneratorParams) -> Result<GroundTruth> {
    if size < 2 || (design == Design::Whirlpool && size % 2 == 1) {
        return Err(Error::InfeasibleParams(format!("no {design} coinjoin has {size} coins")));
    }
    let max_users = if design == Design::Whirlpool { size / 2 } else { (size / 2).max(1) };
    let min_users = if design == Design::Whirlpool { size / 2 } else { 1 };
    sample(
        design,
        seed,
        instance_rng(seed, index),
        params,
        |rng| rng.gen_range(min_users..=max_users),
        |tx| tx.size() == size,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendRow {
    pub size: usize,
    pub count: u64,
}

/// `per_size` instances for every size, each enumerated under its own policy.
/// Rows come back ordered by size, then instance.
pub fn trend_dataset(design: Design, sizes: &[usize], per_size: usize, seed: u64, params: &GeneratorParams, opts: &EnumerationOptions) -> Result<Vec<TrendRow>> {
    let jobs: Vec<(usize, u64)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(s, &size)| (0..per_size).map(move |k| (size, (s * per_size + k) as u64)))
        .collect();
    let constraints = Constraints::for_design(design);
    // Inner searches share the enclosing pool.
    let inner = EnumerationOptions {
        threads: 0,
        ..opts.clone()
    };
    opts.install(|| {
        jobs.par_iter()
            .map(|&(size, index)| {
                let gt = generate_sized(design, size, seed, index, params)?;
                let ntx = normalize_fees(&gt.tx, &gt.policy)?;
                let res = enumerate(&ntx, &constraints, &inner)?;
                Ok(TrendRow {
                    size,
                    count: res.numeric_count() as u64,
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(gt: &GroundTruth) {
        let ntx = normalize_fees(&gt.tx, &gt.policy).unwrap();
        let (lo, hi) = ntx.window();
        assert!(gt.true_mapping.is_admissible(&ntx.base, lo, hi));
        let res = enumerate(&ntx, &Constraints::for_design(gt.design), &EnumerationOptions::default()).unwrap();
        assert!(res.contains(&gt.true_signature().unwrap()), "{:?}", gt.tx);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = GeneratorParams::default();
        for d in Design::ALL {
            assert_eq!(generate(d, 3, 9, &p).unwrap(), generate(d, 3, 9, &p).unwrap());
        }
        assert_ne!(generate(Design::Wasabi2, 3, 9, &p).unwrap(), generate(Design::Wasabi2, 3, 10, &p).unwrap());
    }

    #[test]
    fn single_generic_user() {
        let gt = generate(Design::Generic, 1, 5, &GeneratorParams::default()).unwrap();
        assert_eq!(gt.true_mapping.submappings.len(), 1);
        check(&gt);
    }

    #[test]
    fn wasabi2_three_users() {
        let gt = generate(Design::Wasabi2, 3, 42, &GeneratorParams::default()).unwrap();
        assert_eq!(gt.true_mapping.submappings.len(), 3);
        check(&gt);
    }

    #[test]
    fn whirlpool_five() {
        let gt = generate(Design::Whirlpool, 5, 7, &GeneratorParams::default()).unwrap();
        assert_eq!(gt.tx.inputs.len(), 5);
        assert!(gt.tx.outputs.iter().all(|c| c.value == 1_000_000));
        for c in &gt.tx.inputs {
            match c.origin {
                Some(Origin::Fresh) => assert!(c.value > 1_000_000),
                _ => assert_eq!(c.value, 1_000_000),
            }
        }
        check(&gt);
    }

    #[test]
    fn every_design_includes_truth() {
        let p = GeneratorParams::default();
        for d in Design::ALL {
            for seed in 0..5 {
                check(&generate(d, 3, seed, &p).unwrap());
            }
        }
    }

    #[test]
    fn wasabi2_residuals_in_window() {
        let p = GeneratorParams::default();
        for seed in 0..50 {
            let gt = generate(Design::Wasabi2, 4, seed, &p).unwrap();
            for s in &gt.true_mapping.submappings {
                assert!((0..=gt.policy.residual_max).contains(&s.residual));
            }
        }
    }

    #[test]
    fn sized_instances() {
        let p = GeneratorParams::default();
        for d in Design::ALL {
            let gt = generate_sized(d, 8, 3, 1, &p).unwrap();
            assert_eq!(gt.tx.size(), 8);
            check(&gt);
        }
        assert!(matches!(generate_sized(Design::Whirlpool, 7, 3, 1, &p), Err(Error::InfeasibleParams(_))));
    }

    #[test]
    fn trend_rows() {
        let rows = trend_dataset(Design::Generic, &[2, 6, 8], 3, 1, &GeneratorParams::default(), &EnumerationOptions::default()).unwrap();
        assert_eq!(rows.len(), 9);
        assert!(rows.iter().all(|r| r.count >= 1));
        assert!(rows[..3].iter().all(|r| r.size == 2 && r.count == 1));
    }

    #[test]
    fn bad_params() {
        let p = GeneratorParams {
            min_inputs_per_user: 4,
            ..Default::default()
        };
        assert!(matches!(generate(Design::Generic, 2, 1, &p), Err(Error::InfeasibleParams(_))));
        assert!(matches!(generate(Design::Generic, 0, 1, &GeneratorParams::default()), Err(Error::InfeasibleParams(_))));
    }
}
