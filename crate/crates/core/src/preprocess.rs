//! Fee normalization and attacker-knowledge preprocessing.
//!
//! A [`FeePolicy`] turns a raw transaction into one where every user's
//! input sum minus output sum lands inside a small residual window. The
//! predictable fee parts (coordination percentage, per-coin mining cost,
//! Whirlpool premix premium) are removed coin by coin; whatever cannot be
//! predicted stays in the window `[residual_min, residual_max]`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_coinjoin, Coin, CoinRef, Coinjoin, Design, Origin, Side};

pub const DEFAULT_INPUT_VSIZE: i64 = 68;
pub const DEFAULT_OUTPUT_VSIZE: i64 = 31;
pub const WASABI2_COORDINATION_PPM: i64 = 3000;
pub const WASABI2_COORDINATION_FLOOR: i64 = 1_000_000;
pub const WASABI2_MIN_OUTPUT: i64 = 5000;
pub const WASABI2_FEE_MARGIN: i64 = 500;
pub const WASABI1_COORDINATION_PPM: i64 = 1500;
pub const WASABI1_DENOMINATION: i64 = 10_000_000;
pub const JOINMARKET_MAKER_FEE_MAX: i64 = 1000;
pub const JOINMARKET_TAKER_FEE_MAX: i64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeePolicy {
    pub design: Design,
    /// Parts per million of an eligible coin's value charged by the coordinator.
    pub coordination_rate_ppm: i64,
    /// Inputs strictly below this value pay no coordination fee.
    pub coordination_floor: i64,
    pub remix_exempt: bool,
    /// Satoshis per virtual byte.
    pub mining_feerate: i64,
    pub input_vsize: i64,
    pub output_vsize: i64,
    pub residual_min: i64,
    pub residual_max: i64,
    /// Standard output denominations. Wasabi 1.x charges its coordination
    /// fee on outputs of these values.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub denominations: Vec<i64>,
    /// Whirlpool pool value; inferred from the outputs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_denomination: Option<i64>,
}

/// Overrides and design parameters for [`build_policy`]. Every field is optional;
/// missing values fall back to the design defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub feerate: Option<i64>,
    /// Minimal registrable output amount (Wasabi 2.x).
    pub min_out: Option<i64>,
    /// Error margin on top of `min_out` (Wasabi 2.x).
    pub margin: Option<i64>,
    pub coord_ppm: Option<i64>,
    pub coord_floor: Option<i64>,
    pub remix_exempt: Option<bool>,
    pub input_vsize: Option<i64>,
    pub output_vsize: Option<i64>,
    pub delta_min: Option<i64>,
    pub delta_max: Option<i64>,
    pub maker_fee_max: Option<i64>,
    pub taker_fee_max: Option<i64>,
    pub denominations: Option<Vec<i64>>,
    pub pool_denomination: Option<i64>,
}

impl FeePolicy {
    /// Width of the residual window.
    pub fn delta(&self) -> i64 {
        self.residual_max - self.residual_min
    }

    /// The identity policy: no fees and a zero-width window.
    pub fn zero_fee(design: Design) -> Self {
        FeePolicy {
            design,
            coordination_rate_ppm: 0,
            coordination_floor: 0,
            remix_exempt: false,
            mining_feerate: 0,
            input_vsize: DEFAULT_INPUT_VSIZE,
            output_vsize: DEFAULT_OUTPUT_VSIZE,
            residual_min: 0,
            residual_max: 0,
            denominations: Vec::new(),
            pool_denomination: None,
        }
    }

    pub fn with_window(mut self, residual_min: i64, residual_max: i64) -> Self {
        self.residual_min = residual_min;
        self.residual_max = residual_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.residual_min > self.residual_max {
            return Err(Error::InvalidPolicy(format!(
                "residual window [{}, {}] is empty",
                self.residual_min, self.residual_max
            )));
        }
        let fields = [
            ("coordination_rate_ppm", self.coordination_rate_ppm),
            ("coordination_floor", self.coordination_floor),
            ("mining_feerate", self.mining_feerate),
            ("input_vsize", self.input_vsize),
            ("output_vsize", self.output_vsize),
            ("residual_max", self.residual_max),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| *v < 0) {
            return Err(Error::InvalidPolicy(format!("{name} is negative ({v})")));
        }
        if self.residual_min < 0 && self.design != Design::Joinmarket {
            return Err(Error::InvalidPolicy(format!(
                "negative residual_min is only meaningful for joinmarket, got {}",
                self.residual_min
            )));
        }
        Ok(())
    }

    /// Coordination fee charged on a single input.
    pub fn input_coordination_fee(&self, coin: &Coin) -> i64 {
        if self.design == Design::Wasabi1 || self.coordination_rate_ppm == 0 {
            return 0;
        }
        if coin.value < self.coordination_floor {
            return 0;
        }
        if self.remix_exempt && coin.origin == Some(Origin::Remix) {
            return 0;
        }
        ppm(coin.value, self.coordination_rate_ppm)
    }

    /// Coordination fee attributed to an output (Wasabi 1.x standard outputs only).
    pub fn output_coordination_fee(&self, coin: &Coin) -> i64 {
        if self.design == Design::Wasabi1 && self.denominations.contains(&coin.value) {
            ppm(coin.value, self.coordination_rate_ppm)
        } else {
            0
        }
    }

    pub fn input_mining_fee(&self) -> i64 {
        self.mining_feerate * self.input_vsize
    }

    pub fn output_mining_fee(&self) -> i64 {
        self.mining_feerate * self.output_vsize
    }
}

fn ppm(value: i64, rate_ppm: i64) -> i64 {
    ((value as i128 * rate_ppm as i128) / 1_000_000) as i64
}

pub fn build_policy(design: Design, params: &PolicyParams) -> Result<FeePolicy> {
    let mut p = FeePolicy::zero_fee(design);
    p.input_vsize = params.input_vsize.unwrap_or(DEFAULT_INPUT_VSIZE);
    p.output_vsize = params.output_vsize.unwrap_or(DEFAULT_OUTPUT_VSIZE);
    match design {
        Design::Whirlpool => {
            // Mining fees are prepaid by TX0 outputs; only the premium is removed.
            p.mining_feerate = 0;
            p.pool_denomination = params.pool_denomination;
        }
        Design::Wasabi1 => {
            p.mining_feerate = params
                .feerate
                .ok_or_else(|| Error::MissingFeerate(design.to_string()))?;
            p.coordination_rate_ppm = params.coord_ppm.unwrap_or(WASABI1_COORDINATION_PPM);
            p.denominations = params
                .denominations
                .clone()
                .unwrap_or_else(|| vec![WASABI1_DENOMINATION]);
        }
        Design::Wasabi2 => {
            p.mining_feerate = params
                .feerate
                .ok_or_else(|| Error::MissingFeerate(design.to_string()))?;
            p.coordination_rate_ppm = params.coord_ppm.unwrap_or(WASABI2_COORDINATION_PPM);
            p.coordination_floor = params.coord_floor.unwrap_or(WASABI2_COORDINATION_FLOOR);
            p.remix_exempt = params.remix_exempt.unwrap_or(true);
            p.residual_max = params.min_out.unwrap_or(WASABI2_MIN_OUTPUT)
                + params.margin.unwrap_or(WASABI2_FEE_MARGIN);
        }
        Design::Joinmarket => {
            // The taker pays the whole mining fee, so nothing is split per coin.
            p.mining_feerate = 0;
            p.residual_min = -params.maker_fee_max.unwrap_or(JOINMARKET_MAKER_FEE_MAX);
            p.residual_max = params.taker_fee_max.unwrap_or(JOINMARKET_TAKER_FEE_MAX);
        }
        Design::Generic => {
            p.mining_feerate = params.feerate.unwrap_or(0);
            p.coordination_rate_ppm = params.coord_ppm.unwrap_or(0);
            p.coordination_floor = params.coord_floor.unwrap_or(0);
            p.remix_exempt = params.remix_exempt.unwrap_or(false);
        }
    }
    if design != Design::Generic {
        if let Some(ppm) = params.coord_ppm {
            p.coordination_rate_ppm = ppm;
        }
    }
    if let Some(d) = params.delta_min {
        p.residual_min = d;
    }
    if let Some(d) = params.delta_max {
        p.residual_max = d;
    }
    if let Some(ds) = &params.denominations {
        p.denominations = ds.clone();
    }
    p.validate()?;
    Ok(p)
}

/// Additional knowledge an analyst may hold about coin ownership.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Knowledge {
    pub same_owner_input_groups: Vec<Vec<String>>,
    pub same_owner_output_groups: Vec<Vec<String>>,
    /// (input id, output id) pairs known to share an owner.
    pub linked_pairs: Vec<(String, String)>,
    pub distinct_owner_pairs: Vec<(CoinRef, CoinRef)>,
}

impl Knowledge {
    pub fn is_empty(&self) -> bool {
        self.same_owner_input_groups.is_empty()
            && self.same_owner_output_groups.is_empty()
            && self.linked_pairs.is_empty()
            && self.distinct_owner_pairs.is_empty()
    }
}

/// A fee-normalized transaction ready for enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedCoinjoin {
    pub base: Coinjoin,
    pub policy: FeePolicy,
    /// Normalized coin → original ids (same side) it absorbed.
    #[serde(with = "crate::io::coin_map")]
    pub provenance: BTreeMap<CoinRef, Vec<String>>,
    #[serde(default)]
    pub distinct_owner_pairs: Vec<(CoinRef, CoinRef)>,
    /// Extra class key per coin; coins with different tags never share a class.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "crate::io::coin_map")]
    pub tags: BTreeMap<CoinRef, String>,
}

impl NormalizedCoinjoin {
    /// Wraps an already fee-free transaction without touching its values.
    pub fn unadjusted(tx: Coinjoin, policy: FeePolicy) -> Self {
        let provenance = identity_provenance(&tx);
        NormalizedCoinjoin {
            base: tx,
            policy,
            provenance,
            distinct_owner_pairs: Vec::new(),
            tags: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> (i64, i64) {
        (self.policy.residual_min, self.policy.residual_max)
    }

    /// Current coin holding the given original coin, if it still exists.
    pub fn resolve(&self, original: &CoinRef) -> Option<CoinRef> {
        self.provenance
            .iter()
            .find(|(k, v)| k.side() == original.side() && v.iter().any(|id| id == original.id()))
            .map(|(k, _)| k.clone())
    }
}

fn identity_provenance(tx: &Coinjoin) -> BTreeMap<CoinRef, Vec<String>> {
    let ins = tx.inputs.iter().map(|c| (CoinRef::Input(c.id.clone()), vec![c.id.clone()]));
    let outs = tx.outputs.iter().map(|c| (CoinRef::Output(c.id.clone()), vec![c.id.clone()]));
    ins.chain(outs).collect()
}

/// Most frequent output value, smallest on ties.
fn infer_pool_denomination(tx: &Coinjoin) -> i64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for c in &tx.outputs {
        *counts.entry(c.value).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, n)| n == best)
        .map(|(v, _)| v)
        .unwrap_or(0)
}

pub fn normalize_fees(tx: &Coinjoin, policy: &FeePolicy) -> Result<NormalizedCoinjoin> {
    validate_coinjoin(tx)?;
    policy.validate()?;
    let mut base = tx.clone();

    if policy.design == Design::Whirlpool {
        let pool = policy.pool_denomination.unwrap_or_else(|| infer_pool_denomination(tx));
        for c in &mut base.inputs {
            let remix = match c.origin {
                Some(Origin::Remix) => true,
                Some(Origin::Fresh) => false,
                None => c.value <= pool,
            };
            if !remix {
                // TX0 outputs carry the premix premium that pays the whole slot.
                let premium = c.value - pool;
                if premium < 0 {
                    return Err(Error::ValueUnderflow {
                        id: c.id.clone(),
                        value: premium,
                    });
                }
                c.value = pool;
            }
        }
    } else {
        for c in &mut base.inputs {
            let fee = policy.input_coordination_fee(c) + policy.input_mining_fee();
            c.value -= fee;
            if c.value <= 0 {
                return Err(Error::ValueUnderflow {
                    id: c.id.clone(),
                    value: c.value,
                });
            }
        }
        for c in &mut base.outputs {
            c.value += policy.output_coordination_fee(c) + policy.output_mining_fee();
        }
    }

    let provenance = identity_provenance(&base);
    Ok(NormalizedCoinjoin {
        base,
        policy: policy.clone(),
        provenance,
        distinct_owner_pairs: Vec::new(),
        tags: BTreeMap::new(),
    })
}

fn check_groups(ntx: &NormalizedCoinjoin, side: Side, groups: &[Vec<String>]) -> Result<()> {
    let mut seen = HashSet::new();
    for id in groups.iter().flatten() {
        if !seen.insert(id.as_str()) {
            return Err(Error::OverlappingGroups(id.clone()));
        }
        if ntx.base.coins(side).iter().all(|c| &c.id != id) {
            return Err(Error::DanglingId(id.clone()));
        }
    }
    Ok(())
}

fn merge_groups(
    coins: &mut Vec<Coin>,
    side: Side,
    groups: &[Vec<String>],
    provenance: &mut BTreeMap<CoinRef, Vec<String>>,
) {
    let make_ref = |id: String| match side {
        Side::Input => CoinRef::Input(id),
        Side::Output => CoinRef::Output(id),
    };
    for group in groups.iter().filter(|g| g.len() >= 2) {
        let members: Vec<usize> = coins
            .iter()
            .enumerate()
            .filter(|(_, c)| group.contains(&c.id))
            .map(|(k, _)| k)
            .collect();
        let first = members[0];
        let mut origins = HashSet::new();
        let mut merged_prov = Vec::new();
        let mut value = 0;
        for &k in &members {
            value += coins[k].value;
            origins.insert(coins[k].origin);
            merged_prov.extend(provenance.remove(&make_ref(coins[k].id.clone())).unwrap_or_default());
        }
        let id = members.iter().map(|&k| coins[k].id.as_str()).collect::<Vec<_>>().join("+");
        let merged = Coin {
            id: id.clone(),
            value,
            address: coins[first].address.clone(),
            origin: if origins.len() == 1 { coins[first].origin } else { None },
        };
        merged_prov.sort();
        provenance.insert(make_ref(id), merged_prov);
        let mut k = 0;
        coins.retain(|_| {
            k += 1;
            !members[1..].contains(&(k - 1))
        });
        coins[first] = merged;
    }
}

pub fn apply_knowledge(ntx: &NormalizedCoinjoin, k: &Knowledge) -> Result<NormalizedCoinjoin> {
    check_groups(ntx, Side::Input, &k.same_owner_input_groups)?;
    check_groups(ntx, Side::Output, &k.same_owner_output_groups)?;
    for (i, o) in &k.linked_pairs {
        if ntx.base.inputs.iter().all(|c| &c.id != i) {
            return Err(Error::DanglingId(i.clone()));
        }
        if ntx.base.outputs.iter().all(|c| &c.id != o) {
            return Err(Error::DanglingId(o.clone()));
        }
    }
    for (a, b) in &k.distinct_owner_pairs {
        for r in [a, b] {
            if ntx.base.coin(r).is_none() {
                return Err(Error::DanglingId(r.id().to_string()));
            }
        }
    }

    let mut out = ntx.clone();
    merge_groups(&mut out.base.inputs, Side::Input, &k.same_owner_input_groups, &mut out.provenance);
    merge_groups(&mut out.base.outputs, Side::Output, &k.same_owner_output_groups, &mut out.provenance);

    for (i, o) in &k.linked_pairs {
        let ri = out
            .resolve(&CoinRef::Input(i.clone()))
            .ok_or_else(|| Error::DanglingId(i.clone()))?;
        let ro = out
            .resolve(&CoinRef::Output(o.clone()))
            .ok_or_else(|| Error::DanglingId(o.clone()))?;
        let vi = out.base.coin(&ri).map(|c| c.value).unwrap_or(0);
        let vo = out.base.coin(&ro).map(|c| c.value).unwrap_or(0);
        let diff = vi - vo;
        if diff >= 0 {
            out.base.outputs.retain(|c| c.id != ro.id());
            out.provenance.remove(&ro);
        }
        if diff <= 0 {
            out.base.inputs.retain(|c| c.id != ri.id());
            out.provenance.remove(&ri);
        }
        if diff > 0 {
            if let Some(c) = out.base.inputs.iter_mut().find(|c| c.id == ri.id()) {
                c.value = diff;
            }
        } else if diff < 0 {
            if let Some(c) = out.base.outputs.iter_mut().find(|c| c.id == ro.id()) {
                c.value = -diff;
            }
        }
    }

    let mut pairs: Vec<(CoinRef, CoinRef)> = Vec::new();
    for (a, b) in ntx.distinct_owner_pairs.iter().chain(&k.distinct_owner_pairs) {
        let (Some(ra), Some(rb)) = (out.resolve(a), out.resolve(b)) else {
            continue;
        };
        if ra == rb {
            return Err(Error::ContradictoryKnowledge(format!(
                "{} and {} are both same-owner and distinct-owner",
                a.id(),
                b.id()
            )));
        }
        let pair = if ra <= rb { (ra, rb) } else { (rb, ra) };
        if !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    out.distinct_owner_pairs = pairs;
    Ok(out)
}

/// Values of the coins on one side, keyed by id.
pub fn value_index(tx: &Coinjoin, side: Side) -> HashMap<&str, i64> {
    tx.coins(side).iter().map(|c| (c.id.as_str(), c.value)).collect()
}
