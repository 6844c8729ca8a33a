//! Post-mix consolidation detection and anonymity-set loss over time.
//!
//! A consolidation is a transaction that is not itself a coinjoin and spends
//! at least two outputs of coinjoins (the same one or different ones). The
//! loss of a coinjoin after `d` days is the fraction of its outputs spent by
//! consolidations inside the window `[t, t + d days)`, so `A_0` is always 0.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coinjoin, Design, SATS_PER_BTC};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const BLOCKS_PER_DAY: u64 = 144;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInput {
    pub txid: String,
    pub vout: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOutput {
    pub value: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphTx {
    pub txid: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u64>,
    pub inputs: Vec<GraphInput>,
    pub outputs: Vec<GraphOutput>,
}

/// Transactions with their spend edges. Inputs whose source txid is not in
/// the graph are treated as coming from outside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxGraph {
    pub transactions: Vec<GraphTx>,
    #[serde(default)]
    pub coinjoin_ids: BTreeSet<String>,
}

/// Read-only lookup structure over a validated graph.
struct Index<'a> {
    g: &'a TxGraph,
    by_id: HashMap<&'a str, usize>,
    /// (tx index, vout) → index of the spending transaction.
    spender: HashMap<(usize, u32), usize>,
    /// Number of inputs of each transaction that spend coinjoin outputs.
    cj_inputs: Vec<usize>,
}

impl<'a> Index<'a> {
    fn new(g: &'a TxGraph) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (k, t) in g.transactions.iter().enumerate() {
            if by_id.insert(t.txid.as_str(), k).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate txid {}", t.txid)));
            }
        }
        for id in &g.coinjoin_ids {
            if !by_id.contains_key(id.as_str()) {
                return Err(Error::InvalidGraph(format!("coinjoin {id} is not in the graph")));
            }
        }
        let mut spender = HashMap::new();
        let mut cj_inputs = vec![0; g.transactions.len()];
        for (k, t) in g.transactions.iter().enumerate() {
            for inp in &t.inputs {
                let Some(&src) = by_id.get(inp.txid.as_str()) else {
                    continue;
                };
                let source = &g.transactions[src];
                if inp.vout as usize >= source.outputs.len() {
                    return Err(Error::InvalidGraph(format!(
                        "{} spends missing output {}:{}",
                        t.txid, inp.txid, inp.vout
                    )));
                }
                if source.timestamp > t.timestamp {
                    return Err(Error::InvalidGraph(format!("{} spends {} from its future", t.txid, inp.txid)));
                }
                if spender.insert((src, inp.vout), k).is_some() {
                    return Err(Error::InvalidGraph(format!("output {}:{} spent twice", inp.txid, inp.vout)));
                }
                if g.coinjoin_ids.contains(&source.txid) {
                    cj_inputs[k] += 1;
                }
            }
        }
        Ok(Index {
            g,
            by_id,
            spender,
            cj_inputs,
        })
    }

    fn tx(&self, txid: &str) -> Result<usize> {
        self.by_id
            .get(txid)
            .copied()
            .ok_or_else(|| Error::UnknownTx(txid.to_string()))
    }

    fn within(&self, cj: usize, t: usize, h: Horizon, clock: Clock) -> Result<bool> {
        let Horizon::Days(d) = h else {
            return Ok(true);
        };
        let (a, b) = (&self.g.transactions[cj], &self.g.transactions[t]);
        match clock {
            Clock::Timestamp => Ok(b.timestamp - a.timestamp < d as i64 * SECONDS_PER_DAY),
            Clock::BlockHeight => match (a.height, b.height) {
                (Some(ha), Some(hb)) => Ok(hb.saturating_sub(ha) < d as u64 * BLOCKS_PER_DAY),
                _ => Err(Error::InvalidGraph("block clock needs heights on every transaction".into())),
            },
        }
    }

    fn consolidated(&self, cj: usize, h: Horizon, clock: Clock) -> Result<BTreeSet<u32>> {
        let mut out = BTreeSet::new();
        for vout in 0..self.g.transactions[cj].outputs.len() as u32 {
            let Some(&t) = self.spender.get(&(cj, vout)) else {
                continue;
            };
            if self.g.coinjoin_ids.contains(&self.g.transactions[t].txid) {
                continue;
            }
            if self.cj_inputs[t] >= 2 && self.within(cj, t, h, clock)? {
                out.insert(vout);
            }
        }
        Ok(out)
    }
}

impl TxGraph {
    pub fn validate(&self) -> Result<()> {
        Index::new(self).map(|_| ())
    }

    pub fn tx(&self, txid: &str) -> Option<&GraphTx> {
        self.transactions.iter().find(|t| t.txid == txid)
    }

    /// Address of an input, taken from the input itself or from the output it spends.
    pub fn input_address<'a>(&'a self, inp: &'a GraphInput) -> Option<&'a str> {
        inp.address.as_deref().or_else(|| {
            self.tx(&inp.txid)
                .and_then(|t| t.outputs.get(inp.vout as usize))
                .and_then(|o| o.address.as_deref())
        })
    }
}

/// Time horizon for the loss computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Horizon {
    Days(u32),
    Infinite,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Days(d) => write!(f, "{d}"),
            Horizon::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s == "∞" {
            return Ok(Horizon::Infinite);
        }
        s.parse()
            .map(Horizon::Days)
            .map_err(|_| Error::Parse(format!("bad horizon {s:?}")))
    }
}

impl Serialize for Horizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// How "days after the coinjoin" are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    Timestamp,
    /// 144 blocks per day; every transaction needs a height.
    BlockHeight,
}

/// Outputs of `cj` consolidated within the horizon, as output indices.
pub fn find_consolidations(cj: &str, g: &TxGraph, h: Horizon) -> Result<BTreeSet<u32>> {
    find_consolidations_with(cj, g, h, Clock::Timestamp)
}

pub fn find_consolidations_with(cj: &str, g: &TxGraph, h: Horizon, clock: Clock) -> Result<BTreeSet<u32>> {
    let idx = Index::new(g)?;
    let k = idx.tx(cj)?;
    if !g.coinjoin_ids.contains(cj) {
        return Err(Error::UnknownTx(format!("{cj} is not flagged as a coinjoin")));
    }
    idx.consolidated(k, h, clock)
}

/// Outputs of the coinjoin sharing the value of `output_id`, itself included.
pub fn anonymity_set(tx: &Coinjoin, output_id: &str) -> Result<Vec<String>> {
    let value = tx
        .outputs
        .iter()
        .find(|c| c.id == output_id)
        .ok_or_else(|| Error::UnknownOutput(output_id.to_string()))?
        .value;
    Ok(tx
        .outputs
        .iter()
        .filter(|c| c.value == value)
        .map(|c| c.id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub min: i64,
    pub max: i64,
    #[serde(default)]
    pub min_exclusive: bool,
}

impl Bucket {
    fn btc(label: &str, min: f64, max: f64, min_exclusive: bool) -> Self {
        Bucket {
            label: label.to_string(),
            min: (min * SATS_PER_BTC as f64).round() as i64,
            max: (max * SATS_PER_BTC as f64).round() as i64,
            min_exclusive,
        }
    }

    pub fn contains(&self, value: i64) -> bool {
        let above = if self.min_exclusive { value > self.min } else { value >= self.min };
        above && value <= self.max
    }
}

/// Denomination buckets. Values in no bucket fall into `other`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScheme {
    pub buckets: Vec<Bucket>,
}

pub const OTHER_BUCKET: &str = "other";

impl BucketScheme {
    pub fn for_design(design: Design) -> Self {
        let buckets = match design {
            Design::Wasabi1 => vec![
                Bucket::btc("[0.09, 0.11]", 0.09, 0.11, false),
                Bucket::btc("(0.19, 0.21]", 0.19, 0.21, true),
                Bucket::btc("(0.39, 0.41]", 0.39, 0.41, true),
            ],
            Design::Whirlpool => [0.001, 0.01, 0.05, 0.5]
                .iter()
                .map(|&v| Bucket::btc(&format!("{v} pool"), v, v, false))
                .collect(),
            _ => vec![
                Bucket::btc("[0, 0.001]", 0.0, 0.001, false),
                Bucket::btc("(0.001, 0.01]", 0.001, 0.01, true),
                Bucket::btc("(0.01, 0.05]", 0.01, 0.05, true),
                Bucket::btc("(0.05, 0.5]", 0.05, 0.5, true),
            ],
        };
        BucketScheme { buckets }
    }

    pub fn label(&self, value: i64) -> &str {
        self.buckets
            .iter()
            .find(|b| b.contains(value))
            .map_or(OTHER_BUCKET, |b| b.label.as_str())
    }

    /// Bucket labels in report order, `other` last.
    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = self.buckets.iter().map(|b| b.label.clone()).collect();
        v.push(OTHER_BUCKET.into());
        v
    }
}

impl Default for BucketScheme {
    fn default() -> Self {
        BucketScheme::for_design(Design::Wasabi2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLoss {
    pub txid: String,
    pub vout: u32,
    pub value: i64,
    pub bucket: String,
    /// A_d(o) per horizon, in the order of the report's horizons.
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxLoss {
    pub txid: String,
    pub outputs: usize,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketLoss {
    /// `None` for the aggregate over all coinjoins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txid: Option<String>,
    pub bucket: String,
    pub outputs: usize,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub horizons: Vec<Horizon>,
    pub per_output: Vec<OutputLoss>,
    pub per_tx: Vec<TxLoss>,
    /// Per coinjoin and bucket.
    pub per_tx_bucket: Vec<BucketLoss>,
    /// Per bucket over all coinjoins.
    pub per_bucket: Vec<BucketLoss>,
}

impl LossReport {
    pub fn tx(&self, txid: &str) -> Option<&TxLoss> {
        self.per_tx.iter().find(|t| t.txid == txid)
    }
}

pub fn compute_loss(g: &TxGraph, horizons: &[Horizon], buckets: &BucketScheme) -> Result<LossReport> {
    compute_loss_with(g, horizons, buckets, Clock::Timestamp)
}

pub fn compute_loss_with(g: &TxGraph, horizons: &[Horizon], buckets: &BucketScheme, clock: Clock) -> Result<LossReport> {
    let idx = Index::new(g)?;
    let cjs: Vec<usize> = g
        .coinjoin_ids
        .iter()
        .map(|id| idx.tx(id))
        .collect::<Result<_>>()?;

    let per_cj: Vec<Vec<OutputLoss>> = cjs
        .par_iter()
        .map(|&k| {
            let tx = &g.transactions[k];
            let sets = horizons
                .iter()
                .map(|&h| idx.consolidated(k, h, clock))
                .collect::<Result<Vec<_>>>()?;
            let mut out = Vec::with_capacity(tx.outputs.len());
            for (vout, o) in tx.outputs.iter().enumerate() {
                let peers: Vec<u32> = tx
                    .outputs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.value == o.value)
                    .map(|(j, _)| j as u32)
                    .collect();
                let loss = sets
                    .iter()
                    .map(|x| peers.iter().filter(|j| x.contains(j)).count() as f64 / peers.len() as f64)
                    .collect();
                out.push(OutputLoss {
                    txid: tx.txid.clone(),
                    vout: vout as u32,
                    value: o.value,
                    bucket: buckets.label(o.value).to_string(),
                    loss,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let nh = horizons.len();
    let mean = |rows: &[&OutputLoss]| -> Vec<f64> {
        (0..nh)
            .map(|h| {
                if rows.is_empty() {
                    0.0
                } else {
                    rows.iter().map(|r| r.loss[h]).sum::<f64>() / rows.len() as f64
                }
            })
            .collect()
    };
    let labels = buckets.labels();
    let mut per_tx = Vec::new();
    let mut per_tx_bucket = Vec::new();
    for rows in &per_cj {
        let all: Vec<&OutputLoss> = rows.iter().collect();
        let Some(first) = all.first() else { continue };
        per_tx.push(TxLoss {
            txid: first.txid.clone(),
            outputs: all.len(),
            loss: mean(&all),
        });
        for label in &labels {
            let sub: Vec<&OutputLoss> = all.iter().copied().filter(|r| &r.bucket == label).collect();
            if !sub.is_empty() {
                per_tx_bucket.push(BucketLoss {
                    txid: Some(first.txid.clone()),
                    bucket: label.clone(),
                    outputs: sub.len(),
                    loss: mean(&sub),
                });
            }
        }
    }
    let per_output: Vec<OutputLoss> = per_cj.into_iter().flatten().collect();
    let per_bucket = labels
        .iter()
        .filter_map(|label| {
            let sub: Vec<&OutputLoss> = per_output.iter().filter(|r| &r.bucket == label).collect();
            (!sub.is_empty()).then(|| BucketLoss {
                txid: None,
                bucket: label.clone(),
                outputs: sub.len(),
                loss: mean(&sub),
            })
        })
        .collect();
    Ok(LossReport {
        horizons: horizons.to_vec(),
        per_output,
        per_tx,
        per_tx_bucket,
        per_bucket,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    pub min_addresses: usize,
    pub min_inputs: usize,
    pub max_reuse: f64,
    pub exclusion_list: BTreeSet<String>,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            min_addresses: 5,
            min_inputs: 20,
            max_reuse: 0.70,
            exclusion_list: BTreeSet::new(),
        }
    }
}

/// Structural coinjoin screen. Address reuse is `1 − distinct / slots` over
/// every input and output slot that carries an address. Input addresses not
/// recorded on the input are looked up in `graph` when given.
pub fn detect_coinjoin(tx: &GraphTx, graph: Option<&TxGraph>, params: &DetectionParams) -> bool {
    if params.exclusion_list.contains(&tx.txid) || tx.inputs.len() < params.min_inputs {
        return false;
    }
    let input_addrs = tx.inputs.iter().filter_map(|i| match graph {
        Some(g) => g.input_address(i),
        None => i.address.as_deref(),
    });
    let slots: Vec<&str> = input_addrs
        .chain(tx.outputs.iter().filter_map(|o| o.address.as_deref()))
        .collect();
    let distinct: BTreeSet<&str> = slots.iter().copied().collect();
    if distinct.len() < params.min_addresses {
        return false;
    }
    let reuse = 1.0 - distinct.len() as f64 / slots.len() as f64;
    reuse <= params.max_reuse
}

/// Txids of every transaction in the graph passing the screen.
pub fn detect_coinjoins(g: &TxGraph, params: &DetectionParams) -> BTreeSet<String> {
    g.transactions
        .iter()
        .filter(|t| detect_coinjoin(t, Some(g), params))
        .map(|t| t.txid.clone())
        .collect()
}
