//! Mapping probabilities and the privacy metrics derived from them.
//!
//! All quantities are computed on numeric mappings. The mass of a numeric
//! mapping is spread evenly over the concrete mappings it stands for, which
//! is exact whenever weights depend only on value multisets.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumerate::EnumerationResult;
use crate::error::{Error, Result};
use crate::model::CoinRef;
use crate::numeric::Signature;

/// Numeric mappings per accumulation chunk. Fixed so sums do not depend on
/// the worker count.
const CHUNK: usize = 1024;

/// `log2` of an arbitrarily large count.
pub fn big_log2(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    (n >> shift).to_f64().unwrap_or(f64::INFINITY).log2() + shift as f64
}

fn log2_sum_exp2(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp2()).sum::<f64>().log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub inputs: Vec<i64>,
    pub outputs: Vec<i64>,
    pub weight: f64,
}

/// Per-sub-mapping likelihoods keyed by value multisets.
///
/// A mapping's weight is the product of its sub-mapping weights, each taken
/// relative to the largest weight in the table. A table and any positive
/// multiple of it therefore define the same distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    #[serde(default)]
    pub entries: Vec<WeightEntry>,
    #[serde(default = "one")]
    pub default_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for WeightTable {
    fn default() -> Self {
        WeightTable {
            entries: Vec::new(),
            default_weight: 1.0,
        }
    }
}

impl WeightTable {
    pub fn set(&mut self, inputs: &[i64], outputs: &[i64], weight: f64) {
        let (mut inputs, mut outputs) = (inputs.to_vec(), outputs.to_vec());
        inputs.sort_unstable();
        outputs.sort_unstable();
        self.entries.retain(|e| !(e.inputs == inputs && e.outputs == outputs));
        self.entries.push(WeightEntry {
            inputs,
            outputs,
            weight,
        });
    }

    pub fn scaled(&self, factor: f64) -> WeightTable {
        WeightTable {
            entries: self
                .entries
                .iter()
                .map(|e| WeightEntry {
                    weight: e.weight * factor,
                    ..e.clone()
                })
                .collect(),
            default_weight: self.default_weight * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = self.entries.iter().map(|e| e.weight).chain([self.default_weight]);
        for w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Parse(format!("weight {w} is not a non-negative number")));
            }
        }
        Ok(())
    }

    /// Largest weight in the table, the unit every factor is measured in.
    pub fn unit(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).fold(self.default_weight, f64::max)
    }

    fn lookup(&self) -> HashMap<(Vec<i64>, Vec<i64>), f64> {
        self.entries
            .iter()
            .map(|e| {
                let (mut i, mut o) = (e.inputs.clone(), e.outputs.clone());
                i.sort_unstable();
                o.sort_unstable();
                ((i, o), e.weight)
            })
            .collect()
    }
}

/// Probability mass of each numeric mapping of a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingDistribution {
    pub mass: Vec<f64>,
    /// `log2` of each numeric mapping's multiplicity.
    pub log2_multiplicity: Vec<f64>,
    pub uniform: bool,
}

impl MappingDistribution {
    /// Probability of any single concrete mapping of numeric mapping `k`.
    pub fn concrete_probability(&self, k: usize) -> f64 {
        (self.mass[k].log2() - self.log2_multiplicity[k]).exp2()
    }
}

pub fn mapping_distribution(res: &EnumerationResult, w: Option<&WeightTable>) -> Result<MappingDistribution> {
    if res.numeric_mappings.is_empty() {
        return Err(Error::ZeroMass);
    }
    let log2_multiplicity: Vec<f64> = res.numeric_mappings.iter().map(|m| big_log2(&m.multiplicity)).collect();
    let Some(w) = w else {
        let total = big_log2(&res.total_concrete);
        let mass = log2_multiplicity.iter().map(|l| (l - total).exp2()).collect();
        return Ok(MappingDistribution {
            mass,
            log2_multiplicity,
            uniform: true,
        });
    };
    w.validate()?;
    let unit = w.unit();
    if unit <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let table = w.lookup();
    let sub_log2: Vec<f64> = res
        .submappings
        .iter()
        .map(|s| {
            let weight = table.get(&res.classes.values(s)).copied().unwrap_or(w.default_weight);
            weight.log2() - unit.log2()
        })
        .collect();
    let log_w: Vec<f64> = res
        .numeric_mappings
        .iter()
        .zip(&log2_multiplicity)
        .map(|(m, lm)| lm + m.parts.iter().map(|&p| sub_log2[p as usize]).sum::<f64>())
        .collect();
    let norm = log2_sum_exp2(&log_w);
    if norm == f64::NEG_INFINITY {
        return Err(Error::ZeroMass);
    }
    Ok(MappingDistribution {
        mass: log_w.iter().map(|l| (l - norm).exp2()).collect(),
        log2_multiplicity,
        uniform: false,
    })
}

/// Shannon entropy in bits of an explicit distribution.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

/// Entropy in bits over concrete mappings.
pub fn entropy(dist: &MappingDistribution) -> f64 {
    let h: f64 = dist
        .mass
        .iter()
        .zip(&dist.log2_multiplicity)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, lm)| m * (m.log2() - lm))
        .sum();
    (-h).max(0.0)
}

/// Link probabilities between every input and output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMatrix {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// `p[i][o]` in the order of `inputs` and `outputs`.
    pub p: Vec<Vec<f64>>,
}

impl LinkMatrix {
    pub fn get(&self, input: &str, output: &str) -> Result<f64> {
        let i = self
            .inputs
            .iter()
            .position(|x| x == input)
            .ok_or_else(|| Error::UnknownId(input.to_string()))?;
        let o = self
            .outputs
            .iter()
            .position(|x| x == output)
            .ok_or_else(|| Error::UnknownId(output.to_string()))?;
        Ok(self.p[i][o])
    }
}

/// Σ over slots of c(slot, a)·c(slot, b), indexed `[input class][output class]`.
fn shared_slots(res: &EnumerationResult, parts: &[u32], acc: &mut [Vec<f64>], scale: f64) {
    let n_in = res.classes.n_inputs;
    for &p in parts {
        let sig = &res.submappings[p as usize];
        let k = sig.parts.partition_point(|&(c, _)| (c as usize) < n_in);
        for &(a, ca) in &sig.parts[..k] {
            for &(b, cb) in &sig.parts[k..] {
                acc[a as usize][b as usize - n_in] += scale * (ca * cb) as f64;
            }
        }
    }
}

fn expand_to_coins(res: &EnumerationResult, class_p: &[Vec<f64>]) -> LinkMatrix {
    let n_in = res.classes.n_inputs;
    let mut inputs = Vec::new();
    let mut in_class = Vec::new();
    let mut outputs = Vec::new();
    let mut out_class = Vec::new();
    for (k, c) in res.classes.classes.iter().enumerate() {
        for id in &c.members {
            if k < n_in {
                inputs.push(id.clone());
                in_class.push(k);
            } else {
                outputs.push(id.clone());
                out_class.push(k - n_in);
            }
        }
    }
    let p = in_class
        .iter()
        .map(|&a| out_class.iter().map(|&b| class_p[a][b]).collect())
        .collect();
    LinkMatrix { inputs, outputs, p }
}

pub fn link_probability(res: &EnumerationResult, dist: &MappingDistribution) -> LinkMatrix {
    let n_in = res.classes.n_inputs;
    let n_out = res.classes.len() - n_in;
    let sizes = res.classes.sizes();
    let zero = || vec![vec![0.0f64; n_out]; n_in];
    let chunks: Vec<Vec<Vec<f64>>> = res
        .numeric_mappings
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = zero();
            for (j, m) in chunk.iter().enumerate() {
                shared_slots(res, &m.parts, &mut acc, dist.mass[ci * CHUNK + j]);
            }
            acc
        })
        .collect();
    let mut class_p = zero();
    for chunk in &chunks {
        for (row, add) in class_p.iter_mut().zip(chunk) {
            for (x, y) in row.iter_mut().zip(add) {
                *x += y;
            }
        }
    }
    for (a, row) in class_p.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = (*x / (sizes[a] as f64 * sizes[n_in + b] as f64)).min(1.0);
        }
    }
    expand_to_coins(res, &class_p)
}

/// Exact link probabilities under the uniform distribution, as
/// `(input id, output id, probability)`.
pub fn link_probability_exact(res: &EnumerationResult) -> Vec<(String, String, BigRational)> {
    let n_in = res.classes.n_inputs;
    let n_out = res.classes.len() - n_in;
    let sizes = res.classes.sizes();
    let mut num = vec![vec![BigUint::zero(); n_out]; n_in];
    for m in &res.numeric_mappings {
        for &p in &m.parts {
            let sig = &res.submappings[p as usize];
            let k = sig.parts.partition_point(|&(c, _)| (c as usize) < n_in);
            for &(a, ca) in &sig.parts[..k] {
                for &(b, cb) in &sig.parts[k..] {
                    num[a as usize][b as usize - n_in] += &m.multiplicity * (ca * cb);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (a, ca) in res.classes.classes[..n_in].iter().enumerate() {
        for (b, cb) in res.classes.classes[n_in..].iter().enumerate() {
            let den = &res.total_concrete * (sizes[a] * sizes[n_in + b]);
            let p = BigRational::new(BigInt::from(num[a][b].clone()), BigInt::from(den));
            for i in &ca.members {
                for o in &cb.members {
                    out.push((i.clone(), o.clone(), p.clone()));
                }
            }
        }
    }
    out
}

/// Largest link probability from any of the user's inputs to the output.
pub fn max_link(links: &LinkMatrix, user_inputs: &[String], output: &str) -> Result<f64> {
    if user_inputs.is_empty() {
        return Err(Error::UnknownId("empty input set".into()));
    }
    user_inputs
        .iter()
        .map(|i| links.get(i, output))
        .try_fold(0.0f64, |acc, p| Ok(acc.max(p?)))
}

/// Total probability of mappings that contain a sub-mapping with this signature.
pub fn submapping_probability(res: &EnumerationResult, dist: &MappingDistribution, s: &Signature) -> Result<f64> {
    let idx = res
        .submappings
        .iter()
        .position(|x| x == s)
        .ok_or(Error::UnknownSignature)? as u32;
    Ok(res
        .numeric_mappings
        .iter()
        .zip(&dist.mass)
        .filter(|(m, _)| m.parts.contains(&idx))
        .map(|(_, p)| p)
        .sum::<f64>()
        .min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmappingProbability {
    pub inputs: Vec<i64>,
    pub outputs: Vec<i64>,
    pub residual: i64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub input: String,
    pub output: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLink {
    pub inputs: Vec<String>,
    pub output: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entropy_bits: f64,
    #[serde(with = "crate::io::biguint_string")]
    pub mapping_count: BigUint,
    pub numeric_mapping_count: usize,
    pub submapping_probability: Vec<SubmappingProbability>,
    pub link_matrix: Vec<LinkEntry>,
    pub max_link: Vec<UserLink>,
}

/// Full report: entropy, p(S) for every sub-mapping, the link matrix and
/// p(I, o) for every requested user input set against every output.
pub fn metrics_report(
    res: &EnumerationResult,
    weights: Option<&WeightTable>,
    users: &[Vec<String>],
) -> Result<MetricsReport> {
    let dist = mapping_distribution(res, weights)?;
    let links = link_probability(res, &dist);
    let mut sub_p = vec![0.0f64; res.submappings.len()];
    for (m, p) in res.numeric_mappings.iter().zip(&dist.mass) {
        let mut parts = m.parts.clone();
        parts.dedup();
        for k in parts {
            sub_p[k as usize] += p;
        }
    }
    let submapping_probability = res
        .submappings
        .iter()
        .zip(sub_p)
        .map(|(s, p)| {
            let (inputs, outputs) = res.classes.values(s);
            SubmappingProbability {
                inputs,
                outputs,
                residual: res.classes.residual(s),
                p: p.min(1.0),
            }
        })
        .collect();
    let mut link_matrix = Vec::new();
    for (i, row) in links.inputs.iter().zip(&links.p) {
        for (o, p) in links.outputs.iter().zip(row) {
            link_matrix.push(LinkEntry {
                input: i.clone(),
                output: o.clone(),
                p: *p,
            });
        }
    }
    let lookup = res.classes.lookup();
    let mut max_links = Vec::new();
    for user in users {
        for id in user {
            if !lookup.contains_key(&CoinRef::Input(id.clone())) {
                return Err(Error::UnknownId(id.clone()));
            }
        }
        for o in &links.outputs {
            max_links.push(UserLink {
                inputs: user.clone(),
                output: o.clone(),
                p: max_link(&links, user, o)?,
            });
        }
    }
    Ok(MetricsReport {
        entropy_bits: entropy(&dist),
        mapping_count: res.total_concrete.clone(),
        numeric_mapping_count: res.numeric_count(),
        submapping_probability,
        link_matrix,
        max_link: max_links,
    })
}
