//! Exhaustive reference enumerator.
//!
//! Walks every set partition of the inputs crossed with every assignment of
//! outputs to blocks and keeps the admissible ones. Nothing is pruned and no
//! multiplicity formula is used: concrete mappings are simply counted per
//! numeric signature at the end.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_bigint::BigUint;

use super::{Constraints, EnumerationResult, SearchStats};
use crate::error::{Error, Result};
use crate::model::{validate_coinjoin, CoinRef, Mapping, Side, SubMapping};
use crate::numeric::{ClassTable, NumericMapping, Signature};
use crate::preprocess::NormalizedCoinjoin;

pub const ORACLE_MAX_COINS: usize = 14;

type Sink<'a> = dyn FnMut(&[usize], &[usize], usize) + 'a;

struct Oracle<'a> {
    in_values: Vec<i64>,
    out_values: Vec<i64>,
    out_is_change: Vec<bool>,
    /// Distinct-owner pairs as (side, coin index) pairs.
    distinct: Vec<((Side, usize), (Side, usize))>,
    lo: i64,
    hi: i64,
    constraints: &'a Constraints,
    sink: &'a mut Sink<'a>,
    leaves: u64,
}

impl Oracle<'_> {
    fn partitions(&mut self, k: usize, in_block: &mut Vec<usize>, blocks: usize) {
        if k == self.in_values.len() {
            let mut out_block = vec![0; self.out_values.len()];
            self.outputs(0, in_block, &mut out_block, blocks);
            return;
        }
        for b in 0..=blocks {
            in_block.push(b);
            self.partitions(k + 1, in_block, blocks.max(b + 1));
            in_block.pop();
        }
    }

    fn outputs(&mut self, k: usize, in_block: &[usize], out_block: &mut Vec<usize>, blocks: usize) {
        if k == self.out_values.len() {
            self.leaf(in_block, out_block, blocks);
            return;
        }
        for b in 0..blocks {
            out_block[k] = b;
            self.outputs(k + 1, in_block, out_block, blocks);
        }
    }

    fn leaf(&mut self, in_block: &[usize], out_block: &[usize], blocks: usize) {
        self.leaves += 1;
        let c = self.constraints;
        let mut residual = vec![0i64; blocks];
        let mut n_in = vec![0u32; blocks];
        let mut n_out = vec![0u32; blocks];
        let mut n_change = vec![0u32; blocks];
        for (k, &b) in in_block.iter().enumerate() {
            residual[b] += self.in_values[k];
            n_in[b] += 1;
        }
        for (k, &b) in out_block.iter().enumerate() {
            residual[b] -= self.out_values[k];
            n_out[b] += 1;
            if self.out_is_change[k] {
                n_change[b] += 1;
            }
        }
        for b in 0..blocks {
            if residual[b] < self.lo || residual[b] > self.hi {
                return;
            }
            if n_in[b] > c.max_inputs_per_user || n_out[b] > c.max_outputs_per_user {
                return;
            }
            if c.max_change_outputs_per_user.is_some_and(|m| n_change[b] > m) {
                return;
            }
        }
        if let Some(m) = c.max_positive_residual_submappings {
            if residual.iter().filter(|&&r| r > 0).count() as u32 > m {
                return;
            }
        }
        let block_of = |(side, k): (Side, usize)| match side {
            Side::Input => in_block[k],
            Side::Output => out_block[k],
        };
        if self.distinct.iter().any(|&(a, b)| block_of(a) == block_of(b)) {
            return;
        }
        (self.sink)(in_block, out_block, blocks);
    }
}

/// Runs the exhaustive walk, calling `sink(input blocks, output blocks, block
/// count)` for every admissible assignment.
fn walk(ntx: &NormalizedCoinjoin, c: &Constraints, sink: &mut Sink<'_>) -> Result<u64> {
    let size = ntx.base.size();
    if size > ORACLE_MAX_COINS {
        return Err(Error::InstanceTooLarge {
            size,
            max: ORACLE_MAX_COINS,
        });
    }
    validate_coinjoin(&ntx.base)?;
    c.validate()?;
    let index_of = |r: &CoinRef| -> Option<(Side, usize)> {
        let k = ntx.base.coins(r.side()).iter().position(|x| x.id == r.id())?;
        Some((r.side(), k))
    };
    let distinct = ntx
        .distinct_owner_pairs
        .iter()
        .filter_map(|(a, b)| Some((index_of(a)?, index_of(b)?)))
        .collect();
    let (lo, hi) = ntx.window();
    let mut oracle = Oracle {
        in_values: ntx.base.inputs.iter().map(|x| x.value).collect(),
        out_values: ntx.base.outputs.iter().map(|x| x.value).collect(),
        out_is_change: ntx.base.outputs.iter().map(|x| c.is_change(x.value)).collect(),
        distinct,
        lo,
        hi,
        constraints: c,
        sink,
        leaves: 0,
    };
    oracle.partitions(0, &mut Vec::new(), 0);
    Ok(oracle.leaves)
}

/// Every admissible concrete mapping, for instances of at most
/// [`ORACLE_MAX_COINS`] coins.
pub fn brute_force_concrete(ntx: &NormalizedCoinjoin, c: &Constraints) -> Result<Vec<Mapping>> {
    let tx = &ntx.base;
    let mut out = Vec::new();
    walk(ntx, c, &mut |in_block, out_block, blocks| {
        let mut subs = vec![
            SubMapping {
                input_ids: BTreeSet::new(),
                output_ids: BTreeSet::new(),
                residual: 0,
            };
            blocks
        ];
        for (k, &b) in in_block.iter().enumerate() {
            subs[b].input_ids.insert(tx.inputs[k].id.clone());
            subs[b].residual += tx.inputs[k].value;
        }
        for (k, &b) in out_block.iter().enumerate() {
            subs[b].output_ids.insert(tx.outputs[k].id.clone());
            subs[b].residual -= tx.outputs[k].value;
        }
        out.push(Mapping::new(subs));
    })?;
    out.sort();
    Ok(out)
}

/// Reference enumeration for instances of at most [`ORACLE_MAX_COINS`] coins.
pub fn brute_force_oracle(ntx: &NormalizedCoinjoin, c: &Constraints) -> Result<EnumerationResult> {
    let started = Instant::now();
    let table = ClassTable::from_normalized(ntx);
    let lookup = table.lookup();
    let in_class: Vec<u32> = ntx.base.inputs.iter().map(|x| lookup[&CoinRef::Input(x.id.clone())]).collect();
    let out_class: Vec<u32> = ntx.base.outputs.iter().map(|x| lookup[&CoinRef::Output(x.id.clone())]).collect();
    let mut found: BTreeMap<Vec<Signature>, BigUint> = BTreeMap::new();
    let leaves = walk(ntx, c, &mut |in_block, out_block, blocks| {
        let mut counts: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); blocks];
        for (k, &b) in in_block.iter().enumerate() {
            *counts[b].entry(in_class[k]).or_default() += 1;
        }
        for (k, &b) in out_block.iter().enumerate() {
            *counts[b].entry(out_class[k]).or_default() += 1;
        }
        let mut sigs: Vec<Signature> = counts
            .into_iter()
            .map(|m| Signature {
                parts: m.into_iter().collect(),
            })
            .collect();
        sigs.sort();
        *found.entry(sigs).or_default() += 1u32;
    })?;

    let n_inputs = table.n_inputs;
    let mut submappings: Vec<Signature> = found.keys().flatten().cloned().collect();
    submappings.sort_by(|a, b| a.canonical_cmp(b, n_inputs));
    submappings.dedup();
    let mut numeric_mappings: Vec<NumericMapping> = found
        .iter()
        .map(|(sigs, count)| {
            let mut parts: Vec<u32> = sigs
                .iter()
                .map(|s| {
                    submappings
                        .binary_search_by(|x| x.canonical_cmp(s, n_inputs))
                        .expect("signature collected above") as u32
                })
                .collect();
            parts.sort_unstable();
            NumericMapping {
                parts,
                multiplicity: count.clone(),
            }
        })
        .collect();
    numeric_mappings.sort_by(|a, b| a.parts.cmp(&b.parts));
    let total_concrete = numeric_mappings.iter().map(|m| &m.multiplicity).sum();
    let (lo, hi) = ntx.window();
    Ok(EnumerationResult {
        classes: table,
        residual_window: (lo, hi),
        submapping_count: submappings.len(),
        submappings,
        numeric_mappings,
        total_concrete,
        stats: SearchStats {
            nodes_visited: leaves,
            wall_time: started.elapsed(),
            worker_count: 1,
        },
    })
}
