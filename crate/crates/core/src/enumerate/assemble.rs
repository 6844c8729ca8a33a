//! Backtracking assembly of sub-mappings into complete numeric mappings.
//!
//! Every numeric mapping is produced exactly once as the non-decreasing
//! sequence of its sub-mapping indices. At each node the next sub-mapping
//! must contain the smallest input class that still has unassigned coins;
//! sub-mappings are grouped by that class so candidates form a contiguous
//! range of the table.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use num_bigint::BigUint;
use rayon::prelude::*;

use super::{Constraints, EnumerationOptions, EnumerationResult, SearchStats};
use crate::error::Result;
use crate::model::validate_coinjoin;
use crate::numeric::{ClassTable, MultiplicityCalc, NumericMapping, Signature};
use crate::preprocess::NormalizedCoinjoin;

struct Assembly<'a> {
    subs: &'a [Signature],
    residual: Vec<i64>,
    in_count: Vec<u32>,
    out_count: Vec<u32>,
    /// `group[c]` is the range of sub-mappings whose smallest input class is `c`.
    group: Vec<(usize, usize)>,
    n_inputs: usize,
    lo: i64,
    hi: i64,
    max_positive: Option<u32>,
    split_depth: usize,
    calc: MultiplicityCalc,
    slot_den: Vec<BigUint>,
    nodes: AtomicU64,
}

#[derive(Clone)]
struct Node {
    remaining: Vec<u32>,
    /// Smallest input class that may still hold unassigned coins.
    cursor: usize,
    rem_in: u32,
    rem_out: u32,
    rem_residual: i64,
    positive: u32,
    path: Vec<u32>,
}

impl Assembly<'_> {
    fn feasible(&self, rem_in: u32, rem_out: u32, rem_residual: i64, positive: u32) -> bool {
        if rem_in == 0 {
            return rem_out == 0 && rem_residual == 0;
        }
        let k = rem_in as i64;
        let lo = self.lo.min(self.lo * k);
        let mut hi = self.hi.max(self.hi * k);
        if self.max_positive.is_some_and(|m| positive >= m) {
            hi = hi.min(0);
        }
        rem_residual >= lo && rem_residual <= hi
    }

    fn fits(&self, node: &Node, j: usize) -> bool {
        self.subs[j]
            .parts
            .iter()
            .all(|&(c, n)| node.remaining[c as usize] >= n)
    }

    fn children(&self, node: &Node) -> Vec<Node> {
        let mut cursor = node.cursor;
        while cursor < self.n_inputs && node.remaining[cursor] == 0 {
            cursor += 1;
        }
        let (start, end) = self.group[cursor];
        let start = match node.path.last() {
            Some(&last) if (last as usize) >= start => last as usize,
            _ => start,
        };
        let mut out = Vec::new();
        for j in start..end {
            if !self.fits(node, j) {
                continue;
            }
            let r = self.residual[j];
            let positive = node.positive + u32::from(r > 0);
            if self.max_positive.is_some_and(|m| positive > m) {
                continue;
            }
            let rem_in = node.rem_in - self.in_count[j];
            let rem_out = node.rem_out - self.out_count[j];
            let rem_residual = node.rem_residual - r;
            if !self.feasible(rem_in, rem_out, rem_residual, positive) {
                continue;
            }
            let mut child = node.clone();
            for &(c, n) in &self.subs[j].parts {
                child.remaining[c as usize] -= n;
            }
            child.cursor = cursor;
            child.rem_in = rem_in;
            child.rem_out = rem_out;
            child.rem_residual = rem_residual;
            child.positive = positive;
            child.path.push(j as u32);
            out.push(child);
        }
        out
    }

    fn run(&self, node: Node, depth: usize) -> Vec<NumericMapping> {
        self.nodes.fetch_add(1, Ordering::Relaxed);
        if node.rem_in == 0 {
            let multiplicity = self.calc.evaluate(&node.path, &self.slot_den);
            return vec![NumericMapping {
                parts: node.path,
                multiplicity,
            }];
        }
        let children = self.children(&node);
        if depth < self.split_depth {
            children
                .into_par_iter()
                .flat_map_iter(|ch| self.run(ch, depth + 1))
                .collect()
        } else {
            let mut out = Vec::new();
            for ch in children {
                out.extend(self.run(ch, depth + 1));
            }
            out
        }
    }
}

/// Assembles complete mappings from a canonical sub-mapping list.
pub fn assemble_mappings(
    subs: Vec<Signature>,
    ntx: &NormalizedCoinjoin,
    c: &Constraints,
    opts: &EnumerationOptions,
) -> Result<EnumerationResult> {
    validate_coinjoin(&ntx.base)?;
    c.validate()?;
    let started = Instant::now();
    let table = ClassTable::from_normalized(ntx);
    let mut subs = subs;
    subs.sort_by(|a, b| a.canonical_cmp(b, table.n_inputs));
    subs.dedup();

    let n_inputs = table.n_inputs;
    let mut group = vec![(subs.len(), subs.len()); n_inputs + 1];
    for (j, s) in subs.iter().enumerate().rev() {
        if let Some(m) = s.min_input_class() {
            let g = &mut group[m as usize];
            if g.1 == subs.len() && g.0 == subs.len() {
                g.1 = j + 1;
            }
            g.0 = j;
        }
    }
    let calc = MultiplicityCalc::new(&table);
    let (lo, hi) = ntx.window();
    let asm = Assembly {
        residual: subs.iter().map(|s| table.residual(s)).collect(),
        in_count: subs.iter().map(|s| s.input_count(n_inputs)).collect(),
        out_count: subs.iter().map(|s| s.output_count(n_inputs)).collect(),
        slot_den: subs.iter().map(|s| calc.slot_denominator(s)).collect(),
        subs: &subs,
        group,
        n_inputs,
        lo,
        hi,
        max_positive: c.max_positive_residual_submappings,
        split_depth: opts.split_depth,
        calc,
        nodes: AtomicU64::new(0),
    };

    let sizes = table.sizes();
    let rem_in: u32 = sizes[..n_inputs].iter().sum();
    let rem_out: u32 = sizes[n_inputs..].iter().sum();
    let root = Node {
        remaining: sizes,
        cursor: 0,
        rem_in,
        rem_out,
        rem_residual: ntx.base.fee(),
        positive: 0,
        path: Vec::new(),
    };
    let numeric_mappings = if asm.feasible(rem_in, rem_out, root.rem_residual, 0) {
        opts.install(|| asm.run(root, 0))
    } else {
        Vec::new()
    };
    let total_concrete = numeric_mappings.iter().map(|m| &m.multiplicity).sum();
    let nodes_visited = asm.nodes.load(Ordering::Relaxed);
    let submapping_count = subs.len();
    Ok(EnumerationResult {
        classes: table,
        residual_window: (lo, hi),
        submappings: subs,
        numeric_mappings,
        total_concrete,
        submapping_count,
        stats: SearchStats {
            nodes_visited,
            wall_time: started.elapsed(),
            worker_count: opts.worker_count(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::enumerate;
    use crate::model::{Coinjoin, Design};
    use crate::preprocess::FeePolicy;

    fn run(inputs: &[i64], outputs: &[i64], lo: i64, hi: i64) -> EnumerationResult {
        let tx = Coinjoin::from_values("t", Design::Generic, inputs, outputs);
        let n = NormalizedCoinjoin::unadjusted(tx, FeePolicy::zero_fee(Design::Generic).with_window(lo, hi));
        enumerate(&n, &Constraints::default(), &EnumerationOptions::default()).unwrap()
    }

    #[test]
    fn nine_coin_has_24_mappings() {
        let r = run(&[8, 6, 3, 3], &[6, 6, 4, 2, 2], 0, 0);
        assert_eq!(r.total_concrete, BigUint::from(24u32));
    }

    #[test]
    fn two_by_two() {
        let r = run(&[3, 3], &[3, 3], 0, 0);
        assert_eq!(r.numeric_count(), 2);
        assert_eq!(r.total_concrete, BigUint::from(3u32));
    }

    #[test]
    fn whole_transaction_only() {
        let r = run(&[8, 3], &[6, 5], 0, 0);
        assert_eq!(r.numeric_count(), 1);
        assert_eq!(r.total_concrete, BigUint::from(1u32));
    }

    #[test]
    fn unbalanced_transaction_has_no_mapping_in_zero_window() {
        let r = run(&[8, 3], &[6, 4], 0, 0);
        assert_eq!(r.numeric_count(), 0);
    }

    #[test]
    fn mappings_are_emitted_in_canonical_order() {
        let r = run(&[8, 6, 3, 3, 2], &[6, 6, 4, 2, 2, 2], 0, 0);
        let paths: Vec<_> = r.numeric_mappings.iter().map(|m| m.parts.clone()).collect();
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
        for p in &paths {
            assert!(p.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
