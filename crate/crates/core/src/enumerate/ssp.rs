//! All-solutions subset sum over signed coin classes.
//!
//! Inputs count positively and outputs negatively; a sub-mapping is any
//! choice of per-class counts whose sum falls in the residual window and
//! that contains at least one input.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{Constraints, EnumerationOptions};
use crate::error::{Error, Result};
use crate::model::validate_coinjoin;
use crate::numeric::{ClassTable, Signature};
use crate::preprocess::NormalizedCoinjoin;

struct Search<'a> {
    /// Class index at each search position.
    class: Vec<u32>,
    value: Vec<i64>,
    size: Vec<u32>,
    is_input: Vec<bool>,
    is_change: Vec<bool>,
    /// Sum of positive contributions still available from each position on.
    pos_rem: Vec<i64>,
    neg_rem: Vec<i64>,
    lo: i64,
    hi: i64,
    constraints: &'a Constraints,
    exclusive: Vec<(u32, u32)>,
    split_depth: usize,
    cap: usize,
    emitted: AtomicUsize,
    exceeded: AtomicBool,
}

#[derive(Clone)]
struct State {
    counts: Vec<u32>,
    residual: i64,
    n_in: u32,
    n_out: u32,
    n_change: u32,
}

impl Search<'_> {
    fn run(&self, k: usize, st: State) -> Vec<Signature> {
        if self.exceeded.load(Ordering::Relaxed) {
            return Vec::new();
        }
        if st.residual + self.pos_rem[k] < self.lo || st.residual - self.neg_rem[k] > self.hi {
            return Vec::new();
        }
        if k == self.class.len() {
            return self.leaf(&st).into_iter().collect();
        }
        let choices = self.choices(k, &st);
        if k < self.split_depth {
            choices
                .into_par_iter()
                .flat_map_iter(|st| self.run(k + 1, st))
                .collect()
        } else {
            let mut out = Vec::new();
            for st in choices {
                out.extend(self.run(k + 1, st));
            }
            out
        }
    }

    fn choices(&self, k: usize, st: &State) -> Vec<State> {
        let c = self.constraints;
        let mut out = Vec::with_capacity(self.size[k] as usize + 1);
        for n in 0..=self.size[k] {
            let mut next = st.clone();
            next.counts[k] = n;
            next.residual += self.value[k] * n as i64;
            if self.is_input[k] {
                next.n_in += n;
                if next.n_in > c.max_inputs_per_user {
                    break;
                }
            } else {
                next.n_out += n;
                if next.n_out > c.max_outputs_per_user {
                    break;
                }
                if self.is_change[k] {
                    next.n_change += n;
                    if c.max_change_outputs_per_user.is_some_and(|m| next.n_change > m) {
                        break;
                    }
                }
            }
            out.push(next);
        }
        out
    }

    fn leaf(&self, st: &State) -> Option<Signature> {
        if st.n_in == 0 || st.residual < self.lo || st.residual > self.hi {
            return None;
        }
        let mut parts: Vec<(u32, u32)> = self
            .class
            .iter()
            .zip(&st.counts)
            .filter(|(_, &n)| n > 0)
            .map(|(&c, &n)| (c, n))
            .collect();
        parts.sort_unstable();
        let sig = Signature { parts };
        if self
            .exclusive
            .iter()
            .any(|&(a, b)| sig.count_of(a) > 0 && sig.count_of(b) > 0)
        {
            return None;
        }
        if self.emitted.fetch_add(1, Ordering::Relaxed) >= self.cap {
            self.exceeded.store(true, Ordering::Relaxed);
            return None;
        }
        Some(sig)
    }
}

/// Class pairs that may not share a sub-mapping, from distinct-owner knowledge.
pub(crate) fn exclusive_class_pairs(ntx: &NormalizedCoinjoin, table: &ClassTable) -> Vec<(u32, u32)> {
    let lookup = table.lookup();
    ntx.distinct_owner_pairs
        .iter()
        .filter_map(|(a, b)| Some((*lookup.get(a)?, *lookup.get(b)?)))
        .collect()
}

/// Every admissible sub-mapping signature, in canonical order.
pub fn enumerate_submappings(
    ntx: &NormalizedCoinjoin,
    c: &Constraints,
    opts: &EnumerationOptions,
) -> Result<Vec<Signature>> {
    validate_coinjoin(&ntx.base)?;
    c.validate()?;
    let table = ClassTable::from_normalized(ntx);
    let (lo, hi) = ntx.window();

    let mut order: Vec<u32> = (0..table.len() as u32).collect();
    order.sort_by_key(|&k| {
        let cl = &table.classes[k as usize];
        (std::cmp::Reverse(cl.value), !table.is_input(k), k)
    });
    let value: Vec<i64> = order
        .iter()
        .map(|&k| {
            let v = table.classes[k as usize].value;
            if table.is_input(k) {
                v
            } else {
                -v
            }
        })
        .collect();
    let size: Vec<u32> = order.iter().map(|&k| table.classes[k as usize].size()).collect();
    let mut pos_rem = vec![0i64; order.len() + 1];
    let mut neg_rem = vec![0i64; order.len() + 1];
    for k in (0..order.len()).rev() {
        let total = value[k] * size[k] as i64;
        pos_rem[k] = pos_rem[k + 1] + total.max(0);
        neg_rem[k] = neg_rem[k + 1] - total.min(0);
    }

    let search = Search {
        is_input: order.iter().map(|&k| table.is_input(k)).collect(),
        is_change: order
            .iter()
            .map(|&k| c.is_change(table.classes[k as usize].value))
            .collect(),
        class: order,
        value,
        size,
        pos_rem,
        neg_rem,
        lo,
        hi,
        constraints: c,
        exclusive: exclusive_class_pairs(ntx, &table),
        split_depth: opts.split_depth,
        cap: opts.submapping_cap,
        emitted: AtomicUsize::new(0),
        exceeded: AtomicBool::new(false),
    };
    let start = State {
        counts: vec![0; table.len()],
        residual: 0,
        n_in: 0,
        n_out: 0,
        n_change: 0,
    };
    let mut sigs = opts.install(|| search.run(0, start));
    if search.exceeded.load(Ordering::Relaxed) {
        return Err(Error::SubmappingExplosion { cap: opts.submapping_cap });
    }
    sigs.sort_by(|a, b| a.canonical_cmp(b, table.n_inputs));
    Ok(sigs)
}
