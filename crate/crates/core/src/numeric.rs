//! Numeric view of mappings: coins collapsed into classes of interchangeable
//! coins, sub-mappings as class-count vectors, and exact multiplicities.
//!
//! Two coins are interchangeable when they sit on the same side, carry the
//! same value and neither is referenced by a distinct-owner constraint.
//! Coins under such a constraint get a class of their own.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coinjoin, CoinRef, Mapping, Side};
use crate::preprocess::NormalizedCoinjoin;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinClass {
    pub side: Side,
    pub value: i64,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pinned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl CoinClass {
    pub fn size(&self) -> u32 {
        self.members.len() as u32
    }
}

/// Input classes occupy indices `0..n_inputs`, output classes the rest.
/// Within each side classes are ordered by value, then tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub classes: Vec<CoinClass>,
    pub n_inputs: usize,
}

impl ClassTable {
    pub fn new(tx: &Coinjoin, pinned: &HashSet<CoinRef>) -> Self {
        ClassTable::tagged(tx, pinned, &BTreeMap::new())
    }

    pub fn tagged(tx: &Coinjoin, pinned: &HashSet<CoinRef>, tags: &BTreeMap<CoinRef, String>) -> Self {
        let mut classes = Vec::new();
        let mut n_inputs = 0;
        for side in [Side::Input, Side::Output] {
            type Key = (i64, Option<String>, bool, String);
            let mut grouped: BTreeMap<Key, Vec<String>> = BTreeMap::new();
            for c in tx.coins(side) {
                let r = match side {
                    Side::Input => CoinRef::Input(c.id.clone()),
                    Side::Output => CoinRef::Output(c.id.clone()),
                };
                let tag = tags.get(&r).cloned();
                let key = if pinned.contains(&r) {
                    (c.value, tag, true, c.id.clone())
                } else {
                    (c.value, tag, false, String::new())
                };
                grouped.entry(key).or_default().push(c.id.clone());
            }
            for ((value, tag, is_pinned, _), members) in grouped {
                classes.push(CoinClass {
                    side,
                    value,
                    members,
                    pinned: is_pinned,
                    tag,
                });
            }
            if side == Side::Input {
                n_inputs = classes.len();
            }
        }
        ClassTable { classes, n_inputs }
    }

    pub fn from_normalized(ntx: &NormalizedCoinjoin) -> Self {
        let pinned = ntx
            .distinct_owner_pairs
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect();
        ClassTable::tagged(&ntx.base, &pinned, &ntx.tags)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn is_input(&self, class: u32) -> bool {
        (class as usize) < self.n_inputs
    }

    pub fn sizes(&self) -> Vec<u32> {
        self.classes.iter().map(CoinClass::size).collect()
    }

    /// Class index of every coin.
    pub fn lookup(&self) -> HashMap<CoinRef, u32> {
        let mut out = HashMap::new();
        for (k, c) in self.classes.iter().enumerate() {
            for id in &c.members {
                let r = match c.side {
                    Side::Input => CoinRef::Input(id.clone()),
                    Side::Output => CoinRef::Output(id.clone()),
                };
                out.insert(r, k as u32);
            }
        }
        out
    }

    pub fn residual(&self, sig: &Signature) -> i64 {
        sig.parts
            .iter()
            .map(|&(c, n)| {
                let v = self.classes[c as usize].value * n as i64;
                if self.is_input(c) {
                    v
                } else {
                    -v
                }
            })
            .sum()
    }

    /// Sorted input values and sorted output values of a signature.
    pub fn values(&self, sig: &Signature) -> (Vec<i64>, Vec<i64>) {
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for &(c, n) in &sig.parts {
            let v = self.classes[c as usize].value;
            let target = if self.is_input(c) { &mut ins } else { &mut outs };
            target.extend(std::iter::repeat_n(v, n as usize));
        }
        (ins, outs)
    }

    /// Number of concrete sub-mappings with this signature.
    pub fn concrete_count(&self, sig: &Signature) -> BigUint {
        sig.parts
            .iter()
            .map(|&(c, n)| binomial(self.classes[c as usize].size(), n))
            .product()
    }

    /// Canonical numeric signature of a concrete mapping.
    pub fn signature_of(&self, mapping: &Mapping) -> Result<Vec<Signature>> {
        let lookup = self.lookup();
        let mut sigs = Vec::with_capacity(mapping.submappings.len());
        for s in &mapping.submappings {
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            let refs = s
                .input_ids
                .iter()
                .map(|id| CoinRef::Input(id.clone()))
                .chain(s.output_ids.iter().map(|id| CoinRef::Output(id.clone())));
            for r in refs {
                let c = lookup.get(&r).ok_or_else(|| Error::UnknownId(r.id().to_string()))?;
                *counts.entry(*c).or_default() += 1;
            }
            sigs.push(Signature {
                parts: counts.into_iter().collect(),
            });
        }
        sigs.sort_by(|a, b| a.canonical_cmp(b, self.n_inputs));
        Ok(sigs)
    }

    /// Converts value multisets into a signature. Fails when the values do not
    /// name an unpinned class of this table.
    pub fn signature_from_values(&self, inputs: &[i64], outputs: &[i64]) -> Result<Signature> {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for (side, values) in [(Side::Input, inputs), (Side::Output, outputs)] {
            for v in values {
                let k = self
                    .classes
                    .iter()
                    .position(|c| c.side == side && c.value == *v && !c.pinned)
                    .ok_or(Error::SignatureMismatch)?;
                *counts.entry(k as u32).or_default() += 1;
            }
        }
        Ok(Signature {
            parts: counts.into_iter().collect(),
        })
    }
}

/// A sub-mapping up to permutation of interchangeable coins: sorted
/// `(class index, count)` pairs with non-zero counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    pub parts: Vec<(u32, u32)>,
}

impl Signature {
    pub fn input_count(&self, n_inputs: usize) -> u32 {
        self.parts.iter().filter(|(c, _)| (*c as usize) < n_inputs).map(|(_, n)| n).sum()
    }

    pub fn output_count(&self, n_inputs: usize) -> u32 {
        self.parts.iter().filter(|(c, _)| (*c as usize) >= n_inputs).map(|(_, n)| n).sum()
    }

    pub fn count_of(&self, class: u32) -> u32 {
        self.parts
            .binary_search_by_key(&class, |&(c, _)| c)
            .map(|k| self.parts[k].1)
            .unwrap_or(0)
    }

    /// Smallest input class, the anchor used by the assembly search.
    pub fn min_input_class(&self) -> Option<u32> {
        self.parts.first().map(|&(c, _)| c)
    }

    /// Lexicographic order of (sorted input classes, sorted output classes).
    /// Classes are value-ordered, so this is the order of sorted value lists.
    pub fn canonical_cmp(&self, other: &Signature, n_inputs: usize) -> Ordering {
        let split = |s: &Signature| {
            let k = s.parts.partition_point(|&(c, _)| (c as usize) < n_inputs);
            (k, s.parts.len())
        };
        let (ka, la) = split(self);
        let (kb, lb) = split(other);
        cmp_expanded(&self.parts[..ka], &other.parts[..kb])
            .then_with(|| cmp_expanded(&self.parts[ka..la], &other.parts[kb..lb]))
    }
}

/// Compares run-length encoded ascending sequences as their expansions.
fn cmp_expanded(a: &[(u32, u32)], b: &[(u32, u32)]) -> Ordering {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a.first().map_or(0, |p| p.1), b.first().map_or(0, |p| p.1));
    loop {
        match (i < a.len(), j < b.len()) {
            (false, false) => return Ordering::Equal,
            (false, true) => return Ordering::Less,
            (true, false) => return Ordering::Greater,
            (true, true) => {}
        }
        match a[i].0.cmp(&b[j].0) {
            Ordering::Equal => {}
            o => return o,
        }
        let step = ra.min(rb);
        ra -= step;
        rb -= step;
        if ra == 0 {
            i += 1;
            ra = a.get(i).map_or(0, |p| p.1);
        }
        if rb == 0 {
            j += 1;
            rb = b.get(j).map_or(0, |p| p.1);
        }
    }
}

/// A mapping up to permutation of interchangeable coins. `parts` indexes the
/// sub-mapping table of the enclosing result, in non-decreasing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericMapping {
    pub parts: Vec<u32>,
    #[serde(with = "crate::io::biguint_string")]
    pub multiplicity: BigUint,
}

pub fn factorial(n: u32) -> BigUint {
    (2..=n as u64).fold(BigUint::one(), |acc, k| acc * k)
}

pub fn binomial(n: u32, k: u32) -> BigUint {
    if k > n {
        return BigUint::default();
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Exact number of concrete mappings collapsing onto a multiset of signatures:
/// the product of per-class multinomials divided by the factorials of the
/// repeat counts of identical signatures.
pub fn multiplicity_of(signatures: &[Signature], table: &ClassTable) -> Result<BigUint> {
    let mut used = vec![0u32; table.len()];
    for sig in signatures {
        for &(c, n) in &sig.parts {
            let slot = used.get_mut(c as usize).ok_or(Error::SignatureMismatch)?;
            *slot += n;
        }
        if sig.input_count(table.n_inputs) == 0 {
            return Err(Error::SignatureMismatch);
        }
    }
    if used != table.sizes() {
        return Err(Error::SignatureMismatch);
    }
    let mut numer = BigUint::one();
    for c in &table.classes {
        numer *= factorial(c.size());
    }
    let mut denom = BigUint::one();
    for sig in signatures {
        for &(_, n) in &sig.parts {
            denom *= factorial(n);
        }
    }
    let mut repeats: BTreeMap<&Signature, u32> = BTreeMap::new();
    for sig in signatures {
        *repeats.entry(sig).or_default() += 1;
    }
    for g in repeats.values() {
        denom *= factorial(*g);
    }
    Ok(numer / denom)
}

/// Value-level convenience: each sub-mapping given as (input values, output values).
pub fn multiplicity_of_values(submappings: &[(Vec<i64>, Vec<i64>)], tx: &Coinjoin) -> Result<BigUint> {
    let table = ClassTable::new(tx, &HashSet::new());
    let sigs = submappings
        .iter()
        .map(|(i, o)| table.signature_from_values(i, o))
        .collect::<Result<Vec<_>>>()?;
    multiplicity_of(&sigs, &table)
}

/// Precomputed pieces for evaluating many multiplicities over one table.
#[derive(Debug, Clone)]
pub struct MultiplicityCalc {
    numer: BigUint,
    factorials: Vec<BigUint>,
}

impl MultiplicityCalc {
    pub fn new(table: &ClassTable) -> Self {
        let max = table.classes.iter().map(CoinClass::size).max().unwrap_or(0).max(1);
        let mut factorials = vec![BigUint::one()];
        for k in 1..=max as u64 {
            let next = factorials.last().unwrap() * k;
            factorials.push(next);
        }
        let numer = table.classes.iter().map(|c| factorials[c.size() as usize].clone()).product();
        MultiplicityCalc { numer, factorials }
    }

    pub fn slot_denominator(&self, sig: &Signature) -> BigUint {
        sig.parts.iter().map(|&(_, n)| self.factorials[n as usize].clone()).product()
    }

    /// `parts` must be sorted so identical sub-mappings are adjacent.
    pub fn evaluate(&self, parts: &[u32], slot_denominators: &[BigUint]) -> BigUint {
        let mut denom = BigUint::one();
        let mut run = 0usize;
        for (k, &p) in parts.iter().enumerate() {
            denom *= &slot_denominators[p as usize];
            run += 1;
            if k + 1 == parts.len() || parts[k + 1] != p {
                if run > 1 {
                    denom *= &self.factorials[run];
                }
                run = 0;
            }
        }
        &self.numer / denom
    }
}
