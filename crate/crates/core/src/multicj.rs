//! Joint analysis of coinjoins connected by spent outputs.
//!
//! The set is collapsed into one artificial transaction holding every external
//! input and output, each tagged with the transaction it belongs to. The
//! artificial transaction is enumerated under a loose residual window and
//! each numeric mapping is then kept only if the internal coins can be routed
//! so that every transaction's share of every user is itself a valid
//! sub-mapping of that transaction. Link capacities are the value carried by
//! those internal coins, so this check is strictly finer than a capacity bound.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumerate::{assemble_mappings, brute_force_concrete, enumerate_submappings, Constraints, EnumerationOptions, EnumerationResult};
use crate::error::{Error, Result};
use crate::model::{validate_coinjoin, Coin, CoinRef, Coinjoin, Design, Mapping, Side, SubMapping};
use crate::preprocess::{build_policy, normalize_fees, FeePolicy, NormalizedCoinjoin, PolicyParams};

/// An output of `from` spent as an input of `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalCoin {
    pub from: String,
    pub output: String,
    pub to: String,
    pub input: String,
}

/// Declared link capacity, checked against the internal coins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub from: String,
    pub to: String,
    pub capacity: i64,
}

/// Transactions in topological order plus the coins flowing between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedSet {
    pub txs: Vec<Coinjoin>,
    #[serde(default)]
    pub internal_coins: Vec<InternalCoin>,
    #[serde(default)]
    pub links: Vec<Link>,
}

/// Fee policy and constraints for one member transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxSetup {
    pub policy: FeePolicy,
    pub constraints: Constraints,
}

impl LinkedSet {
    fn position(&self, txid: &str) -> Result<usize> {
        self.txs
            .iter()
            .position(|t| t.txid == txid)
            .ok_or_else(|| Error::DanglingLink(format!("unknown transaction {txid}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.txs.is_empty() {
            return Err(Error::InvalidLinkedSet("no transactions".into()));
        }
        let mut ids = BTreeSet::new();
        for t in &self.txs {
            validate_coinjoin(t)?;
            if !ids.insert(t.txid.as_str()) {
                return Err(Error::InvalidLinkedSet(format!("duplicate txid {}", t.txid)));
            }
        }
        let mut used = BTreeSet::new();
        for c in &self.internal_coins {
            let (a, b) = (self.position(&c.from)?, self.position(&c.to)?);
            if a >= b {
                return Err(Error::InvalidLinkedSet(format!(
                    "link {} -> {} does not point forward",
                    c.from, c.to
                )));
            }
            let out = self.txs[a]
                .coin(&CoinRef::Output(c.output.clone()))
                .ok_or_else(|| Error::DanglingLink(format!("{}:{}", c.from, c.output)))?;
            let inp = self.txs[b]
                .coin(&CoinRef::Input(c.input.clone()))
                .ok_or_else(|| Error::DanglingLink(format!("{}:{}", c.to, c.input)))?;
            if out.value != inp.value {
                return Err(Error::ValueMismatch(format!("{}:{} -> {}:{}", c.from, c.output, c.to, c.input)));
            }
            let (ko, ki) = ((a, Side::Output, &c.output), (b, Side::Input, &c.input));
            if !used.insert(ko) || !used.insert(ki) {
                return Err(Error::InvalidLinkedSet(format!("coin {}:{} linked twice", c.from, c.output)));
            }
        }
        let caps = self.capacities();
        for l in &self.links {
            let have = caps.get(&(l.from.clone(), l.to.clone())).copied().unwrap_or(0);
            if have != l.capacity {
                return Err(Error::InvalidLinkedSet(format!(
                    "declared capacity {} of {} -> {} differs from linked value {have}",
                    l.capacity, l.from, l.to
                )));
            }
        }
        Ok(())
    }

    /// Total value flowing along each link.
    pub fn capacities(&self) -> BTreeMap<(String, String), i64> {
        let mut caps = BTreeMap::new();
        for c in &self.internal_coins {
            let v = self
                .txs
                .iter()
                .find(|t| t.txid == c.from)
                .and_then(|t| t.coin(&CoinRef::Output(c.output.clone())))
                .map_or(0, |x| x.value);
            *caps.entry((c.from.clone(), c.to.clone())).or_default() += v;
        }
        caps
    }

    fn is_internal(&self, txid: &str, r: &CoinRef) -> bool {
        self.internal_coins.iter().any(|c| match r {
            CoinRef::Output(id) => c.from == txid && &c.output == id,
            CoinRef::Input(id) => c.to == txid && &c.input == id,
        })
    }

    /// Per-transaction setups from shared policy parameters; a transaction's
    /// declared feerate fills in a missing one.
    pub fn default_setups(&self, params: &PolicyParams) -> Result<Vec<TxSetup>> {
        self.txs
            .iter()
            .map(|t| {
                let mut p = params.clone();
                if p.feerate.is_none() {
                    p.feerate = t.declared_mining_feerate;
                }
                Ok(TxSetup {
                    policy: build_policy(t.design, &p)?,
                    constraints: Constraints::for_design(t.design),
                })
            })
            .collect()
    }
}

/// Id of a member coin inside the artificial transaction.
pub fn artificial_id(txid: &str, coin_id: &str) -> String {
    format!("{txid}:{coin_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtificialTx {
    pub tx: Coinjoin,
    /// Originating txid of every artificial coin.
    #[serde(with = "crate::io::coin_map")]
    pub origin: BTreeMap<CoinRef, String>,
    pub capacities: Vec<Link>,
}

fn artificial_from(ls: &LinkedSet, members: &[Coinjoin]) -> ArtificialTx {
    let design = match ls.txs.first() {
        Some(t) if ls.txs.iter().all(|x| x.design == t.design) => t.design,
        _ => Design::Generic,
    };
    let txid = ls.txs.iter().map(|t| t.txid.as_str()).collect::<Vec<_>>().join("+");
    let mut tx = Coinjoin {
        txid,
        design,
        declared_mining_feerate: None,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let mut origin = BTreeMap::new();
    for (orig, member) in ls.txs.iter().zip(members) {
        for side in [Side::Input, Side::Output] {
            for c in member.coins(side) {
                let r = match side {
                    Side::Input => CoinRef::Input(c.id.clone()),
                    Side::Output => CoinRef::Output(c.id.clone()),
                };
                if ls.is_internal(&orig.txid, &r) {
                    continue;
                }
                let id = artificial_id(&orig.txid, &c.id);
                let coin = Coin { id: id.clone(), ..c.clone() };
                match side {
                    Side::Input => {
                        origin.insert(CoinRef::Input(id), orig.txid.clone());
                        tx.inputs.push(coin);
                    }
                    Side::Output => {
                        origin.insert(CoinRef::Output(id), orig.txid.clone());
                        tx.outputs.push(coin);
                    }
                }
            }
        }
    }
    let capacities = ls
        .capacities()
        .into_iter()
        .map(|((from, to), capacity)| Link { from, to, capacity })
        .collect();
    ArtificialTx { tx, origin, capacities }
}

/// The artificial transaction over raw (not fee-normalized) values.
pub fn build_artificial(ls: &LinkedSet) -> Result<ArtificialTx> {
    ls.validate()?;
    Ok(artificial_from(ls, &ls.txs))
}

/// Internal coins sharing endpoints and normalized values.
#[derive(Debug, Clone)]
struct InternalClass {
    from: usize,
    to: usize,
    out_value: i64,
    in_value: i64,
    out_change: bool,
    count: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct Part {
    n_in: u32,
    n_out: u32,
    n_change: u32,
    residual: i64,
}

struct Filter<'a> {
    setups: &'a [TxSetup],
    /// Member index and normalized value per artificial class.
    class_tx: Vec<usize>,
    internal: Vec<InternalClass>,
    res: &'a EnumerationResult,
}

impl Filter<'_> {
    fn ntx(&self) -> usize {
        self.setups.len()
    }

    fn feasible(&self, parts: &[u32]) -> bool {
        let n = self.ntx();
        let table = &self.res.classes;
        let mut base = vec![vec![Part::default(); n]; parts.len()];
        for (k, &p) in parts.iter().enumerate() {
            for &(c, cnt) in &self.res.submappings[p as usize].parts {
                let class = &table.classes[c as usize];
                let t = self.class_tx[c as usize];
                let part = &mut base[k][t];
                match class.side {
                    Side::Input => {
                        part.n_in += cnt;
                        part.residual += class.value * cnt as i64;
                    }
                    Side::Output => {
                        part.n_out += cnt;
                        part.residual -= class.value * cnt as i64;
                        if self.setups[t].constraints.is_change(class.value) {
                            part.n_change += cnt;
                        }
                    }
                }
            }
        }
        let mut alloc = vec![vec![0u32; parts.len()]; self.internal.len()];
        self.route(0, &base, &mut alloc)
    }

    fn route(&self, j: usize, base: &[Vec<Part>], alloc: &mut [Vec<u32>]) -> bool {
        if j == self.internal.len() {
            return self.check(base, alloc);
        }
        let blocks = base.len();
        let total = self.internal[j].count;
        // Every composition of `total` into `blocks` parts.
        fn compositions(k: usize, left: u32, row: &mut Vec<u32>, f: &mut dyn FnMut(&[u32]) -> bool) -> bool {
            if k + 1 == row.len() {
                row[k] = left;
                return f(row);
            }
            for x in 0..=left {
                row[k] = x;
                if compositions(k + 1, left - x, row, f) {
                    return true;
                }
            }
            false
        }
        let mut row = vec![0u32; blocks];
        compositions(0, total, &mut row, &mut |r| {
            alloc[j].copy_from_slice(r);
            let mut next = alloc.to_vec();
            self.route(j + 1, base, &mut next)
        })
    }

    fn check(&self, base: &[Vec<Part>], alloc: &[Vec<u32>]) -> bool {
        let n = self.ntx();
        let mut positive = vec![0u32; n];
        for (k, row) in base.iter().enumerate() {
            let mut parts = row.clone();
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(p: &mut [usize], x: usize) -> usize {
                let mut r = x;
                while p[r] != r {
                    r = p[r];
                }
                p[x] = r;
                r
            }
            for (j, ic) in self.internal.iter().enumerate() {
                let a = alloc[j][k];
                if a == 0 {
                    continue;
                }
                let from = &mut parts[ic.from];
                from.n_out += a;
                from.residual -= ic.out_value * a as i64;
                if ic.out_change {
                    from.n_change += a;
                }
                let to = &mut parts[ic.to];
                to.n_in += a;
                to.residual += ic.in_value * a as i64;
                let (ra, rb) = (find(&mut parent, ic.from), find(&mut parent, ic.to));
                parent[ra] = rb;
            }
            let mut root = None;
            for (t, part) in parts.iter().enumerate() {
                if part.n_in + part.n_out == 0 {
                    continue;
                }
                let s = &self.setups[t];
                let c = &s.constraints;
                if part.n_in == 0
                    || part.residual < s.policy.residual_min
                    || part.residual > s.policy.residual_max
                    || part.n_in > c.max_inputs_per_user
                    || part.n_out > c.max_outputs_per_user
                    || c.max_change_outputs_per_user.is_some_and(|m| part.n_change > m)
                {
                    return false;
                }
                if part.residual > 0 {
                    positive[t] += 1;
                }
                let r = find(&mut parent, t);
                if *root.get_or_insert(r) != r {
                    return false;
                }
            }
        }
        positive
            .iter()
            .zip(self.setups)
            .all(|(&p, s)| s.constraints.max_positive_residual_submappings.is_none_or(|m| p <= m))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkedResult {
    pub artificial: ArtificialTx,
    /// Artificial transaction with per-member normalized values and origin tags.
    pub normalized: NormalizedCoinjoin,
    pub loose_constraints: Constraints,
    pub result: EnumerationResult,
    /// Numeric mappings of the loose enumeration before routing checks.
    pub unfiltered_count: usize,
}

struct Prepared {
    artificial: ArtificialTx,
    normalized: NormalizedCoinjoin,
    members: Vec<NormalizedCoinjoin>,
    loose: Constraints,
}

fn prepare(ls: &LinkedSet, setups: &[TxSetup]) -> Result<Prepared> {
    ls.validate()?;
    if setups.len() != ls.txs.len() {
        return Err(Error::InvalidLinkedSet(format!(
            "{} setups for {} transactions",
            setups.len(),
            ls.txs.len()
        )));
    }
    let members: Vec<NormalizedCoinjoin> = ls
        .txs
        .iter()
        .zip(setups)
        .map(|(t, s)| normalize_fees(t, &s.policy))
        .collect::<Result<_>>()?;
    let bases: Vec<Coinjoin> = members.iter().map(|m| m.base.clone()).collect();
    let artificial = build_artificial(ls)?;
    let mut norm_tx = artificial_from(ls, &bases).tx;
    norm_tx.txid = artificial.tx.txid.clone();

    // Loose window: any block's residual is a sum of member residuals plus
    // the fee shift carried by its internal coins.
    let mins: Vec<i64> = setups.iter().map(|s| s.policy.residual_min).collect();
    let mut lo = if mins.iter().any(|&m| m < 0) {
        mins.iter().map(|&m| m.min(0)).sum()
    } else {
        mins.iter().copied().min().unwrap_or(0)
    };
    let mut hi: i64 = setups.iter().map(|s| s.policy.residual_max.max(0)).sum();
    for c in &ls.internal_coins {
        let (a, b) = (ls.position(&c.from)?, ls.position(&c.to)?);
        let vo = members[a].base.coin(&CoinRef::Output(c.output.clone())).map_or(0, |x| x.value);
        let vi = members[b].base.coin(&CoinRef::Input(c.input.clone())).map_or(0, |x| x.value);
        lo += (vo - vi).min(0);
        hi += (vo - vi).max(0);
    }
    let mut normalized = NormalizedCoinjoin::unadjusted(norm_tx, FeePolicy::zero_fee(Design::Generic).with_window(lo, hi));
    normalized.tags = artificial.origin.clone();

    let sum = |f: fn(&Constraints) -> u32| setups.iter().fold(0u32, |acc, s| acc.saturating_add(f(&s.constraints)));
    let loose = Constraints {
        max_inputs_per_user: sum(|c| c.max_inputs_per_user),
        max_outputs_per_user: sum(|c| c.max_outputs_per_user),
        ..Default::default()
    };
    Ok(Prepared {
        artificial,
        normalized,
        members,
        loose,
    })
}

/// Enumerates the artificial transaction and keeps the numeric mappings that
/// are realizable by the member transactions.
pub fn enumerate_linked(ls: &LinkedSet, setups: &[TxSetup], opts: &EnumerationOptions) -> Result<LinkedResult> {
    let prep = prepare(ls, setups)?;
    let subs = enumerate_submappings(&prep.normalized, &prep.loose, opts)?;
    let mut res = assemble_mappings(subs, &prep.normalized, &prep.loose, opts)?;
    let unfiltered_count = res.numeric_count();

    let tx_index: HashMap<&str, usize> = ls.txs.iter().enumerate().map(|(k, t)| (t.txid.as_str(), k)).collect();
    let class_tx = res
        .classes
        .classes
        .iter()
        .map(|c| c.tag.as_deref().and_then(|t| tx_index.get(t).copied()).unwrap_or(0))
        .collect();
    let mut grouped: BTreeMap<(usize, usize, i64, i64, bool), u32> = BTreeMap::new();
    for c in &ls.internal_coins {
        let (a, b) = (tx_index[c.from.as_str()], tx_index[c.to.as_str()]);
        let vo = prep.members[a].base.coin(&CoinRef::Output(c.output.clone())).map_or(0, |x| x.value);
        let vi = prep.members[b].base.coin(&CoinRef::Input(c.input.clone())).map_or(0, |x| x.value);
        let change = setups[a].constraints.is_change(vo);
        *grouped.entry((a, b, vo, vi, change)).or_default() += 1;
    }
    let internal = grouped
        .into_iter()
        .map(|((from, to, out_value, in_value, out_change), count)| InternalClass {
            from,
            to,
            out_value,
            in_value,
            out_change,
            count,
        })
        .collect();
    let filter = Filter {
        setups,
        class_tx,
        internal,
        res: &res,
    };
    let keep: Vec<bool> = opts.install(|| {
        res.numeric_mappings
            .par_iter()
            .map(|m| filter.feasible(&m.parts))
            .collect()
    });
    let mut k = 0;
    res.numeric_mappings.retain(|_| {
        k += 1;
        keep[k - 1]
    });
    res.total_concrete = res.numeric_mappings.iter().map(|m| &m.multiplicity).sum::<BigUint>();
    Ok(LinkedResult {
        artificial: prep.artificial,
        normalized: prep.normalized,
        loose_constraints: prep.loose,
        result: res,
        unfiltered_count,
    })
}

/// Reference for [`enumerate_linked`]: enumerates every member's concrete
/// mappings by brute force, joins users along internal coins and projects the
/// consistent combinations onto the external coins.
pub fn joint_oracle(ls: &LinkedSet, setups: &[TxSetup]) -> Result<BTreeSet<Mapping>> {
    let prep = prepare(ls, setups)?;
    let per_tx: Vec<Vec<Mapping>> = prep
        .members
        .iter()
        .zip(setups)
        .map(|(m, s)| brute_force_concrete(m, &s.constraints))
        .collect::<Result<_>>()?;
    let value = |r: &CoinRef| prep.normalized.base.coin(r).map_or(0, |c| c.value);
    let mut out = BTreeSet::new();
    if per_tx.iter().any(Vec::is_empty) {
        return Ok(out);
    }
    let mut choice = vec![0usize; per_tx.len()];
    loop {
        let mappings: Vec<&Mapping> = choice.iter().zip(&per_tx).map(|(&c, v)| &v[c]).collect();
        let mut offset = vec![0usize; mappings.len() + 1];
        for (t, m) in mappings.iter().enumerate() {
            offset[t + 1] = offset[t] + m.submappings.len();
        }
        let owner = |t: usize, side: Side, id: &str| -> usize {
            let k = mappings[t]
                .submappings
                .iter()
                .position(|s| match side {
                    Side::Input => s.input_ids.contains(id),
                    Side::Output => s.output_ids.contains(id),
                })
                .expect("complete mapping");
            offset[t] + k
        };
        let mut parent: Vec<usize> = (0..offset[mappings.len()]).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for c in &ls.internal_coins {
            let (a, b) = (ls.position(&c.from)?, ls.position(&c.to)?);
            let (x, y) = (owner(a, Side::Output, &c.output), owner(b, Side::Input, &c.input));
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            parent[rx] = ry;
        }
        let mut comps: BTreeMap<usize, Vec<(usize, &SubMapping)>> = BTreeMap::new();
        for (t, m) in mappings.iter().enumerate() {
            for (k, s) in m.submappings.iter().enumerate() {
                let r = find(&mut parent, offset[t] + k);
                comps.entry(r).or_default().push((t, s));
            }
        }
        let consistent = comps.values().all(|parts| {
            let txs: BTreeSet<usize> = parts.iter().map(|(t, _)| *t).collect();
            txs.len() == parts.len()
        });
        if consistent {
            let mut subs = Vec::new();
            for parts in comps.values() {
                let mut s = SubMapping {
                    input_ids: BTreeSet::new(),
                    output_ids: BTreeSet::new(),
                    residual: 0,
                };
                for (t, p) in parts {
                    let txid = &ls.txs[*t].txid;
                    for id in &p.input_ids {
                        let r = CoinRef::Input(artificial_id(txid, id));
                        if prep.normalized.base.coin(&r).is_some() {
                            s.residual += value(&r);
                            s.input_ids.insert(r.id().to_string());
                        }
                    }
                    for id in &p.output_ids {
                        let r = CoinRef::Output(artificial_id(txid, id));
                        if prep.normalized.base.coin(&r).is_some() {
                            s.residual -= value(&r);
                            s.output_ids.insert(r.id().to_string());
                        }
                    }
                }
                subs.push(s);
            }
            out.insert(Mapping::new(subs));
        }
        let mut k = 0;
        while k < choice.len() {
            choice[k] += 1;
            if choice[k] < per_tx[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == choice.len() {
            break;
        }
    }
    Ok(out)
}
