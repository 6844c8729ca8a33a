use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EnumerationResult;
use crate::error::{Error, Result};
use crate::model::{Mapping, Side, SubMapping};

/// A concrete mapping together with the numeric mapping it collapses onto.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteMapping {
    pub numeric_index: usize,
    pub mapping: Mapping,
}

/// Distributes `members` over slots needing `need[s]` coins each.
fn distribute(members: &[String], need: &[u32], out: &mut Vec<Vec<Vec<String>>>) {
    fn rec(members: &[String], need: &[u32], k: usize, acc: &mut Vec<Vec<String>>, out: &mut Vec<Vec<Vec<String>>>) {
        if k == need.len() {
            out.push(acc.clone());
            return;
        }
        let n = need[k] as usize;
        for pick in combinations(members.len(), n) {
            let chosen: Vec<String> = pick.iter().map(|&i| members[i].clone()).collect();
            let rest: Vec<String> = (0..members.len())
                .filter(|i| !pick.contains(i))
                .map(|i| members[i].clone())
                .collect();
            acc.push(chosen);
            rec(&rest, need, k + 1, acc, out);
            acc.pop();
        }
    }
    rec(members, need, 0, &mut Vec::new(), out);
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Expands every numeric mapping into its concrete mappings. Fails once more
/// than `cap` concrete mappings would be produced.
pub fn expand_concrete(res: &EnumerationResult, cap: usize) -> Result<Vec<ConcreteMapping>> {
    if res.total_concrete > cap.into() {
        return Err(Error::ExpansionTooLarge { cap });
    }
    let table = &res.classes;
    let mut out = Vec::new();
    for (index, nm) in res.numeric_mappings.iter().enumerate() {
        let sigs = res.signatures(nm);
        // Per class, every way of handing its members to the slots.
        let mut per_class: Vec<Vec<Vec<Vec<String>>>> = Vec::with_capacity(table.len());
        for (c, class) in table.classes.iter().enumerate() {
            let need: Vec<u32> = sigs.iter().map(|s| s.count_of(c as u32)).collect();
            let mut ways = Vec::new();
            distribute(&class.members, &need, &mut ways);
            per_class.push(ways);
        }
        let mut seen = BTreeSet::new();
        let mut choice = vec![0usize; per_class.len()];
        loop {
            let mut subs: Vec<SubMapping> = sigs
                .iter()
                .map(|s| SubMapping {
                    input_ids: BTreeSet::new(),
                    output_ids: BTreeSet::new(),
                    residual: table.residual(s),
                })
                .collect();
            for (c, ways) in per_class.iter().enumerate() {
                for (slot, ids) in ways[choice[c]].iter().enumerate() {
                    let target = match table.classes[c].side {
                        Side::Input => &mut subs[slot].input_ids,
                        Side::Output => &mut subs[slot].output_ids,
                    };
                    target.extend(ids.iter().cloned());
                }
            }
            let mapping = Mapping::new(subs);
            if seen.insert(mapping.clone()) {
                if out.len() >= cap {
                    return Err(Error::ExpansionTooLarge { cap });
                }
                out.push(ConcreteMapping {
                    numeric_index: index,
                    mapping,
                });
            }
            // Odometer step over the per-class choices.
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < per_class[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{enumerate, Constraints, EnumerationOptions};
    use crate::model::{Coinjoin, Design};
    use crate::preprocess::{FeePolicy, NormalizedCoinjoin};

    #[test]
    fn expansion_matches_multiplicities() {
        let tx = Coinjoin::from_values("t", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2]);
        let n = NormalizedCoinjoin::unadjusted(tx, FeePolicy::zero_fee(Design::Generic));
        let r = enumerate(&n, &Constraints::default(), &EnumerationOptions::default()).unwrap();
        let all = expand_concrete(&r, 1000).unwrap();
        assert_eq!(all.len(), 24);
        for (k, nm) in r.numeric_mappings.iter().enumerate() {
            let count = all.iter().filter(|c| c.numeric_index == k).count();
            assert_eq!(nm.multiplicity, count.into());
        }
        assert!(all.iter().all(|c| c.mapping.is_admissible(&n.base, 0, 0)));
        let distinct: BTreeSet<_> = all.iter().map(|c| &c.mapping).collect();
        assert_eq!(distinct.len(), 24);
    }

    #[test]
    fn cap_is_enforced() {
        let tx = Coinjoin::from_values("t", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2]);
        let n = NormalizedCoinjoin::unadjusted(tx, FeePolicy::zero_fee(Design::Generic));
        let r = enumerate(&n, &Constraints::default(), &EnumerationOptions::default()).unwrap();
        assert_eq!(expand_concrete(&r, 10).unwrap_err(), Error::ExpansionTooLarge { cap: 10 });
    }
}
