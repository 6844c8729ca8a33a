//! Sub-mapping computation, filtering and assembly into mappings.
//!
//! Enumeration runs over coin classes (see [`crate::numeric`]) rather than
//! coin ids, so coins of equal value never multiply the search. Concrete
//! mapping counts are recovered exactly through multiplicities.

mod assemble;
mod concrete;
mod oracle;
mod ssp;

use std::collections::BTreeMap;
use std::time::Duration;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Design;
use crate::numeric::{ClassTable, NumericMapping, Signature};
use crate::preprocess::NormalizedCoinjoin;

pub use assemble::assemble_mappings;
pub use concrete::{expand_concrete, ConcreteMapping};
pub use oracle::{brute_force_concrete, brute_force_oracle, ORACLE_MAX_COINS};
pub use ssp::enumerate_submappings;

pub const DEFAULT_SUBMAPPING_CAP: usize = 10_000_000;

/// Implementation restrictions on what a single user can register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    pub max_inputs_per_user: u32,
    pub max_outputs_per_user: u32,
    /// At most this many sub-mappings of a mapping may have a positive residual.
    pub max_positive_residual_submappings: Option<u32>,
    /// At most this many outputs per user outside `change_denominations`.
    pub max_change_outputs_per_user: Option<u32>,
    pub change_denominations: Vec<i64>,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            max_inputs_per_user: 30,
            max_outputs_per_user: 10,
            max_positive_residual_submappings: None,
            max_change_outputs_per_user: None,
            change_denominations: Vec::new(),
        }
    }
}

impl Constraints {
    /// No restriction beyond mapping admissibility.
    pub fn unrestricted() -> Self {
        Constraints {
            max_inputs_per_user: u32::MAX,
            max_outputs_per_user: u32::MAX,
            ..Default::default()
        }
    }

    pub fn for_design(design: Design) -> Self {
        match design {
            Design::Whirlpool => Constraints {
                max_inputs_per_user: 1,
                max_outputs_per_user: 1,
                ..Default::default()
            },
            Design::Joinmarket => Constraints {
                max_positive_residual_submappings: Some(1),
                ..Default::default()
            },
            _ => Constraints::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let limits = [
            ("max_inputs_per_user", Some(self.max_inputs_per_user)),
            ("max_outputs_per_user", Some(self.max_outputs_per_user)),
            ("max_positive_residual_submappings", self.max_positive_residual_submappings),
            ("max_change_outputs_per_user", self.max_change_outputs_per_user),
        ];
        for (name, v) in limits {
            if v == Some(0) {
                return Err(Error::InvalidConstraints(format!("{name} must be at least 1")));
            }
        }
        if self.max_change_outputs_per_user.is_some() && self.change_denominations.is_empty() {
            return Err(Error::InvalidConstraints(
                "the change-output rule needs the round's denomination list".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn is_change(&self, value: i64) -> bool {
        !self.change_denominations.contains(&value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumerationOptions {
    /// Worker threads; 0 uses the global rayon pool.
    pub threads: usize,
    pub submapping_cap: usize,
    /// Levels of the search tree that are fanned out to workers.
    pub split_depth: usize,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            threads: 0,
            submapping_cap: DEFAULT_SUBMAPPING_CAP,
            split_depth: 3,
        }
    }
}

impl EnumerationOptions {
    pub fn with_threads(threads: usize) -> Self {
        EnumerationOptions {
            threads,
            ..Default::default()
        }
    }

    pub(crate) fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        if self.threads == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }

    pub(crate) fn worker_count(&self) -> usize {
        if self.threads == 0 {
            rayon::current_num_threads()
        } else {
            self.threads
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_visited: u64,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
    pub worker_count: usize,
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumerationResult {
    pub classes: ClassTable,
    pub residual_window: (i64, i64),
    /// Sub-mapping table, in canonical order.
    pub submappings: Vec<Signature>,
    pub numeric_mappings: Vec<NumericMapping>,
    pub total_concrete: BigUint,
    pub submapping_count: usize,
    pub stats: SearchStats,
}

impl EnumerationResult {
    pub fn numeric_count(&self) -> usize {
        self.numeric_mappings.len()
    }

    pub fn signatures(&self, m: &NumericMapping) -> Vec<&Signature> {
        m.parts.iter().map(|&p| &self.submappings[p as usize]).collect()
    }

    /// Numeric mappings keyed by their signature multisets. Independent of
    /// table layout, so results of different enumerators compare directly.
    pub fn numeric_set(&self) -> BTreeMap<Vec<Signature>, BigUint> {
        self.numeric_mappings
            .iter()
            .map(|m| {
                let mut sigs: Vec<Signature> = self.signatures(m).into_iter().cloned().collect();
                sigs.sort();
                (sigs, m.multiplicity.clone())
            })
            .collect()
    }

    /// Whether the multiset of signatures occurs among the numeric mappings.
    pub fn contains(&self, signatures: &[Signature]) -> bool {
        let mut want = signatures.to_vec();
        want.sort();
        self.numeric_mappings.iter().any(|m| {
            let mut have: Vec<Signature> = self.signatures(m).into_iter().cloned().collect();
            have.sort();
            have == want
        })
    }

    pub fn residual(&self, sig: &Signature) -> i64 {
        self.classes.residual(sig)
    }
}

/// Runs sub-mapping computation and assembly on a normalized transaction.
pub fn enumerate(ntx: &NormalizedCoinjoin, c: &Constraints, opts: &EnumerationOptions) -> Result<EnumerationResult> {
    let subs = enumerate_submappings(ntx, c, opts)?;
    assemble_mappings(subs, ntx, c, opts)
}
