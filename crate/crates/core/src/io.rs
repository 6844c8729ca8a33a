//! File formats shared by the library and the command-line front end.
//!
//! Everything is JSON. Big integers travel as decimal strings so documents
//! stay readable by tools without arbitrary-precision numbers.

use std::fs;
use std::io::Read;
use std::path::Path;

use num_bigint::BigUint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::enumerate::{EnumerationResult, SearchStats};
use crate::error::{Error, Result};
use crate::model::Design;
use crate::numeric::{ClassTable, NumericMapping, Signature};

pub mod biguint_string {
    use std::str::FromStr;

    use num_bigint::BigUint;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::from_str(&s).map_err(de::Error::custom)
    }
}

/// Maps keyed by coin reference, written as `[[ref, value], ...]` because
/// JSON object keys must be strings.
pub mod coin_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::model::CoinRef;

    pub fn serialize<V: Serialize, S: Serializer>(m: &BTreeMap<CoinRef, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<CoinRef, V>, D::Error> {
        Ok(Vec::<(CoinRef, V)>::deserialize(d)?.into_iter().collect())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_json(&text)
}

pub fn read_json_stdin<T: DeserializeOwned>() -> Result<T> {
    let mut text = String::new();
    std::io::stdin().read_to_string(&mut text)?;
    from_json(&text)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmappingRecord {
    pub inputs: Vec<i64>,
    pub outputs: Vec<i64>,
    pub residual: i64,
    pub signature: Signature,
}

/// On-disk enumeration result. Run statistics are kept out so files produced
/// with different worker counts are byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFile {
    pub txid: String,
    pub design: Design,
    pub residual_window: (i64, i64),
    #[serde(with = "biguint_string")]
    pub total_concrete: BigUint,
    pub numeric_count: usize,
    pub submapping_count: usize,
    pub classes: ClassTable,
    pub submappings: Vec<SubmappingRecord>,
    pub numeric_mappings: Vec<NumericMapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_included: Option<bool>,
}

impl ResultFile {
    pub fn new(txid: &str, design: Design, res: &EnumerationResult) -> Self {
        let submappings = res
            .submappings
            .iter()
            .map(|s| {
                let (inputs, outputs) = res.classes.values(s);
                SubmappingRecord {
                    inputs,
                    outputs,
                    residual: res.classes.residual(s),
                    signature: s.clone(),
                }
            })
            .collect();
        ResultFile {
            txid: txid.to_string(),
            design,
            residual_window: res.residual_window,
            total_concrete: res.total_concrete.clone(),
            numeric_count: res.numeric_count(),
            submapping_count: res.submapping_count,
            classes: res.classes.clone(),
            submappings,
            numeric_mappings: res.numeric_mappings.clone(),
            truth_included: None,
        }
    }

    /// Rebuilds the in-memory result; statistics come back empty.
    pub fn to_result(&self) -> Result<EnumerationResult> {
        let n = self.submappings.len() as u32;
        if self.numeric_mappings.iter().flat_map(|m| &m.parts).any(|&p| p >= n) {
            return Err(Error::Parse("numeric mapping references a missing sub-mapping".into()));
        }
        Ok(EnumerationResult {
            classes: self.classes.clone(),
            residual_window: self.residual_window,
            submappings: self.submappings.iter().map(|s| s.signature.clone()).collect(),
            numeric_mappings: self.numeric_mappings.clone(),
            total_concrete: self.total_concrete.clone(),
            submapping_count: self.submapping_count,
            stats: SearchStats::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{enumerate, Constraints, EnumerationOptions};
    use crate::model::Coinjoin;
    use crate::preprocess::{FeePolicy, NormalizedCoinjoin};

    #[test]
    fn result_file_round_trip() {
        let tx = Coinjoin::from_values("t", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2]);
        let n = NormalizedCoinjoin::unadjusted(tx, FeePolicy::zero_fee(Design::Generic));
        let r = enumerate(&n, &Constraints::default(), &EnumerationOptions::default()).unwrap();
        let file = ResultFile::new("t", Design::Generic, &r);
        let text = to_json(&file).unwrap();
        assert!(text.contains("\"total_concrete\": \"24\""));
        let back: ResultFile = from_json(&text).unwrap();
        assert_eq!(back, file);
        let r2 = back.to_result().unwrap();
        assert_eq!(r2.numeric_mappings, r.numeric_mappings);
        assert_eq!(r2.submappings, r.submappings);
    }
}
