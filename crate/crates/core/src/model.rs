//! Coinjoin data model: valued coins, transactions, and concrete mappings.
//!
//! Values are integer satoshis throughout. A mapping is a partition of the
//! inputs and outputs into sub-mappings, one per hypothetical user.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SATS_PER_BTC: i64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Input,
    Output,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Input => f.write_str("input"),
            Side::Output => f.write_str("output"),
        }
    }
}

/// Whether an input comes straight from a wallet or from an earlier coinjoin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Fresh,
    Remix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Whirlpool,
    Wasabi1,
    Wasabi2,
    Joinmarket,
    Generic,
}

impl Design {
    pub const ALL: [Design; 5] = [
        Design::Whirlpool,
        Design::Wasabi1,
        Design::Wasabi2,
        Design::Joinmarket,
        Design::Generic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Design::Whirlpool => "whirlpool",
            Design::Wasabi1 => "wasabi1",
            Design::Wasabi2 => "wasabi2",
            Design::Joinmarket => "joinmarket",
            Design::Generic => "generic",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownDesign(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coin {
    pub id: String,
    pub value: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl Coin {
    pub fn new(id: impl Into<String>, value: i64) -> Self {
        Coin {
            id: id.into(),
            value,
            address: None,
            origin: None,
        }
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn with_address(mut self, address: impl Into<String>) -> Self {
        self.address = Some(address.into());
        self
    }
}

/// Reference to a coin on a given side of a transaction. Ids are only
/// unique per side, so the side is part of the reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoinRef {
    Input(String),
    Output(String),
}

impl CoinRef {
    pub fn side(&self) -> Side {
        match self {
            CoinRef::Input(_) => Side::Input,
            CoinRef::Output(_) => Side::Output,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            CoinRef::Input(id) | CoinRef::Output(id) => id,
        }
    }
}

/// A transaction `T = (I, O, v)` tagged with the coinjoin design that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coinjoin {
    pub txid: String,
    pub design: Design,
    #[serde(default, rename = "feerate", skip_serializing_if = "Option::is_none")]
    pub declared_mining_feerate: Option<i64>,
    pub inputs: Vec<Coin>,
    pub outputs: Vec<Coin>,
}

impl Coinjoin {
    /// Builds a coinjoin with ids `i0, i1, ...` and `o0, o1, ...`.
    pub fn from_values(txid: impl Into<String>, design: Design, inputs: &[i64], outputs: &[i64]) -> Self {
        Coinjoin {
            txid: txid.into(),
            design,
            declared_mining_feerate: None,
            inputs: inputs
                .iter()
                .enumerate()
                .map(|(k, &v)| Coin::new(format!("i{k}"), v))
                .collect(),
            outputs: outputs
                .iter()
                .enumerate()
                .map(|(k, &v)| Coin::new(format!("o{k}"), v))
                .collect(),
        }
    }

    pub fn input_sum(&self) -> i64 {
        self.inputs.iter().map(|c| c.value).sum()
    }

    pub fn output_sum(&self) -> i64 {
        self.outputs.iter().map(|c| c.value).sum()
    }

    /// Total fee paid by the transaction.
    pub fn fee(&self) -> i64 {
        self.input_sum() - self.output_sum()
    }

    pub fn size(&self) -> usize {
        self.inputs.len() + self.outputs.len()
    }

    pub fn coins(&self, side: Side) -> &[Coin] {
        match side {
            Side::Input => &self.inputs,
            Side::Output => &self.outputs,
        }
    }

    pub fn coin(&self, r: &CoinRef) -> Option<&Coin> {
        self.coins(r.side()).iter().find(|c| c.id == r.id())
    }

    pub fn validate(&self) -> Result<()> {
        validate_coinjoin(self)
    }
}

pub fn validate_coinjoin(tx: &Coinjoin) -> Result<()> {
    for side in [Side::Input, Side::Output] {
        let coins = tx.coins(side);
        if coins.is_empty() {
            return Err(Error::EmptySide(side));
        }
        let mut seen = HashSet::new();
        for c in coins {
            if c.value <= 0 {
                return Err(Error::NegativeValue {
                    side,
                    id: c.id.clone(),
                    value: c.value,
                });
            }
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DuplicateCoinId {
                    side,
                    id: c.id.clone(),
                });
            }
        }
    }
    let (inputs, outputs) = (tx.input_sum(), tx.output_sum());
    if outputs > inputs {
        return Err(Error::OutputsExceedInputs { inputs, outputs });
    }
    Ok(())
}

/// One user's slice of a transaction, identified by coin ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubMapping {
    pub input_ids: BTreeSet<String>,
    pub output_ids: BTreeSet<String>,
    pub residual: i64,
}

/// A concrete mapping. Sub-mappings are kept sorted so equal mappings compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mapping {
    pub submappings: Vec<SubMapping>,
}

impl Mapping {
    pub fn new(mut submappings: Vec<SubMapping>) -> Self {
        submappings.sort();
        Mapping { submappings }
    }

    /// Checks disjointness, completeness, non-empty inputs and the residual window.
    pub fn is_admissible(&self, tx: &Coinjoin, residual_min: i64, residual_max: i64) -> bool {
        let mut ins = BTreeSet::new();
        let mut outs = BTreeSet::new();
        for s in &self.submappings {
            if s.input_ids.is_empty() {
                return false;
            }
            let mut residual = 0i64;
            for id in &s.input_ids {
                match tx.inputs.iter().find(|c| &c.id == id) {
                    Some(c) if ins.insert(id.as_str()) => residual += c.value,
                    _ => return false,
                }
            }
            for id in &s.output_ids {
                match tx.outputs.iter().find(|c| &c.id == id) {
                    Some(c) if outs.insert(id.as_str()) => residual -= c.value,
                    _ => return false,
                }
            }
            if residual != s.residual || residual < residual_min || residual > residual_max {
                return false;
            }
        }
        ins.len() == tx.inputs.len() && outs.len() == tx.outputs.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nine_coin() -> Coinjoin {
        Coinjoin::from_values("nine_coin", Design::Generic, &[8, 6, 3, 3], &[6, 6, 4, 2, 2])
    }

    #[test]
    fn nine_coin_is_valid() {
        assert_eq!(validate_coinjoin(&nine_coin()), Ok(()));
    }

    #[test]
    fn minimal_coinjoin_is_valid() {
        let tx = Coinjoin::from_values("t", Design::Generic, &[5], &[5]);
        assert_eq!(validate_coinjoin(&tx), Ok(()));
    }

    #[test]
    fn outputs_exceeding_inputs_rejected() {
        let tx = Coinjoin::from_values("t", Design::Generic, &[5], &[6]);
        assert_eq!(
            validate_coinjoin(&tx),
            Err(Error::OutputsExceedInputs { inputs: 5, outputs: 6 })
        );
    }

    #[test]
    fn structural_errors() {
        let tx = Coinjoin::from_values("t", Design::Generic, &[5, 0], &[5]);
        assert_eq!(validate_coinjoin(&tx).unwrap_err().name(), "NegativeValue");

        let tx = Coinjoin::from_values("t", Design::Generic, &[], &[5]);
        assert_eq!(validate_coinjoin(&tx), Err(Error::EmptySide(Side::Input)));

        let mut tx = Coinjoin::from_values("t", Design::Generic, &[5, 5], &[5]);
        tx.inputs[1].id = "i0".into();
        assert_eq!(validate_coinjoin(&tx).unwrap_err().name(), "DuplicateCoinId");
    }

    #[test]
    fn design_names_round_trip() {
        for d in Design::ALL {
            assert_eq!(d.as_str().parse::<Design>(), Ok(d));
        }
        assert_eq!("samourai".parse::<Design>().unwrap_err().name(), "UnknownDesign");
    }

    #[test]
    fn admissibility_check() {
        let tx = nine_coin();
        let set = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let m = Mapping::new(vec![
            SubMapping { input_ids: set(&["i0"]), output_ids: set(&["o2", "o3", "o4"]), residual: 0 },
            SubMapping { input_ids: set(&["i1"]), output_ids: set(&["o0"]), residual: 0 },
            SubMapping { input_ids: set(&["i2", "i3"]), output_ids: set(&["o1"]), residual: 0 },
        ]);
        assert!(m.is_admissible(&tx, 0, 0));
        let partial = Mapping::new(m.submappings[..2].to_vec());
        assert!(!partial.is_admissible(&tx, 0, 0));
    }
}
