use thiserror::Error;

use crate::model::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. The variant name doubles as the
/// structured error name printed by the command-line front end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coin {id} on the {side} side has non-positive value {value}")]
    NegativeValue { side: Side, id: String, value: i64 },
    #[error("duplicate coin id {id} on the {side} side")]
    DuplicateCoinId { side: Side, id: String },
    #[error("outputs ({outputs}) exceed inputs ({inputs})")]
    OutputsExceedInputs { inputs: i64, outputs: i64 },
    #[error("transaction has no {0} coins")]
    EmptySide(Side),

    #[error("numeric mapping does not match the transaction's value classes")]
    SignatureMismatch,

    #[error("unknown coinjoin design {0:?}")]
    UnknownDesign(String),
    #[error("design {0} requires a mining feerate")]
    MissingFeerate(String),
    #[error("invalid fee policy: {0}")]
    InvalidPolicy(String),
    #[error("fee adjustment drives coin {id} to {value} satoshis")]
    ValueUnderflow { id: String, value: i64 },

    #[error("knowledge groups overlap on coin {0}")]
    OverlappingGroups(String),
    #[error("knowledge references unknown coin {0}")]
    DanglingId(String),
    #[error("contradictory knowledge: {0}")]
    ContradictoryKnowledge(String),

    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("sub-mapping count exceeds the cap of {cap}")]
    SubmappingExplosion { cap: usize },
    #[error("concrete expansion exceeds the cap of {cap} mappings")]
    ExpansionTooLarge { cap: usize },
    #[error("instance has {size} coins; the brute-force oracle accepts at most {max}")]
    InstanceTooLarge { size: usize, max: usize },

    #[error("all mappings received zero weight")]
    ZeroMass,
    #[error("unknown coin id {0}")]
    UnknownId(String),
    #[error("signature does not occur in the enumeration result")]
    UnknownSignature,
    #[error("output {0} is not part of the transaction")]
    UnknownOutput(String),

    #[error("unknown transaction {0}")]
    UnknownTx(String),
    #[error("invalid transaction graph: {0}")]
    InvalidGraph(String),

    #[error("link references missing coin: {0}")]
    DanglingLink(String),
    #[error("linked coin {0} has different values on both sides")]
    ValueMismatch(String),
    #[error("invalid linked set: {0}")]
    InvalidLinkedSet(String),

    #[error("infeasible generator parameters: {0}")]
    InfeasibleParams(String),
    #[error("degenerate trend data: {0}")]
    DegenerateData(String),

    #[error("{0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable name of the variant, used on the diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NegativeValue { .. } => "NegativeValue",
            Error::DuplicateCoinId { .. } => "DuplicateCoinId",
            Error::OutputsExceedInputs { .. } => "OutputsExceedInputs",
            Error::EmptySide(_) => "EmptySide",
            Error::SignatureMismatch => "SignatureMismatch",
            Error::UnknownDesign(_) => "UnknownDesign",
            Error::MissingFeerate(_) => "MissingFeerate",
            Error::InvalidPolicy(_) => "InvalidPolicy",
            Error::ValueUnderflow { .. } => "ValueUnderflow",
            Error::OverlappingGroups(_) => "OverlappingGroups",
            Error::DanglingId(_) => "DanglingId",
            Error::ContradictoryKnowledge(_) => "ContradictoryKnowledge",
            Error::InvalidConstraints(_) => "InvalidConstraints",
            Error::SubmappingExplosion { .. } => "SubmappingExplosion",
            Error::ExpansionTooLarge { .. } => "ExpansionTooLarge",
            Error::InstanceTooLarge { .. } => "InstanceTooLarge",
            Error::ZeroMass => "ZeroMass",
            Error::UnknownId(_) => "UnknownId",
            Error::UnknownSignature => "UnknownSignature",
            Error::UnknownOutput(_) => "UnknownOutput",
            Error::UnknownTx(_) => "UnknownTx",
            Error::InvalidGraph(_) => "InvalidGraph",
            Error::DanglingLink(_) => "DanglingLink",
            Error::ValueMismatch(_) => "ValueMismatch",
            Error::InvalidLinkedSet(_) => "InvalidLinkedSet",
            Error::InfeasibleParams(_) => "InfeasibleParams",
            Error::DegenerateData(_) => "DegenerateData",
            Error::Io(_) => "Io",
            Error::Parse(_) => "Parse",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
