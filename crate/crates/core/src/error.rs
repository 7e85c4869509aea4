use thiserror::Error;

use crate::schedule::{ObjectId, OpId, ScheduleViolation, TxnId};

/// Which configured bound a search ran into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Limit {
    Transactions,
    Operations,
    Candidates,
    Choices,
    TimeBudget,
}

impl std::fmt::Display for Limit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Limit::Transactions => "transactions",
            Limit::Operations => "operations",
            Limit::Candidates => "candidates",
            Limit::Choices => "choices",
            Limit::TimeBudget => "time budget",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("unknown operation {0}")]
    UnknownOperation(OpId),

    #[error("unknown transaction {0}")]
    UnknownTransaction(TxnId),

    #[error("duplicate transaction {0}")]
    DuplicateTransaction(TxnId),

    #[error("schedules are over different transaction sets")]
    TransactionSetMismatch,

    #[error("object {0} is never written")]
    ObjectNeverWritten(ObjectId),

    #[error("limit exceeded: {limit} (bound {bound}, needed {needed})")]
    LimitExceeded { limit: Limit, bound: u64, needed: u64 },

    #[error("allocation has no isolation level for {0}")]
    AllocationIncomplete(TxnId),

    #[error("{0:?} is not the transaction set of a cycle in the serialization graph")]
    NotACycle(Vec<TxnId>),

    #[error("schedule is not well-formed ({} violation(s))", .0.len())]
    InvalidSchedule(Vec<ScheduleViolation>),

    #[error("operation {0} is not a {1}")]
    WrongAction(OpId, &'static str),

    #[error("invalid counterexample: {0}")]
    InvalidCounterexample(String),

    #[error("operation needs a per-transaction level allocation")]
    RequiresLevelAllocation,

    #[error("split search cannot decide exact view robustness")]
    NoSplitCharacterisation,

    #[error("invalid polygraph: {0}")]
    InvalidPolygraph(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn limit(limit: Limit, bound: impl TryInto<u64>, needed: impl TryInto<u64>) -> Self {
        Error::LimitExceeded {
            limit,
            bound: bound.try_into().unwrap_or(u64::MAX),
            needed: needed.try_into().unwrap_or(u64::MAX),
        }
    }
}
