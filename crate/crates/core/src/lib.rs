//! Analysis of multiversion transaction schedules: serializability, admissibility
//! under RC, SI and SSI, and robustness of workloads against isolation-level
//! allocations.

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod generate;
pub mod isolation;
pub mod polygraph;
pub mod robustness;
pub mod schedule;
pub mod serializability;

pub use error::{Error, Limit, Result};
pub use isolation::{AdmissibilityReport, Allocation, IsolationLevel, NamedPredicate, PivotRule};
pub use polygraph::Polygraph;
pub use robustness::{Counterexample, RobustnessMode, RobustnessVerdict, SearchLimits, Workload};
pub use schedule::{Action, ObjectId, OpId, Operation, Schedule, Transaction, TxnId};
pub use serializability::{SerializationGraph, ViewLimits, ViewWitness};
