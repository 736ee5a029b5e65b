//! Linearizability monitoring and verification for concurrent queues, stacks,
//! registers and mutexes.
//!
//! - [`model`]: executions, histories, projections and renamings.
//! - [`spec`]: inductive rule specifications and the four built-ins.
//! - [`oracle`]: brute-force linearizability by linear-extension enumeration.
//! - [`monitor`]: polynomial per-rule violation checks.
//! - [`automata`]: violation automata over call/return actions with values 1, 2, 3.
//! - [`modelcheck`]: product reachability and Petri-net coverability for finite-state models.
//! - [`trace`]: the line-delimited JSON trace format.
//! - [`gen`]: seeded trace generators for reference and faulty implementations.

pub mod automata;
pub mod gen;
pub mod model;
pub mod modelcheck;
pub mod monitor;
pub mod oracle;
pub mod spec;
pub mod trace;

pub use model::{
    Action, ActionKind, Execution, History, Key, Method, MethodEvent, ModelError, OpId, Operation,
    Renaming, SeqExec, Value,
};
pub use spec::{builtin, SpecKind, Specification};
