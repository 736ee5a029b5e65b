//! Line-delimited JSON traces, one action per line:
//!
//! ```text
//! {"a":"call","op":"o1","m":"Enq","v":1}
//! {"a":"ret","op":"o1","m":"Enq","v":1}
//! {"a":"call","op":"o2","m":"DeqEmpty"}
//! ```
//!
//! Blank lines are skipped. Line order is execution order.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, ActionKind, Execution, Method, ModelError, Value};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("{path}: {source}")]
    IoFailure { path: String, source: io::Error },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    a: String,
    op: String,
    m: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    v: Option<u32>,
}

fn action_of(line: usize, text: &str) -> Result<Action, TraceError> {
    let bad = |reason: String| TraceError::MalformedLine { line, reason };
    let r: Record = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let method: Method = r.m.parse().map_err(|e| bad(format!("{e}")))?;
    let value = match (r.v, method.is_argumentless()) {
        (None, true) => Value::Ignored,
        (Some(v), false) => Value::Data(v),
        (Some(_), true) => return Err(bad(format!("{method} takes no value"))),
        (None, false) => return Err(bad(format!("{method} needs a value"))),
    };
    match r.a.as_str() {
        "call" => Ok(Action::call(method, value, r.op)),
        "ret" => Ok(Action::ret(method, value, r.op)),
        other => Err(bad(format!("unknown action kind {other:?}"))),
    }
}

/// Parses a trace held in memory.
pub fn parse_str(text: &str) -> Result<Execution, TraceError> {
    let mut actions = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        actions.push(action_of(i + 1, raw)?);
        lines.push(i + 1);
    }
    Execution::validate(actions).map_err(|e| {
        let index = match &e {
            ModelError::ReturnWithoutCall { index, .. } | ModelError::DuplicateOp { index, .. } => {
                *index
            }
            ModelError::IncompleteExecution => 0,
        };
        TraceError::MalformedLine {
            line: lines.get(index).copied().unwrap_or(0),
            reason: e.to_string(),
        }
    })
}

pub fn to_string(e: &Execution) -> String {
    let mut out = String::new();
    for a in e.actions() {
        let r = Record {
            a: match a.kind {
                ActionKind::Call => "call",
                ActionKind::Ret => "ret",
            }
            .to_string(),
            op: a.op.0.clone(),
            m: a.method.to_string(),
            v: a.value.data(),
        };
        out.push_str(&serde_json::to_string(&r).expect("plain record"));
        out.push('\n');
    }
    out
}

pub fn parse_trace(path: &Path) -> Result<Execution, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text)
}

pub fn write_trace(e: &Execution, path: &Path) -> Result<(), TraceError> {
    fs::write(path, to_string(e)).map_err(|source| TraceError::IoFailure {
        path: path.display().to_string(),
        source,
    })
}
