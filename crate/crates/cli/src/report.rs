use serde::Serialize;

use linrv::monitor::Violation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Linearizable,
    Violation,
    Inconclusive,
}

impl Outcome {
    pub fn of(violated: bool) -> Self {
        if violated {
            Outcome::Violation
        } else {
            Outcome::Linearizable
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Linearizable => 0,
            Outcome::Violation => 1,
            Outcome::Inconclusive => 2,
        }
    }
}

/// `projections` counts rule checks for `check`, automata tried for `match`
/// and key subsets examined for `oracle`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub ops: usize,
    pub values: usize,
    pub projections: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub spec: String,
    #[serde(rename = "verdict")]
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<Violation>,
    pub counts: Counts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Vec<serde_json::Value>>,
}
