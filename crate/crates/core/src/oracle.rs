//! Brute-force linearizability by enumerating linear extensions of a history.
//!
//! Meant as ground truth for small histories. Enumeration is exponential and
//! refuses histories larger than the configured bound.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{key_subsets, History, KeySet, OpId, SeqExec};
use crate::spec::{in_match_set, is_member_prefix, member, Rule, Specification};

pub const DEFAULT_BOUND: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("history has {ops} operations, oracle bound is {bound}")]
    TooLarge { ops: usize, bound: usize },
    #[error("history is not differentiated")]
    NotDifferentiated,
}

/// A total order of the operations extending happens-before.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linearization {
    /// Indices into `History::ops`.
    pub indices: Vec<usize>,
    pub order: Vec<OpId>,
    pub seq: SeqExec,
}

/// Iterator over linear extensions, choosing among minimal operations by op id.
pub struct Linearizations<'a> {
    h: &'a History,
    pred: Vec<u64>,
    by_rank: Vec<usize>,
    rank: Vec<usize>,
    stack: Vec<usize>,
    placed: u64,
    state: IterState,
}

#[derive(PartialEq, Eq)]
enum IterState {
    Fresh,
    Running,
    Done,
}

impl<'a> Linearizations<'a> {
    fn new(h: &'a History) -> Self {
        let n = h.len();
        let pred = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| h.before(j, i))
                    .fold(0u64, |m, j| m | 1 << j)
            })
            .collect();
        let mut by_rank: Vec<usize> = (0..n).collect();
        by_rank.sort_by(|&a, &b| h.ops()[a].id.cmp(&h.ops()[b].id));
        let mut rank = vec![0; n];
        for (r, &i) in by_rank.iter().enumerate() {
            rank[i] = r;
        }
        Linearizations {
            h,
            pred,
            by_rank,
            rank,
            stack: Vec::with_capacity(n),
            placed: 0,
            state: IterState::Fresh,
        }
    }

    fn candidate_after(&self, after: Option<usize>) -> Option<usize> {
        let start = after.map_or(0, |r| r + 1);
        self.by_rank[start.min(self.by_rank.len())..]
            .iter()
            .copied()
            .find(|&i| self.placed >> i & 1 == 0 && self.pred[i] & !self.placed == 0)
    }

    fn push(&mut self, i: usize) {
        self.stack.push(i);
        self.placed |= 1 << i;
    }

    fn fill(&mut self) {
        while self.stack.len() < self.h.len() {
            let c = self
                .candidate_after(None)
                .expect("happens-before is acyclic");
            self.push(c);
        }
    }

    fn advance(&mut self) -> bool {
        while let Some(last) = self.stack.pop() {
            self.placed &= !(1 << last);
            if let Some(c) = self.candidate_after(Some(self.rank[last])) {
                self.push(c);
                self.fill();
                return true;
            }
        }
        false
    }

    fn current(&self) -> Linearization {
        let ops = self.h.ops();
        Linearization {
            indices: self.stack.clone(),
            order: self.stack.iter().map(|&i| ops[i].id.clone()).collect(),
            seq: SeqExec::new(self.stack.iter().map(|&i| ops[i].event).collect()),
        }
    }
}

impl Iterator for Linearizations<'_> {
    type Item = Linearization;

    fn next(&mut self) -> Option<Linearization> {
        match self.state {
            IterState::Done => return None,
            IterState::Fresh => {
                self.state = IterState::Running;
                self.fill();
            }
            IterState::Running => {
                if !self.advance() {
                    self.state = IterState::Done;
                    return None;
                }
            }
        }
        Some(self.current())
    }
}

/// Brute-force decision procedure with an operation-count bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Oracle {
    pub bound: usize,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle {
            bound: DEFAULT_BOUND,
        }
    }
}

impl Oracle {
    pub fn with_bound(bound: usize) -> Self {
        assert!(bound <= 64, "oracle bound above 64 operations is not supported");
        Oracle { bound }
    }

    fn admit(&self, h: &History) -> Result<(), OracleError> {
        if h.len() > self.bound {
            return Err(OracleError::TooLarge {
                ops: h.len(),
                bound: self.bound,
            });
        }
        Ok(())
    }

    fn admit_spec(&self, h: &History, spec: &Specification) -> Result<(), OracleError> {
        self.admit(h)?;
        if !h.is_differentiated(&spec.input_methods) {
            return Err(OracleError::NotDifferentiated);
        }
        Ok(())
    }

    /// Every total order extending happens-before, each once.
    pub fn linearizations<'a>(&self, h: &'a History) -> Result<Linearizations<'a>, OracleError> {
        self.admit(h)?;
        Ok(Linearizations::new(h))
    }

    /// The first linearization whose sequence belongs to the specification.
    pub fn is_linearizable(
        &self,
        h: &History,
        spec: &Specification,
    ) -> Result<Option<Linearization>, OracleError> {
        self.admit_spec(h, spec)?;
        Ok(Linearizations::new(h).find(|l| matches!(member(&l.seq, spec), Ok(Some(_)))))
    }

    /// Linearizable with respect to `⟦R_1,…,R_prefix⟧`.
    pub fn is_linearizable_prefix(
        &self,
        h: &History,
        spec: &Specification,
        prefix: usize,
    ) -> Result<Option<Linearization>, OracleError> {
        self.admit_spec(h, spec)?;
        Ok(Linearizations::new(h).find(|l| is_member_prefix(&l.seq, spec, prefix)))
    }

    /// Linearizable with respect to the matching set of a single rule.
    pub fn is_linearizable_wrt_matchset(
        &self,
        h: &History,
        rule: &Rule,
    ) -> Result<bool, OracleError> {
        self.admit(h)?;
        Ok(Linearizations::new(h).any(|l| in_match_set(&l.seq, rule)))
    }

    /// Linearizable with respect to the union of the matching sets of the first `prefix` rules.
    pub fn is_linearizable_wrt_matchsets(
        &self,
        h: &History,
        spec: &Specification,
        prefix: usize,
    ) -> Result<bool, OracleError> {
        self.admit(h)?;
        Ok(Linearizations::new(h)
            .any(|l| spec.rules[..prefix].iter().any(|r| in_match_set(&l.seq, r))))
    }

    /// Projections `h|K` (over every key subset) that are not linearizable
    /// with respect to `M(last(h|K))`, with the index of that rule.
    pub fn violating_projections(
        &self,
        h: &History,
        spec: &Specification,
    ) -> Result<Vec<(KeySet, usize)>, OracleError> {
        self.admit_spec(h, spec)?;
        let keys = h.keys();
        let mut out = Vec::new();
        for ks in key_subsets(&keys, keys.len()) {
            let p = h.project_keys(&ks);
            let r = spec.last_index(p.events());
            if !self.is_linearizable_wrt_matchset(&p, &spec.rules[r])? {
                out.push((ks, r));
            }
        }
        Ok(out)
    }

    /// Rules `R` for which some projection `h'` has `last(h') = R` and is not
    /// linearizable with respect to `M(R)`.
    pub fn violated_rules(
        &self,
        h: &History,
        spec: &Specification,
    ) -> Result<BTreeSet<usize>, OracleError> {
        Ok(self
            .violating_projections(h, spec)?
            .into_iter()
            .map(|(_, r)| r)
            .collect())
    }

    /// Every projection `h'` is linearizable with respect to `M(last(h'))`.
    pub fn check_exclu(&self, h: &History, spec: &Specification) -> Result<bool, OracleError> {
        self.admit_spec(h, spec)?;
        let keys = h.keys();
        for ks in key_subsets(&keys, keys.len()) {
            let p = h.project_keys(&ks);
            let r = spec.last_of(p.events());
            if !self.is_linearizable_wrt_matchset(&p, r)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
