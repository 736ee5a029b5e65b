//! Polynomial violation checks, one per rule.
//!
//! Each check decides whether some projection `h'` of the history has
//! `last(h') = R` and is not linearizable with respect to `M(R)`. Together
//! they decide linearizability for the four built-in specifications.
//!
//! Two shapes of check are used:
//!
//! - Witness rules (`R_EnqDeq`, `R_PushPop`, `R_WR`, `R_LU`): a value `x` can
//!   serve as the witness of `h|D` under conditions that only get harder as
//!   `D` grows. Violations are searched among single values, then pairs, then
//!   by a greatest-fixpoint over all values, which is exact.
//! - Cover rules (`R_DeqEmpty`, `R_PopEmpty`, `R_Push`): the operation `o` that
//!   must be placed at an empty point is covered when the left-right constraint
//!   graph has a cycle through `o`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{History, Method, OpId, Value};
use crate::spec::{
    SpecKind, Specification, R_DEQEMPTY, R_ENQDEQ, R_LOCK, R_LU, R_POPEMPTY, R_PUSH, R_PUSHPOP,
    R_WR,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("history is not differentiated")]
    NotDifferentiated,
    #[error("method {0} does not belong to the {1} specification")]
    ForeignMethod(Method, String),
    #[error("operation {0} carries a value that does not fit its method")]
    BadValue(OpId),
    #[error("value {0} does not occur in the history")]
    ValueAbsent(u32),
    #[error("operation {0} does not occur in the history")]
    OpAbsent(OpId),
    #[error("no monitor for rule {0}")]
    UnknownRule(String),
}

/// A happens-before fact supporting a violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub from_op: OpId,
    pub to_op: OpId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: String,
    /// Data values involved; for covers, the cycle values in order from `o`.
    pub witnesses: Vec<u32>,
    /// The operation that cannot be placed (covers only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub op: Option<OpId>,
    pub evidence: Vec<Edge>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation on values {:?}: {}", self.rule, self.witnesses, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub linearizable: bool,
    pub violation: Option<Violation>,
}

impl Verdict {
    fn from(v: Option<Violation>) -> Verdict {
        Verdict {
            linearizable: v.is_none(),
            violation: v,
        }
    }
}

/// Operations of one data value, split by role.
#[derive(Debug, Clone, Default)]
struct ValueOps {
    producers: Vec<usize>,
    /// Sorted by call position.
    consumers: Vec<usize>,
}

impl ValueOps {
    fn producer(&self) -> Option<usize> {
        self.producers.first().copied()
    }

    /// The consumer with the earliest call.
    fn first_consumer(&self) -> Option<usize> {
        self.consumers.first().copied()
    }

    fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.producers.iter().chain(&self.consumers).copied()
    }
}

struct Indexed<'a> {
    h: &'a History,
    values: BTreeMap<u32, ValueOps>,
    /// Argumentless operations.
    empties: Vec<usize>,
}

impl<'a> Indexed<'a> {
    fn new(h: &'a History, producer: Method, consumer: Method) -> Self {
        let mut values: BTreeMap<u32, ValueOps> = BTreeMap::new();
        let mut empties = Vec::new();
        for (i, o) in h.ops().iter().enumerate() {
            match o.event.value {
                Value::Ignored => empties.push(i),
                Value::Data(v) => {
                    let e = values.entry(v).or_default();
                    if o.event.method == producer {
                        e.producers.push(i);
                    } else if o.event.method == consumer {
                        e.consumers.push(i);
                    }
                }
            }
        }
        for e in values.values_mut() {
            e.consumers.sort_by_key(|&i| h.ops()[i].call);
        }
        Indexed { h, values, empties }
    }

    fn before(&self, a: usize, b: usize) -> bool {
        self.h.before(a, b)
    }

    fn edge(&self, a: usize, b: usize) -> Edge {
        Edge {
            from_op: self.h.ops()[a].id.clone(),
            to_op: self.h.ops()[b].id.clone(),
        }
    }

    fn ops_of(&self, v: u32) -> &ValueOps {
        &self.values[&v]
    }

    /// Some operation of `a` happens before some operation of `b`.
    fn some_before(&self, a: u32, b: u32) -> Option<(usize, usize)> {
        let (va, vb) = (self.ops_of(a), self.ops_of(b));
        va.all()
            .flat_map(|x| vb.all().map(move |y| (x, y)))
            .find(|&(x, y)| self.before(x, y))
    }

    /// Some operation of value `a` happens before operation `op`.
    fn value_before_op(&self, a: u32, op: usize) -> Option<usize> {
        self.ops_of(a).all().find(|&x| self.before(x, op))
    }

    fn op_before_value(&self, op: usize, a: u32) -> Option<usize> {
        self.ops_of(a).all().find(|&y| self.before(op, y))
    }
}

/// Why a value cannot be the witness of a projection.
#[derive(Debug, Clone)]
struct Failure {
    reason: String,
    edges: Vec<(usize, usize)>,
    /// Other values involved (cover cycles).
    via: Vec<u32>,
}

impl Failure {
    fn plain(reason: impl Into<String>) -> Self {
        Failure {
            reason: reason.into(),
            edges: vec![],
            via: vec![],
        }
    }

    fn edge(reason: impl Into<String>, a: usize, b: usize) -> Self {
        Failure {
            reason: reason.into(),
            edges: vec![(a, b)],
            via: vec![],
        }
    }
}

/// A shortest cycle through a distinguished node `o` in a graph over values.
/// `to_o(d)`: edge d→o; `from_o(d)`: edge o→d; `step(a, b)`: edge a→b.
/// Returns the values on the cycle in order o→d_k→…→d_1→o, choosing the
/// lexicographically least among shortest cycles.
fn shortest_cycle_through(
    nodes: &[u32],
    to_o: impl Fn(u32) -> bool,
    from_o: impl Fn(u32) -> bool,
    step: impl Fn(u32, u32) -> bool,
) -> Option<Vec<u32>> {
    // distance from each node to o
    let n = nodes.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for (i, &d) in nodes.iter().enumerate() {
        if to_o(d) {
            dist[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if dist[i] == usize::MAX && step(nodes[i], nodes[j]) {
                dist[i] = dist[j] + 1;
                queue.push_back(i);
            }
        }
    }
    let start = (0..n)
        .filter(|&i| dist[i] != usize::MAX && from_o(nodes[i]))
        .min_by_key(|&i| (dist[i], nodes[i]))?;
    let mut cycle = vec![nodes[start]];
    let mut cur = start;
    while dist[cur] > 1 {
        let next = (0..n)
            .filter(|&i| dist[i] == dist[cur] - 1 && step(nodes[cur], nodes[i]))
            .min_by_key(|&i| nodes[i])
            .expect("distance labels are consistent");
        cycle.push(nodes[next]);
        cur = next;
    }
    Some(cycle)
}

/// Left-right constraint graph of one operation `o` that must sit at a point
/// where every produced value in front of it has been consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeftRightGraph {
    pub op: OpId,
    pub values: Vec<u32>,
    /// `(d, o)` edges: the producer of `d` happens before `o`.
    pub into_op: Vec<u32>,
    /// `(o, d)` edges: `o` happens before the consumer of `d`, or it has none.
    pub out_of_op: Vec<u32>,
    /// `(d1, d2)` edges: the producer of `d1` happens before the producer or
    /// consumer of `d2`.
    pub between: Vec<(u32, u32)>,
}

impl LeftRightGraph {
    /// Some partition puts every value consumed before `o` on its left.
    pub fn has_gap(&self) -> bool {
        self.cycle().is_none()
    }

    /// The lexicographically least shortest cycle through `o`.
    pub fn cycle(&self) -> Option<Vec<u32>> {
        let between: BTreeSet<(u32, u32)> = self.between.iter().copied().collect();
        shortest_cycle_through(
            &self.values,
            |d| self.into_op.contains(&d),
            |d| self.out_of_op.contains(&d),
            |a, b| between.contains(&(a, b)),
        )
    }
}

struct Cover<'i, 'a> {
    ix: &'i Indexed<'a>,
    o: usize,
    values: Vec<u32>,
}

impl Cover<'_, '_> {
    fn to_o(&self, d: u32) -> Option<(usize, usize)> {
        let p = self.ix.ops_of(d).producer()?;
        self.ix.before(p, self.o).then_some((p, self.o))
    }

    /// `Err(())` when the edge is due to a missing consumer.
    fn from_o(&self, d: u32) -> Option<Result<(usize, usize), ()>> {
        let ops = self.ix.ops_of(d);
        let p = ops.producer()?;
        match ops.first_consumer() {
            None => Some(Err(())),
            Some(c) if self.ix.before(self.o, c) => Some(Ok((self.o, c))),
            Some(_) if self.ix.before(self.o, p) => Some(Ok((self.o, p))),
            Some(_) => None,
        }
    }

    fn step(&self, a: u32, b: u32) -> Option<(usize, usize)> {
        let pa = self.ix.ops_of(a).producer()?;
        let ob = self.ix.ops_of(b);
        let pb = ob.producer()?;
        if let Some(cb) = ob.first_consumer() {
            if self.ix.before(pa, cb) {
                return Some((pa, cb));
            }
        }
        self.ix.before(pa, pb).then_some((pa, pb))
    }

    fn graph(&self) -> LeftRightGraph {
        let vals: Vec<u32> = self
            .values
            .iter()
            .copied()
            .filter(|&d| self.ix.ops_of(d).producer().is_some())
            .collect();
        LeftRightGraph {
            op: self.ix.h.ops()[self.o].id.clone(),
            into_op: vals.iter().copied().filter(|&d| self.to_o(d).is_some()).collect(),
            out_of_op: vals.iter().copied().filter(|&d| self.from_o(d).is_some()).collect(),
            between: vals
                .iter()
                .flat_map(|&a| vals.iter().map(move |&b| (a, b)))
                .filter(|&(a, b)| a != b && self.step(a, b).is_some())
                .collect(),
            values: vals,
        }
    }

    /// Cycle values and the happens-before edges along the cycle.
    fn cycle(&self) -> Option<(Vec<u32>, Vec<(usize, usize)>)> {
        let cyc = self.graph().cycle()?;
        let mut edges = Vec::new();
        if let Some(Ok(e)) = self.from_o(cyc[0]) {
            edges.push(e);
        }
        for w in cyc.windows(2) {
            edges.push(self.step(w[0], w[1]).expect("cycle edge"));
        }
        edges.push(self.to_o(*cyc.last().unwrap()).expect("cycle edge"));
        Some((cyc, edges))
    }
}

/// The rule-specific conditions for a value to witness `h|D`.
type WitnessFailure<'i> = Box<dyn Fn(u32, &[u32]) -> Option<Failure> + 'i>;

struct WitnessRule<'i> {
    name: &'static str,
    /// Values allowed in projections whose last rule is this one.
    universe: Vec<u32>,
    /// `D` has `last(h|D)` equal to this rule (given `D ⊆ universe`).
    eligible: Box<dyn Fn(&[u32]) -> bool + 'i>,
    fails: WitnessFailure<'i>,
}

impl WitnessRule<'_> {
    fn violating(&self, d: &[u32]) -> Option<Vec<(u32, Failure)>> {
        if !(self.eligible)(d) {
            return None;
        }
        d.iter()
            .map(|&x| (self.fails)(x, d).map(|f| (x, f)))
            .collect()
    }

    /// A violating set of at most two values.
    fn search_small(&self) -> Option<(Vec<u32>, Vec<(u32, Failure)>)> {
        for &a in &self.universe {
            if let Some(f) = self.violating(&[a]) {
                return Some((vec![a], f));
            }
        }
        for (i, &a) in self.universe.iter().enumerate() {
            for &b in &self.universe[i + 1..] {
                if let Some(f) = self.violating(&[a, b]) {
                    return Some((vec![a, b], f));
                }
            }
        }
        None
    }

    /// Singletons, then pairs, then the greatest violating set (shrunk greedily).
    fn search(&self) -> Option<(Vec<u32>, Vec<(u32, Failure)>)> {
        if let Some(found) = self.search_small() {
            return Some(found);
        }
        let mut d = self.universe.clone();
        loop {
            let keep: Vec<u32> = d
                .iter()
                .copied()
                .filter(|&x| (self.fails)(x, &d).is_some())
                .collect();
            if keep.len() == d.len() {
                break;
            }
            d = keep;
        }
        self.violating(&d)?;
        if d.len() <= 64 {
            let mut i = 0;
            while i < d.len() {
                let mut smaller = d.clone();
                smaller.remove(i);
                if self.violating(&smaller).is_some() {
                    d = smaller;
                } else {
                    i += 1;
                }
            }
        }
        let f = self.violating(&d).expect("violating set");
        Some((d, f))
    }

    fn check(&self, ix: &Indexed) -> Option<Violation> {
        let (d, failures) = self.search()?;
        let mut witnesses = d.clone();
        let mut evidence = Vec::new();
        let mut reasons = Vec::new();
        for (x, f) in &failures {
            for &(a, b) in &f.edges {
                let e = ix.edge(a, b);
                if !evidence.contains(&e) {
                    evidence.push(e);
                }
            }
            for v in &f.via {
                if !witnesses.contains(v) {
                    witnesses.push(*v);
                }
            }
            reasons.push(format!("{x}: {}", f.reason));
        }
        Some(Violation {
            rule: self.name.to_string(),
            witnesses,
            op: None,
            evidence,
            reason: reasons.join("; "),
        })
    }
}

fn validate(h: &History, spec: &Specification) -> Result<(), MonitorError> {
    for o in h.ops() {
        if !spec.methods.contains(&o.event.method) {
            return Err(MonitorError::ForeignMethod(o.event.method, spec.name.clone()));
        }
        if o.event.method.is_argumentless() != (o.event.value == Value::Ignored) {
            return Err(MonitorError::BadValue(o.id.clone()));
        }
    }
    if !h.is_differentiated(&spec.input_methods) {
        return Err(MonitorError::NotDifferentiated);
    }
    Ok(())
}

fn kind_of(spec: &Specification) -> Result<SpecKind, MonitorError> {
    spec.name
        .parse()
        .map_err(|_| MonitorError::UnknownRule(spec.name.clone()))
}

fn method_pair(kind: SpecKind) -> (Method, Method) {
    match kind {
        SpecKind::Queue => (Method::Enq, Method::Deq),
        SpecKind::Stack => (Method::Push, Method::Pop),
        SpecKind::Register => (Method::Write, Method::Read),
        SpecKind::Mutex => (Method::Lock, Method::Unlock),
    }
}

/// Conditions shared by rules of the form `P(x)·…·C(x)·…` with a single consumer.
fn single_pair_failure(ix: &Indexed, x: u32, producer: &str, consumer: &str) -> Option<Failure> {
    let ops = ix.ops_of(x);
    let Some(p) = ops.producer() else {
        return Some(Failure::plain(format!("{consumer} without {producer}")));
    };
    match ops.consumers.as_slice() {
        [] => Some(Failure::plain(format!("{producer} without {consumer}"))),
        [c] if ix.before(*c, p) => {
            Some(Failure::edge(format!("{consumer} returns before {producer} is called"), *c, p))
        }
        [_] => None,
        [_, _, ..] => Some(Failure::plain(format!("{consumer} returns the same value twice"))),
    }
}

/// Some operation of another value in `d` happens before `op`.
fn blocked_by(ix: &Indexed, x: u32, d: &[u32], op: usize) -> Option<(u32, usize)> {
    d.iter()
        .filter(|&&y| y != x)
        .find_map(|&y| ix.value_before_op(y, op).map(|a| (y, a)))
}

fn queue_enqdeq_rule<'i>(ix: &'i Indexed<'_>) -> WitnessRule<'i> {
    WitnessRule {
        name: R_ENQDEQ,
        universe: ix.values.keys().copied().collect(),
        eligible: Box::new(move |d| d.iter().any(|v| !ix.ops_of(*v).consumers.is_empty())),
        fails: Box::new(move |x, d| {
            if let Some(f) = single_pair_failure(ix, x, "Enq", "Deq") {
                return Some(f);
            }
            let ops = ix.ops_of(x);
            let (p, c) = (ops.producer().unwrap(), ops.consumers[0]);
            if let Some((y, a)) = blocked_by(ix, x, d, p) {
                return Some(Failure::edge(format!("an operation on {y} precedes Enq({x})"), a, p));
            }
            for &y in d.iter().filter(|&&y| y != x) {
                if let Some(&cy) = ix.ops_of(y).consumers.iter().find(|&&cy| ix.before(cy, c)) {
                    return Some(Failure::edge(format!("Deq({y}) precedes Deq({x})"), cy, c));
                }
            }
            None
        }),
    }
}

fn stack_pushpop_rule<'i>(ix: &'i Indexed<'_>) -> WitnessRule<'i> {
    let universe: Vec<u32> = ix
        .values
        .iter()
        .filter(|(_, o)| o.producers.is_empty() || !o.consumers.is_empty())
        .map(|(v, _)| *v)
        .collect();
    WitnessRule {
        name: R_PUSHPOP,
        universe,
        eligible: Box::new(move |d| d.iter().any(|v| !ix.ops_of(*v).consumers.is_empty())),
        fails: Box::new(move |x, d| {
            if let Some(f) = single_pair_failure(ix, x, "Push", "Pop") {
                return Some(f);
            }
            let ops = ix.ops_of(x);
            let (p, c) = (ops.producer().unwrap(), ops.consumers[0]);
            if let Some((y, a)) = blocked_by(ix, x, d, p) {
                return Some(Failure::edge(format!("an operation on {y} precedes Push({x})"), a, p));
            }
            let others: Vec<u32> = d.iter().copied().filter(|&y| y != x).collect();
            let cyc = shortest_cycle_through(
                &others,
                |y| ix.value_before_op(y, c).is_some(),
                |y| ix.op_before_value(c, y).is_some(),
                |a, b| ix.some_before(a, b).is_some(),
            )?;
            let mut edges = vec![(c, ix.op_before_value(c, cyc[0]).unwrap())];
            for w in cyc.windows(2) {
                edges.push(ix.some_before(w[0], w[1]).unwrap());
            }
            edges.push((ix.value_before_op(*cyc.last().unwrap(), c).unwrap(), c));
            Some(Failure {
                reason: format!("Pop({x}) is covered by values {cyc:?}"),
                edges,
                via: cyc,
            })
        }),
    }
}

fn register_rule<'i>(ix: &'i Indexed<'_>) -> WitnessRule<'i> {
    WitnessRule {
        name: R_WR,
        universe: ix.values.keys().copied().collect(),
        eligible: Box::new(|d| !d.is_empty()),
        fails: Box::new(move |x, d| {
            let ops = ix.ops_of(x);
            let Some(w) = ops.producer() else {
                return Some(Failure::plain("Read without Write"));
            };
            if let Some(&r) = ops.consumers.iter().find(|&&r| ix.before(r, w)) {
                return Some(Failure::edge("Read returns before Write is called", r, w));
            }
            for &op in std::iter::once(&w).chain(&ops.consumers) {
                if let Some((y, a)) = blocked_by(ix, x, d, op) {
                    let what = if op == w { "Write" } else { "Read" };
                    return Some(Failure::edge(
                        format!("an operation on {y} precedes {what}({x})"),
                        a,
                        op,
                    ));
                }
            }
            None
        }),
    }
}

fn mutex_lu_rule<'i>(ix: &'i Indexed<'_>) -> WitnessRule<'i> {
    WitnessRule {
        name: R_LU,
        universe: ix.values.keys().copied().collect(),
        eligible: Box::new(move |d| d.iter().any(|v| !ix.ops_of(*v).consumers.is_empty())),
        fails: Box::new(move |x, d| {
            if let Some(f) = single_pair_failure(ix, x, "Lock", "Unlock") {
                return Some(f);
            }
            let ops = ix.ops_of(x);
            let (p, c) = (ops.producer().unwrap(), ops.consumers[0]);
            for op in [p, c] {
                if let Some((y, a)) = blocked_by(ix, x, d, op) {
                    let what = if op == p { "Lock" } else { "Unlock" };
                    return Some(Failure::edge(
                        format!("an operation on {y} precedes {what}({x})"),
                        a,
                        op,
                    ));
                }
            }
            None
        }),
    }
}

/// Two values that are locked and never unlocked.
fn mutex_lock_check(ix: &Indexed) -> Option<Violation> {
    let held: Vec<u32> = ix
        .values
        .iter()
        .filter(|(_, o)| !o.producers.is_empty() && o.consumers.is_empty())
        .map(|(v, _)| *v)
        .take(2)
        .collect();
    (held.len() == 2).then(|| Violation {
        rule: R_LOCK.to_string(),
        witnesses: held,
        op: None,
        evidence: vec![],
        reason: "two locks are held without an unlock".into(),
    })
}

fn cover_violation(ix: &Indexed, rule: &str, o: usize, values: Vec<u32>) -> Option<Violation> {
    let cover = Cover { ix, o, values };
    let (cyc, edges) = cover.cycle()?;
    let op = ix.h.ops()[o].id.clone();
    Some(Violation {
        rule: rule.to_string(),
        reason: format!(
            "{} ({op}) is covered by values {cyc:?}",
            ix.h.ops()[o].event.method
        ),
        witnesses: cyc,
        op: Some(op),
        evidence: edges.into_iter().map(|(a, b)| ix.edge(a, b)).collect(),
    })
}

/// Empty-returning operations covered by the values around them.
fn empty_check(ix: &Indexed, rule: &str) -> Option<Violation> {
    let values: Vec<u32> = ix.values.keys().copied().collect();
    ix.empties
        .iter()
        .find_map(|&o| cover_violation(ix, rule, o, values.clone()))
}

/// Unmatched pushes that cannot be the last push of any projection.
fn stack_push_check_ix(ix: &Indexed) -> Option<Violation> {
    let unmatched = |v: &u32| {
        let o = ix.ops_of(*v);
        !o.producers.is_empty() && o.consumers.is_empty()
    };
    let mut d: Vec<u32> = ix.values.keys().copied().collect();
    let covered = |x: u32, d: &[u32]| {
        let o = ix.ops_of(x).producer().unwrap();
        let others = d.iter().copied().filter(|&y| y != x).collect();
        Cover { ix, o, values: others }.cycle().is_some()
    };
    loop {
        let keep: Vec<u32> = d
            .iter()
            .copied()
            .filter(|x| !unmatched(x) || covered(*x, &d))
            .collect();
        if keep.len() == d.len() {
            break;
        }
        d = keep;
    }
    let x = d.iter().copied().find(|x| unmatched(x))?;
    // shrink to a small set keeping every unmatched value covered
    if d.len() <= 64 {
        let mut i = 0;
        while i < d.len() {
            let mut smaller = d.clone();
            smaller.remove(i);
            let still = smaller.iter().any(&unmatched)
                && smaller
                    .iter()
                    .filter(|y| unmatched(y))
                    .all(|&y| covered(y, &smaller));
            if still {
                d = smaller;
            } else {
                i += 1;
            }
        }
    }
    let x = d.iter().copied().find(|x| unmatched(x)).unwrap_or(x);
    let o = ix.ops_of(x).producer().unwrap();
    let others: Vec<u32> = d.iter().copied().filter(|&y| y != x).collect();
    let mut v = cover_violation(ix, R_PUSH, o, others)?;
    v.witnesses.insert(0, x);
    v.reason = format!("unmatched {}", v.reason);
    Some(v)
}

/// Violation of one rule of the specification, if some projection whose last
/// rule is `rule` is not linearizable with respect to its matching set.
pub fn check_rule(
    h: &History,
    spec: &Specification,
    rule: &str,
) -> Result<Option<Violation>, MonitorError> {
    validate(h, spec)?;
    let kind = kind_of(spec)?;
    let (p, c) = method_pair(kind);
    let ix = Indexed::new(h, p, c);
    Ok(match (kind, rule) {
        (_, "R_0") | (SpecKind::Queue, "R_Enq") => None,
        (SpecKind::Queue, R_ENQDEQ) => queue_enqdeq_rule(&ix).check(&ix),
        (SpecKind::Queue, R_DEQEMPTY) => empty_check(&ix, R_DEQEMPTY),
        (SpecKind::Stack, R_PUSHPOP) => stack_pushpop_rule(&ix).check(&ix),
        (SpecKind::Stack, R_PUSH) => stack_push_check_ix(&ix),
        (SpecKind::Stack, R_POPEMPTY) => empty_check(&ix, R_POPEMPTY),
        (SpecKind::Register, R_WR) => register_rule(&ix).check(&ix),
        (SpecKind::Mutex, R_LOCK) => mutex_lock_check(&ix),
        (SpecKind::Mutex, R_LU) => mutex_lu_rule(&ix).check(&ix),
        _ => return Err(MonitorError::UnknownRule(rule.to_string())),
    })
}

/// Runs every rule check in rule order; the first violation is reported.
pub fn check(h: &History, spec: &Specification) -> Result<Verdict, MonitorError> {
    for r in &spec.rules {
        if let Some(v) = check_rule(h, spec, &r.name)? {
            return Ok(Verdict::from(Some(v)));
        }
    }
    Ok(Verdict::from(None))
}

/// Every violation, one per rule.
pub fn check_all(h: &History, spec: &Specification) -> Result<Vec<Violation>, MonitorError> {
    let mut out = Vec::new();
    for r in &spec.rules {
        out.extend(check_rule(h, spec, &r.name)?);
    }
    Ok(out)
}

/// `h|{d1,d2}` is linearizable with respect to `M(R_EnqDeq)` with witness `d1`.
pub fn w_holds(h: &History, d1: u32, d2: u32) -> Result<bool, MonitorError> {
    let ix = Indexed::new(h, Method::Enq, Method::Deq);
    for d in [d1, d2] {
        if !ix.values.contains_key(&d) {
            return Err(MonitorError::ValueAbsent(d));
        }
    }
    let d: Vec<u32> = if d1 == d2 { vec![d1] } else { vec![d1, d2] };
    let rule = queue_enqdeq_rule(&ix);
    let holds = (rule.fails)(d1, &d).is_none();
    Ok(holds)
}

/// Values of the first projection `h|{a}` or `h|{a,b}` that is not
/// linearizable with respect to `M(R_EnqDeq)`; only one- and two-value
/// projections are inspected.
pub fn queue_pairwise_check(h: &History) -> Result<Option<Vec<u32>>, MonitorError> {
    validate(h, &crate::spec::builtin(SpecKind::Queue))?;
    let ix = Indexed::new(h, Method::Enq, Method::Deq);
    let rule = queue_enqdeq_rule(&ix);
    let found = rule.search_small().map(|(d, _)| d);
    Ok(found)
}

fn empty_index<'a>(h: &'a History, o: &OpId) -> Result<(Indexed<'a>, usize), MonitorError> {
    let i = h.index_of(o).ok_or_else(|| MonitorError::OpAbsent(o.clone()))?;
    let (p, c) = match h.ops()[i].event.method {
        Method::PopEmpty | Method::Push | Method::Pop => (Method::Push, Method::Pop),
        _ => (Method::Enq, Method::Deq),
    };
    Ok((Indexed::new(h, p, c), i))
}

/// The left-right constraints of `o` over every data value of `h`.
pub fn left_right_graph(h: &History, o: &OpId) -> Result<LeftRightGraph, MonitorError> {
    let (ix, i) = empty_index(h, o)?;
    let values = ix.values.keys().copied().collect();
    Ok(Cover { ix: &ix, o: i, values }.graph())
}

/// No cycle of the left-right graph goes through `o`.
pub fn has_gap(h: &History, o: &OpId) -> Result<bool, MonitorError> {
    Ok(left_right_graph(h, o)?.has_gap())
}

pub fn queue_enqdeq_check(h: &History) -> Result<Verdict, MonitorError> {
    single(h, SpecKind::Queue, R_ENQDEQ)
}

pub fn queue_deqempty_check(h: &History) -> Result<Verdict, MonitorError> {
    single(h, SpecKind::Queue, R_DEQEMPTY)
}

pub fn stack_pushpop_check(h: &History) -> Result<Verdict, MonitorError> {
    single(h, SpecKind::Stack, R_PUSHPOP)
}

pub fn stack_push_check(h: &History) -> Result<Verdict, MonitorError> {
    single(h, SpecKind::Stack, R_PUSH)
}

pub fn stack_popempty_check(h: &History) -> Result<Verdict, MonitorError> {
    single(h, SpecKind::Stack, R_POPEMPTY)
}

pub fn register_check(h: &History) -> Result<Verdict, MonitorError> {
    single(h, SpecKind::Register, R_WR)
}

pub fn mutex_check(h: &History) -> Result<Verdict, MonitorError> {
    let spec = crate::spec::builtin(SpecKind::Mutex);
    check(h, &spec)
}

fn single(h: &History, kind: SpecKind, rule: &str) -> Result<Verdict, MonitorError> {
    let spec = crate::spec::builtin(kind);
    Ok(Verdict::from(check_rule(h, &spec, rule)?))
}

/// Every evidence edge is a happens-before fact of `h`.
pub fn evidence_holds(h: &History, v: &Violation) -> bool {
    v.evidence.iter().all(|e| {
        match (h.index_of(&e.from_op), h.index_of(&e.to_op)) {
            (Some(a), Some(b)) => h.before(a, b),
            _ => false,
        }
    })
}
