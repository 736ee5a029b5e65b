//! Executions, histories, projections and renamings.
//!
//! A history is stored as a list of operations, each carrying the index of its
//! call and return action in the originating execution. Happens-before is the
//! comparison `a.ret < b.call`, so every history built here is an interval
//! order by construction.
//!
//! Argumentless methods (`DeqEmpty`, `PopEmpty`) carry [`Value::Ignored`].
//! They have no data value, so for projection purposes each such event or
//! operation is its own [`Key::Solo`]: projections can keep or drop every
//! empty-returning operation individually.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A method of one of the built-in data structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Enq,
    Deq,
    DeqEmpty,
    Push,
    Pop,
    PopEmpty,
    Write,
    Read,
    Lock,
    Unlock,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Enq,
        Method::Deq,
        Method::DeqEmpty,
        Method::Push,
        Method::Pop,
        Method::PopEmpty,
        Method::Write,
        Method::Read,
        Method::Lock,
        Method::Unlock,
    ];

    /// Methods whose argument is not used.
    pub fn is_argumentless(self) -> bool {
        matches!(self, Method::DeqEmpty | Method::PopEmpty)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Enq => "Enq",
            Method::Deq => "Deq",
            Method::DeqEmpty => "DeqEmpty",
            Method::Push => "Push",
            Method::Pop => "Pop",
            Method::PopEmpty => "PopEmpty",
            Method::Write => "Write",
            Method::Read => "Read",
            Method::Lock => "Lock",
            Method::Unlock => "Unlock",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown method `{0}`")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// A data value, or the distinguished value of argumentless methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Data(u32),
    Ignored,
}

impl Value {
    pub fn data(self) -> Option<u32> {
        match self {
            Value::Data(v) => Some(v),
            Value::Ignored => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Data(v) => write!(f, "{v}"),
            Value::Ignored => f.write_str("_"),
        }
    }
}

/// `m(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodEvent {
    pub method: Method,
    pub value: Value,
}

impl MethodEvent {
    pub fn new(method: Method, value: u32) -> Self {
        MethodEvent {
            method,
            value: Value::Data(value),
        }
    }

    pub fn empty(method: Method) -> Self {
        MethodEvent {
            method,
            value: Value::Ignored,
        }
    }
}

impl fmt::Display for MethodEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            Value::Data(v) => write!(f, "{}({v})", self.method),
            Value::Ignored => write!(f, "{}", self.method),
        }
    }
}

/// Projection key: a data value, or one individual argumentless event
/// (indexed by its position in the owning container).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    Data(u32),
    Solo(usize),
}

pub type KeySet = BTreeSet<Key>;

/// A renaming of data values. Values absent from the map are left unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Renaming {
    map: BTreeMap<u32, u32>,
}

impl Renaming {
    pub fn identity() -> Self {
        Renaming::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        Renaming {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, from: u32, to: u32) {
        self.map.insert(from, to);
    }

    pub fn apply(&self, v: u32) -> u32 {
        self.map.get(&v).copied().unwrap_or(v)
    }

    pub fn apply_value(&self, v: Value) -> Value {
        match v {
            Value::Data(d) => Value::Data(self.apply(d)),
            Value::Ignored => Value::Ignored,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.map.iter().map(|(a, b)| (*a, *b))
    }
}

/// A sequence of method events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SeqExec {
    pub events: Vec<MethodEvent>,
}

impl SeqExec {
    pub fn new(events: Vec<MethodEvent>) -> Self {
        SeqExec { events }
    }

    pub fn empty() -> Self {
        SeqExec::default()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn concat(&self, other: &SeqExec) -> SeqExec {
        let mut events = self.events.clone();
        events.extend_from_slice(&other.events);
        SeqExec { events }
    }

    pub fn key_of(&self, index: usize) -> Key {
        match self.events[index].value {
            Value::Data(v) => Key::Data(v),
            Value::Ignored => Key::Solo(index),
        }
    }

    /// Data values occurring in the sequence.
    pub fn dom(&self) -> BTreeSet<u32> {
        self.events.iter().filter_map(|e| e.value.data()).collect()
    }

    pub fn keys(&self) -> KeySet {
        (0..self.events.len()).map(|i| self.key_of(i)).collect()
    }

    /// Keeps events whose data value is in `values`; argumentless events are kept.
    pub fn project(&self, values: &BTreeSet<u32>) -> SeqExec {
        SeqExec {
            events: self
                .events
                .iter()
                .filter(|e| e.value.data().is_none_or(|v| values.contains(&v)))
                .copied()
                .collect(),
        }
    }

    pub fn project_keys(&self, keys: &KeySet) -> SeqExec {
        SeqExec {
            events: (0..self.events.len())
                .filter(|&i| keys.contains(&self.key_of(i)))
                .map(|i| self.events[i])
                .collect(),
        }
    }

    /// `u \ x`.
    pub fn remove_key(&self, key: Key) -> SeqExec {
        SeqExec {
            events: (0..self.events.len())
                .filter(|&i| self.key_of(i) != key)
                .map(|i| self.events[i])
                .collect(),
        }
    }

    pub fn rename(&self, r: &Renaming) -> SeqExec {
        SeqExec {
            events: self
                .events
                .iter()
                .map(|e| MethodEvent {
                    method: e.method,
                    value: r.apply_value(e.value),
                })
                .collect(),
        }
    }

    /// Every input method/value pair occurs at most once.
    pub fn is_differentiated(&self, input_methods: &[Method]) -> bool {
        is_differentiated_events(self.events.iter(), input_methods)
    }
}

impl fmt::Display for SeqExec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.events.is_empty() {
            return f.write_str("ε");
        }
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str("·")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

fn is_differentiated_events<'a>(
    events: impl Iterator<Item = &'a MethodEvent>,
    input_methods: &[Method],
) -> bool {
    let mut seen = HashSet::new();
    for e in events {
        if input_methods.contains(&e.method) && !seen.insert(*e) {
            return false;
        }
    }
    true
}

/// Opaque operation identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpId(pub String);

impl OpId {
    pub fn new(s: impl Into<String>) -> Self {
        OpId(s.into())
    }

    /// The `o<n>` identifiers emitted by generators.
    pub fn seq(n: usize) -> Self {
        OpId(format!("o{n}"))
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Call,
    Ret,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub method: Method,
    pub value: Value,
    pub op: OpId,
}

impl Action {
    pub fn call(method: Method, value: Value, op: impl Into<String>) -> Self {
        Action {
            kind: ActionKind::Call,
            method,
            value,
            op: OpId(op.into()),
        }
    }

    pub fn ret(method: Method, value: Value, op: impl Into<String>) -> Self {
        Action {
            kind: ActionKind::Ret,
            method,
            value,
            op: OpId(op.into()),
        }
    }

    pub fn event(&self) -> MethodEvent {
        MethodEvent {
            method: self.method,
            value: self.value,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ActionKind::Call => "call",
            ActionKind::Ret => "ret",
        };
        write!(f, "{kind} {}({}, {})", self.method, self.value, self.op)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("return of {op} at position {index} has no matching earlier call")]
    ReturnWithoutCall { op: OpId, index: usize },
    #[error("operation {op} is used twice as a {kind:?} (position {index})")]
    DuplicateOp {
        op: OpId,
        kind: ActionKind,
        index: usize,
    },
    #[error("execution has pending operations")]
    IncompleteExecution,
}

/// A well-formed sequence of call and return actions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Execution {
    actions: Vec<Action>,
}

impl Execution {
    pub fn empty() -> Self {
        Execution::default()
    }

    /// Builds an execution, checking that every return follows a call with
    /// the same method, value and operation, and that no operation is reused.
    pub fn validate(raw: Vec<Action>) -> Result<Execution, ModelError> {
        let mut calls: HashMap<&OpId, &Action> = HashMap::new();
        let mut returned: HashSet<&OpId> = HashSet::new();
        for (index, a) in raw.iter().enumerate() {
            match a.kind {
                ActionKind::Call => {
                    if calls.insert(&a.op, a).is_some() {
                        return Err(ModelError::DuplicateOp {
                            op: a.op.clone(),
                            kind: ActionKind::Call,
                            index,
                        });
                    }
                }
                ActionKind::Ret => {
                    match calls.get(&a.op) {
                        Some(c) if c.method == a.method && c.value == a.value => {}
                        _ => {
                            return Err(ModelError::ReturnWithoutCall {
                                op: a.op.clone(),
                                index,
                            })
                        }
                    }
                    if !returned.insert(&a.op) {
                        return Err(ModelError::DuplicateOp {
                            op: a.op.clone(),
                            kind: ActionKind::Ret,
                            index,
                        });
                    }
                }
            }
        }
        Ok(Execution { actions: raw })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.actions
    }

    fn pending(&self) -> Vec<&Action> {
        let returned: HashSet<&OpId> = self
            .actions
            .iter()
            .filter(|a| a.kind == ActionKind::Ret)
            .map(|a| &a.op)
            .collect();
        self.actions
            .iter()
            .filter(|a| a.kind == ActionKind::Call && !returned.contains(&a.op))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.pending().is_empty()
    }

    /// Appends returns for pending operations, in call order.
    pub fn complete(&self) -> Execution {
        let mut actions = self.actions.clone();
        actions.extend(self.pending().into_iter().map(|c| Action {
            kind: ActionKind::Ret,
            ..c.clone()
        }));
        Execution { actions }
    }

    /// Data values in the execution.
    pub fn dom(&self) -> BTreeSet<u32> {
        self.actions.iter().filter_map(|a| a.value.data()).collect()
    }

    /// Erases actions whose data value is outside `values`; argumentless
    /// operations are kept.
    pub fn project(&self, values: &BTreeSet<u32>) -> Execution {
        Execution {
            actions: self
                .actions
                .iter()
                .filter(|a| a.value.data().is_none_or(|v| values.contains(&v)))
                .cloned()
                .collect(),
        }
    }

    pub fn rename(&self, r: &Renaming) -> Execution {
        Execution {
            actions: self
                .actions
                .iter()
                .map(|a| Action {
                    value: r.apply_value(a.value),
                    ..a.clone()
                })
                .collect(),
        }
    }

    /// At most one call per input method/value pair.
    pub fn is_differentiated(&self, input_methods: &[Method]) -> bool {
        let events: Vec<MethodEvent> = self
            .actions
            .iter()
            .filter(|a| a.kind == ActionKind::Call)
            .map(Action::event)
            .collect();
        is_differentiated_events(events.iter(), input_methods)
    }

    /// The history of a complete execution.
    pub fn history(&self) -> Result<History, ModelError> {
        let mut ret_at: HashMap<&OpId, usize> = HashMap::new();
        for (i, a) in self.actions.iter().enumerate() {
            if a.kind == ActionKind::Ret {
                ret_at.insert(&a.op, i);
            }
        }
        let mut ops = Vec::new();
        for (i, a) in self.actions.iter().enumerate() {
            if a.kind == ActionKind::Call {
                let ret = *ret_at.get(&a.op).ok_or(ModelError::IncompleteExecution)?;
                ops.push(Operation {
                    id: a.op.clone(),
                    event: a.event(),
                    call: i,
                    ret,
                });
            }
        }
        Ok(History { ops })
    }
}

impl fmt::Display for Execution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(" · ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// One operation of a history with its call/return positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Operation {
    pub id: OpId,
    pub event: MethodEvent,
    pub call: usize,
    pub ret: usize,
}

impl Operation {
    pub fn method(&self) -> Method {
        self.event.method
    }

    pub fn value(&self) -> Value {
        self.event.value
    }
}

/// A labeled interval order. Operations are kept sorted by call position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    ops: Vec<Operation>,
}

impl History {
    pub fn empty() -> Self {
        History::default()
    }

    /// Builds a history from explicit intervals. Positions must be distinct
    /// and `call < ret` for each operation.
    pub fn from_intervals(
        items: impl IntoIterator<Item = (OpId, MethodEvent, usize, usize)>,
    ) -> History {
        let mut ops: Vec<Operation> = items
            .into_iter()
            .map(|(id, event, call, ret)| {
                assert!(call < ret, "operation {id} has call >= ret");
                Operation {
                    id,
                    event,
                    call,
                    ret,
                }
            })
            .collect();
        ops.sort_by_key(|o| o.call);
        History { ops }
    }

    /// A sequential history: events in order, each op returns before the next call.
    pub fn sequential(seq: &SeqExec) -> History {
        History::from_intervals(
            seq.events
                .iter()
                .enumerate()
                .map(|(i, e)| (OpId::seq(i + 1), *e, 2 * i, 2 * i + 1)),
        )
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `ops[a] < ops[b]` in happens-before.
    pub fn before(&self, a: usize, b: usize) -> bool {
        self.ops[a].ret < self.ops[b].call
    }

    pub fn index_of(&self, id: &OpId) -> Option<usize> {
        self.ops.iter().position(|o| &o.id == id)
    }

    pub fn key_of(&self, index: usize) -> Key {
        match self.ops[index].event.value {
            Value::Data(v) => Key::Data(v),
            Value::Ignored => Key::Solo(index),
        }
    }

    pub fn dom(&self) -> BTreeSet<u32> {
        self.ops.iter().filter_map(|o| o.event.value.data()).collect()
    }

    pub fn keys(&self) -> KeySet {
        (0..self.ops.len()).map(|i| self.key_of(i)).collect()
    }

    pub fn events(&self) -> impl Iterator<Item = &MethodEvent> {
        self.ops.iter().map(|o| &o.event)
    }

    pub fn project(&self, values: &BTreeSet<u32>) -> History {
        History {
            ops: self
                .ops
                .iter()
                .filter(|o| o.event.value.data().is_none_or(|v| values.contains(&v)))
                .cloned()
                .collect(),
        }
    }

    pub fn project_keys(&self, keys: &KeySet) -> History {
        History {
            ops: (0..self.ops.len())
                .filter(|&i| keys.contains(&self.key_of(i)))
                .map(|i| self.ops[i].clone())
                .collect(),
        }
    }

    pub fn remove_key(&self, key: Key) -> History {
        History {
            ops: (0..self.ops.len())
                .filter(|&i| self.key_of(i) != key)
                .map(|i| self.ops[i].clone())
                .collect(),
        }
    }

    /// Keeps the operations whose index satisfies `keep`.
    pub fn filter_ops(&self, mut keep: impl FnMut(usize, &Operation) -> bool) -> History {
        History {
            ops: self
                .ops
                .iter()
                .enumerate()
                .filter(|(i, o)| keep(*i, o))
                .map(|(_, o)| o.clone())
                .collect(),
        }
    }

    pub fn rename(&self, r: &Renaming) -> History {
        History {
            ops: self
                .ops
                .iter()
                .map(|o| Operation {
                    event: MethodEvent {
                        method: o.event.method,
                        value: r.apply_value(o.event.value),
                    },
                    ..o.clone()
                })
                .collect(),
        }
    }

    pub fn is_differentiated(&self, input_methods: &[Method]) -> bool {
        is_differentiated_events(self.events(), input_methods)
    }

    /// Rebuilds a complete execution whose history is `self`.
    pub fn to_execution(&self) -> Execution {
        let mut slots: Vec<(usize, Action)> = Vec::with_capacity(self.ops.len() * 2);
        for o in &self.ops {
            slots.push((
                o.call,
                Action {
                    kind: ActionKind::Call,
                    method: o.event.method,
                    value: o.event.value,
                    op: o.id.clone(),
                },
            ));
            slots.push((
                o.ret,
                Action {
                    kind: ActionKind::Ret,
                    method: o.event.method,
                    value: o.event.value,
                    op: o.id.clone(),
                },
            ));
        }
        slots.sort_by_key(|(p, _)| *p);
        Execution {
            actions: slots.into_iter().map(|(_, a)| a).collect(),
        }
    }

    /// Checks irreflexivity, transitivity and 2+2-freeness of happens-before.
    pub fn is_interval_order(&self) -> bool {
        is_interval_order_by(self.ops.len(), |a, b| self.before(a, b))
    }
}

/// 2+2-freeness check over an arbitrary relation on `0..n`.
pub fn is_interval_order_by(n: usize, before: impl Fn(usize, usize) -> bool) -> bool {
    for a in 0..n {
        if before(a, a) {
            return false;
        }
        for b in 0..n {
            if !before(a, b) {
                continue;
            }
            for c in 0..n {
                if before(b, c) && !before(a, c) {
                    return false;
                }
            }
        }
    }
    for o1 in 0..n {
        for o2 in 0..n {
            if !before(o1, o2) {
                continue;
            }
            for o3 in 0..n {
                for o4 in 0..n {
                    let distinct = o1 != o3 && o1 != o4 && o2 != o3 && o2 != o4;
                    if distinct && before(o3, o4) && !before(o1, o4) && !before(o3, o2) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// All projections `h|K` for key sets `K ⊆ keys(h)` with `|K| <= max_keys`,
/// smallest first.
pub fn value_projections(h: &History, max_keys: usize) -> impl Iterator<Item = History> + '_ {
    key_subsets(&h.keys(), max_keys)
        .into_iter()
        .map(move |ks| h.project_keys(&ks))
}

/// Subsets of `keys` of size at most `max`, by increasing size then lexicographically.
pub fn key_subsets(keys: &KeySet, max: usize) -> Vec<KeySet> {
    fn choose(keys: &[Key], size: usize, from: usize, cur: &mut Vec<Key>, out: &mut Vec<KeySet>) {
        if cur.len() == size {
            out.push(cur.iter().copied().collect());
            return;
        }
        for i in from..keys.len() {
            if keys.len() - i < size - cur.len() {
                break;
            }
            cur.push(keys[i]);
            choose(keys, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let keys: Vec<Key> = keys.iter().copied().collect();
    let mut out = Vec::new();
    for size in 0..=max.min(keys.len()) {
        choose(&keys, size, 0, &mut Vec::new(), &mut out);
    }
    out
}
