//! Violation automata over call/return actions with data values 1, 2 and 3.
//!
//! Each rule automaton is the union of one or more branches. A branch is a
//! small deterministic machine given by a step function; it is compiled into
//! an explicit transition table by exploring its reachable states over the
//! specification's alphabet. Argumentless operations read as value 2 when
//! they are the operation under scrutiny and are otherwise ignored.
//!
//! Branch catalogue (value 1 = covering or partner values, 2 = witness):
//!
//! | rule | branch | accepts when |
//! |------|--------|--------------|
//! | R_EnqDeq | unmatched | a `Deq(1)` returns before any `Enq(1)` is called |
//! | R_EnqDeq | duplicate | at least two `Deq(1)` calls and at most one `Enq(1)` |
//! | R_EnqDeq | fifo | one `Enq(1)` returns before the one `Enq(2)` is called, a `Deq(2)` exists and returns before any `Deq(1)` is called |
//! | R_DeqEmpty | cover | returned `Enq(1)` minus called `Deq(1)` stays positive over the whole span of `DeqEmpty(2)` |
//! | R_PushPop | unmatched, duplicate | as for R_EnqDeq with `Push`/`Pop` |
//! | R_PushPop | cover | the one `Push(2)` returns before every `Push(1)` call, the count of open value-1 pairs stays positive over the span of the one `Pop(2)` and ends at zero |
//! | R_Push | cover | as above for the span of an unpopped `Push(2)` |
//! | R_PopEmpty | cover | as R_DeqEmpty with `Push`/`Pop` |
//! | R_WR | unmatched | a `Read(1)` returns before any `Write(1)` is called |
//! | R_WR | blocked pair | an operation of each of 1 and 2 returns before the other's `Write` or some `Read` of it is called |
//! | R_Lock | held pair | `Lock(1)` and `Lock(2)` without any unlock of 1 or 2 |
//! | R_LU | unmatched, duplicate | as for R_EnqDeq with `Lock`/`Unlock` |
//! | R_LU | blocked pair | as R_WR with `Lock`/`Unlock`, where a value without unlock also counts as blocked |
//!
//! Counters are exact within `0..=2`; leaving that range rejects, except for
//! the saturating cover counters of R_DeqEmpty/R_PopEmpty where a larger
//! count only strengthens the cover.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};
use std::hash::Hash;

use thiserror::Error;

use crate::model::{ActionKind, Execution, Method, OpId, Renaming, Value};
use crate::spec::{
    SpecKind, Specification, R_DEQEMPTY, R_ENQDEQ, R_LOCK, R_LU, R_POPEMPTY, R_PUSH, R_PUSHPOP,
    R_WR,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error("action {index} carries value {value}, automata read only 1, 2 and 3")]
    ValueOutOfRange { index: usize, value: u32 },
    #[error("execution is not differentiated")]
    NotDifferentiated,
    #[error("execution has {values} data values, renaming search is limited to {limit}")]
    TooManyValues { values: usize, limit: usize },
    #[error("no automaton for rule {0}")]
    UnknownRule(String),
    #[error("execution has pending operations")]
    Incomplete,
}

/// One input symbol: an action with its identifier stripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub kind: ActionKind,
    pub method: Method,
    /// 0 for the ignored value, otherwise 1..=3.
    pub value: u8,
}

impl Letter {
    fn index(self) -> usize {
        let k = match self.kind {
            ActionKind::Call => 0,
            ActionKind::Ret => 1,
        };
        let m = Method::ALL.iter().position(|&x| x == self.method).unwrap();
        (k * Method::ALL.len() + m) * 4 + self.value as usize
    }

    fn is(self, kind: ActionKind, method: Method, value: u8) -> bool {
        self.kind == kind && self.method == method && self.value == value
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            ActionKind::Call => "call",
            ActionKind::Ret => "ret",
        };
        if self.value == 0 {
            write!(f, "{k} {}", self.method)
        } else {
            write!(f, "{k} {}({})", self.method, self.value)
        }
    }
}

type LetterSet = u128;

/// Letters over the methods of one specification.
pub fn alphabet(methods: &[Method]) -> Vec<Letter> {
    let mut out = Vec::new();
    for kind in [ActionKind::Call, ActionKind::Ret] {
        for &method in methods {
            let values: &[u8] = if method.is_argumentless() {
                &[0, 2, 3]
            } else {
                &[1, 2, 3]
            };
            for &value in values {
                out.push(Letter {
                    kind,
                    method,
                    value,
                });
            }
        }
    }
    out
}

/// A nondeterministic automaton with letter-set labelled transitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    pub name: String,
    pub alphabet: Vec<Letter>,
    pub initial: Vec<usize>,
    pub accepting: Vec<bool>,
    /// Per state, `(letters, target)` pairs.
    pub edges: Vec<Vec<(LetterSet, usize)>>,
    /// Whether one argumentless operation must be singled out as value 2.
    pub marks_empty: bool,
}

impl Automaton {
    pub fn states(&self) -> usize {
        self.accepting.len()
    }

    pub fn empty(name: &str, alphabet: Vec<Letter>) -> Self {
        Automaton {
            name: name.to_string(),
            alphabet,
            initial: vec![],
            accepting: vec![],
            edges: vec![],
            marks_empty: false,
        }
    }

    /// Drops states from which no accepting state is reachable.
    pub fn trim(&self) -> Automaton {
        let n = self.states();
        let mut live = self.accepting.clone();
        loop {
            let mut changed = false;
            for s in 0..n {
                if !live[s] && self.edges[s].iter().any(|&(_, t)| live[t]) {
                    live[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut id = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if live[s] {
                id[s] = next;
                next += 1;
            }
        }
        let mut out = Automaton::empty(&self.name, self.alphabet.clone());
        out.marks_empty = self.marks_empty;
        out.initial = self.initial.iter().filter(|&&s| live[s]).map(|&s| id[s]).collect();
        for s in (0..n).filter(|&s| live[s]) {
            out.accepting.push(self.accepting[s]);
            out.edges.push(
                self.edges[s]
                    .iter()
                    .filter(|&&(_, t)| live[t])
                    .map(|&(set, t)| (set, id[t]))
                    .collect(),
            );
        }
        out
    }

    /// Letters of the alphabet leading from `from` to `to`.
    pub fn labels(&self, from: usize, to: usize) -> impl Iterator<Item = Letter> + '_ {
        let set = self.edges[from]
            .iter()
            .filter(|&&(_, t)| t == to)
            .fold(0, |m, &(s, _)| m | s);
        self.alphabet
            .iter()
            .copied()
            .filter(move |l| set >> l.index() & 1 == 1)
    }

    /// States reached from `from` on `letter`.
    pub fn step(&self, from: usize, letter: Letter) -> impl Iterator<Item = usize> + '_ {
        let bit = 1u128 << letter.index();
        self.edges[from]
            .iter()
            .filter(move |(set, _)| set & bit != 0)
            .map(|(_, to)| *to)
    }

    /// Standard subset simulation on a word of letters.
    pub fn accepts_word(&self, word: &[Letter]) -> bool {
        let mut cur: BTreeSet<usize> = self.initial.iter().copied().collect();
        for &l in word {
            cur = cur.iter().flat_map(|&s| self.step(s, l)).collect();
            if cur.is_empty() {
                return false;
            }
        }
        cur.iter().any(|&s| self.accepting[s])
    }

    /// Acceptance of an execution whose values are all in 1..=3 or ignored.
    pub fn accepts(&self, e: &Execution) -> Result<bool, AutomatonError> {
        let word = word_of(e, |v, _| v)?;
        Ok(self.accepts_word(&word))
    }

    /// Transition listing, one `state label state` line per edge.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "automaton {}", self.name);
        let _ = writeln!(out, "states {}", self.states());
        let init: Vec<String> = self.initial.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "initial {}", init.join(" "));
        let acc: Vec<String> = (0..self.states())
            .filter(|&s| self.accepting[s])
            .map(|s| s.to_string())
            .collect();
        let _ = writeln!(out, "accepting {}", acc.join(" "));
        let all: LetterSet = self.alphabet.iter().fold(0, |m, l| m | 1 << l.index());
        for (s, edges) in self.edges.iter().enumerate() {
            for &(set, t) in edges {
                let label = if set == all {
                    "*".to_string()
                } else {
                    self.alphabet
                        .iter()
                        .filter(|l| set >> l.index() & 1 == 1)
                        .map(|l| l.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                let _ = writeln!(out, "{s} [{label}] {t}");
            }
        }
        out
    }
}

fn word_of(
    e: &Execution,
    value: impl Fn(Value, &OpId) -> Value,
) -> Result<Vec<Letter>, AutomatonError> {
    e.actions()
        .iter()
        .enumerate()
        .map(|(index, a)| {
            let v = match value(a.value, &a.op) {
                Value::Ignored => 0,
                Value::Data(d @ 1..=3) => d as u8,
                Value::Data(d) => return Err(AutomatonError::ValueOutOfRange { index, value: d }),
            };
            Ok(Letter {
                kind: a.kind,
                method: a.method,
                value: v,
            })
        })
        .collect()
}

/// Disjoint union: accepts the union of the languages.
pub fn union(name: &str, parts: &[Automaton]) -> Automaton {
    let alphabet: Vec<Letter> = parts
        .iter()
        .flat_map(|a| a.alphabet.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut u = Automaton::empty(name, alphabet);
    for a in parts {
        let off = u.states();
        u.initial.extend(a.initial.iter().map(|s| s + off));
        u.accepting.extend(a.accepting.iter().copied());
        u.edges.extend(
            a.edges
                .iter()
                .map(|es| es.iter().map(|&(set, t)| (set, t + off)).collect()),
        );
        u.marks_empty |= a.marks_empty;
    }
    u
}

/// A deterministic branch given by its step function; `None` rejects.
trait Branch: Copy + Eq + Hash {
    fn step(self, l: Letter) -> Option<Self>;
    fn accepting(self) -> bool;
}

fn compile<B: Branch>(name: &str, init: B, alphabet: &[Letter]) -> Automaton {
    let mut ids: HashMap<B, usize> = HashMap::new();
    let mut states = vec![init];
    ids.insert(init, 0);
    let mut edges: Vec<Vec<(LetterSet, usize)>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        let mut out: Vec<(LetterSet, usize)> = Vec::new();
        for &l in alphabet {
            let Some(next) = states[s].step(l) else { continue };
            let t = *ids.entry(next).or_insert_with(|| {
                states.push(next);
                queue.push_back(states.len() - 1);
                states.len() - 1
            });
            match out.iter_mut().find(|(_, to)| *to == t) {
                Some((set, _)) => *set |= 1 << l.index(),
                None => out.push((1 << l.index(), t)),
            }
        }
        if edges.len() <= s {
            edges.resize(s + 1, Vec::new());
        }
        edges[s] = out;
    }
    edges.resize(states.len(), Vec::new());
    Automaton {
        name: name.to_string(),
        alphabet: alphabet.to_vec(),
        initial: vec![0],
        accepting: states.iter().map(|s| s.accepting()).collect(),
        edges,
        marks_empty: false,
    }
    .trim()
}

use ActionKind::{Call, Ret};

fn bump(c: u8) -> u8 {
    (c + 1).min(2)
}

/// A consumer of value 1 returns before any producer of value 1 is called.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Unmatched {
    producer: Method,
    consumer: Method,
    producer_called: bool,
    hit: bool,
}

impl Branch for Unmatched {
    fn step(mut self, l: Letter) -> Option<Self> {
        if l.is(Call, self.producer, 1) {
            self.producer_called = true;
        }
        if l.is(Ret, self.consumer, 1) && !self.producer_called {
            self.hit = true;
        }
        if self.hit {
            self.producer_called = true;
        }
        Some(self)
    }

    fn accepting(self) -> bool {
        self.hit
    }
}

/// At least two consumer calls of value 1 and at most one producer call.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Duplicate {
    producer: Method,
    consumer: Method,
    producers: u8,
    consumers: u8,
}

impl Branch for Duplicate {
    fn step(mut self, l: Letter) -> Option<Self> {
        if l.is(Call, self.producer, 1) {
            self.producers = bump(self.producers);
            if self.producers == 2 {
                return None;
            }
        }
        if l.is(Call, self.consumer, 1) {
            self.consumers = bump(self.consumers);
        }
        Some(self)
    }

    fn accepting(self) -> bool {
        self.consumers >= 2
    }
}

/// FIFO order broken between the producers and consumers of 1 and 2.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Fifo {
    enq1: u8,
    enq2: u8,
    enq1_returned: bool,
    ordered: bool,
    deq2_returned: bool,
    deq2_called: bool,
    deq1_called: bool,
    overtaken: bool,
}

impl Branch for Fifo {
    fn step(mut self, l: Letter) -> Option<Self> {
        use Method::{Deq, Enq};
        if l.is(Call, Enq, 1) {
            self.enq1 += 1;
        } else if l.is(Ret, Enq, 1) {
            self.enq1_returned = true;
        } else if l.is(Call, Enq, 2) {
            self.enq2 += 1;
            self.ordered = self.enq1_returned;
        } else if l.is(Call, Deq, 2) {
            self.deq2_called = true;
        } else if l.is(Ret, Deq, 2) {
            self.deq2_returned = true;
        } else if l.is(Call, Deq, 1) && !self.deq1_called {
            self.deq1_called = true;
            self.overtaken = self.deq2_returned;
        }
        (self.enq1 <= 1 && self.enq2 <= 1 && (self.enq2 == 0 || self.ordered)).then_some(self)
    }

    fn accepting(self) -> bool {
        self.enq1 == 1
            && self.enq2 == 1
            && self.ordered
            && self.deq2_called
            && (!self.deq1_called || self.overtaken)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Phase {
    Before,
    During,
    After,
}

/// Returned producers minus called consumers of value 1 stays positive over
/// the span of the empty operation marked 2.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct EmptyCover {
    producer: Method,
    consumer: Method,
    empty: Method,
    count: u8,
    phase: Phase,
}

impl Branch for EmptyCover {
    fn step(mut self, l: Letter) -> Option<Self> {
        if self.phase == Phase::After {
            return Some(self);
        }
        if l.is(Ret, self.producer, 1) {
            self.count = bump(self.count);
        } else if l.is(Call, self.consumer, 1) {
            let floor = u8::from(self.phase == Phase::During);
            if self.count <= floor {
                return None;
            }
            self.count -= 1;
        } else if l.is(Call, self.empty, 2) && self.phase == Phase::Before {
            if self.count == 0 {
                return None;
            }
            self.phase = Phase::During;
        } else if l.is(Ret, self.empty, 2) && self.phase == Phase::During {
            self.phase = Phase::After;
        }
        Some(self)
    }

    fn accepting(self) -> bool {
        self.phase == Phase::After
    }
}

/// The span of the single operation `target(2)` is covered by value-1
/// Push/Pop pairs that are all complete at the end.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct StackCover {
    /// `Pop` for R_PushPop, `Push` for R_Push.
    target: Method,
    push2: u8,
    pop2: u8,
    push2_returned: bool,
    count: u8,
    phase: Phase,
}

impl Branch for StackCover {
    fn step(mut self, l: Letter) -> Option<Self> {
        use Method::{Pop, Push};
        if l.is(Call, Push, 2) {
            self.push2 += 1;
        } else if l.is(Ret, Push, 2) {
            self.push2_returned = true;
        } else if l.is(Call, Pop, 2) {
            self.pop2 += 1;
        } else if l.is(Ret, Push, 1) {
            self.count += 1;
        } else if l.is(Call, Push, 1) {
            if self.target == Pop && !self.push2_returned {
                return None;
            }
        } else if l.is(Call, Pop, 1) {
            let floor = u8::from(self.phase == Phase::During);
            if self.count <= floor {
                return None;
            }
            self.count -= 1;
        }
        if l.is(Call, self.target, 2) && self.phase == Phase::Before {
            if self.count == 0 {
                return None;
            }
            self.phase = Phase::During;
        } else if l.is(Ret, self.target, 2) && self.phase == Phase::During {
            self.phase = Phase::After;
        }
        let pops_allowed = if self.target == Pop { 1 } else { 0 };
        (self.count <= 2 && self.push2 <= 1 && self.pop2 <= pops_allowed).then_some(self)
    }

    fn accepting(self) -> bool {
        let pops = if self.target == Method::Pop { 1 } else { 0 };
        self.phase == Phase::After && self.push2 == 1 && self.pop2 == pops && self.count == 0
    }
}

/// Values 1 and 2 each block the other: an operation of one returns before
/// a `head` operation of the other is called.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct BlockedPair {
    producer: Method,
    consumer: Method,
    /// A value without consumer counts as blocked (mutex).
    needs_consumer: bool,
    p1: u8,
    p2: u8,
    c1: bool,
    c2: bool,
    ret1: bool,
    ret2: bool,
    blocked1: bool,
    blocked2: bool,
}

impl Branch for BlockedPair {
    fn step(mut self, l: Letter) -> Option<Self> {
        let head = l.kind == Call && (l.method == self.producer || l.method == self.consumer);
        match (l.value, l.kind) {
            (1, Ret) => self.ret1 = true,
            (2, Ret) => self.ret2 = true,
            (1, Call) if head => self.blocked1 |= self.ret2,
            (2, Call) if head => self.blocked2 |= self.ret1,
            _ => {}
        }
        if l.is(Call, self.producer, 1) {
            self.p1 += 1;
        } else if l.is(Call, self.producer, 2) {
            self.p2 += 1;
        } else if l.is(Call, self.consumer, 1) {
            self.c1 = true;
        } else if l.is(Call, self.consumer, 2) {
            self.c2 = true;
        }
        (self.p1 <= 1 && self.p2 <= 1).then_some(self)
    }

    fn accepting(self) -> bool {
        let fails1 = self.blocked1 || (self.needs_consumer && !self.c1);
        let fails2 = self.blocked2 || (self.needs_consumer && !self.c2);
        let eligible = !self.needs_consumer || self.c1 || self.c2;
        self.p1 == 1 && self.p2 == 1 && fails1 && fails2 && eligible
    }
}

/// Two values locked and never unlocked.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct HeldPair {
    l1: bool,
    l2: bool,
}

impl Branch for HeldPair {
    fn step(mut self, l: Letter) -> Option<Self> {
        if l.method == Method::Unlock && (l.value == 1 || l.value == 2) {
            return None;
        }
        if l.is(Call, Method::Lock, 1) {
            self.l1 = true;
        } else if l.is(Call, Method::Lock, 2) {
            self.l2 = true;
        }
        Some(self)
    }

    fn accepting(self) -> bool {
        self.l1 && self.l2
    }
}

fn unmatched(p: Method, c: Method) -> Unmatched {
    Unmatched {
        producer: p,
        consumer: c,
        producer_called: false,
        hit: false,
    }
}

fn duplicate(p: Method, c: Method) -> Duplicate {
    Duplicate {
        producer: p,
        consumer: c,
        producers: 0,
        consumers: 0,
    }
}

fn empty_cover(p: Method, c: Method, e: Method) -> EmptyCover {
    EmptyCover {
        producer: p,
        consumer: c,
        empty: e,
        count: 0,
        phase: Phase::Before,
    }
}

fn stack_cover(target: Method) -> StackCover {
    StackCover {
        target,
        push2: 0,
        pop2: 0,
        push2_returned: false,
        count: 0,
        phase: Phase::Before,
    }
}

fn blocked_pair(p: Method, c: Method, needs_consumer: bool) -> BlockedPair {
    BlockedPair {
        producer: p,
        consumer: c,
        needs_consumer,
        p1: 0,
        p2: 0,
        c1: false,
        c2: false,
        ret1: false,
        ret2: false,
        blocked1: false,
        blocked2: false,
    }
}

/// The automaton of one rule, or `None` for rules that are never violated.
pub fn build(spec: &Specification, rule: &str) -> Result<Automaton, AutomatonError> {
    use Method::*;
    let kind: SpecKind = spec
        .name
        .parse()
        .map_err(|_| AutomatonError::UnknownRule(rule.to_string()))?;
    let alpha = alphabet(&spec.methods);
    let parts: Vec<Automaton> = match (kind, rule) {
        (_, "R_0") | (SpecKind::Queue, "R_Enq") => vec![],
        (SpecKind::Queue, R_ENQDEQ) => vec![
            compile("unmatched", unmatched(Enq, Deq), &alpha),
            compile("duplicate", duplicate(Enq, Deq), &alpha),
            compile(
                "fifo",
                Fifo {
                    enq1: 0,
                    enq2: 0,
                    enq1_returned: false,
                    ordered: false,
                    deq2_returned: false,
                    deq2_called: false,
                    deq1_called: false,
                    overtaken: false,
                },
                &alpha,
            ),
        ],
        (SpecKind::Queue, R_DEQEMPTY) => {
            vec![compile("cover", empty_cover(Enq, Deq, DeqEmpty), &alpha)]
        }
        (SpecKind::Stack, R_PUSHPOP) => vec![
            compile("unmatched", unmatched(Push, Pop), &alpha),
            compile("duplicate", duplicate(Push, Pop), &alpha),
            compile("cover", stack_cover(Pop), &alpha),
        ],
        (SpecKind::Stack, R_PUSH) => vec![compile("cover", stack_cover(Push), &alpha)],
        (SpecKind::Stack, R_POPEMPTY) => {
            vec![compile("cover", empty_cover(Push, Pop, PopEmpty), &alpha)]
        }
        (SpecKind::Register, R_WR) => vec![
            compile("unmatched", unmatched(Write, Read), &alpha),
            compile("blocked", blocked_pair(Write, Read, false), &alpha),
        ],
        (SpecKind::Mutex, R_LOCK) => vec![compile(
            "held",
            HeldPair {
                l1: false,
                l2: false,
            },
            &alpha,
        )],
        (SpecKind::Mutex, R_LU) => vec![
            compile("unmatched", unmatched(Lock, Unlock), &alpha),
            compile("duplicate", duplicate(Lock, Unlock), &alpha),
            compile("blocked", blocked_pair(Lock, Unlock, true), &alpha),
        ],
        _ => return Err(AutomatonError::UnknownRule(rule.to_string())),
    };
    let mut a = union(rule, &parts);
    a.alphabet = alpha;
    a.marks_empty = matches!(rule, R_DEQEMPTY | R_POPEMPTY);
    Ok(a)
}

/// Union of the automata of every rule of the specification.
pub fn build_union(spec: &Specification) -> Automaton {
    let parts: Vec<Automaton> = spec
        .rules
        .iter()
        .map(|r| build(spec, &r.name).expect("built-in rule"))
        .collect();
    let mut a = union(&spec.name, &parts);
    a.alphabet = alphabet(&spec.methods);
    a
}

/// Values beyond this bound make the renaming search refuse.
pub const MATCH_VALUE_LIMIT: usize = 12;

/// A renaming into {1,2,3} and, for empty-operation automata, the operation read as 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub renaming: Renaming,
    pub marked: Option<OpId>,
}

fn first_occurrence_values(e: &Execution) -> Vec<u32> {
    let mut out = Vec::new();
    for a in e.actions() {
        if let Value::Data(v) = a.value {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Searches canonical renamings `r` with `r(e)` accepted: a value mapped to 2
/// (in first-occurrence order, then none), a subset mapped to 1 (by
/// increasing size), the rest to 3.
pub fn match_execution(
    a: &Automaton,
    e: &Execution,
    input_methods: &[Method],
) -> Result<Option<Match>, AutomatonError> {
    if !e.is_differentiated(input_methods) {
        return Err(AutomatonError::NotDifferentiated);
    }
    if !e.is_complete() {
        return Err(AutomatonError::Incomplete);
    }
    let values = first_occurrence_values(e);
    if values.len() > MATCH_VALUE_LIMIT {
        return Err(AutomatonError::TooManyValues {
            values: values.len(),
            limit: MATCH_VALUE_LIMIT,
        });
    }
    let mut marks: Vec<Option<OpId>> = vec![None];
    if a.marks_empty {
        let empties: Vec<OpId> = e
            .actions()
            .iter()
            .filter(|x| x.kind == ActionKind::Call && x.method.is_argumentless())
            .map(|x| x.op.clone())
            .collect();
        if !empties.is_empty() {
            marks = empties.into_iter().map(Some).collect();
        }
    }
    let twos: Vec<Option<u32>> = values
        .iter()
        .copied()
        .map(Some)
        .chain(std::iter::once(None))
        .collect();
    for mark in &marks {
        for &two in &twos {
            let rest: Vec<u32> = values.iter().copied().filter(|&v| Some(v) != two).collect();
            for size in 0..=rest.len() {
                for ones in combinations(&rest, size) {
                    let mut r = Renaming::identity();
                    for &v in &values {
                        let to = if Some(v) == two {
                            2
                        } else if ones.contains(&v) {
                            1
                        } else {
                            3
                        };
                        r.insert(v, to);
                    }
                    let word = word_of(e, |v, op| match v {
                        Value::Data(d) => Value::Data(r.apply(d)),
                        Value::Ignored if Some(op) == mark.as_ref() => Value::Data(2),
                        Value::Ignored => Value::Ignored,
                    })?;
                    if a.accepts_word(&word) {
                        return Ok(Some(Match {
                            renaming: r,
                            marked: mark.clone(),
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

fn combinations(items: &[u32], k: usize) -> Vec<Vec<u32>> {
    fn go(items: &[u32], k: usize, from: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in from..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{execution_from_intervals, interval_family};
    use crate::model::{Action, MethodEvent};
    use crate::spec::builtin;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn word(spec: &[(ActionKind, Method, u8)]) -> Vec<Letter> {
        spec.iter()
            .map(|&(kind, method, value)| Letter {
                kind,
                method,
                value,
            })
            .collect()
    }

    fn queue() -> Specification {
        builtin(SpecKind::Queue)
    }

    #[test]
    fn empty_word_rejected() {
        for kind in SpecKind::ALL {
            let spec = builtin(kind);
            assert!(!build_union(&spec).accepts(&Execution::empty()).unwrap());
        }
    }

    #[test]
    fn deq_without_enq() {
        let a = build(&queue(), R_ENQDEQ).unwrap();
        assert!(a.accepts_word(&word(&[(Call, Method::Deq, 1), (Ret, Method::Deq, 1)])));
    }

    #[test]
    fn fifo_branch() {
        use Method::*;
        let a = build(&queue(), R_ENQDEQ).unwrap();
        let w = word(&[
            (Call, Enq, 1),
            (Ret, Enq, 1),
            (Call, Enq, 2),
            (Ret, Enq, 2),
            (Call, Deq, 2),
            (Ret, Deq, 2),
            (Call, Deq, 1),
            (Ret, Deq, 1),
        ]);
        assert!(a.accepts_word(&w));
        let fifo: Vec<Letter> = [0, 1, 2, 3, 6, 7, 4, 5].iter().map(|&i| w[i]).collect();
        assert!(!a.accepts_word(&fifo));
    }

    #[test]
    fn deqempty_cover() {
        use Method::*;
        let a = build(&queue(), R_DEQEMPTY).unwrap();
        let covered = word(&[
            (Call, Enq, 1),
            (Ret, Enq, 1),
            (Call, DeqEmpty, 2),
            (Ret, DeqEmpty, 2),
            (Call, Deq, 1),
            (Ret, Deq, 1),
        ]);
        assert!(a.accepts_word(&covered));
        let straddle = word(&[
            (Call, Enq, 1),
            (Ret, Enq, 1),
            (Call, DeqEmpty, 2),
            (Call, Deq, 1),
            (Ret, DeqEmpty, 2),
            (Ret, Deq, 1),
        ]);
        assert!(!a.accepts_word(&straddle));
    }

    #[test]
    fn value_out_of_range() {
        let e = Execution::validate(vec![Action::call(Method::Enq, Value::Data(4), "a")]).unwrap();
        let a = build(&queue(), R_ENQDEQ).unwrap();
        assert_eq!(
            a.accepts(&e),
            Err(AutomatonError::ValueOutOfRange { index: 0, value: 4 })
        );
    }

    fn random_word<R: Rng>(rng: &mut R, alpha: &[Letter]) -> Vec<Letter> {
        let n = rng.gen_range(0..12);
        (0..n).map(|_| alpha[rng.gen_range(0..alpha.len())]).collect()
    }

    #[test]
    fn union_laws() {
        let spec = queue();
        let alpha = alphabet(&spec.methods);
        let none = union("none", &[]);
        let a = build(&spec, R_DEQEMPTY).unwrap();
        let single = union("single", std::slice::from_ref(&a));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let w = random_word(&mut rng, &alpha);
            assert!(!none.accepts_word(&w));
            assert_eq!(single.accepts_word(&w), a.accepts_word(&w));
        }
    }

    #[test]
    fn union_accepts_branch_words() {
        use Method::*;
        let u = build_union(&queue());
        for w in [
            word(&[(Call, Deq, 1), (Ret, Deq, 1)]),
            word(&[
                (Call, Enq, 1),
                (Ret, Enq, 1),
                (Call, Deq, 1),
                (Ret, Deq, 1),
                (Call, Deq, 1),
                (Ret, Deq, 1),
            ]),
            word(&[
                (Call, Enq, 1),
                (Ret, Enq, 1),
                (Call, Enq, 2),
                (Ret, Enq, 2),
                (Call, Deq, 2),
                (Ret, Deq, 2),
            ]),
            word(&[
                (Call, Enq, 1),
                (Ret, Enq, 1),
                (Call, DeqEmpty, 2),
                (Ret, DeqEmpty, 2),
            ]),
        ] {
            assert!(u.accepts_word(&w));
        }
    }

    /// Sequential runs of each object with values drawn from 1..=3.
    fn sequential_word<R: Rng>(rng: &mut R, kind: SpecKind) -> Vec<Letter> {
        use Method::*;
        let mut store: Vec<u8> = Vec::new();
        let mut out = Vec::new();
        let mut emit = |m: Method, v: u8| {
            out.push(Letter { kind: Call, method: m, value: v });
            out.push(Letter { kind: Ret, method: m, value: v });
        };
        for _ in 0..rng.gen_range(0..8) {
            let v = rng.gen_range(1..=3);
            match kind {
                SpecKind::Queue | SpecKind::Stack => {
                    let (p, c, e) = if kind == SpecKind::Queue {
                        (Enq, Deq, DeqEmpty)
                    } else {
                        (Push, Pop, PopEmpty)
                    };
                    if rng.gen_bool(0.5) {
                        store.push(v);
                        emit(p, v);
                    } else if store.is_empty() {
                        emit(e, *[0, 2, 3].get(rng.gen_range(0..3)).unwrap());
                    } else {
                        let x = if kind == SpecKind::Queue {
                            store.remove(0)
                        } else {
                            store.pop().unwrap()
                        };
                        emit(c, x);
                    }
                }
                SpecKind::Register => {
                    if store.is_empty() || rng.gen_bool(0.5) {
                        store = vec![v];
                        emit(Write, v);
                    } else {
                        emit(Read, store[0]);
                    }
                }
                SpecKind::Mutex => {
                    if let Some(x) = store.pop() {
                        emit(Unlock, x);
                    } else {
                        store.push(v);
                        emit(Lock, v);
                    }
                }
            }
        }
        out
    }

    /// Valid runs may repeat values once renamed into {1,2,3}, so only runs
    /// whose producers carry distinct values are meaningful.
    fn distinct_producers(w: &[Letter]) -> bool {
        let mut seen = BTreeSet::new();
        w.iter()
            .filter(|l| {
                l.kind == Call && matches!(l.method, Method::Enq | Method::Push | Method::Write | Method::Lock)
            })
            .all(|l| seen.insert(l.value))
    }

    #[test]
    fn sequential_words_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in SpecKind::ALL {
            let u = build_union(&builtin(kind));
            for _ in 0..500 {
                let w = sequential_word(&mut rng, kind);
                if distinct_producers(&w) {
                    assert!(!u.accepts_word(&w), "{kind}: {w:?}");
                }
            }
        }
    }

    #[test]
    fn match_interval_family() {
        let e = interval_family(4, 5);
        let a = build(&queue(), R_DEQEMPTY).unwrap();
        let m = match_execution(&a, &e, &[Method::Enq]).unwrap().expect("cover found");
        for v in 5..=8 {
            assert_eq!(m.renaming.apply(v), 1);
        }
        assert_eq!(m.marked, Some(OpId::seq(1)));
    }

    #[test]
    fn match_fifo_pair() {
        use Method::*;
        let events = [
            MethodEvent::new(Enq, 4),
            MethodEvent::new(Enq, 9),
            MethodEvent::new(Deq, 9),
            MethodEvent::new(Deq, 4),
        ];
        let spans = [(0.0, 1.0), (2.0, 3.0), (4.0, 5.0), (6.0, 7.0)];
        let e = execution_from_intervals(&events, &spans);
        let a = build(&queue(), R_ENQDEQ).unwrap();
        let m = match_execution(&a, &e, &[Enq]).unwrap().expect("fifo violation");
        assert_eq!(m.renaming.apply(4), 1);
        assert_eq!(m.renaming.apply(9), 2);
    }

    #[test]
    fn match_sequential_absent() {
        use Method::*;
        let events = [
            MethodEvent::new(Enq, 4),
            MethodEvent::new(Enq, 9),
            MethodEvent::new(Deq, 4),
            MethodEvent::new(Deq, 9),
            MethodEvent::empty(DeqEmpty),
        ];
        let spans = [(0.0, 1.0), (2.0, 3.0), (4.0, 5.0), (6.0, 7.0), (8.0, 9.0)];
        let e = execution_from_intervals(&events, &spans);
        let u = build_union(&queue());
        assert_eq!(match_execution(&u, &e, &[Enq]).unwrap(), None);
    }

    #[test]
    fn match_rejects_undifferentiated() {
        use Method::*;
        let events = [MethodEvent::new(Enq, 4), MethodEvent::new(Enq, 4)];
        let e = execution_from_intervals(&events, &[(0.0, 1.0), (2.0, 3.0)]);
        let u = build_union(&queue());
        assert_eq!(
            match_execution(&u, &e, &[Enq]),
            Err(AutomatonError::NotDifferentiated)
        );
    }

    #[test]
    fn identifiers_are_not_read() {
        let e = interval_family(2, 1);
        let renamed = Execution::validate(
            e.actions()
                .iter()
                .map(|a| Action {
                    op: OpId(format!("thread-{}", a.op.0)),
                    ..a.clone()
                })
                .collect(),
        )
        .unwrap();
        let a = build(&queue(), R_ENQDEQ).unwrap();
        assert_eq!(a.accepts(&e).unwrap(), a.accepts(&renamed).unwrap());
    }

    #[test]
    fn listing_mentions_every_state() {
        let a = build(&queue(), R_DEQEMPTY).unwrap();
        let text = a.listing();
        assert!(text.starts_with("automaton R_DeqEmpty\n"));
        for s in 0..a.states() {
            assert!(text.lines().any(|l| l.starts_with(&format!("{s} ["))));
        }
    }
}
