//! Inductively defined sequential specifications.
//!
//! A specification is an ordered list of rules `u1·…·uk ∈ S ∧ Guard ⇒ Expr ∈ S`.
//! Its language is every sequence derivable from ε by applying rules with
//! non-decreasing indices.
//!
//! Matching convention: for a witness `x`, the events carrying `x` are exactly
//! those produced by the expression's method and Kleene atoms, so segments
//! never contain `x` and removing `x` from a match yields `u1·…·uk`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Key, Method, MethodEvent, SeqExec, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("guard expects {expected} segments, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("sequence is not differentiated")]
    NotDifferentiated,
    #[error("unknown specification `{0}` (expected queue, stack, register or mutex)")]
    UnknownSpecification(String),
}

/// One conjunct of a guard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuardAtom {
    /// `u_i ∈ M*`
    Alphabet { segment: usize, methods: Vec<Method> },
    /// `m ⊑0 u_i`: every `m(y)` in `u_i` has another event of value `y` in `u_i`.
    Matched { method: Method, segment: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Guard {
    pub atoms: Vec<GuardAtom>,
}

impl Guard {
    pub fn always() -> Self {
        Guard::default()
    }

    pub fn new(atoms: Vec<GuardAtom>) -> Self {
        Guard { atoms }
    }
}

/// `u ∈ M*`.
pub fn in_alphabet(u: &SeqExec, methods: &[Method]) -> bool {
    u.events.iter().all(|e| methods.contains(&e.method))
}

/// `m ⊑0 u`.
pub fn matched_in(method: Method, u: &SeqExec) -> bool {
    u.events.iter().enumerate().all(|(i, e)| {
        e.method != method
            || matches!(e.value, Value::Data(_))
                && u
                    .events
                    .iter()
                    .enumerate()
                    .any(|(j, f)| j != i && f.value == e.value)
    })
}

/// Evaluates a guard on the segments of a decomposition.
pub fn eval_guard(g: &Guard, arity: usize, segments: &[SeqExec]) -> Result<bool, SpecError> {
    if segments.len() != arity {
        return Err(SpecError::ArityMismatch {
            expected: arity,
            got: segments.len(),
        });
    }
    Ok(guard_holds(g, segments))
}

fn guard_holds(g: &Guard, segments: &[SeqExec]) -> bool {
    g.atoms.iter().all(|a| match a {
        GuardAtom::Alphabet { segment, methods } => in_alphabet(&segments[*segment], methods),
        GuardAtom::Matched { method, segment } => matched_in(*method, &segments[*segment]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    Segment(usize),
    Method(Method),
    Star(Method),
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Segment(i) => write!(f, "u{}", i + 1),
            Atom::Method(m) => write!(f, "{m}"),
            Atom::Star(m) => write!(f, "{m}*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub arity: usize,
    pub guard: Guard,
    pub expr: Vec<Atom>,
}

impl Rule {
    /// Builds a rule, checking that segments appear in order exactly once and
    /// that no method appears twice.
    pub fn new(name: &str, arity: usize, guard: Guard, expr: Vec<Atom>) -> Rule {
        let segs: Vec<usize> = expr
            .iter()
            .filter_map(|a| match a {
                Atom::Segment(i) => Some(*i),
                _ => None,
            })
            .collect();
        assert_eq!(segs, (0..arity).collect::<Vec<_>>(), "segments of {name} out of order");
        let methods: Vec<Method> = expr
            .iter()
            .filter_map(|a| match a {
                Atom::Method(m) | Atom::Star(m) => Some(*m),
                _ => None,
            })
            .collect();
        let distinct: BTreeSet<Method> = methods.iter().copied().collect();
        assert_eq!(distinct.len(), methods.len(), "method repeated in {name}");
        Rule {
            name: name.to_string(),
            arity,
            guard,
            expr,
        }
    }

    fn has_witness_atoms(&self) -> bool {
        self.expr.iter().any(|a| !matches!(a, Atom::Segment(_)))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.name)?;
        if self.expr.is_empty() {
            return f.write_str("ε");
        }
        for (i, a) in self.expr.iter().enumerate() {
            if i > 0 {
                f.write_str("·")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// A successful decomposition of a sequence against a rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    /// The witness key; `None` for rules without method atoms.
    pub value: Option<Key>,
    /// One contiguous index range of the matched sequence per expression atom.
    pub spans: Vec<Range<usize>>,
    /// Indices of the events carrying the witness.
    pub positions: Vec<usize>,
}

impl Witness {
    /// The segments `u1,…,uk` of the decomposition.
    pub fn segments(&self, rule: &Rule, u: &SeqExec) -> Vec<SeqExec> {
        rule.expr
            .iter()
            .zip(&self.spans)
            .filter(|(a, _)| matches!(a, Atom::Segment(_)))
            .map(|(_, r)| SeqExec::new(u.events[r.clone()].to_vec()))
            .collect()
    }
}

fn key_of(e: &MethodEvent, index: usize) -> Key {
    match e.value {
        Value::Data(v) => Key::Data(v),
        Value::Ignored => Key::Solo(index),
    }
}

/// Enumerates decompositions of `u` against `rule`, calling `visit` until it returns `true`.
fn for_each_match(u: &SeqExec, rule: &Rule, mut visit: impl FnMut(Witness) -> bool) {
    let mut candidates: Vec<Option<Key>> = Vec::new();
    if rule.has_witness_atoms() {
        for (i, e) in u.events.iter().enumerate() {
            let k = key_of(e, i);
            if !candidates.contains(&Some(k)) {
                candidates.push(Some(k));
            }
        }
    } else {
        candidates.push(None);
    }
    for x in candidates {
        let is_x: Vec<bool> = u
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| Some(key_of(e, i)) == x)
            .collect();
        let mut spans = Vec::with_capacity(rule.expr.len());
        let mut stop = false;
        decompose(u, rule, &is_x, 0, 0, &mut spans, &mut |spans| {
            let w = Witness {
                value: x,
                spans: spans.to_vec(),
                positions: (0..u.len()).filter(|&i| is_x[i]).collect(),
            };
            if guard_holds(&rule.guard, &w.segments(rule, u)) {
                stop = visit(w);
            }
            stop
        });
        if stop {
            return;
        }
    }
}

fn decompose(
    u: &SeqExec,
    rule: &Rule,
    is_x: &[bool],
    atom: usize,
    pos: usize,
    spans: &mut Vec<Range<usize>>,
    done: &mut dyn FnMut(&[Range<usize>]) -> bool,
) -> bool {
    let n = u.len();
    if atom == rule.expr.len() {
        return pos == n && done(spans);
    }
    let run_end = |pred: &dyn Fn(usize) -> bool| {
        let mut end = pos;
        while end < n && pred(end) {
            end += 1;
        }
        end
    };
    let (lo, hi) = match rule.expr[atom] {
        Atom::Segment(_) => (pos, run_end(&|i| !is_x[i])),
        Atom::Method(m) => {
            if pos < n && is_x[pos] && u.events[pos].method == m {
                (pos + 1, pos + 1)
            } else {
                return false;
            }
        }
        Atom::Star(m) => (pos, run_end(&|i| is_x[i] && u.events[i].method == m)),
    };
    for end in lo..=hi {
        spans.push(pos..end);
        let stop = decompose(u, rule, is_x, atom + 1, end, spans, done);
        spans.pop();
        if stop {
            return true;
        }
    }
    false
}

/// Every decomposition of `u` against `rule` whose guard holds.
pub fn matches_rule(u: &SeqExec, rule: &Rule) -> Vec<Witness> {
    let mut out = Vec::new();
    for_each_match(u, rule, |w| {
        out.push(w);
        false
    });
    out
}

/// One decomposition per witness key, in first-occurrence order.
pub fn witnesses(u: &SeqExec, rule: &Rule) -> Vec<Witness> {
    let mut out: Vec<Witness> = Vec::new();
    for_each_match(u, rule, |w| {
        if out.last().map(|l| l.value) != Some(w.value) {
            out.push(w);
        }
        false
    });
    out
}

/// `u ∈ M(rule)`.
pub fn in_match_set(u: &SeqExec, rule: &Rule) -> bool {
    let mut found = false;
    for_each_match(u, rule, |_| {
        found = true;
        true
    });
    found
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecKind {
    Queue,
    Stack,
    Register,
    Mutex,
}

impl SpecKind {
    pub const ALL: [SpecKind; 4] = [
        SpecKind::Queue,
        SpecKind::Stack,
        SpecKind::Register,
        SpecKind::Mutex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpecKind::Queue => "queue",
            SpecKind::Stack => "stack",
            SpecKind::Register => "register",
            SpecKind::Mutex => "mutex",
        }
    }
}

impl fmt::Display for SpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpecKind {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpecKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| SpecError::UnknownSpecification(s.to_string()))
    }
}

/// Classifier returning the index of the last rule for a multiset of events.
pub type LastFn = fn(&[MethodEvent]) -> usize;

#[derive(Debug, Clone)]
pub struct Specification {
    pub name: String,
    pub methods: Vec<Method>,
    pub input_methods: Vec<Method>,
    pub rules: Vec<Rule>,
    pub last: LastFn,
}

impl Specification {
    pub fn rule_index(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.name == name)
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn last_index<'a>(&self, events: impl IntoIterator<Item = &'a MethodEvent>) -> usize {
        let evs: Vec<MethodEvent> = events.into_iter().copied().collect();
        (self.last)(&evs)
    }

    /// `last(u)`.
    pub fn last_of<'a>(&self, events: impl IntoIterator<Item = &'a MethodEvent>) -> &Rule {
        &self.rules[self.last_index(events)]
    }
}

pub const R_0: &str = "R_0";
pub const R_ENQ: &str = "R_Enq";
pub const R_ENQDEQ: &str = "R_EnqDeq";
pub const R_DEQEMPTY: &str = "R_DeqEmpty";
pub const R_PUSHPOP: &str = "R_PushPop";
pub const R_PUSH: &str = "R_Push";
pub const R_POPEMPTY: &str = "R_PopEmpty";
pub const R_WR: &str = "R_WR";
pub const R_LOCK: &str = "R_Lock";
pub const R_LU: &str = "R_LU";

fn base_rule() -> Rule {
    Rule::new(R_0, 0, Guard::always(), vec![])
}

fn has(events: &[MethodEvent], m: Method) -> bool {
    events.iter().any(|e| e.method == m)
}

fn queue_last(events: &[MethodEvent]) -> usize {
    if has(events, Method::DeqEmpty) {
        3
    } else if has(events, Method::Deq) {
        2
    } else if !events.is_empty() {
        1
    } else {
        0
    }
}

fn stack_last(events: &[MethodEvent]) -> usize {
    let unmatched_push = events.iter().any(|e| {
        e.method == Method::Push
            && !events
                .iter()
                .any(|f| f.method == Method::Pop && f.value == e.value)
    });
    if has(events, Method::PopEmpty) {
        3
    } else if unmatched_push {
        2
    } else if has(events, Method::Pop) {
        1
    } else {
        0
    }
}

fn register_last(events: &[MethodEvent]) -> usize {
    usize::from(!events.is_empty())
}

fn mutex_last(events: &[MethodEvent]) -> usize {
    if has(events, Method::Unlock) {
        2
    } else if !events.is_empty() {
        1
    } else {
        0
    }
}

/// One of the four built-in specifications.
pub fn builtin(kind: SpecKind) -> Specification {
    use Atom::{Method as M, Segment as U, Star};
    use GuardAtom::{Alphabet, Matched};
    use Method::*;
    match kind {
        SpecKind::Queue => Specification {
            name: "queue".into(),
            methods: vec![Enq, Deq, DeqEmpty],
            input_methods: vec![Enq],
            rules: vec![
                base_rule(),
                Rule::new(
                    R_ENQ,
                    1,
                    Guard::new(vec![Alphabet { segment: 0, methods: vec![Enq] }]),
                    vec![U(0), M(Enq)],
                ),
                Rule::new(
                    R_ENQDEQ,
                    2,
                    Guard::new(vec![
                        Alphabet { segment: 0, methods: vec![Enq] },
                        Alphabet { segment: 1, methods: vec![Enq, Deq] },
                    ]),
                    vec![M(Enq), U(0), M(Deq), U(1)],
                ),
                Rule::new(
                    R_DEQEMPTY,
                    2,
                    Guard::new(vec![Matched { method: Enq, segment: 0 }]),
                    vec![U(0), M(DeqEmpty), U(1)],
                ),
            ],
            last: queue_last,
        },
        SpecKind::Stack => Specification {
            name: "stack".into(),
            methods: vec![Push, Pop, PopEmpty],
            input_methods: vec![Push],
            rules: vec![
                base_rule(),
                Rule::new(
                    R_PUSHPOP,
                    2,
                    Guard::new(vec![
                        Matched { method: Push, segment: 0 },
                        Matched { method: Push, segment: 1 },
                        Alphabet { segment: 0, methods: vec![Push, Pop] },
                        Alphabet { segment: 1, methods: vec![Push, Pop] },
                    ]),
                    vec![M(Push), U(0), M(Pop), U(1)],
                ),
                Rule::new(
                    R_PUSH,
                    2,
                    Guard::new(vec![
                        Matched { method: Push, segment: 0 },
                        Alphabet { segment: 0, methods: vec![Push, Pop] },
                        Alphabet { segment: 1, methods: vec![Push, Pop] },
                    ]),
                    vec![U(0), M(Push), U(1)],
                ),
                Rule::new(
                    R_POPEMPTY,
                    2,
                    Guard::new(vec![Matched { method: Push, segment: 0 }]),
                    vec![U(0), M(PopEmpty), U(1)],
                ),
            ],
            last: stack_last,
        },
        SpecKind::Register => Specification {
            name: "register".into(),
            methods: vec![Write, Read],
            input_methods: vec![Write],
            rules: vec![
                base_rule(),
                Rule::new(R_WR, 1, Guard::always(), vec![M(Write), Star(Read), U(0)]),
            ],
            last: register_last,
        },
        SpecKind::Mutex => Specification {
            name: "mutex".into(),
            methods: vec![Lock, Unlock],
            input_methods: vec![Lock],
            rules: vec![
                base_rule(),
                Rule::new(R_LOCK, 0, Guard::always(), vec![M(Lock)]),
                Rule::new(R_LU, 1, Guard::always(), vec![M(Lock), M(Unlock), U(0)]),
            ],
            last: mutex_last,
        },
    }
}

pub fn builtin_by_name(name: &str) -> Result<Specification, SpecError> {
    Ok(builtin(name.parse()?))
}

/// One rule application in a derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub rule: usize,
    pub witness: Option<Key>,
    /// The sequence obtained after applying the rule.
    pub result: SeqExec,
}

/// Rule applications leading from ε to a sequence.
pub type Derivation = Vec<Step>;

/// Derivation search restricted to rules `R_1..R_bound`, memoized on the
/// remaining subsequence.
struct Deriver<'a> {
    spec: &'a Specification,
    u: &'a SeqExec,
    memo: HashMap<(u64, usize), Option<(usize, u64, Option<Key>)>>,
}

impl<'a> Deriver<'a> {
    fn sub(&self, mask: u64) -> (SeqExec, Vec<usize>) {
        let idx: Vec<usize> = (0..self.u.len()).filter(|i| mask >> i & 1 == 1).collect();
        (
            SeqExec::new(idx.iter().map(|&i| self.u.events[i]).collect()),
            idx,
        )
    }

    /// Whether the subsequence `mask` is derivable using rules up to index `bound`.
    /// Records the last rule, the predecessor mask and the witness.
    fn derivable(&mut self, mask: u64, bound: usize) -> bool {
        if let Some(r) = self.memo.get(&(mask, bound)) {
            return r.is_some();
        }
        let (sub, idx) = self.sub(mask);
        let mut found = None;
        for i in 0..=bound {
            let rule = &self.spec.rules[i];
            if sub.is_empty() {
                if in_match_set(&sub, rule) {
                    found = Some((i, mask, None));
                    break;
                }
                continue;
            }
            for w in witnesses(&sub, rule) {
                let mut prev = mask;
                for &p in &w.positions {
                    prev &= !(1u64 << idx[p]);
                }
                if prev == mask {
                    continue;
                }
                if self.derivable(prev, i) {
                    found = Some((i, prev, w.value.map(|k| remap_key(k, &idx))));
                    break;
                }
            }
            if found.is_some() {
                break;
            }
        }
        self.memo.insert((mask, bound), found);
        found.is_some()
    }

    fn derivation(&self, mut mask: u64, mut bound: usize) -> Derivation {
        let mut steps = Vec::new();
        while let Some(Some((rule, prev, witness))) = self.memo.get(&(mask, bound)).copied() {
            if mask == 0 {
                break;
            }
            steps.push(Step {
                rule,
                witness,
                result: self.sub(mask).0,
            });
            mask = prev;
            bound = rule;
        }
        steps.reverse();
        steps
    }
}

fn remap_key(k: Key, idx: &[usize]) -> Key {
    match k {
        Key::Solo(i) => Key::Solo(idx[i]),
        d => d,
    }
}

/// Derivation of `u` using only the first `prefix` rules, if one exists.
pub fn derive_with_prefix(
    u: &SeqExec,
    spec: &Specification,
    prefix: usize,
) -> Result<Option<Derivation>, SpecError> {
    if !u.is_differentiated(&spec.input_methods) {
        return Err(SpecError::NotDifferentiated);
    }
    assert!(u.len() <= 64, "sequence too long for derivation search");
    if prefix == 0 {
        return Ok(None);
    }
    let mut d = Deriver {
        spec,
        u,
        memo: HashMap::new(),
    };
    let full = if u.is_empty() {
        0
    } else {
        u64::MAX >> (64 - u.len())
    };
    let bound = prefix.min(spec.rules.len()) - 1;
    if d.derivable(full, bound) {
        Ok(Some(d.derivation(full, bound)))
    } else {
        Ok(None)
    }
}

/// `u ∈ ⟦S⟧`, with a derivation on success.
pub fn member(u: &SeqExec, spec: &Specification) -> Result<Option<Derivation>, SpecError> {
    derive_with_prefix(u, spec, spec.rules.len())
}

/// `u ∈ ⟦R_1,…,R_prefix⟧`.
pub fn is_member_prefix(u: &SeqExec, spec: &Specification, prefix: usize) -> bool {
    matches!(derive_with_prefix(u, spec, prefix), Ok(Some(_)))
}

/// Indices of every rule that can end some derivation of `u`.
pub fn final_rules(u: &SeqExec, spec: &Specification) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for (i, rule) in spec.rules.iter().enumerate() {
        if u.is_empty() {
            if in_match_set(u, rule) {
                out.insert(i);
            }
            continue;
        }
        let ok = witnesses(u, rule).into_iter().any(|w| {
            let Some(k) = w.value else { return false };
            is_member_prefix(&u.remove_key(k), spec, i + 1)
        });
        if ok {
            out.insert(i);
        }
    }
    out
}
