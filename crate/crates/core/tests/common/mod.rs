#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use linrv::model::{key_subsets, History, Key, SeqExec};
use linrv::oracle::{Linearization, Oracle};
use linrv::spec::{matches_rule, member, witnesses, Specification};
use linrv::{Method, MethodEvent, SpecKind, Value};

/// A concrete sequential object, independent of the rule specifications.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Object {
    items: VecDeque<u32>,
    held: Option<u32>,
    written: Option<u32>,
}

impl Object {
    /// Applies one event; `false` when the object would not produce it.
    pub fn step(&mut self, kind: SpecKind, e: &MethodEvent) -> bool {
        let v = e.value.data();
        match (kind, e.method) {
            (SpecKind::Queue, Method::Enq) | (SpecKind::Stack, Method::Push) => {
                self.items.push_back(v.unwrap());
                true
            }
            (SpecKind::Queue, Method::Deq) => self.items.pop_front() == v,
            (SpecKind::Stack, Method::Pop) => self.items.pop_back() == v,
            (SpecKind::Queue, Method::DeqEmpty) | (SpecKind::Stack, Method::PopEmpty) => {
                self.items.is_empty()
            }
            (SpecKind::Register, Method::Write) => {
                self.written = v;
                true
            }
            (SpecKind::Register, Method::Read) => v.is_some() && self.written == v,
            (SpecKind::Mutex, Method::Lock) => {
                let free = self.held.is_none();
                self.held = v;
                free
            }
            (SpecKind::Mutex, Method::Unlock) => {
                let ok = self.held.is_some() && self.held == v;
                self.held = None;
                ok
            }
            _ => false,
        }
    }
}

pub fn legal(kind: SpecKind, seq: &[MethodEvent]) -> bool {
    let mut o = Object::default();
    seq.iter().all(|e| o.step(kind, e))
}

/// Backtracking search: repeatedly pick a minimal operation whose event
/// the concrete object accepts.
pub fn simulated_linearizable(h: &History, kind: SpecKind) -> bool {
    fn go(h: &History, kind: SpecKind, placed: &mut Vec<bool>, o: &Object, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        for i in 0..h.len() {
            if placed[i] || (0..h.len()).any(|j| !placed[j] && j != i && h.before(j, i)) {
                continue;
            }
            let mut next = o.clone();
            if !next.step(kind, &h.ops()[i].event) {
                continue;
            }
            placed[i] = true;
            let ok = go(h, kind, placed, &next, left - 1);
            placed[i] = false;
            if ok {
                return true;
            }
        }
        false
    }
    go(h, kind, &mut vec![false; h.len()], &Object::default(), h.len())
}

pub fn ev(m: Method, v: u32) -> MethodEvent {
    if m.is_argumentless() {
        MethodEvent::empty(m)
    } else {
        MethodEvent::new(m, v)
    }
}

/// Whether some dequeue or pop has no producer or shares its value with another one.
pub fn has_orphan_or_duplicate_consumer(h: &History, kind: SpecKind) -> bool {
    let (p, c) = match kind {
        SpecKind::Queue => (Method::Enq, Method::Deq),
        SpecKind::Stack => (Method::Push, Method::Pop),
        _ => panic!("{kind} has no consumers"),
    };
    h.dom().into_iter().any(|d| {
        let count = |m: Method| h.events().filter(|e| e.method == m && e.value == Value::Data(d)).count();
        count(c) > 0 && (count(p) == 0 || count(c) > 1)
    })
}

fn text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn is_member(u: &SeqExec, spec: &Specification) -> Result<bool, String> {
    Ok(member(u, spec).map_err(text)?.is_some())
}

/// Every key projection of a member is a member; `Ok(false)` when `u` is not one.
pub fn projection_closure(u: &SeqExec, spec: &Specification) -> Result<bool, String> {
    if !is_member(u, spec)? {
        return Ok(false);
    }
    for ks in key_subsets(&u.keys(), u.keys().len()) {
        let p = u.project_keys(&ks);
        if !is_member(&p, spec)? {
            return Err(format!("projection {p:?} of member {u:?} is not a member"));
        }
    }
    Ok(true)
}

/// Membership holds iff every key projection is matched by some rule.
pub fn sequential_characterization(u: &SeqExec, spec: &Specification) -> Result<bool, String> {
    let m = is_member(u, spec)?;
    let every = key_subsets(&u.keys(), u.keys().len()).iter().all(|ks| {
        let p = u.project_keys(ks);
        spec.rules.iter().any(|r| !matches_rule(&p, r).is_empty())
    });
    if m != every {
        return Err(format!("member {m}, every projection matched {every}: {u:?}"));
    }
    Ok(m)
}

/// For every rule prefix, linearizability of `h` equals linearizability of
/// every projection with respect to the union of the prefix's matching sets.
pub fn history_characterization(h: &History, spec: &Specification, oracle: &Oracle) -> Result<(), String> {
    let subsets = key_subsets(&h.keys(), h.keys().len());
    for j in 1..=spec.rules.len() {
        let whole = oracle.is_linearizable_prefix(h, spec, j).map_err(text)?.is_some();
        let mut parts = true;
        for ks in &subsets {
            if !oracle.is_linearizable_wrt_matchsets(&h.project_keys(ks), spec, j).map_err(text)? {
                parts = false;
                break;
            }
        }
        if whole != parts {
            return Err(format!("prefix {j}: whole {whole}, projections {parts}: {h:?}"));
        }
    }
    Ok(())
}

/// Checking each projection against the matching set of its last rule
/// decides linearizability.
pub fn last_rule_check(h: &History, spec: &Specification, oracle: &Oracle) -> Result<bool, String> {
    let by_last = oracle.check_exclu(h, spec).map_err(text)?;
    let lin = oracle.is_linearizable(h, spec).map_err(text)?.is_some();
    if by_last != lin {
        return Err(format!("last-rule check {by_last}, oracle {lin}: {h:?}"));
    }
    Ok(lin)
}

fn history_key(h: &History, l: &Linearization, k: Key) -> Key {
    match k {
        Key::Solo(p) => h.key_of(l.indices[p]),
        d => d,
    }
}

/// If some linearization of `h` matches rule `i` with witness `x` and
/// `h` without `x` is linearizable w.r.t. rules `1..=i`, so is `h`.
/// Returns how many (rule, witness) premises held.
pub fn step_extension(h: &History, spec: &Specification, oracle: &Oracle) -> Result<usize, String> {
    let mut premises = 0;
    for (i, rule) in spec.rules.iter().enumerate() {
        let mut keys = BTreeSet::new();
        for l in oracle.linearizations(h).map_err(text)? {
            for w in witnesses(&l.seq, rule) {
                if let Some(k) = w.value {
                    keys.insert(history_key(h, &l, k));
                }
            }
        }
        for k in keys {
            if oracle.is_linearizable_prefix(&h.remove_key(k), spec, i + 1).map_err(text)?.is_none() {
                continue;
            }
            premises += 1;
            if oracle.is_linearizable_prefix(h, spec, i + 1).map_err(text)?.is_none() {
                return Err(format!("extending by {k:?} through {} fails: {h:?}", rule.name));
            }
        }
    }
    Ok(premises)
}
