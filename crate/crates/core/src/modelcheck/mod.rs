//! Linearizability of finite-state thread programs.
//!
//! A program violates a specification exactly when one of its complete
//! executions with values in 1..=3 is accepted by the specification's union
//! violation automaton. With a fixed number of threads the product of
//! program and automaton is searched breadth first; with unboundedly many
//! threads the product is encoded as a Petri net and the question becomes
//! coverability. Candidate counterexamples are re-run with fresh values for
//! every picked datum, so that the reported execution is differentiated, and
//! confirmed by the monitor.

mod petri;
mod program;

pub use petri::{
    coverable, coverable_with, to_petri_net, CoverOptions, CoverStats, CoverabilityTarget, Label,
    PetriNet, Transition,
};
pub use program::{
    parse_program, CellArray, CellRef, Firing, Index, Instr, Local, ProgEdge, Program,
    ProgramError, Shared, Status, Var,
};

use std::collections::HashMap;

use thiserror::Error;

use crate::automata::{self, Automaton, Letter};
use crate::model::{Action, ActionKind, Execution, Method, Value};
use crate::monitor::{self, MonitorError, Violation};
use crate::spec::Specification;

pub const DEFAULT_MAX_THREADS: usize = 3;
pub const DEFAULT_MAX_STATES: usize = 2_000_000;
pub const DEFAULT_MAX_BASIS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("state space exceeds {limit} states")]
    StateSpaceExceeded { limit: usize },
    #[error("coverability basis exceeds {limit} markings")]
    BasisSizeExceeded { limit: usize },
    #[error("{threads} threads requested, at most {limit} supported")]
    TooManyThreads { threads: usize, limit: usize },
    #[error("the model calls {method}, which {spec} does not provide")]
    ForeignMethod { method: Method, spec: String },
    #[error("replay failed: {0}")]
    Replay(String),
    #[error("the counterexample needs equal inputs, the model is not data independent")]
    NotDataIndependent,
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

/// One atomic thread step: the edge taken and the values it picked.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub thread: usize,
    pub edge: usize,
    pub picks: Vec<u8>,
}

/// Thread count of a verification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Fixed(usize),
    /// Any number of threads, at most `pending` operations open at a time.
    Unbounded { pending: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub steps: Vec<Step>,
    /// The run with its picked values in 1..=3.
    pub execution: Execution,
}

/// Outcome of [`verify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Linearizable,
    Violation {
        /// Differentiated counterexample.
        execution: Execution,
        violation: Violation,
        steps: Vec<Step>,
    },
    Inconclusive(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub threads: Threads,
    pub max_threads: usize,
    pub max_states: usize,
    pub max_basis: usize,
}

impl VerifyOptions {
    pub fn new(threads: Threads) -> Self {
        VerifyOptions {
            threads,
            max_threads: DEFAULT_MAX_THREADS,
            max_states: DEFAULT_MAX_STATES,
            max_basis: DEFAULT_MAX_BASIS,
        }
    }
}

fn concrete_action(letter: Letter, op: &str) -> Action {
    let value = if letter.method.is_argumentless() {
        Value::Ignored
    } else {
        Value::Data(letter.value as u32)
    };
    match letter.kind {
        ActionKind::Call => Action::call(letter.method, value, op),
        ActionKind::Ret => Action::ret(letter.method, value, op),
    }
}

/// Re-runs a step sequence from the initial state; threads appear on first
/// use. Returns the letters and the execution with the picked values.
pub fn replay(p: &Program, steps: &[Step]) -> Result<(Vec<Letter>, Execution), CheckError> {
    let mut shared = p.initial_shared();
    let mut locals: Vec<Local> = Vec::new();
    let mut open: Vec<Option<String>> = Vec::new();
    let mut calls = 0;
    let mut letters = Vec::new();
    let mut actions = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        while locals.len() <= s.thread {
            locals.push(p.initial_local());
            open.push(None);
        }
        let bad = |why: &str| CheckError::Replay(format!("step {i}: {why}"));
        let local = &locals[s.thread];
        if p.edges.get(s.edge).map(|e| e.from) != Some(local.loc) {
            return Err(bad("edge does not leave the thread's location"));
        }
        let f = p
            .fire(s.edge, local, &shared)
            .into_iter()
            .find(|f| f.picks == s.picks)
            .ok_or_else(|| bad("edge is disabled"))?;
        if let Some(l) = f.letter {
            let op = match l.kind {
                ActionKind::Call => {
                    calls += 1;
                    let id = format!("o{calls}");
                    open[s.thread] = Some(id.clone());
                    id
                }
                ActionKind::Ret => open[s.thread].take().ok_or_else(|| bad("return without call"))?,
            };
            letters.push(l);
            actions.push(concrete_action(l, &op));
        }
        locals[s.thread] = f.local;
        shared = f.shared;
    }
    let e = Execution::validate(actions).map_err(|e| CheckError::Replay(e.to_string()))?;
    Ok((letters, e))
}

struct UnionFind(Vec<u32>);

impl UnionFind {
    fn fresh(&mut self) -> u32 {
        let n = self.0.len() as u32;
        self.0.push(n);
        n
    }

    fn find(&mut self, x: u32) -> u32 {
        let mut r = x;
        while self.0[r as usize] != r {
            r = self.0[r as usize];
        }
        self.0[x as usize] = r;
        r
    }

    fn union(&mut self, a: u32, b: u32) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b) as usize] = a.min(b);
        }
    }
}

/// The same run with a fresh datum for every `pick`, identified only where a
/// `check` forces equality. Values are numbered 1, 2, ... in order of first
/// appearance. Fails when the result is not differentiated.
pub fn differentiate(
    p: &Program,
    steps: &[Step],
    input_methods: &[Method],
) -> Result<Execution, CheckError> {
    const EMPTY: u32 = 0;
    let mut uf = UnionFind(vec![EMPTY]);
    let mut shared = p.initial_shared();
    let nv = p.vars.len();
    let mut cells = vec![EMPTY; p.cell_count()];
    let mut locals: Vec<Local> = Vec::new();
    let mut regs: Vec<Vec<u32>> = Vec::new();
    let mut pending: Vec<u32> = Vec::new();
    let mut open: Vec<Option<String>> = Vec::new();
    let mut calls = 0;
    // (kind, method, symbol, op)
    let mut raw: Vec<(ActionKind, Method, u32, String)> = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        while locals.len() <= s.thread {
            locals.push(p.initial_local());
            regs.push(vec![EMPTY; p.regs.len()]);
            pending.push(EMPTY);
            open.push(None);
        }
        let bad = |why: &str| CheckError::Replay(format!("step {i}: {why}"));
        let f = p
            .fire(s.edge, &locals[s.thread], &shared)
            .into_iter()
            .find(|f| f.picks == s.picks)
            .ok_or_else(|| bad("edge is disabled"))?;
        // shadow the instructions on symbols, resolving indices on the
        // variables as they evolve within the edge
        let mut vars: Vec<u8> = shared[..nv].to_vec();
        let slot = |vars: &[u8], c: &CellRef| -> usize {
            let arr = &p.cells[c.array];
            arr.base
                + match c.index {
                    Index::Const(k) => k,
                    Index::Var(v) => vars[v] as usize,
                }
        };
        let r = &mut regs[s.thread];
        for ins in &p.edges[s.edge].instrs {
            match ins {
                Instr::Pick(x) => r[*x] = uf.fresh(),
                Instr::Set(v, k) => vars[*v] = *k,
                Instr::Inc(v) => vars[*v] += 1,
                Instr::Dec(v) => vars[*v] -= 1,
                Instr::Load(x, c) => r[*x] = cells[slot(&vars, c)],
                Instr::Store(c, x) => cells[slot(&vars, c)] = r[*x],
                Instr::Clear(c) => cells[slot(&vars, c)] = EMPTY,
                Instr::Move(a, b) => cells[slot(&vars, a)] = cells[slot(&vars, b)],
                Instr::Copy(a, b) => r[*a] = r[*b],
                Instr::Check(x, c) => {
                    let (a, b) = (r[*x], cells[slot(&vars, c)]);
                    if a == EMPTY || b == EMPTY {
                        return Err(bad("check on an empty datum"));
                    }
                    uf.union(a, b);
                }
                Instr::Call(m, x) => {
                    calls += 1;
                    let id = format!("o{calls}");
                    open[s.thread] = Some(id.clone());
                    pending[s.thread] = x.map_or(EMPTY, |x| r[x]);
                    raw.push((ActionKind::Call, *m, pending[s.thread], id));
                }
                Instr::Ret(_) => {
                    let Some(Status::Busy(m)) = p.status[locals[s.thread].loc] else {
                        return Err(bad("return outside an operation"));
                    };
                    let id = open[s.thread].take().ok_or_else(|| bad("return without call"))?;
                    raw.push((ActionKind::Ret, m, pending[s.thread], id));
                }
                Instr::When(..) => {}
            }
        }
        locals[s.thread] = f.local;
        shared = f.shared;
    }
    let mut numbering: HashMap<u32, u32> = HashMap::new();
    let mut actions = Vec::new();
    for (kind, m, sym, id) in raw {
        let value = if m.is_argumentless() {
            Value::Ignored
        } else {
            let root = uf.find(sym);
            let next = numbering.len() as u32 + 1;
            Value::Data(*numbering.entry(root).or_insert(next))
        };
        actions.push(match kind {
            ActionKind::Call => Action::call(m, value, id),
            ActionKind::Ret => Action::ret(m, value, id),
        });
    }
    let e = Execution::validate(actions).map_err(|e| CheckError::Replay(e.to_string()))?;
    if !e.is_differentiated(input_methods) {
        return Err(CheckError::NotDataIndependent);
    }
    Ok(e)
}

fn encode(auto: usize, shared: &[u8], locals: &[Local]) -> Box<[u8]> {
    let mut out = Vec::with_capacity(2 + shared.len() + locals.len() * 4);
    out.extend_from_slice(&(auto as u16).to_le_bytes());
    out.extend_from_slice(shared);
    for l in locals {
        out.extend_from_slice(&(l.loc as u16).to_le_bytes());
        out.push(l.pending);
        out.extend_from_slice(&l.regs);
    }
    out.into_boxed_slice()
}

fn decode(p: &Program, threads: usize, key: &[u8]) -> (usize, Shared, Vec<Local>) {
    let auto = u16::from_le_bytes([key[0], key[1]]) as usize;
    let ns = p.vars.len() + p.cell_count();
    let shared = key[2..2 + ns].to_vec();
    let w = 3 + p.regs.len();
    let locals = (0..threads)
        .map(|t| {
            let c = &key[2 + ns + t * w..2 + ns + (t + 1) * w];
            Local {
                loc: u16::from_le_bytes([c[0], c[1]]) as usize,
                pending: c[2],
                regs: c[3..].to_vec(),
            }
        })
        .collect();
    (auto, shared, locals)
}

fn check_threads(threads: usize, max: usize) -> Result<(), CheckError> {
    if threads == 0 || threads > max {
        return Err(CheckError::TooManyThreads {
            threads,
            limit: max,
        });
    }
    Ok(())
}

/// Breadth-first search of the product of `threads` copies of the program
/// with the automaton. A product state accepts when the automaton accepts and
/// no operation is pending. Successors are ordered by thread, edge, picked
/// values and automaton state, so the first accepting state found ends the
/// lexicographically least among the shortest accepted runs. `keep` sees each
/// candidate in that order; the search stops at the first one it keeps.
pub fn product_search(
    p: &Program,
    a: &Automaton,
    threads: usize,
    max_states: usize,
    mut keep: impl FnMut(&Counterexample) -> Result<bool, CheckError>,
) -> Result<Option<Counterexample>, CheckError> {
    let l0 = vec![p.initial_local(); threads];
    let s0 = p.initial_shared();
    let mut index: HashMap<Box<[u8]>, u32> = HashMap::new();
    let mut states: Vec<Box<[u8]>> = Vec::new();
    let mut parent: Vec<Option<(u32, Step)>> = Vec::new();

    let path = |parent: &[Option<(u32, Step)>], mut i: usize| {
        let mut steps = Vec::new();
        while let Some((up, s)) = &parent[i] {
            steps.push(s.clone());
            i = *up as usize;
        }
        steps.reverse();
        steps
    };
    let accepting =
        |auto: usize, locals: &[Local]| a.accepting[auto] && locals.iter().all(|l| p.is_quiescent(l.loc));

    let mut initial: Vec<usize> = a.initial.clone();
    initial.sort_unstable();
    initial.dedup();
    for &q in &initial {
        let key = encode(q, &s0, &l0);
        if index.contains_key(&key) {
            continue;
        }
        index.insert(key.clone(), states.len() as u32);
        states.push(key);
        parent.push(None);
        if accepting(q, &l0) {
            let cx = Counterexample {
                steps: vec![],
                execution: Execution::empty(),
            };
            if keep(&cx)? {
                return Ok(Some(cx));
            }
        }
    }

    let mut head = 0;
    while head < states.len() {
        let (auto, shared, locals) = decode(p, threads, &states[head]);
        for t in 0..threads {
            for &e in &p.out[locals[t].loc] {
                for f in p.fire(e, &locals[t], &shared) {
                    let targets: Vec<usize> = match f.letter {
                        None => vec![auto],
                        Some(l) => {
                            let mut v: Vec<usize> = a.step(auto, l).collect();
                            v.sort_unstable();
                            v.dedup();
                            v
                        }
                    };
                    for q in targets {
                        let mut next = locals.clone();
                        next[t] = f.local.clone();
                        let key = encode(q, &f.shared, &next);
                        if index.contains_key(&key) {
                            continue;
                        }
                        if states.len() >= max_states {
                            return Err(CheckError::StateSpaceExceeded { limit: max_states });
                        }
                        let id = states.len();
                        index.insert(key.clone(), id as u32);
                        states.push(key);
                        parent.push(Some((
                            head as u32,
                            Step {
                                thread: t,
                                edge: e,
                                picks: f.picks.clone(),
                            },
                        )));
                        if accepting(q, &next) {
                            let steps = path(&parent, id);
                            let (_, execution) = replay(p, &steps)?;
                            let cx = Counterexample { steps, execution };
                            if keep(&cx)? {
                                return Ok(Some(cx));
                            }
                        }
                    }
                }
            }
        }
        head += 1;
    }
    Ok(None)
}

/// The lexicographically least among the shortest runs of `threads` threads
/// accepted by `a`, if any.
pub fn product_reach(
    p: &Program,
    a: &Automaton,
    threads: usize,
    max_states: usize,
) -> Result<Option<Counterexample>, CheckError> {
    check_threads(threads, DEFAULT_MAX_THREADS)?;
    product_search(p, a, threads, max_states, |_| Ok(true))
}

/// Steps of a Petri-net firing sequence, attributing each thread step to the
/// earliest thread that sits in the consumed place.
pub fn witness_steps(net: &PetriNet, firing: &[usize]) -> Result<Vec<Step>, CheckError> {
    use std::collections::VecDeque;
    let mut at: HashMap<usize, VecDeque<usize>> = HashMap::new();
    let mut threads = 0;
    if let Some((place, count)) = net.thread_start {
        for _ in 0..count {
            at.entry(place).or_default().push_back(threads);
            threads += 1;
        }
    }
    let mut marking = net.initial.clone();
    let mut steps = Vec::new();
    for (i, &t) in firing.iter().enumerate() {
        net.fire(&mut marking, t)
            .map_err(|why| CheckError::Replay(format!("firing {i}: {why}")))?;
        match &net.transitions[t].label {
            Label::Spawn { place } => {
                at.entry(*place).or_default().push_back(threads);
                threads += 1;
            }
            Label::Step {
                edge,
                picks,
                from,
                to,
            } => {
                let thread = at
                    .get_mut(from)
                    .and_then(VecDeque::pop_front)
                    .ok_or_else(|| CheckError::Replay(format!("firing {i}: no thread to move")))?;
                at.entry(*to).or_default().push_back(thread);
                steps.push(Step {
                    thread,
                    edge: *edge,
                    picks: picks.clone(),
                });
            }
            Label::Accept => {}
        }
    }
    Ok(steps)
}

/// Decides linearizability of the program against a built-in specification.
pub fn verify(p: &Program, spec: &Specification, opts: &VerifyOptions) -> Result<Verdict, CheckError> {
    for m in p.methods() {
        if !spec.methods.contains(&m) {
            return Err(CheckError::ForeignMethod {
                method: m,
                spec: spec.name.clone(),
            });
        }
    }
    let a = automata::build_union(spec);
    let confirm = |steps: &[Step]| -> Result<Option<(Execution, Violation)>, CheckError> {
        let e = differentiate(p, steps, &spec.input_methods)?;
        let h = e.history().map_err(|e| CheckError::Replay(e.to_string()))?;
        Ok(monitor::check(&h, spec)?.violation.map(|v| (e, v)))
    };
    match opts.threads {
        Threads::Fixed(k) => {
            check_threads(k, opts.max_threads)?;
            let mut found = None;
            let mut unconfirmed = 0usize;
            let r = product_search(p, &a, k, opts.max_states, |cx| {
                match confirm(&cx.steps) {
                    Ok(Some(hit)) => {
                        found = Some((hit, cx.steps.clone()));
                        Ok(true)
                    }
                    Ok(None) => {
                        unconfirmed += 1;
                        Ok(false)
                    }
                    Err(CheckError::NotDataIndependent) => Err(CheckError::NotDataIndependent),
                    Err(e) => Err(e),
                }
            });
            match r {
                Ok(Some(_)) => {
                    let ((execution, violation), steps) = found.expect("kept candidate");
                    Ok(Verdict::Violation {
                        execution,
                        violation,
                        steps,
                    })
                }
                Ok(None) if unconfirmed == 0 => Ok(Verdict::Linearizable),
                Ok(None) => Ok(Verdict::Inconclusive(format!(
                    "{unconfirmed} accepted runs were not confirmed by the monitor"
                ))),
                Err(e @ (CheckError::StateSpaceExceeded { .. } | CheckError::NotDataIndependent)) => {
                    Ok(Verdict::Inconclusive(e.to_string()))
                }
                Err(e) => Err(e),
            }
        }
        Threads::Unbounded { .. } => {
            let (net, target) = to_petri_net(p, &a, opts.threads)?;
            let cover = CoverOptions {
                max_basis: opts.max_basis,
                check_antichain: false,
            };
            match coverable(&net, &target, &cover) {
                Ok(None) => Ok(Verdict::Linearizable),
                Ok(Some(firing)) => {
                    let steps = witness_steps(&net, &firing)?;
                    match confirm(&steps) {
                        Ok(Some((execution, violation))) => Ok(Verdict::Violation {
                            execution,
                            violation,
                            steps,
                        }),
                        Ok(None) => Ok(Verdict::Inconclusive(
                            "the coverability witness was not confirmed by the monitor".into(),
                        )),
                        Err(e @ CheckError::NotDataIndependent) => {
                            Ok(Verdict::Inconclusive(e.to_string()))
                        }
                        Err(e) => Err(e),
                    }
                }
                Err(e @ CheckError::BasisSizeExceeded { .. }) => Ok(Verdict::Inconclusive(e.to_string())),
                Err(e) => Err(e),
            }
        }
    }
}
