//! Thread programs over finite shared variables and data cells.
//!
//! A model file is line based; `#` starts a comment.
//!
//! ```text
//! spec Queue                 # optional, checked against --spec
//! threads 2                  # optional default thread count
//! var size 0..2              # finite shared variable, initial value = lower bound
//! var turn 0..1 = 1          # explicit initial value
//! cell c 2                   # data cells c[0], c[1], initially empty
//! reg r                      # per-thread data registers, initially empty
//! init idle                  # initial control location
//! idle -> enq : pick r; call Enq r
//! enq -> done : when size = 0; store c[0] r; set size = 1
//! done -> idle : ret
//! ```
//!
//! Every edge is one atomic step running its instructions in order; a
//! blocked instruction disables the edge. Instructions:
//!
//! | instruction | effect |
//! |-------------|--------|
//! | `pick r` | `r` takes any of the data values 1, 2, 3 |
//! | `call M r`, `call M` | emits the call; argumentless methods take no register |
//! | `ret`, `ret M` | emits the return of the pending operation |
//! | `when x = k`, `when x != k` | blocks unless the variable test holds |
//! | `set x = k`, `inc x`, `dec x` | updates a variable; `inc`/`dec` block at the domain bounds |
//! | `load r c[i]`, `store c[i] r`, `clear c[i]`, `move c[i] c[j]`, `copy r s` | copies data |
//! | `check r = c[i]` | blocks unless `r` and the cell hold the same value; validates a guessed result |
//!
//! Cell indices are constants or variables. Data values are never compared
//! except by `check`, which only confirms a value picked for a result.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::automata::Letter;
use crate::model::{ActionKind, Method};
use crate::spec::SpecKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Var {
    pub name: String,
    pub lo: u8,
    pub hi: u8,
    pub init: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellArray {
    pub name: String,
    pub base: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Index {
    Const(usize),
    Var(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRef {
    pub array: usize,
    pub index: Index,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Pick(usize),
    Call(Method, Option<usize>),
    Ret(Option<Method>),
    When(usize, bool, u8),
    Set(usize, u8),
    Inc(usize),
    Dec(usize),
    Load(usize, CellRef),
    Store(CellRef, usize),
    Clear(CellRef),
    Move(CellRef, CellRef),
    Copy(usize, usize),
    Check(usize, CellRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgEdge {
    pub from: usize,
    pub to: usize,
    pub instrs: Vec<Instr>,
    pub line: usize,
}

/// Whether a thread at a location is inside an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Idle,
    Busy(Method),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub spec: Option<SpecKind>,
    pub threads: Option<usize>,
    pub vars: Vec<Var>,
    pub cells: Vec<CellArray>,
    pub regs: Vec<String>,
    pub locations: Vec<String>,
    pub init: usize,
    pub edges: Vec<ProgEdge>,
    /// Per location; `None` for unreachable ones.
    pub status: Vec<Option<Status>>,
    /// Edge indices leaving each location, in file order.
    pub out: Vec<Vec<usize>>,
}

/// Shared state: variable values, then cell contents (0 = empty).
pub type Shared = Vec<u8>;

/// One thread: control location, registers (0 = empty) and the value of its
/// pending call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Local {
    pub loc: usize,
    pub regs: Vec<u8>,
    pub pending: u8,
}

/// A successor of one edge firing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firing {
    pub local: Local,
    pub shared: Shared,
    pub letter: Option<Letter>,
    /// Values chosen by the `pick` instructions, in order.
    pub picks: Vec<u8>,
}

impl Program {
    pub fn cell_count(&self) -> usize {
        self.cells.iter().map(|c| c.len).sum()
    }

    pub fn initial_shared(&self) -> Shared {
        let mut s: Shared = self.vars.iter().map(|v| v.init).collect();
        s.extend(std::iter::repeat_n(0, self.cell_count()));
        s
    }

    pub fn initial_local(&self) -> Local {
        Local {
            loc: self.init,
            regs: vec![0; self.regs.len()],
            pending: 0,
        }
    }

    pub fn is_quiescent(&self, loc: usize) -> bool {
        !matches!(self.status[loc], Some(Status::Busy(_)))
    }

    /// Methods appearing in calls.
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for e in &self.edges {
            for i in &e.instrs {
                if let Instr::Call(m, _) = i {
                    if !out.contains(m) {
                        out.push(*m);
                    }
                }
            }
        }
        out
    }

    fn cell_slot(&self, shared: &Shared, c: CellRef) -> Option<usize> {
        let arr = &self.cells[c.array];
        let i = match c.index {
            Index::Const(k) => k,
            Index::Var(v) => shared[v] as usize,
        };
        (i < arr.len).then(|| self.vars.len() + arr.base + i)
    }

    /// Shared slots an edge may read or write.
    pub fn footprint(&self, edge: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let cell = |c: &CellRef, out: &mut Vec<usize>| {
            let arr = &self.cells[c.array];
            match c.index {
                Index::Const(k) => out.push(self.vars.len() + arr.base + k),
                Index::Var(v) => {
                    out.push(v);
                    out.extend((0..arr.len).map(|k| self.vars.len() + arr.base + k));
                }
            }
        };
        for i in &self.edges[edge].instrs {
            match i {
                Instr::When(v, _, _) | Instr::Set(v, _) | Instr::Inc(v) | Instr::Dec(v) => {
                    out.push(*v)
                }
                Instr::Load(_, c) | Instr::Store(c, _) | Instr::Clear(c) | Instr::Check(_, c) => {
                    cell(c, &mut out)
                }
                Instr::Move(a, b) => {
                    cell(a, &mut out);
                    cell(b, &mut out);
                }
                _ => {}
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Domain of a shared slot.
    pub fn slot_values(&self, slot: usize) -> std::ops::RangeInclusive<u8> {
        match self.vars.get(slot) {
            Some(v) => v.lo..=v.hi,
            None => 0..=3,
        }
    }

    pub fn slot_name(&self, slot: usize) -> String {
        if let Some(v) = self.vars.get(slot) {
            return v.name.clone();
        }
        let k = slot - self.vars.len();
        let arr = self
            .cells
            .iter()
            .find(|a| (a.base..a.base + a.len).contains(&k))
            .expect("cell slot");
        format!("{}[{}]", arr.name, k - arr.base)
    }

    /// All successors of firing `edge` from the given thread and shared state.
    pub fn fire(&self, edge: usize, local: &Local, shared: &Shared) -> Vec<Firing> {
        let e = &self.edges[edge];
        let mut out = Vec::new();
        let start = Firing {
            local: Local {
                loc: e.to,
                ..local.clone()
            },
            shared: shared.clone(),
            letter: None,
            picks: Vec::new(),
        };
        self.run(&e.instrs, local.loc, start, &mut out);
        out
    }

    fn run(&self, instrs: &[Instr], from: usize, mut st: Firing, out: &mut Vec<Firing>) {
        let Some((first, rest)) = instrs.split_first() else {
            out.push(st);
            return;
        };
        match *first {
            Instr::Pick(r) => {
                for v in 1..=3 {
                    let mut next = st.clone();
                    next.local.regs[r] = v;
                    next.picks.push(v);
                    self.run(rest, from, next, out);
                }
                return;
            }
            Instr::Call(m, None) => {
                // an argumentless operation may be the one singled out as value 2 or 3
                for v in [0, 2, 3] {
                    let mut next = st.clone();
                    next.local.pending = v;
                    next.letter = Some(Letter {
                        kind: ActionKind::Call,
                        method: m,
                        value: v,
                    });
                    self.run(rest, from, next, out);
                }
                return;
            }
            Instr::Call(m, Some(r)) => {
                let v = st.local.regs[r];
                if v == 0 {
                    return;
                }
                st.local.pending = v;
                st.letter = Some(Letter {
                    kind: ActionKind::Call,
                    method: m,
                    value: v,
                });
            }
            Instr::Ret(_) => {
                let Some(Status::Busy(m)) = self.status[from] else {
                    return;
                };
                st.letter = Some(Letter {
                    kind: ActionKind::Ret,
                    method: m,
                    value: st.local.pending,
                });
                st.local.pending = 0;
            }
            Instr::When(v, eq, k) => {
                if (st.shared[v] == k) != eq {
                    return;
                }
            }
            Instr::Set(v, k) => st.shared[v] = k,
            Instr::Inc(v) => {
                if st.shared[v] >= self.vars[v].hi {
                    return;
                }
                st.shared[v] += 1;
            }
            Instr::Dec(v) => {
                if st.shared[v] <= self.vars[v].lo {
                    return;
                }
                st.shared[v] -= 1;
            }
            Instr::Load(r, c) => {
                let Some(s) = self.cell_slot(&st.shared, c) else { return };
                st.local.regs[r] = st.shared[s];
            }
            Instr::Store(c, r) => {
                let Some(s) = self.cell_slot(&st.shared, c) else { return };
                st.shared[s] = st.local.regs[r];
            }
            Instr::Clear(c) => {
                let Some(s) = self.cell_slot(&st.shared, c) else { return };
                st.shared[s] = 0;
            }
            Instr::Move(a, b) => {
                let (Some(sa), Some(sb)) = (self.cell_slot(&st.shared, a), self.cell_slot(&st.shared, b))
                else {
                    return;
                };
                st.shared[sa] = st.shared[sb];
            }
            Instr::Copy(a, b) => st.local.regs[a] = st.local.regs[b],
            Instr::Check(r, c) => {
                let Some(s) = self.cell_slot(&st.shared, c) else { return };
                if st.local.regs[r] == 0 || st.local.regs[r] != st.shared[s] {
                    return;
                }
            }
        }
        self.run(rest, from, st, out);
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

struct Parser {
    spec: Option<SpecKind>,
    threads: Option<usize>,
    vars: Vec<Var>,
    cells: Vec<CellArray>,
    regs: Vec<String>,
    locations: Vec<String>,
    loc_ids: BTreeMap<String, usize>,
    init: Option<usize>,
    edges: Vec<ProgEdge>,
}

fn err(line: usize, msg: impl Into<String>) -> ProgramError {
    ProgramError::Parse {
        line,
        msg: msg.into(),
    }
}

fn ident(line: usize, s: &str) -> Result<String, ProgramError> {
    let ok = !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !s.starts_with(|c: char| c.is_ascii_digit());
    if ok {
        Ok(s.to_string())
    } else {
        Err(err(line, format!("bad name {s:?}")))
    }
}

fn number<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, ProgramError> {
    s.parse().map_err(|_| err(line, format!("bad number {s:?}")))
}

impl Parser {
    fn taken(&self, name: &str) -> bool {
        self.vars.iter().any(|v| v.name == name)
            || self.cells.iter().any(|c| c.name == name)
            || self.regs.iter().any(|r| r == name)
    }

    fn declare(&mut self, line: usize, name: &str) -> Result<String, ProgramError> {
        let name = ident(line, name)?;
        if self.taken(&name) {
            return Err(err(line, format!("{name} declared twice")));
        }
        Ok(name)
    }

    fn location(&mut self, line: usize, name: &str) -> Result<usize, ProgramError> {
        let name = ident(line, name)?;
        let next = self.locations.len();
        let id = *self.loc_ids.entry(name.clone()).or_insert(next);
        if id == next {
            self.locations.push(name);
        }
        Ok(id)
    }

    fn var(&self, line: usize, s: &str) -> Result<usize, ProgramError> {
        self.vars
            .iter()
            .position(|v| v.name == s)
            .ok_or_else(|| err(line, format!("unknown variable {s:?}")))
    }

    fn reg(&self, line: usize, s: &str) -> Result<usize, ProgramError> {
        self.regs
            .iter()
            .position(|r| r == s)
            .ok_or_else(|| err(line, format!("unknown register {s:?}")))
    }

    fn cell(&self, line: usize, s: &str) -> Result<CellRef, ProgramError> {
        let (name, index) = match s.split_once('[') {
            Some((n, rest)) => {
                let i = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("bad cell {s:?}")))?;
                (n, Some(i))
            }
            None => (s, None),
        };
        let array = self
            .cells
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| err(line, format!("unknown cell {name:?}")))?;
        let len = self.cells[array].len;
        let index = match index {
            None if len == 1 => Index::Const(0),
            None => return Err(err(line, format!("{name} needs an index"))),
            Some(i) if i.starts_with(|c: char| c.is_ascii_digit()) => {
                let k: usize = number(line, i)?;
                if k >= len {
                    return Err(err(line, format!("index {k} out of {name}[{len}]")));
                }
                Index::Const(k)
            }
            Some(i) => Index::Var(self.var(line, i)?),
        };
        Ok(CellRef { array, index })
    }

    fn value_of(&self, line: usize, var: usize, s: &str) -> Result<u8, ProgramError> {
        let k: u8 = number(line, s)?;
        let v = &self.vars[var];
        if !(v.lo..=v.hi).contains(&k) {
            return Err(err(line, format!("{k} outside the domain of {}", v.name)));
        }
        Ok(k)
    }

    fn instr(&self, line: usize, text: &str) -> Result<Instr, ProgramError> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let bad = || err(line, format!("bad instruction {text:?}"));
        let method = |s: &str| -> Result<Method, ProgramError> {
            s.parse().map_err(|_| err(line, format!("unknown method {s:?}")))
        };
        Ok(match words.as_slice() {
            ["pick", r] => Instr::Pick(self.reg(line, r)?),
            ["call", m] => {
                let m = method(m)?;
                if !m.is_argumentless() {
                    return Err(err(line, format!("{m} needs a register")));
                }
                Instr::Call(m, None)
            }
            ["call", m, r] => {
                let m = method(m)?;
                if m.is_argumentless() {
                    return Err(err(line, format!("{m} takes no value")));
                }
                Instr::Call(m, Some(self.reg(line, r)?))
            }
            ["ret"] => Instr::Ret(None),
            ["ret", m] => Instr::Ret(Some(method(m)?)),
            ["when", x, op, k] if *op == "=" || *op == "!=" => {
                let v = self.var(line, x)?;
                Instr::When(v, *op == "=", self.value_of(line, v, k)?)
            }
            ["set", x, "=", k] => {
                let v = self.var(line, x)?;
                Instr::Set(v, self.value_of(line, v, k)?)
            }
            ["inc", x] => Instr::Inc(self.var(line, x)?),
            ["dec", x] => Instr::Dec(self.var(line, x)?),
            ["load", r, c] => Instr::Load(self.reg(line, r)?, self.cell(line, c)?),
            ["store", c, r] => Instr::Store(self.cell(line, c)?, self.reg(line, r)?),
            ["clear", c] => Instr::Clear(self.cell(line, c)?),
            ["move", a, b] => Instr::Move(self.cell(line, a)?, self.cell(line, b)?),
            ["copy", a, b] => Instr::Copy(self.reg(line, a)?, self.reg(line, b)?),
            ["check", r, "=", c] => Instr::Check(self.reg(line, r)?, self.cell(line, c)?),
            _ => return Err(bad()),
        })
    }

    fn line(&mut self, line: usize, text: &str) -> Result<(), ProgramError> {
        if let Some((head, body)) = text.split_once("->") {
            let from = self.location(line, head.trim())?;
            let (to, instrs) = match body.split_once(':') {
                Some((t, i)) => (t.trim(), i),
                None => (body.trim(), ""),
            };
            let to = self.location(line, to)?;
            let instrs = instrs
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| self.instr(line, s))
                .collect::<Result<Vec<_>, _>>()?;
            self.edges.push(ProgEdge {
                from,
                to,
                instrs,
                line,
            });
            return Ok(());
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            ["spec", s] => {
                self.spec = Some(s.parse().map_err(|_| err(line, format!("unknown specification {s:?}")))?)
            }
            ["threads", n] => self.threads = Some(number(line, n)?),
            ["var", name, range, rest @ ..] => {
                let name = self.declare(line, name)?;
                let (lo, hi) = range
                    .split_once("..")
                    .ok_or_else(|| err(line, format!("bad range {range:?}")))?;
                let (lo, hi): (u8, u8) = (number(line, lo)?, number(line, hi)?);
                if lo > hi {
                    return Err(err(line, format!("empty range {range}")));
                }
                let init = match rest {
                    [] => lo,
                    ["=", k] => number(line, k)?,
                    _ => return Err(err(line, "expected `= value`")),
                };
                if !(lo..=hi).contains(&init) {
                    return Err(err(line, format!("initial value {init} outside {range}")));
                }
                self.vars.push(Var { name, lo, hi, init });
            }
            ["cell", name, rest @ ..] => {
                let name = self.declare(line, name)?;
                let len = match rest {
                    [] => 1,
                    [n] => number(line, n)?,
                    _ => return Err(err(line, "expected `cell name [length]`")),
                };
                if len == 0 {
                    return Err(err(line, "cell arrays need at least one cell"));
                }
                let base = self.cells.iter().map(|c| c.len).sum();
                self.cells.push(CellArray { name, base, len });
            }
            ["reg", names @ ..] if !names.is_empty() => {
                for n in names {
                    let n = self.declare(line, n)?;
                    self.regs.push(n);
                }
            }
            ["init", l] => self.init = Some(self.location(line, l)?),
            _ => return Err(err(line, format!("unrecognised line {text:?}"))),
        }
        Ok(())
    }
}

/// Parses and validates a model.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let mut p = Parser {
        spec: None,
        threads: None,
        vars: vec![],
        cells: vec![],
        regs: vec![],
        locations: vec![],
        loc_ids: BTreeMap::new(),
        init: None,
        edges: vec![],
    };
    for (i, raw) in text.lines().enumerate() {
        let t = raw.split('#').next().unwrap().trim();
        if !t.is_empty() {
            p.line(i + 1, t)?;
        }
    }
    let init = p
        .init
        .ok_or_else(|| ProgramError::Invalid("no `init` location".into()))?;
    let mut out = vec![Vec::new(); p.locations.len()];
    for (i, e) in p.edges.iter().enumerate() {
        out[e.from].push(i);
    }
    let mut prog = Program {
        spec: p.spec,
        threads: p.threads,
        vars: p.vars,
        cells: p.cells,
        regs: p.regs,
        locations: p.locations,
        init,
        edges: p.edges,
        status: vec![],
        out,
    };
    prog.status = statuses(&prog)?;
    Ok(prog)
}

/// Propagates operation status from the initial location and rejects edges
/// that call inside an operation, return outside one, or reach a location
/// with two different statuses.
fn statuses(p: &Program) -> Result<Vec<Option<Status>>, ProgramError> {
    let mut status: Vec<Option<Status>> = vec![None; p.locations.len()];
    status[p.init] = Some(Status::Idle);
    let mut queue = VecDeque::from([p.init]);
    while let Some(l) = queue.pop_front() {
        for &ei in &p.out[l] {
            let e = &p.edges[ei];
            let mut s = status[l].unwrap();
            let mut actions = 0;
            for i in &e.instrs {
                let bad = |msg: String| {
                    ProgramError::Invalid(format!("line {}: {msg}", e.line))
                };
                match (i, s) {
                    (Instr::Call(m, _), Status::Idle) => s = Status::Busy(*m),
                    (Instr::Call(m, _), Status::Busy(b)) => {
                        return Err(bad(format!("call {m} inside {b}")))
                    }
                    (Instr::Ret(m), Status::Busy(b)) => {
                        if m.is_some_and(|m| m != b) {
                            return Err(bad(format!("ret {} inside {b}", m.unwrap())));
                        }
                        s = Status::Idle;
                    }
                    (Instr::Ret(_), Status::Idle) => {
                        return Err(bad("ret outside an operation".into()))
                    }
                    _ => continue,
                }
                actions += 1;
                if actions > 1 {
                    return Err(bad("at most one call or ret per edge".into()));
                }
            }
            match status[e.to] {
                None => {
                    status[e.to] = Some(s);
                    queue.push_back(e.to);
                }
                Some(t) if t != s => {
                    return Err(ProgramError::Invalid(format!(
                        "location {} is reached both {:?} and {:?}",
                        p.locations[e.to], t, s
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok(status)
}
