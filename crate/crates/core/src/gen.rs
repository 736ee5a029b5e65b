//! Random executions for property testing.
//!
//! Two shapes are mixed: fully random operations on random intervals, and
//! runs of a valid sequential object whose operations are stretched into
//! overlapping intervals and then optionally mutated.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{Action, Execution, Method, MethodEvent, OpId, Value};
use crate::spec::SpecKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomConfig {
    pub max_ops: usize,
    pub max_values: u32,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            max_ops: 7,
            max_values: 4,
        }
    }
}

pub fn methods_of(kind: SpecKind) -> &'static [Method] {
    match kind {
        SpecKind::Queue => &[Method::Enq, Method::Deq, Method::DeqEmpty],
        SpecKind::Stack => &[Method::Push, Method::Pop, Method::PopEmpty],
        SpecKind::Register => &[Method::Write, Method::Read],
        SpecKind::Mutex => &[Method::Lock, Method::Unlock],
    }
}

pub fn input_method(kind: SpecKind) -> Method {
    methods_of(kind)[0]
}

fn event(m: Method, v: u32) -> MethodEvent {
    if m.is_argumentless() {
        MethodEvent::empty(m)
    } else {
        MethodEvent::new(m, v)
    }
}

/// Lays out events on the given `(call, ret)` real-valued endpoints.
pub fn execution_from_intervals(events: &[MethodEvent], spans: &[(f64, f64)]) -> Execution {
    let mut points: Vec<(f64, bool, usize)> = Vec::with_capacity(events.len() * 2);
    for (i, &(c, r)) in spans.iter().enumerate() {
        points.push((c, false, i));
        points.push((r, true, i));
    }
    points.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let actions = points
        .into_iter()
        .map(|(_, is_ret, i)| {
            let e = events[i];
            let id = OpId::seq(i + 1).0;
            if is_ret {
                Action::ret(e.method, e.value, id)
            } else {
                Action::call(e.method, e.value, id)
            }
        })
        .collect();
    Execution::validate(actions).expect("calls precede returns")
}

/// `n` enqueue/dequeue pairs on values `first..first+n` that together cover
/// the span of one empty dequeue (operation `o1`): only the first enqueue
/// precedes it, each later enqueue completes before the previous dequeue
/// starts, and only the last dequeue follows it.
pub fn interval_family(n: usize, first: u32) -> Execution {
    let mut events = vec![MethodEvent::empty(Method::DeqEmpty)];
    let end = 10.0 * n as f64;
    let mut spans = vec![(2.0, end)];
    for i in 1..=n {
        let d = first + i as u32 - 1;
        let t = 3.0 * i as f64;
        events.push(MethodEvent::new(Method::Enq, d));
        spans.push(if i == 1 { (0.0, 1.0) } else { (2.5, t) });
        events.push(MethodEvent::new(Method::Deq, d));
        spans.push(if i == n {
            (end + 1.0, end + 2.0)
        } else {
            (t + 4.0, end + 5.0)
        });
    }
    execution_from_intervals(&events, &spans)
}

fn random_spans<R: Rng>(rng: &mut R, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            let a: f64 = rng.gen();
            let b: f64 = rng.gen();
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect()
}

fn stretched_spans<R: Rng>(rng: &mut R, n: usize) -> Vec<(f64, f64)> {
    let spread = *[0.2, 0.8, 1.5, 3.0].choose(rng).unwrap();
    (0..n)
        .map(|i| {
            let t = i as f64;
            (t - rng.gen::<f64>() * spread, t + rng.gen::<f64>() * spread)
        })
        .collect()
}

/// Re-draws duplicate input-method values; events with no free value left are
/// dropped together with their span.
fn differentiate<R: Rng>(
    rng: &mut R,
    events: &mut Vec<MethodEvent>,
    spans: &mut Vec<(f64, f64)>,
    kind: SpecKind,
    k: u32,
) {
    let input = input_method(kind);
    let mut used: Vec<u32> = Vec::new();
    let mut keep = Vec::with_capacity(events.len());
    for e in events.iter_mut() {
        let ok = match e.value {
            Value::Data(v) if e.method == input => {
                let v = if used.contains(&v) {
                    let free: Vec<u32> = (1..=k).filter(|w| !used.contains(w)).collect();
                    free.choose(rng).copied()
                } else {
                    Some(v)
                };
                if let Some(v) = v {
                    e.value = Value::Data(v);
                    used.push(v);
                }
                v.is_some()
            }
            _ => true,
        };
        keep.push(ok);
    }
    let mut it = keep.iter();
    events.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    spans.retain(|_| *it.next().unwrap());
}

/// A valid sequential run of the object.
fn valid_run<R: Rng>(rng: &mut R, kind: SpecKind, n: usize, k: u32) -> Vec<MethodEvent> {
    let mut next = 1;
    let mut store: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let can_add = next <= k;
        let add = can_add && (store.is_empty() || rng.gen_bool(0.5));
        let e = match kind {
            SpecKind::Queue | SpecKind::Stack => {
                let (p, c, empty) = if kind == SpecKind::Queue {
                    (Method::Enq, Method::Deq, Method::DeqEmpty)
                } else {
                    (Method::Push, Method::Pop, Method::PopEmpty)
                };
                if add && !(store.is_empty() && rng.gen_bool(0.2)) {
                    store.push(next);
                    next += 1;
                    event(p, next - 1)
                } else if store.is_empty() {
                    event(empty, 0)
                } else {
                    let v = if kind == SpecKind::Queue {
                        store.remove(0)
                    } else {
                        store.pop().unwrap()
                    };
                    event(c, v)
                }
            }
            SpecKind::Register => {
                if add {
                    store = vec![next];
                    next += 1;
                    event(Method::Write, next - 1)
                } else if let Some(&v) = store.last() {
                    event(Method::Read, v)
                } else {
                    break;
                }
            }
            SpecKind::Mutex => {
                if let Some(v) = store.pop() {
                    event(Method::Unlock, v)
                } else if can_add {
                    store.push(next);
                    next += 1;
                    event(Method::Lock, next - 1)
                } else {
                    break;
                }
            }
        };
        out.push(e);
    }
    out
}

fn mutate<R: Rng>(rng: &mut R, events: &mut [MethodEvent], kind: SpecKind, k: u32) {
    if events.is_empty() {
        return;
    }
    let i = rng.gen_range(0..events.len());
    if rng.gen_bool(0.5) {
        let m = *methods_of(kind).choose(rng).unwrap();
        events[i] = event(m, events[i].value.data().unwrap_or_else(|| rng.gen_range(1..=k)));
    } else if !events[i].method.is_argumentless() {
        events[i].value = Value::Data(rng.gen_range(1..=k));
    }
}

/// A random complete execution over the methods of `kind`, differentiated.
pub fn random_execution<R: Rng>(rng: &mut R, kind: SpecKind, cfg: RandomConfig) -> Execution {
    let n = rng.gen_range(0..=cfg.max_ops);
    let k = cfg.max_values.max(1);
    let (mut events, spans) = if rng.gen_bool(0.4) {
        let methods = methods_of(kind);
        let events: Vec<MethodEvent> = (0..n)
            .map(|_| event(*methods.choose(rng).unwrap(), rng.gen_range(1..=k)))
            .collect();
        let spans = random_spans(rng, n);
        (events, spans)
    } else {
        let mut events = valid_run(rng, kind, n, k);
        let mutations = *[0, 0, 1, 1, 2].choose(rng).unwrap();
        for _ in 0..mutations {
            mutate(rng, &mut events, kind, k);
        }
        let spans = stretched_spans(rng, events.len());
        (events, spans)
    };
    let mut spans = spans;
    differentiate(rng, &mut events, &mut spans, kind, k);
    execution_from_intervals(&events, &spans)
}


/// Implementation variants the simulator can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Reference,
    /// Dequeues the second element instead of the head, half of the time.
    QueueFifoSwap,
    /// Reports an empty queue a third of the time although it is not.
    QueueFalseEmpty,
    /// Pops the element below the top, half of the time.
    StackLifoSwap,
    /// Reads the previously written value, half of the time.
    RegisterStaleRead,
    /// Grants the lock even when it is held.
    MutexNoExclusion,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Reference,
        Variant::QueueFifoSwap,
        Variant::QueueFalseEmpty,
        Variant::StackLifoSwap,
        Variant::RegisterStaleRead,
        Variant::MutexNoExclusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Reference => "reference",
            Variant::QueueFifoSwap => "queue-fifo-swap",
            Variant::QueueFalseEmpty => "queue-false-empty",
            Variant::StackLifoSwap => "stack-lifo-swap",
            Variant::RegisterStaleRead => "register-stale-read",
            Variant::MutexNoExclusion => "mutex-no-exclusion",
        }
    }

    /// The object a mutant belongs to; `None` for the reference variant.
    pub fn kind(self) -> Option<SpecKind> {
        match self {
            Variant::Reference => None,
            Variant::QueueFifoSwap | Variant::QueueFalseEmpty => Some(SpecKind::Queue),
            Variant::StackLifoSwap => Some(SpecKind::Stack),
            Variant::RegisterStaleRead => Some(SpecKind::Register),
            Variant::MutexNoExclusion => Some(SpecKind::Mutex),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("unknown implementation variant {0:?}")]
    UnknownVariant(String),
    #[error("variant {variant} does not implement a {spec}")]
    VariantMismatch { variant: Variant, spec: SpecKind },
    #[error("thread count must be positive")]
    NoThreads,
}

impl std::str::FromStr for Variant {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, GenError> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| GenError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub spec: SpecKind,
    pub variant: Variant,
    /// Number of operations.
    pub ops: usize,
    pub threads: usize,
    pub seed: u64,
    /// Size of the pool of input values; producers stop when it runs out.
    pub values: u32,
}

impl GeneratorConfig {
    pub fn new(spec: SpecKind) -> Self {
        GeneratorConfig {
            spec,
            variant: Variant::Reference,
            ops: 8,
            threads: 2,
            seed: 0,
            values: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    /// Called; the atomic step has not happened yet.
    Pending,
    /// The step happened; the return is next.
    Done,
}

struct Thread {
    phase: Phase,
    /// Index of the current operation's call action.
    call: usize,
    /// Value locked by this thread, if any.
    held: Option<u32>,
}

struct Object {
    kind: SpecKind,
    variant: Variant,
    store: Vec<u32>,
    previous: Option<u32>,
    locked: bool,
}

impl Object {
    /// Whether a pending `method` may take its atomic step now.
    fn enabled(&self, method: Method) -> bool {
        match method {
            Method::Lock => !self.locked || self.variant == Variant::MutexNoExclusion,
            _ => true,
        }
    }

    /// Applies a pending operation; returns the method and value it returns with.
    fn step<R: Rng>(&mut self, rng: &mut R, method: Method, value: Value) -> (Method, Value) {
        let bug = |rng: &mut R, v: Variant, p: f64| self.variant == v && rng.gen_bool(p);
        match method {
            Method::Enq | Method::Push => {
                self.store.push(value.data().expect("producer value"));
                (method, value)
            }
            Method::Deq | Method::Pop => {
                let (empty, swap) = if self.kind == SpecKind::Queue {
                    (Method::DeqEmpty, Variant::QueueFifoSwap)
                } else {
                    (Method::PopEmpty, Variant::StackLifoSwap)
                };
                if self.store.is_empty() || bug(rng, Variant::QueueFalseEmpty, 1.0 / 3.0) {
                    return (empty, Value::Ignored);
                }
                let n = self.store.len();
                let mut i = if self.kind == SpecKind::Queue { 0 } else { n - 1 };
                if n >= 2 && bug(rng, swap, 0.5) {
                    i = if self.kind == SpecKind::Queue { 1 } else { n - 2 };
                }
                (method, Value::Data(self.store.remove(i)))
            }
            Method::Write => {
                self.previous = self.store.last().copied();
                self.store = vec![value.data().expect("written value")];
                (method, value)
            }
            Method::Read => {
                let mut v = self.store.last().copied();
                if self.previous.is_some() && bug(rng, Variant::RegisterStaleRead, 0.5) {
                    v = self.previous;
                }
                (method, Value::Data(v.expect("reads follow a write")))
            }
            Method::Lock => {
                self.locked = true;
                (method, value)
            }
            Method::Unlock => {
                self.locked = false;
                (method, value)
            }
            Method::DeqEmpty | Method::PopEmpty => unreachable!("chosen at the step"),
        }
    }
}

/// Simulates `cfg.threads` threads running `cfg.ops` operations in total on
/// the chosen implementation. At each point the scheduler picks uniformly
/// among threads with an enabled step (call, atomic step or return) using
/// ChaCha8 seeded with `cfg.seed`. Operation ids are `o1, o2, ...` in call
/// order. Consumers are recorded as `Deq`/`Pop` at their call and fixed up
/// with the method and value they return with.
pub fn generate(cfg: &GeneratorConfig) -> Result<Execution, GenError> {
    use rand::SeedableRng;
    if let Some(k) = cfg.variant.kind() {
        if k != cfg.spec {
            return Err(GenError::VariantMismatch {
                variant: cfg.variant,
                spec: cfg.spec,
            });
        }
    }
    if cfg.threads == 0 {
        return Err(GenError::NoThreads);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut obj = Object {
        kind: cfg.spec,
        variant: cfg.variant,
        store: Vec::new(),
        previous: None,
        locked: false,
    };
    let mut threads: Vec<Thread> = (0..cfg.threads)
        .map(|_| Thread {
            phase: Phase::Idle,
            call: 0,
            held: None,
        })
        .collect();
    let mut actions: Vec<Action> = Vec::new();
    let mut started = 0usize;
    let mut next_value = 1u32;
    loop {
        let enabled: Vec<usize> = (0..threads.len())
            .filter(|&t| match threads[t].phase {
                Phase::Idle => started < cfg.ops || threads[t].held.is_some(),
                Phase::Pending => obj.enabled(actions[threads[t].call].method),
                Phase::Done => true,
            })
            .collect();
        let Some(&t) = enabled.choose(&mut rng) else { break };
        let owed = threads.iter().filter(|x| x.held.is_some()).count();
        let th = &mut threads[t];
        match th.phase {
            Phase::Idle => {
                let fresh = next_value <= cfg.values;
                let (method, value) = match cfg.spec {
                    SpecKind::Queue | SpecKind::Stack => {
                        let (p, c) = if cfg.spec == SpecKind::Queue {
                            (Method::Enq, Method::Deq)
                        } else {
                            (Method::Push, Method::Pop)
                        };
                        if fresh && rng.gen_bool(0.5) {
                            next_value += 1;
                            (p, Value::Data(next_value - 1))
                        } else {
                            (c, Value::Data(0))
                        }
                    }
                    SpecKind::Register => {
                        let written = !obj.store.is_empty();
                        if fresh && (!written || rng.gen_bool(0.5)) {
                            next_value += 1;
                            (Method::Write, Value::Data(next_value - 1))
                        } else if written {
                            (Method::Read, Value::Data(0))
                        } else {
                            // nothing to read and no value left to write
                            started = cfg.ops;
                            continue;
                        }
                    }
                    SpecKind::Mutex => match th.held.take() {
                        Some(v) => (Method::Unlock, Value::Data(v)),
                        None if fresh && started + owed + 2 <= cfg.ops => {
                            next_value += 1;
                            th.held = Some(next_value - 1);
                            (Method::Lock, Value::Data(next_value - 1))
                        }
                        None => {
                            started = cfg.ops;
                            continue;
                        }
                    },
                };
                started += 1;
                th.call = actions.len();
                th.phase = Phase::Pending;
                actions.push(Action::call(method, value, OpId::seq(actions.len()).0));
            }
            Phase::Pending => {
                let call = &actions[th.call];
                let (method, value) = obj.step(&mut rng, call.method, call.value);
                let call = &mut actions[th.call];
                call.method = method;
                call.value = value;
                th.phase = Phase::Done;
            }
            Phase::Done => {
                let call = actions[th.call].clone();
                actions.push(Action {
                    kind: crate::model::ActionKind::Ret,
                    ..call
                });
                th.phase = Phase::Idle;
            }
        }
    }
    let mut n = 0;
    let mut ids = std::collections::HashMap::new();
    for a in &mut actions {
        let id = ids.entry(a.op.0.clone()).or_insert_with(|| {
            n += 1;
            OpId::seq(n).0
        });
        a.op = OpId(id.clone());
    }
    Ok(Execution::validate(actions).expect("simulated executions are well formed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_executions_are_complete_and_differentiated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in SpecKind::ALL {
            for _ in 0..200 {
                let e = random_execution(&mut rng, kind, RandomConfig::default());
                assert!(e.is_complete());
                assert!(e.is_differentiated(&[input_method(kind)]));
                let h = e.history().unwrap();
                assert!(h.len() <= 7);
                assert!(h.dom().iter().all(|&v| (1..=4).contains(&v)));
            }
        }
    }

    fn cfg(spec: SpecKind, variant: Variant, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            spec,
            variant,
            ops: 8,
            threads: 3,
            seed,
            values: 6,
        }
    }

    #[test]
    fn same_seed_same_trace() {
        for spec in SpecKind::ALL {
            let a = crate::trace::to_string(&generate(&cfg(spec, Variant::Reference, 5)).unwrap());
            let b = crate::trace::to_string(&generate(&cfg(spec, Variant::Reference, 5)).unwrap());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_ops_is_empty() {
        for spec in SpecKind::ALL {
            let mut c = cfg(spec, Variant::Reference, 1);
            c.ops = 0;
            assert!(generate(&c).unwrap().is_empty());
        }
    }

    #[test]
    fn traces_are_complete_differentiated_and_numbered() {
        for spec in SpecKind::ALL {
            for seed in 0..50 {
                let e = generate(&cfg(spec, Variant::Reference, seed)).unwrap();
                assert!(e.is_complete());
                assert!(e.is_differentiated(&[input_method(spec)]));
                let h = e.history().unwrap();
                assert_eq!(h.len(), 8, "{spec} seed {seed}");
                let first_calls: Vec<String> = e
                    .actions()
                    .iter()
                    .filter(|a| a.kind == crate::model::ActionKind::Call)
                    .map(|a| a.op.0.clone())
                    .collect();
                let expected: Vec<String> = (1..=8).map(|i| format!("o{i}")).collect();
                assert_eq!(first_calls, expected);
            }
        }
    }

    #[test]
    fn reference_variants_are_linearizable() {
        for spec in SpecKind::ALL {
            let s = crate::spec::builtin(spec);
            for seed in 0..100 {
                let h = generate(&cfg(spec, Variant::Reference, seed)).unwrap().history().unwrap();
                assert!(crate::monitor::check(&h, &s).unwrap().linearizable, "{spec} seed {seed}");
            }
        }
    }

    #[test]
    fn mutants_are_caught() {
        for variant in Variant::ALL.into_iter().skip(1) {
            let spec = variant.kind().unwrap();
            let s = crate::spec::builtin(spec);
            let caught = (0..100).any(|seed| {
                let h = generate(&cfg(spec, variant, seed)).unwrap().history().unwrap();
                !crate::monitor::check(&h, &s).unwrap().linearizable
            });
            assert!(caught, "{variant}");
        }
    }

    #[test]
    fn variant_names_and_mismatch() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("nope".parse::<Variant>(), Err(GenError::UnknownVariant(_))));
        let c = cfg(SpecKind::Stack, Variant::QueueFifoSwap, 0);
        assert!(matches!(generate(&c), Err(GenError::VariantMismatch { .. })));
    }
}
