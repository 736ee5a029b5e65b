mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{
    ev, history_characterization, last_rule_check, projection_closure, sequential_characterization,
    simulated_linearizable, step_extension,
};
use linrv::gen::{execution_from_intervals, methods_of, random_execution, RandomConfig};
use linrv::model::{History, Renaming};
use linrv::monitor::{self, has_gap};
use linrv::oracle::Oracle;
use linrv::{builtin, Method, MethodEvent, OpId, SpecKind, Value};

fn kind() -> impl Strategy<Value = SpecKind> {
    prop::sample::select(SpecKind::ALL.to_vec())
}

/// Random operations on random intervals; repeated input values are dropped.
fn raw_history(kind: SpecKind, max_ops: usize) -> impl Strategy<Value = History> {
    prop::collection::vec((0..3usize, 1..=4u32, 0.0..1.0f64, 0.0..1.0f64), 0..=max_ops).prop_map(
        move |ops| {
            let methods = methods_of(kind);
            let input = methods[0];
            let mut seen = BTreeSet::new();
            let mut events = Vec::new();
            let mut spans = Vec::new();
            for (m, v, a, b) in ops {
                let m = methods[m % methods.len()];
                if m == input && !seen.insert(v) {
                    continue;
                }
                events.push(ev(m, v));
                spans.push((a.min(b), a.max(b)));
            }
            execution_from_intervals(&events, &spans).history().unwrap()
        },
    )
}

fn seeded_history(kind: SpecKind) -> impl Strategy<Value = History> {
    any::<u64>().prop_map(move |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_execution(&mut rng, kind, RandomConfig::default()).history().unwrap()
    })
}

fn small_history() -> impl Strategy<Value = (SpecKind, History)> {
    kind().prop_flat_map(|k| {
        prop_oneof![raw_history(k, 7), seeded_history(k)].prop_map(move |h| (k, h))
    })
}

/// Applies an event to a bag: dequeues remove their own value, the empty
/// dequeue needs an empty bag.
fn bag_step(bag: &mut BTreeSet<u32>, e: &MethodEvent) -> bool {
    match (e.method, e.value) {
        (Method::Enq, Value::Data(v)) => bag.insert(v),
        (Method::Deq, Value::Data(v)) => bag.remove(&v),
        (Method::DeqEmpty, _) => bag.is_empty(),
        _ => false,
    }
}

fn bag_linearizable(h: &History) -> bool {
    fn go(h: &History, placed: &mut Vec<bool>, bag: &BTreeSet<u32>, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        for i in 0..h.len() {
            if placed[i] || (0..h.len()).any(|j| !placed[j] && j != i && h.before(j, i)) {
                continue;
            }
            let mut next = bag.clone();
            if !bag_step(&mut next, &h.ops()[i].event) {
                continue;
            }
            placed[i] = true;
            let ok = go(h, placed, &next, left - 1);
            placed[i] = false;
            if ok {
                return true;
            }
        }
        false
    }
    go(h, &mut vec![false; h.len()], &BTreeSet::new(), h.len())
}

/// Matched enqueue/dequeue pairs and one empty dequeue `o1`, on random intervals.
fn pairs_with_empty() -> impl Strategy<Value = History> {
    (
        1..=4u32,
        prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 9),
        0.0..1.0f64,
        0.0..1.0f64,
    )
        .prop_map(|(k, points, a, b)| {
            let mut events = vec![MethodEvent::empty(Method::DeqEmpty)];
            let mut spans = vec![(a.min(b), a.max(b))];
            for v in 1..=k {
                let (x, y) = points[2 * v as usize - 2];
                let (z, w) = points[2 * v as usize - 1];
                events.push(MethodEvent::new(Method::Enq, v));
                spans.push((x.min(y), x.max(y)));
                events.push(MethodEvent::new(Method::Deq, v));
                spans.push((z.min(w), z.max(w)));
            }
            execution_from_intervals(&events, &spans).history().unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn monitor_oracle_and_simulation_agree((kind, h) in small_history()) {
        let spec = builtin(kind);
        let fast = monitor::check(&h, &spec).unwrap();
        let slow = Oracle::default().is_linearizable(&h, &spec).unwrap().is_some();
        prop_assert_eq!(fast.linearizable, slow);
        prop_assert_eq!(simulated_linearizable(&h, kind), slow);
        if let Some(v) = fast.violation {
            prop_assert!(monitor::evidence_holds(&h, &v), "{:?}", v);
        }
    }

    #[test]
    fn verdicts_survive_injective_renaming((kind, h) in small_history(), shift in 1..50u32) {
        let spec = builtin(kind);
        let dom: Vec<u32> = h.dom().into_iter().collect();
        let r = Renaming::from_pairs(dom.iter().rev().enumerate().map(|(i, &d)| (d, shift + 2 * i as u32)));
        let before = monitor::check(&h, &spec).unwrap();
        let after = monitor::check(&h.rename(&r), &spec).unwrap();
        prop_assert_eq!(before.linearizable, after.linearizable);
        prop_assert_eq!(
            before.violation.map(|v| v.rule),
            after.violation.map(|v| v.rule)
        );
    }

    #[test]
    fn gap_matches_bag_placement(h in pairs_with_empty()) {
        let without = h.filter_ops(|_, o| o.event.method != Method::DeqEmpty);
        prop_assume!(bag_linearizable(&without));
        prop_assert_eq!(has_gap(&h, &OpId::seq(1)).unwrap(), bag_linearizable(&h));
    }

    #[test]
    fn sequential_runs_are_characterized((kind, h) in small_history()) {
        let spec = builtin(kind);
        for l in Oracle::default().linearizations(&h).unwrap().take(4) {
            sequential_characterization(&l.seq, &spec).map_err(TestCaseError::fail)?;
            projection_closure(&l.seq, &spec).map_err(TestCaseError::fail)?;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn histories_are_characterized((kind, h) in small_history()) {
        let spec = builtin(kind);
        let oracle = Oracle::default();
        history_characterization(&h, &spec, &oracle).map_err(TestCaseError::fail)?;
        last_rule_check(&h, &spec, &oracle).map_err(TestCaseError::fail)?;
        step_extension(&h, &spec, &oracle).map_err(TestCaseError::fail)?;
    }
}
