//! Petri-net image of a program composed with a violation automaton, and
//! backward coverability.
//!
//! Places: one per reachable thread-local state (control location, register
//! contents, value of the pending call), one per value of each shared slot,
//! and one per pair of automaton state and number of pending operations,
//! plus a `violation` place. A thread step consumes and re-produces the
//! places of the shared slots it touches; steps emitting an action also move
//! the automaton token. An accepting automaton state with no pending
//! operation may move its token to `violation`, the coverability target.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use crate::automata::{Automaton, Letter};
use crate::model::ActionKind;

use super::program::{Local, Program};
use super::{check_threads, CheckError, Threads, DEFAULT_MAX_THREADS};

/// Sparse multiset of places, sorted by place.
pub type Multiset = Vec<(usize, u32)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    /// A new thread starts in `place`.
    Spawn { place: usize },
    /// A thread moves from local place `from` to `to` along a program edge.
    Step {
        edge: usize,
        picks: Vec<u8>,
        from: usize,
        to: usize,
    },
    Accept,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub pre: Multiset,
    pub post: Multiset,
    pub label: Label,
}

/// A weighted token sum that every reachable marking keeps equal to `tokens`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    pub name: String,
    pub weights: Vec<(usize, u32)>,
    pub tokens: u32,
}

impl Family {
    fn plain(name: impl Into<String>, places: impl IntoIterator<Item = usize>, tokens: u32) -> Self {
        Family {
            name: name.into(),
            weights: places.into_iter().map(|p| (p, 1)).collect(),
            tokens,
        }
    }

    fn sum(&self, m: &[u32]) -> u32 {
        self.weights.iter().map(|&(p, w)| w * m[p]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PetriNet {
    pub places: Vec<String>,
    pub transitions: Vec<Transition>,
    pub initial: Vec<u32>,
    pub families: Vec<Family>,
    /// Place and number of the threads present initially.
    pub thread_start: Option<(usize, u32)>,
    /// Places holding thread tokens.
    pub local_places: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverabilityTarget {
    pub bound: Multiset,
}

fn covers(m: &[u32], bound: &[(usize, u32)]) -> bool {
    bound.iter().all(|&(p, k)| m[p] >= k)
}

impl PetriNet {
    pub fn enabled(&self, m: &[u32], t: usize) -> bool {
        covers(m, &self.transitions[t].pre)
    }

    /// Fires `t` and checks every family still holds its tokens.
    pub fn fire(&self, m: &mut [u32], t: usize) -> Result<(), String> {
        if !self.enabled(m, t) {
            return Err(format!("transition {t} is not enabled"));
        }
        let tr = &self.transitions[t];
        for &(p, k) in &tr.pre {
            m[p] -= k;
        }
        for &(p, k) in &tr.post {
            m[p] += k;
        }
        for f in &self.families {
            let sum = f.sum(m);
            if sum != f.tokens {
                return Err(format!("family {} holds {sum} tokens", f.name));
            }
        }
        Ok(())
    }

    pub fn covers(&self, m: &[u32], target: &CoverabilityTarget) -> bool {
        covers(m, &target.bound)
    }

    /// Families some transition does not conserve.
    pub fn unconserved_families(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.families {
            let weight: HashMap<usize, u32> = f.weights.iter().copied().collect();
            let count = |ms: &Multiset| -> u32 {
                ms.iter().map(|(p, k)| weight.get(p).map_or(0, |w| w * k)).sum()
            };
            if self.transitions.iter().any(|t| count(&t.pre) != count(&t.post)) {
                out.push(f.name.clone());
            }
        }
        out
    }
}

impl fmt::Display for PetriNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |ms: &Multiset| {
            ms.iter()
                .map(|&(p, k)| {
                    if k == 1 {
                        self.places[p].clone()
                    } else {
                        format!("{k}*{}", self.places[p])
                    }
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        writeln!(f, "places {}", self.places.len())?;
        let init: Multiset = self
            .initial
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(p, &k)| (p, k))
            .collect();
        writeln!(f, "initial {}", show(&init))?;
        for t in &self.transitions {
            writeln!(f, "{} -> {}", show(&t.pre), show(&t.post))?;
        }
        Ok(())
    }
}

fn multiset(items: impl IntoIterator<Item = usize>) -> Multiset {
    let mut m: BTreeMap<usize, u32> = BTreeMap::new();
    for p in items {
        *m.entry(p).or_default() += 1;
    }
    m.into_iter().collect()
}

/// Builds the net. `Threads::Fixed(k)` starts `k` threads and bounds the
/// pending count by `k`, which is exact; `Threads::Unbounded` adds a spawn
/// transition and explores runs with at most `pending` open operations.
pub fn to_petri_net(
    p: &Program,
    a: &Automaton,
    threads: Threads,
) -> Result<(PetriNet, CoverabilityTarget), CheckError> {
    let bound = match threads {
        Threads::Fixed(k) => {
            check_threads(k, DEFAULT_MAX_THREADS)?;
            k
        }
        Threads::Unbounded { pending } => pending,
    };
    let mut places: Vec<String> = Vec::new();
    let mut families = Vec::new();

    let nslots = p.vars.len() + p.cell_count();
    let mut slot_place: Vec<Vec<usize>> = Vec::new();
    for s in 0..nslots {
        let name = p.slot_name(s);
        let lo = *p.slot_values(s).start();
        let mut ps = Vec::new();
        for v in p.slot_values(s) {
            ps.push(places.len());
            let shown = if s >= p.vars.len() && v == 0 {
                "_".to_string()
            } else {
                v.to_string()
            };
            places.push(format!("{name}={shown}"));
        }
        debug_assert_eq!(lo as usize + ps.len() - 1, *p.slot_values(s).end() as usize);
        families.push(Family::plain(name, ps.clone(), 1));
        slot_place.push(ps);
    }
    let slot_lo: Vec<u8> = (0..nslots).map(|s| *p.slot_values(s).start()).collect();

    // automaton with a single fresh initial state
    let n = a.states();
    let start = n;
    let succ = |q: usize, l: Letter| -> Vec<usize> {
        let mut v: Vec<usize> = if q == start {
            a.initial.iter().flat_map(|&i| a.step(i, l)).collect()
        } else {
            a.step(q, l).collect()
        };
        v.sort_unstable();
        v.dedup();
        v
    };
    let accepting = |q: usize| {
        if q == start {
            a.initial.iter().any(|&i| a.accepting[i])
        } else {
            a.accepting[q]
        }
    };
    let auto_base = places.len();
    let auto_place = |q: usize, k: usize| auto_base + q * (bound + 1) + k;
    for q in 0..=n {
        for k in 0..=bound {
            places.push(if q == start {
                format!("a_init/{k}")
            } else {
                format!("a{q}/{k}")
            });
        }
    }
    let violation = places.len();
    places.push("violation".into());
    families.push(Family::plain("automaton", auto_base..=violation, 1));

    let mut transitions: Vec<Transition> = Vec::new();
    let mut seen: HashSet<(Multiset, Multiset)> = HashSet::new();
    let mut push = |pre: Multiset, post: Multiset, label: Label, ts: &mut Vec<Transition>| {
        if seen.insert((pre.clone(), post.clone())) {
            ts.push(Transition { pre, post, label });
        }
    };

    for q in 0..=n {
        if accepting(q) {
            push(
                vec![(auto_place(q, 0), 1)],
                vec![(violation, 1)],
                Label::Accept,
                &mut transitions,
            );
        }
    }

    // thread-local places, discovered from the initial local state
    let mut local_place: HashMap<Local, usize> = HashMap::new();
    let mut local_members: Vec<usize> = Vec::new();
    let mut local_loc: HashMap<usize, usize> = HashMap::new();
    let mut queue: VecDeque<Local> = VecDeque::new();
    let mut local_id = |l: &Local, places: &mut Vec<String>, queue: &mut VecDeque<Local>| -> usize {
        if let Some(&id) = local_place.get(l) {
            return id;
        }
        let id = places.len();
        let regs: Vec<String> = l
            .regs
            .iter()
            .zip(&p.regs)
            .map(|(v, r)| format!("{r}={}", if *v == 0 { "_".into() } else { v.to_string() }))
            .collect();
        let mut name = p.locations[l.loc].clone();
        if !regs.is_empty() || l.pending != 0 {
            name.push('[');
            name.push_str(&regs.join(","));
            if l.pending != 0 {
                name.push_str(&format!(";pending={}", l.pending));
            }
            name.push(']');
        }
        places.push(name);
        local_place.insert(l.clone(), id);
        local_members.push(id);
        local_loc.insert(id, l.loc);
        queue.push_back(l.clone());
        id
    };
    let init_place = local_id(&p.initial_local(), &mut places, &mut queue);

    let filler = p.initial_shared();
    while let Some(l) = queue.pop_front() {
        let from = local_id(&l, &mut places, &mut queue);
        for &e in &p.out[l.loc] {
            let fp = p.footprint(e);
            let sizes: Vec<usize> = fp.iter().map(|&s| slot_place[s].len()).collect();
            let total: usize = sizes.iter().product();
            for mut code in 0..total {
                let mut shared = filler.clone();
                for (i, &s) in fp.iter().enumerate() {
                    shared[s] = slot_lo[s] + (code % sizes[i]) as u8;
                    code /= sizes[i];
                }
                for f in p.fire(e, &l, &shared) {
                    let to = local_id(&f.local, &mut places, &mut queue);
                    let mut pre: Vec<usize> = vec![from];
                    let mut post: Vec<usize> = vec![to];
                    for &s in &fp {
                        pre.push(slot_place[s][(shared[s] - slot_lo[s]) as usize]);
                        post.push(slot_place[s][(f.shared[s] - slot_lo[s]) as usize]);
                    }
                    let label = Label::Step {
                        edge: e,
                        picks: f.picks.clone(),
                        from,
                        to,
                    };
                    match f.letter {
                        None => push(multiset(pre), multiset(post), label, &mut transitions),
                        Some(letter) => {
                            for q in 0..=n {
                                let targets = succ(q, letter);
                                if targets.is_empty() {
                                    continue;
                                }
                                for k in 0..=bound {
                                    let k2 = match letter.kind {
                                        ActionKind::Call if k < bound => k + 1,
                                        ActionKind::Ret if k > 0 => k - 1,
                                        _ => continue,
                                    };
                                    for &q2 in &targets {
                                        let mut pre = pre.clone();
                                        let mut post = post.clone();
                                        pre.push(auto_place(q, k));
                                        post.push(auto_place(q2, k2));
                                        push(
                                            multiset(pre),
                                            multiset(post),
                                            label.clone(),
                                            &mut transitions,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let mut initial = vec![0u32; places.len()];
    for (s, &v) in filler.iter().enumerate() {
        initial[slot_place[s][(v - slot_lo[s]) as usize]] = 1;
    }
    initial[auto_place(start, 0)] = 1;
    // threads inside an operation match the pending count
    let busy = |l: usize| !p.is_quiescent(local_loc[&l]);
    let mut inside = Family::plain("busy threads", local_members.iter().copied().filter(|&l| busy(l)), bound as u32);
    for q in 0..=n {
        for j in 0..=bound {
            inside.weights.push((auto_place(q, j), (bound - j) as u32));
        }
    }
    inside.weights.push((violation, bound as u32));
    families.push(inside);
    let thread_start = match threads {
        Threads::Fixed(k) => {
            initial[init_place] = k as u32;
            let mut outside = Family::plain("idle threads", local_members.iter().copied().filter(|&l| !busy(l)), k as u32);
            for q in 0..=n {
                for j in 0..=bound {
                    outside.weights.push((auto_place(q, j), j as u32));
                }
            }
            families.push(outside);
            families.push(Family::plain("threads", local_members.clone(), k as u32));
            Some((init_place, k as u32))
        }
        Threads::Unbounded { .. } => {
            transitions.push(Transition {
                pre: vec![],
                post: vec![(init_place, 1)],
                label: Label::Spawn { place: init_place },
            });
            None
        }
    };
    let net = PetriNet {
        places,
        transitions,
        initial,
        families,
        thread_start,
        local_places: local_members,
    };
    Ok((
        net,
        CoverabilityTarget {
            bound: vec![(violation, 1)],
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverOptions {
    pub max_basis: usize,
    /// Re-checks after every iteration that the basis is an antichain.
    pub check_antichain: bool,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions {
            max_basis: super::DEFAULT_MAX_BASIS,
            check_antichain: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoverStats {
    pub iterations: usize,
    pub basis: usize,
    pub peak_basis: usize,
    pub antichain_checks: usize,
}

fn leq(a: &Multiset, b: &Multiset) -> bool {
    let mut j = 0;
    for &(p, k) in a {
        while j < b.len() && b[j].0 < p {
            j += 1;
        }
        if j == b.len() || b[j].0 != p || b[j].1 < k {
            return false;
        }
    }
    true
}

/// Least marking from which firing `t` covers `m`.
fn pre_image(m: &Multiset, t: &Transition) -> Multiset {
    let mut need: Multiset = Vec::with_capacity(m.len());
    let mut j = 0;
    for &(p, k) in m {
        while j < t.post.len() && t.post[j].0 < p {
            j += 1;
        }
        let produced = if j < t.post.len() && t.post[j].0 == p { t.post[j].1 } else { 0 };
        if k > produced {
            need.push((p, k - produced));
        }
    }
    let mut out = Vec::with_capacity(need.len() + t.pre.len());
    let (mut i, mut j) = (0, 0);
    while i < need.len() || j < t.pre.len() {
        if j == t.pre.len() || (i < need.len() && need[i].0 < t.pre[j].0) {
            out.push(need[i]);
            i += 1;
        } else if i == need.len() || t.pre[j].0 < need[i].0 {
            out.push(t.pre[j]);
            j += 1;
        } else {
            out.push((need[i].0, need[i].1 + t.pre[j].1));
            i += 1;
            j += 1;
        }
    }
    out
}

/// Sub-multisets enumerated before falling back to a bucket scan.
const SUBSET_LIMIT: usize = 64;

/// Basis markings indexed by their token in the largest one-token family
/// (the anchor) and by their thread places.
struct BasisIndex {
    anchor: Vec<bool>,
    thread: Vec<bool>,
    by_anchor: HashMap<Option<usize>, Vec<usize>>,
    by_threads: HashMap<(Option<usize>, Multiset), Vec<usize>>,
    by_place: HashMap<(Option<usize>, usize), Vec<usize>>,
}

impl BasisIndex {
    fn new(net: &PetriNet) -> Self {
        let mut anchor = vec![false; net.places.len()];
        let family = net
            .families
            .iter()
            .filter(|f| f.tokens == 1 && f.weights.iter().all(|&(_, w)| w == 1))
            .max_by_key(|f| f.weights.len());
        for &(p, _) in family.iter().flat_map(|f| &f.weights) {
            anchor[p] = true;
        }
        let mut thread = vec![false; net.places.len()];
        for &p in &net.local_places {
            thread[p] = true;
        }
        BasisIndex {
            anchor,
            thread,
            by_anchor: HashMap::new(),
            by_threads: HashMap::new(),
            by_place: HashMap::new(),
        }
    }

    fn split(&self, m: &Multiset) -> (Option<usize>, Multiset) {
        let a = m.iter().map(|&(p, _)| p).find(|&p| self.anchor[p]);
        let t = m.iter().copied().filter(|&(p, _)| self.thread[p]).collect();
        (a, t)
    }

    fn insert(&mut self, id: usize, m: &Multiset) {
        let (a, t) = self.split(m);
        self.by_anchor.entry(a).or_default().push(id);
        for &(p, _) in &t {
            self.by_place.entry((a, p)).or_default().push(id);
        }
        self.by_threads.entry((a, t)).or_default().push(id);
    }

    /// A live marking other than `skip` below `m`.
    fn find_below(&self, m: &Multiset, skip: usize, basis: &[Multiset], alive: &[bool]) -> Option<usize> {
        let (a, t) = self.split(m);
        let anchors: &[Option<usize>] = if a.is_some() { &[a, None][..] } else { &[None][..] };
        let below = |ids: &Vec<usize>| ids.iter().copied().find(|&j| j != skip && alive[j] && leq(&basis[j], m));
        let combos: usize = t.iter().map(|&(_, k)| k as usize + 1).product();
        for &x in anchors {
            if combos > SUBSET_LIMIT {
                if let Some(j) = self.by_anchor.get(&x).and_then(below) {
                    return Some(j);
                }
                continue;
            }
            let mut sub: Multiset = Vec::with_capacity(t.len());
            let mut counts = vec![0u32; t.len()];
            loop {
                sub.clear();
                sub.extend(t.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(&(p, _), &c)| (p, c)));
                if let Some(j) = self.by_threads.get(&(x, sub.clone())).and_then(below) {
                    return Some(j);
                }
                let mut i = 0;
                while i < t.len() && counts[i] == t[i].1 {
                    counts[i] = 0;
                    i += 1;
                }
                if i == t.len() {
                    break;
                }
                counts[i] += 1;
            }
        }
        None
    }

    /// Live markings that might be above `m`.
    fn candidates_above(&self, m: &Multiset) -> Vec<usize> {
        let (a, t) = self.split(m);
        match (a, t.first()) {
            (None, _) => self.by_anchor.values().flatten().copied().collect(),
            (Some(_), Some(&(p, _))) => self.by_place.get(&(a, p)).cloned().unwrap_or_default(),
            (Some(_), None) => self.by_anchor.get(&a).cloned().unwrap_or_default(),
        }
    }
}

/// Backward coverability. Returns a firing sequence from the initial
/// marking to a marking covering the target, if one exists.
pub fn coverable(
    net: &PetriNet,
    target: &CoverabilityTarget,
    opts: &CoverOptions,
) -> Result<Option<Vec<usize>>, CheckError> {
    coverable_with(net, target, opts).map(|(w, _)| w)
}

pub fn coverable_with(
    net: &PetriNet,
    target: &CoverabilityTarget,
    opts: &CoverOptions,
) -> Result<(Option<Vec<usize>>, CoverStats), CheckError> {
    let mut stats = CoverStats::default();
    let mut start = target.bound.clone();
    start.retain(|&(_, k)| k > 0);
    start.sort_unstable();
    if covers(&net.initial, &start) {
        stats.basis = 1;
        stats.peak_basis = 1;
        return Ok((Some(vec![]), stats));
    }

    // markings exceeding some invariant sum are unreachable
    let mut weights: Vec<Vec<(usize, u32)>> = vec![Vec::new(); net.places.len()];
    for (i, f) in net.families.iter().enumerate() {
        for &(p, w) in &f.weights {
            weights[p].push((i, w));
        }
    }
    let mut sums = vec![0u32; net.families.len()];
    let mut feasible = |m: &Multiset| {
        sums.iter_mut().for_each(|s| *s = 0);
        for &(p, k) in m {
            for &(f, w) in &weights[p] {
                sums[f] += w * k;
                if sums[f] > net.families[f].tokens {
                    return false;
                }
            }
        }
        true
    };

    let mut producers: Vec<Vec<usize>> = vec![Vec::new(); net.places.len()];
    for (t, tr) in net.transitions.iter().enumerate() {
        for &(p, _) in &tr.post {
            producers[p].push(t);
        }
    }

    let mut index = BasisIndex::new(net);
    index.insert(0, &start);
    let mut basis: Vec<Multiset> = vec![start];
    let mut alive: Vec<bool> = vec![true];
    let mut from: Vec<Option<(usize, usize)>> = vec![None];
    let mut live = 1usize;
    let mut work: VecDeque<usize> = VecDeque::from([0]);
    let mut stamp: Vec<usize> = vec![usize::MAX; net.transitions.len()];

    let witness = |from: &[Option<(usize, usize)>], first: usize, mut i: usize| {
        let mut seq = vec![first];
        while let Some((t, j)) = from[i] {
            seq.push(t);
            i = j;
        }
        seq
    };

    while let Some(i) = work.pop_front() {
        if !alive[i] {
            continue;
        }
        stats.iterations += 1;
        let first_new = basis.len();
        let m = basis[i].clone();
        for &(p, _) in &m {
            for &t in &producers[p] {
                if stamp[t] == i {
                    continue;
                }
                stamp[t] = i;
                let pm = pre_image(&m, &net.transitions[t]);
                if !feasible(&pm) {
                    continue;
                }
                if covers(&net.initial, &pm) {
                    stats.basis = live;
                    return Ok((Some(witness(&from, t, i)), stats));
                }
                if index.find_below(&pm, usize::MAX, &basis, &alive).is_some() {
                    continue;
                }
                for j in index.candidates_above(&pm) {
                    if alive[j] && leq(&pm, &basis[j]) {
                        alive[j] = false;
                        live -= 1;
                    }
                }
                let id = basis.len();
                index.insert(id, &pm);
                basis.push(pm);
                alive.push(true);
                from.push(Some((t, i)));
                live += 1;
                work.push_back(id);
                if live > opts.max_basis {
                    return Err(CheckError::BasisSizeExceeded {
                        limit: opts.max_basis,
                    });
                }
            }
        }
        stats.peak_basis = stats.peak_basis.max(live);
        if opts.check_antichain {
            // earlier elements were pairwise incomparable; compare the new ones
            for a in first_new..basis.len() {
                if !alive[a] {
                    continue;
                }
                let above = index.candidates_above(&basis[a]);
                assert!(
                    index.find_below(&basis[a], a, &basis, &alive).is_none()
                        && !above.iter().any(|&b| b != a && alive[b] && leq(&basis[a], &basis[b])),
                    "coverability basis is not an antichain"
                );
            }
            stats.antichain_checks += 1;
        }
    }
    stats.basis = live;
    Ok((None, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(transitions: Vec<Transition>) -> PetriNet {
        PetriNet {
            places: vec!["p".into()],
            transitions,
            initial: vec![1],
            families: vec![],
            thread_start: None,
            local_places: vec![],
        }
    }

    #[test]
    fn no_transitions_cannot_grow() {
        let n = net(vec![]);
        let target = CoverabilityTarget {
            bound: vec![(0, 2)],
        };
        assert_eq!(coverable(&n, &target, &CoverOptions::default()), Ok(None));
        let one = CoverabilityTarget {
            bound: vec![(0, 1)],
        };
        assert_eq!(coverable(&n, &one, &CoverOptions::default()), Ok(Some(vec![])));
    }

    #[test]
    fn producer_covers_in_one_firing() {
        let n = net(vec![Transition {
            pre: vec![],
            post: vec![(0, 1)],
            label: Label::Accept,
        }]);
        let target = CoverabilityTarget {
            bound: vec![(0, 2)],
        };
        let w = coverable(&n, &target, &CoverOptions::default()).unwrap().unwrap();
        assert_eq!(w, vec![0]);
        let mut m = n.initial.clone();
        for t in w {
            n.fire(&mut m, t).unwrap();
        }
        assert!(n.covers(&m, &target));
    }

    #[test]
    fn pre_image_and_order() {
        let t = Transition {
            pre: vec![(0, 1), (2, 1)],
            post: vec![(1, 2)],
            label: Label::Accept,
        };
        assert_eq!(pre_image(&vec![(1, 3), (3, 1)], &t), vec![(0, 1), (1, 1), (2, 1), (3, 1)]);
        assert_eq!(pre_image(&vec![(1, 1)], &t), vec![(0, 1), (2, 1)]);
        assert!(leq(&vec![(1, 1)], &vec![(0, 1), (1, 2)]));
        assert!(!leq(&vec![(1, 3)], &vec![(0, 1), (1, 2)]));
        assert!(!leq(&vec![(4, 1)], &vec![(0, 1), (1, 2)]));
    }

    #[test]
    fn witness_follows_a_chain() {
        // p0 -> p1 -> p2, target p2
        let n = PetriNet {
            places: vec!["a".into(), "b".into(), "c".into()],
            transitions: vec![
                Transition {
                    pre: vec![(1, 1)],
                    post: vec![(2, 1)],
                    label: Label::Accept,
                },
                Transition {
                    pre: vec![(0, 1)],
                    post: vec![(1, 1)],
                    label: Label::Accept,
                },
            ],
            initial: vec![1, 0, 0],
            families: vec![Family::plain("token", [0, 1, 2], 1)],
            thread_start: None,
            local_places: vec![],
        };
        let target = CoverabilityTarget {
            bound: vec![(2, 1)],
        };
        let opts = CoverOptions {
            check_antichain: true,
            ..CoverOptions::default()
        };
        let (w, stats) = coverable_with(&n, &target, &opts).unwrap();
        assert_eq!(w, Some(vec![1, 0]));
        assert!(stats.iterations >= 1);
        assert!(n.unconserved_families().is_empty());
        let mut m = n.initial.clone();
        assert!(n.fire(&mut m, 0).is_err());
    }

    use proptest::prelude::*;

    /// Random conservative nets: places 0..3 carry one anchor token, 3..6
    /// are thread places, 6..8 are plain.
    fn arb_net() -> impl Strategy<Value = (PetriNet, Multiset)> {
        let side = proptest::collection::vec(3usize..8, 0..3);
        let trans = (proptest::option::of((0usize..3, 0usize..3)), side.clone(), side)
            .prop_map(|(anchor, mut pre, mut post)| {
                let n = pre.len().min(post.len());
                pre.truncate(n);
                post.truncate(n);
                if let Some((a, b)) = anchor {
                    pre.push(a);
                    post.push(b);
                }
                Transition {
                    pre: multiset(pre),
                    post: multiset(post),
                    label: Label::Accept,
                }
            });
        (
            proptest::collection::vec(trans, 1..6),
            proptest::collection::vec(0u32..3, 5),
            proptest::collection::vec((0usize..8, 1u32..3), 1..3),
        )
            .prop_map(|(transitions, init, target)| {
                let mut initial = vec![0u32; 8];
                initial[0] = 1;
                for (i, k) in init.into_iter().enumerate() {
                    initial[3 + i] = k;
                }
                let net = PetriNet {
                    places: (0..8).map(|i| format!("p{i}")).collect(),
                    transitions,
                    initial,
                    families: vec![Family::plain("anchor", [0, 1, 2], 1)],
                    thread_start: None,
                    local_places: vec![3, 4, 5],
                };
                let mut bound: BTreeMap<usize, u32> = BTreeMap::new();
                for (p, k) in target {
                    *bound.entry(p).or_default() += k;
                }
                (net, bound.into_iter().collect())
            })
    }

    fn forward_covers(net: &PetriNet, bound: &Multiset) -> bool {
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let mut queue = VecDeque::from([net.initial.clone()]);
        seen.insert(net.initial.clone());
        while let Some(m) = queue.pop_front() {
            if covers(&m, bound) {
                return true;
            }
            for t in 0..net.transitions.len() {
                let mut next = m.clone();
                if net.fire(&mut next, t).is_ok() && seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        false
    }

    proptest! {
        #[test]
        fn backward_matches_forward((net, bound) in arb_net()) {
            let target = CoverabilityTarget { bound: bound.clone() };
            let opts = CoverOptions { check_antichain: true, ..CoverOptions::default() };
            let found = coverable(&net, &target, &opts).unwrap();
            prop_assert_eq!(found.is_some(), forward_covers(&net, &bound));
            if let Some(w) = found {
                let mut m = net.initial.clone();
                for t in w {
                    prop_assert!(net.fire(&mut m, t).is_ok());
                }
                prop_assert!(net.covers(&m, &target));
            }
        }
    }
}
