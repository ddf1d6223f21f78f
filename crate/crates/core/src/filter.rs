//! Exact removal of a minimum number of components so that every retained
//! (solver, instance, test) triple is interpretable.
//!
//! Keeping a maximum number of components is the complement of a minimum
//! hitting set over the bad triples, where each of the three pools must keep
//! at least one member. The solver is a branch-and-bound over bad triples
//! with unit propagation, a forced-removal rule and a disjoint-packing lower
//! bound. Among optimal removals the result is made unique by the order
//! documented on [`solve_filter`].

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{PoolIds, RawResults};
use crate::{Error, Result};

/// Non-interpretable triples, by pool index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadTripleSet {
    pub sizes: (usize, usize, usize),
    pub triples: Vec<(u32, u32, u32)>,
}

impl BadTripleSet {
    pub fn new(sizes: (usize, usize, usize), mut triples: Vec<(u32, u32, u32)>) -> Self {
        triples.sort_unstable();
        triples.dedup();
        Self { sizes, triples }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    /// Number of bad triples each solver, instance and test takes part in.
    pub fn incidence(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let (ns, ni, nt) = self.sizes;
        let (mut s, mut i, mut t) = (vec![0; ns], vec![0; ni], vec![0; nt]);
        for &(a, b, c) in &self.triples {
            s[a as usize] += 1;
            i[b as usize] += 1;
            t[c as usize] += 1;
        }
        (s, i, t)
    }
}

/// Collects every triple that is not interpretable: all triples of a
/// non-interpretable pair, and the failed tests of pairs with a solution.
pub fn collect_noninterpretable(results: &RawResults) -> BadTripleSet {
    let (ns, ni, nt) = results.sizes();
    let mut out = Vec::new();
    for s in 0..ns {
        for i in 0..ni {
            let pair = results.pair(s, i);
            if !pair.interpretable {
                out.extend((0..nt).map(|t| (s as u32, i as u32, t as u32)));
            } else if let Some(row) = results.executed_triples(s, i) {
                out.extend(
                    row.iter()
                        .enumerate()
                        .filter(|(_, o)| !o.interpretable)
                        .map(|(t, _)| (s as u32, i as u32, t as u32)),
                );
            }
        }
    }
    BadTripleSet::new((ns, ni, nt), out)
}

/// Retained pool indices, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSolution {
    pub solvers: Vec<usize>,
    pub instances: Vec<usize>,
    pub tests: Vec<usize>,
    /// Number of retained components.
    pub objective: usize,
}

impl FilterSolution {
    fn from_keep(sizes: (usize, usize, usize), keep: &[bool]) -> Self {
        let (ns, ni, _) = sizes;
        let pick = |lo: usize, hi: usize| (lo..hi).filter(|&g| keep[g]).map(|g| g - lo).collect::<Vec<_>>();
        let solvers = pick(0, ns);
        let instances = pick(ns, ns + ni);
        let tests = pick(ns + ni, keep.len());
        let objective = solvers.len() + instances.len() + tests.len();
        Self {
            solvers,
            instances,
            tests,
            objective,
        }
    }

    pub fn retained_ids(&self, ids: &PoolIds) -> PoolIds {
        PoolIds {
            solvers: self.solvers.iter().map(|&k| ids.solvers[k].clone()).collect(),
            instances: self.instances.iter().map(|&k| ids.instances[k].clone()).collect(),
            tests: self.tests.iter().map(|&k| ids.tests[k].clone()).collect(),
        }
    }

    /// True when no bad triple lies inside the retained cube.
    pub fn is_clean(&self, bad: &BadTripleSet) -> bool {
        let (ns, ni, nt) = bad.sizes;
        let mark = |n: usize, v: &[usize]| {
            let mut m = vec![false; n];
            v.iter().for_each(|&k| m[k] = true);
            m
        };
        let (s, i, t) = (mark(ns, &self.solvers), mark(ni, &self.instances), mark(nt, &self.tests));
        bad.triples
            .iter()
            .all(|&(a, b, c)| !(s[a as usize] && i[b as usize] && t[c as usize]))
    }
}

/// Lexicographic cost of a removal: total removed, then removed solvers,
/// then removed instances (removed tests follow from the first three).
type Key = (usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Keep,
    Drop,
}

enum Step {
    Drop(usize),
    Keep(usize),
}

#[derive(Clone)]
struct State<'a> {
    p: &'a Problem,
    status: Vec<Status>,
    /// Dropped members per triple.
    hit: Vec<u8>,
    /// Uncovered incident triples per component.
    deg: Vec<u32>,
    /// Non-dropped members per kind.
    rem: [usize; 3],
    dropped: [usize; 3],
    uncovered: usize,
}

struct Problem {
    bounds: [usize; 4],
    triples: Vec<[u32; 3]>,
    incident: Vec<Vec<u32>>,
}

impl Problem {
    fn new(bad: &BadTripleSet) -> Self {
        let (ns, ni, nt) = bad.sizes;
        let bounds = [0, ns, ns + ni, ns + ni + nt];
        let triples: Vec<[u32; 3]> = bad
            .triples
            .iter()
            .map(|&(s, i, t)| [s, i + ns as u32, t + (ns + ni) as u32])
            .collect();
        let mut incident = vec![Vec::new(); bounds[3]];
        for (k, tr) in triples.iter().enumerate() {
            for &g in tr {
                incident[g as usize].push(k as u32);
            }
        }
        Self {
            bounds,
            triples,
            incident,
        }
    }

    fn n(&self) -> usize {
        self.bounds[3]
    }

    fn kind(&self, g: usize) -> usize {
        if g < self.bounds[1] {
            0
        } else if g < self.bounds[2] {
            1
        } else {
            2
        }
    }
}

impl<'a> State<'a> {
    fn new(p: &'a Problem) -> Self {
        let mut deg = vec![0u32; p.n()];
        for tr in &p.triples {
            for &g in tr {
                deg[g as usize] += 1;
            }
        }
        let b = p.bounds;
        Self {
            p,
            status: vec![Status::Free; p.n()],
            hit: vec![0; p.triples.len()],
            deg,
            rem: [b[1] - b[0], b[2] - b[1], b[3] - b[2]],
            dropped: [0; 3],
            uncovered: p.triples.len(),
        }
    }

    fn key(&self) -> Key {
        let d = self.dropped;
        (d[0] + d[1] + d[2], d[0], d[1])
    }

    fn apply_drop(&mut self, g: usize, trail: &mut Vec<Step>) {
        self.status[g] = Status::Drop;
        let k = self.p.kind(g);
        self.rem[k] -= 1;
        self.dropped[k] += 1;
        for &tr in &self.p.incident[g] {
            let tr = tr as usize;
            self.hit[tr] += 1;
            if self.hit[tr] == 1 {
                self.uncovered -= 1;
                for &e in &self.p.triples[tr] {
                    self.deg[e as usize] -= 1;
                }
            }
        }
        trail.push(Step::Drop(g));
    }

    fn undo(&mut self, trail: &mut Vec<Step>, mark: usize) {
        while trail.len() > mark {
            match trail.pop().expect("trail above mark") {
                Step::Keep(g) => self.status[g] = Status::Free,
                Step::Drop(g) => {
                    self.status[g] = Status::Free;
                    let k = self.p.kind(g);
                    self.rem[k] += 1;
                    self.dropped[k] -= 1;
                    for &tr in &self.p.incident[g] {
                        let tr = tr as usize;
                        self.hit[tr] -= 1;
                        if self.hit[tr] == 0 {
                            self.uncovered += 1;
                            for &e in &self.p.triples[tr] {
                                self.deg[e as usize] += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Drops `g` if allowed; `false` when that would empty its pool or `g` is kept.
    fn try_drop(&mut self, g: usize, trail: &mut Vec<Step>) -> bool {
        match self.status[g] {
            Status::Drop => true,
            Status::Keep => false,
            Status::Free if self.rem[self.p.kind(g)] <= 1 => false,
            Status::Free => {
                self.apply_drop(g, trail);
                true
            }
        }
    }

    fn try_keep(&mut self, g: usize, trail: &mut Vec<Step>) -> bool {
        match self.status[g] {
            Status::Keep => true,
            Status::Drop => false,
            Status::Free => {
                self.status[g] = Status::Keep;
                trail.push(Step::Keep(g));
                true
            }
        }
    }

    /// Applies forced moves to a fixpoint. Returns `false` on a contradiction.
    ///
    /// * an uncovered triple with two kept members forces the third out;
    /// * a component whose uncovered triples span every remaining partner
    ///   pair can only be covered by emptying a pool, so it must go.
    fn propagate(&mut self, trail: &mut Vec<Step>, mut scan_from: usize) -> bool {
        loop {
            let mut changed = false;
            // Unit rule, over triples touched by components kept since `scan_from`.
            let mut k = scan_from;
            scan_from = trail.len();
            while k < trail.len() {
                if let Step::Keep(g) = trail[k] {
                    for idx in 0..self.p.incident[g].len() {
                        let tr = self.p.incident[g][idx] as usize;
                        if self.hit[tr] > 0 {
                            continue;
                        }
                        let members = self.p.triples[tr];
                        let free: Vec<usize> = members
                            .iter()
                            .map(|&e| e as usize)
                            .filter(|&e| self.status[e] == Status::Free)
                            .collect();
                        match free.as_slice() {
                            [] => return false,
                            [only] => {
                                if !self.try_drop(*only, trail) {
                                    return false;
                                }
                                changed = true;
                            }
                            _ => {}
                        }
                    }
                }
                k += 1;
            }
            // Grid rule.
            for g in 0..self.p.n() {
                if self.status[g] == Status::Drop || self.deg[g] == 0 {
                    continue;
                }
                let kind = self.p.kind(g);
                let partners: usize = (0..3).filter(|&k| k != kind).map(|k| self.rem[k]).product();
                if self.deg[g] as usize == partners {
                    if !self.try_drop(g, trail) {
                        return false;
                    }
                    changed = true;
                }
            }
            if !changed && scan_from == trail.len() {
                return true;
            }
        }
    }

    /// Greedy disjoint packing of uncovered triples over free members.
    fn packing_bound(&self) -> usize {
        let mut used = vec![false; self.p.n()];
        let mut lb = 0;
        for (tr, members) in self.p.triples.iter().enumerate() {
            if self.hit[tr] > 0 {
                continue;
            }
            let free = members
                .iter()
                .map(|&e| e as usize)
                .filter(|&e| self.status[e] == Status::Free);
            if free.clone().any(|e| used[e]) {
                continue;
            }
            free.for_each(|e| used[e] = true);
            lb += 1;
        }
        lb
    }

    /// Order in which members of a triple are tried for removal: most
    /// uncovered triples first, then tests before instances before solvers,
    /// then higher indices.
    fn removal_order(&self, a: usize, b: usize) -> Ordering {
        self.deg[b]
            .cmp(&self.deg[a])
            .then(self.p.kind(b).cmp(&self.p.kind(a)))
            .then(b.cmp(&a))
    }

    fn branch_triple(&self) -> Option<usize> {
        let mut best: Option<(u32, usize)> = None;
        for (tr, members) in self.p.triples.iter().enumerate() {
            if self.hit[tr] > 0 {
                continue;
            }
            let score: u32 = members
                .iter()
                .filter(|&&e| self.status[e as usize] == Status::Free)
                .map(|&e| self.deg[e as usize])
                .sum();
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, tr));
            }
        }
        best.map(|(_, tr)| tr)
    }

    fn keep_vector(&self) -> Vec<bool> {
        self.status.iter().map(|&s| s != Status::Drop).collect()
    }

    /// Greedy removal of the highest-degree free component until clean.
    fn greedy(mut self) -> Option<(Key, Vec<bool>)> {
        let mut trail = Vec::new();
        while self.uncovered > 0 {
            let pick = (0..self.p.n())
                .filter(|&g| {
                    self.status[g] == Status::Free && self.deg[g] > 0 && self.rem[self.p.kind(g)] > 1
                })
                .min_by(|&a, &b| self.removal_order(a, b))?;
            self.apply_drop(pick, &mut trail);
            let mark = trail.len();
            if !self.propagate(&mut trail, mark) {
                return None;
            }
        }
        Some((self.key(), self.keep_vector()))
    }
}

struct Search {
    best: Option<(Key, Vec<bool>)>,
    /// Prune nodes whose bound key is `>= bound` (strict improvement) or
    /// `> bound` (`accept_equal`, used for feasibility queries at a known optimum).
    bound: Option<Key>,
    accept_equal: bool,
    done: bool,
}

impl Search {
    fn prunes(&self, k: Key) -> bool {
        match self.bound {
            None => false,
            Some(b) if self.accept_equal => k > b,
            Some(b) => k >= b,
        }
    }

    fn run(&mut self, st: &mut State<'_>, trail: &mut Vec<Step>) {
        if self.done {
            return;
        }
        let cur = st.key();
        let lb = st.packing_bound();
        if self.prunes((cur.0 + lb, cur.1, cur.2)) {
            return;
        }
        let Some(tr) = st.branch_triple() else {
            self.best = Some((cur, st.keep_vector()));
            self.bound = Some(cur);
            if self.accept_equal {
                self.done = true;
            }
            return;
        };
        let mut members: Vec<usize> = st.p.triples[tr]
            .iter()
            .map(|&e| e as usize)
            .filter(|&e| st.status[e] == Status::Free)
            .collect();
        members.sort_by(|&a, &b| st.removal_order(a, b));
        // Branch j removes members[j] and keeps members[..j].
        for j in 0..members.len() {
            let mark = trail.len();
            let ok = members[..j].iter().all(|&e| st.try_keep(e, trail))
                && st.try_drop(members[j], trail)
                && st.propagate(trail, mark);
            if ok {
                self.run(st, trail);
            }
            st.undo(trail, mark);
            if self.done {
                return;
            }
        }
    }
}

/// Best key under the given forced decisions, with its keep vector.
fn solve_with(p: &Problem, forced: &[(usize, bool)], target: Option<Key>) -> Option<(Key, Vec<bool>)> {
    let mut st = State::new(p);
    let mut trail = Vec::new();
    for &(g, keep) in forced {
        let ok = if keep { st.try_keep(g, &mut trail) } else { st.try_drop(g, &mut trail) };
        if !ok {
            return None;
        }
    }
    if !st.propagate(&mut trail, 0) {
        return None;
    }
    let mut search = match target {
        Some(t) => Search {
            best: None,
            bound: Some(t),
            accept_equal: true,
            done: false,
        },
        None => {
            let incumbent = st.clone().greedy();
            Search {
                bound: incumbent.as_ref().map(|(k, _)| *k),
                best: incumbent,
                accept_equal: false,
                done: false,
            }
        }
    };
    search.run(&mut st, &mut trail);
    search.best
}

/// Solves the filtering problem exactly.
///
/// Maximizes the number of retained components subject to no bad triple
/// lying in the retained cube and every pool keeping at least one member.
/// Ties are broken by retaining more solvers, then more instances, then
/// more tests, then by retaining lower-indexed components (solvers first,
/// then instances, then tests). Returns [`Error::EmptySelection`] when no
/// nonempty clean cube exists.
pub fn solve_filter(bad: &BadTripleSet) -> Result<FilterSolution> {
    let (ns, ni, nt) = bad.sizes;
    if ns == 0 || ni == 0 || nt == 0 {
        return Err(Error::EmptySelection);
    }
    let p = Problem::new(bad);
    let (key, mut keep) = solve_with(&p, &[], None).ok_or(Error::EmptySelection)?;

    // Lexicographic refinement of the keep vector at the optimal key.
    let mut forced: Vec<(usize, bool)> = Vec::new();
    for g in 0..p.n() {
        if keep[g] {
            forced.push((g, true));
            continue;
        }
        forced.push((g, true));
        match solve_with(&p, &forced, Some(key)) {
            Some((k, kv)) if k == key => keep = kv,
            _ => {
                forced.pop();
                forced.push((g, false));
            }
        }
    }
    Ok(FilterSolution::from_keep(bad.sizes, &keep))
}

/// Largest total pool size [`brute_force_filter`] accepts.
pub const BRUTE_FORCE_CAP: usize = 24;

/// Exhaustive reference for [`solve_filter`] with the same tie-break.
///
/// Enumerates every retained solver/instance subset; for each, retaining
/// every test not excluded by a bad triple is the unique best completion.
pub fn brute_force_filter(bad: &BadTripleSet) -> Result<FilterSolution> {
    let (ns, ni, nt) = bad.sizes;
    let n = ns + ni + nt;
    if n > BRUTE_FORCE_CAP {
        return Err(Error::InvalidInput(format!("{n} components exceed the brute-force cap of {BRUTE_FORCE_CAP}")));
    }
    // bad_tests[s][i]: bitmask of tests t with (s, i, t) bad
    let mut bad_tests = vec![vec![0u32; ni]; ns];
    for &(s, i, t) in &bad.triples {
        bad_tests[s as usize][i as usize] |= 1 << t;
    }
    let all_tests: u32 = if nt == 32 { u32::MAX } else { (1 << nt) - 1 };
    let mut best: Option<((usize, usize, usize), u32, u32, u32)> = None;
    let mut best_code = 0u32;
    for smask in 1u32..(1 << ns) {
        for imask in 1u32..(1 << ni) {
            let mut excluded = 0u32;
            for s in (0..ns).filter(|s| smask >> s & 1 == 1) {
                for i in (0..ni).filter(|i| imask >> i & 1 == 1) {
                    excluded |= bad_tests[s][i];
                }
            }
            let tmask = all_tests & !excluded;
            if tmask == 0 {
                continue;
            }
            let ds = ns - smask.count_ones() as usize;
            let di = ni - imask.count_ones() as usize;
            let dt = nt - tmask.count_ones() as usize;
            let key = (ds + di + dt, ds, di);
            // keep vector as a number: position 0 (first solver) is the most significant bit
            let mut code = 0u32;
            for (mask, len) in [(smask, ns), (imask, ni), (tmask, nt)] {
                for k in 0..len {
                    code = code << 1 | (mask >> k & 1);
                }
            }
            let better = match &best {
                None => true,
                Some((bk, ..)) => key < *bk || (key == *bk && code > best_code),
            };
            if better {
                best = Some((key, smask, imask, tmask));
                best_code = code;
            }
        }
    }
    let (_, smask, imask, tmask) = best.ok_or(Error::EmptySelection)?;
    let bits = |m: u32, len: usize| (0..len).filter(|k| m >> k & 1 == 1).collect::<Vec<_>>();
    let (solvers, instances, tests) = (bits(smask, ns), bits(imask, ni), bits(tmask, nt));
    let objective = solvers.len() + instances.len() + tests.len();
    Ok(FilterSolution {
        solvers,
        instances,
        tests,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(sizes: (usize, usize, usize), triples: &[(u32, u32, u32)]) -> BadTripleSet {
        BadTripleSet::new(sizes, triples.to_vec())
    }

    #[test]
    fn empty_bad_set_keeps_everything() {
        let bad = set((3, 4, 5), &[]);
        let sol = solve_filter(&bad).unwrap();
        assert_eq!(sol.objective, 12);
        assert_eq!(sol.solvers, vec![0, 1, 2]);
    }

    #[test]
    fn drops_solver_rather_than_emptying_tests() {
        // s1 = index 0, i1/i2 = 0/1, t1 = 0
        let bad = set((2, 2, 1), &[(0, 0, 0), (0, 1, 0)]);
        let sol = solve_filter(&bad).unwrap();
        assert_eq!(sol.objective, 4);
        assert_eq!(sol.solvers, vec![1]);
        assert_eq!(sol.instances, vec![0, 1]);
        assert_eq!(sol.tests, vec![0]);
        assert_eq!(brute_force_filter(&bad).unwrap(), sol);
    }

    #[test]
    fn non_compiling_solver_is_dropped() {
        let triples: Vec<_> = (0..3).flat_map(|i| (0..3).map(move |t| (0, i, t))).collect();
        let bad = set((3, 3, 3), &triples);
        let sol = solve_filter(&bad).unwrap();
        assert_eq!(sol.solvers, vec![1, 2]);
        assert_eq!(sol.objective, 8);
        assert_eq!(brute_force_filter(&bad).unwrap(), sol);
    }

    #[test]
    fn all_triples_bad_is_empty_selection() {
        let triples: Vec<_> = (0..2)
            .flat_map(|s| (0..2).flat_map(move |i| (0..2).map(move |t| (s, i, t))))
            .collect();
        let bad = set((2, 2, 2), &triples);
        assert!(matches!(solve_filter(&bad), Err(Error::EmptySelection)));
        assert!(matches!(brute_force_filter(&bad), Err(Error::EmptySelection)));
    }

    #[test]
    fn single_bad_cell_drops_the_test() {
        // one bad triple: dropping the test is preferred over the solver or instance
        let bad = set((2, 2, 2), &[(1, 1, 0)]);
        let sol = solve_filter(&bad).unwrap();
        assert_eq!(sol.tests, vec![1]);
        assert_eq!(sol.objective, 5);
    }

    #[test]
    fn tie_break_prefers_dropping_higher_index() {
        // (0,0,0) and (0,0,1): dropping s0, i0, or both tests... optimum drops one of s0 / i0.
        // Keep solvers first, so i0 goes.
        let bad = set((2, 2, 2), &[(0, 0, 0), (0, 0, 1)]);
        let sol = solve_filter(&bad).unwrap();
        assert_eq!(sol.instances, vec![1]);
        // two disjoint bad tests: prefer dropping t1 over t0
        let bad = set((1, 1, 3), &[(0, 0, 1), (0, 0, 2)]);
        assert_eq!(solve_filter(&bad).unwrap().tests, vec![0]);
        let bad = set((1, 2, 2), &[(0, 0, 0), (0, 1, 1)]);
        let sol = solve_filter(&bad).unwrap();
        assert_eq!(sol, brute_force_filter(&bad).unwrap());
    }

    #[test]
    fn brute_force_rejects_large_pools() {
        assert!(brute_force_filter(&set((10, 10, 5), &[])).is_err());
    }

    #[test]
    fn incidence_counts() {
        let bad = set((2, 2, 2), &[(0, 0, 0), (0, 1, 1), (1, 1, 1)]);
        let (s, i, t) = bad.incidence();
        assert_eq!((s, i, t), (vec![2, 1], vec![1, 2], vec![1, 2]));
    }

    fn arb_bad() -> impl Strategy<Value = BadTripleSet> {
        (1usize..=5, 1usize..=5, 1usize..=5)
            .prop_flat_map(|(ns, ni, nt)| {
                let all = ns * ni * nt;
                (Just((ns, ni, nt)), prop::collection::vec(0..all, 0..=all.min(40)))
            })
            .prop_map(|((ns, ni, nt), cells)| {
                let triples = cells
                    .into_iter()
                    .map(|c| ((c / (ni * nt)) as u32, (c / nt % ni) as u32, (c % nt) as u32))
                    .collect();
                BadTripleSet::new((ns, ni, nt), triples)
            })
    }

    proptest! {
        #[test]
        fn matches_brute_force(bad in arb_bad()) {
            let fast = solve_filter(&bad);
            let slow = brute_force_filter(&bad);
            match (fast, slow) {
                (Ok(a), Ok(b)) => {
                    prop_assert!(a.is_clean(&bad));
                    prop_assert_eq!(a, b);
                }
                (Err(Error::EmptySelection), Err(Error::EmptySelection)) => {}
                (a, b) => prop_assert!(false, "mismatch: {:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn adding_a_bad_triple_never_helps(bad in arb_bad(), extra in any::<u32>()) {
            let (ns, ni, nt) = bad.sizes;
            let c = extra as usize % (ns * ni * nt);
            let mut more = bad.triples.clone();
            more.push(((c / (ni * nt)) as u32, (c / nt % ni) as u32, (c % nt) as u32));
            let more = BadTripleSet::new(bad.sizes, more);
            let before = solve_filter(&bad).map(|s| s.objective).unwrap_or(0);
            let after = solve_filter(&more).map(|s| s.objective).unwrap_or(0);
            prop_assert!(after <= before);
        }
    }
}
