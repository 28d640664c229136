//! Stopping times on the filtration.
//!
//! A stopping time is stored per point (`None` meaning `+∞`). Adaptedness,
//! `{τ = j}` being a union of level-`j` atoms, is checked on construction.
//! The enumerator walks the refinement forest below a level `i`: every
//! `τ ∈ T_i` corresponds to an antichain of atoms (the stopping atoms) and
//! nothing else.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{FilteredSpace, PointFn, PointSet};

/// Default limit on the number of atoms below the starting level for
/// exhaustive enumeration.
pub const DEFAULT_ATOM_BUDGET: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoppingError {
    #[error("{{tau = {level}}} is not a union of level-{level} atoms")]
    NotAdapted { level: usize },
    #[error("point {point} stops at {level}, below the origin {origin}")]
    BelowOrigin { point: usize, level: usize, origin: usize },
    #[error("point {point} stops at level {level}, beyond the window")]
    LevelOutOfRange { point: usize, level: usize },
    #[error("stopping time has {found} points but the space has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("condition for level {level} is not constant on level-{level} atoms")]
    ConditionNotMeasurable { level: usize },
    #[error("condition family has {found} levels, expected {expected}")]
    ConditionShape { expected: usize, found: usize },
    #[error("instance too large for exhaustive enumeration: {atoms} atoms below level {level}, budget {budget}")]
    TooLarge { atoms: usize, level: usize, budget: usize },
}

/// `τ ∈ T_origin`, one level (or `None` for `+∞`) per point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StoppingTime {
    levels: Vec<Option<usize>>,
    origin: usize,
}

impl StoppingTime {
    /// Builds and checks adaptedness against `space`.
    pub fn new(space: &FilteredSpace, levels: Vec<Option<usize>>, origin: usize) -> Result<Self, StoppingError> {
        let tau = StoppingTime { levels, origin };
        tau.check(space)?;
        Ok(tau)
    }

    /// `τ ≡ level` everywhere.
    pub fn constant(n: usize, level: usize) -> Self {
        StoppingTime { levels: vec![Some(level); n], origin: level }
    }

    /// `τ ≡ +∞`.
    pub fn never(n: usize, origin: usize) -> Self {
        StoppingTime { levels: vec![None; n], origin }
    }

    /// Stops at `level` on one atom and never elsewhere.
    pub fn single_atom(space: &FilteredSpace, level: usize, atom: usize, origin: usize) -> Self {
        let mut levels = vec![None; space.n_points()];
        for x in space.atom(level, atom).iter() {
            levels[x] = Some(level);
        }
        StoppingTime { levels, origin }
    }

    pub fn levels(&self) -> &[Option<usize>] {
        &self.levels
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn get(&self, x: usize) -> Option<usize> {
        self.levels[x]
    }

    /// `{τ < ∞}`.
    pub fn tail_set(&self) -> PointSet {
        self.levels.iter().enumerate().filter(|(_, l)| l.is_some()).map(|(x, _)| x).collect()
    }

    pub fn check(&self, space: &FilteredSpace) -> Result<(), StoppingError> {
        if self.levels.len() != space.n_points() {
            return Err(StoppingError::LengthMismatch { expected: space.n_points(), found: self.levels.len() });
        }
        for (point, l) in self.levels.iter().enumerate() {
            if let Some(level) = *l {
                if level > space.depth() {
                    return Err(StoppingError::LevelOutOfRange { point, level });
                }
                if level < self.origin {
                    return Err(StoppingError::BelowOrigin { point, level, origin: self.origin });
                }
            }
        }
        for level in self.origin..space.n_levels() {
            let hit: Vec<bool> = self.levels.iter().map(|&l| l == Some(level)).collect();
            if !space.is_level_constant(&hit, level) {
                return Err(StoppingError::NotAdapted { level });
            }
        }
        Ok(())
    }

    pub fn is_adapted(&self, space: &FilteredSpace) -> bool {
        self.check(space).is_ok()
    }

    /// The stopping atoms `(level, atom)`, sorted.
    pub fn stop_atoms(&self, space: &FilteredSpace) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .levels
            .iter()
            .enumerate()
            .filter_map(|(x, l)| l.map(|t| (t, space.atom_of(t, x))))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Makes `atom` of `level` a stopping atom, dropping any stopping
    /// ancestor that overlaps it.
    fn set_stop(&mut self, space: &FilteredSpace, level: usize, atom: usize) {
        for x in space.atom(level, atom).iter() {
            if let Some(t) = self.levels[x] {
                if t < level {
                    let anc = space.atom_of(t, x);
                    for y in space.atom(t, anc).iter() {
                        self.levels[y] = None;
                    }
                }
            }
        }
        for x in space.atom(level, atom).iter() {
            self.levels[x] = Some(level);
        }
    }

    fn clear_stop(&mut self, space: &FilteredSpace, level: usize, atom: usize) {
        for x in space.atom(level, atom).iter() {
            self.levels[x] = None;
        }
    }
}

/// `{τ < ∞}`.
pub fn tail_set(tau: &StoppingTime) -> PointSet {
    tau.tail_set()
}

/// `τ = inf{ j >= i : condition[j] holds }`. `condition[j]` is indexed by
/// point and must be constant on level-`j` atoms for every `j >= i`.
pub fn first_hit(space: &FilteredSpace, i: usize, condition: &[Vec<bool>]) -> Result<StoppingTime, StoppingError> {
    if condition.len() != space.n_levels() {
        return Err(StoppingError::ConditionShape { expected: space.n_levels(), found: condition.len() });
    }
    let mut levels = vec![None; space.n_points()];
    for (j, cond) in condition.iter().enumerate().skip(i) {
        if cond.len() != space.n_points() {
            return Err(StoppingError::ConditionShape { expected: space.n_points(), found: cond.len() });
        }
        if !space.is_level_constant(cond, j) {
            return Err(StoppingError::ConditionNotMeasurable { level: j });
        }
        for (l, &c) in levels.iter_mut().zip(cond) {
            if l.is_none() && c {
                *l = Some(j);
            }
        }
    }
    Ok(StoppingTime { levels, origin: i })
}

#[derive(Debug)]
struct Node {
    level: usize,
    atom: usize,
    count: u64,
    children: Vec<usize>,
}

/// Exhaustive stream over `T_i`, each stopping time exactly once.
#[derive(Debug)]
pub struct StoppingTimes<'a> {
    space: &'a FilteredSpace,
    nodes: Vec<Node>,
    roots: Vec<usize>,
    origin: usize,
    next: u64,
    total: u64,
}

impl StoppingTimes<'_> {
    /// Number of stopping times in the stream.
    pub fn total(&self) -> u64 {
        self.total
    }

    fn decode(&self, node: usize, mut k: u64, out: &mut [Option<usize>]) {
        let n = &self.nodes[node];
        if k == 0 {
            for x in self.space.atom(n.level, n.atom).iter() {
                out[x] = Some(n.level);
            }
            return;
        }
        if n.children.is_empty() {
            // k == 1: never stops on this atom
            return;
        }
        k -= 1;
        for &c in &n.children {
            let base = self.nodes[c].count;
            self.decode(c, k % base, out);
            k /= base;
        }
    }
}

impl Iterator for StoppingTimes<'_> {
    type Item = StoppingTime;

    fn next(&mut self) -> Option<StoppingTime> {
        if self.next >= self.total {
            return None;
        }
        let mut k = self.next;
        self.next += 1;
        let mut levels = vec![None; self.space.n_points()];
        for &r in &self.roots {
            let base = self.nodes[r].count;
            self.decode(r, k % base, &mut levels);
            k /= base;
        }
        Some(StoppingTime { levels, origin: self.origin })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = usize::try_from(self.total - self.next).unwrap_or(usize::MAX);
        (left, Some(left))
    }
}

/// Streams every adapted `τ >= i`, including `τ ≡ ∞`. Fails when more than
/// `budget` atoms lie on levels `i..=L`.
pub fn enumerate_stopping_times(
    space: &FilteredSpace,
    i: usize,
    budget: usize,
) -> Result<StoppingTimes<'_>, StoppingError> {
    assert!(i <= space.depth(), "origin {i} beyond the window");
    let atoms = space.atom_count_from(i);
    let too_large = StoppingError::TooLarge { atoms, level: i, budget };
    if atoms > budget {
        return Err(too_large);
    }
    // Children are created before parents so counts can be filled bottom-up.
    let mut nodes: Vec<Node> = Vec::with_capacity(atoms);
    let mut ids_below: Vec<usize> = Vec::new();
    for t in (i..space.n_levels()).rev() {
        let mut ids_here = Vec::with_capacity(space.level(t).len());
        for a in 0..space.level(t).len() {
            let children: Vec<usize> = space.children(t, a).iter().map(|&b| ids_below[b]).collect();
            let count = if t == space.depth() {
                2
            } else {
                children
                    .iter()
                    .try_fold(1_u64, |acc, &c| acc.checked_mul(nodes[c].count))
                    .and_then(|prod| prod.checked_add(1))
                    .ok_or_else(|| too_large.clone())?
            };
            ids_here.push(nodes.len());
            nodes.push(Node { level: t, atom: a, count, children });
        }
        ids_below = ids_here;
    }
    let roots = ids_below;
    let total = roots
        .iter()
        .try_fold(1_u64, |acc, &r| acc.checked_mul(nodes[r].count))
        .ok_or(too_large)?;
    Ok(StoppingTimes { space, nodes, roots, origin: i, next: 0, total })
}

/// Best value of `objective` over the whole of `T_i`, skipping stopping
/// times where it returns `None`. Ties keep the first witness.
pub fn exact_sup<F>(
    space: &FilteredSpace,
    i: usize,
    budget: usize,
    objective: F,
) -> Result<Option<(f64, StoppingTime)>, StoppingError>
where
    F: Fn(&StoppingTime) -> Option<f64>,
{
    let mut best: Option<(f64, StoppingTime)> = None;
    for tau in enumerate_stopping_times(space, i, budget)? {
        if let Some(v) = objective(&tau) {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, tau));
            }
        }
    }
    Ok(best)
}

/// Like [`exact_sup`] for objectives that depend on `{τ < ∞}` only; each
/// distinct tail set is evaluated once. Empty tail sets are skipped.
pub fn exact_sup_by_tail<F>(
    space: &FilteredSpace,
    i: usize,
    budget: usize,
    objective: F,
) -> Result<Option<(f64, StoppingTime)>, StoppingError>
where
    F: Fn(&PointSet) -> Option<f64>,
{
    let mut seen: HashMap<Vec<bool>, Option<f64>> = HashMap::new();
    let mut best: Option<(f64, StoppingTime)> = None;
    for tau in enumerate_stopping_times(space, i, budget)? {
        let mask: Vec<bool> = tau.levels.iter().map(Option::is_some).collect();
        if !mask.iter().any(|&b| b) {
            continue;
        }
        if seen.contains_key(&mask) {
            continue;
        }
        let v = objective(&PointSet::from_mask(&mask));
        seen.insert(mask, v);
        if let Some(v) = v {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, tau));
            }
        }
    }
    Ok(best)
}

const THRESHOLDS: usize = 24;
const SEARCH_SEEDS: usize = 3;
const SEARCH_ROUNDS: usize = 64;

/// Lower bound for `sup_{τ ∈ T_i} objective(τ)` from a candidate family:
/// first-hit times of threshold conditions on `E_j(g1) E_j(g2)` (when a
/// `guide` pair is supplied) over a log-spaced grid, every single-atom stop,
/// and greedy local search over stopping-atom moves.
pub fn heuristic_sup_over_tau<F>(
    space: &FilteredSpace,
    i: usize,
    guide: Option<(&PointFn, &PointFn)>,
    objective: F,
) -> Option<(f64, StoppingTime)>
where
    F: Fn(&StoppingTime) -> Option<f64>,
{
    let n = space.n_points();
    let mut candidates = vec![StoppingTime::constant(n, i)];
    for t in i..space.n_levels() {
        for a in 0..space.level(t).len() {
            candidates.push(StoppingTime::single_atom(space, t, a, i));
        }
    }
    if let Some((g1, g2)) = guide {
        let products: Vec<PointFn> =
            (0..space.n_levels()).map(|t| space.cond_exp(g1, t).mul(&space.cond_exp(g2, t))).collect();
        let (lo, hi) = products[i..]
            .iter()
            .flat_map(|p| p.values().iter().copied())
            .filter(|v| *v > 0.0)
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo.is_finite() && hi > 0.0 {
            let (llo, lhi) = (lo.ln(), hi.ln());
            for s in 0..=THRESHOLDS {
                let theta = (llo + (lhi - llo) * s as f64 / THRESHOLDS as f64).exp();
                for above in [true, false] {
                    let cond: Vec<Vec<bool>> = products
                        .iter()
                        .map(|p| p.values().iter().map(|&v| if above { v > theta } else { v < theta }).collect())
                        .collect();
                    if let Ok(tau) = first_hit(space, i, &cond) {
                        candidates.push(tau);
                    }
                }
            }
        }
    }

    let mut scored: Vec<(f64, StoppingTime)> =
        candidates.into_iter().filter_map(|tau| objective(&tau).map(|v| (v, tau))).collect();
    // stable sort keeps the first-seen candidate among ties
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored.first().cloned()?;
    for (start_value, start) in scored.into_iter().take(SEARCH_SEEDS) {
        let (v, tau) = local_search(space, i, start_value, start, &objective);
        if v > best.0 {
            best = (v, tau);
        }
    }
    Some(best)
}

fn local_search<F>(space: &FilteredSpace, i: usize, mut value: f64, mut tau: StoppingTime, objective: &F) -> (f64, StoppingTime)
where
    F: Fn(&StoppingTime) -> Option<f64>,
{
    for _ in 0..SEARCH_ROUNDS {
        let mut improved: Option<(f64, StoppingTime)> = None;
        let mut consider = |cand: StoppingTime| {
            debug_assert!(cand.is_adapted(space));
            if let Some(v) = objective(&cand) {
                let bar = improved.as_ref().map_or(value, |(b, _)| *b);
                if v > bar {
                    improved = Some((v, cand));
                }
            }
        };
        for t in i..space.n_levels() {
            for a in 0..space.level(t).len() {
                let x0 = space.atom(t, a).as_slice()[0];
                if tau.get(x0) == Some(t) {
                    let mut cand = tau.clone();
                    cand.clear_stop(space, t, a);
                    consider(cand);
                } else {
                    let mut cand = tau.clone();
                    cand.set_stop(space, t, a);
                    consider(cand);
                }
            }
        }
        match improved {
            Some((v, cand)) => {
                value = v;
                tau = cand;
            }
            None => break,
        }
    }
    (value, tau)
}
