//! Principal sets: the stopping-time decomposition behind the sparse bound
//! for the tailed bilinear maximal operator.

use serde::Serialize;
use thiserror::Error;

use crate::operators::tailed_bilinear_maximal;
use crate::space::{FilteredSpace, PointFn, PointSet, SpaceError};
use crate::stopping::first_hit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrincipalError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("omega0 is not a union of level-{level} atoms")]
    NotMeasurable { level: usize },
    #[error("{which} must be nonnegative")]
    Negative { which: &'static str },
}

/// `4^k`, exact for every exponent that can occur.
pub fn pow4(k: i32) -> f64 {
    4.0_f64.powi(k)
}

/// The unique `l` with `4^{l-1} < x <= 4^l`, or `None` for `x <= 0`.
pub fn shell(x: f64) -> Option<i32> {
    if !x.is_finite() || x <= 0.0 {
        return None;
    }
    let mut l = (x.log2() / 2.0).ceil() as i32;
    while pow4(l) < x {
        l += 1;
    }
    while pow4(l - 1) >= x {
        l -= 1;
    }
    Some(l)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrincipalSet {
    pub points: PointSet,
    pub k1: usize,
    pub k2: i32,
    pub exit: PointSet,
    pub children: Vec<PrincipalSet>,
    pub generation: usize,
}

impl PrincipalSet {
    /// Preorder traversal.
    pub fn nodes(&self) -> Vec<&PrincipalSet> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let n = out[i];
            out.extend(n.children.iter());
            i += 1;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrincipalForest {
    pub root: PrincipalSet,
    pub h1: PointFn,
    pub h2: PointFn,
    pub base_level: usize,
    pub base_k: i32,
}

impl PrincipalForest {
    /// All principal sets, root first.
    pub fn nodes(&self) -> Vec<&PrincipalSet> {
        self.root.nodes()
    }

    /// `𝒫_n` sizes, indexed by generation starting at 1.
    pub fn generation_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        for n in self.nodes() {
            if sizes.len() < n.generation {
                sizes.resize(n.generation, 0);
            }
            sizes[n.generation - 1] += 1;
        }
        sizes
    }
}

/// Pointwise `E_j(h1) E_j(h2)` for every level `j`.
fn products(space: &FilteredSpace, h1: &PointFn, h2: &PointFn) -> Vec<Vec<f64>> {
    (0..space.n_levels())
        .map(|j| space.cond_exp(h1, j).mul(&space.cond_exp(h2, j)).values().to_vec())
        .collect()
}

fn build_node(
    space: &FilteredSpace,
    prod: &[Vec<f64>],
    points: PointSet,
    k1: usize,
    k2: i32,
    generation: usize,
) -> PrincipalSet {
    let threshold = pow4(k2 + 1);
    let condition: Vec<Vec<bool>> = prod.iter().map(|lv| lv.iter().map(|&v| v > threshold).collect()).collect();
    let tau = first_hit(space, k1, &condition).expect("level products are atom-constant");
    let mut groups: Vec<((usize, i32), Vec<usize>)> = Vec::new();
    for x in points.iter() {
        if let Some(j) = tau.get(x) {
            let l = shell(prod[j][x]).expect("stopped points have a positive product");
            match groups.iter_mut().find(|(key, _)| *key == (j, l)) {
                Some((_, pts)) => pts.push(x),
                None => groups.push(((j, l), vec![x])),
            }
        }
    }
    groups.sort_by_key(|(key, _)| *key);
    let mut covered = PointSet::empty();
    let children: Vec<PrincipalSet> = groups
        .into_iter()
        .map(|((j, l), pts)| {
            let set = PointSet::new(pts);
            covered = covered.union(&set);
            build_node(space, prod, set, j, l, generation + 1)
        })
        .collect();
    let exit = points.difference(&covered);
    PrincipalSet { points, k1, k2, exit, children, generation }
}

fn check_inputs(space: &FilteredSpace, i: usize, omega0: &PointSet, h1: &PointFn, h2: &PointFn) -> Result<(), PrincipalError> {
    space.check_level(i)?;
    for h in [h1, h2] {
        if h.len() != space.n_points() {
            return Err(SpaceError::LengthMismatch { expected: space.n_points(), found: h.len() }.into());
        }
    }
    if !h1.is_nonnegative() {
        return Err(PrincipalError::Negative { which: "h1" });
    }
    if !h2.is_nonnegative() {
        return Err(PrincipalError::Negative { which: "h2" });
    }
    if omega0.iter().any(|x| x >= space.n_points()) || !space.is_measurable(omega0, i) {
        return Err(PrincipalError::NotMeasurable { level: i });
    }
    Ok(())
}

/// Principal sets grown from `P_0 = {4^{k-1} < E_i(h1) E_i(h2) <= 4^k} ∩ Ω_0`.
/// Returns `None` when `P_0` is null.
pub fn build_principal_forest(
    space: &FilteredSpace,
    i: usize,
    k: i32,
    omega0: &PointSet,
    h1: &PointFn,
    h2: &PointFn,
) -> Result<Option<PrincipalForest>, PrincipalError> {
    check_inputs(space, i, omega0, h1, h2)?;
    let prod = products(space, h1, h2);
    Ok(grow(space, &prod, i, k, omega0, h1, h2))
}

fn grow(
    space: &FilteredSpace,
    prod: &[Vec<f64>],
    i: usize,
    k: i32,
    omega0: &PointSet,
    h1: &PointFn,
    h2: &PointFn,
) -> Option<PrincipalForest> {
    let p0: PointSet = omega0.iter().filter(|&x| shell(prod[i][x]) == Some(k)).collect();
    if space.measure(&p0) <= 0.0 {
        return None;
    }
    let root = build_node(space, prod, p0, i, k, 1);
    Some(PrincipalForest { root, h1: h1.clone(), h2: h2.clone(), base_level: i, base_k: k })
}

/// One forest per shell `k` that meets `Ω_0`, in increasing `k`.
pub fn forest_cover(
    space: &FilteredSpace,
    i: usize,
    omega0: &PointSet,
    h1: &PointFn,
    h2: &PointFn,
) -> Result<Vec<PrincipalForest>, PrincipalError> {
    check_inputs(space, i, omega0, h1, h2)?;
    let prod = products(space, h1, h2);
    let mut ks: Vec<i32> = omega0.iter().filter_map(|x| shell(prod[i][x])).collect();
    ks.sort_unstable();
    ks.dedup();
    Ok(ks.into_iter().filter_map(|k| grow(space, &prod, i, k, omega0, h1, h2)).collect())
}

/// Outcome of one structural property, with the smallest slack seen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub holds: bool,
    pub worst_slack: f64,
}

impl PropertyCheck {
    fn new() -> Self {
        PropertyCheck { holds: true, worst_slack: f64::INFINITY }
    }

    fn record(&mut self, slack: f64) {
        self.worst_slack = self.worst_slack.min(slack);
        if slack < 0.0 {
            self.holds = false;
        }
    }

    fn flag(&mut self, ok: bool) {
        self.record(if ok { 0.0 } else { -1.0 });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    /// Exit sets are disjoint and cover `P_0`.
    pub p1: PropertyCheck,
    /// Each `P` is a union of level-`K1(P)` atoms.
    pub p2: PropertyCheck,
    /// `2 E_{K1}(χ_{E(P)}) >= 1` on `P`; slack is `2 E - 1`.
    pub p3: PropertyCheck,
    /// Shell bounds at level `K1(P)`, relative slack.
    pub p4: PropertyCheck,
    /// Tailed product of `h χ_P` on `E(P)` is at most `4^{K2+1}`, relative slack.
    pub p5: PropertyCheck,
    /// Children are later and at least two shells higher.
    pub nesting: PropertyCheck,
    pub generations: Vec<usize>,
}

impl PropertyReport {
    pub fn all_hold(&self) -> bool {
        [self.p1, self.p2, self.p3, self.p4, self.p5, self.nesting].iter().all(|c| c.holds)
    }
}

/// Evaluates the structural properties of every principal set.
pub fn verify_properties(space: &FilteredSpace, forest: &PrincipalForest) -> PropertyReport {
    let nodes = forest.nodes();
    let prod = products(space, &forest.h1, &forest.h2);
    let (mut p1, mut p2, mut p3, mut p4, mut p5, mut nesting) = (
        PropertyCheck::new(),
        PropertyCheck::new(),
        PropertyCheck::new(),
        PropertyCheck::new(),
        PropertyCheck::new(),
        PropertyCheck::new(),
    );

    let mut seen = vec![false; space.n_points()];
    let mut disjoint = true;
    for n in &nodes {
        for x in n.exit.iter() {
            disjoint &= !seen[x];
            seen[x] = true;
        }
    }
    let covered = PointSet::from_mask(&seen);
    p1.flag(disjoint && covered == forest.root.points);

    for n in &nodes {
        p2.flag(space.is_measurable(&n.points, n.k1));
        let exit_density = space.cond_exp(&PointFn::indicator(space.n_points(), &n.exit), n.k1);
        let top = pow4(n.k2);
        let bottom = pow4(n.k2 - 1);
        let cap = pow4(n.k2 + 1);
        let tailed = tailed_bilinear_maximal(space, n.k1, &forest.h1.restrict(&n.points), &forest.h2.restrict(&n.points));
        for x in n.points.iter() {
            p3.record(2.0 * exit_density.get(x) - 1.0);
            let v = prod[n.k1][x];
            p4.record(((v - bottom) / top).min((top - v) / top));
        }
        for x in n.exit.iter() {
            p5.record((cap - tailed.get(x)) / cap);
        }
        let mut child_union = PointSet::empty();
        for c in &n.children {
            nesting.flag(c.k1 > n.k1 && c.k2 >= n.k2 + 2 && c.points.is_subset(&n.points) && c.generation == n.generation + 1);
            child_union = child_union.union(&c.points);
        }
        nesting.flag(n.exit == n.points.difference(&child_union));
    }
    PropertyReport { p1, p2, p3, p4, p5, nesting, generations: forest.generation_sizes() }
}

/// `16 Σ_P 4^{K2(P)-1} χ_{E(P)}`.
pub fn sparse_bound(space: &FilteredSpace, forest: &PrincipalForest) -> PointFn {
    let mut out = vec![0.0; space.n_points()];
    for n in forest.nodes() {
        for x in n.exit.iter() {
            out[x] += 16.0 * pow4(n.k2 - 1);
        }
    }
    PointFn::from_raw(out)
}

/// Largest `μ(P) / μ(E(P))` over all principal sets.
pub fn doubling_check(space: &FilteredSpace, forest: &PrincipalForest) -> f64 {
    forest
        .nodes()
        .iter()
        .map(|n| space.measure(&n.points) / space.measure(&n.exit))
        .fold(f64::NEG_INFINITY, f64::max)
}
