//! Finite filtered measure spaces.
//!
//! A [`FilteredSpace`] is a finite set of points carrying strictly positive
//! masses together with a tower of partitions `levels[0], ..., levels[L]`,
//! each refining the previous one. Level `t` plays the role of the σ-algebra
//! `F_t`; conditional expectations average over its atoms.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when building spaces, functions or exponents.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("invalid filtered space: {0}")]
    Invalid(#[from] Violation),
    #[error("function value at point {index} is not finite")]
    NonFinite { index: usize },
    #[error("function has {found} values but the space has {expected} points")]
    LengthMismatch { expected: usize, found: usize },
    #[error("density must be strictly positive, found {value} at point {point}")]
    NonPositiveDensity { point: usize, value: f64 },
    #[error("level {level} out of range (window is 0..={depth})")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("exponents must satisfy 1 < p1, p2 < inf, got p1 = {p1}, p2 = {p2}")]
    BadExponents { p1: f64, p2: f64 },
}

/// First invariant failure found by [`validate`]. The `Display` form carries
/// a JSON path (`masses[i]`, `levels[t][a]`) into the instance file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Violation {
    #[error("levels: at least one level is required")]
    NoLevels,
    #[error("masses: the space has no points")]
    NoPoints,
    #[error("masses[{point}]: nonpositive mass {value}")]
    NonPositiveMass { point: usize, value: f64 },
    #[error("masses[{point}]: mass is not finite")]
    NonFiniteMass { point: usize },
    #[error("levels[{level}][{atom}]: empty atom")]
    EmptyAtom { level: usize, atom: usize },
    #[error("levels[{level}][{atom}]: point {point} out of range")]
    PointOutOfRange { level: usize, atom: usize, point: usize },
    #[error("levels[{level}][{atom}]: point {point} already appears in another atom")]
    DuplicatePoint { level: usize, atom: usize, point: usize },
    #[error("levels[{level}]: point {point} is not covered")]
    MissingPoint { level: usize, point: usize },
    #[error("levels[{level}][{atom}]: atom straddles several atoms of level {}", .level - 1)]
    NotRefining { level: usize, atom: usize },
}

/// A set of point indices, kept sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct PointSet(Vec<usize>);

impl PointSet {
    pub fn new(mut points: Vec<usize>) -> Self {
        points.sort_unstable();
        points.dedup();
        PointSet(points)
    }

    pub fn empty() -> Self {
        PointSet(Vec::new())
    }

    /// All of `0..n`.
    pub fn full(n: usize) -> Self {
        PointSet((0..n).collect())
    }

    /// Points where `mask` is true.
    pub fn from_mask(mask: &[bool]) -> Self {
        PointSet(mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.0.iter().all(|&x| other.contains(x))
    }

    pub fn is_disjoint(&self, other: &PointSet) -> bool {
        self.0.iter().all(|&x| !other.contains(x))
    }

    pub fn union(&self, other: &PointSet) -> PointSet {
        PointSet::new(self.0.iter().chain(other.0.iter()).copied().collect())
    }

    pub fn intersection(&self, other: &PointSet) -> PointSet {
        PointSet(self.0.iter().copied().filter(|&x| other.contains(x)).collect())
    }

    pub fn difference(&self, other: &PointSet) -> PointSet {
        PointSet(self.0.iter().copied().filter(|&x| !other.contains(x)).collect())
    }

    /// Boolean mask of length `n`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &x in &self.0 {
            m[x] = true;
        }
        m
    }
}

impl From<Vec<usize>> for PointSet {
    fn from(v: Vec<usize>) -> Self {
        PointSet::new(v)
    }
}

impl From<PointSet> for Vec<usize> {
    fn from(s: PointSet) -> Self {
        s.0
    }
}

impl FromIterator<usize> for PointSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        PointSet::new(iter.into_iter().collect())
    }
}

impl fmt::Display for PointSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

/// A real-valued function on the points of a space. Values are always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PointFn(Vec<f64>);

impl TryFrom<Vec<f64>> for PointFn {
    type Error = SpaceError;
    fn try_from(v: Vec<f64>) -> Result<Self, SpaceError> {
        PointFn::new(v)
    }
}

impl From<PointFn> for Vec<f64> {
    fn from(f: PointFn) -> Self {
        f.0
    }
}

impl PointFn {
    pub fn new(values: Vec<f64>) -> Result<Self, SpaceError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpaceError::NonFinite { index });
        }
        Ok(PointFn(values))
    }

    /// Wraps values the caller knows to be finite.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite value in {values:?}");
        PointFn(values)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        PointFn::from_raw(vec![c; n])
    }

    pub fn zeros(n: usize) -> Self {
        PointFn::constant(n, 0.0)
    }

    pub fn indicator(n: usize, set: &PointSet) -> Self {
        let mut v = vec![0.0; n];
        for x in set.iter() {
            v[x] = 1.0;
        }
        PointFn(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, x: usize) -> f64 {
        self.0[x]
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> PointFn {
        PointFn::from_raw(self.0.iter().map(|&x| op(x)).collect())
    }

    pub fn zip_with(&self, other: &PointFn, op: impl Fn(f64, f64) -> f64) -> PointFn {
        assert_eq!(self.len(), other.len(), "function length mismatch");
        PointFn::from_raw(self.0.iter().zip(&other.0).map(|(&a, &b)| op(a, b)).collect())
    }

    pub fn mul(&self, other: &PointFn) -> PointFn {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> PointFn {
        self.map(|x| c * x)
    }

    pub fn abs(&self) -> PointFn {
        self.map(f64::abs)
    }

    pub fn powf(&self, e: f64) -> PointFn {
        self.map(|x| x.powf(e))
    }

    /// Restriction to `set` (zero elsewhere).
    pub fn restrict(&self, set: &PointSet) -> PointFn {
        let mut v = vec![0.0; self.len()];
        for x in set.iter() {
            v[x] = self.0[x];
        }
        PointFn(v)
    }

    pub fn max_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&x| x >= 0.0)
    }

    /// Errors with the first point carrying a nonpositive value.
    pub fn check_positive(&self) -> Result<(), SpaceError> {
        match self.0.iter().position(|&x| x <= 0.0) {
            Some(point) => Err(SpaceError::NonPositiveDensity { point, value: self.0[point] }),
            None => Ok(()),
        }
    }
}

/// Exponent data `p1, p2` and everything derived from them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Exponents {
    pub p1: f64,
    pub p2: f64,
    /// `1/p = 1/p1 + 1/p2`.
    pub p: f64,
    pub p1_dual: f64,
    pub p2_dual: f64,
    /// `min(p1, p2)`.
    pub q: f64,
    /// Dual of `q`, equal to `max(p1', p2')`.
    pub q_dual: f64,
}

impl Exponents {
    pub fn new(p1: f64, p2: f64) -> Result<Self, SpaceError> {
        if !(p1.is_finite() && p2.is_finite() && p1 > 1.0 && p2 > 1.0) {
            return Err(SpaceError::BadExponents { p1, p2 });
        }
        let dual = |r: f64| r / (r - 1.0);
        let q = p1.min(p2);
        Ok(Exponents {
            p1,
            p2,
            p: 1.0 / (1.0 / p1 + 1.0 / p2),
            p1_dual: dual(p1),
            p2_dual: dual(p2),
            q,
            q_dual: dual(q),
        })
    }

    /// `p / p1`.
    pub fn a1(&self) -> f64 {
        self.p / self.p1
    }

    /// `p / p2`.
    pub fn a2(&self) -> f64 {
        self.p / self.p2
    }
}

/// Checks the invariants of a filtered space given in raw form.
pub fn validate(masses: &[f64], levels: &[Vec<Vec<usize>>]) -> Result<(), Violation> {
    if masses.is_empty() {
        return Err(Violation::NoPoints);
    }
    if levels.is_empty() {
        return Err(Violation::NoLevels);
    }
    for (point, &value) in masses.iter().enumerate() {
        if !value.is_finite() {
            return Err(Violation::NonFiniteMass { point });
        }
        if value <= 0.0 {
            return Err(Violation::NonPositiveMass { point, value });
        }
    }
    let n = masses.len();
    let mut prev_owner: Option<Vec<usize>> = None;
    for (level, atoms) in levels.iter().enumerate() {
        let mut owner = vec![usize::MAX; n];
        for (atom, points) in atoms.iter().enumerate() {
            if points.is_empty() {
                return Err(Violation::EmptyAtom { level, atom });
            }
            for &point in points {
                if point >= n {
                    return Err(Violation::PointOutOfRange { level, atom, point });
                }
                if owner[point] != usize::MAX {
                    return Err(Violation::DuplicatePoint { level, atom, point });
                }
                owner[point] = atom;
            }
        }
        if let Some(point) = owner.iter().position(|&a| a == usize::MAX) {
            return Err(Violation::MissingPoint { level, point });
        }
        if let Some(prev) = &prev_owner {
            for (atom, points) in atoms.iter().enumerate() {
                let parent = prev[points[0]];
                if points.iter().any(|&x| prev[x] != parent) {
                    return Err(Violation::NotRefining { level, atom });
                }
            }
        }
        prev_owner = Some(owner);
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawSpace {
    masses: Vec<f64>,
    levels: Vec<Vec<Vec<usize>>>,
}

/// A finite filtered measure space: point masses plus a refining tower of
/// partitions indexed `0..=L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct FilteredSpace {
    masses: Vec<f64>,
    levels: Vec<Vec<PointSet>>,
    #[serde(skip)]
    owner: Vec<Vec<usize>>,
    #[serde(skip)]
    atom_mass: Vec<Vec<f64>>,
    #[serde(skip)]
    children: Vec<Vec<Vec<usize>>>,
}

impl TryFrom<RawSpace> for FilteredSpace {
    type Error = SpaceError;
    fn try_from(raw: RawSpace) -> Result<Self, SpaceError> {
        FilteredSpace::new(raw.masses, raw.levels)
    }
}

impl FilteredSpace {
    /// Validates and builds a space. `levels` are ordered coarse to fine.
    pub fn new(masses: Vec<f64>, levels: Vec<Vec<Vec<usize>>>) -> Result<Self, SpaceError> {
        validate(&masses, &levels)?;
        let n = masses.len();
        let levels: Vec<Vec<PointSet>> = levels
            .into_iter()
            .map(|atoms| atoms.into_iter().map(PointSet::new).collect())
            .collect();
        let owner: Vec<Vec<usize>> = levels
            .iter()
            .map(|atoms| {
                let mut o = vec![0; n];
                for (a, atom) in atoms.iter().enumerate() {
                    for x in atom.iter() {
                        o[x] = a;
                    }
                }
                o
            })
            .collect();
        let atom_mass = levels
            .iter()
            .map(|atoms| atoms.iter().map(|atom| atom.iter().map(|x| masses[x]).sum()).collect())
            .collect();
        let children = (0..levels.len())
            .map(|t| {
                let mut ch = vec![Vec::new(); levels[t].len()];
                if t + 1 < levels.len() {
                    for (b, atom) in levels[t + 1].iter().enumerate() {
                        ch[owner[t][atom.as_slice()[0]]].push(b);
                    }
                }
                ch
            })
            .collect();
        Ok(FilteredSpace { masses, levels, owner, atom_mass, children })
    }

    /// The canonical `b`-adic tower with `depth` splits and uniform masses.
    pub fn uniform_tree(depth: usize, branching: usize) -> Self {
        assert!(branching >= 1);
        let n = branching.pow(depth as u32);
        let levels = (0..=depth)
            .map(|t| {
                let width = branching.pow((depth - t) as u32);
                (0..n / width).map(|a| (a * width..(a + 1) * width).collect()).collect()
            })
            .collect();
        FilteredSpace::new(vec![1.0 / n as f64; n], levels).expect("uniform tree is valid")
    }

    /// Parses the JSON instance format `{"masses": [...], "levels": [...]}`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn n_points(&self) -> usize {
        self.masses.len()
    }

    /// Index `L` of the finest level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn level(&self, t: usize) -> &[PointSet] {
        &self.levels[t]
    }

    pub fn levels(&self) -> &[Vec<PointSet>] {
        &self.levels
    }

    /// Index of the level-`t` atom containing `x`.
    pub fn atom_of(&self, t: usize, x: usize) -> usize {
        self.owner[t][x]
    }

    pub fn atom(&self, t: usize, a: usize) -> &PointSet {
        &self.levels[t][a]
    }

    pub fn atom_mass(&self, t: usize, a: usize) -> f64 {
        self.atom_mass[t][a]
    }

    /// Level-`t+1` atoms inside atom `a` of level `t` (empty at the finest level).
    pub fn children(&self, t: usize, a: usize) -> &[usize] {
        &self.children[t][a]
    }

    /// Number of atoms on levels `i..=L`.
    pub fn atom_count_from(&self, i: usize) -> usize {
        self.levels[i..].iter().map(Vec::len).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `μ(set)`.
    pub fn measure(&self, set: &PointSet) -> f64 {
        set.iter().map(|x| self.masses[x]).sum()
    }

    /// Whether the finest level consists of singletons.
    pub fn separates_points(&self) -> bool {
        self.levels[self.depth()].iter().all(|a| a.len() == 1)
    }

    /// Whether `set` is a union of level-`t` atoms.
    pub fn is_measurable(&self, set: &PointSet, t: usize) -> bool {
        let mask = set.mask(self.n_points());
        self.levels[t].iter().all(|atom| {
            let first = mask[atom.as_slice()[0]];
            atom.iter().all(|x| mask[x] == first)
        })
    }

    /// Whether `f` is constant on every level-`t` atom.
    pub fn is_level_constant<T: PartialEq + Copy>(&self, values: &[T], t: usize) -> bool {
        self.levels[t].iter().all(|atom| {
            let first = values[atom.as_slice()[0]];
            atom.iter().all(|x| values[x] == first)
        })
    }

    /// The same space with the finest level repeated once more.
    pub fn with_repeated_finest_level(&self) -> Self {
        let mut levels: Vec<Vec<Vec<usize>>> = self
            .levels
            .iter()
            .map(|atoms| atoms.iter().map(|a| a.as_slice().to_vec()).collect())
            .collect();
        levels.push(levels[levels.len() - 1].clone());
        FilteredSpace::new(self.masses.clone(), levels).expect("repeating a level keeps validity")
    }

    pub(crate) fn check_len(&self, f: &PointFn) {
        assert_eq!(f.len(), self.n_points(), "function length does not match the space");
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<(), SpaceError> {
        if level > self.depth() {
            return Err(SpaceError::LevelOutOfRange { level, depth: self.depth() });
        }
        Ok(())
    }

    /// `∫_set f dμ`.
    pub fn integrate(&self, f: &PointFn, set: &PointSet) -> f64 {
        self.check_len(f);
        set.iter().map(|x| f.get(x) * self.masses[x]).sum()
    }

    /// `∫_Ω f dμ`.
    pub fn integral(&self, f: &PointFn) -> f64 {
        self.check_len(f);
        f.values().iter().zip(&self.masses).map(|(v, m)| v * m).sum()
    }

    /// Per-atom averages of `f` at `level`, indexed by atom.
    pub fn atom_averages(&self, f: &PointFn, level: usize) -> Vec<f64> {
        self.check_len(f);
        self.levels[level]
            .iter()
            .zip(&self.atom_mass[level])
            .map(|(atom, &m)| atom.iter().map(|x| f.get(x) * self.masses[x]).sum::<f64>() / m)
            .collect()
    }

    /// Spreads per-atom values of `level` back to points.
    pub fn spread(&self, per_atom: &[f64], level: usize) -> PointFn {
        PointFn::from_raw(self.owner[level].iter().map(|&a| per_atom[a]).collect())
    }

    /// `E_level(f)`.
    pub fn cond_exp(&self, f: &PointFn, level: usize) -> PointFn {
        self.spread(&self.atom_averages(f, level), level)
    }

    /// `E_t(f)` for every `t = 0..=L`.
    pub fn cond_exp_all(&self, f: &PointFn) -> Vec<PointFn> {
        (0..self.n_levels()).map(|t| self.cond_exp(f, t)).collect()
    }

    /// Conditional expectation for the measure `σ dμ`: `E_t(fσ) / E_t(σ)`.
    pub fn weighted_cond_exp(
        &self,
        f: &PointFn,
        sigma: &PointFn,
        level: usize,
    ) -> Result<PointFn, SpaceError> {
        sigma.check_positive()?;
        self.check_level(level)?;
        let num = self.atom_averages(&f.mul(sigma), level);
        let den = self.atom_averages(sigma, level);
        let ratio: Vec<f64> = num.iter().zip(&den).map(|(a, b)| a / b).collect();
        Ok(self.spread(&ratio, level))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol::approx_eq;

    fn dyadic4() -> FilteredSpace {
        FilteredSpace::new(
            vec![0.25; 4],
            vec![vec![vec![0, 1, 2, 3]], vec![vec![0, 1], vec![2, 3]], vec![vec![0], vec![1], vec![2], vec![3]]],
        )
        .unwrap()
    }

    fn f(v: &[f64]) -> PointFn {
        PointFn::new(v.to_vec()).unwrap()
    }

    fn assert_fn_eq(a: &PointFn, b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.values().iter().zip(b) {
            assert!(approx_eq(*x, *y), "{:?} != {:?}", a.values(), b);
        }
    }

    #[test]
    fn canonical_tower_validates() {
        let s = dyadic4();
        assert_eq!(s.depth(), 2);
        assert_eq!(s, FilteredSpace::uniform_tree(2, 2));
    }

    #[test]
    fn straddling_atom_is_reported() {
        let err = validate(
            &[0.25; 4],
            &[vec![vec![0, 1], vec![2, 3]], vec![vec![0], vec![1, 2], vec![3]]],
        )
        .unwrap_err();
        assert_eq!(err, Violation::NotRefining { level: 1, atom: 1 });
        assert!(err.to_string().starts_with("levels[1][1]"));
    }

    #[test]
    fn zero_mass_is_reported() {
        let err = validate(&[0.25, 0.0, 0.25, 0.5], &[vec![vec![0, 1, 2, 3]]]).unwrap_err();
        assert!(matches!(err, Violation::NonPositiveMass { point: 1, .. }));
        assert!(err.to_string().contains("nonpositive mass"));
    }

    #[test]
    fn partition_defects_are_reported() {
        assert_eq!(
            validate(&[1.0, 1.0], &[vec![vec![0]]]).unwrap_err(),
            Violation::MissingPoint { level: 0, point: 1 }
        );
        assert_eq!(
            validate(&[1.0, 1.0], &[vec![vec![0, 1], vec![1]]]).unwrap_err(),
            Violation::DuplicatePoint { level: 0, atom: 1, point: 1 }
        );
        assert_eq!(
            validate(&[1.0], &[vec![vec![0], vec![]]]).unwrap_err(),
            Violation::EmptyAtom { level: 0, atom: 1 }
        );
        assert_eq!(
            validate(&[1.0], &[vec![vec![3]]]).unwrap_err(),
            Violation::PointOutOfRange { level: 0, atom: 0, point: 3 }
        );
        assert_eq!(validate(&[1.0], &[]).unwrap_err(), Violation::NoLevels);
    }

    #[test]
    fn integrate_examples() {
        let s = dyadic4();
        assert!(approx_eq(s.integrate(&PointFn::constant(4, 1.0), &PointSet::full(4)), 1.0));
        assert!(approx_eq(s.integrate(&f(&[1.0, 0.0, 0.0, 0.0]), &PointSet::new(vec![0, 1])), 0.25));
        assert_eq!(s.integrate(&f(&[3.0, -1.0, 2.0, 7.0]), &PointSet::empty()), 0.0);
    }

    #[test]
    fn cond_exp_examples() {
        let s = dyadic4();
        for t in 0..3 {
            assert_fn_eq(&s.cond_exp(&PointFn::constant(4, 2.5), t), &[2.5; 4]);
        }
        let g = f(&[1.0, 0.0, 0.0, 0.0]);
        assert_fn_eq(&s.cond_exp(&g, 0), &[0.25; 4]);
        assert_fn_eq(&s.cond_exp(&g, 1), &[0.5, 0.5, 0.0, 0.0]);
        assert_fn_eq(&s.cond_exp(&g, 2), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn weighted_cond_exp_examples() {
        let s = dyadic4();
        let g = f(&[1.0, 0.0, 0.0, 0.0]);
        let sigma = f(&[3.0, 1.0, 1.0, 1.0]);
        assert_fn_eq(&s.weighted_cond_exp(&g, &sigma, 1).unwrap(), &[0.75, 0.75, 0.0, 0.0]);
        for t in 0..3 {
            let unit = s.weighted_cond_exp(&g, &PointFn::constant(4, 1.0), t).unwrap();
            assert_fn_eq(&unit, s.cond_exp(&g, t).values());
            let c = s.weighted_cond_exp(&PointFn::constant(4, -2.0), &sigma, t).unwrap();
            assert_fn_eq(&c, &[-2.0; 4]);
        }
        assert!(matches!(
            s.weighted_cond_exp(&g, &f(&[1.0, 0.0, 1.0, 1.0]), 0),
            Err(SpaceError::NonPositiveDensity { point: 1, .. })
        ));
    }

    #[test]
    fn json_roundtrip_and_rejection() {
        let s = dyadic4();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"masses":[0.25,0.25,0.25,0.25],"levels":[[[0,1,2,3]],[[0,1],[2,3]],[[0],[1],[2],[3]]]}"#);
        assert_eq!(FilteredSpace::from_json(&text).unwrap(), s);
        let bad = r#"{"masses":[0.5,0.5],
            "levels":[[[0,1]],[[0]]]}"#;
        let err = FilteredSpace::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("levels[1]: point 1 is not covered"), "{err}");
        let syntax = FilteredSpace::from_json("{\"masses\":[1.0],\n\"levels\": [[[0]]")
            .unwrap_err()
            .to_string();
        assert!(syntax.contains("line 2"), "{syntax}");
    }

    #[test]
    fn exponents_are_derived() {
        let e = Exponents::new(2.0, 3.0).unwrap();
        assert!(approx_eq(e.p, 1.2));
        assert!(approx_eq(e.p1_dual, 2.0));
        assert!(approx_eq(e.p2_dual, 1.5));
        assert_eq!(e.q, 2.0);
        assert!(approx_eq(e.q_dual, 2.0));
        assert!(Exponents::new(1.0, 2.0).is_err());
        assert!(Exponents::new(2.0, f64::INFINITY).is_err());
    }

    #[test]
    fn measurability() {
        let s = dyadic4();
        assert!(s.is_measurable(&PointSet::new(vec![0, 1]), 1));
        assert!(!s.is_measurable(&PointSet::new(vec![0, 1]), 0));
        assert!(s.is_measurable(&PointSet::empty(), 0));
        assert_eq!(s.children(0, 0), &[0, 1]);
        assert_eq!(s.children(1, 1), &[2, 3]);
        assert!(s.children(2, 0).is_empty());
        assert_eq!(s.atom_count_from(0), 7);
    }
}
