//! Carleson embedding over the principal sets of a forest.

use serde::Serialize;
use thiserror::Error;

use crate::principal::{PrincipalForest, PrincipalSet};
use crate::space::{Exponents, FilteredSpace, PointFn, PointSet, SpaceError};
use crate::stopping::{exact_sup_by_tail, StoppingError, StoppingTime};
use crate::tol::approx_le;
use crate::weights::{geometric_weight, sigma_from_omega};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CarlesonError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error("Carleson constant not certified by exhaustive enumeration")]
    NotCertified,
    #[error("expected {expected} coefficients, found {found}")]
    CoefficientCount { expected: usize, found: usize },
    #[error("coefficient {index} is negative or not finite")]
    BadCoefficient { index: usize },
}

/// Whether shells cut the principal set itself or only its exit set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    #[serde(rename = "P")]
    PBased,
    #[serde(rename = "E")]
    ExitBased,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::PBased => "P",
            Variant::ExitBased => "E",
        }
    }
}

/// The unique `l` with `2^l < x <= 2^{l+1}`.
pub fn dyadic_shell(x: f64) -> Option<i32> {
    if !x.is_finite() || x <= 0.0 {
        return None;
    }
    let mut l = x.log2().ceil() as i32 - 1;
    while 2.0_f64.powi(l + 1) < x {
        l += 1;
    }
    while 2.0_f64.powi(l) >= x {
        l -= 1;
    }
    Some(l)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlesonEntry {
    /// Child indices leading from the root to the principal set.
    pub node: Vec<usize>,
    pub k1: usize,
    pub l: i32,
    pub set: PointSet,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlesonFamily {
    pub entries: Vec<CarlesonEntry>,
    pub carleson_a: Option<f64>,
    pub certified: bool,
    pub variant: Variant,
    pub base_level: usize,
}

impl CarlesonFamily {
    pub fn coefficients(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.coefficient).collect()
    }

    pub fn set_coefficients(&mut self, coefficients: &[f64]) -> Result<(), CarlesonError> {
        if coefficients.len() != self.entries.len() {
            return Err(CarlesonError::CoefficientCount { expected: self.entries.len(), found: coefficients.len() });
        }
        if let Some(index) = coefficients.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(CarlesonError::BadCoefficient { index });
        }
        for (e, &a) in self.entries.iter_mut().zip(coefficients) {
            e.coefficient = a;
        }
        self.carleson_a = None;
        self.certified = false;
        Ok(())
    }

    /// Uses `a` as the Carleson constant without certifying it.
    pub fn with_constant(mut self, a: f64) -> Self {
        self.carleson_a = Some(a);
        self.certified = false;
        self
    }

    /// `Σ_{Q ⊆ E} a_Q`.
    pub fn mass_inside(&self, tail: &PointSet) -> f64 {
        self.entries.iter().filter(|e| e.set.is_subset(tail)).map(|e| e.coefficient).sum()
    }
}

fn walk<'a>(node: &'a PrincipalSet, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, &'a PrincipalSet)>) {
    out.push((path.clone(), node));
    for (c, child) in node.children.iter().enumerate() {
        path.push(c);
        walk(child, path, out);
        path.pop();
    }
}

/// Dyadic shells `A_P^l` of `E_{K1}(σ1) E_{K1}(σ2)` over every principal set,
/// with zero coefficients.
pub fn build_level_sets(
    space: &FilteredSpace,
    forest: &PrincipalForest,
    sigma1: &PointFn,
    sigma2: &PointFn,
    variant: Variant,
) -> Result<CarlesonFamily, SpaceError> {
    sigma1.check_positive()?;
    sigma2.check_positive()?;
    let mut nodes = Vec::new();
    walk(&forest.root, &mut Vec::new(), &mut nodes);
    let mut entries = Vec::new();
    for (path, node) in nodes {
        let prod = space.cond_exp(sigma1, node.k1).mul(&space.cond_exp(sigma2, node.k1));
        let base = match variant {
            Variant::PBased => &node.points,
            Variant::ExitBased => &node.exit,
        };
        let mut shells: Vec<(i32, Vec<usize>)> = Vec::new();
        for x in base.iter() {
            let l = dyadic_shell(prod.get(x)).expect("positive weights have positive averages");
            match shells.iter_mut().find(|(k, _)| *k == l) {
                Some((_, pts)) => pts.push(x),
                None => shells.push((l, vec![x])),
            }
        }
        shells.sort_by_key(|(l, _)| *l);
        for (l, pts) in shells {
            entries.push(CarlesonEntry { node: path.clone(), k1: node.k1, l, set: PointSet::new(pts), coefficient: 0.0 });
        }
    }
    Ok(CarlesonFamily { entries, carleson_a: None, certified: false, variant, base_level: forest.base_level })
}

/// Coefficients `a_Q = ∫_Q (E_{K1}(σ1) E_{K1}(σ2))^p v dμ`.
pub fn proof_coefficients(
    space: &FilteredSpace,
    family: &CarlesonFamily,
    v: &PointFn,
    sigma1: &PointFn,
    sigma2: &PointFn,
    exps: &Exponents,
) -> Vec<f64> {
    family
        .entries
        .iter()
        .map(|e| {
            let prod = space.cond_exp(sigma1, e.k1).mul(&space.cond_exp(sigma2, e.k1));
            space.integrate(&prod.powf(exps.p).mul(v), &e.set)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Tests `Σ_{Q ⊆ {τ<∞}} a_Q <= A ∫_{τ<∞} σ1^{p/p1} σ2^{p/p2}`; `rhs` is
/// reported with `A` applied.
pub fn check_carleson_condition(
    space: &FilteredSpace,
    family: &CarlesonFamily,
    sigma1: &PointFn,
    sigma2: &PointFn,
    exps: &Exponents,
    tau: &StoppingTime,
) -> Result<ConditionCheck, CarlesonError> {
    let a = family.carleson_a.ok_or(CarlesonError::NotCertified)?;
    let tail = tau.tail_set();
    let lhs = family.mass_inside(&tail);
    let rhs = a * space.integrate(&geometric_weight(sigma1, sigma2, exps), &tail);
    Ok(ConditionCheck { lhs, rhs, ok: approx_le(lhs, rhs) })
}

/// Smallest `A` for which the condition holds at every `τ ∈ T_i`, found by
/// enumerating `T_i`; stored in the family as certified.
pub fn certify_carleson_constant(
    space: &FilteredSpace,
    family: &mut CarlesonFamily,
    sigma1: &PointFn,
    sigma2: &PointFn,
    exps: &Exponents,
    budget: usize,
) -> Result<f64, CarlesonError> {
    let geo = geometric_weight(sigma1, sigma2, exps);
    let best = exact_sup_by_tail(space, family.base_level, budget, |tail| {
        Some(family.mass_inside(tail) / space.integrate(&geo, tail))
    })?;
    let a = best.map_or(0.0, |(v, _)| v.max(0.0));
    family.carleson_a = Some(a);
    family.certified = true;
    Ok(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmbeddingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub certified_a: f64,
    pub variant: Variant,
    pub ok: bool,
}

/// `Σ essinf_Q (E^{σ1}(h1/σ1) E^{σ2}(h2/σ2))^p a_Q` against
/// `A (p1' p2')^p (∫_{P0} h1^{p1} ω1)^{p/p1} (∫_{P0} h2^{p2} ω2)^{p/p2}`,
/// with `h1`, `h2` the functions that generated the forest.
pub fn verify_embedding(
    space: &FilteredSpace,
    forest: &PrincipalForest,
    family: &CarlesonFamily,
    omega1: &PointFn,
    omega2: &PointFn,
    exps: &Exponents,
) -> Result<EmbeddingCheck, CarlesonError> {
    let a = match (family.certified, family.carleson_a) {
        (true, Some(a)) => a,
        _ => return Err(CarlesonError::NotCertified),
    };
    let sigma1 = sigma_from_omega(omega1, exps.p1)?;
    let sigma2 = sigma_from_omega(omega2, exps.p2)?;
    let (h1, h2) = (&forest.h1, &forest.h2);
    let mut lhs = 0.0;
    for e in &family.entries {
        let r1 = space.weighted_cond_exp(&h1.zip_with(&sigma1, |h, s| h / s), &sigma1, e.k1)?;
        let r2 = space.weighted_cond_exp(&h2.zip_with(&sigma2, |h, s| h / s), &sigma2, e.k1)?;
        let inf = e.set.iter().map(|x| r1.get(x) * r2.get(x)).fold(f64::INFINITY, f64::min);
        lhs += inf.powf(exps.p) * e.coefficient;
    }
    let p0 = &forest.root.points;
    let n1 = space.integrate(&h1.powf(exps.p1).mul(omega1), p0);
    let n2 = space.integrate(&h2.powf(exps.p2).mul(omega2), p0);
    let rhs = a * (exps.p1_dual * exps.p2_dual).powf(exps.p) * n1.powf(exps.a1()) * n2.powf(exps.a2());
    Ok(EmbeddingCheck { lhs, rhs, slack: rhs - lhs, certified_a: a, variant: family.variant, ok: approx_le(lhs, rhs) })
}
