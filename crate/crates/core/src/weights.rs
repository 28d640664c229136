//! Bilinear weight constants.
//!
//! `[A]` and `[B]` are maxima over the finitely many (level, atom) pairs and
//! are always exact. `[RH]`, `[S]` and `[W∞]` are suprema over stopping
//! times; they are exact when `T_0` can be enumerated and otherwise reported
//! as lower bounds.

use serde::Serialize;
use thiserror::Error;

use crate::operators::{bilinear_maximal, maximal};
use crate::space::{Exponents, FilteredSpace, PointFn, PointSet, SpaceError};
use crate::stopping::{
    exact_sup_by_tail, heuristic_sup_over_tau, StoppingError, StoppingTime, DEFAULT_ATOM_BUDGET,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}

/// How a supremum over stopping times is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupMode {
    /// Exhaustive enumeration of `T_0`; fails above `budget` atoms.
    Exact { budget: usize },
    /// Candidate search; the result is a lower bound.
    Heuristic,
}

impl SupMode {
    pub fn exact() -> Self {
        SupMode::Exact { budget: DEFAULT_ATOM_BUDGET }
    }
}

/// Which side of the true constant a reported value certifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certainty {
    Exact,
    LowerBound,
}

impl Certainty {
    pub fn as_str(&self) -> &'static str {
        match self {
            Certainty::Exact => "exact",
            Certainty::LowerBound => "lower-bound",
        }
    }
}

/// Where a constant is attained.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Atom { level: usize, atom: usize },
    StoppingTime(StoppingTime),
}

/// A computed weight constant, as reported by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightConstant {
    pub name: &'static str,
    pub value: f64,
    pub mode: Certainty,
    pub witness: Witness,
}

/// `σ = ω^{-1/(p_s - 1)}`.
pub fn sigma_from_omega(omega: &PointFn, p_s: f64) -> Result<PointFn, SpaceError> {
    if !(p_s > 1.0 && p_s.is_finite()) {
        return Err(SpaceError::BadExponents { p1: p_s, p2: p_s });
    }
    omega.check_positive()?;
    Ok(omega.powf(-1.0 / (p_s - 1.0)))
}

fn duals(omega1: &PointFn, omega2: &PointFn, exps: &Exponents) -> Result<(PointFn, PointFn), SpaceError> {
    Ok((sigma_from_omega(omega1, exps.p1)?, sigma_from_omega(omega2, exps.p2)?))
}

/// `σ1^{p/p1} σ2^{p/p2}`.
pub fn geometric_weight(sigma1: &PointFn, sigma2: &PointFn, exps: &Exponents) -> PointFn {
    sigma1.zip_with(sigma2, |a, b| a.powf(exps.a1()) * b.powf(exps.a2()))
}

fn max_over_atoms(space: &FilteredSpace, per_level: impl Fn(usize) -> Vec<f64>) -> (f64, usize, usize) {
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for t in 0..space.n_levels() {
        for (a, v) in per_level(t).into_iter().enumerate() {
            if v > best.0 {
                best = (v, t, a);
            }
        }
    }
    best
}

/// `[v, ω1, ω2]_A = max_{j, atom} E_j(v) E_j(σ1)^{p/p1'} E_j(σ2)^{p/p2'}`.
pub fn a_p_constant(
    space: &FilteredSpace,
    v: &PointFn,
    omega1: &PointFn,
    omega2: &PointFn,
    exps: &Exponents,
) -> Result<WeightConstant, WeightError> {
    v.check_positive()?;
    let (s1, s2) = duals(omega1, omega2, exps)?;
    Ok(a_p_from_duals(space, v, &s1, &s2, exps))
}

/// [`a_p_constant`] for already dualised weights.
pub fn a_p_from_duals(space: &FilteredSpace, v: &PointFn, sigma1: &PointFn, sigma2: &PointFn, exps: &Exponents) -> WeightConstant {
    let (e1, e2) = (exps.p / exps.p1_dual, exps.p / exps.p2_dual);
    let (value, level, atom) = max_over_atoms(space, |t| {
        let ev = space.atom_averages(v, t);
        let es1 = space.atom_averages(sigma1, t);
        let es2 = space.atom_averages(sigma2, t);
        (0..ev.len()).map(|a| ev[a] * es1[a].powf(e1) * es2[a].powf(e2)).collect()
    });
    WeightConstant { name: "A", value, mode: Certainty::Exact, witness: Witness::Atom { level, atom } }
}

/// `[v, ω1, ω2]_B = max_{j, atom} E_j(v) E_j(σ1)^p E_j(σ2)^p / exp(E_j(log(σ1^{p/p1} σ2^{p/p2})))`.
pub fn b_p_constant(
    space: &FilteredSpace,
    v: &PointFn,
    omega1: &PointFn,
    omega2: &PointFn,
    exps: &Exponents,
) -> Result<WeightConstant, WeightError> {
    v.check_positive()?;
    let (s1, s2) = duals(omega1, omega2, exps)?;
    Ok(b_p_from_duals(space, v, &s1, &s2, exps))
}

/// [`b_p_constant`] for already dualised weights.
pub fn b_p_from_duals(space: &FilteredSpace, v: &PointFn, sigma1: &PointFn, sigma2: &PointFn, exps: &Exponents) -> WeightConstant {
    let log_geo = sigma1.zip_with(sigma2, |a, b| exps.a1() * a.ln() + exps.a2() * b.ln());
    let (value, level, atom) = max_over_atoms(space, |t| {
        let ev = space.atom_averages(v, t);
        let es1 = space.atom_averages(sigma1, t);
        let es2 = space.atom_averages(sigma2, t);
        let el = space.atom_averages(&log_geo, t);
        (0..ev.len()).map(|a| ev[a] * es1[a].powf(exps.p) * es2[a].powf(exps.p) / el[a].exp()).collect()
    });
    WeightConstant { name: "B", value, mode: Certainty::Exact, witness: Witness::Atom { level, atom } }
}

/// Reverse Hölder ratio on a tail set `E`:
/// `(∫_E σ1)^{p/p1} (∫_E σ2)^{p/p2} / ∫_E σ1^{p/p1} σ2^{p/p2}`.
pub fn rh_ratio(space: &FilteredSpace, sigma1: &PointFn, sigma2: &PointFn, exps: &Exponents, tail: &PointSet) -> Option<f64> {
    if tail.is_empty() {
        return None;
    }
    let num = space.integrate(sigma1, tail).powf(exps.a1()) * space.integrate(sigma2, tail).powf(exps.a2());
    Some(num / space.integrate(&geometric_weight(sigma1, sigma2, exps), tail))
}

/// Sawyer testing ratio on a tail set `E`:
/// `(∫_E 𝓜(σ1χ_E, σ2χ_E)^p v / (σ1(E)^{p/p1} σ2(E)^{p/p2}))^{1/p}`.
pub fn s_ratio(
    space: &FilteredSpace,
    v: &PointFn,
    sigma1: &PointFn,
    sigma2: &PointFn,
    exps: &Exponents,
    tail: &PointSet,
) -> Option<f64> {
    if tail.is_empty() {
        return None;
    }
    let m = bilinear_maximal(space, &sigma1.restrict(tail), &sigma2.restrict(tail));
    let num = space.integrate(&m.powf(exps.p).mul(v), tail);
    let den = space.integrate(sigma1, tail).powf(exps.a1()) * space.integrate(sigma2, tail).powf(exps.a2());
    Some((num / den).powf(1.0 / exps.p))
}

/// Weak-infinity ratio on a tail set `E`:
/// `∫_E M(σ1χ_E)^{p/p1} M(σ2χ_E)^{p/p2} / ∫_E σ1^{p/p1} σ2^{p/p2}`.
pub fn w_infty_ratio(space: &FilteredSpace, sigma1: &PointFn, sigma2: &PointFn, exps: &Exponents, tail: &PointSet) -> Option<f64> {
    if tail.is_empty() {
        return None;
    }
    let m1 = maximal(space, &sigma1.restrict(tail));
    let m2 = maximal(space, &sigma2.restrict(tail));
    let num = space.integrate(&geometric_weight(&m1, &m2, exps), tail);
    Some(num / space.integrate(&geometric_weight(sigma1, sigma2, exps), tail))
}

fn sup_over_tails(
    space: &FilteredSpace,
    name: &'static str,
    mode: SupMode,
    guide: (&PointFn, &PointFn),
    objective: impl Fn(&PointSet) -> Option<f64>,
) -> Result<WeightConstant, WeightError> {
    let (best, certainty) = match mode {
        SupMode::Exact { budget } => (exact_sup_by_tail(space, 0, budget, &objective)?, Certainty::Exact),
        SupMode::Heuristic => (
            heuristic_sup_over_tau(space, 0, Some(guide), |tau| objective(&tau.tail_set())),
            Certainty::LowerBound,
        ),
    };
    // every space has a nonempty tail set (tau = 0), so a best value exists
    let (value, tau) = best.expect("T_0 contains tau = 0");
    Ok(WeightConstant { name, value, mode: certainty, witness: Witness::StoppingTime(tau) })
}

/// `[ω1, ω2]_RH`, the smallest `C` in the reverse Hölder condition.
pub fn rh_constant(
    space: &FilteredSpace,
    omega1: &PointFn,
    omega2: &PointFn,
    exps: &Exponents,
    mode: SupMode,
) -> Result<WeightConstant, WeightError> {
    let (s1, s2) = duals(omega1, omega2, exps)?;
    rh_from_duals(space, &s1, &s2, exps, mode)
}

pub fn rh_from_duals(
    space: &FilteredSpace,
    sigma1: &PointFn,
    sigma2: &PointFn,
    exps: &Exponents,
    mode: SupMode,
) -> Result<WeightConstant, WeightError> {
    sup_over_tails(space, "RH", mode, (sigma1, sigma2), |e| rh_ratio(space, sigma1, sigma2, exps, e))
}

/// `[v, ω]_S`, the Sawyer-type testing constant.
pub fn s_p_constant(
    space: &FilteredSpace,
    v: &PointFn,
    omega1: &PointFn,
    omega2: &PointFn,
    exps: &Exponents,
    mode: SupMode,
) -> Result<WeightConstant, WeightError> {
    v.check_positive()?;
    let (s1, s2) = duals(omega1, omega2, exps)?;
    s_from_duals(space, v, &s1, &s2, exps, mode)
}

pub fn s_from_duals(
    space: &FilteredSpace,
    v: &PointFn,
    sigma1: &PointFn,
    sigma2: &PointFn,
    exps: &Exponents,
    mode: SupMode,
) -> Result<WeightConstant, WeightError> {
    sup_over_tails(space, "S", mode, (sigma1, sigma2), |e| s_ratio(space, v, sigma1, sigma2, exps, e))
}

/// `[ω1, ω2]_{W∞}`.
pub fn w_infty_constant(
    space: &FilteredSpace,
    omega1: &PointFn,
    omega2: &PointFn,
    exps: &Exponents,
    mode: SupMode,
) -> Result<WeightConstant, WeightError> {
    let (s1, s2) = duals(omega1, omega2, exps)?;
    w_infty_from_duals(space, &s1, &s2, exps, mode)
}

pub fn w_infty_from_duals(
    space: &FilteredSpace,
    sigma1: &PointFn,
    sigma2: &PointFn,
    exps: &Exponents,
    mode: SupMode,
) -> Result<WeightConstant, WeightError> {
    sup_over_tails(space, "Winf", mode, (sigma1, sigma2), |e| w_infty_ratio(space, sigma1, sigma2, exps, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol::approx_eq;

    fn f(v: &[f64]) -> PointFn {
        PointFn::new(v.to_vec()).unwrap()
    }

    fn two_point() -> FilteredSpace {
        FilteredSpace::new(vec![0.5, 0.5], vec![vec![vec![0, 1]], vec![vec![0], vec![1]]]).unwrap()
    }

    // with p1 = p2 = 2 the dual weight is 1/ω
    fn rh_instance() -> (FilteredSpace, PointFn, PointFn, Exponents) {
        (two_point(), f(&[0.25, 1.0]), f(&[1.0, 0.25]), Exponents::new(2.0, 2.0).unwrap())
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_from_omega(&PointFn::constant(3, 1.0), 1.7).unwrap(), PointFn::constant(3, 1.0));
        assert!(approx_eq(sigma_from_omega(&f(&[4.0]), 2.0).unwrap().get(0), 0.25));
        assert!(approx_eq(sigma_from_omega(&f(&[8.0]), 3.0).unwrap().get(0), 0.353_553_390_593_273_8));
        assert!(sigma_from_omega(&f(&[1.0, 0.0]), 2.0).is_err());
        let w = f(&[0.3, 2.0, 7.5]);
        let p = 2.6_f64;
        let back = sigma_from_omega(&sigma_from_omega(&w, p).unwrap(), p / (p - 1.0)).unwrap();
        for (a, b) in back.values().iter().zip(w.values()) {
            assert!(approx_eq(*a, *b));
        }
    }

    #[test]
    fn a_examples() {
        let s = FilteredSpace::uniform_tree(2, 2);
        let one = PointFn::constant(4, 1.0);
        for (p1, p2) in [(2.0, 2.0), (1.3, 4.0)] {
            let e = Exponents::new(p1, p2).unwrap();
            assert!(approx_eq(a_p_constant(&s, &one, &one, &one, &e).unwrap().value, 1.0));
        }
        let e = Exponents::new(2.0, 2.0).unwrap();
        let w1 = f(&[4.0, 1.0, 1.0, 1.0]);
        let a = a_p_constant(&s, &one, &w1, &one, &e).unwrap();
        assert!(approx_eq(a.value, 1.0));
        let a3 = a_p_constant(&s, &one.scale(3.0), &w1, &one, &e).unwrap();
        assert!(approx_eq(a3.value, 3.0));
    }

    #[test]
    fn rh_examples() {
        let (s, w1, w2, e) = rh_instance();
        let rh = rh_constant(&s, &w1, &w2, &e, SupMode::exact()).unwrap();
        assert!(approx_eq(rh.value, 1.25));
        match rh.witness {
            Witness::StoppingTime(tau) => assert_eq!(tau.tail_set(), PointSet::full(2)),
            _ => panic!("expected a stopping-time witness"),
        }
        // linear case: σ1 = σ2
        let sp = FilteredSpace::uniform_tree(2, 2);
        let w = f(&[0.2, 3.0, 1.0, 9.0]);
        let rh = rh_constant(&sp, &w, &w, &Exponents::new(1.8, 1.8).unwrap(), SupMode::exact()).unwrap();
        assert!(approx_eq(rh.value, 1.0));
        let h = rh_constant(&s, &w1, &w2, &e, SupMode::Heuristic).unwrap();
        assert_eq!(h.mode, Certainty::LowerBound);
        assert!(approx_eq(h.value, 1.25));
    }

    #[test]
    fn s_examples() {
        let s = FilteredSpace::uniform_tree(2, 2);
        let one = PointFn::constant(4, 1.0);
        for (p1, p2) in [(2.0, 2.0), (1.5, 3.0)] {
            let e = Exponents::new(p1, p2).unwrap();
            let c = s_p_constant(&s, &one, &one, &one, &e, SupMode::exact()).unwrap();
            assert!(approx_eq(c.value, 1.0), "{}", c.value);
        }
        // 2-point RH instance with v = σ1^{1/2} σ2^{1/2}; tail sets {0,1}, {0}, {1}
        let (sp, w1, w2, e) = rh_instance();
        let (s1, s2) = (f(&[4.0, 1.0]), f(&[1.0, 4.0]));
        let v = f(&[2.0, 2.0]);
        // full tail: 𝓜 = max(5/2·5/2, 4·1) = 25/4 at both points; ∫ 𝓜 v = 25/2; den = 5/2
        // singleton {0}: E_0 gives (2)(1/2) = 1, E_1 gives 4·1 = 4 at point 0; ∫ = 4; den = (2)^{1/2}(1/2)^{1/2} = 1
        // singleton {1} is symmetric
        let brute = [25.0 / 2.0 / 2.5, 4.0, 4.0].into_iter().fold(0.0_f64, f64::max);
        let c = s_p_constant(&sp, &v, &w1, &w2, &e, SupMode::exact()).unwrap();
        assert!(approx_eq(c.value, brute), "{} vs {brute}", c.value);
        assert_eq!(s_ratio(&sp, &v, &s1, &s2, &e, &PointSet::empty()), None);
    }

    #[test]
    fn b_examples() {
        let s = FilteredSpace::uniform_tree(2, 2);
        let e = Exponents::new(2.0, 2.0).unwrap();
        let one = PointFn::constant(4, 1.0);
        assert!(approx_eq(b_p_constant(&s, &one, &one, &one, &e).unwrap().value, 1.0));
        // constants: v0 s1^p s2^p / (s1^{p/p1} s2^{p/p2})
        let e2 = Exponents::new(1.5, 3.0).unwrap();
        let (v0, s10, s20) = (2.0_f64, 0.5_f64, 3.0_f64);
        let w1 = PointFn::constant(4, s10.powf(-(e2.p1 - 1.0)));
        let w2 = PointFn::constant(4, s20.powf(-(e2.p2 - 1.0)));
        let want = v0 * s10.powf(e2.p) * s20.powf(e2.p) / (s10.powf(e2.a1()) * s20.powf(e2.a2()));
        let got = b_p_constant(&s, &PointFn::constant(4, v0), &w1, &w2, &e2).unwrap().value;
        assert!(approx_eq(got, want), "{got} vs {want}");
        // σ1 = (e,1,1,1), σ2 = 1, p = 1: per atom E(σ1) / exp(E(½ log σ1)) over the 7 atoms
        let ee = std::f64::consts::E;
        let w1 = f(&[1.0 / ee, 1.0, 1.0, 1.0]);
        let atoms: [&[usize]; 7] = [&[0, 1, 2, 3], &[0, 1], &[2, 3], &[0], &[1], &[2], &[3]];
        let s1 = [ee, 1.0, 1.0, 1.0];
        let brute = atoms
            .iter()
            .map(|a| {
                let n = a.len() as f64;
                let avg: f64 = a.iter().map(|&x| s1[x]).sum::<f64>() / n;
                let lavg: f64 = a.iter().map(|&x| 0.5 * s1[x].ln()).sum::<f64>() / n;
                avg / lavg.exp()
            })
            .fold(0.0_f64, f64::max);
        let got = b_p_constant(&s, &one, &w1, &one, &e).unwrap().value;
        assert!(approx_eq(got, brute), "{got} vs {brute}");
        let got3 = b_p_constant(&s, &one.scale(3.0), &w1, &one, &e).unwrap().value;
        assert!(approx_eq(got3, 3.0 * brute));
        assert!(b_p_constant(&s, &one, &f(&[1.0, 0.0, 1.0, 1.0]), &one, &e).is_err());
    }

    #[test]
    fn w_infty_examples() {
        let s = FilteredSpace::uniform_tree(2, 2);
        let e = Exponents::new(1.5, 2.5).unwrap();
        let one = PointFn::constant(4, 1.0);
        assert!(approx_eq(w_infty_constant(&s, &one, &one, &e, SupMode::exact()).unwrap().value, 1.0));
        let c = PointFn::constant(4, 3.0);
        assert!(approx_eq(w_infty_constant(&s, &c, &c, &e, SupMode::exact()).unwrap().value, 1.0));
        // 2-point RH instance: full tail gives M(σ_s) = σ_s (finest level wins
        // pointwise since max(σ, mean) with σ = (4,1): M = (4, 5/2))
        let (sp, w1, w2, e) = rh_instance();
        let exact = w_infty_constant(&sp, &w1, &w2, &e, SupMode::exact()).unwrap().value;
        // full tail: M(σ1) = (4, 5/2), M(σ2) = (5/2, 4): ∫ sqrt = 2·½·sqrt(10) = sqrt(10); den = 2
        let brute = (10.0_f64.sqrt() / 2.0).max(1.0);
        assert!(approx_eq(exact, brute), "{exact} vs {brute}");
    }
}
