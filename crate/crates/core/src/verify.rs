//! Instances, random generation, and the inequality checkers.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::{bilinear_maximal, lp_norm, tailed_bilinear_maximal};
use crate::principal::{forest_cover, sparse_bound, PrincipalError, PrincipalForest};
use crate::space::{Exponents, FilteredSpace, PointFn, PointSet, SpaceError};
use crate::stopping::{enumerate_stopping_times, exact_sup_by_tail, StoppingError};
use crate::tol::{approx_eq_with, approx_le_with, REL_TOL};
use crate::weights::{
    a_p_from_duals, b_p_from_duals, rh_from_duals, s_from_duals, sigma_from_omega, w_infty_from_duals, Certainty,
    SupMode, WeightConstant, WeightError,
};

/// Relative tolerance for identities that hold by algebra alone.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Largest number of atoms the generator will build.
pub const GEN_ATOM_LIMIT: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("product_weight is set but v differs from omega1^(p/p1) omega2^(p/p2) at point {point}")]
    ProductMismatch { point: usize },
    #[error("tests[{index}]: expected nonnegative functions on {expected} points")]
    BadTestPair { index: usize, expected: usize },
    #[error("atom budget exceeded: {atoms} atoms, limit {limit}")]
    BudgetExceeded { atoms: usize, limit: usize },
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error(transparent)]
    Principal(#[from] PrincipalError),
    #[error(transparent)]
    Carleson(#[from] crate::carleson::CarlesonError),
    #[error("the check needs v = omega1^(p/p1) omega2^(p/p2)")]
    NotProductWeight,
    #[error("test functions must be nonnegative")]
    NegativeTest,
}

impl VerifyError {
    /// True when the error only says an exhaustive enumeration was too large.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            VerifyError::Weight(WeightError::Stopping(StoppingError::TooLarge { .. }))
                | VerifyError::Stopping(StoppingError::TooLarge { .. })
                | VerifyError::Carleson(crate::carleson::CarlesonError::Stopping(StoppingError::TooLarge { .. }))
        )
    }
}

/// Weighted problem data: a space, three weights, exponents and test pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub space: FilteredSpace,
    pub v: PointFn,
    pub omega1: PointFn,
    pub omega2: PointFn,
    pub exps: Exponents,
    pub sigma1: PointFn,
    pub sigma2: PointFn,
    pub product_weight: bool,
    pub tests: Vec<(PointFn, PointFn)>,
}

/// `ω1^{p/p1} ω2^{p/p2}`.
pub fn product_weight(omega1: &PointFn, omega2: &PointFn, exps: &Exponents) -> PointFn {
    omega1.zip_with(omega2, |a, b| a.powf(exps.a1()) * b.powf(exps.a2()))
}

impl Instance {
    pub fn new(
        space: FilteredSpace,
        v: PointFn,
        omega1: PointFn,
        omega2: PointFn,
        exps: Exponents,
        tests: Vec<(PointFn, PointFn)>,
    ) -> Result<Self, InstanceError> {
        let n = space.n_points();
        for w in [&v, &omega1, &omega2] {
            if w.len() != n {
                return Err(SpaceError::LengthMismatch { expected: n, found: w.len() }.into());
            }
            w.check_positive()?;
        }
        for (index, (f1, f2)) in tests.iter().enumerate() {
            if f1.len() != n || f2.len() != n || !f1.is_nonnegative() || !f2.is_nonnegative() {
                return Err(InstanceError::BadTestPair { index, expected: n });
            }
        }
        let sigma1 = sigma_from_omega(&omega1, exps.p1)?;
        let sigma2 = sigma_from_omega(&omega2, exps.p2)?;
        let prod = product_weight(&omega1, &omega2, &exps);
        let product_weight =
            v.values().iter().zip(prod.values()).all(|(a, b)| approx_eq_with(*a, *b, IDENTITY_TOL));
        Ok(Instance { space, v, omega1, omega2, exps, sigma1, sigma2, product_weight, tests })
    }

    /// Unit weights and `p1 = p2 = 2`.
    pub fn unit(space: FilteredSpace) -> Self {
        let one = PointFn::constant(space.n_points(), 1.0);
        let exps = Exponents::new(2.0, 2.0).expect("valid exponents");
        Instance::new(space, one.clone(), one.clone(), one, exps, Vec::new()).expect("unit weights are valid")
    }

    pub fn with_tests(self, tests: Vec<(PointFn, PointFn)>) -> Result<Self, InstanceError> {
        Instance::new(self.space, self.v, self.omega1, self.omega2, self.exps, tests)
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let raw: RawInstance = serde_json::from_str(text)?;
        let space = FilteredSpace::new(raw.masses, raw.levels)?;
        let n = space.n_points();
        let exps = Exponents::new(raw.p1, raw.p2)?;
        let load = |v: Option<Vec<f64>>| -> Result<PointFn, SpaceError> {
            v.map_or_else(|| Ok(PointFn::constant(n, 1.0)), PointFn::new)
        };
        let omega1 = load(raw.omega1)?;
        let omega2 = load(raw.omega2)?;
        let v = match raw.v {
            Some(v) => PointFn::new(v)?,
            None if raw.product_weight == Some(true) => {
                for w in [&omega1, &omega2] {
                    if w.len() != n {
                        return Err(SpaceError::LengthMismatch { expected: n, found: w.len() }.into());
                    }
                }
                product_weight(&omega1, &omega2, &exps)
            }
            None => PointFn::constant(n, 1.0),
        };
        let tests = raw
            .tests
            .into_iter()
            .map(|[a, b]| Ok((PointFn::new(a)?, PointFn::new(b)?)))
            .collect::<Result<Vec<_>, SpaceError>>()?;
        let inst = Instance::new(space, v, omega1, omega2, exps, tests)?;
        if raw.product_weight == Some(true) && !inst.product_weight {
            let prod = product_weight(&inst.omega1, &inst.omega2, &inst.exps);
            let point = (0..n)
                .find(|&x| !approx_eq_with(inst.v.get(x), prod.get(x), IDENTITY_TOL))
                .unwrap_or(0);
            return Err(InstanceError::ProductMismatch { point });
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let raw = RawInstanceRef {
            masses: self.space.masses(),
            levels: self.space.levels(),
            p1: self.exps.p1,
            p2: self.exps.p2,
            v: &self.v,
            omega1: &self.omega1,
            omega2: &self.omega2,
            product_weight: self.product_weight,
            tests: self.tests.iter().map(|(a, b)| [a, b]).collect(),
        };
        serde_json::to_string_pretty(&raw).expect("instances serialize")
    }
}

fn default_p() -> f64 {
    2.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    masses: Vec<f64>,
    levels: Vec<Vec<Vec<usize>>>,
    #[serde(default = "default_p")]
    p1: f64,
    #[serde(default = "default_p")]
    p2: f64,
    v: Option<Vec<f64>>,
    omega1: Option<Vec<f64>>,
    omega2: Option<Vec<f64>>,
    product_weight: Option<bool>,
    #[serde(default)]
    tests: Vec<[Vec<f64>; 2]>,
}

#[derive(Serialize)]
struct RawInstanceRef<'a> {
    masses: &'a [f64],
    levels: &'a [Vec<PointSet>],
    p1: f64,
    p2: f64,
    v: &'a PointFn,
    omega1: &'a PointFn,
    omega2: &'a PointFn,
    product_weight: bool,
    tests: Vec<[&'a PointFn; 2]>,
}

/// Weight model for generated instances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightModel {
    /// Independent lognormal `v`, `ω1`, `ω2` with log-scale `s`.
    LogNormal(f64),
    /// Power weights `t^a` and `(1-t)^a` on the uniform `b`-adic model of `[0,1)`.
    Power(f64),
    /// Lognormal `ω1`, `ω2` and `v = ω1^{p/p1} ω2^{p/p2}`.
    Product,
}

impl FromStr for WeightModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once('(') {
            Some((name, rest)) => {
                let arg = rest.strip_suffix(')').ok_or_else(|| format!("bad model `{s}`"))?;
                let value: f64 = arg.trim().parse().map_err(|_| format!("bad model parameter `{arg}`"))?;
                (name.trim(), Some(value))
            }
            None => (s.trim(), None),
        };
        let model = match name {
            "lognormal" => WeightModel::LogNormal(arg.unwrap_or(1.0)),
            "power" => WeightModel::Power(arg.unwrap_or(0.5)),
            "product" if arg.is_none() => WeightModel::Product,
            _ => return Err(format!("unknown model `{s}` (expected lognormal(s), power(a) or product)")),
        };
        match model {
            WeightModel::LogNormal(v) | WeightModel::Power(v) if !(v.is_finite() && v >= 0.0) => {
                Err(format!("model parameter must be finite and nonnegative, got {v}"))
            }
            _ => Ok(model),
        }
    }
}

impl fmt::Display for WeightModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightModel::LogNormal(s) => write!(f, "lognormal({s})"),
            WeightModel::Power(a) => write!(f, "power({a})"),
            WeightModel::Product => write!(f, "product"),
        }
    }
}

/// Per-member seed of an ensemble (splitmix64 of the shifted master seed).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lognormal_fn(rng: &mut impl Rng, n: usize, s: f64) -> PointFn {
    let d = LogNormal::new(0.0, s).expect("finite scale");
    PointFn::new((0..n).map(|_| d.sample(rng)).collect()).expect("lognormal samples are finite")
}

fn lognormal_masses(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw = lognormal_fn(rng, n, 0.75);
    let total: f64 = raw.values().iter().sum();
    raw.values().iter().map(|m| m / total).collect()
}

/// Random test pairs with lognormal values.
pub fn random_pairs(rng: &mut impl Rng, n: usize, count: usize, s: f64) -> Vec<(PointFn, PointFn)> {
    (0..count).map(|_| (lognormal_fn(rng, n, s), lognormal_fn(rng, n, s))).collect()
}

fn random_exponent(rng: &mut impl Rng) -> f64 {
    rng.random_range(1.25..=4.0)
}

/// Number of test pairs attached to generated instances.
pub const GEN_TEST_PAIRS: usize = 5;

/// Uniform `branching`-ary tree of the given depth with random weights.
/// Deterministic in all arguments.
pub fn gen_instance(
    seed: u64,
    depth: usize,
    branching: usize,
    model: WeightModel,
    p1: Option<f64>,
    p2: Option<f64>,
) -> Result<Instance, InstanceError> {
    let atoms = tree_atoms(depth, branching).filter(|&a| a <= GEN_ATOM_LIMIT);
    let Some(_) = atoms else {
        return Err(InstanceError::BudgetExceeded { atoms: tree_atoms(depth, branching).unwrap_or(usize::MAX), limit: GEN_ATOM_LIMIT });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exps = Exponents::new(p1.unwrap_or_else(|| random_exponent(&mut rng)), p2.unwrap_or_else(|| random_exponent(&mut rng)))?;
    let mut space = FilteredSpace::uniform_tree(depth, branching);
    let n = space.n_points();
    if !matches!(model, WeightModel::Power(_)) {
        space = FilteredSpace::new(lognormal_masses(&mut rng, n), raw_levels(&space))?;
    }
    weights_for(&mut rng, space, model, exps)
}

fn tree_atoms(depth: usize, branching: usize) -> Option<usize> {
    let b = branching.max(1);
    let mut total = 0_usize;
    let mut width = 1_usize;
    for _ in 0..=depth {
        total = total.checked_add(width)?;
        width = width.checked_mul(b)?;
    }
    Some(total)
}

fn raw_levels(space: &FilteredSpace) -> Vec<Vec<Vec<usize>>> {
    space.levels().iter().map(|lv| lv.iter().map(|a| a.as_slice().to_vec()).collect()).collect()
}

fn weights_for(rng: &mut ChaCha8Rng, space: FilteredSpace, model: WeightModel, exps: Exponents) -> Result<Instance, InstanceError> {
    let n = space.n_points();
    let (v, omega1, omega2) = match model {
        WeightModel::LogNormal(s) => {
            let v = lognormal_fn(rng, n, s);
            (v, lognormal_fn(rng, n, s), lognormal_fn(rng, n, s))
        }
        WeightModel::Power(a) => {
            let t: Vec<f64> = (0..n).map(|x| (x as f64 + 0.5) / n as f64).collect();
            let w1 = PointFn::new(t.iter().map(|t| t.powf(a)).collect())?;
            let w2 = PointFn::new(t.iter().map(|t| (1.0 - t).powf(a)).collect())?;
            (product_weight(&w1, &w2, &exps), w1, w2)
        }
        WeightModel::Product => {
            let w1 = lognormal_fn(rng, n, 1.0);
            let w2 = lognormal_fn(rng, n, 1.0);
            (product_weight(&w1, &w2, &exps), w1, w2)
        }
    };
    let tests = random_pairs(rng, n, GEN_TEST_PAIRS, 1.5);
    Instance::new(space, v, omega1, omega2, exps, tests)
}

/// Random tree of the given depth: every atom splits into `1..=max_branching`
/// children while the point count stays within `max_points`. Masses are
/// lognormal and sum to 1.
pub fn random_space(rng: &mut impl Rng, depth: usize, max_branching: usize, max_points: usize) -> FilteredSpace {
    // parents[t][a] is the level-t parent of atom a at level t + 1
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(depth);
    let mut widths = vec![1_usize];
    for _ in 0..depth {
        let width = *widths.last().expect("nonempty");
        let mut par = Vec::new();
        for a in 0..width {
            let later = width - a - 1;
            let room = max_points.saturating_sub(par.len() + later).max(1);
            let k = rng.random_range(1..=max_branching.max(1)).min(room);
            par.extend(std::iter::repeat_n(a, k));
        }
        widths.push(par.len());
        parents.push(par);
    }
    let n = *widths.last().expect("nonempty");
    let mut owner: Vec<usize> = (0..n).collect();
    let mut levels = vec![Vec::new(); depth + 1];
    for t in (0..=depth).rev() {
        let mut atoms = vec![Vec::new(); widths[t]];
        for (x, &a) in owner.iter().enumerate() {
            atoms[a].push(x);
        }
        levels[t] = atoms;
        if t > 0 {
            owner = owner.iter().map(|&a| parents[t - 1][a]).collect();
        }
    }
    FilteredSpace::new(lognormal_masses(rng, n), levels).expect("construction is a refining tower")
}

/// [`random_space`] with random weights from `model` and random exponents.
pub fn random_instance(
    seed: u64,
    depth: usize,
    max_branching: usize,
    max_points: usize,
    model: WeightModel,
) -> Result<Instance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = random_space(&mut rng, depth, max_branching, max_points);
    let exps = Exponents::new(random_exponent(&mut rng), random_exponent(&mut rng))?;
    weights_for(&mut rng, space, model, exps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }
}

/// One evaluated inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub theorem: String,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub mode: Certainty,
    pub status: Status,
    pub constants: Vec<(String, f64)>,
    pub witness: String,
}

impl CheckResult {
    fn new(theorem: impl Into<String>, lhs: f64, rhs: f64, mode: Certainty, ok: bool, conclusive: bool) -> Self {
        let status = if ok {
            Status::Pass
        } else if conclusive {
            Status::Fail
        } else {
            Status::Inconclusive
        };
        CheckResult {
            theorem: theorem.into(),
            seed: 0,
            lhs,
            rhs,
            slack: rhs - lhs,
            mode,
            status,
            constants: Vec::new(),
            witness: String::new(),
        }
    }

    fn constant(mut self, c: &WeightConstant) -> Self {
        self.constants.push((c.name.to_string(), c.value));
        self
    }

    fn note(mut self, witness: impl Into<String>) -> Self {
        self.witness = witness.into();
        self
    }
}

fn combined(cs: &[&WeightConstant]) -> Certainty {
    if cs.iter().all(|c| c.mode == Certainty::Exact) {
        Certainty::Exact
    } else {
        Certainty::LowerBound
    }
}

/// `‖𝓜(g1 σ1, g2 σ2)‖_{L^p(v)}` and the norms `‖g_s‖_{L^{p_s}(σ_s)}`.
pub fn dual_form(inst: &Instance, g1: &PointFn, g2: &PointFn) -> (f64, f64, f64) {
    let m = bilinear_maximal(&inst.space, &g1.mul(&inst.sigma1), &g2.mul(&inst.sigma2));
    (
        lp_norm(&inst.space, &m, &inst.v, inst.exps.p),
        lp_norm(&inst.space, g1, &inst.sigma1, inst.exps.p1),
        lp_norm(&inst.space, g2, &inst.sigma2, inst.exps.p2),
    )
}

/// `‖𝓜(f1, f2)‖_{L^p(v)}` and the norms `‖f_s‖_{L^{p_s}(ω_s)}`.
pub fn primal_form(inst: &Instance, f1: &PointFn, f2: &PointFn) -> (f64, f64, f64) {
    let m = bilinear_maximal(&inst.space, f1, f2);
    (
        lp_norm(&inst.space, &m, &inst.v, inst.exps.p),
        lp_norm(&inst.space, f1, &inst.omega1, inst.exps.p1),
        lp_norm(&inst.space, f2, &inst.omega2, inst.exps.p2),
    )
}

/// Ratio `‖𝓜(g1σ1, g2σ2)‖_{L^p(v)} / (‖g1‖_{L^{p1}(σ1)} ‖g2‖_{L^{p2}(σ2)})`.
pub fn test_ratio(inst: &Instance, g1: &PointFn, g2: &PointFn) -> Option<f64> {
    let (num, n1, n2) = dual_form(inst, g1, g2);
    (n1 > 0.0 && n2 > 0.0).then(|| num / (n1 * n2))
}

/// `16 · 4^{q'-1} p1' p2'` with `q = min(p1, p2)`; multiplies `[A]^{q'/p}`.
pub fn thm11_factor(exps: &Exponents) -> f64 {
    let q = exps.p1.min(exps.p2);
    let q_dual = q / (q - 1.0);
    16.0 * 4.0_f64.powf(q_dual - 1.0) * exps.p1_dual * exps.p2_dual
}

fn q_dual(exps: &Exponents) -> f64 {
    let q = exps.p1.min(exps.p2);
    q / (q - 1.0)
}

/// Lazily computes weight constants for one instance.
pub struct Checker<'a> {
    pub inst: &'a Instance,
    pub mode: SupMode,
    pub tol: f64,
    a: OnceCell<WeightConstant>,
    b: OnceCell<WeightConstant>,
    rh: OnceCell<Result<WeightConstant, WeightError>>,
    s: OnceCell<Result<WeightConstant, WeightError>>,
    winf: OnceCell<Result<WeightConstant, WeightError>>,
}

impl<'a> Checker<'a> {
    pub fn new(inst: &'a Instance, mode: SupMode) -> Self {
        Checker {
            inst,
            mode,
            tol: REL_TOL,
            a: OnceCell::new(),
            b: OnceCell::new(),
            rh: OnceCell::new(),
            s: OnceCell::new(),
            winf: OnceCell::new(),
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn a(&self) -> &WeightConstant {
        let i = self.inst;
        self.a.get_or_init(|| a_p_from_duals(&i.space, &i.v, &i.sigma1, &i.sigma2, &i.exps))
    }

    pub fn b(&self) -> &WeightConstant {
        let i = self.inst;
        self.b.get_or_init(|| b_p_from_duals(&i.space, &i.v, &i.sigma1, &i.sigma2, &i.exps))
    }

    pub fn rh(&self) -> Result<&WeightConstant, VerifyError> {
        let i = self.inst;
        let r = self.rh.get_or_init(|| rh_from_duals(&i.space, &i.sigma1, &i.sigma2, &i.exps, self.mode));
        r.as_ref().map_err(|e| e.clone().into())
    }

    pub fn s(&self) -> Result<&WeightConstant, VerifyError> {
        let i = self.inst;
        let r = self.s.get_or_init(|| s_from_duals(&i.space, &i.v, &i.sigma1, &i.sigma2, &i.exps, self.mode));
        r.as_ref().map_err(|e| e.clone().into())
    }

    pub fn w_infty(&self) -> Result<&WeightConstant, VerifyError> {
        let i = self.inst;
        let r = self.winf.get_or_init(|| w_infty_from_duals(&i.space, &i.sigma1, &i.sigma2, &i.exps, self.mode));
        r.as_ref().map_err(|e| e.clone().into())
    }

    fn le(&self, lhs: f64, rhs: f64) -> bool {
        approx_le_with(lhs, rhs, self.tol)
    }

    fn check_pair(f1: &PointFn, f2: &PointFn) -> Result<(), VerifyError> {
        if f1.is_nonnegative() && f2.is_nonnegative() {
            Ok(())
        } else {
            Err(VerifyError::NegativeTest)
        }
    }

    /// `‖𝓜(f1σ1, f2σ2)‖_{L^p(v)} <= 16·4^{q'-1} p1'p2' [A]^{q'/p} ‖f1‖_{L^{p1}(σ1)} ‖f2‖_{L^{p2}(σ2)}`.
    pub fn thm11_forward(&self, f1: &PointFn, f2: &PointFn) -> Result<CheckResult, VerifyError> {
        if !self.inst.product_weight {
            return Err(VerifyError::NotProductWeight);
        }
        Self::check_pair(f1, f2)?;
        let exps = &self.inst.exps;
        let a = self.a();
        let c = thm11_factor(exps) * a.value.powf(q_dual(exps) / exps.p);
        let (lhs, n1, n2) = dual_form(self.inst, f1, f2);
        let rhs = c * n1 * n2;
        Ok(CheckResult::new("thm11", lhs, rhs, Certainty::Exact, self.le(lhs, rhs), true).constant(a))
    }

    /// `E(v)^{1/p} E(σ1)^{1/p1'} E(σ2)^{1/p2'} <= ratio(χ_B, χ_B) [RH]^{1/p}` on
    /// every atom `B`; reports the atom attaining `[A]`, or the worst failure.
    pub fn thm11_converse(&self) -> Result<CheckResult, VerifyError> {
        let inst = self.inst;
        let exps = &inst.exps;
        let space = &inst.space;
        let rh = self.rh()?;
        let a = self.a();
        let rh_root = rh.value.powf(1.0 / exps.p);
        let mut report: Option<(f64, f64, usize, usize)> = None;
        let mut worst: Option<(f64, f64, f64, usize, usize)> = None;
        for t in 0..space.n_levels() {
            let ev = space.atom_averages(&inst.v, t);
            let e1 = space.atom_averages(&inst.sigma1, t);
            let e2 = space.atom_averages(&inst.sigma2, t);
            for b in 0..space.level(t).len() {
                let lhs = ev[b].powf(1.0 / exps.p) * e1[b].powf(1.0 / exps.p1_dual) * e2[b].powf(1.0 / exps.p2_dual);
                let chi = PointFn::indicator(space.n_points(), space.atom(t, b));
                let ratio = test_ratio(inst, &chi, &chi).expect("atoms have positive mass");
                let rhs = ratio * rh_root;
                if (t, b) == witness_atom(a) {
                    report = Some((lhs, rhs, t, b));
                }
                let rel = (rhs - lhs) / rhs.abs().max(lhs.abs());
                if worst.is_none_or(|w| rel < w.0) {
                    worst = Some((rel, lhs, rhs, t, b));
                }
            }
        }
        let (_, wl, wr, wt, wb) = worst.expect("every space has an atom");
        let (lhs, rhs, t, b) = if self.le(wl, wr) { report.expect("the A witness is an atom") } else { (wl, wr, wt, wb) };
        let ok = self.le(lhs, rhs);
        let mode = combined(&[a, rh]);
        Ok(CheckResult::new("thm11.conv", lhs, rhs, mode, ok, mode == Certainty::Exact)
            .constant(a)
            .constant(rh)
            .note(format!("atom {t}:{b}")))
    }

    /// `[S] <= 16·4^{q'-1} p1'p2' [A]^{q'/p}` for product weights.
    pub fn cor53(&self) -> Result<CheckResult, VerifyError> {
        if !self.inst.product_weight {
            return Err(VerifyError::NotProductWeight);
        }
        let exps = &self.inst.exps;
        let s = self.s()?;
        let a = self.a();
        let rhs = thm11_factor(exps) * a.value.powf(q_dual(exps) / exps.p);
        Ok(CheckResult::new("cor53", s.value, rhs, s.mode, self.le(s.value, rhs), true).constant(s).constant(a))
    }

    /// `[S]` against the largest localized indicator ratio
    /// `‖𝓜(σ1χ_E, σ2χ_E) χ_E‖_{L^p(v)} / (‖χ_E‖_{L^{p1}(σ1)} ‖χ_E‖_{L^{p2}(σ2)})`
    /// over the tail sets of `T_0`; equal to [`IDENTITY_TOL`].
    pub fn thm12_attained(&self) -> Result<CheckResult, VerifyError> {
        let inst = self.inst;
        let s = self.s()?;
        let rhs = match self.mode {
            SupMode::Exact { budget } => exact_sup_by_tail(&inst.space, 0, budget, |e| localized_indicator_ratio(inst, e))?
                .map_or(0.0, |(v, _)| v),
            SupMode::Heuristic => match &s.witness {
                crate::weights::Witness::StoppingTime(tau) => localized_indicator_ratio(inst, &tau.tail_set()).unwrap_or(0.0),
                _ => 0.0,
            },
        };
        let ok = approx_eq_with(s.value, rhs, IDENTITY_TOL);
        Ok(CheckResult::new("thm12.attain", s.value, rhs, s.mode, ok, true).constant(s))
    }

    /// Test-pair ratio against `32 p1'p2' [S] [RH]^{1/p}`.
    pub fn thm12_bound(&self, f1: &PointFn, f2: &PointFn) -> Result<CheckResult, VerifyError> {
        Self::check_pair(f1, f2)?;
        let exps = &self.inst.exps;
        let (s, rh) = (self.s()?, self.rh()?);
        let c = 32.0 * exps.p1_dual * exps.p2_dual * s.value * rh.value.powf(1.0 / exps.p);
        let (lhs, n1, n2) = dual_form(self.inst, f1, f2);
        let rhs = c * n1 * n2;
        let mode = combined(&[s, rh]);
        Ok(CheckResult::new("thm12", lhs, rhs, mode, self.le(lhs, rhs), mode == Certainty::Exact).constant(s).constant(rh))
    }

    fn both_forms(&self, theorem: &str, c: f64, cs: &[&WeightConstant], g1: &PointFn, g2: &PointFn) -> CheckResult {
        let (lhs, n1, n2) = dual_form(self.inst, g1, g2);
        let rhs = c * n1 * n2;
        let (f1, f2) = (g1.mul(&self.inst.sigma1), g2.mul(&self.inst.sigma2));
        let (lhs1, m1, m2) = primal_form(self.inst, &f1, &f2);
        let rhs1 = c * m1 * m2;
        let rel = ((lhs1 - lhs).abs() / lhs.abs().max(f64::MIN_POSITIVE)).max((rhs1 - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
        let identity = approx_eq_with(lhs, lhs1, IDENTITY_TOL) && approx_eq_with(rhs, rhs1, IDENTITY_TOL);
        let mode = combined(cs);
        let ok = self.le(lhs, rhs) && identity;
        let conclusive = mode == Certainty::Exact || !identity;
        let mut r = CheckResult::new(theorem, lhs, rhs, mode, ok, conclusive).note(format!("substitution rel err {rel:e}"));
        for c in cs {
            r = r.constant(c);
        }
        r
    }

    /// `32 (2e)^{1/p} p1'p2' [B]^{1/p}`, in both the `f` and `fσ` forms.
    pub fn thm14(&self, f1: &PointFn, f2: &PointFn) -> Result<CheckResult, VerifyError> {
        Self::check_pair(f1, f2)?;
        let exps = &self.inst.exps;
        let b = self.b();
        let c = 32.0 * (2.0 * std::f64::consts::E).powf(1.0 / exps.p) * exps.p1_dual * exps.p2_dual * b.value.powf(1.0 / exps.p);
        Ok(self.both_forms("thm14", c, &[b], f1, f2))
    }

    /// `32 · 2^{1/p} p1'p2' [A]^{1/p} [W∞]^{1/p}`, in both forms.
    pub fn thm15(&self, f1: &PointFn, f2: &PointFn) -> Result<CheckResult, VerifyError> {
        Self::check_pair(f1, f2)?;
        let exps = &self.inst.exps;
        let (a, w) = (self.a(), self.w_infty()?);
        let c = 32.0 * 2.0_f64.powf(1.0 / exps.p) * exps.p1_dual * exps.p2_dual * (a.value * w.value).powf(1.0 / exps.p);
        Ok(self.both_forms("thm15", c, &[a, w], f1, f2))
    }
}

fn witness_atom(c: &WeightConstant) -> (usize, usize) {
    match c.witness {
        crate::weights::Witness::Atom { level, atom } => (level, atom),
        _ => (usize::MAX, usize::MAX),
    }
}

/// `‖𝓜(σ1χ_E, σ2χ_E) χ_E‖_{L^p(v)} / (‖χ_E‖_{L^{p1}(σ1)} ‖χ_E‖_{L^{p2}(σ2)})`.
pub fn localized_indicator_ratio(inst: &Instance, tail: &PointSet) -> Option<f64> {
    if tail.is_empty() {
        return None;
    }
    let chi = PointFn::indicator(inst.space.n_points(), tail);
    let m = bilinear_maximal(&inst.space, &inst.sigma1.mul(&chi), &inst.sigma2.mul(&chi)).mul(&chi);
    let num = lp_norm(&inst.space, &m, &inst.v, inst.exps.p);
    let den = lp_norm(&inst.space, &chi, &inst.sigma1, inst.exps.p1) * lp_norm(&inst.space, &chi, &inst.sigma2, inst.exps.p2);
    Some(num / den)
}

/// Sparse bound at base level `i` over `Ω_0 = Ω`, with `h_s = f_s σ_s`.
/// Returns the operator `^*𝓜_i(h1, h2)`, the summed bound and the forests.
pub fn sparse_domination(
    inst: &Instance,
    i: usize,
    f1: &PointFn,
    f2: &PointFn,
) -> Result<(PointFn, PointFn, Vec<PrincipalForest>), VerifyError> {
    let space = &inst.space;
    let (h1, h2) = (f1.mul(&inst.sigma1), f2.mul(&inst.sigma2));
    let forests = forest_cover(space, i, &PointSet::full(space.n_points()), &h1, &h2)?;
    let op = tailed_bilinear_maximal(space, i, &h1, &h2);
    let mut bound = PointFn::zeros(space.n_points());
    for f in &forests {
        bound = bound.zip_with(&sparse_bound(space, f), |a, b| a + b);
    }
    Ok((op, bound, forests))
}

/// The sparse-bound row: the point of `P_0`'s union with the least slack.
pub fn check_sparse(inst: &Instance, f1: &PointFn, f2: &PointFn, tol: f64) -> Result<CheckResult, VerifyError> {
    let (op, bound, forests) = sparse_domination(inst, 0, f1, f2)?;
    let covered = forests.iter().fold(PointSet::empty(), |acc, f| acc.union(&f.root.points));
    let mut best: Option<(f64, usize)> = None;
    for x in covered.iter() {
        let slack = bound.get(x) - op.get(x);
        if best.is_none_or(|(s, _)| slack < s) {
            best = Some((slack, x));
        }
    }
    let (lhs, rhs, witness) = match best {
        Some((_, x)) => (op.get(x), bound.get(x), format!("point {x}")),
        None => (0.0, 0.0, "empty".to_string()),
    };
    Ok(CheckResult::new("sparse", lhs, rhs, Certainty::Exact, approx_le_with(lhs, rhs, tol), true).note(witness))
}

/// Structural properties and doubling of every forest built from the pair.
pub fn check_props(inst: &Instance, f1: &PointFn, f2: &PointFn) -> Result<CheckResult, VerifyError> {
    let (_, _, forests) = sparse_domination(inst, 0, f1, f2)?;
    let mut worst_ratio: f64 = 1.0;
    let mut failed = Vec::new();
    let mut nodes = 0;
    for f in &forests {
        let r = crate::principal::verify_properties(&inst.space, f);
        nodes += f.nodes().len();
        for (name, c) in [("P1", r.p1), ("P2", r.p2), ("P3", r.p3), ("P4", r.p4), ("P5", r.p5), ("nesting", r.nesting)] {
            if !c.holds {
                failed.push(name);
            }
        }
        worst_ratio = worst_ratio.max(crate::principal::doubling_check(&inst.space, f));
    }
    failed.sort_unstable();
    failed.dedup();
    let ok = failed.is_empty() && worst_ratio <= 2.0;
    let note = if failed.is_empty() { format!("{} forests, {nodes} nodes", forests.len()) } else { format!("failed {}", failed.join(",")) };
    Ok(CheckResult::new("props", worst_ratio, 2.0, Certainty::Exact, ok, true).note(note))
}

/// Carleson embedding with proof coefficients, worst forest by relative slack.
pub fn check_carleson(
    inst: &Instance,
    f1: &PointFn,
    f2: &PointFn,
    variant: crate::carleson::Variant,
    mode: SupMode,
    tol: f64,
) -> Result<CheckResult, VerifyError> {
    use crate::carleson::{build_level_sets, certify_carleson_constant, proof_coefficients, verify_embedding};
    let (_, _, forests) = sparse_domination(inst, 0, f1, f2)?;
    let theorem = format!("carleson.{}", variant.as_str());
    let mut worst: Option<(f64, f64, f64, Certainty)> = None;
    for forest in &forests {
        let mut fam = build_level_sets(&inst.space, forest, &inst.sigma1, &inst.sigma2, variant)?;
        let a = proof_coefficients(&inst.space, &fam, &inst.v, &inst.sigma1, &inst.sigma2, &inst.exps);
        fam.set_coefficients(&a)?;
        let certainty = match mode {
            SupMode::Exact { budget } => {
                certify_carleson_constant(&inst.space, &mut fam, &inst.sigma1, &inst.sigma2, &inst.exps, budget)?;
                Certainty::Exact
            }
            SupMode::Heuristic => {
                let geo = crate::weights::geometric_weight(&inst.sigma1, &inst.sigma2, &inst.exps);
                let best = crate::stopping::heuristic_sup_over_tau(&inst.space, 0, Some((&inst.sigma1, &inst.sigma2)), |tau| {
                    let tail = tau.tail_set();
                    (!tail.is_empty()).then(|| fam.mass_inside(&tail) / inst.space.integrate(&geo, &tail))
                });
                let value = best.map_or(0.0, |(v, _)| v.max(0.0));
                fam = fam.with_constant(value);
                fam.certified = true;
                Certainty::LowerBound
            }
        };
        let e = verify_embedding(&inst.space, forest, &fam, &inst.omega1, &inst.omega2, &inst.exps)?;
        let rel = if e.rhs > 0.0 { e.slack / e.rhs } else { e.slack };
        if worst.is_none_or(|w| rel < (w.1 - w.0) / w.1.max(f64::MIN_POSITIVE)) {
            worst = Some((e.lhs, e.rhs, e.certified_a, certainty));
        }
    }
    let (lhs, rhs, a, mode) = worst.unwrap_or((0.0, 0.0, 0.0, Certainty::Exact));
    let ok = approx_le_with(lhs, rhs, tol);
    let mut r = CheckResult::new(theorem, lhs, rhs, mode, ok, mode == Certainty::Exact).note(format!("{} forests", forests.len()));
    r.constants.push(("CarlesonA".to_string(), a));
    Ok(r)
}

/// Lower bound on `‖𝓜‖` with its maximizing pair.
#[derive(Clone, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub f1: PointFn,
    pub f2: PointFn,
    pub source: String,
}

/// Maximizes the test ratio over atom indicators, all tail-set indicators
/// of `T_0` (when enumerable within `atom_budget`) and `random` lognormal pairs.
pub fn estimate_norm(inst: &Instance, random: usize, seed: u64, atom_budget: usize) -> NormEstimate {
    let space = &inst.space;
    let n = space.n_points();
    let mut best = NormEstimate { value: f64::NEG_INFINITY, f1: PointFn::zeros(n), f2: PointFn::zeros(n), source: String::new() };
    let offer = |f1: PointFn, f2: PointFn, source: &dyn Fn() -> String, best: &mut NormEstimate| {
        if let Some(r) = test_ratio(inst, &f1, &f2) {
            if r > best.value {
                *best = NormEstimate { value: r, f1, f2, source: source() };
            }
        }
    };
    for t in 0..space.n_levels() {
        for a in 0..space.level(t).len() {
            let chi = PointFn::indicator(n, space.atom(t, a));
            offer(chi.clone(), chi, &|| format!("atom {t}:{a}"), &mut best);
        }
    }
    if let Ok(iter) = enumerate_stopping_times(space, 0, atom_budget) {
        let mut seen = std::collections::HashSet::new();
        for tau in iter {
            let tail = tau.tail_set();
            if !tail.is_empty() && seen.insert(tail.clone()) {
                let chi = PointFn::indicator(n, &tail);
                offer(chi.clone(), chi, &|| format!("tail {tail}"), &mut best);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, (f1, f2)) in random_pairs(&mut rng, n, random, 1.5).into_iter().enumerate() {
        offer(f1, f2, &|| format!("random {k}"), &mut best);
    }
    best
}
