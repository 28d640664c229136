//! Doob maximal operators on a filtered space.
//!
//! Every supremum over `i ∈ ℤ` is taken over the finite window `0..=L`.

use crate::space::{FilteredSpace, PointFn, SpaceError};

/// `Mf = max_t |E_t f|`.
pub fn maximal(space: &FilteredSpace, f: &PointFn) -> PointFn {
    tailed_maximal(space, 0, f)
}

/// `*M_i f = max_{t >= i} |E_t f|`.
pub fn tailed_maximal(space: &FilteredSpace, i: usize, f: &PointFn) -> PointFn {
    let mut out = vec![0.0_f64; space.n_points()];
    for t in i..space.n_levels() {
        for (o, e) in out.iter_mut().zip(space.cond_exp(f, t).values()) {
            *o = o.max(e.abs());
        }
    }
    PointFn::from_raw(out)
}

/// `𝓜(f, g) = max_t |E_t f| |E_t g|`.
pub fn bilinear_maximal(space: &FilteredSpace, f: &PointFn, g: &PointFn) -> PointFn {
    tailed_bilinear_maximal(space, 0, f, g)
}

/// `*𝓜_i(f, g) = max_{t >= i} |E_t f| |E_t g|`.
pub fn tailed_bilinear_maximal(space: &FilteredSpace, i: usize, f: &PointFn, g: &PointFn) -> PointFn {
    assert!(i <= space.depth(), "tail index {i} beyond the window");
    let mut out = vec![0.0_f64; space.n_points()];
    for t in i..space.n_levels() {
        let ef = space.cond_exp(f, t);
        let eg = space.cond_exp(g, t);
        for ((o, a), b) in out.iter_mut().zip(ef.values()).zip(eg.values()) {
            *o = o.max(a.abs() * b.abs());
        }
    }
    PointFn::from_raw(out)
}

/// Doob maximal operator of the measure `σ dμ`: `max_t E^σ(|f| | F_t)`.
pub fn weighted_maximal(space: &FilteredSpace, f: &PointFn, sigma: &PointFn) -> Result<PointFn, SpaceError> {
    sigma.check_positive()?;
    let af = f.abs();
    let mut out = vec![0.0_f64; space.n_points()];
    for t in 0..space.n_levels() {
        let e = space.weighted_cond_exp(&af, sigma, t)?;
        for (o, v) in out.iter_mut().zip(e.values()) {
            *o = o.max(*v);
        }
    }
    Ok(PointFn::from_raw(out))
}

/// `(∫ |f|^p w dμ)^{1/p}`.
pub fn lp_norm(space: &FilteredSpace, f: &PointFn, weight: &PointFn, p: f64) -> f64 {
    assert!(p > 0.0, "lp_norm needs p > 0");
    space.check_len(f);
    space.check_len(weight);
    let s: f64 = f
        .values()
        .iter()
        .zip(weight.values())
        .zip(space.masses())
        .map(|((v, w), m)| v.abs().powf(p) * w * m)
        .sum();
    s.powf(1.0 / p)
}
