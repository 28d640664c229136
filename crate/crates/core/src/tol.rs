//! Floating-point comparison helpers shared by every checker.

/// Relative tolerance for equality and inequality assertions.
pub const REL_TOL: f64 = 1e-9;

/// Absolute floor used near zero.
pub const ABS_TOL: f64 = 1e-12;

/// `a <= b` up to the default relative tolerance.
pub fn approx_le(a: f64, b: f64) -> bool {
    approx_le_with(a, b, REL_TOL)
}

/// `a <= b` up to `rel` relative slack (with the absolute floor [`ABS_TOL`]).
pub fn approx_le_with(a: f64, b: f64, rel: f64) -> bool {
    a <= b + rel * a.abs().max(b.abs()) + ABS_TOL
}

/// `a == b` up to `rel` relative slack (with the absolute floor [`ABS_TOL`]).
pub fn approx_eq_with(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + ABS_TOL
}

/// `a == b` up to the default relative tolerance.
pub fn approx_eq(a: f64, b: f64) -> bool {
    approx_eq_with(a, b, REL_TOL)
}
