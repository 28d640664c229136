//! Bilinear Doob maximal operators on finite filtered measure spaces.

pub mod carleson;
pub mod cli;
pub mod operators;
pub mod principal;
pub mod space;
pub mod stopping;
pub mod tol;
pub mod verify;
pub mod weights;
