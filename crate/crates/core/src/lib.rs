//! Towers of subshifts of finite type realizing nested filtrating Markov
//! partitions, with exact checkers for the finite-level criteria and a
//! simulator for the projective limit.

pub mod error;
pub mod format;
pub mod graph;
mod intern;
pub mod certify;
pub mod criteria;
pub mod level;
pub mod limit;
pub mod measure;
pub mod tower;

pub type Rational = num_rational::BigRational;
