//! Quadrature rules and singular pair integration for the logarithmic kernel.

mod pair;
mod rules;

pub use pair::*;
pub use rules::{chebyshev_points, gauss_legendre, gauss_log, QuadratureRule, RuleKind};
pub(crate) use rules::gl;
