//! Conjugate functions: the discrete Legendre–Fenchel transform on 1-D grids and
//! the duality checks that tie the smoothness of `f*` to the strong convexity of `f`.
//!
//! Multi-dimensional conjugates go through the closed-form quadratic path in
//! [`crate::quadratic`] and the analytic conjugates of the function catalog.

mod duality;
mod grid;

pub use duality::{
    conjugate_pair_residual, descent_residual, dual_scaling_subgradient, fenchel_young_gap, gradient_duality_residual,
    radius_recipe, strong_convexity_from_conjugate, ConvexityCheck, DescentReport, RadiusRecipe, MARGIN_TOLERANCE,
};
pub use grid::{biconjugate, conjugate_error, lf_transform, Conjugate, GridFunction, ScalarFunction, TransformMethod};
