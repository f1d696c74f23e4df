//! Numerical checks for when a norm behaves like an inner product.
//!
//! Spaces with exact dual norms, Rademacher type and cotype ratios, sampled
//! strong-convexity and smoothness constants, inner products recovered from
//! second derivatives, and discrete convex conjugates. Every randomized
//! routine takes a seed and is reproducible across thread counts.
//!
//! ```
//! use hilbert_lab::certify::{certify, Ball, CatalogFunction, CertifyConfig};
//! use hilbert_lab::NormedSpace;
//!
//! let f = CatalogFunction::parse("quadratic:[[1,0],[0,4]]", 2)?;
//! let c = certify(&f, &Ball::unit(NormedSpace::euclidean(2)?), &CertifyConfig::new(10_000, 1))?;
//! assert_eq!((c.mu_hat, c.l_hat), (1.0, 4.0));
//! # Ok::<(), hilbert_lab::LabError>(())
//! ```

pub mod certify;
pub mod error;
pub mod fenchel;
mod optim;
pub mod quadratic;
pub mod rademacher;
pub mod rng;
mod serde_util;
pub mod spaces;

pub use error::{LabError, Result};
pub use spaces::{space_catalog, NormedSpace, Vector};
