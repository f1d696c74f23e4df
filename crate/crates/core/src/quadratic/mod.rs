//! Quadratic-form algebra: symmetrization, factorization, conjugation, inner-product
//! certificates, and the search for the best-conditioned quadratic sandwich of a norm.

mod certificate;
mod conditioning;
mod extremes;
mod form;

pub use certificate::{
    check_sandwich, equivalence_constants, extract_inner_product, InnerProductCertificate, SandwichCheck, Source,
    SourceKind, SANDWICH_TOLERANCE,
};
pub use conditioning::{form_ratio, identity_conditioning, min_conditioning, Conditioning};
pub use extremes::{form_extremes, FormExtremes};
pub use form::{conjugate_quadratic, inverse_pair_residual, symmetrize, QuadraticForm};
