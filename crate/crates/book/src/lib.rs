//! The guide in `book/src`, compiled so its listings run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/spaces.md")]
pub mod spaces {}

#[doc = include_str!("../../../book/src/rademacher.md")]
pub mod rademacher {}

#[doc = include_str!("../../../book/src/certification.md")]
pub mod certification {}

#[doc = include_str!("../../../book/src/inner-products.md")]
pub mod inner_products {}

#[doc = include_str!("../../../book/src/conjugates.md")]
pub mod conjugates {}

#[doc = include_str!("../../../book/src/banach-mazur.md")]
pub mod banach_mazur {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
