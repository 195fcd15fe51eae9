//! The long-form guide, compiled from `book/` so its code blocks run
//! as doc-tests; the book cannot drift from the API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/domains.md")]
pub mod domains {}

#[doc = include_str!("../../../book/src/profiles.md")]
pub mod profiles {}

#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
