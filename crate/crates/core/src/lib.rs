//! Variable-exponent p-energy calculus for maps between Riemannian manifolds.
//!
//! Maps are evaluated in coordinates and differentiated with nested
//! forward-mode dual numbers ([`dual`]); finite differences ([`fd`]) serve as
//! the independent check. On top of the geometry sit the tension fields
//! ([`tension`]), the Jacobi operator and index form ([`jacobi`]), quadrature
//! and energies ([`quadrature`]), finite-difference variation checks
//! ([`variation`]) and a discrete gradient flow ([`flow`]).

pub mod cli;
pub mod dual;
pub mod error;
pub mod fd;
pub mod flow;
pub mod geometry;
pub mod jacobi;
pub mod maps;
pub mod quadrature;
pub mod rng;
pub mod section;
pub mod tension;
pub mod variation;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/tension.md")]
    mod tension {}
    #[doc = include_str!("../../../book/src/jacobi.md")]
    mod jacobi {}
    #[doc = include_str!("../../../book/src/variations.md")]
    mod variations {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
