//! Effective potentials of warped compactifications with a conformal internal
//! metric.
//!
//! A configuration is a background grid (`geometry`), a conformal factor `φ`
//! and sources (`fields`). [`solver::OperatorAssembly`] builds the operator
//! `P_g`, [`solver::solve_critical_point`] finds the warp factor and the
//! potential, and [`bounds`] checks the inequalities that bound it. The general
//! dimension case lives in [`nonlinear`]; [`families`] holds closed-form
//! oracles.
//!
//! ```
//! use conformal_warp::fields::SourceBundle;
//! use conformal_warp::geometry::{ManifoldGrid, ScalarField};
//! use conformal_warp::solver::{solve_critical_point, OperatorAssembly};
//!
//! # fn main() -> conformal_warp::Result<()> {
//! let grid = ManifoldGrid::sphere(1.0, 16, 32)?;
//! let asm = OperatorAssembly::assemble(&grid, &ScalarField::zeros(&grid), &SourceBundle::none(&grid))?;
//! let cp = solve_critical_point(&asm, 1.0)?;
//! assert!((cp.potential + 0.25 / std::f64::consts::PI).abs() < 1e-6);
//! # Ok(())
//! # }
//! ```

pub mod bounds;
pub mod error;
pub mod families;
pub mod fields;
pub mod geometry;
pub mod krylov;
pub mod nonlinear;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};

// The guide's snippets run as doctests, one module per chapter so a failure
// points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/operator.md")]
    mod operator {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/nonlinear.md")]
    mod nonlinear {}
    #[doc = include_str!("../../../book/src/families.md")]
    mod families {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
