//! Numerical laboratory for Davies–Gaffney off-diagonal bounds of degenerate,
//! non-autonomous divergence-form parabolic equations
//!
//! ```text
//! du/dt = div(a grad u) + <b, grad u> + c u,   <a grad u, nu> = 0 on the boundary.
//! ```
//!
//! The crate discretizes the equation with an M-matrix finite-volume scheme,
//! assembles discrete propagators, constructs certified cutoff functions, and
//! compares measured operator norms `||chi_X P chi_Y||_p` against the
//! Gaussian-type bound `exp(-d^2 / (4 k^2 alpha (t - s)))`.

pub mod bounds;
pub mod coefficients;
pub mod cutoff;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod linalg;
pub mod showcase;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/coefficients.md")]
    mod coefficients {}
    #[doc = include_str!("../../../book/src/cutoffs.md")]
    mod cutoffs {}
    #[doc = include_str!("../../../book/src/evolution.md")]
    mod evolution {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/showcase.md")]
    mod showcase {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
