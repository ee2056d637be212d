//! Spectral-Galerkin analysis of reaction–diffusion systems resonant at
//! infinity on an interval with Dirichlet boundary conditions.
//!
//! The crate builds the sine basis and the diagonal shifted operator,
//! splits the modes into kernel and hyperbolic parts, evaluates
//! Landesman–Lazer type conditions, computes Conley-index exponents and
//! checks the resulting predictions by direct simulation.

pub mod catalogue;
pub mod connections;
pub mod decomposition;
pub mod error;
pub mod experiment;
pub mod index;
pub mod nonlinearity;
pub mod quadrature;
pub mod resonance;
pub mod semiflow;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use state::{GalerkinState, Mode};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/basis.md")]
    pub struct Basis;
    #[doc = include_str!("../../../book/src/decomposition.md")]
    pub struct Decomposition;
    #[doc = include_str!("../../../book/src/conditions.md")]
    pub struct Conditions;
    #[doc = include_str!("../../../book/src/index.md")]
    pub struct Index;
    #[doc = include_str!("../../../book/src/semiflow.md")]
    pub struct Semiflow;
    #[doc = include_str!("../../../book/src/connections.md")]
    pub struct Connections;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
