//! Core numerics for a moving-mesh finite element simulator of
//! Landau-de Gennes Q-tensor dynamics in two space dimensions.
//!
//! The crate is organised around the pipeline of a single simulation step:
//! Q-tensor pointwise algebra ([`qtensor`]), the bulk free energy and its
//! derivatives ([`energy`]), the moving triangulation ([`mesh`]), finite
//! element assembly ([`fem`]), monitor functions and the moving-mesh PDE
//! ([`monitor`], [`mmpde`]), sparse linear algebra ([`sparse`]), SDIRK2 time
//! integration with the Maxwell constraint ([`sdirk`], [`driver`]) and the
//! experiment definitions ([`problems`]).
//!
//! All solver internals work on nondimensional quantities: lengths in units
//! of the nematic coherence length, time in units of `nu / (C * S_eq^2)`,
//! energy densities in units of `C * S_eq^4`. Conversions live in
//! [`energy::Scales`].

pub mod driver;
pub mod energy;
pub mod fem;
pub mod mesh;
pub mod mmpde;
pub mod monitor;
pub mod problems;
pub mod qtensor;
pub mod quadrature;
pub mod sdirk;
pub mod sparse;
