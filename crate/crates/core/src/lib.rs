//! Hybrid high-order (HHO) discretization of planar linear elasticity.
//!
//! The crate covers the full adaptive pipeline: simplicial meshes with
//! newest-vertex bisection ([`mesh`]), polynomial bases and quadrature
//! ([`quadrature`], [`basis`], [`approximation`]), the element-local HHO
//! reconstructions and stabilizations ([`operators`]), global assembly with
//! static condensation ([`system`]), the stabilization-free a posteriori
//! estimator ([`estimator`]) and the adaptive loop ([`afem`]).
//!
//! Cell and face unknowns are stored against orthonormal hierarchical bases,
//! so that truncating a coefficient block realizes the L² projection onto a
//! lower polynomial degree.

pub mod afem;
pub mod approximation;
pub mod basis;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod operators;
pub mod problem;
pub mod quadrature;
pub mod system;
pub mod verify;

pub use error::{Error, Result};

/// Points and vectors in the plane.
pub type Point = nalgebra::Vector2<f64>;
