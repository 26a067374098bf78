//! Mixed finite element solver for the coupled Darcy-Brinkman / heat system
//! written in vorticity-velocity-pressure-temperature form, with viscous
//! dissipation feeding back into the energy balance.
//!
//! The discretization pairs continuous Lagrange elements for the (scalar, 2D)
//! vorticity and the temperature with Raviart-Thomas elements for the velocity
//! and discontinuous polynomials for the pressure. Because the divergence of
//! the velocity space is contained in the pressure space, the computed velocity
//! is pointwise divergence-free.
//!
//! Crate layout:
//! - [`mesh`]: structured triangulations of rectangles with boundary tags;
//! - [`reference`]: reference-triangle bases, quadrature, geometric maps;
//! - [`spaces`]: global FE spaces, interpolation, and L2 projection;
//! - [`assembly`]: forms, loads, residual, and Jacobian of the coupled system;
//! - [`solver`]: sparse LU, essential conditions, Newton and Picard iterations;
//! - [`harness`]: manufactured-solution verification, error norms, reports,
//!   VTK export, and the property-test suite behind the CLI.

pub mod assembly;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod reference;
pub mod solver;
pub mod spaces;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
