//! Reference-element machinery: quadrature rules on the unit triangle and
//! unit segment, Lagrange bases, Raviart-Thomas bases, and the affine /
//! contravariant Piola maps that push them to physical cells.
//!
//! The reference triangle is `{(x, y) : x >= 0, y >= 0, x + y <= 1}` with
//! vertices `(0,0), (1,0), (0,1)` and the local edge convention of
//! [`crate::mesh`]: edge `i` is opposite vertex `i`.

pub mod geometry;
pub mod quad;
pub mod rt;
pub mod scalar;

pub use geometry::{piola_map, CellGeometry};
pub use quad::{quadrature, segment_quadrature, SegmentRule, TriangleRule};
pub use rt::{eval_rt_basis, rt_dim, RtBasis};
pub use scalar::{eval_scalar_basis, scalar_dim, scalar_nodes};
