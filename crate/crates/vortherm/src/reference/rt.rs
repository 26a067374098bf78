//! Raviart-Thomas bases of order 0 and 1 on the reference triangle.
//!
//! The space is `(P_k)^2 + x P~_k` (P~_k homogeneous), of dimension
//! `(k+1)(k+3)`. Degrees of freedom, in local order:
//! - for each local edge `i` and moment `m = 0..=k`: the normal flux against
//!   the shifted Legendre polynomial of degree `m`, integrated with arclength
//!   along the edge's counterclockwise traversal,
//!   `v -> int_e (v . n) L_m(t) ds` with `n` the outward normal;
//! - for `k = 1`, the two interior moments `v -> int_T v . w` with
//!   `w = (1,0), (0,1)`.
//!
//! Edge moments are invariant under the contravariant Piola map (with the
//! matching traversal on the physical edge), which is what makes a basis
//! dual to these functionals assemble into an H(div)-conforming space.

use nalgebra::DMatrix;

use super::quad::{quadrature, segment_quadrature};
use crate::{Error, Result};

/// Dimension of RT_k on a triangle.
pub const fn rt_dim(k: usize) -> usize {
    (k + 1) * (k + 3)
}

/// Number of moments per edge.
pub const fn rt_edge_moments(k: usize) -> usize {
    k + 1
}

/// Number of interior degrees of freedom.
pub const fn rt_interior_dofs(k: usize) -> usize {
    k * (k + 1)
}

/// Shifted Legendre polynomial of degree `m` on [0, 1].
pub(crate) fn legendre_01(m: usize, t: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0 * t - 1.0,
        _ => unreachable!("edge moments only need degrees 0 and 1"),
    }
}

/// Reference triangle vertices.
const REF_VERTS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Start/end points, length, and outward normal of local edge `i`,
/// traversed counterclockwise.
pub(crate) fn ref_edge(i: usize) -> ([f64; 2], [f64; 2], f64, [f64; 2]) {
    let (s, e) = crate::mesh::local_edge_vertices(i);
    let a = REF_VERTS[s];
    let b = REF_VERTS[e];
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let tangent = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    // Rotate the traversal direction by -90 degrees: outward for a
    // counterclockwise cell.
    let normal = [tangent[1], -tangent[0]];
    (a, b, len, normal)
}

/// Interior moment weight functions at `point` (constant vectors for k = 1).
pub(crate) fn interior_weights(k: usize, _point: [f64; 2]) -> Vec<[f64; 2]> {
    match k {
        0 => Vec::new(),
        1 => vec![[1.0, 0.0], [0.0, 1.0]],
        _ => unreachable!(),
    }
}

/// Values and divergences of the monomial spanning set of RT_k at `point`.
fn eval_span(k: usize, point: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
    let [x, y] = point;
    match k {
        0 => (
            vec![[1.0, 0.0], [0.0, 1.0], [x, y]],
            vec![0.0, 0.0, 2.0],
        ),
        1 => (
            vec![
                [1.0, 0.0],
                [x, 0.0],
                [y, 0.0],
                [0.0, 1.0],
                [0.0, x],
                [0.0, y],
                [x * x, x * y],
                [x * y, y * y],
            ],
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 3.0 * x, 3.0 * y],
        ),
        _ => unreachable!(),
    }
}

/// Degree-of-freedom functionals applied to a vector field on the reference
/// triangle, in local order. Used to build the basis and to verify duality.
fn apply_dofs(k: usize, field: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let seg = segment_quadrature(2 * k + 4).expect("within cap");
    let mut dofs = Vec::with_capacity(rt_dim(k));
    for edge in 0..3 {
        let (a, b, len, normal) = ref_edge(edge);
        for m in 0..rt_edge_moments(k) {
            let mut acc = 0.0;
            for (t, w) in seg.points.iter().zip(&seg.weights) {
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                let v = field(p);
                acc += w * (v[0] * normal[0] + v[1] * normal[1]) * legendre_01(m, *t);
            }
            dofs.push(len * acc);
        }
    }
    if rt_interior_dofs(k) > 0 {
        let tri = quadrature(2 * k + 2).expect("within cap");
        let n_int = rt_interior_dofs(k);
        let mut acc = vec![0.0; n_int];
        for (p, w) in tri.points.iter().zip(&tri.weights) {
            let v = field(*p);
            for (j, wt) in interior_weights(k, *p).iter().enumerate() {
                acc[j] += w * (v[0] * wt[0] + v[1] * wt[1]);
            }
        }
        dofs.extend(acc);
    }
    dofs
}

/// RT_k basis dual to the local degrees of freedom.
#[derive(Debug, Clone)]
pub struct RtBasis {
    pub k: usize,
    /// Column j holds the spanning-set coefficients of basis function j.
    coef: DMatrix<f64>,
}

impl RtBasis {
    pub fn new(k: usize) -> Result<Self> {
        if k > 1 {
            return Err(Error::Unsupported {
                what: "Raviart-Thomas order",
                requested: k,
                max: 1,
            });
        }
        let n = rt_dim(k);
        // M[i][j] = dof_i applied to spanning function j.
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let dofs = apply_dofs(k, |p| eval_span(k, p).0[j]);
            for i in 0..n {
                m[(i, j)] = dofs[i];
            }
        }
        let coef = m.try_inverse().ok_or_else(|| {
            Error::InvalidInput("degenerate degree-of-freedom matrix".into())
        })?;
        Ok(RtBasis { k, coef })
    }

    pub const fn dim(&self) -> usize {
        rt_dim(self.k)
    }

    /// Values and divergences of all basis functions at `point`.
    pub fn eval(&self, point: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let n = self.dim();
        let (span_vals, span_divs) = eval_span(self.k, point);
        let mut values = vec![[0.0; 2]; n];
        let mut divs = vec![0.0; n];
        for j in 0..n {
            for l in 0..n {
                let c = self.coef[(l, j)];
                values[j][0] += c * span_vals[l][0];
                values[j][1] += c * span_vals[l][1];
                divs[j] += c * span_divs[l];
            }
        }
        (values, divs)
    }
}

/// Values and divergences of the RT_k basis at `point`.
///
/// Convenience wrapper that rebuilds the basis; hot loops should construct an
/// [`RtBasis`] once and tabulate.
pub fn eval_rt_basis(k: usize, point: [f64; 2]) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    Ok(RtBasis::new(k)?.eval(point))
}
