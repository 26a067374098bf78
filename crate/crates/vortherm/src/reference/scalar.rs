//! Lagrange bases of degree 0, 1, 2 on the reference triangle.
//!
//! Node ordering: the three vertices first (degree >= 1), then the midpoints
//! of local edges 0, 1, 2 (degree 2). Degree 0 uses the centroid. This
//! ordering matches the degree-of-freedom layout of the continuous and
//! discontinuous spaces built on top.

use crate::{Error, Result};

/// Dimension of P_m on a triangle.
pub const fn scalar_dim(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Interpolation nodes for degree `m` in basis order.
pub fn scalar_nodes(m: usize) -> Result<Vec<[f64; 2]>> {
    match m {
        0 => Ok(vec![[1.0 / 3.0, 1.0 / 3.0]]),
        1 => Ok(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        2 => Ok(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.5],
            [0.0, 0.5],
            [0.5, 0.0],
        ]),
        _ => Err(Error::Unsupported {
            what: "scalar basis degree",
            requested: m,
            max: 2,
        }),
    }
}

/// Values and reference gradients of all degree-`m` basis functions at
/// `point`, in node order.
pub fn eval_scalar_basis(m: usize, point: [f64; 2]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    let [x, y] = point;
    // Barycentric coordinates and their constant gradients.
    let l = [1.0 - x - y, x, y];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    match m {
        0 => Ok((vec![1.0], vec![[0.0, 0.0]])),
        1 => Ok((l.to_vec(), dl.to_vec())),
        2 => {
            let mut values = Vec::with_capacity(6);
            let mut grads = Vec::with_capacity(6);
            for i in 0..3 {
                values.push(l[i] * (2.0 * l[i] - 1.0));
                grads.push([
                    (4.0 * l[i] - 1.0) * dl[i][0],
                    (4.0 * l[i] - 1.0) * dl[i][1],
                ]);
            }
            // Midpoint function of local edge i pairs the two barycentric
            // coordinates of that edge's endpoints (all but coordinate i).
            for (i, j) in [(1, 2), (2, 0), (0, 1)] {
                values.push(4.0 * l[i] * l[j]);
                grads.push([
                    4.0 * (l[i] * dl[j][0] + l[j] * dl[i][0]),
                    4.0 * (l[i] * dl[j][1] + l[j] * dl[i][1]),
                ]);
            }
            Ok((values, grads))
        }
        _ => Err(Error::Unsupported {
            what: "scalar basis degree",
            requested: m,
            max: 2,
        }),
    }
}
