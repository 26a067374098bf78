//! Affine cell geometry and the maps that carry reference-element data to a
//! physical cell: coordinates, scalar gradients (covariant), and vector
//! fields with their divergences (contravariant Piola).

use crate::mesh::Mesh;

/// Affine map `x = origin + B xhat` of the reference triangle onto a cell,
/// with cached determinant and inverse. `det` is twice the cell area and is
/// positive for the counterclockwise cells produced by [`crate::mesh`].
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub origin: [f64; 2],
    /// Row-major Jacobian; column j is the image of reference direction j.
    pub b: [[f64; 2]; 2],
    pub det: f64,
    inv_b: [[f64; 2]; 2],
}

impl CellGeometry {
    pub fn new(mesh: &Mesh, cell: usize) -> Self {
        let [v0, v1, v2] = mesh.cells[cell];
        let p0 = mesh.vertices[v0];
        let p1 = mesh.vertices[v1];
        let p2 = mesh.vertices[v2];
        let b = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
        let inv_b = [
            [b[1][1] / det, -b[0][1] / det],
            [-b[1][0] / det, b[0][0] / det],
        ];
        CellGeometry {
            origin: p0,
            b,
            det,
            inv_b,
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    pub fn to_phys(&self, xhat: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.b[0][0] * xhat[0] + self.b[0][1] * xhat[1],
            self.origin[1] + self.b[1][0] * xhat[0] + self.b[1][1] * xhat[1],
        ]
    }

    pub fn to_ref(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv_b[0][0] * d[0] + self.inv_b[0][1] * d[1],
            self.inv_b[1][0] * d[0] + self.inv_b[1][1] * d[1],
        ]
    }

    /// Covariant push-forward of a reference gradient: `B^{-T} ghat`.
    pub fn grad_to_phys(&self, ghat: [f64; 2]) -> [f64; 2] {
        [
            self.inv_b[0][0] * ghat[0] + self.inv_b[1][0] * ghat[1],
            self.inv_b[0][1] * ghat[0] + self.inv_b[1][1] * ghat[1],
        ]
    }

    /// Contravariant Piola push-forward: `B vhat / det`. Preserves edge
    /// normal-flux moments and maps reference divergence to `dhat / det`.
    pub fn piola_val(&self, vhat: [f64; 2]) -> [f64; 2] {
        [
            (self.b[0][0] * vhat[0] + self.b[0][1] * vhat[1]) / self.det,
            (self.b[1][0] * vhat[0] + self.b[1][1] * vhat[1]) / self.det,
        ]
    }

    pub fn piola_div(&self, dhat: f64) -> f64 {
        dhat / self.det
    }

    /// Inverse Piola pull-back of a physical vector: `det B^{-1} v`.
    pub fn piola_pullback(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.det * (self.inv_b[0][0] * v[0] + self.inv_b[0][1] * v[1]),
            self.det * (self.inv_b[1][0] * v[0] + self.inv_b[1][1] * v[1]),
        ]
    }
}

/// Push a tabulated set of reference vector values and divergences to the
/// physical cell described by `geo`.
pub fn piola_map(
    geo: &CellGeometry,
    ref_values: &[[f64; 2]],
    ref_divs: &[f64],
) -> (Vec<[f64; 2]>, Vec<f64>) {
    (
        ref_values.iter().map(|v| geo.piola_val(*v)).collect(),
        ref_divs.iter().map(|d| geo.piola_div(*d)).collect(),
    )
}
