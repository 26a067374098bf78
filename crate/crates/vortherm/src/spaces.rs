//! Finite element spaces on a mesh: continuous Lagrange (CG), discontinuous
//! Lagrange (DG), and Raviart-Thomas (RT) spaces, with interpolation /
//! projection operators and essential-boundary degree-of-freedom extraction.
//!
//! Global RT degrees of freedom are edge normal-flux moments taken along each
//! edge's ascending-vertex direction with normal = tangent rotated by -90
//! degrees, plus (order 1) two interior moments per cell. A cell seeing an
//! edge against the global direction flips the sign of its even-degree
//! moments; odd-degree Legendre weights absorb the parameter reversal. This
//! sign bookkeeping is what makes the assembled fields H(div)-conforming.

use std::collections::BTreeMap;
use std::rc::Rc;

use crate::mesh::{EdgeTag, Mesh};
use crate::reference::geometry::CellGeometry;
use crate::reference::quad::{quadrature, segment_quadrature};
use crate::reference::rt::{
    interior_weights, legendre_01, rt_dim, rt_edge_moments, rt_interior_dofs, RtBasis,
};
use crate::reference::scalar::{eval_scalar_basis, scalar_dim};
use crate::{Error, Result};

/// Quadrature degree used for interpolation and projection moments.
const MOMENT_DEGREE: usize = 12;

/// The supported element families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Continuous Lagrange of degree 1 or 2.
    Cg(usize),
    /// Discontinuous Lagrange of degree 0 or 1.
    Dg(usize),
    /// Raviart-Thomas of order 0 or 1.
    Rt(usize),
}

/// A finite element space: global DOF layout plus per-cell connectivity.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Rc<Mesh>,
    pub kind: SpaceKind,
    pub ndofs: usize,
    /// Global DOF ids per cell, in local (reference) order.
    pub cell_dofs: Vec<Vec<usize>>,
    /// Orientation sign per local DOF; +1 except for flipped RT edge moments.
    pub cell_signs: Vec<Vec<f64>>,
}

/// Build a space of the given kind over `mesh`.
pub fn build_space(mesh: &Rc<Mesh>, kind: SpaceKind) -> Result<FeSpace> {
    let n_vert = mesh.vertices.len();
    let n_edge = mesh.edges.len();
    let n_cell = mesh.cells.len();
    let (ndofs, cell_dofs, cell_signs) = match kind {
        SpaceKind::Cg(1) => {
            let dofs: Vec<Vec<usize>> = mesh.cells.iter().map(|c| c.to_vec()).collect();
            (n_vert, dofs, vec![vec![1.0; 3]; n_cell])
        }
        SpaceKind::Cg(2) => {
            let mut dofs = Vec::with_capacity(n_cell);
            for (c, cell) in mesh.cells.iter().enumerate() {
                let mut d = cell.to_vec();
                for le in 0..3 {
                    d.push(n_vert + mesh.cell_edges[c][le].0);
                }
                dofs.push(d);
            }
            (n_vert + n_edge, dofs, vec![vec![1.0; 6]; n_cell])
        }
        SpaceKind::Dg(m @ (0 | 1)) => {
            let per = scalar_dim(m);
            let dofs: Vec<Vec<usize>> = (0..n_cell)
                .map(|c| (0..per).map(|j| per * c + j).collect())
                .collect();
            (per * n_cell, dofs, vec![vec![1.0; per]; n_cell])
        }
        SpaceKind::Rt(k @ (0 | 1)) => {
            let per_edge = rt_edge_moments(k);
            let per_cell_int = rt_interior_dofs(k);
            let mut dofs = Vec::with_capacity(n_cell);
            let mut signs = Vec::with_capacity(n_cell);
            for c in 0..n_cell {
                let mut d = Vec::with_capacity(rt_dim(k));
                let mut s = Vec::with_capacity(rt_dim(k));
                for le in 0..3 {
                    let (edge, orient) = mesh.cell_edges[c][le];
                    for m in 0..per_edge {
                        d.push(per_edge * edge + m);
                        // Reversing the traversal flips the normal and sends
                        // t -> 1-t; the two flips cancel for odd Legendre
                        // weights.
                        s.push(if m % 2 == 0 { f64::from(orient) } else { 1.0 });
                    }
                }
                for j in 0..per_cell_int {
                    d.push(per_edge * n_edge + per_cell_int * c + j);
                    s.push(1.0);
                }
                dofs.push(d);
                signs.push(s);
            }
            (per_edge * n_edge + per_cell_int * n_cell, dofs, signs)
        }
        SpaceKind::Cg(m) => {
            return Err(Error::Unsupported {
                what: "continuous space degree",
                requested: m,
                max: 2,
            })
        }
        SpaceKind::Dg(m) => {
            return Err(Error::Unsupported {
                what: "discontinuous space degree",
                requested: m,
                max: 1,
            })
        }
        SpaceKind::Rt(k) => {
            return Err(Error::Unsupported {
                what: "Raviart-Thomas order",
                requested: k,
                max: 1,
            })
        }
    };
    Ok(FeSpace {
        mesh: Rc::clone(mesh),
        kind,
        ndofs,
        cell_dofs,
        cell_signs,
    })
}

impl FeSpace {
    /// Scalar polynomial degree (CG/DG only).
    fn scalar_degree(&self) -> usize {
        match self.kind {
            SpaceKind::Cg(m) | SpaceKind::Dg(m) => m,
            SpaceKind::Rt(_) => panic!("scalar degree of a vector space"),
        }
    }

    /// Evaluate a scalar FE function: value and physical gradient at the
    /// reference point `xhat` of `cell`.
    pub fn eval_scalar(&self, coeffs: &[f64], cell: usize, xhat: [f64; 2]) -> (f64, [f64; 2]) {
        let (values, grads) = eval_scalar_basis(self.scalar_degree(), xhat).expect("degree");
        let geo = CellGeometry::new(&self.mesh, cell);
        let mut v = 0.0;
        let mut g = [0.0, 0.0];
        for (j, &dof) in self.cell_dofs[cell].iter().enumerate() {
            let c = coeffs[dof];
            v += c * values[j];
            let pg = geo.grad_to_phys(grads[j]);
            g[0] += c * pg[0];
            g[1] += c * pg[1];
        }
        (v, g)
    }

    /// Evaluate an RT FE function: value and divergence at the reference
    /// point `xhat` of `cell`.
    pub fn eval_rt(&self, coeffs: &[f64], cell: usize, xhat: [f64; 2]) -> ([f64; 2], f64) {
        let SpaceKind::Rt(k) = self.kind else {
            panic!("vector evaluation on a scalar space")
        };
        let basis = RtBasis::new(k).expect("order");
        let (vals, divs) = basis.eval(xhat);
        let geo = CellGeometry::new(&self.mesh, cell);
        let mut v = [0.0, 0.0];
        let mut d = 0.0;
        for (j, &dof) in self.cell_dofs[cell].iter().enumerate() {
            let c = coeffs[dof] * self.cell_signs[cell][j];
            let pv = geo.piola_val(vals[j]);
            v[0] += c * pv[0];
            v[1] += c * pv[1];
            d += c * geo.piola_div(divs[j]);
        }
        (v, d)
    }
}

/// Nodal interpolation into a CG space.
pub fn interpolate_cg(space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    let SpaceKind::Cg(m) = space.kind else {
        return Err(Error::InvalidInput("nodal interpolation needs a CG space".into()));
    };
    let mesh = &space.mesh;
    let mut coeffs = vec![0.0; space.ndofs];
    for (v, p) in mesh.vertices.iter().enumerate() {
        coeffs[v] = f(*p);
    }
    if m == 2 {
        for e in 0..mesh.edges.len() {
            coeffs[mesh.vertices.len() + e] = f(mesh.edge_midpoint(e));
        }
    }
    Ok(coeffs)
}

/// Cell-wise L2 projection into a DG space.
pub fn project_dg(space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    let SpaceKind::Dg(m) = space.kind else {
        return Err(Error::InvalidInput("cell projection needs a DG space".into()));
    };
    let rule = quadrature(MOMENT_DEGREE)?;
    let dim = scalar_dim(m);
    // Reference mass matrix and basis tabulation (geometry factors cancel in
    // the local solve up to the common det factor).
    let tab: Vec<Vec<f64>> = rule
        .points
        .iter()
        .map(|p| eval_scalar_basis(m, *p).unwrap().0)
        .collect();
    let mut mass = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for (q, w) in rule.weights.iter().enumerate() {
        for i in 0..dim {
            for j in 0..dim {
                mass[(i, j)] += w * tab[q][i] * tab[q][j];
            }
        }
    }
    let mass_inv = mass.try_inverse().expect("reference mass is SPD");
    let mut coeffs = vec![0.0; space.ndofs];
    for cell in 0..space.mesh.cells.len() {
        let geo = CellGeometry::new(&space.mesh, cell);
        let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
        for (q, w) in rule.weights.iter().enumerate() {
            let x = geo.to_phys(rule.points[q]);
            for i in 0..dim {
                rhs[i] += w * tab[q][i] * f(x);
            }
        }
        let local: nalgebra::DVector<f64> = &mass_inv * rhs;
        for (j, &dof) in space.cell_dofs[cell].iter().enumerate() {
            coeffs[dof] = local[j];
        }
    }
    Ok(coeffs)
}

/// Moment of `f . n` along edge `edge` against the degree-`m` shifted
/// Legendre weight, in the global (ascending-vertex) traversal.
fn edge_flux_moment(
    mesh: &Mesh,
    edge: usize,
    m: usize,
    f: &impl Fn([f64; 2]) -> [f64; 2],
    seg_pts: &[f64],
    seg_wts: &[f64],
) -> f64 {
    let [a, b] = mesh.edges[edge];
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let len = mesh.edge_length(edge);
    let n = mesh.edge_normal(edge);
    let mut acc = 0.0;
    for (t, w) in seg_pts.iter().zip(seg_wts) {
        let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        let v = f(x);
        acc += w * (v[0] * n[0] + v[1] * n[1]) * legendre_01(m, *t);
    }
    len * acc
}

/// Canonical (edge-moment plus interior-moment) interpolation into an RT
/// space. Commutes with the divergence: the divergence of the interpolant is
/// the cell-wise L2 projection of `div f`.
pub fn interpolate_rt(space: &FeSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    let SpaceKind::Rt(k) = space.kind else {
        return Err(Error::InvalidInput("flux interpolation needs an RT space".into()));
    };
    let mesh = &space.mesh;
    let seg = segment_quadrature(MOMENT_DEGREE)?;
    let per_edge = rt_edge_moments(k);
    let mut coeffs = vec![0.0; space.ndofs];
    for e in 0..mesh.edges.len() {
        for m in 0..per_edge {
            coeffs[per_edge * e + m] =
                edge_flux_moment(mesh, e, m, &f, &seg.points, &seg.weights);
        }
    }
    let n_int = rt_interior_dofs(k);
    if n_int > 0 {
        let rule = quadrature(MOMENT_DEGREE)?;
        let base = per_edge * mesh.edges.len();
        for cell in 0..mesh.cells.len() {
            let geo = CellGeometry::new(mesh, cell);
            let mut acc = vec![0.0; n_int];
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let pulled = geo.piola_pullback(f(geo.to_phys(*p)));
                for (j, wt) in interior_weights(k, *p).iter().enumerate() {
                    acc[j] += w * (pulled[0] * wt[0] + pulled[1] * wt[1]);
                }
            }
            for (j, a) in acc.iter().enumerate() {
                coeffs[base + n_int * cell + j] = *a;
            }
        }
    }
    Ok(coeffs)
}

/// Constrained DOF ids and values for a CG space on the boundary part `tag`:
/// every node lying on a tagged edge, valued by `g` at the node position.
/// Where two boundary parts meet, the shared corner node shows up in both
/// parts' sets; the trace data must agree there.
pub fn essential_dofs_cg(
    space: &FeSpace,
    tag: EdgeTag,
    g: impl Fn([f64; 2]) -> f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let SpaceKind::Cg(m) = space.kind else {
        return Err(Error::InvalidInput("nodal constraints need a CG space".into()));
    };
    let mesh = &space.mesh;
    let mut set: BTreeMap<usize, f64> = BTreeMap::new();
    for e in mesh.tagged_edges(tag) {
        let [a, b] = mesh.edges[e];
        set.insert(a, g(mesh.vertices[a]));
        set.insert(b, g(mesh.vertices[b]));
        if m == 2 {
            set.insert(mesh.vertices.len() + e, g(mesh.edge_midpoint(e)));
        }
    }
    Ok((set.keys().copied().collect(), set.values().copied().collect()))
}

/// Constrained DOF ids and values for an RT space on the boundary part `tag`:
/// all flux moments of tagged edges, valued by the moments of `g . n`.
pub fn essential_dofs_rt(
    space: &FeSpace,
    tag: EdgeTag,
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<(Vec<usize>, Vec<f64>)> {
    let SpaceKind::Rt(k) = space.kind else {
        return Err(Error::InvalidInput("flux constraints need an RT space".into()));
    };
    let mesh = &space.mesh;
    let seg = segment_quadrature(MOMENT_DEGREE)?;
    let per_edge = rt_edge_moments(k);
    let mut dofs = Vec::new();
    let mut values = Vec::new();
    for e in mesh.tagged_edges(tag) {
        for m in 0..per_edge {
            dofs.push(per_edge * e + m);
            values.push(edge_flux_moment(mesh, e, m, &g, &seg.points, &seg.weights));
        }
    }
    Ok((dofs, values))
}

/// The four coupled fields' spaces for discretization order `k`: vorticity in
/// CG_{k+1}, velocity in RT_k, pressure in DG_k, temperature in CG_{k+1}.
#[derive(Debug, Clone)]
pub struct SpaceSet {
    pub k: usize,
    pub mesh: Rc<Mesh>,
    pub omega: FeSpace,
    pub vel: FeSpace,
    pub pres: FeSpace,
    pub temp: FeSpace,
}

pub fn build_spaces(mesh: &Rc<Mesh>, k: usize) -> Result<SpaceSet> {
    if k > 1 {
        return Err(Error::Unsupported {
            what: "discretization order",
            requested: k,
            max: 1,
        });
    }
    Ok(SpaceSet {
        k,
        mesh: Rc::clone(mesh),
        omega: build_space(mesh, SpaceKind::Cg(k + 1))?,
        vel: build_space(mesh, SpaceKind::Rt(k))?,
        pres: build_space(mesh, SpaceKind::Dg(k))?,
        temp: build_space(mesh, SpaceKind::Cg(k + 1))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, refine_uniform, Rect};
    use std::f64::consts::PI;

    fn demo_mesh() -> Rc<Mesh> {
        Rc::new(build_rect_mesh(4, 2, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap())
    }

    fn ref_points() -> Vec<[f64; 2]> {
        vec![[0.2, 0.3], [0.6, 0.1], [0.05, 0.8], [1.0 / 3.0, 1.0 / 3.0]]
    }

    #[test]
    fn dof_counts_on_demo_mesh() {
        let mesh = demo_mesh();
        let counts = [
            (SpaceKind::Cg(1), 15),
            (SpaceKind::Cg(2), 45),
            (SpaceKind::Dg(0), 16),
            (SpaceKind::Dg(1), 48),
            (SpaceKind::Rt(0), 30),
            (SpaceKind::Rt(1), 92),
        ];
        for (kind, expect) in counts {
            let space = build_space(&mesh, kind).unwrap();
            assert_eq!(space.ndofs, expect, "{kind:?}");
        }
        assert!(build_space(&mesh, SpaceKind::Cg(3)).is_err());
        assert!(build_space(&mesh, SpaceKind::Rt(2)).is_err());
    }

    #[test]
    fn cg_reproduces_polynomials() {
        let mesh = demo_mesh();
        let linear = |p: [f64; 2]| 2.0 * p[0] - 3.0 * p[1] + 0.5;
        let quadratic = |p: [f64; 2]| p[0] * p[0] - p[0] * p[1] + 2.0 * p[1] * p[1] - 1.0;
        for (m, f) in [(1usize, &linear as &dyn Fn([f64; 2]) -> f64), (2, &quadratic)] {
            let space = build_space(&mesh, SpaceKind::Cg(m)).unwrap();
            let coeffs = interpolate_cg(&space, f).unwrap();
            for cell in 0..mesh.cells.len() {
                let geo = CellGeometry::new(&mesh, cell);
                for p in ref_points() {
                    let (v, _) = space.eval_scalar(&coeffs, cell, p);
                    assert!((v - f(geo.to_phys(p))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dg_projection_reproduces_polynomials() {
        let mesh = demo_mesh();
        let space0 = build_space(&mesh, SpaceKind::Dg(0)).unwrap();
        let c0 = project_dg(&space0, |_| 4.5).unwrap();
        assert!(c0.iter().all(|v| (v - 4.5).abs() < 1e-12));

        let space1 = build_space(&mesh, SpaceKind::Dg(1)).unwrap();
        let f = |p: [f64; 2]| 1.0 - 2.0 * p[0] + 0.75 * p[1];
        let c1 = project_dg(&space1, f).unwrap();
        for cell in 0..mesh.cells.len() {
            let geo = CellGeometry::new(&mesh, cell);
            for p in ref_points() {
                let (v, _) = space1.eval_scalar(&c1, cell, p);
                assert!((v - f(geo.to_phys(p))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rt_reproduces_in_space_fields() {
        let mesh = demo_mesh();
        // (a + c x, b + c y) spans the order-0 space on every cell and has a
        // continuous normal trace, so it lies in the global space.
        let f0 = |p: [f64; 2]| [1.0 + 0.5 * p[0], -2.0 + 0.5 * p[1]];
        let space0 = build_space(&mesh, SpaceKind::Rt(0)).unwrap();
        let coeffs0 = interpolate_rt(&space0, f0).unwrap();
        for cell in 0..mesh.cells.len() {
            let geo = CellGeometry::new(&mesh, cell);
            for p in ref_points() {
                let (v, d) = space0.eval_rt(&coeffs0, cell, p);
                let expect = f0(geo.to_phys(p));
                assert!((v[0] - expect[0]).abs() < 1e-12);
                assert!((v[1] - expect[1]).abs() < 1e-12);
                assert!((d - 1.0).abs() < 1e-12);
            }
        }

        // Full (P1)^2 plus the homogeneous tail d (x^2, x y).
        let f1 = |p: [f64; 2]| {
            [
                0.3 - p[0] + 2.0 * p[1] + 0.25 * p[0] * p[0],
                1.0 + 0.5 * p[0] - p[1] + 0.25 * p[0] * p[1],
            ]
        };
        let div1 = |p: [f64; 2]| -2.0 + 0.75 * p[0];
        let space1 = build_space(&mesh, SpaceKind::Rt(1)).unwrap();
        let coeffs1 = interpolate_rt(&space1, f1).unwrap();
        for cell in 0..mesh.cells.len() {
            let geo = CellGeometry::new(&mesh, cell);
            for p in ref_points() {
                let (v, d) = space1.eval_rt(&coeffs1, cell, p);
                let x = geo.to_phys(p);
                let expect = f1(x);
                assert!((v[0] - expect[0]).abs() < 1e-11);
                assert!((v[1] - expect[1]).abs() < 1e-11);
                assert!((d - div1(x)).abs() < 1e-11);
            }
        }
    }

    fn smooth_field(p: [f64; 2]) -> [f64; 2] {
        [
            (PI * p[0]).cos() * (PI * p[1]).sin() + 0.3 * p[0] * p[0],
            -(PI * p[0]).sin() * (PI * p[1]).cos(),
        ]
    }

    /// Divergence of [`smooth_field`]: the trigonometric parts cancel.
    fn smooth_div(p: [f64; 2]) -> f64 {
        0.6 * p[0]
    }

    #[test]
    fn rt_interpolation_commutes_with_divergence() {
        // div(interpolant) equals the DG projection of the divergence, cell
        // by cell and point by point. The data is transcendental, so the
        // moments carry quadrature error that the local solves amplify; a
        // structural failure of the commuting property would be O(h) here.
        let mesh = demo_mesh();
        for k in 0..=1 {
            let rt = build_space(&mesh, SpaceKind::Rt(k)).unwrap();
            let dg = build_space(&mesh, SpaceKind::Dg(k)).unwrap();
            let u = interpolate_rt(&rt, smooth_field).unwrap();
            let pd = project_dg(&dg, smooth_div).unwrap();
            for cell in 0..mesh.cells.len() {
                for p in ref_points() {
                    let (_, div_u) = rt.eval_rt(&u, cell, p);
                    let (proj, _) = dg.eval_scalar(&pd, cell, p);
                    assert!(
                        (div_u - proj).abs() < 1e-9,
                        "k={k}, cell {cell}: {div_u} vs {proj}"
                    );
                }
            }
        }
    }

    #[test]
    fn rt_facet_moments_match_data() {
        // Integrating the interpolant's normal trace (evaluated from the
        // incident cell) against the Legendre weights recovers the moments of
        // the data, edge by edge.
        let mesh = demo_mesh();
        let seg = segment_quadrature(12).unwrap();
        for k in 0..=1 {
            let rt = build_space(&mesh, SpaceKind::Rt(k)).unwrap();
            let u = interpolate_rt(&rt, smooth_field).unwrap();
            for e in 0..mesh.edges.len() {
                let (cell, _) = mesh.edge_cells[e];
                let (le, orient) = mesh.local_edge_in_cell(cell, e).unwrap();
                let (a, b, _, _) = crate::reference::rt::ref_edge(le);
                let [va, vb] = mesh.edges[e];
                let pa = mesh.vertices[va];
                let pb = mesh.vertices[vb];
                let n = mesh.edge_normal(e);
                let len = mesh.edge_length(e);
                for m in 0..rt_edge_moments(k) {
                    let mut acc = 0.0;
                    for (t, w) in seg.points.iter().zip(&seg.weights) {
                        // Global parameter t; local parameter flips when the
                        // cell traverses the edge backwards.
                        let tl = if orient == 1 { *t } else { 1.0 - *t };
                        let xhat = [a[0] + tl * (b[0] - a[0]), a[1] + tl * (b[1] - a[1])];
                        let (v, _) = rt.eval_rt(&u, cell, xhat);
                        let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                        let exact = smooth_field(x);
                        let jump = (v[0] - exact[0]) * n[0] + (v[1] - exact[1]) * n[1];
                        acc += w * jump * legendre_01(m, *t);
                    }
                    assert!(
                        (len * acc).abs() < 1e-11,
                        "k={k}, edge {e}, moment {m}: {}",
                        len * acc
                    );
                }
            }
        }
    }

    #[test]
    fn rt_normal_trace_continuous() {
        // The pointwise normal trace agrees from both sides of every
        // interior edge (not only in moments): H(div) conformity.
        let mesh = demo_mesh();
        for k in 0..=1 {
            let rt = build_space(&mesh, SpaceKind::Rt(k)).unwrap();
            let u = interpolate_rt(&rt, smooth_field).unwrap();
            for e in 0..mesh.edges.len() {
                let (c0, Some(c1)) = mesh.edge_cells[e] else { continue };
                let n = mesh.edge_normal(e);
                for t in [0.12, 0.5, 0.83] {
                    let mut traces = Vec::new();
                    for cell in [c0, c1] {
                        let (le, orient) = mesh.local_edge_in_cell(cell, e).unwrap();
                        let (a, b, _, _) = crate::reference::rt::ref_edge(le);
                        let tl = if orient == 1 { t } else { 1.0 - t };
                        let xhat = [a[0] + tl * (b[0] - a[0]), a[1] + tl * (b[1] - a[1])];
                        let (v, _) = rt.eval_rt(&u, cell, xhat);
                        traces.push(v[0] * n[0] + v[1] * n[1]);
                    }
                    assert!(
                        (traces[0] - traces[1]).abs() < 1e-12,
                        "k={k}, edge {e}, t={t}: {} vs {}",
                        traces[0],
                        traces[1]
                    );
                }
            }
        }
    }

    #[test]
    fn interpolation_convergence_rates() {
        // L2 interpolation errors drop at the expected order: k+1 for the
        // flux spaces, m+1 for the nodal spaces. Four levels, last two rates.
        let rule = quadrature(10).unwrap();
        let l2_vec = |space: &FeSpace, coeffs: &[f64]| {
            let mut acc = 0.0;
            for cell in 0..space.mesh.cells.len() {
                let geo = CellGeometry::new(&space.mesh, cell);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let (v, _) = space.eval_rt(coeffs, cell, *p);
                    let exact = smooth_field(geo.to_phys(*p));
                    acc += w * geo.det
                        * ((v[0] - exact[0]).powi(2) + (v[1] - exact[1]).powi(2));
                }
            }
            acc.sqrt()
        };
        let scalar_f = |p: [f64; 2]| (PI * p[0]).cos() * (2.0 * p[1]).exp();
        let l2_scalar = |space: &FeSpace, coeffs: &[f64]| {
            let mut acc = 0.0;
            for cell in 0..space.mesh.cells.len() {
                let geo = CellGeometry::new(&space.mesh, cell);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let (v, _) = space.eval_scalar(coeffs, cell, *p);
                    acc += w * geo.det * (v - scalar_f(geo.to_phys(*p))).powi(2);
                }
            }
            acc.sqrt()
        };

        let mut meshes = vec![Rc::new(
            build_rect_mesh(2, 1, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap(),
        )];
        for _ in 0..4 {
            let next = refine_uniform(meshes.last().unwrap()).unwrap();
            meshes.push(Rc::new(next));
        }
        // The coarse levels are preasymptotic for the oscillatory fields;
        // judge the order from the finest pair only.
        let last = meshes.len() - 1;

        for k in 0..=1 {
            let errors: Vec<f64> = meshes
                .iter()
                .map(|mesh| {
                    let space = build_space(mesh, SpaceKind::Rt(k)).unwrap();
                    let coeffs = interpolate_rt(&space, smooth_field).unwrap();
                    l2_vec(&space, &coeffs)
                })
                .collect();
            let rate = (errors[last - 1] / errors[last]).log2();
            assert!(
                (rate - (k as f64 + 1.0)).abs() < 0.1,
                "flux order {k}: rate {rate}, errors {errors:?}"
            );
        }
        for m in 1..=2 {
            let errors: Vec<f64> = meshes
                .iter()
                .map(|mesh| {
                    let space = build_space(mesh, SpaceKind::Cg(m)).unwrap();
                    let coeffs = interpolate_cg(&space, scalar_f).unwrap();
                    l2_scalar(&space, &coeffs)
                })
                .collect();
            let rate = (errors[last - 1] / errors[last]).log2();
            assert!(
                (rate - (m as f64 + 1.0)).abs() < 0.1,
                "nodal degree {m}: rate {rate}, errors {errors:?}"
            );
        }
    }

    #[test]
    fn cg_essential_sets_and_corner_overlap() {
        let mesh = demo_mesh();
        let space = build_space(&mesh, SpaceKind::Cg(1)).unwrap();
        let g = |p: [f64; 2]| p[0] + 10.0 * p[1];
        let (gamma, gv) = essential_dofs_cg(&space, EdgeTag::Gamma, g).unwrap();
        let (sigma, sv) = essential_dofs_cg(&space, EdgeTag::Sigma, g).unwrap();
        assert_eq!(gamma.len(), 7); // 5 on y=0 plus 3 on x=0, corner shared
        assert_eq!(sigma.len(), 7);
        for (dof, val) in gamma.iter().zip(&gv) {
            assert!((val - g(mesh.vertices[*dof])).abs() < 1e-14);
        }
        for (dof, val) in sigma.iter().zip(&sv) {
            assert!((val - g(mesh.vertices[*dof])).abs() < 1e-14);
        }
        // The two parts meet exactly at the corners (0,1) and (2,0).
        let shared: Vec<usize> = gamma
            .iter()
            .copied()
            .filter(|d| sigma.contains(d))
            .collect();
        assert_eq!(shared.len(), 2);
        for d in shared {
            let p = mesh.vertices[d];
            assert!(
                (p == [0.0, 1.0]) || (p == [2.0, 0.0]),
                "unexpected shared node {p:?}"
            );
        }

        // Degree 2 adds the six tagged edge midpoints per part.
        let space2 = build_space(&mesh, SpaceKind::Cg(2)).unwrap();
        let (gamma2, _) = essential_dofs_cg(&space2, EdgeTag::Gamma, g).unwrap();
        assert_eq!(gamma2.len(), 13);
    }

    #[test]
    fn rt_essential_sets_disjoint() {
        let mesh = demo_mesh();
        for k in 0..=1 {
            let space = build_space(&mesh, SpaceKind::Rt(k)).unwrap();
            let g = |_: [f64; 2]| [1.0, -2.0];
            let (gamma, _) = essential_dofs_rt(&space, EdgeTag::Gamma, g).unwrap();
            let (sigma, _) = essential_dofs_rt(&space, EdgeTag::Sigma, g).unwrap();
            assert_eq!(gamma.len(), 6 * (k + 1));
            assert_eq!(sigma.len(), 6 * (k + 1));
            assert!(gamma.iter().all(|d| !sigma.contains(d)));
        }
    }

    #[test]
    fn rt_essential_values_are_flux_moments() {
        // For a constant field the zeroth moment is (g . n) |e| and the
        // first-moment value vanishes.
        let mesh = demo_mesh();
        let space = build_space(&mesh, SpaceKind::Rt(1)).unwrap();
        let g = [3.0, -1.5];
        let (dofs, values) = essential_dofs_rt(&space, EdgeTag::Sigma, |_| g).unwrap();
        for (dof, val) in dofs.iter().zip(&values) {
            let e = dof / 2;
            let n = mesh.edge_normal(e);
            let expect = if dof % 2 == 0 {
                (g[0] * n[0] + g[1] * n[1]) * mesh.edge_length(e)
            } else {
                0.0
            };
            assert!((val - expect).abs() < 1e-13);
        }
    }
}
