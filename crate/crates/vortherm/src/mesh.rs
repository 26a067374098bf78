//! Structured triangular meshes of axis-aligned rectangles with boundary
//! tagging into a slip wall `Gamma` and an outflow part `Sigma`.
//!
//! Conventions used throughout the crate:
//! - cells store their three vertex indices in counterclockwise order;
//! - local edge `i` of a cell is the edge opposite local vertex `i`, traversed
//!   counterclockwise: `e0 = (v1,v2)`, `e1 = (v2,v0)`, `e2 = (v0,v1)`;
//! - global edges are stored with ascending vertex indices; `cell_edges`
//!   records for each cell the global edge index together with `+1` when the
//!   local traversal agrees with the global direction and `-1` otherwise.
//!
//! The plain-text dump format written by [`dump`] is line oriented:
//!
//! ```text
//! mesh <n_vertices> <n_edges> <n_cells>
//! v <x> <y>                 (one line per vertex, in index order)
//! c <v0> <v1> <v2>          (one line per cell)
//! e <v0> <v1> <tag>         (one line per edge; tag = interior|gamma|sigma)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Classification of a mesh edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTag {
    /// Edge shared by two cells.
    Interior,
    /// Boundary part with slip condition (u.n = 0) and zero vorticity trace.
    Gamma,
    /// Boundary part with natural conditions (u x n = 0, p = 0) and fixed T.
    Sigma,
}

impl EdgeTag {
    fn label(self) -> &'static str {
        match self {
            EdgeTag::Interior => "interior",
            EdgeTag::Gamma => "gamma",
            EdgeTag::Sigma => "sigma",
        }
    }
}

/// Axis-aligned rectangle (x0,x1) x (y0,y1).
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }
}

/// Conforming triangulation with oriented edges and boundary tags.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Vertex coordinates.
    pub vertices: Vec<[f64; 2]>,
    /// Vertex-index triples, counterclockwise.
    pub cells: Vec<[usize; 3]>,
    /// Vertex-index pairs with ascending indices.
    pub edges: Vec<[usize; 2]>,
    /// Per cell: global edge index and orientation sign for local edges 0,1,2.
    pub cell_edges: Vec<[(usize, i8); 3]>,
    /// Tag per edge (indexed like `edges`).
    pub boundary_tags: Vec<EdgeTag>,
    /// Incident cells per edge; boundary edges have exactly one.
    pub edge_cells: Vec<(usize, Option<usize>)>,
}

/// Counts and geometric summary returned by [`mesh_stats`].
#[derive(Debug, Clone, Copy)]
pub struct MeshStats {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub n_cells: usize,
    pub n_gamma_edges: usize,
    pub n_sigma_edges: usize,
    /// Largest cell diameter.
    pub h_max: f64,
    /// Sum of cell areas.
    pub total_area: f64,
}

/// Local edge `i` is opposite local vertex `i`; returns the local vertex
/// numbers (start, end) of its counterclockwise traversal.
pub const fn local_edge_vertices(local_edge: usize) -> (usize, usize) {
    match local_edge {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    }
}

impl Mesh {
    /// Signed area of a cell; positive for counterclockwise ordering.
    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cells[cell];
        let p = self.vertices[a];
        let q = self.vertices[b];
        let r = self.vertices[c];
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    }

    /// Diameter (longest edge) of a cell.
    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cells[cell];
        let d = |i: usize, j: usize| {
            let p = self.vertices[i];
            let q = self.vertices[j];
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        d(a, b).max(d(b, c)).max(d(c, a))
    }

    /// Midpoint of an edge.
    pub fn edge_midpoint(&self, edge: usize) -> [f64; 2] {
        let [a, b] = self.edges[edge];
        let p = self.vertices[a];
        let q = self.vertices[b];
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Length of an edge.
    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge];
        let p = self.vertices[a];
        let q = self.vertices[b];
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    /// Unit tangent of an edge along its global (ascending-index) direction.
    pub fn edge_tangent(&self, edge: usize) -> [f64; 2] {
        let [a, b] = self.edges[edge];
        let p = self.vertices[a];
        let q = self.vertices[b];
        let len = self.edge_length(edge);
        [(q[0] - p[0]) / len, (q[1] - p[1]) / len]
    }

    /// Unit normal of an edge, the global tangent rotated by -90 degrees.
    ///
    /// For a boundary edge this is the outward normal whenever the single
    /// incident cell sees the edge with positive orientation sign; the
    /// outward normal irrespective of sign is given by [`Mesh::outward_normal`].
    pub fn edge_normal(&self, edge: usize) -> [f64; 2] {
        let t = self.edge_tangent(edge);
        [t[1], -t[0]]
    }

    /// Outward unit normal of a boundary edge (pointing away from its cell).
    pub fn outward_normal(&self, edge: usize) -> [f64; 2] {
        let (cell, other) = self.edge_cells[edge];
        debug_assert!(other.is_none(), "outward normal requested for interior edge");
        let sign = self.cell_edges[cell]
            .iter()
            .find(|(e, _)| *e == edge)
            .map(|(_, s)| f64::from(*s))
            .unwrap_or(1.0);
        let n = self.edge_normal(edge);
        // The local counterclockwise traversal of a boundary edge has the
        // outward normal on its right; the stored sign relates local traversal
        // to the global edge direction.
        [sign * n[0], sign * n[1]]
    }

    /// Local index and orientation sign of `edge` within `cell`, if incident.
    pub fn local_edge_in_cell(&self, cell: usize, edge: usize) -> Option<(usize, i8)> {
        self.cell_edges[cell]
            .iter()
            .position(|(e, _)| *e == edge)
            .map(|le| (le, self.cell_edges[cell][le].1))
    }

    /// Indices of all edges carrying `tag`.
    pub fn tagged_edges(&self, tag: EdgeTag) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| self.boundary_tags[e] == tag)
            .collect()
    }
}

/// Build a structured triangulation of `rect` with `nx` by `ny` squares, each
/// split along the diagonal from its lower-left to its upper-right corner.
/// Boundary edges on the sides x=x0 and y=y0 are tagged `Gamma`, those on
/// x=x1 and y=y1 `Sigma`.
pub fn build_rect_mesh(nx: usize, ny: usize, rect: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput(format!(
            "cell counts must be positive, got nx={nx}, ny={ny}"
        )));
    }
    if !(rect.x0 < rect.x1) || !(rect.y0 < rect.y1) {
        return Err(Error::InvalidInput(format!(
            "degenerate rectangle ({}, {}) x ({}, {})",
            rect.x0, rect.x1, rect.y0, rect.y1
        )));
    }

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = rect.x0 + (rect.x1 - rect.x0) * (i as f64) / (nx as f64);
            let y = rect.y0 + (rect.y1 - rect.y0) * (j as f64) / (ny as f64);
            vertices.push([x, y]);
        }
    }

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = vid(i, j);
            let b = vid(i + 1, j);
            let c = vid(i + 1, j + 1);
            let d = vid(i, j + 1);
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }

    let mesh = assemble_topology(vertices, cells)?;
    tag_boundary(mesh, gamma_sigma_classifier(rect))
}

/// Classifier mapping boundary-edge midpoints to tags for `rect`: `Gamma` on
/// the sides x=x0 and y=y0, `Sigma` on x=x1 and y=y1, with tolerance 1e-12.
pub fn gamma_sigma_classifier(rect: Rect) -> impl Fn([f64; 2]) -> EdgeTag {
    const TOL: f64 = 1e-12;
    move |m: [f64; 2]| {
        if (m[0] - rect.x0).abs() <= TOL || (m[1] - rect.y0).abs() <= TOL {
            EdgeTag::Gamma
        } else if (m[0] - rect.x1).abs() <= TOL || (m[1] - rect.y1).abs() <= TOL {
            EdgeTag::Sigma
        } else {
            EdgeTag::Interior
        }
    }
}

/// Retag all boundary edges of `mesh` using `classifier` applied to edge
/// midpoints. The classifier must return `Gamma` or `Sigma` for every
/// boundary-edge midpoint; interior edges are untouched.
pub fn tag_boundary(mut mesh: Mesh, classifier: impl Fn([f64; 2]) -> EdgeTag) -> Result<Mesh> {
    for e in 0..mesh.edges.len() {
        if mesh.edge_cells[e].1.is_some() {
            mesh.boundary_tags[e] = EdgeTag::Interior;
            continue;
        }
        let tag = classifier(mesh.edge_midpoint(e));
        if tag == EdgeTag::Interior {
            let m = mesh.edge_midpoint(e);
            return Err(Error::InvalidInput(format!(
                "boundary edge midpoint ({}, {}) classified as interior",
                m[0], m[1]
            )));
        }
        mesh.boundary_tags[e] = tag;
    }
    Ok(mesh)
}

/// Red refinement: every triangle is split into four congruent children by
/// connecting the edge midpoints. Boundary tags are inherited from the parent
/// edges; cell count quadruples and all diameters halve.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let n_old = mesh.vertices.len();
    let mut vertices = mesh.vertices.clone();
    vertices.extend((0..mesh.edges.len()).map(|e| mesh.edge_midpoint(e)));

    let mut cells = Vec::with_capacity(4 * mesh.cells.len());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let [v0, v1, v2] = *cell;
        // Midpoint of local edge i (opposite local vertex i).
        let m = [
            n_old + mesh.cell_edges[c][0].0,
            n_old + mesh.cell_edges[c][1].0,
            n_old + mesh.cell_edges[c][2].0,
        ];
        cells.push([v0, m[2], m[1]]);
        cells.push([m[2], v1, m[0]]);
        cells.push([m[1], m[0], v2]);
        cells.push([m[0], m[1], m[2]]);
    }

    let mut refined = assemble_topology(vertices, cells)?;

    // Sub-edges of a parent edge connect one of its endpoints to its midpoint;
    // they inherit the parent tag. All other new edges are interior.
    let mut inherited: BTreeMap<[usize; 2], EdgeTag> = BTreeMap::new();
    for (e, &[a, b]) in mesh.edges.iter().enumerate() {
        let tag = mesh.boundary_tags[e];
        if tag == EdgeTag::Interior {
            continue;
        }
        let m = n_old + e;
        inherited.insert([a.min(m), a.max(m)], tag);
        inherited.insert([b.min(m), b.max(m)], tag);
    }
    for (e, pair) in refined.edges.iter().enumerate() {
        if let Some(&tag) = inherited.get(pair) {
            refined.boundary_tags[e] = tag;
        }
    }

    for (e, tag) in refined.boundary_tags.iter().enumerate() {
        let is_boundary = refined.edge_cells[e].1.is_none();
        if is_boundary && *tag == EdgeTag::Interior {
            return Err(Error::InvalidInput(
                "refinement produced an untagged boundary edge".into(),
            ));
        }
    }
    Ok(refined)
}

/// Counts, boundary-tag totals, largest diameter, and total area.
pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    let mut h_max: f64 = 0.0;
    let mut total_area = 0.0;
    for c in 0..mesh.cells.len() {
        h_max = h_max.max(mesh.cell_diameter(c));
        total_area += mesh.cell_area(c);
    }
    MeshStats {
        n_vertices: mesh.vertices.len(),
        n_edges: mesh.edges.len(),
        n_cells: mesh.cells.len(),
        n_gamma_edges: mesh.tagged_edges(EdgeTag::Gamma).len(),
        n_sigma_edges: mesh.tagged_edges(EdgeTag::Sigma).len(),
        h_max,
        total_area,
    }
}

/// Serialize `mesh` in the plain-text format documented in the module docs.
pub fn dump(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mesh {} {} {}",
        mesh.vertices.len(),
        mesh.edges.len(),
        mesh.cells.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {}", v[0], v[1]);
    }
    for c in &mesh.cells {
        let _ = writeln!(out, "c {} {} {}", c[0], c[1], c[2]);
    }
    for (e, pair) in mesh.edges.iter().enumerate() {
        let _ = writeln!(
            out,
            "e {} {} {}",
            pair[0],
            pair[1],
            mesh.boundary_tags[e].label()
        );
    }
    out
}

/// Derive edges, orientation signs, and incidence from vertices and cells.
fn assemble_topology(vertices: Vec<[f64; 2]>, cells: Vec<[usize; 3]>) -> Result<Mesh> {
    for (c, cell) in cells.iter().enumerate() {
        let p = vertices[cell[0]];
        let q = vertices[cell[1]];
        let r = vertices[cell[2]];
        let area2 = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
        if area2 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "cell {c} is degenerate or not counterclockwise"
            )));
        }
    }

    // Deterministic global edge numbering: lexicographic by vertex pair.
    let mut edge_set: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for cell in &cells {
        for le in 0..3 {
            let (s, e) = local_edge_vertices(le);
            let a = cell[s];
            let b = cell[e];
            edge_set.entry([a.min(b), a.max(b)]).or_insert(0);
        }
    }
    let edges: Vec<[usize; 2]> = edge_set.keys().copied().collect();
    for (idx, pair) in edges.iter().enumerate() {
        *edge_set.get_mut(pair).unwrap() = idx;
    }

    let mut cell_edges = Vec::with_capacity(cells.len());
    let mut edge_cells: Vec<(usize, Option<usize>)> = vec![(usize::MAX, None); edges.len()];
    for (c, cell) in cells.iter().enumerate() {
        let mut entry = [(0usize, 0i8); 3];
        for le in 0..3 {
            let (s, e) = local_edge_vertices(le);
            let a = cell[s];
            let b = cell[e];
            let idx = edge_set[&[a.min(b), a.max(b)]];
            let sign = if a < b { 1 } else { -1 };
            entry[le] = (idx, sign);
            let slot = &mut edge_cells[idx];
            if slot.0 == usize::MAX {
                slot.0 = c;
            } else if slot.1.is_none() {
                slot.1 = Some(c);
            } else {
                return Err(Error::InvalidInput(format!(
                    "edge {idx} shared by more than two cells"
                )));
            }
        }
        cell_edges.push(entry);
    }

    let boundary_tags = vec![EdgeTag::Interior; edges.len()];
    Ok(Mesh {
        vertices,
        cells,
        edges,
        cell_edges,
        boundary_tags,
        edge_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square_mesh() -> Mesh {
        build_rect_mesh(1, 1, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap()
    }

    fn demo_mesh() -> Mesh {
        build_rect_mesh(4, 2, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap()
    }

    fn check_invariants(mesh: &Mesh) {
        for c in 0..mesh.cells.len() {
            assert!(mesh.cell_area(c) > 0.0, "cell {c} not counterclockwise");
        }
        let stats = mesh_stats(mesh);
        let euler = stats.n_vertices as i64 - stats.n_edges as i64 + stats.n_cells as i64;
        assert_eq!(euler, 1);
        for (e, &(_, second)) in mesh.edge_cells.iter().enumerate() {
            let is_boundary = second.is_none();
            let tagged = mesh.boundary_tags[e] != EdgeTag::Interior;
            assert_eq!(is_boundary, tagged, "edge {e} tag/incidence mismatch");
        }
        // Interior edges are seen with opposite signs from their two cells.
        for (e, &(c0, c1)) in mesh.edge_cells.iter().enumerate() {
            let Some(c1) = c1 else { continue };
            let sign_in = |c: usize| {
                mesh.cell_edges[c]
                    .iter()
                    .find(|(idx, _)| *idx == e)
                    .map(|(_, s)| *s)
                    .unwrap()
            };
            assert_eq!(sign_in(c0), -sign_in(c1), "edge {e} signs not opposite");
        }
    }

    #[test]
    fn smallest_mesh_counts() {
        let mesh = unit_square_mesh();
        assert_eq!(mesh.cells.len(), 2);
        assert_eq!(mesh.edges.len(), 5);
        assert_eq!(mesh.vertices.len(), 4);
        check_invariants(&mesh);
    }

    #[test]
    fn demo_mesh_counts_and_h() {
        let mesh = demo_mesh();
        let stats = mesh_stats(&mesh);
        assert_eq!(stats.n_cells, 16);
        assert_eq!(stats.n_edges, 30);
        assert_eq!(stats.n_vertices, 15);
        assert!((stats.h_max - 0.5 * 2.0_f64.sqrt()).abs() < 1e-14);
        assert!((stats.total_area - 2.0).abs() < 1e-14);
        check_invariants(&mesh);
    }

    #[test]
    fn demo_mesh_boundary_tags() {
        let mesh = demo_mesh();
        let stats = mesh_stats(&mesh);
        assert_eq!(stats.n_gamma_edges, 6);
        assert_eq!(stats.n_sigma_edges, 6);
        assert_eq!(stats.n_gamma_edges + stats.n_sigma_edges, 12);
    }

    #[test]
    fn all_gamma_classifier() {
        let mesh = tag_boundary(demo_mesh(), |_| EdgeTag::Gamma).unwrap();
        let stats = mesh_stats(&mesh);
        assert_eq!(stats.n_gamma_edges, 12);
        assert_eq!(stats.n_sigma_edges, 0);
    }

    #[test]
    fn classifier_returning_interior_is_rejected() {
        let err = tag_boundary(demo_mesh(), |_| EdgeTag::Interior).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(build_rect_mesh(0, 1, Rect::new(0.0, 1.0, 0.0, 1.0)).is_err());
        assert!(build_rect_mesh(1, 1, Rect::new(1.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn refinement_quadruples_and_halves() {
        let mesh = unit_square_mesh();
        let fine = refine_uniform(&mesh).unwrap();
        assert_eq!(fine.cells.len(), 8);
        let (s0, s1) = (mesh_stats(&mesh), mesh_stats(&fine));
        assert!((s1.h_max - 0.5 * s0.h_max).abs() < 1e-14);
        assert!(((s1.total_area - s0.total_area) / s0.total_area).abs() < 1e-12);
        check_invariants(&fine);
    }

    #[test]
    fn refinement_inherits_tags() {
        let fine = refine_uniform(&demo_mesh()).unwrap();
        let stats = mesh_stats(&fine);
        assert_eq!(stats.n_gamma_edges, 12);
        assert_eq!(stats.n_sigma_edges, 12);
        check_invariants(&fine);
        let finer = refine_uniform(&fine).unwrap();
        check_invariants(&finer);
        assert_eq!(mesh_stats(&finer).n_gamma_edges, 24);
    }

    #[test]
    fn dump_layout() {
        let mesh = unit_square_mesh();
        let text = dump(&mesh);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "mesh 4 5 2");
        assert_eq!(lines.len(), 1 + 4 + 2 + 5);
        assert!(lines[1].starts_with("v "));
        assert!(lines[5].starts_with("c "));
        let interior: Vec<&&str> = lines.iter().filter(|l| l.ends_with("interior")).collect();
        assert_eq!(interior.len(), 1, "unit square has one interior edge");
    }

    #[test]
    fn outward_normals_point_outside() {
        let mesh = demo_mesh();
        for e in mesh.tagged_edges(EdgeTag::Gamma) {
            let n = mesh.outward_normal(e);
            let m = mesh.edge_midpoint(e);
            // Gamma is x=0 or y=0; outward means negative x or y component.
            if m[0].abs() < 1e-12 {
                assert!(n[0] < -0.99);
            } else {
                assert!(n[1] < -0.99);
            }
        }
        for e in mesh.tagged_edges(EdgeTag::Sigma) {
            let n = mesh.outward_normal(e);
            let m = mesh.edge_midpoint(e);
            if (m[0] - 2.0).abs() < 1e-12 {
                assert!(n[0] > 0.99);
            } else {
                assert!(n[1] > 0.99);
            }
        }
    }

    proptest! {
        #[test]
        fn structured_counts(nx in 1usize..7, ny in 1usize..7) {
            let mesh = build_rect_mesh(nx, ny, Rect::new(-1.0, 3.0, 0.5, 2.5)).unwrap();
            let stats = mesh_stats(&mesh);
            prop_assert_eq!(stats.n_vertices, (nx + 1) * (ny + 1));
            prop_assert_eq!(stats.n_cells, 2 * nx * ny);
            prop_assert_eq!(stats.n_edges, nx * (ny + 1) + (nx + 1) * ny + nx * ny);
            prop_assert!((stats.total_area - 8.0).abs() < 1e-12);
            check_invariants(&mesh);
        }
    }
}
