//! Assembly of the discrete coupled system.
//!
//! The unknown vector stacks four fields in the order vorticity, velocity,
//! pressure, temperature (see [`DofLayout`]). The weak system consists of
//! four rows, tested in turn with vorticity, velocity, pressure, and
//! temperature test functions:
//!
//! ```text
//! (w, z)           - s (curl z, u)                                = L_w(z)
//! -s (curl w, v)   - d (u, v) + (p, div v) - r (T - T_ref)(g, v)  = L_u(v)
//! (div u, q)                                                      = 0
//! s0 (T, S) + a (grad T, grad S) + (u . grad T, S) - e (|u|^2, S) = L_T(S)
//! ```
//!
//! with `s = sqrt(brinkman viscosity)`, `d = viscosity / permeability`,
//! `r = density * expansion`, `e = viscosity / (permeability * heat_capacity
//! * density)`. The velocity row is the *negated* momentum balance, which
//! makes the upper-left two-by-two block symmetric; volume forces therefore
//! enter the velocity-row load with a minus sign (see
//! [`assemble_volume_loads`]).
//!
//! Essential conditions (vorticity and normal velocity on the wall part,
//! temperature on the outflow part) are imposed after assembly by the
//! solver; the natural conditions on the complementary parts contribute the
//! boundary loads of [`assemble_natural_boundary_loads`].

use crate::mesh::EdgeTag;
use crate::reference::geometry::CellGeometry;
use crate::reference::quad::{quadrature, segment_quadrature};
use crate::reference::rt::RtBasis;
use crate::reference::scalar::eval_scalar_basis;
use crate::spaces::{FeSpace, SpaceKind, SpaceSet};
use crate::{Error, Result};

/// Quadrature degree for bilinear and trilinear forms; exact for every form
/// that appears at the supported discretization orders.
pub const ASSEMBLY_DEGREE: usize = 8;
/// Quadrature degree for volume and boundary loads with non-polynomial data.
pub const LOAD_DEGREE: usize = 10;

/// Physical and model coefficients.
#[derive(Debug, Clone, Copy)]
pub struct ModelParams {
    /// Fluid viscosity; divided by `permeability` it gives the drag.
    pub viscosity: f64,
    /// Permeability of the porous matrix.
    pub permeability: f64,
    /// Effective (Brinkman) viscosity; its square root scales the vorticity.
    pub brinkman: f64,
    /// Fluid density.
    pub density: f64,
    /// Specific heat capacity.
    pub heat_capacity: f64,
    /// Thermal diffusivity.
    pub diffusivity: f64,
    /// Zeroth-order reaction coefficient in the energy balance.
    pub reaction: f64,
    /// Thermal expansion coefficient driving buoyancy.
    pub expansion: f64,
    /// Reference temperature around which buoyancy is linearized.
    pub t_ref: f64,
    /// Gravitational acceleration vector.
    pub gravity: [f64; 2],
}

impl ModelParams {
    /// All coefficients one, reference temperature zero, gravity (0, -1).
    pub fn unit() -> Self {
        ModelParams {
            viscosity: 1.0,
            permeability: 1.0,
            brinkman: 1.0,
            density: 1.0,
            heat_capacity: 1.0,
            diffusivity: 1.0,
            reaction: 1.0,
            expansion: 1.0,
            t_ref: 0.0,
            gravity: [0.0, -1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("viscosity", self.viscosity),
            ("permeability", self.permeability),
            ("brinkman viscosity", self.brinkman),
            ("density", self.density),
            ("heat capacity", self.heat_capacity),
            ("diffusivity", self.diffusivity),
            ("reaction coefficient", self.reaction),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if !(self.expansion >= 0.0) || !self.t_ref.is_finite() {
            return Err(Error::InvalidInput(
                "expansion must be nonnegative and reference temperature finite".into(),
            ));
        }
        Ok(())
    }

    /// Drag coefficient `viscosity / permeability`.
    pub fn drag(&self) -> f64 {
        self.viscosity / self.permeability
    }

    /// Square root of the Brinkman viscosity.
    pub fn sqrt_brinkman(&self) -> f64 {
        self.brinkman.sqrt()
    }

    /// Buoyancy coefficient `density * expansion`.
    pub fn buoyancy(&self) -> f64 {
        self.density * self.expansion
    }

    /// Viscous dissipation coefficient
    /// `viscosity / (permeability * heat_capacity * density)`.
    pub fn dissipation(&self) -> f64 {
        self.viscosity / (self.permeability * self.heat_capacity * self.density)
    }
}

/// Sparse matrix in canonical triplet form: entries sorted column-major with
/// unique positions. Built through [`SparseBuilder`]; the deterministic
/// ordering makes assembly reproducible run to run.
#[derive(Debug, Clone)]
pub struct SparseMat {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

/// Triplet accumulator for [`SparseMat`].
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseBuilder {
            nrows,
            ncols,
            triplets: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.triplets.push((row, col, value));
    }

    /// Add `factor * block` at offset (`row_off`, `col_off`).
    pub fn add_block(&mut self, block: &SparseMat, row_off: usize, col_off: usize, factor: f64) {
        for &(i, j, v) in &block.entries {
            self.push(row_off + i, col_off + j, factor * v);
        }
    }

    /// Add `factor * block^T` at offset (`row_off`, `col_off`).
    pub fn add_block_transposed(
        &mut self,
        block: &SparseMat,
        row_off: usize,
        col_off: usize,
        factor: f64,
    ) {
        for &(i, j, v) in &block.entries {
            self.push(row_off + j, col_off + i, factor * v);
        }
    }

    /// Sort column-major and merge duplicate positions.
    pub fn finish(mut self) -> SparseMat {
        self.triplets
            .sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(self.triplets.len());
        for (i, j, v) in self.triplets {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => entries.push((i, j, v)),
            }
        }
        SparseMat {
            nrows: self.nrows,
            ncols: self.ncols,
            entries,
        }
    }
}

impl SparseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMat {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `y += factor * A x`.
    pub fn mul_add(&self, x: &[f64], y: &mut [f64], factor: f64) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for &(i, j, v) in &self.entries {
            y[i] += factor * v * x[j];
        }
    }

    /// `y += factor * A^T x`.
    pub fn mul_add_transposed(&self, x: &[f64], y: &mut [f64], factor: f64) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for &(i, j, v) in &self.entries {
            y[j] += factor * v * x[i];
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_add(x, &mut y, 1.0);
        y
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.2 *= factor;
        }
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::<f64>::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    /// Eliminate constrained rows and columns: constrained columns move
    /// `value * column` to the right-hand side of free rows, constrained rows
    /// become identity rows with `rhs = value`.
    pub fn eliminate(&self, rhs: &mut [f64], dofs: &[usize], values: &[f64]) -> SparseMat {
        debug_assert_eq!(self.nrows, self.ncols);
        debug_assert_eq!(rhs.len(), self.nrows);
        let mut constrained = vec![false; self.nrows];
        let mut value_of = vec![0.0; self.nrows];
        for (d, v) in dofs.iter().zip(values) {
            constrained[*d] = true;
            value_of[*d] = *v;
        }
        let mut kept = Vec::with_capacity(self.entries.len() + dofs.len());
        for &(i, j, v) in &self.entries {
            match (constrained[i], constrained[j]) {
                (false, false) => kept.push((i, j, v)),
                (false, true) => rhs[i] -= v * value_of[j],
                (true, _) => {}
            }
        }
        for &d in dofs {
            kept.push((d, d, 1.0));
            rhs[d] = value_of[d];
        }
        kept.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        SparseMat {
            nrows: self.nrows,
            ncols: self.ncols,
            entries: kept,
        }
    }
}

/// Field offsets in the stacked unknown vector.
#[derive(Debug, Clone, Copy)]
pub struct DofLayout {
    pub n_omega: usize,
    pub n_vel: usize,
    pub n_pres: usize,
    pub n_temp: usize,
}

impl DofLayout {
    pub fn new(spaces: &SpaceSet) -> Self {
        DofLayout {
            n_omega: spaces.omega.ndofs,
            n_vel: spaces.vel.ndofs,
            n_pres: spaces.pres.ndofs,
            n_temp: spaces.temp.ndofs,
        }
    }

    pub fn omega_off(&self) -> usize {
        0
    }
    pub fn vel_off(&self) -> usize {
        self.n_omega
    }
    pub fn pres_off(&self) -> usize {
        self.n_omega + self.n_vel
    }
    pub fn temp_off(&self) -> usize {
        self.n_omega + self.n_vel + self.n_pres
    }
    pub fn total(&self) -> usize {
        self.n_omega + self.n_vel + self.n_pres + self.n_temp
    }

    /// Split a stacked vector into the four field slices.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        debug_assert_eq!(x.len(), self.total());
        let (omega, rest) = x.split_at(self.n_omega);
        let (vel, rest) = rest.split_at(self.n_vel);
        let (pres, temp) = rest.split_at(self.n_pres);
        (omega, vel, pres, temp)
    }

    /// Stack four per-field vectors.
    pub fn stack(&self, omega: &[f64], vel: &[f64], pres: &[f64], temp: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.total());
        x.extend_from_slice(omega);
        x.extend_from_slice(vel);
        x.extend_from_slice(pres);
        x.extend_from_slice(temp);
        x
    }
}

/// Right-hand sides of the four weak rows (volume plus natural-boundary
/// contributions), one vector per field's test space.
#[derive(Debug, Clone)]
pub struct Loads {
    pub omega: Vec<f64>,
    pub vel: Vec<f64>,
    pub pres: Vec<f64>,
    pub temp: Vec<f64>,
}

impl Loads {
    pub fn zeros(layout: &DofLayout) -> Self {
        Loads {
            omega: vec![0.0; layout.n_omega],
            vel: vec![0.0; layout.n_vel],
            pres: vec![0.0; layout.n_pres],
            temp: vec![0.0; layout.n_temp],
        }
    }

    pub fn add(&mut self, other: &Loads) {
        let pairs = [
            (&mut self.omega, &other.omega),
            (&mut self.vel, &other.vel),
            (&mut self.pres, &other.pres),
            (&mut self.temp, &other.temp),
        ];
        for (mine, theirs) in pairs {
            debug_assert_eq!(mine.len(), theirs.len());
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }
}

/// Tabulated scalar basis (values and physical-gradient precursors) at the
/// points of a rule, for one space.
struct ScalarTab {
    degree: usize,
    values: Vec<Vec<f64>>,
    ref_grads: Vec<Vec<[f64; 2]>>,
}

impl ScalarTab {
    fn new(space: &FeSpace, points: &[[f64; 2]]) -> Self {
        let degree = match space.kind {
            SpaceKind::Cg(m) | SpaceKind::Dg(m) => m,
            SpaceKind::Rt(_) => panic!("scalar tabulation of a vector space"),
        };
        let mut values = Vec::with_capacity(points.len());
        let mut ref_grads = Vec::with_capacity(points.len());
        for p in points {
            let (v, g) = eval_scalar_basis(degree, *p).expect("supported degree");
            values.push(v);
            ref_grads.push(g);
        }
        ScalarTab {
            degree,
            values,
            ref_grads,
        }
    }

    fn dim(&self) -> usize {
        crate::reference::scalar::scalar_dim(self.degree)
    }
}

/// Tabulated RT basis (reference values and divergences) at rule points.
struct RtTab {
    values: Vec<Vec<[f64; 2]>>,
    divs: Vec<Vec<f64>>,
    dim: usize,
}

impl RtTab {
    fn new(space: &FeSpace, points: &[[f64; 2]]) -> Self {
        let SpaceKind::Rt(k) = space.kind else {
            panic!("vector tabulation of a scalar space")
        };
        let basis = RtBasis::new(k).expect("supported order");
        let mut values = Vec::with_capacity(points.len());
        let mut divs = Vec::with_capacity(points.len());
        for p in points {
            let (v, d) = basis.eval(*p);
            values.push(v);
            divs.push(d);
        }
        RtTab {
            values,
            divs,
            dim: basis.dim(),
        }
    }
}

/// The velocity-independent matrix blocks of the flow subsystem.
#[derive(Debug, Clone)]
pub struct BrinkmanBlocks {
    /// Vorticity mass matrix (vorticity x vorticity).
    pub vort_mass: SparseMat,
    /// `-sqrt(brinkman) (curl z_i, v_j)` (vorticity x velocity); its
    /// transpose couples vorticity into the velocity row.
    pub curl_couple: SparseMat,
    /// Drag mass matrix `drag (u_j, v_i)` (velocity x velocity).
    pub drag: SparseMat,
    /// `(q_i, div v_j)` (pressure x velocity).
    pub div_couple: SparseMat,
}

/// Assemble the constant blocks of the flow subsystem.
pub fn assemble_brinkman_blocks(spaces: &SpaceSet, params: &ModelParams) -> Result<BrinkmanBlocks> {
    params.validate()?;
    let rule = quadrature(ASSEMBLY_DEGREE)?;
    let mesh = &spaces.mesh;
    let om_tab = ScalarTab::new(&spaces.omega, &rule.points);
    let vel_tab = RtTab::new(&spaces.vel, &rule.points);
    let pres_tab = ScalarTab::new(&spaces.pres, &rule.points);
    let n_om = om_tab.dim();
    let n_vel = vel_tab.dim;
    let n_pres = pres_tab.dim();
    let sqrt_b = params.sqrt_brinkman();
    let drag_coeff = params.drag();

    let mut vort_mass = SparseBuilder::new(spaces.omega.ndofs, spaces.omega.ndofs);
    let mut curl_couple = SparseBuilder::new(spaces.omega.ndofs, spaces.vel.ndofs);
    let mut drag = SparseBuilder::new(spaces.vel.ndofs, spaces.vel.ndofs);
    let mut div_couple = SparseBuilder::new(spaces.pres.ndofs, spaces.vel.ndofs);

    let mut vel_phys = vec![[0.0; 2]; n_vel];
    let mut div_phys = vec![0.0; n_vel];
    let mut curl_phys = vec![[0.0; 2]; n_om];

    for cell in 0..mesh.cells.len() {
        let geo = CellGeometry::new(mesh, cell);
        let om_dofs = &spaces.omega.cell_dofs[cell];
        let vel_dofs = &spaces.vel.cell_dofs[cell];
        let vel_signs = &spaces.vel.cell_signs[cell];
        let pres_dofs = &spaces.pres.cell_dofs[cell];

        let mut local_mass = vec![0.0; n_om * n_om];
        let mut local_curl = vec![0.0; n_om * n_vel];
        let mut local_drag = vec![0.0; n_vel * n_vel];
        let mut local_div = vec![0.0; n_pres * n_vel];

        for (q, w) in rule.weights.iter().enumerate() {
            let dx = w * geo.det;
            for j in 0..n_vel {
                vel_phys[j] = geo.piola_val(vel_tab.values[q][j]);
                vel_phys[j][0] *= vel_signs[j];
                vel_phys[j][1] *= vel_signs[j];
                div_phys[j] = vel_signs[j] * geo.piola_div(vel_tab.divs[q][j]);
            }
            for i in 0..n_om {
                let g = geo.grad_to_phys(om_tab.ref_grads[q][i]);
                // Vector curl of a scalar: rotate the gradient.
                curl_phys[i] = [g[1], -g[0]];
            }
            for i in 0..n_om {
                let zi = om_tab.values[q][i];
                for j in 0..n_om {
                    local_mass[i * n_om + j] += dx * zi * om_tab.values[q][j];
                }
                for j in 0..n_vel {
                    local_curl[i * n_vel + j] -= dx
                        * sqrt_b
                        * (curl_phys[i][0] * vel_phys[j][0] + curl_phys[i][1] * vel_phys[j][1]);
                }
            }
            for i in 0..n_vel {
                for j in 0..n_vel {
                    local_drag[i * n_vel + j] += dx
                        * drag_coeff
                        * (vel_phys[i][0] * vel_phys[j][0] + vel_phys[i][1] * vel_phys[j][1]);
                }
            }
            for i in 0..n_pres {
                let qi = pres_tab.values[q][i];
                for j in 0..n_vel {
                    local_div[i * n_vel + j] += dx * qi * div_phys[j];
                }
            }
        }

        for i in 0..n_om {
            for j in 0..n_om {
                vort_mass.push(om_dofs[i], om_dofs[j], local_mass[i * n_om + j]);
            }
            for j in 0..n_vel {
                curl_couple.push(om_dofs[i], vel_dofs[j], local_curl[i * n_vel + j]);
            }
        }
        for i in 0..n_vel {
            for j in 0..n_vel {
                drag.push(vel_dofs[i], vel_dofs[j], local_drag[i * n_vel + j]);
            }
        }
        for i in 0..n_pres {
            for j in 0..n_vel {
                div_couple.push(pres_dofs[i], vel_dofs[j], local_div[i * n_vel + j]);
            }
        }
    }

    Ok(BrinkmanBlocks {
        vort_mass: vort_mass.finish(),
        curl_couple: curl_couple.finish(),
        drag: drag.finish(),
        div_couple: div_couple.finish(),
    })
}

/// Buoyancy coupling, affinely split: the matrix applies
/// `density * expansion * (T_j, g . v_i)` to temperature coefficients, the
/// vector holds the constant part `-density * expansion * t_ref (g . v_i)`.
pub fn assemble_buoyancy(spaces: &SpaceSet, params: &ModelParams) -> Result<(SparseMat, Vec<f64>)> {
    params.validate()?;
    let rule = quadrature(ASSEMBLY_DEGREE)?;
    let mesh = &spaces.mesh;
    let vel_tab = RtTab::new(&spaces.vel, &rule.points);
    let temp_tab = ScalarTab::new(&spaces.temp, &rule.points);
    let n_vel = vel_tab.dim;
    let n_temp = temp_tab.dim();
    let coeff = params.buoyancy();
    let g = params.gravity;

    let mut mat = SparseBuilder::new(spaces.vel.ndofs, spaces.temp.ndofs);
    let mut fix = vec![0.0; spaces.vel.ndofs];

    for cell in 0..mesh.cells.len() {
        let geo = CellGeometry::new(mesh, cell);
        let vel_dofs = &spaces.vel.cell_dofs[cell];
        let vel_signs = &spaces.vel.cell_signs[cell];
        let temp_dofs = &spaces.temp.cell_dofs[cell];
        let mut local = vec![0.0; n_vel * n_temp];
        let mut local_fix = vec![0.0; n_vel];
        for (q, w) in rule.weights.iter().enumerate() {
            let dx = w * geo.det;
            for i in 0..n_vel {
                let v = geo.piola_val(vel_tab.values[q][i]);
                let gv = vel_signs[i] * (g[0] * v[0] + g[1] * v[1]);
                local_fix[i] -= dx * coeff * params.t_ref * gv;
                for j in 0..n_temp {
                    local[i * n_temp + j] += dx * coeff * temp_tab.values[q][j] * gv;
                }
            }
        }
        for i in 0..n_vel {
            fix[vel_dofs[i]] += local_fix[i];
            for j in 0..n_temp {
                mat.push(vel_dofs[i], temp_dofs[j], local[i * n_temp + j]);
            }
        }
    }
    Ok((mat.finish(), fix))
}

/// Diffusion-reaction part of the energy operator:
/// `reaction (T_j, S_i) + diffusivity (grad T_j, grad S_i)`.
pub fn assemble_diffusion_reaction(spaces: &SpaceSet, params: &ModelParams) -> Result<SparseMat> {
    params.validate()?;
    let rule = quadrature(ASSEMBLY_DEGREE)?;
    let mesh = &spaces.mesh;
    let tab = ScalarTab::new(&spaces.temp, &rule.points);
    let n = tab.dim();
    let mut builder = SparseBuilder::new(spaces.temp.ndofs, spaces.temp.ndofs);
    let mut grads = vec![[0.0; 2]; n];
    for cell in 0..mesh.cells.len() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &spaces.temp.cell_dofs[cell];
        let mut local = vec![0.0; n * n];
        for (q, w) in rule.weights.iter().enumerate() {
            let dx = w * geo.det;
            for i in 0..n {
                grads[i] = geo.grad_to_phys(tab.ref_grads[q][i]);
            }
            for i in 0..n {
                for j in 0..n {
                    local[i * n + j] += dx
                        * (params.reaction * tab.values[q][i] * tab.values[q][j]
                            + params.diffusivity
                                * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                builder.push(dofs[i], dofs[j], local[i * n + j]);
            }
        }
    }
    Ok(builder.finish())
}

/// Convection matrix `((u_h . grad T_j), S_i)` for the given discrete
/// velocity.
pub fn assemble_convection(spaces: &SpaceSet, vel: &[f64]) -> Result<SparseMat> {
    if vel.len() != spaces.vel.ndofs {
        return Err(Error::DimensionMismatch {
            what: "velocity coefficients",
            expected: spaces.vel.ndofs,
            got: vel.len(),
        });
    }
    let rule = quadrature(ASSEMBLY_DEGREE)?;
    let mesh = &spaces.mesh;
    let vel_tab = RtTab::new(&spaces.vel, &rule.points);
    let temp_tab = ScalarTab::new(&spaces.temp, &rule.points);
    let n_vel = vel_tab.dim;
    let n = temp_tab.dim();
    let mut builder = SparseBuilder::new(spaces.temp.ndofs, spaces.temp.ndofs);
    let mut grads = vec![[0.0; 2]; n];
    for cell in 0..mesh.cells.len() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &spaces.temp.cell_dofs[cell];
        let vel_dofs = &spaces.vel.cell_dofs[cell];
        let vel_signs = &spaces.vel.cell_signs[cell];
        let mut local = vec![0.0; n * n];
        for (q, w) in rule.weights.iter().enumerate() {
            let dx = w * geo.det;
            let mut uh = [0.0, 0.0];
            for j in 0..n_vel {
                let v = geo.piola_val(vel_tab.values[q][j]);
                let c = vel[vel_dofs[j]] * vel_signs[j];
                uh[0] += c * v[0];
                uh[1] += c * v[1];
            }
            for i in 0..n {
                grads[i] = geo.grad_to_phys(temp_tab.ref_grads[q][i]);
            }
            for i in 0..n {
                let si = temp_tab.values[q][i];
                for j in 0..n {
                    local[i * n + j] += dx * (uh[0] * grads[j][0] + uh[1] * grads[j][1]) * si;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                builder.push(dofs[i], dofs[j], local[i * n + j]);
            }
        }
    }
    Ok(builder.finish())
}

/// Full energy operator `diffusion-reaction + convection(u_h)`.
pub fn assemble_energy_operator(
    spaces: &SpaceSet,
    params: &ModelParams,
    vel: &[f64],
) -> Result<SparseMat> {
    let a = assemble_diffusion_reaction(spaces, params)?;
    let c = assemble_convection(spaces, vel)?;
    let mut builder = SparseBuilder::new(a.nrows, a.ncols);
    builder.add_block(&a, 0, 0, 1.0);
    builder.add_block(&c, 0, 0, 1.0);
    Ok(builder.finish())
}

/// Viscous dissipation load `e (|u_h|^2, S_i)` with
/// `e = viscosity / (permeability * heat_capacity * density)`.
pub fn assemble_dissipation_load(
    spaces: &SpaceSet,
    params: &ModelParams,
    vel: &[f64],
) -> Result<Vec<f64>> {
    if vel.len() != spaces.vel.ndofs {
        return Err(Error::DimensionMismatch {
            what: "velocity coefficients",
            expected: spaces.vel.ndofs,
            got: vel.len(),
        });
    }
    let rule = quadrature(ASSEMBLY_DEGREE)?;
    let mesh = &spaces.mesh;
    let vel_tab = RtTab::new(&spaces.vel, &rule.points);
    let temp_tab = ScalarTab::new(&spaces.temp, &rule.points);
    let n_vel = vel_tab.dim;
    let n = temp_tab.dim();
    let coeff = params.dissipation();
    let mut load = vec![0.0; spaces.temp.ndofs];
    for cell in 0..mesh.cells.len() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &spaces.temp.cell_dofs[cell];
        let vel_dofs = &spaces.vel.cell_dofs[cell];
        let vel_signs = &spaces.vel.cell_signs[cell];
        for (q, w) in rule.weights.iter().enumerate() {
            let dx = w * geo.det;
            let mut uh = [0.0, 0.0];
            for j in 0..n_vel {
                let v = geo.piola_val(vel_tab.values[q][j]);
                let c = vel[vel_dofs[j]] * vel_signs[j];
                uh[0] += c * v[0];
                uh[1] += c * v[1];
            }
            let speed2 = uh[0] * uh[0] + uh[1] * uh[1];
            for i in 0..n {
                load[dofs[i]] += dx * coeff * speed2 * temp_tab.values[q][i];
            }
        }
    }
    Ok(load)
}

/// Derivative of the energy row with respect to velocity at the given state:
/// `(v_j . grad T_h, S_i) - 2 e (u_h . v_j, S_i)` (temperature x velocity).
pub fn assemble_energy_vel_jacobian(
    spaces: &SpaceSet,
    params: &ModelParams,
    vel: &[f64],
    temp: &[f64],
) -> Result<SparseMat> {
    if temp.len() != spaces.temp.ndofs {
        return Err(Error::DimensionMismatch {
            what: "temperature coefficients",
            expected: spaces.temp.ndofs,
            got: temp.len(),
        });
    }
    let rule = quadrature(ASSEMBLY_DEGREE)?;
    let mesh = &spaces.mesh;
    let vel_tab = RtTab::new(&spaces.vel, &rule.points);
    let temp_tab = ScalarTab::new(&spaces.temp, &rule.points);
    let n_vel = vel_tab.dim;
    let n = temp_tab.dim();
    let coeff = params.dissipation();
    let mut builder = SparseBuilder::new(spaces.temp.ndofs, spaces.vel.ndofs);
    let mut vel_phys = vec![[0.0; 2]; n_vel];
    for cell in 0..mesh.cells.len() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &spaces.temp.cell_dofs[cell];
        let vel_dofs = &spaces.vel.cell_dofs[cell];
        let vel_signs = &spaces.vel.cell_signs[cell];
        let mut local = vec![0.0; n * n_vel];
        for (q, w) in rule.weights.iter().enumerate() {
            let dx = w * geo.det;
            let mut uh = [0.0, 0.0];
            for j in 0..n_vel {
                let v = geo.piola_val(vel_tab.values[q][j]);
                vel_phys[j] = [vel_signs[j] * v[0], vel_signs[j] * v[1]];
                let c = vel[vel_dofs[j]];
                uh[0] += c * vel_phys[j][0];
                uh[1] += c * vel_phys[j][1];
            }
            let mut grad_t = [0.0, 0.0];
            for i in 0..n {
                let g = geo.grad_to_phys(temp_tab.ref_grads[q][i]);
                let c = temp[dofs[i]];
                grad_t[0] += c * g[0];
                grad_t[1] += c * g[1];
            }
            for i in 0..n {
                let si = temp_tab.values[q][i];
                for j in 0..n_vel {
                    let conv = vel_phys[j][0] * grad_t[0] + vel_phys[j][1] * grad_t[1];
                    let diss = uh[0] * vel_phys[j][0] + uh[1] * vel_phys[j][1];
                    local[i * n_vel + j] += dx * si * (conv - 2.0 * coeff * diss);
                }
            }
        }
        for i in 0..n {
            for j in 0..n_vel {
                builder.push(dofs[i], vel_dofs[j], local[i * n_vel + j]);
            }
        }
    }
    Ok(builder.finish())
}

/// Volume loads: momentum force into the velocity row (negated, matching the
/// negated momentum balance) and heat source into the energy row.
pub fn assemble_volume_loads(
    spaces: &SpaceSet,
    momentum_force: &dyn Fn([f64; 2]) -> [f64; 2],
    heat_source: &dyn Fn([f64; 2]) -> f64,
) -> Result<Loads> {
    let rule = quadrature(LOAD_DEGREE)?;
    let mesh = &spaces.mesh;
    let vel_tab = RtTab::new(&spaces.vel, &rule.points);
    let temp_tab = ScalarTab::new(&spaces.temp, &rule.points);
    let layout = DofLayout::new(spaces);
    let mut loads = Loads::zeros(&layout);
    for cell in 0..mesh.cells.len() {
        let geo = CellGeometry::new(mesh, cell);
        let vel_dofs = &spaces.vel.cell_dofs[cell];
        let vel_signs = &spaces.vel.cell_signs[cell];
        let temp_dofs = &spaces.temp.cell_dofs[cell];
        for (q, w) in rule.weights.iter().enumerate() {
            let dx = w * geo.det;
            let x = geo.to_phys(rule.points[q]);
            let f = momentum_force(x);
            let g = heat_source(x);
            for (j, &dof) in vel_dofs.iter().enumerate() {
                let v = geo.piola_val(vel_tab.values[q][j]);
                loads.vel[dof] -=
                    dx * vel_signs[j] * (f[0] * v[0] + f[1] * v[1]);
            }
            for (j, &dof) in temp_dofs.iter().enumerate() {
                loads.temp[dof] += dx * g * temp_tab.values[q][j];
            }
        }
    }
    Ok(loads)
}

/// Trace data entering through the natural boundary conditions.
pub struct NaturalTraces<'a> {
    /// Velocity on the outflow part; only its tangential component is used.
    pub velocity: &'a dyn Fn([f64; 2]) -> [f64; 2],
    /// Pressure on the outflow part.
    pub pressure: &'a dyn Fn([f64; 2]) -> f64,
    /// Temperature gradient on the wall part; only its normal component is
    /// used (scaled by the diffusivity).
    pub temp_gradient: &'a dyn Fn([f64; 2]) -> [f64; 2],
}

/// Natural-boundary loads:
/// - vorticity row: `sqrt(brinkman) (u . t, z)` over the outflow part, with
///   `t` the counterclockwise tangent;
/// - velocity row: `(p, v . n)` over the outflow part, `n` outward;
/// - energy row: `diffusivity (grad T . n, S)` over the wall part.
///
/// The signs make the residual of a field satisfying the strong equations
/// vanish (up to quadrature and interpolation); the in-space consistency
/// tests pin every one of them to machine precision.
pub fn assemble_natural_boundary_loads(
    spaces: &SpaceSet,
    params: &ModelParams,
    traces: &NaturalTraces,
) -> Result<Loads> {
    params.validate()?;
    let seg = segment_quadrature(LOAD_DEGREE)?;
    let mesh = &spaces.mesh;
    let layout = DofLayout::new(spaces);
    let mut loads = Loads::zeros(&layout);
    let sqrt_b = params.sqrt_brinkman();

    let SpaceKind::Rt(k) = spaces.vel.kind else {
        return Err(Error::InvalidInput("velocity space must be Raviart-Thomas".into()));
    };
    let rt_basis = RtBasis::new(k)?;
    let om_degree = match spaces.omega.kind {
        SpaceKind::Cg(m) => m,
        _ => return Err(Error::InvalidInput("vorticity space must be continuous".into())),
    };

    for e in 0..mesh.edges.len() {
        let tag = mesh.boundary_tags[e];
        if tag == EdgeTag::Interior {
            continue;
        }
        let (cell, _) = mesh.edge_cells[e];
        let (le, orient) = mesh
            .local_edge_in_cell(cell, e)
            .expect("incident cell lists its edge");
        let geo = CellGeometry::new(mesh, cell);
        let (a, b, _, _) = crate::reference::rt::ref_edge(le);
        let [va, vb] = mesh.edges[e];
        let pa = mesh.vertices[va];
        let pb = mesh.vertices[vb];
        let len = mesh.edge_length(e);
        let n_out = mesh.outward_normal(e);
        // Counterclockwise tangent: outward normal rotated by +90 degrees.
        let t_ccw = [-n_out[1], n_out[0]];

        for (t, w) in seg.points.iter().zip(&seg.weights) {
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let tl = if orient == 1 { *t } else { 1.0 - *t };
            let xhat = [a[0] + tl * (b[0] - a[0]), a[1] + tl * (b[1] - a[1])];
            let ds = w * len;
            match tag {
                EdgeTag::Sigma => {
                    // Tangential-velocity data drives the vorticity row.
                    let u = (traces.velocity)(x);
                    let ut = u[0] * t_ccw[0] + u[1] * t_ccw[1];
                    let (z_vals, _) = eval_scalar_basis(om_degree, xhat)?;
                    for (i, &dof) in spaces.omega.cell_dofs[cell].iter().enumerate() {
                        loads.omega[dof] += ds * sqrt_b * ut * z_vals[i];
                    }
                    // Pressure data drives the velocity row.
                    let p = (traces.pressure)(x);
                    let (v_vals, _) = rt_basis.eval(xhat);
                    for (j, &dof) in spaces.vel.cell_dofs[cell].iter().enumerate() {
                        let v = geo.piola_val(v_vals[j]);
                        let vn = spaces.vel.cell_signs[cell][j]
                            * (v[0] * n_out[0] + v[1] * n_out[1]);
                        loads.vel[dof] += ds * p * vn;
                    }
                }
                EdgeTag::Gamma => {
                    // Normal heat-flux data drives the energy row.
                    let gt = (traces.temp_gradient)(x);
                    let flux = params.diffusivity * (gt[0] * n_out[0] + gt[1] * n_out[1]);
                    let (s_vals, _) = eval_scalar_basis(om_degree, xhat)?;
                    for (i, &dof) in spaces.temp.cell_dofs[cell].iter().enumerate() {
                        loads.temp[dof] += ds * flux * s_vals[i];
                    }
                }
                EdgeTag::Interior => unreachable!(),
            }
        }
    }
    Ok(loads)
}

/// Cached constant blocks of the coupled system, with residual and Jacobian
/// evaluation at a given state.
pub struct DiscreteSystem<'a> {
    pub spaces: &'a SpaceSet,
    pub params: ModelParams,
    pub layout: DofLayout,
    pub blocks: BrinkmanBlocks,
    pub buoy_mat: SparseMat,
    pub buoy_fix: Vec<f64>,
    pub diffusion: SparseMat,
}

impl<'a> DiscreteSystem<'a> {
    pub fn new(spaces: &'a SpaceSet, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let layout = DofLayout::new(spaces);
        let blocks = assemble_brinkman_blocks(spaces, params)?;
        let (buoy_mat, buoy_fix) = assemble_buoyancy(spaces, params)?;
        let diffusion = assemble_diffusion_reaction(spaces, params)?;
        Ok(DiscreteSystem {
            spaces,
            params: *params,
            layout,
            blocks,
            buoy_mat,
            buoy_fix,
            diffusion,
        })
    }

    /// Residual of the four weak rows at `state`, stacked. Rows associated
    /// with essential DOFs are later overwritten by the solver; this is the
    /// raw Galerkin residual.
    pub fn residual(&self, state: &[f64], loads: &Loads) -> Result<Vec<f64>> {
        if state.len() != self.layout.total() {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: self.layout.total(),
                got: state.len(),
            });
        }
        let (omega, vel, pres, temp) = self.layout.split(state);
        let convection = assemble_convection(self.spaces, vel)?;
        let dissipation = assemble_dissipation_load(self.spaces, &self.params, vel)?;

        let mut r_omega = loads.omega.iter().map(|v| -v).collect::<Vec<_>>();
        self.blocks.vort_mass.mul_add(omega, &mut r_omega, 1.0);
        self.blocks.curl_couple.mul_add(vel, &mut r_omega, 1.0);

        let mut r_vel = loads.vel.iter().map(|v| -v).collect::<Vec<_>>();
        self.blocks
            .curl_couple
            .mul_add_transposed(omega, &mut r_vel, 1.0);
        self.blocks.drag.mul_add(vel, &mut r_vel, -1.0);
        self.blocks
            .div_couple
            .mul_add_transposed(pres, &mut r_vel, 1.0);
        self.buoy_mat.mul_add(temp, &mut r_vel, -1.0);
        for (r, f) in r_vel.iter_mut().zip(&self.buoy_fix) {
            *r -= f;
        }

        let mut r_pres = loads.pres.iter().map(|v| -v).collect::<Vec<_>>();
        self.blocks.div_couple.mul_add(vel, &mut r_pres, 1.0);

        let mut r_temp = loads.temp.iter().map(|v| -v).collect::<Vec<_>>();
        self.diffusion.mul_add(temp, &mut r_temp, 1.0);
        convection.mul_add(temp, &mut r_temp, 1.0);
        for (r, d) in r_temp.iter_mut().zip(&dissipation) {
            *r -= d;
        }

        Ok(self.layout.stack(&r_omega, &r_vel, &r_pres, &r_temp))
    }

    /// Exact Jacobian of [`DiscreteSystem::residual`] at `state`.
    pub fn jacobian(&self, state: &[f64]) -> Result<SparseMat> {
        if state.len() != self.layout.total() {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: self.layout.total(),
                got: state.len(),
            });
        }
        let (_, vel, _, temp) = self.layout.split(state);
        let convection = assemble_convection(self.spaces, vel)?;
        let energy_vel =
            assemble_energy_vel_jacobian(self.spaces, &self.params, vel, temp)?;

        let l = &self.layout;
        let n = l.total();
        let mut j = SparseBuilder::new(n, n);
        let (ro, rv, rp, rt) = (l.omega_off(), l.vel_off(), l.pres_off(), l.temp_off());

        j.add_block(&self.blocks.vort_mass, ro, ro, 1.0);
        j.add_block(&self.blocks.curl_couple, ro, rv, 1.0);

        j.add_block_transposed(&self.blocks.curl_couple, rv, ro, 1.0);
        j.add_block(&self.blocks.drag, rv, rv, -1.0);
        j.add_block_transposed(&self.blocks.div_couple, rv, rp, 1.0);
        j.add_block(&self.buoy_mat, rv, rt, -1.0);

        j.add_block(&self.blocks.div_couple, rp, rv, 1.0);

        j.add_block(&energy_vel, rt, rv, 1.0);
        j.add_block(&self.diffusion, rt, rt, 1.0);
        j.add_block(&convection, rt, rt, 1.0);

        Ok(j.finish())
    }
}

/// One-shot residual assembly (rebuilds the constant blocks; iterative
/// callers should hold a [`DiscreteSystem`]).
pub fn assemble_residual(
    spaces: &SpaceSet,
    params: &ModelParams,
    state: &[f64],
    loads: &Loads,
) -> Result<Vec<f64>> {
    DiscreteSystem::new(spaces, params)?.residual(state, loads)
}

/// One-shot Jacobian assembly.
pub fn assemble_jacobian(
    spaces: &SpaceSet,
    params: &ModelParams,
    state: &[f64],
) -> Result<SparseMat> {
    DiscreteSystem::new(spaces, params)?.jacobian(state)
}
