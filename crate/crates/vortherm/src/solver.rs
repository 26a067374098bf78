//! Linear solves, essential-condition handling, Newton iteration, and the
//! decoupled fixed-point iteration.
//!
//! Every linear system goes through sparse LU with a normwise backward-error
//! check, so a silently bad solve surfaces as an error instead of polluted
//! fields. Newton counts linear solves (at least one, even for zero data)
//! and stops once the free-row residual drops below
//! `max(tol_abs, tol_rel * initial residual)`.

use crate::assembly::{
    assemble_convection, assemble_dissipation_load, DiscreteSystem, DofLayout, Loads,
    SparseBuilder, SparseMat,
};
use crate::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

/// Maximum admissible normwise backward error `|Ax - b| / (|A||x| + |b|)`
/// (infinity norms) for a direct solve.
pub const BACKWARD_ERROR_LIMIT: f64 = 1e-10;

/// Stopping rules for the nonlinear iterations.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Absolute residual floor for Newton.
    pub tol_abs: f64,
    /// Residual reduction factor for Newton, relative to the first residual.
    pub tol_rel: f64,
    /// Maximum number of Newton steps (= linear solves).
    pub max_newton: usize,
    /// Maximum number of fixed-point sweeps.
    pub max_picard: usize,
    /// Fixed-point stopping tolerance on the temperature increment.
    pub picard_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_abs: 1e-8,
            tol_rel: 1e-8,
            max_newton: 20,
            max_picard: 200,
            picard_tol: 1e-8,
        }
    }
}

/// Iteration count and residual (or increment) history of a nonlinear solve.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Essential constraints of the coupled problem, per field, with field-local
/// DOF indices: vorticity and normal velocity on the wall part, temperature
/// on the outflow part.
#[derive(Debug, Clone, Default)]
pub struct ProblemBc {
    pub omega_dofs: Vec<usize>,
    pub omega_vals: Vec<f64>,
    pub vel_dofs: Vec<usize>,
    pub vel_vals: Vec<f64>,
    pub temp_dofs: Vec<usize>,
    pub temp_vals: Vec<f64>,
}

impl ProblemBc {
    /// Constraints in global (stacked) numbering.
    pub fn global(&self, layout: &DofLayout) -> (Vec<usize>, Vec<f64>) {
        let mut dofs = Vec::new();
        let mut vals = Vec::new();
        for (d, v) in self.omega_dofs.iter().zip(&self.omega_vals) {
            dofs.push(layout.omega_off() + d);
            vals.push(*v);
        }
        for (d, v) in self.vel_dofs.iter().zip(&self.vel_vals) {
            dofs.push(layout.vel_off() + d);
            vals.push(*v);
        }
        for (d, v) in self.temp_dofs.iter().zip(&self.temp_vals) {
            dofs.push(layout.temp_off() + d);
            vals.push(*v);
        }
        (dofs, vals)
    }

    /// Constraints for the flow subsystem (vorticity, velocity, pressure
    /// stacked in that order).
    pub fn flow(&self, layout: &DofLayout) -> (Vec<usize>, Vec<f64>) {
        let mut dofs = Vec::new();
        let mut vals = Vec::new();
        for (d, v) in self.omega_dofs.iter().zip(&self.omega_vals) {
            dofs.push(*d);
            vals.push(*v);
        }
        for (d, v) in self.vel_dofs.iter().zip(&self.vel_vals) {
            dofs.push(layout.n_omega + d);
            vals.push(*v);
        }
        (dofs, vals)
    }

    /// Write the constrained values into a stacked state vector.
    pub fn apply_state(&self, layout: &DofLayout, state: &mut [f64]) {
        let (dofs, vals) = self.global(layout);
        for (d, v) in dofs.iter().zip(&vals) {
            state[*d] = *v;
        }
    }

    pub fn apply_temp(&self, temp: &mut [f64]) {
        for (d, v) in self.temp_dofs.iter().zip(&self.temp_vals) {
            temp[*d] = *v;
        }
    }
}

/// Direct sparse solve with a backward-error guard.
pub fn linear_solve(mat: &SparseMat, rhs: &[f64]) -> Result<Vec<f64>> {
    if mat.nrows != mat.ncols {
        return Err(Error::DimensionMismatch {
            what: "linear system rows vs columns",
            expected: mat.nrows,
            got: mat.ncols,
        });
    }
    if rhs.len() != mat.nrows {
        return Err(Error::DimensionMismatch {
            what: "right-hand side length",
            expected: mat.nrows,
            got: rhs.len(),
        });
    }
    let n = mat.nrows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = mat
        .entries()
        .iter()
        .map(|&(i, j, v)| Triplet { row: i, col: j, val: v })
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::LinearSolve(format!("matrix creation failed: {e:?}")))?;
    // The factorization panics on an exactly singular matrix; turn that into
    // a regular error (near-singular cases fall through to the backward-error
    // check below).
    let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| a.sp_lu()))
        .map_err(|_| Error::LinearSolve("sparse factorization hit a zero pivot".into()))?
        .map_err(|e| Error::LinearSolve(format!("sparse factorization failed: {e:?}")))?;
    let mut x = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    lu.solve_in_place(x.as_mut());
    let sol: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();

    // Normwise backward error; also traps NaN/Inf from a degenerate pivot.
    let residual = {
        let mut r = rhs.to_vec();
        mat.mul_add(&sol, &mut r, -1.0);
        r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let mut row_sums = vec![0.0; n];
    for &(i, _, v) in mat.entries() {
        row_sums[i] += v.abs();
    }
    let a_norm = row_sums.iter().fold(0.0f64, |m, v| m.max(*v));
    let x_norm = sol.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let b_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let denom = a_norm * x_norm + b_norm;
    let backward = if denom > 0.0 { residual / denom } else { residual };
    if !backward.is_finite() || backward > BACKWARD_ERROR_LIMIT {
        return Err(Error::LinearSolve(format!(
            "backward error {backward:.3e} exceeds {BACKWARD_ERROR_LIMIT:.1e}"
        )));
    }
    Ok(sol)
}

fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn mask(mut r: Vec<f64>, dofs: &[usize]) -> Vec<f64> {
    for &d in dofs {
        r[d] = 0.0;
    }
    r
}

/// Monolithic Newton iteration with the exact Jacobian.
///
/// Starts from zero free unknowns with the essential values filled in;
/// `iterations` in the report is the number of linear solves performed.
pub fn newton_solve(
    system: &DiscreteSystem,
    loads: &Loads,
    bc: &ProblemBc,
    config: &SolverConfig,
) -> Result<(Vec<f64>, IterationReport)> {
    let layout = system.layout;
    let (gdofs, gvals) = bc.global(&layout);
    let mut state = vec![0.0; layout.total()];
    bc.apply_state(&layout, &mut state);

    let mut residual = mask(system.residual(&state, loads)?, &gdofs);
    let r0 = l2_norm(&residual);
    let threshold = config.tol_abs.max(config.tol_rel * r0);
    let mut history = vec![r0];
    let mut iterations = 0;
    let _ = &gvals; // values already in the state; steps are homogeneous

    loop {
        if iterations >= config.max_newton {
            return Err(Error::NonConvergence {
                method: "newton",
                iterations,
                history,
            });
        }
        let jac = system.jacobian(&state)?;
        let mut rhs: Vec<f64> = residual.iter().map(|v| -v).collect();
        let zeros = vec![0.0; gdofs.len()];
        let reduced = jac.eliminate(&mut rhs, &gdofs, &zeros);
        let delta = linear_solve(&reduced, &rhs)?;
        for (s, d) in state.iter_mut().zip(&delta) {
            *s += d;
        }
        iterations += 1;

        residual = mask(system.residual(&state, loads)?, &gdofs);
        let r = l2_norm(&residual);
        history.push(r);
        if !r.is_finite() {
            return Err(Error::NonConvergence {
                method: "newton",
                iterations,
                history,
            });
        }
        if r <= threshold {
            return Ok((state, IterationReport { iterations, history }));
        }
    }
}

/// Solve the linear flow subsystem for a frozen temperature field. Returns
/// vorticity, velocity, and pressure coefficients.
pub fn solve_flow_given_temp(
    system: &DiscreteSystem,
    loads: &Loads,
    bc: &ProblemBc,
    temp: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let l = system.layout;
    if temp.len() != l.n_temp {
        return Err(Error::DimensionMismatch {
            what: "temperature coefficients",
            expected: l.n_temp,
            got: temp.len(),
        });
    }
    let n = l.n_omega + l.n_vel + l.n_pres;
    let (o_v, o_p) = (l.n_omega, l.n_omega + l.n_vel);
    let mut b = SparseBuilder::new(n, n);
    b.add_block(&system.blocks.vort_mass, 0, 0, 1.0);
    b.add_block(&system.blocks.curl_couple, 0, o_v, 1.0);
    b.add_block_transposed(&system.blocks.curl_couple, o_v, 0, 1.0);
    b.add_block(&system.blocks.drag, o_v, o_v, -1.0);
    b.add_block_transposed(&system.blocks.div_couple, o_v, o_p, 1.0);
    b.add_block(&system.blocks.div_couple, o_p, o_v, 1.0);
    let mat = b.finish();

    let mut rhs = vec![0.0; n];
    rhs[..l.n_omega].copy_from_slice(&loads.omega);
    rhs[o_p..].copy_from_slice(&loads.pres);
    {
        let vel_rhs = &mut rhs[o_v..o_p];
        vel_rhs.copy_from_slice(&loads.vel);
        let mut buoy = system.buoy_fix.clone();
        system.buoy_mat.mul_add(temp, &mut buoy, 1.0);
        for (r, f) in vel_rhs.iter_mut().zip(&buoy) {
            *r += f;
        }
    }

    let (dofs, vals) = bc.flow(&l);
    let reduced = mat.eliminate(&mut rhs, &dofs, &vals);
    let sol = linear_solve(&reduced, &rhs)?;
    Ok((
        sol[..l.n_omega].to_vec(),
        sol[o_v..o_p].to_vec(),
        sol[o_p..].to_vec(),
    ))
}

/// Solve the energy balance for a frozen velocity field.
pub fn solve_energy_given_vel(
    system: &DiscreteSystem,
    loads: &Loads,
    bc: &ProblemBc,
    vel: &[f64],
) -> Result<Vec<f64>> {
    let l = system.layout;
    let convection = assemble_convection(system.spaces, vel)?;
    let mut b = SparseBuilder::new(l.n_temp, l.n_temp);
    b.add_block(&system.diffusion, 0, 0, 1.0);
    b.add_block(&convection, 0, 0, 1.0);
    let mat = b.finish();

    let dissipation = assemble_dissipation_load(system.spaces, &system.params, vel)?;
    let mut rhs = loads.temp.clone();
    for (r, d) in rhs.iter_mut().zip(&dissipation) {
        *r += d;
    }

    let reduced = mat.eliminate(&mut rhs, &bc.temp_dofs, &bc.temp_vals);
    linear_solve(&reduced, &rhs)
}

/// Decoupled fixed-point iteration: alternate flow and energy solves until
/// the temperature increment stalls, then report the stacked state. The
/// history records the temperature increments.
pub fn picard_solve(
    system: &DiscreteSystem,
    loads: &Loads,
    bc: &ProblemBc,
    config: &SolverConfig,
) -> Result<(Vec<f64>, IterationReport)> {
    let l = system.layout;
    let mut temp = vec![0.0; l.n_temp];
    bc.apply_temp(&mut temp);
    let mut history = Vec::new();

    for it in 1..=config.max_picard {
        let (_, vel, _) = solve_flow_given_temp(system, loads, bc, &temp)?;
        let new_temp = solve_energy_given_vel(system, loads, bc, &vel)?;
        let delta = new_temp
            .iter()
            .zip(&temp)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        history.push(delta);
        temp = new_temp;
        if !delta.is_finite() {
            return Err(Error::NonConvergence {
                method: "fixed-point",
                iterations: it,
                history,
            });
        }
        if delta <= config.picard_tol {
            // Refresh the flow fields so the reported state is consistent
            // with the final temperature.
            let (omega, vel, pres) = solve_flow_given_temp(system, loads, bc, &temp)?;
            let state = l.stack(&omega, &vel, &pres, &temp);
            return Ok((state, IterationReport { iterations: it, history }));
        }
    }
    Err(Error::NonConvergence {
        method: "fixed-point",
        iterations: config.max_picard,
        history,
    })
}
