use nalgebra::{Cholesky, DMatrix, DVector};

use super::element::{
    element_design_sensitivity, element_dof_map, element_energy, element_forces, element_residual,
    element_tangent, scatter_matrix, scatter_vector,
};
use super::loads::LoadCase;
use super::mesh::{dof_index, Configuration, Mesh};
use crate::error::{Error, Result};

/// Global residual `f_int − λ f_ext` and tangent `∂r/∂φ`.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub residual: DVector<f64>,
    pub tangent: DMatrix<f64>,
}

pub fn internal_force(mesh: &Mesh, config: &Configuration) -> Result<DVector<f64>> {
    config.check_compatible(mesh)?;
    let mut f = DVector::zeros(mesh.dof_count());
    for e in 0..mesh.elements.len() {
        scatter_vector(
            &mut f,
            &element_dof_map(mesh, e),
            &element_residual(mesh, config, e)?,
        );
    }
    Ok(f)
}

pub fn internal_tangent(mesh: &Mesh, config: &Configuration) -> Result<DMatrix<f64>> {
    config.check_compatible(mesh)?;
    let n = mesh.dof_count();
    let mut k = DMatrix::zeros(n, n);
    for e in 0..mesh.elements.len() {
        scatter_matrix(
            &mut k,
            &element_dof_map(mesh, e),
            &element_tangent(mesh, config, e)?,
        );
    }
    Ok(k)
}

pub fn strain_energy(mesh: &Mesh, config: &Configuration) -> Result<f64> {
    (0..mesh.elements.len())
        .map(|e| element_energy(mesh, config, e))
        .sum()
}

/// `∂f_int/∂d`, one column per design variable.
pub fn design_sensitivity(mesh: &Mesh, config: &Configuration) -> Result<DMatrix<f64>> {
    let field = mesh
        .design
        .as_ref()
        .ok_or_else(|| Error::InvalidMesh("mesh has no design field".into()))?;
    let mut s = DMatrix::zeros(mesh.dof_count(), field.len());
    for e in 0..mesh.elements.len() {
        let dofs = element_dof_map(mesh, e);
        for (var, col) in element_design_sensitivity(mesh, config, e)? {
            for (i, &g) in dofs.iter().enumerate() {
                s[(g, var)] += col[i];
            }
        }
    }
    Ok(s)
}

pub fn assemble(
    mesh: &Mesh,
    loads: &LoadCase,
    config: &Configuration,
    nu: &[f64],
    load_factor: f64,
) -> Result<Assembly> {
    let (residual, tangent) = assemble_parts(mesh, loads, config, nu, load_factor, true)?;
    Ok(Assembly {
        residual,
        tangent: tangent.expect("tangent requested"),
    })
}

fn assemble_parts(
    mesh: &Mesh,
    loads: &LoadCase,
    config: &Configuration,
    nu: &[f64],
    load_factor: f64,
    with_tangent: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    config.check_compatible(mesh)?;
    let n = mesh.dof_count();
    let mut f = DVector::zeros(n);
    let mut k = with_tangent.then(|| DMatrix::zeros(n, n));
    for e in 0..mesh.elements.len() {
        let dofs = element_dof_map(mesh, e);
        let (fe, ke) = element_forces(mesh, config, e, with_tangent)?;
        scatter_vector(&mut f, &dofs, &fe);
        if let (Some(k), Some(ke)) = (k.as_mut(), ke) {
            scatter_matrix(k, &dofs, &ke);
        }
    }
    f -= loads.external_force(config, nu, load_factor)?;
    if let Some(k) = k.as_mut() {
        *k -= loads.load_stiffness(config, nu, load_factor)?;
    }
    Ok((f, k))
}

/// Restriction of a vector to the listed dofs.
pub fn restrict(v: &DVector<f64>, dofs: &[usize]) -> DVector<f64> {
    DVector::from_iterator(dofs.len(), dofs.iter().map(|&i| v[i]))
}

pub fn restrict_matrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// True when the symmetric part of the free-dof tangent admits a Cholesky
/// factorisation.
pub fn is_positive_definite(tangent: &DMatrix<f64>, free: &[usize]) -> bool {
    let k = restrict_matrix(tangent, free, free);
    let sym = (&k + k.transpose()) * 0.5;
    Cholesky::new(sym).is_some()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub load_steps: usize,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            load_steps: 10,
            max_iterations: 25,
            relative_tolerance: 1e-10,
            absolute_tolerance: 1e-12,
            max_halvings: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub configuration: Configuration,
    /// Newton iterations used by each accepted load step.
    pub step_iterations: Vec<usize>,
    /// Residual norms of each accepted load step, first entry before any
    /// correction.
    pub residual_history: Vec<Vec<f64>>,
    pub final_residual: f64,
    pub halvings: usize,
}

impl SolveReport {
    pub fn max_step_iterations(&self) -> usize {
        self.step_iterations.iter().copied().max().unwrap_or(0)
    }
}

struct StepFailure(Error);

fn newton_step(
    mesh: &Mesh,
    loads: &LoadCase,
    nu: &[f64],
    start: &Configuration,
    target_constraints: &[(usize, f64)],
    load_factor: f64,
    free: &[usize],
    opts: &NewtonOptions,
) -> std::result::Result<(Configuration, Vec<f64>), StepFailure> {
    let mut config = start.clone();
    for &(i, v) in target_constraints {
        config.0[i] = v;
    }
    let mut history = Vec::new();
    let mut tol = f64::INFINITY;
    let mut stagnated = false;
    for it in 0..=opts.max_iterations {
        let (residual, _) =
            assemble_parts(mesh, loads, &config, nu, load_factor, false).map_err(StepFailure)?;
        let r = restrict(&residual, free);
        let norm = r.norm();
        if !norm.is_finite() {
            return Err(StepFailure(Error::NoConvergence {
                load_factor,
                iterations: it,
                residual: norm,
            }));
        }
        if it == 0 {
            tol = (opts.relative_tolerance * norm).max(opts.absolute_tolerance);
        }
        history.push(norm);
        if norm <= tol || stagnated {
            return Ok((config, history));
        }
        if it == opts.max_iterations || (it > 0 && norm > 1e8 * history[0].max(1e-300)) {
            return Err(StepFailure(Error::NoConvergence {
                load_factor,
                iterations: it,
                residual: norm,
            }));
        }
        let tangent = internal_tangent(mesh, &config).map_err(StepFailure)?
            - loads
                .load_stiffness(&config, nu, load_factor)
                .map_err(StepFailure)?;
        let k = restrict_matrix(&tangent, free, free);
        let du = k
            .lu()
            .solve(&(-r))
            .ok_or(StepFailure(Error::SingularTangent))?;
        if du.iter().any(|v| !v.is_finite()) {
            return Err(StepFailure(Error::SingularTangent));
        }
        for (i, &g) in free.iter().enumerate() {
            config.0[g] += du[i];
        }
        // corrections at roundoff level cannot reduce the residual further
        stagnated = du.amax() <= 1e-14 * config.0.amax().max(1.0);
    }
    unreachable!("loop returns on its last iteration")
}

/// Incremental Newton solution of `f_int(φ) = f_ext(φ, ν)` from the reference
/// configuration, ramping loads and prescribed values together.
pub fn newton_solve(
    mesh: &Mesh,
    loads: &LoadCase,
    nu: &[f64],
    opts: &NewtonOptions,
) -> Result<SolveReport> {
    newton_solve_from(mesh, loads, nu, opts, &mesh.reference_configuration())
}

/// Same as [`newton_solve`] but starting the ramp from `start`, whose
/// constrained entries are taken as the initial prescribed values.
pub fn newton_solve_from(
    mesh: &Mesh,
    loads: &LoadCase,
    nu: &[f64],
    opts: &NewtonOptions,
    start: &Configuration,
) -> Result<SolveReport> {
    start.check_compatible(mesh)?;
    loads.validate(mesh)?;
    if opts.load_steps == 0 {
        return Err(Error::Settings("load_steps must be at least 1".into()));
    }
    let free = mesh.free_dofs();
    let prescribed: Vec<(usize, f64, f64)> = mesh
        .constraints
        .iter()
        .map(|c| {
            let i = dof_index(c.node, c.dof);
            (i, start.0[i], c.value)
        })
        .collect();

    let nominal = 1.0 / opts.load_steps as f64;
    let mut h = nominal;
    let mut level = 0usize;
    let mut halvings = 0usize;
    let mut t = 0.0;
    let mut config = start.clone();
    let mut step_iterations = Vec::new();
    let mut residual_history = Vec::new();
    while t < 1.0 - 1e-14 {
        let t_next = (t + h).min(1.0);
        let targets: Vec<(usize, f64)> = prescribed
            .iter()
            .map(|&(i, a, b)| (i, a + t_next * (b - a)))
            .collect();
        match newton_step(mesh, loads, nu, &config, &targets, t_next, &free, opts) {
            Ok((c, hist)) => {
                config = c;
                step_iterations.push(hist.len() - 1);
                residual_history.push(hist);
                t = t_next;
                if level > 0 {
                    level -= 1;
                    h *= 2.0;
                }
            }
            Err(StepFailure(err)) => {
                if level >= opts.max_halvings {
                    return Err(err);
                }
                level += 1;
                halvings += 1;
                h *= 0.5;
            }
        }
    }
    debug_assert!(h <= nominal + 1e-15);
    let final_residual = residual_history
        .last()
        .and_then(|h| h.last())
        .copied()
        .unwrap_or(0.0);
    Ok(SolveReport {
        configuration: config,
        step_iterations,
        residual_history,
        final_residual,
        halvings,
    })
}
