//! Cost functions, sensitivities and the coupled equilibrium/optimality
//! (KKT) residuals for control and design problems.
//!
//! The multiplier vector lives on the free dofs. With follower loads the
//! tangent is nonsymmetric, so the adjoint equations use `Kᵀ`.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::fem::{
    assemble, bernstein_derivative, design_sensitivity, gauss_points, gauss_rule, internal_force,
    newton_solve, restrict, restrict_matrix, Configuration, LoadCase, Mesh, NewtonOptions,
    SolveReport,
};

pub use crate::fem::{DesignBasis, DesignField};

/// Quadrature points per element for mass and volume integrals.
const VOLUME_RULE: usize = 4;

fn check_same_mesh(mesh: &Mesh, a: &Configuration, b: &Configuration) -> Result<()> {
    a.check_compatible(mesh)?;
    b.check_compatible(mesh)
}

/// `½ Σ_e (l_e/n_en) Σ_a |u_a − u_a^d|²` over translational dofs.
pub fn shape_matching_cost(
    mesh: &Mesh,
    config: &Configuration,
    desired: &Configuration,
) -> Result<f64> {
    check_same_mesh(mesh, config, desired)?;
    let mut j = 0.0;
    for (e, el) in mesh.elements.iter().enumerate() {
        let w = mesh.element_length(e)? / el.nodes.len() as f64;
        for &n in &el.nodes {
            j += 0.5 * w * (config.position(n) - desired.position(n)).norm_squared();
        }
    }
    Ok(j)
}

/// Gradient of [`shape_matching_cost`] with respect to all dofs.
pub fn shape_matching_gradient(
    mesh: &Mesh,
    config: &Configuration,
    desired: &Configuration,
) -> Result<DVector<f64>> {
    check_same_mesh(mesh, config, desired)?;
    let mut g = DVector::zeros(mesh.dof_count());
    for (e, el) in mesh.elements.iter().enumerate() {
        let w = mesh.element_length(e)? / el.nodes.len() as f64;
        for &n in &el.nodes {
            let d = config.position(n) - desired.position(n);
            g[3 * n] += w * d.x;
            g[3 * n + 1] += w * d.y;
        }
    }
    Ok(g)
}

pub fn regularized_control_cost(
    mesh: &Mesh,
    config: &Configuration,
    desired: &Configuration,
    nu: &[f64],
    alpha: f64,
) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Settings(format!(
            "regularisation weight must be non-negative, got {alpha}"
        )));
    }
    Ok(shape_matching_cost(mesh, config, desired)? + alpha * nu.iter().map(|v| v * v).sum::<f64>())
}

/// Volume `∫ A ds` and mass `ρ ∫ A ds` of the (possibly designed) mesh.
pub fn volume_and_mass(mesh: &Mesh, density: f64) -> Result<(f64, f64)> {
    let mut v = 0.0;
    for e in 0..mesh.elements.len() {
        for (xi, w) in gauss_rule(VOLUME_RULE)? {
            let (law, _) = mesh.section_at(e, xi)?;
            v += law.properties()?.area * mesh.jacobian(e, xi)? * w;
        }
    }
    Ok((v, density * v))
}

/// `∂V/∂d` for the mesh's design field.
pub fn volume_design_gradient(mesh: &Mesh) -> Result<DVector<f64>> {
    let field = mesh
        .design
        .as_ref()
        .ok_or_else(|| Error::InvalidMesh("mesh has no design field".into()))?;
    let mut g = DVector::zeros(field.len());
    for e in 0..mesh.elements.len() {
        for (xi, w) in gauss_rule(VOLUME_RULE)? {
            let (law, coeffs) = mesh.section_at(e, xi)?;
            let Some(coeffs) = coeffs else { continue };
            let da = law.property_derivatives(field.role)?.area * mesh.jacobian(e, xi)? * w;
            for (var, c) in coeffs {
                g[var] += da * c;
            }
        }
    }
    Ok(g)
}

/// Shear strain energy `∫ ½ kGA γ² ds` at the element quadrature points.
pub fn shear_energy_cost(mesh: &Mesh, config: &Configuration) -> Result<f64> {
    let mut j = 0.0;
    for e in 0..mesh.elements.len() {
        for gp in gauss_points(mesh, config, e)? {
            let g = gp.strains.relative()[1];
            j += 0.5 * gp.section.stiffness()?.ga() * g * g * gp.measure();
        }
    }
    Ok(j)
}

/// Gradients of the shear energy with respect to all dofs and to the design
/// variables (explicit dependence only).
pub fn shear_energy_gradients(
    mesh: &Mesh,
    config: &Configuration,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let nd = mesh.design.as_ref().map_or(0, |d| d.len());
    let role = mesh.design.as_ref().map(|d| d.role);
    let mut gs = DVector::zeros(mesh.dof_count());
    let mut gd = DVector::zeros(nd);
    for e in 0..mesh.elements.len() {
        let dofs = crate::fem::element_dof_map(mesh, e);
        for gp in gauss_points(mesh, config, e)? {
            let g = gp.strains.relative()[1];
            let ga = gp.section.stiffness()?.ga();
            let row = gp.b_matrix().row(1).transpose() * (ga * g * gp.measure());
            for (i, &d) in dofs.iter().enumerate() {
                gs[d] += row[i];
            }
            if let (Some(coeffs), Some(role)) = (&gp.design, role) {
                let dga = gp.section.stiffness_and_sensitivity(role)?.dc[1];
                for &(var, c) in coeffs {
                    gd[var] += 0.5 * dga * g * g * gp.measure() * c;
                }
            }
        }
    }
    Ok((gs, gd))
}

/// `½ ∫ |φ − X|² ds` with the nodal (lumped) rule
/// `½ Σ_e (l_e/n_en) Σ_a |u_a|²`, the same weighting as the shape-matching
/// cost.
pub fn displacement_norm_cost(mesh: &Mesh, config: &Configuration) -> Result<f64> {
    shape_matching_cost(mesh, config, &mesh.reference_configuration())
}

pub fn displacement_norm_gradient(mesh: &Mesh, config: &Configuration) -> Result<DVector<f64>> {
    shape_matching_gradient(mesh, config, &mesh.reference_configuration())
}

/// `∫ A |d′(ξ)| dξ` over `[-1, 1]` for a curve given by its derivative,
/// using `segments` Gauss panels.
pub fn curve_volume(
    area: f64,
    derivative: impl Fn(f64) -> Vector2<f64>,
    segments: usize,
) -> Result<f64> {
    let rule = gauss_rule(4)?;
    let h = 2.0 / segments as f64;
    let mut v = 0.0;
    for k in 0..segments {
        let mid = -1.0 + h * (k as f64 + 0.5);
        for &(x, w) in &rule {
            v += area * derivative(mid + 0.5 * h * x).norm() * w * 0.5 * h;
        }
    }
    Ok(v)
}

/// Volume of a beam whose axis is a Bézier curve with the given control
/// points (parameter `ξ ∈ [-1, 1]`), and its gradient with respect to each
/// control point: `∂V/∂P_a = ∫ A (d′·∂d′/∂P_a)/j dξ`.
pub fn shape_design_volume_gradient(
    control: &[Vector2<f64>],
    area: f64,
    segments: usize,
) -> Result<(f64, Vec<Vector2<f64>>)> {
    if control.len() < 2 {
        return Err(Error::InvalidMesh(
            "Bézier axis needs at least two control points".into(),
        ));
    }
    let deg = control.len() - 1;
    let rule = gauss_rule(4)?;
    let h = 2.0 / segments as f64;
    let mut v = 0.0;
    let mut grad = vec![Vector2::zeros(); control.len()];
    for k in 0..segments {
        let mid = -1.0 + h * (k as f64 + 0.5);
        for &(x, w) in &rule {
            let xi = mid + 0.5 * h * x;
            let t = 0.5 * (xi + 1.0);
            // dB/dξ = ½ dB/dt
            let db: Vec<f64> = bernstein_derivative(deg, t)
                .into_iter()
                .map(|d| 0.5 * d)
                .collect();
            let dprime: Vector2<f64> = control.iter().zip(&db).map(|(p, d)| p * *d).sum();
            let j = dprime.norm();
            if j < 1e-14 {
                return Err(Error::DegenerateElement {
                    element: 0,
                    jacobian: j,
                });
            }
            let ww = w * 0.5 * h;
            v += area * j * ww;
            for (a, g) in grad.iter_mut().enumerate() {
                *g += dprime * (area * db[a] / j * ww);
            }
        }
    }
    Ok((v, grad))
}

/// Stacked KKT residual blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct KktResidual {
    /// Equilibrium `f_int − f_ext` on free dofs.
    pub r_lambda: DVector<f64>,
    /// Stationarity in the state `∂J/∂φ + Kᵀλ`.
    pub r_phi: DVector<f64>,
    /// Stationarity in the control or design variables.
    pub r_x: DVector<f64>,
}

impl KktResidual {
    pub fn stacked(&self) -> DVector<f64> {
        let v: Vec<f64> = self
            .r_lambda
            .iter()
            .chain(self.r_phi.iter())
            .chain(self.r_x.iter())
            .copied()
            .collect();
        DVector::from_vec(v)
    }

    pub fn max_abs(&self) -> f64 {
        self.r_lambda
            .amax()
            .max(self.r_phi.amax())
            .max(self.r_x.amax())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            r_lambda: &self.r_lambda * s,
            r_phi: &self.r_phi * s,
            r_x: &self.r_x * s,
        }
    }
}

/// `rᵀr`.
pub fn merit_least_squares(r: &KktResidual) -> f64 {
    r.r_lambda.norm_squared() + r.r_phi.norm_squared() + r.r_x.norm_squared()
}

/// `[c − EP|c|, c + EP|c|]` per component, `[−EP, EP]` for vanishing `c`.
pub fn bound_box_from_reference(reference: &[f64], ep: f64) -> Vec<(f64, f64)> {
    reference
        .iter()
        .map(|&c| {
            if c.abs() < 1e-12 {
                (c - ep, c + ep)
            } else {
                (c - ep * c.abs(), c + ep * c.abs())
            }
        })
        .collect()
}

/// Reference configuration with prescribed values applied and the free
/// dofs replaced by `values`.
pub fn state_from_free(mesh: &Mesh, values: &[f64]) -> Result<Configuration> {
    let free = mesh.free_dofs();
    if values.len() != free.len() {
        return Err(Error::Dimension {
            what: "free state",
            expected: free.len(),
            got: values.len(),
        });
    }
    let mut c = mesh.reference_configuration();
    for cst in &mesh.constraints {
        c.0[crate::fem::dof_index(cst.node, cst.dof)] = cst.value;
    }
    for (&i, &v) in free.iter().zip(values) {
        c.0[i] = v;
    }
    Ok(c)
}

fn split_unknowns<'a>(
    z: &'a [f64],
    nx: usize,
    nf: usize,
    with_multipliers: bool,
) -> Result<(&'a [f64], &'a [f64], &'a [f64])> {
    let expected = nx + nf * if with_multipliers { 2 } else { 1 };
    if z.len() != expected {
        return Err(Error::Dimension {
            what: if with_multipliers {
                "full unknowns"
            } else {
                "reduced unknowns"
            },
            expected,
            got: z.len(),
        });
    }
    Ok((&z[..nx], &z[nx..nx + nf], &z[nx + nf..]))
}

fn solve_transposed(k: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let x = k
        .transpose()
        .lu()
        .solve(rhs)
        .ok_or(Error::SingularTangent)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularTangent);
    }
    Ok(x)
}

/// Load-multiplier control problem. The optimisation variables `x` map to
/// load multipliers through `ν = E x`, which lets one variable drive
/// several load groups (a force couple, say).
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub mesh: Mesh,
    pub loads: LoadCase,
    pub expansion: DMatrix<f64>,
    pub desired: Configuration,
    pub alpha: f64,
    pub newton: NewtonOptions,
}

/// Result of eliminating the multipliers: equilibrium residual, reduced
/// stationarity in `x`, and the eliminated multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedResidual {
    pub r_lambda: DVector<f64>,
    pub r_x: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl ReducedResidual {
    pub fn merit(&self) -> f64 {
        self.r_lambda.norm_squared() + self.r_x.norm_squared()
    }
}

impl ControlProblem {
    /// Problem with one variable per load group.
    pub fn direct(mesh: Mesh, loads: LoadCase, desired: Configuration, alpha: f64) -> Self {
        let n = loads.control_count();
        Self {
            mesh,
            loads,
            expansion: DMatrix::identity(n, n),
            desired,
            alpha,
            newton: NewtonOptions::default(),
        }
    }

    pub fn variable_count(&self) -> usize {
        self.expansion.ncols()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        self.mesh.free_dofs()
    }

    pub fn controls(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.expansion.ncols() {
            return Err(Error::Dimension {
                what: "control variables",
                expected: self.expansion.ncols(),
                got: x.len(),
            });
        }
        Ok((&self.expansion * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect())
    }

    pub fn solve(&self, x: &[f64]) -> Result<SolveReport> {
        newton_solve(&self.mesh, &self.loads, &self.controls(x)?, &self.newton)
    }

    pub fn cost(&self, config: &Configuration, x: &[f64]) -> Result<f64> {
        regularized_control_cost(
            &self.mesh,
            config,
            &self.desired,
            &self.controls(x)?,
            self.alpha,
        )
    }

    /// Sequential objective: forward solve then cost.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        let rep = self.solve(x)?;
        self.cost(&rep.configuration, x)
    }

    fn control_block(
        &self,
        config: &Configuration,
        nu: &[f64],
        lambda: &DVector<f64>,
    ) -> DVector<f64> {
        let free = self.free_dofs();
        let f0 = self.loads.control_matrix(config);
        let f0f = restrict_matrix(&f0, &free, &(0..f0.ncols()).collect::<Vec<_>>());
        let dnu = DVector::from_iterator(nu.len(), nu.iter().map(|v| 2.0 * self.alpha * v));
        self.expansion.transpose() * (dnu - f0f.transpose() * lambda)
    }

    /// KKT blocks at `(φ, x, λ)` with `λ` on the free dofs.
    pub fn kkt_residual(
        &self,
        config: &Configuration,
        x: &[f64],
        lambda: &DVector<f64>,
    ) -> Result<KktResidual> {
        let free = self.free_dofs();
        if lambda.len() != free.len() {
            return Err(Error::Dimension {
                what: "multipliers",
                expected: free.len(),
                got: lambda.len(),
            });
        }
        let nu = self.controls(x)?;
        let asm = assemble(&self.mesh, &self.loads, config, &nu, 1.0)?;
        let k = restrict_matrix(&asm.tangent, &free, &free);
        let g = restrict(
            &shape_matching_gradient(&self.mesh, config, &self.desired)?,
            &free,
        );
        Ok(KktResidual {
            r_lambda: restrict(&asm.residual, &free),
            r_phi: g + k.transpose() * lambda,
            r_x: self.control_block(config, &nu, lambda),
        })
    }

    /// Substitutes `λ = −K⁻ᵀ ∂J/∂φ`, which zeroes the state block.
    pub fn eliminate_multipliers(
        &self,
        config: &Configuration,
        x: &[f64],
    ) -> Result<ReducedResidual> {
        let free = self.free_dofs();
        let nu = self.controls(x)?;
        let asm = assemble(&self.mesh, &self.loads, config, &nu, 1.0)?;
        let k = restrict_matrix(&asm.tangent, &free, &free);
        let g = restrict(
            &shape_matching_gradient(&self.mesh, config, &self.desired)?,
            &free,
        );
        let lambda = -solve_transposed(&k, &g)?;
        Ok(ReducedResidual {
            r_lambda: restrict(&asm.residual, &free),
            r_x: self.control_block(config, &nu, &lambda),
            lambda,
        })
    }

    /// `dJ/dx` at an equilibrium state for `x`.
    pub fn adjoint_gradient_at(&self, config: &Configuration, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.eliminate_multipliers(config, x)?.r_x)
    }

    /// Forward solve, cost and adjoint gradient at `x`.
    pub fn adjoint_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
        let rep = self.solve(x)?;
        let j = self.cost(&rep.configuration, x)?;
        Ok((j, self.adjoint_gradient_at(&rep.configuration, x)?))
    }

    /// Configuration with free dofs replaced by `values`.
    pub fn state_from_free(&self, values: &[f64]) -> Result<Configuration> {
        state_from_free(&self.mesh, values)
    }

    /// Merit of the full system for the stacked unknowns `(x, φ_free, λ)`.
    pub fn full_merit(&self, z: &[f64]) -> Result<f64> {
        let nf = self.free_dofs().len();
        let (x, state, lambda) = split_unknowns(z, self.variable_count(), nf, true)?;
        let config = state_from_free(&self.mesh, state)?;
        let lambda = DVector::from_column_slice(lambda);
        Ok(merit_least_squares(
            &self.kkt_residual(&config, x, &lambda)?,
        ))
    }

    /// Merit of the reduced system for `(x, φ_free)`.
    pub fn reduced_merit(&self, z: &[f64]) -> Result<f64> {
        let nf = self.free_dofs().len();
        let (x, state, _) = split_unknowns(z, self.variable_count(), nf, false)?;
        let config = state_from_free(&self.mesh, state)?;
        Ok(self.eliminate_multipliers(&config, x)?.merit())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignCost {
    Volume,
    ShearEnergy,
    DisplacementNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

/// Quadratic penalty `w (M − M₀)²` on the total mass.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MassPenalty {
    pub limit: f64,
    pub weight: f64,
}

impl MassPenalty {
    pub fn value(&self, mass: f64) -> f64 {
        self.weight * (mass - self.limit).powi(2)
    }

    pub fn derivative(&self, mass: f64) -> f64 {
        2.0 * self.weight * (mass - self.limit)
    }
}

/// Section design problem over the mesh's design field.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    pub mesh: Mesh,
    pub loads: LoadCase,
    pub cost: DesignCost,
    pub sense: Sense,
    pub density: f64,
    pub mass_penalty: Option<MassPenalty>,
    pub newton: NewtonOptions,
}

/// Objective evaluation with its parts.
#[derive(Clone, Debug)]
pub struct DesignEvaluation {
    pub objective: f64,
    pub cost: f64,
    pub mass: f64,
    pub configuration: Configuration,
}

impl DesignProblem {
    pub fn variable_count(&self) -> usize {
        self.mesh.design.as_ref().map_or(0, |d| d.len())
    }

    pub fn mesh_for(&self, d: &[f64]) -> Result<Mesh> {
        self.mesh.with_design_values(d)
    }

    pub fn cost_value(&self, mesh: &Mesh, config: &Configuration) -> Result<f64> {
        match self.cost {
            DesignCost::Volume => Ok(volume_and_mass(mesh, 1.0)?.0),
            DesignCost::ShearEnergy => shear_energy_cost(mesh, config),
            DesignCost::DisplacementNorm => displacement_norm_cost(mesh, config),
        }
    }

    /// `sign·J + penalty` at a given state.
    pub fn objective_at(&self, mesh: &Mesh, config: &Configuration) -> Result<(f64, f64, f64)> {
        let cost = self.cost_value(mesh, config)?;
        let mass = volume_and_mass(mesh, self.density)?.1;
        let pen = self.mass_penalty.map_or(0.0, |p| p.value(mass));
        Ok((self.sense.sign() * cost + pen, cost, mass))
    }

    pub fn evaluate(&self, d: &[f64]) -> Result<DesignEvaluation> {
        let mesh = self.mesh_for(d)?;
        let rep = newton_solve(&mesh, &self.loads, &[], &self.newton)?;
        let (objective, cost, mass) = self.objective_at(&mesh, &rep.configuration)?;
        Ok(DesignEvaluation {
            objective,
            cost,
            mass,
            configuration: rep.configuration,
        })
    }

    pub fn objective(&self, d: &[f64]) -> Result<f64> {
        Ok(self.evaluate(d)?.objective)
    }

    /// Explicit partial derivatives of the objective: `(∂/∂φ, ∂/∂d)`.
    pub fn objective_partials(
        &self,
        mesh: &Mesh,
        config: &Configuration,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let s = self.sense.sign();
        let (gs, mut gd) = match self.cost {
            DesignCost::Volume => (
                DVector::zeros(mesh.dof_count()),
                volume_design_gradient(mesh)?,
            ),
            DesignCost::ShearEnergy => shear_energy_gradients(mesh, config)?,
            DesignCost::DisplacementNorm => (
                displacement_norm_gradient(mesh, config)?,
                DVector::zeros(self.variable_count()),
            ),
        };
        gd *= s;
        if let Some(p) = self.mass_penalty {
            let mass = volume_and_mass(mesh, self.density)?.1;
            gd += volume_design_gradient(mesh)? * (self.density * p.derivative(mass));
        }
        Ok((gs * s, gd))
    }

    /// Design KKT blocks at `(φ, d, λ)`.
    pub fn kkt_residual(
        &self,
        config: &Configuration,
        d: &[f64],
        lambda: &DVector<f64>,
    ) -> Result<KktResidual> {
        let mesh = self.mesh_for(d)?;
        let free = mesh.free_dofs();
        if lambda.len() != free.len() {
            return Err(Error::Dimension {
                what: "multipliers",
                expected: free.len(),
                got: lambda.len(),
            });
        }
        let asm = assemble(&mesh, &self.loads, config, &[], 1.0)?;
        let k = restrict_matrix(&asm.tangent, &free, &free);
        let (gs, gd) = self.objective_partials(&mesh, config)?;
        let sens = design_sensitivity(&mesh, config)?;
        let sf = restrict_matrix(&sens, &free, &(0..sens.ncols()).collect::<Vec<_>>());
        Ok(KktResidual {
            r_lambda: restrict(&asm.residual, &free),
            r_phi: restrict(&gs, &free) + k.transpose() * lambda,
            r_x: gd + sf.transpose() * lambda,
        })
    }

    /// Forward solve, objective and adjoint gradient `dJ/dd`.
    pub fn adjoint_gradient(&self, d: &[f64]) -> Result<(f64, DVector<f64>)> {
        let mesh = self.mesh_for(d)?;
        let rep = newton_solve(&mesh, &self.loads, &[], &self.newton)?;
        let config = rep.configuration;
        let (obj, _, _) = self.objective_at(&mesh, &config)?;
        let free = mesh.free_dofs();
        let k = restrict_matrix(
            &assemble(&mesh, &self.loads, &config, &[], 1.0)?.tangent,
            &free,
            &free,
        );
        let (gs, _) = self.objective_partials(&mesh, &config)?;
        let lambda = -solve_transposed(&k, &restrict(&gs, &free))?;
        Ok((obj, self.kkt_residual(&config, d, &lambda)?.r_x))
    }

    /// Substitutes `λ = −K⁻ᵀ ∂J/∂φ`, which zeroes the state block.
    pub fn eliminate_multipliers(
        &self,
        config: &Configuration,
        d: &[f64],
    ) -> Result<ReducedResidual> {
        let mesh = self.mesh_for(d)?;
        let free = mesh.free_dofs();
        let asm = assemble(&mesh, &self.loads, config, &[], 1.0)?;
        let k = restrict_matrix(&asm.tangent, &free, &free);
        let (gs, gd) = self.objective_partials(&mesh, config)?;
        let lambda = -solve_transposed(&k, &restrict(&gs, &free))?;
        let sens = design_sensitivity(&mesh, config)?;
        let sf = restrict_matrix(&sens, &free, &(0..sens.ncols()).collect::<Vec<_>>());
        Ok(ReducedResidual {
            r_lambda: restrict(&asm.residual, &free),
            r_x: gd + sf.transpose() * &lambda,
            lambda,
        })
    }

    /// Merit of the full system for the stacked unknowns `(d, φ_free, λ)`.
    pub fn full_merit(&self, z: &[f64]) -> Result<f64> {
        let nf = self.mesh.free_dofs().len();
        let (d, state, lambda) = split_unknowns(z, self.variable_count(), nf, true)?;
        let config = state_from_free(&self.mesh, state)?;
        let lambda = DVector::from_column_slice(lambda);
        Ok(merit_least_squares(
            &self.kkt_residual(&config, d, &lambda)?,
        ))
    }

    /// Merit of the reduced system for `(d, φ_free)`.
    pub fn reduced_merit(&self, z: &[f64]) -> Result<f64> {
        let nf = self.mesh.free_dofs().len();
        let (d, state, _) = split_unknowns(z, self.variable_count(), nf, false)?;
        let config = state_from_free(&self.mesh, state)?;
        Ok(self.eliminate_multipliers(&config, d)?.merit())
    }
}

/// Internal force helper reused by tests and the harness.
pub fn equilibrium_residual_norm(
    mesh: &Mesh,
    loads: &LoadCase,
    config: &Configuration,
    nu: &[f64],
) -> Result<f64> {
    let free = mesh.free_dofs();
    let r = internal_force(mesh, config)? - loads.external_force(config, nu, 1.0)?;
    Ok(restrict(&r, &free).norm())
}
