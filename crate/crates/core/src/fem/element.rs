use nalgebra::{DMatrix, DVector, Vector2};

use super::mesh::{Configuration, Mesh};
use super::shape::{gauss_rule, lagrange_shape};
use crate::beam::{
    energy_density, material_strains_2d, rot2, stress_resultants, PointKinematics, SectionLaw,
    Strains2D,
};
use crate::error::{Error, Result};

/// Everything known at one quadrature point of an element.
#[derive(Clone, Debug)]
pub struct GaussPoint {
    pub xi: f64,
    pub weight: f64,
    /// Reference jacobian `ds/dξ`.
    pub jacobian: f64,
    pub shape: Vec<f64>,
    /// Shape derivatives with respect to reference arc length.
    pub shape_s: Vec<f64>,
    pub rotation: f64,
    /// Full material stretch `R(θ)ᵀφ′`.
    pub stretch: Vector2<f64>,
    pub strains: Strains2D,
    pub section: SectionLaw,
    pub design: Option<Vec<(usize, f64)>>,
}

impl GaussPoint {
    /// `j·w`, the reference arc length carried by this point.
    pub fn measure(&self) -> f64 {
        self.jacobian * self.weight
    }

    /// Strain-displacement rows `(ε₁, ε₂, κ)` for the element dofs.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let n_en = self.shape.len();
        let (s, c) = self.rotation.sin_cos();
        let mut b = DMatrix::zeros(3, 3 * n_en);
        for a in 0..n_en {
            let d = self.shape_s[a];
            let n = self.shape[a];
            b[(0, 3 * a)] = c * d;
            b[(1, 3 * a)] = -s * d;
            b[(0, 3 * a + 1)] = s * d;
            b[(1, 3 * a + 1)] = c * d;
            b[(0, 3 * a + 2)] = n * self.stretch.y;
            b[(1, 3 * a + 2)] = -n * self.stretch.x;
            b[(2, 3 * a + 2)] = d;
        }
        b
    }
}

fn element_dofs(mesh: &Mesh, e: usize) -> Vec<usize> {
    mesh.elements[e]
        .nodes
        .iter()
        .flat_map(|&n| [3 * n, 3 * n + 1, 3 * n + 2])
        .collect()
}

/// Global dof indices of element `e`, in local order.
pub fn element_dof_map(mesh: &Mesh, e: usize) -> Vec<usize> {
    element_dofs(mesh, e)
}

pub fn gauss_points(mesh: &Mesh, config: &Configuration, e: usize) -> Result<Vec<GaussPoint>> {
    let el = &mesh.elements[e];
    let mut out = Vec::with_capacity(el.gauss_points);
    for (xi, weight) in gauss_rule(el.gauss_points)? {
        let sh = lagrange_shape(el.nodes.len(), xi)?;
        let mut dx0 = Vector2::zeros();
        let mut dx = Vector2::zeros();
        let (mut th0, mut dth0, mut th, mut dth) = (0.0, 0.0, 0.0, 0.0);
        for (a, &n) in el.nodes.iter().enumerate() {
            let rn = mesh.nodes[n];
            dx0 += Vector2::new(rn.x, rn.y) * sh.derivatives[a];
            th0 += rn.theta * sh.values[a];
            dth0 += rn.theta * sh.derivatives[a];
            dx += config.position(n) * sh.derivatives[a];
            th += config.rotation(n) * sh.values[a];
            dth += config.rotation(n) * sh.derivatives[a];
        }
        let j = dx0.norm();
        if !(j > 1e-14) {
            return Err(Error::DegenerateElement {
                element: e,
                jacobian: j,
            });
        }
        let reference = PointKinematics::from_natural(dx0, th0, dth0, j)?;
        let current = PointKinematics::from_natural(dx, th, dth, j)?;
        let strains = material_strains_2d(&current, &reference);
        let (section, design) = mesh.section_at(e, xi)?;
        out.push(GaussPoint {
            xi,
            weight,
            jacobian: j,
            shape: sh.values,
            shape_s: sh.derivatives.iter().map(|d| d / j).collect(),
            rotation: th,
            stretch: rot2(th).transpose() * current.position_derivative,
            strains,
            section,
            design,
        });
    }
    Ok(out)
}

/// Stored strain energy of element `e`.
pub fn element_energy(mesh: &Mesh, config: &Configuration, e: usize) -> Result<f64> {
    let mut w = 0.0;
    for gp in gauss_points(mesh, config, e)? {
        w += energy_density(&gp.strains, &gp.section.stiffness()?) * gp.measure();
    }
    Ok(w)
}

/// Internal force vector `Σ Bᵀ(n, m) j w` of element `e`. Elements carry no
/// distributed load, so this is the element residual.
pub fn element_residual(mesh: &Mesh, config: &Configuration, e: usize) -> Result<DVector<f64>> {
    Ok(element_forces(mesh, config, e, false)?.0)
}

/// Material plus geometric stiffness of element `e`.
pub fn element_tangent(mesh: &Mesh, config: &Configuration, e: usize) -> Result<DMatrix<f64>> {
    Ok(element_forces(mesh, config, e, true)?
        .1
        .expect("tangent requested"))
}

/// Residual and, on request, tangent of element `e` from one pass over its
/// quadrature points.
pub fn element_forces(
    mesh: &Mesh,
    config: &Configuration,
    e: usize,
    with_tangent: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let n_en = mesh.elements[e].nodes.len();
    let mut f = DVector::zeros(3 * n_en);
    let mut k = with_tangent.then(|| DMatrix::zeros(3 * n_en, 3 * n_en));
    for gp in gauss_points(mesh, config, e)? {
        let stiff = gp.section.stiffness()?;
        let r = stress_resultants(&gp.strains, &stiff);
        let b = gp.b_matrix();
        let jw = gp.measure();
        f += b.tr_mul(&DVector::from_column_slice(&[r.axial, r.shear, r.moment])) * jw;
        let Some(k) = k.as_mut() else { continue };

        let [ea, ga, ei] = stiff.planar();
        let mut db = b.clone();
        for (row, scale) in [ea, ga, ei].into_iter().enumerate() {
            db.row_mut(row).scale_mut(scale * jw);
        }
        *k += b.tr_mul(&db);

        let (s, c) = gp.rotation.sin_cos();
        let (n1, n2) = (r.axial, r.shear);
        let gx = -s * n1 - c * n2;
        let gy = c * n1 - s * n2;
        let gt = -(n1 * gp.stretch.x + n2 * gp.stretch.y);
        for a in 0..n_en {
            for bb in 0..n_en {
                let cross = gp.shape_s[a] * gp.shape[bb] * jw;
                k[(3 * a, 3 * bb + 2)] += cross * gx;
                k[(3 * bb + 2, 3 * a)] += cross * gx;
                k[(3 * a + 1, 3 * bb + 2)] += cross * gy;
                k[(3 * bb + 2, 3 * a + 1)] += cross * gy;
                k[(3 * a + 2, 3 * bb + 2)] += gp.shape[a] * gp.shape[bb] * gt * jw;
            }
        }
    }
    Ok((f, k))
}

/// Derivative of the element internal force with respect to each design
/// variable acting on it: `(variable, ∂f/∂d)` pairs.
pub fn element_design_sensitivity(
    mesh: &Mesh,
    config: &Configuration,
    e: usize,
) -> Result<Vec<(usize, DVector<f64>)>> {
    let Some(field) = mesh.design.as_ref() else {
        return Ok(Vec::new());
    };
    let mut out: Vec<(usize, DVector<f64>)> = Vec::new();
    for gp in gauss_points(mesh, config, e)? {
        let Some(coeffs) = &gp.design else { continue };
        let sens = gp.section.stiffness_and_sensitivity(field.role)?;
        let [dea, dga, dei] = sens.planar_derivative();
        let [r1, r2, r3] = gp.strains.relative();
        let dn = nalgebra::Vector3::new(dea * r1, dga * r2, dei * r3);
        let col = gp.b_matrix().transpose() * dn * gp.measure();
        for &(var, coef) in coeffs {
            match out.iter_mut().find(|(v, _)| *v == var) {
                Some((_, acc)) => *acc += &col * coef,
                None => out.push((var, &col * coef)),
            }
        }
    }
    Ok(out)
}

/// Scatters element contributions into global vectors.
pub fn scatter_vector(global: &mut DVector<f64>, dofs: &[usize], local: &DVector<f64>) {
    for (i, &g) in dofs.iter().enumerate() {
        global[g] += local[i];
    }
}

pub fn scatter_matrix(global: &mut DMatrix<f64>, dofs: &[usize], local: &DMatrix<f64>) {
    for (i, &gi) in dofs.iter().enumerate() {
        for (j, &gj) in dofs.iter().enumerate() {
            global[(gi, gj)] += local[(i, j)];
        }
    }
}
