//! Rotation-group utilities, cross-section laws and strain measures.
//!
//! The three-dimensional `SO(3)` pieces (exponential map, hat/vee, the
//! multiplicative rotation update and the virtual strain operator) are kept as
//! standalone kinematics utilities. The finite element solver in [`crate::fem`]
//! uses the planar specialisation: one rotation angle per cross-section and
//! the material strains `ε = R(θ)ᵀφ′ − e₁`, `κ = θ′`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Below this angle the Rodrigues coefficients switch to their Taylor series.
const SMALL_ANGLE: f64 = 1e-8;

/// Rotation pseudo-vector (radians). Its norm is the rotation angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxialVector3(pub Vector3<f64>);

impl AxialVector3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn zeros() -> Self {
        Self(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

/// Proper orthogonal 3×3 tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix after checking `ΛᵀΛ = I` and `det Λ = 1` to `tol`.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if ortho > tol || (det - 1.0).abs() > tol {
            return Err(Error::NotARotation {
                orthogonality: ortho,
                determinant: det,
            });
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation3) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

/// Skew-symmetric matrix with `hat(θ)·v = θ × v`.
pub fn hat(theta: &AxialVector3) -> Matrix3<f64> {
    let t = &theta.0;
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// Axial vector of a skew-symmetric matrix. Rejects matrices whose symmetric
/// part exceeds `1e-12` (max-norm).
pub fn vee(m: &Matrix3<f64>) -> Result<AxialVector3> {
    let sym = (m + m.transpose()) * 0.5;
    let asym = sym.abs().max();
    if asym > 1e-12 {
        return Err(Error::NotSkew(asym));
    }
    Ok(AxialVector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Rodrigues form of the exponential map
/// `cos θ·I + (sin θ/θ)·Θ + ((1 − cos θ)/θ²)·θ⊗θ`.
pub fn exp_so3(theta: &AxialVector3) -> Rotation3 {
    let t = theta.0;
    let a2 = t.norm_squared();
    let a = a2.sqrt();
    let (c, s1, c2) = if a < SMALL_ANGLE {
        (1.0 - 0.5 * a2, 1.0 - a2 / 6.0, 0.5 - a2 / 24.0)
    } else {
        (a.cos(), a.sin() / a, (1.0 - a.cos()) / a2)
    };
    Rotation3(Matrix3::identity() * c + hat(theta) * s1 + t * t.transpose() * c2)
}

/// Multiplicative update `Λ ← Λ·exp[Δθ]` of a nodal rotation.
pub fn rotation_update(lambda: &Rotation3, delta_theta: &AxialVector3) -> Rotation3 {
    lambda.compose(&exp_so3(delta_theta))
}

/// Variations of the material strains for a variation `(δφ′, δθ, δθ′)`.
///
/// `gamma` is the full material stretch vector `Λᵀφ′` and `omega` the
/// curvature vector at the point. Returns `(δε, δω)` with
/// `δε = Λᵀδφ′ + Γ × δθ` and `δω = δθ′ + ω × δθ`.
pub fn virtual_strain_operator_3d(
    lambda: &Rotation3,
    gamma: &Vector3<f64>,
    omega: &Vector3<f64>,
    d_phi_prime: &Vector3<f64>,
    d_theta: &Vector3<f64>,
    d_theta_prime: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let d_eps = lambda.matrix().transpose() * d_phi_prime + gamma.cross(d_theta);
    let d_omega = d_theta_prime + omega.cross(d_theta);
    (d_eps, d_omega)
}

/// Planar rotation matrix `R(θ)`.
pub fn rot2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `dR/dθ`.
pub fn rot2_derivative(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, -c, c, -s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CrossSection {
    Circular { diameter: f64 },
    Rectangular { width: f64, height: f64 },
}

/// Which cross-section dimension acts as the design variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignRole {
    /// Diameter of a circular section.
    Diameter,
    /// Height (bending-plane thickness) of a rectangular section.
    Thickness,
}

/// Area, second moment and polar moment of a section.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionProperties {
    pub area: f64,
    pub inertia: f64,
    pub polar: f64,
}

/// Material and cross-section bundle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionLaw {
    pub young: f64,
    pub shear: f64,
    pub shape: CrossSection,
    #[serde(default = "default_shear_factor")]
    pub shear_factor: f64,
}

fn default_shear_factor() -> f64 {
    1.0
}

/// Diagonal stiffnesses `C = diag(EA, kGA, kGA)` and `D = diag(GJ, EI, EI)`
/// together with their derivative with respect to a design dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionStiffness {
    pub c: [f64; 3],
    pub d: [f64; 3],
    pub dc: [f64; 3],
    pub dd: [f64; 3],
}

impl SectionStiffness {
    pub fn ea(&self) -> f64 {
        self.c[0]
    }
    pub fn ga(&self) -> f64 {
        self.c[1]
    }
    pub fn ei(&self) -> f64 {
        self.d[1]
    }
    /// Planar diagonal `(EA, kGA, EI)`.
    pub fn planar(&self) -> [f64; 3] {
        [self.c[0], self.c[1], self.d[1]]
    }
    /// Derivative of the planar diagonal.
    pub fn planar_derivative(&self) -> [f64; 3] {
        [self.dc[0], self.dc[1], self.dd[1]]
    }
}

impl SectionLaw {
    pub fn new(young: f64, shear: f64, shape: CrossSection) -> Self {
        Self {
            young,
            shear,
            shape,
            shear_factor: 1.0,
        }
    }

    pub fn with_shear_factor(mut self, k: f64) -> Self {
        self.shear_factor = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.young > 0.0) || !(self.shear > 0.0) || !(self.shear_factor > 0.0) {
            return Err(Error::InvalidSection(format!(
                "moduli and shear factor must be positive (E={}, G={}, k={})",
                self.young, self.shear, self.shear_factor
            )));
        }
        let dims_ok = match self.shape {
            CrossSection::Circular { diameter } => diameter > 0.0,
            CrossSection::Rectangular { width, height } => width > 0.0 && height > 0.0,
        };
        if !dims_ok {
            return Err(Error::InvalidSection(format!(
                "non-positive dimension in {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    pub fn properties(&self) -> Result<SectionProperties> {
        self.validate()?;
        Ok(match self.shape {
            CrossSection::Circular { diameter: d } => {
                let i = d.powi(4) * PI / 64.0;
                SectionProperties {
                    area: d * d * PI / 4.0,
                    inertia: i,
                    polar: 2.0 * i,
                }
            }
            CrossSection::Rectangular {
                width: b,
                height: h,
            } => SectionProperties {
                area: b * h,
                inertia: b * h.powi(3) / 12.0,
                polar: b * h * (b * b + h * h) / 12.0,
            },
        })
    }

    /// Derivatives `(∂A, ∂I, ∂J)` with respect to the dimension named by `role`.
    pub fn property_derivatives(&self, role: DesignRole) -> Result<SectionProperties> {
        self.validate()?;
        match (self.shape, role) {
            (CrossSection::Circular { diameter: d }, DesignRole::Diameter) => {
                let di = d.powi(3) * PI / 16.0;
                Ok(SectionProperties {
                    area: d * PI / 2.0,
                    inertia: di,
                    polar: 2.0 * di,
                })
            }
            (
                CrossSection::Rectangular {
                    width: b,
                    height: h,
                },
                DesignRole::Thickness,
            ) => Ok(SectionProperties {
                area: b,
                inertia: b * h * h / 4.0,
                polar: (b.powi(3) + 3.0 * b * h * h) / 12.0,
            }),
            (shape, role) => Err(Error::DesignRole {
                role,
                shape: format!("{shape:?}"),
            }),
        }
    }

    /// Current value of the design dimension.
    pub fn design_value(&self, role: DesignRole) -> Result<f64> {
        match (self.shape, role) {
            (CrossSection::Circular { diameter }, DesignRole::Diameter) => Ok(diameter),
            (CrossSection::Rectangular { height, .. }, DesignRole::Thickness) => Ok(height),
            (shape, role) => Err(Error::DesignRole {
                role,
                shape: format!("{shape:?}"),
            }),
        }
    }

    /// Copy of this law with the design dimension replaced.
    pub fn with_design_value(&self, role: DesignRole, value: f64) -> Result<SectionLaw> {
        let mut out = *self;
        match (&mut out.shape, role) {
            (CrossSection::Circular { diameter }, DesignRole::Diameter) => *diameter = value,
            (CrossSection::Rectangular { height, .. }, DesignRole::Thickness) => *height = value,
            (shape, role) => {
                return Err(Error::DesignRole {
                    role,
                    shape: format!("{shape:?}"),
                })
            }
        }
        Ok(out)
    }

    pub fn stiffness(&self) -> Result<SectionStiffness> {
        let p = self.properties()?;
        let (e, g, k) = (self.young, self.shear, self.shear_factor);
        Ok(SectionStiffness {
            c: [e * p.area, k * g * p.area, k * g * p.area],
            d: [g * p.polar, e * p.inertia, e * p.inertia],
            dc: [0.0; 3],
            dd: [0.0; 3],
        })
    }

    /// Stiffness diagonals and their analytic derivatives with respect to the
    /// design dimension selected by `role`.
    pub fn stiffness_and_sensitivity(&self, role: DesignRole) -> Result<SectionStiffness> {
        let mut s = self.stiffness()?;
        let dp = self.property_derivatives(role)?;
        let (e, g, k) = (self.young, self.shear, self.shear_factor);
        s.dc = [e * dp.area, k * g * dp.area, k * g * dp.area];
        s.dd = [g * dp.polar, e * dp.inertia, e * dp.inertia];
        Ok(s)
    }
}

/// Kinematic quantities of the planar beam at one point of the axis,
/// already expressed per unit arc length of the reference configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointKinematics {
    /// `φ′ = dφ/ds`.
    pub position_derivative: Vector2<f64>,
    /// Cross-section rotation θ.
    pub rotation: f64,
    /// `θ′ = dθ/ds`.
    pub rotation_derivative: f64,
}

impl PointKinematics {
    /// Builds point kinematics from derivatives with respect to the natural
    /// coordinate and the jacobian `j = ds/dξ`.
    pub fn from_natural(
        dphi_dxi: Vector2<f64>,
        theta: f64,
        dtheta_dxi: f64,
        jacobian: f64,
    ) -> Result<Self> {
        if !(jacobian > 0.0) {
            return Err(Error::DegenerateElement {
                element: usize::MAX,
                jacobian,
            });
        }
        Ok(Self {
            position_derivative: dphi_dxi / jacobian,
            rotation: theta,
            rotation_derivative: dtheta_dxi / jacobian,
        })
    }

    /// Raw material measures `(R(θ)ᵀφ′ − e₁, θ′)`.
    pub fn material_measures(&self) -> (Vector2<f64>, f64) {
        let gamma = rot2(self.rotation).transpose() * self.position_derivative;
        (
            Vector2::new(gamma.x - 1.0, gamma.y),
            self.rotation_derivative,
        )
    }
}

/// Planar strains with their reference (stress-free) values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strains2D {
    pub axial: f64,
    pub shear: f64,
    pub curvature: f64,
    pub ref_axial: f64,
    pub ref_shear: f64,
    pub ref_curvature: f64,
}

impl Strains2D {
    pub fn relative(&self) -> [f64; 3] {
        [
            self.axial - self.ref_axial,
            self.shear - self.ref_shear,
            self.curvature - self.ref_curvature,
        ]
    }
}

/// Material strains at a point, with reference strains evaluated identically
/// on the initial geometry.
pub fn material_strains_2d(current: &PointKinematics, reference: &PointKinematics) -> Strains2D {
    let (e, k) = current.material_measures();
    let (e0, k0) = reference.material_measures();
    Strains2D {
        axial: e.x,
        shear: e.y,
        curvature: k,
        ref_axial: e0.x,
        ref_shear: e0.y,
        ref_curvature: k0,
    }
}

/// Material stress resultants `(N, V, M)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressResultants2D {
    pub axial: f64,
    pub shear: f64,
    pub moment: f64,
}

/// `n = C(ε − ε₀)`, `m = EI(κ − κ₀)`.
pub fn stress_resultants(strains: &Strains2D, stiffness: &SectionStiffness) -> StressResultants2D {
    let [de, dg, dk] = strains.relative();
    let [ea, ga, ei] = stiffness.planar();
    StressResultants2D {
        axial: ea * de,
        shear: ga * dg,
        moment: ei * dk,
    }
}

/// Stored energy density `½(ε−ε₀)ᵀC(ε−ε₀) + ½EI(κ−κ₀)²`.
pub fn energy_density(strains: &Strains2D, stiffness: &SectionStiffness) -> f64 {
    let r = strains.relative();
    let c = stiffness.planar();
    0.5 * (c[0] * r[0] * r[0] + c[1] * r[1] * r[1] + c[2] * r[2] * r[2])
}
