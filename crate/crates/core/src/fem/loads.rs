use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::mesh::{Configuration, Mesh};
use crate::beam::{rot2, rot2_derivative};
use crate::error::{Error, Result};

/// Nodal load per unit multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadPattern {
    /// Fixed-direction force and moment.
    Dead {
        node: usize,
        #[serde(default)]
        fx: f64,
        #[serde(default)]
        fy: f64,
        #[serde(default)]
        moment: f64,
    },
    /// Force given in the frame of the node's cross-section.
    Follower { node: usize, px: f64, py: f64 },
}

impl LoadPattern {
    pub fn node(&self) -> usize {
        match *self {
            LoadPattern::Dead { node, .. } | LoadPattern::Follower { node, .. } => node,
        }
    }

    fn add_force(&self, config: &Configuration, scale: f64, f: &mut DVector<f64>) {
        match *self {
            LoadPattern::Dead {
                node,
                fx,
                fy,
                moment,
            } => {
                f[3 * node] += scale * fx;
                f[3 * node + 1] += scale * fy;
                f[3 * node + 2] += scale * moment;
            }
            LoadPattern::Follower { node, px, py } => {
                let (force, _) = follower_load_work(config, node, Vector2::new(px, py));
                f[3 * node] += scale * force.x;
                f[3 * node + 1] += scale * force.y;
            }
        }
    }

    fn add_stiffness(&self, config: &Configuration, scale: f64, k: &mut DMatrix<f64>) {
        if let LoadPattern::Follower { node, px, py } = *self {
            let (_, d) = follower_load_work(config, node, Vector2::new(px, py));
            k[(3 * node, 3 * node + 2)] += scale * d.x;
            k[(3 * node + 1, 3 * node + 2)] += scale * d.y;
        }
    }
}

/// Spatial force `R(θ_a)p₀` of a follower load and its derivative with
/// respect to the nodal rotation.
pub fn follower_load_work(
    config: &Configuration,
    node: usize,
    p0: Vector2<f64>,
) -> (Vector2<f64>, Vector2<f64>) {
    let th = config.rotation(node);
    (rot2(th) * p0, rot2_derivative(th) * p0)
}

/// Fixed loads plus one load pattern group per control variable, so that
/// `f_ext = fixed + Σ_k ν_k F₀[:, k]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCase {
    #[serde(default)]
    pub fixed: Vec<LoadPattern>,
    #[serde(default)]
    pub controls: Vec<Vec<LoadPattern>>,
}

impl LoadCase {
    pub fn control_count(&self) -> usize {
        self.controls.len()
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let all = self.fixed.iter().chain(self.controls.iter().flatten());
        for p in all {
            if p.node() >= mesh.node_count() {
                return Err(Error::InvalidLoads(format!(
                    "load on missing node {}",
                    p.node()
                )));
            }
        }
        Ok(())
    }

    fn check_controls(&self, nu: &[f64]) -> Result<()> {
        if nu.len() != self.controls.len() {
            return Err(Error::Dimension {
                what: "control vector",
                expected: self.controls.len(),
                got: nu.len(),
            });
        }
        Ok(())
    }

    /// External nodal forces at `config` scaled by `load_factor`.
    pub fn external_force(
        &self,
        config: &Configuration,
        nu: &[f64],
        load_factor: f64,
    ) -> Result<DVector<f64>> {
        self.check_controls(nu)?;
        let mut f = DVector::zeros(config.0.len());
        for p in &self.fixed {
            p.add_force(config, load_factor, &mut f);
        }
        for (group, &v) in self.controls.iter().zip(nu) {
            for p in group {
                p.add_force(config, load_factor * v, &mut f);
            }
        }
        Ok(f)
    }

    /// `∂f_ext/∂φ`; nonzero only through follower loads.
    pub fn load_stiffness(
        &self,
        config: &Configuration,
        nu: &[f64],
        load_factor: f64,
    ) -> Result<DMatrix<f64>> {
        self.check_controls(nu)?;
        let n = config.0.len();
        let mut k = DMatrix::zeros(n, n);
        for p in &self.fixed {
            p.add_stiffness(config, load_factor, &mut k);
        }
        for (group, &v) in self.controls.iter().zip(nu) {
            for p in group {
                p.add_stiffness(config, load_factor * v, &mut k);
            }
        }
        Ok(k)
    }

    /// Control influence matrix `F₀ = ∂f_ext/∂ν` at `config`.
    pub fn control_matrix(&self, config: &Configuration) -> DMatrix<f64> {
        let mut f0 = DMatrix::zeros(config.0.len(), self.controls.len());
        for (k, group) in self.controls.iter().enumerate() {
            let mut col = DVector::zeros(config.0.len());
            for p in group {
                p.add_force(config, 1.0, &mut col);
            }
            f0.set_column(k, &col);
        }
        f0
    }

    /// `∂/∂φ (F₀ᵀλ)`: derivative of the control-load work with multiplier `λ`,
    /// one row per control variable.
    pub fn control_matrix_state_derivative(
        &self,
        config: &Configuration,
        lambda: &DVector<f64>,
    ) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.controls.len(), config.0.len());
        for (k, group) in self.controls.iter().enumerate() {
            for p in group {
                if let LoadPattern::Follower { node, px, py } = *p {
                    let (_, dp) = follower_load_work(config, node, Vector2::new(px, py));
                    d[(k, 3 * node + 2)] += lambda[3 * node] * dp.x + lambda[3 * node + 1] * dp.y;
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn config_with_rotation(th: f64) -> Configuration {
        Configuration::from_vec(vec![0.0, 0.0, th])
    }

    #[test]
    fn follower_unrotated_and_quarter_turn() {
        let (f, _) = follower_load_work(&config_with_rotation(0.0), 0, Vector2::new(0.3, -0.4));
        assert_eq!(f, Vector2::new(0.3, -0.4));
        let (f, _) = follower_load_work(&config_with_rotation(PI / 2.0), 0, Vector2::new(1.0, 0.0));
        assert!((f - Vector2::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn follower_tangent_matches_difference() {
        let p0 = Vector2::new(0.7, -1.3);
        for &th in &[-2.0, -0.3, 0.0, 0.8, 2.9] {
            let h = 1e-6;
            let (_, d) = follower_load_work(&config_with_rotation(th), 0, p0);
            let (fp, _) = follower_load_work(&config_with_rotation(th + h), 0, p0);
            let (fm, _) = follower_load_work(&config_with_rotation(th - h), 0, p0);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - d).norm() <= 1e-7 * d.norm(), "{fd} vs {d}");
        }
    }

    #[test]
    fn control_matrix_scales_linearly() {
        let lc = LoadCase {
            fixed: vec![],
            controls: vec![
                vec![LoadPattern::Dead {
                    node: 0,
                    fx: 0.0,
                    fy: 1.0,
                    moment: 0.0,
                }],
                vec![LoadPattern::Dead {
                    node: 0,
                    fx: 0.0,
                    fy: 0.0,
                    moment: 1.0,
                }],
            ],
        };
        let c = config_with_rotation(0.4);
        let f = lc.external_force(&c, &[3.0, 5.0], 0.5).unwrap();
        let f0 = lc.control_matrix(&c);
        let g = f0 * nalgebra::DVector::from_vec(vec![3.0, 5.0]) * 0.5;
        assert!((f - g).norm() < 1e-15);
        assert!(lc.external_force(&c, &[1.0], 1.0).is_err());
    }
}
