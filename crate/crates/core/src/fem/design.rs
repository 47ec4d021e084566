use serde::{Deserialize, Serialize};

use crate::beam::DesignRole;
use crate::error::{Error, Result};

/// Bernstein polynomials of the given degree at `t ∈ [0, 1]`.
pub fn bernstein(degree: usize, t: f64) -> Vec<f64> {
    // de Casteljau style build-up, stable at the end points
    let mut b = vec![0.0; degree + 1];
    b[0] = 1.0;
    let u = 1.0 - t;
    for j in 1..=degree {
        let mut saved = 0.0;
        for k in 0..j {
            let tmp = b[k];
            b[k] = saved + u * tmp;
            saved = t * tmp;
        }
        b[j] = saved;
    }
    b
}

/// Derivatives of the Bernstein polynomials with respect to `t`.
pub fn bernstein_derivative(degree: usize, t: f64) -> Vec<f64> {
    let mut d = vec![0.0; degree + 1];
    if degree == 0 {
        return d;
    }
    let lower = bernstein(degree - 1, t);
    let p = degree as f64;
    for k in 0..=degree {
        let left = if k > 0 { lower[k - 1] } else { 0.0 };
        let right = if k < degree { lower[k] } else { 0.0 };
        d[k] = p * (left - right);
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignBasis {
    /// Variable `i` sets the section of every element in group `i`.
    Groups(Vec<Vec<usize>>),
    /// One Bézier design element spanning an ordered chain of elements; the
    /// variables are its control values.
    Bezier { chain: Vec<usize> },
}

/// Parameterisation of one section dimension along the mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignField {
    pub role: DesignRole,
    pub basis: DesignBasis,
    pub values: Vec<f64>,
}

impl DesignField {
    /// One variable per listed element.
    pub fn per_element(role: DesignRole, elements: &[usize], values: Vec<f64>) -> Result<Self> {
        let groups = elements.iter().map(|&e| vec![e]).collect();
        Self::new(role, DesignBasis::Groups(groups), values)
    }

    pub fn bezier(role: DesignRole, chain: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(role, DesignBasis::Bezier { chain }, values)
    }

    pub fn new(role: DesignRole, basis: DesignBasis, values: Vec<f64>) -> Result<Self> {
        let expected = match &basis {
            DesignBasis::Groups(g) => g.len(),
            DesignBasis::Bezier { chain } => {
                if chain.is_empty() || values.is_empty() {
                    return Err(Error::InvalidMesh("empty Bézier design element".into()));
                }
                values.len()
            }
        };
        if values.len() != expected {
            return Err(Error::Dimension {
                what: "design values",
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            role,
            basis,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Dimension {
                what: "design values",
                expected: self.values.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            values: values.to_vec(),
            ..self.clone()
        })
    }

    /// Largest element index referenced.
    pub fn max_element(&self) -> Option<usize> {
        match &self.basis {
            DesignBasis::Groups(g) => g.iter().flatten().copied().max(),
            DesignBasis::Bezier { chain } => chain.iter().copied().max(),
        }
    }

    /// Design value at natural coordinate `xi` of `element` and its
    /// coefficients on the design variables, or `None` if the element is not
    /// governed by this field.
    pub fn sample(&self, element: usize, xi: f64) -> Option<(f64, Vec<(usize, f64)>)> {
        match &self.basis {
            DesignBasis::Groups(groups) => groups
                .iter()
                .position(|g| g.contains(&element))
                .map(|i| (self.values[i], vec![(i, 1.0)])),
            DesignBasis::Bezier { chain } => {
                let k = chain.iter().position(|&e| e == element)?;
                let t = (k as f64 + 0.5 * (xi + 1.0)) / chain.len() as f64;
                let b = bernstein(self.values.len() - 1, t);
                let value = b.iter().zip(&self.values).map(|(w, v)| w * v).sum();
                Some((value, b.into_iter().enumerate().collect()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bernstein_partition_of_unity(deg in 0usize..8, t in 0.0f64..=1.0) {
            let b = bernstein(deg, t);
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            prop_assert!(b.iter().all(|&v| v >= 0.0));
            let d = bernstein_derivative(deg, t);
            prop_assert!(d.iter().sum::<f64>().abs() < 1e-12);
        }

        #[test]
        fn bezier_field_partition_of_unity(xi in -1.0f64..=1.0, k in 0usize..5) {
            let f = DesignField::bezier(DesignRole::Diameter, vec![0, 1, 2, 3, 4], vec![1.0; 4]).unwrap();
            let (v, coeffs) = f.sample(k, xi).unwrap();
            prop_assert!((v - 1.0).abs() < 1e-14);
            prop_assert!((coeffs.iter().map(|c| c.1).sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn bernstein_derivative_matches_difference() {
        let h = 1e-6;
        for deg in 1..6 {
            let d = bernstein_derivative(deg, 0.3);
            let p = bernstein(deg, 0.3 + h);
            let m = bernstein(deg, 0.3 - h);
            for k in 0..=deg {
                assert!(((p[k] - m[k]) / (2.0 * h) - d[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn groups_sample_and_misses() {
        let f = DesignField::per_element(DesignRole::Thickness, &[0, 2], vec![10.0, 20.0]).unwrap();
        assert_eq!(f.sample(2, 0.0), Some((20.0, vec![(1, 1.0)])));
        assert_eq!(f.sample(1, 0.0), None);
        assert!(f.with_values(&[1.0]).is_err());
    }

    #[test]
    fn bezier_end_values_interpolate() {
        let f = DesignField::bezier(DesignRole::Diameter, vec![0, 1], vec![2.0, 5.0, 3.0]).unwrap();
        assert!((f.sample(0, -1.0).unwrap().0 - 2.0).abs() < 1e-15);
        assert!((f.sample(1, 1.0).unwrap().0 - 3.0).abs() < 1e-15);
    }
}
