use crate::error::{Error, Result};

/// Lagrange shape functions on equally spaced nodes of `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeValues {
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

/// Natural coordinates of the nodes of an `n_en`-node element.
pub fn nodal_coordinates(n_en: usize) -> Result<Vec<f64>> {
    if !(2..=4).contains(&n_en) {
        return Err(Error::ElementOrder(n_en));
    }
    let h = 2.0 / (n_en - 1) as f64;
    Ok((0..n_en).map(|a| -1.0 + h * a as f64).collect())
}

pub fn lagrange_shape(n_en: usize, xi: f64) -> Result<ShapeValues> {
    let nodes = nodal_coordinates(n_en)?;
    if !(-1.0..=1.0).contains(&xi) {
        return Err(Error::OutsideElement(xi));
    }
    let mut values = vec![0.0; n_en];
    let mut derivatives = vec![0.0; n_en];
    for a in 0..n_en {
        let denom: f64 = (0..n_en)
            .filter(|&b| b != a)
            .map(|b| nodes[a] - nodes[b])
            .product();
        let prod: f64 = (0..n_en)
            .filter(|&b| b != a)
            .map(|b| xi - nodes[b])
            .product();
        values[a] = prod / denom;
        let mut d = 0.0;
        for k in (0..n_en).filter(|&k| k != a) {
            d += (0..n_en)
                .filter(|&b| b != a && b != k)
                .map(|b| xi - nodes[b])
                .product::<f64>();
        }
        derivatives[a] = d / denom;
    }
    Ok(ShapeValues {
        values,
        derivatives,
    })
}

/// Gauss-Legendre abscissas and weights on `[-1, 1]`.
pub fn gauss_rule(points: usize) -> Result<Vec<(f64, f64)>> {
    let r = match points {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (0.6f64).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        4 => {
            let s = (6.0 / 5.0f64).sqrt();
            let a = ((3.0 - 2.0 * s) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * s) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            vec![(-b, wb), (-a, wa), (a, wa), (b, wb)]
        }
        n => return Err(Error::QuadratureRule(n)),
    };
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_element_midpoint_and_end() {
        let s = lagrange_shape(2, 0.0).unwrap();
        assert_eq!(s.values, vec![0.5, 0.5]);
        assert_eq!(s.derivatives, vec![-0.5, 0.5]);
        assert_eq!(lagrange_shape(2, -1.0).unwrap().values, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            lagrange_shape(2, 1.5),
            Err(Error::OutsideElement(_))
        ));
        assert!(matches!(
            lagrange_shape(5, 0.0),
            Err(Error::ElementOrder(5))
        ));
        assert!(matches!(gauss_rule(0), Err(Error::QuadratureRule(0))));
    }

    #[test]
    fn quadratic_matches_closed_form() {
        // independent closed forms for nodes -1, 0, 1
        for &xi in &[-0.83, -0.2, 0.0, 0.37, 0.91] {
            let s = lagrange_shape(3, xi).unwrap();
            let expect = [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)];
            let dexpect = [xi - 0.5, -2.0 * xi, xi + 0.5];
            for a in 0..3 {
                assert!((s.values[a] - expect[a]).abs() < 1e-14);
                assert!((s.derivatives[a] - dexpect[a]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kronecker_property() {
        for n in 2..=4 {
            let nodes = nodal_coordinates(n).unwrap();
            for (b, &xb) in nodes.iter().enumerate() {
                let s = lagrange_shape(n, xb).unwrap();
                for a in 0..n {
                    let e = if a == b { 1.0 } else { 0.0 };
                    assert!((s.values[a] - e).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        for p in 1..=4 {
            let rule = gauss_rule(p).unwrap();
            for deg in 0..2 * p {
                let q: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!((q - exact).abs() < 1e-14, "p={p} deg={deg}");
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(n in 2usize..=4, xi in -1.0f64..=1.0) {
            let s = lagrange_shape(n, xi).unwrap();
            prop_assert!((s.values.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            prop_assert!(s.derivatives.iter().sum::<f64>().abs() < 1e-13);
        }

        #[test]
        fn derivative_matches_difference(n in 2usize..=4, xi in -0.99f64..0.99) {
            let h = 1e-6;
            let s = lagrange_shape(n, xi).unwrap();
            let p = lagrange_shape(n, xi + h).unwrap();
            let m = lagrange_shape(n, xi - h).unwrap();
            for a in 0..n {
                let fd = (p.values[a] - m.values[a]) / (2.0 * h);
                prop_assert!((fd - s.derivatives[a]).abs() < 1e-8);
            }
        }
    }
}
