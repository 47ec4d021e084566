use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn sample<F: Fn(&[f64]) -> f64>(points: Vec<Vec<f64>>, f: F) -> SampleSet {
    let values = points.iter().map(|p| f(p)).collect();
    SampleSet::new(points, values).unwrap()
}

fn unit_grid(n: usize, lo: f64, hi: f64, nodes: usize) -> Vec<Vec<f64>> {
    SampleSet::grid_points(&vec![(lo, hi); n], &vec![nodes; n]).unwrap()
}

#[test]
fn basis_examples() {
    assert_eq!(
        quadratic_basis(&[0.0, 0.0]).as_slice(),
        &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    );
    assert_eq!(
        quadratic_basis(&[2.0, 3.0]).as_slice(),
        &[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]
    );
    assert_eq!(quadratic_basis(&[1.0; 5]).len(), 21);
    assert_eq!(basis_len(1), 3);
    assert_eq!(quadratic_basis(&[7.0])[0], 1.0);
}

#[test]
fn window_values() {
    assert_eq!(window(0.0), 1.0);
    assert_eq!(window(1.0), 0.0);
    assert_eq!(window(0.5), 0.5);
    assert_eq!(window(3.0), 0.0);
    let mut last = 1.0;
    for k in 0..=100 {
        let w = window(k as f64 / 100.0);
        assert!(w <= last && (0.0..=1.0).contains(&w));
        last = w;
    }
    assert_eq!(window_weight(&[0.0, 0.0], &[3.0, 4.0], 10.0), 0.5);
}

#[test]
fn neighbour_selection() {
    let set = sample(unit_grid(2, 0.0, 4.0, 5), |_| 0.0);
    let nb = select_neighbors(&set, &[1.3, 2.2]).unwrap();
    assert_eq!(nb.indices.len(), 7);

    // query on node (2, 2), index 12
    let nb = select_neighbors(&set, &[2.0, 2.0]).unwrap();
    assert_eq!(nb.indices[0], 12);
    assert_eq!(nb.radius, 2f64.sqrt());
    let mut edges = nb.indices[1..5].to_vec();
    edges.sort();
    assert_eq!(edges, vec![7, 11, 13, 17]);
    // first two diagonals by index
    assert_eq!(&nb.indices[5..], &[6, 8]);

    let few = sample(unit_grid(2, 0.0, 1.0, 2), |_| 0.0);
    assert!(matches!(
        select_neighbors(&few, &[0.5, 0.5]),
        Err(Error::TooFewSamples { needed: 7, got: 4 })
    ));
    assert!(select_neighbors(&set, &[1.0]).is_err());
}

#[test]
fn constant_and_bowl_reproduction() {
    let set = sample(unit_grid(2, -2.0, 2.0, 5), |_| 5.0);
    for q in [[0.3, -1.1], [2.0, 2.0], [0.0, 0.0]] {
        let m = mls_fit(&set, &q).unwrap();
        assert!((m.coefficients[0] - 5.0).abs() < 1e-12);
        assert!(m.coefficients.rows(1, 5).amax() < 1e-12);
    }

    let set = sample(unit_grid(2, -2.0, 2.0, 5), |x| x[0] * x[0] + x[1] * x[1]);
    let m = mls_fit(&set, &[0.0, 0.0]).unwrap();
    assert!((m.hessian.clone() - DMatrix::identity(2, 2) * 2.0).amax() < 1e-10);
    assert!(m.gradient.amax() < 1e-10);
    assert!(m.value.abs() < 1e-10);
    assert!(
        m.enlarged > 0,
        "the nominal set on a grid node has only five weighted samples"
    );
}

/// Normal equations `PWPᵀ a = PWj` in coordinates centred on `x`, solved by LU.
fn dense_oracle(set: &SampleSet, x: &[f64], count: usize) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..set.len()).collect();
    let d = |i: usize| {
        set.points()[i]
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    order.sort_by(|&a, &b| d(a).partial_cmp(&d(b)).unwrap().then(a.cmp(&b)));
    order.truncate(count);
    let r = d(*order.last().unwrap());
    let m = basis_len(x.len());
    let mut moments = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for &i in &order {
        let s = (d(i) / r).min(1.0);
        let w = 1.0 - 3.0 * s * s + 2.0 * s * s * s;
        let centred: Vec<f64> = set.points()[i].iter().zip(x).map(|(a, b)| a - b).collect();
        let p = quadratic_basis(&centred);
        moments += &p * p.transpose() * w;
        rhs += &p * (w * set.values()[i]);
    }
    let coef = moments.lu().solve(&rhs).unwrap();
    (order, coef[0])
}

#[test]
fn random_cubic_matches_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cubic = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        c[0] + c[1] * a
            + c[2] * b
            + c[3] * a * a
            + c[4] * a * b
            + c[5] * b * b
            + c[6] * a * a * a
            + c[7] * a * a * b
            + c[8] * a * b * b
            + c[9] * b * b * b
    };
    let points: Vec<Vec<f64>> = (0..80)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let set = sample(points, cubic);
    for _ in 0..50 {
        let q = [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)];
        let m = mls_fit(&set, &q).unwrap();
        let (idx, value) = dense_oracle(&set, &q, m.neighbors.indices.len());
        assert_eq!(idx, m.neighbors.indices);
        assert!((m.value - value).abs() < 1e-10, "{} vs {value}", m.value);
    }
}

fn random_quadratic(n: usize, rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> f64 {
    let coef: Vec<f64> = (0..basis_len(n))
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    move |x: &[f64]| {
        quadratic_basis(x)
            .iter()
            .zip(&coef)
            .map(|(p, c)| p * c)
            .sum()
    }
}

fn reproduction_error(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_quadratic(n, &mut rng);
    let count = 12 * basis_len(n);
    let points: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let set = sample(points, &f);
    let scale = set.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (0..100)
        .map(|_| {
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            (approximate(&set, &q).unwrap() - f(&q)).abs() / scale
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadratics_are_reproduced(seed in any::<u64>(), n in prop::sample::select(vec![2usize, 3, 5])) {
        let err = reproduction_error(n, seed);
        prop_assert!(err < 1e-9, "n={} err={:e}", n, err);
    }

    #[test]
    fn hessian_is_exactly_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let set = sample(points, |x| (3.0 * x[0]).sin() * x[1].exp() + x[2] * x[2] * x[0]);
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..0.9)).collect();
        let m = mls_fit(&set, &q).unwrap();
        prop_assert_eq!(m.hessian.clone(), m.hessian.transpose());
    }

    #[test]
    fn samples_outside_the_window_do_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let set = sample(points.clone(), |x| (x[0] - 0.3).powi(3) + x[1].cos());
        let q = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
        let m = mls_fit(&set, &q).unwrap();
        let r = m.neighbors.radius;
        let mut values = set.values().to_vec();
        for (i, p) in points.iter().enumerate() {
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            if d > r {
                values[i] += rng.random_range(-100.0..100.0);
            }
        }
        let moved = SampleSet::new(points, values).unwrap();
        let m2 = mls_fit(&moved, &q).unwrap();
        prop_assert_eq!(m.coefficients, m2.coefficients);
    }
}

#[test]
fn approximation_is_continuous_on_smooth_data() {
    let f = |x: &[f64]| 2.0 + (x[0] * 0.8).sin() * (x[1] * 0.5).cos() + 0.1 * x[0] * x[1];
    let set = sample(unit_grid(2, 0.0, 5.0, 11), f);
    let spacing = 0.5;
    let delta = 1e-6 * spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..2000 {
        let q = [rng.random_range(0.1..4.9), rng.random_range(0.1..4.9)];
        let a = approximate(&set, &q).unwrap();
        let b = approximate(&set, &[q[0] + delta, q[1] + delta]).unwrap();
        assert!(
            (a - b).abs() < 1e-3 * a.abs(),
            "jump {} at {q:?}",
            (a - b).abs()
        );
    }
}

#[test]
fn bowl_minimum_in_few_newton_steps() {
    let f = |x: &[f64]| {
        3.0 + (x[0] - 1.2).powi(2) + 2.0 * (x[1] + 0.7).powi(2) + 0.5 * (x[0] - 1.2) * (x[1] + 0.7)
    };
    let set = sample(unit_grid(2, -3.0, 3.0, 7), f);
    let res = surface_minimize(&set, &[-2.5, 2.5], &SurfaceOptions::default()).unwrap();
    assert!(res.converged);
    assert!(res.iterations <= 3, "{}", res.iterations);
    assert!(
        (res.x[0] - 1.2).abs() < 1e-8 && (res.x[1] + 0.7).abs() < 1e-8,
        "{:?}",
        res.x
    );
    assert!((res.value - 3.0).abs() < 1e-10);
    assert_eq!(res.trail[0], vec![-2.5, 2.5]);

    let slow = surface_minimize(
        &set,
        &[-2.5, 2.5],
        &SurfaceOptions {
            gradient_only: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(slow.converged);
    assert!(
        (slow.x[0] - 1.2).abs() < 1e-4 && (slow.x[1] + 0.7).abs() < 1e-4,
        "{:?}",
        slow.x
    );
    assert!(slow.iterations > res.iterations);
}

#[test]
fn descent_stops_on_the_box() {
    let set = sample(unit_grid(2, 0.0, 1.0, 6), |x| {
        (x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2)
    });
    let res = surface_minimize(&set, &[0.9, 0.9], &SurfaceOptions::default()).unwrap();
    assert!(res.converged);
    assert!(
        res.x[0].abs() < 1e-12 && (res.x[1] - 0.5).abs() < 1e-6,
        "{:?}",
        res.x
    );
    assert!(res
        .trail
        .iter()
        .all(|p| p.iter().all(|v| (0.0..=1.0).contains(v))));
    assert!(surface_minimize(&set, &[1.5, 0.5], &SurfaceOptions::default()).is_err());
}

#[test]
fn grid_build_and_csv_round_trip() {
    let set = SampleSet::from_grid(&[(10.0, 60.0), (175.0, 225.0)], &[4, 3], |x| {
        Ok(x[0].ln() * x[1].sqrt() / 7.0)
    })
    .unwrap();
    assert_eq!(set.len(), 12);
    assert_eq!(set.grid_shape(), Some(&[4usize, 3][..]));
    assert_eq!(set.points()[0], vec![10.0, 175.0]);
    assert_eq!(set.points()[11], vec![60.0, 225.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.csv");
    set.write_csv(&path).unwrap();
    let back = SampleSet::read_csv(&path).unwrap();
    assert_eq!(back.points(), set.points());
    assert_eq!(back.values(), set.values());
    let q = [33.3, 201.0];
    assert_eq!(mls_fit(&back, &q).unwrap(), mls_fit(&set, &q).unwrap());

    assert!(SampleSet::from_grid(&[(1.0, 1.0)], &[3], |_| Ok(0.0)).is_err());
    assert!(SampleSet::from_grid(&[(0.0, 1.0)], &[3], |_| Err(Error::SingularTangent)).is_err());
    assert!(SampleSet::read_csv(&dir.path().join("missing.csv")).is_err());
}
