//! Diffuse (moving least squares) response surface over a box of design or
//! control variables, and descent on that surface.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Smallest accepted reciprocal condition number of the scaled moment matrix.
const MOMENT_RCOND: f64 = 1e-10;

/// Length of the full quadratic basis in `n` variables.
pub fn basis_len(n: usize) -> usize {
    1 + n + n * (n + 1) / 2
}

/// `[1, x_1..x_n, x_1², x_1x_2, .., x_n²]`.
pub fn quadratic_basis(x: &[f64]) -> DVector<f64> {
    let n = x.len();
    let mut p = Vec::with_capacity(basis_len(n));
    p.push(1.0);
    p.extend_from_slice(x);
    for i in 0..n {
        for j in i..n {
            p.push(x[i] * x[j]);
        }
    }
    DVector::from_vec(p)
}

/// Cubic window `1 − 3s² + 2s³`, clipped to zero beyond `s = 1`.
pub fn window(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    1.0 - 3.0 * s * s + 2.0 * s * s * s
}

pub fn window_weight(x: &[f64], sample: &[f64], radius: f64) -> f64 {
    window(distance(x, sample) / radius)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Cost values on a set of points of the variable box.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    grid: Option<Vec<usize>>,
}

impl SampleSet {
    /// Scattered samples; the box is their bounding box.
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if values.len() != points.len() {
            return Err(Error::Dimension {
                what: "sample values",
                expected: points.len(),
                got: values.len(),
            });
        }
        let n = points[0].len();
        if n == 0 {
            return Err(Error::Settings("samples need at least one variable".into()));
        }
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
        for p in &points {
            if p.len() != n {
                return Err(Error::Dimension {
                    what: "sample point",
                    expected: n,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Settings("sample point is not finite".into()));
            }
            for (b, &v) in bounds.iter_mut().zip(p) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Settings("sample value is not finite".into()));
        }
        Ok(Self {
            points,
            values,
            bounds,
            grid: None,
        })
    }

    /// Tensor grid with `shape[k]` equally spaced nodes along variable `k`,
    /// ends included. Points are ordered with the first variable fastest.
    pub fn grid_points(bounds: &[(f64, f64)], shape: &[usize]) -> Result<Vec<Vec<f64>>> {
        if bounds.len() != shape.len() || bounds.is_empty() {
            return Err(Error::Dimension {
                what: "grid shape",
                expected: bounds.len(),
                got: shape.len(),
            });
        }
        for (k, (&(lo, hi), &s)) in bounds.iter().zip(shape).enumerate() {
            if !(lo < hi) {
                return Err(Error::Settings(format!("empty box for variable {}", k + 1)));
            }
            if s < 2 {
                return Err(Error::Settings(format!(
                    "grid needs at least 2 nodes along variable {}",
                    k + 1
                )));
            }
        }
        let total: usize = shape.iter().product();
        Ok((0..total)
            .map(|mut idx| {
                bounds
                    .iter()
                    .zip(shape)
                    .map(|(&(lo, hi), &s)| {
                        let i = idx % s;
                        idx /= s;
                        if i == s - 1 {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (s - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// Evaluates `cost` at every grid node in parallel.
    pub fn from_grid<F>(bounds: &[(f64, f64)], shape: &[usize], cost: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let points = Self::grid_points(bounds, shape)?;
        let values = points
            .par_iter()
            .map(|p| cost(p))
            .collect::<Result<Vec<_>>>()?;
        let mut set = Self::new(points, values)?;
        set.bounds = bounds.to_vec();
        set.grid = Some(shape.to_vec());
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn grid_shape(&self) -> Option<&[usize]> {
        self.grid.as_deref()
    }

    /// Overrides the box, which must contain every sample.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dimension() {
            return Err(Error::Dimension {
                what: "bounds",
                expected: self.dimension(),
                got: bounds.len(),
            });
        }
        let inside = self.points.iter().all(|p| {
            p.iter()
                .zip(&bounds)
                .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
        });
        if !inside {
            return Err(Error::Settings("samples lie outside the given box".into()));
        }
        self.bounds = bounds;
        Ok(self)
    }

    /// Writes `x1..xn,J` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header: Vec<String> = (1..=self.dimension()).map(|k| format!("x{k}")).collect();
        header.push("J".into());
        w.write_record(&header).map_err(err)?;
        for (p, v) in self.points.iter().zip(&self.values) {
            let row: Vec<String> = p
                .iter()
                .chain(std::iter::once(v))
                .map(|x| x.to_string())
                .collect();
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(err)?;
        let n = r.headers().map_err(err)?.len().saturating_sub(1);
        let mut points = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if row.len() != n + 1 {
                return Err(Error::Dimension {
                    what: "csv row",
                    expected: n + 1,
                    got: row.len(),
                });
            }
            values.push(row[n]);
            points.push(row[..n].to_vec());
        }
        Self::new(points, values)
    }
}

/// Nearest samples of a query point and the radius of their window.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<usize>,
    pub radius: f64,
}

fn nearest(set: &SampleSet, x: &[f64], count: usize) -> Neighbors {
    let mut order: Vec<(f64, usize)> = set
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (distance(x, p), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(count);
    let radius = order.last().map_or(0.0, |o| o.0);
    Neighbors {
        indices: order.into_iter().map(|o| o.1).collect(),
        radius,
    }
}

/// The `m + 1` nearest samples, `m` being the basis length.
pub fn select_neighbors(set: &SampleSet, x: &[f64]) -> Result<Neighbors> {
    if x.len() != set.dimension() {
        return Err(Error::Dimension {
            what: "query point",
            expected: set.dimension(),
            got: x.len(),
        });
    }
    let needed = basis_len(x.len()) + 1;
    if set.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            got: set.len(),
        });
    }
    Ok(nearest(set, x, needed))
}

/// Local quadratic model `J(y) ≈ c + bᵀ(y − x) + ½(y − x)ᵀH(y − x)` at a
/// query point `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffuseModel {
    pub center: DVector<f64>,
    /// Coefficients in the basis of `y − x`.
    pub coefficients: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub neighbors: Neighbors,
    /// Samples added beyond the nominal neighbour count.
    pub enlarged: usize,
    pub ridge: bool,
}

impl DiffuseModel {
    /// Evaluates the frozen quadratic at `y`.
    pub fn predict(&self, y: &[f64]) -> f64 {
        let d = DVector::from_column_slice(y) - &self.center;
        self.value + self.gradient.dot(&d) + 0.5 * d.dot(&(&self.hessian * &d))
    }

    pub fn hessian_is_positive_definite(&self) -> bool {
        Cholesky::new(self.hessian.clone()).is_some()
    }
}

/// Rows `√w p(t)ᵀ` and entries `√w J` of the weighted fit, in coordinates
/// `t = (y − x) / r`. Samples with zero weight are skipped.
fn weighted_system(set: &SampleSet, x: &[f64], nb: &Neighbors) -> (DMatrix<f64>, DVector<f64>) {
    let m = basis_len(x.len());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for &i in &nb.indices {
        let w = window_weight(x, &set.points[i], nb.radius);
        if w == 0.0 {
            continue;
        }
        let t: Vec<f64> = set.points[i]
            .iter()
            .zip(x)
            .map(|(p, q)| (p - q) / nb.radius)
            .collect();
        let sw = w.sqrt();
        rows.extend(quadratic_basis(&t).iter().map(|v| sw * v));
        rhs.push(sw * set.values[i]);
    }
    (
        DMatrix::from_row_slice(rhs.len(), m, &rows),
        DVector::from_vec(rhs),
    )
}

fn well_conditioned(b: &DMatrix<f64>) -> bool {
    if b.nrows() < b.ncols() {
        return false;
    }
    let eig = SymmetricEigen::new(b.transpose() * b).eigenvalues;
    let max = eig.max();
    max > 0.0 && eig.min() > MOMENT_RCOND * max
}

/// Least squares by Householder QR of the weighted rows.
fn least_squares(b: DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = b.qr();
    let rhs = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&rhs)
}

/// Weighted least-squares fit of the quadratic basis around `x`.
pub fn mls_fit(set: &SampleSet, x: &[f64]) -> Result<DiffuseModel> {
    let n = x.len();
    let mut nb = select_neighbors(set, x)?;
    let nominal = nb.indices.len();
    let (mut b, mut y) = weighted_system(set, x, &nb);
    while !well_conditioned(&b) && nb.indices.len() < set.len() {
        nb = nearest(set, x, (nb.indices.len() + n).min(set.len()));
        (b, y) = weighted_system(set, x, &nb);
    }
    let mut ridge = false;
    let scaled = if well_conditioned(&b) {
        least_squares(b, &y).ok_or(Error::SingularMoments)?
    } else {
        ridge = true;
        let mut a = b.transpose() * &b;
        let shift = 1e-12 * a.trace();
        for k in 0..a.nrows() {
            a[(k, k)] += shift;
        }
        Cholesky::new(a)
            .ok_or(Error::SingularMoments)?
            .solve(&(b.transpose() * y))
    };
    if scaled.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMoments);
    }

    let r = nb.radius;
    let mut coefficients = scaled.clone();
    for k in 0..n {
        coefficients[1 + k] /= r;
    }
    let mut hessian = DMatrix::zeros(n, n);
    let mut k = 1 + n;
    for i in 0..n {
        for j in i..n {
            coefficients[k] /= r * r;
            if i == j {
                hessian[(i, i)] = 2.0 * coefficients[k];
            } else {
                hessian[(i, j)] = coefficients[k];
                hessian[(j, i)] = coefficients[k];
            }
            k += 1;
        }
    }
    Ok(DiffuseModel {
        center: DVector::from_column_slice(x),
        value: coefficients[0],
        gradient: coefficients.rows(1, n).into_owned(),
        hessian,
        enlarged: nb.indices.len() - nominal,
        neighbors: nb,
        coefficients,
        ridge,
    })
}

/// Value of the diffuse approximation at `x`.
pub fn approximate(set: &SampleSet, x: &[f64]) -> Result<f64> {
    Ok(mls_fit(set, x)?.value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceOptions {
    pub max_iterations: usize,
    /// Stop once a step is shorter than this fraction of the box diagonal.
    pub step_tolerance: f64,
    /// Ignore the model Hessian and take normalised gradient steps.
    pub gradient_only: bool,
    /// Length of a gradient step as a fraction of the box, per variable.
    pub gradient_step: f64,
    pub max_halvings: usize,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-8,
            gradient_only: false,
            gradient_step: 0.05,
            max_halvings: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceResult {
    pub x: Vec<f64>,
    /// Approximate cost at `x`.
    pub value: f64,
    /// Accepted iterates, starting with the initial point.
    pub trail: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl SurfaceResult {
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::SurfaceNoConvergence {
                iterations: self.iterations,
            })
        }
    }
}

fn clamp_to(bounds: &[(f64, f64)], x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter().zip(bounds).map(|(&v, &(lo, hi))| v.clamp(lo, hi)),
    )
}

/// Descent on the diffuse approximation from `x0`, re-fitting the model at
/// every trial point. Newton steps are used where the model Hessian is
/// positive definite, normalised gradient steps elsewhere; each step is
/// halved until the approximate cost does not increase.
pub fn surface_minimize(
    set: &SampleSet,
    x0: &[f64],
    opts: &SurfaceOptions,
) -> Result<SurfaceResult> {
    let bounds = set.bounds();
    if x0.len() != bounds.len() {
        return Err(Error::Dimension {
            what: "start point",
            expected: bounds.len(),
            got: x0.len(),
        });
    }
    if x0
        .iter()
        .zip(bounds)
        .any(|(&v, &(lo, hi))| !(v >= lo && v <= hi))
    {
        return Err(Error::Settings(
            "start point lies outside the sample box".into(),
        ));
    }
    let widths = DVector::from_iterator(bounds.len(), bounds.iter().map(|(lo, hi)| hi - lo));
    let diagonal = widths.norm();
    let tol = opts.step_tolerance * diagonal;

    let mut x = DVector::from_column_slice(x0);
    let mut model = mls_fit(set, x0)?;
    let mut trail = vec![x0.to_vec()];
    let mut gradient_scale = 1.0;
    for it in 1..=opts.max_iterations {
        let newton = if opts.gradient_only {
            None
        } else {
            Cholesky::new(model.hessian.clone())
        };
        let (dir, is_newton) = match newton {
            Some(ch) => (-ch.solve(&model.gradient), true),
            None => {
                let scaled = model.gradient.component_mul(&widths);
                let norm = scaled.norm();
                if norm == 0.0 {
                    return Ok(SurfaceResult {
                        x: x.as_slice().to_vec(),
                        value: model.value,
                        trail,
                        iterations: it,
                        converged: true,
                    });
                }
                (
                    -(scaled / norm).component_mul(&widths) * opts.gradient_step,
                    false,
                )
            }
        };
        let mut len = if is_newton { 1.0 } else { gradient_scale };
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = clamp_to(bounds, &(&x + &dir * len));
            let step = (&cand - &x).norm();
            if step < tol {
                break;
            }
            let trial = mls_fit(set, cand.as_slice())?;
            if trial.value <= model.value {
                accepted = Some((cand, trial));
                break;
            }
            len *= 0.5;
        }
        let Some((cand, trial)) = accepted else {
            return Ok(SurfaceResult {
                x: x.as_slice().to_vec(),
                value: model.value,
                trail,
                iterations: it,
                converged: true,
            });
        };
        if !is_newton {
            gradient_scale = (len * 2.0).min(1.0);
        }
        x = cand;
        model = trial;
        trail.push(x.as_slice().to_vec());
    }
    Ok(SurfaceResult {
        x: x.as_slice().to_vec(),
        value: model.value,
        trail,
        iterations: opts.max_iterations,
        converged: false,
    })
}

#[cfg(test)]
mod tests;
