//! Real-coded differential evolution (SADE) and its gradient-flavoured
//! variant (GRADE) over a box of variables. Minimisation throughout.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sade,
    Grade,
}

/// Base point of the GRADE cross-over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossBase {
    /// The parent with the better fitness; the step points from the worse
    /// parent to the better one.
    Better,
    /// Componentwise maximum of the two parents.
    ComponentwiseMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaSettings {
    pub method: Method,
    /// Population size per variable.
    pub pool_rate: usize,
    /// Mutation step towards a random point (SADE; GRADE draws it).
    pub mutation_rate: f64,
    /// Cross-over coefficient (SADE).
    pub cross_rate: f64,
    /// Upper limit of the random cross-over coefficient (GRADE).
    pub cross_limit: f64,
    /// Fraction of the population mutated each generation.
    pub radioactivity: f64,
    /// Local mutation (SADE only).
    pub local_mutation: bool,
    /// Half-width of a local mutation as a fraction of each box width.
    pub local_range: f64,
    /// Orient the SADE difference vector from the worse to the better parent.
    pub sign_guided: bool,
    pub cross_base: CrossBase,
    /// Stop as soon as a fitness at or below this value is found.
    pub target: Option<f64>,
    pub max_calls: usize,
    /// Stop when every variable of the population lies within this fraction
    /// of its box width.
    pub spread_tolerance: Option<f64>,
    /// Stop when the best fitness has improved by no more than this amount
    /// over the last `stall_generations` generations.
    pub stall_tolerance: Option<f64>,
    pub stall_generations: usize,
    pub seed: u64,
}

impl GaSettings {
    pub fn sade() -> Self {
        Self {
            method: Method::Sade,
            pool_rate: 10,
            mutation_rate: 0.5,
            cross_rate: 0.3,
            cross_limit: 1.0,
            radioactivity: 0.1,
            local_mutation: true,
            local_range: 0.0025,
            sign_guided: false,
            cross_base: CrossBase::Better,
            target: None,
            max_calls: 100_000,
            spread_tolerance: None,
            stall_tolerance: None,
            stall_generations: 20,
            seed: 0,
        }
    }

    pub fn grade() -> Self {
        Self {
            method: Method::Grade,
            radioactivity: 0.2,
            local_mutation: false,
            ..Self::sade()
        }
    }

    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Sade => Self::sade(),
            Method::Grade => Self::grade(),
        }
    }

    pub fn population_size(&self, variables: usize) -> usize {
        self.pool_rate * variables
    }

    pub fn validate(&self, variables: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Settings(m.into()));
        if self.pool_rate < 2 {
            return bad("pool_rate must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.radioactivity) {
            return bad("radioactivity must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1]");
        }
        if !(self.cross_limit > 0.0) {
            return bad("cross_limit must be positive");
        }
        if !(self.cross_rate >= 0.0) {
            return bad("cross_rate must be non-negative");
        }
        if !(self.local_range >= 0.0) {
            return bad("local_range must be non-negative");
        }
        if matches!(self.spread_tolerance, Some(t) if !(t > 0.0)) {
            return bad("spread_tolerance must be positive");
        }
        if matches!(self.stall_tolerance, Some(t) if !(t >= 0.0)) {
            return bad("stall_tolerance must be non-negative");
        }
        if self.stall_generations == 0 {
            return bad("stall_generations must be at least 1");
        }
        if self.max_calls < self.population_size(variables) {
            return bad("max_calls is smaller than the initial population");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chromosome {
    pub x: Vec<f64>,
    pub fitness: f64,
}

/// Checks that every box is non-empty.
pub fn validate_box(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::Settings("no variables".into()));
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Settings(format!("empty box for variable {}", k + 1)));
        }
    }
    Ok(())
}

fn clamp(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

pub fn random_point<R: Rng>(bounds: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| rng.random_range(lo..=hi))
        .collect()
}

/// `x + rate (rp − x)` towards the point `rp`.
pub fn mutate_towards(x: &[f64], rp: &[f64], rate: f64) -> Vec<f64> {
    x.iter().zip(rp).map(|(a, b)| a + rate * (b - a)).collect()
}

/// Mutation towards a uniformly drawn point of the box.
pub fn mutate<R: Rng>(x: &[f64], bounds: &[(f64, f64)], rate: f64, rng: &mut R) -> Vec<f64> {
    let rp = random_point(bounds, rng);
    mutate_towards(x, &rp, rate)
}

/// Perturbs every component by `U(−range_k, range_k)` and clamps.
pub fn local_mutate<R: Rng>(
    x: &[f64],
    range: &[f64],
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> Vec<f64> {
    let mut y: Vec<f64> = x
        .iter()
        .zip(range)
        .map(|(&v, &r)| {
            if r > 0.0 {
                v + rng.random_range(-r..=r)
            } else {
                v
            }
        })
        .collect();
    clamp(&mut y, bounds);
    y
}

/// `x_p + rate (x_q − x_r)`, clamped.
pub fn cross_sade(p: &[f64], q: &[f64], r: &[f64], rate: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    let mut y: Vec<f64> = p
        .iter()
        .zip(q.iter().zip(r))
        .map(|(a, (b, c))| a + rate * (b - c))
        .collect();
    clamp(&mut y, bounds);
    y
}

/// Step of length `rate |x_q − x_r|` away from the worse parent, starting
/// at the base chosen by `base`; clamped.
pub fn cross_grade_with(
    q: &Chromosome,
    r: &Chromosome,
    rate: f64,
    base: CrossBase,
    bounds: &[(f64, f64)],
) -> Vec<f64> {
    let q_better = q.fitness <= r.fitness;
    let sign = if q_better { 1.0 } else { -1.0 };
    let mut y: Vec<f64> =
        q.x.iter()
            .zip(&r.x)
            .map(|(&a, &b)| {
                let start = match base {
                    CrossBase::Better => {
                        if q_better {
                            a
                        } else {
                            b
                        }
                    }
                    CrossBase::ComponentwiseMax => a.max(b),
                };
                start + sign * rate * (a - b)
            })
            .collect();
    clamp(&mut y, bounds);
    y
}

/// GRADE cross-over with the coefficient drawn from `U(0, limit)`.
pub fn cross_grade<R: Rng>(
    q: &Chromosome,
    r: &Chromosome,
    limit: f64,
    base: CrossBase,
    bounds: &[(f64, f64)],
    rng: &mut R,
) -> Vec<f64> {
    let rate = rng.random_range(0.0..limit);
    cross_grade_with(q, r, rate, base, bounds)
}

/// Repeated random pair tournaments, each casting off the worse member,
/// until `size` members remain.
pub fn tournament_reduce<R: Rng>(population: &mut Vec<Chromosome>, size: usize, rng: &mut R) {
    while population.len() > size.max(1) {
        let pair = index::sample(rng, population.len(), 2);
        let (a, b) = (pair.index(0), pair.index(1));
        let loser = if population[a]
            .fitness
            .total_cmp(&population[b].fitness)
            .is_le()
        {
            b
        } else {
            a
        };
        population.swap_remove(loser);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub calls: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_x: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Target,
    Spread,
    Stall,
    Budget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub best: Chromosome,
    pub calls: usize,
    pub generations: usize,
    pub history: Vec<GenerationRecord>,
    pub stop: StopReason,
}

impl Outcome {
    /// False when the budget ran out before the target was reached.
    pub fn reached_target(&self) -> bool {
        self.stop == StopReason::Target
    }
}

fn fitness_of(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn evaluate<F>(objective: &F, points: Vec<Vec<f64>>) -> Vec<Chromosome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    points
        .into_par_iter()
        .map(|x| {
            let fitness = fitness_of(objective(&x));
            Chromosome { x, fitness }
        })
        .collect()
}

fn record(
    generation: usize,
    calls: usize,
    population: &[Chromosome],
    best: &Chromosome,
) -> GenerationRecord {
    let mean = population.iter().map(|c| c.fitness).sum::<f64>() / population.len() as f64;
    GenerationRecord {
        generation,
        calls,
        best_fitness: best.fitness,
        mean_fitness: mean,
        best_x: best.x.clone(),
    }
}

fn spread_converged(population: &[Chromosome], bounds: &[(f64, f64)], tol: f64) -> bool {
    bounds.iter().enumerate().all(|(k, &(lo, hi))| {
        let (mn, mx) = population
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| {
                (a.min(c.x[k]), b.max(c.x[k]))
            });
        mx - mn <= tol * (hi - lo)
    })
}

/// Runs the optimiser. `observer` sees the population after the initial
/// evaluation and after every tournament.
pub fn evolve_observed<F, O>(
    objective: F,
    bounds: &[(f64, f64)],
    settings: &GaSettings,
    mut observer: O,
) -> Result<Outcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(usize, &[Chromosome]),
{
    validate_box(bounds)?;
    let n = bounds.len();
    settings.validate(n)?;
    let size = settings.population_size(n);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let ranges: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| settings.local_range * (hi - lo))
        .collect();

    let initial: Vec<Vec<f64>> = (0..size).map(|_| random_point(bounds, &mut rng)).collect();
    let mut population = evaluate(&objective, initial);
    let mut calls = size;
    let mut best = population
        .iter()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .cloned()
        .expect("non-empty");
    let mut history = vec![record(0, calls, &population, &best)];
    observer(0, &population);

    let hits_target = |c: &Chromosome| settings.target.is_some_and(|t| c.fitness <= t);
    let mutants = (settings.radioactivity * size as f64).round() as usize;
    let mut generation = 0;
    let stop = loop {
        if hits_target(&best) {
            break StopReason::Target;
        }
        if settings
            .spread_tolerance
            .is_some_and(|t| spread_converged(&population, bounds, t))
        {
            break StopReason::Spread;
        }
        if let Some(tol) = settings.stall_tolerance {
            if let Some(old) = history.len().checked_sub(settings.stall_generations + 1) {
                if history[old].best_fitness - best.fitness <= tol {
                    break StopReason::Stall;
                }
            }
        }
        if calls + size > settings.max_calls {
            break StopReason::Budget;
        }
        generation += 1;

        let mut offspring: Vec<Vec<f64>> = Vec::with_capacity(size);
        for _ in 0..mutants.min(size) {
            let parent = &population[rng.random_range(0..population.len())].x;
            let rate = match settings.method {
                Method::Sade => settings.mutation_rate,
                Method::Grade => rng.random_range(0.0..1.0),
            };
            offspring.push(mutate(parent, bounds, rate, &mut rng));
        }
        if settings.method == Method::Sade && settings.local_mutation {
            for _ in 0..mutants.min(size - offspring.len()) {
                let parent = &population[rng.random_range(0..population.len())].x;
                offspring.push(local_mutate(parent, &ranges, bounds, &mut rng));
            }
        }
        while offspring.len() < size {
            match settings.method {
                Method::Sade => {
                    let t = index::sample(&mut rng, population.len(), 3);
                    let (p, q, r) = (
                        &population[t.index(0)],
                        &population[t.index(1)],
                        &population[t.index(2)],
                    );
                    let (q, r) = if settings.sign_guided && r.fitness < q.fitness {
                        (r, q)
                    } else {
                        (q, r)
                    };
                    offspring.push(cross_sade(&p.x, &q.x, &r.x, settings.cross_rate, bounds));
                }
                Method::Grade => {
                    let t = index::sample(&mut rng, population.len(), 2);
                    let (q, r) = (&population[t.index(0)], &population[t.index(1)]);
                    offspring.push(cross_grade(
                        q,
                        r,
                        settings.cross_limit,
                        settings.cross_base,
                        bounds,
                        &mut rng,
                    ));
                }
            }
        }

        let children = evaluate(&objective, offspring);
        calls += children.len();
        for c in &children {
            if c.fitness < best.fitness {
                best = c.clone();
            }
        }
        population.extend(children);
        tournament_reduce(&mut population, size, &mut rng);
        history.push(record(generation, calls, &population, &best));
        observer(generation, &population);
    };
    Ok(Outcome {
        best,
        calls,
        generations: generation,
        history,
        stop,
    })
}

pub fn evolve<F>(objective: F, bounds: &[(f64, f64)], settings: &GaSettings) -> Result<Outcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    evolve_observed(objective, bounds, settings, |_, _| {})
}

/// Independent runs for each seed, in parallel; results follow `seeds`.
pub fn evolve_seeds<F>(
    objective: F,
    bounds: &[(f64, f64)],
    settings: &GaSettings,
    seeds: &[u64],
) -> Result<Vec<Outcome>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            evolve(
                &objective,
                bounds,
                &GaSettings {
                    seed,
                    ..settings.clone()
                },
            )
        })
        .collect()
}
