use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentSpec, MethodKind, Preset};
use super::presets::{self, ThicknessVariant};
use super::report::{shape_polyline, stats_report, Aggregate, ShapePoint};
use crate::error::{Error, Result};
use crate::evolutionary::{evolve, GaSettings, GenerationRecord, StopReason};
use crate::fem::{Configuration, Mesh};
use crate::optimality::{bound_box_from_reference, ControlProblem, DesignProblem, MassPenalty};
use crate::surrogate::{surface_minimize, SampleSet, SurfaceOptions};

/// The optimisation problem behind an experiment.
#[derive(Clone, Debug)]
pub enum Problem {
    Control(ControlProblem),
    Design(DesignProblem),
}

/// Forward solve at given variable values.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Cost `J` (regulariser included, penalty and sign excluded).
    pub cost: f64,
    /// Value minimised by sequential methods.
    pub objective: f64,
    pub mass: Option<f64>,
    pub mesh: Mesh,
    pub configuration: Configuration,
}

impl Problem {
    pub fn build(spec: &ExperimentSpec) -> Result<Self> {
        let newton = spec.newton;
        Ok(match spec.preset {
            Preset::Tletter => {
                let target = [
                    spec.loads.force.unwrap_or(presets::TLETTER_TARGET[0]),
                    spec.loads.moment.unwrap_or(presets::TLETTER_TARGET[1]),
                ];
                let mut p = presets::tletter_problem_for(&target, newton)?;
                p.alpha = spec.cost.alpha.unwrap_or(0.0);
                Problem::Control(p)
            }
            Preset::Iletter => Problem::Control(presets::iletter_problem_for(
                spec.loads.moment.unwrap_or(presets::ILETTER_MOMENT),
                spec.cost.alpha.unwrap_or(presets::ILETTER_ALPHA),
                newton,
            )?),
            Preset::Thickness => {
                let variant = spec
                    .thickness_variant()
                    .unwrap_or(ThicknessVariant::ShearEnergy);
                let penalty = MassPenalty {
                    limit: spec
                        .cost
                        .mass_limit
                        .unwrap_or(presets::THICKNESS_MASS_LIMIT),
                    weight: spec
                        .cost
                        .penalty_weight
                        .unwrap_or(variant.default_penalty_weight()),
                };
                Problem::Design(presets::thickness_problem_for(
                    variant,
                    spec.loads.force.unwrap_or(presets::THICKNESS_FORCE),
                    penalty,
                    newton,
                )?)
            }
        })
    }

    pub fn variable_count(&self) -> usize {
        match self {
            Problem::Control(p) => p.variable_count(),
            Problem::Design(p) => p.variable_count(),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        match self {
            Problem::Control(p) => &p.mesh,
            Problem::Design(p) => &p.mesh,
        }
    }

    pub fn desired(&self) -> Option<&Configuration> {
        match self {
            Problem::Control(p) => Some(&p.desired),
            Problem::Design(_) => None,
        }
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        match self {
            Problem::Control(p) => p.objective(x),
            Problem::Design(p) => p.objective(x),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        match self {
            Problem::Control(p) => {
                let configuration = p.solve(x)?.configuration;
                let cost = p.cost(&configuration, x)?;
                Ok(Evaluation {
                    cost,
                    objective: cost,
                    mass: None,
                    mesh: p.mesh.clone(),
                    configuration,
                })
            }
            Problem::Design(p) => {
                let e = p.evaluate(x)?;
                Ok(Evaluation {
                    cost: e.cost,
                    objective: e.objective,
                    mass: Some(e.mass),
                    mesh: p.mesh_for(x)?,
                    configuration: e.configuration,
                })
            }
        }
    }

    pub fn full_merit(&self, z: &[f64]) -> Result<f64> {
        match self {
            Problem::Control(p) => p.full_merit(z),
            Problem::Design(p) => p.full_merit(z),
        }
    }

    pub fn reduced_merit(&self, z: &[f64]) -> Result<f64> {
        match self {
            Problem::Control(p) => p.reduced_merit(z),
            Problem::Design(p) => p.reduced_merit(z),
        }
    }

    /// Boxes of the free state and of the multipliers, `±margin` relative
    /// around the equilibrium at `reference` and its eliminated multipliers.
    pub fn state_boxes(
        &self,
        reference: &[f64],
        margin: f64,
    ) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
        let ev = self.evaluate(reference)?;
        let free = ev.mesh.free_dofs();
        let state: Vec<f64> = free.iter().map(|&i| ev.configuration.0[i]).collect();
        let lambda = match self {
            Problem::Control(p) => p.eliminate_multipliers(&ev.configuration, reference)?,
            Problem::Design(p) => p.eliminate_multipliers(&ev.configuration, reference)?,
        }
        .lambda;
        let lambda: Vec<f64> = lambda.iter().copied().collect();
        Ok((
            bound_box_from_reference(&state, margin),
            bound_box_from_reference(&lambda, margin),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    /// The call or iteration budget ran out first.
    NotConverged,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::NotConverged => "not-converged",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub status: RunStatus,
    /// Solution vector; empty for a failed run.
    pub x: Vec<f64>,
    /// Value the method minimised.
    pub fitness: f64,
    /// Cost `J` from a forward solve at `x`.
    pub cost: f64,
    pub mass: Option<f64>,
    /// Cost function (or merit) evaluations.
    pub calls: usize,
    /// Evaluations whose forward solve failed.
    pub failed_solves: usize,
    pub seconds: f64,
    /// Stop reason or error message.
    pub detail: String,
    pub history: Vec<GenerationRecord>,
    pub shape: Option<Vec<ShapePoint>>,
}

impl RunRecord {
    fn failed(run: usize, seed: u64, calls: usize, seconds: f64, err: &Error) -> Self {
        Self {
            run,
            seed,
            status: RunStatus::Failed,
            x: vec![],
            fitness: f64::NAN,
            cost: f64::NAN,
            mass: None,
            calls,
            failed_solves: 0,
            seconds,
            detail: err.to_string(),
            history: vec![],
            shape: None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status != RunStatus::Failed
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub names: Vec<String>,
    pub runs: Vec<RunRecord>,
    /// Statistics over the runs that did not fail.
    pub aggregate: Option<Aggregate>,
    /// Grid samples of a surface run.
    pub samples: Option<SampleSet>,
    pub reference_shape: Vec<ShapePoint>,
    pub desired_shape: Option<Vec<ShapePoint>>,
}

impl RunReport {
    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(|r| r.status == RunStatus::Converged)
    }
}

fn stop_status(stop: StopReason) -> RunStatus {
    match stop {
        StopReason::Budget => RunStatus::NotConverged,
        StopReason::Target | StopReason::Spread | StopReason::Stall => RunStatus::Converged,
    }
}

/// Runs every seeded repetition of the experiment. Errors are returned only
/// for problems with the experiment itself; a run whose solves fail is
/// reported as failed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport> {
    let problem = Problem::build(spec)?;
    let n = problem.variable_count();
    if spec.variables.len() != n {
        return Err(Error::Config(format!(
            "problem has {n} variables, spec lists {}",
            spec.variables.len()
        )));
    }
    let reference = problem.mesh().reference_configuration();
    let reference_shape = shape_polyline(problem.mesh(), &reference)?;
    let desired_shape = problem
        .desired()
        .map(|d| shape_polyline(problem.mesh(), d))
        .transpose()?;

    let (runs, samples) = match spec.method.kind {
        MethodKind::SurfaceSequential => surface_runs(spec, &problem)?,
        _ => (ga_runs(spec, &problem)?, None),
    };
    let aggregate = stats_report(&spec.names(), &runs).ok();
    Ok(RunReport {
        names: spec.names(),
        runs,
        aggregate,
        samples,
        reference_shape,
        desired_shape,
    })
}

/// Fills cost, mass and shape from a forward solve at the run's solution.
fn finish(spec: &ExperimentSpec, problem: &Problem, mut rec: RunRecord) -> RunRecord {
    match problem.evaluate(&rec.x) {
        Ok(ev) => {
            rec.cost = ev.cost;
            rec.mass = ev.mass;
            if spec.output.shape {
                rec.shape = shape_polyline(&ev.mesh, &ev.configuration).ok();
            }
            rec
        }
        Err(e) => {
            rec.status = RunStatus::Failed;
            rec.detail = format!("forward solve at the solution failed: {e}");
            rec
        }
    }
}

fn surface_runs(
    spec: &ExperimentSpec,
    problem: &Problem,
) -> Result<(Vec<RunRecord>, Option<SampleSet>)> {
    let bounds = spec.bounds();
    let clock = Instant::now();
    let grid_size: usize = spec.method.grid.iter().product();
    let set = match SampleSet::from_grid(&bounds, &spec.method.grid, |x| problem.objective(x)) {
        Ok(s) => s,
        Err(e) if e.is_convergence_failure() => {
            let secs = clock.elapsed().as_secs_f64();
            let runs = spec
                .seeds
                .iter()
                .enumerate()
                .map(|(i, &seed)| RunRecord::failed(i, seed, grid_size, secs, &e))
                .collect();
            return Ok((runs, None));
        }
        Err(e) => return Err(e),
    };
    let grid_seconds = clock.elapsed().as_secs_f64();
    let opts = SurfaceOptions {
        step_tolerance: spec.method.surface_tolerance,
        gradient_only: spec.method.gradient_only,
        ..SurfaceOptions::default()
    };
    let centre: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let runs = spec
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let clock = Instant::now();
            let start = if spec.method.random_start {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                bounds
                    .iter()
                    .map(|&(lo, hi)| rng.random_range(lo..=hi))
                    .collect()
            } else {
                spec.method.start.clone().unwrap_or_else(|| centre.clone())
            };
            let seconds = || grid_seconds + clock.elapsed().as_secs_f64();
            match surface_minimize(&set, &start, &opts) {
                Ok(res) => {
                    let rec = RunRecord {
                        run: i,
                        seed,
                        status: if res.converged {
                            RunStatus::Converged
                        } else {
                            RunStatus::NotConverged
                        },
                        x: res.x,
                        fitness: res.value,
                        cost: f64::NAN,
                        mass: None,
                        calls: grid_size + 1,
                        failed_solves: 0,
                        seconds: 0.0,
                        detail: format!("{} surface iterations", res.iterations),
                        history: vec![],
                        shape: None,
                    };
                    let mut rec = finish(spec, problem, rec);
                    rec.seconds = seconds();
                    rec
                }
                Err(e) => RunRecord::failed(i, seed, grid_size, seconds(), &e),
            }
        })
        .collect();
    Ok((runs, Some(set)))
}

fn ga_runs(spec: &ExperimentSpec, problem: &Problem) -> Result<Vec<RunRecord>> {
    let n = problem.variable_count();
    let mut bounds = spec.bounds();
    let simultaneous = matches!(
        spec.method.kind,
        MethodKind::GaSimultaneousFull | MethodKind::GaSimultaneousReduced
    );
    if simultaneous {
        let reference = spec
            .method
            .reference
            .clone()
            .unwrap_or_else(|| bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
        let (state, multipliers) = problem.state_boxes(&reference, spec.method.margin)?;
        bounds.extend(state);
        if spec.method.kind == MethodKind::GaSimultaneousFull {
            bounds.extend(multipliers);
        }
    }
    spec.ga
        .validate(bounds.len())
        .map_err(|e| Error::Config(format!("[ga] {e}")))?;

    let runs = spec
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let clock = Instant::now();
            let failed = AtomicUsize::new(0);
            let fitness = |z: &[f64]| {
                let value = match spec.method.kind {
                    MethodKind::GaSimultaneousFull => problem.full_merit(z),
                    MethodKind::GaSimultaneousReduced => problem.reduced_merit(z),
                    _ => problem.objective(z),
                };
                value.unwrap_or_else(|_| {
                    failed.fetch_add(1, Ordering::Relaxed);
                    f64::INFINITY
                })
            };
            let settings = GaSettings {
                seed,
                ..spec.ga.clone()
            };
            match evolve(fitness, &bounds, &settings) {
                Ok(out) => {
                    let rec = RunRecord {
                        run: i,
                        seed,
                        status: stop_status(out.stop),
                        x: out.best.x[..n].to_vec(),
                        fitness: out.best.fitness,
                        cost: f64::NAN,
                        mass: None,
                        calls: out.calls,
                        failed_solves: failed.load(Ordering::Relaxed),
                        seconds: 0.0,
                        detail: format!("{:?}", out.stop).to_lowercase(),
                        history: if spec.output.history {
                            out.history
                        } else {
                            vec![]
                        },
                        shape: None,
                    };
                    let mut rec = finish(spec, problem, rec);
                    rec.seconds = clock.elapsed().as_secs_f64();
                    rec
                }
                Err(e) => RunRecord::failed(i, seed, 0, clock.elapsed().as_secs_f64(), &e),
            }
        })
        .collect();
    Ok(runs)
}
