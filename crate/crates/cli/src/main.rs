use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gebeam_core::harness::report::{read_runs_csv, write_aggregate_csv, write_shape_csv};
use gebeam_core::harness::{
    canonical_text, export_results, load_config, preset_experiment, run_experiment, shape_polyline,
    stats_report, Aggregate, ExperimentSpec, MethodKind, Problem, RunReport, PRESET_EXPERIMENTS,
};
use gebeam_core::Error;

#[derive(Parser)]
#[command(
    name = "gebeam",
    version,
    about = "Planar beam control and design experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the equilibrium of a config's problem at given variable values.
    Forward {
        config: PathBuf,
        /// Comma-separated variable values; the box centre when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Option<Vec<f64>>,
        /// Directory for the shape polyline.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a config with the response-surface method.
    Surface {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run a config with the method it names.
    Optimize {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run a built-in experiment, or print its config.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_EXPERIMENTS))]
        name: String,
        /// Print the full config instead of running it.
        #[arg(long)]
        print: bool,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Summarise a runs table written by an earlier run.
    Stats {
        runs: PathBuf,
        /// Directory for aggregate.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunFlags {
    /// First seed; runs use consecutive seeds from here.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Directory for the CSV tables.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Replaces the stopping tolerance of the selected method.
    #[arg(long, allow_hyphen_values = true)]
    tolerance: Option<f64>,
}

impl RunFlags {
    fn apply(&self, spec: &mut ExperimentSpec) -> gebeam_core::Result<()> {
        if self.seed.is_some() || self.runs.is_some() {
            let first = self.seed.unwrap_or(spec.seeds[0]);
            spec.reseed(first, self.runs.unwrap_or(spec.runs()))?;
        }
        if let Some(tol) = self.tolerance {
            spec.override_tolerance(tol)?;
        }
        if let Some(dir) = &self.output {
            spec.output.directory = Some(dir.clone());
        }
        Ok(())
    }
}

enum Outcome {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            let numeric = err
                .chain()
                .filter_map(|e| e.downcast_ref::<Error>())
                .any(Error::is_convergence_failure);
            ExitCode::from(if numeric { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Forward { config, at, output } => forward(&load(&config)?, at, output),
        Command::Surface { config, run } => {
            let mut spec = load(&config)?;
            spec.method.kind = MethodKind::SurfaceSequential;
            execute(spec, &run)
        }
        Command::Optimize { config, run } => execute(load(&config)?, &run),
        Command::Preset { name, print, run } => {
            let mut spec = preset_experiment(&name)?;
            if print {
                run.apply(&mut spec)?;
                print!("{}", canonical_text(&spec));
                return Ok(Outcome::Done);
            }
            execute(spec, &run)
        }
        Command::Stats { runs, output } => stats(&runs, output),
    }
}

fn load(path: &Path) -> anyhow::Result<ExperimentSpec> {
    load_config(path).with_context(|| format!("reading {}", path.display()))
}

fn forward(
    spec: &ExperimentSpec,
    at: Option<Vec<f64>>,
    output: Option<PathBuf>,
) -> anyhow::Result<Outcome> {
    let x = at.unwrap_or_else(|| {
        spec.bounds()
            .iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    });
    if x.len() != spec.variables.len() {
        bail!(
            "--at needs {} values ({}), got {}",
            spec.variables.len(),
            spec.names().join(", "),
            x.len()
        );
    }
    let problem = Problem::build(spec)?;
    let ev = problem.evaluate(&x)?;
    for (name, v) in spec.names().iter().zip(&x) {
        println!("{name} = {v}");
    }
    println!("J = {:e}", ev.cost);
    if ev.objective != ev.cost {
        println!("objective = {:e}", ev.objective);
    }
    if let Some(m) = ev.mass {
        println!("mass = {m}");
    }
    let shape = shape_polyline(&ev.mesh, &ev.configuration)?;
    if let Some(tip) = shape.last() {
        println!("end point = ({}, {})", tip.x, tip.y);
    }
    if let Some(dir) = output.or_else(|| spec.output.directory.clone()) {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let reference = shape_polyline(problem.mesh(), &problem.mesh().reference_configuration())?;
        let mut shapes = vec![("reference", reference.as_slice())];
        let desired = problem
            .desired()
            .map(|d| shape_polyline(problem.mesh(), d))
            .transpose()?;
        if let Some(d) = &desired {
            shapes.push(("desired", d));
        }
        shapes.push(("deformed", &shape));
        let path = dir.join("shape.csv");
        write_shape_csv(&path, &shapes)?;
        println!("wrote {}", path.display());
    }
    Ok(Outcome::Done)
}

fn execute(mut spec: ExperimentSpec, flags: &RunFlags) -> anyhow::Result<Outcome> {
    flags.apply(&mut spec)?;
    let report = run_experiment(&spec)?;
    print_report(&report);
    if let Some(dir) = &spec.output.directory {
        let written = export_results(&report, dir)?;
        println!("wrote {} files to {}", written.len(), dir.display());
    }
    Ok(if report.all_converged() {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
}

fn print_report(report: &RunReport) {
    for r in &report.runs {
        let x: Vec<String> = r.x.iter().map(|v| format!("{v:.6}")).collect();
        println!(
            "run {:>3} seed {:>4} {:<13} calls {:>7} J {:<12.4e} x [{}] {}",
            r.run,
            r.seed,
            r.status.as_str(),
            r.calls,
            r.cost,
            x.join(", "),
            r.detail
        );
    }
    match &report.aggregate {
        Some(agg) => print_aggregate(agg),
        None => println!("no successful runs"),
    }
}

fn print_aggregate(agg: &Aggregate) {
    println!(
        "{:<10} {:>14} {:>14} {:>14} {:>14}",
        "", "min", "max", "mean", "std"
    );
    for (name, s) in &agg.variables {
        println!(
            "{name:<10} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
            s.min, s.max, s.mean, s.std
        );
    }
    let c = &agg.calls;
    println!(
        "{:<10} {:>14} {:>14} {:>14.1}",
        "calls", c.min, c.max, c.mean
    );
    println!("{} successful runs", agg.count);
}

fn stats(runs: &Path, output: Option<PathBuf>) -> anyhow::Result<Outcome> {
    let (names, rows) = read_runs_csv(runs)?;
    let agg = stats_report(&names, &rows)?;
    print_aggregate(&agg);
    if let Some(dir) = output {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("aggregate.csv");
        write_aggregate_csv(&path, &agg)?;
        println!("wrote {}", path.display());
    }
    Ok(Outcome::Done)
}
