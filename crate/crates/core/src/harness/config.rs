//! Experiment descriptions as TOML text.
//!
//! ```toml
//! format = "gebeam-experiment/1"
//! runs = 100
//! seed = 0
//!
//! [mesh]
//! preset = "tletter"
//!
//! [method]
//! kind = "ga-sequential"
//! ```
//!
//! Required: the `format` header and the `[mesh]` and `[method]` sections.
//! Optional sections (`[loads]`, `[[variables]]`, `[cost]`, `[newton]`,
//! `[ga]`, `[output]`) and optional keys take preset-dependent defaults,
//! which [`canonical_text`] writes out in full.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::presets::{self, ThicknessVariant};
use crate::error::{Error, Result};
use crate::evolutionary::{CrossBase, GaSettings, Method as GaMethod};
use crate::fem::NewtonOptions;

pub const FORMAT: &str = "gebeam-experiment/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Tletter,
    Iletter,
    Thickness,
}

impl Preset {
    pub fn is_control(self) -> bool {
        matches!(self, Preset::Tletter | Preset::Iletter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    SurfaceSequential,
    GaSequential,
    GaSimultaneousFull,
    GaSimultaneousReduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    ShapeMatching,
    ShearEnergy,
    DisplacementNorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// Load case. Control presets: the loads that produce the desired shape.
/// Thickness preset: the tip force.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSpec {
    pub force: Option<f64>,
    pub moment: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    /// Control regularisation weight (control presets).
    pub alpha: Option<f64>,
    /// Mass limit and penalty weight (thickness preset).
    pub mass_limit: Option<f64>,
    pub penalty_weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Grid points per variable (surface).
    pub grid: Vec<usize>,
    /// Surface start point; the box centre when absent.
    pub start: Option<Vec<f64>>,
    /// Seeded uniform start points instead of `start`.
    pub random_start: bool,
    pub surface_tolerance: f64,
    pub gradient_only: bool,
    /// Relative half-width `EP` of the state and multiplier boxes
    /// (simultaneous).
    pub margin: f64,
    /// Variable values whose equilibrium centres those boxes; the box centre
    /// when absent.
    pub reference: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub directory: Option<PathBuf>,
    pub history: bool,
    pub shape: bool,
}

/// Fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub newton: NewtonOptions,
    pub loads: LoadSpec,
    pub variables: Vec<Variable>,
    pub cost: CostSpec,
    pub method: MethodSpec,
    /// GA settings; the seed is taken from `seeds` per run.
    pub ga: GaSettings,
    pub seeds: Vec<u64>,
    pub output: OutputSpec,
}

impl ExperimentSpec {
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.variables.iter().map(|v| (v.lower, v.upper)).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn runs(&self) -> usize {
        self.seeds.len()
    }

    pub fn thickness_variant(&self) -> Option<ThicknessVariant> {
        match self.cost.kind {
            CostKind::ShearEnergy => Some(ThicknessVariant::ShearEnergy),
            CostKind::DisplacementNorm => Some(ThicknessVariant::Displacement),
            CostKind::ShapeMatching => None,
        }
    }

    /// Re-seeds the experiment with `runs` consecutive seeds from `first`.
    pub fn reseed(&mut self, first: u64, runs: usize) -> Result<()> {
        if runs == 0 {
            return Err(Error::Config("run count must be at least 1".into()));
        }
        self.seeds = (first..first + runs as u64).collect();
        Ok(())
    }

    /// Replaces the convergence tolerance of the selected method: the
    /// surface step tolerance, or the GA target or stall tolerance,
    /// whichever the GA uses.
    pub fn override_tolerance(&mut self, tol: f64) -> Result<()> {
        if !(tol > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        match self.method.kind {
            MethodKind::SurfaceSequential => self.method.surface_tolerance = tol,
            _ if self.ga.target.is_some() => self.ga.target = Some(tol),
            _ if self.ga.spread_tolerance.is_some() => self.ga.spread_tolerance = Some(tol),
            _ => self.ga.stall_tolerance = Some(tol),
        }
        Ok(())
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    mesh: Option<RawMesh>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    newton: Option<RawNewton>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loads: Option<RawLoads>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost: Option<RawCost>,
    method: Option<RawMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ga: Option<RawGa>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variables: Option<Vec<Variable>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    preset: Preset,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNewton {
    load_steps: Option<usize>,
    max_iterations: Option<usize>,
    relative_tolerance: Option<f64>,
    absolute_tolerance: Option<f64>,
    max_halvings: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoads {
    force: Option<f64>,
    moment: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    kind: Option<CostKind>,
    alpha: Option<f64>,
    mass_limit: Option<f64>,
    penalty_weight: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    kind: MethodKind,
    grid: Option<Vec<usize>>,
    start: Option<Vec<f64>>,
    random_start: Option<bool>,
    surface_tolerance: Option<f64>,
    gradient_only: Option<bool>,
    margin: Option<f64>,
    reference: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGa {
    method: Option<GaMethod>,
    pool_rate: Option<usize>,
    mutation_rate: Option<f64>,
    cross_rate: Option<f64>,
    cross_limit: Option<f64>,
    radioactivity: Option<f64>,
    local_mutation: Option<bool>,
    local_range: Option<f64>,
    sign_guided: Option<bool>,
    cross_base: Option<CrossBase>,
    target: Option<f64>,
    max_calls: Option<usize>,
    spread_tolerance: Option<f64>,
    stall_tolerance: Option<f64>,
    stall_generations: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    history: Option<bool>,
    shape: Option<bool>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses and validates an experiment description, filling every default.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
    if !table.contains_key("format") {
        return Err(config_error(format!(
            "missing header line `format = \"{FORMAT}\"`"
        )));
    }
    for section in ["mesh", "method"] {
        if !table.contains_key(section) {
            return Err(config_error(format!(
                "missing required section [{section}]"
            )));
        }
    }
    let raw: RawSpec = table
        .try_into()
        .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
    resolve(raw)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn default_variables(preset: Preset, variant: Option<ThicknessVariant>) -> Vec<Variable> {
    let named = |names: &[&str], bounds: &[(f64, f64)]| {
        names
            .iter()
            .zip(bounds)
            .map(|(n, &(lower, upper))| Variable {
                name: n.to_string(),
                lower,
                upper,
            })
            .collect()
    };
    match preset {
        Preset::Tletter => named(&["F", "M"], &presets::TLETTER_BOX),
        Preset::Iletter => named(&["F", "M"], &presets::ILETTER_BOX),
        Preset::Thickness => named(
            &["h1", "h2", "h3", "h4"],
            &variant
                .unwrap_or(ThicknessVariant::ShearEnergy)
                .default_box(),
        ),
    }
}

/// Load steps that keep every step within a handful of Newton iterations.
fn default_newton(preset: Preset) -> NewtonOptions {
    let load_steps = match preset {
        Preset::Tletter | Preset::Iletter => 5,
        Preset::Thickness => 1,
    };
    NewtonOptions {
        load_steps,
        ..NewtonOptions::default()
    }
}

fn default_ga(spec: &ExperimentSpec, method: GaMethod) -> GaSettings {
    let base = GaSettings::for_method(method);
    match spec.method.kind {
        MethodKind::GaSimultaneousFull => GaSettings {
            pool_rate: 30,
            cross_limit: 2.0,
            radioactivity: 0.2,
            stall_tolerance: Some(1e-12),
            stall_generations: 50,
            max_calls: 500_000,
            ..base
        },
        MethodKind::GaSimultaneousReduced => GaSettings {
            pool_rate: 20,
            cross_limit: 2.0,
            radioactivity: 0.1,
            stall_tolerance: Some(1e-12),
            stall_generations: 50,
            max_calls: 500_000,
            ..base
        },
        MethodKind::GaSequential | MethodKind::SurfaceSequential => match spec.cost.kind {
            CostKind::ShapeMatching if spec.cost.alpha.unwrap_or(0.0) == 0.0 => GaSettings {
                target: Some(1e-7),
                max_calls: 20_000,
                ..base
            },
            CostKind::ShapeMatching => GaSettings {
                stall_tolerance: Some(1e-12),
                max_calls: 50_000,
                ..base
            },
            CostKind::ShearEnergy => GaSettings {
                spread_tolerance: Some(1e-4),
                max_calls: 50_000,
                ..base
            },
            CostKind::DisplacementNorm => GaSettings {
                stall_tolerance: Some(1e-3),
                max_calls: 50_000,
                ..base
            },
        },
    }
}

fn resolve(raw: RawSpec) -> Result<ExperimentSpec> {
    if raw.format != FORMAT {
        return Err(config_error(format!(
            "unsupported format {:?}, expected {FORMAT:?}",
            raw.format
        )));
    }
    let preset = raw.mesh.expect("checked by parse_config").preset;
    let raw_method = raw.method.expect("checked by parse_config");

    let rc = raw.cost.unwrap_or_default();
    let kind = rc.kind.unwrap_or(match preset {
        Preset::Tletter | Preset::Iletter => CostKind::ShapeMatching,
        Preset::Thickness => CostKind::ShearEnergy,
    });
    let cost = if preset.is_control() {
        if kind != CostKind::ShapeMatching {
            return Err(config_error(format!(
                "cost {kind:?} does not apply to preset {preset:?}"
            )));
        }
        if rc.mass_limit.is_some() || rc.penalty_weight.is_some() {
            return Err(config_error(
                "mass penalty applies to the thickness preset only",
            ));
        }
        let alpha = rc.alpha.unwrap_or(match preset {
            Preset::Iletter => presets::ILETTER_ALPHA,
            _ => 0.0,
        });
        if !(alpha >= 0.0) {
            return Err(config_error("cost.alpha must be non-negative"));
        }
        CostSpec {
            kind,
            alpha: Some(alpha),
            mass_limit: None,
            penalty_weight: None,
        }
    } else {
        let variant = match kind {
            CostKind::ShearEnergy => ThicknessVariant::ShearEnergy,
            CostKind::DisplacementNorm => ThicknessVariant::Displacement,
            CostKind::ShapeMatching => {
                return Err(config_error(
                    "shape matching applies to the control presets only",
                ))
            }
        };
        if rc.alpha.is_some() {
            return Err(config_error(
                "cost.alpha applies to the control presets only",
            ));
        }
        let limit = rc.mass_limit.unwrap_or(presets::THICKNESS_MASS_LIMIT);
        let weight = rc
            .penalty_weight
            .unwrap_or(variant.default_penalty_weight());
        if !(limit > 0.0) || !(weight >= 0.0) {
            return Err(config_error(
                "mass limit must be positive and penalty weight non-negative",
            ));
        }
        CostSpec {
            kind,
            alpha: None,
            mass_limit: Some(limit),
            penalty_weight: Some(weight),
        }
    };

    let rl = raw.loads.unwrap_or_default();
    let loads = match preset {
        Preset::Tletter => LoadSpec {
            force: Some(rl.force.unwrap_or(presets::TLETTER_TARGET[0])),
            moment: Some(rl.moment.unwrap_or(presets::TLETTER_TARGET[1])),
        },
        Preset::Iletter => {
            if rl.force.is_some() {
                return Err(config_error("loads.force does not apply to preset iletter"));
            }
            LoadSpec {
                force: None,
                moment: Some(rl.moment.unwrap_or(presets::ILETTER_MOMENT)),
            }
        }
        Preset::Thickness => {
            if rl.moment.is_some() {
                return Err(config_error(
                    "loads.moment does not apply to preset thickness",
                ));
            }
            LoadSpec {
                force: Some(rl.force.unwrap_or(presets::THICKNESS_FORCE)),
                moment: None,
            }
        }
    };

    let variant = (preset == Preset::Thickness).then(|| match kind {
        CostKind::DisplacementNorm => ThicknessVariant::Displacement,
        _ => ThicknessVariant::ShearEnergy,
    });
    let defaults = default_variables(preset, variant);
    let variables = raw.variables.unwrap_or_else(|| defaults.clone());
    if variables.len() != defaults.len() {
        return Err(config_error(format!(
            "preset {preset:?} has {} variables, got {}",
            defaults.len(),
            variables.len()
        )));
    }
    for v in &variables {
        if !(v.lower < v.upper) || !v.lower.is_finite() || !v.upper.is_finite() {
            return Err(config_error(format!(
                "empty box for variable {}: [{}, {}]",
                v.name, v.lower, v.upper
            )));
        }
    }
    let n = variables.len();

    let rn = raw.newton.unwrap_or_default();
    let nd = default_newton(preset);
    let newton = NewtonOptions {
        load_steps: rn.load_steps.unwrap_or(nd.load_steps),
        max_iterations: rn.max_iterations.unwrap_or(nd.max_iterations),
        relative_tolerance: rn.relative_tolerance.unwrap_or(nd.relative_tolerance),
        absolute_tolerance: rn.absolute_tolerance.unwrap_or(nd.absolute_tolerance),
        max_halvings: rn.max_halvings.unwrap_or(nd.max_halvings),
    };
    if newton.load_steps == 0 || newton.max_iterations == 0 {
        return Err(config_error(
            "newton.load_steps and newton.max_iterations must be positive",
        ));
    }

    let grid = raw_method
        .grid
        .unwrap_or_else(|| vec![if n <= 2 { 20 } else { 5 }; n]);
    if grid.len() != n || grid.iter().any(|&g| g < 2) {
        return Err(config_error(format!(
            "method.grid needs {n} entries of at least 2"
        )));
    }
    for (key, point) in [
        ("start", &raw_method.start),
        ("reference", &raw_method.reference),
    ] {
        if let Some(p) = point {
            if p.len() != n {
                return Err(config_error(format!("method.{key} needs {n} values")));
            }
            for (v, var) in p.iter().zip(&variables) {
                if !(var.lower..=var.upper).contains(v) {
                    return Err(config_error(format!(
                        "method.{key}: {} = {v} lies outside [{}, {}]",
                        var.name, var.lower, var.upper
                    )));
                }
            }
        }
    }
    let method = MethodSpec {
        kind: raw_method.kind,
        grid,
        start: raw_method.start,
        random_start: raw_method.random_start.unwrap_or(false),
        surface_tolerance: raw_method.surface_tolerance.unwrap_or(1e-8),
        gradient_only: raw_method.gradient_only.unwrap_or(false),
        margin: raw_method.margin.unwrap_or(1e-4),
        reference: raw_method.reference,
    };
    if !(method.surface_tolerance > 0.0) || !(method.margin > 0.0) {
        return Err(config_error(
            "method.surface_tolerance and method.margin must be positive",
        ));
    }

    let seeds = match (raw.seeds, raw.runs) {
        (Some(s), Some(r)) if s.len() != r => {
            return Err(config_error(format!(
                "{} seeds given for {r} runs",
                s.len()
            )))
        }
        (Some(s), _) => s,
        (None, r) => {
            let first = raw.seed.unwrap_or(0);
            (first..first + r.unwrap_or(1) as u64).collect()
        }
    };
    if seeds.is_empty() {
        return Err(config_error("run count must be at least 1"));
    }

    let ro = raw.output.unwrap_or_default();
    let output = OutputSpec {
        directory: ro.directory,
        history: ro.history.unwrap_or(true),
        shape: ro.shape.unwrap_or(true),
    };

    let mut spec = ExperimentSpec {
        preset,
        newton,
        loads,
        variables,
        cost,
        method,
        ga: GaSettings::grade(),
        seeds,
        output,
    };
    let rg = raw.ga.unwrap_or_default();
    let d = default_ga(&spec, rg.method.unwrap_or(GaMethod::Grade));
    spec.ga = GaSettings {
        method: d.method,
        pool_rate: rg.pool_rate.unwrap_or(d.pool_rate),
        mutation_rate: rg.mutation_rate.unwrap_or(d.mutation_rate),
        cross_rate: rg.cross_rate.unwrap_or(d.cross_rate),
        cross_limit: rg.cross_limit.unwrap_or(d.cross_limit),
        radioactivity: rg.radioactivity.unwrap_or(d.radioactivity),
        local_mutation: rg.local_mutation.unwrap_or(d.local_mutation),
        local_range: rg.local_range.unwrap_or(d.local_range),
        sign_guided: rg.sign_guided.unwrap_or(d.sign_guided),
        cross_base: rg.cross_base.unwrap_or(d.cross_base),
        target: rg.target.or(d.target),
        max_calls: rg.max_calls.unwrap_or(d.max_calls),
        spread_tolerance: rg.spread_tolerance.or(d.spread_tolerance),
        stall_tolerance: rg.stall_tolerance.or(d.stall_tolerance),
        stall_generations: rg.stall_generations.unwrap_or(d.stall_generations),
        seed: 0,
    };
    let unknowns = match spec.method.kind {
        MethodKind::GaSimultaneousFull | MethodKind::GaSimultaneousReduced => None,
        _ => Some(n),
    };
    if let Some(n) = unknowns {
        spec.ga
            .validate(n)
            .map_err(|e| config_error(format!("[ga] {e}")))?;
    }
    Ok(spec)
}

/// Complete description with every default written out. Parsing it gives
/// back the same spec.
pub fn canonical_text(spec: &ExperimentSpec) -> String {
    let g = &spec.ga;
    let raw = RawSpec {
        format: FORMAT.into(),
        runs: Some(spec.seeds.len()),
        seed: None,
        seeds: Some(spec.seeds.clone()),
        mesh: Some(RawMesh {
            preset: spec.preset,
        }),
        newton: Some(RawNewton {
            load_steps: Some(spec.newton.load_steps),
            max_iterations: Some(spec.newton.max_iterations),
            relative_tolerance: Some(spec.newton.relative_tolerance),
            absolute_tolerance: Some(spec.newton.absolute_tolerance),
            max_halvings: Some(spec.newton.max_halvings),
        }),
        loads: Some(RawLoads {
            force: spec.loads.force,
            moment: spec.loads.moment,
        }),
        cost: Some(RawCost {
            kind: Some(spec.cost.kind),
            alpha: spec.cost.alpha,
            mass_limit: spec.cost.mass_limit,
            penalty_weight: spec.cost.penalty_weight,
        }),
        method: Some(RawMethod {
            kind: spec.method.kind,
            grid: Some(spec.method.grid.clone()),
            start: spec.method.start.clone(),
            random_start: Some(spec.method.random_start),
            surface_tolerance: Some(spec.method.surface_tolerance),
            gradient_only: Some(spec.method.gradient_only),
            margin: Some(spec.method.margin),
            reference: spec.method.reference.clone(),
        }),
        ga: Some(RawGa {
            method: Some(g.method),
            pool_rate: Some(g.pool_rate),
            mutation_rate: Some(g.mutation_rate),
            cross_rate: Some(g.cross_rate),
            cross_limit: Some(g.cross_limit),
            radioactivity: Some(g.radioactivity),
            local_mutation: Some(g.local_mutation),
            local_range: Some(g.local_range),
            sign_guided: Some(g.sign_guided),
            cross_base: Some(g.cross_base),
            target: g.target,
            max_calls: Some(g.max_calls),
            spread_tolerance: g.spread_tolerance,
            stall_tolerance: g.stall_tolerance,
            stall_generations: Some(g.stall_generations),
        }),
        output: Some(RawOutput {
            directory: spec.output.directory.clone(),
            history: Some(spec.output.history),
            shape: Some(spec.output.shape),
        }),
        variables: Some(spec.variables.clone()),
    };
    toml::to_string(&raw).expect("experiment specs always serialise")
}

/// Named experiments built into the CLI.
pub const PRESET_EXPERIMENTS: [&str; 6] = [
    "tletter",
    "tletter-surface",
    "iletter",
    "iletter-regularized",
    "thickness-shear",
    "thickness-displacement",
];

/// Spec of a named built-in experiment.
pub fn preset_experiment(name: &str) -> Result<ExperimentSpec> {
    let (preset, method, extra) = match name {
        "tletter" => ("tletter", "ga-sequential", ""),
        "tletter-surface" => ("tletter", "surface-sequential", ""),
        "iletter" => ("iletter", "ga-sequential", "[cost]\nalpha = 0.0\n"),
        "iletter-regularized" => ("iletter", "ga-sequential", ""),
        "thickness-shear" => ("thickness", "ga-sequential", ""),
        "thickness-displacement" => (
            "thickness",
            "ga-sequential",
            "[cost]\nkind = \"displacement-norm\"\n",
        ),
        other => {
            return Err(config_error(format!(
                "unknown preset {other:?}; known: {}",
                PRESET_EXPERIMENTS.join(", ")
            )))
        }
    };
    parse_config(&format!(
        "format = \"{FORMAT}\"\n[mesh]\npreset = \"{preset}\"\n[method]\nkind = \"{method}\"\n{extra}"
    ))
}
