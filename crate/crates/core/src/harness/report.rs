use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fem::{nodal_coordinates, Configuration, Mesh};

use super::run::{RunRecord, RunReport, RunStatus};

/// One vertex of a shape polyline: reference arc length and position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapePoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
}

/// Nodes of a chain mesh in element order, each labelled with its reference
/// arc length.
pub fn shape_polyline(mesh: &Mesh, config: &Configuration) -> Result<Vec<ShapePoint>> {
    config.check_compatible(mesh)?;
    let mut points = Vec::new();
    let mut s0 = 0.0;
    let mut last = None;
    for (e, el) in mesh.elements.iter().enumerate() {
        let l = mesh.element_length(e)?;
        let xis = nodal_coordinates(el.nodes.len())?;
        for (&node, xi) in el.nodes.iter().zip(xis) {
            if last == Some(node) {
                continue;
            }
            let p = config.position(node);
            points.push(ShapePoint {
                s: s0 + 0.5 * (xi + 1.0) * l,
                x: p.x,
                y: p.y,
            });
            last = Some(node);
        }
        s0 += l;
    }
    Ok(points)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub variables: Vec<(String, Summary)>,
    pub calls: Summary,
    /// Rows that entered the statistics.
    pub count: usize,
}

/// Per-variable and call-count statistics over the runs that did not fail.
pub fn stats_report(names: &[String], rows: &[RunRecord]) -> Result<Aggregate> {
    let ok: Vec<&RunRecord> = rows.iter().filter(|r| r.succeeded()).collect();
    if ok.is_empty() {
        return Err(Error::Settings("no successful runs to summarise".into()));
    }
    let mut variables = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let column: Vec<f64> = ok.iter().map(|r| r.x[k]).collect();
        variables.push((name.clone(), Summary::of(&column).expect("non-empty")));
    }
    let calls: Vec<f64> = ok.iter().map(|r| r.calls as f64).collect();
    Ok(Aggregate {
        variables,
        calls: Summary::of(&calls).expect("non-empty"),
        count: ok.len(),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes rows through a temporary sibling file renamed into place.
fn write_csv_atomic(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(csv_err(&tmp))?;
        w.write_record(header).map_err(csv_err(&tmp))?;
        for r in rows {
            w.write_record(r).map_err(csv_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn write_runs_csv(path: &Path, names: &[String], rows: &[RunRecord]) -> Result<()> {
    let mut header = strings(&[
        "run",
        "seed",
        "status",
        "calls",
        "failed_solves",
        "seconds",
        "fitness",
        "cost",
        "mass",
    ]);
    header.extend(names.iter().cloned());
    header.push("detail".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.run.to_string(),
                r.seed.to_string(),
                r.status.as_str().into(),
                r.calls.to_string(),
                r.failed_solves.to_string(),
                num(r.seconds),
                num(r.fitness),
                num(r.cost),
                r.mass.map(num).unwrap_or_default(),
            ];
            row.extend((0..names.len()).map(|k| r.x.get(k).copied().map(num).unwrap_or_default()));
            row.push(r.detail.clone());
            row
        })
        .collect();
    write_csv_atomic(path, &header, &body)
}

/// Reads the solution vectors, call counts and statuses back from a runs
/// table written by [`write_runs_csv`].
pub fn read_runs_csv(path: &Path) -> Result<(Vec<String>, Vec<RunRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let fixed = 9;
    if header.len() < fixed + 1 || &header[0] != "run" || &header[header.len() - 1] != "detail" {
        return Err(Error::Config(format!(
            "{}: not a runs table",
            path.display()
        )));
    }
    let names: Vec<String> = header
        .iter()
        .skip(fixed)
        .take(header.len() - fixed - 1)
        .map(String::from)
        .collect();
    let bad = |what: &str| Error::Config(format!("{}: malformed {what}", path.display()));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let f = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|_| bad(&header[i])) };
        let u =
            |i: usize| -> Result<usize> { rec[i].parse::<usize>().map_err(|_| bad(&header[i])) };
        let status = match &rec[2] {
            "converged" => RunStatus::Converged,
            "not-converged" => RunStatus::NotConverged,
            "failed" => RunStatus::Failed,
            _ => return Err(bad("status")),
        };
        let x = if status == RunStatus::Failed {
            vec![]
        } else {
            (fixed..fixed + names.len()).map(f).collect::<Result<_>>()?
        };
        rows.push(RunRecord {
            run: u(0)?,
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            status,
            x,
            fitness: f(6)?,
            cost: f(7)?,
            mass: if rec[8].is_empty() { None } else { Some(f(8)?) },
            calls: u(3)?,
            failed_solves: u(4)?,
            seconds: f(5)?,
            detail: rec[header.len() - 1].to_string(),
            history: vec![],
            shape: None,
        });
    }
    Ok((names, rows))
}

/// One row per variable, then one for the call counts.
pub fn write_aggregate_csv(path: &Path, aggregate: &Aggregate) -> Result<()> {
    let header = strings(&["quantity", "min", "max", "mean", "std"]);
    let mut body: Vec<Vec<String>> = aggregate
        .variables
        .iter()
        .map(|(name, s)| {
            vec![
                name.clone(),
                num(s.min),
                num(s.max),
                num(s.mean),
                num(s.std),
            ]
        })
        .collect();
    let c = &aggregate.calls;
    body.push(vec![
        "calls".into(),
        num(c.min),
        num(c.max),
        num(c.mean),
        String::new(),
    ]);
    write_csv_atomic(path, &header, &body)
}

pub fn write_history_csv(
    path: &Path,
    names: &[String],
    history: &[crate::evolutionary::GenerationRecord],
) -> Result<()> {
    let mut header = strings(&["generation", "best_j", "mean_j"]);
    header.extend(names.iter().map(|n| format!("best_{n}")));
    let body: Vec<Vec<String>> = history
        .iter()
        .map(|g| {
            let mut row = vec![
                g.generation.to_string(),
                num(g.best_fitness),
                num(g.mean_fitness),
            ];
            row.extend(g.best_x.iter().take(names.len()).copied().map(num));
            row
        })
        .collect();
    write_csv_atomic(path, &header, &body)
}

/// Labelled polylines in one table with columns `configuration, s, x, y`.
pub fn write_shape_csv(path: &Path, shapes: &[(&str, &[ShapePoint])]) -> Result<()> {
    let header = strings(&["configuration", "s", "x", "y"]);
    let body: Vec<Vec<String>> = shapes
        .iter()
        .flat_map(|(label, pts)| {
            pts.iter()
                .map(move |p| vec![label.to_string(), num(p.s), num(p.x), num(p.y)])
        })
        .collect();
    write_csv_atomic(path, &header, &body)
}

/// Writes the report tables into `dir` and returns the paths written.
pub fn export_results(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let runs = dir.join("runs.csv");
    write_runs_csv(&runs, &report.names, &report.runs)?;
    written.push(runs);
    if let Some(agg) = &report.aggregate {
        let p = dir.join("aggregate.csv");
        write_aggregate_csv(&p, agg)?;
        written.push(p);
    }
    if let Some(set) = &report.samples {
        let p = dir.join("samples.csv");
        let tmp = p.with_extension("csv.tmp");
        set.write_csv(&tmp)?;
        fs::rename(&tmp, &p).map_err(io_err(&p))?;
        written.push(p);
    }
    for r in &report.runs {
        if !r.history.is_empty() {
            let p = dir.join(format!("history_{:03}.csv", r.run));
            write_history_csv(&p, &report.names, &r.history)?;
            written.push(p);
        }
        if let Some(shape) = &r.shape {
            let p = dir.join(format!("shape_{:03}.csv", r.run));
            let mut shapes: Vec<(&str, &[ShapePoint])> =
                vec![("reference", &report.reference_shape)];
            if let Some(d) = &report.desired_shape {
                shapes.push(("desired", d));
            }
            shapes.push(("deformed", shape));
            write_shape_csv(&p, &shapes)?;
            written.push(p);
        }
    }
    Ok(written)
}
