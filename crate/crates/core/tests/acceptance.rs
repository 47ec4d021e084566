use std::cell::OnceCell;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use gebeam_core::evolutionary::evolve_observed;
use gebeam_core::fem::{
    design_sensitivity, element_dof_map, element_residual, element_tangent, internal_force,
    newton_solve, ChainBuilder,
};
use gebeam_core::harness::presets::{self, ThicknessVariant};
use gebeam_core::harness::{preset_experiment, run_experiment, RunReport, RunStatus};
use gebeam_core::optimality::volume_and_mass;
use gebeam_core::surrogate::{approximate, basis_len, SampleSet};
use gebeam_core::{
    Configuration, CrossSection, GaMethod, GaSettings, LoadCase, LoadPattern, Mesh, NewtonOptions,
    SectionLaw,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_preset(
    name: &str,
    runs: usize,
    edit: impl FnOnce(&mut gebeam_core::harness::ExperimentSpec),
) -> RunReport {
    let mut spec = preset_experiment(name).unwrap();
    spec.reseed(0, runs).unwrap();
    spec.output.history = false;
    spec.output.shape = false;
    edit(&mut spec);
    run_experiment(&spec).unwrap()
}

fn column(report: &RunReport, k: usize) -> Vec<f64> {
    report.runs.iter().map(|r| r.x[k]).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn spread(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn mean_calls(report: &RunReport) -> f64 {
    report.runs.iter().map(|r| r.calls as f64).sum::<f64>() / report.runs.len() as f64
}

fn all_converged(report: &RunReport) -> Result<(), String> {
    let bad: Vec<String> = report
        .runs
        .iter()
        .filter(|r| r.status != RunStatus::Converged)
        .map(|r| format!("seed {} {} ({})", r.seed, r.status.as_str(), r.detail))
        .collect();
    ensure(bad.is_empty(), || bad.join("; "))
}

fn unit_cantilever(elements: usize) -> Mesh {
    let section = SectionLaw::new(
        12000.0,
        6000.0,
        CrossSection::Rectangular {
            width: 1.0,
            height: 1.0,
        },
    );
    let mut mesh = ChainBuilder::new(0.0, 0.0, 0.0)
        .line(10.0, elements, section)
        .build()
        .unwrap();
    mesh.clamp(0);
    mesh
}

fn tip_load(node: usize, fy: f64, moment: f64) -> LoadCase {
    LoadCase {
        fixed: vec![LoadPattern::Dead {
            node,
            fx: 0.0,
            fy,
            moment,
        }],
        controls: vec![],
    }
}

fn roll_up() -> Check {
    let clock = Instant::now();
    let mesh = unit_cantilever(10);
    let opts = NewtonOptions {
        load_steps: 20,
        relative_tolerance: 1e-10,
        ..Default::default()
    };
    let rep = newton_solve(
        &mesh,
        &tip_load(10, 0.0, 2.0 * PI * 1000.0 / 10.0),
        &[],
        &opts,
    )
    .map_err(|e| e.to_string())?;
    let secs = clock.elapsed().as_secs_f64();
    let gap = rep.configuration.position(10).norm();
    let iters = rep.max_step_iterations();
    ensure(gap < 1e-6 * 10.0, || format!("tip-to-root {gap:e}"))?;
    ensure(iters <= 6, || format!("{iters} iterations in a step"))?;
    ensure(secs < 1.0, || format!("{secs:.3} s"))?;
    Ok(format!(
        "tip-to-root {gap:.2e}, at most {iters} iterations/step, {secs:.3} s"
    ))
}

fn linear_limit() -> Check {
    let clock = Instant::now();
    let mesh = unit_cantilever(20);
    let rep = newton_solve(
        &mesh,
        &tip_load(20, 0.1, 0.0),
        &[],
        &NewtonOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let secs = clock.elapsed().as_secs_f64();
    let v = rep.configuration.position(20).y;
    let beam = 0.1 * 1000.0 / (3.0 * 1000.0);
    let err = (v - beam).abs() / beam;
    ensure(err < 0.01, || format!("deflection {v} vs {beam}"))?;
    ensure(secs < 1.0, || format!("{secs:.3} s"))?;
    Ok(format!(
        "deflection {v:.6} vs {beam:.6} ({:.3}%), {secs:.3} s",
        100.0 * err
    ))
}

fn rel_err(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    (analytic - fd).amax() / analytic.amax()
}

fn perturbed(mesh: &Mesh, rng: &mut ChaCha8Rng, amp: f64) -> Configuration {
    let mut c = mesh.reference_configuration();
    for v in c.0.iter_mut() {
        *v += rng.random_range(-amp..amp);
    }
    c
}

fn derivative_suite() -> Check {
    let clock = Instant::now();
    let states = 20;
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 4];

    let tletter = presets::tletter_mesh().unwrap();
    for _ in 0..states {
        let c = perturbed(&tletter, &mut rng, 0.3);
        let e = rng.random_range(0..tletter.elements.len());
        let k = element_tangent(&tletter, &c, e).unwrap();
        let dofs = element_dof_map(&tletter, e);
        let mut fd = DMatrix::zeros(dofs.len(), dofs.len());
        for (j, &g) in dofs.iter().enumerate() {
            let (mut p, mut q) = (c.clone(), c.clone());
            p.0[g] += h;
            q.0[g] -= h;
            let col = (element_residual(&tletter, &p, e).unwrap()
                - element_residual(&tletter, &q, e).unwrap())
                / (2.0 * h);
            fd.set_column(j, &col);
        }
        worst[0] = worst[0].max(rel_err(&k, &fd));
    }

    let iletter = presets::iletter_mesh().unwrap();
    let n = iletter.node_count();
    let mut loads = presets::iletter_loads(n - 2, n - 1);
    loads.fixed.push(LoadPattern::Follower {
        node: 3,
        px: 12.0,
        py: -7.0,
    });
    for _ in 0..states {
        let c = perturbed(&iletter, &mut rng, 0.5);
        let nu = [
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            10.0,
        ];
        let k = loads.load_stiffness(&c, &nu, 1.0).unwrap();
        let mut fd = DMatrix::zeros(k.nrows(), k.ncols());
        for j in 0..k.ncols() {
            let (mut p, mut q) = (c.clone(), c.clone());
            p.0[j] += h;
            q.0[j] -= h;
            let col = (loads.external_force(&p, &nu, 1.0).unwrap()
                - loads.external_force(&q, &nu, 1.0).unwrap())
                / (2.0 * h);
            fd.set_column(j, &col);
        }
        worst[1] = worst[1].max(rel_err(&k, &fd));
    }

    let shear = presets::thickness_problem(ThicknessVariant::ShearEnergy, NewtonOptions::default())
        .unwrap();
    for _ in 0..states {
        let d: Vec<f64> = presets::THICKNESS_BOX
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        let mesh = shear.mesh_for(&d).unwrap();
        let c = perturbed(&mesh, &mut rng, 5.0);
        let s = design_sensitivity(&mesh, &c).unwrap();
        let mut fd = DMatrix::zeros(s.nrows(), s.ncols());
        for k in 0..d.len() {
            let step = 1e-6 * d[k];
            let (mut a, mut b) = (d.clone(), d.clone());
            a[k] += step;
            b[k] -= step;
            let col = (internal_force(&mesh.with_design_values(&a).unwrap(), &c).unwrap()
                - internal_force(&mesh.with_design_values(&b).unwrap(), &c).unwrap())
                / (2.0 * step);
            fd.set_column(k, &col);
        }
        worst[2] = worst[2].max(rel_err(&s, &fd));
    }

    let control = presets::tletter_problem(NewtonOptions {
        load_steps: 5,
        ..Default::default()
    })
    .unwrap();
    let displacement = presets::thickness_problem(
        ThicknessVariant::Displacement,
        NewtonOptions {
            load_steps: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let gradient_error = |g: &DVector<f64>, fd: &[f64]| {
        let fd = DVector::from_column_slice(fd);
        (g - fd).amax() / g.amax()
    };
    for i in 0..states {
        let x = [rng.random_range(10.0..60.0), rng.random_range(175.0..225.0)];
        let (_, g) = control.adjoint_gradient(&x).unwrap();
        let fd: Vec<f64> = (0..2)
            .map(|k| {
                let step = 1e-4 * x[k];
                let (mut a, mut b) = (x, x);
                a[k] += step;
                b[k] -= step;
                (control.objective(&a).unwrap() - control.objective(&b).unwrap()) / (2.0 * step)
            })
            .collect();
        worst[3] = worst[3].max(gradient_error(&g, &fd));

        let design = if i % 2 == 0 { &shear } else { &displacement };
        let d: Vec<f64> = presets::THICKNESS_BOX
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        let (_, g) = design.adjoint_gradient(&d).unwrap();
        let fd: Vec<f64> = (0..4)
            .map(|k| {
                let step = 1e-5 * d[k];
                let (mut a, mut b) = (d.clone(), d.clone());
                a[k] += step;
                b[k] -= step;
                (design.objective(&a).unwrap() - design.objective(&b).unwrap()) / (2.0 * step)
            })
            .collect();
        worst[3] = worst[3].max(gradient_error(&g, &fd));
    }

    let secs = clock.elapsed().as_secs_f64();
    let names = [
        "element tangent",
        "follower tangent",
        "df_int/dd",
        "adjoint gradient",
    ];
    let summary: Vec<String> = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect();
    ensure(worst.iter().all(|&w| w < 1e-5), || summary.join(", "))?;
    ensure(secs < 30.0, || format!("{secs:.1} s"))?;
    Ok(format!(
        "{} over {states} states each, {secs:.1} s",
        summary.join(", ")
    ))
}

fn tletter_recovery(grade: &RunReport) -> Check {
    all_converged(grade)?;
    let (f, m) = (column(grade, 0), column(grade, 1));
    let detail = format!(
        "F {:.4} ± {:.4}, M {:.4} ± {:.4} over {} seeds",
        mean(&f),
        std(&f),
        mean(&m),
        std(&m),
        f.len()
    );
    ensure(
        (mean(&f) - 40.0).abs() <= 0.25 && (mean(&m) - 205.0).abs() <= 0.25,
        || detail.clone(),
    )?;
    ensure(std(&f) <= 0.1 && std(&m) <= 0.1, || detail.clone())?;
    Ok(detail)
}

fn surface_sequential() -> Check {
    let report = run_preset("tletter-surface", 1, |_| {});
    let samples = report.samples.as_ref().ok_or("no sample set")?.len();
    let run = &report.runs[0];
    ensure(run.succeeded(), || run.detail.clone())?;
    let (f, m) = (run.x[0], run.x[1]);
    let detail = format!("F {f:.3}, M {m:.3}, {samples} grid solves");
    ensure((204.5..=205.5).contains(&m), || detail.clone())?;
    ensure((10.0..=60.0).contains(&f), || detail.clone())?;
    ensure(samples <= 400, || detail.clone())?;
    Ok(detail)
}

fn iletter() -> Check {
    let free = run_preset("iletter", 20, |_| {});
    all_converged(&free)?;
    let f = column(&free, 0);
    let m = column(&free, 1);
    let worst_line = f
        .iter()
        .zip(&m)
        .map(|(f, m)| (2.0 * f + m - 205.4).abs() / 205.4)
        .fold(0.0, f64::max);
    ensure(worst_line < 0.01, || {
        format!("2F+M off by {:.3}%", 100.0 * worst_line)
    })?;
    ensure(spread(&f) > 20.0, || format!("F spread {:.2}", spread(&f)))?;

    let reg = run_preset("iletter-regularized", 20, |_| {});
    all_converged(&reg)?;
    let (rf, rm) = (column(&reg, 0), column(&reg, 1));
    let point = 205.4 / 3.0;
    let agree = |v: &[f64]| {
        let c = mean(v);
        v.iter()
            .map(|x| (x - c).abs() / c.abs())
            .fold(0.0, f64::max)
    };
    let off = rf
        .iter()
        .chain(&rm)
        .map(|v| (v - point).abs() / point)
        .fold(0.0, f64::max);
    let outliers: Vec<String> = reg
        .runs
        .iter()
        .filter(|r| r.x.iter().any(|v| (v - point).abs() / point >= 0.01))
        .map(|r| {
            format!(
                "seed {} at ({:.3}, {:.3}) J {:.4e}",
                r.seed, r.x[0], r.x[1], r.cost
            )
        })
        .collect();
    let detail = format!(
        "free: 2F+M within {:.3}%, F spread {:.1}; regularised: agreement F {:.3}% M {:.3}%, worst distance to {point:.3} {:.2}%",
        100.0 * worst_line,
        spread(&f),
        100.0 * agree(&rf),
        100.0 * agree(&rm),
        100.0 * off
    );
    ensure(
        agree(&rf) < 0.005 && agree(&rm) < 0.005 && off < 0.01,
        || format!("{detail}; outliers: {}", outliers.join(", ")),
    )?;
    Ok(detail)
}

fn benchmark_ordering(grade: &RunReport, sade: &RunReport) -> Check {
    all_converged(sade)?;
    let (g, s) = (mean_calls(grade), mean_calls(sade));
    let detail = format!("GRADE {g:.1} vs SADE {s:.1} mean calls");
    ensure(g < s, || detail.clone())?;
    ensure(
        (100.0..10_000.0).contains(&g) && (100.0..10_000.0).contains(&s),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn thickness_shear() -> Check {
    let report = run_preset("thickness-shear", 100, |_| {});
    let a = [60.0, 30.0, 15.0, 15.0];
    let b = [30.0, 60.0, 15.0, 15.0];
    let near = |x: &[f64], v: &[f64]| x.iter().zip(v).all(|(p, q)| (p - q).abs() < 0.1);
    let mut costs = [vec![], vec![]];
    let mut strays = vec![];
    for r in &report.runs {
        if r.succeeded() && near(&r.x, &a) {
            costs[0].push(r.cost);
        } else if r.succeeded() && near(&r.x, &b) {
            costs[1].push(r.cost);
        } else {
            let x: Vec<String> = r.x.iter().map(|v| format!("{v:.2}")).collect();
            strays.push(format!(
                "seed {} at ({}) J {:.3}",
                r.seed,
                x.join(", "),
                r.cost
            ));
        }
    }
    let (ja, jb) = (mean(&costs[0]), mean(&costs[1]));
    let detail = format!(
        "{} at (60,30,15,15) J {ja:.4}, {} at (30,60,15,15) J {jb:.4}, {} elsewhere",
        costs[0].len(),
        costs[1].len(),
        strays.len()
    );
    ensure(strays.is_empty(), || {
        format!("{detail}: {}", strays.join("; "))
    })?;
    ensure(!costs[0].is_empty() && !costs[1].is_empty(), || {
        detail.clone()
    })?;
    ensure((ja - jb).abs() / ja.max(jb) < 0.005, || detail.clone())?;
    ensure(
        [ja, jb].iter().all(|j| (j - 17.97).abs() / 17.97 < 0.1),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn quadratic_reproduction(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0: f64 = rng.random_range(-1.0..1.0);
    let lin: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let quad: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let f = |x: &[f64]| {
        let mut v = c0;
        for i in 0..n {
            v += lin[i] * x[i];
            for j in 0..n {
                v += 0.5 * quad[i][j] * x[i] * x[j];
            }
        }
        v
    };
    let points: Vec<Vec<f64>> = (0..12 * basis_len(n))
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let values = points.iter().map(|p| f(p)).collect();
    let set = SampleSet::new(points, values).unwrap();
    let scale = set.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (0..50)
        .map(|_| {
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            (approximate(&set, &q).unwrap() - f(&q)).abs() / scale
        })
        .fold(0.0, f64::max)
}

fn reproduction_suite() -> Result<f64, String> {
    let mut worst = 0.0f64;
    for n in [2, 3, 5] {
        for seed in 0..10 {
            let err = quadratic_reproduction(n, 100 * n as u64 + seed);
            ensure(err < 1e-9, || format!("n={n} seed {seed}: error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn ga_invariants() -> Result<usize, String> {
    let mut audited = 0;
    for method in [GaMethod::Sade, GaMethod::Grade] {
        for (seed, n) in (0..8u64).zip([1usize, 2, 3, 4].into_iter().cycle()) {
            let bounds: Vec<(f64, f64)> =
                (0..n).map(|k| (-1.0 - k as f64, 2.0 + k as f64)).collect();
            let counter = AtomicUsize::new(0);
            let f = |x: &[f64]| {
                counter.fetch_add(1, Ordering::Relaxed);
                x.iter()
                    .enumerate()
                    .map(|(k, v)| (v - 0.1 * k as f64).abs())
                    .sum::<f64>()
            };
            let settings = GaSettings {
                seed,
                target: Some(1e-6),
                max_calls: 3000,
                ..GaSettings::for_method(method)
            };
            let size = settings.population_size(n);
            let (mut ok, mut last) = (true, f64::INFINITY);
            let out = evolve_observed(f, &bounds, &settings, |_, pop| {
                ok &= pop.len() == size;
                ok &= pop.iter().all(|c| {
                    c.x.iter()
                        .zip(&bounds)
                        .all(|(v, (lo, hi))| v >= lo && v <= hi)
                });
                let best = pop.iter().map(|c| c.fitness).fold(f64::INFINITY, f64::min);
                ok &= best <= last;
                last = best;
            })
            .map_err(|e| e.to_string())?;
            ok &= out.calls == counter.load(Ordering::Relaxed);
            ensure(ok, || {
                format!("{method:?} seed {seed} n {n} broke an invariant")
            })?;
            audited += 1;
        }
    }
    Ok(audited)
}

fn thickness_displacement() -> Check {
    let report = run_preset("thickness-displacement", 20, |_| {});
    all_converged(&report)?;
    let target = [43.79, 35.93, 26.33, 14.20];
    let means: Vec<f64> = (0..4).map(|k| mean(&column(&report, k))).collect();
    let problem =
        presets::thickness_problem(ThicknessVariant::Displacement, NewtonOptions::default())
            .unwrap();
    let (_, mass) = volume_and_mass(
        &problem.mesh_for(&means).unwrap(),
        presets::THICKNESS_DENSITY,
    )
    .map_err(|e| e.to_string())?;
    let h: Vec<String> = means.iter().map(|v| format!("{v:.3}")).collect();
    let detail = format!("mean h ({}), mass {mass:.1}", h.join(", "));
    ensure(
        means
            .iter()
            .zip(target)
            .all(|(m, t)| (m - t).abs() / t <= 0.02),
        || detail.clone(),
    )?;
    ensure((mass - 30062.0).abs() / 30062.0 <= 0.01, || detail.clone())?;
    let worst = reproduction_suite()?;
    let audited = ga_invariants()?;
    Ok(format!(
        "{detail}; MLS reproduction {worst:.1e}; {audited} GA runs audited"
    ))
}

fn surrogate_exactness() -> Check {
    let worst = reproduction_suite()?;
    Ok(format!("worst relative error {worst:.1e} over n = 2, 3, 5"))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    })
}

fn main() -> ExitCode {
    let clock = Instant::now();
    let mut results: Vec<(u32, &str, Check, f64)> = vec![];
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let r = guarded(f);
        let secs = t.elapsed().as_secs_f64();
        let status = if r.is_ok() { "PASS" } else { "FAIL" };
        let text = match &r {
            Ok(s) | Err(s) => s.clone(),
        };
        println!("criterion {id:>2} {status} {name} [{secs:.1} s]: {text}");
        results.push((id, name, r, secs));
    };

    let tletter = |method: GaMethod| {
        run_preset("tletter", 100, |spec| {
            if method == GaMethod::Sade {
                spec.ga = GaSettings {
                    target: spec.ga.target,
                    max_calls: spec.ga.max_calls,
                    ..GaSettings::sade()
                };
            }
        })
    };

    record(1, "pure-bending roll-up", &mut roll_up);
    record(2, "linear limit", &mut linear_limit);
    record(3, "derivative suite", &mut derivative_suite);
    let grade_report = OnceCell::new();
    record(4, "T-letter recovery", &mut || {
        tletter_recovery(grade_report.get_or_init(|| tletter(GaMethod::Grade)))
    });
    record(5, "surface-sequential T-letter", &mut surface_sequential);
    record(6, "I-letter degeneracy and regularisation", &mut iletter);
    record(7, "GA benchmark ordering", &mut || {
        benchmark_ordering(
            grade_report.get_or_init(|| tletter(GaMethod::Grade)),
            &tletter(GaMethod::Sade),
        )
    });
    record(
        8,
        "thickness shear-energy maximisation",
        &mut thickness_shear,
    );
    record(
        9,
        "thickness displacement-norm design",
        &mut thickness_displacement,
    );
    record(10, "surrogate exactness", &mut surrogate_exactness);

    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.2.is_err())
        .map(|r| r.0.to_string())
        .collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        clock.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
