//! Executes a [`RunConfig`] and writes its artifacts.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use levy_neumann::{
    catalog, estimate_u, estimate_u_penalized, evaluate_it, oracle_skorokhod, oracle_u, run_sweep, simulate_reflected,
    solve_penalized, solve_reflection, CadlagPath, ConvexDomain, FunctionalSpec, Horizon, Interpolation, JumpLaw,
    LevyDriverSpec, McConfig, MatrixField, NeumannProblem, OracleKind, ReflectedTrajectory, ScalarField,
    SdeCoefficients, StableSpec, StreamId, SweepTable, TimeGrid, VectorField,
};
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::CliError;
use crate::report::{
    config_hash, render_report, results_csv, write_file, GridInfo, Manifest, ResultRow, Versions, MANIFEST_FILE,
    RESULTS_FILE,
};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LEVY_NEUMANN_OUT";
/// Output directory when neither flag, config nor environment names one.
pub const DEFAULT_OUT: &str = "levy-neumann-out";

/// Precedence: command-line flag, config field, environment, built-in default.
pub fn resolve_output_dir(flag: Option<PathBuf>, config: &RunConfig, env: Option<OsString>) -> PathBuf {
    flag.or_else(|| config.output_dir.clone())
        .or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Files and messages produced by a successful run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
    pub manifest_path: PathBuf,
    pub plots: Vec<PathBuf>,
    pub trajectories: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// Lines for standard output.
    pub stdout: Vec<String>,
}

struct ModeOutput {
    rows: Vec<ResultRow>,
    horizons: Vec<f64>,
    tables: Vec<SweepTable>,
    details: serde_json::Value,
    stdout: Vec<String>,
    trajectories: Vec<PathBuf>,
}

impl ModeOutput {
    fn new(rows: Vec<ResultRow>) -> Self {
        ModeOutput { rows, horizons: Vec::new(), tables: Vec::new(), details: serde_json::Value::Null, stdout: Vec::new(), trajectories: Vec::new() }
    }
}

/// Validates the config, runs its mode and writes the results CSV, the
/// manifest and any plots or trajectory dumps into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome, CliError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(&format!("cannot create {}", out_dir.display()), e))?;
    let mut out = match config.mode {
        Mode::Solve | Mode::SolvePenalized => solve(config)?,
        Mode::SweepN | Mode::SweepAlpha | Mode::SweepCoeff => sweep(config)?,
        Mode::Skorokhod => skorokhod(config, out_dir)?,
        Mode::Selftest => selftest_mode(config)?,
        Mode::ListOracles => list_oracles()?,
    };
    if config.dump_trajectories > 0 && config.mode.ne(&Mode::Skorokhod) {
        if let Some(problem) = &config.problem {
            let horizon = out.horizons.first().copied().unwrap_or_else(|| fixed_or(config.mc.horizon, 10.0));
            out.trajectories = dump_trajectories(problem, config, horizon, out_dir)?;
        }
    }

    let mut plots = Vec::new();
    let mut warnings = Vec::new();
    for t in &out.tables {
        let (p, w) = render_report(t, out_dir);
        plots.extend(p);
        warnings.extend(w);
    }

    let results_path = out_dir.join(RESULTS_FILE);
    write_file(&results_path, &results_csv(&out.rows))?;
    let bias_bounds: Vec<f64> = out.rows.iter().map(|r| r.bias_bound).collect();
    let manifest = Manifest {
        config_hash: config_hash(config),
        seed: config.mc.seed,
        mode: config.mode.name(),
        versions: Versions::current(),
        grid: GridInfo { dt: config.mc.dt, horizon: config.mc.horizon, horizons_used: out.horizons.clone() },
        max_bias_bound: bias_bounds.iter().copied().fold(0.0, f64::max),
        bias_bounds,
        results_file: RESULTS_FILE,
        plots: plots.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        warnings: warnings.clone(),
        details: out.details,
        config: config.clone(),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::new("internal", e.to_string()))?;
    write_file(&manifest_path, &text)?;
    Ok(RunOutcome {
        rows: out.rows,
        results_path,
        manifest_path,
        plots,
        trajectories: out.trajectories,
        warnings,
        stdout: out.stdout,
    })
}

fn fixed_or(h: Horizon, fallback: f64) -> f64 {
    match h {
        Horizon::Fixed { value } => value,
        Horizon::Auto { .. } => fallback,
    }
}

fn solve(config: &RunConfig) -> Result<ModeOutput, CliError> {
    let problem = config.checked_problem()?;
    let mut rows = Vec::new();
    let mut horizons = Vec::new();
    let mut estimates = Vec::new();
    for x in &config.points {
        let (label, e) = match config.penalty.filter(|_| config.mode == Mode::SolvePenalized) {
            Some(n) => (format!("{n:?}"), estimate_u_penalized(problem, x, n, &config.mc)?),
            None => (String::new(), estimate_u(problem, x, &config.mc)?),
        };
        rows.push(ResultRow::from_estimate(label, x, &e));
        horizons.push(e.horizon);
        estimates.push(e);
    }
    let mut out = ModeOutput::new(rows);
    out.horizons = horizons;
    out.details = serde_json::json!({ "estimates": estimates });
    Ok(out)
}

fn sweep(config: &RunConfig) -> Result<ModeOutput, CliError> {
    let problem = config.checked_problem()?;
    let sweep = config.sweep.as_ref().expect("validated");
    let table = run_sweep(problem, sweep, &config.points, &config.mc)?;
    let mut rows = Vec::new();
    let mut horizons = Vec::new();
    for x in &config.points {
        let mine: Vec<_> = table.rows.iter().filter(|r| &r.x == x).collect();
        if let Some(first) = mine.first() {
            rows.push(ResultRow::from_estimate("target", x, &first.target));
            horizons.push(first.target.horizon);
        }
        for r in mine {
            rows.push(ResultRow::from_estimate(format!("{:?}", r.param), x, &r.estimate));
            horizons.push(r.estimate.horizon);
        }
    }
    let mut out = ModeOutput::new(rows);
    out.horizons = horizons;
    out.details = serde_json::json!({ "sweep": table });
    out.tables.push(table);
    Ok(out)
}

fn write_path(path: &CadlagPath, file: PathBuf) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    path.write_csv(&mut buf).map_err(|e| CliError::io("cannot format path", e))?;
    std::fs::write(&file, buf).map_err(|e| CliError::io(&format!("cannot write {}", file.display()), e))?;
    Ok(file)
}

fn sup_gap(a: &CadlagPath, b: &CadlagPath) -> f64 {
    (0..a.len().min(b.len()))
        .map(|i| a.value(i).iter().zip(b.value(i)).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn skorokhod(config: &RunConfig, out_dir: &Path) -> Result<ModeOutput, CliError> {
    let problem = config.checked_problem()?;
    let domain = &problem.domain;
    let y = config.path.as_ref().expect("validated").to_path()?;
    let sol = solve_reflection(domain, &y)?;
    sol.verify(domain, &y)?;
    let reference = oracle_skorokhod(domain, &y)?;
    let y0 = y.value(0).to_vec();
    let total = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    let mut rows = vec![
        ResultRow::exact("reflection", &y0, total(sol.k.running_variation())),
        ResultRow::exact("reference", &y0, total(reference.k.running_variation())),
    ];
    let mut details = serde_json::json!({
        "sup_gap_to_reference": sup_gap(&sol.x, &reference.x),
        "variation": total(sol.k.running_variation()),
    });
    if let Some(n) = config.penalty {
        let pen = solve_penalized(domain, &y, n, y.times())?;
        rows.push(ResultRow::exact(format!("{n:?}"), &y0, total(pen.k.running_variation())));
        let projected: Vec<f64> = pen.projected(domain).concat();
        let proj = CadlagPath::new(y.dim(), y.times().to_vec(), projected, Interpolation::PiecewiseLinear)?;
        details["penalized_sup_gap"] = serde_json::json!(sup_gap(&sol.x, &proj));
    }
    let mut out = ModeOutput::new(rows);
    out.trajectories.push(write_path(&sol.x, out_dir.join("skorokhod_x.csv"))?);
    out.trajectories.push(write_path(sol.k.base(), out_dir.join("skorokhod_k.csv"))?);
    out.stdout.push(format!("sup gap to reference solver: {:e}", details["sup_gap_to_reference"].as_f64().unwrap_or(f64::NAN)));
    out.details = details;
    Ok(out)
}

fn dump_trajectories(problem: &NeumannProblem, config: &RunConfig, horizon: f64, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let x0 = config.points.first().cloned().unwrap_or_else(|| problem.domain.center());
    let grid = TimeGrid::new(horizon, ((horizon / config.mc.dt).ceil() as usize).max(1))?;
    let mut files = Vec::new();
    for i in 0..config.dump_trajectories {
        let stream = StreamId::new(config.mc.seed, i as u64);
        let tr: ReflectedTrajectory = simulate_reflected(&x0, &problem.coeffs, &problem.levy, &problem.domain, grid, stream)?;
        files.push(write_path(&tr.x, out_dir.join(format!("trajectory_{i}_x.csv")))?);
        files.push(write_path(tr.k.base(), out_dir.join(format!("trajectory_{i}_k.csv")))?);
    }
    Ok(files)
}

fn list_oracles() -> Result<ModeOutput, CliError> {
    let cases = catalog()?;
    let mut out = ModeOutput::new(cases.iter().map(|c| ResultRow::exact(c.name, &c.point, c.exact)).collect());
    out.stdout = cases.iter().map(|c| format!("{}\t{:?}\t{:?}\t{}", c.name, c.point, c.exact, c.note)).collect();
    out.details = serde_json::json!({ "cases": cases });
    Ok(out)
}

/// Outcome of one self-test check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        let passed = (value - expected).abs() <= tolerance;
        Check { name: name.into(), value, expected, tolerance, passed }
    }
}

/// Reference cases, solver exactness on them and invariant smoke checks.
/// `mc.seed` drives the one stochastic check.
pub fn selftest(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let one_path = McConfig { n_paths: 1, horizon: Horizon::Fixed { value: 1.0 }, dt: 0.01, seed, pilot_paths: 0 };
    for case in catalog()? {
        checks.push(Check::new(format!("{}: quadrature", case.name), case.self_check()? + case.exact, case.exact, 1e-10));
        match case.kind {
            OracleKind::Degenerate { penalty } => {
                let d = case.domain.dim();
                let problem = NeumannProblem::new(case.domain.clone(), SdeCoefficients::zero(d), LevyDriverSpec::none(d), case.functional.clone())?;
                let exact = oracle_u(&case, &case.point)?;
                let e = match penalty {
                    Some(n) => estimate_u_penalized(&problem, &case.point, n, &one_path)?,
                    None => estimate_u(&problem, &case.point, &one_path)?,
                };
                checks.push(Check::new(format!("{}: solver", case.name), e.mean, exact, 1e-10));
            }
            OracleKind::ConstantRunningCost => {
                let d = case.domain.dim();
                // The growth check needs K ≥ |f| for a constant f.
                let functional = case.functional.clone().with_growth_constant(case.exact * case.functional.lambda + 1.0);
                let problem = NeumannProblem::new(case.domain.clone(), SdeCoefficients::zero(d), LevyDriverSpec::none(d), functional)?;
                let long = McConfig { horizon: Horizon::Fixed { value: 60.0 }, dt: 0.1, ..one_path };
                let e = estimate_u(&problem, &case.point, &long)?;
                checks.push(Check::new(format!("{}: solver", case.name), e.mean, oracle_u(&case, &case.point)?, 1e-10));
            }
            OracleKind::StepFunctional { z, a, horizon } => {
                let y = CadlagPath::with_jumps(1, vec![0.0, a, horizon], vec![0.0, -z, -z], vec![false, true, false], vec![0.0, -z, 0.0], Interpolation::PiecewiseConstant)?;
                let sol = solve_reflection(&case.domain, &y)?;
                let tr = ReflectedTrajectory::from_solution(y.clone(), sol);
                let it = evaluate_it(&case.functional.g, &tr, &case.domain, 0.0, horizon)?;
                checks.push(Check::new(format!("{}: boundary functional", case.name), it, case.exact, 1e-10));
                let n = 100.0;
                let pen = solve_penalized(&case.domain, &y, n, y.times())?;
                let state = pen.x.value(pen.x.len() - 1)[0];
                checks.push(Check::new(format!("{}: penalized state", case.name), state, case.step_penalized_state(n)?, 1e-10));
            }
        }
    }

    let disk = ConvexDomain::ball(vec![0.0, 0.0], 1.0)?;
    let mut worst_idem = 0.0f64;
    let mut worst_dist = 0.0f64;
    for i in 0..64 {
        let t = i as f64 * 0.7;
        let r = 0.1 + 0.05 * i as f64;
        let x = [r * t.cos(), r * t.sin()];
        let p = disk.project(&x);
        let pp = disk.project(&p);
        worst_idem = worst_idem.max(p.iter().zip(&pp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let gap = x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst_dist = worst_dist.max((gap - disk.dist(&x)).abs());
    }
    checks.push(Check::new("projection is idempotent", worst_idem, 0.0, 1e-12));
    checks.push(Check::new("projection distance equals dist", worst_dist, 0.0, 1e-12));

    let problem = NeumannProblem::new(
        disk,
        SdeCoefficients::new(2, MatrixField::ScaledIdentity { scale: 0.5 }, VectorField::Zero)?,
        LevyDriverSpec::none(2)
            .with_compound_poisson(2.0, JumpLaw::Gaussian { mean: vec![0.0, 0.0], std: 0.5 })
            .with_stable(StableSpec::new(1.5))
            .with_moment(1.2),
        FunctionalSpec::new(ScalarField::constant(1.0), ScalarField::constant(0.0), 1.0),
    )?;
    let mc = McConfig { n_paths: 500, horizon: Horizon::Fixed { value: 10.0 }, dt: 0.02, seed, pilot_paths: 0 };
    let e = estimate_u(&problem, &[0.3, -0.2], &mc)?;
    let tol = (3.0 * e.std_error).max((-10.0f64).exp()) + 1e-12;
    checks.push(Check::new("constant running cost identity", e.mean, 1.0, tol));
    Ok(checks)
}

fn selftest_mode(config: &RunConfig) -> Result<ModeOutput, CliError> {
    let checks = selftest(config.mc.seed)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::new("selftest", format!("failed checks: {}", failed.join("; "))));
    }
    let rows = checks.iter().map(|c| ResultRow::exact(c.name.replace(',', ";"), &[], c.value)).collect();
    let mut out = ModeOutput::new(rows);
    out.stdout = checks.iter().map(|c| format!("ok  {}  value={:e}  expected={:e}", c.name, c.value, c.expected)).collect();
    out.details = serde_json::json!({ "checks": checks });
    Ok(out)
}
