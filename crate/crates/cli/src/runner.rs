//! The verbs: sweep a degree/level grid, compare spaces, dump a field.
//!
//! Every pipeline error is tagged with the stage that produced it so the
//! one-line diagnostic names where things broke, and numerical failures
//! (exit 3) stay distinguishable from configuration mistakes (exit 2).

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use qtdg::basis::SpaceKind;
use qtdg::mesh::Mesh;
use qtdg::problem::{builtin, builtin_takes_nu, ProblemSpec};
use qtdg::solve::{ErrorOptions, ErrorReport, RateTriple};
use qtdg::{
    assemble, build_bases, compute_errors, convergence_rates, solve, validate_problem,
    DgParameters64,
};

use crate::config::{CliError, ExperimentConfig, GammaRule};

/// One (degree, level) cell of a sweep, with the rate against the previous
/// level of the same degree when there is one.
pub struct CellRow {
    pub space: String,
    pub p: u32,
    pub n: usize,
    pub report: ErrorReport<f64>,
    pub rates: Option<RateTriple<f64>>,
    pub walltime_s: f64,
}

pub struct RunRecord {
    pub rows: Vec<CellRow>,
    /// Deduplicated problem-validation warnings across all cells.
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: [&str; 13] = [
    "space",
    "p",
    "n",
    "h_nominal",
    "h_actual",
    "dofs",
    "err_L2",
    "err_H1",
    "err_Linf",
    "rate_L2",
    "rate_H1",
    "rate_Linf",
    "walltime_s",
];

fn load_problem(name: &str, nu: Option<f64>) -> Result<ProblemSpec<f64>, CliError> {
    if nu.is_some() && !builtin_takes_nu(name) {
        return Err(CliError::Config(format!(
            "problem {name:?} does not take --nu"
        )));
    }
    builtin(name, nu).map_err(|e| CliError::Config(format!("{e}")))
}

/// Mesh, classify, validate, build basis, assemble, solve, measure errors.
/// Returns the report, the wall time, and any validation warnings.
fn solve_cell(
    problem: &ProblemSpec<f64>,
    kind: SpaceKind,
    p: u32,
    n: usize,
    epsilon: f64,
    gamma: f64,
    quad: Option<usize>,
) -> Result<(ErrorReport<f64>, f64, Vec<String>), CliError> {
    let t0 = Instant::now();
    let mut mesh = Mesh::<f64>::generate_structured(2, n);
    mesh.classify_boundary(problem, p as usize + 1)
        .map_err(|e| numerical("classify", e))?;
    let validation =
        validate_problem(problem, &mesh, p).map_err(|e| numerical("validate", e))?;
    let bases = build_bases(&problem.coefficients, &mesh, p, kind)
        .map_err(|e| numerical("basis", e))?;
    let mut params = DgParameters64::new(epsilon, gamma);
    params.quad_points = quad;
    let system =
        assemble(&mesh, problem, &bases, params).map_err(|e| numerical("assembly", e))?;
    let solution = solve(&system, &mesh, &bases).map_err(|e| numerical("solve", e))?;
    let options = ErrorOptions { quad_points: quad, dar_gamma: None };
    let report =
        compute_errors(&solution, problem, options).map_err(|e| numerical("errors", e))?;
    Ok((report, t0.elapsed().as_secs_f64(), validation.warnings))
}

fn numerical(stage: &'static str, err: impl std::fmt::Display) -> CliError {
    CliError::Numerical { stage, message: format!("{err}") }
}

/// Run the full sweep described by `cfg`. Rows come out in config order:
/// degrees outer, levels inner.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord, CliError> {
    cfg.validate()?;
    let kind = SpaceKind::parse(&cfg.space).expect("validated");
    let problem = load_problem(&cfg.problem, cfg.nu)?;
    if problem.exact.is_none() {
        return Err(CliError::Config(format!(
            "problem {:?} has no exact solution; use the snapshot verb instead",
            cfg.problem
        )));
    }

    let mut rows = Vec::new();
    let mut warnings = BTreeSet::new();
    for &p in &cfg.degrees {
        let gamma = cfg.gamma.value_for(p)?;
        let mut reports = Vec::new();
        let mut times = Vec::new();
        for &n in &cfg.levels {
            let (report, dt, warns) =
                solve_cell(&problem, kind, p, n, cfg.epsilon, gamma, cfg.quad_points)?;
            warnings.extend(warns);
            reports.push(report);
            times.push(dt);
        }
        let rates = if reports.len() >= 2 {
            convergence_rates(&reports).map_err(|e| numerical("rates", e))?
        } else {
            Vec::new()
        };
        for (i, report) in reports.iter().enumerate() {
            rows.push(CellRow {
                space: cfg.space.clone(),
                p,
                n: cfg.levels[i],
                report: *report,
                rates: if i == 0 { None } else { Some(rates[i - 1]) },
                walltime_s: times[i],
            });
        }
    }
    Ok(RunRecord { rows, warnings: warnings.into_iter().collect() })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Write the sweep as CSV with the fixed column set. All numeric fields use
/// shortest round-trip formatting, so identical runs produce identical bytes
/// except for the walltime column.
pub fn write_convergence_csv(path: &Path, rows: &[CellRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    w.write_record(CSV_HEADER).map_err(io_err)?;
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.space.clone(),
            row.p.to_string(),
            row.n.to_string(),
            fmt_opt(r.h_nominal),
            format!("{:e}", r.h_actual),
            r.dofs.to_string(),
            format!("{:e}", r.err_l2),
            format!("{:e}", r.err_h1),
            format!("{:e}", r.err_linf),
            fmt_opt(row.rates.map(|t| t.l2)),
            fmt_opt(row.rates.map(|t| t.h1)),
            fmt_opt(row.rates.map(|t| t.linf)),
            format!("{:.3}", row.walltime_s),
        ])
        .map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Ensure `dir` exists, run the sweep, and drop `<dir>/<file_name>`.
pub fn run_to_csv(
    cfg: &ExperimentConfig,
    file_name: &str,
) -> Result<(std::path::PathBuf, RunRecord), CliError> {
    let record = run_experiment(cfg)?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cfg.out.display())))?;
    let path = cfg.out.join(file_name);
    write_convergence_csv(&path, &record.rows)?;
    Ok((path, record))
}

/// Solve each degree with both spaces on one mesh and tabulate size vs
/// accuracy: columns space,p,dofs,err_L2,err_H1.
pub fn compare_spaces(
    problem_name: &str,
    nu: Option<f64>,
    pmin: u32,
    pmax: u32,
    n: usize,
    epsilon: f64,
    gamma: &GammaRule,
    quad: Option<usize>,
    out_dir: &Path,
) -> Result<std::path::PathBuf, CliError> {
    if pmin > pmax {
        return Err(CliError::Config(format!("pmin {pmin} exceeds pmax {pmax}")));
    }
    let problem = load_problem(problem_name, nu)?;
    if problem.exact.is_none() {
        return Err(CliError::Config(format!(
            "problem {problem_name:?} has no exact solution; use the snapshot verb instead"
        )));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join("compare.csv");
    let mut w = csv::Writer::from_path(&path)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    w.write_record(["space", "p", "dofs", "err_L2", "err_H1"]).map_err(io_err)?;
    for p in pmin..=pmax {
        let gamma = gamma.value_for(p)?;
        for (label, kind) in
            [("qt", SpaceKind::QuasiTrefftz), ("full", SpaceKind::FullPolynomial)]
        {
            let (report, _, _) = solve_cell(&problem, kind, p, n, epsilon, gamma, quad)?;
            w.write_record([
                label.to_string(),
                p.to_string(),
                report.dofs.to_string(),
                format!("{:e}", report.err_l2),
                format!("{:e}", report.err_h1),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush()
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Solve once and sample the discrete solution on a uniform 101x101 grid
/// over the unit square, one value per line, row-major from (0,0) to (1,1).
pub fn snapshot(
    problem_name: &str,
    nu: Option<f64>,
    p: u32,
    n: usize,
    epsilon: f64,
    gamma: f64,
    quad: Option<usize>,
    out_file: &Path,
) -> Result<(), CliError> {
    let problem = load_problem(problem_name, nu)?;
    let mut mesh = Mesh::<f64>::generate_structured(2, n);
    mesh.classify_boundary(&problem, p as usize + 1)
        .map_err(|e| numerical("classify", e))?;
    let bases = build_bases(&problem.coefficients, &mesh, p, SpaceKind::QuasiTrefftz)
        .map_err(|e| numerical("basis", e))?;
    let mut params = DgParameters64::new(epsilon, gamma);
    params.quad_points = quad;
    let system =
        assemble(&mesh, &problem, &bases, params).map_err(|e| numerical("assembly", e))?;
    let solution = solve(&system, &mesh, &bases).map_err(|e| numerical("solve", e))?;

    let mut text = String::with_capacity(101 * 101 * 16);
    for iy in 0..=100 {
        for ix in 0..=100 {
            let x = [f64::from(ix) / 100.0, f64::from(iy) / 100.0];
            let value = solution.evaluate(&x).ok_or_else(|| CliError::Numerical {
                stage: "snapshot",
                message: format!("sample point ({}, {}) not found in mesh", x[0], x[1]),
            })?;
            text.push_str(&format!("{value:e}\n"));
        }
    }
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Config(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    std::fs::write(out_file, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", out_file.display())))?;
    Ok(())
}
