//! Experiment execution and on-disk artifacts.
//!
//! A run directory holds `report.csv` (one row per subdomain and outer
//! iteration), `fields.csv` (predictions on the evaluation grid),
//! `summary.txt` and `config.resolved.toml`. Reals are written in
//! scientific notation with 17 significant digits so the files round-trip
//! exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::ddm::{run, DdmError, RunHistory, RunOutcome};
use crate::metrics::EvalGrid;
use crate::problems::ProblemSpec;

pub const REPORT_HEADER: [&str; 10] = [
    "iteration",
    "subdomain",
    "J",
    "boundary_C",
    "interface_C",
    "measurement_C",
    "alpha",
    "rel_l2",
    "max_abs",
    "lagrangian",
];

pub const FIELDS_HEADER: [&str; 6] = ["x", "y", "subdomain", "u_exact", "u_pred", "abs_err"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Divergence(DdmError),
    #[error(transparent)]
    Run(DdmError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl ReportError {
    /// Process exit code: 2 for configuration errors, 3 for divergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            ReportError::Config(_) => 2,
            ReportError::Divergence(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `report.csv` for the outer iterations completed so far.
pub fn write_report(path: &Path, history: &RunHistory) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(REPORT_HEADER).map_err(csv_err(path))?;
    for rec in &history.outer {
        for s in &rec.subdomains {
            let l = &s.loss;
            w.write_record([
                rec.iteration.to_string(),
                s.subdomain.to_string(),
                fmt_real(l.objective),
                fmt_real(l.boundary),
                fmt_real(l.interface),
                fmt_real(l.measurement),
                fmt_real(s.alpha),
                fmt_real(s.rel_l2),
                fmt_real(s.max_abs),
                fmt_real(l.lagrangian),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Writes `fields.csv`: every evaluation grid point of every subdomain.
pub fn write_fields(
    path: &Path,
    outcome: &RunOutcome,
    problem: &ProblemSpec,
    grid: &EvalGrid,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(FIELDS_HEADER).map_err(csv_err(path))?;
    for (m, pts) in outcome.models.iter().zip(&grid.points) {
        let pred = m.local.net.values(pts);
        for (p, u) in pts.iter().zip(pred) {
            let exact = problem.exact(*p);
            w.write_record([
                fmt_real(p[0]),
                fmt_real(p[1]),
                m.id.to_string(),
                fmt_real(exact),
                fmt_real(u),
                fmt_real((exact - u).abs()),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn summary_text(config: &RunConfig, history: &RunHistory) -> String {
    let mut s = String::new();
    let robin = match config.robin {
        crate::alm::RobinMode::Adaptive => "adaptive".to_string(),
        crate::alm::RobinMode::Constant { value } => format!("constant({value})"),
        crate::alm::RobinMode::ClosedForm => "closed_form".to_string(),
    };
    let _ = writeln!(s, "problem: {}", config.problem.name.as_str());
    let _ = writeln!(s, "robin parameter: {robin}");
    let _ = writeln!(s, "seed: {}", config.run.seed);
    let _ = writeln!(
        s,
        "epochs per outer iteration: {}, outer iterations: {}",
        config.training.epochs, config.training.outer_iterations
    );
    if let Some(last) = history.last() {
        let e = &last.errors;
        let _ = writeln!(s, "max relative L2 error across subdomains: {:.6e}", e.max_rel_l2);
        let _ = writeln!(s, "max absolute error across subdomains: {:.6e}", e.max_abs);
        for sub in &e.subdomains {
            let _ = writeln!(
                s,
                "subdomain {}: alpha {:.4}, relative L2 {:.6e}, max abs {:.6e}",
                sub.subdomain, sub.alpha, sub.rel_l2, sub.max_abs
            );
        }
        if !last.interface_gaps.is_empty() {
            let gaps: Vec<String> = last.interface_gaps.iter().map(|g| format!("{g:.3e}")).collect();
            let _ = writeln!(s, "mean interface gap |u_i - u_j|: {}", gaps.join(" "));
        }
        let _ = writeln!(s, "wall time: {:.1} s", e.wall_seconds);
    }
    let a = &history.audit;
    let _ = writeln!(
        s,
        "exchanges: {}, stale traces: {}, reset violations: {}, multiplier decreases: {}",
        a.exchanges, a.stale_traces, a.reset_violations, a.lambda_decreases
    );
    s
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub outcome: RunOutcome,
    pub output: PathBuf,
}

/// Runs the configured experiment and writes its artifacts under
/// `config.run.output`. On divergence the completed outer iterations are
/// still written to `report.csv`.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome, ReportError> {
    let exp = config.build()?;
    let out = config.run.output.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let resolved = out.join("config.resolved.toml");
    fs::write(&resolved, config.to_toml()).map_err(io_err(&resolved))?;

    let outcome = match run(&exp.settings, &exp.problem, &exp.partition, &exp.points) {
        Ok(o) => o,
        Err(DdmError::Divergence { source, history }) => {
            write_report(&out.join("report.csv"), &history)?;
            let summary = out.join("summary.txt");
            let mut text = summary_text(config, &history);
            let _ = writeln!(text, "diverged: {source}");
            fs::write(&summary, text).map_err(io_err(&summary))?;
            return Err(ReportError::Divergence(DdmError::Divergence { source, history }));
        }
        Err(e) => return Err(ReportError::Run(e)),
    };
    write_report(&out.join("report.csv"), &outcome.history)?;
    write_fields(&out.join("fields.csv"), &outcome, &exp.problem, &outcome.grid)?;
    let summary = out.join("summary.txt");
    let mut f = fs::File::create(&summary).map_err(io_err(&summary))?;
    f.write_all(summary_text(config, &outcome.history).as_bytes())
        .map_err(io_err(&summary))?;
    Ok(ExperimentOutcome { outcome, output: out })
}

/// Final-iteration maxima of one report.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalRow {
    pub source: PathBuf,
    pub iteration: usize,
    pub max_rel_l2: f64,
    pub max_abs: f64,
    pub alphas: Vec<f64>,
}

pub fn read_final_row(path: &Path) -> Result<FinalRow, ReportError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ReportError::Format {
                path: path.to_path_buf(),
                message: format!("missing column `{name}`"),
            })
    };
    let (it, sub, alpha, rel, abs) = (
        col("iteration")?,
        col("subdomain")?,
        col("alpha")?,
        col("rel_l2")?,
        col("max_abs")?,
    );
    let bad = |message: String| ReportError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let int = |i: usize| {
            field(i)
                .parse::<usize>()
                .map_err(|e| bad(format!("row {}: {e}", n + 2)))
        };
        let real = |i: usize| field(i).parse::<f64>().map_err(|e| bad(format!("row {}: {e}", n + 2)));
        rows.push((int(it)?, int(sub)?, real(alpha)?, real(rel)?, real(abs)?));
    }
    let last = rows
        .iter()
        .map(|r| r.0)
        .max()
        .ok_or_else(|| bad("no data rows".into()))?;
    let mut fin: Vec<_> = rows.into_iter().filter(|r| r.0 == last).collect();
    fin.sort_by_key(|r| r.1);
    Ok(FinalRow {
        source: path.to_path_buf(),
        iteration: last,
        max_rel_l2: fin.iter().map(|r| r.3).fold(0.0, f64::max),
        max_abs: fin.iter().map(|r| r.4).fold(0.0, f64::max),
        alphas: fin.iter().map(|r| r.2).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportComparison {
    pub first: FinalRow,
    pub second: FinalRow,
    /// relative tolerance under which two errors count as a tie
    pub tolerance: f64,
    /// lower max relative L2 error, unless within tolerance
    pub winner: Option<Winner>,
}

impl std::fmt::Display for ReportComparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<40} {:>14} {:>14}  alpha", "report", "max rel L2", "max abs")?;
        for (row, side) in [(&self.first, Winner::First), (&self.second, Winner::Second)] {
            let flag = if self.winner == Some(side) { " *" } else { "" };
            let alphas: Vec<String> = row.alphas.iter().map(|a| format!("{a:.4}")).collect();
            writeln!(
                f,
                "{:<40} {:>14.6e} {:>14.6e}  {}{}",
                row.source.display(),
                row.max_rel_l2,
                row.max_abs,
                alphas.join(" "),
                flag
            )?;
        }
        match self.winner {
            None => write!(f, "tie within relative tolerance {}", self.tolerance),
            Some(w) => {
                let row = if w == Winner::First { &self.first } else { &self.second };
                write!(f, "winner: {}", row.source.display())
            }
        }
    }
}

pub fn compare_rows(first: FinalRow, second: FinalRow, tolerance: f64) -> ReportComparison {
    let (a, b) = (first.max_rel_l2, second.max_rel_l2);
    let winner = if (a - b).abs() <= tolerance * a.max(b) {
        None
    } else if a < b {
        Some(Winner::First)
    } else {
        Some(Winner::Second)
    };
    ReportComparison {
        first,
        second,
        tolerance,
        winner,
    }
}

/// Side-by-side final max errors of two `report.csv` files.
pub fn compare_reports(first: &Path, second: &Path, tolerance: f64) -> Result<ReportComparison, ReportError> {
    Ok(compare_rows(read_final_row(first)?, read_final_row(second)?, tolerance))
}
