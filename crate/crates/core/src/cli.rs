//! Command-line front end: kernel evaluation, tables, verification suites and
//! lattice oracle runs, with CSV or JSON output.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 numerical nonconvergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::geometry::{geodesic_distance, HoricyclicPoint};
use crate::kernels::{EvalParams, KernelContext, KernelValue};
use crate::lattice::{convergence_study, MIN_SAMPLES};
use crate::verify::{self, tolerance, VerificationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

pub const THREADS_ENV: &str = "PSEUDOHEAT_THREADS";
pub const CSV_HEADER: &str = "D,tau,s,value,err_est";
pub const DEFAULT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "pseudoheat", version, about = "Heat kernels on the hyperbolic pseudosphere")]
pub struct Cli {
    /// Worker threads; falls back to PSEUDOHEAT_THREADS, then to the hardware.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one kernel value at a distance or between two points.
    Eval(EvalArgs),
    /// Evaluate the kernel on a tau x s grid.
    Table(TableArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Run the time-sliced lattice oracle and compare with the closed form.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Units {
    #[arg(long, default_value_t = EvalParams::DEFAULT_MASS)]
    pub mass: f64,
    #[arg(long, default_value_t = EvalParams::DEFAULT_HBAR)]
    pub hbar: f64,
    /// Relative tolerance of the kernel quadrature.
    #[arg(long, default_value_t = DEFAULT_REL_TOL)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub y1: Option<f64>,
    /// Horizontal coordinates of the first point, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x1: Option<Vec<f64>>,
    #[arg(long)]
    pub y2: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x2: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub tau: f64,
    /// Geodesic distance; alternatively give a point pair.
    #[arg(long, conflicts_with_all = ["y1", "y2", "x1", "x2"])]
    pub s: Option<f64>,
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub units: Units,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long)]
    pub dim: usize,
    /// `start,stop,count`
    #[arg(long)]
    pub tau_grid: Grid,
    /// `start,stop,count`
    #[arg(long)]
    pub s_grid: Grid,
    #[command(flatten)]
    pub units: Units,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Abel,
    PdeRadial,
    PdeHoricyclic,
    Ck,
    Mass,
    Gfunc,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[command(flatten)]
    pub units: Units,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.25)]
    pub tau: f64,
    /// Slice counts, comma separated.
    #[arg(long = "n", value_delimiter = ',', default_value = "4,8,16,32")]
    pub slices: Vec<usize>,
    #[arg(long, default_value_t = 200_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Endpoints; default to y = 1, x = 0 and y = 1.2, x = 0.3.
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub units: Units,
}

/// Closed grid `start, stop, count` with evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.stop } else { self.start + h * i as f64 })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let [start, stop, count] = parts.as_slice() else {
            return Err(format!("grid must be start,stop,count, got {text:?}"));
        };
        let start: f64 = start.parse().map_err(|e| format!("grid start: {e}"))?;
        let stop: f64 = stop.parse().map_err(|e| format!("grid stop: {e}"))?;
        let count: usize = count.parse().map_err(|e| format!("grid count: {e}"))?;
        if count < 1 {
            return Err("grid count must be at least 1".into());
        }
        if !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err("grid needs finite start <= stop".into());
        }
        Ok(Grid { start, stop, count })
    }
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    NonConvergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_nonconvergence() {
            Failure::NonConvergence(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type Outcome = Result<i32, Failure>;

/// Entry point used by the binary; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let threads = match resolve_threads(cli.threads, std::env::var(THREADS_ENV).ok().as_deref()) {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let mut buf = String::new();
    let outcome = pool.install(|| dispatch(&cli, threads, &mut buf));
    let _ = out.write_all(buf.as_bytes());
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::NonConvergence(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_NONCONVERGENCE
        }
    }
}

/// `--threads`, then the environment variable, then hardware parallelism.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<usize, String> {
    if let Some(t) = flag {
        return if t >= 1 { Ok(t) } else { Err("--threads must be at least 1".into()) };
    }
    if let Some(text) = env {
        return match text.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(t),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got {text:?}")),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn dispatch(cli: &Cli, threads: usize, out: &mut String) -> Outcome {
    match &cli.command {
        Command::Eval(a) => cmd_eval(a, cli.format, threads, out),
        Command::Table(a) => cmd_table(a, cli.format, threads, out),
        Command::Verify(a) => cmd_verify(a, cli.format, threads, out),
        Command::Oracle(a) => cmd_oracle(a, cli.format, threads, out),
    }
}

fn check_dim(dim: usize) -> Result<(), Failure> {
    if dim < 3 {
        return Err(Failure::Usage(format!("D must be ≥ 3 (got {dim})")));
    }
    Ok(())
}

fn context(units: &Units) -> Result<KernelContext, Failure> {
    Ok(KernelContext::new(KernelContext::default_spec().with_rel_tol(units.rel_tol))?)
}

fn params(dim: usize, units: &Units, tau: f64) -> Result<EvalParams, Failure> {
    Ok(EvalParams::new(dim, units.mass, units.hbar, tau)?)
}

fn header(command: &str, units: &Units, threads: usize, extra: Value) -> Value {
    let mut h = json!({
        "program": "pseudoheat",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "hbar": units.hbar,
        "mass": units.mass,
        "rel_tol": units.rel_tol,
        "threads": threads,
    });
    if let (Value::Object(h), Value::Object(extra)) = (&mut h, extra) {
        h.extend(extra);
    }
    h
}

fn push_json(out: &mut String, doc: &impl Serialize) {
    out.push_str(&serde_json::to_string_pretty(doc).expect("serializable"));
    out.push('\n');
}

fn point(dim: usize, y: Option<f64>, x: Option<&Vec<f64>>, default_y: f64, default_x: f64) -> Result<HoricyclicPoint, Failure> {
    let y = y.unwrap_or(default_y);
    let x = match x {
        Some(x) if x.len() == 1 && dim > 3 => vec![x[0]; dim - 2],
        Some(x) => x.clone(),
        None => vec![default_x; dim - 2],
    };
    if x.len() != dim - 2 {
        return Err(Failure::Usage(format!("D = {dim} needs {} horizontal coordinates", dim - 2)));
    }
    Ok(HoricyclicPoint::new(y, x)?)
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct Row {
    #[serde(rename = "D")]
    dim: usize,
    tau: f64,
    s: f64,
    value: Option<f64>,
    err_est: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl Row {
    fn new(params: &EvalParams, s: f64, result: &Result<KernelValue, Error>) -> Self {
        let (value, err_est, error) = match result {
            Ok(k) => (Some(k.value), Some(k.err_est), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        Row {
            dim: params.dim(),
            tau: params.tau(),
            s,
            value,
            err_est,
            error,
        }
    }

    fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), num);
        format!("{},{},{},{},{}", self.dim, num(self.tau), num(self.s), opt(self.value), opt(self.err_est))
    }
}

fn write_rows(out: &mut String, format: Format, head: Value, rows: &[Row]) {
    match format {
        Format::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in rows {
                out.push_str(&r.csv());
                out.push('\n');
            }
        }
        Format::Json => push_json(out, &json!({ "header": head, "rows": rows })),
    }
}

fn cmd_eval(a: &EvalArgs, format: Format, threads: usize, out: &mut String) -> Outcome {
    check_dim(a.dim)?;
    let p = params(a.dim, &a.units, a.tau)?;
    let ctx = context(&a.units)?;
    let s = match a.s {
        Some(s) => s,
        None => {
            let pr = &a.pair;
            if pr.y1.is_none() || pr.y2.is_none() {
                return Err(Failure::Usage("give --s or both --y1 and --y2".into()));
            }
            let q1 = point(a.dim, pr.y1, pr.x1.as_ref(), 1.0, 0.0)?;
            let q2 = point(a.dim, pr.y2, pr.x2.as_ref(), 1.0, 0.0)?;
            geodesic_distance(&q1, &q2)?
        }
    };
    let result = ctx.kernel(&p, s);
    let row = Row::new(&p, s, &result);
    write_rows(out, format, header("eval", &a.units, threads, json!({})), &[row]);
    result?;
    Ok(EXIT_OK)
}

fn cmd_table(a: &TableArgs, format: Format, threads: usize, out: &mut String) -> Outcome {
    check_dim(a.dim)?;
    let ctx = context(&a.units)?;
    let taus = a.tau_grid.points();
    let ss = a.s_grid.points();
    let cells: Vec<(f64, f64)> = taus.iter().flat_map(|&t| ss.iter().map(move |&s| (t, s))).collect();
    let plist = taus
        .iter()
        .map(|&t| params(a.dim, &a.units, t))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<(Row, bool)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(_, s))| {
            let p = &plist[i / ss.len()];
            let r = ctx.kernel(p, s);
            let failed = r.is_err();
            (Row::new(p, s, &r), failed)
        })
        .collect();
    let failed = rows.iter().filter(|r| r.1).count();
    let rows: Vec<Row> = rows.into_iter().map(|r| r.0).collect();
    write_rows(out, format, header("table", &a.units, threads, json!({})), &rows);
    if failed > 0 {
        return Err(Failure::NonConvergence(format!("{failed} table cells failed")));
    }
    Ok(EXIT_OK)
}

/// Grids used by the verification suites.
pub mod grids {
    pub fn abel_l() -> Vec<f64> {
        [0.0f64, 0.5, 1.0, 2.0, 3.0].iter().map(|s| s.cosh()).collect()
    }

    /// `s` in `[0.1, 5]`.
    pub fn pde_s() -> Vec<f64> {
        (0..=10).map(|i| 0.1 + 0.49 * i as f64).collect()
    }

    /// `tau` in `[0.1, 2]`.
    pub const PDE_TAU: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
    pub const CK_DISTANCES: [f64; 3] = [0.0, 1.0, 2.0];
    pub const MASS_TAU: [f64; 3] = [0.25, 0.5, 1.0];
    pub const GFUNC_MAX_ORDER: u32 = 5;

    /// Deterministic off-axis point pairs `((y1, x1), (y2, x2))` with the
    /// same horizontal value in every coordinate.
    pub const HORICYCLIC_PAIRS: [((f64, f64), (f64, f64)); 4] = [
        ((1.0, 0.0), (2.0, 1.0)),
        ((1.0, 0.0), (1.2, 0.3)),
        ((0.7, -0.4), (1.9, 0.5)),
        ((2.0, 0.1), (0.6, -0.8)),
    ];
}

/// Reports of one suite for one dimension. Dimensions outside a check's
/// range are skipped.
pub fn suite_reports(ctx: &KernelContext, suite: Suite, p: &EvalParams) -> crate::Result<Vec<VerificationReport>> {
    let dim = p.dim();
    let mut reports = Vec::new();
    let run_all = suite == Suite::All;
    if run_all || suite == Suite::Abel {
        reports.push(verify::abel_residual(ctx, p, &grids::abel_l(), tolerance::abel(dim))?);
    }
    if run_all || suite == Suite::PdeRadial {
        reports.push(verify::radial_pde_residual(
            ctx,
            p,
            &grids::pde_s(),
            &grids::PDE_TAU,
            tolerance::pde_radial(dim),
        )?);
    }
    if (run_all || suite == Suite::PdeHoricyclic) && (3..=4).contains(&dim) {
        let pairs = grids::HORICYCLIC_PAIRS
            .iter()
            .map(|&((y1, x1), (y2, x2))| {
                Ok((
                    HoricyclicPoint::new(y1, vec![x1; dim - 2])?,
                    HoricyclicPoint::new(y2, vec![x2; dim - 2])?,
                ))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        reports.push(verify::horicyclic_pde_residual(ctx, p, &pairs, tolerance::PDE_HORICYCLIC)?);
    }
    if (run_all || suite == Suite::Ck) && (3..=5).contains(&dim) {
        for d in grids::CK_DISTANCES {
            reports.push(verify::chapman_kolmogorov(ctx, p, p, d, tolerance::chapman_kolmogorov(dim))?);
        }
    }
    if run_all || suite == Suite::Mass {
        reports.push(verify::mass_multiplicativity(ctx, p, &grids::MASS_TAU, tolerance::MASS)?);
        if dim == 3 {
            reports.push(verify::unit_mass(ctx, p, &grids::MASS_TAU, tolerance::MASS)?);
        }
    }
    if (run_all || suite == Suite::Gfunc) && dim.is_multiple_of(2) {
        reports.push(verify::gfunc_consistency(p, grids::GFUNC_MAX_ORDER, tolerance::GFUNC_CONTINUITY)?);
    }
    Ok(reports)
}

fn cmd_verify(a: &VerifyArgs, format: Format, threads: usize, out: &mut String) -> Outcome {
    if a.dims.is_empty() {
        return Err(Failure::Usage("--dims must list at least one D".into()));
    }
    for &d in &a.dims {
        check_dim(d)?;
    }
    let ctx = context(&a.units)?;
    let mut reports = Vec::new();
    for &dim in &a.dims {
        reports.extend(suite_reports(&ctx, a.suite, &params(dim, &a.units, a.tau)?)?);
    }
    match format {
        Format::Csv => {
            out.push_str("check,D,residual,tolerance,passed,nonconverged\n");
            for r in &reports {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.check_name,
                    r.dim,
                    num(r.residual_norm),
                    num(r.tolerance),
                    r.passed,
                    r.nonconverged
                );
            }
        }
        Format::Json => {
            let extra = json!({ "suite": suite_name(a.suite), "tau": a.tau, "dims": a.dims });
            push_json(out, &json!({ "header": header("verify", &a.units, threads, extra), "reports": reports }));
        }
    }
    if reports.iter().any(|r| r.nonconverged) {
        return Ok(EXIT_NONCONVERGENCE);
    }
    Ok(if reports.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn suite_name(s: Suite) -> String {
    s.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())
}

fn cmd_oracle(a: &OracleArgs, format: Format, threads: usize, out: &mut String) -> Outcome {
    check_dim(a.dim)?;
    if !(3..=4).contains(&a.dim) {
        return Err(Failure::Usage(format!("the lattice oracle supports D = 3 and D = 4, got {}", a.dim)));
    }
    if a.slices.is_empty() {
        return Err(Failure::Usage("--n must list at least one slice count".into()));
    }
    if a.samples < MIN_SAMPLES {
        return Err(Failure::Usage(format!("--samples must be at least {MIN_SAMPLES}")));
    }
    let p = params(a.dim, &a.units, a.tau)?;
    let ctx = context(&a.units)?;
    let q1 = point(a.dim, a.pair.y1, a.pair.x1.as_ref(), 1.0, 0.0)?;
    let q2 = point(a.dim, a.pair.y2, a.pair.x2.as_ref(), 1.2, 0.3)?;
    let study = convergence_study(&ctx, &p, &q1, &q2, &a.slices, a.samples, a.seed)?;
    match format {
        Format::Csv => {
            out.push_str("N,lattice_value,err_est,closed_value,rel_dev\n");
            for r in &study.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.slices,
                    num(r.lattice_value),
                    num(r.err_est),
                    num(r.closed_value),
                    num(r.rel_dev)
                );
            }
            let _ = writeln!(out, "order,{},,,", num(study.order));
        }
        Format::Json => {
            let extra = json!({
                "D": a.dim,
                "tau": a.tau,
                "samples": a.samples,
                "seed": a.seed,
                "y1": q1.y(), "x1": q1.x(), "y2": q2.y(), "x2": q2.x(),
            });
            push_json(out, &json!({ "header": header("oracle", &a.units, threads, extra), "study": study }));
        }
    }
    Ok(EXIT_OK)
}
