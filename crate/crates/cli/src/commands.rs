//! Subcommand definitions and dispatch.

use std::ffi::OsString;
use std::fmt::Display;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use tfde::experiment::{run_experiment, ExperimentPlan, ResultRow, SolverEntry};
use tfde::multigrid::GalerkinCaps;
use tfde::problems::{
    cn_march, cn_march_2d, consistency_order, steady_solve, Coarsening, OmegaChoice, PrecondKind,
    Problem, SolverConfig, SolverKind,
};
use tfde::stencil::{tempered_stencil, FractionalParams};
use tfde::symbol::{partial_symbol, smoothing_bound_1d, symbol};

use crate::config::FileConfig;
use crate::output;

#[derive(Parser, Debug)]
#[command(
    name = "tfde",
    about = "Tempered fractional diffusion: stencils, symbol scans, solves, and table runs"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump binomial weights and the tempered stencil for one parameter set.
    Weights(WeightsArgs),
    /// Scan the generator symbol and report the smoothing optimum.
    Symbol(SymbolArgs),
    /// Run one solve and emit its result row.
    Solve(SolveArgs),
    /// Run a stored table plan (TFDE_THREADS caps the worker count).
    Experiment(ExperimentArgs),
    /// Observed approximation order on weighted monomial profiles.
    Consistency(ConsistencyArgs),
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Weights(args) => weights(args),
        Command::Symbol(args) => symbol_scan(args),
        Command::Solve(args) => solve(args),
        Command::Experiment(args) => experiment(args),
        Command::Consistency(args) => consistency(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

fn write_out(path: Option<&PathBuf>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?;
            println!("wrote {}", p.display());
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct WeightsArgs {
    /// Fractional order in (1, 2].
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma3: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Grid spacing the stencil is built for.
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Highest coefficient index to print (g_0..g_count).
    #[arg(long, default_value_t = 12)]
    count: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn weights(args: WeightsArgs) -> Result<(), String> {
    let params = FractionalParams::new(args.alpha, args.gamma3, args.lambda)
        .map_err(|e| e.to_string())?;
    let count = args.count.max(1);
    let stencil = tempered_stencil(&params, args.h, count).map_err(|e| e.to_string())?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "# alpha {} gamma3 {} lambda {} h {} phi {}",
        args.alpha, args.gamma3, args.lambda, args.h, stencil.phi
    );
    let _ = writeln!(text, "k omega_k g_k");
    for k in 0..=count {
        let _ = writeln!(text, "{k} {} {}", stencil.omega[k], stencil.g[k]);
    }
    write_out(args.output.as_ref(), &text)
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SymbolArgs {
    /// Fractional order(s); repeat for a table of optima.
    #[arg(long, required = true)]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    gamma3: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Truncation size of the partial-symbol column.
    #[arg(long, default_value_t = 1024)]
    m: usize,
    /// Scan points on [-pi, pi].
    #[arg(long, default_value_t = 2048)]
    points: usize,
    /// Print only the per-order summary table.
    #[arg(long)]
    summary_only: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn symbol_scan(args: SymbolArgs) -> Result<(), String> {
    if args.points < 2 {
        return Err("need at least two scan points".into());
    }
    let mut text = String::new();
    let _ = writeln!(text, "# alpha xi omega* (omega* full precision)");
    for &alpha in &args.alpha {
        let bound = smoothing_bound_1d(alpha, args.gamma3).map_err(|e| e.to_string())?;
        let _ = writeln!(
            text,
            "alpha {} gamma3 {} xi {} omega* {:.2} ({})",
            alpha, args.gamma3, bound.xi, bound.omega, bound.omega
        );
    }
    if !args.summary_only {
        for &alpha in &args.alpha {
            let params = FractionalParams::new(alpha, args.gamma3, args.lambda)
                .map_err(|e| e.to_string())?;
            let _ = writeln!(text, "# scan alpha={} m={}: x f_m f", alpha, args.m);
            for j in 0..args.points {
                let x = -std::f64::consts::PI
                    + 2.0 * std::f64::consts::PI * j as f64 / (args.points - 1) as f64;
                let fm = partial_symbol(&params, args.m, x).map_err(|e| e.to_string())?;
                let _ = writeln!(text, "{x} {fm} {}", symbol(alpha, args.gamma3, x));
            }
        }
    }
    write_out(args.output.as_ref(), &text)
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SolveArgs {
    /// key=value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalogue problem id 1..=5.
    #[arg(long)]
    problem: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    gamma3: Option<f64>,
    /// Interior nodes per axis.
    #[arg(long)]
    m: Option<usize>,
    /// Time steps for transient problems (defaults to m).
    #[arg(long)]
    n: Option<usize>,
    /// Spatial interval "a,b" (applied to both axes in 2D).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    #[arg(long)]
    t_final: Option<f64>,
    /// cg | gmres | mg
    #[arg(long)]
    solver: Option<String>,
    /// none | mg:NU1,NU2 | circulant | laplacian | laplacian-inner:NU
    #[arg(long)]
    precond: Option<String>,
    /// Jacobi weight, or "auto" for the symbol-derived optimum.
    #[arg(long)]
    omega: Option<String>,
    /// geometric | galerkin
    #[arg(long)]
    coarsening: Option<String>,
    #[arg(long)]
    nu1: Option<usize>,
    #[arg(long)]
    nu2: Option<usize>,
    /// Coarsest level size the V-cycle stops at.
    #[arg(long)]
    min_size: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    /// csv | pretty
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn load_config(path: Option<&PathBuf>) -> Result<Option<FileConfig>, String> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            FileConfig::parse(&text).map(Some)
        }
        None => Ok(None),
    }
}

/// Flag value if present, else the parsed config-file value.
fn merged<T>(flag: Option<T>, file: Option<&FileConfig>, key: &str) -> Result<Option<T>, String>
where
    T: FromStr,
    T::Err: Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file.and_then(|f| f.get(key)) {
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| format!("config key {key}={raw:?}: {e}")),
        None => Ok(None),
    }
}

fn parse_solver(name: &str) -> Result<SolverKind, String> {
    match name {
        "cg" => Ok(SolverKind::Cg),
        "gmres" => Ok(SolverKind::Gmres),
        "mg" => Ok(SolverKind::Mg),
        other => Err(format!("unknown solver {other:?} (expected cg, gmres, or mg)")),
    }
}

/// `mg:NU1,NU2` and `laplacian-inner:NU` carry their sweep counts inline.
fn parse_precond(spec: &str) -> Result<(PrecondKind, Option<(usize, usize)>), String> {
    if spec == "none" {
        return Ok((PrecondKind::None, None));
    }
    if spec == "circulant" {
        return Ok((PrecondKind::Circulant, None));
    }
    if spec == "laplacian" {
        return Ok((PrecondKind::Laplacian, None));
    }
    if spec == "mg" {
        return Ok((PrecondKind::Multigrid, None));
    }
    if let Some(rest) = spec.strip_prefix("mg:") {
        let (a, b) = rest
            .split_once(',')
            .ok_or_else(|| format!("preconditioner {spec:?}: expected mg:NU1,NU2"))?;
        let nu1 = a.trim().parse::<usize>().map_err(|e| format!("preconditioner {spec:?}: {e}"))?;
        let nu2 = b.trim().parse::<usize>().map_err(|e| format!("preconditioner {spec:?}: {e}"))?;
        return Ok((PrecondKind::Multigrid, Some((nu1, nu2))));
    }
    if let Some(rest) = spec.strip_prefix("laplacian-inner:") {
        let nu = rest.trim().parse::<usize>().map_err(|e| format!("preconditioner {spec:?}: {e}"))?;
        return Ok((PrecondKind::LaplacianInner(nu), None));
    }
    Err(format!(
        "unknown preconditioner {spec:?} (expected none, mg:NU1,NU2, circulant, laplacian, or laplacian-inner:NU)"
    ))
}

fn parse_omega(spec: &str) -> Result<OmegaChoice, String> {
    if spec == "auto" {
        return Ok(OmegaChoice::Auto);
    }
    spec.parse::<f64>()
        .map(OmegaChoice::Fixed)
        .map_err(|_| format!("omega {spec:?}: expected a number or \"auto\""))
}

fn parse_coarsening(name: &str) -> Result<Coarsening, String> {
    match name {
        "geometric" => Ok(Coarsening::Geometric),
        "galerkin" => Ok(Coarsening::Galerkin),
        other => Err(format!("unknown coarsening {other:?} (expected geometric or galerkin)")),
    }
}

fn parse_domain(spec: &str) -> Result<(f64, f64), String> {
    let (a, b) = spec.split_once(',').ok_or_else(|| format!("domain {spec:?}: expected \"a,b\""))?;
    let a = a.trim().parse::<f64>().map_err(|e| format!("domain {spec:?}: {e}"))?;
    let b = b.trim().parse::<f64>().map_err(|e| format!("domain {spec:?}: {e}"))?;
    Ok((a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Pretty,
}

fn parse_format(name: &str) -> Result<Format, String> {
    match name {
        "csv" => Ok(Format::Csv),
        "pretty" => Ok(Format::Pretty),
        other => Err(format!("unknown format {other:?} (expected csv or pretty)")),
    }
}

fn emit_rows(rows: &[ResultRow], format: Format, path: Option<&PathBuf>) -> Result<(), String> {
    let text = match format {
        Format::Csv => output::csv(rows),
        Format::Pretty => output::pretty(rows),
    };
    write_out(path, &text)
}

fn solve(args: SolveArgs) -> Result<(), String> {
    let file = load_config(args.config.as_ref())?;
    let f = file.as_ref();

    let problem_id = merged(args.problem, f, "problem")?.unwrap_or(2);
    let mut problem = Problem::example(problem_id).map_err(|e| e.to_string())?;
    if let Some(v) = merged(args.alpha, f, "alpha")? {
        problem.alpha = v;
    }
    if let Some(v) = merged(args.beta, f, "beta")? {
        problem.beta = v;
    }
    if let Some(v) = merged(args.lambda1, f, "lambda1")? {
        problem.lambda1 = v;
    }
    if let Some(v) = merged(args.lambda2, f, "lambda2")? {
        problem.lambda2 = v;
    }
    if let Some(v) = merged(args.gamma3, f, "gamma3")? {
        problem.gamma3 = v;
    }
    if let Some(v) = merged(args.t_final, f, "t-final")? {
        problem.t_final = v;
    }
    if let Some(spec) = merged::<String>(args.domain, f, "domain")? {
        let dom = parse_domain(&spec)?;
        problem.domain_x = dom;
        if problem.two_d {
            problem.domain_y = dom;
        }
    }
    let m = merged(args.m, f, "m")?.unwrap_or(64);
    let steps = merged(args.n, f, "n")?;

    let solver =
        parse_solver(&merged::<String>(args.solver, f, "solver")?.unwrap_or_else(|| "mg".into()))?;
    let (precond, inline_nu) = parse_precond(
        &merged::<String>(args.precond, f, "precond")?.unwrap_or_else(|| "none".into()),
    )?;
    let omega =
        parse_omega(&merged::<String>(args.omega, f, "omega")?.unwrap_or_else(|| "auto".into()))?;
    let coarsening = parse_coarsening(
        &merged::<String>(args.coarsening, f, "coarsening")?.unwrap_or_else(|| "galerkin".into()),
    )?;

    let mut cfg = SolverConfig {
        solver,
        precond,
        coarsening,
        omega,
        ..SolverConfig::default()
    };
    if let Some((nu1, nu2)) = inline_nu {
        cfg.nu1 = nu1;
        cfg.nu2 = nu2;
    }
    if let Some(v) = merged(args.nu1, f, "nu1")? {
        cfg.nu1 = v;
    }
    if let Some(v) = merged(args.nu2, f, "nu2")? {
        cfg.nu2 = v;
    }
    if let Some(v) = merged(args.min_size, f, "min-size")? {
        cfg.min_size = v;
    }
    if let Some(v) = merged(args.tol, f, "tol")? {
        cfg.tol = v;
    }
    if let Some(v) = merged(args.maxit, f, "maxit")? {
        cfg.maxit = v;
    }
    cfg.caps = GalerkinCaps { max_per_dim_2d: 1 << 7, ..GalerkinCaps::default() };

    let result = if problem.two_d {
        cn_march_2d(&problem, m, m, steps.unwrap_or(m), &cfg)
    } else if problem.steady {
        steady_solve(&problem, m, &cfg)
    } else {
        cn_march(&problem, m, steps.unwrap_or(m), &cfg)
    }
    .map_err(|e| e.to_string())?;

    let entry = SolverEntry {
        label: String::new(),
        solver,
        precond,
        coarsening,
        nu1: cfg.nu1,
        nu2: cfg.nu2,
        omega,
    };
    let row = ResultRow {
        problem: problem.id,
        lambda: problem.lambda1,
        alpha: problem.alpha,
        beta: problem.two_d.then_some(problem.beta),
        m,
        steps: (!problem.steady).then_some(result.steps),
        label: entry.solver_name().to_string(),
        solver: entry.solver_name(),
        precond: entry.precond_name(),
        omega: result.omega,
        avg_iters: result.avg_iterations,
        cpu_seconds: result.elapsed,
        final_relres: result.final_relres,
        error_inf: result.error_inf,
        error_l2: result.error_l2,
        failure: None,
    };

    let format =
        parse_format(&merged::<String>(args.format, f, "format")?.unwrap_or_else(|| "pretty".into()))?;
    let output_path = args
        .output
        .or_else(|| f.and_then(|c| c.get("output")).map(PathBuf::from));
    emit_rows(&[row], format, output_path.as_ref())
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ExperimentArgs {
    /// key=value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stored plan id 1..=5.
    #[arg(long)]
    table: Option<usize>,
    /// Keep only these grid sizes from the plan (repeatable).
    #[arg(long)]
    size: Vec<usize>,
    /// Keep only these tempering parameters from the plan (repeatable).
    #[arg(long)]
    lambda: Vec<f64>,
    /// Timing repetitions per run; the fastest wall time is reported.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    maxit: Option<usize>,
    /// csv | pretty
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn experiment(args: ExperimentArgs) -> Result<(), String> {
    let file = load_config(args.config.as_ref())?;
    let f = file.as_ref();

    let table = merged(args.table, f, "table")?
        .ok_or("experiment needs --table 1..=5 (or table= in the config file)")?;
    let mut plan = ExperimentPlan::table(table).map_err(|e| e.to_string())?;
    if let Some(v) = merged(args.reps, f, "reps")? {
        plan.reps = v;
    }
    if let Some(v) = merged(args.tol, f, "tol")? {
        plan.tol = v;
    }
    if let Some(v) = merged(args.maxit, f, "maxit")? {
        plan.maxit = v;
    }
    if !args.size.is_empty() {
        plan.sizes.retain(|(m, _)| args.size.contains(m));
        if plan.sizes.is_empty() {
            return Err(format!("no plan sizes left after --size {:?}", args.size));
        }
    }
    if !args.lambda.is_empty() {
        plan.lambdas.retain(|l| args.lambda.contains(l));
        if plan.lambdas.is_empty() {
            return Err(format!("no plan tempering values left after --lambda {:?}", args.lambda));
        }
    }

    let rows = run_experiment(&plan);
    let failed = rows.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        let first = rows.iter().find_map(|r| r.failure.as_deref()).unwrap_or("");
        eprintln!("warning: {failed} of {} runs failed (first: {first})", rows.len());
    }

    let format =
        parse_format(&merged::<String>(args.format, f, "format")?.unwrap_or_else(|| "csv".into()))?;
    let output_path = args
        .output
        .or_else(|| f.and_then(|c| c.get("output")).map(PathBuf::from));
    emit_rows(&rows, format, output_path.as_ref())
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ConsistencyArgs {
    /// Fractional order(s); repeat for several rows.
    #[arg(long, required = true)]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    gamma3: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Monomial power of the test profile e^{-lambda x} x^p.
    #[arg(long, default_value_t = 4.0)]
    power: f64,
    /// Comma-separated interior sizes for the slope fit.
    #[arg(long, default_value = "64,128,256,512")]
    sizes: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn consistency(args: ConsistencyArgs) -> Result<(), String> {
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| format!("sizes {:?}: {e}", args.sizes)))
        .collect::<Result<_, _>>()?;
    let mut text = String::new();
    let _ = writeln!(text, "alpha gamma3 lambda power order");
    for &alpha in &args.alpha {
        let order = consistency_order(alpha, args.gamma3, args.lambda, args.power, &sizes)
            .map_err(|e| e.to_string())?;
        let _ = writeln!(text, "{alpha} {} {} {} {order}", args.gamma3, args.lambda, args.power);
    }
    write_out(args.output.as_ref(), &text)
}
