use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use friable_cli::parse::{parse_grid, parse_number};
use friable_cli::study::{run_study, to_csv};
use friable_cli::verify::{self, Corruption, Suite, VerifyConfig, DEFAULT_GRID};
use friable_core::forms::assemble_forms;
use friable_core::saddle::{check_bias_bounds, solve_alpha};
use friable_core::tk::{rayleigh, tk_from_forms, EIGEN_TOL};
use friable_core::{build_context, AdditiveFunction, AssemblyPath, Error, Limits, Model, SmoothBound};

const MEMO_CAP_VAR: &str = "FRIABLE_TK_MEMO_CAP";

#[derive(Parser)]
#[command(name = "friable", version, about = "Turán–Kubilius constants on friable integers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Point {
    /// Accepts 1000, 1e3, 2^10.
    #[arg(long, value_parser = number)]
    x: u64,
    #[arg(long, value_parser = number)]
    y: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Saddle point, g_p, w_p, σ₂ and the w_p bound check.
    Alpha {
        #[command(flatten)]
        point: Point,
        #[arg(long, default_value_t = friable_core::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        json: bool,
    },
    /// C(x, y) or C*(x, y) with its extremal function.
    Constant {
        #[command(flatten)]
        point: Point,
        #[arg(long, default_value = "unbiased", value_parser = model)]
        variant: Model,
        #[arg(long, default_value = "counting", value_parser = path)]
        path: AssemblyPath,
        /// Write the extremal function as "p nu value" lines.
        #[arg(long, value_name = "FILE")]
        emit_extremal: Option<PathBuf>,
        /// Also report the Rayleigh quotient of the function in FILE.
        #[arg(long, value_name = "FILE")]
        probe: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run verification suites; exits 0 iff every check passes.
    Verify {
        #[arg(long, default_value = "all", value_parser = suite)]
        suite: Suite,
        #[arg(long, default_value = DEFAULT_GRID, value_parser = grid)]
        grid: Grid,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true, value_parser = corruption)]
        corrupt_w: Option<Corruption>,
    },
    /// Constants over a grid, written as CSV.
    Study {
        #[arg(long, value_parser = grid)]
        grid: Grid,
        /// CSV destination; stdout when absent.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value = "counting", value_parser = path)]
        path: AssemblyPath,
        /// Report runtime_ms as 0 so output is byte-reproducible.
        #[arg(long)]
        no_timing: bool,
        /// One JSON object per row on stdout, in addition to the CSV file.
        #[arg(long)]
        json: bool,
    },
}

fn number(s: &str) -> Result<u64, String> {
    parse_number(s).map_err(|e| e.to_string())
}

#[derive(Clone)]
struct Grid(Vec<(u64, u64)>);

fn grid(s: &str) -> Result<Grid, String> {
    parse_grid(s).map(Grid).map_err(|e| e.to_string())
}

fn model(s: &str) -> Result<Model, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn path(s: &str) -> Result<AssemblyPath, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn corruption(s: &str) -> Result<Corruption, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::InvalidInput(_) | Error::Parse { .. }) => Failure::Usage(e),
            _ => Failure::Compute(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn limits() -> Result<Limits, Failure> {
    let mut l = Limits::default();
    if let Ok(v) = std::env::var(MEMO_CAP_VAR) {
        l.memo_cap = parse_number(&v)
            .with_context(|| format!("{MEMO_CAP_VAR}={v}"))
            .map_err(Failure::Usage)?;
    }
    Ok(l)
}

fn bound(p: &Point) -> Result<SmoothBound, Failure> {
    Ok(SmoothBound::new(p.x, p.y)?)
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Alpha { point, tol, json } => cmd_alpha(&point, tol, json),
        Command::Constant {
            point,
            variant,
            path,
            emit_extremal,
            probe,
            json,
        } => cmd_constant(&point, variant, path, emit_extremal, probe, json),
        Command::Verify {
            suite,
            grid,
            seed,
            corrupt_w,
        } => {
            let cfg = VerifyConfig {
                suite,
                grid: grid.0,
                seed,
                corrupt: corrupt_w,
                limits: limits()?,
            };
            let report = verify::run(&cfg);
            print!("{}", report.render());
            Ok(report.passed())
        }
        Command::Study {
            grid,
            out,
            parallel,
            path,
            no_timing,
            json,
        } => {
            if parallel == 0 {
                return Err(Failure::Usage(anyhow!("--parallel must be at least 1")));
            }
            let rows = run_study(&grid.0, parallel, path, limits()?, !no_timing).map_err(Failure::Compute)?;
            let csv = to_csv(&rows).map_err(Failure::Compute)?;
            match &out {
                Some(file) => fs::write(file, &csv)
                    .with_context(|| format!("writing {}", file.display()))
                    .map_err(Failure::Compute)?,
                None if !json => print!("{csv}"),
                None => {}
            }
            if json {
                for r in &rows {
                    println!("{}", serde_json::to_string(r).map_err(|e| Failure::Compute(e.into()))?);
                }
            }
            Ok(true)
        }
    }
}

fn cmd_alpha(point: &Point, tol: f64, json: bool) -> Outcome {
    let b = bound(point)?;
    // validates tol before the context build, which uses the same tolerance
    solve_alpha(b, tol)?;
    let ctx = build_context(b, tol)?;
    let violations = check_bias_bounds(&ctx);
    if json {
        let mut m = Map::new();
        m.insert("x".into(), json!(b.x()));
        m.insert("y".into(), json!(b.y()));
        m.insert("alpha".into(), json!(ctx.alpha()));
        m.insert("sigma2".into(), json!(ctx.sigma2()));
        m.insert("h".into(), json!(ctx.h()));
        m.insert("u".into(), json!(ctx.u()));
        m.insert("ubar".into(), json!(ctx.ubar()));
        for (i, &p) in ctx.primes().iter().enumerate() {
            m.insert(format!("g_{p}"), json!(ctx.g(i)));
            m.insert(format!("w_{p}"), json!(ctx.w(i)));
        }
        m.insert("bounds_ok".into(), json!(violations.is_empty()));
        println!("{}", Value::Object(m));
    } else {
        println!("x {} y {}", b.x(), b.y());
        println!("alpha {:.15}", ctx.alpha());
        println!("sigma2 {:.12}", ctx.sigma2());
        println!("h {} u {:.12} ubar {:.12}", ctx.h(), ctx.u(), ctx.ubar());
        println!("{:>8} {:>4} {:>18} {:>18}", "p", "nu_p", "g_p", "w_p");
        for (i, &p) in ctx.primes().iter().enumerate() {
            println!("{p:>8} {:>4} {:>18.15} {:>18.15}", ctx.nu(i), ctx.g(i), ctx.w(i));
        }
        if violations.is_empty() {
            println!("w_p bounds: ok");
        }
        for v in &violations {
            println!("w_p bounds: violated {v}");
        }
    }
    Ok(violations.is_empty())
}

fn cmd_constant(
    point: &Point,
    variant: Model,
    path: AssemblyPath,
    emit: Option<PathBuf>,
    probe: Option<PathBuf>,
    json: bool,
) -> Outcome {
    let b = bound(point)?;
    let ctx = build_context(b, friable_core::DEFAULT_TOL)?;
    let probe_fn = match &probe {
        Some(file) => {
            let text = fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))
                .map_err(Failure::Usage)?;
            Some(AdditiveFunction::from_fixture(ctx.space().clone(), &text)?)
        }
        None => None,
    };
    let forms = assemble_forms(&ctx, variant, path, limits()?)?;
    let r = tk_from_forms(&forms, EIGEN_TOL)?;
    let probe_value = probe_fn.as_ref().map(|f| rayleigh(f, &forms)).transpose()?;
    if let Some(file) = &emit {
        fs::write(file, r.extremal.to_fixture())
            .with_context(|| format!("writing {}", file.display()))
            .map_err(Failure::Compute)?;
    }
    let path_name = match path {
        AssemblyPath::Enumeration => "enumeration",
        AssemblyPath::Counting => "counting",
    };
    if json {
        let mut m = Map::new();
        m.insert("x".into(), json!(b.x()));
        m.insert("y".into(), json!(b.y()));
        m.insert("variant".into(), json!(variant.name()));
        m.insert("path".into(), json!(path_name));
        m.insert("C".into(), json!(r.c));
        m.insert("dim".into(), json!(forms.dim()));
        m.insert("iterations".into(), json!(r.iterations));
        m.insert("residual".into(), json!(r.residual));
        if let Some(v) = probe_value {
            m.insert("probe_rayleigh".into(), json!(v));
        }
        println!("{}", Value::Object(m));
    } else {
        println!("x {} y {} variant {variant} path {path_name}", b.x(), b.y());
        println!("C {:.12}", r.c);
        println!("dim {} sweeps {} residual {:.3e}", forms.dim(), r.iterations, r.residual);
        if let Some(v) = probe_value {
            println!("probe rayleigh {v:.12}");
        }
    }
    Ok(true)
}
