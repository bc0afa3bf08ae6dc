use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sparsepop::extraction::{extract_cs, extract_dense, ExtractOptions};
use sparsepop::graph::Extension;
use sparsepop::jsr::{jsr_lower_products, jsr_upper, JsrOptions, JsrSparsity, MatrixSet};
use sparsepop::relaxation::{
    augment_first_order, build_cs_ts, build_dense, build_ts, minimal_initial_relaxation, BlockSDP,
};
use sparsepop::sdp::{export_sdpa, solve, SolveStatus, SolverOptions};
use sparsepop::sonc::SoncDecomposition;
use sparsepop::Pop;

const EXIT_SOLVER: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "sparsepop", version, about = "Sparse moment-SOS relaxations for polynomial optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a relaxation of a polynomial optimization problem.
    Solve(SolveArgs),
    /// Bound the joint spectral radius of a matrix set.
    Jsr(JsrArgs),
    /// Verify a SONC decomposition file.
    SoncCheck(IoArgs),
    /// Write a relaxation in SDPA sparse format.
    Export(RelaxArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dense,
    Cs,
    Ts,
    CsTs,
    MinimalInitial,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ExtArg {
    Maximal,
    MinDegree,
    MinFillin,
}

impl From<ExtArg> for Extension {
    fn from(e: ExtArg) -> Self {
        match e {
            ExtArg::Maximal => Extension::Maximal,
            ExtArg::MinDegree => Extension::MinDegree,
            ExtArg::MinFillin => Extension::MinFillin,
        }
    }
}

#[derive(Args)]
struct IoArgs {
    /// Input JSON file.
    input: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Primal and dual stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
    /// Keep the solver's step scale fixed.
    #[arg(long)]
    no_adaptive_scale: bool,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.max_iters,
            adaptive_scale: !self.no_adaptive_scale,
            ..SolverOptions::with_tol(self.tol)
        }
    }
}

#[derive(Args)]
struct RelaxArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Relaxation order; defaults to the minimum order.
    #[arg(short = 'r', long = "order")]
    order: Option<usize>,
    /// Sparse order of the term-sparsity iteration.
    #[arg(short = 's', long = "sparse-order", default_value_t = 1)]
    sparse_order: usize,
    #[arg(long, value_enum, default_value = "cs-ts")]
    mode: ModeArg,
    /// Chordal extension of the term-sparsity graphs.
    #[arg(long, value_enum, default_value = "min_fillin")]
    extension: ExtArg,
    /// Chordal extension of the variable (clique) graph.
    #[arg(long, value_enum, default_value = "min_fillin")]
    cs_extension: ExtArg,
    /// Add a dense first-order moment matrix per clique.
    #[arg(long)]
    first_order_moments: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    relax: RelaxArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Try to recover minimizers.
    #[arg(long)]
    extract: bool,
    /// Seed of the extraction's random combination.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct JsrArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Half-degree of the Lyapunov polynomial.
    #[arg(short = 'r', long = "order", default_value_t = 1)]
    order: usize,
    /// Sparse order; ignored in dense mode.
    #[arg(short = 's', long = "sparse-order", default_value_t = 1)]
    sparse_order: usize,
    #[arg(long, value_enum, default_value = "cs-ts")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "min_fillin")]
    extension: ExtArg,
    /// Longest product used for the lower bound.
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Bisection width.
    #[arg(long, default_value_t = 1e-5)]
    bisect_tol: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

enum Failure {
    Input(String),
    Solver(Value),
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, v: &Value) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    emit(out, &s)
}

fn load_pop(path: &Path) -> Result<Pop, Failure> {
    let pop = Pop::from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(pop)
}

fn relaxation(pop: &Pop, a: &RelaxArgs) -> Result<BlockSDP, Failure> {
    let r = a.order.unwrap_or_else(|| pop.r_min());
    let (cs_ext, ts_ext) = (Extension::from(a.cs_extension), Extension::from(a.extension));
    let s = a.sparse_order;
    let sdp = match a.mode {
        ModeArg::Dense => build_dense(pop, r),
        ModeArg::Cs => build_cs_ts(pop, r, s.max(1), cs_ext, None),
        ModeArg::Ts => build_ts(pop, r, s, ts_ext),
        ModeArg::CsTs => build_cs_ts(pop, r, s, cs_ext, Some(ts_ext)),
        ModeArg::MinimalInitial => minimal_initial_relaxation(pop, s, cs_ext, Some(ts_ext)),
    }
    .map_err(|e| Failure::Input(e.to_string()))?;
    Ok(if a.first_order_moments {
        let cliques = sdp.meta.cliques.clone();
        augment_first_order(&sdp, &cliques)
    } else {
        sdp
    })
}

fn run_solve(a: &SolveArgs) -> Result<(), Failure> {
    let pop = load_pop(&a.relax.io.input)?;
    let sdp = relaxation(&pop, &a.relax)?;
    let sol = solve(&sdp, &a.solver.options()).map_err(|e| Failure::Input(e.to_string()))?;
    let mut report = json!({
        "bound": sol.objective,
        "status": sol.status,
        "block_sizes": sdp.block_sizes(),
        "num_moment_vars": sdp.num_moment_vars(),
        "residuals": {
            "primal": sol.residuals.0,
            "dual": sol.residuals.1,
            "gap": sol.gap,
        },
        "iterations": sol.iterations,
    });
    if a.extract {
        let opts = ExtractOptions {
            seed: a.seed,
            ..ExtractOptions::default()
        };
        let r = sdp.meta.r;
        let extracted = match a.relax.mode {
            ModeArg::Dense => {
                let (flat, ex) = extract_dense(&pop, &sol, r, &opts);
                report["flatness"] = json!(flat);
                ex
            }
            _ => extract_cs(&pop, &sol, &sdp.meta.cliques, r, &opts),
        };
        report["minimizers"] = match extracted {
            Ok(ex) => json!(ex),
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    if matches!(sol.status, SolveStatus::Optimal | SolveStatus::NearOptimal) {
        emit_json(a.relax.io.out.as_deref(), &report)
    } else {
        Err(Failure::Solver(report))
    }
}

fn run_jsr(a: &JsrArgs) -> Result<(), Failure> {
    let ms = MatrixSet::from_json(&read(&a.io.input)?).map_err(|e| Failure::Input(e.to_string()))?;
    let (sparsity, s) = match a.mode {
        ModeArg::Dense => (JsrSparsity::Dense, None),
        _ => (
            JsrSparsity::Sparse {
                s: a.sparse_order,
                extension: a.extension.into(),
            },
            Some(a.sparse_order),
        ),
    };
    let lower = jsr_lower_products(&ms, a.depth);
    // the quadratic certificate ‖x‖^{2r} is feasible just above max ‖A_i‖₂
    let norm = ms
        .matrices
        .iter()
        .map(|m| m.clone().svd(false, false).singular_values.max())
        .fold(0.0, f64::max);
    let opts = JsrOptions {
        lo: lower,
        hi: norm * 1.01 + a.bisect_tol,
        tol: a.bisect_tol,
        solver: a.solver.options(),
    };
    let up = jsr_upper(&ms, a.order, sparsity, &opts).map_err(|e| Failure::Input(e.to_string()))?;
    let report = json!({
        "upper": up.value,
        "lower": lower,
        "r": a.order,
        "s": s,
        "iterations": up.steps,
    });
    if up.failed {
        Err(Failure::Solver(report))
    } else {
        emit_json(a.io.out.as_deref(), &report)
    }
}

fn run_sonc(a: &IoArgs) -> Result<(), Failure> {
    let text = read(&a.input)?;
    let dec = SoncDecomposition::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", a.input.display())))?;
    let failures = dec.check();
    emit_json(
        a.out.as_deref(),
        &json!({ "valid": failures.is_empty(), "failures": failures }),
    )
}

fn run_export(a: &RelaxArgs) -> Result<(), Failure> {
    let pop = load_pop(&a.io.input)?;
    let sdp = relaxation(&pop, a)?;
    emit(a.io.out.as_deref(), &export_sdpa(&sdp))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (res, out) = match &cli.command {
        Command::Solve(a) => (run_solve(a), a.relax.io.out.clone()),
        Command::Jsr(a) => (run_jsr(a), a.io.out.clone()),
        Command::SoncCheck(a) => (run_sonc(a), a.out.clone()),
        Command::Export(a) => (run_export(a), a.io.out.clone()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Solver(report)) => {
            // the partial report is still useful for diagnosis
            let _ = emit_json(out.as_deref(), &report);
            eprintln!("error: solver did not converge");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
