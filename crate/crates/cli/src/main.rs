//! `shuntflow`: validation, power flow, SOCP relaxation and LinDistFlow
//! reports for case files.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (warnings may be printed) |
//! | 1 | usage error |
//! | 2 | case, cost or output file error |
//! | 3 | power flow did not converge, or its solution failed a model check |
//! | 4 | OPF relaxation infeasible, unbounded or not solved |
//! | 5 | outside the supported scope (e.g. a meshed network where a tree is required) |
//!
//! With several cases the exit code is that of the first failing case.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "shuntflow", version, about = "Branch flow power flow with line shunts")]
struct Cli {
    /// Number of cases processed in parallel.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,

    /// Residual tolerance for model checks (per unit).
    #[arg(long, global = true, env = "SHUNTFLOW_TOL", default_value_t = 1e-8)]
    tol: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load cases and check connectivity, radiality, `Re α > 0` and `r, x ≥ 0`.
    Validate(CaseArgs),
    /// Solve the power flow by Newton's method.
    Pf(PfArgs),
    /// Solve the SOCP relaxation of the loss- or generation-minimising OPF.
    Opf(OpfArgs),
    /// Solve the LinDistFlow approximation.
    Lindist(LindistArgs),
}

#[derive(Args, Debug)]
struct CaseArgs {
    /// Case files (JSON).
    #[arg(required = true)]
    cases: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct PfArgs {
    #[command(flatten)]
    input: CaseArgs,
    #[arg(long, value_enum, default_value_t = Model::Bim)]
    model: Model,
    /// Directory for solution files and tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// Newton solve only.
    Bim,
    /// Newton solve plus the branch flow residuals, cycle condition and
    /// round trip between phasor and branch flow points.
    BfmCheck,
}

#[derive(Args, Debug)]
struct OpfArgs {
    #[command(flatten)]
    input: CaseArgs,
    /// `loss`, `gen` or a JSON cost file.
    #[arg(long, default_value = "loss")]
    cost: String,
    /// Check the conic gaps and recover phasors when they vanish.
    #[arg(long)]
    certify: bool,
    /// Relative gap tolerance used by `--certify`.
    #[arg(long, default_value_t = shuntflow::opf::DEFAULT_EXACTNESS_TOL)]
    exactness_tol: f64,
    /// Keep only the forward cone of each line.
    #[arg(long)]
    single_cone: bool,
    /// Also write the conic program in sparse triplet form (needs `--out`).
    #[arg(long, requires = "out")]
    export_triplets: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LindistArgs {
    #[command(flatten)]
    input: CaseArgs,
    /// Compare with the exact power flow.
    #[arg(long)]
    compare: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// What one case produced: report text, warnings and an exit code.
#[derive(Debug, Default)]
pub struct CaseRun {
    pub stdout: String,
    pub stderr: String,
    pub code: u8,
}

fn run_cases(paths: &[PathBuf], jobs: usize, f: impl Fn(&std::path::Path) -> CaseRun + Sync) -> Vec<CaseRun> {
    let results: Vec<Mutex<Option<CaseRun>>> = paths.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(paths.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= paths.len() {
                    break;
                }
                *results[i].lock().unwrap() = Some(f(&paths[i]));
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every case ran"))
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if !(cli.tol > 0.0 && cli.tol.is_finite()) {
        eprintln!("error: tolerance must be positive and finite, got {}", cli.tol);
        return ExitCode::from(1);
    }
    let jobs = cli.jobs as usize;
    let tol = cli.tol;
    let runs = match &cli.command {
        Command::Validate(a) => run_cases(&a.cases, jobs, commands::validate),
        Command::Pf(a) => run_cases(&a.input.cases, jobs, |p| commands::pf(p, a.model, a.out.as_deref(), tol)),
        Command::Opf(a) => {
            let cost = match commands::CostChoice::parse(&a.cost) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(2);
                }
            };
            let opts = commands::OpfOptions {
                cost,
                certify: a.certify,
                exactness_tol: a.exactness_tol,
                single_cone: a.single_cone,
                export_triplets: a.export_triplets,
                out: a.out.clone(),
            };
            run_cases(&a.input.cases, jobs, |p| commands::opf(p, &opts))
        }
        Command::Lindist(a) => {
            run_cases(&a.input.cases, jobs, |p| commands::lindist(p, a.compare, a.out.as_deref(), tol))
        }
    };
    let mut code = 0;
    for run in runs {
        print!("{}", run.stdout);
        eprint!("{}", run.stderr);
        if code == 0 {
            code = run.code;
        }
    }
    ExitCode::from(code)
}
