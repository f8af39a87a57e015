use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcs_heom::compare::{compare, compare_columns};
use fcs_heom::config::ModeKind;
use fcs_heom::engine::Convergence;
use fcs_heom::output::{read_table, write_artifacts};
use fcs_heom::runner::{execute, RunOptions};
use fcs_heom::{AppError, RunConfig};

/// Transient full counting statistics with the counting-field hierarchy of
/// equations of motion.
///
/// Exit status: 0 success, 2 config parse error, 3 validation error,
/// 4 numerical abort, 5 not converged (results written and flagged).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write CSV tables with metadata sidecars.
    Run(RunArgs),
    /// Compare two CSV reports column by column, or two columns of one report.
    Compare(CompareArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, env = "FCSHEOM_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "FCSHEOM_MODE")]
    mode: Option<ModeKind>,
    #[arg(long, env = "FCSHEOM_NMAX")]
    nmax: Option<usize>,
    #[arg(long, env = "FCSHEOM_DT")]
    dt: Option<f64>,
    #[arg(long, env = "FCSHEOM_TMAX")]
    tmax: Option<f64>,
    #[arg(long, env = "FCSHEOM_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "FCSHEOM_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, env = "FCSHEOM_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct CompareArgs {
    a: PathBuf,
    b: Option<PathBuf>,
    /// Maximum relative deviation.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Compare two columns of `a`: `--columns first,second`.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
}

fn load(args: &RunArgs) -> Result<(String, RunConfig), AppError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| AppError::Parse(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(m) = args.mode {
        cfg.mode.kind = m;
    }
    if let Some(n) = args.nmax {
        cfg.numerics.n_max = n;
        cfg.numerics.n_max_cap = cfg.numerics.n_max_cap.max(n);
    }
    if let Some(dt) = args.dt {
        cfg.numerics.dt = dt;
    }
    if let Some(t) = args.tmax {
        cfg.numerics.t_end = t;
        cfg.numerics.t_end_cap = cfg.numerics.t_end_cap.max(t);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if args.workers == 0 {
        return Err(AppError::Validation("--workers must be positive".into()));
    }
    cfg.validate()?;
    Ok((text, cfg))
}

fn run(args: RunArgs) -> Result<Convergence, AppError> {
    let (text, cfg) = load(&args)?;
    let (art, status) = execute(&cfg, RunOptions { workers: args.workers, seed: args.seed })?;
    for path in write_artifacts(&cfg.output.dir, &text, &art)? {
        println!("{}", path.display());
    }
    Ok(status)
}

fn compare_cmd(args: CompareArgs) -> Result<bool, AppError> {
    let a = read_table(&args.a)?;
    let verdict = match (&args.b, &args.columns) {
        (_, Some(cols)) if cols.len() != 2 => return Err(AppError::Validation("--columns takes exactly two names".into())),
        (_, Some(cols)) => compare_columns(&a, &cols[0], &cols[1], args.tol)?,
        (Some(b), None) => compare(&a, &read_table(b)?, args.tol)?,
        (None, None) => return Err(AppError::Other("compare needs a second file or --columns".into())),
    };
    print!("{}", verdict.to_table().to_csv()?);
    Ok(verdict.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args).map(|status| match status {
            Convergence::NotConverged => {
                eprintln!("warning: hierarchy depth or steady state not converged; results are flagged");
                5
            }
            _ => 0,
        }),
        Command::Compare(args) => compare_cmd(args).map(|pass| if pass { 0 } else { 1 }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
