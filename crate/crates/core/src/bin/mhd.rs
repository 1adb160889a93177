use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use mhd_core::io::config::parse_orders;
use mhd_core::io::{parse_config, Command as ConfigCommand, RunConfig};
use mhd_core::study::{self, Tolerances};
use mhd_core::transient::HistoryFit;
use mhd_core::Result;

#[derive(Parser)]
#[command(
    name = "mhd",
    version,
    about = "Spectral-element MHD duct-flow solver and verification harness"
)]
struct Cli {
    /// Log filter (overrides the config's log_level; RUST_LOG wins over both).
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// March one case to steady state.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Steady runs over several polynomial orders with errors against the oracle.
    Converge {
        #[arg(short, long)]
        config: PathBuf,
        /// Comma-separated orders, e.g. 2,4,6,8.
        #[arg(long)]
        orders: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Transient run from rest followed by the modal fit.
    TransientFit {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Reduced-equation reference: steady slices and center history.
    Oracle {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare run slices with reference slices; exit 2 on a tolerance violation.
    Compare {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        tol_file: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, output: &Option<PathBuf>, expected: ConfigCommand) -> Result<RunConfig> {
    let mut cfg = parse_config(path)?;
    if cfg.command != expected && cfg.command != ConfigCommand::Run {
        warn!("config says command = {}, running {expected}", cfg.command);
    }
    cfg.command = expected;
    if let Some(o) = output {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn init_logging(level: &str) {
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn config_log_level(cli: &Cli) -> String {
    if let Some(l) = &cli.log_level {
        return l.clone();
    }
    let path = match &cli.command {
        Cmd::Run { config, .. }
        | Cmd::Converge { config, .. }
        | Cmd::TransientFit { config, .. }
        | Cmd::Oracle { config, .. } => Some(config),
        Cmd::Compare { .. } => None,
    };
    path.and_then(|p| parse_config(p).ok())
        .map(|c| c.log_level)
        .unwrap_or_else(|| "info".into())
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Cmd::Run { config, output } => {
            let cfg = load(config, output, ConfigCommand::Run)?;
            let out = study::run_simulation(&cfg)?;
            if !out.converged {
                warn!("steady state not reached by t_max = {}", cfg.case.t_max);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Converge { config, orders, output } => {
            let mut cfg = load(config, output, ConfigCommand::Converge)?;
            if let Some(o) = orders {
                cfg.orders = parse_orders(o).ok_or_else(|| mhd_core::MhdError::Validation {
                    field: "orders".into(),
                    message: format!("cannot parse '{o}'"),
                })?;
                cfg.validate()?;
            }
            let table = study::run_convergence_study(&cfg)?;
            for r in &table.rows {
                match &r.failure {
                    None => println!("N={:2}  err_u={:.4e}  err_b={:.4e}", r.order, r.err_u, r.err_b),
                    Some(m) => println!("N={:2}  failed: {m}", r.order),
                }
            }
            let failed = table.rows.iter().any(|r| r.failure.is_some());
            Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Cmd::TransientFit { config, output } => {
            let cfg = load(config, output, ConfigCommand::TransientFit)?;
            let rep = study::run_transient_fit(&cfg)?;
            match &rep.fit {
                HistoryFit::Oscillatory(f) => println!(
                    "s = {:.6} (analytic {:.6})  w = {:.6} (analytic {:.6})  s0 = {:.6e}",
                    f.decay_s, rep.model.decay_s, f.freq_w, rep.model.freq_w, f.offset_s0
                ),
                HistoryFit::TwoExponential(f) => {
                    println!("l1 = {:.6}  l2 = {:.6}  s0 = {:.6e}", f.l1, f.l2, f.offset_s0)
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle { config, output } => {
            let cfg = load(config, output, ConfigCommand::Oracle)?;
            let r = study::run_oracle(&cfg)?;
            let (u, b) = r.grid.center();
            println!(
                "u_center = {u:.10e}  b_center = {b:.10e}  error bar (u) = {:.2e}",
                r.error_bar_u
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare {
            reference,
            run,
            tol_file,
        } => {
            let tol = match tol_file {
                Some(p) => Tolerances::parse(&std::fs::read_to_string(p)?)?,
                None => Tolerances::default(),
            };
            let rep = study::compare_dirs(reference, run, tol)?;
            println!(
                "err_u = {:.4e} (tol {:.1e})  err_b = {:.4e} (tol {:.1e})  {}",
                rep.err_u,
                rep.tolerances.err_u,
                rep.err_b,
                rep.tolerances.err_b,
                if rep.passed() { "PASS" } else { "FAIL" }
            );
            Ok(if rep.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&config_log_level(&cli));
    match execute(&cli) {
        Ok(code) => {
            info!("done");
            code
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
