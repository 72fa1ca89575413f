use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lure_smo::experiments::{self, SignModeArg, EXIT_INPUT_ERROR};
use lure_smo::simulate::{Coordinates, Scheme};

/// Sliding mode observers for set-valued Lur'e systems.
#[derive(Parser, Debug)]
#[command(name = "lure-smo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scalar sign system x' = 3 sin x - 4 Sign(x) under four sign realizations.
    Example1(Example1Args),
    /// Design checks, certificate and bounded-h observer run.
    Example2(Example2Args),
    /// Verify the design conditions of a system/gains pair (exit 1 on failure).
    Check(CheckArgs),
    /// Reduced-order observer on the bundled 2-D system.
    ReducedDemo(ReducedArgs),
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory for CSV and JSON files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Example1Args {
    /// Sign-system file (defaults to the bundled example).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Run a single variant: exact | sigmoid[:EPS:VARIANT] | guided[:K1:K2:M:N].
    #[arg(long)]
    sign_mode: Option<SignModeArg>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Euler,
    Rk4,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::Rk4 => Scheme::Rk4,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CoordinatesArg {
    Plant,
    Error,
}

impl From<CoordinatesArg> for Coordinates {
    fn from(c: CoordinatesArg) -> Self {
        match c {
            CoordinatesArg::Plant => Coordinates::Plant,
            CoordinatesArg::Error => Coordinates::Error,
        }
    }
}

#[derive(Args, Debug)]
struct Example2Args {
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 60.0)]
    horizon: f64,
    /// exact | sigmoid[:EPS:VARIANT] | guided[:K1:K2:M:N]
    #[arg(long)]
    sign_mode: Option<SignModeArg>,
    #[arg(long, value_enum, default_value = "euler")]
    scheme: SchemeArg,
    /// Integrate (x, x̂) or (x, e).
    #[arg(long, value_enum, default_value = "error")]
    coordinates: CoordinatesArg,
    /// Override the injection gain.
    #[arg(long)]
    beta: Option<f64>,
    /// Override gamma of the bounded-h dissipation check.
    #[arg(long)]
    gamma: Option<f64>,
    /// Seed of the sample set used by sampled checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of sample points.
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct ReducedArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,
    #[arg(long, value_enum, default_value = "euler")]
    scheme: SchemeArg,
    /// Integrate (x, ẑ) or (x, e_z).
    #[arg(long, value_enum, default_value = "error")]
    coordinates: CoordinatesArg,
    /// Override epsilon of the reduced gains.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Initial observer state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    zhat0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

fn run(cli: Cli) -> lure_smo::Result<i32> {
    match cli.command {
        Command::Example1(a) => {
            let o = experiments::cmd_example1(&experiments::Example1Options {
                config: a.config,
                step: a.step,
                horizon: a.horizon,
                sign_mode: a.sign_mode,
                out: a.out.out.clone(),
            })?;
            for v in &o.report.variants {
                println!(
                    "{:<14} switches/unit time {:>8.1}  mean amplitude {:.3e}  terminal |x| {:.3e}  converged(|x|<=1e-4) {}",
                    v.name,
                    v.chattering.switch_count_per_unit_time,
                    v.chattering.mean_amplitude,
                    v.terminal_abs_x,
                    v.convergence_time.map_or("never".into(), |t| format!("t={t:.3}"))
                );
            }
            println!("wrote {}", a.out.out.join("example1_metrics.json").display());
            Ok(o.exit_code)
        }
        Command::Example2(a) => {
            let o = experiments::cmd_example2(&experiments::Example2Options {
                system: a.system,
                gains: a.gains,
                step: a.step,
                horizon: a.horizon,
                sign_mode: a.sign_mode,
                scheme: a.scheme.into(),
                coordinates: a.coordinates.into(),
                beta: a.beta,
                gamma: a.gamma,
                seed: a.seed,
                samples: a.samples,
                out: a.out.out.clone(),
            })?;
            let r = &o.report;
            for c in &r.checks {
                println!("check {:<10} gamma {:<6} {}", c.label, c.gamma.unwrap_or(f64::NAN), if c.all_pass { "pass" } else { "fail" });
            }
            match &r.certificate.certificate {
                Some(c) => println!(
                    "certificate: rate {} sigma {} kappa {:.6} t1 {:.4} tf_bound {:.4}",
                    c.rate, c.sigma, c.kappa, c.t1, c.tf_bound
                ),
                None => println!("certificate refused: {}", r.certificate.refused_reason.as_deref().unwrap_or("")),
            }
            println!(
                "first |e_y| <= {:e}: {}",
                r.measured.ey_tol,
                r.measured.ey_first_crossing.map_or("never".into(), |t| format!("t={t:.3}"))
            );
            println!("wrote {}", a.out.out.join("example2_report.json").display());
            Ok(o.exit_code)
        }
        Command::Check(a) => {
            let o = experiments::cmd_check(&experiments::CheckOptions {
                system: a.system,
                gains: a.gains,
                gamma: a.gamma,
                seed: a.seed,
                samples: a.samples,
                out: a.out.out.clone(),
            })?;
            for c in &o.report.checks {
                for v in &c.verdicts {
                    println!("{:<8} {:<36} residual {:>12.4e}  threshold {:.1e}  {}", c.label, v.name, v.residual, v.threshold, if v.pass { "pass" } else { "FAIL" });
                }
            }
            println!("wrote {}", a.out.out.join("check_report.json").display());
            Ok(o.exit_code)
        }
        Command::ReducedDemo(a) => {
            let o = experiments::cmd_reduced_demo(&experiments::ReducedOptions {
                system: a.system,
                gains: a.gains,
                step: a.step,
                horizon: a.horizon,
                scheme: a.scheme.into(),
                coordinates: a.coordinates.into(),
                epsilon: a.epsilon,
                zhat0: a.zhat0,
                seed: a.seed,
                samples: a.samples,
                out: a.out.out.clone(),
            })?;
            let r = &o.report;
            println!("reduced conditions: {}", if r.check.all_pass { "pass" } else { "fail" });
            if r.simulated {
                println!(
                    "|x2 - x2hat|(T) = {:.3e}; decay rate estimate {} vs guaranteed {}",
                    r.x2_err_final.unwrap_or(f64::NAN),
                    r.estimated_rate.map_or("n/a".into(), |v| format!("{v:.4}")),
                    r.guaranteed_rate
                );
            }
            println!("wrote {}", a.out.out.join("reduced_demo_report.json").display());
            Ok(o.exit_code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT_ERROR as u8)
        }
    }
}
