use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbbm_core::cli::config::{Command, ConfigValue};
use sbbm_core::cli::validate::ValidateHooks;
use sbbm_core::cli::{self, CliError, Execution};
use sbbm_core::experiments::StudyKind;

/// Finite-element solver and convergence studies for the stochastic BBM equation.
#[derive(Parser)]
#[command(name = "sbbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run one noise realisation and write norm history and final state.
    Simulate(Common),
    /// Strong error against mesh size on a dyadic ladder.
    ConvergenceSpace(Common),
    /// Strong error against time step on a dyadic ladder.
    ConvergenceTime(Common),
    /// Run the built-in oracle checks.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file with dotted keys, e.g. `scheme.N = 200` or `[noise] s = 0.5`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `study.samples`.
    #[arg(long)]
    samples: Option<u64>,
    /// Output directory (beats SBBM_OUT_DIR and `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn run(sub: Sub) -> Result<(), CliError> {
    let (cmd, common) = match sub {
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::ConvergenceSpace(c) => (Command::ConvergenceSpace, c),
        Sub::ConvergenceTime(c) => (Command::ConvergenceTime, c),
        Sub::Validate(c) => (Command::Validate, c),
    };
    let mut raw = cli::load_config(common.config.as_deref(), &common.sets)?;
    if let Some(seed) = common.seed {
        raw.insert("noise.seed", ConfigValue::UInt(seed))?;
    }
    if let Some(samples) = common.samples {
        raw.insert("study.samples", ConfigValue::UInt(samples))?;
    }
    let exec = Execution { out_dir: cli::output_dir(common.out, &raw), workers: common.workers };
    let cfg = raw.resolve(cmd);
    match cmd {
        Command::Simulate => {
            let env = cli::cmd_simulate(&cfg, &exec)?;
            if let cli::output::ResultBody::Trajectory(t) = &env.result {
                println!("final |V| = {:e}, |U| = {:e}", t.final_norm_v, t.final_norm_u);
            }
        }
        Command::ConvergenceSpace | Command::ConvergenceTime => {
            let kind = if cmd == Command::ConvergenceSpace { StudyKind::Spatial } else { StudyKind::Temporal };
            let env = cli::cmd_convergence(&cfg, kind, &exec)?;
            if let cli::output::ResultBody::Rate(r) = &env.result {
                for e in &r.errors {
                    println!("{:>8} {:>12.4e} {:>12.4e} ± {:.2e}", e.resolution, e.step, e.error, e.stderr);
                }
                println!("slope = {:.4} ± {:.4} (residual {:.3e})", r.fit.slope, r.slope_stderr, r.fit.residual);
            }
        }
        Command::Validate => {
            let (_, report) = cli::cmd_validate(&cfg, &exec, &ValidateHooks::default())?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if !report.passed {
                let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(CliError::ValidationFailed(failed.join(", ")));
            }
        }
    }
    println!("wrote {}", exec.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sbbm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
