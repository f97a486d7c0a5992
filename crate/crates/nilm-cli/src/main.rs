//! `nilm` — train, evaluate, and run NILM models from the shell.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 data error, 4 training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nilm_cli::commands::{
    cmd_disaggregate, cmd_eval, cmd_synth, cmd_train, cmd_verify, exit_code, Global, Scenario,
};

#[derive(Parser)]
#[command(name = "nilm", version, about = "Non-intrusive load monitoring toolkit")]
struct Cli {
    /// Override every configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (recorded in the run manifest).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Config file, as an alternative to the positional argument.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write checkpoint, loss CSV/SVG, and manifest.
    Train {
        /// Config file.
        config: PathBuf,
        /// Directory of household channel files or a synthetic spec.
        data_dir: PathBuf,
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint and emit a metrics report.
    Eval {
        checkpoint: PathBuf,
        data_dir: PathBuf,
        #[arg(long)]
        scenario: ScenarioArg,
        /// Output directory (defaults to the checkpoint's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict per-appliance power from a mains channel file.
    Disaggregate {
        checkpoint: PathBuf,
        mains_file: PathBuf,
        out_dir: PathBuf,
    },
    /// Generate synthetic household channel files.
    Synth {
        out_dir: PathBuf,
        /// Spec file; omitted means the built-in default household.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        days: i64,
    },
    /// Run gradient checks and structural invariants.
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Seen,
    Unseen,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let global = Global {
        seed: cli.seed,
        threads: cli.threads,
        config: cli.config.clone(),
    };
    let result = match &cli.cmd {
        Cmd::Train { config, data_dir, out_dir } => {
            cmd_train(Some(config), data_dir, out_dir, &global)
        }
        Cmd::Eval { checkpoint, data_dir, scenario, out } => cmd_eval(
            checkpoint,
            data_dir,
            match scenario {
                ScenarioArg::Seen => Scenario::Seen,
                ScenarioArg::Unseen => Scenario::Unseen,
            },
            out.as_deref(),
            &global,
        ),
        Cmd::Disaggregate { checkpoint, mains_file, out_dir } => {
            cmd_disaggregate(checkpoint, mains_file, out_dir, &global)
        }
        Cmd::Synth { out_dir, spec, days } => {
            cmd_synth(spec.as_deref(), out_dir, *days, cli.seed.unwrap_or(1), &global)
        }
        Cmd::Verify => {
            return if cmd_verify() { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
