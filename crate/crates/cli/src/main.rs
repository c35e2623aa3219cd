use std::path::PathBuf;
use std::process::ExitCode;

use aclsim_cli::{cmd_acl_check, cmd_run, Overrides};
use aclsim_core::scenario::Format;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aclsim", version, about = "Load-aware ACL network simulator and frame-loss bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its reports.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration_scale: Option<f64>,
        #[arg(long, value_enum)]
        guard: Option<OnOff>,
        /// Output directory. Defaults to the scenario's, then $ACLSIM_OUT, then ./aclsim-out.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Parse an ACL file, print it canonically and report shadowed rules.
    AclCheck { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, seed, duration_scale, guard, out, format } => {
            let overrides = Overrides {
                seed,
                duration_scale,
                guard: guard.map(|g| matches!(g, OnOff::On)),
                out,
                format: format.map(|f| match f {
                    FormatArg::Csv => Format::Csv,
                    FormatArg::Json => Format::Json,
                }),
            };
            cmd_run(&scenario, &overrides).map(|written| {
                for p in written {
                    println!("wrote {}", p.display());
                }
            })
        }
        Command::AclCheck { file } => cmd_acl_check(&file).map(|report| print!("{report}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
