use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use elastomono_cli::pipeline::{cmd_forward, cmd_ntd, cmd_reconstruct, forward_summary, summary};
use elastomono_cli::scenario::Scenario;
use elastomono_cli::sweep::{cmd_sweep, SweepSpec};
use elastomono_cli::verify::{self, Level};
use elastomono_cli::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "elastomono", version, about = "Linearized monotonicity reconstruction of elastic inclusions")]
struct Cli {
    /// Worker threads for solves and block tests (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the background and true media for every load and store the snapshots.
    Forward(ScenarioArgs),
    /// Form the NtD matrices G and G0 from stored snapshots.
    Ntd(ScenarioArgs),
    /// Run both monotonicity tests and write the labelled blocks.
    Reconstruct(ScenarioArgs),
    /// Run the property checks.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: Level,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Sweep load modes and weight scales, and time linearized against full tests.
    Sweep {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Sweep spec (TOML with modes, alpha_scales, timing_blocks).
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Artifact directory; overrides the scenario's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &ScenarioArgs) -> CliResult<Scenario> {
    Scenario::load(&args.scenario)
}

fn out_dir(args: &ScenarioArgs) -> Option<&Path> {
    args.out.as_deref()
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Forward(args) => {
            let r = cmd_forward(&load(&args)?, out_dir(&args))?;
            print!("{}", forward_summary(&r));
        }
        Command::Ntd(args) => {
            let r = cmd_ntd(&load(&args)?, out_dir(&args))?;
            println!(
                "G and G0 are {0}x{0}; asymmetry before symmetrization {1:.1e} / {2:.1e}",
                r.dim, r.asymmetry_g, r.asymmetry_g0
            );
        }
        Command::Reconstruct(args) => {
            let r = cmd_reconstruct(&load(&args)?, out_dir(&args))?;
            print!("{}", summary(&r));
        }
        Command::Verify { level, seed } => {
            let results = verify::run(level, seed, |c| println!("{c}"));
            let failed: Vec<String> = results
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.to_string())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed));
            }
        }
        Command::Sweep { args, sweep } => {
            let scenario = load(&args)?;
            let spec = match sweep {
                Some(p) => SweepSpec::load(&p)?,
                None => SweepSpec::default(),
            };
            let out = cmd_sweep(&scenario, &spec, out_dir(&args))?;
            print!("{}", out.summary_csv());
            if let Some(r) = out.speedup() {
                println!("full re-solve / linearized time per block: {r:.1}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
