use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedring::attack::{self, AttackArgs};
use fedring::compare::{self, CompareArgs};
use fedring::config::{self, RunFlags};
use fedring::{train, CliError};

#[derive(Parser)]
#[command(
    name = "fedring",
    version = fedring::VERSION,
    about = "Personalized federated training with ring secure aggregation",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory.
    Train {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_name = "DIR", default_value = "fedring-run")]
        out: PathBuf,
    },
    /// Invert a recorded update from one attacker vantage point.
    Attack(AttackArgs),
    /// Sweep algorithms and seeds and tabulate test metrics.
    Compare(CompareArgs),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { run, out } => {
            let resolved = config::load(&run)?.resolve()?;
            let result = train::train_into(&resolved, &out)?;
            println!("{}", train::summary(&result));
            println!("wrote {}", out.display());
        }
        Command::Attack(args) => {
            let report = attack::run(&args)?;
            println!("{}", attack::summary(&report));
        }
        Command::Compare(args) => {
            let plan = compare::load(&args)?;
            let outcome = compare::run(&plan, &args.out)?;
            print!("{}", compare::render_means(&outcome));
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedring: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
