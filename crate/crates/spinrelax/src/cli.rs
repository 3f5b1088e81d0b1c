//! Command-line entry points. Exit codes: 0 ok, 2 config error, 3 numeric error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::deck::{self, Deck, DeckError};
use crate::output;
use crate::run::{self, ScanKnob, SweepOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spinrelax", version, about = "Phonon-driven spin relaxation times from Lindblad generators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a deck and print the resolved configuration.
    Validate { deck: PathBuf },
    /// Run the temperature/field sweep and write rates, fits and config.
    Run(RunArgs),
    /// Repeat the sweep over several T-matrix regularizers.
    ScanRegularizer(ScanArgs),
    /// Repeat the sweep over several broadening widths.
    ScanBroadening(ScanArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub deck: PathBuf,
    /// Overrides `numerics.workers`.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated knob values in cm^-1.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
}

pub fn main_from_env() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    execute(Cli::parse())
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate { deck } => match load(&deck) {
            Ok(d) => {
                print!("{}", d.config.to_toml());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run(args) => run_command(&args, None, &[]),
        Command::ScanRegularizer(a) => run_command(&a.run, Some(ScanKnob::Regularizer), &a.values),
        Command::ScanBroadening(a) => run_command(&a.run, Some(ScanKnob::Broadening), &a.values),
    }
}

fn load(path: &Path) -> Result<Deck, i32> {
    match deck::load(path) {
        Ok(d) => Ok(d),
        Err(DeckError::Invalid(diags)) => {
            for d in &diags {
                eprintln!("error: {d}");
            }
            eprintln!("{}: {} problem(s)", path.display(), diags.len());
            Err(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(EXIT_CONFIG)
        }
    }
}

fn run_command(args: &RunArgs, scan: Option<ScanKnob>, values: &[f64]) -> i32 {
    let mut deck = match load(&args.deck) {
        Ok(d) => d,
        Err(code) => return code,
    };
    if let Some(w) = args.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_CONFIG;
        }
        deck.config.numerics.workers = w;
    }
    if let Some(dir) = &args.output_dir {
        deck.config.output.dir = dir.display().to_string();
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        eprintln!("error: --values must be positive");
        return EXIT_CONFIG;
    }
    let cfg = &deck.config;
    let dir = PathBuf::from(&cfg.output.dir);
    let header = output::provenance(&deck.sha256, cfg.numerics.workers);
    let start = Instant::now();
    let result: Result<SweepOutput, run::RunError> = match scan {
        None => run::run(cfg),
        Some(knob) => {
            let vals = if values.is_empty() { knob.defaults() } else { values.to_vec() };
            run::scan(cfg, knob, &vals)
        }
    };
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    out.timings.log();
    log::info!("total: {:.3} s for {} rows", start.elapsed().as_secs_f64(), out.rows.len());
    let written = (|| -> std::io::Result<()> {
        output::write_config(&dir, cfg, &header)?;
        match scan {
            None => {
                output::write_rates(&dir, output::RATES_FILE, &out.rows, &header, None)?;
                output::write_fits(&dir, &out.fits, &header)?;
            }
            Some(knob) => {
                output::write_rates(&dir, knob.file_name(), &out.rows, &header, Some(knob))?;
            }
        }
        Ok(())
    })();
    if let Err(e) = written {
        eprintln!("error: cannot write to {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    log::info!("results written to {}", dir.display());
    EXIT_OK
}
