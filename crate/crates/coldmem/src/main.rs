use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use coldmem::commands::{self, Failure, EXIT_OK};
use coldmem::config::presets;
use coldmem::output::sig6;
use coldmem::PoolRunner;
use coldmem_core::fit::ModelKind;

#[derive(Parser)]
#[command(
    name = "coldmem",
    version,
    about = "Decoherence simulator for cold-atom DLCZ quantum memories"
)]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a storage-time curve and fit it.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Also write a gnuplot script.
        #[arg(long)]
        plot: bool,
    },
    /// Fit lifetimes at several detection angles and infer the temperature.
    Sweep {
        config: PathBuf,
        /// Detection angles in degrees.
        #[arg(long, value_delimiter = ',', required = true)]
        angles: Vec<f64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compare derived quantities against reference values.
    Reproduce {
        #[arg(long = "temperature-uk", default_value_t = 100.0)]
        temperature_uk: f64,
    },
    /// Fit an existing delay_us,g,sigma_g curve.
    Fit {
        csv: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        /// Hold A (s^-2) fixed.
        #[arg(long = "fix-a")]
        fix_a: Option<f64>,
        #[arg(long)]
        exclude_first: bool,
    },
    /// Print a preset configuration as TOML.
    Preset {
        #[arg(value_parser = presets::NAMES)]
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Gaussian,
    Lorentzian,
    Combined,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Gaussian => ModelKind::Gaussian,
            Model::Lorentzian => ModelKind::Lorentzian,
            Model::Combined => ModelKind::Combined,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let runner = || PoolRunner::new(cli.threads).map_err(Failure::Io);
    match cli.command {
        Command::Simulate { config, out_dir, plot } => {
            let run = commands::simulate(&runner()?, &config, &out_dir, plot)?;
            if let Ok(fit) = &run.fit {
                println!(
                    "{} fit: lifetime {} +/- {} us (reduced chi2 {})",
                    fit.kind.name(),
                    sig6(fit.lifetime * 1e6),
                    sig6(fit.lifetime_sigma * 1e6),
                    sig6(fit.chi2_reduced)
                );
            }
        }
        Command::Sweep {
            config,
            angles,
            out_dir,
        } => {
            let outcome = commands::sweep(&runner()?, &config, &angles, &out_dir)?;
            print!("{}", outcome.report);
        }
        Command::Reproduce { temperature_uk } => {
            if !(temperature_uk > 0.0 && temperature_uk.is_finite()) {
                return Err(Failure::Config("--temperature-uk must be positive".to_owned()));
            }
            let rows = commands::reproduce_rows(temperature_uk * 1e-6)?;
            print!("{}", commands::reproduce_table(&rows));
        }
        Command::Fit {
            csv,
            model,
            fix_a,
            exclude_first,
        } => {
            let (report, _) = commands::fit_file(&csv, model.into(), fix_a, exclude_first)?;
            print!("{report}");
        }
        Command::Preset { name } => {
            let cfg = presets::by_name(&name).expect("validated by clap");
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("coldmem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
