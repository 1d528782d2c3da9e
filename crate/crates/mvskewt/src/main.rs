//! Command-line driver for the matrix-variate skew-t toolkit.
//!
//! Subcommands: sample | density | fit | replicate | marginals.
//! Exit codes: 0 success, 2 validation error, 3 numerical error, 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mvskewt::ecm::{fit, FitConfig};
use mvskewt::harness::{density_csv, marginals_csv, run_replication};
use mvskewt::io::{
    read_dataset, read_fit_config, read_params, read_sim_config, write_dataset, write_fit_result,
    write_summary_csv, write_summary_json, FormatError,
};
use mvskewt::mvst::mvst_sample;

#[derive(Parser)]
#[command(name = "mvskewt", about = "Matrix-variate skew-t sampling, density evaluation, and ECM fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a parameter file.
    Sample {
        /// Parameter JSON file.
        params: PathBuf,
        /// Number of observations.
        #[arg(long, short)]
        n: usize,
        /// RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset file.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Per-observation log-densities of a dataset under given parameters.
    Density {
        dataset: PathBuf,
        params: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit MVST parameters to a dataset by ECM.
    Fit {
        dataset: PathBuf,
        /// Optional fit-configuration JSON file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a replicated simulation study from a config file.
    Replicate {
        sim_config: PathBuf,
        /// Output directory for summary.csv, summary.json, replicates.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Emit plot-ready marginal series for each column of a dataset.
    Marginals {
        dataset: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

fn lib_error_code(e: &mvskewt::Error) -> u8 {
    use mvskewt::Error::*;
    match e {
        Domain(_) | InsufficientData(_) => EXIT_VALIDATION,
        Factorization { .. } | Numerical(_) | DegenerateWeights => EXIT_NUMERICAL,
        FitStep { source, .. } => lib_error_code(source),
    }
}

fn format_error_code(e: &FormatError) -> u8 {
    match e {
        FormatError::Io { .. } => EXIT_IO,
        FormatError::Json { .. } | FormatError::Dimension(_) | FormatError::NonFinite(_)
        | FormatError::Schema(_) => EXIT_VALIDATION,
        FormatError::Validation(inner) => lib_error_code(inner),
    }
}

enum CliError {
    Format(FormatError),
    Lib(mvskewt::Error),
    Io(String, std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Format(e) => format_error_code(e),
            CliError::Lib(e) => lib_error_code(e),
            CliError::Io(..) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Format(e) => write!(f, "{e}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "I/O error on {path}: {e}"),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Format(e)
    }
}

impl From<mvskewt::Error> for CliError {
    fn from(e: mvskewt::Error) -> Self {
        CliError::Lib(e)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sample { params, n, seed, out } => {
            let params = read_params(&params)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = mvst_sample(&mut rng, &params, n)?;
            write_dataset(&out, &data)?;
            eprintln!("wrote {} observations to {}", n, out.display());
        }
        Command::Density { dataset, params, out } => {
            let data = read_dataset(&dataset)?;
            let params = read_params(&params)?;
            let csv = density_csv(&data, &params)?;
            write_text(&out, &csv)?;
        }
        Command::Fit { dataset, config, out } => {
            let data = read_dataset(&dataset)?;
            let fit_config = match config {
                Some(path) => read_fit_config(&path)?,
                None => FitConfig::default(),
            };
            let result = fit(&data, &fit_config)?;
            write_fit_result(&out, &result)?;
            eprintln!(
                "fit: converged={}, iterations={}, final log-likelihood={}",
                result.converged,
                result.iterations,
                result.loglik_trace.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Replicate { sim_config, out_dir } => {
            let config = read_sim_config(&sim_config)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;
            let outcome = run_replication(&config, &FitConfig::default())?;
            write_summary_csv(&out_dir.join("summary.csv"), &outcome.summary)?;
            write_summary_json(&out_dir.join("summary.json"), &outcome.summary)?;
            let digests = serde_json::to_string_pretty(&outcome.digests)
                .expect("digest serialization cannot fail");
            write_text(&out_dir.join("replicates.json"), &(digests + "\n"))?;
            eprintln!(
                "replication: {} replicates, {} failures; sampling {:.2}s, fitting {:.2}s",
                config.replicates, outcome.failures, outcome.sample_seconds, outcome.fit_seconds
            );
        }
        Command::Marginals { dataset, out } => {
            let data = read_dataset(&dataset)?;
            write_text(&out, &marginals_csv(&data))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
