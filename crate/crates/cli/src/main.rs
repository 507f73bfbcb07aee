use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use txbf_cli::spec::parse_spec_str_unchecked;
use txbf_cli::{run_experiment, CliError, ExperimentSpec, Overrides};

/// Monte Carlo BER/ABR sweeps for optimized SC-FDE transmit beamforming.
///
/// Settings come from the flags, then the spec file, then the built-in
/// defaults (64-symbol blocks, 16-tap channels, 2×2 antennas, 2 streams).
#[derive(Debug, Parser)]
#[command(name = "txbf", version)]
struct Args {
    /// TOML experiment spec.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Comma-separated criteria: amse, gmse, maxmse, asinr, gsinr, hsinr, aber, epa.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    criteria: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Independent channel realizations per SNR point.
    #[arg(long, value_name = "N")]
    channels: Option<usize>,
    /// Data blocks per channel realization.
    #[arg(long, value_name = "N")]
    blocks: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return fail(CliError::Usage(e.kind().to_string() + ": " + &first_line(&e.to_string()))),
    };
    match run(args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string()
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string_pretty(&e.report()).unwrap_or_else(|_| e.to_string()));
    ExitCode::from(e.exit_code())
}

fn run(args: Args) -> Result<String, CliError> {
    // Flags are applied before validation so they can repair file values.
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                path: path.clone(),
                source,
            })?;
            parse_spec_str_unchecked(&text, &path.display().to_string())?
        }
        None => ExperimentSpec::default(),
    };
    Overrides {
        snrs_db: args.snr,
        criteria: args.criteria,
        seed: args.seed,
        output_dir: args.out,
        n_channels: args.channels,
        blocks_per_channel: args.blocks,
    }
    .apply(&mut spec);
    spec.normalize();
    spec.validate()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let outcome = pool.install(|| run_experiment(&spec))?;
    let excluded = outcome.report.excluded.len();
    Ok(format!(
        "wrote {} files to {} ({} SNR points × {} criteria × {} channels, {} excluded)",
        outcome.files.len(),
        spec.output_dir.display(),
        spec.snrs_db.len(),
        spec.criteria.len(),
        spec.n_channels,
        excluded
    ))
}
