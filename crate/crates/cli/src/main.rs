use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use polarcm::Error;
use polarcm::construction::{DesignSpec, Estimator};
use polarcm::harness::{SimConfig, construct, load_design, run_simulation, summarize};
use polarcm::schemes::{design_scheme, equivalence_check_4qam};

#[derive(Parser)]
#[command(name = "polarcm", version, about = "Polar-coded modulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Bec,
    Ga,
    Mc,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Bec => Estimator::Bec,
            EstimatorArg::Ga => Estimator::Ga,
            EstimatorArg::Mc => Estimator::Mc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute bit-channel reliabilities and frozen sets, print them as JSON
    Construct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        estimator: Option<EstimatorArg>,
        #[arg(long, allow_negative_numbers = true)]
        design_esn0: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Write the JSON here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a BER/FER sweep and write the CSV
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check that polar-coded BICM over Gray 4-QAM decodes like MLC
    Equivalence {
        #[arg(long, default_value_t = 64)]
        n_sym: usize,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "ga")]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        design_esn0: f64,
        #[arg(long, default_value_t = 10_000)]
        mc_trials: u64,
    },
    /// Print rates, delays and frozen counts of the designed scheme
    Info {
        #[arg(long)]
        config: PathBuf,
    },
}

/// `Ok(false)` when the command ran but its check failed.
fn run(cli: Cli) -> polarcm::Result<bool> {
    match cli.command {
        Command::Construct { config, estimator, design_esn0, k, output } => {
            let (scheme, mut design) = load_design(&config)?;
            if let Some(e) = estimator {
                design.estimator = e.into();
            }
            if let Some(v) = design_esn0 {
                design.design_esn0_db = v;
            }
            if let Some(k) = k {
                design.info_bits = k;
            }
            polarcm::harness::validate_design(&scheme, &design)?;
            let report = construct(&scheme, &design)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match output {
                Some(path) => std::fs::write(&path, text + "\n")
                    .map_err(|source| Error::Io { path: path.display().to_string(), source })?,
                None => println!("{text}"),
            }
        }
        Command::Simulate { config, seed, workers, output } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if output.is_some() {
                cfg.output = output;
            }
            let result = run_simulation(&cfg)?;
            for p in &result.points {
                let ber = p.ber().map_or_else(|| "undefined".to_string(), |b| format!("{b:.3e}"));
                eprintln!(
                    "{} {:>7.2} dB  frames {:>9}  frame errors {:>6}  BER {ber}  FER {:.3e}",
                    p.snr_ref.as_str(),
                    p.snr_db,
                    p.frames,
                    p.frame_errors,
                    p.fer()
                );
            }
            match &cfg.output {
                Some(path) => eprintln!("wrote {}", path.display()),
                None => print!("{}", polarcm::harness::to_csv(&result)),
            }
        }
        Command::Equivalence { n_sym, k, trials, seed, estimator, design_esn0, mc_trials } => {
            let design = DesignSpec {
                kind: None,
                estimator: estimator.into(),
                design_esn0_db: design_esn0,
                info_bits: k,
                mc_trials,
                seed,
            };
            let report = equivalence_check_4qam(n_sym, k, &design, trials, seed)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if !report.passed() {
                eprintln!("equivalence check failed");
                return Ok(false);
            }
        }
        Command::Info { config } => {
            let (scheme, design) = load_design(&config)?;
            let d = design_scheme(&scheme, &design)?;
            let s = summarize(&d.scheme);
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::InvalidArgument(_) => ExitCode::from(2),
                Error::Io { .. } => ExitCode::from(1),
            }
        }
    }
}
