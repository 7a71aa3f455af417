use clap::{Args, Parser, Subcommand};
use hsep::harness::{Bundle, Config, ExperimentSpec, HarnessError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulator and verifier for a four-parameter exclusion process, its
/// exponential field transform, and the weak-scaling comparison against the
/// stochastic heat equation.
#[derive(Parser)]
#[command(name = "hsep", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated epsilon list (overrides the config).
    #[arg(long)]
    eps: Option<String>,
    /// Replica count (overrides the config).
    #[arg(long)]
    replicas: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        if let Some(seed) = self.seed {
            cfg.set("seed", seed.to_string());
        }
        if let Some(eps) = &self.eps {
            cfg.set("eps", eps.clone());
        }
        if let Some(replicas) = self.replicas {
            cfg.set("replicas", replicas.to_string());
        }
        if let Some(out) = &self.out {
            cfg.set("out", out.display().to_string());
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run particle ensembles and write scaled-field paths and statistics.
    Simulate {
        /// `key = value` experiment configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a verification suite and write a JSON report.
    Verify {
        /// Suite name: coupling, kernels, identities, decomposition,
        /// qv-approx, martingale, probes, or all.
        #[arg(long)]
        suite: String,
        /// Optional `key = value` configuration with suite parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the reference stochastic-heat-equation ensemble.
    She {
        /// `key = value` experiment configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare particle one-point statistics against the reference solver.
    Compare {
        /// `key = value` experiment configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Dump transition-kernel tables and run the kernel scaling probe.
    ProbeKernels {
        /// Optional `key = value` configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load(config: Option<&PathBuf>, overrides: &Overrides) -> Result<ExperimentSpec, HarnessError> {
    let mut cfg = match config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    overrides.apply(&mut cfg);
    ExperimentSpec::from_config(&cfg)
}

fn run() -> Result<Bundle, HarnessError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate { config, overrides } => {
            let spec = load(Some(config), overrides)?;
            hsep::harness::run_simulate(&spec)
        }
        Command::Verify { suite, config, overrides } => {
            let mut cfg = match config {
                Some(path) => Config::from_file(path)?,
                None => Config::default(),
            };
            overrides.apply(&mut cfg);
            cfg.set("suite", suite.clone());
            let spec = ExperimentSpec::from_config(&cfg)?;
            hsep::harness::run_verify(&spec)
        }
        Command::She { config, overrides } => {
            let spec = load(Some(config), overrides)?;
            hsep::harness::run_she(&spec)
        }
        Command::Compare { config, overrides } => {
            let spec = load(Some(config), overrides)?;
            hsep::harness::run_compare(&spec)
        }
        Command::ProbeKernels { config, overrides } => {
            let spec = load(config.as_ref(), overrides)?;
            hsep::harness::run_probe_kernels(&spec)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(bundle) => {
            for file in &bundle.files {
                println!("wrote {}", file.display());
            }
            println!("{}", bundle.summary);
            if bundle.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
