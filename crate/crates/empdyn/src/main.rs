use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use empdyn::config::{Bandwidths, DomainArg};
use empdyn::{pipeline, CliResult, RunConfig};

/// Empirical dynamics of sparse longitudinal data.
#[derive(Parser)]
#[command(name = "empdyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a truth specification.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Truth specification (JSON).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Number of subjects.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Smooth moments and decompose the covariance.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate β, V, R² and the drift covariance from `fit` outputs.
    Dynamics {
        #[command(flatten)]
        common: Common,
    },
    /// Fit individual trajectories and drift paths.
    Pace {
        #[command(flatten)]
        common: Common,
        /// Do not floor a zero error variance.
        #[arg(long)]
        no_sigma_floor: bool,
        /// Subjects listed per drift component.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Bundle the JSON summaries into report.json.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV (subject_id,time,value).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// `h0,h1,g0,g1` or `auto`.
    #[arg(long)]
    bandwidths: Option<Bandwidths>,
    /// Fraction of variance explained that selects K.
    #[arg(long)]
    fve: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    /// Comma-separated R² thresholds for the subdomain report.
    #[arg(long, value_delimiter = ',')]
    r2_threshold: Option<Vec<f64>>,
    /// Take logarithms of the observed values.
    #[arg(long)]
    log_values: bool,
    /// Restrict to `a,b`; rows outside are dropped.
    #[arg(long)]
    domain: Option<DomainArg>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn into_config(self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.input {
            cfg.input = Some(v);
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        if let Some(v) = self.grid_size {
            cfg.grid_size = v;
        }
        if let Some(v) = self.bandwidths {
            cfg.bandwidths = v;
        }
        if let Some(v) = self.fve {
            cfg.fve = v;
        }
        if let Some(v) = self.kmax {
            cfg.k_max = v;
        }
        if let Some(v) = self.r2_threshold {
            cfg.r2_thresholds = v;
        }
        cfg.log_values |= self.log_values;
        if let Some(DomainArg(d)) = self.domain {
            cfg.domain = Some(d);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<usize> {
    let diag = match cli.command {
        Command::Simulate { common, spec, n } => {
            let mut cfg = common.into_config()?;
            cfg.spec = spec.or(cfg.spec);
            cfg.n = n.or(cfg.n);
            pipeline::simulate(&cfg)?
        }
        Command::Fit { common } => pipeline::fit(&common.into_config()?)?,
        Command::Dynamics { common } => pipeline::dynamics(&common.into_config()?)?,
        Command::Pace {
            common,
            no_sigma_floor,
            top,
        } => {
            let mut cfg = common.into_config()?;
            cfg.sigma_floor &= !no_sigma_floor;
            if let Some(top) = top {
                cfg.top = top;
            }
            pipeline::pace(&cfg)?
        }
        Command::Report { common } => pipeline::report(&common.into_config()?)?,
    };
    Ok(diag.len())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("finished with {n} warning(s); see the JSON summary");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
