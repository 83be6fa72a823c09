//! `morseflow`: Morse and Floer homology of model landscapes from the shell.
//!
//! Exit status is 0 on success, 1 when the computation fails and 2 on
//! usage errors (bad flags, config files, inputs or expressions).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Format, Partial, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "morseflow", version, about = "Morse homology by flow-line counting and its Floer lift")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// torus2, torusN:k, circle, sphere2, sphereN:k, rp1, rp2 or rp3.
    #[arg(long, global = true)]
    manifold: Option<String>,
    /// Scalar field in the manifold's point coordinates x1, x2, ...
    #[arg(long, global = true)]
    function: Option<String>,
    /// Newton seed grid resolution.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Seeds per unstable circle when counting connections.
    #[arg(long, global = true)]
    scan: Option<usize>,
    /// Scale of the Hamiltonian perturbation in `floer`.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Flow time limit.
    #[arg(long = "tmax", global = true)]
    t_max: Option<f64>,
    #[arg(long, global = true, value_enum)]
    out: Option<Format>,
    /// key=value file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Recorded in the report for reproducibility.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Locate and classify critical points.
    Critpoints,
    /// Integrate the negative gradient flow from a point (CSV by default).
    Flow {
        /// Comma-separated start point.
        #[arg(long)]
        from: String,
    },
    /// Count connecting trajectories between adjacent-index critical points.
    Connections,
    /// Morse complex, GF(2) homology and Morse inequalities.
    Homology,
    /// Floer complex over the Novikov field for a cotangent-bundle base.
    Floer {
        #[arg(long, value_parser = ["torus2", "circle"])]
        base: Option<String>,
    },
    /// Maslov index of a sampled loop of Lagrangian frames.
    Maslov {
        #[arg(long = "loop")]
        loop_file: PathBuf,
    },
    /// Arnold lower bound on fixed points from Morse homology.
    Arnold,
}

impl Common {
    fn partial(&self) -> Partial {
        Partial {
            manifold: self.manifold.clone(),
            function: self.function.clone(),
            grid: self.grid,
            scan: self.scan,
            epsilon: self.epsilon,
            t_max: self.t_max,
            out: self.out,
            seed: self.seed,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MORSEFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("MORSEFLOW_THREADS=`{raw}` is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::domain)
}

fn run(cli: Cli) -> Result<String, CliError> {
    configure_threads()?;
    let file = match &cli.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            config::parse_file(&text)?
        }
        None => Partial::default(),
    };
    let mut merged = cli.common.partial().over(file);
    if let Command::Floer { base } = &cli.command {
        if let Some(b) = base {
            merged.manifold = Some(b.clone());
        }
        if merged.function.is_none() {
            let m = merged.manifold.as_deref().unwrap_or("torus2");
            merged.function = commands::default_floer_function(m).map(String::from);
        }
    }
    let default_out = match cli.command {
        Command::Flow { .. } => Format::Csv,
        _ => Format::Json,
    };
    let cfg = RunConfig::resolve(merged, default_out)?;
    match &cli.command {
        Command::Critpoints => commands::critpoints(&cfg),
        Command::Flow { from } => commands::flow(&cfg, from),
        Command::Connections => commands::connections(&cfg),
        Command::Homology => commands::homology(&cfg),
        Command::Floer { .. } => commands::floer(&cfg),
        Command::Maslov { loop_file } => commands::maslov(&cfg, loop_file),
        Command::Arnold => commands::arnold(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("morseflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
