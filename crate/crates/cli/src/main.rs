use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochwave::ensemble::Execution;

mod commands;
mod config;
mod error;
mod store;
mod wavefile;

use commands::Ctx;
use config::RunConfig;
use error::CliError;
use store::Store;

/// Traveling waves under multiplicative noise.
#[derive(Parser, Debug)]
#[command(name = "stochwave", version)]
struct Cli {
    /// Worker threads for Monte Carlo runs (default: available parallelism).
    #[arg(long, global = true, env = "STOCHWAVE_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the deterministic wave and its adjoint eigenfunction.
    Wave(Common),
    /// Solve for the noise-modified wave at `sigma`.
    Modwave(Common),
    /// Integrate one path and write its time series and summary.
    Simulate(Common),
    /// Run `paths` independent paths and write per-path JSONL plus a report.
    Ensemble(Common),
    /// Second-order wavespeed correction.
    Speed {
        #[command(flatten)]
        common: Common,
        /// Force the Nagumo noise for which g(Φ_0) is a multiple of Φ_0'.
        #[arg(long)]
        special_case: bool,
    },
    /// Canned experiment selected by `name` (steepening or stability).
    Experiment(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    keys: Keys,
}

/// Per-key overrides; names match the configuration keys.
#[derive(Args, Debug)]
struct Keys {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    varrho: Option<String>,
    #[arg(long = "gamma_fhn")]
    gamma_fhn: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long)]
    dx: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long)]
    paths: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    u0: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    name: Option<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let k = &self.keys;
        let named = [
            ("model", &k.model),
            ("a", &k.a),
            ("rho", &k.rho),
            ("varrho", &k.varrho),
            ("gamma_fhn", &k.gamma_fhn),
            ("sigma", &k.sigma),
            ("L", &k.l),
            ("dx", &k.dx),
            ("dt", &k.dt),
            ("T", &k.t),
            ("paths", &k.paths),
            ("seed", &k.seed),
            ("epsilon", &k.epsilon),
            ("alpha", &k.alpha),
            ("eta", &k.eta),
            ("noise", &k.noise),
            ("u0", &k.u0),
            ("stride", &k.stride),
            ("tol", &k.tol),
            ("name", &k.name),
        ];
        let mut out = Vec::new();
        for s in &self.set {
            let (key, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            out.push((key.trim().to_string(), v.trim().to_string()));
        }
        out.extend(named.iter().filter_map(|(key, v)| v.as_ref().map(|v| (key.to_string(), v.clone()))));
        Ok(out)
    }

    fn context(&self, extra: &[(&str, &str)]) -> Result<Ctx, CliError> {
        let mut overrides = self.overrides()?;
        overrides.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        let cfg = RunConfig::load(self.config.as_deref(), &overrides)?;
        let store = Store::open(&self.out)?;
        Ok(Ctx::new(cfg, store))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = Execution::Parallel;
    match &cli.command {
        Command::Wave(c) => commands::wave(c.context(&[])?),
        Command::Modwave(c) => commands::modwave(c.context(&[])?),
        Command::Simulate(c) => commands::simulate(c.context(&[])?),
        Command::Ensemble(c) => commands::ensemble(c.context(&[])?, exec),
        Command::Speed { common, special_case } => {
            let extra: &[(&str, &str)] = if *special_case { &[("noise", "logistic")] } else { &[] };
            commands::speed(common.context(extra)?, *special_case)
        }
        Command::Experiment(c) => commands::experiment(c.context(&[])?, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
