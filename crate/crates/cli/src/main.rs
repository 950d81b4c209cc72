use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hewe::estimator::{sweep_endpoints, what_if, GridRange, SearchConfig};
use hewe::report::{self, WhatIfReport};
use hewe::sample::{load_sample, ColumnSelector, OrderedSample};
use hewe::simulator::{run_experiment, ExperimentConfig};
use hewe::{estimate, hill_curve, oracle, HeweError};
use hewe_cli::{exit_code, parse_endpoints, service};

#[derive(Parser)]
#[command(name = "hewe", version, about = "Tail index and missing-extremes estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct InputArgs {
    /// Delimited text file, one observation per row.
    #[arg(long)]
    input: PathBuf,
    /// 0-based column index or header name.
    #[arg(long, default_value = "0")]
    column: String,
    /// Drop this many of the largest observations first.
    #[arg(long, default_value_t = 0)]
    remove_top: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    k: usize,
    /// θ₁·k, the first rank on the fitted grid.
    #[arg(long, default_value_t = 1)]
    theta1: usize,
    /// `min:max:step`.
    #[arg(long)]
    alpha_range: Option<GridRange>,
    #[arg(long)]
    delta_range: Option<GridRange>,
    #[arg(long, allow_hyphen_values = true)]
    rho_min: Option<f64>,
}

impl SearchArgs {
    fn config(&self, endpoint: usize) -> SearchConfig {
        let mut c = SearchConfig::for_data(endpoint);
        c.theta1_offset = self.theta1;
        if let Some(r) = self.alpha_range {
            c.alpha_range = r;
        }
        if let Some(r) = self.delta_range {
            c.delta_range = r;
        }
        if let Some(r) = self.rho_min {
            c.rho_min = r;
        }
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Classical Hill estimates for k = 1..=k_max.
    Hill {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long = "k-max", alias = "k")]
        k_max: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the model at one endpoint.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// θₛ·k, the last rank on the fitted grid.
        #[arg(long)]
        endpoint: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit at several endpoints. With --remove-top m, reports the sweep on
    /// the full sample next to the sweep after removing the m largest
    /// values, endpoints shifted left by m.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "0")]
        column: String,
        #[arg(long, default_value_t = 0)]
        remove_top: usize,
        #[command(flatten)]
        search: SearchArgs,
        /// `a,b,c` or `first:last:step`.
        #[arg(long)]
        endpoints: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a simulation experiment described by a TOML file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API and, optionally, static UI assets.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        max_sessions: usize,
    },
    /// Exact finite-sample HEWE moments under Pareto data.
    #[command(hide = true)]
    Oracle {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
}

fn read_sample(path: &PathBuf, column: &str, remove_top: usize) -> hewe::Result<OrderedSample> {
    let file = fs::File::open(path).map_err(|e| HeweError::ParseError(format!("{}: {e}", path.display())))?;
    let Ok(selector) = column.parse::<ColumnSelector>();
    let ingested = load_sample(file, &selector)?;
    if !ingested.non_numeric_rows.is_empty() {
        eprintln!("skipped {} non-numeric rows", ingested.non_numeric_rows.len());
    }
    ingested.sample.remove_top(remove_top)
}

fn emit(text: &str, output: Option<&PathBuf>) -> hewe::Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| HeweError::ParseError(format!("{}: {e}", path.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| HeweError::ParseError(e.to_string()))
        }
    }
}

fn run(cli: Cli) -> hewe::Result<()> {
    match cli.command {
        Command::Hill { input, k_max, format, output } => {
            let sample = read_sample(&input.input, &input.column, input.remove_top)?;
            let curve = hill_curve(&sample, k_max)?;
            let text = match format {
                Format::Json => report::to_json(&curve)?,
                Format::Csv => {
                    let rows: Vec<(f64, f64)> = curve.iter().map(|&(k, h)| (k as f64, h)).collect();
                    report::pairs_csv("k", "hill", &rows)?
                }
            };
            emit(&text, output.as_ref())
        }
        Command::Estimate { input, search, endpoint, format, output } => {
            let sample = read_sample(&input.input, &input.column, input.remove_top)?;
            let r = estimate(&sample, search.k, &search.config(endpoint))?;
            let text = match format {
                Format::Json => report::to_json(&r)?,
                Format::Csv => report::estimate_csv(&r)?,
            };
            emit(&text, output.as_ref())
        }
        Command::Sweep { input, column, remove_top, search, endpoints, format, output } => {
            let sample = read_sample(&input, &column, 0)?;
            let endpoints = parse_endpoints(&endpoints)?;
            let config = search.config(0);
            let text = if remove_top > 0 {
                let w = what_if(&sample, search.k, &config, &endpoints, remove_top)?;
                let rep = WhatIfReport::from(&w);
                match format {
                    Format::Json => report::to_json(&rep)?,
                    Format::Csv => report::what_if_csv(&rep)?,
                }
            } else {
                let rows = report::sweep_rows(&sweep_endpoints(&sample, search.k, &config, &endpoints)?, None);
                match format {
                    Format::Json => report::to_json(&rows)?,
                    Format::Csv => report::sweep_csv(&rows)?,
                }
            };
            emit(&text, output.as_ref())
        }
        Command::Experiment { config, seed, format, output } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| HeweError::ParseError(format!("{}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::from_toml_str(&text)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let rep = run_experiment(&cfg)?;
            let text = match format {
                Format::Json => report::to_json(&rep)?,
                Format::Csv => report::experiment_csv(&rep)?,
            };
            emit(&text, output.as_ref())
        }
        Command::Serve { bind, port, static_dir, max_sessions } => {
            let addr: SocketAddr = format!("{bind}:{port}")
                .parse()
                .map_err(|e| HeweError::InvalidConfig(format!("bad bind address: {e}")))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| HeweError::InvalidConfig(e.to_string()))?;
            rt.block_on(async move {
                let app = service::router(service::AppState::new(max_sessions), static_dir);
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .map_err(|e| HeweError::InvalidConfig(format!("cannot bind {addr}: {e}")))?;
                eprintln!("listening on http://{addr}");
                axum::serve(listener, app).await.map_err(|e| HeweError::InvalidConfig(e.to_string()))
            })
        }
        Command::Oracle { alpha, k, theta, delta } => {
            let mean = oracle::pareto_hewe_mean_exact(alpha, k, theta, delta)?;
            let var = oracle::pareto_hewe_var_exact(alpha, k, theta, delta)?;
            emit(&format!("mean,{}\nvariance,{}\n", report::fmt_g17(mean), report::fmt_g17(var)), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
