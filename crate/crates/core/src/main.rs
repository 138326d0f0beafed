use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use postshock::bootstrap::{assess_all, BootstrapConfig, Procedure};
use postshock::io::{self, ForecastReport, LoocvFile, RunManifest, SimulationFile, SCHEMA_VERSION};
use postshock::loocv::{loocv, LoocvConfig, LoocvMode};
use postshock::sim::{run_monte_carlo, SimConfig};
use postshock::{Error, Result};

#[derive(Parser)]
#[command(
    name = "postshock",
    version,
    about = "Post-shock forecasting with donor pools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the target's shock, assess risk reduction and forecast T*+1.
    Forecast {
        #[command(flatten)]
        panel: PanelArgs,
        #[command(flatten)]
        opts: CommonArgs,
        /// Also write plot.csv with the target path, fits and forecasts.
        #[arg(long)]
        plot: bool,
    },
    /// Run the Monte Carlo harness.
    Simulate {
        #[command(flatten)]
        opts: CommonArgs,
    },
    /// Leave-one-out cross-validation of the adjustment decision.
    Loocv {
        #[command(flatten)]
        panel: PanelArgs,
        #[command(flatten)]
        opts: CommonArgs,
    },
}

#[derive(Args)]
struct PanelArgs {
    /// Long-format panel CSV: series_id,t,y,x1..xp.
    #[arg(long)]
    data: PathBuf,
    /// Metadata CSV: series_id,t_star,role.
    #[arg(long)]
    meta: PathBuf,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration (bootstrap settings, or simulation settings for `simulate`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random stream (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    bootstrap: Option<BootKind>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    replicates: Option<usize>,
    /// Held-out draws for LOOCV (all donors when omitted).
    #[arg(long)]
    k: Option<usize>,
    /// Norm order of the weight objective.
    #[arg(long)]
    norm: Option<f64>,
    #[arg(long, value_enum)]
    standardize: Option<Switch>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum BootKind {
    Bu,
    Bf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl BootKind {
    fn procedure(self) -> Procedure {
        match self {
            BootKind::Bu => Procedure::Bu,
            BootKind::Bf => Procedure::Bf,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn bootstrap_config(opts: &CommonArgs) -> Result<BootstrapConfig> {
    let mut cfg: BootstrapConfig = match &opts.config {
        Some(p) => read_json(p)?,
        None => BootstrapConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(b) = opts.bootstrap {
        cfg.procedure = b.procedure();
    }
    if let Some(b) = opts.replicates {
        cfg.replicates = b;
    }
    if let Some(p) = opts.norm {
        cfg.weights.norm_order = p;
    }
    if let Some(s) = opts.standardize {
        cfg.weights.standardize = matches!(s, Switch::On);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sim_config(opts: &CommonArgs) -> Result<SimConfig> {
    let mut cfg: SimConfig = match &opts.config {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(b) = opts.bootstrap {
        cfg.procedure = b.procedure();
    }
    if let Some(b) = opts.replicates {
        cfg.replicates = b;
    }
    if let Some(k) = opts.k {
        cfg.k = k;
    }
    if let Some(p) = opts.norm {
        cfg.weights.norm_order = p;
    }
    if let Some(s) = opts.standardize {
        cfg.weights.standardize = matches!(s, Switch::On);
    }
    cfg.validate_harness()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(Error::at(dir))?;
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).map_err(Error::at(&path))?,
    ))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    std::io::Write::write_all(&mut f, b"\n")?;
    std::io::Write::flush(&mut f)?;
    Ok(dir.join(name))
}

fn forecast(panel: &PanelArgs, opts: &CommonArgs, plot: bool) -> Result<Vec<PathBuf>> {
    let cfg = bootstrap_config(opts)?;
    let pool = io::load_panel(&panel.data, &panel.meta)?;
    let a = assess_all(&pool, &cfg)?;
    let manifest = RunManifest::new("forecast", &cfg, cfg.seed, &[&panel.data, &panel.meta])?;
    let report = ForecastReport::new(&a, cfg.replicates, manifest);
    let mut written = Vec::new();
    match opts.format {
        Format::Json => written.push(write_json(&opts.out_dir, "forecast.json", &report)?),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(create(&opts.out_dir, "forecast.csv")?);
            w.write_record([
                "method",
                "estimate",
                "bootstrap_var",
                "delta_hat",
                "decision",
                "forecast",
            ])?;
            w.write_record(["original", "", "", "", "", &report.forecast1.to_string()])?;
            for r in &a.risk {
                w.write_record([
                    r.estimator.as_str(),
                    &r.alpha_hat.to_string(),
                    &r.bootstrap_var.to_string(),
                    &r.delta_hat.to_string(),
                    &(r.decision as u8).to_string(),
                    &a.forecast2[&r.estimator].to_string(),
                ])?;
            }
            w.flush()?;
            written.push(opts.out_dir.join("forecast.csv"));
        }
    }
    if plot {
        io::write_plot_data(&pool, &a, create(&opts.out_dir, "plot.csv")?)?;
        written.push(opts.out_dir.join("plot.csv"));
    }
    Ok(written)
}

fn simulate(opts: &CommonArgs) -> Result<Vec<PathBuf>> {
    let cfg = sim_config(opts)?;
    let rows = run_monte_carlo(&cfg)?;
    Ok(vec![match opts.format {
        Format::Json => {
            let manifest = RunManifest::new("simulate", &cfg, cfg.seed, &[])?;
            write_json(
                &opts.out_dir,
                "simulation.json",
                &SimulationFile {
                    schema_version: SCHEMA_VERSION,
                    rows,
                    manifest,
                },
            )?
        }
        Format::Csv => {
            io::write_sim_csv(&rows, create(&opts.out_dir, "simulation.csv")?)?;
            opts.out_dir.join("simulation.csv")
        }
    }])
}

fn run_loocv(panel: &PanelArgs, opts: &CommonArgs) -> Result<Vec<PathBuf>> {
    let boot = bootstrap_config(opts)?;
    let cfg = LoocvConfig {
        mode: opts.k.map_or(LoocvMode::Full, LoocvMode::KDraws),
        seed: boot.seed,
        bootstrap: boot,
    };
    let pool = io::load_panel(&panel.data, &panel.meta)?;
    let report = loocv(&pool, &cfg)?;
    Ok(vec![match opts.format {
        Format::Json => {
            let manifest = RunManifest::new("loocv", &cfg, cfg.seed, &[&panel.data, &panel.meta])?;
            write_json(
                &opts.out_dir,
                "loocv.json",
                &LoocvFile {
                    schema_version: SCHEMA_VERSION,
                    report,
                    manifest,
                },
            )?
        }
        Format::Csv => {
            io::write_loocv_csv(&report, create(&opts.out_dir, "loocv.csv")?)?;
            opts.out_dir.join("loocv.csv")
        }
    }])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Forecast { panel, opts, plot } => forecast(panel, opts, *plot),
        Command::Simulate { opts } => simulate(opts),
        Command::Loocv { panel, opts } => run_loocv(panel, opts),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
