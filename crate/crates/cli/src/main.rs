use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use egpc::channel::{generate_dataset, ChannelScenario};
use egpc::experiment::{run_experiment, write_results, ExperimentConfig, Sweep};
use egpc::report::{available_figures, emit_plot_data, Figure};
use egpc::{Error, Strategy};

mod verify;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "egpc", version, about = "EP Gaussian process classification for IRS physical-layer authentication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fingerprint dataset from a scenario manifest.
    Generate {
        /// Scenario TOML; defaults are used when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 800)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON file; a TOML manifest is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment from a config file.
    Run {
        /// Experiment TOML; defaults are used when omitted.
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run an experiment over a phase, N_z, CSI-variance or mode sweep.
    Sweep {
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Sweep values; defaults depend on the kind.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write figure tables from a result directory.
    Report {
        results: PathBuf,
        /// Figures to emit (fig4..fig9); every figure the sweep supports when omitted.
        #[arg(long, value_delimiter = ',')]
        figures: Vec<String>,
        /// Output directory; defaults to `<results>/figures`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the quick oracle and property checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the default experiment config.
    Config,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Comma-separated strategy names (random, mes, bald, ro, alu, salu).
    #[arg(long, value_delimiter = ',')]
    strategies: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Phase,
    Nz,
    Csi,
    Mode,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidInput(_) | Error::MissingSweep { .. } => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(m) => Failure::Validation(format!("{}: {m}", p.display())),
            other => other.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    if let Some(r) = overrides.runs {
        config.runs = r;
    }
    if let Some(i) = overrides.iterations {
        config.iterations = i;
    }
    if !overrides.strategies.is_empty() {
        config.strategies = overrides
            .strategies
            .iter()
            .map(|s| s.parse::<Strategy>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(t) = overrides.threads {
        config.threads = t;
    }
    if let Some(o) = &overrides.out {
        config.output_dir = o.clone();
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig) -> Result<(), Failure> {
    config.validate()?;
    eprintln!(
        "running {} condition(s) x {} run(s) x {} strategies, {} iterations",
        config.conditions().len(),
        config.runs,
        config.strategies.len(),
        config.iterations
    );
    let result = run_experiment(config)?;
    write_results(&result, config, &config.output_dir)?;
    let summary = result.summary();
    let last = summary.iter().map(|r| r.iteration).max().unwrap_or(0);
    for r in summary.iter().filter(|r| r.iteration == last) {
        println!(
            "{:<14} {:<6} final R_e {:.4} ± {:.4}",
            r.condition, r.strategy, r.mean_error_rate, r.std_error_rate
        );
    }
    println!("results in {}", config.output_dir.display());
    let failures = result.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{} run(s) failed; partial results written", failures.len())))
    }
}

fn sweep_of(kind: SweepKind, values: &[f64]) -> Result<Sweep, Failure> {
    Ok(match kind {
        SweepKind::Phase => Sweep::Phase { values: values.to_vec() },
        SweepKind::Nz => {
            let values = if values.is_empty() { vec![8.0, 16.0, 32.0, 64.0] } else { values.to_vec() };
            if values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                return Err(Failure::Validation("nz values must be positive integers".into()));
            }
            Sweep::Nz {
                values: values.iter().map(|&v| v as usize).collect(),
            }
        }
        SweepKind::Csi => Sweep::CsiVariance {
            values: if values.is_empty() {
                vec![1.0, 4.0, 8.0, 12.0, 14.0]
            } else {
                values.to_vec()
            },
        },
        SweepKind::Mode => Sweep::Mode,
    })
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            scenario,
            train,
            test,
            seed,
            out,
        } => {
            let scenario = match scenario {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
                    toml::from_str::<ChannelScenario>(&text)
                        .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
                }
                None => ChannelScenario::default(),
            };
            scenario.validate()?;
            if train == 0 || test == 0 {
                return Err(Failure::Validation("--train and --test must be at least 1".into()));
            }
            let ds = generate_dataset(&scenario, train, test, seed)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            ds.save(&out)?;
            let manifest = out.with_extension("toml");
            egpc::channel::write_atomic(&manifest, ds.manifest()?.as_bytes())?;
            println!(
                "{} training and {} test fingerprints -> {} (scenario {})",
                ds.train.len(),
                ds.test.len(),
                out.display(),
                &ds.scenario_hash[..12]
            );
            Ok(())
        }
        Command::Run { config, overrides } => execute(&load_config(config.as_deref(), &overrides)?),
        Command::Sweep {
            config,
            kind,
            values,
            overrides,
        } => {
            let mut config = load_config(config.as_deref(), &overrides)?;
            config.sweep = sweep_of(kind, &values)?;
            execute(&config)
        }
        Command::Report { results, figures, out } => {
            let figures: Vec<Figure> = if figures.is_empty() {
                let config = ExperimentConfig::load(&results.join(egpc::experiment::CONFIG_FILE))?;
                available_figures(&config)
            } else {
                figures.iter().map(|f| f.parse()).collect::<Result<_, _>>()?
            };
            let out = out.unwrap_or_else(|| results.join("figures"));
            for p in emit_plot_data(&results, &figures, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Verify { seed } => {
            if verify::run_all(seed) {
                Ok(())
            } else {
                Err(Failure::Runtime("verification failed".into()))
            }
        }
        Command::Config => {
            print!("{}", ExperimentConfig::default().to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

