mod fit;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use cryochain::coherence::{
    analyze_batch, synth_batch, synth_trace, write_trace, BatchSpec, ExclusionWindow, SynthSpec,
};
use cryochain::data::DataStore;
use cryochain::error::NoiseError;
use cryochain::report::{
    compare, infer_chain, render_comparison_human, render_comparison_machine, render_human,
    render_machine, render_noise_human, render_noise_machine, run_report, NoiseOutcome,
    DEFAULT_DIGITS,
};
use cryochain::scenario::Overrides;
use cryochain::thermal::{calibrate, CalibrationTargets, SolverOptions, Stage, StageTemperatures};
use cryochain::units::{parse_quantity, Dimension};
use cryochain::Error;

#[derive(Parser)]
#[command(
    name = "cryochain",
    version,
    about = "Heat-load, noise and coherence planning for dilution-refrigerator wiring"
)]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Directory with extra or replacement materials/, capacity/ and scenarios/.
    #[arg(long, global = true, env = "CRYOCHAIN_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Print every digit instead of four significant ones.
    #[arg(long, global = true)]
    full_precision: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    /// Comma-separated values, SI units, full precision.
    Machine,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and print flange loads, temperatures and noise results.
    Solve {
        /// Bundled or data-dir scenario name, or a path to a scenario file.
        scenario: String,
        /// TOML file with parameter overrides.
        #[arg(long)]
        overrides: Option<PathBuf>,
    },
    /// Solve several scenarios and print them side by side with deltas to the first.
    Compare {
        #[arg(required = true, num_args = 2..)]
        scenarios: Vec<String>,
    },
    /// Infer the source temperature behind a measured noise level.
    Noise {
        scenario: String,
        #[arg(long)]
        chain: String,
        /// TEMPERATURE@FREQUENCY, e.g. `100mK@6GHz` or `0.1@6` (K and GHz).
        #[arg(long)]
        target: Target,
    },
    /// Fit every trace file in a directory and summarise by label.
    Fit {
        dir: PathBuf,
        /// Leave out traces with timestamps in FROM..TO (seconds); repeatable.
        #[arg(long = "exclude")]
        exclusions: Vec<ExclusionWindow>,
    },
    /// Write synthetic trace files from a TOML spec (one trace, or a batch when `duration` is set).
    Synth {
        spec: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Refit a capacity model so a scenario sits at given temperatures; prints the new file.
    Calibrate {
        scenario: String,
        /// Capacity file to start from; defaults to the scenario's.
        #[arg(long)]
        capacity: Option<String>,
        /// 50K, 4K, CP and MXC temperatures, e.g. `36.038K,3.590K,245.354mK,22.735mK`.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug)]
struct Target {
    temperature: f64,
    frequency: f64,
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (t, f) = s
            .split_once('@')
            .ok_or_else(|| format!("`{s}` must look like TEMPERATURE@FREQUENCY"))?;
        let temperature = bare_or(t, Dimension::Temperature, 1.0)?;
        let frequency = bare_or(f, Dimension::Frequency, 1e9)?;
        if !(temperature > 0.0 && frequency > 0.0) {
            return Err(format!("`{s}`: temperature and frequency must be positive"));
        }
        Ok(Target {
            temperature,
            frequency,
        })
    }
}

/// A bare number is taken in `scale` SI units.
fn bare_or(text: &str, dimension: Dimension, scale: f64) -> Result<f64, String> {
    match text.trim().parse::<f64>() {
        Ok(v) => Ok(v * scale),
        Err(_) => parse_quantity(text, dimension).map_err(|e| format!("`{text}`: {e}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialise") + "\n"
}

fn run(cli: &Cli) -> Result<String, Error> {
    let digits = (!cli.full_precision).then_some(DEFAULT_DIGITS);
    let options = SolverOptions::default();
    let store = || DataStore::from_env_or(cli.data_dir.clone());
    match &cli.command {
        Command::Solve {
            scenario,
            overrides,
        } => {
            let store = store()?;
            let scenario = match overrides {
                None => store.load_scenario(scenario)?,
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                    let overrides: Overrides = toml::from_str(&text).map_err(|e| {
                        Error::Invalid(format!("{}: {}", path.display(), e.message()))
                    })?;
                    let mut doc = match std::path::Path::new(scenario).is_file() {
                        true => cryochain::scenario::ScenarioDocument::parse(
                            &std::fs::read_to_string(scenario)
                                .map_err(|e| Error::io(format!("reading {scenario}"), e))?,
                        )?,
                        false => store.scenario_document(scenario)?,
                    };
                    doc.apply(&overrides)?;
                    doc.validate(&store)?
                }
            };
            let bundle = run_report(&scenario, &store, &options)?;
            Ok(match cli.format {
                Format::Human => render_human(&bundle, digits),
                Format::Machine => render_machine(&bundle),
                Format::Json => json(&bundle),
            })
        }
        Command::Compare { scenarios } => {
            let store = store()?;
            let bundles = scenarios
                .iter()
                .map(|name| run_report(&store.load_scenario(name)?, &store, &options))
                .collect::<Result<Vec<_>, Error>>()?;
            let cmp = compare(&bundles.iter().collect::<Vec<_>>())?;
            Ok(match cli.format {
                Format::Human => render_comparison_human(&cmp, digits),
                Format::Machine => render_comparison_machine(&cmp),
                Format::Json => json(&cmp),
            })
        }
        Command::Noise {
            scenario,
            chain,
            target,
        } => {
            let store = store()?;
            let scenario = store.load_scenario(scenario)?;
            let named = scenario.chain(chain).ok_or_else(|| {
                let known: Vec<&str> = scenario
                    .noise_chains
                    .iter()
                    .map(|c| c.name.as_str())
                    .collect();
                Error::Invalid(format!(
                    "scenario `{}` has no chain `{chain}` (chains: {})",
                    scenario.name,
                    known.join(", ")
                ))
            })?;
            let mut c = named.chain.clone();
            c.frequency = target.frequency;
            let result = infer_chain(chain, &c, target.temperature);
            match &result.outcome {
                NoiseOutcome::Failed { message } => return Err(Error::Invalid(message.clone())),
                NoiseOutcome::Unreachable {
                    floor_occupation,
                    floor_temperature,
                } => {
                    return Err(NoiseError::Unreachable {
                        floor_occupation: *floor_occupation,
                        floor_temperature_k: *floor_temperature,
                    }
                    .into())
                }
                NoiseOutcome::Inferred(_) => {}
            }
            let mut out = match cli.format {
                Format::Human => render_noise_human(&result, digits),
                Format::Machine => render_noise_machine(&result),
                Format::Json => json(&result),
            };
            let own = format!("noise chain `{chain}`");
            let flags: Vec<&String> = scenario
                .assumptions
                .iter()
                .filter(|a| a.contains(&own))
                .collect();
            if cli.format == Format::Human && !flags.is_empty() {
                out.push_str("Assumptions\n");
                for a in flags {
                    out.push_str(&format!("  - {a}\n"));
                }
            }
            Ok(out)
        }
        Command::Fit { dir, exclusions } => {
            let summary = analyze_batch(dir, exclusions)?;
            for s in &summary.skipped {
                eprintln!("warning: skipped {}: {}", s.source, s.reason);
            }
            Ok(match cli.format {
                Format::Human => fit::render_human(&summary, digits),
                Format::Machine => fit::render_machine(&summary),
                Format::Json => json(&summary),
            })
        }
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(spec)
                .map_err(|e| Error::io(format!("reading {}", spec.display()), e))?;
            let bad =
                |e: toml::de::Error| Error::Invalid(format!("{}: {}", spec.display(), e.message()));
            let value: toml::Table = toml::from_str(&text).map_err(bad)?;
            let traces = if value.contains_key("duration") {
                synth_batch(&toml::from_str::<BatchSpec>(&text).map_err(bad)?)
            } else {
                vec![synth_trace(
                    &toml::from_str::<SynthSpec>(&text).map_err(bad)?,
                )]
            };
            std::fs::create_dir_all(out)
                .map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
            let width = traces.len().to_string().len().max(4);
            for (i, t) in traces.iter().enumerate() {
                let name = format!("trace_{i:0width$}_{}.csv", t.kind.name());
                write_trace(&out.join(name), t)?;
            }
            Ok(format!(
                "wrote {} traces to {}\n",
                traces.len(),
                out.display()
            ))
        }
        Command::Calibrate {
            scenario,
            capacity,
            targets,
        } => {
            let store = store()?;
            let scenario = store.load_scenario(scenario)?;
            let base = store.capacity(capacity.as_deref().unwrap_or(&scenario.capacity))?;
            if targets.len() != 4 {
                return Err(Error::Invalid(format!(
                    "--targets needs four temperatures (50K, 4K, CP, MXC), got {}",
                    targets.len()
                )));
            }
            let mut t = StageTemperatures([0.0; 6]);
            for stage in [Stage::RoomTemperature, Stage::Still] {
                t.set(stage, scenario.wiring.settings(stage).nominal_temperature);
            }
            let cooled = [
                Stage::Flange50K,
                Stage::Flange4K,
                Stage::ColdPlate,
                Stage::MixingChamber,
            ];
            for (stage, text) in cooled.into_iter().zip(targets) {
                let v = parse_quantity(text, Dimension::Temperature)
                    .map_err(|e| Error::Invalid(format!("--targets {stage}: {e}")))?;
                t.set(stage, v);
            }
            let model = calibrate(
                &base,
                &scenario.wiring,
                store.materials(),
                &CalibrationTargets { temperatures: t },
            )?;
            Ok(model.to_table_text())
        }
    }
}
