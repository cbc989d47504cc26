//! `daas` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use daas_core::fleet::{fleet_to_json, FleetFile};
use daas_core::intake::{
    evaluate, extract_batch, generate_corpus, load_corpus, save_corpus, BackendConfig, ExtractionBackend, LlmBackend,
    PatternBackend, PredictionRecord,
};
use daas_core::routing::{compare_routes, route, Algorithm, CostMode, HeuristicMode, RouteContext};
use daas_core::simulator::{self, SimConfig};
use daas_core::weather::{SafetyLimits, WeatherSample, WeatherSeries};
use daas_core::{io, synth, Execution, SkywayNetwork};

#[derive(Parser)]
#[command(name = "daas", version, about = "Weather-aware drone delivery orchestration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Dijkstra,
    Astar,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Distance,
    Time,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    Admissible,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Pattern,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Shortest route between two stations.
    Route {
        #[arg(long)]
        net: PathBuf,
        /// Weather CSV; calm everywhere when omitted.
        #[arg(long)]
        weather: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        slot: usize,
        #[arg(long, value_enum, default_value = "dijkstra")]
        algo: AlgoArg,
        #[arg(long, value_enum, default_value = "time")]
        cost: CostArg,
        #[arg(long, value_enum, default_value = "admissible")]
        heuristic: HeuristicArg,
        #[arg(long)]
        from: u32,
        #[arg(long)]
        to: u32,
        /// Nominal cruise speed in m/s.
        #[arg(long, default_value_t = 20.0)]
        speed: f64,
    },
    /// Run a simulation config and write its logs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Recompute a report from a flight log.
    Summarize {
        #[arg(long)]
        log: PathBuf,
    },
    /// Synthetic request corpus (JSONL).
    GenCorpus {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract structured requests from a corpus.
    Parse {
        #[arg(long, value_enum, default_value = "pattern")]
        backend: BackendArg,
        #[arg(long)]
        net: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against the gold corpus.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Random connected network (JSON).
    GenNet {
        #[arg(long)]
        stations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded weather series for a network (CSV).
    GenWeather {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Idle, fully charged fleet based at recharge stations (JSON).
    GenFleet {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        drones: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_net(path: &Path) -> Result<SkywayNetwork> {
    SkywayNetwork::load(path).with_context(|| format!("loading network {}", path.display()))
}

/// Write to `out` atomically, or print to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Route { net, weather, slot, algo, cost, heuristic, from, to, speed } => {
            let net = load_net(&net)?;
            let weather = match weather {
                Some(p) => WeatherSeries::load_csv(&p, &net.station_ids())
                    .with_context(|| format!("loading weather {}", p.display()))?,
                None => WeatherSeries::uniform(&net.station_ids(), slot + 1, WeatherSample::CALM),
            };
            let ctx = RouteContext::new(&net, &weather, slot, SafetyLimits::default());
            let mode = match cost {
                CostArg::Distance => CostMode::Distance,
                CostArg::Time => CostMode::WeatherTime,
            };
            let h = match heuristic {
                HeuristicArg::Admissible => HeuristicMode::Admissible,
                HeuristicArg::Paper => HeuristicMode::PaperNominal,
            };
            let json = match algo {
                AlgoArg::Both => {
                    let report = compare_routes(&ctx, mode, h, speed, from, to)?;
                    eprintln!("{}", report.describe());
                    serde_json::to_string_pretty(&report)?
                }
                AlgoArg::Dijkstra | AlgoArg::Astar => {
                    let a = if matches!(algo, AlgoArg::Dijkstra) { Algorithm::Dijkstra } else { Algorithm::AStar(h) };
                    serde_json::to_string_pretty(&route(&ctx, a, mode, speed, from, to)?)?
                }
            };
            println!("{json}");
        }
        Command::Simulate { config, seed, output_dir } => {
            let base = config.parent().unwrap_or(Path::new("."));
            let mut cfg = SimConfig::load(&config)?.resolve_paths(base);
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let (outcome, dir) = simulator::run_config(&cfg)?;
            let r = &outcome.report;
            eprintln!(
                "{} of {} requests delivered ({:.1} %), {:.1} km flown; logs in {}",
                r.requests_completed,
                r.requests_total,
                100.0 * r.completion_rate,
                r.total_distance_km,
                dir.display()
            );
            println!("{}", serde_json::to_string_pretty(r)?);
        }
        Command::Summarize { log } => {
            let report = simulator::summarize(&log)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::GenCorpus { net, count, seed, out } => {
            let net = load_net(&net)?;
            let records = generate_corpus(&net, count, seed)?;
            save_corpus(&out, &records)?;
            eprintln!("wrote {} requests to {}", records.len(), out.display());
        }
        Command::Parse { backend, net, input, out } => {
            let net = load_net(&net)?;
            let backend: Box<dyn ExtractionBackend> = match backend {
                BackendArg::Pattern => Box::new(PatternBackend { net: &net }),
                BackendArg::Llm => Box::new(LlmBackend::http(BackendConfig::from_env()?, &net)),
            };
            let corpus = load_corpus(&input)?;
            let texts: Vec<&str> = corpus.iter().map(|r| r.free_text.as_str()).collect();
            let (results, errors) = extract_batch(backend.as_ref(), &texts, Execution::Parallel, backend.concurrency());
            let complete = results.iter().filter(|r| r.is_complete()).count();
            let preds: Vec<PredictionRecord> = corpus
                .iter()
                .zip(results)
                .map(|(r, result)| PredictionRecord { request_id: r.structured.request_id, result })
                .collect();
            io::write_jsonl(&out, &preds)?;
            eprintln!("{}: {complete} of {} complete, {errors} backend errors", backend.name(), preds.len());
            println!(
                "{}",
                serde_json::json!({ "backend": backend.name(), "records": preds.len(), "complete": complete, "backend_errors": errors })
            );
        }
        Command::Eval { pred, gold } => {
            let preds: Vec<PredictionRecord> = io::read_jsonl(&pred)?;
            let golds = load_corpus(&gold)?;
            for (i, (p, g)) in preds.iter().zip(&golds).enumerate() {
                if p.request_id != g.structured.request_id {
                    bail!(
                        "line {}: prediction for request {} but gold is request {}",
                        i + 1,
                        p.request_id,
                        g.structured.request_id
                    );
                }
            }
            let results: Vec<_> = preds.into_iter().map(|p| p.result).collect();
            let golds: Vec<_> = golds.into_iter().map(|g| g.structured).collect();
            let report = evaluate(&results, &golds)?;
            eprintln!("exact match {:.4}", report.exact_match);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::GenNet { stations, seed, out } => {
            let net = synth::gen_network(stations, seed)?;
            let mut json = net.to_json();
            json.push('\n');
            emit(out.as_deref(), &json)?;
            eprintln!("{} stations, {} corridors", net.len(), net.edges().len());
        }
        Command::GenWeather { net, slots, seed, out } => {
            let net = load_net(&net)?;
            let w = synth::gen_weather(&net, slots, seed)?;
            emit(out.as_deref(), &w.to_csv_string())?;
        }
        Command::GenFleet { net, drones, seed, out } => {
            let net = load_net(&net)?;
            let fleet = synth::gen_fleet(&net, drones, seed)?;
            // Round-trip check so the emitted file is always loadable.
            let mut json = fleet_to_json(&fleet);
            FleetFile::from_json_str(&json)?;
            json.push('\n');
            emit(out.as_deref(), &json)?;
        }
    }
    Ok(())
}
