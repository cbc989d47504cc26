//! Deterministic discrete-event simulation of the fleet over weather slots.

mod engine;
mod log;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::{ChargePolicy, Drone, EnergyModel, FleetError, FleetFile, MaintenancePolicy};
use crate::intake::{load_corpus, IntakeError, RequestRecord};
use crate::io::{self, IoError};
use crate::skyway::{NetworkError, SkywayNetwork, StationId};
use crate::weather::{SafetyLimits, WeatherError, WeatherSeries};

pub use engine::Simulation;
pub use log::{EventKind, EventRecord, FlightLogEntry, LegStatus, LoggedLegKind, SimReport, SlotSummary};

pub const FLIGHTS_FILE: &str = "flights.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disturbance {
    pub slot: usize,
    pub station: StationId,
}

fn default_slot_duration() -> f64 {
    2_592_000.0
}
fn default_slot_count() -> usize {
    48
}
fn default_max_wait() -> f64 {
    86_400.0
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("sim-out")
}

/// Simulation config file. Paths are relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub network: PathBuf,
    pub weather: PathBuf,
    pub fleet: PathBuf,
    pub requests: PathBuf,
    #[serde(default = "default_slot_duration")]
    pub slot_duration_s: f64,
    #[serde(default = "default_slot_count")]
    pub slot_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub limits: SafetyLimits,
    /// Falls back to the fleet file's model, then the defaults.
    #[serde(default)]
    pub energy: Option<EnergyModel>,
    #[serde(default)]
    pub maintenance: Option<MaintenancePolicy>,
    #[serde(default)]
    pub charging: Option<ChargePolicy>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Relative arrival weight per slot; uniform when absent.
    #[serde(default)]
    pub slot_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    /// How long a request may wait for a drone before it fails.
    #[serde(default = "default_max_wait")]
    pub max_wait_s: f64,
}

impl SimConfig {
    pub fn from_json_str(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_json_str(&io::read_to_string(path)?)
    }

    /// Make every path absolute against `base`.
    pub fn resolve_paths(mut self, base: &Path) -> Self {
        for p in [&mut self.network, &mut self.weather, &mut self.fleet, &mut self.requests, &mut self.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }
}

/// Resolved numeric parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub slot_duration_s: f64,
    pub slot_count: usize,
    pub seed: u64,
    pub limits: SafetyLimits,
    pub energy: EnergyModel,
    pub maintenance: MaintenancePolicy,
    pub charging: ChargePolicy,
    pub slot_weights: Option<Vec<f64>>,
    pub disturbances: Vec<Disturbance>,
    pub max_wait_s: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            slot_duration_s: default_slot_duration(),
            slot_count: default_slot_count(),
            seed: 0,
            limits: SafetyLimits::default(),
            energy: EnergyModel::default(),
            maintenance: MaintenancePolicy::default(),
            charging: ChargePolicy::default(),
            slot_weights: None,
            disturbances: Vec::new(),
            max_wait_s: default_max_wait(),
        }
    }
}

/// Everything a run reads, already loaded and validated.
#[derive(Debug, Clone)]
pub struct SimInputs {
    pub net: SkywayNetwork,
    pub weather: WeatherSeries,
    pub fleet: Vec<Drone>,
    pub requests: Vec<RequestRecord>,
    pub params: SimParams,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("weather: {0}")]
    Weather(#[from] WeatherError),
    #[error("fleet: {0}")]
    Fleet(#[from] FleetError),
    #[error("requests: {0}")]
    Intake(#[from] IntakeError),
    #[error("slot {slot} out of range (run has {slot_count} slots)")]
    SlotOutOfRange { slot: usize, slot_count: usize },
    #[error("unknown station {0}")]
    UnknownStation(StationId),
}

impl SimInputs {
    /// Load and validate every input named by `cfg` (paths already resolved).
    pub fn load(cfg: &SimConfig) -> Result<Self, SimError> {
        let net = SkywayNetwork::load(&cfg.network)?;
        let weather = WeatherSeries::load_csv(&cfg.weather, &net.station_ids())?;
        let fleet_file = FleetFile::load(&cfg.fleet)?;
        fleet_file.check_against(&net)?;
        let requests = load_corpus(&cfg.requests)?;
        let params = SimParams {
            slot_duration_s: cfg.slot_duration_s,
            slot_count: cfg.slot_count,
            seed: cfg.seed,
            limits: cfg.limits,
            energy: cfg.energy.or(fleet_file.energy_model).unwrap_or_default(),
            maintenance: cfg.maintenance.or(fleet_file.maintenance).unwrap_or_default(),
            charging: cfg.charging.or(fleet_file.charging).unwrap_or_default(),
            slot_weights: cfg.slot_weights.clone(),
            disturbances: cfg.disturbances.clone(),
            max_wait_s: cfg.max_wait_s,
        };
        let inputs = SimInputs { net, weather, fleet: fleet_file.drones, requests, params };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let p = &self.params;
        if !(p.slot_duration_s.is_finite() && p.slot_duration_s > 0.0) {
            return Err(SimError::Config(format!("slot_duration_s must be positive, got {}", p.slot_duration_s)));
        }
        if p.slot_count == 0 || p.slot_count > self.weather.slot_count() {
            return Err(SimError::Config(format!(
                "slot_count {} must be in 1..={} (weather slots)",
                p.slot_count,
                self.weather.slot_count()
            )));
        }
        if !(p.max_wait_s >= 0.0 && p.max_wait_s.is_finite()) {
            return Err(SimError::Config(format!("max_wait_s must be >= 0, got {}", p.max_wait_s)));
        }
        if let Some(w) = &p.slot_weights {
            if w.len() != p.slot_count
                || w.iter().any(|x| !(x.is_finite() && *x >= 0.0))
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(SimError::Config(
                    "slot_weights needs one non-negative weight per slot, not all zero".into(),
                ));
            }
        }
        p.limits.validate()?;
        p.energy.validate()?;
        p.maintenance.validate()?;
        if !(p.charging.charge_rate_wh_per_s > 0.0 && p.charging.degradation_per_cycle >= 0.0) {
            return Err(SimError::Config(format!("invalid charging policy {:?}", p.charging)));
        }
        for d in &p.disturbances {
            if d.slot >= p.slot_count {
                return Err(SimError::SlotOutOfRange { slot: d.slot, slot_count: p.slot_count });
            }
            if !self.net.contains(d.station) {
                return Err(SimError::UnknownStation(d.station));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for d in &self.fleet {
            d.validate().map_err(|e| SimError::Fleet(FleetError::Validation(e)))?;
            if !ids.insert(d.id) {
                return Err(SimError::Fleet(FleetError::Validation(format!("duplicate drone id {}", d.id))));
            }
            if !self.net.contains(d.current_station) {
                return Err(SimError::UnknownStation(d.current_station));
            }
        }
        let mut req_ids = std::collections::BTreeSet::new();
        for r in &self.requests {
            r.structured.validate(&self.net).map_err(SimError::Config)?;
            if !req_ids.insert(r.structured.request_id) {
                return Err(SimError::Config(format!("duplicate request id {}", r.structured.request_id)));
            }
            if let Some(t) = r.arrival_s {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(SimError::Config(format!(
                        "request {}: arrival_s must be >= 0",
                        r.structured.request_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Result of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub report: SimReport,
    pub flights: Vec<FlightLogEntry>,
    pub events: Vec<EventRecord>,
    pub fleet: Vec<Drone>,
}

impl SimOutcome {
    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.display().to_string(), source })?;
        io::write_jsonl(&dir.join(FLIGHTS_FILE), &self.flights)?;
        io::write_jsonl(&dir.join(EVENTS_FILE), &self.events)?;
        let report = serde_json::to_string_pretty(&self.report).expect("serializable report");
        io::write_atomic(&dir.join(REPORT_FILE), format!("{report}\n").as_bytes())?;
        Ok(())
    }
}

/// Load the config at `path`, run to completion and write the logs.
/// Nothing is written if any input fails to load.
pub fn run(path: &Path) -> Result<(SimOutcome, PathBuf), SimError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = SimConfig::load(path)?.resolve_paths(base);
    run_config(&cfg)
}

/// Run an already-resolved config and write the logs.
pub fn run_config(cfg: &SimConfig) -> Result<(SimOutcome, PathBuf), SimError> {
    let inputs = SimInputs::load(cfg)?;
    let outcome = Simulation::new(inputs)?.run_to_end().finish();
    outcome.write(&cfg.output_dir)?;
    Ok((outcome, cfg.output_dir.clone()))
}

/// Recompute the report from a flight log file.
pub fn summarize(flight_log: &Path) -> Result<SimReport, SimError> {
    let entries: Vec<FlightLogEntry> = io::read_jsonl(flight_log)?;
    Ok(SimReport::from_entries(&entries))
}
