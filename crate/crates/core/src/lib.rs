//! Weather-aware drone-as-a-service orchestration.
//!
//! The crate is organised bottom-up:
//!
//! * [`skyway`] holds the station graph and the Euclidean heuristic.
//! * [`weather`] ingests per-slot station weather and turns wind into ground speed.
//! * [`routing`] runs Dijkstra and A* over distance or weather-adjusted time.
//! * [`fleet`] models drone batteries, degradation and maintenance.
//! * [`intake`] converts free-text requests into structured ones and scores extractors.
//! * [`planner`] selects a drone for a request or composes several with handoffs.
//! * [`simulator`] runs the long-horizon event-driven fleet simulation.
//! * [`synth`] generates seeded networks, weather and fleets for experiments.
//!
//! Batch entry points take an [`Execution`] so callers can pick the rayon pool
//! or the plain sequential loop at run time. Without the `parallel` feature
//! both variants run sequentially.

pub mod exec;
pub mod fleet;
pub mod intake;
pub mod io;
pub mod planner;
pub mod routing;
pub mod simulator;
pub mod skyway;
pub mod synth;
pub mod weather;

pub use exec::Execution;
pub use skyway::{SkywayNetwork, Station, StationId};
