//! Drone state, the energy model, battery wear and maintenance.
//!
//! Every state change returns an updated copy so planners can reason about
//! hypothetical futures on snapshots while the simulator owns the real state.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::skyway::{SkywayNetwork, Station, StationId};

pub type DroneId = u32;

/// Battery health never degrades below this fraction of nominal capacity.
pub const HEALTH_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroneStatus {
    Idle,
    Enroute,
    Charging,
    Maintenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DroneRecord")]
pub struct Drone {
    pub id: DroneId,
    pub home_station: StationId,
    pub current_station: StationId,
    pub cruise_speed_ms: f64,
    pub battery_capacity_wh: f64,
    pub battery_health: f64,
    pub battery_level_wh: f64,
    pub payload_capacity_kg: f64,
    pub range_km: f64,
    pub flight_hours: f64,
    pub status: DroneStatus,
    pub hours_since_service: f64,
    pub maintenance_until_s: Option<f64>,
    /// Energy recharged since the last counted full cycle.
    pub cycle_progress_wh: f64,
}

/// On-disk drone record; everything but the physical ratings is optional.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DroneRecord {
    id: DroneId,
    home_station: StationId,
    current_station: Option<StationId>,
    cruise_speed_ms: f64,
    battery_capacity_wh: f64,
    battery_health: Option<f64>,
    battery_level_wh: Option<f64>,
    payload_capacity_kg: f64,
    range_km: f64,
    #[serde(default)]
    flight_hours: f64,
    status: Option<DroneStatus>,
    #[serde(default)]
    hours_since_service: f64,
    #[serde(default)]
    maintenance_until_s: Option<f64>,
    #[serde(default)]
    cycle_progress_wh: f64,
}

impl TryFrom<DroneRecord> for Drone {
    type Error = String;

    fn try_from(r: DroneRecord) -> Result<Self, String> {
        let health = r.battery_health.unwrap_or(1.0);
        let drone = Drone {
            id: r.id,
            home_station: r.home_station,
            current_station: r.current_station.unwrap_or(r.home_station),
            cruise_speed_ms: r.cruise_speed_ms,
            battery_capacity_wh: r.battery_capacity_wh,
            battery_health: health,
            battery_level_wh: r.battery_level_wh.unwrap_or(r.battery_capacity_wh * health),
            payload_capacity_kg: r.payload_capacity_kg,
            range_km: r.range_km,
            flight_hours: r.flight_hours,
            status: r.status.unwrap_or(DroneStatus::Idle),
            hours_since_service: r.hours_since_service,
            maintenance_until_s: r.maintenance_until_s,
            cycle_progress_wh: r.cycle_progress_wh,
        };
        drone.validate()?;
        Ok(drone)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModel {
    pub base_wh_per_km: f64,
    pub payload_factor: f64,
    pub reserve_fraction: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { base_wh_per_km: 10.0, payload_factor: 0.5, reserve_fraction: 0.2 }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), FleetError> {
        if !(self.base_wh_per_km > 0.0 && self.base_wh_per_km.is_finite()) {
            return Err(FleetError::InvalidModel(format!(
                "base_wh_per_km must be positive, got {}",
                self.base_wh_per_km
            )));
        }
        if !(self.payload_factor >= 0.0 && self.payload_factor.is_finite()) {
            return Err(FleetError::InvalidModel(format!("payload_factor must be >= 0, got {}", self.payload_factor)));
        }
        if !(0.0..1.0).contains(&self.reserve_fraction) {
            return Err(FleetError::InvalidModel(format!(
                "reserve_fraction must be in [0, 1), got {}",
                self.reserve_fraction
            )));
        }
        Ok(())
    }

    fn raw_energy(&self, drone: &Drone, distance_km: f64, payload_kg: f64) -> f64 {
        self.base_wh_per_km * distance_km * (1.0 + self.payload_factor * payload_kg / drone.payload_capacity_kg)
    }

    /// Energy in Wh to fly `distance_km` carrying `payload_kg`.
    pub fn energy_required(&self, drone: &Drone, distance_km: f64, payload_kg: f64) -> Result<f64, FleetError> {
        if payload_kg > drone.payload_capacity_kg {
            return Err(FleetError::PayloadExceedsCapacity {
                drone: drone.id,
                payload_kg,
                capacity_kg: drone.payload_capacity_kg,
            });
        }
        Ok(self.raw_energy(drone, distance_km, payload_kg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChargePolicy {
    pub charge_rate_wh_per_s: f64,
    pub degradation_per_cycle: f64,
}

impl Default for ChargePolicy {
    fn default() -> Self {
        ChargePolicy { charge_rate_wh_per_s: 1.0, degradation_per_cycle: 0.002 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaintenancePolicy {
    pub hours_between_service: f64,
    pub service_duration_s: f64,
    pub health_restored_to: f64,
}

impl Default for MaintenancePolicy {
    fn default() -> Self {
        MaintenancePolicy { hours_between_service: 100.0, service_duration_s: 86_400.0, health_restored_to: 1.0 }
    }
}

impl MaintenancePolicy {
    pub fn validate(&self) -> Result<(), FleetError> {
        let ok = self.hours_between_service > 0.0
            && self.service_duration_s > 0.0
            && self.health_restored_to > 0.0
            && self.health_restored_to <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(FleetError::InvalidModel(format!("invalid maintenance policy {self:?}")))
        }
    }
}

/// One reason a drone cannot take a leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Unfit {
    Unavailable { status: DroneStatus },
    PayloadExceedsCapacity { payload_kg: f64, capacity_kg: f64 },
    RangeExceeded { distance_km: f64, range_km: f64 },
    InsufficientBattery { required_wh: f64, available_wh: f64 },
}

impl fmt::Display for Unfit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unfit::Unavailable { status } => write!(f, "unavailable ({status:?})"),
            Unfit::PayloadExceedsCapacity { payload_kg, capacity_kg } => {
                write!(f, "payload {payload_kg} kg exceeds capacity {capacity_kg} kg")
            }
            Unfit::RangeExceeded { distance_km, range_km } => {
                write!(f, "leg {distance_km:.2} km exceeds range {range_km} km")
            }
            Unfit::InsufficientBattery { required_wh, available_wh } => {
                write!(f, "needs {required_wh:.1} Wh with reserve, has {available_wh:.1} Wh")
            }
        }
    }
}

/// Result of a capability check: empty means the drone can fly it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Feasibility {
    pub reasons: Vec<Unfit>,
}

impl Feasibility {
    pub fn is_ok(&self) -> bool {
        self.reasons.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegDemand {
    pub distance_km: f64,
    pub payload_kg: f64,
}

/// A leg as actually flown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlownLeg {
    pub distance_km: f64,
    pub payload_kg: f64,
    pub duration_s: f64,
    pub to: StationId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MaintenanceEvent {
    Started { drone: DroneId, until_s: f64 },
    Completed { drone: DroneId, health: f64 },
}

#[derive(Debug, Error)]
pub enum FleetError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("malformed fleet document: {0}")]
    Parse(String),
    #[error("invalid fleet: {0}")]
    Validation(String),
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
    #[error("drone {drone}: payload {payload_kg} kg exceeds capacity {capacity_kg} kg")]
    PayloadExceedsCapacity { drone: DroneId, payload_kg: f64, capacity_kg: f64 },
    #[error("drone {drone} cannot fly leg: {}", .reasons.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("; "))]
    InfeasibleLeg { drone: DroneId, reasons: Vec<Unfit> },
    #[error("drone {drone} is at station {station}, which cannot recharge")]
    NotAtRechargeStation { drone: DroneId, station: StationId },
}

impl Drone {
    /// Usable capacity after wear.
    pub fn effective_capacity_wh(&self) -> f64 {
        self.battery_capacity_wh * self.battery_health
    }

    pub fn validate(&self) -> Result<(), String> {
        let id = self.id;
        let positive = [
            ("cruise_speed_ms", self.cruise_speed_ms),
            ("battery_capacity_wh", self.battery_capacity_wh),
            ("payload_capacity_kg", self.payload_capacity_kg),
            ("range_km", self.range_km),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("drone {id}: {name} must be positive, got {v}"));
            }
        }
        if !(HEALTH_FLOOR..=1.0).contains(&self.battery_health) {
            return Err(format!("drone {id}: battery_health {} outside [0.5, 1]", self.battery_health));
        }
        if !(0.0..=self.effective_capacity_wh()).contains(&self.battery_level_wh) {
            return Err(format!(
                "drone {id}: battery_level_wh {} outside [0, {}]",
                self.battery_level_wh,
                self.effective_capacity_wh()
            ));
        }
        if !(self.flight_hours >= 0.0 && self.hours_since_service >= 0.0) {
            return Err(format!("drone {id}: negative flight hours"));
        }
        Ok(())
    }

    /// Trip check over consecutive legs flown without recharging: every leg
    /// within payload and range, and the battery covering the summed energy
    /// plus the reserve margin.
    pub fn can_serve_trip(&self, model: &EnergyModel, legs: &[LegDemand]) -> Feasibility {
        let mut reasons = Vec::new();
        if self.status != DroneStatus::Idle {
            reasons.push(Unfit::Unavailable { status: self.status });
        }
        let mut energy = 0.0;
        let mut payload_flagged = false;
        let mut range_flagged = false;
        for leg in legs {
            if leg.payload_kg > self.payload_capacity_kg && !payload_flagged {
                reasons.push(Unfit::PayloadExceedsCapacity {
                    payload_kg: leg.payload_kg,
                    capacity_kg: self.payload_capacity_kg,
                });
                payload_flagged = true;
            }
            if leg.distance_km > self.range_km && !range_flagged {
                reasons.push(Unfit::RangeExceeded { distance_km: leg.distance_km, range_km: self.range_km });
                range_flagged = true;
            }
            energy += model.raw_energy(self, leg.distance_km, leg.payload_kg);
        }
        let required = energy * (1.0 + model.reserve_fraction);
        if self.battery_level_wh < required {
            reasons.push(Unfit::InsufficientBattery { required_wh: required, available_wh: self.battery_level_wh });
        }
        Feasibility { reasons }
    }

    pub fn can_serve(&self, model: &EnergyModel, leg: LegDemand) -> Feasibility {
        self.can_serve_trip(model, &[leg])
    }

    /// Commit a flown leg: discharge, log hours, move, and go idle.
    ///
    /// Range and reserve are planning margins and are not re-checked here; the
    /// battery must still physically cover the leg.
    pub fn apply_flight(&self, model: &EnergyModel, leg: FlownLeg) -> Result<Drone, FleetError> {
        let mut reasons = Vec::new();
        if matches!(self.status, DroneStatus::Charging | DroneStatus::Maintenance) {
            reasons.push(Unfit::Unavailable { status: self.status });
        }
        if leg.payload_kg > self.payload_capacity_kg {
            reasons.push(Unfit::PayloadExceedsCapacity {
                payload_kg: leg.payload_kg,
                capacity_kg: self.payload_capacity_kg,
            });
        }
        let energy = model.raw_energy(self, leg.distance_km, leg.payload_kg);
        if energy > self.battery_level_wh {
            reasons.push(Unfit::InsufficientBattery { required_wh: energy, available_wh: self.battery_level_wh });
        }
        if !reasons.is_empty() {
            return Err(FleetError::InfeasibleLeg { drone: self.id, reasons });
        }
        let hours = leg.duration_s / 3600.0;
        let mut next = self.clone();
        next.battery_level_wh = (self.battery_level_wh - energy).max(0.0);
        next.flight_hours += hours;
        next.hours_since_service += hours;
        next.current_station = leg.to;
        next.status = DroneStatus::Idle;
        Ok(next)
    }

    /// Charge for `dt_s` seconds at a recharge station.
    ///
    /// Returns the updated drone and the net energy stored. Each nominal
    /// capacity's worth of charge counts one cycle of battery wear, applied
    /// before the level is clamped to the worn capacity.
    pub fn recharge(&self, at: &Station, dt_s: f64, policy: &ChargePolicy) -> Result<(Drone, f64), FleetError> {
        if at.id != self.current_station || !at.is_recharge {
            return Err(FleetError::NotAtRechargeStation { drone: self.id, station: self.current_station });
        }
        let headroom = (self.effective_capacity_wh() - self.battery_level_wh).max(0.0);
        let delivered = (policy.charge_rate_wh_per_s * dt_s.max(0.0)).min(headroom);
        let mut next = self.clone();
        next.cycle_progress_wh += delivered;
        let cycles = (next.cycle_progress_wh / self.battery_capacity_wh).floor();
        if cycles >= 1.0 {
            next.cycle_progress_wh -= cycles * self.battery_capacity_wh;
            next = next.degrade(cycles, policy.degradation_per_cycle);
        }
        next.battery_level_wh = (self.battery_level_wh + delivered).min(next.effective_capacity_wh());
        let stored = next.battery_level_wh - self.battery_level_wh;
        Ok((next, stored))
    }

    /// Seconds needed to fill the battery at `policy`'s rate.
    pub fn time_to_full_s(&self, policy: &ChargePolicy) -> f64 {
        (self.effective_capacity_wh() - self.battery_level_wh).max(0.0) / policy.charge_rate_wh_per_s
    }

    pub fn degrade(&self, cycles: f64, delta_per_cycle: f64) -> Drone {
        let mut next = self.clone();
        next.battery_health = (self.battery_health - cycles * delta_per_cycle).max(HEALTH_FLOOR);
        next.battery_level_wh = next.battery_level_wh.min(next.effective_capacity_wh());
        next
    }

    /// Start a due service or finish one whose time is up.
    pub fn tick_maintenance(&self, policy: &MaintenancePolicy, now_s: f64) -> (Drone, Option<MaintenanceEvent>) {
        let mut next = self.clone();
        match self.status {
            DroneStatus::Maintenance => {
                if self.maintenance_until_s.is_some_and(|until| now_s >= until) {
                    next.status = DroneStatus::Idle;
                    next.maintenance_until_s = None;
                    // Service never lowers health, so the charge level stays valid.
                    next.battery_health = self.battery_health.max(policy.health_restored_to);
                    next.hours_since_service = 0.0;
                    let event = MaintenanceEvent::Completed { drone: self.id, health: next.battery_health };
                    return (next, Some(event));
                }
                (next, None)
            }
            DroneStatus::Idle if self.hours_since_service >= policy.hours_between_service => {
                let until_s = now_s + policy.service_duration_s;
                next.status = DroneStatus::Maintenance;
                next.maintenance_until_s = Some(until_s);
                (next, Some(MaintenanceEvent::Started { drone: self.id, until_s }))
            }
            _ => (next, None),
        }
    }
}

/// Fleet document: a bare list of drones, or an object carrying the drones
/// plus optional model parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FleetFile {
    pub drones: Vec<Drone>,
    pub energy_model: Option<EnergyModel>,
    pub maintenance: Option<MaintenancePolicy>,
    pub charging: Option<ChargePolicy>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FleetDoc {
    List(Vec<Drone>),
    Object {
        drones: Vec<Drone>,
        #[serde(default)]
        energy_model: Option<EnergyModel>,
        #[serde(default)]
        maintenance: Option<MaintenancePolicy>,
        #[serde(default)]
        charging: Option<ChargePolicy>,
    },
}

impl FleetFile {
    pub fn from_json_str(text: &str) -> Result<Self, FleetError> {
        let doc: FleetDoc = serde_json::from_str(text).map_err(|e| FleetError::Parse(e.to_string()))?;
        let file = match doc {
            FleetDoc::List(drones) => FleetFile { drones, ..FleetFile::default() },
            FleetDoc::Object { drones, energy_model, maintenance, charging } => {
                FleetFile { drones, energy_model, maintenance, charging }
            }
        };
        let mut ids = BTreeSet::new();
        for d in &file.drones {
            if !ids.insert(d.id) {
                return Err(FleetError::Validation(format!("duplicate drone id {}", d.id)));
            }
        }
        if let Some(m) = &file.energy_model {
            m.validate()?;
        }
        if let Some(m) = &file.maintenance {
            m.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, FleetError> {
        Self::from_json_str(&io::read_to_string(path)?)
    }

    /// Every drone's stations must exist in `net`.
    pub fn check_against(&self, net: &SkywayNetwork) -> Result<(), FleetError> {
        for d in &self.drones {
            for s in [d.home_station, d.current_station] {
                if !net.contains(s) {
                    return Err(FleetError::Validation(format!("drone {} references unknown station {s}", d.id)));
                }
            }
        }
        Ok(())
    }
}

pub fn fleet_to_json(drones: &[Drone]) -> String {
    serde_json::to_string_pretty(drones).expect("serializable fleet")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn drone() -> Drone {
        Drone {
            id: 1,
            home_station: 0,
            current_station: 0,
            cruise_speed_ms: 20.0,
            battery_capacity_wh: 500.0,
            battery_health: 1.0,
            battery_level_wh: 500.0,
            payload_capacity_kg: 5.0,
            range_km: 40.0,
            flight_hours: 0.0,
            status: DroneStatus::Idle,
            hours_since_service: 0.0,
            maintenance_until_s: None,
            cycle_progress_wh: 0.0,
        }
    }

    fn recharge_station(id: StationId) -> Station {
        Station { id, x_km: 0.0, y_km: 0.0, is_recharge: true }
    }

    #[test]
    fn energy_formula() {
        let d = drone();
        let m = EnergyModel { base_wh_per_km: 10.0, payload_factor: 0.5, reserve_fraction: 0.2 };
        assert_eq!(m.energy_required(&d, 10.0, 0.0).unwrap(), 100.0);
        assert_eq!(m.energy_required(&d, 10.0, 5.0).unwrap(), 150.0);
        assert_eq!(m.energy_required(&d, 0.0, 2.0).unwrap(), 0.0);
        assert!(matches!(m.energy_required(&d, 1.0, 9.0), Err(FleetError::PayloadExceedsCapacity { .. })));
    }

    #[test]
    fn can_serve_reasons() {
        let m = EnergyModel::default();
        let d = drone();
        assert!(d.can_serve(&m, LegDemand { distance_km: 10.0, payload_kg: 1.0 }).is_ok());
        let f = d.can_serve(&m, LegDemand { distance_km: 10.0, payload_kg: 9.0 });
        assert!(matches!(f.reasons[..], [Unfit::PayloadExceedsCapacity { .. }]));

        let m0 = EnergyModel { payload_factor: 0.0, ..m };
        let exact = Drone { battery_level_wh: 100.0, ..drone() };
        let f = exact.can_serve(&m0, LegDemand { distance_km: 10.0, payload_kg: 0.0 });
        assert!(matches!(f.reasons[..], [Unfit::InsufficientBattery { .. }]));

        let far = d.can_serve(&m, LegDemand { distance_km: 60.0, payload_kg: 9.0 });
        assert_eq!(far.reasons.len(), 3);
    }

    #[test]
    fn busy_drones_are_never_ok() {
        let m = EnergyModel::default();
        for status in [DroneStatus::Enroute, DroneStatus::Maintenance, DroneStatus::Charging] {
            let d = Drone { status, ..drone() };
            let f = d.can_serve(&m, LegDemand { distance_km: 1.0, payload_kg: 0.5 });
            assert!(matches!(f.reasons[..], [Unfit::Unavailable { .. }]));
        }
    }

    #[test]
    fn flight_updates_state() {
        let m = EnergyModel { payload_factor: 0.0, ..EnergyModel::default() };
        let d = Drone { battery_level_wh: 200.0, status: DroneStatus::Enroute, ..drone() };
        let after =
            d.apply_flight(&m, FlownLeg { distance_km: 10.0, payload_kg: 1.0, duration_s: 500.0, to: 4 }).unwrap();
        assert_eq!(after.battery_level_wh, 100.0);
        assert!((after.flight_hours - 0.1389).abs() < 1e-4);
        assert_eq!(after.current_station, 4);
        assert_eq!(after.status, DroneStatus::Idle);
        let too_far = d.apply_flight(&m, FlownLeg { distance_km: 30.0, payload_kg: 0.0, duration_s: 1.0, to: 4 });
        assert!(matches!(too_far, Err(FleetError::InfeasibleLeg { .. })));
    }

    #[test]
    fn chained_flights_conserve_energy() {
        let m = EnergyModel::default();
        let mut d = drone();
        let legs = [(3.0, 1.0), (4.5, 2.5), (7.25, 0.0)];
        let mut used = 0.0;
        for (i, &(km, kg)) in legs.iter().enumerate() {
            used += m.energy_required(&d, km, kg).unwrap();
            d = d
                .apply_flight(&m, FlownLeg { distance_km: km, payload_kg: kg, duration_s: 100.0, to: i as StationId })
                .unwrap();
        }
        assert!((500.0 - used - d.battery_level_wh).abs() < 1e-9);
    }

    #[test]
    fn recharge_clamps_and_accumulates() {
        let p = ChargePolicy { charge_rate_wh_per_s: 1.0, degradation_per_cycle: 0.0 };
        let empty = Drone { battery_level_wh: 0.0, ..drone() };
        let (full, stored) = empty.recharge(&recharge_station(0), 600.0, &p).unwrap();
        assert_eq!(full.battery_level_wh, 500.0);
        assert_eq!(stored, 500.0);
        let (same, none) = empty.recharge(&recharge_station(0), 0.0, &p).unwrap();
        assert_eq!(same.battery_level_wh, 0.0);
        assert_eq!(none, 0.0);
        let half = Drone { battery_level_wh: 100.0, ..drone() };
        let slow = ChargePolicy { charge_rate_wh_per_s: 0.5, ..p };
        assert_eq!(half.recharge(&recharge_station(0), 200.0, &slow).unwrap().0.battery_level_wh, 200.0);
    }

    #[test]
    fn recharge_requires_recharge_station() {
        let d = drone();
        let plain = Station { is_recharge: false, ..recharge_station(0) };
        assert!(matches!(
            d.recharge(&plain, 10.0, &ChargePolicy::default()),
            Err(FleetError::NotAtRechargeStation { .. })
        ));
        assert!(matches!(
            d.recharge(&recharge_station(3), 10.0, &ChargePolicy::default()),
            Err(FleetError::NotAtRechargeStation { .. })
        ));
    }

    #[test]
    fn full_cycle_degrades_health() {
        let p = ChargePolicy { charge_rate_wh_per_s: 1.0, degradation_per_cycle: 0.01 };
        let d = Drone { battery_level_wh: 0.0, cycle_progress_wh: 400.0, ..drone() };
        let (after, stored) = d.recharge(&recharge_station(0), 200.0, &p).unwrap();
        assert_eq!(after.battery_health, 0.99);
        assert!((after.cycle_progress_wh - 100.0).abs() < 1e-9);
        assert_eq!(stored, after.battery_level_wh - d.battery_level_wh);
    }

    #[test]
    fn degradation() {
        let d = drone();
        assert!((d.degrade(10.0, 0.002).battery_health - 0.98).abs() < 1e-12);
        let floor = Drone { battery_health: 0.5, battery_level_wh: 250.0, ..drone() };
        assert_eq!(floor.degrade(3.0, 0.1).battery_health, 0.5);
        let worn = d.degrade(100.0, 0.004);
        assert_eq!(worn.battery_health, 0.6);
        assert!((worn.battery_level_wh - 300.0).abs() < 1e-9);
    }

    #[test]
    fn maintenance_cycle() {
        let p =
            MaintenancePolicy { hours_between_service: 100.0, service_duration_s: 3600.0, health_restored_to: 0.95 };
        let almost = Drone { hours_since_service: 99.9, ..drone() };
        assert!(almost.tick_maintenance(&p, 0.0).1.is_none());
        let due = Drone { hours_since_service: 100.1, battery_health: 0.7, battery_level_wh: 300.0, ..drone() };
        let (serviced, ev) = due.tick_maintenance(&p, 50.0);
        assert_eq!(ev, Some(MaintenanceEvent::Started { drone: 1, until_s: 3650.0 }));
        assert_eq!(serviced.status, DroneStatus::Maintenance);
        let m = EnergyModel::default();
        assert!(!serviced.can_serve(&m, LegDemand { distance_km: 1.0, payload_kg: 1.0 }).is_ok());
        assert!(serviced.tick_maintenance(&p, 3000.0).1.is_none());
        let (done, ev) = serviced.tick_maintenance(&p, 3650.0);
        assert!(matches!(ev, Some(MaintenanceEvent::Completed { .. })));
        assert_eq!(done.status, DroneStatus::Idle);
        assert_eq!(done.battery_health, 0.95);
        assert_eq!(done.hours_since_service, 0.0);
    }

    #[test]
    fn fleet_file_defaults_and_forms() {
        let list = r#"[{"id":3,"home_station":2,"cruise_speed_ms":18,"battery_capacity_wh":800,
                        "payload_capacity_kg":4,"range_km":60}]"#;
        let f = FleetFile::from_json_str(list).unwrap();
        let d = &f.drones[0];
        assert_eq!(d.current_station, 2);
        assert_eq!(d.battery_level_wh, 800.0);
        assert_eq!(d.status, DroneStatus::Idle);
        assert!(f.energy_model.is_none());

        let obj = format!(r#"{{"drones":{list},"energy_model":{{"base_wh_per_km":12}}}}"#);
        let f = FleetFile::from_json_str(&obj).unwrap();
        assert_eq!(f.energy_model.unwrap().base_wh_per_km, 12.0);
        assert_eq!(f.energy_model.unwrap().payload_factor, 0.5);

        let bad = list.replace("\"range_km\":60", "\"range_km\":-1");
        assert!(FleetFile::from_json_str(&bad).is_err());
    }

    #[test]
    fn drone_json_round_trip() {
        let d = Drone { maintenance_until_s: Some(12.5), ..drone() };
        let back: Drone = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Fly(f64, f64),
        Charge(f64),
        Degrade(f64),
        Service(f64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0.0f64..30.0, 0.0f64..5.0).prop_map(|(d, p)| Op::Fly(d, p)),
            (0.0f64..2000.0).prop_map(Op::Charge),
            (0.0f64..50.0).prop_map(Op::Degrade),
            (0.0f64..200.0).prop_map(Op::Service),
        ]
    }

    proptest! {
        #[test]
        fn battery_stays_in_bounds_and_ledger_balances(ops in proptest::collection::vec(op(), 1..60)) {
            let m = EnergyModel::default();
            let p = ChargePolicy { charge_rate_wh_per_s: 1.0, degradation_per_cycle: 0.01 };
            let mp = MaintenancePolicy::default();
            let mut d = drone();
            let initial = d.battery_level_wh;
            let (mut charged, mut flown, mut lost) = (0.0, 0.0, 0.0);
            let mut now = 0.0;
            for o in ops {
                now += 100.0;
                match o {
                    Op::Fly(km, kg) => {
                        let e = m.energy_required(&d, km, kg).unwrap();
                        if let Ok(n) = d.apply_flight(&m, FlownLeg { distance_km: km, payload_kg: kg, duration_s: km * 50.0, to: 0 }) {
                            flown += e;
                            d = n;
                        }
                    }
                    Op::Charge(dt) => {
                        if d.status == DroneStatus::Idle {
                            let (n, stored) = d.recharge(&recharge_station(0), dt, &p).unwrap();
                            charged += stored;
                            d = n;
                        }
                    }
                    Op::Degrade(c) => {
                        let before = d.battery_level_wh;
                        d = d.degrade(c, 0.001);
                        lost += before - d.battery_level_wh;
                    }
                    Op::Service(h) => {
                        d.hours_since_service += h;
                        d = d.tick_maintenance(&mp, now).0;
                        d = d.tick_maintenance(&mp, now + mp.service_duration_s).0;
                    }
                }
                prop_assert!(d.battery_level_wh >= 0.0);
                prop_assert!(d.battery_level_wh <= d.effective_capacity_wh() + 1e-9);
            }
            let lhs = initial + charged;
            let rhs = d.battery_level_wh + flown + lost;
            prop_assert!((lhs - rhs).abs() <= 1e-6 * lhs.max(1.0));
        }

        #[test]
        fn can_serve_is_monotone(level in 0.0f64..500.0, extra in 0.0f64..500.0,
                                 payload in 0.0f64..5.0, less in 0.0f64..5.0, km in 0.0f64..50.0) {
            let m = EnergyModel::default();
            let base = Drone { battery_level_wh: level, ..drone() };
            let more = Drone { battery_level_wh: (level + extra).min(500.0), ..drone() };
            let leg = LegDemand { distance_km: km, payload_kg: payload };
            let lighter = LegDemand { distance_km: km, payload_kg: (payload - less).max(0.0) };
            if base.can_serve(&m, leg).is_ok() {
                prop_assert!(more.can_serve(&m, leg).is_ok());
                prop_assert!(base.can_serve(&m, lighter).is_ok());
            }
        }
    }
}
