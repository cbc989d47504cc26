//! Flight and event log records, and the report derived from flight logs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fleet::DroneId;
use crate::skyway::StationId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegStatus {
    Completed,
    Aborted,
    Rerouted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoggedLegKind {
    Positioning,
    Delivery,
    /// Empty flight back to a recharge station after a delivery.
    Return,
}

/// One flown (or refused) leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLogEntry {
    pub request_id: u64,
    /// Absent when the request never got a drone.
    pub drone_id: Option<DroneId>,
    /// Position of this leg among the request's legs.
    pub leg_index: usize,
    pub leg_kind: LoggedLegKind,
    /// Weather slot at departure (arrival slot for requests never flown).
    pub slot: usize,
    pub from: StationId,
    /// Station actually reached.
    pub to: StationId,
    pub path: Vec<StationId>,
    pub depart_s: f64,
    pub arrive_s: f64,
    pub distance_km: f64,
    pub duration_s: f64,
    pub energy_wh: f64,
    pub battery_remaining_wh: f64,
    pub status: LegStatus,
    pub error_message: Option<String>,
    /// Service started when the drone came off this leg.
    pub maintenance_triggered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RequestArrival,
    LegDeparture,
    NodeArrival,
    LegArrival,
    Handoff,
    RechargeComplete,
    MaintenanceStart,
    MaintenanceEnd,
    RouteDisturbance,
    RequestExpired,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub time_s: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone_id: Option<DroneId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<StationId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    /// Energy drawn by a finished leg or stored by a finished charge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_wh: Option<f64>,
    /// Battery level right after the event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_wh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSummary {
    pub slot: usize,
    pub requests_total: usize,
    pub requests_completed: usize,
    pub requests_failed: usize,
    pub completion_rate: f64,
    pub total_distance_km: f64,
    pub mean_delivery_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub requests_total: usize,
    pub requests_completed: usize,
    pub requests_failed: usize,
    pub completion_rate: f64,
    pub total_distance_km: f64,
    /// First departure to final drop-off, over completed requests.
    pub mean_delivery_duration_s: f64,
    /// Only slots in which some request arrived.
    pub per_slot: Vec<SlotSummary>,
    pub maintenance_events: usize,
    pub reroute_events: usize,
}

#[derive(Default)]
struct RequestTally {
    slot: Option<usize>,
    failed: bool,
    first_depart: Option<f64>,
    last_delivery_arrive: Option<f64>,
    distance_km: f64,
}

#[derive(Default)]
struct Totals {
    total: usize,
    completed: usize,
    distance_km: f64,
    duration_sum: f64,
}

impl Totals {
    fn add(&mut self, t: &RequestTally) {
        self.total += 1;
        self.distance_km += t.distance_km;
        if !t.failed {
            self.completed += 1;
            if let (Some(a), Some(b)) = (t.first_depart, t.last_delivery_arrive) {
                self.duration_sum += b - a;
            }
        }
    }

    fn rate(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.completed as f64 / self.total as f64
        }
    }

    fn mean_duration(&self) -> f64 {
        if self.completed == 0 {
            0.0
        } else {
            self.duration_sum / self.completed as f64
        }
    }
}

impl SimReport {
    /// Derive the report from a flight log. A request fails if any of its
    /// non-return legs was aborted; it belongs to the earliest slot among
    /// those legs.
    pub fn from_entries(entries: &[FlightLogEntry]) -> SimReport {
        let mut per_request: BTreeMap<u64, RequestTally> = BTreeMap::new();
        let mut maintenance_events = 0;
        let mut reroute_events = 0;
        for e in entries {
            maintenance_events += usize::from(e.maintenance_triggered);
            reroute_events += usize::from(e.status == LegStatus::Rerouted);
            let t = per_request.entry(e.request_id).or_default();
            t.distance_km += e.distance_km;
            if e.leg_kind == LoggedLegKind::Return {
                continue;
            }
            t.slot = Some(t.slot.map_or(e.slot, |s| s.min(e.slot)));
            if e.status == LegStatus::Aborted {
                t.failed = true;
            }
            if e.drone_id.is_some() {
                t.first_depart = Some(t.first_depart.map_or(e.depart_s, |d| d.min(e.depart_s)));
                if e.leg_kind == LoggedLegKind::Delivery {
                    t.last_delivery_arrive = Some(t.last_delivery_arrive.map_or(e.arrive_s, |a| a.max(e.arrive_s)));
                }
            }
        }
        let mut all = Totals::default();
        let mut slots: BTreeMap<usize, Totals> = BTreeMap::new();
        for t in per_request.values() {
            all.add(t);
            slots.entry(t.slot.unwrap_or(0)).or_default().add(t);
        }
        SimReport {
            requests_total: all.total,
            requests_completed: all.completed,
            requests_failed: all.total - all.completed,
            completion_rate: all.rate(),
            total_distance_km: all.distance_km,
            mean_delivery_duration_s: all.mean_duration(),
            per_slot: slots
                .into_iter()
                .map(|(slot, t)| SlotSummary {
                    slot,
                    requests_total: t.total,
                    requests_completed: t.completed,
                    requests_failed: t.total - t.completed,
                    completion_rate: t.rate(),
                    total_distance_km: t.distance_km,
                    mean_delivery_duration_s: t.mean_duration(),
                })
                .collect(),
            maintenance_events,
            reroute_events,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(
        request_id: u64,
        kind: LoggedLegKind,
        status: LegStatus,
        depart: f64,
        arrive: f64,
        km: f64,
    ) -> FlightLogEntry {
        FlightLogEntry {
            request_id,
            drone_id: Some(1),
            leg_index: 0,
            leg_kind: kind,
            slot: 0,
            from: 0,
            to: 1,
            path: vec![0, 1],
            depart_s: depart,
            arrive_s: arrive,
            distance_km: km,
            duration_s: arrive - depart,
            energy_wh: km * 10.0,
            battery_remaining_wh: 100.0,
            status,
            error_message: None,
            maintenance_triggered: false,
        }
    }

    #[test]
    fn empty_log_is_vacuous_success() {
        let r = SimReport::from_entries(&[]);
        assert_eq!(r.requests_total, 0);
        assert_eq!(r.completion_rate, 1.0);
        assert_eq!(r.mean_delivery_duration_s, 0.0);
        assert!(r.per_slot.is_empty());
    }

    #[test]
    fn one_aborted_entry_fails_request() {
        let mut e = entry(4, LoggedLegKind::Delivery, LegStatus::Aborted, 0.0, 0.0, 0.0);
        e.drone_id = None;
        e.error_message = Some("no drone".into());
        let r = SimReport::from_entries(&[e]);
        assert_eq!((r.requests_total, r.requests_completed, r.requests_failed), (1, 0, 1));
        assert_eq!(r.completion_rate, 0.0);
    }

    #[test]
    fn durations_skip_return_legs() {
        let log = vec![
            entry(1, LoggedLegKind::Positioning, LegStatus::Completed, 10.0, 20.0, 1.0),
            entry(1, LoggedLegKind::Delivery, LegStatus::Rerouted, 20.0, 50.0, 2.0),
            entry(1, LoggedLegKind::Return, LegStatus::Aborted, 50.0, 70.0, 4.0),
        ];
        let r = SimReport::from_entries(&log);
        assert_eq!(r.requests_completed, 1);
        assert_eq!(r.mean_delivery_duration_s, 40.0);
        assert_eq!(r.total_distance_km, 7.0);
        assert_eq!(r.reroute_events, 1);
        assert_eq!(r.per_slot[0].total_distance_km, 7.0);
    }

    #[test]
    fn entry_json_field_names() {
        let v = serde_json::to_value(entry(1, LoggedLegKind::Delivery, LegStatus::Completed, 0.0, 1.0, 1.0)).unwrap();
        for k in [
            "request_id",
            "drone_id",
            "leg_index",
            "from",
            "to",
            "depart_s",
            "arrive_s",
            "distance_km",
            "duration_s",
            "battery_remaining_wh",
            "status",
            "error_message",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["status"], "completed");
    }
}
