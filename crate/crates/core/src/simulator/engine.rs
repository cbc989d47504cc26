//! Single-threaded event loop. Planning queries inside an event may fan out
//! through [`Execution`]; their results are merged in fleet order, so the
//! logs do not depend on the execution mode.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::log::{EventKind, EventRecord, FlightLogEntry, LegStatus, LoggedLegKind, SimReport};
use super::{SimError, SimInputs, SimOutcome, SimParams};
use crate::exec::Execution;
use crate::fleet::{Drone, DroneId, DroneStatus, FlownLeg, MaintenanceEvent};
use crate::intake::StructuredRequest;
use crate::planner::{compose, DeliveryPlan, LegKind};
use crate::routing::{dijkstra, edge_cost, CostMode, EdgeCost, RouteContext, RoutingError};
use crate::skyway::{SkywayNetwork, StationId};
use crate::weather::WeatherSeries;

static NO_CLOSURES: BTreeSet<StationId> = BTreeSet::new();

#[derive(Debug, Clone)]
enum Event {
    Disturbance { slot: usize, station: StationId },
    MaintenanceEnd { drone: DroneId },
    RechargeComplete { drone: DroneId, dt_s: f64 },
    NodeArrival { drone: DroneId },
    Handoff { req: usize, station: StationId },
    LegDeparture { drone: DroneId },
    RequestArrival { req: usize },
    RequestExpired { req: usize, token: u64 },
}

impl Event {
    /// Same-time ordering: closures first, then freed drones, then flights,
    /// then new demand.
    fn rank(&self) -> u8 {
        match self {
            Event::Disturbance { .. } => 0,
            Event::MaintenanceEnd { .. } => 1,
            Event::RechargeComplete { .. } => 2,
            Event::NodeArrival { .. } => 3,
            Event::Handoff { .. } => 4,
            Event::LegDeparture { .. } => 5,
            Event::RequestArrival { .. } => 6,
            Event::RequestExpired { .. } => 7,
        }
    }
}

struct Scheduled {
    time: f64,
    rank: u8,
    seq: u64,
    event: Event,
}

impl Scheduled {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.rank, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Pending,
    Waiting,
    InFlight,
    Completed,
    Failed,
}

struct RequestState {
    req: StructuredRequest,
    arrival_slot: usize,
    phase: Phase,
    /// Where the package currently sits.
    at: StationId,
    legs_logged: usize,
    last_error: Option<String>,
    token: u64,
}

#[derive(Debug, Clone)]
struct PlannedLeg {
    req: usize,
    kind: LoggedLegKind,
    path: Vec<StationId>,
    payload_kg: f64,
}

#[derive(Debug, Clone, Copy)]
struct Hop {
    to: StationId,
    distance_km: f64,
    duration_s: f64,
}

#[derive(Debug)]
struct ActiveLeg {
    plan: PlannedLeg,
    target: StationId,
    from: StationId,
    depart_s: f64,
    slot: usize,
    flown: Vec<StationId>,
    remaining: VecDeque<StationId>,
    distance_km: f64,
    energy_wh: f64,
    rerouted: bool,
    hop: Option<Hop>,
}

#[derive(Debug, Default)]
struct Duty {
    queue: VecDeque<PlannedLeg>,
    active: Option<ActiveLeg>,
}

/// A run in progress.
pub struct Simulation {
    net: SkywayNetwork,
    weather: WeatherSeries,
    params: SimParams,
    exec: Execution,
    drones: BTreeMap<DroneId, Drone>,
    duties: BTreeMap<DroneId, Duty>,
    requests: Vec<RequestState>,
    waiting: Vec<usize>,
    closures: BTreeMap<usize, BTreeSet<StationId>>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    now: f64,
    flights: Vec<FlightLogEntry>,
    records: Vec<EventRecord>,
    last_entry: BTreeMap<DroneId, usize>,
}

impl Simulation {
    pub fn new(inputs: SimInputs) -> Result<Self, SimError> {
        inputs.validate()?;
        let SimInputs { net, weather, fleet, requests, params } = inputs;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let weights = match &params.slot_weights {
            Some(w) => Some(WeightedIndex::new(w).map_err(|e| SimError::Config(format!("slot_weights: {e}")))?),
            None => None,
        };
        let mut sim = Simulation {
            net,
            weather,
            exec: Execution::default(),
            drones: fleet.into_iter().map(|d| (d.id, d)).collect(),
            duties: BTreeMap::new(),
            requests: Vec::with_capacity(requests.len()),
            waiting: Vec::new(),
            closures: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            flights: Vec::new(),
            records: Vec::new(),
            last_entry: BTreeMap::new(),
            params,
        };
        for (idx, r) in requests.into_iter().enumerate() {
            let arrival = match r.arrival_s {
                Some(t) => t,
                None => {
                    let slot = match &weights {
                        Some(w) => w.sample(&mut rng),
                        None => rng.random_range(0..sim.params.slot_count),
                    };
                    let offset: f64 = rng.random_range(0.0..1.0);
                    (slot as f64 + offset) * sim.params.slot_duration_s
                }
            };
            sim.requests.push(RequestState {
                arrival_slot: sim.slot_of(arrival),
                at: r.structured.start_node,
                req: r.structured,
                phase: Phase::Pending,
                legs_logged: 0,
                last_error: None,
                token: 0,
            });
            sim.schedule(arrival, Event::RequestArrival { req: idx });
        }
        for d in sim.params.disturbances.clone() {
            sim.schedule(
                d.slot as f64 * sim.params.slot_duration_s,
                Event::Disturbance { slot: d.slot, station: d.station },
            );
        }
        Ok(sim)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn fleet(&self) -> impl Iterator<Item = &Drone> {
        self.drones.values()
    }

    /// Close every corridor at `station` for `slot`, effective from the
    /// later of now and the slot's start.
    pub fn inject_disturbance(&mut self, slot: usize, station: StationId) -> Result<(), SimError> {
        if slot >= self.params.slot_count {
            return Err(SimError::SlotOutOfRange { slot, slot_count: self.params.slot_count });
        }
        if !self.net.contains(station) {
            return Err(SimError::UnknownStation(station));
        }
        let at = (slot as f64 * self.params.slot_duration_s).max(self.now);
        self.schedule(at, Event::Disturbance { slot, station });
        Ok(())
    }

    /// Process every event scheduled at or before `t_s`.
    pub fn run_until(&mut self, t_s: f64) -> &mut Self {
        while self.queue.peek().is_some_and(|Reverse(s)| s.time <= t_s) {
            self.step();
        }
        self
    }

    pub fn run_to_end(mut self) -> Self {
        while !self.queue.is_empty() {
            self.step();
        }
        self
    }

    pub fn finish(self) -> SimOutcome {
        SimOutcome {
            report: SimReport::from_entries(&self.flights),
            flights: self.flights,
            events: self.records,
            fleet: self.drones.into_values().collect(),
        }
    }

    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        let rank = event.rank();
        self.queue.push(Reverse(Scheduled { time, rank, seq: self.seq, event }));
    }

    fn slot_of(&self, t: f64) -> usize {
        ((t / self.params.slot_duration_s).floor().max(0.0) as usize).min(self.params.slot_count - 1)
    }

    fn ctx(&self, t: f64) -> RouteContext<'_> {
        let slot = self.slot_of(t);
        RouteContext::new(&self.net, &self.weather, slot, self.params.limits)
            .with_closures(self.closures.get(&slot).unwrap_or(&NO_CLOSURES))
    }

    fn record(&mut self, time_s: f64, kind: EventKind) -> &mut EventRecord {
        let seq = self.records.len() as u64;
        self.records.push(EventRecord {
            seq,
            time_s,
            kind,
            request_id: None,
            drone_id: None,
            station: None,
            slot: None,
            energy_wh: None,
            battery_wh: None,
            message: None,
        });
        self.records.last_mut().expect("just pushed")
    }

    fn step(&mut self) {
        let Some(Reverse(s)) = self.queue.pop() else { return };
        self.now = s.time;
        let t = s.time;
        match s.event {
            Event::Disturbance { slot, station } => {
                self.closures.entry(slot).or_default().insert(station);
                let r = self.record(t, EventKind::RouteDisturbance);
                r.station = Some(station);
                r.slot = Some(slot);
                r.message = Some(format!("corridors at station {station} closed for slot {slot}"));
            }
            Event::RequestArrival { req } => {
                let (id, start) = (self.requests[req].req.request_id, self.requests[req].req.start_node);
                let slot = self.slot_of(t);
                let r = self.record(t, EventKind::RequestArrival);
                r.request_id = Some(id);
                r.station = Some(start);
                r.slot = Some(slot);
                self.enqueue(req, t);
            }
            Event::Handoff { req, station } => {
                let id = self.requests[req].req.request_id;
                let r = self.record(t, EventKind::Handoff);
                r.request_id = Some(id);
                r.station = Some(station);
                self.requests[req].at = station;
                self.enqueue(req, t);
            }
            Event::RequestExpired { req, token } => self.expire(req, token, t),
            Event::LegDeparture { drone } => self.depart(drone, t),
            Event::NodeArrival { drone } => self.arrive_at_node(drone, t),
            Event::RechargeComplete { drone, dt_s } => self.complete_recharge(drone, dt_s, t),
            Event::MaintenanceEnd { drone } => self.end_maintenance(drone, t),
        }
    }

    fn enqueue(&mut self, req: usize, t: f64) {
        let state = &mut self.requests[req];
        state.phase = Phase::Waiting;
        state.token += 1;
        let token = state.token;
        self.waiting.push(req);
        self.schedule(t + self.params.max_wait_s, Event::RequestExpired { req, token });
        self.retry_waiting(t);
    }

    fn try_plan(&self, req: usize, t: f64) -> Result<DeliveryPlan, String> {
        let state = &self.requests[req];
        let leg_req = StructuredRequest { start_node: state.at, ..state.req.clone() };
        let fleet: Vec<Drone> = self.drones.values().cloned().collect();
        compose(&fleet, &leg_req, &self.ctx(t), &self.params.energy, t, self.exec).map_err(|e| e.to_string())
    }

    /// Plan waiting requests in arrival order against the current fleet.
    fn retry_waiting(&mut self, t: f64) {
        let no_idle = !self.drones.values().any(|d| d.status == DroneStatus::Idle);
        for req in self.waiting.clone() {
            if self.requests[req].phase != Phase::Waiting {
                continue;
            }
            if no_idle {
                self.requests[req].last_error.get_or_insert_with(|| "no idle drone".to_string());
                continue;
            }
            match self.try_plan(req, t) {
                Ok(plan) => self.commit(req, &plan, t),
                Err(msg) => self.requests[req].last_error = Some(msg),
            }
        }
        let requests = &self.requests;
        self.waiting.retain(|&r| requests[r].phase == Phase::Waiting);
    }

    /// Reserve the first drone of `plan` and send it off. Later segments are
    /// planned again at the handoff station.
    fn commit(&mut self, req: usize, plan: &DeliveryPlan, t: f64) {
        let first = plan.legs[0].drone_id;
        let queue: VecDeque<PlannedLeg> = plan
            .legs
            .iter()
            .take_while(|l| l.drone_id == first)
            .map(|l| PlannedLeg {
                req,
                kind: match l.kind {
                    LegKind::Positioning => LoggedLegKind::Positioning,
                    LegKind::Delivery => LoggedLegKind::Delivery,
                },
                path: l.route.node_sequence.clone(),
                payload_kg: l.payload_kg,
            })
            .collect();
        self.requests[req].phase = Phase::InFlight;
        self.drones.get_mut(&first).expect("planned drone exists").status = DroneStatus::Enroute;
        self.duties.insert(first, Duty { queue, active: None });
        self.schedule(t, Event::LegDeparture { drone: first });
    }

    fn depart(&mut self, drone: DroneId, t: f64) {
        let slot = self.slot_of(t);
        let from = self.drones[&drone].current_station;
        let duty = self.duties.get_mut(&drone).expect("departing drone has a duty");
        let plan = duty.queue.pop_front().expect("duty has a queued leg");
        debug_assert_eq!(plan.path[0], from);
        let active = ActiveLeg {
            target: *plan.path.last().expect("non-empty path"),
            remaining: plan.path[1..].iter().copied().collect(),
            plan,
            from,
            depart_s: t,
            slot,
            flown: vec![from],
            distance_km: 0.0,
            energy_wh: 0.0,
            rerouted: false,
            hop: None,
        };
        let req = active.plan.req;
        duty.active = Some(active);
        let id = self.requests[req].req.request_id;
        let r = self.record(t, EventKind::LegDeparture);
        r.request_id = Some(id);
        r.drone_id = Some(drone);
        r.station = Some(from);
        r.slot = Some(slot);
        self.advance(drone, t);
    }

    fn active(&self, drone: DroneId) -> &ActiveLeg {
        self.duties[&drone].active.as_ref().expect("drone is flying a leg")
    }

    fn active_mut(&mut self, drone: DroneId) -> &mut ActiveLeg {
        self.duties.get_mut(&drone).and_then(|d| d.active.as_mut()).expect("drone is flying a leg")
    }

    /// At a node: start the next hop, detour around a blocked corridor, or
    /// give up.
    fn advance(&mut self, drone: DroneId, t: f64) {
        loop {
            let d = &self.drones[&drone];
            let leg = self.active(drone);
            let Some(&next) = leg.remaining.front() else {
                self.finish_leg(drone, t, None);
                return;
            };
            let (cur, target, payload) = (d.current_station, leg.target, leg.plan.payload_kg);
            let ctx = self.ctx(t);
            match edge_cost(&ctx, CostMode::WeatherTime, cur, next, d.cruise_speed_ms) {
                Ok(EdgeCost::Passable { leg: hop, .. }) => {
                    let need = self.params.energy.energy_required(d, hop.distance_km, payload).unwrap_or(f64::INFINITY);
                    if need > d.battery_level_wh {
                        let msg = format!(
                            "battery too low for corridor {cur}-{next}: needs {need:.1} Wh, has {:.1} Wh",
                            d.battery_level_wh
                        );
                        self.finish_leg(drone, t, Some(msg));
                        return;
                    }
                    let h = Hop { to: next, distance_km: hop.distance_km, duration_s: hop.duration_s };
                    self.active_mut(drone).hop = Some(h);
                    self.schedule(t + h.duration_s, Event::NodeArrival { drone });
                    return;
                }
                Ok(EdgeCost::Impassable(reason)) => {
                    let slot = ctx.slot;
                    match dijkstra(&ctx, CostMode::WeatherTime, d.cruise_speed_ms, cur, target) {
                        Ok(detour) => {
                            let need = self
                                .params
                                .energy
                                .energy_required(d, detour.total_distance_km, payload)
                                .unwrap_or(f64::INFINITY);
                            if need > d.battery_level_wh {
                                let msg = format!(
                                    "corridor {cur}-{next} blocked ({reason}); detour via {:?} needs {need:.1} Wh, battery has {:.1} Wh",
                                    detour.node_sequence, d.battery_level_wh
                                );
                                self.finish_leg(drone, t, Some(msg));
                                return;
                            }
                            let id = self.requests[self.active(drone).plan.req].req.request_id;
                            let leg = self.active_mut(drone);
                            leg.remaining = detour.node_sequence[1..].iter().copied().collect();
                            leg.rerouted = true;
                            let r = self.record(t, EventKind::LegDeparture);
                            r.request_id = Some(id);
                            r.drone_id = Some(drone);
                            r.station = Some(cur);
                            r.slot = Some(slot);
                            r.message = Some(format!(
                                "corridor {cur}-{next} blocked ({reason}); rerouted via {:?}",
                                detour.node_sequence
                            ));
                        }
                        Err(RoutingError::NoRoute { .. }) => {
                            let msg = format!(
                                "corridor {cur}-{next} blocked ({reason}) and no passable route from {cur} to {target} in slot {slot}"
                            );
                            self.finish_leg(drone, t, Some(msg));
                            return;
                        }
                        Err(e) => {
                            self.finish_leg(drone, t, Some(e.to_string()));
                            return;
                        }
                    }
                }
                Err(e) => {
                    self.finish_leg(drone, t, Some(e.to_string()));
                    return;
                }
            }
        }
    }

    fn arrive_at_node(&mut self, drone: DroneId, t: f64) {
        let leg = self.active_mut(drone);
        let hop = leg.hop.take().expect("hop in progress");
        let payload = leg.plan.payload_kg;
        let before = self.drones[&drone].clone();
        let flown =
            FlownLeg { distance_km: hop.distance_km, payload_kg: payload, duration_s: hop.duration_s, to: hop.to };
        let mut after = match before.apply_flight(&self.params.energy, flown) {
            Ok(d) => d,
            Err(e) => {
                // The battery was checked before the hop started.
                self.finish_leg(drone, t, Some(e.to_string()));
                return;
            }
        };
        after.status = DroneStatus::Enroute;
        let used = before.battery_level_wh - after.battery_level_wh;
        let level = after.battery_level_wh;
        self.drones.insert(drone, after);
        let leg = self.active_mut(drone);
        leg.remaining.pop_front();
        leg.flown.push(hop.to);
        leg.distance_km += hop.distance_km;
        leg.energy_wh += used;
        let req = leg.plan.req;
        let id = self.requests[req].req.request_id;
        let r = self.record(t, EventKind::NodeArrival);
        r.request_id = Some(id);
        r.drone_id = Some(drone);
        r.station = Some(hop.to);
        r.battery_wh = Some(level);
        self.advance(drone, t);
    }

    fn finish_leg(&mut self, drone: DroneId, t: f64, error: Option<String>) {
        let leg = self.duties.get_mut(&drone).and_then(|d| d.active.take()).expect("drone is flying a leg");
        let d = self.drones.get_mut(&drone).expect("drone exists");
        let station = d.current_station;
        let battery = d.battery_level_wh;
        let req = leg.plan.req;
        let status = match (&error, leg.rerouted) {
            (Some(_), _) => LegStatus::Aborted,
            (None, true) => LegStatus::Rerouted,
            (None, false) => LegStatus::Completed,
        };
        let state = &mut self.requests[req];
        let leg_index = state.legs_logged;
        state.legs_logged += 1;
        let request_id = state.req.request_id;
        self.flights.push(FlightLogEntry {
            request_id,
            drone_id: Some(drone),
            leg_index,
            leg_kind: leg.plan.kind,
            slot: leg.slot,
            from: leg.from,
            to: station,
            path: leg.flown.clone(),
            depart_s: leg.depart_s,
            arrive_s: t,
            distance_km: leg.distance_km,
            duration_s: t - leg.depart_s,
            energy_wh: leg.energy_wh,
            battery_remaining_wh: battery,
            status,
            error_message: error.clone(),
            maintenance_triggered: false,
        });
        self.last_entry.insert(drone, self.flights.len() - 1);
        let r = self.record(t, EventKind::LegArrival);
        r.request_id = Some(request_id);
        r.drone_id = Some(drone);
        r.station = Some(station);
        r.energy_wh = Some(leg.energy_wh);
        r.battery_wh = Some(battery);
        r.message = error.clone();

        if error.is_some() {
            if leg.plan.kind != LoggedLegKind::Return {
                self.requests[req].phase = Phase::Failed;
                if let Some(duty) = self.duties.get_mut(&drone) {
                    duty.queue.clear();
                }
            }
            self.end_duty(drone, req, t);
            return;
        }
        match leg.plan.kind {
            LoggedLegKind::Positioning => self.schedule(t, Event::LegDeparture { drone }),
            LoggedLegKind::Delivery => {
                if station == self.requests[req].req.destination_node {
                    self.requests[req].phase = Phase::Completed;
                    self.requests[req].at = station;
                } else {
                    self.schedule(t, Event::Handoff { req, station });
                }
                self.end_duty(drone, req, t);
            }
            LoggedLegKind::Return => self.end_duty(drone, req, t),
        }
    }

    /// Nearest recharge station by flight time that the battery can reach.
    fn return_leg(&self, drone: &Drone, t: f64) -> Option<Vec<StationId>> {
        let ctx = self.ctx(t);
        let mut best: Option<(f64, StationId, Vec<StationId>)> = None;
        for s in self.net.stations().iter().filter(|s| s.is_recharge) {
            let Ok(p) = dijkstra(&ctx, CostMode::WeatherTime, drone.cruise_speed_ms, drone.current_station, s.id)
            else {
                continue;
            };
            let need = self.params.energy.energy_required(drone, p.total_distance_km, 0.0).unwrap_or(f64::INFINITY);
            if need > drone.battery_level_wh {
                continue;
            }
            if best.as_ref().is_none_or(|b| p.total_duration_s < b.0) {
                best = Some((p.total_duration_s, s.id, p.node_sequence));
            }
        }
        best.map(|b| b.2)
    }

    /// The drone has no more legs: fly home to recharge, start service,
    /// charge, or go idle.
    fn end_duty(&mut self, drone: DroneId, req: usize, t: f64) {
        self.duties.remove(&drone);
        let d = self.drones[&drone].clone();
        let at_recharge = self.net.station(d.current_station).map(|s| s.is_recharge).unwrap_or(false);
        if !at_recharge {
            if let Some(path) = self.return_leg(&d, t) {
                let mut duty = Duty::default();
                duty.queue.push_back(PlannedLeg { req, kind: LoggedLegKind::Return, path, payload_kg: 0.0 });
                self.duties.insert(drone, duty);
                self.drones.get_mut(&drone).expect("drone exists").status = DroneStatus::Enroute;
                self.schedule(t, Event::LegDeparture { drone });
                return;
            }
        }
        let mut d = d;
        d.status = DroneStatus::Idle;
        let (d, event) = d.tick_maintenance(&self.params.maintenance, t);
        self.drones.insert(drone, d);
        if let Some(MaintenanceEvent::Started { until_s, .. }) = event {
            if let Some(&i) = self.last_entry.get(&drone) {
                self.flights[i].maintenance_triggered = true;
            }
            let station = self.drones[&drone].current_station;
            let r = self.record(t, EventKind::MaintenanceStart);
            r.drone_id = Some(drone);
            r.station = Some(station);
            r.message = Some(format!("service due; back at t={until_s}"));
            self.schedule(until_s, Event::MaintenanceEnd { drone });
            return;
        }
        self.charge_or_idle(drone, t);
    }

    fn charge_or_idle(&mut self, drone: DroneId, t: f64) {
        let d = self.drones.get_mut(&drone).expect("drone exists");
        let at_recharge = self.net.station(d.current_station).map(|s| s.is_recharge).unwrap_or(false);
        let dt_s = d.time_to_full_s(&self.params.charging);
        if at_recharge && dt_s > 0.0 {
            d.status = DroneStatus::Charging;
            self.schedule(t + dt_s, Event::RechargeComplete { drone, dt_s });
        } else {
            d.status = DroneStatus::Idle;
            self.retry_waiting(t);
        }
    }

    fn complete_recharge(&mut self, drone: DroneId, dt_s: f64, t: f64) {
        let d = self.drones[&drone].clone();
        let station = self.net.station(d.current_station).expect("validated station").clone();
        let (mut next, stored) =
            d.recharge(&station, dt_s, &self.params.charging).expect("charging only starts at recharge stations");
        next.status = DroneStatus::Idle;
        let level = next.battery_level_wh;
        self.drones.insert(drone, next);
        let r = self.record(t, EventKind::RechargeComplete);
        r.drone_id = Some(drone);
        r.station = Some(station.id);
        r.energy_wh = Some(stored);
        r.battery_wh = Some(level);
        self.retry_waiting(t);
    }

    fn end_maintenance(&mut self, drone: DroneId, t: f64) {
        let (d, event) = self.drones[&drone].tick_maintenance(&self.params.maintenance, t);
        let station = d.current_station;
        self.drones.insert(drone, d);
        let r = self.record(t, EventKind::MaintenanceEnd);
        r.drone_id = Some(drone);
        r.station = Some(station);
        if let Some(MaintenanceEvent::Completed { health, .. }) = event {
            r.message = Some(format!("battery health {health}"));
        }
        self.charge_or_idle(drone, t);
    }

    fn expire(&mut self, req: usize, token: u64, t: f64) {
        let state = &mut self.requests[req];
        if state.phase != Phase::Waiting || state.token != token {
            return;
        }
        state.phase = Phase::Failed;
        let leg_index = state.legs_logged;
        state.legs_logged += 1;
        let msg = format!(
            "no drone took the package at station {} within {} s: {}",
            state.at,
            self.params.max_wait_s,
            state.last_error.as_deref().unwrap_or("no plan found")
        );
        let entry = FlightLogEntry {
            request_id: state.req.request_id,
            drone_id: None,
            leg_index,
            leg_kind: LoggedLegKind::Delivery,
            slot: state.arrival_slot,
            from: state.at,
            to: state.at,
            path: vec![state.at],
            depart_s: t,
            arrive_s: t,
            distance_km: 0.0,
            duration_s: 0.0,
            energy_wh: 0.0,
            battery_remaining_wh: 0.0,
            status: LegStatus::Aborted,
            error_message: Some(msg.clone()),
            maintenance_triggered: false,
        };
        let (id, at) = (state.req.request_id, state.at);
        self.flights.push(entry);
        self.waiting.retain(|&r| r != req);
        let r = self.record(t, EventKind::RequestExpired);
        r.request_id = Some(id);
        r.station = Some(at);
        r.message = Some(msg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::tests::drone;
    use crate::intake::RequestRecord;
    use crate::skyway::{Edge, Station};
    use crate::weather::WeatherSample;

    fn two_station() -> SimInputs {
        let net = SkywayNetwork::new(
            vec![
                Station { id: 0, x_km: 0.0, y_km: 0.0, is_recharge: true },
                Station { id: 1, x_km: 6.0, y_km: 8.0, is_recharge: false },
            ],
            vec![Edge { a: 0, b: 1, distance_km: 10.0 }],
        )
        .unwrap();
        let weather = WeatherSeries::uniform(&net.station_ids(), 2, WeatherSample::CALM);
        let req = RequestRecord {
            structured: StructuredRequest { request_id: 1, start_node: 1, destination_node: 0, payload_kg: 2.5 },
            free_text: "from node 1 to node 0, 2.5 kg".into(),
            extras: vec![],
            arrival_s: Some(100.0),
        };
        SimInputs {
            net,
            weather,
            fleet: vec![drone()],
            requests: vec![req],
            params: SimParams { slot_duration_s: 1.0e6, slot_count: 2, ..SimParams::default() },
        }
    }

    #[test]
    fn hand_traced_two_station_run() {
        let out = Simulation::new(two_station()).unwrap().run_to_end().finish();
        assert_eq!(out.flights.len(), 2);
        let (p, d) = (&out.flights[0], &out.flights[1]);
        // Positioning 0 -> 1: 10 km at 20 m/s = 500 s, 100 Wh empty.
        assert_eq!(
            (p.leg_kind, p.from, p.to, p.depart_s, p.arrive_s),
            (LoggedLegKind::Positioning, 0, 1, 100.0, 600.0)
        );
        assert_eq!((p.energy_wh, p.battery_remaining_wh), (100.0, 400.0));
        // Delivery 1 -> 0 with 2.5 of 5 kg: 10 * 10 * 1.25 = 125 Wh.
        assert_eq!((d.leg_kind, d.from, d.to, d.depart_s, d.arrive_s), (LoggedLegKind::Delivery, 1, 0, 600.0, 1100.0));
        assert_eq!((d.energy_wh, d.battery_remaining_wh), (125.0, 275.0));
        assert!(out.flights.iter().all(|e| e.status == LegStatus::Completed));
        assert_eq!(out.report.requests_completed, 1);
        assert_eq!(out.report.mean_delivery_duration_s, 1000.0);
        assert_eq!(out.report.total_distance_km, 20.0);
        // 225 Wh recharged at 1 Wh/s, no full cycle yet.
        let recharge = out.events.iter().find(|e| e.kind == EventKind::RechargeComplete).unwrap();
        assert_eq!((recharge.time_s, recharge.energy_wh), (1325.0, Some(225.0)));
        assert_eq!(out.fleet[0].battery_level_wh, 500.0);
        assert_eq!(out.fleet[0].status, DroneStatus::Idle);
    }

    #[test]
    fn zero_requests() {
        let mut inputs = two_station();
        inputs.requests.clear();
        let out = Simulation::new(inputs).unwrap().run_to_end().finish();
        assert!(out.flights.is_empty());
        assert_eq!(out.report.completion_rate, 1.0);
        assert_eq!(out.report.requests_total, 0);
    }

    #[test]
    fn unservable_request_expires_with_null_drone() {
        let mut inputs = two_station();
        inputs.requests[0].structured.payload_kg = 9.0;
        let out = Simulation::new(inputs).unwrap().run_to_end().finish();
        assert_eq!(out.flights.len(), 1);
        let e = &out.flights[0];
        assert_eq!((e.drone_id, e.status), (None, LegStatus::Aborted));
        let msg = e.error_message.as_deref().unwrap();
        assert!(msg.contains("payload"), "{msg}");
        assert_eq!(e.arrive_s, 100.0 + 86_400.0);
        assert_eq!(out.report.requests_failed, 1);
    }

    #[test]
    fn disturbance_slot_out_of_range() {
        let mut sim = Simulation::new(two_station()).unwrap();
        assert!(matches!(sim.inject_disturbance(2, 0), Err(SimError::SlotOutOfRange { slot: 2, slot_count: 2 })));
        assert!(matches!(sim.inject_disturbance(0, 7), Err(SimError::UnknownStation(7))));
        sim.inject_disturbance(1, 1).unwrap();
    }
}
