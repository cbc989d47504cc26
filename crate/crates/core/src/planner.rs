//! Drone selection for one request and multi-drone composition with
//! handoffs at recharge stations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::fleet::{Drone, DroneId, DroneStatus, EnergyModel, LegDemand, Unfit};
use crate::intake::StructuredRequest;
use crate::routing::{dijkstra, plan_along, CostMode, RouteContext, RoutePlan, RoutingError};
use crate::skyway::StationId;

/// Nominal speed used for the drone-independent backbone search. It is high
/// enough that wind never pushes ground speed below the minimum, so only hard
/// weather limits and closures shape the backbone.
const GATING_ONLY_SPEED_MS: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    /// Empty flight from the drone's station to the pickup point.
    Positioning,
    /// Flight carrying the package.
    Delivery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub drone_id: DroneId,
    pub kind: LegKind,
    pub from: StationId,
    pub to: StationId,
    pub route: RoutePlan,
    pub payload_kg: f64,
    pub depart_s: f64,
    pub arrive_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryPlan {
    pub request_id: u64,
    /// Per drone: optional positioning leg, then its delivery leg.
    pub legs: Vec<Leg>,
    pub handoff_stations: Vec<StationId>,
}

impl DeliveryPlan {
    pub fn delivery_legs(&self) -> impl Iterator<Item = &Leg> {
        self.legs.iter().filter(|l| l.kind == LegKind::Delivery)
    }

    pub fn drones(&self) -> Vec<DroneId> {
        self.delivery_legs().map(|l| l.drone_id).collect()
    }

    pub fn completion_s(&self) -> f64 {
        self.delivery_legs().last().map_or(0.0, |l| l.arrive_s)
    }

    /// Check leg chaining, timing, handoff placement and payload carriage.
    pub fn check_chain(&self, req: &StructuredRequest, ctx: &RouteContext<'_>) -> Result<(), String> {
        let deliveries: Vec<&Leg> = self.delivery_legs().collect();
        let (Some(first), Some(last)) = (deliveries.first(), deliveries.last()) else {
            return Err("plan has no delivery legs".into());
        };
        if first.from != req.start_node || last.to != req.destination_node {
            return Err(format!(
                "plan runs {}->{}, request is {}->{}",
                first.from, last.to, req.start_node, req.destination_node
            ));
        }
        for w in deliveries.windows(2) {
            if w[0].to != w[1].from {
                return Err(format!("delivery legs do not chain at {} / {}", w[0].to, w[1].from));
            }
            if w[1].depart_s < w[0].arrive_s {
                return Err(format!("leg from {} departs before the package arrives", w[1].from));
            }
        }
        let expected: Vec<StationId> = deliveries[..deliveries.len() - 1].iter().map(|l| l.to).collect();
        if expected != self.handoff_stations {
            return Err(format!("handoffs {:?} do not match leg boundaries {expected:?}", self.handoff_stations));
        }
        for &h in &self.handoff_stations {
            if !ctx.net.station(h).map(|s| s.is_recharge).unwrap_or(false) {
                return Err(format!("handoff station {h} cannot recharge"));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, leg) in self.legs.iter().enumerate() {
            if leg.route.origin() != leg.from || leg.route.destination() != leg.to {
                return Err(format!("leg {i} route endpoints do not match"));
            }
            if (leg.arrive_s - leg.depart_s - leg.route.total_duration_s).abs() > 1e-6 * leg.arrive_s.abs().max(1.0) {
                return Err(format!("leg {i} timing does not match its route"));
            }
            if !leg.route.is_consistent(ctx.net, 1e-9) {
                return Err(format!("leg {i} route is inconsistent with the network"));
            }
            match leg.kind {
                LegKind::Delivery => {
                    if leg.payload_kg != req.payload_kg {
                        return Err(format!("leg {i} carries {} kg, request is {} kg", leg.payload_kg, req.payload_kg));
                    }
                    if !seen.insert(leg.drone_id) {
                        return Err(format!("drone {} used twice", leg.drone_id));
                    }
                }
                LegKind::Positioning => {
                    let next = self.legs.get(i + 1);
                    if leg.payload_kg != 0.0
                        || !next.is_some_and(|n| {
                            n.kind == LegKind::Delivery && n.drone_id == leg.drone_id && n.from == leg.to
                        })
                    {
                        return Err(format!("positioning leg {i} is not followed by its drone's delivery"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Replay against a fleet snapshot: every drone's legs must pass the
    /// capability check at departure and commit cleanly in order.
    pub fn replay(&self, fleet: &[Drone], model: &EnergyModel) -> Result<Vec<Drone>, String> {
        let mut state: BTreeMap<DroneId, Drone> = fleet.iter().map(|d| (d.id, d.clone())).collect();
        let mut i = 0;
        while i < self.legs.len() {
            let leg = &self.legs[i];
            let group = if leg.kind == LegKind::Positioning { &self.legs[i..i + 2] } else { &self.legs[i..i + 1] };
            let drone = state.get(&leg.drone_id).ok_or(format!("drone {} not in fleet", leg.drone_id))?;
            if drone.current_station != leg.from {
                return Err(format!("drone {} is at {}, leg starts at {}", drone.id, drone.current_station, leg.from));
            }
            let demands: Vec<LegDemand> = group
                .iter()
                .map(|l| LegDemand { distance_km: l.route.total_distance_km, payload_kg: l.payload_kg })
                .collect();
            let f = drone.can_serve_trip(model, &demands);
            if !f.is_ok() {
                return Err(format!("drone {} fails check at t={}: {:?}", drone.id, leg.depart_s, f.reasons));
            }
            let mut d = drone.clone();
            for l in group {
                let f =
                    d.can_serve(model, LegDemand { distance_km: l.route.total_distance_km, payload_kg: l.payload_kg });
                if !f.is_ok() {
                    return Err(format!("drone {} fails leg check at t={}: {:?}", d.id, l.depart_s, f.reasons));
                }
                d = d
                    .apply_flight(
                        model,
                        crate::fleet::FlownLeg {
                            distance_km: l.route.total_distance_km,
                            payload_kg: l.payload_kg,
                            duration_s: l.route.total_duration_s,
                            to: l.to,
                        },
                    )
                    .map_err(|e| e.to_string())?;
            }
            state.insert(d.id, d);
            i += group.len();
        }
        Ok(state.into_values().collect())
    }
}

/// Why one drone was passed over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Rejection {
    Unfit { reason: Unfit },
    NoRoute { leg: LegKind, from: StationId, to: StationId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneRejection {
    pub drone_id: DroneId,
    pub reasons: Vec<Rejection>,
}

/// The segment at which composition got stuck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionTrace {
    /// Gating-only shortest path the segmentation worked along.
    pub backbone: Vec<StationId>,
    /// Furthest station the package could be brought to.
    pub blocked_at: StationId,
    /// Nearest segment end that no free drone could serve.
    pub blocking_segment: (StationId, StationId),
    pub rejections: Vec<DroneRejection>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no feasible drone for request {request_id}: {}", describe_rejections(.rejections))]
    NoFeasibleDrone { request_id: u64, rejections: Vec<DroneRejection> },
    #[error("no passable route from {from} to {to} in this slot")]
    NoPassableRoute { request_id: u64, from: StationId, to: StationId },
    #[error("request {request_id} cannot be composed: segment {}->{} has no servable drone ({})", .trace.blocking_segment.0, .trace.blocking_segment.1, describe_rejections(&.trace.rejections))]
    Infeasible { request_id: u64, trace: CompositionTrace },
    #[error(transparent)]
    Routing(RoutingError),
}

fn describe_rejections(rs: &[DroneRejection]) -> String {
    if rs.is_empty() {
        return "fleet is empty".into();
    }
    rs.iter()
        .map(|r| {
            let why: Vec<String> = r
                .reasons
                .iter()
                .map(|x| match x {
                    Rejection::Unfit { reason } => reason.to_string(),
                    Rejection::NoRoute { leg, from, to } => format!("no {leg:?} route {from}->{to}"),
                })
                .collect();
            format!("drone {}: {}", r.drone_id, why.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Winning drone and its two routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub drone_id: DroneId,
    pub positioning: RoutePlan,
    pub delivery: RoutePlan,
    pub completion_s: f64,
}

fn check_request(req: &StructuredRequest, ctx: &RouteContext<'_>) -> Result<(), PlanError> {
    for s in [req.start_node, req.destination_node] {
        if !ctx.net.contains(s) {
            return Err(PlanError::UnknownStation(s));
        }
    }
    req.validate(ctx.net).map_err(PlanError::InvalidRequest)?;
    if ctx.slot >= ctx.weather.slot_count() {
        return Err(PlanError::Routing(RoutingError::SlotOutOfRange {
            slot: ctx.slot,
            slot_count: ctx.weather.slot_count(),
        }));
    }
    Ok(())
}

/// Fastest time route, `Ok(None)` when no passable route exists.
fn time_route(
    ctx: &RouteContext<'_>,
    v: f64,
    from: StationId,
    to: StationId,
) -> Result<Option<RoutePlan>, RoutingError> {
    if from == to {
        return Ok(Some(RoutePlan::stationary(from)));
    }
    match dijkstra(ctx, CostMode::WeatherTime, v, from, to) {
        Ok(p) => Ok(Some(p)),
        Err(RoutingError::NoRoute { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Check one drone against positioning to `from` and then carrying the
/// package to `to`, given the routes already found (or not) for it.
fn assess(
    model: &EnergyModel,
    drone: &Drone,
    payload_kg: f64,
    pos: Option<RoutePlan>,
    del: Option<RoutePlan>,
    from: StationId,
    to: StationId,
) -> Result<(RoutePlan, RoutePlan), Vec<Rejection>> {
    if drone.status != DroneStatus::Idle {
        return Err(vec![Rejection::Unfit { reason: Unfit::Unavailable { status: drone.status } }]);
    }
    let mut reasons = Vec::new();
    if pos.is_none() {
        reasons.push(Rejection::NoRoute { leg: LegKind::Positioning, from: drone.current_station, to: from });
    }
    if del.is_none() {
        reasons.push(Rejection::NoRoute { leg: LegKind::Delivery, from, to });
    }
    let (Some(pos), Some(del)) = (pos, del) else {
        return Err(reasons);
    };
    let demands = [
        LegDemand { distance_km: pos.total_distance_km, payload_kg: 0.0 },
        LegDemand { distance_km: del.total_distance_km, payload_kg },
    ];
    let f = drone.can_serve_trip(model, if pos.hops() == 0 { &demands[1..] } else { &demands });
    if !f.is_ok() {
        return Err(f.reasons.into_iter().map(|reason| Rejection::Unfit { reason }).collect());
    }
    Ok((pos, del))
}

/// Earliest-completion drone able to fly positioning plus delivery in one
/// charge; ties go to the lowest id.
pub fn select_drone(
    fleet: &[Drone],
    req: &StructuredRequest,
    ctx: &RouteContext<'_>,
    model: &EnergyModel,
    exec: Execution,
) -> Result<Selection, PlanError> {
    check_request(req, ctx)?;
    let (s, t) = (req.start_node, req.destination_node);
    let evaluated = exec.map(fleet, |d| -> Result<_, RoutingError> {
        if d.status != DroneStatus::Idle {
            return Ok((d.id, assess(model, d, req.payload_kg, None, None, s, t)));
        }
        let pos = time_route(ctx, d.cruise_speed_ms, d.current_station, s)?;
        let del = time_route(ctx, d.cruise_speed_ms, s, t)?;
        Ok((d.id, assess(model, d, req.payload_kg, pos, del, s, t)))
    });
    let mut best: Option<Selection> = None;
    let mut rejections = Vec::new();
    for item in evaluated {
        let (drone_id, outcome) = item.map_err(PlanError::Routing)?;
        match outcome {
            Ok((positioning, delivery)) => {
                let completion_s = positioning.total_duration_s + delivery.total_duration_s;
                let better = best.as_ref().is_none_or(|b| {
                    completion_s < b.completion_s || (completion_s == b.completion_s && drone_id < b.drone_id)
                });
                if better {
                    best = Some(Selection { drone_id, positioning, delivery, completion_s });
                }
            }
            Err(reasons) => rejections.push(DroneRejection { drone_id, reasons }),
        }
    }
    rejections.sort_by_key(|r| r.drone_id);
    best.ok_or(PlanError::NoFeasibleDrone { request_id: req.request_id, rejections })
}

fn legs_for(
    drone_id: DroneId,
    positioning: &RoutePlan,
    delivery: &RoutePlan,
    payload_kg: f64,
    ready_s: f64,
    package_ready_s: f64,
) -> Vec<Leg> {
    let mut legs = Vec::with_capacity(2);
    let mut positioned = ready_s;
    if positioning.hops() > 0 {
        positioned = ready_s + positioning.total_duration_s;
        legs.push(Leg {
            drone_id,
            kind: LegKind::Positioning,
            from: positioning.origin(),
            to: positioning.destination(),
            route: positioning.clone(),
            payload_kg: 0.0,
            depart_s: ready_s,
            arrive_s: positioned,
        });
    }
    let depart_s = positioned.max(package_ready_s);
    legs.push(Leg {
        drone_id,
        kind: LegKind::Delivery,
        from: delivery.origin(),
        to: delivery.destination(),
        route: delivery.clone(),
        payload_kg,
        depart_s,
        arrive_s: depart_s + delivery.total_duration_s,
    });
    legs
}

fn single_drone_plan(req: &StructuredRequest, sel: &Selection, now_s: f64) -> DeliveryPlan {
    DeliveryPlan {
        request_id: req.request_id,
        legs: legs_for(sel.drone_id, &sel.positioning, &sel.delivery, req.payload_kg, now_s, now_s),
        handoff_stations: Vec::new(),
    }
}

struct Segmenter<'c, 'a> {
    ctx: &'c RouteContext<'a>,
    model: &'c EnergyModel,
    fleet: Vec<&'c Drone>,
    backbone: Vec<StationId>,
    payload_kg: f64,
    /// Candidate end indices per start index, furthest first.
    ends: Vec<Vec<usize>>,
    positioning: HashMap<(usize, usize), Option<RoutePlan>>,
    segments: HashMap<(usize, usize, usize), Option<RoutePlan>>,
    dead: HashSet<(usize, Vec<bool>)>,
    deepest: usize,
    deepest_rejections: Vec<DroneRejection>,
}

struct Assignment {
    fleet_index: usize,
    start: usize,
    end: usize,
    outcome: (RoutePlan, RoutePlan),
    completion_s: f64,
}

impl Segmenter<'_, '_> {
    fn candidate(
        &mut self,
        k: usize,
        i: usize,
        j: usize,
    ) -> Result<Result<(RoutePlan, RoutePlan), Vec<Rejection>>, RoutingError> {
        let drone = self.fleet[k];
        let (from, to) = (self.backbone[i], self.backbone[j]);
        if !self.positioning.contains_key(&(k, i)) {
            let p = time_route(self.ctx, drone.cruise_speed_ms, drone.current_station, from)?;
            self.positioning.insert((k, i), p);
        }
        if !self.segments.contains_key(&(k, i, j)) {
            let s = match plan_along(self.ctx, &self.backbone[i..=j], drone.cruise_speed_ms) {
                Ok(p) => Some(p),
                Err(RoutingError::Impassable { .. }) => None,
                Err(e) => return Err(e),
            };
            self.segments.insert((k, i, j), s);
        }
        let pos = self.positioning[&(k, i)].clone();
        let seg = self.segments[&(k, i, j)].clone();
        Ok(assess(self.model, drone, self.payload_kg, pos, seg, from, to))
    }

    /// Free drones able to take segment i..=j, best first.
    fn ranked(
        &mut self,
        i: usize,
        j: usize,
        used: &[bool],
    ) -> Result<(Vec<Assignment>, Vec<DroneRejection>), RoutingError> {
        let mut ok = Vec::new();
        let mut rejected = Vec::new();
        for (k, _) in used.iter().enumerate().filter(|(_, &u)| !u) {
            match self.candidate(k, i, j)? {
                Ok(outcome) => {
                    let completion_s = outcome.0.total_duration_s + outcome.1.total_duration_s;
                    ok.push(Assignment { fleet_index: k, start: i, end: j, outcome, completion_s });
                }
                Err(reasons) => rejected.push(DroneRejection { drone_id: self.fleet[k].id, reasons }),
            }
        }
        ok.sort_by(|a, b| {
            a.completion_s
                .total_cmp(&b.completion_s)
                .then_with(|| self.fleet[a.fleet_index].id.cmp(&self.fleet[b.fleet_index].id))
        });
        Ok((ok, rejected))
    }

    /// Greedy longest servable prefix first, backtracking over shorter
    /// prefixes and lower-ranked drones when the remainder gets stuck.
    fn solve(&mut self, i: usize, used: &mut Vec<bool>) -> Result<Option<Vec<Assignment>>, RoutingError> {
        if i + 1 == self.backbone.len() {
            return Ok(Some(Vec::new()));
        }
        if self.dead.contains(&(i, used.clone())) {
            return Ok(None);
        }
        let mut nearest_rejections = Vec::new();
        for j in self.ends[i].clone() {
            let (ranked, rejected) = self.ranked(i, j, used)?;
            nearest_rejections = rejected;
            for a in ranked {
                let k = a.fleet_index;
                used[k] = true;
                let rest = self.solve(a.end, used)?;
                used[k] = false;
                if let Some(mut rest) = rest {
                    rest.insert(0, a);
                    return Ok(Some(rest));
                }
            }
        }
        if i >= self.deepest {
            self.deepest = i;
            self.deepest_rejections = nearest_rejections;
        }
        self.dead.insert((i, used.clone()));
        Ok(None)
    }
}

/// Single drone if one can do the whole job, otherwise a chain of drones
/// handing the package over at recharge stations along the route.
pub fn compose(
    fleet: &[Drone],
    req: &StructuredRequest,
    ctx: &RouteContext<'_>,
    model: &EnergyModel,
    now_s: f64,
    exec: Execution,
) -> Result<DeliveryPlan, PlanError> {
    let rejections = match select_drone(fleet, req, ctx, model, exec) {
        Ok(sel) => return Ok(single_drone_plan(req, &sel, now_s)),
        Err(PlanError::NoFeasibleDrone { rejections, .. }) => rejections,
        Err(e) => return Err(e),
    };

    let backbone = match dijkstra(ctx, CostMode::Distance, GATING_ONLY_SPEED_MS, req.start_node, req.destination_node) {
        Ok(p) => p.node_sequence,
        Err(RoutingError::NoRoute { from, to }) => {
            return Err(PlanError::NoPassableRoute { request_id: req.request_id, from, to })
        }
        Err(e) => return Err(PlanError::Routing(e)),
    };
    let last = backbone.len() - 1;
    let ends: Vec<Vec<usize>> = (0..backbone.len())
        .map(|i| {
            (i + 1..=last)
                .rev()
                .filter(|&j| j == last || ctx.net.station(backbone[j]).map(|s| s.is_recharge).unwrap_or(false))
                .collect()
        })
        .collect();
    let idle: Vec<&Drone> = fleet.iter().filter(|d| d.status == DroneStatus::Idle).collect();
    let mut seg = Segmenter {
        ctx,
        model,
        fleet: idle,
        backbone,
        payload_kg: req.payload_kg,
        ends,
        positioning: HashMap::new(),
        segments: HashMap::new(),
        dead: HashSet::new(),
        deepest: 0,
        deepest_rejections: rejections,
    };
    let mut used = vec![false; seg.fleet.len()];
    let solved = seg.solve(0, &mut used).map_err(PlanError::Routing)?;
    let Some(chain) = solved else {
        let at = seg.deepest;
        let next = seg.ends[at].last().copied().unwrap_or(last);
        let mut rejections = seg.deepest_rejections;
        // Drones already committed upstream or busy are reported as well.
        for d in fleet.iter().filter(|d| d.status != DroneStatus::Idle) {
            if !rejections.iter().any(|r| r.drone_id == d.id) {
                rejections.push(DroneRejection {
                    drone_id: d.id,
                    reasons: vec![Rejection::Unfit { reason: Unfit::Unavailable { status: d.status } }],
                });
            }
        }
        rejections.sort_by_key(|r| r.drone_id);
        return Err(PlanError::Infeasible {
            request_id: req.request_id,
            trace: CompositionTrace {
                blocked_at: seg.backbone[at],
                blocking_segment: (seg.backbone[at], seg.backbone[next]),
                backbone: seg.backbone,
                rejections,
            },
        });
    };

    let mut legs = Vec::new();
    let mut handoff_stations = Vec::new();
    let mut package_ready = now_s;
    for a in &chain {
        let (pos, del) = &a.outcome;
        let drone_legs = legs_for(seg.fleet[a.fleet_index].id, pos, del, req.payload_kg, now_s, package_ready);
        package_ready = drone_legs.last().expect("delivery leg").arrive_s;
        legs.extend(drone_legs);
        if a.end != last {
            handoff_stations.push(seg.backbone[a.end]);
        }
        debug_assert!(a.start < a.end);
    }
    Ok(DeliveryPlan { request_id: req.request_id, legs, handoff_stations })
}
