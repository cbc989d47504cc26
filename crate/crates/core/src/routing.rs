//! Dijkstra and A* over the skyway network.
//!
//! Both searches minimise either corridor distance or weather-adjusted flight
//! time, with weather frozen at one slot for the whole query. Ties are broken
//! by hop count and then by the lexicographically smaller node sequence, so a
//! query always has exactly one answer.
//!
//! A* takes a [`HeuristicMode`]. [`HeuristicMode::Admissible`] scales the
//! straight-line distance by the speed cap and returns the same cost as
//! Dijkstra. [`HeuristicMode::PaperNominal`] scales by the nominal speed,
//! which overestimates under tailwind and can settle for a slower route.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::skyway::{bearing, SkywayNetwork, StationId};
use crate::weather::{adjusted_speed, Infeasible, SafetyLimits, WeatherError, WeatherSeries, SPEED_CAP_FACTOR};

static NO_CLOSURES: BTreeSet<StationId> = BTreeSet::new();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    Distance,
    WeatherTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicMode {
    Zero,
    Admissible,
    PaperNominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dijkstra,
    AStar(HeuristicMode),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteLeg {
    pub a: StationId,
    pub b: StationId,
    pub distance_km: f64,
    pub v_adj_ms: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub node_sequence: Vec<StationId>,
    pub total_distance_km: f64,
    pub total_duration_s: f64,
    pub per_leg: Vec<RouteLeg>,
}

impl RoutePlan {
    pub fn stationary(at: StationId) -> Self {
        RoutePlan { node_sequence: vec![at], total_distance_km: 0.0, total_duration_s: 0.0, per_leg: Vec::new() }
    }

    fn from_legs(start: StationId, per_leg: Vec<RouteLeg>) -> Self {
        let mut node_sequence = vec![start];
        let mut total_distance_km = 0.0;
        let mut total_duration_s = 0.0;
        for leg in &per_leg {
            node_sequence.push(leg.b);
            total_distance_km += leg.distance_km;
            total_duration_s += leg.duration_s;
        }
        RoutePlan { node_sequence, total_distance_km, total_duration_s, per_leg }
    }

    pub fn origin(&self) -> StationId {
        self.node_sequence[0]
    }

    pub fn destination(&self) -> StationId {
        *self.node_sequence.last().expect("route has at least one node")
    }

    pub fn hops(&self) -> usize {
        self.per_leg.len()
    }

    pub fn cost(&self, mode: CostMode) -> f64 {
        match mode {
            CostMode::Distance => self.total_distance_km,
            CostMode::WeatherTime => self.total_duration_s,
        }
    }

    /// Check the leg chain and the totals (relative tolerance `rel_tol`).
    pub fn is_consistent(&self, net: &SkywayNetwork, rel_tol: f64) -> bool {
        if self.node_sequence.len() != self.per_leg.len() + 1 {
            return false;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1e-300);
        let mut dist = 0.0;
        let mut dur = 0.0;
        for (i, leg) in self.per_leg.iter().enumerate() {
            if leg.a != self.node_sequence[i] || leg.b != self.node_sequence[i + 1] {
                return false;
            }
            match net.edge_between(leg.a, leg.b) {
                Some(e) if e.distance_km == leg.distance_km => {}
                _ => return false,
            }
            if leg.v_adj_ms.is_nan()
                || leg.v_adj_ms <= 0.0
                || !close(leg.duration_s, leg.distance_km * 1000.0 / leg.v_adj_ms)
            {
                return false;
            }
            dist += leg.distance_km;
            dur += leg.duration_s;
        }
        (self.per_leg.is_empty() && self.total_distance_km == 0.0 && self.total_duration_s == 0.0)
            || (close(dist, self.total_distance_km) && close(dur, self.total_duration_s))
    }
}

/// Why a corridor cannot be flown in the current slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Blocked {
    StationClosed(StationId),
    Weather(Infeasible),
}

impl fmt::Display for Blocked {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Blocked::StationClosed(s) => write!(f, "station {s} closed"),
            Blocked::Weather(Infeasible::WindAboveLimit) => write!(f, "wind above limit"),
            Blocked::Weather(Infeasible::PrecipitationAboveLimit) => write!(f, "precipitation above limit"),
            Blocked::Weather(Infeasible::BelowMinimumGroundSpeed) => write!(f, "ground speed below minimum"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeCost {
    Passable { cost: f64, leg: RouteLeg },
    Impassable(Blocked),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RoutingError {
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("no edge between {a} and {b}")]
    UnknownEdge { a: StationId, b: StationId },
    #[error("slot {slot} out of range (series has {slot_count} slots)")]
    SlotOutOfRange { slot: usize, slot_count: usize },
    #[error("no weather for station {0}")]
    MissingWeather(StationId),
    #[error("nominal speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("no route from {from} to {to}")]
    NoRoute { from: StationId, to: StationId },
    #[error("edge {a}-{b} impassable: {reason}")]
    Impassable { a: StationId, b: StationId, reason: Blocked },
}

impl From<WeatherError> for RoutingError {
    fn from(e: WeatherError) -> Self {
        match e {
            WeatherError::SlotOutOfRange { slot, slot_count } => RoutingError::SlotOutOfRange { slot, slot_count },
            WeatherError::UnknownStation(s) => RoutingError::MissingWeather(s),
            // `sample` only fails with the two variants above.
            other => unreachable!("unexpected weather lookup error: {other}"),
        }
    }
}

/// Everything a route query reads, frozen at one slot.
#[derive(Debug, Clone, Copy)]
pub struct RouteContext<'a> {
    pub net: &'a SkywayNetwork,
    pub weather: &'a WeatherSeries,
    pub slot: usize,
    pub limits: SafetyLimits,
    /// Stations whose corridors are all impassable in this slot.
    pub closed: &'a BTreeSet<StationId>,
}

impl<'a> RouteContext<'a> {
    pub fn new(net: &'a SkywayNetwork, weather: &'a WeatherSeries, slot: usize, limits: SafetyLimits) -> Self {
        RouteContext { net, weather, slot, limits, closed: &NO_CLOSURES }
    }

    pub fn with_closures(mut self, closed: &'a BTreeSet<StationId>) -> Self {
        self.closed = closed;
        self
    }

    fn check(&self, v_nominal: f64, stations: &[StationId]) -> Result<(), RoutingError> {
        if !(v_nominal.is_finite() && v_nominal > 0.0) {
            return Err(RoutingError::InvalidSpeed(v_nominal));
        }
        if self.slot >= self.weather.slot_count() {
            return Err(RoutingError::SlotOutOfRange { slot: self.slot, slot_count: self.weather.slot_count() });
        }
        for &s in stations {
            if !self.net.contains(s) {
                return Err(RoutingError::UnknownStation(s));
            }
        }
        Ok(())
    }
}

/// Cost of flying the corridor `a -> b`.
///
/// Speed uses the departure sample and the `a -> b` bearing; gating uses both
/// endpoint samples. Distance mode still gates and still reports the
/// weather-adjusted speed of the leg.
pub fn edge_cost(
    ctx: &RouteContext<'_>,
    mode: CostMode,
    a: StationId,
    b: StationId,
    v_nominal: f64,
) -> Result<EdgeCost, RoutingError> {
    ctx.check(v_nominal, &[a, b])?;
    traverse(ctx, mode, a, b, v_nominal)
}

fn traverse(
    ctx: &RouteContext<'_>,
    mode: CostMode,
    a: StationId,
    b: StationId,
    v_nominal: f64,
) -> Result<EdgeCost, RoutingError> {
    let edge = ctx.net.edge_between(a, b).ok_or(RoutingError::UnknownEdge { a, b })?;
    for s in [a, b] {
        if ctx.closed.contains(&s) {
            return Ok(EdgeCost::Impassable(Blocked::StationClosed(s)));
        }
    }
    let wa = ctx.weather.sample(ctx.slot, a)?;
    let wb = ctx.weather.sample(ctx.slot, b)?;
    for w in [wa, wb] {
        if w.wind_speed_ms > ctx.limits.max_wind_ms {
            return Ok(EdgeCost::Impassable(Blocked::Weather(Infeasible::WindAboveLimit)));
        }
        if w.precipitation_mm > ctx.limits.max_precip_mm {
            return Ok(EdgeCost::Impassable(Blocked::Weather(Infeasible::PrecipitationAboveLimit)));
        }
    }
    let pa = ctx.net.station(a).map_err(|_| RoutingError::UnknownStation(a))?.position();
    let pb = ctx.net.station(b).map_err(|_| RoutingError::UnknownStation(b))?.position();
    // Validation rejects corridors between coincident stations.
    let heading = bearing(pa, pb).expect("corridor endpoints are distinct");
    let v = match adjusted_speed(v_nominal, wa, heading, &ctx.limits) {
        Ok(v) => v,
        Err(why) => return Ok(EdgeCost::Impassable(Blocked::Weather(why))),
    };
    let duration_s = edge.distance_km * 1000.0 / v;
    let leg = RouteLeg { a, b, distance_km: edge.distance_km, v_adj_ms: v, duration_s };
    let cost = match mode {
        CostMode::Distance => edge.distance_km,
        CostMode::WeatherTime => duration_s,
    };
    Ok(EdgeCost::Passable { cost, leg })
}

/// Evaluate a fixed node sequence under the context's weather.
pub fn plan_along(ctx: &RouteContext<'_>, nodes: &[StationId], v_nominal: f64) -> Result<RoutePlan, RoutingError> {
    ctx.check(v_nominal, nodes)?;
    let Some(&start) = nodes.first() else {
        return Err(RoutingError::UnknownStation(0));
    };
    let mut legs = Vec::with_capacity(nodes.len().saturating_sub(1));
    for w in nodes.windows(2) {
        match traverse(ctx, CostMode::WeatherTime, w[0], w[1], v_nominal)? {
            EdgeCost::Passable { leg, .. } => legs.push(leg),
            EdgeCost::Impassable(reason) => return Err(RoutingError::Impassable { a: w[0], b: w[1], reason }),
        }
    }
    Ok(RoutePlan::from_legs(start, legs))
}

#[derive(Debug, Clone)]
struct Label {
    cost: f64,
    path: Vec<StationId>,
    legs: Vec<RouteLeg>,
}

impl Label {
    fn rank(&self, other: &Label) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.path.len().cmp(&other.path.len()))
            .then_with(|| self.path.cmp(&other.path))
    }
}

struct Entry {
    f: f64,
    label: Label,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.label.path.len().cmp(&other.label.path.len()))
            .then_with(|| self.label.path.cmp(&other.label.path))
    }
}

fn search<H>(
    ctx: &RouteContext<'_>,
    mode: CostMode,
    v_nominal: f64,
    from: StationId,
    to: StationId,
    h: H,
) -> Result<RoutePlan, RoutingError>
where
    H: Fn(StationId) -> f64,
{
    ctx.check(v_nominal, &[from, to])?;
    if from == to {
        return Ok(RoutePlan::stationary(from));
    }
    let mut best: BTreeMap<StationId, Label> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    let start = Label { cost: 0.0, path: vec![from], legs: Vec::new() };
    best.insert(from, start.clone());
    heap.push(Reverse(Entry { f: h(from), label: start }));
    let mut settled_target: Option<f64> = None;

    while let Some(Reverse(top)) = heap.peek() {
        if let Some(c) = settled_target {
            // Only equal-priority ties can still improve the settled answer.
            if top.f > c {
                break;
            }
        }
        let Reverse(Entry { label, .. }) = heap.pop().expect("peeked");
        let node = *label.path.last().expect("non-empty path");
        if best.get(&node).is_some_and(|b| b.rank(&label) != Ordering::Equal) {
            continue;
        }
        if node == to {
            settled_target.get_or_insert(label.cost);
            continue;
        }
        for (next, _) in ctx.net.adjacent(node) {
            if label.path.contains(&next) {
                continue;
            }
            let EdgeCost::Passable { cost, leg } = traverse(ctx, mode, node, next, v_nominal)? else {
                continue;
            };
            let mut path = label.path.clone();
            path.push(next);
            let mut legs = label.legs.clone();
            legs.push(leg);
            let candidate = Label { cost: label.cost + cost, path, legs };
            let improves = best.get(&next).is_none_or(|b| candidate.rank(b) == Ordering::Less);
            if improves {
                best.insert(next, candidate.clone());
                heap.push(Reverse(Entry { f: candidate.cost + h(next), label: candidate }));
            }
        }
    }
    match best.remove(&to) {
        Some(label) => Ok(RoutePlan::from_legs(from, label.legs)),
        None => Err(RoutingError::NoRoute { from, to }),
    }
}

pub fn dijkstra(
    ctx: &RouteContext<'_>,
    mode: CostMode,
    v_nominal: f64,
    from: StationId,
    to: StationId,
) -> Result<RoutePlan, RoutingError> {
    search(ctx, mode, v_nominal, from, to, |_| 0.0)
}

/// Heuristic estimate of the remaining cost from `n` to `goal`.
pub fn heuristic_cost(
    net: &SkywayNetwork,
    mode: CostMode,
    h: HeuristicMode,
    v_nominal: f64,
    n: StationId,
    goal: StationId,
) -> f64 {
    let km = match h {
        HeuristicMode::Zero => return 0.0,
        _ => net.heuristic(n, goal).unwrap_or(0.0),
    };
    match (mode, h) {
        (CostMode::Distance, _) => km,
        (CostMode::WeatherTime, HeuristicMode::Admissible) => km * 1000.0 / (SPEED_CAP_FACTOR * v_nominal),
        (CostMode::WeatherTime, _) => km * 1000.0 / v_nominal,
    }
}

pub fn astar(
    ctx: &RouteContext<'_>,
    mode: CostMode,
    v_nominal: f64,
    from: StationId,
    to: StationId,
    h: HeuristicMode,
) -> Result<RoutePlan, RoutingError> {
    let net = ctx.net;
    search(ctx, mode, v_nominal, from, to, |n| heuristic_cost(net, mode, h, v_nominal, n, to))
}

pub fn route(
    ctx: &RouteContext<'_>,
    algo: Algorithm,
    mode: CostMode,
    v_nominal: f64,
    from: StationId,
    to: StationId,
) -> Result<RoutePlan, RoutingError> {
    match algo {
        Algorithm::Dijkstra => dijkstra(ctx, mode, v_nominal, from, to),
        Algorithm::AStar(h) => astar(ctx, mode, v_nominal, from, to, h),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteQuery {
    pub from: StationId,
    pub to: StationId,
    pub v_nominal: f64,
}

/// Independent queries against one context, results in query order.
pub fn route_batch(
    ctx: &RouteContext<'_>,
    algo: Algorithm,
    mode: CostMode,
    queries: &[RouteQuery],
    exec: Execution,
) -> Vec<Result<RoutePlan, RoutingError>> {
    exec.map(queries, |q| route(ctx, algo, mode, q.v_nominal, q.from, q.to))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dijkstra: RoutePlan,
    pub astar: RoutePlan,
    /// A* minus Dijkstra.
    pub delta_distance_km: f64,
    pub delta_duration_s: f64,
}

impl ComparisonReport {
    pub fn describe(&self) -> String {
        format!(
            "Dijkstra: {} over {:.2} km\nA*: {} over {:.2} km",
            format_duration(self.dijkstra.total_duration_s),
            self.dijkstra.total_distance_km,
            format_duration(self.astar.total_duration_s),
            self.astar.total_distance_km,
        )
    }
}

/// Run both algorithms on the same query.
pub fn compare_routes(
    ctx: &RouteContext<'_>,
    mode: CostMode,
    h: HeuristicMode,
    v_nominal: f64,
    from: StationId,
    to: StationId,
) -> Result<ComparisonReport, RoutingError> {
    let d = dijkstra(ctx, mode, v_nominal, from, to)?;
    let a = astar(ctx, mode, v_nominal, from, to, h)?;
    Ok(ComparisonReport {
        delta_distance_km: a.total_distance_km - d.total_distance_km,
        delta_duration_s: a.total_duration_s - d.total_duration_s,
        dijkstra: d,
        astar: a,
    })
}

/// `"2 hours, 59 minutes"`, rounded to the nearest minute.
pub fn format_duration(seconds: f64) -> String {
    let minutes = (seconds / 60.0).round() as u64;
    let (h, m) = (minutes / 60, minutes % 60);
    let unit = |n: u64, one: &str, many: &str| format!("{n} {}", if n == 1 { one } else { many });
    match (h, m) {
        (0, m) => unit(m, "minute", "minutes"),
        (h, 0) => unit(h, "hour", "hours"),
        (h, m) => format!("{}, {}", unit(h, "hour", "hours"), unit(m, "minute", "minutes")),
    }
}
