//! The skyway network: stations on a planar km grid joined by undirected
//! flight corridors.
//!
//! Every corridor must be at least as long as the straight line between its
//! endpoints. That keeps the Euclidean heuristic admissible for both distance
//! and time routing, so the invariant is enforced when a network is built.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};

/// Absolute slack allowed when comparing a corridor length with the straight line.
pub const ADMISSIBILITY_TOLERANCE_KM: f64 = 1e-9;

pub type StationId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub x_km: f64,
    pub y_km: f64,
    #[serde(default)]
    pub is_recharge: bool,
}

impl Station {
    pub fn position(&self) -> (f64, f64) {
        (self.x_km, self.y_km)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: StationId,
    pub b: StationId,
    pub distance_km: f64,
}

impl Edge {
    /// The endpoint opposite `from`, if `from` is an endpoint at all.
    pub fn other(&self, from: StationId) -> Option<StationId> {
        if self.a == from {
            Some(self.b)
        } else if self.b == from {
            Some(self.a)
        } else {
            None
        }
    }
}

/// A single violated network invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateStation(StationId),
    NonFiniteCoordinates(StationId),
    SelfLoop(StationId),
    DanglingEdge { a: StationId, b: StationId, missing: StationId },
    DuplicateEdge { a: StationId, b: StationId },
    CoincidentEndpoints { a: StationId, b: StationId },
    NonPositiveDistance { a: StationId, b: StationId, distance_km: f64 },
    ShorterThanStraightLine { a: StationId, b: StationId, distance_km: f64, euclidean_km: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateStation(id) => write!(f, "duplicate station id {id}"),
            Violation::NonFiniteCoordinates(id) => write!(f, "station {id} has non-finite coordinates"),
            Violation::SelfLoop(id) => write!(f, "edge {id}-{id} is a self loop"),
            Violation::DanglingEdge { a, b, missing } => {
                write!(f, "edge {a}-{b} references unknown station {missing}")
            }
            Violation::DuplicateEdge { a, b } => write!(f, "more than one edge between {a} and {b}"),
            Violation::CoincidentEndpoints { a, b } => {
                write!(f, "edge {a}-{b} joins stations at the same position")
            }
            Violation::NonPositiveDistance { a, b, distance_km } => {
                write!(f, "edge {a}-{b} has non-positive distance {distance_km} km")
            }
            Violation::ShorterThanStraightLine { a, b, distance_km, euclidean_km } => {
                write!(f, "edge {a}-{b} distance {distance_km} km is shorter than the straight line {euclidean_km} km")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("invalid network: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("unknown station {0}")]
    UnknownStation(StationId),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq)]
#[error("bearing is undefined between identical points")]
pub struct DegenerateSegment;

#[derive(Deserialize)]
struct RawNetwork {
    stations: Vec<Station>,
    #[serde(default)]
    edges: Vec<RawEdge>,
}

#[derive(Deserialize)]
struct RawEdge {
    a: StationId,
    b: StationId,
    #[serde(default)]
    distance_km: Option<f64>,
}

/// Validated, immutable station graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SkywayNetwork {
    stations: Vec<Station>,
    edges: Vec<Edge>,
    index: BTreeMap<StationId, usize>,
    // Per station (by index): (neighbor id, edge index), ascending neighbor id.
    adjacency: Vec<Vec<(StationId, usize)>>,
}

impl SkywayNetwork {
    /// Build a network, reporting every violated invariant at once.
    pub fn new(stations: Vec<Station>, edges: Vec<Edge>) -> Result<Self, NetworkError> {
        let mut violations = Vec::new();
        let mut index = BTreeMap::new();
        for (i, s) in stations.iter().enumerate() {
            if index.insert(s.id, i).is_some() {
                violations.push(Violation::DuplicateStation(s.id));
            }
            if !s.x_km.is_finite() || !s.y_km.is_finite() {
                violations.push(Violation::NonFiniteCoordinates(s.id));
            }
        }

        let mut seen_pairs = BTreeSet::new();
        for e in &edges {
            if e.a == e.b {
                violations.push(Violation::SelfLoop(e.a));
                continue;
            }
            let mut dangling = false;
            for end in [e.a, e.b] {
                if !index.contains_key(&end) {
                    violations.push(Violation::DanglingEdge { a: e.a, b: e.b, missing: end });
                    dangling = true;
                }
            }
            if !seen_pairs.insert((e.a.min(e.b), e.a.max(e.b))) {
                violations.push(Violation::DuplicateEdge { a: e.a, b: e.b });
            }
            if dangling {
                continue;
            }
            let (pa, pb) = (&stations[index[&e.a]], &stations[index[&e.b]]);
            let euclid = euclidean(pa.position(), pb.position());
            if !(e.distance_km.is_finite() && e.distance_km > 0.0) {
                violations.push(Violation::NonPositiveDistance { a: e.a, b: e.b, distance_km: e.distance_km });
            } else if e.distance_km < euclid - ADMISSIBILITY_TOLERANCE_KM {
                violations.push(Violation::ShorterThanStraightLine {
                    a: e.a,
                    b: e.b,
                    distance_km: e.distance_km,
                    euclidean_km: euclid,
                });
            }
            if euclid == 0.0 {
                violations.push(Violation::CoincidentEndpoints { a: e.a, b: e.b });
            }
        }
        if !violations.is_empty() {
            return Err(NetworkError::Validation(violations));
        }

        let mut adjacency = vec![Vec::new(); stations.len()];
        for (ei, e) in edges.iter().enumerate() {
            adjacency[index[&e.a]].push((e.b, ei));
            adjacency[index[&e.b]].push((e.a, ei));
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        Ok(SkywayNetwork { stations, edges, index, adjacency })
    }

    /// Parse the JSON network document. Missing edge distances default to the
    /// straight-line distance between the endpoints.
    pub fn from_json_str(text: &str) -> Result<Self, NetworkError> {
        let raw: RawNetwork = serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        let positions: BTreeMap<StationId, (f64, f64)> = raw.stations.iter().map(|s| (s.id, s.position())).collect();
        let edges = raw
            .edges
            .into_iter()
            .map(|e| {
                let distance_km = e.distance_km.unwrap_or_else(|| {
                    match (positions.get(&e.a), positions.get(&e.b)) {
                        (Some(&pa), Some(&pb)) => euclidean(pa, pb),
                        // Left for validation to report as dangling.
                        _ => f64::NAN,
                    }
                });
                Edge { a: e.a, b: e.b, distance_km }
            })
            .collect();
        SkywayNetwork::new(raw.stations, edges)
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Self::from_json_str(&io::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            stations: &'a [Station],
            edges: &'a [Edge],
        }
        serde_json::to_string_pretty(&Doc { stations: &self.stations, edges: &self.edges })
            .expect("serializable network")
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        let mut text = self.to_json();
        text.push('\n');
        io::write_atomic(path, text.as_bytes())?;
        Ok(())
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Station ids in ascending order.
    pub fn station_ids(&self) -> Vec<StationId> {
        self.index.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn contains(&self, id: StationId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn station(&self, id: StationId) -> Result<&Station, NetworkError> {
        self.index.get(&id).map(|&i| &self.stations[i]).ok_or(NetworkError::UnknownStation(id))
    }

    /// Straight-line distance in km between two stations.
    pub fn heuristic(&self, n: StationId, g: StationId) -> Result<f64, NetworkError> {
        let a = self.station(n)?;
        let b = self.station(g)?;
        Ok(euclidean(a.position(), b.position()))
    }

    /// Adjacent stations with corridor lengths, ascending by neighbor id.
    pub fn neighbors(&self, n: StationId) -> Result<Vec<(StationId, f64)>, NetworkError> {
        let i = *self.index.get(&n).ok_or(NetworkError::UnknownStation(n))?;
        Ok(self.adjacency[i].iter().map(|&(m, ei)| (m, self.edges[ei].distance_km)).collect())
    }

    /// Adjacent `(neighbor, edge)` pairs without allocating.
    pub(crate) fn adjacent(&self, n: StationId) -> impl Iterator<Item = (StationId, &Edge)> + '_ {
        let row = self.index.get(&n).map(|&i| self.adjacency[i].as_slice()).unwrap_or(&[]);
        row.iter().map(move |&(m, ei)| (m, &self.edges[ei]))
    }

    pub fn edge_between(&self, a: StationId, b: StationId) -> Option<&Edge> {
        self.adjacent(a).find(|&(m, _)| m == b).map(|(_, e)| e)
    }
}

pub fn euclidean(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Direction of travel in degrees clockwise from north (+y), in `[0, 360)`.
pub fn bearing(from: (f64, f64), to: (f64, f64)) -> Result<f64, DegenerateSegment> {
    let dx = to.0 - from.0;
    let dy = to.1 - from.1;
    if dx == 0.0 && dy == 0.0 {
        return Err(DegenerateSegment);
    }
    let deg = dx.atan2(dy).to_degrees();
    let deg = if deg < 0.0 { deg + 360.0 } else { deg };
    // -0.0 and values that round up to exactly 360.
    Ok(if deg >= 360.0 { 0.0 } else { deg.abs() })
}
