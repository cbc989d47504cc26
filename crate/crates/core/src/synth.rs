//! Seeded generators for networks, weather series and fleets.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::fleet::{Drone, DroneStatus};
use crate::skyway::{euclidean, Edge, SkywayNetwork, Station, StationId};
use crate::weather::{WeatherSample, WeatherSeries};

/// Side of the square area stations are placed in.
pub const AREA_KM: f64 = 40.0;
const MIN_SEPARATION_KM: f64 = 1.0;
/// Extra corridors per station beyond the spanning tree.
const EXTRA_NEIGHBOURS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("need at least {min} {what}, got {got}")]
    TooFew { what: &'static str, min: usize, got: usize },
    #[error("network has no recharge station to base drones at")]
    NoRechargeStation,
}

/// Connected random network: each station joins its nearest earlier station
/// (a spanning tree), then links to a couple of nearest neighbours. Corridor
/// lengths are the straight line stretched by up to 15 %. About 40 % of
/// the stations can recharge, always including station 0.
pub fn gen_network(n: usize, seed: u64) -> Result<SkywayNetwork, SynthError> {
    if n < 1 {
        return Err(SynthError::TooFew { what: "stations", min: 1, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n);
    // With 1 km spacing in a 100 km square, rejection finishes quickly for
    // any realistic station count; the cap keeps huge requests terminating.
    let mut attempts = 0;
    while pts.len() < n {
        let p = (rng.random_range(0.0..AREA_KM), rng.random_range(0.0..AREA_KM));
        attempts += 1;
        if attempts < 1000 * n && pts.iter().any(|&q| euclidean(p, q) < MIN_SEPARATION_KM) {
            continue;
        }
        if pts.contains(&p) {
            continue;
        }
        pts.push(p);
    }
    let stations: Vec<Station> = pts
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Station {
            id: i as StationId,
            x_km: x,
            y_km: y,
            is_recharge: i == 0 || rng.random_bool(0.4),
        })
        .collect();

    let mut pairs = BTreeSet::new();
    for i in 1..n {
        let nearest =
            (0..i).min_by(|&a, &b| euclidean(pts[i], pts[a]).total_cmp(&euclidean(pts[i], pts[b]))).expect("i >= 1");
        pairs.insert((nearest.min(i), nearest.max(i)));
    }
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| euclidean(pts[i], pts[a]).total_cmp(&euclidean(pts[i], pts[b])).then(a.cmp(&b)));
        for &j in others.iter().take(EXTRA_NEIGHBOURS) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| Edge {
            a: a as StationId,
            b: b as StationId,
            distance_km: euclidean(pts[a], pts[b]) * (1.0 + rng.random_range(0.0..0.15)),
        })
        .collect();
    Ok(SkywayNetwork::new(stations, edges).expect("generator output satisfies network invariants"))
}

/// Monthly weather with a seasonal cycle, a prevailing westerly and
/// occasional regional storms that exceed the default flight limits.
pub fn gen_weather(net: &SkywayNetwork, slots: usize, seed: u64) -> Result<WeatherSeries, SynthError> {
    if slots < 1 {
        return Err(SynthError::TooFew { what: "slots", min: 1, got: slots });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = net.station_ids();
    let mut series = WeatherSeries::uniform(&ids, slots, WeatherSample::CALM);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let rain = Exp::new(1.0).expect("valid exponential");
    for slot in 0..slots {
        let season = (2.0 * PI * ((slot % 12) as f64 - 3.0) / 12.0).sin();
        let storm = rng.random_bool(0.08);
        let base_wind = 6.0 - 2.0 * season + if storm { 16.0 } else { 0.0 };
        let base_dir = 250.0 + 30.0 * unit.sample(&mut rng);
        for &s in &ids {
            let wind = (base_wind + 2.0 * unit.sample(&mut rng)).clamp(0.0, 40.0);
            let precip_mean = if storm { 9.0 } else { 1.0 + 0.8 * (1.0 - season) };
            let sample = WeatherSample {
                temperature_c: (12.0 + 10.0 * season + 2.0 * unit.sample(&mut rng)).clamp(-40.0, 50.0),
                wind_speed_ms: wind,
                wind_direction_deg: (base_dir + 15.0 * unit.sample(&mut rng)).rem_euclid(360.0),
                humidity_pct: (65.0 - 15.0 * season + 10.0 * unit.sample(&mut rng)).clamp(5.0, 100.0),
                precipitation_mm: (precip_mean * rain.sample(&mut rng)).min(60.0),
            };
            series.set(slot, s, sample).expect("station and slot exist");
        }
    }
    Ok(series)
}

/// `n` idle, fully charged drones based round-robin at recharge stations.
pub fn gen_fleet(net: &SkywayNetwork, n: usize, seed: u64) -> Result<Vec<Drone>, SynthError> {
    let bases: Vec<StationId> = net.stations().iter().filter(|s| s.is_recharge).map(|s| s.id).collect();
    if bases.is_empty() {
        return Err(SynthError::NoRechargeStation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let capacity = rng.random_range(2500.0..4000.0_f64).round();
            let home = bases[i % bases.len()];
            Drone {
                id: i as u32,
                home_station: home,
                current_station: home,
                cruise_speed_ms: rng.random_range(15.0..22.0_f64).round(),
                battery_capacity_wh: capacity,
                battery_health: 1.0,
                battery_level_wh: capacity,
                payload_capacity_kg: rng.random_range(6.0..=10.0_f64).round(),
                range_km: rng.random_range(80.0..140.0_f64).round(),
                flight_hours: 0.0,
                status: DroneStatus::Idle,
                hours_since_service: 0.0,
                maintenance_until_s: None,
                cycle_progress_wh: 0.0,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{dijkstra, CostMode, RouteContext};
    use crate::weather::SafetyLimits;

    #[test]
    fn networks_are_connected_and_deterministic() {
        for seed in 0..20 {
            let net = gen_network(20, seed).unwrap();
            assert_eq!(net, gen_network(20, seed).unwrap());
            assert!(net.station(0).unwrap().is_recharge);
            let w = WeatherSeries::uniform(&net.station_ids(), 1, WeatherSample::CALM);
            let ctx = RouteContext::new(&net, &w, 0, SafetyLimits::default());
            for t in 1..20 {
                assert!(dijkstra(&ctx, CostMode::Distance, 20.0, 0, t).is_ok(), "seed {seed} target {t}");
            }
        }
        assert_ne!(gen_network(20, 1).unwrap(), gen_network(20, 2).unwrap());
    }

    #[test]
    fn weather_is_valid_and_has_storms() {
        let net = gen_network(20, 3).unwrap();
        let w = gen_weather(&net, 48, 3).unwrap();
        assert_eq!(w, gen_weather(&net, 48, 3).unwrap());
        let mut gated = 0;
        for slot in 0..48 {
            for &s in w.stations() {
                let x = w.sample(slot, s).unwrap();
                assert!(x.check().is_ok());
                if !x.within(&SafetyLimits::default()) {
                    gated += 1;
                }
            }
        }
        assert!(gated > 0 && gated < 48 * 20 / 2, "gated samples {gated}");
    }

    #[test]
    fn fleet_is_valid() {
        let net = gen_network(20, 3).unwrap();
        let fleet = gen_fleet(&net, 10, 4).unwrap();
        assert_eq!(fleet.len(), 10);
        for d in &fleet {
            d.validate().unwrap();
            assert!(net.station(d.home_station).unwrap().is_recharge);
        }
    }

    #[test]
    fn too_small() {
        assert!(gen_network(0, 1).is_err());
        let net = gen_network(3, 1).unwrap();
        assert!(gen_weather(&net, 0, 1).is_err());
    }
}
