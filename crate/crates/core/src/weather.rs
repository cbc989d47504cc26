//! Station weather per time slot, wind-adjusted ground speed and safety gating.
//!
//! Wind direction follows the meteorological convention: the direction the
//! wind blows *from*. A 135° wind comes from the southeast and pushes toward
//! 315°.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::skyway::StationId;

pub const CSV_HEADER: [&str; 7] =
    ["slot", "station_id", "temperature_c", "wind_speed_ms", "wind_direction_deg", "humidity_pct", "precipitation_mm"];

/// Ground speed never exceeds this multiple of the nominal airspeed.
pub const SPEED_CAP_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub temperature_c: f64,
    pub wind_speed_ms: f64,
    pub wind_direction_deg: f64,
    pub humidity_pct: f64,
    pub precipitation_mm: f64,
}

impl WeatherSample {
    pub const CALM: WeatherSample = WeatherSample {
        temperature_c: 15.0,
        wind_speed_ms: 0.0,
        wind_direction_deg: 0.0,
        humidity_pct: 50.0,
        precipitation_mm: 0.0,
    };

    /// Name of the first field outside its valid range, if any.
    pub fn check(&self) -> Result<(), RangeIssue> {
        let fields = [
            ("temperature_c", self.temperature_c),
            ("wind_speed_ms", self.wind_speed_ms),
            ("wind_direction_deg", self.wind_direction_deg),
            ("humidity_pct", self.humidity_pct),
            ("precipitation_mm", self.precipitation_mm),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(RangeIssue { field: name, value: v });
            }
        }
        let bad = if self.wind_speed_ms < 0.0 {
            Some(("wind_speed_ms", self.wind_speed_ms))
        } else if !(0.0..360.0).contains(&self.wind_direction_deg) {
            Some(("wind_direction_deg", self.wind_direction_deg))
        } else if !(0.0..=100.0).contains(&self.humidity_pct) {
            Some(("humidity_pct", self.humidity_pct))
        } else if self.precipitation_mm < 0.0 {
            Some(("precipitation_mm", self.precipitation_mm))
        } else {
            None
        };
        match bad {
            Some((field, value)) => Err(RangeIssue { field, value }),
            None => Ok(()),
        }
    }

    pub fn within(&self, limits: &SafetyLimits) -> bool {
        self.wind_speed_ms <= limits.max_wind_ms && self.precipitation_mm <= limits.max_precip_mm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeIssue {
    pub field: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyLimits {
    pub max_wind_ms: f64,
    pub max_precip_mm: f64,
    pub min_ground_speed_ms: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        SafetyLimits { max_wind_ms: 20.0, max_precip_mm: 10.0, min_ground_speed_ms: 1.0 }
    }
}

impl SafetyLimits {
    pub fn validate(&self) -> Result<(), WeatherError> {
        for (name, v) in [
            ("max_wind_ms", self.max_wind_ms),
            ("max_precip_mm", self.max_precip_mm),
            ("min_ground_speed_ms", self.min_ground_speed_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(WeatherError::InvalidLimits(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Why a flight is not possible under a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Infeasible {
    WindAboveLimit,
    PrecipitationAboveLimit,
    BelowMinimumGroundSpeed,
}

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("malformed weather CSV: {0}")]
    Parse(String),
    #[error("missing weather for slot {slot}, station {station}")]
    MissingCell { slot: usize, station: StationId },
    #[error("slot {slot}, station {station}: {field} = {value} is out of range")]
    Range { slot: usize, station: StationId, field: &'static str, value: f64 },
    #[error("slot {slot} out of range (series has {slot_count} slots)")]
    SlotOutOfRange { slot: usize, slot_count: usize },
    #[error("no weather for station {0}")]
    UnknownStation(StationId),
    #[error("invalid safety limits: {0}")]
    InvalidLimits(String),
}

/// Weather for every `(slot, station)` pair, slots contiguous from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    slot_count: usize,
    stations: Vec<StationId>,
    // Row-major by slot, then by position in `stations`.
    samples: Vec<WeatherSample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    slot: usize,
    station_id: StationId,
    temperature_c: f64,
    wind_speed_ms: f64,
    wind_direction_deg: f64,
    humidity_pct: f64,
    precipitation_mm: f64,
}

impl WeatherSeries {
    /// Same sample everywhere, every slot.
    pub fn uniform(stations: &[StationId], slot_count: usize, sample: WeatherSample) -> Self {
        let mut ids = stations.to_vec();
        ids.sort_unstable();
        ids.dedup();
        WeatherSeries { slot_count, samples: vec![sample; ids.len() * slot_count], stations: ids }
    }

    /// Build from a `(slot, station)` map; every pair for every slot below the
    /// highest one must be present.
    pub fn from_cells(
        stations: &[StationId],
        cells: &BTreeMap<(usize, StationId), WeatherSample>,
    ) -> Result<Self, WeatherError> {
        let mut ids = stations.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let slot_count = cells.keys().map(|&(s, _)| s + 1).max().unwrap_or(0);
        let mut samples = Vec::with_capacity(slot_count * ids.len());
        for slot in 0..slot_count {
            for &station in &ids {
                let sample = cells.get(&(slot, station)).ok_or(WeatherError::MissingCell { slot, station })?;
                if let Err(issue) = sample.check() {
                    return Err(WeatherError::Range { slot, station, field: issue.field, value: issue.value });
                }
                samples.push(*sample);
            }
        }
        Ok(WeatherSeries { slot_count, stations: ids, samples })
    }

    /// Parse CSV text. Rows for stations outside `stations` are ignored.
    pub fn from_csv_str(text: &str, stations: &[StationId]) -> Result<Self, WeatherError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| WeatherError::Parse(e.to_string()))?;
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(WeatherError::Parse(format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let wanted: std::collections::BTreeSet<StationId> = stations.iter().copied().collect();
        let mut cells = BTreeMap::new();
        for (line, row) in reader.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| WeatherError::Parse(e.to_string()))?;
            let sample = WeatherSample {
                temperature_c: row.temperature_c,
                wind_speed_ms: row.wind_speed_ms,
                wind_direction_deg: row.wind_direction_deg,
                humidity_pct: row.humidity_pct,
                precipitation_mm: row.precipitation_mm,
            };
            if let Err(issue) = sample.check() {
                return Err(WeatherError::Range {
                    slot: row.slot,
                    station: row.station_id,
                    field: issue.field,
                    value: issue.value,
                });
            }
            if !wanted.contains(&row.station_id) {
                continue;
            }
            if cells.insert((row.slot, row.station_id), sample).is_some() {
                return Err(WeatherError::Parse(format!(
                    "row {}: duplicate entry for slot {}, station {}",
                    line + 2,
                    row.slot,
                    row.station_id
                )));
            }
        }
        Self::from_cells(stations, &cells)
    }

    pub fn load_csv(path: &Path, stations: &[StationId]) -> Result<Self, WeatherError> {
        Self::from_csv_str(&io::read_to_string(path)?, stations)
    }

    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for slot in 0..self.slot_count {
            for (i, &station_id) in self.stations.iter().enumerate() {
                let s = &self.samples[slot * self.stations.len() + i];
                writer
                    .serialize(CsvRow {
                        slot,
                        station_id,
                        temperature_c: s.temperature_c,
                        wind_speed_ms: s.wind_speed_ms,
                        wind_direction_deg: s.wind_direction_deg,
                        humidity_pct: s.humidity_pct,
                        precipitation_mm: s.precipitation_mm,
                    })
                    .expect("in-memory csv write");
            }
        }
        if self.samples.is_empty() {
            writer.write_record(CSV_HEADER).expect("in-memory csv write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), WeatherError> {
        io::write_atomic(path, self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn stations(&self) -> &[StationId] {
        &self.stations
    }

    pub fn sample(&self, slot: usize, station: StationId) -> Result<&WeatherSample, WeatherError> {
        if slot >= self.slot_count {
            return Err(WeatherError::SlotOutOfRange { slot, slot_count: self.slot_count });
        }
        let i = self.stations.binary_search(&station).map_err(|_| WeatherError::UnknownStation(station))?;
        Ok(&self.samples[slot * self.stations.len() + i])
    }

    /// Replace one cell; used by generators and tests.
    pub fn set(&mut self, slot: usize, station: StationId, sample: WeatherSample) -> Result<(), WeatherError> {
        if slot >= self.slot_count {
            return Err(WeatherError::SlotOutOfRange { slot, slot_count: self.slot_count });
        }
        let i = self.stations.binary_search(&station).map_err(|_| WeatherError::UnknownStation(station))?;
        let n = self.stations.len();
        self.samples[slot * n + i] = sample;
        Ok(())
    }
}

/// Signed wind component along the direction of travel (positive = tailwind).
pub fn along_track_wind(sample: &WeatherSample, travel_bearing_deg: f64) -> f64 {
    -sample.wind_speed_ms * (sample.wind_direction_deg - travel_bearing_deg).to_radians().cos()
}

/// Ground speed after projecting the wind onto the track, capped at
/// `1.5 * v_nominal`. Gated or too-slow flights are [`Infeasible`].
pub fn adjusted_speed(
    v_nominal: f64,
    sample: &WeatherSample,
    travel_bearing_deg: f64,
    limits: &SafetyLimits,
) -> Result<f64, Infeasible> {
    if sample.wind_speed_ms > limits.max_wind_ms {
        return Err(Infeasible::WindAboveLimit);
    }
    if sample.precipitation_mm > limits.max_precip_mm {
        return Err(Infeasible::PrecipitationAboveLimit);
    }
    let v = (v_nominal + along_track_wind(sample, travel_bearing_deg)).min(SPEED_CAP_FACTOR * v_nominal);
    if v < limits.min_ground_speed_ms {
        return Err(Infeasible::BelowMinimumGroundSpeed);
    }
    Ok(v)
}

/// Both corridor endpoints must be within the gating thresholds.
pub fn edge_passable(a: &WeatherSample, b: &WeatherSample, limits: &SafetyLimits) -> bool {
    a.within(limits) && b.within(limits)
}
