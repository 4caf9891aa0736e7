//! Hourly market data per synchronous area and energy cost/emission
//! accounting.
//!
//! All timestamps are UTC. A series is a contiguous run of hourly slots
//! starting at an hour-aligned instant; slot `k` covers
//! `[start + k h, start + (k + 1) h)`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} but found {found}")]
    Gap {
        line: usize,
        expected: DateTime<Utc>,
        found: DateTime<Utc>,
    },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("{0} lies outside the series span")]
    OutOfRange(DateTime<Utc>),
    #[error("series spans differ: {0}")]
    SpanMismatch(String),
    #[error("empty series")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Area {
    #[serde(rename = "DK1")]
    Dk1,
    #[serde(rename = "DK2")]
    Dk2,
    #[serde(rename = "national")]
    National,
}

impl Area {
    pub fn as_str(self) -> &'static str {
        match self {
            Area::Dk1 => "DK1",
            Area::Dk2 => "DK2",
            Area::National => "national",
        }
    }
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    /// DKK/MWh; may be negative.
    Price,
    /// g CO₂/kWh
    Co2,
    /// °C
    Ambient,
}

impl SeriesKind {
    fn check(self, value: f64) -> Result<(), String> {
        if !value.is_finite() {
            return Err(format!("non-finite value {value}"));
        }
        match self {
            SeriesKind::Price => Ok(()),
            SeriesKind::Co2 if value < 0.0 => Err(format!("negative CO2 intensity {value}")),
            SeriesKind::Ambient if !(-40.0..=50.0).contains(&value) => {
                Err(format!("ambient temperature {value} outside [-40, 50]"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub area: Area,
    pub kind: SeriesKind,
    start: DateTime<Utc>,
    values: Vec<f64>,
}

const HOUR: i64 = 3600;

pub fn is_hour_aligned(t: DateTime<Utc>) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

pub fn year_start(year: i32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap()
}

pub fn hours_in_year(year: i32) -> usize {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        8784
    } else {
        8760
    }
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

impl HourlySeries {
    pub fn new(area: Area, kind: SeriesKind, start: DateTime<Utc>, values: Vec<f64>) -> Result<Self, MarketError> {
        if !is_hour_aligned(start) {
            return Err(MarketError::Validation {
                line: 0,
                message: format!("start {start} is not hour-aligned"),
            });
        }
        if values.is_empty() {
            return Err(MarketError::Empty);
        }
        for (i, v) in values.iter().enumerate() {
            kind.check(*v)
                .map_err(|message| MarketError::Validation { line: i + 2, message })?;
        }
        Ok(Self {
            area,
            kind,
            start,
            values,
        })
    }

    pub fn constant(area: Area, kind: SeriesKind, year: i32, value: f64) -> Result<Self, MarketError> {
        Self::new(area, kind, year_start(year), vec![value; hours_in_year(year)])
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// Exclusive end of the last slot.
    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::seconds(HOUR * self.values.len() as i64)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(HOUR * index as i64)
    }

    /// True when this series covers exactly the calendar year.
    pub fn covers_year(&self, year: i32) -> bool {
        self.start == year_start(year) && self.len() == hours_in_year(year)
    }

    pub fn same_span(&self, other: &HourlySeries) -> bool {
        self.start == other.start && self.len() == other.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn index_of(&self, t: DateTime<Utc>) -> Result<usize, MarketError> {
        if t < self.start || t >= self.end() {
            return Err(MarketError::OutOfRange(t));
        }
        Ok(((t - self.start).num_seconds() / HOUR) as usize)
    }

    /// Value of the slot containing `t`.
    pub fn value_at(&self, t: DateTime<Utc>) -> Result<f64, MarketError> {
        self.index_of(t).map(|i| self.values[i])
    }

    pub fn read_csv<R: Read>(reader: R, kind: SeriesKind, area: Area) -> Result<Self, MarketError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| MarketError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
            return Err(MarketError::Parse {
                line: 1,
                message: format!("expected header timestamp,value, found {:?}", headers),
            });
        }
        let mut start = None;
        let mut values = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| MarketError::Parse {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 2 {
                return Err(MarketError::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let t = parse_timestamp(&record[0]).map_err(|message| MarketError::Parse { line, message })?;
            if !is_hour_aligned(t) {
                return Err(MarketError::Validation {
                    line,
                    message: format!("timestamp {} is not hour-aligned", format_timestamp(t)),
                });
            }
            let v: f64 = record[1].parse().map_err(|e| MarketError::Parse {
                line,
                message: format!("bad value {:?}: {e}", &record[1]),
            })?;
            if !v.is_finite() {
                return Err(MarketError::Parse {
                    line,
                    message: format!("non-finite value {v}"),
                });
            }
            kind.check(v)
                .map_err(|message| MarketError::Validation { line, message })?;
            let first: DateTime<Utc> = *start.get_or_insert(t);
            let expected = first + Duration::seconds(HOUR * values.len() as i64);
            if t != expected {
                return Err(MarketError::Gap {
                    line,
                    expected,
                    found: t,
                });
            }
            values.push(v);
        }
        let start = start.ok_or(MarketError::Empty)?;
        Ok(Self {
            area,
            kind,
            start,
            values,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            // `{}` on f64 prints the shortest string that round-trips exactly
            w.write_record([format_timestamp(self.timestamp(i)), format!("{v}")])?;
        }
        w.flush()
    }
}

pub fn load_hourly_csv(path: &Path, kind: SeriesKind, area: Area) -> Result<HourlySeries, MarketError> {
    let file = std::fs::File::open(path).map_err(|source| MarketError::Io {
        path: path.display().to_string(),
        source,
    })?;
    HourlySeries::read_csv(std::io::BufReader::new(file), kind, area)
}

pub fn write_hourly_csv(series: &HourlySeries, path: &Path) -> Result<(), MarketError> {
    let io = |source| MarketError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    series.write_csv(std::io::BufWriter::new(file)).map_err(io)
}

/// Hourly electric load with its cost and emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    /// kWh per hour slot
    pub load: Vec<f64>,
    /// DKK
    pub cost: f64,
    /// kg CO₂
    pub emissions: f64,
}

impl EnergyAccount {
    pub fn total_load(&self) -> f64 {
        self.load.iter().sum()
    }

    pub fn peak(&self) -> f64 {
        self.load.iter().copied().fold(0.0, f64::max)
    }
}

/// Cost at spot price plus a flat `adder` in DKK/kWh.
pub fn account_with_adder(
    load: &[f64],
    price: &HourlySeries,
    co2: &HourlySeries,
    adder: f64,
) -> Result<EnergyAccount, MarketError> {
    if !price.same_span(co2) {
        return Err(MarketError::SpanMismatch(format!(
            "price {}+{}h vs co2 {}+{}h",
            format_timestamp(price.start),
            price.len(),
            format_timestamp(co2.start),
            co2.len()
        )));
    }
    if load.len() != price.len() {
        return Err(MarketError::SpanMismatch(format!(
            "load has {} hours, prices have {}",
            load.len(),
            price.len()
        )));
    }
    let (cost, emissions) = load
        .iter()
        .zip(price.values())
        .zip(co2.values())
        .fold((0.0, 0.0), |(c, e), ((l, p), g)| {
            (c + l * (p / 1000.0 + adder), e + l * g / 1000.0)
        });
    Ok(EnergyAccount {
        load: load.to_vec(),
        cost,
        emissions,
    })
}

/// `cost = Σ load·price / 1000` (DKK), `emissions = Σ load·co2 / 1000` (kg).
pub fn account(load: &[f64], price: &HourlySeries, co2: &HourlySeries) -> Result<EnergyAccount, MarketError> {
    account_with_adder(load, price, co2, 0.0)
}

/// Deterministic "2021-like" data for tests and desk-scale runs.
pub mod synthetic {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    pub struct SyntheticMarket {
        /// Annual mean spot price, DKK/MWh.
        pub mean_price: f64,
        /// Daily `(peak - off-peak) / peak` of the intraday price shape.
        pub daily_spread: f64,
        /// Relative winter/summer swing of the daily mean price.
        pub seasonal_swing: f64,
        /// Relative standard deviation of day-to-day price level noise.
        pub day_noise: f64,
        /// Annual mean CO₂ intensity, g/kWh.
        pub mean_co2: f64,
        /// Mean air temperature around the tanks, °C.
        pub hall_mean: f64,
        /// Seasonal half-amplitude of the hall temperature, K.
        pub hall_seasonal: f64,
        /// Daily half-amplitude of the hall temperature, K.
        pub hall_daily: f64,
        /// Local clock offset from UTC, hours.
        pub utc_offset_hours: i64,
    }

    impl Default for SyntheticMarket {
        fn default() -> Self {
            Self {
                mean_price: 650.0,
                daily_spread: 0.4,
                seasonal_swing: 0.2,
                day_noise: 0.1,
                mean_co2: 150.0,
                hall_mean: 18.0,
                hall_seasonal: 3.0,
                hall_daily: 1.5,
                utc_offset_hours: 1,
            }
        }
    }

    /// Intraday shape in [-1, 1]: night trough, morning and evening peaks.
    fn intraday_shape(local_hour: u32, weekend: bool) -> f64 {
        const SHAPE: [f64; 24] = [
            -0.7, -0.9, -1.0, -1.0, -0.9, -0.6, -0.1, 0.5, 0.7, 0.6, 0.3, 0.1, 0.0, -0.1, -0.1, 0.1, 0.4, 0.8, 1.0,
            0.9, 0.5, 0.2, -0.2, -0.5,
        ];
        let s = SHAPE[local_hour as usize];
        if weekend {
            // flatter weekend peaks, same trough
            if s > 0.0 {
                s * 0.6
            } else {
                s
            }
        } else {
            s
        }
    }

    fn area_salt(area: Area) -> u64 {
        match area {
            Area::Dk1 => 1,
            Area::Dk2 => 2,
            Area::National => 3,
        }
    }

    impl SyntheticMarket {
        fn local(&self, t: DateTime<Utc>) -> DateTime<Utc> {
            t + Duration::hours(self.utc_offset_hours)
        }

        fn day_levels(&self, year: i32, seed: u64, salt: u64, sd: f64) -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(salt);
            let days = hours_in_year(year) / 24 + 1;
            (0..days)
                .map(|_| {
                    // sum of uniforms, roughly normal with the given sd
                    let z: f64 = (0..4).map(|_| rng.random::<f64>() - 0.5).sum::<f64>() * 3f64.sqrt();
                    (1.0 + sd * z).max(0.2)
                })
                .collect()
        }

        pub fn prices(&self, year: i32, area: Area, seed: u64) -> HourlySeries {
            let start = year_start(year);
            let n = hours_in_year(year);
            let levels = self.day_levels(year, seed, 10 + area_salt(area), self.day_noise);
            // (max - min)/max = s  with price = m(1 + a·shape):  a = s / (2 - s)
            let amp = self.daily_spread / (2.0 - self.daily_spread);
            let values = (0..n)
                .map(|k| {
                    let t = self.local(start + Duration::hours(k as i64));
                    let doy = t.ordinal0() as f64;
                    let season = 1.0 + self.seasonal_swing * (2.0 * PI * (doy - 15.0) / 365.0).cos();
                    let weekend = t.weekday().number_from_monday() >= 6;
                    let day = (k / 24).min(levels.len() - 1);
                    let mean = self.mean_price * season * levels[day] * if weekend { 0.9 } else { 1.0 };
                    mean * (1.0 + amp * intraday_shape(t.hour(), weekend))
                })
                .collect();
            HourlySeries::new(area, SeriesKind::Price, start, values).expect("synthetic prices are valid")
        }

        pub fn co2(&self, year: i32, area: Area, seed: u64) -> HourlySeries {
            let start = year_start(year);
            let n = hours_in_year(year);
            let levels = self.day_levels(year, seed, 20 + area_salt(area), 0.25);
            let values = (0..n)
                .map(|k| {
                    let t = self.local(start + Duration::hours(k as i64));
                    let doy = t.ordinal0() as f64;
                    let season = 1.0 + 0.25 * (2.0 * PI * (doy - 15.0) / 365.0).cos();
                    let day = (k / 24).min(levels.len() - 1);
                    let v = self.mean_co2 * season * levels[day] * (1.0 + 0.3 * intraday_shape(t.hour(), false));
                    v.max(0.0)
                })
                .collect();
            HourlySeries::new(area, SeriesKind::Co2, start, values).expect("synthetic co2 is valid")
        }

        /// Air temperature in the fermentation hall.
        pub fn ambient(&self, year: i32, seed: u64) -> HourlySeries {
            let start = year_start(year);
            let n = hours_in_year(year);
            let levels = self.day_levels(year, seed, 30, 1.0);
            let values = (0..n)
                .map(|k| {
                    let t = self.local(start + Duration::hours(k as i64));
                    let doy = t.ordinal0() as f64;
                    // warmest around day 200 (late July), warmest hour 15:00
                    let season = self.hall_seasonal * (2.0 * PI * (doy - 200.0) / 365.0).cos();
                    let daily = self.hall_daily * (2.0 * PI * (t.hour() as f64 - 15.0) / 24.0).cos();
                    let day = (k / 24).min(levels.len() - 1);
                    let noise = 0.5 * (levels[day] - 1.0);
                    (self.hall_mean + season + daily + noise).clamp(-40.0, 50.0)
                })
                .collect();
            HourlySeries::new(Area::National, SeriesKind::Ambient, start, values).expect("synthetic ambient is valid")
        }
    }

    /// Smallest per-day `(max - min) / max` over the series.
    pub fn min_daily_spread(series: &HourlySeries) -> f64 {
        series
            .values()
            .chunks(24)
            .filter(|d| d.len() == 24)
            .map(|d| {
                let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = d.iter().copied().fold(f64::INFINITY, f64::min);
                (max - min) / max
            })
            .fold(f64::INFINITY, f64::min)
    }
}
