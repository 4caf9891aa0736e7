//! National brewery population: size categories, facility locations, and
//! the batch plan and tank fleet derived for each facility.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::Area;
use crate::thermo::{tank_dimensions, PerStyle, Style, TankGeometry, ThermoError, DEFAULT_U_VALUE};

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// One row of the national size distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeCategory {
    pub index: u8,
    /// hl/year, inclusive
    pub volume_min: f64,
    /// hl/year, exclusive
    pub volume_max: f64,
    /// Mode of the triangular volume distribution; midpoint when absent.
    #[serde(default)]
    pub mode: Option<f64>,
    pub count: usize,
    /// Fraction of annual volume brewed as ale.
    pub ale_share: f64,
    pub brewdays_per_week: u32,
}

impl SizeCategory {
    fn row(index: u8, min: f64, max: f64, mode: Option<f64>, count: usize, ale: f64, days: u32) -> Self {
        Self {
            index,
            volume_min: min,
            volume_max: max,
            mode,
            count,
            ale_share: ale,
            brewdays_per_week: days,
        }
    }

    pub fn mode_or_midpoint(&self) -> f64 {
        self.mode.unwrap_or(0.5 * (self.volume_min + self.volume_max))
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        let bad = |m: String| Err(PopulationError::Config(format!("category {}: {m}", self.index)));
        if !(self.volume_min >= 0.0 && self.volume_min < self.volume_max && self.volume_max.is_finite()) {
            return bad(format!(
                "need 0 <= volume_min < volume_max, got [{}, {})",
                self.volume_min, self.volume_max
            ));
        }
        let mode = self.mode_or_midpoint();
        if !(self.volume_min..=self.volume_max).contains(&mode) {
            return bad(format!(
                "mode {mode} outside [{}, {}]",
                self.volume_min, self.volume_max
            ));
        }
        if !(0.0..=1.0).contains(&self.ale_share) {
            return bad(format!("ale_share {} outside [0, 1]", self.ale_share));
        }
        if !(1..=7).contains(&self.brewdays_per_week) {
            return bad(format!("brewdays_per_week {} outside 1..=7", self.brewdays_per_week));
        }
        Ok(())
    }

    /// The eight Danish size categories. Category 1 is floored at 50 hl and
    /// the open-ended category 8 is capped at 4 000 000 hl.
    pub fn danish_defaults() -> Vec<SizeCategory> {
        vec![
            Self::row(1, 50.0, 680.0, None, 181, 0.8, 3),
            Self::row(2, 680.0, 5_100.0, None, 40, 0.8, 3),
            Self::row(3, 5_100.0, 10_000.0, None, 6, 0.7, 5),
            Self::row(4, 10_000.0, 17_500.0, None, 4, 0.7, 5),
            Self::row(5, 17_500.0, 36_000.0, None, 3, 0.7, 5),
            Self::row(6, 36_000.0, 70_000.0, None, 1, 0.6, 7),
            Self::row(7, 70_000.0, 1_350_000.0, None, 3, 0.6, 7),
            Self::row(8, 1_350_000.0, 4_000_000.0, Some(2_500_000.0), 1, 0.5, 7),
        ]
    }
}

/// Scale category counts to `total` facilities with largest-remainder
/// rounding; ties go to the lower category index.
pub fn rescale_counts(categories: &[SizeCategory], total: usize) -> Vec<SizeCategory> {
    let sum: usize = categories.iter().map(|c| c.count).sum();
    if sum == total || sum == 0 {
        return categories.to_vec();
    }
    let quotas: Vec<f64> = categories
        .iter()
        .map(|c| c.count as f64 * total as f64 / sum as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..categories.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    categories
        .iter()
        .zip(counts)
        .map(|(c, count)| SizeCategory { count, ..c.clone() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GisRecord {
    pub name: String,
    /// degrees east
    pub longitude: f64,
    /// degrees north
    pub latitude: f64,
}

pub const LONGITUDE_BOUNDS: (f64, f64) = (7.0, 16.0);
pub const LATITUDE_BOUNDS: (f64, f64) = (54.0, 58.0);

pub fn read_gis<R: Read>(reader: R) -> Result<Vec<GisRecord>, PopulationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| PopulationError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["name", "longitude", "latitude"] {
        return Err(PopulationError::Parse {
            line: 1,
            message: format!("expected header name,longitude,latitude, found {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| PopulationError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(PopulationError::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let name = record[0].to_string();
        if name.is_empty() {
            return Err(PopulationError::Parse {
                line,
                message: "empty name".into(),
            });
        }
        let coord = |idx: usize, field: &str| -> Result<f64, PopulationError> {
            let v: f64 = record[idx].parse().map_err(|_| PopulationError::Parse {
                line,
                message: format!("bad {field} {:?}", &record[idx]),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(PopulationError::Parse {
                    line,
                    message: format!("non-finite {field}"),
                })
            }
        };
        let longitude = coord(1, "longitude")?;
        let latitude = coord(2, "latitude")?;
        for (field, v, (lo, hi)) in [
            ("longitude", longitude, LONGITUDE_BOUNDS),
            ("latitude", latitude, LATITUDE_BOUNDS),
        ] {
            if !(lo..=hi).contains(&v) {
                return Err(PopulationError::Validation {
                    line,
                    message: format!("{field} {v} outside [{lo}, {hi}]"),
                });
            }
        }
        out.push(GisRecord {
            name,
            longitude,
            latitude,
        });
    }
    Ok(out)
}

pub fn load_gis(path: &Path) -> Result<Vec<GisRecord>, PopulationError> {
    let file = std::fs::File::open(path).map_err(|source| PopulationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_gis(std::io::BufReader::new(file))
}

pub fn write_gis<W: std::io::Write>(records: &[GisRecord], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "longitude", "latitude"])?;
    for r in records {
        w.write_record([r.name.clone(), format!("{}", r.longitude), format!("{}", r.latitude)])?;
    }
    w.flush()
}

/// Great Belt meridian separating DK1 (west) from DK2 (east).
pub const DEFAULT_AREA_SPLIT: f64 = 11.0;

pub fn assign_area(longitude: f64, split: f64) -> Area {
    if longitude < split {
        Area::Dk1
    } else {
        Area::Dk2
    }
}

/// Inverse CDF of the triangular distribution on `[min, max]` with `mode`.
pub fn sample_triangular(min: f64, mode: f64, max: f64, u: f64) -> Result<f64, PopulationError> {
    if min == max {
        return Ok(min);
    }
    if !(min < max && min <= mode && mode <= max) {
        return Err(PopulationError::Config(format!(
            "triangular parameters must satisfy min <= mode <= max, got ({min}, {mode}, {max})"
        )));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(PopulationError::Config(format!("u = {u} outside [0, 1]")));
    }
    let width = max - min;
    let split = (mode - min) / width;
    let v = if u < split {
        min + (u * width * (mode - min)).sqrt()
    } else {
        max - ((1.0 - u) * width * (max - mode)).sqrt()
    };
    Ok(v.clamp(min, max))
}

/// Derivation knobs for batch plans and tank fleets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSettings {
    pub working_weeks: u32,
    /// Fraction of tank volume a batch may fill.
    pub headspace: f64,
    pub u_value: f64,
    pub area_split: f64,
}

impl Default for PlanSettings {
    fn default() -> Self {
        Self {
            working_weeks: 48,
            headspace: 0.9,
            u_value: DEFAULT_U_VALUE,
            area_split: DEFAULT_AREA_SPLIT,
        }
    }
}

/// Days a batch of each style occupies its tank.
pub type ResidenceDays = PerStyle<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankFleet {
    pub style: Style,
    pub geometry: TankGeometry,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPlan {
    /// hl
    pub batch_volume: f64,
    pub brews_ale: u32,
    pub brews_lager: u32,
    pub tank_fleet: Vec<TankFleet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrewerySpec {
    pub id: usize,
    pub name: String,
    pub category: u8,
    /// hl/year
    pub annual_volume: f64,
    pub area: Area,
    pub longitude: f64,
    pub latitude: f64,
    pub brewdays_per_week: u32,
    /// hl
    pub batch_volume: f64,
    pub brews_per_year_ale: u32,
    pub brews_per_year_lager: u32,
    pub tank_fleet: Vec<TankFleet>,
}

impl BrewerySpec {
    pub fn total_brews(&self) -> u32 {
        self.brews_per_year_ale + self.brews_per_year_lager
    }

    pub fn fleet(&self, style: Style) -> Option<&TankFleet> {
        self.tank_fleet.iter().find(|f| f.style == style)
    }

    pub fn tank_count(&self, style: Style) -> usize {
        self.fleet(style).map_or(0, |f| f.count)
    }
}

pub fn plan_capacity(
    annual_volume: f64,
    category: &SizeCategory,
    settings: &PlanSettings,
    residence: &ResidenceDays,
) -> Result<CapacityPlan, PopulationError> {
    if settings.working_weeks == 0 {
        return Err(PopulationError::Config("working_weeks must be positive".into()));
    }
    if !(annual_volume > 0.0) {
        return Err(PopulationError::Config(format!(
            "annual volume must be positive, got {annual_volume}"
        )));
    }
    if !(settings.headspace > 0.0 && settings.headspace <= 1.0) {
        return Err(PopulationError::Config(format!(
            "headspace {} outside (0, 1]",
            settings.headspace
        )));
    }
    let total = category.brewdays_per_week * settings.working_weeks;
    let batch_volume = annual_volume / total as f64;
    let brews_ale = ((total as f64 * category.ale_share + 0.5).floor() as u32).min(total);
    let brews_lager = total - brews_ale;

    let tank_volume_m3 = batch_volume / 10.0 / settings.headspace;
    let geometry = tank_dimensions(tank_volume_m3, settings.u_value)?;
    let mut tank_fleet = Vec::new();
    for (style, brews) in [(Style::Ale, brews_ale), (Style::Lager, brews_lager)] {
        if brews == 0 {
            continue;
        }
        let per_week = category.brewdays_per_week as f64 * brews as f64 / total as f64;
        // tolerance keeps exact integers from rounding up
        let count = (per_week * *residence.get(style) / 7.0 - 1e-9).ceil().max(1.0) as usize;
        tank_fleet.push(TankFleet { style, geometry, count });
    }
    Ok(CapacityPlan {
        batch_volume,
        brews_ale,
        brews_lager,
        tank_fleet,
    })
}

/// Substream generator for facility `id`, independent of evaluation order.
fn facility_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 + 1);
    rng
}

pub fn validate_categories(categories: &[SizeCategory]) -> Result<(), PopulationError> {
    if categories.is_empty() {
        return Err(PopulationError::Config("no size categories".into()));
    }
    for (i, c) in categories.iter().enumerate() {
        c.validate()?;
        if categories[..i].iter().any(|o| o.index == c.index) {
            return Err(PopulationError::Config(format!("duplicate category index {}", c.index)));
        }
    }
    Ok(())
}

/// Build the facility population.
///
/// Categories are dealt by shuffling the exact count multiset, so every
/// seed reproduces the configured histogram. Volumes come from a
/// per-facility random substream.
pub fn synthesize_population(
    gis: &[GisRecord],
    categories: &[SizeCategory],
    seed: u64,
    settings: &PlanSettings,
    residence: &ResidenceDays,
) -> Result<Vec<BrewerySpec>, PopulationError> {
    if gis.is_empty() {
        return Err(PopulationError::Config("facility list is empty".into()));
    }
    validate_categories(categories)?;
    let total: usize = categories.iter().map(|c| c.count).sum();
    if total != gis.len() {
        return Err(PopulationError::Config(format!(
            "category counts sum to {total} but {} facilities were supplied",
            gis.len()
        )));
    }
    let mut deck: Vec<usize> = categories
        .iter()
        .enumerate()
        .flat_map(|(i, c)| std::iter::repeat_n(i, c.count))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    deck.shuffle(&mut rng);

    gis.iter()
        .zip(deck)
        .enumerate()
        .map(|(id, (record, ci))| {
            let cat = &categories[ci];
            let u: f64 = facility_rng(seed, id).random();
            let mut annual_volume = sample_triangular(cat.volume_min, cat.mode_or_midpoint(), cat.volume_max, u)?;
            if annual_volume >= cat.volume_max {
                annual_volume = cat.volume_max.next_down();
            }
            let plan = plan_capacity(annual_volume, cat, settings, residence)?;
            Ok(BrewerySpec {
                id,
                name: record.name.clone(),
                category: cat.index,
                annual_volume,
                area: assign_area(record.longitude, settings.area_split),
                longitude: record.longitude,
                latitude: record.latitude,
                brewdays_per_week: cat.brewdays_per_week,
                batch_volume: plan.batch_volume,
                brews_per_year_ale: plan.brews_ale,
                brews_per_year_lager: plan.brews_lager,
                tank_fleet: plan.tank_fleet,
            })
        })
        .collect()
}

/// Plausible facility locations clustered around Danish towns.
pub fn synthetic_gis(n: usize, seed: u64) -> Vec<GisRecord> {
    const TOWNS: [(&str, f64, f64, u32); 10] = [
        ("Copenhagen", 12.57, 55.68, 7),
        ("Aarhus", 10.20, 56.15, 4),
        ("Odense", 10.39, 55.40, 3),
        ("Aalborg", 9.92, 57.05, 2),
        ("Esbjerg", 8.45, 55.47, 1),
        ("Roskilde", 12.08, 55.64, 2),
        ("Vejle", 9.53, 55.71, 2),
        ("Naestved", 11.76, 55.23, 1),
        ("Herning", 8.97, 56.14, 1),
        ("Helsingor", 12.59, 56.03, 1),
    ];
    let weight_sum: u32 = TOWNS.iter().map(|t| t.3).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x6715);
    (0..n)
        .map(|i| {
            let mut pick = rng.random_range(0..weight_sum);
            let town = TOWNS
                .iter()
                .find(|t| {
                    if pick < t.3 {
                        true
                    } else {
                        pick -= t.3;
                        false
                    }
                })
                .expect("weights cover range");
            let lon = (town.1 + rng.random_range(-0.12..0.12)).clamp(LONGITUDE_BOUNDS.0, LONGITUDE_BOUNDS.1);
            let lat = (town.2 + rng.random_range(-0.08..0.08)).clamp(LATITUDE_BOUNDS.0, LATITUDE_BOUNDS.1);
            GisRecord {
                name: format!("{} Brewery {:03}", town.0, i + 1),
                longitude: (lon * 1e4).round() / 1e4,
                latitude: (lat * 1e4).round() / 1e4,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residence(ale: f64, lager: f64) -> ResidenceDays {
        ResidenceDays::new(ale, lager)
    }

    #[test]
    fn default_categories_sum_to_239() {
        let cats = SizeCategory::danish_defaults();
        assert_eq!(cats.iter().map(|c| c.count).sum::<usize>(), 239);
        let counts: Vec<usize> = cats.iter().map(|c| c.count).collect();
        assert_eq!(counts, [181, 40, 6, 4, 3, 1, 3, 1]);
        let days: Vec<u32> = cats.iter().map(|c| c.brewdays_per_week).collect();
        assert_eq!(days, [3, 3, 5, 5, 5, 7, 7, 7]);
        validate_categories(&cats).unwrap();
    }

    #[test]
    fn area_split_is_half_open() {
        assert_eq!(assign_area(10.39, DEFAULT_AREA_SPLIT), Area::Dk1);
        assert_eq!(assign_area(12.57, DEFAULT_AREA_SPLIT), Area::Dk2);
        assert_eq!(assign_area(11.0, DEFAULT_AREA_SPLIT), Area::Dk2);
    }

    #[test]
    fn triangular_endpoints() {
        assert_eq!(sample_triangular(10.0, 20.0, 40.0, 0.0).unwrap(), 10.0);
        assert_eq!(sample_triangular(10.0, 20.0, 40.0, 1.0).unwrap(), 40.0);
        assert!((sample_triangular(0.0, 1.0, 2.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sample_triangular(5.0, 5.0, 5.0, 0.3).unwrap(), 5.0);
        assert!(sample_triangular(0.0, 3.0, 2.0, 0.5).is_err());
    }

    #[test]
    fn gis_parsing() {
        let ok = "name,longitude,latitude\nA,10.39,55.4\nB,12.57,55.68\n";
        let recs = read_gis(ok.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].name, "B");
        assert!(read_gis("name,longitude,latitude\n".as_bytes()).unwrap().is_empty());
        match read_gis("name,longitude,latitude\nA,10,55\nB,20.0,55\n".as_bytes()) {
            Err(PopulationError::Validation { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("longitude"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_gis("name,longitude,latitude\nA,x,55\n".as_bytes()),
            Err(PopulationError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_gis("name,lon,lat\n".as_bytes()),
            Err(PopulationError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn plan_capacity_arithmetic() {
        let cat = SizeCategory::row(1, 50.0, 5000.0, None, 1, 0.8, 3);
        let plan = plan_capacity(720.0, &cat, &PlanSettings::default(), &residence(14.0, 35.0)).unwrap();
        assert_eq!(plan.brews_ale + plan.brews_lager, 144);
        assert!((plan.batch_volume - 5.0).abs() < 1e-12);
        assert!((plan.batch_volume * 144.0 - 720.0).abs() < 1e-9);
        assert_eq!(plan.brews_ale, 115);
        // 115/48 ale per week for 2 weeks -> 5 tanks; 29/48 lager per week for 5 weeks -> 4
        assert_eq!(plan.tank_fleet[0].count, 5);
        assert_eq!(plan.tank_fleet[1].count, 4);
        let tank = plan.tank_fleet[0].geometry;
        assert!((0.5 / tank.volume - 0.9).abs() < 1e-12);
    }

    #[test]
    fn single_style_tank_counts() {
        let all_ale = SizeCategory::row(1, 50.0, 5000.0, None, 1, 1.0, 3);
        let p = plan_capacity(720.0, &all_ale, &PlanSettings::default(), &residence(7.0, 14.0)).unwrap();
        assert_eq!(p.tank_fleet.len(), 1);
        assert_eq!(p.tank_fleet[0].count, 3);
        let all_lager = SizeCategory {
            ale_share: 0.0,
            ..all_ale
        };
        let p = plan_capacity(720.0, &all_lager, &PlanSettings::default(), &residence(7.0, 14.0)).unwrap();
        assert_eq!(p.tank_fleet[0].style, Style::Lager);
        assert_eq!(p.tank_fleet[0].count, 6);
    }

    #[test]
    fn zero_working_weeks_is_config_error() {
        let cat = SizeCategory::row(1, 50.0, 5000.0, None, 1, 0.8, 3);
        let s = PlanSettings {
            working_weeks: 0,
            ..Default::default()
        };
        assert!(matches!(
            plan_capacity(720.0, &cat, &s, &residence(14.0, 35.0)),
            Err(PopulationError::Config(_))
        ));
    }

    #[test]
    fn rescale_to_ten() {
        let cats = rescale_counts(&SizeCategory::danish_defaults(), 10);
        let counts: Vec<usize> = cats.iter().map(|c| c.count).collect();
        assert_eq!(counts.iter().sum::<usize>(), 10);
        assert_eq!(counts, [8, 2, 0, 0, 0, 0, 0, 0]);
        let same = rescale_counts(&SizeCategory::danish_defaults(), 239);
        assert_eq!(same, SizeCategory::danish_defaults());
    }

    #[test]
    fn count_mismatch_rejected() {
        let gis = synthetic_gis(10, 1);
        let r = synthesize_population(
            &gis,
            &SizeCategory::danish_defaults(),
            1,
            &PlanSettings::default(),
            &residence(14.0, 35.0),
        );
        assert!(matches!(r, Err(PopulationError::Config(_))));
    }

    #[test]
    fn synthetic_gis_is_in_bounds_and_split() {
        let gis = synthetic_gis(239, 3);
        assert_eq!(gis.len(), 239);
        let dk2 = gis
            .iter()
            .filter(|g| assign_area(g.longitude, DEFAULT_AREA_SPLIT) == Area::Dk2)
            .count();
        assert!(dk2 > 30 && dk2 < 200);
        let mut buf = Vec::new();
        write_gis(&gis, &mut buf).unwrap();
        assert_eq!(read_gis(buf.as_slice()).unwrap(), gis);
    }
}
