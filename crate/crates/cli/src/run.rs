//! Input loading, the per-brewery fan-out and the ordered reduction into a
//! national report.

use std::path::Path;

use brewflex_core::flexibility::savings;
use brewflex_core::market::synthetic::SyntheticMarket;
use brewflex_core::market::{load_hourly_csv, Area, HourlySeries, MarketError, SeriesKind};
use brewflex_core::population::{
    load_gis, rescale_counts, synthesize_population, synthetic_gis, BrewerySpec, GisRecord, PopulationError,
    SizeCategory,
};
use brewflex_core::process::{run_brewery, BreweryResult, ControlPolicy, ScenarioData};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::AppError;
use crate::scenario::{Mode, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct ByArea<T> {
    pub dk1: T,
    pub dk2: T,
}

impl<T> ByArea<T> {
    pub fn get(&self, area: Area) -> &T {
        match area {
            Area::Dk2 => &self.dk2,
            _ => &self.dk1,
        }
    }

    pub fn get_mut(&mut self, area: Area) -> &mut T {
        match area {
            Area::Dk2 => &mut self.dk2,
            _ => &mut self.dk1,
        }
    }
}

/// Validated, fully loaded inputs of a scenario.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub scenario: Scenario,
    pub categories: Vec<SizeCategory>,
    pub population: Vec<BrewerySpec>,
    pub prices: ByArea<HourlySeries>,
    pub co2: ByArea<HourlySeries>,
    pub ambient: HourlySeries,
    /// Hex SHA-256 of the effective scenario and every bound file.
    pub config_hash: String,
}

fn market_err(name: &str, path: &Path, e: MarketError) -> AppError {
    match e {
        MarketError::Io { .. } => AppError::io(format!("{name} file"), e),
        e => AppError::Validation(format!("{name} file {}: {e}", path.display())),
    }
}

fn population_err(e: PopulationError) -> AppError {
    match e {
        PopulationError::Io { .. } => AppError::io("gis file", e),
        e => AppError::Validation(format!("population: {e}")),
    }
}

fn series(
    name: &str,
    path: Option<&Path>,
    kind: SeriesKind,
    area: Area,
    year: i32,
    fallback: impl FnOnce() -> HourlySeries,
) -> Result<HourlySeries, AppError> {
    let s = match path {
        Some(p) => load_hourly_csv(p, kind, area).map_err(|e| market_err(name, p, e))?,
        None => fallback(),
    };
    if !s.covers_year(year) {
        return Err(AppError::Validation(format!(
            "{name} series starts {} with {} hours; it must cover exactly the year {year}",
            s.start(),
            s.len()
        )));
    }
    Ok(s)
}

fn with_adder(s: HourlySeries, adder_dkk_per_kwh: f64) -> Result<HourlySeries, AppError> {
    if adder_dkk_per_kwh == 0.0 {
        return Ok(s);
    }
    let values = s.values().iter().map(|p| p + 1000.0 * adder_dkk_per_kwh).collect();
    HourlySeries::new(s.area, s.kind, s.start(), values).map_err(|e| AppError::Validation(e.to_string()))
}

impl Inputs {
    /// Load and validate everything a run needs; nothing is simulated yet.
    pub fn load(scenario: Scenario) -> Result<Self, AppError> {
        scenario.validate()?;
        let year = scenario.year;
        let files = &scenario.files;
        let market: &SyntheticMarket = &scenario.synthetic;
        let seed = scenario.data_seed;

        let mut categories = scenario.population.categories.clone();
        let configured: usize = categories.iter().map(|c| c.count).sum();
        let gis: Vec<GisRecord> = match (&files.gis, scenario.facilities) {
            (Some(p), n) => {
                let mut records = load_gis(p).map_err(population_err)?;
                let want = n.unwrap_or(configured);
                if n.is_some() && records.len() < want {
                    return Err(AppError::Validation(format!(
                        "{} lists {} facilities but {want} were requested",
                        p.display(),
                        records.len()
                    )));
                }
                if n.is_none() && records.len() != want {
                    return Err(AppError::Validation(format!(
                        "{} lists {} facilities but the categories count {want}; pass --facilities {} to rescale",
                        p.display(),
                        records.len(),
                        records.len()
                    )));
                }
                records.truncate(want);
                records
            }
            (None, n) => synthetic_gis(n.unwrap_or(configured), seed),
        };
        if gis.len() != configured {
            categories = rescale_counts(&categories, gis.len());
        }
        let residence = scenario.params.durations.residence_days();
        let population = synthesize_population(&gis, &categories, scenario.seed, &scenario.population.plan, &residence)
            .map_err(population_err)?;

        let adder = scenario.price_adder_dkk_per_kwh;
        let price = |name, path: &Option<_>, area| -> Result<HourlySeries, AppError> {
            let s = series(name, path.as_deref(), SeriesKind::Price, area, year, || {
                market.prices(year, area, seed)
            })?;
            with_adder(s, adder)
        };
        let prices = ByArea {
            dk1: price("prices_dk1", &files.prices_dk1, Area::Dk1)?,
            dk2: price("prices_dk2", &files.prices_dk2, Area::Dk2)?,
        };
        let co2_for = |name, area| {
            let path = match area {
                Area::Dk2 => files.co2_dk2.as_deref(),
                _ => files.co2_dk1.as_deref(),
            }
            .or(files.co2.as_deref());
            series(name, path, SeriesKind::Co2, area, year, || market.co2(year, area, seed))
        };
        let co2 = ByArea {
            dk1: co2_for("co2_dk1", Area::Dk1)?,
            dk2: co2_for("co2_dk2", Area::Dk2)?,
        };
        let ambient = series(
            "ambient",
            files.ambient.as_deref(),
            SeriesKind::Ambient,
            Area::National,
            year,
            || market.ambient(year, seed),
        )?;

        let config_hash = config_hash(&scenario)?;
        Ok(Self {
            scenario,
            categories,
            population,
            prices,
            co2,
            ambient,
            config_hash,
        })
    }

    pub fn data(&self, area: Area) -> ScenarioData<'_> {
        ScenarioData {
            year: self.scenario.year,
            prices: self.prices.get(area),
            co2: self.co2.get(area),
            ambient: &self.ambient,
        }
    }
}

fn config_hash(scenario: &Scenario) -> Result<String, AppError> {
    let mut h = Sha256::new();
    // output location and worker count do not change results
    let canonical = Scenario {
        out: Default::default(),
        workers: None,
        ..scenario.clone()
    };
    h.update(serde_json::to_vec(&canonical).expect("scenario serializes"));
    for (name, path) in scenario.files.bound() {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(format!("{name} {}", path.display()), e))?;
        h.update(name.as_bytes());
        h.update(Sha256::digest(&bytes));
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Totals of one policy over a set of breweries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Totals {
    pub cost_dkk: f64,
    pub co2_kg: f64,
    pub load_kwh: f64,
}

impl Totals {
    fn add(&mut self, r: &BreweryResult) {
        self.cost_dkk += r.account.cost;
        self.co2_kg += r.account.emissions;
        self.load_kwh += r.account.total_load();
    }
}

/// Relative cost and emission savings of the flexible policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Saving {
    pub cost: Option<f64>,
    pub co2: Option<f64>,
}

fn saving_of(base: &Totals, flex: &Totals) -> Saving {
    let acc = |t: &Totals| brewflex_core::market::EnergyAccount {
        load: Vec::new(),
        cost: t.cost_dkk,
        emissions: t.co2_kg,
    };
    match savings(&acc(base), &acc(flex)) {
        Ok(s) => Saving {
            cost: Some(s.cost),
            co2: s.emissions,
        },
        Err(_) => Saving::default(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub count: usize,
    pub baseline: Option<Totals>,
    pub flexible: Option<Totals>,
    pub saving: Saving,
}

impl Aggregate {
    fn new(mode: Mode) -> Self {
        Self {
            count: 0,
            baseline: mode.runs_baseline().then(Totals::default),
            flexible: mode.runs_flexible().then(Totals::default),
            saving: Saving::default(),
        }
    }

    fn add(&mut self, b: &BreweryRun) {
        self.count += 1;
        if let (Some(t), Some(r)) = (&mut self.baseline, &b.baseline) {
            t.add(r);
        }
        if let (Some(t), Some(r)) = (&mut self.flexible, &b.flexible) {
            t.add(r);
        }
    }

    fn finish(&mut self) {
        if let (Some(b), Some(f)) = (&self.baseline, &self.flexible) {
            self.saving = saving_of(b, f);
        }
    }

    /// Figures of the reference policy: baseline when it ran.
    pub fn primary(&self) -> Totals {
        self.baseline.or(self.flexible).unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct BreweryRun {
    pub spec: BrewerySpec,
    pub baseline: Option<BreweryResult>,
    pub flexible: Option<BreweryResult>,
}

impl BreweryRun {
    pub fn primary(&self) -> &BreweryResult {
        self.baseline
            .as_ref()
            .or(self.flexible.as_ref())
            .expect("at least one policy ran")
    }

    pub fn saving(&self) -> Option<f64> {
        let (b, f) = (self.baseline.as_ref()?, self.flexible.as_ref()?);
        savings(&b.account, &f.account).ok().map(|s| s.cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category: u8,
    #[serde(flatten)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub brewery_id: usize,
    pub category: u8,
    pub intensity_kwh_per_hl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub categories: Vec<u8>,
    pub band_kwh_per_hl: (f64, f64),
    pub checked: usize,
    pub min_intensity: Option<f64>,
    pub max_intensity: Option<f64>,
    pub breaches: Vec<CalibrationRow>,
}

#[derive(Debug, Clone)]
pub struct NationalReport {
    pub inputs: Inputs,
    pub breweries: Vec<BreweryRun>,
    pub categories: Vec<CategoryRow>,
    pub areas: Vec<(Area, Aggregate)>,
    pub national: Aggregate,
    /// kWh per hour for each area; baseline first when both ran.
    pub hourly: Vec<(ControlPolicy, ByArea<Vec<f64>>)>,
    pub calibration: Calibration,
}

impl NationalReport {
    pub fn mode(&self) -> Mode {
        self.inputs.scenario.mode
    }

    pub fn national_peak_kw(&self, policy: ControlPolicy) -> Option<f64> {
        let (_, h) = self.hourly.iter().find(|(p, _)| *p == policy)?;
        Some(h.dk1.iter().zip(&h.dk2).map(|(a, b)| a + b).fold(0.0, f64::max))
    }
}

fn simulate_one(inputs: &Inputs, spec: &BrewerySpec, traces: bool) -> Result<BreweryRun, AppError> {
    let mut params = inputs.scenario.params;
    params.record_traces = traces;
    let data = inputs.data(spec.area);
    let mode = inputs.scenario.mode;
    let run = |policy| run_brewery(spec, &data, &params, policy).map_err(AppError::from_process);
    Ok(BreweryRun {
        spec: spec.clone(),
        baseline: mode.runs_baseline().then(|| run(ControlPolicy::Baseline)).transpose()?,
        flexible: mode.runs_flexible().then(|| run(ControlPolicy::Flexible)).transpose()?,
    })
}

/// Simulate every brewery and reduce in ascending brewery id.
pub fn run_scenario(inputs: Inputs, traces: bool) -> Result<NationalReport, AppError> {
    let work = |inputs: &Inputs| -> Result<Vec<BreweryRun>, AppError> {
        inputs
            .population
            .par_iter()
            .map(|spec| simulate_one(inputs, spec, traces))
            .collect()
    };
    let mut breweries = match inputs.scenario.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| AppError::Validation(format!("worker pool: {e}")))?
            .install(|| work(&inputs))?,
        None => work(&inputs)?,
    };
    breweries.sort_by_key(|b| b.spec.id);
    Ok(reduce(inputs, breweries))
}

fn reduce(inputs: Inputs, breweries: Vec<BreweryRun>) -> NationalReport {
    let mode = inputs.scenario.mode;
    let hours = inputs.ambient.len();
    let mut categories: Vec<CategoryRow> = inputs
        .categories
        .iter()
        .map(|c| CategoryRow {
            category: c.index,
            aggregate: Aggregate::new(mode),
        })
        .collect();
    let mut areas = vec![(Area::Dk1, Aggregate::new(mode)), (Area::Dk2, Aggregate::new(mode))];
    let mut national = Aggregate::new(mode);
    let policies: Vec<ControlPolicy> = [
        (mode.runs_baseline(), ControlPolicy::Baseline),
        (mode.runs_flexible(), ControlPolicy::Flexible),
    ]
    .into_iter()
    .filter_map(|(on, p)| on.then_some(p))
    .collect();
    let mut hourly: Vec<(ControlPolicy, ByArea<Vec<f64>>)> = policies
        .iter()
        .map(|&p| {
            (
                p,
                ByArea {
                    dk1: vec![0.0; hours],
                    dk2: vec![0.0; hours],
                },
            )
        })
        .collect();

    let cal = &inputs.scenario.calibration;
    let mut calibration = Calibration {
        categories: cal.categories.clone(),
        band_kwh_per_hl: (cal.min_intensity, cal.max_intensity),
        checked: 0,
        min_intensity: None,
        max_intensity: None,
        breaches: Vec::new(),
    };

    for b in &breweries {
        national.add(b);
        if let Some(row) = categories.iter_mut().find(|r| r.category == b.spec.category) {
            row.aggregate.add(b);
        }
        if let Some((_, a)) = areas.iter_mut().find(|(a, _)| *a == b.spec.area) {
            a.add(b);
        }
        for (policy, h) in &mut hourly {
            let r = match policy {
                ControlPolicy::Baseline => b.baseline.as_ref(),
                ControlPolicy::Flexible => b.flexible.as_ref(),
            };
            if let Some(r) = r {
                for (acc, l) in h.get_mut(b.spec.area).iter_mut().zip(&r.account.load) {
                    *acc += l;
                }
            }
        }
        if cal.categories.contains(&b.spec.category) {
            let i = b.primary().intensity(b.spec.annual_volume);
            calibration.checked += 1;
            calibration.min_intensity = Some(calibration.min_intensity.map_or(i, |m: f64| m.min(i)));
            calibration.max_intensity = Some(calibration.max_intensity.map_or(i, |m: f64| m.max(i)));
            if !(cal.min_intensity..=cal.max_intensity).contains(&i) {
                calibration.breaches.push(CalibrationRow {
                    brewery_id: b.spec.id,
                    category: b.spec.category,
                    intensity_kwh_per_hl: i,
                });
            }
        }
    }
    national.finish();
    for r in &mut categories {
        r.aggregate.finish();
    }
    for (_, a) in &mut areas {
        a.finish();
    }
    NationalReport {
        inputs,
        breweries,
        categories,
        areas,
        national,
        hourly,
        calibration,
    }
}
