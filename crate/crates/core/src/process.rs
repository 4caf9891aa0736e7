//! Discrete-event simulation of one brewery over a year.
//!
//! Brews start on a weekly calendar, pass through the brewhouse stages,
//! are pitched into the lowest free tank of their style, ferment, condition
//! in the same tank and leave as packaged beer. Refrigeration is decided
//! at every hour boundary by either the thermostat or the window planner;
//! between events each occupied tank is integrated exactly.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flexibility::{plan_window, thermostat_step, CoolingPlant, FlexBand, PlanError, PlanRequest, ThermalParams};
use crate::market::{account, Area, EnergyAccount, HourlySeries, MarketError};
use crate::population::BrewerySpec;
use crate::thermo::{
    apparent_extract, fermentation_heat, tank_step, wort_properties, FermentationHeatCoefficient, FermentationKinetics,
    PerStyle, PropertyCoefficients, StepInputs, Style, TankGeometry, TankThermalState, ThermoError,
};

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no free {style} tank for batch {batch}")]
    Capacity { batch: usize, style: Style },
    #[error("{style} plant of {q_max:.1} W cannot carry the peak fermentation heat of {peak:.1} W")]
    UndersizedPlant { style: Style, q_max: f64, peak: f64 },
    #[error("batch {batch}: {source}")]
    Thermo {
        batch: usize,
        #[source]
        source: ThermoError,
    },
    #[error("batch {batch}: {source}")]
    Plan {
        batch: usize,
        #[source]
        source: PlanError,
    },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("brewery {brewery}: {source}")]
    Brewery {
        brewery: usize,
        #[source]
        source: Box<ProcessError>,
    },
}

impl ProcessError {
    /// The innermost error, without brewery context.
    pub fn root(&self) -> &ProcessError {
        match self {
            ProcessError::Brewery { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Production stages in the order every batch passes through them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Milling,
    Mashing,
    Lautering,
    Boil,
    Whirlpool,
    CoolToPitch,
    Fermenting,
    Conditioning,
    Packaged,
}

impl Stage {
    pub const ORDER: [Stage; 9] = [
        Stage::Milling,
        Stage::Mashing,
        Stage::Lautering,
        Stage::Boil,
        Stage::Whirlpool,
        Stage::CoolToPitch,
        Stage::Fermenting,
        Stage::Conditioning,
        Stage::Packaged,
    ];

    pub fn next(self) -> Option<Stage> {
        let i = Self::ORDER.iter().position(|&s| s == self)?;
        Self::ORDER.get(i + 1).copied()
    }

    pub fn in_tank(self) -> bool {
        matches!(self, Stage::Fermenting | Stage::Conditioning)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub id: usize,
    pub style: Style,
    /// hl
    pub volume: f64,
    pub stage: Stage,
    pub stage_entry_time: DateTime<Utc>,
    pub pitch_time: Option<DateTime<Utc>>,
    pub kinetics: FermentationKinetics,
    pub tank: Option<usize>,
}

impl Batch {
    fn enter(&mut self, stage: Stage, time: DateTime<Utc>) {
        debug_assert!(stage > self.stage, "stage {stage:?} after {:?}", self.stage);
        self.stage = stage;
        self.stage_entry_time = time;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageDurations {
    /// hours
    pub milling: f64,
    pub mashing: f64,
    pub lautering: f64,
    pub boil: f64,
    pub whirlpool: f64,
    pub cool_to_pitch: f64,
    /// days
    pub fermentation_days: PerStyle<f64>,
    pub conditioning_days: PerStyle<f64>,
}

impl Default for StageDurations {
    fn default() -> Self {
        Self {
            milling: 0.5,
            mashing: 1.5,
            lautering: 2.0,
            boil: 1.5,
            whirlpool: 0.5,
            cool_to_pitch: 1.0,
            fermentation_days: PerStyle::new(7.0, 14.0),
            conditioning_days: PerStyle::new(7.0, 21.0),
        }
    }
}

impl StageDurations {
    pub fn validate(&self) -> Result<(), ProcessError> {
        let all = [
            self.milling,
            self.mashing,
            self.lautering,
            self.boil,
            self.whirlpool,
            self.cool_to_pitch,
            self.fermentation_days.ale,
            self.fermentation_days.lager,
            self.conditioning_days.ale,
            self.conditioning_days.lager,
        ];
        if all.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(ProcessError::Config(
                "stage durations must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Brewhouse duration of `stage` in hours; `None` for tank stages.
    pub fn brewhouse_hours(&self, stage: Stage) -> Option<f64> {
        match stage {
            Stage::Milling => Some(self.milling),
            Stage::Mashing => Some(self.mashing),
            Stage::Lautering => Some(self.lautering),
            Stage::Boil => Some(self.boil),
            Stage::Whirlpool => Some(self.whirlpool),
            Stage::CoolToPitch => Some(self.cool_to_pitch),
            _ => None,
        }
    }

    /// Hours from brew start to pitching.
    pub fn brewhouse_total(&self) -> f64 {
        self.milling + self.mashing + self.lautering + self.boil + self.whirlpool + self.cool_to_pitch
    }

    /// Days a batch of each style holds its tank.
    pub fn residence_days(&self) -> PerStyle<f64> {
        PerStyle::new(
            self.fermentation_days.ale + self.conditioning_days.ale,
            self.fermentation_days.lager + self.conditioning_days.lager,
        )
    }
}

fn hours(h: f64) -> TimeDelta {
    TimeDelta::milliseconds((h * 3.6e6).round() as i64)
}

fn days(d: f64) -> TimeDelta {
    hours(d * 24.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarSettings {
    pub working_weeks: u32,
    /// First brew of the day, hour of day in UTC.
    pub first_brew_hour_utc: u32,
}

impl Default for CalendarSettings {
    fn default() -> Self {
        // 08:00 at a fixed UTC+1
        Self {
            working_weeks: 48,
            first_brew_hour_utc: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrewEvent {
    pub start: DateTime<Utc>,
    pub style: Style,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BrewCalendar {
    pub events: Vec<BrewEvent>,
}

impl BrewCalendar {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, style: Style) -> usize {
        self.events.iter().filter(|e| e.style == style).count()
    }
}

/// Mondays of the year whose whole week lies inside it.
pub fn complete_weeks(year: i32) -> Vec<NaiveDate> {
    let Some(jan1) = NaiveDate::from_ymd_opt(year, 1, 1) else {
        return Vec::new();
    };
    let skip = (7 - jan1.weekday().num_days_from_monday()) % 7;
    let mut monday = jan1 + Duration::days(skip as i64);
    let mut weeks = Vec::new();
    while (monday + Duration::days(6)).year() == year {
        weeks.push(monday);
        monday += Duration::days(7);
    }
    weeks
}

/// Indices of the working weeks when `working` of `available` weeks are
/// used; the idle weeks are spread evenly over the year.
fn working_week_indices(available: usize, working: usize) -> Vec<usize> {
    let off = available - working;
    let idle: Vec<usize> = (0..off).map(|j| ((2 * j + 1) * available) / (2 * off)).collect();
    (0..available).filter(|i| !idle.contains(i)).collect()
}

/// Even interleaving: slot `i` of `n` is ale iff `⌊(i+1)a/n⌋ > ⌊ia/n⌋`.
fn interleaved_style(i: usize, ale: usize, n: usize) -> Style {
    if (i + 1) * ale / n > i * ale / n {
        Style::Ale
    } else {
        Style::Lager
    }
}

pub fn build_calendar(
    spec: &BrewerySpec,
    year: i32,
    settings: &CalendarSettings,
    durations: &StageDurations,
) -> Result<BrewCalendar, ProcessError> {
    if spec.brewdays_per_week > 7 {
        return Err(ProcessError::Config(format!(
            "{} brewdays per week exceeds 7",
            spec.brewdays_per_week
        )));
    }
    if settings.first_brew_hour_utc > 23 {
        return Err(ProcessError::Config("first_brew_hour_utc must be 0..=23".into()));
    }
    let total = spec.total_brews() as usize;
    if total == 0 {
        return Ok(BrewCalendar::default());
    }
    let weeks = complete_weeks(year);
    let working = settings.working_weeks as usize;
    if working == 0 || working > weeks.len() {
        return Err(ProcessError::Config(format!(
            "{working} working weeks do not fit in the {} complete weeks of {year}",
            weeks.len()
        )));
    }
    let per_week = spec.brewdays_per_week as usize;
    if total > per_week * working {
        return Err(ProcessError::Config(format!(
            "{total} brews do not fit in {working} weeks at {per_week} brewdays per week"
        )));
    }
    let ale = spec.brews_per_year_ale as usize;
    let mut events = Vec::with_capacity(total);
    for (w, &wi) in working_week_indices(weeks.len(), working).iter().enumerate() {
        // ceiling split: any remainder lands in the earliest weeks
        let count = ((w + 1) * total).div_ceil(working) - (w * total).div_ceil(working);
        for day in 0..count {
            let date = weeks[wi] + Duration::days(day as i64);
            let start = date
                .and_hms_opt(settings.first_brew_hour_utc, 0, 0)
                .expect("valid hour")
                .and_utc();
            let style = interleaved_style(events.len(), ale, total);
            events.push(BrewEvent { start, style });
        }
    }
    let calendar = BrewCalendar { events };
    let peak = peak_occupancy(&calendar, durations);
    for style in Style::ALL {
        if *peak.get(style) > spec.tank_count(style) {
            return Err(ProcessError::Config(format!(
                "calendar needs {} {style} tanks but the fleet has {}",
                peak.get(style),
                spec.tank_count(style)
            )));
        }
    }
    Ok(calendar)
}

/// Largest number of simultaneously occupied tanks per style implied by
/// the calendar. A release and a pitch at the same instant do not overlap.
pub fn peak_occupancy(calendar: &BrewCalendar, durations: &StageDurations) -> PerStyle<usize> {
    let residence = durations.residence_days();
    let to_pitch = hours(durations.brewhouse_total());
    let mut peak = PerStyle::new(0, 0);
    for style in Style::ALL {
        let stay = days(*residence.get(style));
        let mut edges: Vec<(DateTime<Utc>, i32)> = Vec::new();
        for e in calendar.events.iter().filter(|e| e.style == style) {
            let pitch = e.start + to_pitch;
            edges.push((pitch, 1));
            edges.push((pitch + stay, -1));
        }
        edges.sort();
        let mut level = 0i32;
        let mut max = 0i32;
        for (_, d) in edges {
            level += d;
            max = max.max(level);
        }
        *peak.get_mut(style) = max as usize;
    }
    peak
}

/// An event popped from an [`EventQueue`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled<E> {
    pub time: DateTime<Utc>,
    pub rank: u8,
    pub batch: usize,
    pub event: E,
}

struct Entry<E> {
    key: (DateTime<Utc>, u8, usize, u64),
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Pending events ordered by time, then rank, then batch id, then
/// insertion order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    seq: u64,
    now: Option<DateTime<Utc>>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            seq: 0,
            now: None,
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Time of the most recently dispatched event.
    pub fn now(&self) -> Option<DateTime<Utc>> {
        self.now
    }

    pub fn peek_time(&self) -> Option<DateTime<Utc>> {
        self.heap.peek().map(|Reverse(e)| e.key.0)
    }

    /// Panics when `time` precedes the last dispatched event.
    pub fn push(&mut self, time: DateTime<Utc>, rank: u8, batch: usize, event: E) {
        assert!(self.now.is_none_or(|now| time >= now), "event scheduled in the past");
        self.heap.push(Reverse(Entry {
            key: (time, rank, batch, self.seq),
            event,
        }));
        self.seq += 1;
    }

    /// Dispatch every event with `time <= until`, including events the
    /// handler schedules inside that range. Returns how many ran.
    pub fn advance<F, Err>(&mut self, until: DateTime<Utc>, mut handler: F) -> Result<usize, Err>
    where
        F: FnMut(&mut Self, Scheduled<E>) -> Result<(), Err>,
    {
        let mut n = 0;
        while self.peek_time().is_some_and(|t| t <= until) {
            let Reverse(Entry { key, event }) = self.heap.pop().expect("peeked");
            self.now = Some(key.0);
            handler(
                self,
                Scheduled {
                    time: key.0,
                    rank: key.1,
                    batch: key.2,
                    event,
                },
            )?;
            n += 1;
        }
        Ok(n)
    }
}

/// Occupancy of one style's tanks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TankPool {
    occupant: Vec<Option<usize>>,
}

impl TankPool {
    pub fn new(count: usize) -> Self {
        Self {
            occupant: vec![None; count],
        }
    }

    pub fn size(&self) -> usize {
        self.occupant.len()
    }

    pub fn occupied(&self) -> usize {
        self.occupant.iter().filter(|o| o.is_some()).count()
    }

    pub fn occupant(&self, tank: usize) -> Option<usize> {
        self.occupant.get(tank).copied().flatten()
    }

    pub fn release(&mut self, tank: usize) -> Option<usize> {
        self.occupant.get_mut(tank).and_then(Option::take)
    }
}

/// Put `batch` into the lowest-numbered free tank of the pool.
pub fn assign_tank(batch: &Batch, pool: &mut TankPool) -> Result<usize, ProcessError> {
    let tank = pool
        .occupant
        .iter()
        .position(Option::is_none)
        .ok_or(ProcessError::Capacity {
            batch: batch.id,
            style: batch.style,
        })?;
    pool.occupant[tank] = Some(batch.id);
    Ok(tank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlPolicy {
    Baseline,
    Flexible,
}

impl ControlPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlPolicy::Baseline => "baseline",
            ControlPolicy::Flexible => "flexible",
        }
    }
}

/// Setpoints of one style, °C, with optional per-phase deadbands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleTargets {
    pub fermentation: f64,
    pub conditioning: f64,
    #[serde(default)]
    pub fermentation_delta: Option<f64>,
    #[serde(default)]
    pub conditioning_delta: Option<f64>,
}

impl StyleTargets {
    pub fn new(fermentation: f64, conditioning: f64) -> Self {
        Self {
            fermentation,
            conditioning,
            fermentation_delta: None,
            conditioning_delta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Fermentation,
    Conditioning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSettings {
    pub setpoints: PerStyle<StyleTargets>,
    /// K
    pub deadband_delta: f64,
    /// K
    pub hysteresis: f64,
    pub cop: f64,
    /// COP loss per kelvin of ambient above `cop_ref_ambient`.
    pub cop_slope: f64,
    pub cop_ref_ambient: f64,
    /// Plant capacity as a multiple of the design batch's peak heat.
    pub q_max_factor: f64,
    /// Full cooling at the start of conditioning, hours.
    pub cold_crash_hours: f64,
    pub horizon_hours: usize,
    /// Tolerated drift from the plan before replanning, K.
    pub replan_tolerance: f64,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            setpoints: PerStyle::new(StyleTargets::new(19.0, 4.0), StyleTargets::new(11.0, 2.0)),
            deadband_delta: 1.0,
            hysteresis: 0.5,
            cop: 3.0,
            cop_slope: 0.0,
            cop_ref_ambient: 0.0,
            q_max_factor: 2.0,
            cold_crash_hours: 12.0,
            horizon_hours: 24,
            replan_tolerance: 0.05,
        }
    }
}

impl ControlSettings {
    pub fn band(&self, style: Style, phase: Phase) -> Result<FlexBand, ProcessError> {
        let t = self.setpoints.get(style);
        let (setpoint, delta) = match phase {
            Phase::Fermentation => (t.fermentation, t.fermentation_delta),
            Phase::Conditioning => (t.conditioning, t.conditioning_delta),
        };
        let delta = delta.unwrap_or(self.deadband_delta);
        FlexBand::new(setpoint, delta, self.hysteresis.min(delta))
            .map_err(|e| ProcessError::Config(format!("{style} {phase:?} band: {e}")))
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        for style in Style::ALL {
            for phase in [Phase::Fermentation, Phase::Conditioning] {
                self.band(style, phase)?;
            }
        }
        if !(self.hysteresis > 0.0) {
            return Err(ProcessError::Config("hysteresis must be positive".into()));
        }
        if !(self.cop > 0.0 && self.cop.is_finite()) {
            return Err(ProcessError::Config("cop must be positive".into()));
        }
        if !(self.q_max_factor > 0.0 && self.q_max_factor.is_finite()) {
            return Err(ProcessError::Config("q_max_factor must be positive".into()));
        }
        if !(self.cold_crash_hours >= 0.0) || !(self.replan_tolerance >= 0.0) {
            return Err(ProcessError::Config(
                "cold_crash_hours and replan_tolerance must be non-negative".into(),
            ));
        }
        if self.horizon_hours == 0 {
            return Err(ProcessError::Config("horizon_hours must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything about a brewery run that is not the brewery or the market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub durations: StageDurations,
    pub calendar: CalendarSettings,
    pub kinetics: PerStyle<FermentationKinetics>,
    pub properties: PropertyCoefficients,
    pub heat_per_extract: FermentationHeatCoefficient,
    pub control: ControlSettings,
    #[serde(skip)]
    pub record_traces: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            durations: StageDurations::default(),
            calendar: CalendarSettings::default(),
            kinetics: PerStyle::new(FermentationKinetics::ale(), FermentationKinetics::lager()),
            properties: PropertyCoefficients::default(),
            heat_per_extract: FermentationHeatCoefficient::default(),
            control: ControlSettings::default(),
            record_traces: false,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), ProcessError> {
        self.durations.validate()?;
        self.control.validate()?;
        for style in Style::ALL {
            self.kinetics
                .get(style)
                .validate()
                .map_err(|e| ProcessError::Config(format!("{style} kinetics: {e}")))?;
        }
        FermentationHeatCoefficient::new(self.heat_per_extract.heat_per_extract)
            .map_err(|e| ProcessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Refrigeration capacity for tanks of `style` holding `batch_volume` hl.
    pub fn plant_for(&self, style: Style, batch_volume: f64) -> Result<(CoolingPlant, f64), ProcessError> {
        let kinetics = self.kinetics.get(style);
        let pitch = self.control.setpoints.get(style).fermentation;
        let props = wort_properties(kinetics.p_initial, pitch, &self.properties)
            .map_err(|e| ProcessError::Config(format!("{style} design batch: {e}")))?;
        let peak = fermentation_heat(
            &props,
            batch_volume / 10.0,
            kinetics.peak_rate(),
            &self.heat_per_extract,
        )
        .map_err(|e| ProcessError::Config(format!("{style} design batch: {e}")))?;
        let q_max = self.control.q_max_factor * peak;
        let plant = CoolingPlant {
            q_max,
            cop: self.control.cop,
            cop_slope: self.control.cop_slope,
            cop_ref_ambient: self.control.cop_ref_ambient,
        };
        Ok((plant, peak))
    }
}

/// Hourly market and weather series for one brewery's area.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioData<'a> {
    pub year: i32,
    /// DKK/MWh
    pub prices: &'a HourlySeries,
    /// g/kWh
    pub co2: &'a HourlySeries,
    /// °C around the tanks
    pub ambient: &'a HourlySeries,
}

impl ScenarioData<'_> {
    pub fn validate(&self) -> Result<(), ProcessError> {
        for (name, s) in [("prices", self.prices), ("co2", self.co2), ("ambient", self.ambient)] {
            if !s.covers_year(self.year) {
                return Err(ProcessError::Config(format!(
                    "{name} series does not span the year {}",
                    self.year
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub batch_id: usize,
    pub timestamp: DateTime<Utc>,
    pub temperature_c: f64,
    pub extract_plato: f64,
    pub cooling_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreweryResult {
    pub brewery_id: usize,
    pub category: u8,
    pub area: Area,
    pub policy: ControlPolicy,
    /// Hourly electric cooling load with its cost and emissions.
    pub account: EnergyAccount,
    /// kW
    pub peak_kw: f64,
    pub batches_started: usize,
    pub batches_pitched: usize,
    pub batches_packaged: usize,
    /// Started but not packaged by the end of the year.
    pub batches_in_flight: usize,
    pub max_occupancy: PerStyle<usize>,
    /// Most tanks occupied at any moment of each hour.
    pub occupancy: Vec<u32>,
    /// Windows the planner could not satisfy; full cooling was used instead.
    pub infeasible_windows: usize,
    pub plans: usize,
    pub traces: Vec<TraceRow>,
}

impl BreweryResult {
    /// kWh of cooling electricity per hl of annual production.
    pub fn intensity(&self, annual_volume: f64) -> f64 {
        self.account.total_load() / annual_volume
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SimEvent {
    ConditioningDone,
    FermentationDone,
    StageDone,
    BrewStart,
    Tick,
}

impl SimEvent {
    fn rank(self) -> u8 {
        match self {
            SimEvent::ConditioningDone => 0,
            SimEvent::FermentationDone => 1,
            SimEvent::StageDone => 2,
            SimEvent::BrewStart => 3,
            SimEvent::Tick => 4,
        }
    }
}

struct ActivePlan {
    start_hour: usize,
    phase: Phase,
    duty: Vec<f64>,
    temperatures: Vec<f64>,
}

struct TankControl {
    batch: usize,
    phase: Phase,
    phase_start: DateTime<Utc>,
    phase_end: DateTime<Utc>,
    band: FlexBand,
    state: TankThermalState,
    duty: f64,
    cooling_on: bool,
    plan: Option<ActivePlan>,
}

struct FleetState {
    style: Style,
    geometry: TankGeometry,
    plant: CoolingPlant,
    pool: TankPool,
    tanks: Vec<Option<TankControl>>,
}

struct Sim<'a> {
    spec: &'a BrewerySpec,
    params: &'a SimParams,
    data: ScenarioData<'a>,
    policy: ControlPolicy,
    start: DateTime<Utc>,
    hours: usize,
    clock: DateTime<Utc>,
    batches: Vec<Batch>,
    fleets: Vec<FleetState>,
    load: Vec<f64>,
    occupancy: Vec<u32>,
    max_occupancy: PerStyle<usize>,
    pitched: usize,
    packaged: usize,
    infeasible_windows: usize,
    plans: usize,
    traces: Vec<TraceRow>,
}

fn next_midnight(t: DateTime<Utc>) -> DateTime<Utc> {
    (t.date_naive() + Duration::days(1))
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
}

impl<'a> Sim<'a> {
    fn hour_index(&self, t: DateTime<Utc>) -> usize {
        ((t - self.start).num_seconds() / 3600) as usize
    }

    fn fleet_index(&self, style: Style) -> Option<usize> {
        self.fleets.iter().position(|f| f.style == style)
    }

    /// Integrate every occupied tank up to `t`, splitting at hour marks.
    fn integrate_to(&mut self, t: DateTime<Utc>) -> Result<(), ProcessError> {
        while self.clock < t {
            let h = self.hour_index(self.clock);
            let hour_end = self.start + TimeDelta::hours(h as i64 + 1);
            let seg_end = t.min(hour_end);
            let dt = (seg_end - self.clock).num_milliseconds() as f64 / 1000.0;
            if h < self.hours {
                let ambient = self.data.ambient.values()[h];
                for fleet in &mut self.fleets {
                    let (geometry, plant) = (&fleet.geometry, &fleet.plant);
                    for ctl in fleet.tanks.iter_mut().flatten() {
                        let batch = &self.batches[ctl.batch];
                        step_tank(ctl, batch, geometry, plant, self.params, ambient, dt)?;
                        self.load[h] += plant.electric_kwh(ctl.duty, dt, ambient);
                    }
                }
            }
            self.clock = seg_end;
        }
        Ok(())
    }

    fn note_occupancy(&mut self, t: DateTime<Utc>) {
        let h = self.hour_index(t);
        let total: usize = self.fleets.iter().map(|f| f.pool.occupied()).sum();
        if h < self.hours {
            self.occupancy[h] = self.occupancy[h].max(total as u32);
        }
        for f in &self.fleets {
            let m = self.max_occupancy.get_mut(f.style);
            *m = (*m).max(f.pool.occupied());
        }
    }

    fn handle(&mut self, queue: &mut EventQueue<SimEvent>, ev: Scheduled<SimEvent>) -> Result<(), ProcessError> {
        self.integrate_to(ev.time)?;
        let t = ev.time;
        let b = ev.batch;
        let d = &self.params.durations;
        match ev.event {
            SimEvent::Tick => {
                self.tick(t)?;
                let h = self.hour_index(t);
                if h + 1 < self.hours {
                    queue.push(t + TimeDelta::hours(1), SimEvent::Tick.rank(), 0, SimEvent::Tick);
                }
            }
            SimEvent::BrewStart => {
                self.batches[b].stage_entry_time = t;
                let after = hours(d.milling);
                queue.push(t + after, SimEvent::StageDone.rank(), b, SimEvent::StageDone);
            }
            SimEvent::StageDone => {
                let stage = self.batches[b].stage;
                if stage == Stage::CoolToPitch {
                    self.pitch(queue, b, t)?;
                } else {
                    let next = stage.next().expect("brewhouse stage has a successor");
                    self.batches[b].enter(next, t);
                    let after = hours(d.brewhouse_hours(next).expect("brewhouse stage"));
                    queue.push(t + after, SimEvent::StageDone.rank(), b, SimEvent::StageDone);
                }
            }
            SimEvent::FermentationDone => {
                let style = self.batches[b].style;
                self.batches[b].enter(Stage::Conditioning, t);
                let band = self.params.control.band(style, Phase::Conditioning)?;
                let end = t + days(*d.conditioning_days.get(style));
                let (fi, tank) = self.locate(b);
                let ctl = self.fleets[fi].tanks[tank].as_mut().expect("occupied tank");
                ctl.phase = Phase::Conditioning;
                ctl.phase_start = t;
                ctl.phase_end = end;
                ctl.band = band;
                ctl.plan = None;
                queue.push(end, SimEvent::ConditioningDone.rank(), b, SimEvent::ConditioningDone);
            }
            SimEvent::ConditioningDone => {
                self.batches[b].enter(Stage::Packaged, t);
                let (fi, tank) = self.locate(b);
                self.fleets[fi].pool.release(tank);
                self.fleets[fi].tanks[tank] = None;
                self.packaged += 1;
            }
        }
        Ok(())
    }

    fn locate(&self, batch: usize) -> (usize, usize) {
        let style = self.batches[batch].style;
        let fi = self.fleet_index(style).expect("fleet of pitched batch");
        let tank = self.batches[batch].tank.expect("pitched batch has a tank");
        (fi, tank)
    }

    fn pitch(&mut self, queue: &mut EventQueue<SimEvent>, b: usize, t: DateTime<Utc>) -> Result<(), ProcessError> {
        let style = self.batches[b].style;
        let fi = self
            .fleet_index(style)
            .ok_or(ProcessError::Capacity { batch: b, style })?;
        let tank = assign_tank(&self.batches[b], &mut self.fleets[fi].pool)?;
        let batch = &mut self.batches[b];
        batch.enter(Stage::Fermenting, t);
        batch.pitch_time = Some(t);
        batch.tank = Some(tank);
        let band = self.params.control.band(style, Phase::Fermentation)?;
        let end = t + days(*self.params.durations.fermentation_days.get(style));
        self.fleets[fi].tanks[tank] = Some(TankControl {
            batch: b,
            phase: Phase::Fermentation,
            phase_start: t,
            phase_end: end,
            band,
            state: TankThermalState::pitched(&batch.kinetics, band.setpoint, batch.volume / 10.0),
            duty: 0.0,
            cooling_on: false,
            plan: None,
        });
        self.pitched += 1;
        self.note_occupancy(t);
        queue.push(end, SimEvent::FermentationDone.rank(), b, SimEvent::FermentationDone);
        Ok(())
    }

    fn tick(&mut self, t: DateTime<Utc>) -> Result<(), ProcessError> {
        let h = self.hour_index(t);
        self.note_occupancy(t);
        for fi in 0..self.fleets.len() {
            for tank in 0..self.fleets[fi].tanks.len() {
                if self.fleets[fi].tanks[tank].is_none() {
                    continue;
                }
                self.control(fi, tank, h, t)?;
                let fleet = &self.fleets[fi];
                let ctl = fleet.tanks[tank].as_ref().expect("occupied");
                if self.params.record_traces {
                    self.traces.push(TraceRow {
                        batch_id: ctl.batch,
                        timestamp: t,
                        temperature_c: ctl.state.temperature,
                        extract_plato: ctl.state.extract,
                        cooling_w: ctl.duty * fleet.plant.q_max,
                    });
                }
            }
        }
        Ok(())
    }

    /// Choose the duty of one tank for the hour starting at `t`.
    fn control(&mut self, fi: usize, tank: usize, h: usize, t: DateTime<Utc>) -> Result<(), ProcessError> {
        let settings = self.params.control;
        let ctl = self.fleets[fi].tanks[tank].as_mut().expect("occupied");
        let previous = ctl.plan.take();
        let temp = ctl.state.temperature;
        let band = ctl.band;
        let phase = ctl.phase;
        let was_on = ctl.cooling_on;
        let crash = phase == Phase::Conditioning
            && (t - ctl.phase_start) < hours(settings.cold_crash_hours)
            && temp > band.setpoint;
        let tol = settings.replan_tolerance;

        let thermostat = || (if thermostat_step(temp, &band, was_on) { 1.0 } else { 0.0 }, None);
        let (duty, plan) = if crash {
            (1.0, None)
        } else {
            match self.policy {
                ControlPolicy::Baseline => thermostat(),
                // nothing to shift without a price difference
                ControlPolicy::Flexible if self.flat_window(fi, tank, h, t) => thermostat(),
                // pull-down to the band runs at full duty
                ControlPolicy::Flexible if temp > band.upper() + tol => (1.0, None),
                ControlPolicy::Flexible if temp < band.lower() - tol => (0.0, None),
                ControlPolicy::Flexible => {
                    let step = previous.as_ref().and_then(|p| {
                        let i = h.checked_sub(p.start_hour)?;
                        let on_track = p.phase == phase && i < p.duty.len() && (p.temperatures[i] - temp).abs() <= tol;
                        on_track.then(|| p.duty[i])
                    });
                    match step {
                        Some(d) => (d, previous),
                        None => match self.replan(fi, tank, h, t)? {
                            Some(p) => (p.duty[0], Some(p)),
                            None => (1.0, None),
                        },
                    }
                }
            }
        };
        let ctl = self.fleets[fi].tanks[tank].as_mut().expect("occupied");
        ctl.duty = duty;
        ctl.cooling_on = duty > 0.0;
        ctl.plan = plan;
        Ok(())
    }

    /// Hours from `h` to the end of the day or phase, within the limits.
    fn window_hours(&self, fi: usize, tank: usize, h: usize, t: DateTime<Utc>) -> usize {
        let ctl = self.fleets[fi].tanks[tank].as_ref().expect("occupied");
        let window_end = next_midnight(t).min(ctl.phase_end).max(t + TimeDelta::hours(1));
        let span = (window_end - t).num_seconds() as f64 / SECONDS_PER_HOUR;
        (span.ceil() as usize)
            .min(self.params.control.horizon_hours)
            .min(self.hours - h)
            .max(1)
    }

    fn flat_window(&self, fi: usize, tank: usize, h: usize, t: DateTime<Utc>) -> bool {
        let prices = &self.data.prices.values()[h..h + self.window_hours(fi, tank, h, t)];
        prices.iter().all(|p| *p == prices[0])
    }

    /// A fresh plan from hour `h` to the end of the day or phase. `None`
    /// means the window is infeasible and the tank should cool fully.
    fn replan(
        &mut self,
        fi: usize,
        tank: usize,
        h: usize,
        t: DateTime<Utc>,
    ) -> Result<Option<ActivePlan>, ProcessError> {
        let params = self.params;
        let mut horizon = self.window_hours(fi, tank, h, t);
        let fleet = &self.fleets[fi];
        let ctl = fleet.tanks[tank].as_ref().expect("occupied");
        let batch = &self.batches[ctl.batch];

        let thermo = |source| ProcessError::Thermo {
            batch: ctl.batch,
            source,
        };
        let props = wort_properties(ctl.state.extract, ctl.state.temperature, &params.properties).map_err(thermo)?;
        let volume = ctl.state.fill_volume;
        let tsp = ctl.state.time_since_pitch;
        let k = &batch.kinetics;
        let e = params.heat_per_extract.heat_per_extract;
        let q_ferm: Vec<f64> = (0..horizon)
            .map(|i| {
                let drop = apparent_extract(k, tsp + i as f64) - apparent_extract(k, tsp + i as f64 + 1.0);
                props.density * volume * drop.max(0.0) / 100.0 * e / SECONDS_PER_HOUR
            })
            .collect();
        let ambient = &self.data.ambient.values()[h..h + horizon];
        let prices = &self.data.prices.values()[h..h + horizon];
        let band = ctl.band;
        let t0 = ctl.state.temperature.clamp(band.lower(), band.upper());
        let thermal = ThermalParams {
            heat_capacity: props.density * volume * props.specific_heat,
            ua: fleet.geometry.ua(),
        };
        loop {
            let req = PlanRequest {
                window_start: t,
                t0,
                thermal,
                ambient,
                q_ferm: &q_ferm,
                prices,
                band,
                plant: fleet.plant,
                horizon,
            };
            match plan_window(&req) {
                Ok(plan) => {
                    self.plans += 1;
                    return Ok(Some(ActivePlan {
                        start_hour: h,
                        phase: ctl.phase,
                        duty: plan.duty,
                        temperatures: plan.temperatures,
                    }));
                }
                Err(PlanError::BelowBand { hour }) if hour >= 2 => horizon = hour - 1,
                Err(PlanError::BelowBand { .. }) => {
                    // drifting out of the band unaided: a single idle hour
                    return Ok(Some(ActivePlan {
                        start_hour: h,
                        phase: ctl.phase,
                        duty: vec![0.0],
                        temperatures: vec![ctl.state.temperature],
                    }));
                }
                Err(PlanError::Infeasible { .. }) => {
                    self.infeasible_windows += 1;
                    return Ok(None);
                }
                Err(source) => {
                    return Err(ProcessError::Plan {
                        batch: ctl.batch,
                        source,
                    })
                }
            }
        }
    }
}

/// One exact step of a tank over `dt` seconds at its current duty.
fn step_tank(
    ctl: &mut TankControl,
    batch: &Batch,
    geometry: &TankGeometry,
    plant: &CoolingPlant,
    params: &SimParams,
    ambient: f64,
    dt: f64,
) -> Result<(), ProcessError> {
    let thermo = |source| ProcessError::Thermo {
        batch: batch.id,
        source,
    };
    let s = &ctl.state;
    let props = wort_properties(s.extract, s.temperature, &params.properties).map_err(thermo)?;
    let after = apparent_extract(&batch.kinetics, s.time_since_pitch + dt / SECONDS_PER_HOUR);
    // mean rate over the step, so released heat matches the extract drop
    let rate = ((after - s.extract) / (dt / SECONDS_PER_HOUR)).min(0.0);
    let q_ferm = fermentation_heat(&props, s.fill_volume, rate, &params.heat_per_extract).map_err(thermo)?;
    let inputs = StepInputs {
        q_ferm,
        q_cool: ctl.duty * plant.q_max,
        ambient,
    };
    ctl.state = tank_step(s, geometry, &batch.kinetics, inputs, dt, &props).map_err(thermo)?;
    Ok(())
}

/// Simulate one brewery over the scenario year under `policy`.
pub fn run_brewery(
    spec: &BrewerySpec,
    data: &ScenarioData<'_>,
    params: &SimParams,
    policy: ControlPolicy,
) -> Result<BreweryResult, ProcessError> {
    run_inner(spec, data, params, policy).map_err(|e| ProcessError::Brewery {
        brewery: spec.id,
        source: Box::new(e),
    })
}

fn run_inner(
    spec: &BrewerySpec,
    data: &ScenarioData<'_>,
    params: &SimParams,
    policy: ControlPolicy,
) -> Result<BreweryResult, ProcessError> {
    params.validate()?;
    data.validate()?;
    let calendar = build_calendar(spec, data.year, &params.calendar, &params.durations)?;
    let start = data.prices.start();
    let n_hours = data.prices.len();

    let mut fleets = Vec::new();
    for f in &spec.tank_fleet {
        let (plant, peak) = params.plant_for(f.style, spec.batch_volume)?;
        if plant.q_max < peak {
            return Err(ProcessError::UndersizedPlant {
                style: f.style,
                q_max: plant.q_max,
                peak,
            });
        }
        fleets.push(FleetState {
            style: f.style,
            geometry: f.geometry,
            plant,
            pool: TankPool::new(f.count),
            tanks: (0..f.count).map(|_| None).collect(),
        });
    }

    let batches: Vec<Batch> = calendar
        .events
        .iter()
        .enumerate()
        .map(|(id, e)| Batch {
            id,
            style: e.style,
            volume: spec.batch_volume,
            stage: Stage::Milling,
            stage_entry_time: e.start,
            pitch_time: None,
            kinetics: *params.kinetics.get(e.style),
            tank: None,
        })
        .collect();

    let mut queue = EventQueue::new();
    for (id, e) in calendar.events.iter().enumerate() {
        queue.push(e.start, SimEvent::BrewStart.rank(), id, SimEvent::BrewStart);
    }
    if n_hours > 0 {
        queue.push(start, SimEvent::Tick.rank(), 0, SimEvent::Tick);
    }

    let mut sim = Sim {
        spec,
        params,
        data: *data,
        policy,
        start,
        hours: n_hours,
        clock: start,
        batches,
        fleets,
        load: vec![0.0; n_hours],
        occupancy: vec![0; n_hours],
        max_occupancy: PerStyle::new(0, 0),
        pitched: 0,
        packaged: 0,
        infeasible_windows: 0,
        plans: 0,
        traces: Vec::new(),
    };
    let end = data.prices.end();
    queue.advance(end, |q, ev| sim.handle(q, ev))?;
    sim.integrate_to(end)?;

    let acct = account(&sim.load, data.prices, data.co2)?;
    let started = sim.batches.len();
    Ok(BreweryResult {
        brewery_id: sim.spec.id,
        category: sim.spec.category,
        area: sim.spec.area,
        policy,
        peak_kw: acct.peak(),
        account: acct,
        batches_started: started,
        batches_pitched: sim.pitched,
        batches_packaged: sim.packaged,
        batches_in_flight: started - sim.packaged,
        max_occupancy: sim.max_occupancy,
        occupancy: sim.occupancy,
        infeasible_windows: sim.infeasible_windows,
        plans: sim.plans,
        traces: sim.traces,
    })
}
