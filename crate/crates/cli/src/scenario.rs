//! Scenario files: one TOML document holding every tunable of a run.
//!
//! Every field has a default, so an empty file is a valid scenario: the
//! full synthetic national population on the synthetic 2021 market.

use std::path::{Path, PathBuf};

use brewflex_core::market::synthetic::SyntheticMarket;
use brewflex_core::population::{PlanSettings, SizeCategory};
use brewflex_core::process::SimParams;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Flexible,
    Both,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Flexible => "flexible",
            Mode::Both => "both",
        }
    }

    pub fn runs_baseline(self) -> bool {
        matches!(self, Mode::Baseline | Mode::Both)
    }

    pub fn runs_flexible(self) -> bool {
        matches!(self, Mode::Flexible | Mode::Both)
    }
}

/// Input files. Paths are relative to the scenario file. Any series left
/// out is generated from `[synthetic]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Files {
    /// `name,longitude,latitude`
    pub gis: Option<PathBuf>,
    pub prices_dk1: Option<PathBuf>,
    pub prices_dk2: Option<PathBuf>,
    /// Shared by both areas unless an area file is given.
    pub co2: Option<PathBuf>,
    pub co2_dk1: Option<PathBuf>,
    pub co2_dk2: Option<PathBuf>,
    pub ambient: Option<PathBuf>,
}

impl Files {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.gis,
            &mut self.prices_dk1,
            &mut self.prices_dk2,
            &mut self.co2,
            &mut self.co2_dk1,
            &mut self.co2_dk2,
            &mut self.ambient,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn bound(&self) -> Vec<(&'static str, &Path)> {
        [
            ("gis", &self.gis),
            ("prices_dk1", &self.prices_dk1),
            ("prices_dk2", &self.prices_dk2),
            ("co2", &self.co2),
            ("co2_dk1", &self.co2_dk1),
            ("co2_dk2", &self.co2_dk2),
            ("ambient", &self.ambient),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub categories: Vec<SizeCategory>,
    pub plan: PlanSettings,
}

impl Default for PopulationSection {
    fn default() -> Self {
        Self {
            categories: SizeCategory::danish_defaults(),
            plan: PlanSettings::default(),
        }
    }
}

/// Plausibility check on small-brewery cooling intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub categories: Vec<u8>,
    /// kWh/hl
    pub min_intensity: f64,
    /// kWh/hl
    pub max_intensity: f64,
    /// Fail the run on a breach.
    pub enforce: bool,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            categories: vec![1, 2],
            min_intensity: 1.0,
            max_intensity: 106.0,
            enforce: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub year: i32,
    /// Population seed.
    pub seed: u64,
    /// Seed of the generated facility list and market series.
    pub data_seed: u64,
    pub mode: Mode,
    pub out: PathBuf,
    /// Rescale the population to this many facilities.
    pub facilities: Option<usize>,
    /// Flat DKK/kWh added to every spot price.
    pub price_adder_dkk_per_kwh: f64,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
    pub files: Files,
    pub synthetic: SyntheticMarket,
    pub population: PopulationSection,
    pub params: SimParams,
    pub calibration: CalibrationSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            year: 2021,
            seed: 42,
            data_seed: 2021,
            mode: Mode::Both,
            out: PathBuf::from("out"),
            facilities: None,
            price_adder_dkk_per_kwh: 0.0,
            workers: None,
            files: Files::default(),
            synthetic: SyntheticMarket::default(),
            population: PopulationSection::default(),
            params: SimParams::default(),
            calibration: CalibrationSection::default(),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| AppError::Validation(format!("scenario: {e}")))
    }

    /// Read a scenario and resolve its file paths against its directory.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Io(format!("cannot read scenario {}: {e}", path.display())))?;
        let mut s = Self::parse(&text).map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        s.files.resolve(base);
        if s.out.is_relative() {
            s.out = base.join(&s.out);
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks that need no file access.
    pub fn validate(&self) -> Result<(), AppError> {
        if !(1900..=2200).contains(&self.year) {
            return Err(AppError::Validation(format!("year {} out of range", self.year)));
        }
        if self.facilities == Some(0) {
            return Err(AppError::Validation("facilities must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(AppError::Validation("workers must be at least 1".into()));
        }
        if !self.price_adder_dkk_per_kwh.is_finite() {
            return Err(AppError::Validation("price_adder_dkk_per_kwh must be finite".into()));
        }
        if self.population.plan.working_weeks != self.params.calendar.working_weeks {
            return Err(AppError::Validation(format!(
                "population.plan.working_weeks ({}) must equal params.calendar.working_weeks ({})",
                self.population.plan.working_weeks, self.params.calendar.working_weeks
            )));
        }
        let c = &self.calibration;
        if c.min_intensity > c.max_intensity || c.min_intensity.is_nan() || c.max_intensity.is_nan() {
            return Err(AppError::Validation(
                "calibration.min_intensity must not exceed max_intensity".into(),
            ));
        }
        self.params
            .validate()
            .map_err(|e| AppError::Validation(format!("params: {e}")))?;
        Ok(())
    }
}
