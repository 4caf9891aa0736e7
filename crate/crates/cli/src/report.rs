//! Report tables and the staged output directory.
//!
//! Files are written into a hidden staging directory inside the target and
//! renamed into place only once all of them are complete.

use std::path::{Path, PathBuf};

use brewflex_core::market::{format_timestamp, Area};
use brewflex_core::process::ControlPolicy;
use brewflex_core::thermo::Style;
use serde::{Deserialize, Serialize};

use crate::error::AppError;
use crate::run::{Aggregate, Calibration, NationalReport, Saving, Totals};

pub const SUMMARY: &str = "summary.json";
pub const PER_CATEGORY: &str = "per_category.csv";
pub const PER_BREWERY: &str = "per_brewery.csv";
pub const HOURLY_LOAD: &str = "hourly_load.csv";
pub const HOURLY_LOAD_FLEXIBLE: &str = "hourly_load_flexible.csv";
pub const TRACES: &str = "traces.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub category: u8,
    pub count: usize,
    pub cost_dkk: f64,
    pub co2_kg: f64,
    pub load_kwh: f64,
    pub relative_saving: Option<f64>,
}

/// `cost_dkk`, `co2_kg`, `load_kwh` and `peak_kw` belong to `policy`;
/// the `flexible_*` columns are filled only when both policies ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreweryRecord {
    pub brewery_id: usize,
    pub name: String,
    pub category: u8,
    pub area: Area,
    pub annual_volume_hl: f64,
    pub batch_volume_hl: f64,
    pub brews_ale: u32,
    pub brews_lager: u32,
    pub tanks_ale: usize,
    pub tanks_lager: usize,
    pub policy: ControlPolicy,
    pub cost_dkk: f64,
    pub co2_kg: f64,
    pub load_kwh: f64,
    pub peak_kw: f64,
    pub intensity_kwh_per_hl: f64,
    pub batches_started: usize,
    pub batches_packaged: usize,
    pub flexible_cost_dkk: Option<f64>,
    pub flexible_co2_kg: Option<f64>,
    pub flexible_load_kwh: Option<f64>,
    pub relative_saving: Option<f64>,
    pub infeasible_windows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub timestamp: String,
    pub dk1_kwh: f64,
    pub dk2_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub brewery_id: usize,
    pub policy: ControlPolicy,
    pub batch_id: usize,
    pub timestamp: String,
    pub temperature_c: f64,
    pub extract_plato: f64,
    pub cooling_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub year: i32,
    pub seed: u64,
    pub data_seed: u64,
    pub mode: &'static str,
    pub config_hash: String,
    pub facilities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaSummary {
    pub area: Area,
    #[serde(flatten)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NationalSummary {
    pub count: usize,
    pub baseline: Option<Totals>,
    pub flexible: Option<Totals>,
    pub saving: Saving,
    pub baseline_peak_kw: Option<f64>,
    pub flexible_peak_kw: Option<f64>,
    pub planner_windows: usize,
    pub infeasible_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub metadata: Metadata,
    /// Headline figure: national relative cost saving.
    pub relative_saving: Option<f64>,
    pub national: NationalSummary,
    pub areas: Vec<AreaSummary>,
    pub categories: Vec<CategoryRecord>,
    pub calibration: Calibration,
}

pub fn summary(report: &NationalReport) -> Summary {
    let s = &report.inputs.scenario;
    let flex = || report.breweries.iter().filter_map(|b| b.flexible.as_ref());
    Summary {
        metadata: Metadata {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            year: s.year,
            seed: s.seed,
            data_seed: s.data_seed,
            mode: s.mode.as_str(),
            config_hash: report.inputs.config_hash.clone(),
            facilities: report.breweries.len(),
        },
        relative_saving: report.national.saving.cost,
        national: NationalSummary {
            count: report.national.count,
            baseline: report.national.baseline,
            flexible: report.national.flexible,
            saving: report.national.saving,
            baseline_peak_kw: report.national_peak_kw(ControlPolicy::Baseline),
            flexible_peak_kw: report.national_peak_kw(ControlPolicy::Flexible),
            planner_windows: flex().map(|r| r.plans).sum(),
            infeasible_windows: flex().map(|r| r.infeasible_windows).sum(),
        },
        areas: report
            .areas
            .iter()
            .map(|(area, aggregate)| AreaSummary {
                area: *area,
                aggregate: aggregate.clone(),
            })
            .collect(),
        categories: category_records(report),
        calibration: report.calibration.clone(),
    }
}

pub fn category_records(report: &NationalReport) -> Vec<CategoryRecord> {
    report
        .categories
        .iter()
        .map(|r| {
            let t = r.aggregate.primary();
            CategoryRecord {
                category: r.category,
                count: r.aggregate.count,
                cost_dkk: t.cost_dkk,
                co2_kg: t.co2_kg,
                load_kwh: t.load_kwh,
                relative_saving: r.aggregate.saving.cost,
            }
        })
        .collect()
}

pub fn brewery_records(report: &NationalReport) -> Vec<BreweryRecord> {
    let both = report.mode().runs_baseline() && report.mode().runs_flexible();
    report
        .breweries
        .iter()
        .map(|b| {
            let p = b.primary();
            let flex = b.flexible.as_ref().filter(|_| both);
            BreweryRecord {
                brewery_id: b.spec.id,
                name: b.spec.name.clone(),
                category: b.spec.category,
                area: b.spec.area,
                annual_volume_hl: b.spec.annual_volume,
                batch_volume_hl: b.spec.batch_volume,
                brews_ale: b.spec.brews_per_year_ale,
                brews_lager: b.spec.brews_per_year_lager,
                tanks_ale: b.spec.tank_count(Style::Ale),
                tanks_lager: b.spec.tank_count(Style::Lager),
                policy: p.policy,
                cost_dkk: p.account.cost,
                co2_kg: p.account.emissions,
                load_kwh: p.account.total_load(),
                peak_kw: p.peak_kw,
                intensity_kwh_per_hl: p.intensity(b.spec.annual_volume),
                batches_started: p.batches_started,
                batches_packaged: p.batches_packaged,
                flexible_cost_dkk: flex.map(|f| f.account.cost),
                flexible_co2_kg: flex.map(|f| f.account.emissions),
                flexible_load_kwh: flex.map(|f| f.account.total_load()),
                relative_saving: b.saving(),
                infeasible_windows: b.flexible.as_ref().map(|f| f.infeasible_windows),
            }
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, AppError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(|e| AppError::io("csv", e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| AppError::io("csv", e))?;
    }
    w.into_inner().map_err(|e| AppError::io("csv", e))
}

fn hourly_bytes(report: &NationalReport, policy: ControlPolicy) -> Result<Option<Vec<u8>>, AppError> {
    let Some((_, h)) = report.hourly.iter().find(|(p, _)| *p == policy) else {
        return Ok(None);
    };
    let ambient = &report.inputs.ambient;
    let rows: Vec<HourlyRecord> = (0..ambient.len())
        .map(|i| HourlyRecord {
            timestamp: format_timestamp(ambient.timestamp(i)),
            dk1_kwh: h.dk1[i],
            dk2_kwh: h.dk2[i],
        })
        .collect();
    csv_bytes(&rows, &["timestamp", "dk1_kwh", "dk2_kwh"]).map(Some)
}

fn trace_bytes(report: &NationalReport) -> Result<Vec<u8>, AppError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut any = false;
    for b in &report.breweries {
        for r in [&b.baseline, &b.flexible].into_iter().flatten() {
            for t in &r.traces {
                any = true;
                w.serialize(TraceRecord {
                    brewery_id: b.spec.id,
                    policy: r.policy,
                    batch_id: t.batch_id,
                    timestamp: format_timestamp(t.timestamp),
                    temperature_c: t.temperature_c,
                    extract_plato: t.extract_plato,
                    cooling_w: t.cooling_w,
                })
                .map_err(|e| AppError::io("traces", e))?;
            }
        }
    }
    if !any {
        w.write_record([
            "brewery_id",
            "policy",
            "batch_id",
            "timestamp",
            "temperature_c",
            "extract_plato",
            "cooling_w",
        ])
        .map_err(|e| AppError::io("traces", e))?;
    }
    w.into_inner().map_err(|e| AppError::io("traces", e))
}

/// Every output file of a report, in write order.
pub fn render(report: &NationalReport, traces: bool) -> Result<Vec<(&'static str, Vec<u8>)>, AppError> {
    let mut files = Vec::new();
    files.push((
        PER_CATEGORY,
        csv_bytes(
            &category_records(report),
            &["category", "count", "cost_dkk", "co2_kg", "load_kwh", "relative_saving"],
        )?,
    ));
    files.push((PER_BREWERY, csv_bytes(&brewery_records(report), &["brewery_id"])?));
    let primary = if report.mode().runs_baseline() {
        ControlPolicy::Baseline
    } else {
        ControlPolicy::Flexible
    };
    if let Some(b) = hourly_bytes(report, primary)? {
        files.push((HOURLY_LOAD, b));
    }
    if primary == ControlPolicy::Baseline {
        if let Some(b) = hourly_bytes(report, ControlPolicy::Flexible)? {
            files.push((HOURLY_LOAD_FLEXIBLE, b));
        }
    }
    if traces {
        files.push((TRACES, trace_bytes(report)?));
    }
    let mut json = serde_json::to_vec_pretty(&summary(report)).map_err(|e| AppError::io("summary", e))?;
    json.push(b'\n');
    files.push((SUMMARY, json));
    Ok(files)
}

/// Output directory whose files appear only on [`OutputDir::commit`].
#[derive(Debug)]
pub struct OutputDir {
    target: PathBuf,
    staging: tempfile::TempDir,
}

impl OutputDir {
    /// Create `target` if needed and check that it is writable.
    pub fn prepare(target: &Path) -> Result<Self, AppError> {
        std::fs::create_dir_all(target)
            .map_err(|e| AppError::io(format!("cannot create output directory {}", target.display()), e))?;
        let staging = tempfile::Builder::new()
            .prefix(".brewflex-staging-")
            .tempdir_in(target)
            .map_err(|e| AppError::io(format!("output directory {} is not writable", target.display()), e))?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
        })
    }

    pub fn commit(self, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>, AppError> {
        for (name, bytes) in files {
            let p = self.staging.path().join(name);
            std::fs::write(&p, bytes).map_err(|e| AppError::io(p.display(), e))?;
        }
        let mut written = Vec::new();
        for (name, _) in files {
            let to = self.target.join(name);
            std::fs::rename(self.staging.path().join(name), &to).map_err(|e| AppError::io(to.display(), e))?;
            written.push(to);
        }
        Ok(written)
    }
}
