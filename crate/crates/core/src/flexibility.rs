//! Refrigeration control: the thermostatic baseline and the price-responsive
//! window planner that keeps a tank inside a temperature deadband while
//! buying cooling in the cheapest hours.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::EnergyAccount;
use crate::thermo::node_temperature;

/// Slack used when comparing projected temperatures against bounds.
pub const BAND_EPS: f64 = 1e-9;
const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("cooling capacity cannot hold the upper band edge at hour {hour}")]
    Infeasible { hour: usize },
    #[error("passive drift leaves the band from below at hour {hour}")]
    BelowBand { hour: usize },
    #[error("invalid plan request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SavingsError {
    #[error("baseline cost is zero; relative saving is undefined")]
    ZeroBaseline,
}

/// Refrigeration capacity assigned to one tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingPlant {
    /// Thermal removal capacity, W.
    pub q_max: f64,
    /// Coefficient of performance at `cop_ref_ambient`.
    pub cop: f64,
    /// COP loss per kelvin of ambient above the reference (0 = constant COP).
    #[serde(default)]
    pub cop_slope: f64,
    #[serde(default)]
    pub cop_ref_ambient: f64,
}

impl CoolingPlant {
    pub fn new(q_max: f64, cop: f64) -> Result<Self, PlanError> {
        let plant = Self {
            q_max,
            cop,
            cop_slope: 0.0,
            cop_ref_ambient: 0.0,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.q_max > 0.0 && self.q_max.is_finite() && self.cop > 0.0 && self.cop.is_finite()) {
            return Err(PlanError::InvalidRequest(format!(
                "plant needs q_max > 0 and cop > 0, got {} and {}",
                self.q_max, self.cop
            )));
        }
        Ok(())
    }

    /// COP at the given ambient temperature, never below 0.5.
    pub fn cop_at(&self, ambient: f64) -> f64 {
        (self.cop - self.cop_slope * (ambient - self.cop_ref_ambient)).max(0.5)
    }

    /// Electric energy (kWh) drawn running at `duty` for `seconds`.
    pub fn electric_kwh(&self, duty: f64, seconds: f64, ambient: f64) -> f64 {
        duty * self.q_max * seconds / self.cop_at(ambient) / 3.6e6
    }
}

/// Allowed temperature interval around a setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexBand {
    /// °C
    pub setpoint: f64,
    /// Half-width of the band, K.
    pub deadband_delta: f64,
    /// Thermostat switching offset, K.
    pub hysteresis: f64,
}

impl FlexBand {
    pub fn new(setpoint: f64, deadband_delta: f64, hysteresis: f64) -> Result<Self, PlanError> {
        if !(hysteresis > 0.0 && hysteresis <= deadband_delta) || !setpoint.is_finite() {
            return Err(PlanError::InvalidRequest(format!(
                "band needs 0 < hysteresis <= delta, got hysteresis {hysteresis}, delta {deadband_delta}"
            )));
        }
        Ok(Self {
            setpoint,
            deadband_delta,
            hysteresis,
        })
    }

    pub fn lower(&self) -> f64 {
        self.setpoint - self.deadband_delta
    }

    pub fn upper(&self) -> f64 {
        self.setpoint + self.deadband_delta
    }
}

/// Hysteresis relay. Returns whether the compressor runs this step.
pub fn thermostat_step(temperature: f64, band: &FlexBand, was_cooling: bool) -> bool {
    if temperature > band.setpoint + band.hysteresis {
        true
    } else if temperature < band.setpoint - band.hysteresis {
        false
    } else {
        was_cooling
    }
}

/// Lumped thermal parameters of a filled tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// m·cp, J/K
    pub heat_capacity: f64,
    /// W/K
    pub ua: f64,
}

/// Inputs to [`plan_window`] and [`oracle_enumerate`]. Hourly slices must
/// hold at least `horizon` entries.
#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    pub window_start: DateTime<Utc>,
    /// Tank temperature at the window start, °C.
    pub t0: f64,
    pub thermal: ThermalParams,
    /// °C per hour
    pub ambient: &'a [f64],
    /// W per hour
    pub q_ferm: &'a [f64],
    /// DKK/MWh per hour
    pub prices: &'a [f64],
    pub band: FlexBand,
    pub plant: CoolingPlant,
    pub horizon: usize,
}

impl PlanRequest<'_> {
    fn validate(&self) -> Result<(), PlanError> {
        let h = self.horizon;
        if h == 0 {
            return Err(PlanError::InvalidRequest("horizon must be at least 1".into()));
        }
        if self.ambient.len() < h || self.q_ferm.len() < h || self.prices.len() < h {
            return Err(PlanError::InvalidRequest(format!("forecasts shorter than horizon {h}")));
        }
        if !(self.thermal.heat_capacity > 0.0) || !(self.thermal.ua >= 0.0) {
            return Err(PlanError::InvalidRequest(
                "heat capacity must be positive and UA non-negative".into(),
            ));
        }
        self.plant.validate()?;
        let b = &self.band;
        if self.t0 < b.lower() - BAND_EPS || self.t0 > b.upper() + BAND_EPS {
            return Err(PlanError::InvalidRequest(format!(
                "start temperature {} outside band [{}, {}]",
                self.t0,
                b.lower(),
                b.upper()
            )));
        }
        Ok(())
    }

    /// Cost in DKK of one unit of duty for one hour at `hour`.
    fn unit_cost(&self, hour: usize) -> f64 {
        self.prices[hour] * self.unit_kwh(hour) / 1000.0
    }

    fn unit_kwh(&self, hour: usize) -> f64 {
        self.plant.electric_kwh(1.0, SECONDS_PER_HOUR, self.ambient[hour])
    }

    /// Upper limit for the temperature at hour boundary `i` (1-based).
    fn upper_at(&self, i: usize) -> f64 {
        if i == self.horizon {
            self.band.upper().min(self.band.setpoint)
        } else {
            self.band.upper()
        }
    }

    /// Projected boundary temperatures `T_0..=T_H` for a duty vector.
    pub fn simulate(&self, duty: &[f64]) -> Vec<f64> {
        let mut temps = Vec::with_capacity(self.horizon + 1);
        let mut t = self.t0;
        temps.push(t);
        for (k, d) in duty.iter().enumerate().take(self.horizon) {
            let q_net = self.q_ferm[k] - d * self.plant.q_max;
            t = node_temperature(
                t,
                self.thermal.heat_capacity,
                self.thermal.ua,
                q_net,
                self.ambient[k],
                SECONDS_PER_HOUR,
            );
            temps.push(t);
        }
        temps
    }

    pub fn cost_of(&self, duty: &[f64]) -> f64 {
        duty.iter().enumerate().map(|(k, d)| d * self.unit_cost(k)).sum()
    }

    /// True when the trajectory respects the band and the terminal limit.
    pub fn is_feasible(&self, temps: &[f64]) -> bool {
        (1..=self.horizon).all(|i| temps[i] >= self.band.lower() - BAND_EPS && temps[i] <= self.upper_at(i) + BAND_EPS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPlan {
    pub window_start: DateTime<Utc>,
    /// Fraction of `q_max` per hour, in [0, 1].
    pub duty: Vec<f64>,
    /// Boundary temperatures, `horizon + 1` entries starting with `t0`.
    pub temperatures: Vec<f64>,
    /// kWh per hour
    pub electric_load: Vec<f64>,
    /// DKK
    pub cost: f64,
}

impl DispatchPlan {
    pub fn horizon(&self) -> usize {
        self.duty.len()
    }

    pub fn energy(&self) -> f64 {
        self.electric_load.iter().sum()
    }
}

/// Temperature drop at boundary `hour + 1 + lag` per unit duty in `hour`.
struct Response {
    /// Drop at the boundary right after the hour.
    gain: f64,
    /// Per-hour retention of an earlier drop.
    decay: f64,
}

impl Response {
    fn new(req: &PlanRequest<'_>) -> Self {
        let c = req.thermal.heat_capacity;
        let ua = req.thermal.ua;
        if ua == 0.0 {
            Self {
                gain: req.plant.q_max * SECONDS_PER_HOUR / c,
                decay: 1.0,
            }
        } else {
            let decay = (-ua * SECONDS_PER_HOUR / c).exp();
            Self {
                gain: req.plant.q_max * -(-ua * SECONDS_PER_HOUR / c).exp_m1() / ua,
                decay,
            }
        }
    }

    fn weight(&self, lag: usize) -> f64 {
        self.gain * self.decay.powi(lag as i32)
    }
}

/// Largest extra duty at `hour` that keeps every later boundary at or
/// above the lower band edge.
fn lower_cap(temps: &[f64], resp: &Response, hour: usize, lower: f64) -> f64 {
    (hour + 1..temps.len())
        .map(|i| ((temps[i] - lower).max(0.0)) / resp.weight(i - hour - 1))
        .fold(f64::INFINITY, f64::min)
}

fn apply(temps: &mut [f64], duty: &mut [f64], resp: &Response, hour: usize, amount: f64) {
    duty[hour] += amount;
    for (i, t) in temps.iter_mut().enumerate().skip(hour + 1) {
        *t -= amount * resp.weight(i - hour - 1);
    }
}

fn finish(req: &PlanRequest<'_>, mut duty: Vec<f64>) -> DispatchPlan {
    for d in duty.iter_mut() {
        *d = d.clamp(0.0, 1.0);
    }
    let temperatures = req.simulate(&duty);
    let electric_load = (0..req.horizon).map(|k| duty[k] * req.unit_kwh(k)).collect();
    DispatchPlan {
        window_start: req.window_start,
        cost: req.cost_of(&duty),
        duty,
        temperatures,
        electric_load,
    }
}

/// Cheapest-hour backfill over one planning window.
///
/// Starting from zero duty, walk the hour boundaries in order. Whenever a
/// boundary sits above its limit, buy cooling in the hour before it with
/// the lowest cost per kelvin removed at that boundary (ties go to the
/// earlier hour). Each purchase is the smallest amount that clears the
/// violation, bounded by full duty and by the lower band edge at every
/// later boundary. The final boundary must end at or below the setpoint.
/// Hours with negative price are filled first, as far as the lower edge
/// allows.
pub fn plan_window(req: &PlanRequest<'_>) -> Result<DispatchPlan, PlanError> {
    req.validate()?;
    let h = req.horizon;
    let lower = req.band.lower();
    let resp = Response::new(req);
    let mut duty = vec![0.0; h];
    let mut temps = req.simulate(&duty);

    if let Some(i) = (1..=h).find(|&i| temps[i] < lower - BAND_EPS) {
        return Err(PlanError::BelowBand { hour: i });
    }

    let mut negative: Vec<usize> = (0..h).filter(|&k| req.prices[k] < 0.0).collect();
    negative.sort_by(|&a, &b| req.prices[a].total_cmp(&req.prices[b]).then(a.cmp(&b)));
    for j in negative {
        let room = (1.0 - duty[j]).min(lower_cap(&temps, &resp, j, lower));
        if room > 0.0 {
            apply(&mut temps, &mut duty, &resp, j, room);
        }
    }

    for k in 1..=h {
        let limit = req.upper_at(k);
        while temps[k] > limit + BAND_EPS {
            let excess = temps[k] - limit;
            let mut best: Option<(usize, f64, f64)> = None;
            for (j, d) in duty.iter().enumerate().take(k) {
                let w = resp.weight(k - 1 - j);
                let room = (1.0 - d).min(lower_cap(&temps, &resp, j, lower));
                // skip hours whose remaining room cannot move T_k measurably
                if room * w <= BAND_EPS * 1e-3 {
                    continue;
                }
                let per_kelvin = req.unit_cost(j) / w;
                if best.is_none_or(|(_, c, _)| per_kelvin < c) {
                    best = Some((j, per_kelvin, room));
                }
            }
            let Some((j, _, room)) = best else {
                return Err(PlanError::Infeasible {
                    hour: first_violation_at_full_duty(req).unwrap_or(k),
                });
            };
            let amount = (excess / resp.weight(k - 1 - j)).min(room);
            apply(&mut temps, &mut duty, &resp, j, amount);
        }
    }
    Ok(finish(req, duty))
}

/// First boundary above its limit when every hour runs at full duty.
pub fn first_violation_at_full_duty(req: &PlanRequest<'_>) -> Option<usize> {
    let temps = req.simulate(&vec![1.0; req.horizon]);
    (1..=req.horizon).find(|&i| temps[i] > req.upper_at(i) + BAND_EPS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub duty: Vec<f64>,
    pub cost: f64,
}

pub const ORACLE_MAX_HORIZON: usize = 8;
pub const ORACLE_LEVELS: [f64; 3] = [0.0, 0.5, 1.0];

/// Exhaustive search over every duty vector drawn from `levels`.
///
/// Returns the cheapest feasible vector, earliest in lexicographic order
/// among equal costs, or `None` when no vector is feasible.
pub fn oracle_enumerate(req: &PlanRequest<'_>, levels: &[f64]) -> Result<Option<OracleResult>, PlanError> {
    req.validate()?;
    let h = req.horizon;
    if h > ORACLE_MAX_HORIZON {
        return Err(PlanError::InvalidRequest(format!(
            "oracle horizon {h} exceeds {ORACLE_MAX_HORIZON}"
        )));
    }
    if levels.is_empty() {
        return Err(PlanError::InvalidRequest("no duty levels".into()));
    }
    let n = levels.len();
    let total = n.pow(h as u32);
    let mut best: Option<OracleResult> = None;
    let mut digits = vec![0usize; h];
    let mut duty = vec![0.0; h];
    for _ in 0..total {
        for (d, &i) in duty.iter_mut().zip(&digits) {
            *d = levels[i];
        }
        let temps = req.simulate(&duty);
        if req.is_feasible(&temps) {
            let cost = req.cost_of(&duty);
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                best = Some(OracleResult {
                    duty: duty.clone(),
                    cost,
                });
            }
        }
        // odometer increment, last digit fastest -> lexicographic order
        for pos in (0..h).rev() {
            digits[pos] += 1;
            if digits[pos] < n {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    /// Relative cost saving.
    pub cost: f64,
    /// Relative emission saving; `None` when baseline emissions are zero.
    pub emissions: Option<f64>,
}

pub fn savings(baseline: &EnergyAccount, flexible: &EnergyAccount) -> Result<Savings, SavingsError> {
    if baseline.cost == 0.0 {
        return Err(SavingsError::ZeroBaseline);
    }
    let emissions = (baseline.emissions != 0.0).then(|| (baseline.emissions - flexible.emissions) / baseline.emissions);
    Ok(Savings {
        cost: (baseline.cost - flexible.cost) / baseline.cost,
        emissions,
    })
}
