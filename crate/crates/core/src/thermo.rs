//! Fermentation kinetics, wort properties, tank geometry and the tank
//! thermal integrator.
//!
//! Apparent extract follows a generalised logistic decline from the
//! original gravity `p_initial` to the terminal gravity `p_end`. Heat is
//! released in proportion to the mass of extract consumed. The tank is a
//! single well-mixed thermal node exchanging heat with its surroundings
//! through an overall `UA`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("invalid kinetics: {0}")]
    InvalidKinetics(String),
    #[error("{field} = {value} is outside the valid range [{min}, {max}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("extract rate must be non-positive, got {0} °P/h")]
    PositiveRate(f64),
    #[error("tank volume must be positive, got {0} m³")]
    NonPositiveVolume(f64),
    #[error("{0}")]
    Domain(String),
}

/// Beer style. Ales ferment warm and fast, lagers cold and slow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Ale,
    Lager,
}

impl Style {
    pub const ALL: [Style; 2] = [Style::Ale, Style::Lager];

    pub fn as_str(self) -> &'static str {
        match self {
            Style::Ale => "ale",
            Style::Lager => "lager",
        }
    }
}

/// A value held separately for each style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerStyle<T> {
    pub ale: T,
    pub lager: T,
}

impl<T> PerStyle<T> {
    pub fn new(ale: T, lager: T) -> Self {
        Self { ale, lager }
    }

    pub fn get(&self, style: Style) -> &T {
        match style {
            Style::Ale => &self.ale,
            Style::Lager => &self.lager,
        }
    }

    pub fn get_mut(&mut self, style: Style) -> &mut T {
        match style {
            Style::Ale => &mut self.ale,
            Style::Lager => &mut self.lager,
        }
    }
}

impl std::fmt::Display for Style {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of the apparent-extract decline curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermentationKinetics {
    /// Original apparent extract, °Plato.
    pub p_initial: f64,
    /// Terminal apparent extract, °Plato.
    pub p_end: f64,
    /// Rate constant, 1/h.
    pub rate_b: f64,
    /// Time of maximum decline, hours after pitching.
    pub midpoint_m: f64,
    /// Asymmetry exponent.
    pub shape_s: f64,
}

impl FermentationKinetics {
    pub fn new(p_initial: f64, p_end: f64, rate_b: f64, midpoint_m: f64, shape_s: f64) -> Result<Self, ThermoError> {
        let k = Self {
            p_initial,
            p_end,
            rate_b,
            midpoint_m,
            shape_s,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), ThermoError> {
        let all = [self.p_initial, self.p_end, self.rate_b, self.midpoint_m, self.shape_s];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ThermoError::InvalidKinetics("parameters must be finite".into()));
        }
        if !(self.p_initial >= self.p_end && self.p_end >= 0.0) {
            return Err(ThermoError::InvalidKinetics(format!(
                "need p_initial >= p_end >= 0, got {} and {}",
                self.p_initial, self.p_end
            )));
        }
        if self.rate_b <= 0.0 || self.shape_s <= 0.0 {
            return Err(ThermoError::InvalidKinetics(
                "rate_b and shape_s must be positive".into(),
            ));
        }
        if self.midpoint_m < 0.0 {
            return Err(ThermoError::InvalidKinetics("midpoint_m must be non-negative".into()));
        }
        Ok(())
    }

    /// Default ale parameters: 12 → 2.5 °P, midpoint 60 h.
    pub fn ale() -> Self {
        Self {
            p_initial: 12.0,
            p_end: 2.5,
            rate_b: 0.05,
            midpoint_m: 60.0,
            shape_s: 1.0,
        }
    }

    /// Default lager parameters: 12 → 2.2 °P, midpoint 120 h.
    pub fn lager() -> Self {
        Self {
            p_initial: 12.0,
            p_end: 2.2,
            rate_b: 0.025,
            midpoint_m: 120.0,
            shape_s: 1.0,
        }
    }

    pub fn for_style(style: Style) -> Self {
        match style {
            Style::Ale => Self::ale(),
            Style::Lager => Self::lager(),
        }
    }

    /// Largest decline rate magnitude, attained at `t = midpoint_m`.
    pub fn peak_rate(&self) -> f64 {
        extract_rate(self, self.midpoint_m.max(0.0))
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `e^x / (1 + e^x)` without overflow.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Apparent extract (°P) at `t` hours after pitching.
///
/// `P(t) = p_end + (p_initial - p_end) / (1 + exp(B (t - M)))^(1/s)`,
/// evaluated in log space so that large `B (t - M)` saturates cleanly to
/// `p_end` instead of overflowing.
pub fn apparent_extract(k: &FermentationKinetics, t: f64) -> f64 {
    let span = k.p_initial - k.p_end;
    if span == 0.0 {
        return k.p_end;
    }
    let x = k.rate_b * (t - k.midpoint_m);
    let frac = (-softplus(x) / k.shape_s).exp();
    (k.p_end + span * frac).clamp(k.p_end, k.p_initial)
}

/// Analytic time derivative of [`apparent_extract`], °P/h. Never positive.
pub fn extract_rate(k: &FermentationKinetics, t: f64) -> f64 {
    let span = k.p_initial - k.p_end;
    if span == 0.0 {
        return 0.0;
    }
    let x = k.rate_b * (t - k.midpoint_m);
    // E (1+E)^-(1+1/s) = [E/(1+E)] (1+E)^(-1/s)
    let tail = logistic(x) * (-softplus(x) / k.shape_s).exp();
    -(span * k.rate_b / k.shape_s) * tail
}

/// Coefficients of the linear wort property relations.
///
/// `density = (rho_water - rho_temp_coeff (T - t_ref)) (1 + rho_extract_coeff P)`
/// `specific_heat = cp_water - cp_extract_coeff P`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyCoefficients {
    pub rho_water: f64,
    pub rho_temp_coeff: f64,
    pub t_ref: f64,
    pub rho_extract_coeff: f64,
    pub cp_water: f64,
    pub cp_extract_coeff: f64,
}

impl Default for PropertyCoefficients {
    fn default() -> Self {
        Self {
            rho_water: 1000.0,
            rho_temp_coeff: 0.2,
            t_ref: 4.0,
            rho_extract_coeff: 0.00404,
            cp_water: 4186.0,
            cp_extract_coeff: 23.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WortProperties {
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
}

pub const EXTRACT_RANGE: (f64, f64) = (0.0, 30.0);
pub const TEMPERATURE_RANGE: (f64, f64) = (-5.0, 105.0);
const DENSITY_RANGE: (f64, f64) = (900.0, 1200.0);
const SPECIFIC_HEAT_RANGE: (f64, f64) = (3000.0, 4300.0);

fn check_range(field: &'static str, value: f64, (min, max): (f64, f64)) -> Result<(), ThermoError> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(ThermoError::OutOfRange { field, value, min, max })
    }
}

pub fn wort_properties(
    extract: f64,
    temperature: f64,
    coeffs: &PropertyCoefficients,
) -> Result<WortProperties, ThermoError> {
    check_range("extract", extract, EXTRACT_RANGE)?;
    check_range("temperature", temperature, TEMPERATURE_RANGE)?;
    let density = (coeffs.rho_water - coeffs.rho_temp_coeff * (temperature - coeffs.t_ref))
        * (1.0 + coeffs.rho_extract_coeff * extract);
    let specific_heat = coeffs.cp_water - coeffs.cp_extract_coeff * extract;
    check_range("density", density, DENSITY_RANGE)?;
    check_range("specific_heat", specific_heat, SPECIFIC_HEAT_RANGE)?;
    Ok(WortProperties { density, specific_heat })
}

/// Heat released per kilogram of extract fermented, J/kg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FermentationHeatCoefficient {
    pub heat_per_extract: f64,
}

impl FermentationHeatCoefficient {
    pub fn new(heat_per_extract: f64) -> Result<Self, ThermoError> {
        if heat_per_extract.is_finite() && heat_per_extract > 0.0 {
            Ok(Self { heat_per_extract })
        } else {
            Err(ThermoError::Domain(format!(
                "heat_per_extract must be positive, got {heat_per_extract}"
            )))
        }
    }
}

impl Default for FermentationHeatCoefficient {
    fn default() -> Self {
        Self {
            heat_per_extract: 587_000.0,
        }
    }
}

/// Fermentation heat release in watts for a batch declining at `rate` °P/h.
///
/// °Plato is mass percent, so the extract consumed per hour is
/// `density * volume * (-rate / 100)` kilograms.
pub fn fermentation_heat(
    props: &WortProperties,
    fill_volume: f64,
    rate: f64,
    e_f: &FermentationHeatCoefficient,
) -> Result<f64, ThermoError> {
    if rate > 0.0 {
        return Err(ThermoError::PositiveRate(rate));
    }
    if fill_volume < 0.0 || !fill_volume.is_finite() {
        return Err(ThermoError::Domain(format!(
            "fill volume must be non-negative, got {fill_volume}"
        )));
    }
    let kg_per_hour = props.density * fill_volume * (-rate / 100.0);
    Ok(kg_per_hour * e_f.heat_per_extract / 3600.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankGeometry {
    /// m³
    pub volume: f64,
    /// m
    pub diameter: f64,
    /// m
    pub height: f64,
    /// Shell plus both end caps, m².
    pub surface_area: f64,
    /// W/(m²·K)
    pub u_value: f64,
}

impl TankGeometry {
    /// Overall heat transfer coefficient, W/K.
    pub fn ua(&self) -> f64 {
        self.u_value * self.surface_area
    }
}

pub const DEFAULT_U_VALUE: f64 = 0.3;

/// Cylindrical tank with a 2:1 height-to-diameter ratio holding `volume`.
pub fn tank_dimensions(volume: f64, u_value: f64) -> Result<TankGeometry, ThermoError> {
    if !(volume > 0.0) || !volume.is_finite() {
        return Err(ThermoError::NonPositiveVolume(volume));
    }
    if !(u_value >= 0.0) || !u_value.is_finite() {
        return Err(ThermoError::Domain(format!(
            "u_value must be non-negative, got {u_value}"
        )));
    }
    let diameter = (2.0 * volume / PI).cbrt();
    let height = 2.0 * diameter;
    let surface_area = PI * diameter * height + 0.5 * PI * diameter * diameter;
    Ok(TankGeometry {
        volume,
        diameter,
        height,
        surface_area,
        u_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankThermalState {
    /// °C
    pub temperature: f64,
    /// °P
    pub extract: f64,
    /// m³
    pub fill_volume: f64,
    /// hours
    pub time_since_pitch: f64,
}

impl TankThermalState {
    pub fn pitched(kinetics: &FermentationKinetics, temperature: f64, fill_volume: f64) -> Self {
        Self {
            temperature,
            extract: apparent_extract(kinetics, 0.0),
            fill_volume,
            time_since_pitch: 0.0,
        }
    }
}

/// Heat flows held constant across one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInputs {
    /// Fermentation heat release, W.
    pub q_ferm: f64,
    /// Heat removed by the refrigeration unit, W.
    pub q_cool: f64,
    /// Temperature of the tank surroundings, °C.
    pub ambient: f64,
}

/// Temperature after `dt` seconds of the linear node
/// `C dT/dt = q_net + UA (ambient - T)`, integrated in closed form.
pub fn node_temperature(t0: f64, heat_capacity: f64, ua: f64, q_net: f64, ambient: f64, dt: f64) -> f64 {
    let b = ua / heat_capacity;
    if b == 0.0 {
        return t0 + q_net * dt / heat_capacity;
    }
    let t_eq = ambient + q_net / ua;
    // exp_m1 keeps precision when b·dt is tiny
    t0 - (t0 - t_eq) * -(-b * dt).exp_m1()
}

/// Advance the tank contents by `dt` seconds with piecewise-constant inputs.
pub fn tank_step(
    state: &TankThermalState,
    geometry: &TankGeometry,
    kinetics: &FermentationKinetics,
    inputs: StepInputs,
    dt: f64,
    props: &WortProperties,
) -> Result<TankThermalState, ThermoError> {
    if !(dt > 0.0) {
        return Err(ThermoError::Domain(format!("dt must be positive, got {dt}")));
    }
    if inputs.q_cool < 0.0 {
        return Err(ThermoError::Domain(format!(
            "cooling must be non-negative, got {} W",
            inputs.q_cool
        )));
    }
    let heat_capacity = props.density * state.fill_volume * props.specific_heat;
    let q_net = inputs.q_ferm - inputs.q_cool;
    let temperature = if heat_capacity > 0.0 {
        node_temperature(
            state.temperature,
            heat_capacity,
            geometry.ua(),
            q_net,
            inputs.ambient,
            dt,
        )
    } else if q_net != 0.0 {
        return Err(ThermoError::Domain(
            "empty tank cannot absorb a nonzero heat flow".into(),
        ));
    } else {
        state.temperature
    };
    let time_since_pitch = state.time_since_pitch + dt / 3600.0;
    Ok(TankThermalState {
        temperature,
        extract: apparent_extract(kinetics, time_since_pitch),
        fill_volume: state.fill_volume,
        time_since_pitch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn kin(p_initial: f64, p_end: f64, b: f64, m: f64, s: f64) -> FermentationKinetics {
        FermentationKinetics::new(p_initial, p_end, b, m, s).unwrap()
    }

    #[test]
    fn degenerate_kinetics_is_flat() {
        let k = kin(12.0, 12.0, 0.05, 60.0, 1.0);
        for t in [0.0, 10.0, 60.0, 1e4] {
            assert_eq!(apparent_extract(&k, t), 12.0);
            assert_eq!(extract_rate(&k, t), 0.0);
        }
    }

    #[test]
    fn midpoint_with_unit_shape_is_halfway() {
        let k = kin(12.0, 2.0, 0.05, 60.0, 1.0);
        assert!((apparent_extract(&k, 60.0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn extract_at_100_hours() {
        // 9.5 / (1 + e^2) + 2.5
        let k = kin(12.0, 2.5, 0.05, 60.0, 1.0);
        assert!((apparent_extract(&k, 100.0) - 3.632_427_759_210_117).abs() < 1e-12);
    }

    #[test]
    fn rate_at_midpoint() {
        let k = kin(12.0, 2.0, 0.04, 50.0, 1.0);
        assert!((extract_rate(&k, 50.0) + 0.1).abs() < 1e-12);
        let h = 1e-4;
        let fd = (apparent_extract(&k, 50.0 + h) - apparent_extract(&k, 50.0 - h)) / (2.0 * h);
        assert!((fd + 0.1).abs() < 1e-6);
    }

    #[test]
    fn rate_saturates() {
        let k = kin(12.0, 2.0, 0.04, 50.0, 1.0);
        let t = 50.0 + 2000.0 / 0.04;
        assert!(extract_rate(&k, t).abs() < 1e-9);
        assert!((apparent_extract(&k, t) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_kinetics_rejected() {
        assert!(FermentationKinetics::new(2.0, 12.0, 0.05, 60.0, 1.0).is_err());
        assert!(FermentationKinetics::new(12.0, 2.0, 0.0, 60.0, 1.0).is_err());
        assert!(FermentationKinetics::new(12.0, 2.0, 0.05, -1.0, 1.0).is_err());
        assert!(FermentationKinetics::new(12.0, 2.0, 0.05, 60.0, 0.0).is_err());
        assert!(FermentationKinetics::new(f64::NAN, 2.0, 0.05, 60.0, 1.0).is_err());
    }

    #[test]
    fn wort_anchors() {
        let c = PropertyCoefficients::default();
        let water = wort_properties(0.0, 4.0, &c).unwrap();
        assert_eq!(water.density, 1000.0);
        assert_eq!(water.specific_heat, 4186.0);
        let wort = wort_properties(12.0, 4.0, &c).unwrap();
        assert!((wort.density - 1048.48).abs() < 1e-9);
        assert!((wort.specific_heat - 3910.0).abs() < 1e-9);
    }

    #[test]
    fn wort_domain_errors_name_field() {
        let c = PropertyCoefficients::default();
        match wort_properties(31.0, 4.0, &c) {
            Err(ThermoError::OutOfRange { field, .. }) => assert_eq!(field, "extract"),
            other => panic!("{other:?}"),
        }
        match wort_properties(12.0, 110.0, &c) {
            Err(ThermoError::OutOfRange { field, .. }) => assert_eq!(field, "temperature"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fermentation_heat_values() {
        let props = WortProperties {
            density: 1048.0,
            specific_heat: 3910.0,
        };
        let e = FermentationHeatCoefficient::default();
        let q = fermentation_heat(&props, 10.0, -0.1, &e).unwrap();
        assert!((q - 1048.0 * 10.0 * 0.001 * 587_000.0 / 3600.0).abs() < 1e-9);
        assert!((q - 1_708.822_222_222).abs() < 1e-6);
        assert_eq!(fermentation_heat(&props, 10.0, 0.0, &e).unwrap(), 0.0);
        assert_eq!(fermentation_heat(&props, 0.0, -0.1, &e).unwrap(), 0.0);
        assert!(matches!(
            fermentation_heat(&props, 10.0, 0.1, &e),
            Err(ThermoError::PositiveRate(_))
        ));
    }

    #[test]
    fn tank_dimensions_anchors() {
        let g = tank_dimensions(1.0, 0.3).unwrap();
        assert!((g.diameter - 0.860_254_0).abs() < 1e-6);
        assert!((g.height - 1.720_508_1).abs() < 1e-6);
        let g = tank_dimensions(PI / 2.0, 0.3).unwrap();
        assert!((g.diameter - 1.0).abs() < 1e-12);
        assert!((g.height - 2.0).abs() < 1e-12);
        let g = tank_dimensions(8.0 * PI / 2.0, 0.3).unwrap();
        assert!((g.diameter - 2.0).abs() < 1e-12);
        assert!((g.surface_area - (PI * 2.0 * 4.0 + 0.5 * PI * 4.0)).abs() < 1e-12);
        assert!(tank_dimensions(0.0, 0.3).is_err());
        assert!(tank_dimensions(-1.0, 0.3).is_err());
    }

    fn water_props() -> WortProperties {
        WortProperties {
            density: 1000.0,
            specific_heat: 3600.0,
        }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let g = tank_dimensions(1.0, 0.3).unwrap();
        let k = FermentationKinetics::ale();
        let s = TankThermalState::pitched(&k, 15.0, 1.0);
        let inputs = StepInputs {
            q_ferm: 0.0,
            q_cool: 0.0,
            ambient: 15.0,
        };
        let next = tank_step(&s, &g, &k, inputs, 3600.0, &water_props()).unwrap();
        assert_eq!(next.temperature, 15.0);
        assert!((next.time_since_pitch - 1.0).abs() < 1e-15);
        assert_eq!(next.extract, apparent_extract(&k, 1.0));
    }

    #[test]
    fn adiabatic_heating_is_linear() {
        let g = tank_dimensions(1.0, 0.0).unwrap();
        let k = FermentationKinetics::ale();
        // m·cp = 1000 kg * 3600 J/(kg K) = 3.6e6 J/K
        let s = TankThermalState::pitched(&k, 10.0, 1.0);
        let inputs = StepInputs {
            q_ferm: 1000.0,
            q_cool: 0.0,
            ambient: 20.0,
        };
        let next = tank_step(&s, &g, &k, inputs, 3600.0, &water_props()).unwrap();
        assert!((next.temperature - 11.0).abs() < 1e-12);
    }

    #[test]
    fn substepping_invariant() {
        let g = tank_dimensions(2.0, 0.3).unwrap();
        let k = FermentationKinetics::lager();
        let s = TankThermalState::pitched(&k, 11.0, 1.8);
        let props = wort_properties(12.0, 11.0, &PropertyCoefficients::default()).unwrap();
        let inputs = StepInputs {
            q_ferm: 500.0,
            q_cool: 1200.0,
            ambient: 18.0,
        };
        let whole = tank_step(&s, &g, &k, inputs, 3600.0, &props).unwrap();
        let mut part = s;
        for _ in 0..10 {
            part = tank_step(&part, &g, &k, inputs, 360.0, &props).unwrap();
        }
        assert!(rel(part.temperature, whole.temperature) < 1e-9);
        assert!(rel(part.extract, whole.extract) < 1e-9);
    }

    #[test]
    fn empty_tank_with_heat_is_domain_error() {
        let g = tank_dimensions(1.0, 0.3).unwrap();
        let k = FermentationKinetics::ale();
        let s = TankThermalState::pitched(&k, 10.0, 0.0);
        let heat = StepInputs {
            q_ferm: 10.0,
            q_cool: 0.0,
            ambient: 10.0,
        };
        assert!(tank_step(&s, &g, &k, heat, 60.0, &water_props()).is_err());
        let none = StepInputs { q_ferm: 0.0, ..heat };
        assert!(tank_step(&s, &g, &k, none, 60.0, &water_props()).is_ok());
    }
}
