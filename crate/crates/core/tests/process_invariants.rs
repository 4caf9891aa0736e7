use brewflex_core::market::synthetic::SyntheticMarket;
use brewflex_core::market::{Area, HourlySeries, SeriesKind};
use brewflex_core::population::{synthesize_population, synthetic_gis, BrewerySpec, PlanSettings, SizeCategory};
use brewflex_core::process::{build_calendar, run_brewery, ControlPolicy, ScenarioData, SimParams, StageDurations};
use brewflex_core::thermo::Style;

const YEAR: i32 = 2021;

/// One facility from each of the first five categories.
fn sample() -> Vec<BrewerySpec> {
    let cats: Vec<SizeCategory> = SizeCategory::danish_defaults()
        .into_iter()
        .take(5)
        .map(|c| SizeCategory { count: 1, ..c })
        .collect();
    let residence = StageDurations::default().residence_days();
    synthesize_population(&synthetic_gis(5, 2), &cats, 3, &PlanSettings::default(), &residence).unwrap()
}

struct Market {
    prices: HourlySeries,
    co2: HourlySeries,
    ambient: HourlySeries,
}

impl Market {
    fn synthetic(seed: u64) -> Self {
        let m = SyntheticMarket::default();
        Self {
            prices: m.prices(YEAR, Area::Dk1, seed),
            co2: m.co2(YEAR, Area::Dk1, seed),
            ambient: m.ambient(YEAR, seed),
        }
    }

    fn data(&self) -> ScenarioData<'_> {
        ScenarioData {
            year: YEAR,
            prices: &self.prices,
            co2: &self.co2,
            ambient: &self.ambient,
        }
    }
}

#[test]
fn batches_tanks_and_loads_are_consistent() {
    let market = Market::synthetic(1);
    let params = SimParams::default();
    for spec in sample() {
        let calendar = build_calendar(&spec, YEAR, &params.calendar, &params.durations).unwrap();
        let fleet = spec.tank_count(Style::Ale) + spec.tank_count(Style::Lager);
        for policy in [ControlPolicy::Baseline, ControlPolicy::Flexible] {
            let r = run_brewery(&spec, &market.data(), &params, policy).unwrap();
            assert_eq!(r.batches_started, calendar.len());
            assert_eq!(r.batches_packaged + r.batches_in_flight, r.batches_started);
            assert!(r.batches_pitched >= r.batches_packaged);
            for style in [Style::Ale, Style::Lager] {
                assert!(*r.max_occupancy.get(style) <= spec.tank_count(style));
            }
            assert_eq!(r.account.load.len(), market.prices.len());
            assert_eq!(r.occupancy.len(), market.prices.len());
            for (h, (&occ, &load)) in r.occupancy.iter().zip(&r.account.load).enumerate() {
                assert!(occ as usize <= fleet);
                assert!(load >= 0.0);
                if occ == 0 {
                    assert_eq!(load, 0.0, "brewery {} hour {h}", spec.id);
                }
            }
            assert!(r.account.total_load() > 0.0);
        }
    }
}

#[test]
fn baseline_ignores_prices() {
    let a = Market::synthetic(1);
    let b = Market {
        prices: HourlySeries::constant(Area::Dk1, SeriesKind::Price, YEAR, 123.0).unwrap(),
        ..Market::synthetic(1)
    };
    let params = SimParams::default();
    for spec in sample().iter().take(3) {
        let x = run_brewery(spec, &a.data(), &params, ControlPolicy::Baseline).unwrap();
        let y = run_brewery(spec, &b.data(), &params, ControlPolicy::Baseline).unwrap();
        assert_eq!(x.account.load, y.account.load);
    }
}

#[test]
fn flexible_is_cheaper_and_deterministic() {
    let market = Market::synthetic(4);
    let params = SimParams::default();
    for spec in sample().iter().take(3) {
        let base = run_brewery(spec, &market.data(), &params, ControlPolicy::Baseline).unwrap();
        let flex = run_brewery(spec, &market.data(), &params, ControlPolicy::Flexible).unwrap();
        assert!(flex.account.cost <= base.account.cost + 1e-6);
        assert!(flex.plans > 0);
        let again = run_brewery(spec, &market.data(), &params, ControlPolicy::Flexible).unwrap();
        assert_eq!(flex, again);
    }
}

#[test]
fn traces_follow_the_bands() {
    let market = Market::synthetic(2);
    let params = SimParams {
        record_traces: true,
        ..SimParams::default()
    };
    let spec = &sample()[0];
    let r = run_brewery(spec, &market.data(), &params, ControlPolicy::Flexible).unwrap();
    assert!(!r.traces.is_empty());
    // loose envelope: pitch setpoints plus the deadband and the crash from ale to its conditioning point
    for row in &r.traces {
        assert!(row.temperature_c > 0.0 && row.temperature_c < 25.0, "{row:?}");
        assert!(row.extract_plato >= 2.0 && row.extract_plato <= 12.0 + 1e-12);
        assert!(row.cooling_w >= 0.0);
    }
}

#[test]
fn flat_prices_leave_nothing_to_shift() {
    let market = Market {
        prices: HourlySeries::constant(Area::Dk1, SeriesKind::Price, YEAR, 480.0).unwrap(),
        ..Market::synthetic(5)
    };
    let params = SimParams::default();
    for spec in sample().iter().take(3) {
        let base = run_brewery(spec, &market.data(), &params, ControlPolicy::Baseline).unwrap();
        let flex = run_brewery(spec, &market.data(), &params, ControlPolicy::Flexible).unwrap();
        assert_eq!(base.account.load, flex.account.load);
        assert_eq!(flex.plans, 0);
    }
}
