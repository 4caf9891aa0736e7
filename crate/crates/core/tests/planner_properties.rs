use brewflex_core::flexibility::{
    plan_window, thermostat_step, CoolingPlant, FlexBand, PlanError, PlanRequest, ThermalParams,
};
use brewflex_core::market::year_start;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Case {
    t0_offset: f64,
    heat_capacity: f64,
    ua: f64,
    setpoint: f64,
    delta: f64,
    capacity_k_per_h: f64,
    cop: f64,
    ambient: Vec<f64>,
    heat_share: Vec<f64>,
    prices: Vec<f64>,
}

impl Case {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let horizon = rng.random_range(1..=24);
        Self {
            t0_offset: rng.random_range(-1.0..1.0),
            heat_capacity: rng.random_range(1e5..5e7),
            ua: if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.0..1000.0)
            },
            setpoint: rng.random_range(0.0..20.0),
            delta: rng.random_range(0.1..3.0),
            capacity_k_per_h: rng.random_range(0.1..4.0),
            cop: rng.random_range(1.5..5.0),
            ambient: (0..horizon).map(|_| rng.random_range(-5.0..15.0)).collect(),
            heat_share: (0..horizon).map(|_| rng.random_range(0.0..0.9)).collect(),
            prices: (0..horizon).map(|_| rng.random_range(-100.0..2000.0)).collect(),
        }
    }

    fn q_max(&self) -> f64 {
        self.capacity_k_per_h * self.heat_capacity / 3600.0
    }

    fn ambient_abs(&self) -> Vec<f64> {
        self.ambient.iter().map(|a| self.setpoint + a).collect()
    }

    fn q_ferm(&self) -> Vec<f64> {
        self.heat_share.iter().map(|s| s * self.q_max()).collect()
    }

    fn plan(&self, delta: f64, price_factor: f64) -> Result<(Vec<f64>, f64, bool), PlanError> {
        let ambient = self.ambient_abs();
        let q_ferm = self.q_ferm();
        let prices: Vec<f64> = self.prices.iter().map(|p| p * price_factor).collect();
        let req = PlanRequest {
            window_start: year_start(2021),
            t0: self.setpoint + self.t0_offset * self.delta.min(delta),
            thermal: ThermalParams {
                heat_capacity: self.heat_capacity,
                ua: self.ua,
            },
            ambient: &ambient,
            q_ferm: &q_ferm,
            prices: &prices,
            band: FlexBand::new(self.setpoint, delta, delta / 2.0).unwrap(),
            plant: CoolingPlant::new(self.q_max(), self.cop).unwrap(),
            horizon: prices.len(),
        };
        let plan = plan_window(&req)?;
        let feasible = req.is_feasible(&plan.temperatures) && req.is_feasible(&req.simulate(&plan.duty));
        Ok((plan.duty, plan.cost, feasible))
    }
}

fn cases() -> impl Strategy<Value = Case> {
    any::<u64>().prop_map(|seed| Case::random(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[test]
fn plans_respect_band_and_duty_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut planned = 0;
    for n in 0..10_000 {
        let case = Case::random(&mut rng);
        match case.plan(case.delta, 1.0) {
            Ok((duty, _, feasible)) => {
                assert!(feasible, "case {n}: {case:?}");
                assert!(duty.iter().all(|d| (0.0..=1.0).contains(d)), "case {n}: duty {duty:?}");
                planned += 1;
            }
            Err(PlanError::Infeasible { .. } | PlanError::BelowBand { .. }) => {}
            Err(e) => panic!("case {n}: {e}"),
        }
    }
    assert!(planned > 5000, "only {planned} feasible cases");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn wider_band_never_costs_more(case in cases(), widen in 1.0..3.0f64) {
        // the start temperature is fixed relative to the narrow band
        if let (Ok((_, narrow, _)), Ok((_, wide, _))) = (case.plan(case.delta, 1.0), case.plan(case.delta * widen, 1.0)) {
            prop_assert!(wide <= narrow + 1e-9 * narrow.abs().max(1.0), "wide {wide} > narrow {narrow}");
        }
    }

    #[test]
    fn positive_price_scaling_preserves_schedule(case in cases(), factor in 0.01..100.0f64) {
        let a = case.plan(case.delta, 1.0);
        let b = case.plan(case.delta, factor);
        match (a, b) {
            (Ok((da, ca, _)), Ok((db, cb, _))) => {
                for (x, y) in da.iter().zip(&db) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
                prop_assert!((cb - factor * ca).abs() <= 1e-9 * (factor * ca).abs().max(1.0));
            }
            (Err(x), Err(y)) => prop_assert_eq!(x, y),
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn relay_holds_inside_hysteresis(sp in 0.0..20.0f64, h in 0.05..1.0f64, x in -1.0..1.0f64, was in any::<bool>()) {
        let band = FlexBand::new(sp, 1.0, h).unwrap();
        let t = sp + x * h;
        prop_assert_eq!(thermostat_step(t, &band, was), was);
        prop_assert!(thermostat_step(sp + h + 1e-6, &band, was));
        prop_assert!(!thermostat_step(sp - h - 1e-6, &band, was));
    }
}
