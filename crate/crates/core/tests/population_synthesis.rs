use brewflex_core::population::{
    plan_capacity, rescale_counts, sample_triangular, synthesize_population, synthetic_gis, BrewerySpec, PlanSettings,
    SizeCategory,
};
use brewflex_core::process::StageDurations;
use brewflex_core::thermo::{PerStyle, Style};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const CATEGORY_COUNTS: [usize; 8] = [181, 40, 6, 4, 3, 1, 3, 1];

fn population(seed: u64) -> Vec<BrewerySpec> {
    let cats = SizeCategory::danish_defaults();
    let gis = synthetic_gis(239, 11);
    let residence = StageDurations::default().residence_days();
    synthesize_population(&gis, &cats, seed, &PlanSettings::default(), &residence).unwrap()
}

fn histogram(pop: &[BrewerySpec]) -> [usize; 8] {
    let mut h = [0; 8];
    for b in pop {
        h[b.category as usize - 1] += 1;
    }
    h
}

#[test]
fn histogram_and_bounds_hold_for_many_seeds() {
    let cats = SizeCategory::danish_defaults();
    for seed in 0..1000u64 {
        let pop = population(seed);
        assert_eq!(histogram(&pop), CATEGORY_COUNTS, "seed {seed}");
        for b in &pop {
            let c = &cats[b.category as usize - 1];
            assert!(
                b.annual_volume >= c.volume_min && b.annual_volume < c.volume_max,
                "seed {seed} facility {}: {} outside [{}, {})",
                b.id,
                b.annual_volume,
                c.volume_min,
                c.volume_max
            );
            let brewed = b.batch_volume * b.total_brews() as f64;
            assert!((brewed - b.annual_volume).abs() <= 1e-9 * b.annual_volume);
        }
    }
}

#[test]
fn seeds_reproduce_and_differ() {
    let a = population(5);
    assert_eq!(a, population(5));
    let b = population(6);
    assert_eq!(histogram(&a), histogram(&b));
    assert_ne!(a, b);
}

#[test]
fn triangular_histogram_matches_density() {
    let (min, mode, max) = (2.0, 3.0, 10.0);
    let bins = 25;
    let n = 1_000_000;
    let mut counts = vec![0u64; bins];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..n {
        let v = sample_triangular(min, mode, max, rng.random()).unwrap();
        let i = (((v - min) / (max - min)) * bins as f64) as usize;
        counts[i.min(bins - 1)] += 1;
    }
    let cdf = |x: f64| {
        if x <= mode {
            (x - min).powi(2) / ((max - min) * (mode - min))
        } else {
            1.0 - (max - x).powi(2) / ((max - min) * (max - mode))
        }
    };
    let width = (max - min) / bins as f64;
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let lo = min + i as f64 * width;
            let expected = n as f64 * (cdf(lo + width) - cdf(lo));
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

#[test]
fn tank_counts_match_calendar_occupancy() {
    let cat = |ale_share| SizeCategory {
        ale_share,
        ..SizeCategory::danish_defaults()[0].clone()
    };
    let ale = plan_capacity(720.0, &cat(1.0), &PlanSettings::default(), &PerStyle::new(7.0, 14.0)).unwrap();
    assert_eq!(ale.brews_ale, 144);
    assert!((ale.batch_volume - 5.0).abs() < 1e-12);
    assert_eq!(ale.tank_fleet.len(), 1);
    assert_eq!(ale.tank_fleet[0].count, occupancy_oracle(3, 7));

    let lager = plan_capacity(720.0, &cat(0.0), &PlanSettings::default(), &PerStyle::new(7.0, 14.0)).unwrap();
    assert_eq!(lager.tank_fleet[0].style, Style::Lager);
    assert_eq!(lager.tank_fleet[0].count, occupancy_oracle(3, 14));
}

/// Peak simultaneous occupancy with one brew on each of the first
/// `per_week` weekdays, every week, each holding a tank `days` days.
fn occupancy_oracle(per_week: usize, days: usize) -> usize {
    let weeks = 10;
    let mut busy = vec![0usize; weeks * 7 + days];
    for w in 0..weeks {
        for d in 0..per_week {
            for slot in &mut busy[w * 7 + d..w * 7 + d + days] {
                *slot += 1;
            }
        }
    }
    busy[days..weeks * 7].iter().copied().max().unwrap()
}

#[test]
fn rescaled_counts_sum_to_target() {
    for total in 1..300 {
        let cats = rescale_counts(&SizeCategory::danish_defaults(), total);
        assert_eq!(cats.iter().map(|c| c.count).sum::<usize>(), total);
    }
}
