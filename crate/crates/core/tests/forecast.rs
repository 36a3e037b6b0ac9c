use cascadesim_core::forecast::*;
use cascadesim_core::scenario::{ScenarioSet, SeriesKey, Variable};
use cascadesim_core::Layer;
use proptest::prelude::*;

fn spread(n: usize) -> Vec<f64> {
    (0..n).map(|i| 100.0 + 10.0 * i as f64).collect()
}

fn set_of(values: &[Vec<f64>]) -> ScenarioSet {
    // One load site; values[s][h].
    let s = values.len();
    let h = values[0].len();
    let data = values.concat();
    ScenarioSet::new(vec![SeriesKey::new(Variable::Load, "L")], s, h, data)
}

#[test]
fn rmse_target_is_met_for_each_layer() {
    let v = spread(5);
    for t in [0.4, 4.0, 12.0] {
        let w = compute_weights(&v, 2, Dispersion::Rmse(t));
        assert_eq!(w.status, WeightStatus::Exact);
        assert!((achieved(&v, 2, &w.weights, Dispersion::Rmse(t)) - t).abs() < 1e-9 * t.max(1.0));
    }
}

#[test]
fn cv_target_is_met() {
    let v = spread(8);
    let w = compute_weights(&v, 0, Dispersion::Cv(0.05));
    assert_eq!(w.status, WeightStatus::Exact);
    assert!((achieved(&v, 0, &w.weights, Dispersion::Cv(0.05)) - 0.05).abs() < 1e-9);
}

#[test]
fn perfect_profile_forecasts_the_realization() {
    let vals = vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0], vec![0.0, 9.0, 1.0]];
    let set = set_of(&vals);
    for layer in [Layer::WeekAhead, Layer::DayAhead, Layer::HourAhead, Layer::TrueUp] {
        let f = forecast_series(&set, 2, &ForecastProfile::perfect(), layer);
        assert_eq!(f.values[0], vals[2]);
    }
}

#[test]
fn wider_targets_move_the_forecast_away_from_the_realization() {
    let vals: Vec<Vec<f64>> = spread(6).into_iter().map(|x| vec![x; 4]).collect();
    let set = set_of(&vals);
    let profile = ForecastProfile {
        week_ahead: Dispersion::Rmse(20.0),
        day_ahead: Dispersion::Rmse(8.0),
        hour_ahead: Dispersion::Rmse(2.0),
        true_up: Dispersion::Rmse(0.0),
    };
    profile.check().unwrap();
    let err: Vec<f64> = [Layer::WeekAhead, Layer::DayAhead, Layer::HourAhead, Layer::TrueUp]
        .iter()
        .map(|&l| rmse(&forecast_series(&set, 0, &profile, l).values[0], &vals[0]))
        .collect();
    assert!(err.windows(2).all(|w| w[0] > w[1]), "{err:?}");
    assert_eq!(err[3], 0.0);
}

#[test]
fn increasing_targets_are_rejected() {
    let p = ForecastProfile {
        week_ahead: Dispersion::Cv(0.1),
        day_ahead: Dispersion::Cv(0.2),
        hour_ahead: Dispersion::Cv(0.0),
        true_up: Dispersion::Cv(0.0),
    };
    assert!(p.check().is_err());
    let mut p = ForecastProfile::perfect();
    p.hour_ahead = Dispersion::Rmse(-1.0);
    assert!(p.check().is_err());
}

proptest! {
    #[test]
    fn weights_form_a_distribution(
        values in prop::collection::vec(0.0f64..1000.0, 2..12),
        pick in 0usize..12,
        target in 0.0f64..200.0,
    ) {
        let r = pick % values.len();
        let w = compute_weights(&values, r, Dispersion::Rmse(target));
        prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let got = achieved(&values, r, &w.weights, Dispersion::Rmse(target));
        match w.status {
            WeightStatus::Exact => prop_assert!((got - target).abs() <= 1e-6 * target.max(1.0)),
            WeightStatus::MaxAchievable => prop_assert!(got <= target),
            WeightStatus::PointMass => prop_assert_eq!(w.weights[r], 1.0),
            WeightStatus::Degenerate => {}
        }
        let top = w.top(3);
        prop_assert!((top.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn achieved_rmse_grows_with_kernel_width(
        values in prop::collection::vec(0.0f64..100.0, 2..10),
        a in 0.1f64..50.0,
        b in 0.1f64..50.0,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let m = Dispersion::Rmse(1.0);
        let r0 = achieved(&values, 0, &kernel_weights(&values, 0, lo), m);
        let r1 = achieved(&values, 0, &kernel_weights(&values, 0, hi), m);
        prop_assert!(r1 >= r0 - 1e-9);
    }
}
