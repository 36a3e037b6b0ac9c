use cascadesim_core::scenario::*;
use proptest::prelude::*;

const PERIOD: usize = 4;

fn site(name: &str, phi: f64, sigma: f64, mean: f64, std: f64) -> SiteModel {
    SiteModel {
        variable: Variable::Inflow,
        site: name.into(),
        log_transform: false,
        log_shift: 1.0,
        cap: None,
        mean: vec![mean; PERIOD],
        std: vec![std; PERIOD],
        phi: vec![vec![phi]; PERIOD],
        sigma: vec![sigma; PERIOD],
        initial: vec![],
    }
}

fn model(sites: Vec<SiteModel>, rho: f64) -> ParModel {
    let n = sites.len();
    let correlation = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { rho }).collect())
        .collect();
    ParModel {
        order: 1,
        periodicity: Periodicity::Cyclic { period: PERIOD },
        sites,
        correlation,
    }
}

fn history(set: &ScenarioSet, series: usize) -> SiteHistory {
    SiteHistory {
        variable: set.keys()[series].variable,
        site: set.keys()[series].site.clone(),
        values: set.series(series, 0).to_vec(),
        log_transform: false,
        cap: None,
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn refit_recovers_ar1_coefficient() {
    let phi = 0.7;
    let m = model(vec![site("S", phi, (1.0f64 - phi * phi).sqrt(), 50.0, 5.0)], 0.0);
    let set = generate(&m, 1, 200_000, 11).unwrap();
    assert_eq!(set.truncations, 0);
    let fit = fit_par(&[history(&set, 0)], m.periodicity, 1).unwrap();
    let s = &fit.sites[0];
    for w in 0..PERIOD {
        assert!((s.phi[w][0] - phi).abs() < 0.02, "season {w}: {}", s.phi[w][0]);
        assert!((s.mean[w] - 50.0).abs() < 0.2, "mean {}", s.mean[w]);
        assert!((s.std[w] - 5.0).abs() < 0.2, "std {}", s.std[w]);
        assert!((s.sigma[w] - (1.0 - phi * phi).sqrt()).abs() < 0.02);
    }
}

#[test]
fn constant_history_is_a_singular_fit() {
    let h = SiteHistory {
        variable: Variable::Load,
        site: "L".into(),
        values: vec![100.0; 4 * PERIOD],
        log_transform: false,
        cap: None,
    };
    let err = fit_par(&[h], Periodicity::Cyclic { period: PERIOD }, 1).unwrap_err();
    assert!(matches!(err, ScenarioError::SingularFit { .. }), "{err}");
}

#[test]
fn short_history_is_rejected() {
    let h = SiteHistory {
        variable: Variable::Load,
        site: "L".into(),
        values: vec![1.0; 2 * PERIOD - 1],
        log_transform: false,
        cap: None,
    };
    let err = fit_par(&[h], Periodicity::Cyclic { period: PERIOD }, 1).unwrap_err();
    assert!(matches!(err, ScenarioError::InsufficientHistory { need: 8, .. }), "{err}");
}

#[test]
fn identical_sites_fit_perfect_correlation() {
    let m = model(vec![site("S", 0.5, 0.8, 10.0, 2.0)], 0.0);
    let set = generate(&m, 1, 5_000, 3).unwrap();
    let mut b = history(&set, 0);
    b.site = "T".into();
    let fit = fit_par(&[history(&set, 0), b], m.periodicity, 1).unwrap();
    assert!((fit.correlation[0][1] - 1.0).abs() < 1e-12);
    // Refitted models can be simulated directly.
    assert!(generate(&fit, 2, 100, 1).is_ok());
}

#[test]
fn zero_residual_scale_reproduces_the_mean() {
    let set = generate(&model(vec![site("S", 0.9, 0.0, 42.5, 3.0)], 0.0), 3, 500, 9).unwrap();
    for s in 0..3 {
        assert!(set.series(0, s).iter().all(|&v| v == 42.5));
    }
}

#[test]
fn sampled_correlation_follows_the_model() {
    for rho in [0.0, 0.8] {
        let m = model(vec![site("A", 0.0, 1.0, 100.0, 1.0), site("B", 0.0, 1.0, 100.0, 1.0)], rho);
        let set = generate(&m, 1, 100_000, 5).unwrap();
        let r = correlation(set.series(0, 0), set.series(1, 0));
        assert!((r - rho).abs() < 0.02, "rho {rho}: sampled {r}");
    }
}

#[test]
fn indefinite_correlation_is_rejected() {
    let m = model(vec![site("A", 0.0, 1.0, 0.0, 1.0), site("B", 0.0, 1.0, 0.0, 1.0), site("C", 0.0, 1.0, 0.0, 1.0)], -0.9);
    assert!(matches!(generate(&m, 1, 10, 1), Err(ScenarioError::NotPositiveSemidefinite)));
}

#[test]
fn values_are_clipped_to_site_bounds() {
    let mut s = site("W", 0.0, 1.0, 0.0, 10.0);
    s.variable = Variable::Wind;
    s.cap = Some(5.0);
    let set = generate(&model(vec![s], 0.0), 1, 1_000, 2).unwrap();
    assert!(set.truncations > 0);
    assert!(set.series(0, 0).iter().all(|&v| (0.0..=5.0).contains(&v)));
}

#[test]
fn scenarios_depend_only_on_seed_and_index() {
    let m = model(vec![site("A", 0.6, 0.8, 20.0, 4.0), site("B", 0.3, 0.9, 20.0, 4.0)], 0.4);
    let five = generate(&m, 5, 300, 77).unwrap();
    assert_eq!(five, generate(&m, 5, 300, 77).unwrap());
    let three = generate(&m, 3, 300, 77).unwrap();
    for k in 0..2 {
        for s in 0..3 {
            assert_eq!(five.series(k, s), three.series(k, s));
        }
    }
    assert_ne!(five.series(0, 0), generate(&m, 1, 300, 78).unwrap().series(0, 0));
}

fn year(f: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..HOURS_PER_YEAR).map(f).collect()
}

#[test]
fn history_years_become_scenarios() {
    let key = SeriesKey::new(Variable::Inflow, "R1");
    let hist = vec![(key, vec![year(|h| h as f64), year(|h| -(h as f64))])];
    let set = from_history(&hist, 48).unwrap();
    assert_eq!(set.num_scenarios(), 2);
    assert_eq!(set.value(0, 0, 47), 47.0);
    assert_eq!(set.value(0, 1, 3), -3.0);
    // Past the end of a year the next historical year continues, cyclically.
    let long = from_history(&hist, HOURS_PER_YEAR + 2).unwrap();
    assert_eq!(long.value(0, 0, HOURS_PER_YEAR + 1), -1.0);
    assert_eq!(long.value(0, 1, HOURS_PER_YEAR + 1), 1.0);
}

#[test]
fn incomplete_history_years_are_rejected() {
    let key = SeriesKey::new(Variable::Load, "L");
    let mut short = year(|_| 1.0);
    short.pop();
    let err = from_history(&[(key.clone(), vec![short])], 24).unwrap_err();
    assert!(matches!(err, ScenarioError::IncompleteYear { year: 0, .. }), "{err}");
    let mut gap = year(|_| 1.0);
    gap[100] = f64::NAN;
    let err = from_history(&[(key, vec![year(|_| 1.0), gap])], 24).unwrap_err();
    assert!(matches!(err, ScenarioError::IncompleteYear { year: 1, .. }), "{err}");
}

#[test]
fn constant_series_aggregate_to_constant_weeks() {
    let keys = vec![SeriesKey::new(Variable::Inflow, "R"), SeriesKey::new(Variable::Load, "L")];
    let h = 2 * HOURS_PER_WEEK;
    let mut data = vec![30.0; h];
    data.extend(vec![2.0; h]);
    let set = ScenarioSet::new(keys, 1, h, data);
    assert_eq!(set.num_weeks(), 2);
    let load = set.index_of(Variable::Load, "L").unwrap();
    let inflow = set.index_of(Variable::Inflow, "R").unwrap();
    assert_eq!(set.weekly(inflow, 0), &[30.0, 30.0]);
    assert_eq!(set.weekly(load, 0), &[2.0 * 168.0, 2.0 * 168.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn binary_and_csv_round_trip(seed in 0u64..1000, n in 1usize..4, hours in 1usize..50) {
        let m = model((0..n).map(|i| site(&format!("S{i}"), 0.5, 0.8, 10.0, 3.0)).collect(), 0.2);
        let set = generate(&m, 2, hours, seed).unwrap();
        let mut buf = Vec::new();
        set.write_binary(&mut buf).unwrap();
        let back = ScenarioSet::read_binary(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.raw(), set.raw());
        let mut csv = Vec::new();
        set.write_csv(&mut csv).unwrap();
        let back = ScenarioSet::read_csv(std::str::from_utf8(&csv).unwrap()).unwrap();
        prop_assert_eq!(back.raw(), set.raw());
    }

    #[test]
    fn generated_values_are_nonnegative(seed in 0u64..1000, mean in -5.0f64..5.0) {
        let set = generate(&model(vec![site("S", 0.8, 0.6, mean, 3.0)], 0.0), 2, 200, seed).unwrap();
        prop_assert!(set.raw().iter().all(|&v| v >= 0.0));
    }
}
