//! Forecast emulation by reweighting the scenario set around the realized
//! scenario. Each layer has a dispersion target; the Gaussian kernel width
//! is solved per hour so the weighted sample meets the target, and the
//! forecast is the weighted mean.

use serde::{Deserialize, Serialize};

use crate::scenario::{ScenarioSet, Variable};
use crate::Layer;

const BISECTION_ITERS: usize = 100;

/// Dispersion of the weighted scenario sample.
///
/// * `Variance` and `Cv` are measured around the weighted mean; `Cv` divides
///   the weighted standard deviation by the absolute weighted mean (falling
///   back to an absolute standard deviation target when that mean is below
///   1e-9).
/// * `Rmse` is the weighted root-mean-square distance to the realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", content = "value", rename_all = "snake_case")]
pub enum Dispersion {
    Variance(f64),
    Cv(f64),
    Rmse(f64),
}

impl Dispersion {
    pub fn value(self) -> f64 {
        match self {
            Dispersion::Variance(v) | Dispersion::Cv(v) | Dispersion::Rmse(v) => v,
        }
    }

    fn same_metric(self, other: Dispersion) -> bool {
        std::mem::discriminant(&self) == std::mem::discriminant(&other)
    }

    pub fn zero(self) -> Dispersion {
        match self {
            Dispersion::Variance(_) => Dispersion::Variance(0.0),
            Dispersion::Cv(_) => Dispersion::Cv(0.0),
            Dispersion::Rmse(_) => Dispersion::Rmse(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastProfile {
    pub week_ahead: Dispersion,
    pub day_ahead: Dispersion,
    pub hour_ahead: Dispersion,
    pub true_up: Dispersion,
}

impl ForecastProfile {
    pub fn perfect() -> Self {
        let z = Dispersion::Cv(0.0);
        ForecastProfile {
            week_ahead: z,
            day_ahead: z,
            hour_ahead: z,
            true_up: z,
        }
    }

    pub fn target(&self, layer: Layer) -> Dispersion {
        match layer {
            Layer::WeekAhead => self.week_ahead,
            Layer::DayAhead => self.day_ahead,
            Layer::HourAhead => self.hour_ahead,
            _ => self.true_up,
        }
    }

    pub fn is_perfect(&self) -> bool {
        [self.week_ahead, self.day_ahead, self.hour_ahead, self.true_up]
            .iter()
            .all(|d| d.value() == 0.0)
    }

    /// Targets must be nonnegative and, between consecutive layers using the
    /// same metric, nonincreasing toward the true-up.
    pub fn check(&self) -> Result<(), String> {
        let seq = [self.week_ahead, self.day_ahead, self.hour_ahead, self.true_up];
        if seq.iter().any(|d| !(d.value() >= 0.0) || !d.value().is_finite()) {
            return Err("dispersion targets must be finite and nonnegative".into());
        }
        for w in seq.windows(2) {
            if w[0].same_metric(w[1]) && w[1].value() > w[0].value() {
                return Err(format!(
                    "dispersion increases from {} to {} between layers",
                    w[0].value(),
                    w[1].value()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightStatus {
    /// Target met within bisection precision.
    Exact,
    /// Zero target: all weight on the realized scenario.
    PointMass,
    /// Target above the widest kernel's dispersion; widest kernel returned.
    MaxAchievable,
    /// All scenario values equal while the target is positive; uniform.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioWeights {
    pub weights: Vec<f64>,
    pub realized_index: usize,
    /// Kernel standard deviation used.
    pub kernel_sigma: f64,
    pub status: WeightStatus,
}

impl ScenarioWeights {
    pub fn point_mass(num: usize, realized: usize) -> Self {
        let mut weights = vec![0.0; num];
        weights[realized] = 1.0;
        ScenarioWeights {
            weights,
            realized_index: realized,
            kernel_sigma: 0.0,
            status: WeightStatus::PointMass,
        }
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Indices of the `k` largest weights (ties by index), with weights
    /// renormalized to sum to one.
    pub fn top(&self, k: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect();
        idx.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        idx.truncate(k);
        let total: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        idx.into_iter().map(|i| (i, self.weights[i] / total)).collect()
    }
}

/// Gaussian kernel weights centred on `values[realized]`. A zero width puts
/// equal weight on every scenario at distance zero.
pub fn kernel_weights(values: &[f64], realized: usize, sigma: f64) -> Vec<f64> {
    let c = values[realized];
    let mut w: Vec<f64> = if sigma <= 0.0 {
        values.iter().map(|&v| if v == c { 1.0 } else { 0.0 }).collect()
    } else {
        values
            .iter()
            .map(|&v| (-(v - c) * (v - c) / (2.0 * sigma * sigma)).exp())
            .collect()
    };
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

/// Achieved dispersion of a weighted sample under the target's metric.
pub fn achieved(values: &[f64], realized: usize, weights: &[f64], metric: Dispersion) -> f64 {
    let mean: f64 = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    let var: f64 = weights.iter().zip(values).map(|(w, v)| w * (v - mean) * (v - mean)).sum();
    match metric {
        Dispersion::Variance(_) => var,
        Dispersion::Cv(_) => {
            if mean.abs() < 1e-9 {
                var.sqrt()
            } else {
                var.sqrt() / mean.abs()
            }
        }
        Dispersion::Rmse(_) => {
            let c = values[realized];
            weights
                .iter()
                .zip(values)
                .map(|(w, v)| w * (v - c) * (v - c))
                .sum::<f64>()
                .sqrt()
        }
    }
}

/// Weights whose dispersion around the realized scenario meets `target`.
pub fn compute_weights(values: &[f64], realized: usize, target: Dispersion) -> ScenarioWeights {
    assert!(!values.is_empty() && realized < values.len());
    if target.value() == 0.0 {
        return ScenarioWeights::point_mass(values.len(), realized);
    }
    let lo_v = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_v = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi_v - lo_v;
    if range <= 0.0 {
        return ScenarioWeights {
            weights: vec![1.0 / values.len() as f64; values.len()],
            realized_index: realized,
            kernel_sigma: f64::INFINITY,
            status: WeightStatus::Degenerate,
        };
    }
    let t = target.value();
    let gap = |sigma: f64| achieved(values, realized, &kernel_weights(values, realized, sigma), target) - t;
    let (mut lo, mut hi) = (0.0, 10.0 * range);
    if gap(hi) < 0.0 {
        return ScenarioWeights {
            weights: kernel_weights(values, realized, hi),
            realized_index: realized,
            kernel_sigma: hi,
            status: WeightStatus::MaxAchievable,
        };
    }
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    ScenarioWeights {
        weights: kernel_weights(values, realized, hi),
        realized_index: realized,
        kernel_sigma: hi,
        status: WeightStatus::Exact,
    }
}

/// Per-hour forecasts of every series in a set for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub layer: Layer,
    pub realized: usize,
    /// Forecast value per (series, hour), series in the set's key order.
    pub values: Vec<Vec<f64>>,
    /// Achieved dispersion per (variable, hour) for diagnostics.
    pub achieved: Vec<(Variable, Vec<f64>)>,
}

impl Forecast {
    pub fn get(&self, series: usize, hour: usize) -> f64 {
        self.values[series][hour]
    }
}

/// Forecast of every series in `set` for scenario `realized` at the
/// quality of `layer`. Weights are computed per hour from the total over
/// the sites of each variable and shared by those sites.
pub fn forecast_series(set: &ScenarioSet, realized: usize, profile: &ForecastProfile, layer: Layer) -> Forecast {
    let target = profile.target(layer);
    let h = set.horizon_hours();
    let s = set.num_scenarios();
    let keys = set.keys();
    let mut values = vec![vec![0.0; h]; keys.len()];
    let mut achieved_out = Vec::new();
    for var in Variable::ALL {
        let members: Vec<usize> = (0..keys.len()).filter(|&k| keys[k].variable == var).collect();
        if members.is_empty() {
            continue;
        }
        let mut ach = vec![0.0; h];
        let mut totals = vec![0.0; s];
        for hour in 0..h {
            for (sc, t) in totals.iter_mut().enumerate() {
                *t = members.iter().map(|&k| set.value(k, sc, hour)).sum();
            }
            let w = compute_weights(&totals, realized, target);
            ach[hour] = achieved(&totals, realized, &w.weights, target);
            for &k in &members {
                values[k][hour] = if w.status == WeightStatus::PointMass {
                    set.value(k, realized, hour)
                } else {
                    (0..s).map(|sc| w.weights[sc] * set.value(k, sc, hour)).sum()
                };
            }
        }
        achieved_out.push((var, ach));
    }
    Forecast {
        layer,
        realized,
        values,
        achieved: achieved_out,
    }
}

/// Root-mean-square difference between two equally long series.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_target_is_point_mass() {
        let w = compute_weights(&[1.0, 5.0, 1.0], 2, Dispersion::Rmse(0.0));
        assert_eq!(w.weights, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn symmetric_values_get_symmetric_weights() {
        for t in [0.1, 0.5, 0.9] {
            let w = compute_weights(&[9.0, 10.0, 11.0], 1, Dispersion::Variance(t * t));
            assert_eq!(w.weights[0], w.weights[2]);
            assert!(w.weights[1] >= w.weights[0]);
        }
    }

    #[test]
    fn identical_values_are_degenerate() {
        let w = compute_weights(&[3.0; 4], 0, Dispersion::Cv(0.1));
        assert_eq!(w.status, WeightStatus::Degenerate);
        assert_eq!(w.weights, vec![0.25; 4]);
    }

    #[test]
    fn unreachable_target_is_flagged() {
        let w = compute_weights(&[0.0, 1.0], 0, Dispersion::Rmse(5.0));
        assert_eq!(w.status, WeightStatus::MaxAchievable);
    }

    #[test]
    fn top_weights_renormalize() {
        let w = ScenarioWeights {
            weights: vec![0.1, 0.6, 0.3],
            realized_index: 1,
            kernel_sigma: 1.0,
            status: WeightStatus::Exact,
        };
        let top = w.top(2);
        assert_eq!(top[0].0, 1);
        assert!((top[0].1 + top[1].1 - 1.0).abs() < 1e-15);
    }
}
