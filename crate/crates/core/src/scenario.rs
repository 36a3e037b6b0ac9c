//! Correlated hourly scenario series for inflow, wind, solar and load.
//!
//! Temporal structure is a periodic autoregressive model in standardized
//! (deviation) form: each site's value is standardized by a per-season mean
//! and standard deviation, and the standardized series follows an AR(p)
//! whose coefficients and residual scale depend on the week of the year.
//! Residuals are correlated across sites through a Cholesky factor of the
//! residual correlation matrix. Each scenario draws from its own ChaCha
//! stream keyed by `(seed, scenario)`, so output does not depend on how
//! scenarios are spread over threads.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg;

pub const HOURS_PER_WEEK: usize = 168;
pub const HOURS_PER_YEAR: usize = 8760;
pub const WEEKS_PER_YEAR: usize = 52;

const MAGIC: &[u8; 8] = b"CSIMSCN1";

/// Week of the year (0-based) of an absolute hour; the last 24 hours of a
/// 365-day year belong to the 52nd week.
pub fn week_of_year(hour: usize) -> usize {
    ((hour % HOURS_PER_YEAR) / HOURS_PER_WEEK).min(WEEKS_PER_YEAR - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Inflow,
    Wind,
    Solar,
    Load,
}

impl Variable {
    pub const ALL: [Variable; 4] = [Variable::Inflow, Variable::Wind, Variable::Solar, Variable::Load];

    /// Flow variables are averaged over a week, energy variables summed.
    pub fn is_flow(self) -> bool {
        self == Variable::Inflow
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::Inflow => "inflow",
            Variable::Wind => "wind",
            Variable::Solar => "solar",
            Variable::Load => "load",
        }
    }

    pub fn parse(s: &str) -> Option<Variable> {
        Variable::ALL.into_iter().find(|v| v.name() == s)
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Variable> {
        Variable::ALL.get(c as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub variable: Variable,
    pub site: String,
}

impl SeriesKey {
    pub fn new(variable: Variable, site: impl Into<String>) -> Self {
        SeriesKey {
            variable,
            site: site.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("history too short: {have} values, need at least {need}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("constant history for site {site} in season {season}")]
    SingularFit { site: String, season: usize },
    #[error("incomplete year {year} for {variable:?}/{site}: {detail}")]
    IncompleteYear {
        variable: Variable,
        site: String,
        year: usize,
        detail: String,
    },
    #[error("residual correlation matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("scenario file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// S hourly realizations per series, stored in (series, scenario, hour)
/// order, plus the weekly aggregate used by the mid-term layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    keys: Vec<SeriesKey>,
    num_scenarios: usize,
    horizon_hours: usize,
    data: Vec<f64>,
    weekly: Vec<f64>,
    num_weeks: usize,
    /// Values clipped at zero or at a site cap during generation.
    pub truncations: usize,
}

impl ScenarioSet {
    /// Builds a set from data laid out in (series, scenario, hour) order for
    /// the given keys. Keys are sorted internally.
    pub fn new(keys: Vec<SeriesKey>, num_scenarios: usize, horizon_hours: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), keys.len() * num_scenarios * horizon_hours, "data size");
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        let block = num_scenarios * horizon_hours;
        let mut sorted = Vec::with_capacity(data.len());
        for &k in &order {
            sorted.extend_from_slice(&data[k * block..(k + 1) * block]);
        }
        let keys: Vec<SeriesKey> = order.iter().map(|&k| keys[k].clone()).collect();
        let mut set = ScenarioSet {
            keys,
            num_scenarios,
            horizon_hours,
            data: sorted,
            weekly: Vec::new(),
            num_weeks: 0,
            truncations: 0,
        };
        set.num_weeks = horizon_hours / HOURS_PER_WEEK;
        set.weekly = weekly_aggregate(&set);
        set
    }

    pub fn keys(&self) -> &[SeriesKey] {
        &self.keys
    }

    pub fn num_scenarios(&self) -> usize {
        self.num_scenarios
    }

    pub fn horizon_hours(&self) -> usize {
        self.horizon_hours
    }

    pub fn num_weeks(&self) -> usize {
        self.num_weeks
    }

    pub fn index_of(&self, variable: Variable, site: &str) -> Option<usize> {
        self.keys
            .binary_search_by(|k| (k.variable, k.site.as_str()).cmp(&(variable, site)))
            .ok()
    }

    /// Hourly series of one scenario.
    pub fn series(&self, series: usize, scenario: usize) -> &[f64] {
        let start = (series * self.num_scenarios + scenario) * self.horizon_hours;
        &self.data[start..start + self.horizon_hours]
    }

    pub fn value(&self, series: usize, scenario: usize, hour: usize) -> f64 {
        self.series(series, scenario)[hour]
    }

    /// Weekly aggregate of one scenario: mean flow for inflows, total energy
    /// for the other variables.
    pub fn weekly(&self, series: usize, scenario: usize) -> &[f64] {
        let start = (series * self.num_scenarios + scenario) * self.num_weeks;
        &self.weekly[start..start + self.num_weeks]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// Writes the documented binary layout: magic, u32 series count, u32
    /// scenario count, u32 hours, then per series a u8 variable code and a
    /// u16-length UTF-8 site name, then little-endian f64 values in
    /// (variable, site, scenario, hour) order.
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for n in [self.keys.len(), self.num_scenarios, self.horizon_hours] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for k in &self.keys {
            w.write_all(&[k.variable.code()])?;
            w.write_all(&(k.site.len() as u16).to_le_bytes())?;
            w.write_all(k.site.as_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_binary(r: &mut impl Read) -> Result<ScenarioSet, ScenarioError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], ScenarioError> {
            if pos + n > bytes.len() {
                return Err(ScenarioError::Format("truncated file".into()));
            }
            pos += n;
            Ok(&bytes[pos - n..pos])
        };
        if take(8)? != MAGIC {
            return Err(ScenarioError::Format("bad magic".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let [n, s, h] = dims;
        let mut keys = Vec::with_capacity(n);
        for _ in 0..n {
            let var = Variable::from_code(take(1)?[0])
                .ok_or_else(|| ScenarioError::Format("unknown variable code".into()))?;
            let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let site = std::str::from_utf8(take(len)?)
                .map_err(|_| ScenarioError::Format("site name is not UTF-8".into()))?
                .to_string();
            keys.push(SeriesKey::new(var, site));
        }
        let count = n * s * h;
        let raw = take(count * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ScenarioSet::new(keys, s, h, data))
    }

    /// Long-format CSV: `variable,site,scenario,hour,value`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "variable,site,scenario,hour,value")?;
        for (k, key) in self.keys.iter().enumerate() {
            for s in 0..self.num_scenarios {
                for (h, v) in self.series(k, s).iter().enumerate() {
                    writeln!(w, "{},{},{},{},{}", key.variable.name(), key.site, s, h, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<ScenarioSet, ScenarioError> {
        let mut rows: Vec<(SeriesKey, usize, usize, f64)> = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| ScenarioError::Format(format!("line {}: {what}", n + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let var = Variable::parse(f[0]).ok_or_else(|| bad("unknown variable"))?;
            let s = f[2].parse().map_err(|_| bad("bad scenario"))?;
            let h = f[3].parse().map_err(|_| bad("bad hour"))?;
            let v = f[4].parse().map_err(|_| bad("bad value"))?;
            rows.push((SeriesKey::new(var, f[1]), s, h, v));
        }
        let mut keys: Vec<SeriesKey> = rows.iter().map(|r| r.0.clone()).collect();
        keys.sort();
        keys.dedup();
        let ns = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let nh = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        if rows.len() != keys.len() * ns * nh {
            return Err(ScenarioError::Format("CSV does not cover a full grid".into()));
        }
        let mut data = vec![f64::NAN; rows.len()];
        for (key, s, h, v) in rows {
            let k = keys.binary_search(&key).unwrap();
            data[(k * ns + s) * nh + h] = v;
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(ScenarioError::Format("duplicate or missing CSV cell".into()));
        }
        Ok(ScenarioSet::new(keys, ns, nh, data))
    }
}

/// Weekly view in (series, scenario, week) order. A trailing partial week is
/// dropped with a warning.
pub fn weekly_aggregate(set: &ScenarioSet) -> Vec<f64> {
    let weeks = set.horizon_hours / HOURS_PER_WEEK;
    if set.horizon_hours % HOURS_PER_WEEK != 0 {
        log::warn!(
            "dropping {} trailing hours that do not fill a week",
            set.horizon_hours % HOURS_PER_WEEK
        );
    }
    let mut out = Vec::with_capacity(set.keys.len() * set.num_scenarios * weeks);
    for (k, key) in set.keys.iter().enumerate() {
        for s in 0..set.num_scenarios {
            let series = set.series(k, s);
            for w in 0..weeks {
                let sum: f64 = series[w * HOURS_PER_WEEK..(w + 1) * HOURS_PER_WEEK].iter().sum();
                out.push(if key.variable.is_flow() {
                    sum / HOURS_PER_WEEK as f64
                } else {
                    sum
                });
            }
        }
    }
    out
}

/// One scenario per historical year. `history` holds, per series, a list of
/// complete 8760-hour years; every series must have the same number of
/// years. Horizons longer than a year continue into the following
/// historical year (cyclically).
pub fn from_history(history: &[(SeriesKey, Vec<Vec<f64>>)], horizon: usize) -> Result<ScenarioSet, ScenarioError> {
    let years = history.first().map_or(0, |h| h.1.len());
    for (key, ys) in history {
        if ys.len() != years {
            return Err(ScenarioError::InvalidModel(format!(
                "{:?}/{} has {} years, expected {years}",
                key.variable,
                key.site,
                ys.len()
            )));
        }
        for (y, values) in ys.iter().enumerate() {
            let incomplete = |detail: String| ScenarioError::IncompleteYear {
                variable: key.variable,
                site: key.site.clone(),
                year: y,
                detail,
            };
            if values.len() != HOURS_PER_YEAR {
                return Err(incomplete(format!("{} of {HOURS_PER_YEAR} hours present", values.len())));
            }
            if let Some(h) = values.iter().position(|v| !v.is_finite()) {
                return Err(incomplete(format!("missing value at hour {h}")));
            }
        }
    }
    let mut data = Vec::with_capacity(history.len() * years * horizon);
    for (_, ys) in history {
        for y in 0..years {
            for h in 0..horizon {
                data.push(ys[(y + h / HOURS_PER_YEAR) % years][h % HOURS_PER_YEAR]);
            }
        }
    }
    let keys = history.iter().map(|(k, _)| k.clone()).collect();
    Ok(ScenarioSet::new(keys, years, horizon, data))
}

/// How hours map to seasons. `Weekly` uses the week of the year for the AR
/// coefficients and optionally (week, hour of day) for the standardizing
/// mean and deviation, which keeps diurnal shapes such as solar output.
/// `Cyclic` uses `t mod period` for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Periodicity {
    Weekly { diurnal: bool },
    Cyclic { period: usize },
}

impl Periodicity {
    pub fn ar_seasons(self) -> usize {
        match self {
            Periodicity::Weekly { .. } => WEEKS_PER_YEAR,
            Periodicity::Cyclic { period } => period,
        }
    }

    pub fn std_seasons(self) -> usize {
        match self {
            Periodicity::Weekly { diurnal: true } => WEEKS_PER_YEAR * 24,
            Periodicity::Weekly { diurnal: false } => WEEKS_PER_YEAR,
            Periodicity::Cyclic { period } => period,
        }
    }

    fn full_cycle(self) -> usize {
        match self {
            Periodicity::Weekly { .. } => HOURS_PER_YEAR,
            Periodicity::Cyclic { period } => period,
        }
    }

    pub fn ar_season(self, t: usize) -> usize {
        match self {
            Periodicity::Weekly { .. } => week_of_year(t),
            Periodicity::Cyclic { period } => t % period,
        }
    }

    pub fn std_season(self, t: usize) -> usize {
        match self {
            Periodicity::Weekly { diurnal: true } => week_of_year(t) * 24 + t % 24,
            Periodicity::Weekly { diurnal: false } => week_of_year(t),
            Periodicity::Cyclic { period } => t % period,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteModel {
    pub variable: Variable,
    pub site: String,
    /// Model `ln(x + log_shift)` instead of `x`.
    #[serde(default)]
    pub log_transform: bool,
    #[serde(default = "default_log_shift")]
    pub log_shift: f64,
    /// Upper clip (e.g. installed VRE capacity).
    #[serde(default)]
    pub cap: Option<f64>,
    /// Standardizing mean and deviation per standardization season.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// AR coefficients per AR season, lag 1 first.
    pub phi: Vec<Vec<f64>>,
    /// Residual standard deviation per AR season.
    pub sigma: Vec<f64>,
    /// Standardized values preceding hour 0, most recent first.
    #[serde(default)]
    pub initial: Vec<f64>,
}

fn default_log_shift() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParModel {
    pub order: usize,
    pub periodicity: Periodicity,
    pub sites: Vec<SiteModel>,
    /// Residual correlation across sites.
    pub correlation: Vec<Vec<f64>>,
}

impl ParModel {
    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidModel(m));
        if self.order < 1 {
            return bad("order must be at least 1".into());
        }
        let n = self.sites.len();
        if self.correlation.len() != n || self.correlation.iter().any(|r| r.len() != n) {
            return bad("correlation matrix size does not match site count".into());
        }
        for s in &self.sites {
            if s.mean.len() != self.periodicity.std_seasons() || s.std.len() != s.mean.len() {
                return bad(format!("{}: mean/std length mismatch", s.site));
            }
            if s.phi.len() != self.periodicity.ar_seasons() || s.sigma.len() != s.phi.len() {
                return bad(format!("{}: phi/sigma length mismatch", s.site));
            }
            if s.phi.iter().any(|p| p.len() != self.order) {
                return bad(format!("{}: phi order mismatch", s.site));
            }
            if s.sigma.iter().chain(&s.std).any(|&v| v < 0.0 || !v.is_finite()) {
                return bad(format!("{}: negative or non-finite deviation", s.site));
            }
            if s.initial.len() > self.order {
                return bad(format!("{}: more initial values than the order", s.site));
            }
        }
        Ok(())
    }
}

/// Historical hourly values of one site, for fitting.
#[derive(Debug, Clone)]
pub struct SiteHistory {
    pub variable: Variable,
    pub site: String,
    pub values: Vec<f64>,
    pub log_transform: bool,
    pub cap: Option<f64>,
}

/// Least-squares fit of a periodic AR(`order`) model per site plus the
/// cross-site correlation of the standardized residuals.
pub fn fit_par(history: &[SiteHistory], periodicity: Periodicity, order: usize) -> Result<ParModel, ScenarioError> {
    if order < 1 {
        return Err(ScenarioError::InvalidModel("order must be at least 1".into()));
    }
    let len = history.first().map_or(0, |h| h.values.len());
    let need = 2 * periodicity.full_cycle();
    if len < need || history.iter().any(|h| h.values.len() != len) {
        return Err(ScenarioError::InsufficientHistory { have: len, need });
    }
    let shift = default_log_shift();
    let mut sites = Vec::with_capacity(history.len());
    let mut residuals: Vec<Vec<Option<f64>>> = Vec::with_capacity(history.len());
    for h in history {
        let y: Vec<f64> = h
            .values
            .iter()
            .map(|&v| if h.log_transform { (v.max(0.0) + shift).ln() } else { v })
            .collect();
        let ns = periodicity.std_seasons();
        let mut sum = vec![0.0; ns];
        let mut count = vec![0usize; ns];
        for (t, &v) in y.iter().enumerate() {
            let k = periodicity.std_season(t);
            sum[k] += v;
            count[k] += 1;
        }
        let mean: Vec<f64> = (0..ns).map(|k| if count[k] > 0 { sum[k] / count[k] as f64 } else { 0.0 }).collect();
        let mut ss = vec![0.0; ns];
        for (t, &v) in y.iter().enumerate() {
            let k = periodicity.std_season(t);
            ss[k] += (v - mean[k]).powi(2);
        }
        let std: Vec<f64> = (0..ns)
            .map(|k| {
                let sd = if count[k] > 0 { (ss[k] / count[k] as f64).sqrt() } else { 0.0 };
                if sd <= 1e-12 * mean[k].abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        let z: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(t, &v)| {
                let k = periodicity.std_season(t);
                if std[k] > 0.0 {
                    (v - mean[k]) / std[k]
                } else {
                    0.0
                }
            })
            .collect();

        let na = periodicity.ar_seasons();
        let mut xtx = vec![vec![vec![0.0; order]; order]; na];
        let mut xty = vec![vec![0.0; order]; na];
        let mut rows = vec![0usize; na];
        for t in order..len {
            if std[periodicity.std_season(t)] == 0.0 {
                continue;
            }
            let w = periodicity.ar_season(t);
            rows[w] += 1;
            for i in 0..order {
                xty[w][i] += z[t - 1 - i] * z[t];
                for j in 0..order {
                    xtx[w][i][j] += z[t - 1 - i] * z[t - 1 - j];
                }
            }
        }
        let mut phi = Vec::with_capacity(na);
        for w in 0..na {
            if rows[w] == 0 {
                return Err(ScenarioError::SingularFit {
                    site: h.site.clone(),
                    season: w,
                });
            }
            phi.push(linalg::solve(xtx[w].clone(), xty[w].clone()).unwrap_or_else(|| vec![0.0; order]));
        }
        let mut eps: Vec<Option<f64>> = vec![None; len];
        let mut ess = vec![0.0; na];
        for t in order..len {
            if std[periodicity.std_season(t)] == 0.0 {
                continue;
            }
            let w = periodicity.ar_season(t);
            let pred: f64 = (0..order).map(|i| phi[w][i] * z[t - 1 - i]).sum();
            let e = z[t] - pred;
            ess[w] += e * e;
            eps[t] = Some(e);
        }
        let sigma: Vec<f64> = (0..na).map(|w| (ess[w] / rows[w] as f64).sqrt()).collect();
        for (t, e) in eps.iter_mut().enumerate() {
            if let Some(v) = e {
                let sg = sigma[periodicity.ar_season(t)];
                *e = if sg > 0.0 { Some(*v / sg) } else { None };
            }
        }
        residuals.push(eps);
        let initial = (0..order).map(|i| z[len - 1 - i]).collect();
        sites.push(SiteModel {
            variable: h.variable,
            site: h.site.clone(),
            log_transform: h.log_transform,
            log_shift: shift,
            cap: h.cap,
            mean,
            std,
            phi,
            sigma,
            initial,
        });
    }
    let correlation = residual_correlation(&residuals);
    Ok(ParModel {
        order,
        periodicity,
        sites,
        correlation,
    })
}

fn residual_correlation(residuals: &[Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    let n = residuals.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        c[i][i] = 1.0;
        for j in 0..i {
            let pairs: Vec<(f64, f64)> = residuals[i]
                .iter()
                .zip(&residuals[j])
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .collect();
            let r = pearson(&pairs);
            c[i][j] = r;
            c[j][i] = r;
        }
    }
    c
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Seeded RNG for one scenario: the stream id is the scenario index.
pub fn scenario_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `num_scenarios` paths of `horizon` hours starting at hour 0 of
/// the year.
pub fn generate(model: &ParModel, num_scenarios: usize, horizon: usize, seed: u64) -> Result<ScenarioSet, ScenarioError> {
    model.check()?;
    let (chol, jitter) =
        linalg::cholesky_with_jitter(&model.correlation, 1e-8).ok_or(ScenarioError::NotPositiveSemidefinite)?;
    if jitter > 0.0 {
        log::debug!("correlation factor needed jitter {jitter:e}");
    }
    let n = model.sites.len();
    let paths = crate::par::map_indexed(num_scenarios, |s| simulate_path(model, &chol, horizon, seed, s));
    let mut data = vec![0.0; n * num_scenarios * horizon];
    let mut truncations = 0;
    for (s, (values, trunc)) in paths.into_iter().enumerate() {
        truncations += trunc;
        for i in 0..n {
            let dst = (i * num_scenarios + s) * horizon;
            data[dst..dst + horizon].copy_from_slice(&values[i * horizon..(i + 1) * horizon]);
        }
    }
    let keys = model
        .sites
        .iter()
        .map(|s| SeriesKey::new(s.variable, s.site.clone()))
        .collect();
    let mut set = ScenarioSet::new(keys, num_scenarios, horizon, data);
    set.truncations = truncations;
    if truncations > 0 {
        log::info!("{truncations} generated values clipped to site bounds");
    }
    Ok(set)
}

fn simulate_path(model: &ParModel, chol: &[Vec<f64>], horizon: usize, seed: u64, scenario: usize) -> (Vec<f64>, usize) {
    let n = model.sites.len();
    let p = model.order;
    let per = model.periodicity;
    let mut rng = scenario_rng(seed, scenario as u64);
    // Ring of the last p standardized values per site, most recent first.
    let mut lags: Vec<Vec<f64>> = model
        .sites
        .iter()
        .map(|s| {
            let mut v = s.initial.clone();
            v.resize(p, 0.0);
            v
        })
        .collect();
    let mut out = vec![0.0; n * horizon];
    let mut eps = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut truncations = 0;
    for t in 0..horizon {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            eta[i] = (0..=i).map(|k| chol[i][k] * eps[k]).sum();
        }
        let w = per.ar_season(t);
        let k = per.std_season(t);
        for (i, site) in model.sites.iter().enumerate() {
            let pred: f64 = site.phi[w].iter().zip(&lags[i]).map(|(a, b)| a * b).sum();
            let z = if site.std[k] > 0.0 { pred + site.sigma[w] * eta[i] } else { 0.0 };
            lags[i].rotate_right(1);
            lags[i][0] = z;
            let y = site.mean[k] + site.std[k] * z;
            let mut x = if site.log_transform { y.exp() - site.log_shift } else { y };
            if x < 0.0 {
                x = 0.0;
                truncations += 1;
            }
            if let Some(cap) = site.cap {
                if x > cap {
                    x = cap;
                    truncations += 1;
                }
            }
            out[i * horizon + t] = x;
        }
    }
    (out, truncations)
}
