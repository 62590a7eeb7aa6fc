//! Exogenous inputs: martingale wind forecasts, scenario fans, realized wind
//! paths, and demand/price series.
//!
//! At decision time the point forecast for every lead time equals the wind
//! currently observed (the conditional mean of a martingale). Realized wind
//! follows the same recursion as the forecasts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("expected {expected} data rows, found {found}")]
    Length { expected: usize, found: usize },
    #[error("invalid series: {0}")]
    Invalid(String),
}

/// Known demand and price trajectories plus the initial wind level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSeries {
    pub demand: Vec<f64>,
    pub hydrogen_price: Vec<f64>,
    pub initial_wind: f64,
}

impl ExogenousSeries {
    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }
}

/// What a random stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Truth = 1,
    Fan = 2,
    Series = 3,
    Tuning = 4,
}

/// SplitMix64 finalizer, used to derive independent stream keys.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream for `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(purpose as u64)));
    rng.set_stream(mix(mix(a) ^ b.rotate_left(32)));
    rng
}

/// Seed of the `index`-th episode drawn from `base`.
pub fn episode_seed(base: u64, index: usize) -> u64 {
    mix(base.wrapping_add(mix(index as u64 + 1)))
}

/// Multiplicative martingale wind model: `f' = max(0, f + ε)`, `ε ~ N(0, (ρ f)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub relative_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub clamp_max: Option<f64>,
}

/// Point forecast and sampled paths over lead times `1..=h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFan {
    pub point_forecast: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
}

impl ScenarioFan {
    pub fn horizon(&self) -> usize {
        self.point_forecast.len()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

impl ForecastModel {
    pub fn new(relative_std: f64, seed: u64) -> Self {
        Self {
            relative_std,
            seed,
            clamp_max: None,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn evolve<R: Rng + ?Sized>(&self, current: f64, rng: &mut R) -> f64 {
        let sigma = self.relative_std * current;
        let next = if sigma > 0.0 {
            let eps: f64 = rng.sample(StandardNormal);
            (current + sigma * eps).max(0.0)
        } else {
            current
        };
        match self.clamp_max {
            Some(cap) => next.min(cap),
            None => next,
        }
    }

    /// Independent paths of length `horizon` from `current`; the stream of path
    /// `ω` is keyed by `(seed, step, ω)`.
    pub fn sample_fan(&self, current: f64, horizon: usize, count: usize, step: usize) -> ScenarioFan {
        let paths = (0..count)
            .map(|w| {
                let mut rng = stream(self.seed, Purpose::Fan, step as u64, w as u64);
                let mut f = current;
                (0..horizon)
                    .map(|_| {
                        f = self.evolve(f, &mut rng);
                        f
                    })
                    .collect()
            })
            .collect();
        ScenarioFan {
            point_forecast: vec![current; horizon],
            paths,
        }
    }

    /// Realized wind `E_0..E_{len-1}` with `E_0 = initial`.
    pub fn truth_path(&self, initial: f64, len: usize) -> Vec<f64> {
        let mut rng = stream(self.seed, Purpose::Truth, 0, 0);
        let mut path = Vec::with_capacity(len);
        let mut f = initial;
        for t in 0..len {
            if t > 0 {
                f = self.evolve(f, &mut rng);
            }
            path.push(f);
        }
        path
    }
}

/// Reads `step,demand_mwh,h2_price_per_mwh` rows (header mandatory).
pub fn load_series(
    path: &Path,
    expected_len: Option<usize>,
    initial_wind: f64,
) -> Result<ExogenousSeries, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_series(&text, expected_len, initial_wind)
}

pub fn parse_series(
    text: &str,
    expected_len: Option<usize>,
    initial_wind: f64,
) -> Result<ExogenousSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| IngestError::Row {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let expected_header = ["step", "demand_mwh", "h2_price_per_mwh"];
    if header.iter().ne(expected_header) {
        return Err(IngestError::Row {
            line: 1,
            reason: format!("header must be {}", expected_header.join(",")),
        });
    }
    let mut demand = Vec::new();
    let mut price = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Row {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64, IngestError> {
            let raw = record.get(i).unwrap_or_default();
            let v: f64 = raw.parse().map_err(|_| IngestError::Row {
                line,
                reason: format!("{name} {raw:?} is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(IngestError::Row {
                    line,
                    reason: format!("{name} must be finite and nonnegative, got {v}"),
                });
            }
            Ok(v)
        };
        let step = field(0, "step")?;
        if step != demand.len() as f64 {
            return Err(IngestError::Row {
                line,
                reason: format!("step {step} out of sequence, expected {}", demand.len()),
            });
        }
        demand.push(field(1, "demand")?);
        price.push(field(2, "price")?);
    }
    if let Some(expected) = expected_len {
        if demand.len() != expected {
            return Err(IngestError::Length {
                expected,
                found: demand.len(),
            });
        }
    }
    if demand.is_empty() {
        return Err(IngestError::Invalid("no data rows".into()));
    }
    if !(initial_wind.is_finite() && initial_wind >= 0.0) {
        return Err(IngestError::Invalid(format!("initial wind {initial_wind}")));
    }
    Ok(ExogenousSeries {
        demand,
        hydrogen_price: price,
        initial_wind,
    })
}

/// Renders a series in the ingestion CSV format.
pub fn series_to_csv(series: &ExogenousSeries) -> String {
    let mut out = String::from("step,demand_mwh,h2_price_per_mwh\n");
    for (t, (d, p)) in series.demand.iter().zip(&series.hydrogen_price).enumerate() {
        out.push_str(&format!("{t},{d},{p}\n"));
    }
    out
}

/// Synthetic year: winter-peaking seasonal demand with a weekday pattern and
/// small noise, scaled so the maximum equals `peak`; monthly piecewise-constant
/// prices around `base_price`; initial wind at 80% of peak.
pub fn synthesize_series(peak: f64, len: usize, seed: u64, base_price: f64) -> Result<ExogenousSeries, IngestError> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(IngestError::Invalid(format!("peak demand must be positive, got {peak}")));
    }
    if len == 0 {
        return Err(IngestError::Invalid("series length must be at least 1".into()));
    }
    let mut rng = stream(seed, Purpose::Series, 0, 0);
    const WEEKDAY: [f64; 7] = [1.0, 1.0, 0.99, 0.98, 0.97, 0.9, 0.88];
    let mut demand: Vec<f64> = (0..len)
        .map(|t| {
            let season = 0.75 + 0.25 * (2.0 * std::f64::consts::PI * t as f64 / 365.0).cos();
            let noise = 1.0 - 0.04 * rng.random::<f64>();
            season * WEEKDAY[t % 7] * noise
        })
        .collect();
    let (argmax, max) = demand
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    for d in &mut demand {
        *d *= peak / max;
    }
    demand[argmax] = peak;

    let months = len.div_ceil(30);
    let monthly: Vec<f64> = (0..months)
        .map(|_| base_price * (1.0 + 0.3 * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    let hydrogen_price = (0..len).map(|t| monthly[t / 30]).collect();
    Ok(ExogenousSeries {
        demand,
        hydrogen_price,
        initial_wind: 0.8 * peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_identity() {
        let m = ForecastModel::new(0.0, 3);
        let mut rng = stream(1, Purpose::Fan, 0, 0);
        assert_eq!(m.evolve(123.4, &mut rng), 123.4);
        assert_eq!(m.truth_path(50.0, 10), vec![50.0; 10]);
        let fan = m.sample_fan(7.0, 4, 3, 0);
        assert!(fan.paths.iter().all(|p| p == &fan.point_forecast));
    }

    #[test]
    fn zero_wind_is_absorbing() {
        let m = ForecastModel::new(0.5, 3);
        let mut rng = stream(1, Purpose::Fan, 0, 0);
        assert_eq!(m.evolve(0.0, &mut rng), 0.0);
    }

    #[test]
    fn clamp_above() {
        let m = ForecastModel {
            relative_std: 1.0,
            seed: 9,
            clamp_max: Some(100.0),
        };
        let path = m.truth_path(99.0, 200);
        assert!(path.iter().all(|&v| (0.0..=100.0).contains(&v)));
    }

    #[test]
    fn martingale_mean_of_one_step() {
        let m = ForecastModel::new(0.1, 11);
        let mut rng = stream(5, Purpose::Fan, 1, 2);
        let n = 100_000;
        let mean = (0..n).map(|_| m.evolve(100.0, &mut rng)).sum::<f64>() / n as f64;
        let bound = 3.0 * 10.0 / (n as f64).sqrt();
        assert!((mean - 100.0).abs() < bound, "mean {mean}");
    }

    #[test]
    fn fan_variance_grows_with_lead_time() {
        let m = ForecastModel::new(0.1, 4);
        let fan = m.sample_fan(100.0, 5, 10_000, 0);
        let var_at = |k: usize| {
            let xs: Vec<f64> = fan.paths.iter().map(|p| p[k]).collect();
            let mu = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64
        };
        assert!(var_at(4) > var_at(0));
        assert_eq!(fan.point_forecast, vec![100.0; 5]);
        assert_eq!(m.sample_fan(100.0, 5, 1, 0).len(), 1);
    }

    #[test]
    fn truth_path_is_reproducible_and_nonnegative() {
        let m = ForecastModel::new(0.3, 77);
        let a = m.truth_path(10.0, 365);
        let b = m.truth_path(10.0, 365);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v >= 0.0));
        assert_ne!(a, m.with_seed(78).truth_path(10.0, 365));
    }

    #[test]
    fn truth_path_preserves_mean() {
        let n = 10_000;
        let mut last = Vec::with_capacity(n);
        for i in 0..n {
            let m = ForecastModel::new(0.1, episode_seed(3, i));
            last.push(*m.truth_path(100.0, 20).last().unwrap());
        }
        let mean = last.iter().sum::<f64>() / n as f64;
        let sd = (last.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - 100.0).abs() < 3.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn parse_valid_series() {
        let csv = "step,demand_mwh,h2_price_per_mwh\n0,10,60\n1,11.5,60\n2,9,61\n";
        let s = parse_series(csv, Some(3), 8.0).unwrap();
        assert_eq!(s.demand, vec![10.0, 11.5, 9.0]);
        assert_eq!(s.hydrogen_price, vec![60.0, 60.0, 61.0]);
        assert_eq!(parse_series(&series_to_csv(&s), Some(3), 8.0).unwrap(), s);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let csv = "step,demand_mwh,h2_price_per_mwh\n0,10,60\n1,-2,60\n";
        match parse_series(csv, None, 1.0) {
            Err(IngestError::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "step,demand_mwh,h2_price_per_mwh\n0,10,sixty\n";
        assert!(matches!(parse_series(csv, None, 1.0), Err(IngestError::Row { line: 2, .. })));
        let csv = "step,demand_mwh,h2_price_per_mwh\n0,10,60\n";
        assert!(matches!(
            parse_series(csv, Some(2), 1.0),
            Err(IngestError::Length { expected: 2, found: 1 })
        ));
        assert!(matches!(parse_series("a,b,c\n0,1,1\n", None, 1.0), Err(IngestError::Row { line: 1, .. })));
    }

    #[test]
    fn synthetic_peak_is_exact() {
        let s = synthesize_series(1913.0, 365, 1, 60.0).unwrap();
        let max = s.demand.iter().copied().fold(f64::MIN, f64::max);
        assert!((max - 1913.0).abs() < 1e-9);
        assert_eq!(s.len(), 365);
        assert!(s.demand.iter().all(|&d| d > 0.0));
        assert!((s.initial_wind - 0.8 * 1913.0).abs() < 1e-12);
        assert_eq!(s.hydrogen_price[0], s.hydrogen_price[29]);
        assert_eq!(s, synthesize_series(1913.0, 365, 1, 60.0).unwrap());
    }
}
