use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no values to summarize")]
    EmptyInput,
}

impl StatsError {
    pub fn code(&self) -> &'static str {
        "EmptyInput"
    }
}

/// Aggregate statistics over replications, all in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSummary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator, 0 for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    /// 1.96 * std / sqrt(n).
    pub ci95_halfwidth: f64,
}

/// Nearest-rank percentile of sorted data: the value at rank `ceil(q * n)`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn summarize(values: &[f64]) -> Result<SimulationSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SimulationSummary {
        count: n,
        mean,
        std,
        min: sorted[0],
        max: sorted[n - 1],
        p50: nearest_rank(&sorted, 0.50),
        p90: nearest_rank(&sorted, 0.90),
        p95: nearest_rank(&sorted, 0.95),
        p99: nearest_rank(&sorted, 0.99),
        ci95_halfwidth: 1.96 * std / (n as f64).sqrt(),
    })
}
