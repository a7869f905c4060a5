//! Descriptive statistics: dataset summaries, quantiles, boxplot slices,
//! and moving averages of episode logs.

use crate::error::{Error, Result};

use super::DataTable;

/// Report order for dataset summaries: outcomes first, then covariates.
pub const SUMMARY_VARIABLES: [&str; 12] = [
    "bid2val",
    "episodes",
    "vol",
    "N",
    "alpha",
    "gamma",
    "egreedy",
    "asynchronous",
    "design",
    "feedback",
    "num_actions",
    "decay",
];

/// Descriptive statistics for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variable: String,
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

fn describe(variable: &str, values: &[f64]) -> SummaryRow {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_dev = if n >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    SummaryRow {
        variable: variable.to_string(),
        n,
        mean,
        std_dev,
        min,
        max,
    }
}

/// Summarize the standard outcome and covariate columns of a dataset.
pub fn summarize(data: &DataTable) -> Result<Vec<SummaryRow>> {
    data.require(&SUMMARY_VARIABLES)?;
    if data.num_rows() == 0 {
        return Err(Error::Domain("cannot summarize an empty dataset".into()));
    }
    Ok(SUMMARY_VARIABLES
        .iter()
        .map(|&v| describe(v, data.column(v).unwrap()))
        .collect())
}

/// Linear-interpolation quantile of `sorted` (ascending), the same estimator
/// spreadsheet software and NumPy use by default. `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summary of one outcome within one treatment arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotRow {
    pub outcome: String,
    /// Payment rule code: 1 first-price, 0 second-price.
    pub design: u8,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summaries of every outcome, split by payment rule.
pub fn boxplots_by_design(data: &DataTable) -> Result<Vec<BoxplotRow>> {
    let mut needed = vec!["design"];
    needed.extend(super::OUTCOME_COLUMNS);
    data.require(&needed)?;
    let design = data.column("design").unwrap();
    let mut rows = Vec::new();
    for outcome in super::OUTCOME_COLUMNS {
        let values = data.column(outcome).unwrap();
        for arm in [1u8, 0u8] {
            let mut subset: Vec<f64> = values
                .iter()
                .zip(design)
                .filter(|(_, &d)| d == f64::from(arm))
                .map(|(&v, _)| v)
                .collect();
            if subset.is_empty() {
                continue;
            }
            subset.sort_by(|a, b| a.partial_cmp(b).unwrap());
            rows.push(BoxplotRow {
                outcome: outcome.to_string(),
                design: arm,
                n: subset.len(),
                min: subset[0],
                q1: quantile_sorted(&subset, 0.25),
                median: quantile_sorted(&subset, 0.5),
                q3: quantile_sorted(&subset, 0.75),
                max: *subset.last().unwrap(),
            });
        }
    }
    Ok(rows)
}

/// Trailing moving average over full windows only. Entry `i` of the result
/// pairs the last index of window `i` with the mean of `series[i..i+window]`.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<(usize, f64)>> {
    if window == 0 {
        return Err(Error::Config(
            "moving-average window must be positive".into(),
        ));
    }
    if series.len() < window {
        return Ok(Vec::new());
    }
    let inv = 1.0 / window as f64;
    let mut sum: f64 = series[..window].iter().sum();
    let mut out = Vec::with_capacity(series.len() - window + 1);
    out.push((window - 1, sum * inv));
    for i in window..series.len() {
        sum += series[i] - series[i - window];
        out.push((i, sum * inv));
    }
    Ok(out)
}
