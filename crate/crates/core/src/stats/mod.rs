//! Regression analysis over experiment datasets.
//!
//! The centerpiece is a small OLS engine: coefficients come from a Householder
//! QR factorization (never from explicitly inverted normal equations), and
//! standard errors are either classical or HC1 heteroskedasticity-robust.
//! On top of it sit the dataset-facing drivers: the per-outcome regression
//! pairs, and an interacted least-squares estimator for effect heterogeneity.

mod render;
mod summary;

pub use render::*;
pub use summary::*;

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::experiment::Dataset;

/// The nine randomized covariates, in dataset column order.
pub const COVARIATE_COLUMNS: [&str; 9] = [
    "design",
    "N",
    "alpha",
    "gamma",
    "egreedy",
    "asynchronous",
    "feedback",
    "num_actions",
    "decay",
];

/// The three trial outcomes.
pub const OUTCOME_COLUMNS: [&str; 3] = ["bid2val", "vol", "episodes"];

/// Column-oriented numeric view of a dataset, the input to every analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    columns: Vec<(String, Vec<f64>)>,
    rows: usize,
}

impl DataTable {
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let rows = columns.first().map_or(0, |(_, v)| v.len());
        let mut seen = HashSet::new();
        for (name, values) in &columns {
            if !seen.insert(name.clone()) {
                return Err(Error::Config(format!("duplicate column name {name}")));
            }
            if values.len() != rows {
                return Err(Error::Config(format!(
                    "column {name} has {} rows, expected {rows}",
                    values.len()
                )));
            }
        }
        Ok(Self { columns, rows })
    }

    /// Numeric view of an in-memory dataset. The seed column is omitted
    /// (64-bit seeds do not fit in f64); `converged` becomes 0/1.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let n = dataset.records.len();
        let mut cols: Vec<(String, Vec<f64>)> = [
            "trial",
            "design",
            "N",
            "alpha",
            "gamma",
            "egreedy",
            "asynchronous",
            "feedback",
            "num_actions",
            "decay",
            "bid2val",
            "vol",
            "episodes",
            "converged",
        ]
        .iter()
        .map(|name| (name.to_string(), Vec::with_capacity(n)))
        .collect();
        for r in &dataset.records {
            let values = [
                r.trial as f64,
                f64::from(r.design),
                r.n as f64,
                r.alpha,
                r.gamma,
                f64::from(r.egreedy),
                f64::from(r.asynchronous),
                f64::from(r.feedback),
                r.num_actions as f64,
                r.decay,
                r.bid2val,
                r.vol,
                r.episodes as f64,
                f64::from(u8::from(r.converged)),
            ];
            for (col, v) in cols.iter_mut().zip(values) {
                col.1.push(v);
            }
        }
        Self {
            columns: cols,
            rows: n,
        }
    }

    /// Parse a CSV file into numeric columns. Cells holding `true`/`false`
    /// are read as 1/0; columns with any other non-numeric cell are skipped.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let mut raw: Vec<Option<Vec<f64>>> = vec![Some(Vec::new()); headers.len()];
        for row in reader.records() {
            let row = row?;
            for (slot, cell) in raw.iter_mut().zip(row.iter()) {
                if let Some(values) = slot {
                    match parse_numeric(cell) {
                        Some(v) => values.push(v),
                        None => *slot = None,
                    }
                }
            }
        }
        let columns: Vec<(String, Vec<f64>)> = headers
            .into_iter()
            .zip(raw)
            .filter_map(|(name, values)| values.map(|v| (name, v)))
            .collect();
        Self::new(columns)
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Error listing every absent column among `names`.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| self.column(n).is_none())
            .map(|n| n.to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingColumns(missing))
        }
    }
}

fn parse_numeric(cell: &str) -> Option<f64> {
    match cell.trim() {
        "true" => Some(1.0),
        "false" => Some(0.0),
        other => other.parse().ok(),
    }
}

/// Outcome vector plus regressor matrix with a leading intercept column.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub outcome: String,
    /// Column names; index 0 is always `Intercept`.
    pub names: Vec<String>,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl DesignMatrix {
    /// Build a design matrix with an intercept prepended to `named` columns.
    pub fn with_intercept(outcome: &str, y: &[f64], named: &[(&str, &[f64])]) -> Result<Self> {
        let m = y.len();
        let p = named.len() + 1;
        if m <= p {
            return Err(Error::Config(format!(
                "need more observations ({m}) than parameters ({p})"
            )));
        }
        let mut names = vec!["Intercept".to_string()];
        let mut seen: HashSet<&str> = HashSet::new();
        for (name, col) in named {
            if col.len() != m {
                return Err(Error::Config(format!(
                    "column {name} has {} rows, outcome has {m}",
                    col.len()
                )));
            }
            if name == &"Intercept" || !seen.insert(name) {
                return Err(Error::Config(format!("duplicate column name {name}")));
            }
            names.push(name.to_string());
        }
        if y.iter().any(|v| !v.is_finite())
            || named.iter().any(|(_, c)| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Domain("non-finite value in design matrix".into()));
        }
        let x = DMatrix::from_fn(m, p, |r, c| if c == 0 { 1.0 } else { named[c - 1].1[r] });
        Ok(Self {
            outcome: outcome.to_string(),
            names,
            y: DVector::from_column_slice(y),
            x,
        })
    }

    pub fn num_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.x.ncols()
    }
}

/// One estimated coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

/// A fitted least-squares regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub outcome: String,
    pub terms: Vec<CoefficientEstimate>,
    pub r_squared: f64,
    /// Overall F statistic against the intercept-only model, with its
    /// degrees of freedom; absent for intercept-only fits.
    pub f_stat: Option<f64>,
    pub f_df: (f64, f64),
    pub f_p_value: Option<f64>,
    pub n_obs: usize,
    /// Whether the standard errors are HC1 robust.
    pub robust: bool,
}

impl RegressionResult {
    pub fn term(&self, name: &str) -> Option<&CoefficientEstimate> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Detect (near-)collinear columns with column-pivoted Gram-Schmidt.
///
/// Returns the names of columns whose residual norm falls below the rank
/// tolerance `p * machine_epsilon * max_column_norm`, or `None` when the
/// matrix has full column rank.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Option<Vec<String>> {
    let p = x.ncols();
    let mut cols: Vec<DVector<f64>> = (0..p).map(|j| x.column(j).into_owned()).collect();
    let max_norm = cols.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = p as f64 * f64::EPSILON * max_norm;
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut dropped: Vec<usize> = Vec::new();
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| cols[a].norm().partial_cmp(&cols[b].norm()).unwrap())
            .unwrap();
        let j = remaining[pos];
        let norm = cols[j].norm();
        if norm <= tol {
            dropped.extend(remaining.iter().copied());
            break;
        }
        let q = &cols[j] / norm;
        remaining.remove(pos);
        for &k in &remaining {
            let proj = q.dot(&cols[k]);
            cols[k] -= &q * proj;
        }
    }
    if dropped.is_empty() {
        None
    } else {
        dropped.sort_unstable();
        Some(dropped.iter().map(|&j| names[j].clone()).collect())
    }
}

/// Fit ordinary least squares.
///
/// Coefficients solve the least-squares problem through a QR factorization.
/// With `robust` the covariance is the HC1 sandwich
/// `M/(M-p) * (X'X)^-1 X' diag(e^2) X (X'X)^-1`; otherwise it is the
/// classical `sigma^2 (X'X)^-1`. p-values use the t distribution with
/// `M - p` degrees of freedom.
pub fn ols(design: &DesignMatrix, robust: bool) -> Result<RegressionResult> {
    let m = design.num_obs();
    let p = design.num_params();
    if let Some(cols) = collinear_columns(&design.x, &design.names) {
        return Err(Error::RankDeficient(cols));
    }
    let qr = design.x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &design.y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(vec!["<singular R>".into()]))?;
    let resid = &design.y - &design.x * &beta;
    let ssr = resid.norm_squared();
    let ybar = design.y.mean();
    let sst: f64 = design.y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient(vec!["<singular R>".into()]))?;
    let xtx_inv = &rinv * rinv.transpose();
    let df = (m - p) as f64;
    let cov = if robust {
        let mut xe = design.x.clone();
        for i in 0..m {
            let w = resid[i] * resid[i];
            for j in 0..p {
                xe[(i, j)] *= w;
            }
        }
        let meat = design.x.transpose() * xe;
        (&xtx_inv * meat * &xtx_inv) * (m as f64 / df)
    } else {
        &xtx_inv * (ssr / df)
    };

    let tdist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Invariant(format!("t distribution with df {df}: {e}")))?;
    let terms = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = beta[j];
            let std_error = cov[(j, j)].max(0.0).sqrt();
            let (t_stat, p_value) = if std_error > 0.0 {
                let t = estimate / std_error;
                (t, 2.0 * (1.0 - tdist.cdf(t.abs())))
            } else if estimate == 0.0 {
                (0.0, 1.0)
            } else {
                (f64::INFINITY * estimate.signum(), 0.0)
            };
            CoefficientEstimate {
                name: name.clone(),
                estimate,
                std_error,
                t_stat,
                p_value,
            }
        })
        .collect();

    let (f_stat, f_df, f_p_value) = if p >= 2 {
        let df1 = (p - 1) as f64;
        let f = if r_squared < 1.0 {
            (r_squared / df1) / ((1.0 - r_squared) / df)
        } else {
            f64::INFINITY
        };
        let fp = if f.is_finite() {
            let fdist = FisherSnedecor::new(df1, df)
                .map_err(|e| Error::Invariant(format!("F distribution: {e}")))?;
            1.0 - fdist.cdf(f)
        } else {
            0.0
        };
        (Some(f), (df1, df), Some(fp))
    } else {
        (None, (0.0, df), None)
    };

    Ok(RegressionResult {
        outcome: design.outcome.clone(),
        terms,
        r_squared,
        f_stat,
        f_df,
        f_p_value,
        n_obs: m,
        robust,
    })
}

/// The standard per-outcome regression pair: outcome on the payment rule
/// alone, and outcome on all nine covariates. HC1 errors throughout.
#[derive(Debug, Clone)]
pub struct OutcomeRegressions {
    pub outcome: String,
    pub simple: RegressionResult,
    pub full: RegressionResult,
}

/// Run both regression specifications for every outcome column.
pub fn run_outcome_regressions(data: &DataTable) -> Result<Vec<OutcomeRegressions>> {
    let mut needed: Vec<&str> = COVARIATE_COLUMNS.to_vec();
    needed.extend(OUTCOME_COLUMNS);
    data.require(&needed)?;
    let mut results = Vec::new();
    for outcome in OUTCOME_COLUMNS {
        let y = data.column(outcome).unwrap();
        let design_col = data.column("design").unwrap();
        let simple = ols(
            &DesignMatrix::with_intercept(outcome, y, &[("design", design_col)])?,
            true,
        )?;
        let named: Vec<(&str, &[f64])> = COVARIATE_COLUMNS
            .iter()
            .map(|&c| (c, data.column(c).unwrap()))
            .collect();
        let full = ols(&DesignMatrix::with_intercept(outcome, y, &named)?, true)?;
        results.push(OutcomeRegressions {
            outcome: outcome.to_string(),
            simple,
            full,
        });
    }
    Ok(results)
}

/// One row of a heterogeneous-effect estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CateRow {
    pub name: String,
    pub point_estimate: f64,
    pub std_error: f64,
    pub z_stat: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Heterogeneous treatment effects from interacted least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct CateResult {
    pub outcome: String,
    pub treatment: String,
    /// One row per modifier (the treatment-by-modifier interaction), then a
    /// final `cate_intercept` row for the treatment's own coefficient.
    pub rows: Vec<CateRow>,
}

/// Estimate effect heterogeneity by regressing the outcome on the treatment,
/// treatment-by-modifier interactions, and modifier main effects, with HC1
/// errors. The interaction coefficient on modifier `X_j` is the change in
/// the treatment effect per unit of `X_j`; the `cate_intercept` row is the
/// treatment coefficient itself. With no modifiers this reduces exactly to
/// the simple OLS treatment coefficient. Inference is normal-based with a
/// fixed 1.96 confidence band.
pub fn interacted_cate(
    data: &DataTable,
    outcome: &str,
    treatment: &str,
    modifiers: &[&str],
) -> Result<CateResult> {
    let mut needed = vec![outcome, treatment];
    needed.extend(modifiers);
    data.require(&needed)?;
    let y = data.column(outcome).unwrap();
    let w = data.column(treatment).unwrap();
    if w.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Domain(format!(
            "treatment {treatment} must be binary 0/1"
        )));
    }
    if modifiers.contains(&treatment) {
        return Err(Error::Config("treatment cannot modify itself".into()));
    }

    let mut owned: Vec<(String, Vec<f64>)> = vec![(treatment.to_string(), w.to_vec())];
    for &m in modifiers {
        let x = data.column(m).unwrap();
        let interaction: Vec<f64> = w.iter().zip(x).map(|(&wi, &xi)| wi * xi).collect();
        owned.push((format!("{treatment}:{m}"), interaction));
    }
    for &m in modifiers {
        owned.push((m.to_string(), data.column(m).unwrap().to_vec()));
    }
    let named: Vec<(&str, &[f64])> = owned
        .iter()
        .map(|(n, v)| (n.as_str(), v.as_slice()))
        .collect();
    let fit = ols(&DesignMatrix::with_intercept(outcome, y, &named)?, true)?;

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let row_for = |term_name: &str, label: &str| -> CateRow {
        let term = fit.term(term_name).expect("term present by construction");
        let z = if term.std_error > 0.0 {
            term.estimate / term.std_error
        } else {
            0.0
        };
        CateRow {
            name: label.to_string(),
            point_estimate: term.estimate,
            std_error: term.std_error,
            z_stat: z,
            p_value: 2.0 * (1.0 - normal.cdf(z.abs())),
            ci_lower: term.estimate - 1.96 * term.std_error,
            ci_upper: term.estimate + 1.96 * term.std_error,
        }
    };

    let mut rows: Vec<CateRow> = modifiers
        .iter()
        .map(|&m| row_for(&format!("{treatment}:{m}"), m))
        .collect();
    rows.push(row_for(treatment, "cate_intercept"));
    Ok(CateResult {
        outcome: outcome.to_string(),
        treatment: treatment.to_string(),
        rows,
    })
}
