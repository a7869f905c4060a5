//! Plain-text tables and CSV serializations of analysis results.
//!
//! Text renderings are for terminals: aligned columns, standard errors in
//! parentheses, significance stars. CSV renderings carry full-precision
//! values for downstream tools.

use std::fmt::Write as _;

use super::{BoxplotRow, CateResult, OutcomeRegressions, RegressionResult, SummaryRow};

/// Conventional significance stars: `***` p<0.01, `**` p<0.05, `*` p<0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0.000".to_string()
    } else if x.abs() >= 1e6 || x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.3}")
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

/// Render rows of (label, column cells...) with right-aligned columns.
fn align_table(rows: &[Vec<String>], separator_after: &[usize]) -> String {
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; ncols];
    for row in rows {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    let total: usize = widths.iter().sum::<usize>() + 2 * (ncols.saturating_sub(1));
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if j == 0 {
                let _ = write!(out, "{cell:<width$}", width = widths[0]);
            } else {
                let _ = write!(out, "  {cell:>width$}", width = widths[j]);
            }
        }
        out.push('\n');
        if separator_after.contains(&i) {
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// Aligned text table of dataset summary statistics.
pub fn render_summary_text(rows: &[SummaryRow]) -> String {
    let mut table = vec![vec![
        "variable".to_string(),
        "n".to_string(),
        "mean".to_string(),
        "std_dev".to_string(),
        "min".to_string(),
        "max".to_string(),
    ]];
    for r in rows {
        table.push(vec![
            r.variable.clone(),
            r.n.to_string(),
            fmt_num(r.mean),
            fmt_num(r.std_dev),
            fmt_num(r.min),
            fmt_num(r.max),
        ]);
    }
    align_table(&table, &[0])
}

/// CSV of dataset summary statistics.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("variable,n,mean,std_dev,min,max\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.variable, r.n, r.mean, r.std_dev, r.min, r.max
        );
    }
    out
}

fn term_cell(fit: &RegressionResult, name: &str) -> (String, String) {
    match fit.term(name) {
        Some(t) => (
            format!("{}{}", fmt_num(t.estimate), significance_stars(t.p_value)),
            format!("({})", fmt_num(t.std_error)),
        ),
        None => (String::new(), String::new()),
    }
}

/// Side-by-side text table of the simple (1) and full (2) specifications.
pub fn render_regressions_text(reg: &OutcomeRegressions) -> String {
    let mut rows = vec![vec![String::new(), "(1)".to_string(), "(2)".to_string()]];
    let body_start = rows.len();
    for name in reg.full.terms.iter().map(|t| t.name.as_str()) {
        let (e1, s1) = term_cell(&reg.simple, name);
        let (e2, s2) = term_cell(&reg.full, name);
        rows.push(vec![name.to_string(), e1, e2]);
        rows.push(vec![String::new(), s1, s2]);
    }
    let body_end = rows.len() - 1;
    rows.push(vec![
        "Observations".to_string(),
        reg.simple.n_obs.to_string(),
        reg.full.n_obs.to_string(),
    ]);
    rows.push(vec![
        "R2".to_string(),
        fmt_num(reg.simple.r_squared),
        fmt_num(reg.full.r_squared),
    ]);
    rows.push(vec![
        "F".to_string(),
        reg.simple.f_stat.map_or_else(String::new, fmt_num),
        reg.full.f_stat.map_or_else(String::new, fmt_num),
    ]);
    rows.push(vec![
        "F p-value".to_string(),
        reg.simple.f_p_value.map_or_else(String::new, fmt_p),
        reg.full.f_p_value.map_or_else(String::new, fmt_p),
    ]);
    let mut out = format!("Outcome: {}\n", reg.outcome);
    out.push_str(&align_table(&rows, &[body_start - 1, body_end]));
    out.push_str("Standard errors in parentheses are HC1 robust.\n");
    out.push_str("Significance: * p<0.1, ** p<0.05, *** p<0.01.\n");
    out
}

/// CSV of both regression specifications, one coefficient per row.
pub fn regressions_csv(reg: &OutcomeRegressions) -> String {
    let mut out = String::from("outcome,model,term,estimate,std_error,t_stat,p_value,stars\n");
    for (model, fit) in [("simple", &reg.simple), ("full", &reg.full)] {
        for t in &fit.terms {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                reg.outcome,
                model,
                t.name,
                t.estimate,
                t.std_error,
                t.t_stat,
                t.p_value,
                significance_stars(t.p_value)
            );
        }
        let _ = writeln!(
            out,
            "{},{},r_squared,{},,,,",
            reg.outcome, model, fit.r_squared
        );
        if let (Some(f), Some(fp)) = (fit.f_stat, fit.f_p_value) {
            let _ = writeln!(out, "{},{},f_stat,{},,,{},", reg.outcome, model, f, fp);
        }
    }
    out
}

/// Aligned text table of heterogeneous treatment effects.
pub fn render_cate_text(result: &CateResult) -> String {
    let mut rows = vec![vec![
        "modifier".to_string(),
        "estimate".to_string(),
        "std_error".to_string(),
        "z".to_string(),
        "p".to_string(),
        "95% CI".to_string(),
    ]];
    for r in &result.rows {
        rows.push(vec![
            r.name.clone(),
            format!(
                "{}{}",
                fmt_num(r.point_estimate),
                significance_stars(r.p_value)
            ),
            fmt_num(r.std_error),
            fmt_num(r.z_stat),
            fmt_p(r.p_value),
            format!("[{}, {}]", fmt_num(r.ci_lower), fmt_num(r.ci_upper)),
        ]);
    }
    let mut out = format!(
        "Effect of {} on {} by modifier\n",
        result.treatment, result.outcome
    );
    out.push_str(&align_table(&rows, &[0]));
    out.push_str("cate_intercept is the treatment coefficient itself.\n");
    out
}

/// CSV of heterogeneous treatment effects.
pub fn cate_csv(result: &CateResult) -> String {
    let mut out = String::from(
        "outcome,treatment,term,estimate,std_error,z_stat,p_value,ci_lower,ci_upper,stars\n",
    );
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            result.outcome,
            result.treatment,
            r.name,
            r.point_estimate,
            r.std_error,
            r.z_stat,
            r.p_value,
            r.ci_lower,
            r.ci_upper,
            significance_stars(r.p_value)
        );
    }
    out
}

/// CSV of per-design five-number summaries.
pub fn boxplot_csv(rows: &[BoxplotRow]) -> String {
    let mut out = String::from("outcome,design,n,min,q1,median,q3,max\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.outcome, r.design, r.n, r.min, r.q1, r.median, r.q3, r.max
        );
    }
    out
}

/// CSV of a winning-bid moving average.
pub fn moving_average_csv(points: &[(usize, f64)]) -> String {
    let mut out = String::from("episode,mean_winning_bid\n");
    for (episode, mean) in points {
        let _ = writeln!(out, "{episode},{mean}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{CateRow, CoefficientEstimate};
    use super::*;

    #[test]
    fn stars_thresholds() {
        assert_eq!(significance_stars(0.005), "***");
        assert_eq!(significance_stars(0.01), "**");
        assert_eq!(significance_stars(0.049), "**");
        assert_eq!(significance_stars(0.05), "*");
        assert_eq!(significance_stars(0.099), "*");
        assert_eq!(significance_stars(0.1), "");
        assert_eq!(significance_stars(0.9), "");
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.0), "0.000");
        assert_eq!(fmt_num(1.25), "1.250");
        assert_eq!(fmt_num(-0.1694), "-0.169");
        assert_eq!(fmt_num(2_500_000.0), "2.500e6");
        assert_eq!(fmt_num(0.0000042), "4.200e-6");
        assert_eq!(fmt_p(0.0004), "<0.001");
        assert_eq!(fmt_p(0.25), "0.250");
    }

    fn fake_fit(outcome: &str, names: &[&str], robust: bool) -> RegressionResult {
        RegressionResult {
            outcome: outcome.to_string(),
            terms: names
                .iter()
                .enumerate()
                .map(|(i, n)| CoefficientEstimate {
                    name: n.to_string(),
                    estimate: 0.5 - i as f64 * 0.2,
                    std_error: 0.05,
                    t_stat: 3.0,
                    p_value: 0.003,
                })
                .collect(),
            r_squared: 0.5,
            f_stat: Some(12.0),
            f_df: (1.0, 40.0),
            f_p_value: Some(0.001),
            n_obs: 42,
            robust,
        }
    }

    #[test]
    fn regression_table_contains_both_models() {
        let reg = OutcomeRegressions {
            outcome: "bid2val".to_string(),
            simple: fake_fit("bid2val", &["Intercept", "design"], true),
            full: fake_fit("bid2val", &["Intercept", "design", "alpha"], true),
        };
        let text = render_regressions_text(&reg);
        assert!(text.contains("(1)"));
        assert!(text.contains("(2)"));
        assert!(text.contains("design"));
        assert!(text.contains("alpha"));
        assert!(text.contains("(0.050)"));
        assert!(text.contains("Observations"));
        assert!(text.contains("42"));
        assert!(text.contains("HC1"));
        let csv = regressions_csv(&reg);
        assert!(csv.starts_with("outcome,model,term,"));
        assert!(csv.contains("bid2val,simple,design,"));
        assert!(csv.contains("bid2val,full,alpha,"));
        assert!(csv.contains(",***"));
        assert!(csv.contains("r_squared"));
    }

    #[test]
    fn summary_renderings() {
        let rows = vec![SummaryRow {
            variable: "bid2val".to_string(),
            n: 10,
            mean: 0.875,
            std_dev: 0.1,
            min: 0.6,
            max: 1.0,
        }];
        let text = render_summary_text(&rows);
        assert!(text.contains("bid2val"));
        assert!(text.contains("0.875"));
        let csv = summary_csv(&rows);
        assert!(csv.starts_with("variable,n,mean,std_dev,min,max\n"));
        assert!(csv.contains("bid2val,10,0.875,0.1,0.6,1"));
    }

    #[test]
    fn cate_renderings() {
        let result = CateResult {
            outcome: "bid2val".to_string(),
            treatment: "design".to_string(),
            rows: vec![CateRow {
                name: "cate_intercept".to_string(),
                point_estimate: -0.17,
                std_error: 0.02,
                z_stat: -8.5,
                p_value: 1e-10,
                ci_lower: -0.2092,
                ci_upper: -0.1308,
            }],
        };
        let text = render_cate_text(&result);
        assert!(text.contains("cate_intercept"));
        assert!(text.contains("-0.170***"));
        let csv = cate_csv(&result);
        assert!(csv.contains("bid2val,design,cate_intercept,-0.17,0.02,-8.5,"));
    }

    #[test]
    fn boxplot_and_moving_average_csv() {
        let rows = vec![BoxplotRow {
            outcome: "vol".to_string(),
            design: 1,
            n: 5,
            min: 0.0,
            q1: 0.1,
            median: 0.2,
            q3: 0.3,
            max: 0.4,
        }];
        assert_eq!(
            boxplot_csv(&rows),
            "outcome,design,n,min,q1,median,q3,max\nvol,1,5,0,0.1,0.2,0.3,0.4\n"
        );
        assert_eq!(
            moving_average_csv(&[(999, 0.75)]),
            "episode,mean_winning_bid\n999,0.75\n"
        );
    }
}
