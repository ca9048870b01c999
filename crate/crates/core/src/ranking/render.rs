use std::fmt::Write;

use super::{fractional_ranks, MetricScores, RankReport};

/// Two decimals with trailing zeros dropped: `1.3333 -> "1.33"`, `8.0 -> "8"`.
pub fn format_score(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Model indices ordered by ascending average, ties by name.
fn order_by_average(models: &[String], scores: &MetricScores) -> Vec<usize> {
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| {
        scores.average[a]
            .total_cmp(&scores.average[b])
            .then_with(|| models[a].cmp(&models[b]))
    });
    order
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// Per-trial columns plus the average, models sorted by average.
pub fn render_metric_table(title: &str, models: &[String], trials: &[String], scores: &MetricScores) -> String {
    let mut rows = vec![std::iter::once("Model".to_string())
        .chain(trials.iter().cloned())
        .chain(std::iter::once("Average".to_string()))
        .collect::<Vec<_>>()];
    for m in order_by_average(models, scores) {
        let mut row = vec![models[m].clone()];
        row.extend(scores.per_trial.iter().map(|t| format_score(t[m])));
        row.push(format_score(scores.average[m]));
        rows.push(row);
    }
    format!("{title}\n{}", aligned(&rows))
}

/// Delimited form of [`render_metric_table`].
pub fn render_metric_csv(models: &[String], trials: &[String], scores: &MetricScores) -> String {
    let mut out = String::from("model");
    for t in trials {
        out.push(',');
        out.push_str(t);
    }
    out.push_str(",average\n");
    for m in order_by_average(models, scores) {
        out.push_str(&models[m]);
        for t in &scores.per_trial {
            out.push(',');
            out.push_str(&format_score(t[m]));
        }
        out.push(',');
        out.push_str(&format_score(scores.average[m]));
        out.push('\n');
    }
    out
}

/// Position of every model under each metric, ordered by the first.
pub fn render_comparison(report: &RankReport) -> String {
    let place = |s: &MetricScores| fractional_ranks(&s.average.iter().map(|a| -a).collect::<Vec<_>>());
    let (a, p) = (place(&report.avg_trial), place(&report.total_prob));
    let mut rows = vec![vec![
        "Model".to_string(),
        "Average Trial".to_string(),
        "Total Probability".to_string(),
    ]];
    for m in order_by_average(&report.models, &report.avg_trial) {
        rows.push(vec![report.models[m].clone(), format_score(a[m]), format_score(p[m])]);
    }
    format!("Ranking comparison\n{}", aligned(&rows))
}

/// Both metric tables, the comparison table and an exclusion summary.
pub fn render_report(report: &RankReport) -> String {
    let mut out = render_metric_table("Average Trial Ranking", &report.models, &report.trials, &report.avg_trial);
    out.push('\n');
    out.push_str(&render_metric_table(
        "Total Probability Ranking",
        &report.models,
        &report.trials,
        &report.total_prob,
    ));
    out.push('\n');
    out.push_str(&render_comparison(report));
    let _ = writeln!(out, "\nExcluded queries: {}", report.exclusions.len());
    for t in &report.skipped_trials {
        let _ = writeln!(out, "Skipped trial with no rankable queries: {t}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_decimal_display() {
        assert_eq!(format_score(3.1366), "3.14");
        assert_eq!(format_score(4.0 / 3.0), "1.33");
        assert_eq!(format_score(8.0), "8");
        assert_eq!(format_score(3.4), "3.4");
        assert_eq!(format_score(5.0 / 3.0), "1.67");
    }

    #[test]
    fn single_model_table() {
        let scores = MetricScores::from_per_trial(vec![vec![2.0], vec![3.0]]);
        let text = render_metric_table("T", &["only".into()], &["1".into(), "2".into()], &scores);
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("only"));
        assert!(last.ends_with("2.5"));
    }
}
