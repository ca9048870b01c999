//! Per-query results aggregated into model rankings.

mod render;

pub use render::{format_score, render_comparison, render_metric_csv, render_metric_table, render_report};

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::inference::{QueryResult, QueryStatus};
use crate::logspace::log_sum_exp;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("trial {0} has no queries left to rank")]
    EmptyTrial(String),
    #[error("no result for model {model} on query {query} of trial {trial}")]
    MissingResult { trial: String, model: String, query: String },
    #[error("no trials to rank")]
    NoTrials,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Entry {
    pub status: QueryStatus,
    pub log_prob: f64,
}

impl Entry {
    pub fn ok(log_prob: f64) -> Self {
        if log_prob == f64::NEG_INFINITY {
            Self::impossible()
        } else {
            Self {
                status: QueryStatus::Ok,
                log_prob,
            }
        }
    }

    pub fn impossible() -> Self {
        Self {
            status: QueryStatus::Impossible,
            log_prob: f64::NEG_INFINITY,
        }
    }

    pub fn incalculable() -> Self {
        Self {
            status: QueryStatus::Incalculable,
            log_prob: f64::NAN,
        }
    }

    /// Log-probability used for ranking; impossible maps to `-inf`.
    fn score(&self) -> f64 {
        match self.status {
            QueryStatus::Ok => self.log_prob,
            _ => f64::NEG_INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialTable {
    pub trial_id: String,
    pub queries: Vec<String>,
    /// `entries[query][model]`.
    pub entries: Vec<Vec<Entry>>,
}

/// Results of every model on every query, grouped by trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbTable {
    pub models: Vec<String>,
    pub trials: Vec<TrialTable>,
}

impl ProbTable {
    /// Arranges results; trials and queries keep first-seen order, models
    /// follow `models`.
    pub fn from_results(models: &[String], results: &[QueryResult]) -> Result<Self, RankingError> {
        let model_pos: HashMap<&str, usize> = models.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
        let mut trials: Vec<TrialTable> = Vec::new();
        let mut trial_pos: HashMap<&str, usize> = HashMap::new();
        let mut query_pos: Vec<HashMap<String, usize>> = Vec::new();
        let mut seen: Vec<Vec<Vec<bool>>> = Vec::new();
        for r in results {
            let Some(&m) = model_pos.get(r.model.as_str()) else { continue };
            let t = *trial_pos.entry(r.trial_id.as_str()).or_insert_with(|| {
                trials.push(TrialTable {
                    trial_id: r.trial_id.clone(),
                    queries: Vec::new(),
                    entries: Vec::new(),
                });
                query_pos.push(HashMap::new());
                seen.push(Vec::new());
                trials.len() - 1
            });
            let q = match query_pos[t].get(&r.query_cell) {
                Some(&q) => q,
                None => {
                    trials[t].queries.push(r.query_cell.clone());
                    trials[t].entries.push(vec![Entry::incalculable(); models.len()]);
                    seen[t].push(vec![false; models.len()]);
                    query_pos[t].insert(r.query_cell.clone(), trials[t].queries.len() - 1);
                    trials[t].queries.len() - 1
                }
            };
            trials[t].entries[q][m] = Entry {
                status: r.status,
                log_prob: r.log_prob,
            };
            seen[t][q][m] = true;
        }
        for (t, trial) in trials.iter().enumerate() {
            for (q, row) in seen[t].iter().enumerate() {
                if let Some(m) = row.iter().position(|&s| !s) {
                    return Err(RankingError::MissingResult {
                        trial: trial.trial_id.clone(),
                        model: models[m].clone(),
                        query: trial.queries[q].clone(),
                    });
                }
            }
        }
        Ok(Self {
            models: models.to_vec(),
            trials,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ExclusionReason {
    ImpossibleForAll,
    Incalculable,
}

impl ExclusionReason {
    pub fn name(self) -> &'static str {
        match self {
            ExclusionReason::ImpossibleForAll => "impossible_for_all",
            ExclusionReason::Incalculable => "incalculable",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exclusion {
    pub trial: String,
    pub query_cell: String,
    pub reason: ExclusionReason,
    pub models_affected: Vec<String>,
}

/// Drops queries impossible under every model or incalculable under any.
pub fn apply_exclusions(table: &ProbTable) -> (ProbTable, Vec<Exclusion>) {
    let mut out = ProbTable {
        models: table.models.clone(),
        trials: Vec::with_capacity(table.trials.len()),
    };
    let mut log = Vec::new();
    for trial in &table.trials {
        let mut kept = TrialTable {
            trial_id: trial.trial_id.clone(),
            queries: Vec::new(),
            entries: Vec::new(),
        };
        for (q, row) in trial.queries.iter().zip(&trial.entries) {
            let affected = |status: QueryStatus| -> Vec<String> {
                row.iter()
                    .zip(&table.models)
                    .filter(|(e, _)| e.status == status)
                    .map(|(_, m)| m.clone())
                    .collect()
            };
            let incalculable = affected(QueryStatus::Incalculable);
            let reason = if !incalculable.is_empty() {
                Some((ExclusionReason::Incalculable, incalculable))
            } else if row.iter().all(|e| e.status == QueryStatus::Impossible) {
                Some((ExclusionReason::ImpossibleForAll, table.models.clone()))
            } else {
                None
            };
            match reason {
                Some((reason, models_affected)) => {
                    log::info!("trial {}: excluding query {} ({})", trial.trial_id, q, reason.name());
                    log.push(Exclusion {
                        trial: trial.trial_id.clone(),
                        query_cell: q.clone(),
                        reason,
                        models_affected,
                    });
                }
                None => {
                    kept.queries.push(q.clone());
                    kept.entries.push(row.clone());
                }
            }
        }
        out.trials.push(kept);
    }
    (out, log)
}

/// Rank 1 for the largest value; tied values share the mean of their ranks.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Per-trial scores and their mean, per model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricScores {
    /// `per_trial[trial][model]`.
    pub per_trial: Vec<Vec<f64>>,
    pub average: Vec<f64>,
}

impl MetricScores {
    pub fn from_per_trial(per_trial: Vec<Vec<f64>>) -> Self {
        let k = per_trial.first().map_or(0, Vec::len);
        let n = per_trial.len() as f64;
        let average = (0..k)
            .map(|m| per_trial.iter().map(|row| row[m]).sum::<f64>() / n)
            .collect();
        Self { per_trial, average }
    }
}

fn check_nonempty(table: &ProbTable) -> Result<(), RankingError> {
    if table.trials.is_empty() {
        return Err(RankingError::NoTrials);
    }
    match table.trials.iter().find(|t| t.queries.is_empty()) {
        Some(t) => Err(RankingError::EmptyTrial(t.trial_id.clone())),
        None => Ok(()),
    }
}

/// Mean over trials of each model's mean per-query rank.
pub fn avg_trial_ranking(table: &ProbTable) -> Result<MetricScores, RankingError> {
    check_nonempty(table)?;
    let k = table.models.len();
    let per_trial = table
        .trials
        .iter()
        .map(|t| {
            let mut sum = vec![0.0; k];
            for row in &t.entries {
                let scores: Vec<f64> = row.iter().map(Entry::score).collect();
                for (s, r) in sum.iter_mut().zip(fractional_ranks(&scores)) {
                    *s += r;
                }
            }
            sum.into_iter().map(|s| s / t.queries.len() as f64).collect()
        })
        .collect();
    Ok(MetricScores::from_per_trial(per_trial))
}

/// How per-trial totals are formed for the total-probability ranking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TotalMode {
    /// Sum of probabilities.
    #[default]
    Linear,
    /// Sum of log-probabilities.
    LogSum,
}

/// Mean over trials of each model's rank by total probability in the trial.
pub fn total_prob_ranking(table: &ProbTable, mode: TotalMode) -> Result<MetricScores, RankingError> {
    check_nonempty(table)?;
    let k = table.models.len();
    let per_trial = table
        .trials
        .iter()
        .map(|t| {
            let totals: Vec<f64> = (0..k)
                .map(|m| {
                    let logs: Vec<f64> = t.entries.iter().map(|row| row[m].score()).collect();
                    match mode {
                        TotalMode::Linear => log_sum_exp(&logs),
                        TotalMode::LogSum => logs.iter().sum(),
                    }
                })
                .collect();
            fractional_ranks(&totals)
        })
        .collect();
    Ok(MetricScores::from_per_trial(per_trial))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub models: Vec<String>,
    pub trials: Vec<String>,
    pub avg_trial: MetricScores,
    pub total_prob: MetricScores,
    pub exclusions: Vec<Exclusion>,
    /// Trials with no query left after exclusions.
    pub skipped_trials: Vec<String>,
    /// Queries per trial after exclusions.
    pub query_counts: BTreeMap<String, usize>,
}

/// Exclusions, then both metrics over the trials that still have queries.
pub fn rank(table: &ProbTable, mode: TotalMode) -> Result<RankReport, RankingError> {
    let (mut filtered, exclusions) = apply_exclusions(table);
    let mut skipped_trials = Vec::new();
    filtered.trials.retain(|t| {
        if t.queries.is_empty() {
            log::warn!("trial {} has no rankable queries; skipped", t.trial_id);
            skipped_trials.push(t.trial_id.clone());
            false
        } else {
            true
        }
    });
    let avg_trial = avg_trial_ranking(&filtered)?;
    let total_prob = total_prob_ranking(&filtered, mode)?;
    Ok(RankReport {
        models: filtered.models.clone(),
        trials: filtered.trials.iter().map(|t| t.trial_id.clone()).collect(),
        query_counts: filtered.trials.iter().map(|t| (t.trial_id.clone(), t.queries.len())).collect(),
        avg_trial,
        total_prob,
        exclusions,
        skipped_trials,
    })
}
