//! Batch runs: manifests, per-trial evaluation and the artifacts written to
//! the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpd::{default_model_grid, read_model_grid, CpdError, ModelConfig};
use crate::inference::{Backend, Budgets, InferenceError, ModelSession, QueryResult, QueryStatus};
use crate::ingest::{
    detect_contact_candidates, propagate_labels, read_track_file, repair_plasmid_loss, ExpressionEnvelope,
    IngestError, TrialDataset, DEFAULT_FRAME_INTERVAL_MIN,
};
use crate::ranking::{
    rank, render_metric_csv, render_report, ProbTable, RankReport, RankingError, TotalMode,
};

pub const QUERY_RESULT_HEADER: [&str; 9] = [
    "trial_id",
    "model",
    "query_cell",
    "threshold_min",
    "status",
    "log_prob",
    "elapsed_ms",
    "backend",
    "note",
];
pub const EXCLUSION_HEADER: [&str; 4] = ["trial", "query_cell", "reason", "models_affected"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("trial {trial}: {source}")]
    Data {
        trial: String,
        #[source]
        source: IngestError,
    },
    #[error("trial {trial}, model {model}: {source}")]
    Inference {
        trial: String,
        model: String,
        #[source]
        source: InferenceError,
    },
    #[error(transparent)]
    Cpd(#[from] CpdError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn default_frame_interval() -> f64 {
    DEFAULT_FRAME_INTERVAL_MIN
}

/// One trial's tracks and timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialManifest {
    pub trial_id: String,
    #[serde(default = "default_frame_interval")]
    pub frame_interval_min: f64,
    pub track_path: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A full batch run. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Model-grid file; the built-in eight-model grid when absent.
    #[serde(default)]
    pub models: Option<PathBuf>,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub total_mode: TotalMode,
    #[serde(default)]
    pub trials: Vec<TrialManifest>,
}

fn default_backend() -> Backend {
    Backend::Auto
}

impl RunManifest {
    pub fn new(trials: Vec<TrialManifest>) -> Self {
        Self {
            models: None,
            backend: Backend::Auto,
            output_dir: default_output_dir(),
            jobs: None,
            budgets: Budgets::default(),
            total_mode: TotalMode::default(),
            trials,
        }
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a manifest file and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = m.models.as_mut() {
            rebase(p);
        }
        rebase(&mut m.output_dir);
        for t in &mut m.trials {
            rebase(&mut t.track_path);
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialises")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.trials.is_empty() {
            return Err(PipelineError::Config("manifest lists no trials".into()));
        }
        let mut ids: Vec<&str> = self.trials.iter().map(|t| t.trial_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(PipelineError::Config(format!("duplicate trial id {:?}", w[0])));
        }
        if self.jobs == Some(0) {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        if !(self.budgets.seconds > 0.0 && self.budgets.cost > 0.0) {
            return Err(PipelineError::Config("budgets must be positive".into()));
        }
        Ok(())
    }

    pub fn load_models(&self) -> Result<Vec<ModelConfig>, PipelineError> {
        let models = match &self.models {
            Some(p) => read_model_grid(p)?,
            None => default_model_grid(),
        };
        Ok(models)
    }
}

/// Label propagation, plasmid-loss repair and contact detection, sized for
/// every model in `models`.
pub fn prepare_dataset(raw: TrialDataset, models: &[ModelConfig]) -> TrialDataset {
    let envelope = if models.is_empty() {
        ExpressionEnvelope::default()
    } else {
        ExpressionEnvelope {
            min_lower: models.iter().map(|m| m.expression_delay.lower).fold(f64::INFINITY, f64::min),
            max_upper: models.iter().map(|m| m.expression_delay.upper).fold(0.0, f64::max),
        }
    };
    let radius = models.iter().map(|m| m.contact_range).fold(0.0, f64::max);
    let d = propagate_labels(raw);
    let d = repair_plasmid_loss(d, envelope);
    detect_contact_candidates(d, radius)
}

pub fn load_trial(trial: &TrialManifest, models: &[ModelConfig]) -> Result<TrialDataset, PipelineError> {
    let raw = read_track_file(&trial.track_path, &trial.trial_id, trial.frame_interval_min).map_err(|source| {
        PipelineError::Data {
            trial: trial.trial_id.clone(),
            source,
        }
    })?;
    Ok(prepare_dataset(raw, models))
}

/// Every query of every model on one trial, ordered by model then query.
pub fn evaluate_trial(
    dataset: &TrialDataset,
    models: &[ModelConfig],
    backend: Backend,
    budgets: &Budgets,
) -> Result<Vec<QueryResult>, PipelineError> {
    let sessions: Vec<ModelSession> = models
        .par_iter()
        .map(|m| {
            ModelSession::new(dataset, m).map_err(|source| PipelineError::Inference {
                trial: dataset.trial_id.clone(),
                model: m.name.clone(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let tasks: Vec<(usize, usize)> = sessions
        .iter()
        .enumerate()
        .flat_map(|(m, s)| (0..s.queries().len()).map(move |q| (m, q)))
        .collect();
    Ok(tasks
        .par_iter()
        .map(|&(m, q)| {
            let s = &sessions[m];
            s.evaluate(&s.queries()[q], backend, budgets)
        })
        .collect())
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        x.to_string()
    }
}

pub fn write_query_results<W: Write>(results: &[QueryResult], sink: W) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(QUERY_RESULT_HEADER)?;
    for r in results {
        w.write_record([
            r.trial_id.clone(),
            r.model.clone(),
            r.query_cell.clone(),
            fmt_f64(r.threshold_min),
            r.status.to_string(),
            fmt_f64(r.log_prob),
            r.elapsed_ms.to_string(),
            r.backend.to_string(),
            r.note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a query-result table; `backend` and `note` columns are optional.
pub fn read_query_results<R: Read>(source: R) -> Result<Vec<QueryResult>, PipelineError> {
    let mut rdr = csv::Reader::from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| PipelineError::Config(format!("query results lack column {name:?}")));
    let (ti, mo, qc, th, st, lp, el) = (
        need("trial_id")?,
        need("model")?,
        need("query_cell")?,
        need("threshold_min")?,
        need("status")?,
        need("log_prob")?,
        need("elapsed_ms")?,
    );
    let (be, no) = (col("backend"), col("note"));
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| PipelineError::Config(format!("query results row {}: bad {what}", row + 2));
        let get = |i: usize| rec.get(i).unwrap_or("");
        let backend = match be.map(get) {
            Some("exact") => Backend::Exact,
            Some("auto") => Backend::Auto,
            _ => Backend::Factored,
        };
        out.push(QueryResult {
            trial_id: get(ti).to_string(),
            model: get(mo).to_string(),
            query_cell: get(qc).to_string(),
            threshold_min: get(th).parse().map_err(|_| bad("threshold_min"))?,
            status: get(st).parse().map_err(|_| bad("status"))?,
            log_prob: get(lp).parse().map_err(|_| bad("log_prob"))?,
            elapsed_ms: get(el).parse().map_err(|_| bad("elapsed_ms"))?,
            peak_cost: 0.0,
            backend,
            note: no.map(get).filter(|s| !s.is_empty()).map(str::to_string),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StatusCounts {
    pub ok: usize,
    pub impossible: usize,
    pub incalculable: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial_id: String,
    pub frames: usize,
    pub observations: usize,
    pub queries: usize,
    pub plasmid_loss_events: usize,
    pub warnings: usize,
    pub status_by_model: BTreeMap<String, StatusCounts>,
}

/// Machine-readable run outcome; contains no timing so reruns are identical.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub backend: Backend,
    pub models: Vec<String>,
    pub trials: Vec<TrialSummary>,
    pub incalculable: usize,
    pub best_avg_trial: Vec<String>,
    pub best_total_prob: Vec<String>,
    pub report: RankReport,
}

fn best(models: &[String], averages: &[f64]) -> Vec<String> {
    let lo = averages.iter().copied().fold(f64::INFINITY, f64::min);
    models
        .iter()
        .zip(averages)
        .filter(|(_, &a)| a == lo)
        .map(|(m, _)| m.clone())
        .collect()
}

pub fn summarize_trial(dataset: &TrialDataset, models: &[ModelConfig], results: &[QueryResult]) -> TrialSummary {
    let mut status_by_model: BTreeMap<String, StatusCounts> =
        models.iter().map(|m| (m.name.clone(), StatusCounts::default())).collect();
    for r in results.iter().filter(|r| r.trial_id == dataset.trial_id) {
        let c = status_by_model.entry(r.model.clone()).or_default();
        match r.status {
            QueryStatus::Ok => c.ok += 1,
            QueryStatus::Impossible => c.impossible += 1,
            QueryStatus::Incalculable => c.incalculable += 1,
        }
    }
    let queries = status_by_model.values().next().map_or(0, |c| c.ok + c.impossible + c.incalculable);
    TrialSummary {
        trial_id: dataset.trial_id.clone(),
        frames: dataset.frame_count(),
        observations: dataset.cells.len(),
        queries,
        plasmid_loss_events: dataset.loss_events.len(),
        warnings: dataset.warnings.len(),
        status_by_model,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Rank report, both metric tables, exclusion log. Returns the report.
pub fn write_rank_artifacts(
    dir: &Path,
    models: &[String],
    results: &[QueryResult],
    mode: TotalMode,
) -> Result<RankReport, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let table = ProbTable::from_results(models, results)?;
    let report = rank(&table, mode)?;
    write_file(&dir.join("ranking.txt"), render_report(&report).as_bytes())?;
    write_file(
        &dir.join("avg_trial_ranking.csv"),
        render_metric_csv(&report.models, &report.trials, &report.avg_trial).as_bytes(),
    )?;
    write_file(
        &dir.join("total_prob_ranking.csv"),
        render_metric_csv(&report.models, &report.trials, &report.total_prob).as_bytes(),
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EXCLUSION_HEADER)?;
    for e in &report.exclusions {
        w.write_record([
            e.trial.as_str(),
            e.query_cell.as_str(),
            e.reason.name(),
            &e.models_affected.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Config(e.to_string()))?;
    write_file(&dir.join("exclusions.csv"), &bytes)?;
    Ok(report)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, PipelineError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| PipelineError::Config(e.to_string()))
}

/// Loads, evaluates and ranks every trial, writing all artifacts to
/// `manifest.output_dir`.
pub fn run(manifest: &RunManifest) -> Result<RunSummary, PipelineError> {
    manifest.validate()?;
    let models = manifest.load_models()?;
    let names: Vec<String> = models.iter().map(|m| m.name.clone()).collect();
    let out = &manifest.output_dir;
    let qdir = out.join("queries");
    fs::create_dir_all(&qdir).map_err(io_err(&qdir))?;
    let pool = thread_pool(manifest.jobs)?;
    let mut all = Vec::new();
    let mut trials = Vec::new();
    for t in &manifest.trials {
        log::info!("trial {}: loading {}", t.trial_id, t.track_path.display());
        let dataset = load_trial(t, &models)?;
        let results = pool.install(|| evaluate_trial(&dataset, &models, manifest.backend, &manifest.budgets))?;
        let mut buf = Vec::new();
        write_query_results(&results, &mut buf)?;
        write_file(&qdir.join(format!("{}.csv", t.trial_id)), &buf)?;
        trials.push(summarize_trial(&dataset, &models, &results));
        all.extend(results);
    }
    let incalculable = all.iter().filter(|r| r.status == QueryStatus::Incalculable).count();
    if incalculable > 0 {
        log::warn!("{incalculable} queries were incalculable; see the query result files");
    }
    let report = write_rank_artifacts(out, &names, &all, manifest.total_mode)?;
    let summary = RunSummary {
        backend: manifest.backend,
        models: names,
        trials,
        incalculable,
        best_avg_trial: best(&report.models, &report.avg_trial.average),
        best_total_prob: best(&report.models, &report.total_prob.average),
        report,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| PipelineError::Config(e.to_string()))?;
    write_file(&out.join("summary.json"), format!("{json}\n").as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_defaults() {
        let m = RunManifest::parse("[[trials]]\ntrial_id = \"a\"\ntrack_path = \"a.csv\"\n").unwrap();
        assert_eq!(m.backend, Backend::Auto);
        assert_eq!(m.trials[0].frame_interval_min, 5.0);
        assert_eq!(m.budgets, Budgets::default());
        m.validate().unwrap();
    }

    #[test]
    fn empty_trials_is_config_error() {
        let m = RunManifest::parse("backend = \"factored\"\n").unwrap();
        assert!(matches!(m.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunManifest::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = RunManifest::new(vec![TrialManifest {
            trial_id: "t".into(),
            frame_interval_min: 5.0,
            track_path: "t.csv".into(),
        }]);
        assert_eq!(RunManifest::parse(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn result_table_round_trip() {
        let mk = |status, log_prob: f64| QueryResult {
            trial_id: "t".into(),
            model: "m".into(),
            query_cell: "c@3".into(),
            threshold_min: 15.0,
            status,
            log_prob,
            elapsed_ms: 2,
            peak_cost: 0.0,
            backend: Backend::Exact,
            note: None,
        };
        let rows = vec![
            mk(QueryStatus::Ok, -1.25),
            mk(QueryStatus::Impossible, f64::NEG_INFINITY),
            mk(QueryStatus::Incalculable, f64::NAN),
        ];
        let mut buf = Vec::new();
        write_query_results(&rows, &mut buf).unwrap();
        let back = read_query_results(buf.as_slice()).unwrap();
        assert_eq!(back[0], rows[0]);
        assert_eq!(back[1], rows[1]);
        assert!(back[2].log_prob.is_nan());
    }
}
