//! Conjugation-event queries and the two inference backends.

mod evidence;
mod exact;
mod factored;
pub mod maturity;
mod queries;

pub use evidence::{assemble_evidence, Evidence, SoftFactor};
pub use exact::{ExactOptions, ExactOutcome};
pub use maturity::{maturation_curve, maturity_bias_normalizer, BIAS_EPSILON};
pub use queries::{enumerate_queries, implied_window, lca_frame, Query, TreeKind, TrialStructure};

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpd::{CpdError, ModelConfig};
use crate::graph::{assert_acyclic, build_network_with, BayesNet, BuildOptions, EdgeKind, GraphError, VarId};
use crate::ingest::{CellIdx, TrialDataset};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cpd(#[from] CpdError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryStatus {
    Ok,
    Impossible,
    Incalculable,
}

impl fmt::Display for QueryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryStatus::Ok => "ok",
            QueryStatus::Impossible => "impossible",
            QueryStatus::Incalculable => "incalculable",
        })
    }
}

impl std::str::FromStr for QueryStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ok" => Ok(QueryStatus::Ok),
            "impossible" => Ok(QueryStatus::Impossible),
            "incalculable" => Ok(QueryStatus::Incalculable),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Factored,
    /// Exact when the pruned query fits the latent limit, otherwise factored.
    Auto,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Factored => "factored",
            Backend::Auto => "auto",
        })
    }
}

/// Per-query resource limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub seconds: f64,
    /// Cost-model units: `2^latent * variables` for exact, edges visited for factored.
    pub cost: f64,
    pub latent_limit: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            seconds: 60.0,
            cost: 8e9,
            latent_limit: 22,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryResult {
    pub trial_id: String,
    pub model: String,
    pub query_cell: String,
    pub threshold_min: f64,
    pub status: QueryStatus,
    /// Natural log; `-inf` iff impossible, NaN when incalculable.
    pub log_prob: f64,
    pub elapsed_ms: u64,
    pub peak_cost: f64,
    /// Backend that produced the value.
    pub backend: Backend,
    pub note: Option<String>,
}

/// Everything shared by the queries of one (trial, model) pair.
pub struct ModelSession<'a> {
    pub dataset: &'a TrialDataset,
    pub config: ModelConfig,
    pub net: BayesNet,
    pub structure: TrialStructure,
    /// Topological order of the full network.
    pub order: Vec<usize>,
    /// Network-implied maturity after `e` frames, `e = 0..=frame_count`.
    pub maturity: Vec<f64>,
    queries: Vec<Query>,
    query_by_cell: HashMap<CellIdx, usize>,
    conj_out: Vec<Vec<(CellIdx, f64)>>,
}

impl<'a> ModelSession<'a> {
    pub fn new(dataset: &'a TrialDataset, config: &ModelConfig) -> Result<Self, InferenceError> {
        Self::with_options(dataset, config, &BuildOptions::default())
    }

    pub fn with_options(
        dataset: &'a TrialDataset,
        config: &ModelConfig,
        opts: &BuildOptions,
    ) -> Result<Self, InferenceError> {
        let net = build_network_with(dataset, config, opts)?;
        let order = assert_acyclic(&net)?;
        let structure = TrialStructure::new(dataset);
        let weights = config.maturation_delay.weights(dataset.frame_interval_min)?;
        let maturity = maturation_curve(&weights, dataset.frame_count());
        let queries = queries::queries_for(dataset, &structure, config);
        let query_by_cell = queries.iter().enumerate().map(|(i, q)| (q.threshold_cell, i)).collect();
        let mut conj_out = vec![Vec::new(); dataset.cells.len()];
        for e in net.edges().filter(|e| e.kind == EdgeKind::Conjugation) {
            conj_out[e.src.cell.0].push((e.dst.cell, e.weight));
        }
        Ok(Self {
            dataset,
            config: config.clone(),
            net,
            structure,
            order,
            maturity,
            queries,
            query_by_cell,
            conj_out,
        })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn query_for(&self, threshold_cell: CellIdx) -> Option<&Query> {
        self.query_by_cell.get(&threshold_cell).map(|&i| &self.queries[i])
    }

    pub fn evidence(&self, query: &Query) -> Evidence {
        evidence::assemble_with(self.dataset, &self.structure, query, &self.config)
    }

    /// Conjugation parents of a cell's gene variable: `(source cell, weight)`.
    pub fn conjugation_in(&self, cell: CellIdx) -> impl Iterator<Item = (CellIdx, f64)> + '_ {
        self.net
            .parents(VarId::gene(cell).index())
            .iter()
            .filter(|p| p.kind == EdgeKind::Conjugation)
            .map(|p| (VarId::from_index(p.var).cell, p.weight))
    }

    pub fn conjugation_out(&self, cell: CellIdx) -> &[(CellIdx, f64)] {
        &self.conj_out[cell.0]
    }

    /// Exact probability (linear, before bias correction).
    pub fn exact(&self, query: &Query, opts: &ExactOptions) -> ExactOutcome {
        exact::exact_linear(self, query, &self.evidence(query), opts)
    }

    /// Factored log-probability (before bias correction) and its cost.
    pub fn factored(&self, query: &Query, deadline: Option<Instant>, cost_limit: f64) -> Result<(f64, f64), String> {
        factored::factored_log(self, query, deadline, cost_limit)
    }

    /// Scores one query with the chosen backend, applying bias correction.
    pub fn evaluate(&self, query: &Query, backend: Backend, budgets: &Budgets) -> QueryResult {
        let start = Instant::now();
        let deadline = start + Duration::from_secs_f64(budgets.seconds.max(0.0));
        let mut result = QueryResult {
            trial_id: self.dataset.trial_id.clone(),
            model: self.config.name.clone(),
            query_cell: query.id.clone(),
            threshold_min: query.threshold_min,
            status: QueryStatus::Impossible,
            log_prob: f64::NEG_INFINITY,
            elapsed_ms: 0,
            peak_cost: 0.0,
            backend: if backend == Backend::Auto { Backend::Exact } else { backend },
            note: None,
        };
        if query.window.is_none() {
            result.note = Some("empty conjugation window".into());
            result.elapsed_ms = start.elapsed().as_millis() as u64;
            return result;
        }
        let mut raw: Result<f64, String> = Err(String::new());
        if backend != Backend::Factored {
            let opts = ExactOptions {
                latent_limit: budgets.latent_limit,
                prune: true,
                deadline: Some(deadline),
                cost_limit: budgets.cost,
            };
            raw = match self.exact(query, &opts) {
                ExactOutcome::Probability { value, cost } => {
                    result.peak_cost = cost;
                    Ok(value.ln())
                }
                ExactOutcome::Inconsistent => Err("evidence has zero probability".into()),
                ExactOutcome::TooManyLatents(n) => Err(format!("{n} latent variables exceed the limit")),
                ExactOutcome::OverBudget(why) => Err(why),
            };
            if backend == Backend::Auto && raw.is_err() {
                result.backend = Backend::Factored;
            }
        }
        if result.backend == Backend::Factored {
            raw = self.factored(query, Some(deadline), budgets.cost).map(|(lp, cost)| {
                result.peak_cost = cost;
                lp
            });
        }
        match raw {
            Ok(lp) if lp == f64::NEG_INFINITY => {
                result.status = QueryStatus::Impossible;
            }
            Ok(mut lp) => {
                if self.config.maturity_bias_correction {
                    lp -= self.bias_normalizer(query).ln();
                }
                result.status = QueryStatus::Ok;
                result.log_prob = lp;
            }
            Err(why) => {
                result.status = QueryStatus::Incalculable;
                result.log_prob = f64::NAN;
                result.note = Some(why);
            }
        }
        result.elapsed_ms = start.elapsed().as_millis() as u64;
        result
    }
}

/// Exact enumeration of one query; `Ok(linear probability)`.
pub fn exact_query(session: &ModelSession, query: &Query, latent_limit: usize) -> ExactOutcome {
    session.exact(
        query,
        &ExactOptions {
            latent_limit,
            ..ExactOptions::default()
        },
    )
}

/// Factored log-probability of one query, without budgets.
pub fn factored_query(session: &ModelSession, query: &Query) -> f64 {
    session
        .factored(query, None, f64::INFINITY)
        .map(|r| r.0)
        .expect("unbounded factored evaluation cannot fail")
}
