use crate::cpd::{DelayWeights, ModelConfig};
use crate::ingest::{CellIdx, TrialDataset};

use super::queries::{lca_frame, Query, TreeKind};
use super::{InferenceError, ModelSession};

/// Floor of the maturity-bias normaliser.
pub const BIAS_EPSILON: f64 = 1e-9;

/// Probability that a cell is mature `e` frames after its lineage acquired
/// the gene, for `e` in `0..=horizon`, as implied by the network's delay edges.
///
/// Every gene-bearing ancestor re-fires its delay edges into each later
/// maturation variable, so staying immature through frame `e` has
/// probability `prod_{e' <= e} S(e')` with `S` the delay survival function.
pub fn maturation_curve(weights: &DelayWeights, horizon: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon + 1);
    let mut immature = 1.0_f64;
    for e in 0..=horizon {
        immature *= weights.survival(e as i64);
        out.push(1.0 - immature);
    }
    out
}

/// Maturity-bias normaliser of every query of a trial under one model, keyed
/// by query id. Independent of the model's correction flag.
pub fn maturity_bias_normalizer(
    dataset: &TrialDataset,
    config: &ModelConfig,
) -> Result<Vec<(String, f64)>, InferenceError> {
    let session = ModelSession::new(dataset, config)?;
    Ok(session
        .queries()
        .iter()
        .map(|q| (q.id.clone(), session.bias_normalizer(q)))
        .collect())
}

impl ModelSession<'_> {
    /// Naive maturity of a conjugation source: donor trees 1, silent
    /// recipient trees 0, transconjugant trees averaged over a uniform
    /// acquisition frame inside each threshold event's implied window.
    pub(crate) fn naive_maturity(&self, src: CellIdx) -> f64 {
        match self.structure.tree_kind(src) {
            TreeKind::Donor => 1.0,
            TreeKind::Recipient => 0.0,
            TreeKind::Transconjugant => {
                let root = self.structure.root[src.0];
                let t = self.dataset.frame_of(src);
                let mut best = 0.0_f64;
                for &k in &self.structure.thresholds_by_root[&root] {
                    let Some(q) = self.query_for(k) else { continue };
                    let Some((lo, hi)) = q.window else { continue };
                    let Some(lca) = lca_frame(self.dataset, src, k) else { continue };
                    let n = (hi - lo + 1) as f64;
                    let sum: f64 = (lo..=hi.min(lca)).map(|tau| self.maturity[t - tau]).sum();
                    best = best.max(sum / n);
                }
                best
            }
        }
    }

    /// Sum of naive maturities over every contact into the focal lineage
    /// inside the query window, floored at [`BIAS_EPSILON`].
    pub fn bias_normalizer(&self, query: &Query) -> f64 {
        let Some((lo, hi)) = query.window else {
            return BIAS_EPSILON;
        };
        let focal_root = self.structure.root[query.threshold_cell.0];
        let mut total = 0.0;
        for frame in lo..=hi {
            let cell = query.path[query.path_pos(frame)];
            for (src, _) in self.conjugation_in(cell) {
                if self.structure.root[src.0] != focal_root {
                    total += self.naive_maturity(src);
                }
            }
        }
        total.max(BIAS_EPSILON)
    }
}
