use std::collections::BTreeMap;

use serde::Serialize;

use crate::cpd::{DelayModel, ModelConfig};
use crate::ingest::{CellIdx, CellType, TrialDataset};

/// What an effective lineage tree contributes as evidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum TreeKind {
    /// Rooted in a donor or an already-expressing cell.
    Donor,
    /// Recipient-rooted and some cell reaches the expression threshold.
    Transconjugant,
    /// Recipient-rooted and never expressing.
    Recipient,
}

/// Lineage-tree classification of a trial, shared by all model variants.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialStructure {
    /// Effective root of every cell.
    pub root: Vec<CellIdx>,
    kind: BTreeMap<CellIdx, TreeKind>,
    /// First expressing cell of every recipient-rooted path, in index order.
    pub threshold_cells: Vec<CellIdx>,
    /// Threshold cells grouped by tree root.
    pub thresholds_by_root: BTreeMap<CellIdx, Vec<CellIdx>>,
}

impl TrialStructure {
    pub fn new(dataset: &TrialDataset) -> Self {
        let root = dataset.effective_roots();
        let mut kind = BTreeMap::new();
        for i in 0..dataset.cells.len() {
            let c = CellIdx(i);
            if root[i] == c {
                let donor = dataset.cell(c).label == CellType::Donor || dataset.is_expressing(c);
                kind.insert(c, if donor { TreeKind::Donor } else { TreeKind::Recipient });
            }
        }
        let mut threshold_cells = Vec::new();
        let mut thresholds_by_root: BTreeMap<CellIdx, Vec<CellIdx>> = BTreeMap::new();
        for i in 0..dataset.cells.len() {
            let c = CellIdx(i);
            if kind[&root[i]] == TreeKind::Donor || !dataset.is_expressing(c) {
                continue;
            }
            let parent_dark = dataset
                .effective_parent(c)
                .is_none_or(|p| !dataset.is_expressing(p));
            if parent_dark {
                threshold_cells.push(c);
                thresholds_by_root.entry(root[i]).or_default().push(c);
            }
        }
        for r in thresholds_by_root.keys() {
            kind.insert(*r, TreeKind::Transconjugant);
        }
        Self {
            root,
            kind,
            threshold_cells,
            thresholds_by_root,
        }
    }

    pub fn tree_kind(&self, c: CellIdx) -> TreeKind {
        self.kind[&self.root[c.0]]
    }

    pub fn same_tree(&self, a: CellIdx, b: CellIdx) -> bool {
        self.root[a.0] == self.root[b.0]
    }

    /// Roots of all effective trees with their kind.
    pub fn trees(&self) -> impl Iterator<Item = (CellIdx, TreeKind)> + '_ {
        self.kind.iter().map(|(r, k)| (*r, *k))
    }
}

/// Frame of the deepest common effective ancestor of two cells of one tree.
pub fn lca_frame(dataset: &TrialDataset, a: CellIdx, b: CellIdx) -> Option<usize> {
    let (mut a, mut b) = (a, b);
    loop {
        if a == b {
            return Some(dataset.frame_of(a));
        }
        let (fa, fb) = (dataset.frame_of(a), dataset.frame_of(b));
        if fa >= fb {
            a = dataset.effective_parent(a)?;
        } else {
            b = dataset.effective_parent(b)?;
        }
    }
}

/// One conjugation event to score: a recipient lineage reaching the
/// expression threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Query {
    /// `cell_id@frame` of the threshold cell.
    pub id: String,
    pub threshold_cell: CellIdx,
    pub threshold_frame: usize,
    pub threshold_min: f64,
    /// Effective root-to-threshold path, one cell per frame.
    pub path: Vec<CellIdx>,
    /// Implied conjugation frames, inclusive; `None` when empty.
    pub window: Option<(usize, usize)>,
    /// Expression-delay mass per window frame, renormalised over the window.
    pub pmf: Vec<f64>,
}

impl Query {
    pub fn new(dataset: &TrialDataset, threshold_cell: CellIdx, expression: &DelayModel) -> Self {
        let path = dataset.path_to(threshold_cell);
        let threshold_frame = dataset.frame_of(threshold_cell);
        let root_frame = dataset.frame_of(path[0]);
        let (window, pmf) = implied_window(
            expression,
            dataset.frame_interval_min,
            threshold_frame,
            root_frame,
            dataset.frame_count().saturating_sub(1),
        );
        Self {
            id: dataset.describe(threshold_cell),
            threshold_cell,
            threshold_frame,
            threshold_min: dataset.cell(threshold_cell).time_min,
            path,
            window,
            pmf,
        }
    }

    /// Position of `frame` on the path.
    pub fn path_pos(&self, frame: usize) -> usize {
        frame - (self.threshold_frame + 1 - self.path.len())
    }
}

/// Conjugation frames consistent with a threshold at `threshold_frame`, and
/// the renormalised expression mass on each.
pub fn implied_window(
    expression: &DelayModel,
    frame_interval: f64,
    threshold_frame: usize,
    first_frame: usize,
    last_frame: usize,
) -> (Option<(usize, usize)>, Vec<f64>) {
    let (lo_d, hi_d) = expression.pmf_frame_range(frame_interval);
    let t = threshold_frame as i64;
    let start = (t - hi_d).max(first_frame as i64);
    let end = (t - lo_d).min(last_frame as i64);
    if start > end {
        return (None, Vec::new());
    }
    let pmf: Vec<f64> = (start..=end)
        .map(|f| expression.frame_pmf(t - f, frame_interval))
        .collect();
    let total: f64 = pmf.iter().sum();
    if !(total > 0.0) {
        return (None, Vec::new());
    }
    (
        Some((start as usize, end as usize)),
        pmf.into_iter().map(|p| p / total).collect(),
    )
}

/// One query per threshold cell, in cell order.
pub fn enumerate_queries(dataset: &TrialDataset, config: &ModelConfig) -> Vec<Query> {
    let structure = TrialStructure::new(dataset);
    queries_for(dataset, &structure, config)
}

pub(crate) fn queries_for(dataset: &TrialDataset, structure: &TrialStructure, config: &ModelConfig) -> Vec<Query> {
    structure
        .threshold_cells
        .iter()
        .map(|&c| Query::new(dataset, c, &config.expression_delay))
        .collect()
}
