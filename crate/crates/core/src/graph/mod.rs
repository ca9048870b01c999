//! Noisy-OR Bayesian network over per-cell gene and maturation variables.

mod prune;
mod topo;

pub use prune::{prune_for_query, PrunedNet};
pub use topo::assert_acyclic;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpd::{contact_raw_weight_with_separation, normalize_conjugation, CpdError, ModelConfig};
use crate::inference::{TreeKind, TrialStructure};
use crate::ingest::{CellIdx, TrialDataset};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cycle through {} variables: {}", witness.len(), fmt_witness(witness))]
    CyclicGraph { witness: Vec<VarId> },
    #[error("trial has no cells")]
    EmptyTrial,
    #[error("query target variable {0} is not in the network")]
    UnknownQueryTarget(usize),
    #[error("contacts detected up to {detected:?} um but the model needs {needed} um")]
    ContactRadius { needed: f64, detected: Option<f64> },
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error(transparent)]
    Cpd(#[from] CpdError),
}

fn fmt_witness(w: &[VarId]) -> String {
    w.iter().map(ToString::to_string).collect::<Vec<_>>().join(" -> ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Gene,
    Maturation,
}

impl VarKind {
    pub fn name(self) -> &'static str {
        match self {
            VarKind::Gene => "gene",
            VarKind::Maturation => "maturation",
        }
    }
}

/// One binary variable: a property of one cell observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId {
    pub cell: CellIdx,
    pub kind: VarKind,
}

impl VarId {
    pub fn gene(cell: CellIdx) -> Self {
        Self { cell, kind: VarKind::Gene }
    }

    pub fn maturation(cell: CellIdx) -> Self {
        Self {
            cell,
            kind: VarKind::Maturation,
        }
    }

    /// Dense index: gene and maturation of cell `c` are `2c` and `2c + 1`.
    pub fn index(self) -> usize {
        self.cell.0 * 2 + usize::from(self.kind == VarKind::Maturation)
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            cell: CellIdx(i / 2),
            kind: if i.is_multiple_of(2) { VarKind::Gene } else { VarKind::Maturation },
        }
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = if self.kind == VarKind::Gene { 'g' } else { 'm' };
        write!(f, "{k}({})", self.cell)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Lineage,
    Conjugation,
    Delay,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Lineage => "lineage",
            EdgeKind::Conjugation => "conjugation",
            EdgeKind::Delay => "delay",
        }
    }
}

/// A Noisy-OR parent of some variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parent {
    pub var: usize,
    pub kind: EdgeKind,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: VarId,
    pub dst: VarId,
    pub kind: EdgeKind,
    pub weight: f64,
}

/// Parent-major Noisy-OR network. Variable `i` is [`VarId::from_index`]`(i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesNet {
    labels: Vec<String>,
    parents: Vec<Vec<Parent>>,
    /// Conjugation weights that hit the clamp at 1.
    pub clamped: usize,
}

impl BayesNet {
    /// Network with two unconnected variables per cell; `labels` names the cells.
    pub fn with_cells(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            parents: vec![Vec::new(); 2 * n],
            clamped: 0,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.labels.len()
    }

    pub fn var_count(&self) -> usize {
        self.parents.len()
    }

    pub fn cell_label(&self, cell: CellIdx) -> &str {
        &self.labels[cell.0]
    }

    pub fn parents(&self, var: usize) -> &[Parent] {
        &self.parents[var]
    }

    /// Adds `src -> dst`. Rejects weights outside `(0, 1]` and duplicate parents.
    pub fn add_edge(&mut self, src: VarId, dst: VarId, kind: EdgeKind, weight: f64) -> Result<(), GraphError> {
        let (s, d) = (src.index(), dst.index());
        if s >= self.var_count() || d >= self.var_count() {
            return Err(GraphError::InvalidEdge(format!("{src} -> {dst} references a missing cell")));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(GraphError::InvalidEdge(format!("{src} -> {dst} has weight {weight}")));
        }
        if self.parents[d].iter().any(|p| p.var == s) {
            return Err(GraphError::InvalidEdge(format!("{src} -> {dst} added twice")));
        }
        self.parents[d].push(Parent { var: s, kind, weight });
        Ok(())
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.parents.iter().enumerate().flat_map(|(d, ps)| {
            ps.iter().map(move |p| Edge {
                src: VarId::from_index(p.var),
                dst: VarId::from_index(d),
                kind: p.kind,
                weight: p.weight,
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges().filter(|e| e.kind == kind).count()
    }

    /// Child lists, derived from the parent lists.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.var_count()];
        for (d, ps) in self.parents.iter().enumerate() {
            for p in ps {
                out[p.var].push(d);
            }
        }
        out
    }

    /// One edge per line: `src_cell,src_kind,dst_cell,dst_kind,kind,weight`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "src_cell,src_kind,dst_cell,dst_kind,kind,weight")?;
        let mut edges: Vec<Edge> = self.edges().collect();
        edges.sort_by_key(|a| (a.dst, a.src));
        for e in edges {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.labels[e.src.cell.0],
                e.src.kind.name(),
                self.labels[e.dst.cell.0],
                e.dst.kind.name(),
                e.kind.name(),
                e.weight
            )?;
        }
        Ok(())
    }
}

/// Knobs for [`build_network_with`] that are not part of a model variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    /// Multiplies every raw conjugation weight before normalisation.
    pub raw_weight_scale: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { raw_weight_scale: 1.0 }
    }
}

pub fn build_network(dataset: &TrialDataset, config: &ModelConfig) -> Result<BayesNet, GraphError> {
    build_network_with(dataset, config, &BuildOptions::default())
}

/// Builds the network of one trial under one model variant.
///
/// Edges: lineage `g -> g` and `m -> m` to every effective child; conjugation
/// `m(src) -> g(dst)` for every in-range contact pair whose target is not
/// expressing; delay `g(ancestor) -> m(descendant)` for every non-zero
/// maturation weight, except inside donor trees whose maturity is given.
pub fn build_network_with(
    dataset: &TrialDataset,
    config: &ModelConfig,
    opts: &BuildOptions,
) -> Result<BayesNet, GraphError> {
    if dataset.cells.is_empty() {
        return Err(GraphError::EmptyTrial);
    }
    config.validate(dataset.frame_interval_min)?;
    match dataset.contact_radius {
        Some(r) if r + 1e-12 >= config.contact_range => {}
        detected => {
            return Err(GraphError::ContactRadius {
                needed: config.contact_range,
                detected,
            })
        }
    }
    let structure = TrialStructure::new(dataset);
    let labels = (0..dataset.cells.len()).map(|i| dataset.describe(CellIdx(i))).collect();
    let mut net = BayesNet::with_cells(labels);

    for i in 0..dataset.cells.len() {
        let c = CellIdx(i);
        if let Some(p) = dataset.effective_parent(c) {
            net.add_edge(VarId::gene(p), VarId::gene(c), EdgeKind::Lineage, 1.0)?;
            net.add_edge(VarId::maturation(p), VarId::maturation(c), EdgeKind::Lineage, 1.0)?;
        }
    }

    let mut raw = Vec::new();
    for frame in &dataset.contact_candidates {
        for cand in frame {
            if cand.distance > config.contact_range {
                continue;
            }
            for (src, dst) in [(cand.a, cand.b), (cand.b, cand.a)] {
                if dataset.is_expressing(dst) {
                    continue;
                }
                let w = contact_raw_weight_with_separation(
                    &dataset.cell(src).bbox,
                    &dataset.cell(dst).bbox,
                    config.contact_fn,
                    config.contact_range,
                    cand.distance,
                ) * opts.raw_weight_scale;
                if w > 0.0 {
                    raw.push((src, dst, w));
                }
            }
        }
    }
    if raw.is_empty() {
        log::info!("trial {}: model {} admits no conjugation edges", dataset.trial_id, config.name);
    } else {
        let budget = config
            .normalization_budget
            .unwrap_or_else(|| structure.threshold_cells.len().max(1) as f64);
        let weights: Vec<f64> = raw.iter().map(|r| r.2).collect();
        let norm = normalize_conjugation(&weights, budget)?;
        net.clamped = norm.clamped;
        for (&(src, dst, _), w) in raw.iter().zip(norm.weights) {
            if w > 0.0 {
                net.add_edge(VarId::maturation(src), VarId::gene(dst), EdgeKind::Conjugation, w)?;
            }
        }
    }

    let mat = config.maturation_delay.weights(dataset.frame_interval_min)?;
    let nonzero: Vec<(u32, f64)> = mat.nonzero().collect();
    if let Some(&(max_d, _)) = nonzero.last() {
        for i in 0..dataset.cells.len() {
            let c = CellIdx(i);
            if structure.tree_kind(c) == TreeKind::Donor {
                continue;
            }
            let mut next = nonzero.iter().peekable();
            for (d, anc) in dataset.ancestors(c).enumerate() {
                let d = d as u32 + 1;
                if d > max_d {
                    break;
                }
                while next.peek().is_some_and(|&&(k, _)| k < d) {
                    next.next();
                }
                if let Some(&&(k, alpha)) = next.peek() {
                    if k == d {
                        net.add_edge(VarId::gene(anc), VarId::maturation(c), EdgeKind::Delay, alpha)?;
                    }
                }
            }
        }
    }
    assert_acyclic(&net)?;
    Ok(net)
}
