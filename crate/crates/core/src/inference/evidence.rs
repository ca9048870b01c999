use std::collections::{BTreeMap, BTreeSet};

use crate::cpd::ModelConfig;
use crate::graph::VarId;
use crate::ingest::{CellIdx, TrialDataset};

use super::queries::{Query, TreeKind, TrialStructure};

/// A non-focal threshold event: the lineage path to the threshold cell and,
/// for every path position, the likelihood of the observed threshold time if
/// the gene first arrived there.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftFactor {
    pub threshold_cell: CellIdx,
    pub path: Vec<CellIdx>,
    pub likelihood: Vec<f64>,
}

impl SoftFactor {
    /// Likelihood given the gene states along the path.
    pub fn value(&self, gene_on: impl Fn(CellIdx) -> bool) -> f64 {
        self.path
            .iter()
            .position(|&c| gene_on(c))
            .map_or(0.0, |i| self.likelihood[i])
    }

    /// Path positions `(first, last)` with non-zero likelihood.
    pub fn support(&self) -> Option<(usize, usize)> {
        let first = self.likelihood.iter().position(|&l| l > 0.0)?;
        let last = self.likelihood.iter().rposition(|&l| l > 0.0)?;
        Some((first, last))
    }
}

/// Hard assignments plus soft threshold constraints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evidence {
    pub assignments: BTreeMap<VarId, bool>,
    pub soft: Vec<SoftFactor>,
    /// Cells of the focal lineage tree; never assigned.
    pub focal_cells: BTreeSet<CellIdx>,
}

/// Evidence for one query.
///
/// Donor trees: root gene and maturation on. Recipient trees that never
/// express: gene off everywhere. Other transconjugant trees: gene off in frame
/// 0 and one soft factor per threshold cell. The focal tree gets nothing.
pub fn assemble_evidence(dataset: &TrialDataset, query: &Query, config: &ModelConfig) -> Evidence {
    assemble_with(dataset, &TrialStructure::new(dataset), query, config)
}

pub(crate) fn assemble_with(
    dataset: &TrialDataset,
    structure: &TrialStructure,
    query: &Query,
    config: &ModelConfig,
) -> Evidence {
    let focal_root = structure.root[query.threshold_cell.0];
    let mut ev = Evidence::default();
    for i in 0..dataset.cells.len() {
        let c = CellIdx(i);
        let root = structure.root[i];
        if root == focal_root {
            ev.focal_cells.insert(c);
            continue;
        }
        match structure.tree_kind(c) {
            TreeKind::Donor => {
                if root == c {
                    ev.assignments.insert(VarId::gene(c), true);
                    ev.assignments.insert(VarId::maturation(c), true);
                }
            }
            TreeKind::Recipient => {
                ev.assignments.insert(VarId::gene(c), false);
            }
            TreeKind::Transconjugant => {
                if dataset.frame_of(c) == 0 {
                    ev.assignments.insert(VarId::gene(c), false);
                }
            }
        }
    }
    let dt = dataset.frame_interval_min;
    for (&root, cells) in &structure.thresholds_by_root {
        if root == focal_root {
            continue;
        }
        for &k in cells {
            let path = dataset.path_to(k);
            let t = dataset.frame_of(k) as i64;
            let likelihood = path
                .iter()
                .map(|&c| config.expression_delay.frame_pmf(t - dataset.frame_of(c) as i64, dt))
                .collect();
            ev.soft.push(SoftFactor {
                threshold_cell: k,
                path,
                likelihood,
            });
        }
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrientedBox, Vec2};
    use crate::ingest::{CellObservation, CellType};

    fn trial() -> TrialDataset {
        // donor D, focal recipient F lighting at 30, second transconjugant T at 34, plain recipient R
        let mut cells = Vec::new();
        for f in 0..=40u32 {
            for (id, lit) in [("D", Some(0)), ("F", Some(30)), ("T", Some(34)), ("R", None)] {
                let on = lit.is_some_and(|l| f >= l);
                let label = match (id, on) {
                    ("D", _) => CellType::Donor,
                    (_, true) => CellType::Transconjugant,
                    _ => CellType::Recipient,
                };
                cells.push(CellObservation {
                    cell_id: id.into(),
                    frame: f,
                    time_min: f as f64 * 5.0,
                    parent_id: (f > 0).then(|| id.to_string()),
                    bbox: OrientedBox::new(Vec2::new(0.0, 0.0), 1.0, 0.5, 0.0),
                    label,
                    rfp_above_threshold: on,
                });
            }
        }
        TrialDataset::from_observations("t", 5.0, cells).unwrap()
    }

    #[test]
    fn focal_tree_never_assigned_and_transconjugants_stay_latent() {
        let d = trial();
        let model = crate::cpd::default_model_grid()[0].clone();
        let queries = super::super::enumerate_queries(&d, &model);
        assert_eq!(queries.len(), 2);
        let ev = assemble_evidence(&d, &queries[0], &model);
        assert!(ev.assignments.keys().all(|v| !ev.focal_cells.contains(&v.cell)));
        let t_cells: Vec<CellIdx> = (0..d.cells.len()).map(CellIdx).filter(|&c| d.cell(c).cell_id == "T").collect();
        let assigned: Vec<&VarId> = ev.assignments.keys().filter(|v| t_cells.contains(&v.cell)).collect();
        assert_eq!(assigned, vec![&VarId::gene(t_cells[0])]);
        assert_eq!(ev.soft.len(), 1);
        let (first, last) = ev.soft[0].support().unwrap();
        assert_eq!((first, last), (34 - 30, 34 - 6));
        let d_root = t_cells[0].0 - 2;
        assert_eq!(ev.assignments.get(&VarId::maturation(CellIdx(d_root))), Some(&true));
    }
}
