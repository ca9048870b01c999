use super::{CellIdx, CellType, IngestWarning, LossEvent, TrialDataset};

/// Widest expression-delay range over all model variants that will share the
/// dataset: the smallest lower bound and the largest upper bound, in minutes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpressionEnvelope {
    pub min_lower: f64,
    pub max_upper: f64,
}

impl Default for ExpressionEnvelope {
    fn default() -> Self {
        Self {
            min_lower: 30.0,
            max_upper: 150.0,
        }
    }
}

/// Pushes Donor and Transconjugant labels down every lineage.
///
/// Plasmid-lost lineages are skipped because their link to the parent is
/// severed. A Recipient parent with a Donor child is a tracking artefact we
/// cannot resolve; it is logged and left as given.
pub fn propagate_labels(mut dataset: TrialDataset) -> TrialDataset {
    for i in 0..dataset.cells.len() {
        let idx = CellIdx(i);
        let Some(p) = dataset.effective_parent(idx) else {
            continue;
        };
        let parent_label = dataset.cells[p.0].label;
        let own = dataset.cells[i].label;
        let target = match (parent_label, own) {
            (CellType::Donor, CellType::Donor) => None,
            (CellType::Donor, _) => Some(CellType::Donor),
            (CellType::Transconjugant, CellType::Transconjugant) => None,
            (CellType::Transconjugant, _) => Some(CellType::Transconjugant),
            (CellType::Recipient, CellType::Donor) => {
                let c = &dataset.cells[i];
                log::warn!(
                    "trial {}: recipient parent has donor child {} at frame {}; keeping label",
                    dataset.trial_id,
                    c.cell_id,
                    c.frame
                );
                dataset.warnings.push(IngestWarning::LabelFlip {
                    cell_id: c.cell_id.clone(),
                    frame: c.frame,
                });
                None
            }
            (CellType::Recipient, _) => None,
        };
        if let Some(to) = target {
            let c = &mut dataset.cells[i];
            log::warn!(
                "trial {}: relabelling {} at frame {} from {:?} to {:?}",
                dataset.trial_id,
                c.cell_id,
                c.frame,
                c.label,
                to
            );
            dataset.warnings.push(IngestWarning::Relabelled {
                cell_id: c.cell_id.clone(),
                frame: c.frame,
                from: c.label,
                to,
            });
            c.label = to;
        }
    }
    dataset
}

/// Severs daughter lineages that cannot have inherited the plasmid.
///
/// When one daughter's lineage reaches the threshold so late that even the
/// shortest expression delay places conjugation before the division, the
/// other daughter must have inherited the plasmid too. If that daughter's
/// lineage stays dark through the longest expression delay while still being
/// observed, it is marked plasmid-lost and disconnected from its parent.
pub fn repair_plasmid_loss(mut dataset: TrialDataset, envelope: ExpressionEnvelope) -> TrialDataset {
    let n = dataset.cells.len();
    let roots = dataset.effective_roots();

    // earliest expressing time and last observed time per effective subtree
    let mut first_expr = vec![f64::INFINITY; n];
    let mut last_seen = vec![0.0_f64; n];
    for i in (0..n).rev() {
        let idx = CellIdx(i);
        let t = dataset.cells[i].time_min;
        let mut fe = if dataset.is_expressing(idx) { t } else { f64::INFINITY };
        let mut ls = t;
        for c in dataset.effective_children(idx) {
            fe = fe.min(first_expr[c.0]);
            ls = ls.max(last_seen[c.0]);
        }
        first_expr[i] = fe;
        last_seen[i] = ls;
    }

    let mut newly_lost = Vec::new();
    for i in 0..n {
        let idx = CellIdx(i);
        let root = roots[i];
        if dataset.is_expressing(root) || dataset.is_expressing(idx) {
            continue;
        }
        if dataset.ancestors(idx).any(|a| dataset.is_expressing(a)) {
            continue;
        }
        let kids: Vec<CellIdx> = dataset.effective_children(idx).collect();
        if kids.len() != 2 {
            continue;
        }
        let division_time = dataset.cells[kids[0].0].time_min;
        for (lit, dark) in [(kids[0], kids[1]), (kids[1], kids[0])] {
            let t_lit = first_expr[lit.0];
            if !t_lit.is_finite() {
                continue;
            }
            let latest_conjugation = t_lit - envelope.min_lower;
            if latest_conjugation >= division_time {
                continue;
            }
            let deadline = latest_conjugation + envelope.max_upper;
            if first_expr[dark.0] > deadline && last_seen[dark.0] >= deadline {
                newly_lost.push(dark);
            }
        }
    }

    for cell in newly_lost {
        if dataset.lost[cell.0] {
            continue;
        }
        let c = &dataset.cells[cell.0];
        log::warn!(
            "trial {}: lineage of {} assumed to have lost the plasmid at frame {}",
            dataset.trial_id,
            c.cell_id,
            c.frame
        );
        dataset.warnings.push(IngestWarning::PlasmidLoss {
            cell_id: c.cell_id.clone(),
            frame: c.frame,
        });
        dataset.loss_events.push(LossEvent {
            cell,
            cell_id: c.cell_id.clone(),
            frame: c.frame,
        });
        dataset.lost[cell.0] = true;
    }
    dataset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrientedBox, Vec2};
    use crate::ingest::CellObservation;

    fn obs(id: &str, frame: u32, parent: Option<&str>, label: CellType, rfp: bool) -> CellObservation {
        CellObservation {
            cell_id: id.into(),
            frame,
            time_min: frame as f64 * 5.0,
            parent_id: parent.map(Into::into),
            bbox: OrientedBox::new(Vec2::new(0.0, 0.0), 1.0, 0.5, 0.0),
            label,
            rfp_above_threshold: rfp,
        }
    }

    /// Single cell `id` followed from `from` to `to` inclusive, ids `id`.
    fn track(out: &mut Vec<CellObservation>, id: &str, parent: Option<&str>, from: u32, to: u32, label: CellType, rfp_from: Option<u32>) {
        for f in from..=to {
            let p = if f == from { parent } else { Some(id) };
            let rfp = rfp_from.is_some_and(|r| f >= r);
            let l = if rfp && label == CellType::Recipient { CellType::Transconjugant } else { label };
            out.push(obs(id, f, p, l, rfp));
        }
    }

    #[test]
    fn transconjugant_label_reaches_all_descendants() {
        let mut cells = Vec::new();
        track(&mut cells, "R", None, 0, 10, CellType::Recipient, Some(10));
        track(&mut cells, "R1", Some("R"), 11, 12, CellType::Recipient, None);
        track(&mut cells, "R2", Some("R"), 11, 12, CellType::Recipient, None);
        let d = TrialDataset::from_observations("t", 5.0, cells).unwrap();
        let d = propagate_labels(d);
        let desc: Vec<_> = d.cells.iter().filter(|c| c.frame > 10).collect();
        assert_eq!(desc.len(), 4);
        assert!(desc.iter().all(|c| c.label == CellType::Transconjugant));
        assert_eq!(d.warnings.iter().filter(|w| matches!(w, IngestWarning::Relabelled { .. })).count(), 4);
    }

    #[test]
    fn no_transconjugants_is_identity() {
        let mut cells = Vec::new();
        track(&mut cells, "R", None, 0, 4, CellType::Recipient, None);
        track(&mut cells, "D", None, 0, 4, CellType::Donor, Some(0));
        let d = TrialDataset::from_observations("t", 5.0, cells).unwrap();
        assert_eq!(propagate_labels(d.clone()), d);
    }

    #[test]
    fn donor_label_overrides_recipient_descendants() {
        let mut cells = vec![obs("D", 0, None, CellType::Donor, true)];
        cells.push(obs("D", 1, Some("D"), CellType::Recipient, false));
        cells.push(obs("D", 2, Some("D"), CellType::Recipient, false));
        let d = propagate_labels(TrialDataset::from_observations("t", 5.0, cells).unwrap());
        assert!(d.cells.iter().all(|c| c.label == CellType::Donor));
        assert_eq!(d.warnings.len(), 2);
    }

    fn division_trial(b_lights_at: Option<u32>) -> TrialDataset {
        // parent P divides at frame 5 (25 min); A lights up at frame 10 (50 min)
        let mut cells = Vec::new();
        track(&mut cells, "P", None, 0, 4, CellType::Recipient, None);
        track(&mut cells, "A", Some("P"), 5, 60, CellType::Recipient, Some(10));
        track(&mut cells, "B", Some("P"), 5, 60, CellType::Recipient, b_lights_at);
        TrialDataset::from_observations("t", 5.0, cells).unwrap()
    }

    #[test]
    fn dark_daughter_is_marked_lost() {
        // A reaches threshold at 50 min; latest conjugation 20 min < division at 25 min.
        // Deadline 20 + 150 = 170 min; B is observed until 300 min without lighting up.
        let d = propagate_labels(division_trial(None));
        let d = repair_plasmid_loss(d, ExpressionEnvelope::default());
        assert_eq!(d.loss_events.len(), 1);
        assert_eq!(d.loss_events[0].cell_id, "B");
        assert_eq!(d.loss_events[0].frame, 5);
        let b5 = d.cells.iter().position(|c| c.cell_id == "B" && c.frame == 5).unwrap();
        assert_eq!(d.effective_parent(CellIdx(b5)), None);
        // idempotent
        let again = repair_plasmid_loss(d.clone(), ExpressionEnvelope::default());
        assert_eq!(again, d);
    }

    #[test]
    fn both_daughters_lit_means_no_loss() {
        let d = propagate_labels(division_trial(Some(11)));
        let d = repair_plasmid_loss(d, ExpressionEnvelope::default());
        assert!(d.loss_events.is_empty());
    }

    #[test]
    fn late_threshold_does_not_imply_prior_conjugation() {
        // A lights up at 300 min: conjugation may have happened after division
        let mut cells = Vec::new();
        track(&mut cells, "P", None, 0, 4, CellType::Recipient, None);
        track(&mut cells, "A", Some("P"), 5, 70, CellType::Recipient, Some(60));
        track(&mut cells, "B", Some("P"), 5, 70, CellType::Recipient, None);
        let d = TrialDataset::from_observations("t", 5.0, cells).unwrap();
        assert!(repair_plasmid_loss(d, ExpressionEnvelope::default()).loss_events.is_empty());
    }

    #[test]
    fn no_divisions_no_loss() {
        let mut cells = Vec::new();
        track(&mut cells, "R", None, 0, 40, CellType::Recipient, Some(20));
        let d = TrialDataset::from_observations("t", 5.0, cells).unwrap();
        assert!(repair_plasmid_loss(d, ExpressionEnvelope::default()).loss_events.is_empty());
    }
}
