use super::{CellIdx, ContactCandidate, TrialDataset};

/// Records every same-frame pair whose box separation is at most `max_radius`.
///
/// Pairs are stored once with `a < b`, sorted. `max_radius` must cover the
/// largest contact range of any model that will consume the dataset.
pub fn detect_contact_candidates(mut dataset: TrialDataset, max_radius: f64) -> TrialDataset {
    let mut all = Vec::with_capacity(dataset.frame_count());
    for frame in 0..dataset.frame_count() {
        // sweep along x over circumscribed circles
        let mut order: Vec<(f64, f64, CellIdx)> = dataset
            .cells_in_frame(frame)
            .map(|i| {
                let b = &dataset.cell(i).bbox;
                let r = b.bounding_radius();
                (b.center.x - r, b.center.x + r, i)
            })
            .collect();
        order.sort_by(|l, r| l.0.total_cmp(&r.0).then(l.2.cmp(&r.2)));
        let mut pairs = Vec::new();
        for (k, &(_, hi, a)) in order.iter().enumerate() {
            let ba = &dataset.cell(a).bbox;
            for &(lo_b, _, b) in &order[k + 1..] {
                if lo_b > hi + max_radius {
                    break;
                }
                let bb = &dataset.cell(b).bbox;
                let centers = (ba.center - bb.center).norm();
                if centers - ba.bounding_radius() - bb.bounding_radius() > max_radius {
                    continue;
                }
                let d = ba.separation(bb);
                if d <= max_radius {
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    pairs.push(ContactCandidate { a, b, distance: d });
                }
            }
        }
        pairs.sort_by_key(|p| (p.a, p.b));
        all.push(pairs);
    }
    dataset.contact_candidates = all;
    dataset.contact_radius = Some(max_radius);
    dataset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrientedBox, Vec2};
    use crate::ingest::{CellObservation, CellType};

    fn frame_of_boxes(xs: &[f64]) -> TrialDataset {
        let cells = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| CellObservation {
                cell_id: format!("c{i}"),
                frame: 0,
                time_min: 0.0,
                parent_id: None,
                bbox: OrientedBox::new(Vec2::new(x, 0.0), 0.5, 0.5, 0.0),
                label: CellType::Recipient,
                rfp_above_threshold: false,
            })
            .collect();
        TrialDataset::from_observations("t", 5.0, cells).unwrap()
    }

    fn brute_force(d: &TrialDataset, radius: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..d.cells.len() {
            for j in i + 1..d.cells.len() {
                if d.cells[i].bbox.separation(&d.cells[j].bbox) <= radius {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn touching_pair_reported_at_zero() {
        let d = detect_contact_candidates(frame_of_boxes(&[0.0, 1.0]), 1.0);
        assert_eq!(d.contact_candidates[0].len(), 1);
        assert_eq!(d.contact_candidates[0][0].distance, 0.0);
    }

    #[test]
    fn distant_pair_not_reported() {
        let d = detect_contact_candidates(frame_of_boxes(&[0.0, 6.0]), 1.0);
        assert!(d.contact_candidates[0].is_empty());
    }

    #[test]
    fn collinear_triple_matches_all_pairs_oracle() {
        let d = detect_contact_candidates(frame_of_boxes(&[0.0, 1.5, 3.0]), 1.0);
        let got: Vec<_> = d.contact_candidates[0].iter().map(|p| (p.a.0, p.b.0)).collect();
        assert_eq!(got, brute_force(&d, 1.0));
        assert_eq!(got, vec![(0, 1), (1, 2)]);
    }
}
