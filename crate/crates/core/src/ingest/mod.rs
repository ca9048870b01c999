//! Tracked-cell data: parsing, lineage reconstruction, label repair and
//! per-frame contact candidates.

mod contacts;
mod repair;
mod tracks;

pub use contacts::detect_contact_candidates;
pub use repair::{propagate_labels, repair_plasmid_loss, ExpressionEnvelope};
pub use tracks::{parse_tracks, read_track_file, write_tracks, TrackFormat};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientedBox, Vec2};

/// Default time between frames, in minutes.
pub const DEFAULT_FRAME_INTERVAL_MIN: f64 = 5.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: parent {parent_id:?} of cell {cell_id:?} not found in frame {frame}")]
    MissingParent {
        line: usize,
        cell_id: String,
        parent_id: String,
        frame: u32,
    },
    #[error("line {line}: cell id {cell_id:?} appears twice in frame {frame}")]
    DuplicateCellId {
        line: usize,
        cell_id: String,
        frame: u32,
    },
    #[error("line {line}: bounding box half-extents must be strictly positive")]
    NonPositiveExtent { line: usize },
    #[error("cell {cell_id:?} in frame {frame} has more than two children")]
    TooManyChildren { cell_id: String, frame: u32 },
    #[error("frame interval must be positive, got {0}")]
    BadFrameInterval(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Index of one cell observation (one cell in one frame) within a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIdx(pub usize);

impl fmt::Display for CellIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellType {
    Donor,
    Recipient,
    Transconjugant,
}

impl CellType {
    pub fn code(self) -> char {
        match self {
            CellType::Donor => 'D',
            CellType::Recipient => 'R',
            CellType::Transconjugant => 'T',
        }
    }

    pub fn from_code(s: &str) -> Option<CellType> {
        match s {
            "D" => Some(CellType::Donor),
            "R" => Some(CellType::Recipient),
            "T" => Some(CellType::Transconjugant),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellObservation {
    pub cell_id: String,
    pub frame: u32,
    pub time_min: f64,
    pub parent_id: Option<String>,
    pub bbox: OrientedBox,
    pub label: CellType,
    pub rfp_above_threshold: bool,
}

impl CellObservation {
    pub fn centroid(&self) -> Vec2 {
        self.bbox.center
    }
}

/// Parent/child links between observations in consecutive frames.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineageForest {
    pub parent: Vec<Option<CellIdx>>,
    pub children: Vec<Vec<CellIdx>>,
    pub roots: Vec<CellIdx>,
    /// Root-derived component id for every observation.
    pub lineage_id: Vec<usize>,
}

impl LineageForest {
    pub fn build(cells: &[CellObservation], parent: Vec<Option<CellIdx>>) -> Self {
        let n = cells.len();
        let mut children = vec![Vec::new(); n];
        let mut roots = Vec::new();
        for (i, p) in parent.iter().enumerate() {
            match p {
                Some(p) => children[p.0].push(CellIdx(i)),
                None => roots.push(CellIdx(i)),
            }
        }
        // cells are stored frame-major, so parents always precede children
        let mut lineage_id = vec![0; n];
        for (component, r) in roots.iter().enumerate() {
            lineage_id[r.0] = component;
        }
        for i in 0..n {
            if let Some(p) = parent[i] {
                lineage_id[i] = lineage_id[p.0];
            }
        }
        Self {
            parent,
            children,
            roots,
            lineage_id,
        }
    }
}

/// A pair of cells in the same frame whose boxes lie within the detection radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactCandidate {
    pub a: CellIdx,
    pub b: CellIdx,
    pub distance: f64,
}

/// A daughter lineage assumed to have lost the plasmid at division.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LossEvent {
    pub cell: CellIdx,
    pub cell_id: String,
    pub frame: u32,
}

/// Non-fatal observations made while loading or repairing a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum IngestWarning {
    Relabelled {
        cell_id: String,
        frame: u32,
        from: CellType,
        to: CellType,
    },
    Dropout {
        cell_id: String,
        frame: u32,
    },
    LabelFlip {
        cell_id: String,
        frame: u32,
    },
    PlasmidLoss {
        cell_id: String,
        frame: u32,
    },
}

/// One microfluidic-trap experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDataset {
    pub trial_id: String,
    pub frame_interval_min: f64,
    /// Observations sorted by frame.
    pub cells: Vec<CellObservation>,
    /// Index range into `cells` for every frame `0..frame_count`.
    pub frames: Vec<std::ops::Range<usize>>,
    pub forest: LineageForest,
    pub contact_candidates: Vec<Vec<ContactCandidate>>,
    pub contact_radius: Option<f64>,
    pub loss_events: Vec<LossEvent>,
    /// `true` for cells recorded in `loss_events`.
    pub(crate) lost: Vec<bool>,
    pub warnings: Vec<IngestWarning>,
}

impl TrialDataset {
    /// Assembles a dataset from observations, validating lineage links.
    pub fn from_observations(
        trial_id: impl Into<String>,
        frame_interval_min: f64,
        mut cells: Vec<CellObservation>,
    ) -> Result<Self, IngestError> {
        let trial_id = trial_id.into();
        if !(frame_interval_min > 0.0) {
            return Err(IngestError::BadFrameInterval(frame_interval_min));
        }
        // stable: keeps input order within a frame; `line` maps back to the
        // 1-based row of a track file whose header is line 1
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by_key(|&i| cells[i].frame);
        let line: Vec<usize> = order.iter().map(|&i| i + 2).collect();
        let mut slots: Vec<Option<CellObservation>> = cells.drain(..).map(Some).collect();
        let cells: Vec<CellObservation> = order
            .iter()
            .map(|&i| slots[i].take().expect("each row moved once"))
            .collect();
        let frame_count = cells.last().map_or(0, |c| c.frame as usize + 1);
        let mut frames = vec![0..0; frame_count];
        let mut start = 0;
        while start < cells.len() {
            let f = cells[start].frame;
            let mut end = start;
            while end < cells.len() && cells[end].frame == f {
                end += 1;
            }
            frames[f as usize] = start..end;
            start = end;
        }

        let mut by_key: HashMap<(u32, &str), usize> = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if c.bbox.half_len <= 0.0 || c.bbox.half_wid <= 0.0 {
                return Err(IngestError::NonPositiveExtent { line: line[i] });
            }
            if by_key.insert((c.frame, c.cell_id.as_str()), i).is_some() {
                return Err(IngestError::DuplicateCellId {
                    line: line[i],
                    cell_id: c.cell_id.clone(),
                    frame: c.frame,
                });
            }
        }
        let mut parent = vec![None; cells.len()];
        for (i, c) in cells.iter().enumerate() {
            let Some(pid) = &c.parent_id else { continue };
            if c.frame == 0 {
                return Err(IngestError::MalformedRow {
                    line: line[i],
                    reason: format!("frame 0 cell {:?} has a parent", c.cell_id),
                });
            }
            match by_key.get(&(c.frame - 1, pid.as_str())) {
                Some(&p) => parent[i] = Some(CellIdx(p)),
                None => {
                    return Err(IngestError::MissingParent {
                        line: line[i],
                        cell_id: c.cell_id.clone(),
                        parent_id: pid.clone(),
                        frame: c.frame - 1,
                    })
                }
            }
        }
        drop(by_key);
        let forest = LineageForest::build(&cells, parent);
        for (i, kids) in forest.children.iter().enumerate() {
            if kids.len() > 2 {
                return Err(IngestError::TooManyChildren {
                    cell_id: cells[i].cell_id.clone(),
                    frame: cells[i].frame,
                });
            }
        }
        let n_cells = cells.len();
        let mut warnings = Vec::new();
        let last = frame_count.saturating_sub(1) as u32;
        for (i, c) in cells.iter().enumerate() {
            if c.frame < last && forest.children[i].is_empty() {
                log::warn!(
                    "trial {}: cell {} disappears after frame {}",
                    trial_id,
                    c.cell_id,
                    c.frame
                );
                warnings.push(IngestWarning::Dropout {
                    cell_id: c.cell_id.clone(),
                    frame: c.frame,
                });
            }
        }
        Ok(Self {
            trial_id,
            frame_interval_min,
            frames,
            contact_candidates: vec![Vec::new(); frame_count],
            contact_radius: None,
            cells,
            forest,
            loss_events: Vec::new(),
            lost: vec![false; n_cells],
            warnings,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn cell(&self, idx: CellIdx) -> &CellObservation {
        &self.cells[idx.0]
    }

    pub fn cells_in_frame(&self, frame: usize) -> impl Iterator<Item = CellIdx> + '_ {
        self.frames[frame].clone().map(CellIdx)
    }

    pub fn frame_of(&self, idx: CellIdx) -> usize {
        self.cells[idx.0].frame as usize
    }

    pub fn time_of_frame(&self, frame: usize) -> f64 {
        frame as f64 * self.frame_interval_min
    }

    pub fn is_lost(&self, idx: CellIdx) -> bool {
        self.lost[idx.0]
    }

    /// Parent link with plasmid-loss disconnections applied.
    pub fn effective_parent(&self, idx: CellIdx) -> Option<CellIdx> {
        if self.is_lost(idx) {
            None
        } else {
            self.forest.parent[idx.0]
        }
    }

    /// Whether the cell shows the plasmid reporter (or is labelled as carrying it).
    pub fn is_expressing(&self, idx: CellIdx) -> bool {
        let c = &self.cells[idx.0];
        c.rfp_above_threshold || matches!(c.label, CellType::Donor | CellType::Transconjugant)
    }

    /// Cell ids followed by frame, for diagnostics.
    pub fn describe(&self, idx: CellIdx) -> String {
        let c = &self.cells[idx.0];
        format!("{}@{}", c.cell_id, c.frame)
    }

    /// Ancestors of `idx` (effective links), nearest first, excluding `idx`.
    pub fn ancestors(&self, idx: CellIdx) -> impl Iterator<Item = CellIdx> + '_ {
        std::iter::successors(self.effective_parent(idx), move |&p| self.effective_parent(p))
    }

    /// Root-to-cell path through effective links, inclusive.
    pub fn path_to(&self, idx: CellIdx) -> Vec<CellIdx> {
        let mut path: Vec<CellIdx> = std::iter::once(idx).chain(self.ancestors(idx)).collect();
        path.reverse();
        path
    }

    /// Effective children (children minus plasmid-loss disconnections).
    pub fn effective_children(&self, idx: CellIdx) -> impl Iterator<Item = CellIdx> + '_ {
        self.forest.children[idx.0]
            .iter()
            .copied()
            .filter(move |&c| !self.is_lost(c))
    }

    /// Effective trees: root and membership for every cell.
    pub fn effective_roots(&self) -> Vec<CellIdx> {
        let mut root = vec![CellIdx(0); self.cells.len()];
        for i in 0..self.cells.len() {
            root[i] = match self.effective_parent(CellIdx(i)) {
                Some(p) => root[p.0],
                None => CellIdx(i),
            };
        }
        root
    }
}
