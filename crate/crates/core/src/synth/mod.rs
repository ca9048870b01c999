//! Synthetic trials with a known generating mechanism, and a brute-force
//! reference for inference.

mod oracle;

pub use oracle::{enumerate_joint, enumerate_joint_with, OracleError, ORACLE_LIMIT};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpd::{contact_raw_weight_with_separation, ContactFn, DelayModel, DEFAULT_CONTACT_RANGE_UM};
use crate::geometry::{OrientedBox, Vec2};
use crate::ingest::{CellObservation, CellType, IngestError, TrialDataset};

pub const GROUND_TRUTH_HEADER: [&str; 5] = ["frame", "donor_id", "recipient_id", "expr_delay_min", "mat_delay_min"];

const RELAX_ROUNDS: usize = 8;
const RELAX_STEP_UM: f64 = 0.15;
const DIVISION_GAP_UM: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub trial_id: String,
    /// Width and height in micrometers; cells start near the middle.
    pub arena_um: [f64; 2],
    pub donors: usize,
    pub recipients: usize,
    /// Side of the square the initial cells are scattered in.
    pub seed_region_um: f64,
    pub division_interval_min: f64,
    pub cell_half_len_um: f64,
    pub cell_half_wid_um: f64,
    pub contact_fn: ContactFn,
    pub contact_range_um: f64,
    pub expression_delay: DelayModel,
    pub maturation_delay: DelayModel,
    pub conj_rate: f64,
    pub frames: usize,
    pub frame_interval_min: f64,
    /// Half-width of the uniform per-frame random displacement of each cell.
    pub motility_um: f64,
    /// Population cap; reaching it truncates the trial like an overflow.
    pub max_cells: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trial_id: "synth".into(),
            arena_um: [60.0, 60.0],
            donors: 4,
            recipients: 12,
            seed_region_um: 12.0,
            division_interval_min: 90.0,
            cell_half_len_um: 1.0,
            cell_half_wid_um: 0.4,
            contact_fn: ContactFn::Edge,
            contact_range_um: DEFAULT_CONTACT_RANGE_UM,
            expression_delay: DelayModel::uniform(30.0, 150.0),
            maturation_delay: DelayModel::uniform(30.0, 90.0),
            conj_rate: 0.2,
            frames: 60,
            frame_interval_min: 5.0,
            motility_um: 0.0,
            max_cells: 600,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if !(self.frame_interval_min > 0.0) {
            return bad(format!("frame interval must be positive, got {}", self.frame_interval_min));
        }
        if !(self.division_interval_min > 0.0) {
            return bad(format!("division interval must be positive, got {}", self.division_interval_min));
        }
        if !(0.0..=1.0).contains(&self.conj_rate) {
            return bad(format!("conj_rate must lie in [0,1], got {}", self.conj_rate));
        }
        if !(self.cell_half_len_um > 0.0 && self.cell_half_wid_um > 0.0) {
            return bad("cell extents must be positive".into());
        }
        if !(self.arena_um[0] > 0.0 && self.arena_um[1] > 0.0) {
            return bad("arena must have positive size".into());
        }
        if !(self.motility_um >= 0.0) {
            return bad("motility must be non-negative".into());
        }
        if self.contact_range_um < 0.0 {
            return bad("contact range must be non-negative".into());
        }
        for d in [&self.expression_delay, &self.maturation_delay] {
            d.validate(self.frame_interval_min)
                .map_err(|e| SynthError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub frame: u32,
    pub donor_id: String,
    pub recipient_id: String,
    pub expr_delay_min: f64,
    pub mat_delay_min: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub events: Vec<GroundTruthEvent>,
    /// First frame that was not emitted because the colony overflowed.
    pub truncated_at: Option<u32>,
}

impl GroundTruth {
    pub fn write_events<W: Write>(&self, sink: W) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(GROUND_TRUTH_HEADER)?;
        for e in &self.events {
            w.write_record([
                e.frame.to_string(),
                e.donor_id.clone(),
                e.recipient_id.clone(),
                e.expr_delay_min.to_string(),
                e.mat_delay_min.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Plasmid {
    expresses_at: usize,
    matures_at: usize,
}

#[derive(Clone, Debug)]
struct SimCell {
    id: String,
    parent: Option<String>,
    bbox: OrientedBox,
    growth: f64,
    donor: bool,
    plasmid: Option<Plasmid>,
}

/// Smallest `t` with `cdf(t) >= u`.
fn sample_delay(model: &DelayModel, u: f64) -> f64 {
    let (mut lo, mut hi) = (model.lower, model.upper);
    if model.cdf(lo) >= u {
        return lo;
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if model.cdf(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

struct Sim {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
    cells: Vec<SimCell>,
    next_id: usize,
}

impl Sim {
    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("c{}", self.next_id)
    }

    fn growth_rate(&mut self) -> f64 {
        let interval = self.cfg.division_interval_min * self.rng.gen_range(0.8..1.2);
        2f64.powf(self.cfg.frame_interval_min / interval)
    }

    fn seed_cells(&mut self) {
        let [w, h] = self.cfg.arena_um;
        let side = self.cfg.seed_region_um.min(w).min(h);
        let origin = Vec2::new(0.5 * (w - side), 0.5 * (h - side));
        let total = self.cfg.donors + self.cfg.recipients;
        for k in 0..total {
            let mut placed = None;
            for _ in 0..200 {
                let c = origin + Vec2::new(self.rng.gen_range(0.0..=side), self.rng.gen_range(0.0..=side));
                let angle = self.rng.gen_range(0.0..std::f64::consts::PI);
                let b = OrientedBox::new(c, self.cfg.cell_half_len_um, self.cfg.cell_half_wid_um, angle);
                if self.cells.iter().all(|o| o.bbox.separation(&b) > 0.1) {
                    placed = Some(b);
                    break;
                }
            }
            let Some(bbox) = placed else {
                log::warn!("synth: could not place initial cell {k} without overlap");
                continue;
            };
            let id = self.fresh_id();
            let growth = self.growth_rate();
            self.cells.push(SimCell {
                id,
                parent: None,
                bbox,
                growth,
                donor: k < self.cfg.donors,
                plasmid: None,
            });
        }
    }

    /// Grows every cell one frame, splitting those past twice their birth length.
    fn grow_and_divide(&mut self) {
        let birth = self.cfg.cell_half_len_um;
        let old = std::mem::take(&mut self.cells);
        for mut c in old {
            c.parent = Some(c.id.clone());
            c.bbox.half_len *= c.growth;
            if c.bbox.half_len < 2.0 * birth {
                self.cells.push(c);
                continue;
            }
            let (axis, _) = c.bbox.axes();
            let half = 0.5 * c.bbox.half_len;
            for sign in [-1.0, 1.0] {
                let jitter = self.rng.gen_range(-0.1..0.1);
                let id = self.fresh_id();
                let growth = self.growth_rate();
                self.cells.push(SimCell {
                    id,
                    parent: c.parent.clone(),
                    bbox: OrientedBox::new(
                        c.bbox.center + axis.scale(sign * half),
                        half - DIVISION_GAP_UM,
                        c.bbox.half_wid,
                        c.bbox.angle + jitter,
                    ),
                    growth,
                    donor: c.donor,
                    plasmid: c.plasmid,
                });
            }
        }
    }

    fn wander(&mut self) {
        let a = self.cfg.motility_um;
        if a <= 0.0 {
            return;
        }
        for i in 0..self.cells.len() {
            let step = Vec2::new(self.rng.gen_range(-a..=a), self.rng.gen_range(-a..=a));
            let turn = self.rng.gen_range(-0.1..=0.1);
            let c = &mut self.cells[i];
            c.bbox = c.bbox.translated(step);
            c.bbox.angle += turn;
        }
    }

    /// Pushes overlapping pairs apart along the line through their centers.
    fn relax(&mut self) {
        for _ in 0..RELAX_ROUNDS {
            let mut moves = vec![Vec2::new(0.0, 0.0); self.cells.len()];
            let mut any = false;
            for i in 0..self.cells.len() {
                for j in i + 1..self.cells.len() {
                    let (a, b) = (&self.cells[i].bbox, &self.cells[j].bbox);
                    let d = b.center - a.center;
                    if d.norm() > a.bounding_radius() + b.bounding_radius() || !a.intersects(b) {
                        continue;
                    }
                    any = true;
                    let dir = if d.norm() > 1e-9 {
                        d.scale(1.0 / d.norm())
                    } else {
                        a.axes().1
                    };
                    moves[i] = moves[i] - dir.scale(RELAX_STEP_UM);
                    moves[j] = moves[j] + dir.scale(RELAX_STEP_UM);
                }
            }
            if !any {
                break;
            }
            for (c, m) in self.cells.iter_mut().zip(moves) {
                c.bbox = c.bbox.translated(m);
            }
        }
    }

    fn overflowing(&self) -> bool {
        let [w, h] = self.cfg.arena_um;
        self.cells.len() > self.cfg.max_cells
            || self.cells.iter().any(|c| {
                let p = c.bbox.center;
                p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h
            })
    }

    fn observe(&self, frame: usize, out: &mut Vec<CellObservation>) {
        for c in &self.cells {
            let label = if c.donor {
                CellType::Donor
            } else if c.plasmid.is_some_and(|p| frame >= p.expresses_at) {
                CellType::Transconjugant
            } else {
                CellType::Recipient
            };
            out.push(CellObservation {
                cell_id: c.id.clone(),
                frame: frame as u32,
                time_min: frame as f64 * self.cfg.frame_interval_min,
                parent_id: c.parent.clone(),
                bbox: c.bbox,
                label,
                rfp_above_threshold: label != CellType::Recipient,
            });
        }
    }

    fn conjugate(&mut self, frame: usize, truth: &mut GroundTruth) {
        let range = self.cfg.contact_range_um;
        let dt = self.cfg.frame_interval_min;
        let sources: Vec<usize> = (0..self.cells.len())
            .filter(|&i| {
                let c = &self.cells[i];
                c.donor || c.plasmid.is_some_and(|p| frame >= p.matures_at)
            })
            .collect();
        for t in 0..self.cells.len() {
            if self.cells[t].donor || self.cells[t].plasmid.is_some() {
                continue;
            }
            for &s in &sources {
                let (a, b) = (&self.cells[s].bbox, &self.cells[t].bbox);
                if (b.center - a.center).norm() > a.bounding_radius() + b.bounding_radius() + range {
                    continue;
                }
                let sep = a.separation(b);
                let raw = contact_raw_weight_with_separation(a, b, self.cfg.contact_fn, range, sep);
                if raw <= 0.0 {
                    continue;
                }
                if self.rng.gen::<f64>() >= self.cfg.conj_rate * raw {
                    continue;
                }
                let expr = sample_delay(&self.cfg.expression_delay, self.rng.gen());
                let mat = sample_delay(&self.cfg.maturation_delay, self.rng.gen());
                self.cells[t].plasmid = Some(Plasmid {
                    expresses_at: frame + (expr / dt).round() as usize,
                    matures_at: frame + (mat / dt - 1e-9).ceil() as usize,
                });
                truth.events.push(GroundTruthEvent {
                    frame: frame as u32,
                    donor_id: self.cells[s].id.clone(),
                    recipient_id: self.cells[t].id.clone(),
                    expr_delay_min: expr,
                    mat_delay_min: mat,
                });
                break;
            }
        }
    }
}

/// Simulates a colony and returns its raw (unrepaired) tracks with the
/// conjugation events that produced them.
pub fn generate_trial(config: &SynthConfig) -> Result<(TrialDataset, GroundTruth), SynthError> {
    config.validate()?;
    let mut sim = Sim {
        cfg: config.clone(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        cells: Vec::new(),
        next_id: 0,
    };
    sim.seed_cells();
    let mut truth = GroundTruth::default();
    let mut observations = Vec::new();
    for frame in 0..config.frames {
        if frame > 0 {
            sim.grow_and_divide();
            sim.wander();
            sim.relax();
            if sim.overflowing() {
                log::warn!(
                    "synth {}: colony left the arena at frame {frame}; trial truncated",
                    config.trial_id
                );
                truth.truncated_at = Some(frame as u32);
                break;
            }
        }
        sim.observe(frame, &mut observations);
        // recipients start plasmid-free
        if frame > 0 {
            sim.conjugate(frame, &mut truth);
        }
    }
    let dataset = TrialDataset::from_observations(config.trial_id.clone(), config.frame_interval_min, observations)?;
    Ok((dataset, truth))
}
