use std::io::{Read, Write};
use std::path::Path;

use super::{CellObservation, CellType, IngestError, TrialDataset};
use crate::geometry::{OrientedBox, Vec2};

pub const TRACK_HEADER: [&str; 10] = [
    "frame", "cell_id", "parent_id", "type", "rfp_flag", "x", "y", "half_len", "half_wid", "angle",
];

/// Delimiter flavour of a track table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrackFormat {
    #[default]
    Csv,
    Tsv,
}

impl TrackFormat {
    fn delimiter(self) -> u8 {
        match self {
            TrackFormat::Csv => b',',
            TrackFormat::Tsv => b'\t',
        }
    }

    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => TrackFormat::Tsv,
            _ => TrackFormat::Csv,
        }
    }
}

/// Parses a track table into a validated (but unrepaired) trial.
pub fn parse_tracks<R: Read>(
    source: R,
    format: TrackFormat,
    trial_id: &str,
    frame_interval_min: f64,
) -> Result<TrialDataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != TRACK_HEADER {
        return Err(IngestError::MalformedRow {
            line: 1,
            reason: format!("unexpected header {names:?}"),
        });
    }

    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != TRACK_HEADER.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", TRACK_HEADER.len(), record.len()),
            });
        }
        let bad = |what: &str, value: &str| IngestError::MalformedRow {
            line,
            reason: format!("invalid {what} {value:?}"),
        };
        let num = |col: usize| -> Result<f64, IngestError> {
            let v: f64 = record[col].parse().map_err(|_| bad(TRACK_HEADER[col], &record[col]))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(TRACK_HEADER[col], &record[col]))
            }
        };
        let frame: u32 = record[0].parse().map_err(|_| bad("frame", &record[0]))?;
        let cell_id = record[1].to_string();
        if cell_id.is_empty() {
            return Err(bad("cell_id", ""));
        }
        let parent_id = match &record[2] {
            "" => None,
            p => Some(p.to_string()),
        };
        let label = CellType::from_code(&record[3]).ok_or_else(|| bad("type", &record[3]))?;
        let rfp_above_threshold = match &record[4] {
            "0" => false,
            "1" => true,
            other => return Err(bad("rfp_flag", other)),
        };
        let bbox = OrientedBox::new(Vec2::new(num(5)?, num(6)?), num(7)?, num(8)?, num(9)?);
        if bbox.half_len <= 0.0 || bbox.half_wid <= 0.0 {
            return Err(IngestError::NonPositiveExtent { line });
        }
        cells.push(CellObservation {
            cell_id,
            frame,
            time_min: frame as f64 * frame_interval_min,
            parent_id,
            bbox,
            label,
            rfp_above_threshold,
        });
    }
    TrialDataset::from_observations(trial_id, frame_interval_min, cells)
}

pub fn read_track_file(
    path: &Path,
    trial_id: &str,
    frame_interval_min: f64,
) -> Result<TrialDataset, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_tracks(
        std::io::BufReader::new(file),
        TrackFormat::from_path(path),
        trial_id,
        frame_interval_min,
    )
}

/// Writes observations in stored order; floats use the shortest exact form.
pub fn write_tracks<W: Write>(
    dataset: &TrialDataset,
    sink: W,
    format: TrackFormat,
) -> Result<(), IngestError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .from_writer(sink);
    writer.write_record(TRACK_HEADER)?;
    for c in &dataset.cells {
        writer.write_record([
            c.frame.to_string(),
            c.cell_id.clone(),
            c.parent_id.clone().unwrap_or_default(),
            c.label.code().to_string(),
            if c.rfp_above_threshold { "1" } else { "0" }.to_string(),
            c.bbox.center.x.to_string(),
            c.bbox.center.y.to_string(),
            c.bbox.half_len.to_string(),
            c.bbox.half_wid.to_string(),
            c.bbox.angle.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
