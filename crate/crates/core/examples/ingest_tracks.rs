//! Parse a small track table, repair labels and list contact candidates.

use conjugation_bn::ingest::{detect_contact_candidates, parse_tracks, propagate_labels, TrackFormat};

const TRACKS: &str = "\
frame,cell_id,parent_id,type,rfp_flag,x,y,half_len,half_wid,angle
0,d0,,D,1,0.0,0.0,1.0,0.4,0.0
0,r0,,R,0,0.0,0.9,1.0,0.4,0.0
1,d0,d0,D,1,0.0,0.0,1.1,0.4,0.0
1,r0,r0,R,0,0.0,0.9,1.1,0.4,0.0
2,d0,d0,D,1,0.0,0.0,1.2,0.4,0.0
2,r1,r0,T,1,-0.6,0.9,0.6,0.4,0.0
2,r2,r0,R,0,0.6,0.9,0.6,0.4,0.0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = parse_tracks(TRACKS.as_bytes(), TrackFormat::Csv, "demo", 5.0)?;
    println!("{} frames, {} observations, {} lineages", raw.frame_count(), raw.cells.len(), raw.forest.roots.len());
    let d = detect_contact_candidates(propagate_labels(raw), 0.5);
    for w in &d.warnings {
        println!("warning: {w:?}");
    }
    for (f, frame) in d.contact_candidates.iter().enumerate() {
        for c in frame {
            println!(
                "frame {f}: {} - {} at {:.3} um",
                d.cell(c.a).cell_id,
                d.cell(c.b).cell_id,
                c.distance
            );
        }
    }
    Ok(())
}
