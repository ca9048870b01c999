//! Simulate a trial and write its tracks and ground-truth event log.

use conjugation_bn::cpd::ContactFn;
use conjugation_bn::ingest::{write_tracks, TrackFormat};
use conjugation_bn::synth::{generate_trial, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig {
        seed: 42,
        contact_fn: ContactFn::Edge,
        ..SynthConfig::default()
    };
    let (dataset, truth) = generate_trial(&cfg)?;
    let dir = std::env::temp_dir().join("conjbn_synth_example");
    std::fs::create_dir_all(&dir)?;
    write_tracks(&dataset, std::fs::File::create(dir.join("tracks.csv"))?, TrackFormat::Csv)?;
    truth.write_events(std::fs::File::create(dir.join("ground_truth.events"))?)?;
    println!(
        "{} frames, {} observations, {} conjugation events -> {}",
        dataset.frame_count(),
        dataset.cells.len(),
        truth.events.len(),
        dir.display()
    );
    for e in truth.events.iter().take(5) {
        println!(
            "frame {:>3}: {} -> {} (expression {:.0} min, maturation {:.0} min)",
            e.frame, e.donor_id, e.recipient_id, e.expr_delay_min, e.mat_delay_min
        );
    }
    Ok(())
}
