//! Full batch run over two synthetic trials with the default model grid.

use conjugation_bn::inference::Backend;
use conjugation_bn::ingest::{write_tracks, TrackFormat};
use conjugation_bn::pipeline::{run, RunManifest, TrialManifest};
use conjugation_bn::ranking::render_report;
use conjugation_bn::synth::{generate_trial, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("conjbn_run_example");
    std::fs::create_dir_all(&dir)?;
    let mut trials = Vec::new();
    for seed in [1, 2] {
        let cfg = SynthConfig {
            seed,
            trial_id: format!("trial{seed}"),
            frames: 40,
            ..SynthConfig::default()
        };
        let (dataset, _) = generate_trial(&cfg)?;
        let path = dir.join(format!("{}.csv", cfg.trial_id));
        write_tracks(&dataset, std::fs::File::create(&path)?, TrackFormat::Csv)?;
        trials.push(TrialManifest {
            trial_id: cfg.trial_id,
            frame_interval_min: cfg.frame_interval_min,
            track_path: path,
        });
    }
    let mut manifest = RunManifest::new(trials);
    manifest.backend = Backend::Factored;
    manifest.output_dir = dir.join("out");
    let summary = run(&manifest)?;
    print!("{}", render_report(&summary.report));
    println!("artifacts in {}", manifest.output_dir.display());
    Ok(())
}
