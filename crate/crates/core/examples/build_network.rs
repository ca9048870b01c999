//! Build the Noisy-OR network of a synthetic trial under every grid model.

use conjugation_bn::cpd::default_model_grid;
use conjugation_bn::graph::{assert_acyclic, build_network, EdgeKind};
use conjugation_bn::pipeline::prepare_dataset;
use conjugation_bn::synth::{generate_trial, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let models = default_model_grid();
    let cfg = SynthConfig {
        frames: 30,
        ..SynthConfig::default()
    };
    let (raw, _) = generate_trial(&cfg)?;
    let dataset = prepare_dataset(raw, &models);
    for m in &models {
        let net = build_network(&dataset, m)?;
        assert_acyclic(&net)?;
        println!(
            "{:<24} {:>5} vars  lineage {:>5}  conjugation {:>5}  delay {:>6}",
            m.name,
            net.var_count(),
            net.count_edges(EdgeKind::Lineage),
            net.count_edges(EdgeKind::Conjugation),
            net.count_edges(EdgeKind::Delay)
        );
    }
    let net = build_network(&dataset, &models[0])?;
    let mut dump = Vec::new();
    net.write_dump(&mut dump)?;
    for line in String::from_utf8(dump)?.lines().take(5) {
        println!("{line}");
    }
    Ok(())
}
