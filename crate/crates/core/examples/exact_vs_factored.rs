//! Score the queries of a small trial with both backends.

use conjugation_bn::cpd::{ContactFn, DelayModel, ModelConfig};
use conjugation_bn::inference::{exact_query, factored_query, ModelSession};
use conjugation_bn::pipeline::prepare_dataset;
use conjugation_bn::synth::{generate_trial, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig {
        seed: 11,
        donors: 2,
        recipients: 3,
        seed_region_um: 3.5,
        frames: 16,
        division_interval_min: 45.0,
        conj_rate: 0.6,
        expression_delay: DelayModel::uniform(10.0, 30.0),
        maturation_delay: DelayModel::uniform(10.0, 25.0),
        ..SynthConfig::default()
    };
    let (raw, truth) = generate_trial(&cfg)?;
    let model = ModelConfig::new(ContactFn::Edge, cfg.expression_delay, cfg.maturation_delay);
    let dataset = prepare_dataset(raw, std::slice::from_ref(&model));
    let session = ModelSession::new(&dataset, &model)?;
    println!("{} conjugation events, {} queries", truth.events.len(), session.queries().len());
    for q in session.queries() {
        let exact = exact_query(&session, q, 22);
        let factored = factored_query(&session, q);
        match exact.probability() {
            Some(p) => println!("{:<10} exact {:>9.4}  factored {:>9.4}", q.id, p.ln(), factored),
            None => println!("{:<10} exact {:?}  factored {:>9.4}", q.id, exact, factored),
        }
    }
    Ok(())
}
