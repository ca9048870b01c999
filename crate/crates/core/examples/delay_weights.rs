//! Per-frame Noisy-OR weights of delay distributions and the survival identity.

use conjugation_bn::cpd::DelayModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dt = 5.0;
    for model in [
        DelayModel::uniform(30.0, 150.0),
        DelayModel::uniform(15.0, 75.0),
        DelayModel::power(30.0, 90.0, 2.0),
    ] {
        let w = model.weights(dt)?;
        let mut worst: f64 = 0.0;
        let mut survival = 1.0;
        for (d, a) in w.delays.iter().zip(&w.alphas) {
            survival *= 1.0 - a;
            worst = worst.max((survival - (1.0 - model.cdf(*d as f64 * dt))).abs());
        }
        println!(
            "{:?} [{}, {}]: {} weights, first {:.4}, last {:.4}, max survival error {worst:.1e}",
            model.shape,
            model.lower,
            model.upper,
            w.alphas.len(),
            w.alphas[0],
            w.alphas[w.alphas.len() - 1]
        );
    }
    Ok(())
}
