use conjugation_bn::cpd::{contact_raw_weight, delay_edge_weights, noisy_or, normalize_conjugation, ContactFn};
use conjugation_bn::geometry::{OrientedBox, Vec2};
use conjugation_bn::ingest::{parse_tracks, write_tracks, TrackFormat};
use conjugation_bn::logspace::log_sum_exp;
use conjugation_bn::synth::{generate_trial, SynthConfig};
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = (OrientedBox, OrientedBox)> {
    let one = (-3.0..3.0f64, -3.0..3.0f64, 0.3..1.5f64, 0.2..0.6f64, -3.2..3.2f64)
        .prop_map(|(x, y, l, w, a)| OrientedBox::new(Vec2::new(x, y), l, w, a));
    (one.clone(), one)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn edge_contact_is_bounded_by_base((a, b) in boxes(), range in 0.05..2.0f64) {
        let e = contact_raw_weight(&a, &b, ContactFn::Edge, range);
        let base = contact_raw_weight(&a, &b, ContactFn::Base, range);
        prop_assert!((0.0..=1.0).contains(&e));
        if e > 0.0 {
            prop_assert_eq!(base, 1.0);
        }
    }

    #[test]
    fn edge_contact_grows_with_range((a, b) in boxes(), r in 0.05..1.0f64, extra in 0.0..1.0f64) {
        let near = contact_raw_weight(&a, &b, ContactFn::Edge, r);
        let far = contact_raw_weight(&a, &b, ContactFn::Edge, r + extra);
        prop_assert!(far + 2e-3 >= near);
    }

    #[test]
    fn noisy_or_is_symmetric_and_monotone(ws in prop::collection::vec(0.0..=1.0f64, 0..6), extra in 0.0..=1.0f64) {
        let mut rev = ws.clone();
        rev.reverse();
        prop_assert!((noisy_or(&ws) - noisy_or(&rev)).abs() < 1e-12);
        let mut more = ws.clone();
        more.push(extra);
        prop_assert!(noisy_or(&more) + 1e-12 >= noisy_or(&ws));
        more.push(1.0);
        prop_assert_eq!(noisy_or(&more), 1.0);
    }

    #[test]
    fn normalisation_preserves_order_and_scale(raw in prop::collection::vec(1e-3..10.0f64, 1..40), c in 1e-6..1e6f64) {
        let budget = 0.5;
        let a = normalize_conjugation(&raw, budget).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|r| r * c).collect();
        let b = normalize_conjugation(&scaled, budget).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1e-300) + 1e-15);
        }
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                if raw[i] < raw[j] {
                    prop_assert!(a.weights[i] <= a.weights[j]);
                }
            }
        }
        let total: f64 = a.weights.iter().sum();
        prop_assert!((total - budget).abs() < 1e-9);
    }

    #[test]
    fn delay_recurrence_reproduces_any_monotone_cdf(steps in prop::collection::vec(0.0..1.0f64, 1..40)) {
        let total: f64 = steps.iter().sum::<f64>() + 1e-3;
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = steps.iter().map(|s| { acc += s / total; acc }).collect();
        *cdf.last_mut().unwrap() = 1.0;
        let alphas = delay_edge_weights(&cdf).unwrap();
        let mut survival = 1.0;
        for (a, f) in alphas.iter().zip(&cdf) {
            prop_assert!((0.0..=1.0).contains(a));
            survival *= 1.0 - a;
            prop_assert!((survival - (1.0 - f)).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_matches_direct_sum(xs in prop::collection::vec(-50.0..5.0f64, 1..20)) {
        let direct: f64 = xs.iter().map(|x| x.exp()).sum();
        prop_assert!((log_sum_exp(&xs) - direct.ln()).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synthetic_tracks_round_trip_byte_identical(seed in 0u64..10_000) {
        let cfg = SynthConfig { seed, frames: 20, ..SynthConfig::default() };
        let (d, _) = generate_trial(&cfg).unwrap();
        let mut first = Vec::new();
        write_tracks(&d, &mut first, TrackFormat::Csv).unwrap();
        let back = parse_tracks(first.as_slice(), TrackFormat::Csv, "x", 5.0).unwrap();
        prop_assert_eq!(back.cells.len(), d.cells.len());
        let mut second = Vec::new();
        write_tracks(&back, &mut second, TrackFormat::Csv).unwrap();
        prop_assert_eq!(first, second);
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = SynthConfig { seed: 99, frames: 25, ..SynthConfig::default() };
    let dump = || {
        let (d, gt) = generate_trial(&cfg).unwrap();
        let mut buf = Vec::new();
        write_tracks(&d, &mut buf, TrackFormat::Csv).unwrap();
        gt.write_events(&mut buf).unwrap();
        buf
    };
    assert_eq!(dump(), dump());
}
