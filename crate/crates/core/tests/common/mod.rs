#![allow(dead_code)]

use conjugation_bn::cpd::{ContactFn, DelayModel, ModelConfig};
use conjugation_bn::graph::{BayesNet, PrunedNet, VarId};
use conjugation_bn::inference::{ModelSession, Query, TreeKind};
use conjugation_bn::ingest::TrialDataset;
use conjugation_bn::pipeline::prepare_dataset;
use conjugation_bn::synth::{enumerate_joint_with, generate_trial, OracleError, SynthConfig};

/// Small crowded trial: a handful of cells, short delays, frequent contact.
pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        donors: 1 + (seed % 3) as usize,
        recipients: 2 + (seed % 4) as usize,
        seed_region_um: 3.5,
        frames: 14,
        division_interval_min: 45.0,
        conj_rate: 0.6,
        contact_fn: if seed.is_multiple_of(2) { ContactFn::Edge } else { ContactFn::Base },
        expression_delay: DelayModel::uniform(10.0, 30.0),
        maturation_delay: DelayModel::uniform(10.0, 25.0),
        ..SynthConfig::default()
    }
}

/// The generating model of a synthetic config.
pub fn true_model(cfg: &SynthConfig) -> ModelConfig {
    ModelConfig::new(cfg.contact_fn, cfg.expression_delay, cfg.maturation_delay)
}

/// Smaller still, so most queries fit brute-force enumeration.
pub fn tiny_config(seed: u64) -> SynthConfig {
    SynthConfig {
        donors: 1 + (seed % 2) as usize,
        recipients: 1 + (seed % 3) as usize,
        frames: 8 + (seed % 3) as usize,
        ..small_config(seed)
    }
}

pub fn prepared(cfg: &SynthConfig) -> (TrialDataset, ModelConfig) {
    let (raw, _) = generate_trial(cfg).expect("synthetic trial");
    let model = true_model(cfg);
    (prepare_dataset(raw, std::slice::from_ref(&model)), model)
}

pub fn small_trial(seed: u64) -> (TrialDataset, ModelConfig) {
    let cfg = small_config(seed);
    let (raw, _) = generate_trial(&cfg).expect("small synthetic trial");
    let model = true_model(&cfg);
    (prepare_dataset(raw, std::slice::from_ref(&model)), model)
}

/// Every conjugation source feeding the focal path lies in a donor tree.
pub fn donor_sources_only(s: &ModelSession, q: &Query) -> bool {
    q.path
        .iter()
        .all(|&c| s.conjugation_in(c).all(|(src, _)| s.structure.tree_kind(src) == TreeKind::Donor))
}

/// Brute-force query probability: the focal tree keeps only its internal
/// lineage and delay edges, barren variables are dropped by ancestor
/// closure, and `P(first acquisition at each window frame)` is summed with
/// the window's expression-delay mass.
pub fn oracle_query(s: &ModelSession, q: &Query) -> Result<f64, OracleError> {
    let Some((lo, hi)) = q.window else { return Ok(0.0) };
    let ev = s.evidence(q);
    let focal = |v: VarId| ev.focal_cells.contains(&v.cell);
    let labels = (0..s.net.cell_count())
        .map(|c| s.net.cell_label(conjugation_bn::ingest::CellIdx(c)).to_string())
        .collect();
    let mut net = BayesNet::with_cells(labels);
    for e in s.net.edges() {
        let keep = !focal(e.src) || (focal(e.dst) && e.kind != conjugation_bn::graph::EdgeKind::Conjugation);
        if keep {
            net.add_edge(e.src, e.dst, e.kind, e.weight).unwrap();
        }
    }
    let evidence: Vec<(VarId, bool)> = ev.assignments.iter().map(|(v, b)| (*v, *b)).collect();
    let soft: Vec<_> = ev.soft.iter().filter(|sf| sf.support().is_some()).cloned().collect();
    let hi_pos = q.path_pos(hi);
    let mut roots: Vec<usize> = q.path[..=hi_pos].iter().map(|&c| VarId::gene(c).index()).collect();
    roots.extend(evidence.iter().map(|(v, _)| v.index()));
    for sf in &soft {
        roots.extend(sf.path.iter().map(|&c| VarId::gene(c).index()));
    }
    let mut keep = vec![false; net.var_count()];
    while let Some(v) = roots.pop() {
        if !keep[v] {
            keep[v] = true;
            roots.extend(net.parents(v).iter().map(|p| p.var));
        }
    }
    let pruned = PrunedNet {
        external: vec![false; net.var_count()],
        soft_kept: vec![true; soft.len()],
        net,
        keep,
    };
    let mut total = 0.0;
    for (k, pos) in (q.path_pos(lo)..=hi_pos).enumerate() {
        let mut target = vec![(VarId::gene(q.path[pos]), true)];
        if pos > 0 {
            target.push((VarId::gene(q.path[pos - 1]), false));
        }
        total += q.pmf[k] * enumerate_joint_with(&pruned, &evidence, &soft, &target)?;
    }
    Ok(total)
}
