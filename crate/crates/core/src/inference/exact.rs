use std::time::Instant;

use crate::graph::{prune_for_query, BayesNet, PrunedNet, VarId, VarKind};
use crate::ingest::CellIdx;

use super::evidence::Evidence;
use super::queries::Query;
use super::ModelSession;

#[derive(Clone, Copy, Debug)]
pub struct ExactOptions {
    pub latent_limit: usize,
    /// Restrict to the requisite subnetwork first.
    pub prune: bool,
    pub deadline: Option<Instant>,
    pub cost_limit: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            latent_limit: 22,
            prune: true,
            deadline: None,
            cost_limit: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExactOutcome {
    Probability { value: f64, cost: f64 },
    /// The evidence itself has probability zero.
    Inconsistent,
    TooManyLatents(usize),
    OverBudget(String),
}

impl ExactOutcome {
    pub fn probability(&self) -> Option<f64> {
        match self {
            ExactOutcome::Probability { value, .. } => Some(*value),
            _ => None,
        }
    }
}

/// Query network: no edge leaves the focal tree, and no conjugation stays
/// inside it.
pub(crate) fn focal_edge_filter(focal: &[bool]) -> impl Fn(usize, usize) -> bool + '_ {
    move |src, dst| {
        let (s, d) = (VarId::from_index(src), VarId::from_index(dst));
        if !focal[s.cell.0] {
            return true;
        }
        let conjugation = s.kind == VarKind::Maturation && d.kind == VarKind::Gene;
        focal[d.cell.0] && !conjugation
    }
}

/// Hard evidence plus everything it forces through weight-1 edges and
/// empty parent sets. `None` when the evidence is contradictory.
pub(crate) fn forced_assignment(
    net: &BayesNet,
    order: &[usize],
    evidence: &Evidence,
    focal: &[bool],
    keep_edge: &dyn Fn(usize, usize) -> bool,
) -> Option<Vec<Option<bool>>> {
    let n = net.var_count();
    let mut fixed: Vec<Option<bool>> = vec![None; n];
    for (v, &val) in &evidence.assignments {
        fixed[v.index()] = Some(val);
    }
    for sf in &evidence.soft {
        let Some((first, last)) = sf.support() else { continue };
        for &c in &sf.path[..first] {
            let v = VarId::gene(c).index();
            if fixed[v] == Some(true) {
                return None;
            }
            fixed[v] = Some(false);
        }
        let v = VarId::gene(sf.path[last]).index();
        if fixed[v] == Some(false) {
            return None;
        }
        fixed[v] = Some(true);
    }
    let is_focal = |v: usize| focal[VarId::from_index(v).cell.0];
    loop {
        let mut changed = false;
        for &v in order {
            if is_focal(v) {
                continue;
            }
            let ps: Vec<_> = net.parents(v).iter().filter(|p| keep_edge(p.var, v)).collect();
            if ps.is_empty() && fixed[v].is_some() {
                // observed roots are exogenous inputs
                continue;
            }
            match fixed[v] {
                None => {
                    if ps.iter().any(|p| p.weight >= 1.0 && fixed[p.var] == Some(true)) {
                        fixed[v] = Some(true);
                        changed = true;
                    } else if ps.iter().all(|p| fixed[p.var] == Some(false)) {
                        fixed[v] = Some(false);
                        changed = true;
                    }
                }
                Some(false) => {
                    for p in &ps {
                        if p.weight >= 1.0 {
                            match fixed[p.var] {
                                Some(true) => return None,
                                None => {
                                    fixed[p.var] = Some(false);
                                    changed = true;
                                }
                                Some(false) => {}
                            }
                        }
                    }
                }
                Some(true) => {
                    let open: Vec<_> = ps.iter().filter(|p| fixed[p.var] != Some(false)).collect();
                    match open.as_slice() {
                        [] => return None,
                        [only] if fixed[only.var].is_none() => {
                            fixed[only.var] = Some(true);
                            changed = true;
                        }
                        _ => {}
                    }
                }
            }
        }
        if !changed {
            return Some(fixed);
        }
    }
}

struct Enumerator<'a> {
    net: &'a BayesNet,
    /// Non-focal variables with a retained CPD, in topological order.
    steps: Vec<usize>,
    latent: Vec<bool>,
    value: Vec<bool>,
    soft: Vec<(&'a [CellIdx], &'a [f64])>,
    /// Per focal path position: active conjugation parents `(var, weight)`.
    focal_in: Vec<Vec<(usize, f64)>>,
    window_start: usize,
    pmf: &'a [f64],
    acc: f64,
    z: f64,
    leaves: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl Enumerator<'_> {
    fn cpd_on(&self, v: usize) -> f64 {
        let mut off = 1.0;
        for p in self.net.parents(v) {
            if self.value[p.var] {
                off *= 1.0 - p.weight;
            }
        }
        1.0 - off
    }

    fn run(&mut self, step: usize, weight: f64) {
        if self.timed_out {
            return;
        }
        if step == self.steps.len() {
            self.leaf(weight);
            return;
        }
        let v = self.steps[step];
        let on = self.cpd_on(v);
        if self.latent[v] {
            for (val, p) in [(false, 1.0 - on), (true, on)] {
                if p > 0.0 {
                    self.value[v] = val;
                    self.run(step + 1, weight * p);
                }
            }
            self.value[v] = false;
        } else if self.net.parents(v).is_empty() {
            self.run(step + 1, weight);
        } else {
            let p = if self.value[v] { on } else { 1.0 - on };
            if p > 0.0 {
                self.run(step + 1, weight * p);
            }
        }
    }

    fn leaf(&mut self, mut w: f64) {
        self.leaves += 1;
        if self.leaves.is_multiple_of(4096) && self.deadline.is_some_and(|d| Instant::now() > d) {
            self.timed_out = true;
            return;
        }
        for (path, lik) in &self.soft {
            let first = path.iter().position(|&c| self.value[VarId::gene(c).index()]);
            w *= first.map_or(0.0, |i| lik[i]);
        }
        if w == 0.0 {
            return;
        }
        self.z += w;
        let mut survival = 1.0;
        let mut q = 0.0;
        for (s, parents) in self.focal_in.iter().enumerate() {
            let mut off = 1.0;
            for &(var, weight) in parents {
                if self.value[var] {
                    off *= 1.0 - weight;
                }
            }
            let h = 1.0 - off;
            if s >= self.window_start {
                q += survival * h * self.pmf[s - self.window_start];
            }
            survival *= off;
        }
        self.acc += w * q;
    }
}

pub(crate) fn exact_linear(s: &ModelSession, query: &Query, evidence: &Evidence, opts: &super::ExactOptions) -> ExactOutcome {
    let Some((lo, hi)) = query.window else {
        return ExactOutcome::Probability { value: 0.0, cost: 0.0 };
    };
    let n = s.net.var_count();
    let mut focal = vec![false; s.net.cell_count()];
    for c in &evidence.focal_cells {
        focal[c.0] = true;
    }
    let keep_edge = focal_edge_filter(&focal);
    let Some(fixed) = forced_assignment(&s.net, &s.order, evidence, &focal, &keep_edge) else {
        return ExactOutcome::Inconsistent;
    };
    let observed: Vec<bool> = fixed.iter().map(Option::is_some).collect();
    let query_vars: Vec<usize> = query.path[..=query.path_pos(hi)]
        .iter()
        .map(|&c| VarId::gene(c).index())
        .collect();
    let soft: Vec<&super::SoftFactor> = evidence.soft.iter().filter(|sf| sf.support().is_some()).collect();
    let soft_parents: Vec<Vec<usize>> = soft
        .iter()
        .map(|sf| sf.path.iter().map(|&c| VarId::gene(c).index()).collect())
        .collect();
    let pruned = if opts.prune {
        match prune_for_query(&s.net, &query_vars, &observed, &soft_parents, &keep_edge) {
            Ok(p) => p,
            Err(e) => return ExactOutcome::OverBudget(e.to_string()),
        }
    } else {
        PrunedNet::unpruned(filtered_copy(&s.net, &keep_edge), soft.len())
    };

    let is_focal = |v: usize| focal[VarId::from_index(v).cell.0];
    let latent: Vec<bool> = (0..n)
        .map(|v| pruned.keep[v] && fixed[v].is_none() && !is_focal(v))
        .collect();
    let latent_count = latent.iter().filter(|&&l| l).count();
    if latent_count > opts.latent_limit {
        return ExactOutcome::TooManyLatents(latent_count);
    }
    let cost = 2f64.powi(latent_count as i32) * pruned.kept_count() as f64;
    if cost > opts.cost_limit {
        return ExactOutcome::OverBudget(format!("cost {cost:.3e} exceeds budget {:.3e}", opts.cost_limit));
    }
    let steps: Vec<usize> = s
        .order
        .iter()
        .copied()
        .filter(|&v| pruned.keep[v] && !pruned.external[v] && !is_focal(v))
        .collect();
    let focal_in: Vec<Vec<(usize, f64)>> = query.path[..=query.path_pos(hi)]
        .iter()
        .map(|&c| {
            pruned
                .net
                .parents(VarId::gene(c).index())
                .iter()
                .filter(|p| !is_focal(p.var))
                .map(|p| (p.var, p.weight))
                .collect()
        })
        .collect();
    let mut e = Enumerator {
        net: &pruned.net,
        steps,
        latent,
        value: fixed.iter().map(|f| f.unwrap_or(false)).collect(),
        soft: soft
            .iter()
            .zip(&pruned.soft_kept)
            .filter(|(_, &k)| k)
            .map(|(sf, _)| (sf.path.as_slice(), sf.likelihood.as_slice()))
            .collect(),
        focal_in,
        window_start: query.path_pos(lo),
        pmf: &query.pmf,
        acc: 0.0,
        z: 0.0,
        leaves: 0,
        deadline: opts.deadline,
        timed_out: false,
    };
    e.run(0, 1.0);
    if e.timed_out {
        return ExactOutcome::OverBudget("time budget exceeded".into());
    }
    if !(e.z > 0.0) {
        return ExactOutcome::Inconsistent;
    }
    ExactOutcome::Probability {
        value: (e.acc / e.z).min(1.0),
        cost,
    }
}

fn filtered_copy(net: &BayesNet, keep_edge: &dyn Fn(usize, usize) -> bool) -> BayesNet {
    let labels = (0..net.cell_count()).map(|c| net.cell_label(CellIdx(c)).to_string()).collect();
    let mut out = BayesNet::with_cells(labels);
    out.clamped = net.clamped;
    for e in net.edges() {
        if keep_edge(e.src.index(), e.dst.index()) {
            out.add_edge(e.src, e.dst, e.kind, e.weight).expect("copy of a valid edge");
        }
    }
    out
}
