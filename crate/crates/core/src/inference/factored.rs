use std::collections::HashMap;
use std::time::Instant;

use crate::cpd::noisy_or;
use crate::ingest::CellIdx;
use crate::logspace::log_first_acquisition;

use super::queries::{Query, TreeKind};
use super::ModelSession;

const FIXED_POINT_ROUNDS: usize = 4;

/// Survival from fixed sources, and `(cell, weight, other maturity)` of varying ones.
type SourceRow = (f64, Vec<(usize, f64, f64)>);

/// Posterior over the acquisition frame and lineage maturation onset of one
/// non-focal threshold event.
struct Event {
    tree: CellIdx,
    path: Vec<CellIdx>,
    /// Unnormalised expression likelihood per path position.
    pmf: Vec<f64>,
    /// `(acquisition position, onset frame, onset prior)`; an onset past the
    /// threshold frame stands for every later one.
    states: Vec<(usize, usize, f64)>,
    posterior: Vec<f64>,
    /// Posterior with one other tree's influence removed, keyed by that tree.
    cavity: HashMap<CellIdx, Vec<f64>>,
    /// Tree cells inheriting from the path, with the latest path frame each sees.
    scope: HashMap<usize, usize>,
    /// Maturity marginal of each scope cell under this event alone.
    mu: HashMap<usize, f64>,
    /// Other events with a conjugation in-edge from this event's tree.
    feeds: Vec<usize>,
    /// Trees with a conjugation edge into this event's path.
    sources: Vec<CellIdx>,
}

struct State<'s, 'a> {
    s: &'s ModelSession<'a>,
    focal_root: CellIdx,
    events: Vec<Event>,
    by_tree: HashMap<CellIdx, Vec<usize>>,
    /// Maturity marginal of every cell; focal cells stay 0 and are never read.
    mu: Vec<f64>,
    /// Maturity marginals as seen by cells of a given tree.
    cavity_mu: HashMap<CellIdx, Vec<f64>>,
    /// Path cells before their event's expression support.
    forced_off: Vec<bool>,
    cost: f64,
}

impl State<'_, '_> {
    fn gene_fixed_off(&self, c: CellIdx) -> bool {
        if self.forced_off[c.0] {
            return true;
        }
        match self.s.structure.tree_kind(c) {
            TreeKind::Recipient => true,
            TreeKind::Transconjugant => self.s.dataset.frame_of(c) == 0,
            TreeKind::Donor => false,
        }
    }

    fn is_focal(&self, c: CellIdx) -> bool {
        self.s.structure.root[c.0] == self.focal_root
    }

    /// Maturity of `cell` in state `st` of event `k`.
    fn maturity_given(&self, k: usize, cell: usize, st: usize) -> f64 {
        let ev = &self.events[k];
        let (pos, onset, _) = ev.states[st];
        let tau = self.s.dataset.frame_of(ev.path[0]) + pos;
        match ev.scope.get(&cell) {
            Some(&last) if tau <= last => {
                let f = self.s.dataset.frame_of(CellIdx(cell));
                if onset <= last {
                    1.0
                } else if f <= last {
                    0.0
                } else {
                    // branched off before onset: matures on its own
                    let g = &self.s.maturity;
                    let before = g[last - tau];
                    if before >= 1.0 {
                        1.0
                    } else {
                        ((g[f - tau] - before) / (1.0 - before)).clamp(0.0, 1.0)
                    }
                }
            }
            _ => 0.0,
        }
    }

    fn base_mu(&self) -> Vec<f64> {
        (0..self.s.dataset.cells.len())
            .map(|i| {
                let c = CellIdx(i);
                if !self.is_focal(c) && self.s.structure.tree_kind(c) == TreeKind::Donor {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn event_mu(&mut self, k: usize, posterior: &[f64]) -> HashMap<usize, f64> {
        let mut mu = HashMap::with_capacity(self.events[k].scope.len());
        for &cell in self.events[k].scope.keys() {
            let mut m = 0.0;
            for (pos, &pi) in posterior.iter().enumerate() {
                if pi > 0.0 {
                    m += pi * self.maturity_given(k, cell, pos);
                }
            }
            mu.insert(cell, m);
        }
        self.cost += (posterior.len() * mu.len()) as f64;
        mu
    }

    fn refresh_mu(&mut self) {
        let base = self.base_mu();
        self.mu = base.clone();
        let trees: Vec<CellIdx> = self.by_tree.keys().copied().collect();
        let mut cavity: HashMap<CellIdx, Vec<f64>> = trees.iter().map(|&t| (t, base.clone())).collect();
        for k in 0..self.events.len() {
            let post = self.events[k].posterior.clone();
            let mu = self.event_mu(k, &post);
            for (&cell, &m) in &mu {
                self.mu[cell] = self.mu[cell].max(m);
            }
            for &t in &trees {
                if t == self.events[k].tree {
                    continue;
                }
                let cmu = match self.events[k].cavity.get(&t).cloned() {
                    Some(p) => self.event_mu(k, &p),
                    None => mu.clone(),
                };
                let slot = cavity.get_mut(&t).expect("tree listed");
                for (cell, m) in cmu {
                    slot[cell] = slot[cell].max(m);
                }
            }
            self.events[k].mu = mu;
        }
        self.cavity_mu = cavity;
    }

    /// Maturity of `src` as seen from tree `viewer`.
    fn seen_mu(&self, viewer: CellIdx, src: CellIdx) -> f64 {
        self.cavity_mu.get(&viewer).map_or(self.mu[src.0], |m| m[src.0])
    }

    fn acquisition_hazard(&mut self, cell: CellIdx, own_tree: CellIdx, exclude: Option<CellIdx>) -> f64 {
        if self.gene_fixed_off(cell) {
            return 0.0;
        }
        let mut ws = Vec::new();
        for (src, w) in self.s.conjugation_in(cell) {
            self.cost += 1.0;
            let r = self.s.structure.root[src.0];
            if r == own_tree || r == self.focal_root || Some(r) == exclude {
                continue;
            }
            ws.push(w * self.seen_mu(own_tree, src));
        }
        noisy_or(&ws)
    }

    /// Likelihood of event `j`'s threshold evidence for each state of event
    /// `k` with non-zero weight, other sources at their marginals.
    fn downstream_likelihoods(&mut self, j: usize, k: usize, weight: &[f64]) -> Vec<f64> {
        let tree_k = self.events[k].tree;
        let tree_j = self.events[j].tree;
        let Some(last) = self.events[j].pmf.iter().rposition(|&p| p > 0.0) else {
            return vec![0.0; weight.len()];
        };
        // per path position: survival from fixed sources, and the sources in tree k
        let mut rows: Vec<Option<SourceRow>> = Vec::with_capacity(last + 1);
        for &c in &self.events[j].path[..=last] {
            if self.gene_fixed_off(c) {
                rows.push(None);
                continue;
            }
            let mut fixed = 1.0;
            let mut varying = Vec::new();
            for (src, w) in self.s.conjugation_in(c) {
                self.cost += 1.0;
                let r = self.s.structure.root[src.0];
                if r == tree_j || r == self.focal_root {
                    continue;
                }
                if r == tree_k {
                    let others = self.by_tree[&tree_k]
                        .iter()
                        .filter(|&&o| o != k)
                        .filter_map(|&o| self.events[o].mu.get(&src.0).copied())
                        .fold(0.0, f64::max);
                    varying.push((src.0, w, others));
                } else {
                    fixed *= 1.0 - w * self.seen_mu(tree_j, src);
                }
            }
            rows.push(Some((fixed, varying)));
        }
        let pmf = &self.events[j].pmf;
        let mut out = vec![0.0; weight.len()];
        for (st, slot) in out.iter_mut().enumerate() {
            if weight[st] <= 0.0 {
                continue;
            }
            let (mut survival, mut z) = (1.0, 0.0);
            for (pos, row) in rows.iter().enumerate() {
                let h = match row {
                    None => 0.0,
                    Some((fixed, varying)) => {
                        let mut none = *fixed;
                        for &(src, w, others) in varying {
                            none *= 1.0 - w * others.max(self.maturity_given(k, src, st));
                        }
                        1.0 - none
                    }
                };
                z += pmf[pos] * survival * h;
                survival *= 1.0 - h;
            }
            *slot = z;
        }
        self.cost += (weight.len() * rows.len()) as f64;
        out
    }

    fn update_posteriors(&mut self) {
        let trees: Vec<CellIdx> = self.by_tree.keys().copied().collect();
        for k in 0..self.events.len() {
            let tree = self.events[k].tree;
            let posterior = self.posterior_of(k, None);
            let mut cavity = HashMap::new();
            for &t in &trees {
                if t != tree && self.events[k].sources.contains(&t) {
                    let p = self.posterior_of(k, Some(t));
                    cavity.insert(t, p);
                }
            }
            let ev = &mut self.events[k];
            ev.posterior = posterior;
            ev.cavity = cavity;
        }
    }

    /// State posterior of event `k`, ignoring tree `exclude` if given.
    fn posterior_of(&mut self, k: usize, exclude: Option<CellIdx>) -> Vec<f64> {
        let (tree, path) = (self.events[k].tree, self.events[k].path.clone());
        let start = self.s.dataset.frame_of(path[0]);
        let h: Vec<f64> = path.iter().map(|&c| self.acquisition_hazard(c, tree, exclude)).collect();
        let mut survival = 1.0;
        let mut base: Vec<f64> = Vec::with_capacity(path.len());
        for i in 0..path.len() {
            base.push(self.events[k].pmf[i] * survival * h[i]);
            survival *= 1.0 - h[i];
        }
        // siblings share the acquisition on their common prefix
        for j in self.by_tree[&tree].clone() {
            if j == k {
                continue;
            }
            let other = self.events[j].path.clone();
            let shared = path.iter().zip(&other).take_while(|(a, b)| a == b).count();
            let mut after = 0.0;
            let mut survival = 1.0;
            for (p, &c) in other.iter().enumerate().skip(shared) {
                let h = self.acquisition_hazard(c, tree, exclude);
                after += self.events[j].pmf[p] * survival * h;
                survival *= 1.0 - h;
            }
            for (i, slot) in base.iter_mut().enumerate() {
                *slot *= if i < shared { self.events[j].pmf[i] } else { after };
            }
        }
        // explain-away: mature path cells contacting cells known to lack the gene
        let mut log_silent = vec![0.0; path.len() + 1];
        for (i, &c) in path.iter().enumerate().rev() {
            let mut l = 0.0;
            for &(dst, w) in self.s.conjugation_out(c) {
                self.cost += 1.0;
                if !self.is_focal(dst) && self.gene_fixed_off(dst) {
                    l += (-w).ln_1p();
                }
            }
            log_silent[i] = log_silent[i + 1] + l;
        }
        let mut post: Vec<f64> = self.events[k]
            .states
            .iter()
            .map(|&(pos, onset, prior)| base[pos] * prior * log_silent[(onset - start).min(path.len())].exp())
            .collect();
        // events this one can feed must still be explained
        for j in self.events[k].feeds.clone() {
            if Some(self.events[j].tree) == exclude {
                continue;
            }
            let z = self.downstream_likelihoods(j, k, &post);
            if z.iter().zip(&post).any(|(&z, &p)| z * p > 0.0) {
                for (p, z) in post.iter_mut().zip(z) {
                    *p *= z;
                }
            }
        }
        let total: f64 = post.iter().sum();
        if total > 0.0 {
            post.into_iter().map(|p| p / total).collect()
        } else {
            self.events[k].prior()
        }
    }
}

impl Event {
    fn prior(&self) -> Vec<f64> {
        normalised(&self.states.iter().map(|&(pos, _, p)| self.pmf[pos] * p).collect::<Vec<_>>())
    }
}

fn normalised(xs: &[f64]) -> Vec<f64> {
    let total: f64 = xs.iter().sum();
    if total > 0.0 {
        xs.iter().map(|x| x / total).collect()
    } else {
        vec![0.0; xs.len()]
    }
}

/// First-acquisition probability of the focal lineage with every source's
/// maturity replaced by its marginal.
pub(crate) fn factored_log(
    s: &ModelSession,
    query: &Query,
    deadline: Option<Instant>,
    cost_limit: f64,
) -> Result<(f64, f64), String> {
    let Some((lo, hi)) = query.window else {
        return Ok((f64::NEG_INFINITY, 0.0));
    };
    let d = s.dataset;
    let focal_root = s.structure.root[query.threshold_cell.0];
    let dt = d.frame_interval_min;
    let mut events = Vec::new();
    for (&tree, cells) in &s.structure.thresholds_by_root {
        if tree == focal_root {
            continue;
        }
        for &k in cells {
            let path = d.path_to(k);
            let t = d.frame_of(k) as i64;
            let pmf: Vec<f64> = path
                .iter()
                .map(|&c| s.config.expression_delay.frame_pmf(t - d.frame_of(c) as i64, dt))
                .collect();
            let start = d.frame_of(path[0]);
            let end = d.frame_of(k);
            let g = &s.maturity;
            let mut states = Vec::new();
            for (pos, &p) in pmf.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let tau = start + pos;
                for onset in tau..=end {
                    let lag = onset - tau;
                    let prior = g[lag] - if lag > 0 { g[lag - 1] } else { 0.0 };
                    if prior > 0.0 {
                        states.push((pos, onset, prior));
                    }
                }
                let late = 1.0 - g[end - tau];
                if late > 0.0 {
                    states.push((pos, end + 1, late));
                }
            }
            // latest path frame each tree cell inherits from: its lca with the threshold cell
            let mut scope: HashMap<usize, usize> = path.iter().map(|&c| (c.0, d.frame_of(c))).collect();
            for i in path[0].0..d.cells.len() {
                if s.structure.root[i] != tree || scope.contains_key(&i) {
                    continue;
                }
                if let Some(last) = d.effective_parent(CellIdx(i)).and_then(|p| scope.get(&p.0).copied()) {
                    scope.insert(i, last);
                }
            }
            events.push(Event {
                tree,
                path,
                pmf,
                states,
                posterior: Vec::new(),
                cavity: HashMap::new(),
                scope,
                mu: HashMap::new(),
                feeds: Vec::new(),
                sources: Vec::new(),
            });
        }
    }
    for ev in &mut events {
        ev.posterior = ev.prior();
    }
    let mut by_tree: HashMap<CellIdx, Vec<usize>> = HashMap::new();
    for (k, ev) in events.iter().enumerate() {
        by_tree.entry(ev.tree).or_default().push(k);
    }
    for j in 0..events.len() {
        let mut sources: Vec<CellIdx> = events[j]
            .path
            .iter()
            .flat_map(|&c| s.conjugation_in(c).map(|(src, _)| s.structure.root[src.0]))
            .filter(|&r| r != events[j].tree && r != focal_root)
            .collect();
        sources.sort_unstable();
        sources.dedup();
        for &r in &sources {
            for &k in by_tree.get(&r).map_or(&[][..], Vec::as_slice) {
                events[k].feeds.push(j);
            }
        }
        events[j].sources = sources;
    }
    let mut forced_off = vec![false; d.cells.len()];
    for ev in &events {
        let first = ev.pmf.iter().position(|&p| p > 0.0).unwrap_or(0);
        for c in &ev.path[..first] {
            forced_off[c.0] = true;
        }
    }
    let mut st = State {
        s,
        focal_root,
        events,
        by_tree,
        mu: vec![0.0; d.cells.len()],
        cavity_mu: HashMap::new(),
        forced_off,
        cost: 0.0,
    };
    st.refresh_mu();
    if !st.events.is_empty() {
        for _ in 0..FIXED_POINT_ROUNDS {
            st.update_posteriors();
            st.refresh_mu();
            if st.cost > cost_limit {
                return Err(format!("cost {:.3e} exceeds budget {cost_limit:.3e}", st.cost));
            }
            if deadline.is_some_and(|dl| Instant::now() > dl) {
                return Err("time budget exceeded".into());
            }
        }
    }
    let end = query.path_pos(hi);
    let mut h = Vec::with_capacity(end + 1);
    for &c in &query.path[..=end] {
        let mut ws = Vec::new();
        for (src, w) in s.conjugation_in(c) {
            st.cost += 1.0;
            if s.structure.root[src.0] != focal_root {
                ws.push(w * st.mu[src.0]);
            }
        }
        h.push(noisy_or(&ws));
    }
    if st.cost > cost_limit {
        return Err(format!("cost {:.3e} exceeds budget {cost_limit:.3e}", st.cost));
    }
    let log_pmf: Vec<f64> = query.pmf.iter().map(|p| p.ln()).collect();
    Ok((log_first_acquisition(&h, query.path_pos(lo), &log_pmf), st.cost))
}
