use super::{BayesNet, GraphError, Parent, VarId};

/// A network restricted to what one query needs.
///
/// Variable indices are unchanged. Dropped variables have no parents and are
/// never visited. `external` variables are observed and kept only because a
/// retained CPD conditions on them; their own CPD is a constant and ignored.
#[derive(Clone, Debug)]
pub struct PrunedNet {
    pub net: BayesNet,
    pub keep: Vec<bool>,
    pub external: Vec<bool>,
    /// Per soft factor: whether it still constrains the query.
    pub soft_kept: Vec<bool>,
}

impl PrunedNet {
    /// The whole network, nothing dropped.
    pub fn unpruned(net: BayesNet, soft_factors: usize) -> Self {
        let n = net.var_count();
        Self {
            net,
            keep: vec![true; n],
            external: vec![false; n],
            soft_kept: vec![true; soft_factors],
        }
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Restricts `net` to the query variables, their requisite ancestors and the
/// evidence that is not d-separated from them.
///
/// `observed[v]` marks hard evidence. Each entry of `soft_parents` is a
/// virtual observed child over the listed variables. Edges for which
/// `keep_edge(src, dst)` is false are removed first.
pub fn prune_for_query(
    net: &BayesNet,
    query: &[usize],
    observed: &[bool],
    soft_parents: &[Vec<usize>],
    keep_edge: &dyn Fn(usize, usize) -> bool,
) -> Result<PrunedNet, GraphError> {
    let n = net.var_count();
    if let Some(&bad) = query.iter().find(|&&q| q >= n) {
        return Err(GraphError::UnknownQueryTarget(bad));
    }
    let parents: Vec<Vec<Parent>> = (0..n)
        .map(|d| net.parents(d).iter().copied().filter(|p| keep_edge(p.var, d)).collect())
        .collect();

    // ancestral closure of query, hard evidence and soft-factor members
    let mut ancestral = vec![false; n];
    let mut stack: Vec<usize> = query.to_vec();
    stack.extend((0..n).filter(|&v| observed[v]));
    stack.extend(soft_parents.iter().flatten().copied());
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut ancestral[v], true) {
            continue;
        }
        stack.extend(parents[v].iter().map(|p| p.var).filter(|&p| !ancestral[p]));
    }

    let mut children = vec![Vec::new(); n];
    for (d, ps) in parents.iter().enumerate() {
        if ancestral[d] {
            for p in ps {
                children[p.var].push(d);
            }
        }
    }
    let mut soft_of = vec![Vec::new(); n];
    for (k, members) in soft_parents.iter().enumerate() {
        for &m in members {
            soft_of[m].push(k);
        }
    }

    // component of the query in the moral ancestral graph minus evidence
    let mut in_comp = vec![false; n];
    let mut stack: Vec<usize> = query.iter().copied().filter(|&q| !observed[q]).collect();
    let visit = |v: usize, stack: &mut Vec<usize>, in_comp: &mut Vec<bool>| {
        if !observed[v] && !in_comp[v] {
            in_comp[v] = true;
            stack.push(v);
        }
    };
    for &q in query {
        in_comp[q] = !observed[q];
    }
    while let Some(u) = stack.pop() {
        for p in &parents[u] {
            visit(p.var, &mut stack, &mut in_comp);
        }
        for &c in &children[u] {
            visit(c, &mut stack, &mut in_comp);
            for p in &parents[c] {
                visit(p.var, &mut stack, &mut in_comp);
            }
        }
        for &k in &soft_of[u] {
            for &m in &soft_parents[k] {
                visit(m, &mut stack, &mut in_comp);
            }
        }
    }

    let mut factor = in_comp.clone();
    for v in 0..n {
        if observed[v] && ancestral[v] && parents[v].iter().any(|p| in_comp[p.var]) {
            factor[v] = true;
        }
    }
    let soft_kept: Vec<bool> = soft_parents
        .iter()
        .map(|members| members.iter().any(|&m| in_comp[m]))
        .collect();
    let mut keep = factor.clone();
    for v in 0..n {
        if factor[v] {
            for p in &parents[v] {
                keep[p.var] = true;
            }
        }
    }
    for (members, &kept) in soft_parents.iter().zip(&soft_kept) {
        if kept {
            for &m in members {
                keep[m] = true;
            }
        }
    }
    let external: Vec<bool> = (0..n).map(|v| keep[v] && !factor[v]).collect();
    debug_assert!(external.iter().zip(observed).all(|(&e, &o)| !e || o));

    let mut pruned = BayesNet::with_cells((0..net.cell_count()).map(|c| net.cell_label(crate::ingest::CellIdx(c)).to_string()).collect());
    pruned.clamped = net.clamped;
    for (d, ps) in parents.into_iter().enumerate() {
        if factor[d] {
            for p in ps {
                pruned.add_edge(VarId::from_index(p.var), VarId::from_index(d), p.kind, p.weight)?;
            }
        }
    }
    Ok(PrunedNet {
        net: pruned,
        keep,
        external,
        soft_kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeKind;
    use crate::ingest::CellIdx;

    fn g(c: usize) -> VarId {
        VarId::gene(CellIdx(c))
    }
    fn m(c: usize) -> VarId {
        VarId::maturation(CellIdx(c))
    }

    #[test]
    fn disconnected_lineage_is_kept_alone() {
        // cells 0->1 form one lineage, 2->3 another, no contacts
        let mut net = BayesNet::with_cells((0..4).map(|i| i.to_string()).collect());
        for (a, b) in [(0, 1), (2, 3)] {
            net.add_edge(g(a), g(b), EdgeKind::Lineage, 1.0).unwrap();
            net.add_edge(m(a), m(b), EdgeKind::Lineage, 1.0).unwrap();
        }
        let observed = vec![false; 8];
        let p = prune_for_query(&net, &[g(1).index()], &observed, &[], &|_, _| true).unwrap();
        let kept: Vec<usize> = (0..8).filter(|&v| p.keep[v]).collect();
        assert_eq!(kept, vec![g(0).index(), g(1).index()]);
    }

    #[test]
    fn observed_donor_blocks_other_lineages() {
        // donor 0 (observed mature) conjugates into focal 1; donor also linked to 2
        let mut net = BayesNet::with_cells((0..3).map(|i| i.to_string()).collect());
        net.add_edge(m(0), g(1), EdgeKind::Conjugation, 0.4).unwrap();
        net.add_edge(m(0), g(2), EdgeKind::Conjugation, 0.4).unwrap();
        net.add_edge(m(2), m(0), EdgeKind::Delay, 0.4).unwrap();
        let mut observed = vec![false; 6];
        observed[m(0).index()] = true;
        let p = prune_for_query(&net, &[g(1).index()], &observed, &[], &|_, _| true).unwrap();
        assert!(p.keep[m(0).index()] && p.external[m(0).index()]);
        assert!(!p.keep[g(2).index()] && !p.keep[m(2).index()]);
    }

    #[test]
    fn unknown_target() {
        let net = BayesNet::with_cells(vec!["a".into()]);
        assert!(matches!(
            prune_for_query(&net, &[7], &[false, false], &[], &|_, _| true),
            Err(GraphError::UnknownQueryTarget(7))
        ));
    }
}
