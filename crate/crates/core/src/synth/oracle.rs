use thiserror::Error;

use crate::graph::{assert_acyclic, BayesNet, GraphError, PrunedNet, VarId};
use crate::inference::SoftFactor;

/// Largest number of unobserved variables the oracle will enumerate.
pub const ORACLE_LIMIT: usize = 22;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} unobserved variables exceed the enumeration limit")]
    TooLarge(usize),
    #[error("evidence has probability zero")]
    ZeroEvidence,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `P(target | evidence)` by summing the full joint over every unobserved
/// variable. Observed variables without parents are treated as inputs and
/// contribute no factor.
pub fn enumerate_joint(net: &BayesNet, evidence: &[(VarId, bool)], target: &[(VarId, bool)]) -> Result<f64, OracleError> {
    enumerate_joint_with(&PrunedNet::unpruned(net.clone(), 0), evidence, &[], target)
}

/// As [`enumerate_joint`] on a pruned network, with soft factors multiplied
/// into the joint.
pub fn enumerate_joint_with(
    pruned: &PrunedNet,
    evidence: &[(VarId, bool)],
    soft: &[SoftFactor],
    target: &[(VarId, bool)],
) -> Result<f64, OracleError> {
    let net = &pruned.net;
    let n = net.var_count();
    let mut fixed: Vec<Option<bool>> = vec![None; n];
    for &(v, val) in evidence {
        fixed[v.index()] = Some(val);
    }
    let order: Vec<usize> = assert_acyclic(net)?
        .into_iter()
        .filter(|&v| pruned.keep[v] && !pruned.external[v])
        .collect();
    let free = order.iter().filter(|&&v| fixed[v].is_none()).count();
    if free > ORACLE_LIMIT {
        return Err(OracleError::TooLarge(free));
    }
    let mut value: Vec<bool> = fixed.iter().map(|f| f.unwrap_or(false)).collect();
    let target: Vec<(usize, bool)> = target.iter().map(|&(v, b)| (v.index(), b)).collect();
    let soft: Vec<(Vec<usize>, &[f64])> = soft
        .iter()
        .map(|sf| (sf.path.iter().map(|&c| VarId::gene(c).index()).collect(), sf.likelihood.as_slice()))
        .collect();
    let mut totals = (0.0, 0.0);
    walk(net, &order, &fixed, &mut value, 0, 1.0, &soft, &target, &mut totals);
    if !(totals.0 > 0.0) {
        return Err(OracleError::ZeroEvidence);
    }
    Ok(totals.1 / totals.0)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    net: &BayesNet,
    order: &[usize],
    fixed: &[Option<bool>],
    value: &mut Vec<bool>,
    step: usize,
    weight: f64,
    soft: &[(Vec<usize>, &[f64])],
    target: &[(usize, bool)],
    totals: &mut (f64, f64),
) {
    if step == order.len() {
        let mut w = weight;
        for (vars, lik) in soft {
            w *= vars.iter().position(|&v| value[v]).map_or(0.0, |i| lik[i]);
        }
        totals.0 += w;
        if target.iter().all(|&(v, b)| value[v] == b) {
            totals.1 += w;
        }
        return;
    }
    let v = order[step];
    if fixed[v].is_some() && net.parents(v).is_empty() {
        // observed roots are exogenous inputs
        return walk(net, order, fixed, value, step + 1, weight, soft, target, totals);
    }
    let off: f64 = net
        .parents(v)
        .iter()
        .filter(|p| value[p.var])
        .map(|p| 1.0 - p.weight)
        .product();
    let choices: &[bool] = match fixed[v] {
        Some(true) => &[true],
        Some(false) => &[false],
        None => &[false, true],
    };
    for &val in choices {
        let p = if val { 1.0 - off } else { off };
        if p > 0.0 {
            value[v] = val;
            walk(net, order, fixed, value, step + 1, weight * p, soft, target, totals);
        }
    }
    value[v] = fixed[v].unwrap_or(false);
}
