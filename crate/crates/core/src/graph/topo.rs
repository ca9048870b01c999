use super::{BayesNet, GraphError, VarId};

/// Topological order of all variables, or a witness cycle.
pub fn assert_acyclic(net: &BayesNet) -> Result<Vec<usize>, GraphError> {
    let n = net.var_count();
    let children = net.children();
    let mut indegree: Vec<usize> = (0..n).map(|v| net.parents(v).len()).collect();
    // smallest index first keeps the order deterministic and close to time order
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
        (0..n).filter(|&v| indegree[v] == 0).map(std::cmp::Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(std::cmp::Reverse(c));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(GraphError::CyclicGraph {
        witness: find_cycle(net, &indegree),
    })
}

/// Walks parent links inside the unresolved remainder until a variable repeats.
fn find_cycle(net: &BayesNet, indegree: &[usize]) -> Vec<VarId> {
    let start = (0..indegree.len())
        .find(|&v| indegree[v] > 0)
        .expect("a cycle leaves some variable unresolved");
    let mut seen = vec![usize::MAX; indegree.len()];
    let mut walk = Vec::new();
    let mut v = start;
    while seen[v] == usize::MAX {
        seen[v] = walk.len();
        walk.push(v);
        v = net
            .parents(v)
            .iter()
            .map(|p| p.var)
            .find(|&p| indegree[p] > 0)
            .expect("unresolved variable has an unresolved parent");
    }
    // walk follows parents, so reverse to list edges in their direction
    let mut cycle: Vec<VarId> = walk[seen[v]..].iter().map(|&i| VarId::from_index(i)).collect();
    cycle.reverse();
    cycle
}
