//! Small directed-graph utilities over adjacency lists: strongly connected
//! components, closed classes and periods.

use alloc::vec;
use alloc::vec::Vec;

/// Strongly connected components. Returns `(component id per node, count)`.
/// Ids are assigned in Tarjan order, so every edge between different
/// components goes from a higher id to a lower one (sinks come first).
pub fn scc(adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    const UNSET: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSET; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next = 0usize;
    let mut ncomp = 0usize;

    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut ei)) = call.last_mut() {
            if *ei < adj[v].len() {
                let w = adj[v][*ei];
                *ei += 1;
                if index[w] == UNSET {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    (comp, ncomp)
}

pub fn is_strongly_connected(adj: &[Vec<usize>]) -> bool {
    adj.is_empty() || scc(adj).1 == 1
}

/// Components with no edge leaving them (the recurrent classes of a Markov
/// chain whose positive transitions are `adj`). Each class is sorted.
pub fn closed_classes(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let (comp, ncomp) = scc(adj);
    let mut closed = vec![true; ncomp];
    for (v, succ) in adj.iter().enumerate() {
        if succ.iter().any(|&w| comp[w] != comp[v]) {
            closed[comp[v]] = false;
        }
    }
    let mut classes = vec![Vec::new(); ncomp];
    for v in 0..adj.len() {
        if closed[comp[v]] {
            classes[comp[v]].push(v);
        }
    }
    let mut out: Vec<Vec<usize>> = classes.into_iter().filter(|c| !c.is_empty()).collect();
    out.sort();
    out
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Period of the strongly connected set `members` (edges leaving the set are
/// ignored). A single node without a self-loop has period 0.
pub fn period(adj: &[Vec<usize>], members: &[usize]) -> usize {
    let Some(&start) = members.first() else { return 0 };
    let mut inside = vec![false; adj.len()];
    for &m in members {
        inside[m] = true;
    }
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = alloc::collections::VecDeque::from([start]);
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !inside[v] {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let d = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, d);
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn two_cycle_has_period_two() {
        let adj = vec![vec![1], vec![0]];
        assert!(is_strongly_connected(&adj));
        assert_eq!(period(&adj, &[0, 1]), 2);
    }

    #[test]
    fn self_loop_is_aperiodic() {
        let adj = vec![vec![0, 1], vec![0]];
        assert_eq!(period(&adj, &[0, 1]), 1);
    }

    #[test]
    fn closed_classes_of_absorbing_chain() {
        // 0 -> 1 -> 1, 2 -> 2
        let adj = vec![vec![1], vec![1], vec![2]];
        assert!(!is_strongly_connected(&adj));
        assert_eq!(closed_classes(&adj), vec![vec![1], vec![2]]);
    }

    #[test]
    fn scc_ids_are_reverse_topological() {
        let adj = vec![vec![1], vec![2], vec![1]];
        let (comp, n) = scc(&adj);
        assert_eq!(n, 2);
        assert!(comp[0] > comp[1]);
        assert_eq!(comp[1], comp[2]);
    }
}
