use super::CsrMatrix;
use std::collections::VecDeque;

/// Reverse Cuthill–McKee ordering of the symmetrized sparsity pattern.
///
/// Returns `perm` with `perm[new] = old`. Each connected component starts
/// from a pseudo-peripheral node; neighbours are visited by increasing
/// degree with ties broken by index, so the ordering is deterministic.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        // lowest-degree unvisited node, ties by index
        let seed = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)) {
            Some(s) => s,
            None => break,
        };
        let start = pseudo_peripheral(seed, &adj, &degree, &visited);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>], blocked: &[bool]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    level[start] = Some(0);
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &w in &adj[v] {
            if !blocked[w] && level[w].is_none() {
                level[w] = Some(lv + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize], blocked: &[bool]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(current, adj, blocked);
        let max_level = levels.iter().flatten().copied().max().unwrap_or(0);
        let candidate = (0..adj.len())
            .filter(|&i| levels[i] == Some(max_level))
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
        if max_level <= ecc {
            break;
        }
        ecc = max_level;
        current = candidate;
    }
    current
}
