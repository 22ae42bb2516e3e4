//! Exact transportation simplex for general (weighted, rectangular) discrete
//! optimal transport. Deterministic: Bland's rule with lowest-index pivots.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const BALANCE_TOL: f64 = 1e-9;
const REDUCED_COST_TOL: f64 = 1e-12;

/// Solve min Σ c_ij x_ij s.t. row sums = supply, column sums = demand.
/// Supply and demand must each sum to the same total (within tolerance).
/// Returns the optimal plan and its cost.
pub fn transportation_simplex(
    supply: &[f64],
    demand: &[f64],
    costs: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let m = supply.len();
    let n = demand.len();
    if costs.nrows() != m || costs.ncols() != n {
        return Err(Error::Shape(format!(
            "cost matrix is {}x{}, expected {}x{}",
            costs.nrows(),
            costs.ncols(),
            m,
            n
        )));
    }
    if supply.iter().any(|&s| s < 0.0) || demand.iter().any(|&d| d < 0.0) {
        return Err(Error::Domain("negative supply or demand".into()));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if (total_s - total_d).abs() > BALANCE_TOL * total_s.max(total_d).max(1.0) {
        return Err(Error::Domain(format!(
            "unbalanced problem: supply {total_s} vs demand {total_d}"
        )));
    }

    let mut plan = DMatrix::zeros(m, n);
    // basis cells, kept sorted by (i, j) for deterministic pivot order
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);

    northwest_corner(supply, demand, &mut plan, &mut basis);

    loop {
        let (u, v) = compute_duals(m, n, &basis, costs);
        // Bland's rule: first cell (row-major) with negative reduced cost
        let mut entering = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if basis.contains(&(i, j)) {
                    continue;
                }
                if costs[(i, j)] - u[i] - v[j] < -REDUCED_COST_TOL {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some(enter) = entering else { break };

        let cycle = find_cycle(m, n, &basis, enter);
        // odd positions in the cycle lose flow
        let mut theta = f64::INFINITY;
        let mut leave = cycle[1];
        for (k, &cell) in cycle.iter().enumerate().skip(1).step_by(2) {
            let f = plan[cell];
            if f < theta - REDUCED_COST_TOL || (f < theta + REDUCED_COST_TOL && cell < leave) {
                theta = theta.min(f);
                leave = cell;
            }
            let _ = k;
        }
        for (k, &cell) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                plan[cell] += theta;
            } else {
                plan[cell] -= theta;
            }
        }
        plan[leave] = 0.0;
        let pos = basis.iter().position(|&c| c == leave).expect("leaving cell in basis");
        basis.remove(pos);
        let ins = basis.binary_search(&enter).unwrap_err();
        basis.insert(ins, enter);
    }

    // clamp pivot round-off
    for x in plan.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let cost = plan
        .iter()
        .zip(costs.iter())
        .map(|(&x, &c)| x * c)
        .sum::<f64>();
    Ok((plan, cost))
}

/// Northwest-corner initial basic feasible solution. Produces exactly
/// m + n - 1 basic cells, inserting zero-flow cells on degenerate ties.
fn northwest_corner(
    supply: &[f64],
    demand: &[f64],
    plan: &mut DMatrix<f64>,
    basis: &mut Vec<(usize, usize)>,
) {
    let m = supply.len();
    let n = demand.len();
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let x = s[i].min(d[j]);
        plan[(i, j)] = x;
        basis.push((i, j));
        s[i] -= x;
        d[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        // on a tie advance the row only, leaving a zero basic cell next step
        if s[i] <= d[j] && i < m - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Dual potentials from the spanning-tree basis: u[i] + v[j] = c_ij on basic
/// cells, anchored at u[0] = 0.
fn compute_duals(
    m: usize,
    n: usize,
    basis: &[(usize, usize)],
    costs: &DMatrix<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[0] = 0.0;
    let mut remaining: Vec<(usize, usize)> = basis.to_vec();
    while !remaining.is_empty() {
        let before = remaining.len();
        remaining.retain(|&(i, j)| {
            if !u[i].is_nan() {
                v[j] = costs[(i, j)] - u[i];
                false
            } else if !v[j].is_nan() {
                u[i] = costs[(i, j)] - v[j];
                false
            } else {
                true
            }
        });
        assert!(
            remaining.len() < before,
            "basis is not connected: duals cannot be propagated"
        );
    }
    (u, v)
}

/// Unique alternating cycle created by adding `enter` to the basis tree.
/// Returned as a cell sequence starting at `enter`, alternating row/column
/// moves; even positions gain flow, odd positions lose it.
fn find_cycle(m: usize, n: usize, basis: &[(usize, usize)], enter: (usize, usize)) -> Vec<(usize, usize)> {
    // bipartite node graph: rows are 0..m, columns are m..m+n
    let mut adj: Vec<Vec<(usize, (usize, usize))>> = vec![Vec::new(); m + n];
    for &(i, j) in basis {
        adj[i].push((m + j, (i, j)));
        adj[m + j].push((i, (i, j)));
    }
    // path through basic cells from enter's column node back to its row node
    let start = m + enter.1;
    let goal = enter.0;
    let mut prev: Vec<Option<(usize, (usize, usize))>> = vec![None; m + n];
    let mut visited = vec![false; m + n];
    visited[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == goal {
            break;
        }
        for &(next, cell) in &adj[node] {
            if !visited[next] {
                visited[next] = true;
                prev[next] = Some((node, cell));
                queue.push_back(next);
            }
        }
    }
    let mut cells = vec![enter];
    let mut node = goal;
    while node != start {
        let (parent, cell) = prev[node].expect("path through basis exists");
        cells.push(cell);
        node = parent;
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_instance() {
        // classic 3x3 with known optimum
        let supply = [20.0, 30.0, 25.0];
        let demand = [10.0, 35.0, 30.0];
        let costs = DMatrix::from_row_slice(3, 3, &[2.0, 3.0, 1.0, 5.0, 4.0, 8.0, 5.0, 6.0, 8.0]);
        let (plan, cost) = transportation_simplex(&supply, &demand, &costs).unwrap();
        assert!((cost - brute_force(&supply, &demand, &costs)).abs() < 1e-9);
        for i in 0..3 {
            assert!((plan.row(i).sum() - supply[i]).abs() < 1e-9);
        }
        for j in 0..3 {
            assert!((plan.column(j).sum() - demand[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_supplies() {
        let supply = [0.5, 0.5];
        let demand = [0.5, 0.5];
        let costs = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (plan, cost) = transportation_simplex(&supply, &demand, &costs).unwrap();
        assert!(cost.abs() < 1e-12);
        assert!((plan[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((plan[(1, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbalanced() {
        let costs = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(transportation_simplex(&[1.0], &[2.0], &costs).is_err());
    }

    #[test]
    fn random_instances_match_lp_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let m = 1 + rng.random_range(0..4usize);
            let n = 1 + rng.random_range(0..4usize);
            let mut supply: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.1).collect();
            let mut demand: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
            let ts: f64 = supply.iter().sum();
            let td: f64 = demand.iter().sum();
            supply.iter_mut().for_each(|s| *s /= ts);
            demand.iter_mut().for_each(|d| *d /= td);
            let costs = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>());
            let (plan, cost) = transportation_simplex(&supply, &demand, &costs).unwrap();
            for i in 0..m {
                assert!((plan.row(i).sum() - supply[i]).abs() < 1e-9);
            }
            for j in 0..n {
                assert!((plan.column(j).sum() - demand[j]).abs() < 1e-9);
            }
            let oracle = brute_force(&supply, &demand, &costs);
            assert!((cost - oracle).abs() < 1e-7, "{cost} vs {oracle}");
        }
    }

    /// Exact LP oracle for tiny instances: every vertex of the transportation
    /// polytope corresponds to a spanning tree of the bipartite support graph,
    /// so enumerate all edge subsets of size m + n - 1, solve the (unique)
    /// tree flow by leaf elimination, and take the cheapest feasible one.
    fn brute_force(supply: &[f64], demand: &[f64], costs: &DMatrix<f64>) -> f64 {
        let m = supply.len();
        let n = demand.len();
        let edges: Vec<(usize, usize)> =
            (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let k = m + n - 1;
        let mut best = f64::INFINITY;
        let mut pick = vec![0usize; k];
        enumerate(&edges, 0, 0, &mut pick, &mut |chosen| {
            if let Some(cost) = tree_flow_cost(supply, demand, costs, chosen) {
                if cost < best {
                    best = cost;
                }
            }
        });
        best
    }

    fn enumerate(
        edges: &[(usize, usize)],
        start: usize,
        depth: usize,
        pick: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for e in start..edges.len() {
            pick[depth] = e;
            enumerate(edges, e + 1, depth + 1, pick, f);
        }
    }

    /// Flow on a candidate tree basis via leaf elimination; None if the
    /// subset is not a tree or the flow goes negative.
    fn tree_flow_cost(
        supply: &[f64],
        demand: &[f64],
        costs: &DMatrix<f64>,
        chosen: &[usize],
    ) -> Option<f64> {
        let m = supply.len();
        let n = demand.len();
        let edges: Vec<(usize, usize)> =
            (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        // node balances: rows positive, columns negative
        let mut bal: Vec<f64> = supply
            .iter()
            .copied()
            .chain(demand.iter().map(|&d| -d))
            .collect();
        let mut alive: Vec<(usize, usize, usize)> = chosen
            .iter()
            .map(|&e| (edges[e].0, m + edges[e].1, e))
            .collect();
        let mut cost = 0.0;
        while !alive.is_empty() {
            let mut degree = vec![0usize; m + n];
            for &(a, b, _) in &alive {
                degree[a] += 1;
                degree[b] += 1;
            }
            let leaf_pos = alive
                .iter()
                .position(|&(a, b, _)| degree[a] == 1 || degree[b] == 1)?;
            let (a, b, e) = alive.swap_remove(leaf_pos);
            let leaf = if degree[a] == 1 { a } else { b };
            let other = if leaf == a { b } else { a };
            let flow = bal[leaf].abs();
            if bal[leaf] < -1e-12 && leaf < m {
                return None;
            }
            if bal[leaf] > 1e-12 && leaf >= m {
                return None;
            }
            bal[other] += bal[leaf];
            bal[leaf] = 0.0;
            cost += flow * costs[(edges[e].0, edges[e].1)];
        }
        if bal.iter().any(|&x| x.abs() > 1e-9) {
            return None;
        }
        Some(cost)
    }
}
