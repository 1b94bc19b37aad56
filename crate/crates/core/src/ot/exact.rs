//! Exact W1 between uniform point clouds.
//!
//! Equal sizes reduce to a min-cost perfect matching (Hungarian method).
//! Unequal sizes are solved as an integral transportation problem: every
//! source point supplies `m / g` units and every sink point demands `n / g`
//! units (`g = gcd(n, m)`), solved by successive shortest paths with
//! Dijkstra on reduced costs.

/// Minimum-cost perfect matching cost for a square cost matrix.
pub(crate) fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    if n == 0 {
        return 0.0;
    }
    // Potentials u (rows) and v (columns), 1-based with a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut matched = vec![0usize; n + 1];
    for row in 1..=n {
        matched[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = matched[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r - 1][col - 1] - u[r] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if matched[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            matched[col0] = matched[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|col| cost[matched[col] - 1][col - 1]).sum()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Optimal transport cost between uniform marginals `1/n` (rows) and `1/m`
/// (columns) of an `n × m` cost matrix.
pub(crate) fn transport_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return 0.0;
    }
    if n == m {
        return assignment_cost(cost) / n as f64;
    }
    let g = gcd(n, m);
    let supply_each = (m / g) as i64;
    let demand_each = (n / g) as i64;
    let total_units = (n as i64) * supply_each;

    // Nodes: 0..n sources, n..n+m sinks, s = n+m, t = n+m+1.
    let s = n + m;
    let t = n + m + 1;
    let nodes = n + m + 2;
    let mut supply = vec![supply_each; n];
    let mut demand = vec![demand_each; m];
    let mut flow = vec![vec![0i64; m]; n];
    let mut potential = vec![0.0f64; nodes];
    let mut shipped = 0i64;

    while shipped < total_units {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        dist[s] = 0.0;
        loop {
            let mut node = usize::MAX;
            let mut best = f64::INFINITY;
            for (i, &d) in dist.iter().enumerate() {
                if !done[i] && d < best {
                    best = d;
                    node = i;
                }
            }
            if node == usize::MAX {
                break;
            }
            done[node] = true;
            let mut relax = |to: usize, edge_cost: f64, dist: &mut Vec<f64>| {
                let reduced = (edge_cost + potential[node] - potential[to]).max(0.0);
                let nd = best + reduced;
                if nd < dist[to] {
                    dist[to] = nd;
                    prev[to] = node;
                }
            };
            if node == s {
                for (i, &left) in supply.iter().enumerate() {
                    if left > 0 {
                        relax(i, 0.0, &mut dist);
                    }
                }
            } else if node < n {
                let i = node;
                for (j, &c) in cost[i].iter().enumerate() {
                    relax(n + j, c, &mut dist);
                }
                if supply[i] < supply_each {
                    relax(s, 0.0, &mut dist);
                }
            } else if node < n + m {
                let j = node - n;
                for i in 0..n {
                    if flow[i][j] > 0 {
                        relax(i, -cost[i][j], &mut dist);
                    }
                }
                if demand[j] > 0 {
                    relax(t, 0.0, &mut dist);
                }
            } else if node == t {
                for (j, &d) in demand.iter().enumerate() {
                    if d < demand_each {
                        relax(n + j, 0.0, &mut dist);
                    }
                }
            }
        }
        if !dist[t].is_finite() {
            break;
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }

        // Bottleneck along t ← … ← s.
        let mut amount = i64::MAX;
        let mut v = t;
        while v != s {
            let u = prev[v];
            let cap = if u == s {
                supply[v]
            } else if v == t {
                demand[u - n]
            } else if u < n && v >= n {
                i64::MAX
            } else {
                // sink u back to source v
                flow[v][u - n]
            };
            amount = amount.min(cap);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            if u == s {
                supply[v] -= amount;
            } else if v == t {
                demand[u - n] -= amount;
            } else if u < n && v >= n {
                flow[u][v - n] += amount;
            } else if u >= n && u < n + m && v < n {
                flow[v][u - n] -= amount;
            }
            v = u;
        }
        shipped += amount;
    }

    let total: f64 = flow
        .iter()
        .zip(cost)
        .flat_map(|(fr, cr)| fr.iter().zip(cr).map(|(&f, &c)| f as f64 * c))
        .sum();
    total / total_units as f64
}
