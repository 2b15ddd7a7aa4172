//! Exact linear assignment (Hungarian algorithm with potentials, O(n^3)).

/// Optimal assignment of a square cost matrix given in row-major order.
///
/// Returns `(total_cost, assignment)` where `assignment[row] = col`. Ties
/// are resolved towards the lowest column index, so the result is
/// deterministic for a given matrix.
pub fn solve(costs: &[f64], n: usize) -> (f64, Vec<usize>) {
    assert_eq!(costs.len(), n * n, "cost matrix must be square");
    if n == 0 {
        return (0.0, Vec::new());
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row matched to column j (1-based, 0 = free)
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    // Sum in row order from the original costs rather than the potentials.
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| costs[i * n + j])
        .sum();
    (total, assignment)
}
