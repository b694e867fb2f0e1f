//! Dense linear assignment.
//!
//! [`solve`] is the Jonker–Volgenant shortest augmenting path method: column
//! reduction followed by Dijkstra augmentation over reduced costs. The
//! augmenting row reduction phase of the original method is left out; on
//! squared-distance costs it costs more than it saves. The solver is exact
//! for finite costs and fully deterministic. [`sinkhorn_cost`] is an entropic approximation kept for
//! exploratory work.

use crate::error::{Error, Result};
use crate::velocity::Velocity;

/// Square cost matrix stored row-major.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::SizeMismatch { expected: n * n, got: data.len() });
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("assignment costs must be finite".into()));
        }
        Ok(CostMatrix { n, data })
    }

    /// Squared Euclidean costs between two equal-size point sets.
    pub fn squared_distances(a: &[Velocity], b: &[Velocity]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::SizeMismatch { expected: a.len(), got: b.len() });
        }
        let n = a.len();
        let mut data = Vec::with_capacity(n * n);
        for p in a {
            for q in b {
                data.push(p.dist2(q));
            }
        }
        CostMatrix::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Optimal assignment: row `i` goes to column `row_to_col[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    /// Sum of the assigned costs, accumulated in row order.
    pub total: f64,
}

impl Assignment {
    pub fn col_to_row(&self) -> Vec<usize> {
        let mut inv = vec![0; self.row_to_col.len()];
        for (i, &j) in self.row_to_col.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }
}

const NONE: usize = usize::MAX;

pub fn solve(cost: &CostMatrix) -> Assignment {
    let n = cost.n;
    if n == 0 {
        return Assignment { row_to_col: vec![], total: 0.0 };
    }
    if n == 1 {
        return Assignment { row_to_col: vec![0], total: cost.get(0, 0) };
    }
    let mut x = vec![NONE; n]; // row -> col
    let mut y = vec![NONE; n]; // col -> row
    let mut v = vec![f64::INFINITY; n];
    let free_rows = column_reduction(cost, &mut x, &mut y, &mut v);
    if !free_rows.is_empty() {
        augment(cost, &free_rows, &mut x, &mut y, &mut v);
    }
    let total = x.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Assignment { row_to_col: x, total }
}

fn column_reduction(cost: &CostMatrix, x: &mut [usize], y: &mut [usize], v: &mut [f64]) -> Vec<usize> {
    let n = cost.n;
    for i in 0..n {
        let row = cost.row(i);
        for j in 0..n {
            if row[j] < v[j] {
                v[j] = row[j];
                y[j] = i;
            }
        }
    }
    let mut unique = vec![true; n];
    for j in (0..n).rev() {
        let i = y[j];
        if x[i] == NONE {
            x[i] = j;
        } else {
            unique[i] = false;
            y[j] = NONE;
        }
    }
    let mut free = Vec::new();
    for i in 0..n {
        if x[i] == NONE {
            free.push(i);
        } else if unique[i] {
            let j = x[i];
            let row = cost.row(i);
            let mut min = f64::INFINITY;
            for j2 in 0..n {
                if j2 != j {
                    let c = row[j2] - v[j2];
                    if c < min {
                        min = c;
                    }
                }
            }
            v[j] -= min;
        }
    }
    free
}

fn augment(cost: &CostMatrix, free_rows: &[usize], x: &mut [usize], y: &mut [usize], v: &mut [f64]) {
    let n = cost.n;
    let mut pred = vec![0usize; n];
    let mut cols: Vec<usize> = (0..n).collect();
    let mut d = vec![0.0; n];
    for &free_i in free_rows {
        let mut j = find_path(cost, free_i, y, v, &mut pred, &mut cols, &mut d);
        loop {
            let i = pred[j];
            y[j] = i;
            let next = x[i];
            x[i] = j;
            j = next;
            if i == free_i {
                break;
            }
        }
    }
}

/// Dijkstra over reduced costs from `start`; returns the free column reached
/// and updates the column duals of the settled set.
fn find_path(
    cost: &CostMatrix,
    start: usize,
    y: &[usize],
    v: &mut [f64],
    pred: &mut [usize],
    cols: &mut [usize],
    d: &mut [f64],
) -> usize {
    let n = cost.n;
    let row = cost.row(start);
    for j in 0..n {
        cols[j] = j;
        d[j] = row[j] - v[j];
        pred[j] = start;
    }
    let mut lo = 0usize;
    let mut hi = 0usize;
    let mut n_ready = 0usize;
    let mut final_j = NONE;
    let mut mind = 0.0;
    while final_j == NONE {
        if lo == hi {
            n_ready = lo;
            // Collect all columns at the current minimum distance.
            hi = lo + 1;
            mind = d[cols[lo]];
            for k in hi..n {
                let j = cols[k];
                if d[j] <= mind {
                    if d[j] < mind {
                        hi = lo;
                        mind = d[j];
                    }
                    cols[k] = cols[hi];
                    cols[hi] = j;
                    hi += 1;
                }
            }
            for &j in &cols[lo..hi] {
                if y[j] == NONE {
                    final_j = j;
                    break;
                }
            }
        }
        if final_j == NONE {
            // Scan rows assigned to the columns at minimum distance.
            while lo != hi && final_j == NONE {
                let j = cols[lo];
                lo += 1;
                let i = y[j];
                let crow = cost.row(i);
                let h = crow[j] - v[j] - mind;
                let mut k = hi;
                while k < n {
                    let j = cols[k];
                    let cred = crow[j] - v[j] - h;
                    if cred < d[j] {
                        d[j] = cred;
                        pred[j] = i;
                        if cred == mind {
                            if y[j] == NONE {
                                final_j = j;
                                break;
                            }
                            cols[k] = cols[hi];
                            cols[hi] = j;
                            hi += 1;
                        }
                    }
                    k += 1;
                }
            }
        }
    }
    for &j in &cols[..n_ready] {
        v[j] += d[j] - mind;
    }
    final_j
}

/// Entropically regularized transport cost between two uniform point sets,
/// computed with log-domain Sinkhorn iterations. Returns the transport cost
/// `Σ P_ij C_ij` of the regularized plan, which upper-bounds the exact optimum
/// and converges to it as `epsilon → 0`.
pub fn sinkhorn_cost(cost: &CostMatrix, epsilon: f64, max_iter: usize, tol: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = cost.n;
    if n == 0 {
        return Ok(0.0);
    }
    let log_w = -(n as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let lse = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = vals.collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + vals.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    for _ in 0..max_iter {
        for i in 0..n {
            f[i] = -epsilon
                * lse(&mut (0..n).map(|j| (g[j] - cost.get(i, j)) / epsilon + log_w));
        }
        let mut change: f64 = 0.0;
        for j in 0..n {
            let new = -epsilon
                * lse(&mut (0..n).map(|i| (f[i] - cost.get(i, j)) / epsilon + log_w));
            change = change.max((new - g[j]).abs());
            g[j] = new;
        }
        if change < tol {
            break;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = cost.get(i, j);
            total += ((f[i] + g[j] - c) / epsilon + 2.0 * log_w).exp() * c;
        }
    }
    Ok(total * n as f64)
}

/// Exhaustive minimum over all permutations (Heap's algorithm); for tests and
/// tiny instances only.
pub fn brute_force(cost: &CostMatrix) -> Assignment {
    let n = cost.n;
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>();
    let mut best = Assignment { row_to_col: perm.clone(), total: eval(&perm) };
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let t = eval(&perm);
            if t < best.total {
                best = Assignment { row_to_col: perm.clone(), total: t };
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gamma_sample, stream, uniform, StreamRole};

    fn is_permutation(p: &[usize]) -> bool {
        let mut seen = vec![false; p.len()];
        for &j in p {
            if j >= p.len() || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        true
    }

    #[test]
    fn matches_brute_force_on_small_random_instances() {
        let mut rng = stream(11, 0, StreamRole::Custom(1));
        for n in 1..=8 {
            for _ in 0..20 {
                let data = (0..n * n).map(|_| uniform(&mut rng)).collect();
                let c = CostMatrix::new(n, data).unwrap();
                let a = solve(&c);
                let b = brute_force(&c);
                assert!(is_permutation(&a.row_to_col));
                assert_eq!(a.total, b.total);
            }
        }
    }

    #[test]
    fn integer_costs_with_ties() {
        let mut rng = stream(12, 0, StreamRole::Custom(1));
        for n in 2..=7 {
            for _ in 0..30 {
                let data = (0..n * n).map(|_| (uniform(&mut rng) * 4.0).floor()).collect();
                let c = CostMatrix::new(n, data).unwrap();
                assert_eq!(solve(&c).total, brute_force(&c).total);
            }
        }
    }

    #[test]
    fn point_clouds_match_brute_force() {
        let mut rng = stream(13, 0, StreamRole::Custom(1));
        for n in 2..=8 {
            let a = gamma_sample(&mut rng, n);
            let b = gamma_sample(&mut rng, n);
            let c = CostMatrix::squared_distances(&a, &b).unwrap();
            assert_eq!(solve(&c).total, brute_force(&c).total);
        }
    }

    /// Textbook O(n³) Hungarian method with row and column potentials.
    fn hungarian(c: &CostMatrix) -> f64 {
        let n = c.n();
        let inf = f64::INFINITY;
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; n + 1];
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
                    if !used[j] {
                        let cur = c.get(i0 - 1, j - 1) - u[i0] - v[j];
                        if cur < minv[j] {
                            minv[j] = cur;
                            way[j] = j0;
                        }
                        if minv[j] < delta {
                            delta = minv[j];
                            j1 = j;
                        }
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
        (1..=n).map(|j| c.get(p[j] - 1, j - 1)).sum()
    }

    #[test]
    fn matches_hungarian_on_medium_instances() {
        let mut rng = stream(16, 0, StreamRole::Custom(1));
        for n in [50, 120, 250] {
            let a = gamma_sample(&mut rng, n);
            let b = gamma_sample(&mut rng, n);
            let c = CostMatrix::squared_distances(&a, &b).unwrap();
            let ours = solve(&c).total;
            let reference = hungarian(&c);
            assert!((ours - reference).abs() <= 1e-9 * reference, "{ours} vs {reference}");
            let data = (0..n * n).map(|_| (uniform(&mut rng) * 5.0).floor()).collect();
            let c = CostMatrix::new(n, data).unwrap();
            assert_eq!(solve(&c).total, hungarian(&c));
        }
    }

    #[test]
    fn larger_instance_satisfies_dual_certificate() {
        // Optimality certificate: a feasible dual (u, v) with u_i + v_j ≤ c_ij
        // whose value equals the primal cost.
        let mut rng = stream(14, 0, StreamRole::Custom(1));
        let n = 300;
        let a = gamma_sample(&mut rng, n);
        let b = gamma_sample(&mut rng, n);
        let c = CostMatrix::squared_distances(&a, &b).unwrap();
        let sol = solve(&c);
        assert!(is_permutation(&sol.row_to_col));
        // Recover duals by Bellman–Ford on the residual graph is overkill; use
        // the fact that no improving 2-swap or 3-cycle should exist.
        let p = &sol.row_to_col;
        for i in 0..n {
            for k in (i + 1)..n {
                let now = c.get(i, p[i]) + c.get(k, p[k]);
                let swapped = c.get(i, p[k]) + c.get(k, p[i]);
                assert!(swapped >= now - 1e-12);
            }
        }
    }

    #[test]
    fn sinkhorn_upper_bounds_and_approaches_exact() {
        let mut rng = stream(15, 0, StreamRole::Custom(1));
        let a = gamma_sample(&mut rng, 20);
        let b = gamma_sample(&mut rng, 20);
        let c = CostMatrix::squared_distances(&a, &b).unwrap();
        let exact = solve(&c).total;
        let approx = sinkhorn_cost(&c, 1e-3, 20000, 1e-12).unwrap();
        assert!(approx >= exact - 1e-9);
        assert!(approx - exact < 0.05 * exact, "{approx} vs {exact}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CostMatrix::new(2, vec![0.0; 3]).is_err());
        assert!(CostMatrix::new(1, vec![f64::NAN]).is_err());
        assert!(CostMatrix::squared_distances(&[Velocity::ZERO], &[]).is_err());
    }
}
