//! Exact 2-Wasserstein distance between finitely supported distributions.
//!
//! Equal-size uniform distributions reduce to an assignment problem
//! (Birkhoff): exhaustive permutation search up to [`EXHAUSTIVE_MAX`] atoms,
//! Hungarian algorithm beyond. Arbitrary weights go through a
//! transportation simplex.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{DiscreteDistribution, EmpiricalDistribution};

pub const EXHAUSTIVE_MAX: usize = 8;

const SIMPLEX_MAX_PIVOTS: usize = 100_000;

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cost_matrix(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<Vec<f64>> {
    a.iter().map(|x| b.iter().map(|y| sq_dist(x, y)).collect()).collect()
}

/// Sum of `cost[i][perm[i]]` in row order.
fn permutation_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Optimal assignment by enumerating all `n!` permutations (Heap's algorithm).
/// Returns `(total cost, permutation)`.
pub fn assignment_exhaustive(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (permutation_cost(cost, &perm), perm.clone());
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let v = permutation_cost(cost, &perm);
            if v < best.0 {
                best = (v, perm.clone());
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Optimal assignment by the O(n³) Hungarian method with row/column
/// potentials. Returns `(total cost, permutation)`.
pub fn assignment_hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-indexed potentials; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    (permutation_cost(cost, &perm), perm)
}

/// Minimum-cost transport plan between `supply` and `demand` (both summing
/// to one) by the transportation simplex: north-west corner start, then
/// MODI potentials and cycle pivots. Returns the optimal total cost.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    let (m, k) = (supply.len(), demand.len());
    const EPS: f64 = 1e-15;
    let mut flow = vec![vec![0.0; k]; m];
    let mut basic = vec![vec![false; k]; m];

    // North-west corner; keeps exactly m + k - 1 basic cells.
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let x = a[i].min(b[j]).max(0.0);
        flow[i][j] = x;
        basic[i][j] = true;
        a[i] -= x;
        b[j] -= x;
        if i == m - 1 && j == k - 1 {
            break;
        }
        if (a[i] <= EPS && i < m - 1) || j == k - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }

    for _ in 0..SIMPLEX_MAX_PIVOTS {
        // Potentials u_i + v_j = c_ij on the basis tree.
        let mut pu = vec![f64::NAN; m];
        let mut pv = vec![f64::NAN; k];
        pu[0] = 0.0;
        let mut changed = true;
        while changed {
            changed = false;
            for r in 0..m {
                for c in 0..k {
                    if !basic[r][c] {
                        continue;
                    }
                    if pu[r].is_finite() && !pv[c].is_finite() {
                        pv[c] = cost[r][c] - pu[r];
                        changed = true;
                    } else if pv[c].is_finite() && !pu[r].is_finite() {
                        pu[r] = cost[r][c] - pv[c];
                        changed = true;
                    }
                }
            }
        }
        let mut entering = None;
        let mut best = -1e-12;
        for r in 0..m {
            for c in 0..k {
                if basic[r][c] {
                    continue;
                }
                let d = cost[r][c] - pu[r] - pv[c];
                if d < best {
                    best = d;
                    entering = Some((r, c));
                }
            }
        }
        let Some((er, ec)) = entering else {
            let total = (0..m).flat_map(|r| (0..k).map(move |c| (r, c))).map(|(r, c)| flow[r][c] * cost[r][c]).sum();
            return Ok(total);
        };

        // Path in the basis tree from row er to column ec (rows are nodes
        // 0..m, columns m..m+k).
        let nodes = m + k;
        let mut prev = vec![usize::MAX; nodes];
        let mut queue = std::collections::VecDeque::from([er]);
        prev[er] = er;
        while let Some(node) = queue.pop_front() {
            if node == m + ec {
                break;
            }
            if node < m {
                for c in 0..k {
                    if basic[node][c] && prev[m + c] == usize::MAX {
                        prev[m + c] = node;
                        queue.push_back(m + c);
                    }
                }
            } else {
                let c = node - m;
                for r in 0..m {
                    if basic[r][c] && prev[r] == usize::MAX {
                        prev[r] = node;
                        queue.push_back(r);
                    }
                }
            }
        }
        // Walk back from column ec; cells alternate −, +, −, …
        let mut cells = Vec::new();
        let mut node = m + ec;
        while node != er {
            let p = prev[node];
            let cell = if node >= m { (p, node - m) } else { (node, p - m) };
            cells.push(cell);
            node = p;
        }
        let (mut theta, mut leave) = (f64::INFINITY, 0);
        for (idx, &(r, c)) in cells.iter().enumerate().step_by(2) {
            if flow[r][c] < theta {
                theta = flow[r][c];
                leave = idx;
            }
        }
        flow[er][ec] += theta;
        basic[er][ec] = true;
        for (idx, &(r, c)) in cells.iter().enumerate() {
            if idx % 2 == 0 {
                flow[r][c] -= theta;
            } else {
                flow[r][c] += theta;
            }
        }
        let (lr, lc) = cells[leave];
        basic[lr][lc] = false;
        flow[lr][lc] = 0.0;
    }
    Err(Error::NoConvergence { max_iter: SIMPLEX_MAX_PIVOTS })
}

/// Exact `W₂(μ, ν)`.
pub fn wasserstein2(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(format!("W2 between R^{} and R^{}", mu.dim(), nu.dim())));
    }
    let cost = cost_matrix(&mu.support, &nu.support);
    let n = mu.len();
    let total = if n == nu.len() && mu.is_uniform() && nu.is_uniform() {
        let (sum, _) = if n <= EXHAUSTIVE_MAX { assignment_exhaustive(&cost) } else { assignment_hungarian(&cost) };
        sum / n as f64
    } else {
        transport_cost(&mu.weights, &nu.weights, &cost)?
    };
    Ok(total.max(0.0).sqrt())
}

/// `sqrt((1/N) Σ‖aᵢ − bᵢ‖²)`: the cost of the identity coupling, an upper
/// bound on `W₂` between the two uniform distributions.
pub fn matching_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!("matching {} against {} points", a.len(), b.len())));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| sq_dist(x, y)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// Closed Wasserstein ball membership `W₂(μ, ν) ≤ θ`.
pub fn in_ambiguity_set(mu: &DiscreteDistribution, emp: &EmpiricalDistribution, theta: f64) -> Result<bool> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius {theta} must be nonnegative")));
    }
    Ok(wasserstein2(mu, &emp.to_discrete())? <= theta + 1e-12)
}
