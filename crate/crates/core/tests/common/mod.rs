//! Shared oracle machinery for the integration and acceptance suites.
//! Everything recomputes expected values from first principles, independent
//! of the solver paths under test.

#![allow(dead_code)]

use std::sync::Arc;

use mfsim_core::measures::{AgentState, EmpiricalMeasure, LabelMeasure, LabelSpace};
use mfsim_core::rng;

use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Oracle machinery (test-side only)
// ---------------------------------------------------------------------------

pub fn for_each_permutation(n: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k <= 1 {
            visit(v);
            return;
        }
        for i in 0..k {
            rec(v, k - 1, visit);
            if k % 2 == 0 {
                v.swap(i, k - 1);
            } else {
                v.swap(0, k - 1);
            }
        }
    }
    let mut v: Vec<usize> = (0..n).collect();
    rec(&mut v, n, visit);
}

/// Min over all permutations of the average pairwise cost: the exact W1
/// between uniform same-size empirical measures.
pub fn permutation_oracle(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut best = f64::INFINITY;
    for_each_permutation(n, &mut |perm| {
        let total: f64 = (0..n).map(|i| cost[i][perm[i]]).sum();
        best = best.min(total / n as f64);
    });
    best
}

/// Exact transportation optimum by enumerating every spanning tree of the
/// bipartite supply/demand graph: each tree determines a unique basic
/// solution, the optimum is the cheapest feasible one.
pub fn tree_enumeration_oracle(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
    let m = supply.len();
    let n = demand.len();
    let nodes = m + n;
    let edges: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(nodes - 1);

    fn rec(
        edges: &[(usize, usize)],
        start: usize,
        need: usize,
        chosen: &mut Vec<(usize, usize)>,
        supply: &[f64],
        demand: &[f64],
        cost: &[Vec<f64>],
        best: &mut f64,
    ) {
        if need == 0 {
            if let Some(value) = tree_value(chosen, supply, demand, cost) {
                if value < *best {
                    *best = value;
                }
            }
            return;
        }
        if start + need > edges.len() {
            return;
        }
        for e in start..=edges.len() - need {
            chosen.push(edges[e]);
            rec(edges, e + 1, need - 1, chosen, supply, demand, cost, best);
            chosen.pop();
        }
    }

    rec(
        &edges,
        0,
        nodes - 1,
        &mut chosen,
        supply,
        demand,
        cost,
        &mut best,
    );
    best
}

/// Flows of the basic solution induced by an edge set, if it is a spanning
/// tree with nonnegative flows; `None` otherwise. Solved by repeated leaf
/// elimination.
pub fn tree_value(
    chosen: &[(usize, usize)],
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> Option<f64> {
    let m = supply.len();
    let n = demand.len();
    let nodes = m + n;
    let mut balance: Vec<f64> = supply
        .iter()
        .copied()
        .chain(demand.iter().map(|d| -d))
        .collect();
    let mut alive: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes]; // (edge idx, other node)
    for (e, (i, j)) in chosen.iter().enumerate() {
        alive[*i].push((e, m + j));
        alive[m + j].push((e, *i));
    }
    let mut degree: Vec<usize> = alive.iter().map(Vec::len).collect();
    if degree.iter().any(|d| *d == 0) {
        return None; // not spanning
    }
    let mut flow = vec![0.0f64; chosen.len()];
    let mut removed_edges = vec![false; chosen.len()];
    let mut removed_nodes = vec![false; nodes];
    let mut total = 0.0;
    for _ in 0..nodes - 1 {
        let leaf = (0..nodes).find(|v| !removed_nodes[*v] && degree[*v] == 1)?;
        let &(e, other) = alive[leaf]
            .iter()
            .find(|(e, _)| !removed_edges[*e])
            .expect("leaf has one live edge");
        let (i, j) = chosen[e];
        // flow on the leaf edge is forced by the leaf's remaining balance
        let f = if leaf < m {
            balance[leaf]
        } else {
            -balance[leaf]
        };
        if f < -1e-9 {
            return None; // infeasible basic solution
        }
        let f = f.max(0.0);
        flow[e] = f;
        total += f * cost[i][j];
        balance[other] += if other < m { -f } else { f };

        removed_edges[e] = true;
        removed_nodes[leaf] = true;
        degree[leaf] = 0;
        degree[other] -= 1;
    }
    Some(total)
}

/// BL-norm oracle: the LP over test-function values, solved by enumerating
/// candidate vertices (intersections of K active constraints drawn from the
/// box and Lipschitz constraints).
pub fn bl_vertex_oracle(space: &LabelSpace, weights: &[f64]) -> f64 {
    let k = space.len();
    // constraint rows: a . phi <= b
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..k {
        let mut pos = vec![0.0; k];
        pos[i] = 1.0;
        rows.push((pos.clone(), 1.0));
        let mut neg = vec![0.0; k];
        neg[i] = -1.0;
        rows.push((neg, 1.0));
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let mut a = vec![0.0; k];
            a[i] = 1.0;
            a[j] = -1.0;
            rows.push((a.clone(), space.dist(i, j)));
            let flipped: Vec<f64> = a.iter().map(|v| -v).collect();
            rows.push((flipped, space.dist(i, j)));
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut index = vec![0usize; k];
    enumerate_subsets(rows.len(), k, &mut index, 0, 0, &mut |subset| {
        let system: Vec<(&[f64], f64)> = subset
            .iter()
            .map(|r| (rows[*r].0.as_slice(), rows[*r].1))
            .collect();
        if let Some(phi) = solve_square(&system) {
            let feasible = rows
                .iter()
                .all(|(a, b)| a.iter().zip(&phi).map(|(x, y)| x * y).sum::<f64>() <= b + 1e-9);
            if feasible {
                let value: f64 = weights.iter().zip(&phi).map(|(w, p)| w * p).sum();
                best = best.max(value);
            }
        }
    });
    best
}

pub fn enumerate_subsets(
    n: usize,
    k: usize,
    index: &mut Vec<usize>,
    pos: usize,
    start: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if pos == k {
        visit(index);
        return;
    }
    for i in start..n {
        index[pos] = i;
        enumerate_subsets(n, k, index, pos + 1, i + 1, visit);
    }
}

/// Gaussian elimination for the K active constraints; `None` when singular.
pub fn solve_square(system: &[(&[f64], f64)]) -> Option<Vec<f64>> {
    let k = system.len();
    let mut a: Vec<Vec<f64>> = system.iter().map(|(row, _)| row.to_vec()).collect();
    let mut b: Vec<f64> = system.iter().map(|(_, rhs)| *rhs).collect();
    for col in 0..k {
        let pivot =
            (col..k).max_by(|x, y| a[*x][col].abs().partial_cmp(&a[*y][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for c in col..k {
                    a[row][c] -= factor * a[col][c];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    Some((0..k).map(|i| b[i] / a[i][i]).collect())
}

// ---------------------------------------------------------------------------
// Random instance helpers
// ---------------------------------------------------------------------------

pub fn random_metric_space(rng: &mut ChaCha8Rng, k: usize) -> Arc<LabelSpace> {
    // random points on a line give a guaranteed metric
    let mut pos: Vec<f64> = (0..k).map(|_| rng::uniform(rng, 0.0, 3.0)).collect();
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for i in 1..k {
        if pos[i] - pos[i - 1] < 1e-3 {
            pos[i] = pos[i - 1] + 1e-3;
        }
    }
    let mut dist = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            dist[i * k + j] = (pos[i] - pos[j]).abs();
        }
    }
    let atoms = (0..k).map(|i| format!("u{i}")).collect();
    Arc::new(LabelSpace::new(atoms, dist).unwrap())
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| -rng::uniform(rng, 1e-9, 1.0).ln()).collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

pub fn random_ensemble(
    rng: &mut ChaCha8Rng,
    space: &Arc<LabelSpace>,
    n: usize,
) -> EmpiricalMeasure {
    let states = (0..n)
        .map(|_| {
            AgentState::new(
                vec![rng::uniform(rng, -2.0, 2.0)],
                LabelMeasure::new(space.clone(), random_simplex(rng, space.len())).unwrap(),
            )
        })
        .collect();
    EmpiricalMeasure::from_states(states).unwrap()
}
