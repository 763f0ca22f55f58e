//! Discrete measures on finite metric label spaces and on the product state
//! space, with exact TV/BL norms and Wasserstein-1 distances.
//!
//! Labels live on a finite atom set with an explicit distance matrix, so
//! every norm and distance here reduces to a small finite transportation
//! problem solved exactly by [`crate::transport`]. States pair a position in
//! `R^d` with a probability measure over the atoms; the product norm is
//! `|x| + ||lambda||_BL`.

use std::sync::Arc;

use crate::transport::min_cost_transport;
use crate::{Error, Result};

/// Tolerance for probability-measure drift (nonnegativity, unit mass).
pub const PROB_TOL: f64 = 1e-12;

/// Finite metric space of label atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpace {
    atoms: Vec<String>,
    dist: Vec<f64>, // row-major k*k
    diameter: f64,
}

impl LabelSpace {
    /// Validates symmetry, zero diagonal, strict positivity off the diagonal,
    /// and the triangle inequality.
    pub fn new(atoms: Vec<String>, dist: Vec<f64>) -> Result<Self> {
        let k = atoms.len();
        if k == 0 {
            return Err(Error::Usage("label space needs at least one atom".into()));
        }
        if dist.len() != k * k {
            return Err(Error::Usage(format!(
                "distance matrix has {} entries, expected {}",
                dist.len(),
                k * k
            )));
        }
        let mut diameter = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let d = dist[i * k + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Invariant(format!("dist[{i}][{j}] = {d}")));
                }
                if i == j && d != 0.0 {
                    return Err(Error::Invariant(format!(
                        "dist[{i}][{i}] = {d}, expected 0"
                    )));
                }
                if i != j && d <= 0.0 {
                    return Err(Error::Invariant(format!(
                        "dist[{i}][{j}] = {d}, distinct atoms need positive distance"
                    )));
                }
                if (d - dist[j * k + i]).abs() > 1e-12 * d.abs().max(1.0) {
                    return Err(Error::Invariant(format!(
                        "dist[{i}][{j}] != dist[{j}][{i}]"
                    )));
                }
                diameter = diameter.max(d);
            }
        }
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let lhs = dist[i * k + j];
                    let rhs = dist[i * k + l] + dist[l * k + j];
                    if lhs > rhs + 1e-12 * rhs.max(1.0) {
                        return Err(Error::Invariant(format!(
                            "triangle inequality fails: d({i},{j}) > d({i},{l}) + d({l},{j})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            atoms,
            dist,
            diameter,
        })
    }

    /// `k` atoms equally spaced on `[0, 1]` with the absolute-value metric.
    /// A single atom gives the degenerate one-point space.
    pub fn line_segment(k: usize) -> Result<Arc<Self>> {
        if k == 0 {
            return Err(Error::Usage("label space needs at least one atom".into()));
        }
        let pos: Vec<f64> = (0..k)
            .map(|i| {
                if k == 1 {
                    0.0
                } else {
                    i as f64 / (k - 1) as f64
                }
            })
            .collect();
        let atoms = pos.iter().map(|p| format!("u{p}")).collect();
        let mut dist = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                dist[i * k + j] = (pos[i] - pos[j]).abs();
            }
        }
        Ok(Arc::new(Self::new(atoms, dist)?))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.atoms.len() + j]
    }

    /// `D_U`, the largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Canonical embedding of the atoms into `[0, 1]`: distance from atom 0,
    /// rescaled by the diameter when that exceeds one. By the reverse
    /// triangle inequality the embedding is 1-Lipschitz with respect to the
    /// atom metric and bounded by one, so pairing a measure difference with
    /// it never exceeds the BL norm.
    pub fn canonical_embedding(&self) -> Vec<f64> {
        let scale = if self.diameter > 1.0 {
            1.0 / self.diameter
        } else {
            1.0
        };
        (0..self.len()).map(|i| self.dist(0, i) * scale).collect()
    }

    /// Plain-text table: one line per atom, `id` then its distance row.
    pub fn to_text(&self) -> String {
        let k = self.len();
        let mut out = String::new();
        for i in 0..k {
            out.push_str(&self.atoms[i]);
            for j in 0..k {
                out.push(' ');
                out.push_str(&format!("{}", self.dist(i, j)));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Arc<Self>> {
        let mut atoms = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id = parts.next().unwrap().to_string();
            let row: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let row =
                row.map_err(|e| Error::Usage(format!("label space line {}: {e}", lineno + 1)))?;
            atoms.push(id);
            rows.push(row);
        }
        let k = atoms.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Usage(format!(
                "label space rows must each have {k} distances"
            )));
        }
        let dist = rows.into_iter().flatten().collect();
        Ok(Arc::new(Self::new(atoms, dist)?))
    }
}

fn same_space(a: &Arc<LabelSpace>, b: &Arc<LabelSpace>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Signed measure on a label space: a weight per atom, no sign constraint.
#[derive(Debug, Clone)]
pub struct SignedLabelMeasure {
    space: Arc<LabelSpace>,
    weights: Vec<f64>,
}

impl SignedLabelMeasure {
    pub fn new(space: Arc<LabelSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::Usage(format!(
                "{} weights for a {}-atom space",
                weights.len(),
                space.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invariant("measure weights must be finite".into()));
        }
        Ok(Self { space, weights })
    }

    pub fn zeros(space: Arc<LabelSpace>) -> Self {
        let k = space.len();
        Self {
            space,
            weights: vec![0.0; k],
        }
    }

    pub fn space(&self) -> &Arc<LabelSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The zero-mass subspace check (`sum = 0` within `1e-12`).
    pub fn is_zero_mass(&self) -> bool {
        self.total_mass().abs() <= PROB_TOL
    }

    /// Total variation: `sum_i |w_i|`, exact for atomic measures.
    pub fn tv_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Bounded-Lipschitz norm: the value of the finite linear program
    /// `sup { sum_i w_i phi_i : |phi_i| <= 1, |phi_i - phi_j| <= d_ij }`,
    /// computed through its transportation dual (see [`bl_norm_of`]).
    pub fn bl_norm(&self) -> f64 {
        bl_norm_of(&self.space, &self.weights)
    }

    /// Pairing `<sigma, psi>` with a function given by its atom values.
    pub fn pair(&self, psi: &[f64]) -> f64 {
        self.weights.iter().zip(psi).map(|(w, p)| w * p).sum()
    }
}

/// BL norm of a weight vector over `space`. The LP over test-function values
/// dualizes to a transportation problem between the positive and negative
/// parts, with an extra slack node that absorbs or creates mass at unit cost
/// (the `|phi| <= 1` box) and atom-to-atom cost `min(d_ij, 2)`.
pub fn bl_norm_of(space: &LabelSpace, weights: &[f64]) -> f64 {
    let k = space.len();
    debug_assert_eq!(weights.len(), k);
    let pos_mass: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    let neg_mass: f64 = -weights.iter().filter(|w| **w < 0.0).sum::<f64>();
    if pos_mass + neg_mass <= 1e-300 {
        return 0.0;
    }
    if k == 1 {
        return weights[0].abs();
    }
    if k == 2 && (pos_mass - neg_mass).abs() <= 1e-14 * (pos_mass + neg_mass) {
        // Zero-mass two-atom case has the closed form |w0| * min(2, d01);
        // it dominates the cost matrices of product-space distances.
        return weights[0].abs() * space.dist(0, 1).min(2.0);
    }

    let mut sources: Vec<(usize, f64)> = Vec::new();
    let mut sinks: Vec<(usize, f64)> = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            sources.push((i, *w));
        } else if *w < 0.0 {
            sinks.push((i, -*w));
        }
    }
    // Slack node: index k on both sides.
    let supply: Vec<f64> = sources
        .iter()
        .map(|(_, w)| *w)
        .chain(std::iter::once(neg_mass))
        .collect();
    let demand: Vec<f64> = sinks
        .iter()
        .map(|(_, w)| *w)
        .chain(std::iter::once(pos_mass))
        .collect();
    let m = sources.len();
    let n = sinks.len();
    let plan = min_cost_transport(&supply, &demand, |i, j| match (i == m, j == n) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        (false, false) => space.dist(sources[i].0, sinks[j].0).min(2.0),
    })
    .expect("BL transport on validated inputs");
    plan.cost
}

/// Probability measure over the atoms of a label space.
#[derive(Debug, Clone)]
pub struct LabelMeasure {
    space: Arc<LabelSpace>,
    weights: Vec<f64>,
}

impl LabelMeasure {
    /// Negative drift down to `-1e-12` is clamped to zero and the vector is
    /// renormalized; anything worse is an invariant error, not a silent fix.
    /// Mass drift at the few-ulp level is left untouched so that parsing a
    /// serialized measure is an exact fixpoint.
    pub fn new(space: Arc<LabelSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::Usage(format!(
                "{} weights for a {}-atom space",
                weights.len(),
                space.len()
            )));
        }
        let mut w = weights;
        let mut clamped = false;
        for (i, x) in w.iter_mut().enumerate() {
            if !x.is_finite() || *x < -PROB_TOL {
                return Err(Error::Invariant(format!(
                    "weight {i} = {x} is negative beyond tolerance"
                )));
            }
            if *x < 0.0 {
                *x = 0.0;
                clamped = true;
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::Invariant(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        if clamped || (sum - 1.0).abs() > 1e-14 {
            for x in w.iter_mut() {
                *x /= sum;
            }
        }
        Ok(Self { space, weights: w })
    }

    pub fn dirac(space: Arc<LabelSpace>, atom: usize) -> Result<Self> {
        let k = space.len();
        if atom >= k {
            return Err(Error::Usage(format!(
                "atom {atom} out of range for {k} atoms"
            )));
        }
        let mut w = vec![0.0; k];
        w[atom] = 1.0;
        Ok(Self { space, weights: w })
    }

    pub fn uniform(space: Arc<LabelSpace>) -> Self {
        let k = space.len();
        Self {
            space,
            weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn space(&self) -> &Arc<LabelSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pair(&self, psi: &[f64]) -> f64 {
        self.weights.iter().zip(psi).map(|(w, p)| w * p).sum()
    }

    pub fn as_signed(&self) -> SignedLabelMeasure {
        SignedLabelMeasure {
            space: self.space.clone(),
            weights: self.weights.clone(),
        }
    }

    /// `self - other` as a signed (zero-mass) measure.
    pub fn sub(&self, other: &LabelMeasure) -> Result<SignedLabelMeasure> {
        if !same_space(&self.space, &other.space) {
            return Err(Error::Usage(
                "measures live on different label spaces".into(),
            ));
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a - b)
            .collect();
        Ok(SignedLabelMeasure {
            space: self.space.clone(),
            weights,
        })
    }

    /// CSV row of the weights.
    pub fn to_csv_row(&self) -> String {
        self.weights
            .iter()
            .map(|w| format!("{w}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_csv_row(space: Arc<LabelSpace>, row: &str) -> Result<Self> {
        let weights: std::result::Result<Vec<f64>, _> =
            row.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let weights = weights.map_err(|e| Error::Usage(format!("measure row: {e}")))?;
        Self::new(space, weights)
    }
}

/// Convex combination `(1 - rho) * lambda + rho * g`.
pub fn relax_toward(lambda: &LabelMeasure, g: &LabelMeasure, rho: f64) -> Result<LabelMeasure> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Usage(format!("rho = {rho} outside [0, 1]")));
    }
    if !same_space(&lambda.space, &g.space) {
        return Err(Error::Usage(
            "measures live on different label spaces".into(),
        ));
    }
    let weights = lambda
        .weights
        .iter()
        .zip(&g.weights)
        .map(|(a, b)| (1.0 - rho) * a + rho * b)
        .collect();
    LabelMeasure::new(lambda.space.clone(), weights)
}

/// Exact Wasserstein-1 distance between probability measures on the same
/// label space, via the discrete transport program. The argument order is
/// canonicalized first, so symmetry holds exactly rather than to solver
/// precision.
pub fn w1_labels(mu1: &LabelMeasure, mu2: &LabelMeasure) -> Result<f64> {
    if !same_space(&mu1.space, &mu2.space) {
        return Err(Error::Usage(
            "measures live on different label spaces".into(),
        ));
    }
    let swap = mu1.weights.iter().zip(&mu2.weights).find_map(|(a, b)| {
        if a < b {
            Some(true)
        } else if a > b {
            Some(false)
        } else {
            None
        }
    });
    let (mu1, mu2) = if swap.unwrap_or(false) {
        (mu2, mu1)
    } else {
        (mu1, mu2)
    };
    let k = mu1.space.len();
    // Mass shared in place moves for free (d_ii = 0): transport the rest.
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    let mut src_idx = Vec::new();
    let mut dst_idx = Vec::new();
    for i in 0..k {
        let diff = mu1.weights[i] - mu2.weights[i];
        if diff > 0.0 {
            supply.push(diff);
            src_idx.push(i);
        } else if diff < 0.0 {
            demand.push(-diff);
            dst_idx.push(i);
        }
    }
    let total: f64 = supply.iter().sum();
    if total <= 1e-15 {
        return Ok(0.0);
    }
    let space = &mu1.space;
    let plan = min_cost_transport(&supply, &demand, |i, j| space.dist(src_idx[i], dst_idx[j]))?;
    Ok(plan.cost)
}

/// Position plus label distribution: the state of a single agent.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub lambda: LabelMeasure,
}

impl AgentState {
    pub fn new(x: Vec<f64>, lambda: LabelMeasure) -> Self {
        Self { x, lambda }
    }

    /// Product norm `|x| + ||lambda||_BL`. For a probability measure the BL
    /// norm is exactly one (the constant test function attains it).
    pub fn e_norm(&self) -> f64 {
        norm2(&self.x) + 1.0
    }

    /// Product distance `|x - x'| + ||lambda - lambda'||_BL`.
    pub fn e_dist(&self, other: &AgentState) -> Result<f64> {
        if self.x.len() != other.x.len() {
            return Err(Error::Usage(
                "states have different spatial dimension".into(),
            ));
        }
        let dx = dist2(&self.x, &other.x);
        let diff = self.lambda.sub(&other.lambda)?;
        Ok(dx + diff.bl_norm())
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Uniform-weight collection of `N` agent states; columnar storage so the
/// stepper and the transport cost kernels avoid per-agent allocation.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    space: Arc<LabelSpace>,
    d: usize,
    n: usize,
    xs: Vec<f64>,      // n * d, row-major by agent
    lambdas: Vec<f64>, // n * k, row-major by agent
}

impl EmpiricalMeasure {
    pub fn from_states(states: Vec<AgentState>) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::Usage("empirical measure needs at least one agent".into()))?;
        let d = first.x.len();
        let space = first.lambda.space.clone();
        let n = states.len();
        let k = space.len();
        let mut xs = Vec::with_capacity(n * d);
        let mut lambdas = Vec::with_capacity(n * k);
        for s in &states {
            if s.x.len() != d {
                return Err(Error::Usage("agents disagree on spatial dimension".into()));
            }
            if !same_space(&s.lambda.space, &space) {
                return Err(Error::Usage("agents disagree on label space".into()));
            }
            xs.extend_from_slice(&s.x);
            lambdas.extend_from_slice(&s.lambda.weights);
        }
        Ok(Self {
            space,
            d,
            n,
            xs,
            lambdas,
        })
    }

    /// Columnar constructor; every lambda row must satisfy the probability
    /// invariants (checked).
    pub fn from_columnar(
        space: Arc<LabelSpace>,
        d: usize,
        xs: Vec<f64>,
        lambdas: Vec<f64>,
    ) -> Result<Self> {
        let k = space.len();
        if d == 0 || xs.len() % d != 0 {
            return Err(Error::Usage(
                "position buffer does not match dimension".into(),
            ));
        }
        let n = xs.len() / d;
        if n == 0 {
            return Err(Error::Usage(
                "empirical measure needs at least one agent".into(),
            ));
        }
        if lambdas.len() != n * k {
            return Err(Error::Usage(
                "label buffer does not match agent count".into(),
            ));
        }
        for i in 0..n {
            let row = &lambdas[i * k..(i + 1) * k];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 || row.iter().any(|w| *w < -1e-10) {
                return Err(Error::Invariant(format!(
                    "agent {i} label weights are not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(Self {
            space,
            d,
            n,
            xs,
            lambdas,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn label_count(&self) -> usize {
        self.space.len()
    }

    pub fn space(&self) -> &Arc<LabelSpace> {
        &self.space
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn lambda_weights(&self, i: usize) -> &[f64] {
        let k = self.space.len();
        &self.lambdas[i * k..(i + 1) * k]
    }

    pub fn agent(&self, i: usize) -> AgentState {
        AgentState {
            x: self.x(i).to_vec(),
            lambda: LabelMeasure {
                space: self.space.clone(),
                weights: self.lambda_weights(i).to_vec(),
            },
        }
    }

    /// First moment `m_1 = (1/N) sum_i ||y_i||_E`.
    pub fn m1(&self) -> f64 {
        (0..self.n).map(|i| norm2(self.x(i)) + 1.0).sum::<f64>() / self.n as f64
    }

    pub fn mean_x(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for i in 0..self.n {
            for (m, v) in mean.iter_mut().zip(self.x(i)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= self.n as f64;
        }
        mean
    }
}

/// Exact W1 between two uniform empirical measures on the product space,
/// with ground cost `|x - x'| + ||lambda - lambda'||_BL`. Equal sizes make
/// this a min-cost assignment; unequal sizes run the general transport
/// program on uniform marginals.
pub fn w1_product(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    if p.d != q.d {
        return Err(Error::Usage(
            "empirical measures have different spatial dimension".into(),
        ));
    }
    if !same_space(&p.space, &q.space) {
        return Err(Error::Usage(
            "empirical measures have different label spaces".into(),
        ));
    }
    let k = p.space.len();
    let space = p.space.as_ref();
    let mut scratch = vec![0.0; k];
    let mut cost = vec![0.0f64; p.n * q.n];
    for i in 0..p.n {
        let xi = p.x(i);
        let li = p.lambda_weights(i);
        for j in 0..q.n {
            for (s, (a, b)) in scratch.iter_mut().zip(li.iter().zip(q.lambda_weights(j))) {
                *s = a - b;
            }
            cost[i * q.n + j] = dist2(xi, q.x(j)) + bl_norm_of(space, &scratch);
        }
    }
    let supply = vec![1.0 / p.n as f64; p.n];
    let demand = vec![1.0 / q.n as f64; q.n];
    let plan = min_cost_transport(&supply, &demand, |i, j| cost[i * q.n + j])?;
    Ok(plan.cost)
}
