//! Numerical verification harness: weak-form Eulerian residuals, mean-field
//! self-convergence, Wasserstein stability bounds, moment envelopes, and
//! Picard decay reports.
//!
//! Test functions are cylinder functions `phi(x, lambda) = f(x) g(<lambda,
//! psi_1>, ..., <lambda, psi_m>)` from closed-form families, so gradients,
//! Laplacians and the label pairings are analytic; finite differences appear
//! only in the independent cross-check of the generator (in test code).

use std::sync::Arc;

use rayon::prelude::*;

use crate::fields::{
    probe_growth, probe_lipschitz, probe_velocity_measure_sensitivity, EnsembleView, Field,
};
use crate::measures::{bl_norm_of, norm2, w1_product, AgentState, EmpiricalMeasure, LabelSpace};
use crate::particle::{self, active_radius, InitialLaw, SimConfig, Trajectory};
use crate::rng::replicate_seed;
use crate::{Error, Result};

/// Bound on the number of label pairings / spatial dimensions the evaluation
/// scratch arrays support.
const MAX_FACTORS: usize = 8;

// ---------------------------------------------------------------------------
// Cylinder test functions
// ---------------------------------------------------------------------------

/// Spatial factor `f` with analytic gradient and Laplacian.
#[derive(Debug, Clone)]
pub enum SpatialFactor {
    One,
    /// `x_j`
    Coordinate(usize),
    /// `|x|^2`
    NormSquared,
    /// `exp(-|x - center|^2 / (2 width^2))`
    Gaussian {
        center: Vec<f64>,
        width: f64,
    },
}

impl SpatialFactor {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Coordinate(j) => x[*j],
            Self::NormSquared => x.iter().map(|v| v * v).sum(),
            Self::Gaussian { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            Self::One => {}
            Self::Coordinate(j) => out[*j] = 1.0,
            Self::NormSquared => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v;
                }
            }
            Self::Gaussian { center, width } => {
                let v = self.eval(x);
                let w2 = width * width;
                for ((o, a), c) in out.iter_mut().zip(x).zip(center) {
                    *o = -v * (a - c) / w2;
                }
            }
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        match self {
            Self::One | Self::Coordinate(_) => 0.0,
            Self::NormSquared => 2.0 * x.len() as f64,
            Self::Gaussian { center, width } => {
                let v = self.eval(x);
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                v * (r2 / (w2 * w2) - x.len() as f64 / w2)
            }
        }
    }
}

/// Outer factor `g` on the label pairings, with analytic gradient.
#[derive(Debug, Clone)]
pub enum LabelFactor {
    /// `offset + sum_j coefs[j] p_j`
    Linear { offset: f64, coefs: Vec<f64> },
    /// `sum_j coefs[j] p_j^2`
    Quadratic { coefs: Vec<f64> },
}

impl LabelFactor {
    fn arity(&self) -> usize {
        match self {
            Self::Linear { coefs, .. } | Self::Quadratic { coefs } => coefs.len(),
        }
    }

    fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Self::Linear { offset, coefs } => {
                offset + coefs.iter().zip(p).map(|(c, v)| c * v).sum::<f64>()
            }
            Self::Quadratic { coefs } => coefs.iter().zip(p).map(|(c, v)| c * v * v).sum(),
        }
    }

    fn grad_into(&self, p: &[f64], out: &mut [f64]) {
        match self {
            Self::Linear { coefs, .. } => out[..coefs.len()].copy_from_slice(coefs),
            Self::Quadratic { coefs } => {
                for ((o, c), v) in out.iter_mut().zip(coefs).zip(p) {
                    *o = 2.0 * c * v;
                }
            }
        }
    }
}

/// `phi(x, lambda) = f(x) g(<lambda, psi_1>, ..., <lambda, psi_m>)`.
#[derive(Debug, Clone)]
pub struct CylinderTestFunction {
    pub name: String,
    pub f: SpatialFactor,
    /// Atom-value vectors of the label test functions `psi_j`.
    pub psis: Vec<Vec<f64>>,
    /// Declared Lipschitz constant of each `psi_j`, verified pairwise
    /// against the atom distance matrix at construction.
    pub psi_lipschitz: Vec<f64>,
    pub g: LabelFactor,
}

impl CylinderTestFunction {
    pub fn new(
        name: impl Into<String>,
        f: SpatialFactor,
        psis: Vec<Vec<f64>>,
        psi_lipschitz: Vec<f64>,
        g: LabelFactor,
        space: &LabelSpace,
    ) -> Result<Self> {
        if psis.len() != g.arity() {
            return Err(Error::Usage(format!(
                "{} pairings for a {}-ary outer factor",
                psis.len(),
                g.arity()
            )));
        }
        if psis.len() != psi_lipschitz.len() {
            return Err(Error::Usage(
                "one Lipschitz constant per psi required".into(),
            ));
        }
        if psis.len() > MAX_FACTORS {
            return Err(Error::Usage(format!(
                "at most {MAX_FACTORS} pairings supported"
            )));
        }
        let k = space.len();
        for (j, (psi, lip)) in psis.iter().zip(&psi_lipschitz).enumerate() {
            if psi.len() != k {
                return Err(Error::Usage(format!(
                    "psi_{j} has {} values for {k} atoms",
                    psi.len()
                )));
            }
            for a in 0..k {
                for b in (a + 1)..k {
                    let gap = (psi[a] - psi[b]).abs();
                    if gap > lip * space.dist(a, b) + 1e-12 {
                        return Err(Error::Usage(format!(
                            "psi_{j} violates its declared Lipschitz constant {lip} \
                             between atoms {a} and {b}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            f,
            psis,
            psi_lipschitz,
            g,
        })
    }

    pub fn value(&self, x: &[f64], lambda: &[f64]) -> f64 {
        let mut p = [0.0f64; MAX_FACTORS];
        for (slot, psi) in p.iter_mut().zip(&self.psis) {
            *slot = dot(lambda, psi);
        }
        self.f.eval(x) * self.g.eval(&p[..self.psis.len()])
    }

    /// Generator value given the per-agent field outputs: `sigma lap_x phi +
    /// grad_x phi . v + <D_lambda phi, T>`, everything analytic.
    pub fn generator(&self, x: &[f64], lambda: &[f64], v: &[f64], t_op: &[f64], sigma: f64) -> f64 {
        let m = self.psis.len();
        let mut p = [0.0f64; MAX_FACTORS];
        for (slot, psi) in p.iter_mut().zip(&self.psis) {
            *slot = dot(lambda, psi);
        }
        let g_val = self.g.eval(&p[..m]);
        let f_val = self.f.eval(x);
        let mut fg = [0.0f64; MAX_FACTORS];
        self.f.grad_into(x, &mut fg[..x.len()]);
        let drift: f64 = dot(&fg[..x.len()], v);
        let mut gg = [0.0f64; MAX_FACTORS];
        self.g.grad_into(&p[..m], &mut gg[..m]);
        let mut label = 0.0;
        for (j, psi) in self.psis.iter().enumerate() {
            label += gg[j] * dot(t_op, psi);
        }
        sigma * self.f.laplacian(x) * g_val + drift * g_val + f_val * label
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The registered family used by the residual experiment: coordinate and
/// quadratic spatial observables, a Gaussian bump, label pairings against
/// the canonical embedding and its square, and a coupled term.
pub fn standard_family(space: &Arc<LabelSpace>, d: usize) -> Result<Vec<CylinderTestFunction>> {
    let emb = space.canonical_embedding();
    let emb_sq: Vec<f64> = emb.iter().map(|v| v * v).collect();
    let sq_lip = 2.0 * space.diameter().max(1.0); // |a^2 - b^2| <= (|a|+|b|) |a - b|
    let lin1 = LabelFactor::Linear {
        offset: 0.0,
        coefs: vec![1.0],
    };
    let mut family = vec![
        CylinderTestFunction::new(
            "x1",
            SpatialFactor::Coordinate(0),
            vec![],
            vec![],
            LabelFactor::Linear {
                offset: 1.0,
                coefs: vec![],
            },
            space,
        )?,
        CylinderTestFunction::new(
            "x_norm_sq",
            SpatialFactor::NormSquared,
            vec![],
            vec![],
            LabelFactor::Linear {
                offset: 1.0,
                coefs: vec![],
            },
            space,
        )?,
        CylinderTestFunction::new(
            "lambda_mean",
            SpatialFactor::One,
            vec![emb.clone()],
            vec![1.0],
            lin1.clone(),
            space,
        )?,
        CylinderTestFunction::new(
            "x1_lambda_mean",
            SpatialFactor::Coordinate(0),
            vec![emb.clone()],
            vec![1.0],
            lin1,
            space,
        )?,
        CylinderTestFunction::new(
            "gaussian_bump",
            SpatialFactor::Gaussian {
                center: vec![0.3; d],
                width: 0.5,
            },
            vec![],
            vec![],
            LabelFactor::Linear {
                offset: 1.0,
                coefs: vec![],
            },
            space,
        )?,
    ];
    if space.len() >= 2 {
        family.push(CylinderTestFunction::new(
            "lambda_quadratic",
            SpatialFactor::One,
            vec![emb, emb_sq],
            vec![1.0, sq_lip],
            LabelFactor::Quadratic {
                coefs: vec![1.0, 0.5],
            },
            space,
        )?);
    }
    Ok(family)
}

/// One-shot generator evaluation at a single state against a snapshot.
pub fn generator_apply(
    phi: &CylinderTestFunction,
    y: &AgentState,
    psi: &EmpiricalMeasure,
    field: &dyn Field,
    sigma: f64,
) -> f64 {
    let view = EnsembleView::of(psi);
    let prep = field.prepare(&view);
    let mut v = vec![0.0; y.x.len()];
    let mut t = vec![0.0; psi.label_count()];
    prep.velocity(&y.x, y.lambda.weights(), &mut v);
    prep.label_op(&y.x, y.lambda.weights(), &mut t);
    phi.generator(&y.x, y.lambda.weights(), &v, &t, sigma)
}

// ---------------------------------------------------------------------------
// Verdicts and report plumbing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Verdict {
    /// Names the invariant the check enforces.
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

// ---------------------------------------------------------------------------
// Weak-form Eulerian residual
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    /// `|r_phi(t)|` per test function, mean over paths.
    pub traces: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub max_abs: f64,
}

/// Averages the Eulerian weak-form defect over `n_paths` independent runs:
/// `r(t) = mean[ <L_t, phi> - <L_0, phi> - sum_{s<t} <L_s, L_{L_s} phi> dt ]`
/// with left-endpoint sums matching the stepper's frozen-snapshot convention.
pub fn weak_form_residual(
    cfg: &SimConfig,
    field: &dyn Field,
    law: &InitialLaw,
    space: &Arc<LabelSpace>,
    phis: &[CylinderTestFunction],
    n_paths: usize,
) -> Result<ResidualReport> {
    if phis.is_empty() || n_paths == 0 {
        return Err(Error::Usage(
            "residual needs test functions and at least one path".into(),
        ));
    }
    let steps = cfg.steps()?;
    let n_phi = phis.len();
    // Replicates run concurrently, each on its own derived streams; the sum
    // below is an order-fixed reduction, so the result matches sequential
    // execution.
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|path| -> Result<Vec<f64>> {
            let mut run_cfg = *cfg;
            run_cfg.seed = replicate_seed(cfg.seed, path as u64);
            let initial = law.sample(space, cfg.d, cfg.n, run_cfg.seed)?;
            let traj = particle::simulate(&run_cfg, field, &initial)?;
            let mut acc = vec![0.0f64; (steps + 1) * n_phi];
            accumulate_residuals(&traj, field, phis, cfg.sigma, cfg.dt, &mut acc);
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0f64; (steps + 1) * n_phi];
    for path_acc in &per_path {
        for (a, v) in acc.iter_mut().zip(path_acc) {
            *a += v;
        }
    }
    let scale = 1.0 / n_paths as f64;
    let mut traces = vec![vec![0.0f64; steps + 1]; n_phi];
    let mut max_abs = 0.0f64;
    for s in 0..=steps {
        for j in 0..n_phi {
            let r = (acc[s * n_phi + j] * scale).abs();
            traces[j][s] = r;
            max_abs = max_abs.max(r);
        }
    }
    Ok(ResidualReport {
        times: (0..=steps).map(|s| s as f64 * cfg.dt).collect(),
        traces,
        names: phis.iter().map(|p| p.name.clone()).collect(),
        max_abs,
    })
}

/// Adds one path's signed residuals into `acc[(step, phi)]`.
fn accumulate_residuals(
    traj: &Trajectory,
    field: &dyn Field,
    phis: &[CylinderTestFunction],
    sigma: f64,
    dt: f64,
    acc: &mut [f64],
) {
    let n = traj.n();
    let d = traj.dim();
    let k = traj.label_count();
    let n_phi = phis.len();
    let mut v = vec![0.0; d];
    let mut t_op = vec![0.0; k];
    let mut phi0 = vec![0.0f64; n_phi];
    let mut integral = vec![0.0f64; n_phi];
    for (j, phi) in phis.iter().enumerate() {
        let view = traj.view_at(0);
        phi0[j] = (0..n)
            .map(|i| phi.value(view.x(i), view.lambda(i)))
            .sum::<f64>()
            / n as f64;
    }
    for s in 0..=traj.steps() {
        let view = traj.view_at(s);
        for (j, phi) in phis.iter().enumerate() {
            let mean_phi = (0..n)
                .map(|i| phi.value(view.x(i), view.lambda(i)))
                .sum::<f64>()
                / n as f64;
            acc[s * n_phi + j] += mean_phi - phi0[j] - integral[j];
        }
        if s == traj.steps() {
            break;
        }
        // left-endpoint generator term feeding the next grid point
        let prep = field.prepare(&view);
        for i in 0..n {
            let x = view.x(i);
            let lam = view.lambda(i);
            prep.velocity(x, lam, &mut v);
            prep.label_op(x, lam, &mut t_op);
            for (j, phi) in phis.iter().enumerate() {
                integral[j] += phi.generator(x, lam, &v, &t_op, sigma) * dt / n as f64;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Mean-field self-convergence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub ns: Vec<usize>,
    pub t_checks: Vec<f64>,
    /// `w1[t][n][rep]`
    pub w1: Vec<Vec<Vec<f64>>>,
    /// median over reps, `[t][n]`
    pub median: Vec<Vec<f64>>,
    /// fitted log-log slope of the median per checkpoint
    pub slopes: Vec<f64>,
    /// per checkpoint: medians nonincreasing in N
    pub monotone: Vec<bool>,
}

impl ConvergenceReport {
    pub fn all_monotone(&self) -> bool {
        self.monotone.iter().all(|m| *m)
    }
}

/// Self-convergence toward the largest-N run: `W1(L_t^N, L_t^{N_ref})`
/// averaged over independent seed pairs, with the decay slope fitted on the
/// medians. The reference plays the role of the unavailable limit law.
pub fn meanfield_convergence(
    cfg_template: &SimConfig,
    field: &dyn Field,
    law: &InitialLaw,
    space: &Arc<LabelSpace>,
    ns: &[usize],
    n_ref: usize,
    t_checks: &[f64],
    n_reps: usize,
) -> Result<ConvergenceReport> {
    if ns.is_empty() || t_checks.is_empty() || n_reps == 0 {
        return Err(Error::Usage(
            "convergence study needs sizes, checkpoints, reps".into(),
        ));
    }
    if !ns.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Usage(
            "agent counts must be strictly increasing".into(),
        ));
    }
    if n_ref <= *ns.last().unwrap() {
        return Err(Error::Usage(format!(
            "reference size {n_ref} must exceed the largest requested size {}",
            ns.last().unwrap()
        )));
    }
    if ns.len() + 1 > 64 {
        return Err(Error::Usage("too many ladder sizes".into()));
    }
    let run = |n: usize, seed: u64| -> Result<Trajectory> {
        let mut cfg = *cfg_template;
        cfg.n = n;
        cfg.seed = seed;
        let initial = law.sample(space, cfg.d, n, seed)?;
        particle::simulate(&cfg, field, &initial)
    };
    // One replicate = a fresh reference run plus the whole ladder against
    // it; replicates are independent and run concurrently.
    let per_rep: Vec<Vec<Vec<f64>>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<f64>>> {
            let seed_of = |slot: usize| replicate_seed(cfg_template.seed, (rep * 64 + slot) as u64);
            let reference = run(n_ref, seed_of(ns.len()))?;
            let mut out = vec![vec![0.0f64; ns.len()]; t_checks.len()];
            for (ni, n) in ns.iter().enumerate() {
                let traj = run(*n, seed_of(ni))?;
                for (ti, t) in t_checks.iter().enumerate() {
                    let a = traj.measure_at(traj.step_of_time(*t));
                    let b = reference.measure_at(reference.step_of_time(*t));
                    out[ti][ni] = w1_product(&a, &b)?;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut w1 = vec![vec![vec![0.0f64; n_reps]; ns.len()]; t_checks.len()];
    for (rep, rep_table) in per_rep.iter().enumerate() {
        for ti in 0..t_checks.len() {
            for ni in 0..ns.len() {
                w1[ti][ni][rep] = rep_table[ti][ni];
            }
        }
    }
    let mut median = vec![vec![0.0f64; ns.len()]; t_checks.len()];
    for ti in 0..t_checks.len() {
        for ni in 0..ns.len() {
            median[ti][ni] = median_of(&w1[ti][ni]);
        }
    }
    let slopes = median
        .iter()
        .map(|row| {
            let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
            let ys: Vec<f64> = row.iter().map(|v| v.max(1e-300).ln()).collect();
            least_squares_slope(&xs, &ys)
        })
        .collect();
    let monotone = median
        .iter()
        .map(|row| row.windows(2).all(|w| w[1] <= w[0] + 1e-12))
        .collect();
    Ok(ConvergenceReport {
        ns: ns.to_vec(),
        t_checks: t_checks.to_vec(),
        w1,
        median,
        slopes,
        monotone,
    })
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

// ---------------------------------------------------------------------------
// Stability under synchronous coupling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub l_r_hat: f64,
    pub prefactor: f64,
    pub w1_initial: f64,
    /// rows `(t, w1_t, bound_t)`
    pub rows: Vec<(f64, f64, f64)>,
    pub ok: bool,
    pub detail: String,
}

/// Runs two systems on the same Brownian path and checks the Lagrangian
/// stability bound `W1_t <= C exp(t L_R) W1_0` with the probed constant
/// `L_R` and `C = 1 + exp(exp(T L_R)) exp(T L_R)`. A violation is an
/// experiment failure carried in the report, not an error.
pub fn stability_check(
    cfg: &SimConfig,
    field: &dyn Field,
    initial1: &EmpiricalMeasure,
    initial2: &EmpiricalMeasure,
    t_checks: &[f64],
) -> Result<StabilityReport> {
    if initial1.n() != initial2.n() {
        return Err(Error::Usage(
            "synchronous coupling needs equal ensemble sizes".into(),
        ));
    }
    let space = initial1.space();
    let r = active_radius(initial1).max(active_radius(initial2));
    let (l_v, l_t) = probe_lipschitz(field, space, cfg.d, r, 120, cfg.seed)?;
    let l_v_psi = probe_velocity_measure_sensitivity(field, space, cfg.d, r, 120, cfg.seed)?;
    let l_r = l_v + l_v_psi + l_t;
    let grow = (cfg.t_end * l_r).exp();
    let prefactor = 1.0 + grow.exp() * grow;
    let w1_initial = w1_product(initial1, initial2)?;

    let (run1, run2) = rayon::join(
        || particle::simulate(cfg, field, initial1),
        || particle::simulate(cfg, field, initial2),
    );
    let (run1, run2) = (run1?, run2?);
    let mut rows = Vec::with_capacity(t_checks.len());
    let mut ok = true;
    let mut detail = String::new();
    for t in t_checks {
        let s = run1.step_of_time(*t);
        let w1_t = w1_product(&run1.measure_at(s), &run2.measure_at(s))?;
        let bound = prefactor * (t * l_r).exp() * w1_initial;
        let fine = w1_t <= bound + 1e-12 || !bound.is_finite();
        if !fine {
            ok = false;
            detail.push_str(&format!(
                "t = {t}: W1 = {w1_t} exceeds bound {bound} (L_R_hat = {l_r}, C = {prefactor}, \
                 W1_0 = {w1_initial}); "
            ));
        }
        rows.push((*t, w1_t, bound));
    }
    if ok {
        detail = format!("L_R_hat = {l_r}, C = {prefactor}, W1_0 = {w1_initial}");
    }
    Ok(StabilityReport {
        l_r_hat: l_r,
        prefactor,
        w1_initial,
        rows,
        ok,
        detail,
    })
}

// ---------------------------------------------------------------------------
// Moment monitor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MomentReport {
    /// rows `(t, m1, mean|x|^2, mean BL(lambda)^2)`, decimated
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub sup_m1: f64,
    pub sup_x2: f64,
    pub sup_bl2: f64,
    pub envelope_m1: f64,
    pub envelope_x2: f64,
    pub within: bool,
}

/// Sup empirical moments of a trajectory against explicit Gronwall
/// envelopes built from the probed growth constants and the initial
/// moments. The first-moment envelope is
/// `exp(C) exp(exp(C) t) (C t + m1(0))` with `C = max(M_v, M_T)`; the
/// second-moment envelope applies the same two-step argument to
/// `mean |x|^2` (label BL norms are structurally at most one).
pub fn moment_monitor(traj: &Trajectory, m_v_hat: f64, m_t_hat: f64, sigma: f64) -> MomentReport {
    let n = traj.n();
    let k = traj.label_count();
    let space = traj.space().clone();
    let steps = traj.steps();
    let mut scratch = vec![0.0; k];
    let (mut sup_m1, mut sup_x2, mut sup_bl2) = (0.0f64, 0.0f64, 0.0f64);
    let stride = (steps / 200).max(1);
    let mut rows = Vec::new();
    let mut m1_0 = 0.0;
    let mut x2_0 = 0.0;
    for s in 0..=steps {
        let view = traj.view_at(s);
        let mut m1 = 0.0;
        let mut x2 = 0.0;
        let mut bl2 = 0.0;
        for i in 0..n {
            let xn = norm2(view.x(i));
            m1 += xn + 1.0;
            x2 += xn * xn;
            scratch.copy_from_slice(view.lambda(i));
            let bl = bl_norm_of(&space, &scratch);
            bl2 += bl * bl;
        }
        m1 /= n as f64;
        x2 /= n as f64;
        bl2 /= n as f64;
        if s == 0 {
            m1_0 = m1;
            x2_0 = x2;
        }
        sup_m1 = sup_m1.max(m1);
        sup_x2 = sup_x2.max(x2);
        sup_bl2 = sup_bl2.max(bl2);
        if s % stride == 0 || s == steps {
            rows.push((traj.times[s], m1, x2, bl2));
        }
    }
    let t_end = *traj.times.last().unwrap();
    let c = m_v_hat.max(m_t_hat);
    let envelope_m1 = c.exp() * (c.exp() * t_end).exp() * (c * t_end + m1_0);
    // |x|^2 Gronwall chain: u(t) <= u0 + 2 sigma t + M t Int (3 + env1^2 + 2u)
    let m = c;
    let envelope_x2 =
        (x2_0 + 2.0 * sigma * t_end + m * t_end * t_end * (3.0 + envelope_m1 * envelope_m1))
            * (2.0 * m * t_end * t_end).exp();
    let within = sup_m1 <= envelope_m1 && sup_x2 <= envelope_x2 && sup_bl2 <= 1.0 + 1e-9;
    MomentReport {
        rows,
        sup_m1,
        sup_x2,
        sup_bl2,
        envelope_m1,
        envelope_x2,
        within,
    }
}

// ---------------------------------------------------------------------------
// Picard decay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub sup_diffs: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Fitted rate constant of `(M t)^{n+1} / (n+1)!` decay.
    pub m_hat: f64,
    pub fit_rms: f64,
    pub ratios_strictly_decreasing: bool,
    pub detail: String,
}

/// Runs the fixed-path Picard iteration and checks super-geometric decay of
/// the iterate differences: the ratio sequence must decrease strictly once
/// it drops below one. Differences below the float noise floor are excluded
/// from both the fit and the ratio check.
pub fn picard_decay_report(
    cfg: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
    n_iters: usize,
) -> Result<PicardReport> {
    if n_iters < 4 {
        return Err(Error::Usage("decay fit needs at least 4 iterations".into()));
    }
    let (_traj, sup_diffs) = particle::picard_solve(cfg, field, initial, n_iters)?;
    const FLOOR: f64 = 1e-13;
    let usable: Vec<(usize, f64)> = sup_diffs
        .iter()
        .enumerate()
        .take_while(|(_, d)| **d > FLOOR)
        .map(|(n, d)| (n, *d))
        .collect();
    let mut ratios = Vec::new();
    for w in usable.windows(2) {
        ratios.push(w[1].1 / w[0].1);
    }
    // Super-geometric decay: after the transient peak the ratio sequence
    // must fall strictly (a geometric tail would hold it constant), and it
    // must end below one.
    let peak = ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut strictly = !ratios.is_empty() && ratios.last().is_some_and(|r| *r < 1.0);
    for w in ratios[peak..].windows(2) {
        if w[1] >= w[0] - 1e-12 {
            strictly = false;
        }
    }
    // least squares for log d_n = (n+1) log(M T) - log((n+1)!)
    let mut num = 0.0;
    let mut den = 0.0;
    for (n, d) in usable.iter().skip(1) {
        let w = (*n + 1) as f64;
        num += w * (d.ln() + log_factorial(*n + 1));
        den += w * w;
    }
    let (m_hat, fit_rms) = if den > 0.0 {
        let x = num / den;
        let mut rss = 0.0;
        let mut count = 0.0f64;
        for (n, d) in usable.iter().skip(1) {
            let w = (*n + 1) as f64;
            let pred = w * x - log_factorial(*n + 1);
            rss += (d.ln() - pred) * (d.ln() - pred);
            count += 1.0;
        }
        (x.exp() / cfg.t_end, (rss / count.max(1.0)).sqrt())
    } else {
        (0.0, 0.0)
    };
    let detail = format!(
        "diffs {:?}, ratios {:?}, fitted M = {m_hat:.4}",
        &sup_diffs[..usable.len().min(sup_diffs.len())],
        ratios
    );
    Ok(PicardReport {
        sup_diffs,
        ratios,
        m_hat,
        fit_rms,
        ratios_strictly_decreasing: strictly,
        detail,
    })
}

fn log_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Probed growth constants for envelope construction, bundled for reports.
pub fn probe_growth_pair(
    field: &dyn Field,
    space: &Arc<LabelSpace>,
    d: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    probe_growth(field, space, d, 400, seed)
}
