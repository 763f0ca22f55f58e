//! N-agent time stepper: explicit Euler–Maruyama for positions and an exact
//! exponential convex-combination update for label measures, plus a Picard
//! iteration solver on a fixed Brownian path.
//!
//! The label update `lambda' = e^{-dt/theta} lambda + (1 - e^{-dt/theta}) g`
//! with `g = lambda + theta T` is a convex combination whenever `g` stays in
//! the simplex, which the feasibility constant `delta_R` guarantees for
//! `theta * delta_R <= 1`. That makes simplex preservation structural rather
//! than a clamping afterthought; drift beyond `-1e-10` per entry aborts the
//! run instead of being hidden.

use std::io::{self, Write};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::fields::{EnsembleView, Field, PreparedField};
use crate::measures::{bl_norm_of, EmpiricalMeasure, LabelSpace};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Entrywise slack tolerated in the convex-combination argument before the
/// step is declared infeasible.
pub const STEP_NEG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    pub dt: f64,
    pub t_end: f64,
    pub sigma: f64,
    pub theta: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Usage("agent count must be positive".into()));
        }
        if self.d == 0 {
            return Err(Error::Usage("spatial dimension must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Usage(format!("dt = {} must be positive", self.dt)));
        }
        if self.t_end < self.dt {
            return Err(Error::Usage(format!(
                "horizon {} shorter than one step {}",
                self.t_end, self.dt
            )));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Usage(format!(
                "sigma = {} must be nonnegative",
                self.sigma
            )));
        }
        if !(self.theta > 0.0) {
            return Err(Error::Usage(format!(
                "theta = {} must be positive",
                self.theta
            )));
        }
        Ok(())
    }

    /// Number of steps on the grid `0, dt, ..., t_end`; the horizon must sit
    /// on the grid.
    pub fn steps(&self) -> Result<usize> {
        let s = (self.t_end / self.dt).round();
        if (s * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) || s < 1.0 {
            return Err(Error::Usage(format!(
                "horizon {} is not a multiple of dt {}",
                self.t_end, self.dt
            )));
        }
        Ok(s as usize)
    }

    /// Default relaxation constant: `min(1 / delta_R_hat, 10 dt)`.
    pub fn default_theta(delta_r_hat: f64, dt: f64) -> f64 {
        if delta_r_hat > 0.0 {
            (1.0 / delta_r_hat).min(10.0 * dt)
        } else {
            10.0 * dt
        }
    }
}

/// Full time-grid record of a run: states at every grid point and the
/// Brownian increments that produced them (for replay and Picard reuse).
#[derive(Debug, Clone)]
pub struct Trajectory {
    space: Arc<LabelSpace>,
    d: usize,
    n: usize,
    pub times: Vec<f64>,
    xs: Vec<f64>,      // (steps+1) * n * d
    lambdas: Vec<f64>, // (steps+1) * n * k
    noise: Vec<f64>,   // steps * n * d
}

impl Trajectory {
    pub(crate) fn from_parts(
        space: Arc<LabelSpace>,
        d: usize,
        n: usize,
        times: Vec<f64>,
        xs: Vec<f64>,
        lambdas: Vec<f64>,
        noise: Vec<f64>,
    ) -> Self {
        Self {
            space,
            d,
            n,
            times,
            xs,
            lambdas,
            noise,
        }
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

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn xs_at(&self, step: usize) -> &[f64] {
        let nd = self.n * self.d;
        &self.xs[step * nd..(step + 1) * nd]
    }

    pub fn lambdas_at(&self, step: usize) -> &[f64] {
        let nk = self.n * self.space.len();
        &self.lambdas[step * nk..(step + 1) * nk]
    }

    pub fn noise_at(&self, step: usize) -> &[f64] {
        let nd = self.n * self.d;
        &self.noise[step * nd..(step + 1) * nd]
    }

    pub fn view_at(&self, step: usize) -> EnsembleView<'_> {
        EnsembleView {
            n: self.n,
            d: self.d,
            k: self.space.len(),
            xs: self.xs_at(step),
            lambdas: self.lambdas_at(step),
        }
    }

    pub fn measure_at(&self, step: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::from_columnar(
            self.space.clone(),
            self.d,
            self.xs_at(step).to_vec(),
            self.lambdas_at(step).to_vec(),
        )
        .expect("recorded states are valid")
    }

    /// Grid index of time `t` (nearest grid point).
    pub fn step_of_time(&self, t: f64) -> usize {
        let dt = self.times[1] - self.times[0];
        ((t / dt).round() as usize).min(self.steps())
    }

    pub fn x_series(&self, agent: usize, dim: usize) -> Vec<f64> {
        (0..self.times.len())
            .map(|s| self.xs_at(s)[agent * self.d + dim])
            .collect()
    }

    pub fn lambda_series(&self, agent: usize, atom: usize) -> Vec<f64> {
        let k = self.space.len();
        (0..self.times.len())
            .map(|s| self.lambdas_at(s)[agent * k + atom])
            .collect()
    }

    /// CSV with columns `t, agent, x_1..x_d, lambda_1..lambda_K`, one row per
    /// grid point per agent, sub-sampled by `stride` grid points.
    pub fn write_csv<W: Write>(&self, w: &mut W, stride: usize) -> io::Result<()> {
        let k = self.space.len();
        write!(w, "t,agent")?;
        for j in 0..self.d {
            write!(w, ",x_{}", j + 1)?;
        }
        for j in 0..k {
            write!(w, ",lambda_{}", j + 1)?;
        }
        writeln!(w)?;
        let stride = stride.max(1);
        let last = self.times.len() - 1;
        for s in (0..self.times.len()).filter(|s| s % stride == 0 || *s == last) {
            let xs = self.xs_at(s);
            let ls = self.lambdas_at(s);
            for i in 0..self.n {
                write!(w, "{},{}", self.times[s], i)?;
                for j in 0..self.d {
                    write!(w, ",{}", xs[i * self.d + j])?;
                }
                for j in 0..k {
                    write!(w, ",{}", ls[i * k + j])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// CSV of the Brownian increments, `step, agent, db_1..db_d`.
    pub fn write_noise_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "step,agent")?;
        for j in 0..self.d {
            write!(w, ",db_{}", j + 1)?;
        }
        writeln!(w)?;
        for s in 0..self.steps() {
            let row = self.noise_at(s);
            for i in 0..self.n {
                write!(w, "{s},{i}")?;
                for j in 0..self.d {
                    write!(w, ",{}", row[i * self.d + j])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Gaussian increments of variance `dt`, laid out `[step][agent][dim]`, one
/// counter-based stream per agent so the array is independent of execution
/// order.
pub fn brownian_increments(seed: u64, n: usize, d: usize, steps: usize, dt: f64) -> Vec<f64> {
    let mut noise = vec![0.0f64; steps * n * d];
    let sd = dt.sqrt();
    for agent in 0..n {
        let mut stream = rng::stream(seed, Purpose::Brownian, agent as u64);
        for step in 0..steps {
            let base = (step * n + agent) * d;
            for dim in 0..d {
                noise[base + dim] = sd * rng::standard_normal(&mut stream);
            }
        }
    }
    noise
}

/// One step of the coupled update on raw buffers. `lam_arg` optionally
/// replaces the label-operator argument per agent (the heterogeneous-noise
/// channel); velocity and the state update always use `lam_old`.
#[allow(clippy::too_many_arguments)]
fn step_buffers(
    prep: &dyn PreparedField,
    d: usize,
    k: usize,
    xs_old: &[f64],
    lam_old: &[f64],
    lam_arg: Option<&[f64]>,
    xs_new: &mut [f64],
    lam_new: &mut [f64],
    dt: f64,
    sigma: f64,
    theta: f64,
    noise: &[f64],
) -> Result<()> {
    let n = xs_old.len() / d;
    let decay = (-dt / theta).exp();
    let gain = 1.0 - decay;
    let diff = (2.0 * sigma).sqrt();
    let mut v = vec![0.0; d];
    let mut t = vec![0.0; k];
    for i in 0..n {
        let x = &xs_old[i * d..(i + 1) * d];
        let lam = &lam_old[i * k..(i + 1) * k];
        let arg = match lam_arg {
            Some(buf) => &buf[i * k..(i + 1) * k],
            None => lam,
        };
        prep.velocity(x, lam, &mut v);
        prep.label_op(x, arg, &mut t);

        for j in 0..d {
            xs_new[i * d + j] = x[j] + v[j] * dt + diff * noise[i * d + j];
        }

        let g = &mut lam_new[i * k..(i + 1) * k];
        let mut sum = 0.0;
        for j in 0..k {
            let mut gj = lam[j] + theta * t[j];
            if gj < 0.0 {
                if gj < -STEP_NEG_TOL {
                    return Err(Error::Config(format!(
                        "theta too large for field's delta_R: agent {i} label {j} \
                         relaxation target {gj}"
                    )));
                }
                gj = 0.0;
            }
            g[j] = gj;
            sum += gj;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!(
                "label operator output of agent {i} is not zero-mass (target sums to {sum})"
            )));
        }
        for j in 0..k {
            g[j] = decay * lam[j] + gain * (g[j] / sum);
        }
    }
    Ok(())
}

/// One step from a frozen snapshot: positions get drift plus `sqrt(2 sigma)`
/// times the supplied Gaussian increments; labels relax exponentially toward
/// `g = lambda + theta T`. The snapshot the field sees is the input state.
pub fn step(
    states: &EmpiricalMeasure,
    field: &dyn Field,
    dt: f64,
    sigma: f64,
    theta: f64,
    noise: &[f64],
) -> Result<EmpiricalMeasure> {
    let (n, d, k) = (states.n(), states.dim(), states.label_count());
    if noise.len() != n * d {
        return Err(Error::Usage(format!(
            "noise buffer has {} entries, expected {}",
            noise.len(),
            n * d
        )));
    }
    if let Some(req) = field.dim_requirement() {
        if req != d {
            return Err(Error::Usage(format!(
                "field requires dimension {req}, states have {d}"
            )));
        }
    }
    let mut xs_new = vec![0.0; n * d];
    let mut lam_new = vec![0.0; n * k];
    let view = EnsembleView::of(states);
    let prep = field.prepare(&view);
    step_buffers(
        prep.as_ref(),
        d,
        k,
        states.xs(),
        states.lambdas(),
        None,
        &mut xs_new,
        &mut lam_new,
        dt,
        sigma,
        theta,
        noise,
    )?;
    EmpiricalMeasure::from_columnar(states.space().clone(), d, xs_new, lam_new)
}

/// Operating-ball radius used when probing feasibility constants for a run.
pub fn active_radius(initial: &EmpiricalMeasure) -> f64 {
    let max_norm = (0..initial.n())
        .map(|i| crate::measures::norm2(initial.x(i)) + 1.0)
        .fold(0.0f64, f64::max);
    2.0 * max_norm + 1.0
}

/// Positivity-margin constant for a run: the field's declared value when it
/// has one, otherwise twice the worst ratio `-T_k / lambda_k` over the
/// actual initial ensemble. Random-ball probing would be meaningless for
/// fields whose margin degenerates toward the simplex boundary; what the
/// stepper needs is feasibility on the states the run starts from, and the
/// per-step check guards everything after that.
pub fn delta_r_for_run(field: &dyn Field, initial: &EmpiricalMeasure) -> f64 {
    if let Some(delta) = field.delta_r(active_radius(initial)) {
        return delta;
    }
    let k = initial.label_count();
    let view = EnsembleView::of(initial);
    let prep = field.prepare(&view);
    let mut t = vec![0.0; k];
    let mut worst = 0.0f64;
    for i in 0..initial.n() {
        prep.label_op(initial.x(i), initial.lambda_weights(i), &mut t);
        for (tk, lk) in t.iter().zip(initial.lambda_weights(i)) {
            if *lk >= 1e-6 && *tk < 0.0 {
                worst = worst.max(-tk / lk);
            }
        }
    }
    2.0 * worst
}

fn check_feasibility(cfg: &SimConfig, field: &dyn Field, initial: &EmpiricalMeasure) -> Result<()> {
    let delta = delta_r_for_run(field, initial);
    if cfg.theta * delta > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "theta {} infeasible: theta * delta_R = {} exceeds 1 (delta_R ~ {delta})",
            cfg.theta,
            cfg.theta * delta
        )));
    }
    Ok(())
}

fn validate_run(cfg: &SimConfig, field: &dyn Field, initial: &EmpiricalMeasure) -> Result<usize> {
    cfg.validate()?;
    if initial.n() != cfg.n {
        return Err(Error::Usage(format!(
            "initial ensemble has {} agents, config says {}",
            initial.n(),
            cfg.n
        )));
    }
    if initial.dim() != cfg.d {
        return Err(Error::Usage("initial ensemble dimension mismatch".into()));
    }
    if let Some(req) = field.dim_requirement() {
        if req != cfg.d {
            return Err(Error::Usage(format!(
                "field requires dimension {req}, config says {}",
                cfg.d
            )));
        }
    }
    cfg.steps()
}

/// Iterates [`step`] over the grid. Deterministic function of
/// `(cfg.seed, initial, cfg)`; failures carry the offending time index.
pub fn simulate(
    cfg: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
) -> Result<Trajectory> {
    let steps = validate_run(cfg, field, initial)?;
    check_feasibility(cfg, field, initial)?;
    let (n, d, k) = (cfg.n, cfg.d, initial.label_count());
    let noise = brownian_increments(cfg.seed, n, d, steps, cfg.dt);

    let nd = n * d;
    let nk = n * k;
    let mut xs = vec![0.0f64; (steps + 1) * nd];
    let mut lambdas = vec![0.0f64; (steps + 1) * nk];
    xs[..nd].copy_from_slice(initial.xs());
    lambdas[..nk].copy_from_slice(initial.lambdas());

    for s in 0..steps {
        let (xs_done, xs_rest) = xs.split_at_mut((s + 1) * nd);
        let (lam_done, lam_rest) = lambdas.split_at_mut((s + 1) * nk);
        let xs_old = &xs_done[s * nd..];
        let lam_old = &lam_done[s * nk..];
        let view = EnsembleView {
            n,
            d,
            k,
            xs: xs_old,
            lambdas: lam_old,
        };
        let prep = field.prepare(&view);
        step_buffers(
            prep.as_ref(),
            d,
            k,
            xs_old,
            lam_old,
            None,
            &mut xs_rest[..nd],
            &mut lam_rest[..nk],
            cfg.dt,
            cfg.sigma,
            cfg.theta,
            &noise[s * nd..(s + 1) * nd],
        )
        .map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("step {s}: {msg}")),
            Error::Invariant(msg) => Error::Invariant(format!("step {s}: {msg}")),
            other => other,
        })?;
    }

    let times = (0..=steps).map(|s| s as f64 * cfg.dt).collect();
    Ok(Trajectory {
        space: initial.space().clone(),
        d,
        n,
        times,
        xs,
        lambdas,
        noise,
    })
}

/// Fixed-path Picard iteration. Iterate `n+1` integrates the velocity and
/// the exponential-kernel label update against iterate `n`'s trajectory and
/// empirical measures, on the same Brownian increments. Returns the final
/// iterate and, per iteration, the sup over grid times of the agent-averaged
/// product-space distance between consecutive iterates.
pub fn picard_solve(
    cfg: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
    n_iters: usize,
) -> Result<(Trajectory, Vec<f64>)> {
    let steps = validate_run(cfg, field, initial)?;
    check_feasibility(cfg, field, initial)?;
    if n_iters == 0 {
        return Err(Error::Usage(
            "picard_solve needs at least one iteration".into(),
        ));
    }
    let (n, d, k) = (cfg.n, cfg.d, initial.label_count());
    let noise = brownian_increments(cfg.seed, n, d, steps, cfg.dt);
    let nd = n * d;
    let nk = n * k;
    let space = initial.space().clone();

    // Iterate 0 is the constant-in-time initial condition.
    let mut prev_xs = vec![0.0f64; (steps + 1) * nd];
    let mut prev_lam = vec![0.0f64; (steps + 1) * nk];
    for s in 0..=steps {
        prev_xs[s * nd..(s + 1) * nd].copy_from_slice(initial.xs());
        prev_lam[s * nk..(s + 1) * nk].copy_from_slice(initial.lambdas());
    }

    let decay = (-cfg.dt / cfg.theta).exp();
    let gain = 1.0 - decay;
    let diff = (2.0 * cfg.sigma).sqrt();
    let mut next_xs = vec![0.0f64; (steps + 1) * nd];
    let mut next_lam = vec![0.0f64; (steps + 1) * nk];
    let mut sup_diffs = Vec::with_capacity(n_iters);
    let mut v = vec![0.0; d];
    let mut t = vec![0.0; k];
    let mut scratch = vec![0.0; k];

    for _iter in 0..n_iters {
        next_xs[..nd].copy_from_slice(initial.xs());
        next_lam[..nk].copy_from_slice(initial.lambdas());
        for s in 0..steps {
            let view = EnsembleView {
                n,
                d,
                k,
                xs: &prev_xs[s * nd..(s + 1) * nd],
                lambdas: &prev_lam[s * nk..(s + 1) * nk],
            };
            let prep = field.prepare(&view);
            for i in 0..n {
                let px = &prev_xs[s * nd + i * d..s * nd + (i + 1) * d];
                let pl = &prev_lam[s * nk + i * k..s * nk + (i + 1) * k];
                prep.velocity(px, pl, &mut v);
                prep.label_op(px, pl, &mut t);
                for j in 0..d {
                    next_xs[(s + 1) * nd + i * d + j] = next_xs[s * nd + i * d + j]
                        + v[j] * cfg.dt
                        + diff * noise[s * nd + i * d + j];
                }
                let mut sum = 0.0;
                for j in 0..k {
                    let mut gj = pl[j] + cfg.theta * t[j];
                    if gj < 0.0 {
                        if gj < -STEP_NEG_TOL {
                            return Err(Error::Config(format!(
                                "theta too large for field's delta_R: iterate step {s}, \
                                 agent {i}, target entry {gj}"
                            )));
                        }
                        gj = 0.0;
                    }
                    scratch[j] = gj;
                    sum += gj;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Invariant(format!(
                        "label operator output at step {s}, agent {i} is not zero-mass"
                    )));
                }
                for j in 0..k {
                    next_lam[(s + 1) * nk + i * k + j] =
                        decay * next_lam[s * nk + i * k + j] + gain * (scratch[j] / sum);
                }
            }
        }

        let mut sup = 0.0f64;
        for s in 0..=steps {
            let mut acc = 0.0;
            for i in 0..n {
                let a = &next_xs[s * nd + i * d..s * nd + (i + 1) * d];
                let b = &prev_xs[s * nd + i * d..s * nd + (i + 1) * d];
                let dx = crate::measures::dist2(a, b);
                for j in 0..k {
                    scratch[j] = next_lam[s * nk + i * k + j] - prev_lam[s * nk + i * k + j];
                }
                acc += dx + bl_norm_of(&space, &scratch);
            }
            sup = sup.max(acc / n as f64);
        }
        sup_diffs.push(sup);

        std::mem::swap(&mut prev_xs, &mut next_xs);
        std::mem::swap(&mut prev_lam, &mut next_lam);
    }

    let times = (0..=steps).map(|s| s as f64 * cfg.dt).collect();
    let traj = Trajectory {
        space,
        d,
        n,
        times,
        xs: prev_xs,
        lambdas: prev_lam,
        noise,
    };
    Ok((traj, sup_diffs))
}

// ---------------------------------------------------------------------------
// Initial laws
// ---------------------------------------------------------------------------

/// Per-dimension position law for sampled initial states.
#[derive(Debug, Clone)]
pub enum PositionLaw {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
}

/// Label-measure law for sampled initial states.
#[derive(Debug, Clone)]
pub enum LambdaLaw {
    Fixed(Vec<f64>),
    /// Uniform weights tilted by `eps`-scaled symmetric noise, renormalized.
    Jitter {
        eps: f64,
    },
    UniformSimplex,
}

#[derive(Debug, Clone)]
pub struct InitialLaw {
    pub position: PositionLaw,
    pub lambda: LambdaLaw,
}

impl InitialLaw {
    pub fn sample(
        &self,
        space: &Arc<LabelSpace>,
        d: usize,
        n: usize,
        seed: u64,
    ) -> Result<EmpiricalMeasure> {
        if let LambdaLaw::Jitter { eps } = self.lambda {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::Usage(format!(
                    "lambda jitter {eps} must lie in [0, 1)"
                )));
            }
        }
        let k = space.len();
        let mut xs = Vec::with_capacity(n * d);
        let mut lambdas = Vec::with_capacity(n * k);
        for agent in 0..n {
            let mut stream = rng::stream(seed, Purpose::Init, agent as u64);
            for _ in 0..d {
                xs.push(self.sample_position(&mut stream));
            }
            lambdas.extend(self.sample_lambda(&mut stream, k));
        }
        EmpiricalMeasure::from_columnar(space.clone(), d, xs, lambdas)
    }

    fn sample_position(&self, stream: &mut ChaCha8Rng) -> f64 {
        match self.position {
            PositionLaw::Fixed(v) => v,
            PositionLaw::Uniform { lo, hi } => rng::uniform(stream, lo, hi),
            PositionLaw::Gaussian { mean, sd } => mean + sd * rng::standard_normal(stream),
        }
    }

    fn sample_lambda(&self, stream: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        match &self.lambda {
            LambdaLaw::Fixed(w) => w.clone(),
            LambdaLaw::Jitter { eps } => {
                let mut w: Vec<f64> = (0..k)
                    .map(|_| (1.0 + eps * rng::uniform(stream, -1.0, 1.0)) / k as f64)
                    .collect();
                let sum: f64 = w.iter().sum();
                for v in w.iter_mut() {
                    *v /= sum;
                }
                w
            }
            LambdaLaw::UniformSimplex => {
                let mut w: Vec<f64> = (0..k)
                    .map(|_| -rng::uniform(stream, 1e-12, 1.0).ln())
                    .collect();
                let sum: f64 = w.iter().sum();
                for v in w.iter_mut() {
                    *v /= sum;
                }
                w
            }
        }
    }
}
