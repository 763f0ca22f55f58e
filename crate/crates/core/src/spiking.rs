//! Integrate-and-fire variant of the particle system: threshold resets with
//! spike recording, plus an optional heterogeneous label-noise channel that
//! perturbs the label-operator argument with a shared zero-mass Brownian
//! combination.

use std::io::{self, Write};
use std::sync::Arc;

use crate::fields::{EnsembleView, Field};
use crate::measures::{EmpiricalMeasure, LabelSpace, SignedLabelMeasure};
use crate::particle::{self, SimConfig, Trajectory, STEP_NEG_TOL};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Shared label-noise channel `R(t) = sum_h a_h W_h(t) e_h` with zero-mass
/// basis measures `e_h` and square-summable coefficients.
#[derive(Debug, Clone)]
pub struct HeterogeneousNoiseSpec {
    pub coeffs: Vec<f64>,
    pub basis: Vec<SignedLabelMeasure>,
    /// Offset added to the run seed for the `W_h` streams, so the label
    /// noise is independent of the per-agent position noise by construction.
    pub seed_offset: u64,
}

impl HeterogeneousNoiseSpec {
    pub fn new(coeffs: Vec<f64>, basis: Vec<SignedLabelMeasure>, seed_offset: u64) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::Usage(format!(
                "{} coefficients for {} basis measures",
                coeffs.len(),
                basis.len()
            )));
        }
        if coeffs.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Usage(
                "noise coefficients must be nonnegative".into(),
            ));
        }
        for (h, e) in basis.iter().enumerate() {
            if !e.is_zero_mass() {
                return Err(Error::Invariant(format!(
                    "basis measure {h} has total mass {}",
                    e.total_mass()
                )));
            }
        }
        Ok(Self {
            coeffs,
            basis,
            seed_offset,
        })
    }

    /// Default truncation: differences of neighboring atoms normalized by
    /// their distance, with geometrically decaying coefficients `a0 2^{-h}`.
    pub fn geometric(space: &Arc<LabelSpace>, order: usize, a0: f64) -> Result<Self> {
        let k = space.len();
        if order + 1 > k {
            return Err(Error::Usage(format!(
                "truncation order {order} needs at least {} atoms",
                order + 1
            )));
        }
        let mut basis = Vec::with_capacity(order);
        let mut coeffs = Vec::with_capacity(order);
        for h in 0..order {
            let gap = space.dist(h, h + 1);
            let mut w = vec![0.0; k];
            w[h] = 1.0 / gap;
            w[h + 1] = -1.0 / gap;
            basis.push(SignedLabelMeasure::new(space.clone(), w)?);
            coeffs.push(a0 * 0.5f64.powi(h as i32));
        }
        Self::new(coeffs, basis, 0)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

/// Precomputed shared Brownian paths `W_h` on the run grid, read-only during
/// stepping.
#[derive(Debug, Clone)]
pub struct LabelNoisePaths {
    order: usize,
    /// `(steps + 1) x order`, row-major by grid index.
    values: Vec<f64>,
}

impl LabelNoisePaths {
    pub fn generate(spec: &HeterogeneousNoiseSpec, seed: u64, steps: usize, dt: f64) -> Self {
        let order = spec.order();
        let mut values = vec![0.0f64; (steps + 1) * order];
        let sd = dt.sqrt();
        for h in 0..order {
            let mut stream = rng::stream(
                seed.wrapping_add(spec.seed_offset),
                Purpose::LabelNoise,
                h as u64,
            );
            let mut w = 0.0;
            for s in 1..=steps {
                w += sd * rng::standard_normal(&mut stream);
                values[s * order + h] = w;
            }
        }
        Self { order, values }
    }

    pub fn w(&self, step: usize, h: usize) -> f64 {
        self.values[step * self.order + h]
    }

    /// Writes `R(t_step)` as weights into `out` (zero-mass by construction).
    pub fn perturbation_into(&self, spec: &HeterogeneousNoiseSpec, step: usize, out: &mut [f64]) {
        out.fill(0.0);
        for h in 0..self.order {
            let scale = spec.coeffs[h] * self.w(step, h);
            for (o, w) in out.iter_mut().zip(spec.basis[h].weights()) {
                *o += scale * w;
            }
        }
    }
}

/// Evaluates the label operator at the perturbed argument
/// `(x, lambda + R(t))`. The perturbation never touches the stored state.
pub fn heterogeneous_label_drift(
    spec: &HeterogeneousNoiseSpec,
    paths: &LabelNoisePaths,
    t_index: usize,
    y_index: usize,
    psi: &EmpiricalMeasure,
    field: &dyn Field,
) -> Result<SignedLabelMeasure> {
    if !field.accepts_signed_labels() {
        return Err(Error::Config(
            "active field does not accept signed label arguments".into(),
        ));
    }
    let k = psi.label_count();
    let mut arg = vec![0.0; k];
    paths.perturbation_into(spec, t_index, &mut arg);
    for (a, w) in arg.iter_mut().zip(psi.lambda_weights(y_index)) {
        *a += w;
    }
    let view = EnsembleView::of(psi);
    let prep = field.prepare(&view);
    let mut out = vec![0.0; k];
    prep.label_op(psi.x(y_index), &arg, &mut out);
    SignedLabelMeasure::new(psi.space().clone(), out)
}

/// Spiking run configuration: threshold, reset value, optional random
/// threshold interval, optional heterogeneous label noise.
#[derive(Debug, Clone)]
pub struct SpikeConfig {
    pub base: SimConfig,
    pub x_f: f64,
    pub x_r: f64,
    /// When set, the threshold is drawn once per run, uniformly from this
    /// closed interval (bounded random threshold).
    pub x_f_jitter: Option<(f64, f64)>,
    pub het: Option<HeterogeneousNoiseSpec>,
}

impl SpikeConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.base.d != 1 {
            return Err(Error::Usage("spiking dynamics are one-dimensional".into()));
        }
        if !self.x_f.is_finite() || !self.x_r.is_finite() {
            return Err(Error::Usage("threshold and reset must be finite".into()));
        }
        if self.x_r >= self.x_f {
            return Err(Error::Usage(format!(
                "reset {} must lie strictly below threshold {}",
                self.x_r, self.x_f
            )));
        }
        if let Some((lo, hi)) = self.x_f_jitter {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Usage(
                    "threshold interval must be a bounded ordered pair".into(),
                ));
            }
            if self.x_r >= lo {
                return Err(Error::Usage(
                    "reset must lie strictly below every admissible threshold".into(),
                ));
            }
        }
        Ok(())
    }

    /// The threshold actually used by a run: the constant, or one bounded
    /// uniform draw per run.
    pub fn threshold_for_run(&self) -> f64 {
        match self.x_f_jitter {
            None => self.x_f,
            Some((lo, hi)) => {
                let mut stream = rng::stream(self.base.seed, Purpose::Threshold, 0);
                rng::uniform(&mut stream, lo, hi)
            }
        }
    }
}

/// Spike log: `(agent, grid time)` events plus the discarded overshoot
/// magnitudes, for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct SpikeRecord {
    pub spikes: Vec<(usize, f64)>,
    pub overshoots: Vec<f64>,
}

impl SpikeRecord {
    pub fn count(&self) -> usize {
        self.spikes.len()
    }

    /// Spike times of one agent, in increasing order.
    pub fn times_of(&self, agent: usize) -> Vec<f64> {
        self.spikes
            .iter()
            .filter(|(a, _)| *a == agent)
            .map(|(_, t)| *t)
            .collect()
    }

    /// Inter-spike intervals of one agent.
    pub fn inter_spike_intervals(&self, agent: usize) -> Vec<f64> {
        let times = self.times_of(agent);
        times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Raster CSV: `agent, t`.
    pub fn write_raster_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "agent,t")?;
        for (agent, t) in &self.spikes {
            writeln!(w, "{agent},{t}")?;
        }
        Ok(())
    }
}

/// One spiking step: the plain coupled update, then every agent at or above
/// threshold is reset to `x_r` and logged. The label update is untouched by
/// the reset within the same step.
pub fn spiking_step(
    states: &EmpiricalMeasure,
    field: &dyn Field,
    cfg: &SpikeConfig,
    noise: &[f64],
) -> Result<(EmpiricalMeasure, Vec<usize>)> {
    cfg.validate()?;
    let stepped = particle::step(
        states,
        field,
        cfg.base.dt,
        cfg.base.sigma,
        cfg.base.theta,
        noise,
    )?;
    let threshold = cfg.threshold_for_run();
    let mut xs = stepped.xs().to_vec();
    let mut fired = Vec::new();
    for (i, x) in xs.iter_mut().enumerate() {
        if *x >= threshold {
            *x = cfg.x_r;
            fired.push(i);
        }
    }
    let out =
        EmpiricalMeasure::from_columnar(states.space().clone(), 1, xs, stepped.lambdas().to_vec())?;
    Ok((out, fired))
}

/// Full spiking run. Only the position channel differs from
/// [`particle::simulate`]: grid crossings `x' >= X_F` reset to `X_R` (the
/// continuous-time event `X(t^-) = X_F` has probability zero on a grid;
/// overshoot is discarded and logged). With a heterogeneous spec the label
/// operator sees `lambda + R(t)` while the state and velocity keep the true
/// `lambda`.
pub fn simulate_spiking(
    cfg: &SpikeConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
) -> Result<(Trajectory, SpikeRecord)> {
    cfg.validate()?;
    if cfg.het.is_some() && !field.accepts_signed_labels() {
        return Err(Error::Config(
            "active field does not accept signed label arguments".into(),
        ));
    }
    let base = &cfg.base;
    let steps = base.steps()?;
    if initial.n() != base.n || initial.dim() != 1 {
        return Err(Error::Usage(
            "initial ensemble does not match the spiking config".into(),
        ));
    }
    let threshold = cfg.threshold_for_run();
    let k = initial.label_count();
    let n = base.n;
    let noise = particle::brownian_increments(base.seed, n, 1, steps, base.dt);
    let het_paths = cfg
        .het
        .as_ref()
        .map(|spec| LabelNoisePaths::generate(spec, base.seed, steps, base.dt));

    let decay = (-base.dt / base.theta).exp();
    let gain = 1.0 - decay;
    let diff = (2.0 * base.sigma).sqrt();
    let mut xs = vec![0.0f64; (steps + 1) * n];
    let mut lambdas = vec![0.0f64; (steps + 1) * n * k];
    xs[..n].copy_from_slice(initial.xs());
    lambdas[..n * k].copy_from_slice(initial.lambdas());
    let mut record = SpikeRecord::default();
    let mut v = [0.0f64; 1];
    let mut t_out = vec![0.0; k];
    let mut arg = vec![0.0; k];
    let mut r_t = vec![0.0; k];

    for s in 0..steps {
        if let (Some(spec), Some(paths)) = (&cfg.het, &het_paths) {
            paths.perturbation_into(spec, s, &mut r_t);
        }
        let (xs_done, xs_rest) = xs.split_at_mut((s + 1) * n);
        let (lam_done, lam_rest) = lambdas.split_at_mut((s + 1) * n * k);
        let xs_old = &xs_done[s * n..];
        let lam_old = &lam_done[s * n * k..];
        let view = EnsembleView {
            n,
            d: 1,
            k,
            xs: xs_old,
            lambdas: lam_old,
        };
        let prep = field.prepare(&view);
        let t_now = (s + 1) as f64 * base.dt;
        for i in 0..n {
            let x = &xs_old[i..i + 1];
            let lam = &lam_old[i * k..(i + 1) * k];
            prep.velocity(x, lam, &mut v);
            let label_arg = if cfg.het.is_some() {
                for (a, (l, r)) in arg.iter_mut().zip(lam.iter().zip(&r_t)) {
                    *a = l + r;
                }
                &arg[..]
            } else {
                lam
            };
            prep.label_op(x, label_arg, &mut t_out);

            let mut x_new = x[0] + v[0] * base.dt + diff * noise[s * n + i];
            if x_new >= threshold {
                record.overshoots.push(x_new - threshold);
                record.spikes.push((i, t_now));
                x_new = cfg.x_r;
            }
            xs_rest[i] = x_new;

            let g = &mut lam_rest[i * k..(i + 1) * k];
            let mut sum = 0.0;
            for j in 0..k {
                let mut gj = lam[j] + base.theta * t_out[j];
                if gj < 0.0 {
                    if gj < -STEP_NEG_TOL {
                        return Err(Error::Config(format!(
                            "theta too large for field's delta_R: step {s}, agent {i}, \
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
                    "label operator output at step {s}, agent {i} is not zero-mass"
                )));
            }
            for j in 0..k {
                g[j] = decay * lam[j] + gain * (g[j] / sum);
            }
        }
    }

    let times = (0..=steps).map(|s| s as f64 * base.dt).collect();
    let traj = Trajectory::from_parts(initial.space().clone(), 1, n, times, xs, lambdas, noise);
    Ok((traj, record))
}

/// Population firing rate per time bin: spike count normalized by `N * bin`.
/// Returns `(bin_start, rate)` rows covering `[0, t_end]`.
pub fn raster_and_rates(
    record: &SpikeRecord,
    n_agents: usize,
    bin: f64,
    t_end: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(bin > 0.0) {
        return Err(Error::Usage(format!("bin width {bin} must be positive")));
    }
    if n_agents == 0 {
        return Err(Error::Usage(
            "rate table needs a positive agent count".into(),
        ));
    }
    let n_bins = (t_end / bin).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; n_bins];
    for (_, t) in &record.spikes {
        let b = ((t / bin).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, c)| (b as f64 * bin, *c as f64 / (n_agents as f64 * bin)))
        .collect())
}

/// Rate table CSV: `bin_start, rate`.
pub fn write_rates_csv<W: Write>(rates: &[(f64, f64)], w: &mut W) -> io::Result<()> {
    writeln!(w, "bin_start,rate")?;
    for (start, rate) in rates {
        writeln!(w, "{start},{rate}")?;
    }
    Ok(())
}
