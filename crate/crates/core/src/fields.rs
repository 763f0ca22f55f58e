//! Pluggable velocity fields and label-measure drift operators, plus numeric
//! probes for their structural constants.
//!
//! A [`Field`] bundles the velocity `v_Psi` and the label operator `T_Psi`.
//! Evaluation is two-phase: [`Field::prepare`] runs once per step against a
//! frozen ensemble snapshot (so ensemble statistics are computed once), and
//! the returned [`PreparedField`] evaluates per agent. Label operators must
//! output zero-total-mass weight vectors; the built-in fields guarantee this
//! exactly by construction.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::measures::{
    bl_norm_of, dist2, norm2, w1_product, AgentState, EmpiricalMeasure, LabelSpace,
    SignedLabelMeasure,
};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Borrowed columnar snapshot of an ensemble, the `Psi` argument of a field.
#[derive(Clone, Copy)]
pub struct EnsembleView<'a> {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub xs: &'a [f64],
    pub lambdas: &'a [f64],
}

impl<'a> EnsembleView<'a> {
    pub fn of(m: &'a EmpiricalMeasure) -> Self {
        Self {
            n: m.n(),
            d: m.dim(),
            k: m.label_count(),
            xs: m.xs(),
            lambdas: m.lambdas(),
        }
    }

    pub fn x(&self, i: usize) -> &'a [f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn lambda(&self, i: usize) -> &'a [f64] {
        &self.lambdas[i * self.k..(i + 1) * self.k]
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

    pub fn m1(&self) -> f64 {
        (0..self.n).map(|i| norm2(self.x(i)) + 1.0).sum::<f64>() / self.n as f64
    }
}

/// Per-agent evaluation against the snapshot captured by `prepare`.
///
/// `lambda` is usually a probability vector, but fields that report
/// [`Field::accepts_signed_labels`] must also accept signed weight vectors
/// (the heterogeneous-noise channel perturbs the argument, never the state).
pub trait PreparedField {
    fn velocity(&self, x: &[f64], lambda: &[f64], out: &mut [f64]);
    /// Writes the label-operator weights; the result must sum to zero within
    /// 1e-12.
    fn label_op(&self, x: &[f64], lambda: &[f64], out: &mut [f64]);
}

pub trait Field: Send + Sync {
    /// Spatial dimension the field requires, if any.
    fn dim_requirement(&self) -> Option<usize> {
        None
    }

    fn prepare<'a>(&'a self, psi: &EnsembleView<'a>) -> Box<dyn PreparedField + 'a>;

    /// Analytic positivity-margin constant for the ball of radius `radius`,
    /// when one is known. `None` means callers should probe.
    fn delta_r(&self, radius: f64) -> Option<f64> {
        let _ = radius;
        None
    }

    /// Whether the label operator tolerates signed `lambda` arguments.
    fn accepts_signed_labels(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Linear field (the one-dimensional illustrative system)
// ---------------------------------------------------------------------------

/// Coefficients of the 1-D linear field: velocity `a x + b <lambda> + c <X>`
/// and label drift `d x + e <lambda> + f <X>` (ensemble-centered), where
/// `<lambda>` is the mean label value under the canonical embedding and
/// `<X>` the ensemble mean position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFieldParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl LinearFieldParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("e", self.e),
            ("f", self.f),
        ] {
            if !v.is_finite() {
                return Err(Error::Usage(format!(
                    "linear field coefficient {name} = {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The scalar label drift is lifted to a measure along a fixed zero-mass
/// tilt direction `e0 = (delta_max - delta_min) / d(min, max)` between the
/// extreme atoms of the embedding, and the ensemble average of the drift is
/// subtracted so the population-averaged pairing is centered.
pub struct LinearField {
    params: LinearFieldParams,
    embedding: Vec<f64>,
    tilt: Vec<f64>, // zero-mass direction, all zeros when K = 1
}

impl LinearField {
    pub fn new(params: LinearFieldParams, space: &Arc<LabelSpace>) -> Result<Self> {
        params.validate()?;
        let embedding = space.canonical_embedding();
        let k = space.len();
        let mut tilt = vec![0.0; k];
        if k >= 2 {
            let (mut lo, mut hi) = (0usize, 0usize);
            for (i, v) in embedding.iter().enumerate() {
                if *v < embedding[lo] {
                    lo = i;
                }
                if *v > embedding[hi] {
                    hi = i;
                }
            }
            if lo == hi {
                return Err(Error::Usage("label embedding is degenerate".into()));
            }
            let gap = space.dist(lo, hi);
            tilt[hi] = 1.0 / gap;
            tilt[lo] = -1.0 / gap;
        }
        Ok(Self {
            params,
            embedding,
            tilt,
        })
    }

    pub fn params(&self) -> LinearFieldParams {
        self.params
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    fn drift(&self, x: f64, mean_lambda: f64, mean_x: f64) -> f64 {
        self.params.d * x + self.params.e * mean_lambda + self.params.f * mean_x
    }
}

struct LinearPrepared<'a> {
    field: &'a LinearField,
    mean_x: f64,
    mean_drift: f64,
}

impl PreparedField for LinearPrepared<'_> {
    fn velocity(&self, x: &[f64], lambda: &[f64], out: &mut [f64]) {
        let p = self.field.params;
        let ml: f64 = lambda
            .iter()
            .zip(&self.field.embedding)
            .map(|(w, e)| w * e)
            .sum();
        out[0] = p.a * x[0] + p.b * ml + p.c * self.mean_x;
    }

    fn label_op(&self, x: &[f64], lambda: &[f64], out: &mut [f64]) {
        let ml: f64 = lambda
            .iter()
            .zip(&self.field.embedding)
            .map(|(w, e)| w * e)
            .sum();
        let s = self.field.drift(x[0], ml, self.mean_x) - self.mean_drift;
        for (o, t) in out.iter_mut().zip(&self.field.tilt) {
            *o = s * t;
        }
    }
}

impl Field for LinearField {
    fn dim_requirement(&self) -> Option<usize> {
        Some(1)
    }

    fn prepare<'a>(&'a self, psi: &EnsembleView<'a>) -> Box<dyn PreparedField + 'a> {
        let mean_x = psi.mean_x()[0];
        let mut mean_drift = 0.0;
        for i in 0..psi.n {
            let ml: f64 = psi
                .lambda(i)
                .iter()
                .zip(&self.embedding)
                .map(|(w, e)| w * e)
                .sum();
            mean_drift += self.drift(psi.x(i)[0], ml, mean_x);
        }
        mean_drift /= psi.n as f64;
        Box::new(LinearPrepared {
            field: self,
            mean_x,
            mean_drift,
        })
    }
}

// ---------------------------------------------------------------------------
// Kernel-style label operator
// ---------------------------------------------------------------------------

pub type AlphaFn = dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync;

/// The per-atom interaction kernel `alpha(u_k, z)`.
#[derive(Clone)]
pub enum AlphaKind {
    /// `alpha(u_k, (x, lambda)) = on_x[k] * x_1 + on_lambda[k] * <lambda>`
    /// with `<lambda>` the mean label value under the canonical embedding.
    MomentCombo { on_x: Vec<f64>, on_lambda: Vec<f64> },
    /// Arbitrary kernel; `signed_ok` declares whether it accepts signed
    /// lambda arguments.
    Custom { f: Arc<AlphaFn>, signed_ok: bool },
}

/// Kernel label operator: weight at atom `u_k` is the ensemble average of
/// `alpha(u_k, z)` shifted uniformly to total mass zero. `beta` are the
/// coefficients of the reference signed measure `mu = sum beta_k delta_k`;
/// the pairing of the unshifted weights against `mu` is exposed as a
/// diagnostic rather than forced to vanish.
#[derive(Clone)]
pub struct KernelOperatorSpec {
    pub alpha: AlphaKind,
    pub beta: Vec<f64>,
}

pub struct KernelField {
    space: Arc<LabelSpace>,
    spec: KernelOperatorSpec,
    embedding: Vec<f64>,
    /// Optional linear velocity part `(a, b, c)`; zero velocity when absent.
    pub velocity: Option<(f64, f64, f64)>,
}

impl KernelField {
    pub fn new(
        space: Arc<LabelSpace>,
        spec: KernelOperatorSpec,
        velocity: Option<(f64, f64, f64)>,
    ) -> Result<Self> {
        let k = space.len();
        if spec.beta.len() != k {
            return Err(Error::Usage(format!(
                "beta has {} entries for {k} atoms",
                spec.beta.len()
            )));
        }
        if let AlphaKind::MomentCombo { on_x, on_lambda } = &spec.alpha {
            if on_x.len() != k || on_lambda.len() != k {
                return Err(Error::Usage(
                    "kernel coefficient vectors must have one entry per atom".into(),
                ));
            }
        }
        let embedding = space.canonical_embedding();
        Ok(Self {
            space,
            spec,
            embedding,
            velocity,
        })
    }

    fn alpha(&self, atom: usize, x: &[f64], lambda: &[f64]) -> f64 {
        match &self.spec.alpha {
            AlphaKind::MomentCombo { on_x, on_lambda } => {
                let ml: f64 = lambda.iter().zip(&self.embedding).map(|(w, e)| w * e).sum();
                on_x[atom] * x[0] + on_lambda[atom] * ml
            }
            AlphaKind::Custom { f, .. } => f(atom, x, lambda),
        }
    }

    /// Raw (unshifted) ensemble-averaged kernel weights.
    fn raw_weights(&self, psi: &EnsembleView<'_>) -> Vec<f64> {
        let k = self.space.len();
        let mut w = vec![0.0; k];
        for i in 0..psi.n {
            let (x, l) = (psi.x(i), psi.lambda(i));
            for (atom, wk) in w.iter_mut().enumerate() {
                *wk += self.alpha(atom, x, l);
            }
        }
        for wk in w.iter_mut() {
            *wk /= psi.n as f64;
        }
        w
    }

    /// Pairing of the unshifted operator weights with `mu`; the centering
    /// residual the construction does not force to zero.
    pub fn mu_pairing(&self, psi: &EnsembleView<'_>) -> f64 {
        self.raw_weights(psi)
            .iter()
            .zip(&self.spec.beta)
            .map(|(w, b)| w * b)
            .sum()
    }
}

struct KernelPrepared<'a> {
    field: &'a KernelField,
    mean_x: f64,
    /// The operator does not depend on the agent argument, so the shifted
    /// weights are computed once per snapshot.
    weights: Vec<f64>,
}

impl PreparedField for KernelPrepared<'_> {
    fn velocity(&self, x: &[f64], lambda: &[f64], out: &mut [f64]) {
        match self.field.velocity {
            Some((a, b, c)) => {
                let ml: f64 = lambda
                    .iter()
                    .zip(&self.field.embedding)
                    .map(|(w, e)| w * e)
                    .sum();
                out[0] = a * x[0] + b * ml + c * self.mean_x;
            }
            None => out.fill(0.0),
        }
    }

    fn label_op(&self, _x: &[f64], _lambda: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.weights);
    }
}

impl Field for KernelField {
    fn dim_requirement(&self) -> Option<usize> {
        match self.spec.alpha {
            AlphaKind::MomentCombo { .. } => Some(1),
            AlphaKind::Custom { .. } => None,
        }
    }

    fn prepare<'a>(&'a self, psi: &EnsembleView<'a>) -> Box<dyn PreparedField + 'a> {
        let mut weights = self.raw_weights(psi);
        let shift = weights.iter().sum::<f64>() / weights.len() as f64;
        for w in weights.iter_mut() {
            *w -= shift;
        }
        let mean_x = if self.velocity.is_some() {
            psi.mean_x()[0]
        } else {
            0.0
        };
        Box::new(KernelPrepared {
            field: self,
            mean_x,
            weights,
        })
    }

    fn accepts_signed_labels(&self) -> bool {
        match &self.spec.alpha {
            AlphaKind::MomentCombo { .. } => true,
            AlphaKind::Custom { signed_ok, .. } => *signed_ok,
        }
    }
}

// ---------------------------------------------------------------------------
// Trivial fields
// ---------------------------------------------------------------------------

/// `v = 0`, `T = 0`: the do-nothing dynamics.
pub struct ZeroField;

struct ZeroPrepared;

impl PreparedField for ZeroPrepared {
    fn velocity(&self, _x: &[f64], _lambda: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn label_op(&self, _x: &[f64], _lambda: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl Field for ZeroField {
    fn prepare<'a>(&'a self, _psi: &EnsembleView<'a>) -> Box<dyn PreparedField + 'a> {
        Box::new(ZeroPrepared)
    }
    fn delta_r(&self, _radius: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// Constant velocity and constant (zero-mass) label drift.
pub struct ConstField {
    v: Vec<f64>,
    t: Vec<f64>,
}

impl ConstField {
    pub fn new(v: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        let mass: f64 = t.iter().sum();
        if mass.abs() > 1e-12 {
            return Err(Error::Usage(format!(
                "constant label drift has total mass {mass}"
            )));
        }
        Ok(Self { v, t })
    }
}

struct ConstPrepared<'a>(&'a ConstField);

impl PreparedField for ConstPrepared<'_> {
    fn velocity(&self, _x: &[f64], _lambda: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0.v);
    }
    fn label_op(&self, _x: &[f64], _lambda: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0.t);
    }
}

impl Field for ConstField {
    fn dim_requirement(&self) -> Option<usize> {
        Some(self.v.len())
    }
    fn prepare<'a>(&'a self, _psi: &EnsembleView<'a>) -> Box<dyn PreparedField + 'a> {
        Box::new(ConstPrepared(self))
    }
}

/// Field defined by closures; the extension point for custom dynamics.
pub type FieldFn = dyn Fn(&EnsembleView<'_>, &[f64], &[f64], &mut [f64]) + Send + Sync;

pub struct ClosureField {
    vel: Arc<FieldFn>,
    lab: Arc<FieldFn>,
    delta: Option<f64>,
    signed_ok: bool,
}

impl ClosureField {
    pub fn new(vel: Arc<FieldFn>, lab: Arc<FieldFn>) -> Self {
        Self {
            vel,
            lab,
            delta: None,
            signed_ok: true,
        }
    }

    pub fn with_delta_r(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_signed_ok(mut self, ok: bool) -> Self {
        self.signed_ok = ok;
        self
    }
}

struct ClosurePrepared<'a> {
    field: &'a ClosureField,
    psi: EnsembleView<'a>,
}

impl PreparedField for ClosurePrepared<'_> {
    fn velocity(&self, x: &[f64], lambda: &[f64], out: &mut [f64]) {
        (self.field.vel)(&self.psi, x, lambda, out);
    }
    fn label_op(&self, x: &[f64], lambda: &[f64], out: &mut [f64]) {
        (self.field.lab)(&self.psi, x, lambda, out);
    }
}

impl Field for ClosureField {
    fn prepare<'a>(&'a self, psi: &EnsembleView<'a>) -> Box<dyn PreparedField + 'a> {
        Box::new(ClosurePrepared {
            field: self,
            psi: *psi,
        })
    }
    fn delta_r(&self, _radius: f64) -> Option<f64> {
        self.delta
    }
    fn accepts_signed_labels(&self) -> bool {
        self.signed_ok
    }
}

// ---------------------------------------------------------------------------
// Named registry
// ---------------------------------------------------------------------------

/// Declarative field selection, the form the run configuration uses.
#[derive(Debug, Clone)]
pub enum FieldSpec {
    Zero,
    Linear(LinearFieldParams),
    KernelMoment {
        velocity: (f64, f64, f64),
        on_x: Vec<f64>,
        on_lambda: Vec<f64>,
        beta: Vec<f64>,
    },
    Const {
        v: Vec<f64>,
        t: Vec<f64>,
    },
}

pub fn build(spec: &FieldSpec, space: &Arc<LabelSpace>) -> Result<Box<dyn Field>> {
    match spec {
        FieldSpec::Zero => Ok(Box::new(ZeroField)),
        FieldSpec::Linear(p) => Ok(Box::new(LinearField::new(*p, space)?)),
        FieldSpec::KernelMoment {
            velocity,
            on_x,
            on_lambda,
            beta,
        } => Ok(Box::new(KernelField::new(
            space.clone(),
            KernelOperatorSpec {
                alpha: AlphaKind::MomentCombo {
                    on_x: on_x.clone(),
                    on_lambda: on_lambda.clone(),
                },
                beta: beta.clone(),
            },
            Some(*velocity),
        )?)),
        FieldSpec::Const { v, t } => Ok(Box::new(ConstField::new(v.clone(), t.clone())?)),
    }
}

pub fn known_names() -> &'static [&'static str] {
    &["zero", "linear", "kernel-moment", "const"]
}

// ---------------------------------------------------------------------------
// Spec-level single evaluations
// ---------------------------------------------------------------------------

fn view_eval<T>(
    field: &dyn Field,
    y: &AgentState,
    psi: &EmpiricalMeasure,
    f: impl FnOnce(&dyn PreparedField, &[f64], &[f64]) -> T,
) -> T {
    let view = EnsembleView::of(psi);
    let prep = field.prepare(&view);
    f(prep.as_ref(), &y.x, y.lambda.weights())
}

/// Velocity of the 1-D linear field at one state.
pub fn linear_velocity(
    params: LinearFieldParams,
    y: &AgentState,
    psi: &EmpiricalMeasure,
) -> Result<Vec<f64>> {
    if y.x.len() != 1 || psi.dim() != 1 {
        return Err(Error::Usage("linear field is one-dimensional".into()));
    }
    let field = LinearField::new(params, psi.space())?;
    let mut out = vec![0.0; 1];
    view_eval(&field, y, psi, |p, x, l| p.velocity(x, l, &mut out));
    Ok(out)
}

/// Label drift of the 1-D linear field at one state, as a zero-mass measure.
pub fn linear_label_op(
    params: LinearFieldParams,
    y: &AgentState,
    psi: &EmpiricalMeasure,
) -> Result<SignedLabelMeasure> {
    if y.x.len() != 1 || psi.dim() != 1 {
        return Err(Error::Usage("linear field is one-dimensional".into()));
    }
    let field = LinearField::new(params, psi.space())?;
    let mut out = vec![0.0; psi.label_count()];
    view_eval(&field, y, psi, |p, x, l| p.label_op(x, l, &mut out));
    SignedLabelMeasure::new(psi.space().clone(), out)
}

/// Kernel label operator at one state.
pub fn kernel_label_op(
    field: &KernelField,
    y: &AgentState,
    psi: &EmpiricalMeasure,
) -> Result<SignedLabelMeasure> {
    let mut out = vec![0.0; psi.label_count()];
    view_eval(field, y, psi, |p, x, l| p.label_op(x, l, &mut out));
    SignedLabelMeasure::new(psi.space().clone(), out)
}

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

/// How many agents a sampled probe ensemble carries.
pub const PROBE_ENSEMBLE: usize = 16;

/// Uniform point of the probability simplex via normalized exponentials.
fn sample_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k)
        .map(|_| {
            let u = rng::uniform(rng, 1e-12, 1.0);
            -u.ln()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// State in the ball of radius `r` of the product space: `|x| <= r - 1`
/// (the label part always contributes BL norm one).
fn sample_state_in_ball(rng: &mut ChaCha8Rng, d: usize, k: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    let rad = (r - 1.0).max(0.0);
    let mut x: Vec<f64> = (0..d).map(|_| rng::standard_normal(rng)).collect();
    let n = norm2(&x).max(1e-300);
    let u = rng::uniform(rng, 0.0, 1.0).powf(1.0 / d as f64);
    for v in x.iter_mut() {
        *v *= rad * u / n;
    }
    (x, sample_simplex(rng, k))
}

fn sample_ensemble_in_ball(
    rng: &mut ChaCha8Rng,
    space: &Arc<LabelSpace>,
    d: usize,
    r: f64,
    n: usize,
) -> EmpiricalMeasure {
    let k = space.len();
    let mut xs = Vec::with_capacity(n * d);
    let mut lambdas = Vec::with_capacity(n * k);
    for _ in 0..n {
        let (x, l) = sample_state_in_ball(rng, d, k, r);
        xs.extend_from_slice(&x);
        lambdas.extend_from_slice(&l);
    }
    EmpiricalMeasure::from_columnar(space.clone(), d, xs, lambdas)
        .expect("sampled ensemble is valid")
}

fn require_radius(r: f64) -> Result<()> {
    if !(r > 1.0) {
        return Err(Error::Usage(format!(
            "probe radius {r} must exceed 1 (labels alone contribute norm 1)"
        )));
    }
    Ok(())
}

/// Max observed difference quotients of the velocity (in the state, at a
/// shared snapshot) and of the label operator (in state and snapshot
/// jointly). Lower bounds for the Lipschitz constants on the ball.
pub fn probe_lipschitz(
    field: &dyn Field,
    space: &Arc<LabelSpace>,
    d: usize,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    require_radius(r)?;
    if n_samples < 2 {
        return Err(Error::Usage("probe needs at least 2 samples".into()));
    }
    let k = space.len();
    let mut rng = rng::stream(seed, Purpose::Probe, 0);
    let (mut l_v, mut l_t) = (0.0f64, 0.0f64);
    let mut v1 = vec![0.0; d];
    let mut v2 = vec![0.0; d];
    let mut t1 = vec![0.0; k];
    let mut t2 = vec![0.0; k];
    let mut diff = vec![0.0; k];
    for _ in 0..n_samples {
        let psi1 = sample_ensemble_in_ball(&mut rng, space, d, r, PROBE_ENSEMBLE);
        let psi2 = sample_ensemble_in_ball(&mut rng, space, d, r, PROBE_ENSEMBLE);
        let (x1, lam1) = sample_state_in_ball(&mut rng, d, k, r);
        let (x2, lam2) = sample_state_in_ball(&mut rng, d, k, r);
        for (o, (a, b)) in diff.iter_mut().zip(lam1.iter().zip(&lam2)) {
            *o = a - b;
        }
        let e_dist = dist2(&x1, &x2) + bl_norm_of(space, &diff);

        let view1 = EnsembleView::of(&psi1);
        let prep1 = field.prepare(&view1);
        prep1.velocity(&x1, &lam1, &mut v1);
        prep1.velocity(&x2, &lam2, &mut v2);
        if e_dist > 1e-12 {
            let dv: f64 = dist2(&v1, &v2);
            l_v = l_v.max(dv / e_dist);
        }

        prep1.label_op(&x1, &lam1, &mut t1);
        let view2 = EnsembleView::of(&psi2);
        let prep2 = field.prepare(&view2);
        prep2.label_op(&x2, &lam2, &mut t2);
        let w1 = w1_product(&psi1, &psi2)?;
        let denom = e_dist + w1;
        if denom > 1e-12 {
            for (o, (a, b)) in diff.iter_mut().zip(t1.iter().zip(&t2)) {
                *o = a - b;
            }
            l_t = l_t.max(bl_norm_of(space, &diff) / denom);
        }
    }
    Ok((l_v, l_t))
}

/// Max observed sensitivity of the velocity to the snapshot alone; together
/// with [`probe_lipschitz`] this assembles the combined-field constant the
/// stability experiment needs.
pub fn probe_velocity_measure_sensitivity(
    field: &dyn Field,
    space: &Arc<LabelSpace>,
    d: usize,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    require_radius(r)?;
    let k = space.len();
    let mut rng = rng::stream(seed, Purpose::Probe, 1);
    let mut best = 0.0f64;
    let mut v1 = vec![0.0; d];
    let mut v2 = vec![0.0; d];
    for _ in 0..n_samples {
        let psi1 = sample_ensemble_in_ball(&mut rng, space, d, r, PROBE_ENSEMBLE);
        let psi2 = sample_ensemble_in_ball(&mut rng, space, d, r, PROBE_ENSEMBLE);
        let (x, lam) = sample_state_in_ball(&mut rng, d, k, r);
        let view1 = EnsembleView::of(&psi1);
        field.prepare(&view1).velocity(&x, &lam, &mut v1);
        let view2 = EnsembleView::of(&psi2);
        field.prepare(&view2).velocity(&x, &lam, &mut v2);
        let w1 = w1_product(&psi1, &psi2)?;
        if w1 > 1e-12 {
            best = best.max(dist2(&v1, &v2) / w1);
        }
    }
    Ok(best)
}

/// Max observed growth quotients `|v| / (1 + ||y|| + m1)` and
/// `||T||_BL / (1 + |x| + m1)`.
pub fn probe_growth(
    field: &dyn Field,
    space: &Arc<LabelSpace>,
    d: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return Err(Error::Usage("probe needs at least 1 sample".into()));
    }
    let k = space.len();
    let mut rng = rng::stream(seed, Purpose::Probe, 2);
    let (mut m_v, mut m_t) = (0.0f64, 0.0f64);
    let mut v = vec![0.0; d];
    let mut t = vec![0.0; k];
    for i in 0..n_samples {
        // spread radii so both small and large states are visited
        let r = 1.0 + 4.0 * ((i % 7) as f64 + rng::uniform(&mut rng, 0.0, 1.0));
        let psi = sample_ensemble_in_ball(&mut rng, space, d, r, PROBE_ENSEMBLE);
        let (x, lam) = sample_state_in_ball(&mut rng, d, k, r);
        let m1 = psi.m1();
        let view = EnsembleView::of(&psi);
        let prep = field.prepare(&view);
        prep.velocity(&x, &lam, &mut v);
        prep.label_op(&x, &lam, &mut t);
        let y_norm = norm2(&x) + 1.0;
        m_v = m_v.max(norm2(&v) / (1.0 + y_norm + m1));
        m_t = m_t.max(bl_norm_of(space, &t) / (1.0 + norm2(&x) + m1));
    }
    Ok((m_v, m_t))
}

/// Probed positivity-margin constant: twice the worst observed ratio
/// `-T_k / lambda_k` over label weights of at least 1e-6.
pub fn probe_delta_r(
    field: &dyn Field,
    space: &Arc<LabelSpace>,
    d: usize,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    require_radius(r)?;
    let k = space.len();
    let mut rng = rng::stream(seed, Purpose::Probe, 3);
    let mut worst = 0.0f64;
    let mut t = vec![0.0; k];
    for _ in 0..n_samples {
        let psi = sample_ensemble_in_ball(&mut rng, space, d, r, PROBE_ENSEMBLE);
        let (x, lam) = sample_state_in_ball(&mut rng, d, k, r);
        let view = EnsembleView::of(&psi);
        field.prepare(&view).label_op(&x, &lam, &mut t);
        for (tk, lk) in t.iter().zip(&lam) {
            if *lk >= 1e-6 && *tk < 0.0 {
                worst = worst.max(-tk / lk);
            }
        }
    }
    Ok(2.0 * worst)
}

/// Declared positivity constant when the field provides one, otherwise the
/// probed value.
pub fn delta_r_or_probe(
    field: &dyn Field,
    space: &Arc<LabelSpace>,
    d: usize,
    r: f64,
    seed: u64,
) -> Result<f64> {
    if let Some(delta) = field.delta_r(r) {
        return Ok(delta);
    }
    probe_delta_r(field, space, d, r, 200, seed)
}
