//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]`/`[FAIL]` line with its measured runtime. Run with
//! `cargo test --test acceptance -- --nocapture` to see every line.

mod common;

use std::time::Instant;

use common::{permutation_oracle, random_ensemble, random_metric_space, tree_enumeration_oracle};

use mfsim_core::experiments::{
    meanfield_convergence, moment_monitor, picard_decay_report, stability_check, standard_family,
    weak_form_residual,
};
use mfsim_core::fields::{
    build, probe_growth, ConstField, FieldSpec, LinearField, LinearFieldParams, ZeroField,
};
use mfsim_core::measures::{
    w1_labels, w1_product, AgentState, EmpiricalMeasure, LabelMeasure, LabelSpace,
};
use mfsim_core::particle::{self, delta_r_for_run, InitialLaw, LambdaLaw, PositionLaw, SimConfig};
use mfsim_core::rng::{self, replicate_seed, Purpose};
use mfsim_core::spiking::{simulate_spiking, SpikeConfig};

/// Coefficients of the one-dimensional linear reference system.
const LINEAR: LinearFieldParams = LinearFieldParams {
    a: 0.5,
    b: 0.3,
    c: 0.2,
    d: 0.4,
    e: 0.2,
    f: 0.1,
};

struct Criterion {
    name: &'static str,
    budget_secs: f64,
    start: Instant,
}

impl Criterion {
    fn begin(name: &'static str, budget_secs: f64) -> Self {
        Self {
            name,
            budget_secs,
            start: Instant::now(),
        }
    }

    fn pass(self, detail: String) {
        let elapsed = self.start.elapsed().as_secs_f64();
        println!(
            "[PASS] {}: {detail} ({elapsed:.1}s / budget {:.0}s)",
            self.name, self.budget_secs
        );
        assert!(
            elapsed <= self.budget_secs,
            "[FAIL] {}: runtime {elapsed:.1}s exceeds budget {:.0}s",
            self.name,
            self.budget_secs
        );
    }

    fn fail(&self, detail: String) -> ! {
        println!("[FAIL] {}: {detail}", self.name);
        panic!("[FAIL] {}: {detail}", self.name);
    }
}

fn centered_law(eps: f64) -> InitialLaw {
    InitialLaw {
        position: PositionLaw::Uniform { lo: -0.3, hi: 0.3 },
        lambda: LambdaLaw::Jitter { eps },
    }
}

#[test]
fn acceptance_01_simplex_invariance() {
    let c = Criterion::begin("simplex invariance over randomized fields", 60.0);
    let mut rng = rng::stream(1001, Purpose::Experiment, 1);
    let n = 50;
    let steps = 100;
    let n_configs = 20;
    let mut agent_steps = 0usize;
    let mut worst_mass = 0.0f64;
    let mut worst_neg = 0.0f64;
    for cfg_idx in 0..n_configs {
        let k = 2 + cfg_idx % 3;
        let space = LabelSpace::line_segment(k).unwrap();
        let coef = |r: &mut _, lo: f64, hi: f64| rng::uniform(r, lo, hi);
        let spec = if cfg_idx % 2 == 0 {
            FieldSpec::Linear(LinearFieldParams {
                a: coef(&mut rng, -0.6, 0.6),
                b: coef(&mut rng, -0.4, 0.4),
                c: coef(&mut rng, -0.4, 0.4),
                d: coef(&mut rng, -0.5, 0.5),
                e: coef(&mut rng, -0.3, 0.3),
                f: coef(&mut rng, -0.3, 0.3),
            })
        } else {
            FieldSpec::KernelMoment {
                velocity: (
                    coef(&mut rng, -0.5, 0.5),
                    coef(&mut rng, -0.3, 0.3),
                    coef(&mut rng, -0.3, 0.3),
                ),
                on_x: (0..k).map(|_| coef(&mut rng, -0.5, 0.5)).collect(),
                on_lambda: (0..k).map(|_| coef(&mut rng, -0.3, 0.3)).collect(),
                beta: (0..k).map(|_| coef(&mut rng, -1.0, 1.0)).collect(),
            }
        };
        let field = build(&spec, &space).unwrap();
        let law = centered_law(0.2);
        let seed = 5000 + cfg_idx as u64;
        let initial = law.sample(&space, 1, n, seed).unwrap();
        // construct theta to satisfy the feasibility invariant with margin
        let delta = delta_r_for_run(field.as_ref(), &initial);
        let theta = if delta > 0.0 {
            (0.5 / delta).min(0.5)
        } else {
            0.5
        };
        let cfg = SimConfig {
            n,
            d: 1,
            dt: 1e-3,
            t_end: steps as f64 * 1e-3,
            sigma: rng::uniform(&mut rng, 0.0, 0.05),
            theta,
            seed,
        };
        let traj = match particle::simulate(&cfg, field.as_ref(), &initial) {
            Ok(t) => t,
            Err(e) => c.fail(format!("config {cfg_idx} aborted: {e}")),
        };
        for s in 0..=traj.steps() {
            let lam = traj.lambdas_at(s);
            for i in 0..n {
                let row = &lam[i * k..(i + 1) * k];
                let sum: f64 = row.iter().sum();
                worst_mass = worst_mass.max((sum - 1.0).abs());
                for w in row {
                    worst_neg = worst_neg.max(-w);
                }
            }
        }
        agent_steps += n * steps;
    }
    assert!(
        agent_steps >= 100_000,
        "needs 1e5 agent-steps, ran {agent_steps}"
    );
    if worst_mass > 1e-10 || worst_neg > 1e-10 {
        c.fail(format!(
            "violations: |mass-1| {worst_mass:.2e}, negativity {worst_neg:.2e}"
        ));
    }
    c.pass(format!(
        "{agent_steps} agent-steps over {n_configs} random fields; worst |mass-1| = \
         {worst_mass:.1e}, worst negativity = {worst_neg:.1e}"
    ));
}

#[test]
fn acceptance_02_w1_oracle_equivalence() {
    let c = Criterion::begin("W1 oracle equivalence", 60.0);
    let mut rng = rng::stream(1003, Purpose::Experiment, 2);
    let mut worst_product = 0.0f64;
    for case in 0..200 {
        let k = 2 + case % 3;
        let n = 2 + case % 5; // N <= 6
        let space = random_metric_space(&mut rng, k);
        let p = random_ensemble(&mut rng, &space, n);
        let q = random_ensemble(&mut rng, &space, n);
        let solver = w1_product(&p, &q).unwrap();
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| p.agent(i).e_dist(&q.agent(j)).unwrap())
                    .collect()
            })
            .collect();
        let oracle = permutation_oracle(&cost);
        worst_product = worst_product.max((solver - oracle).abs());
    }
    let mut worst_labels = 0.0f64;
    for case in 0..200 {
        let k = 2 + case % 3; // up to 4 atoms
        let space = random_metric_space(&mut rng, k);
        let a = LabelMeasure::new(space.clone(), common::random_simplex(&mut rng, k)).unwrap();
        let b = LabelMeasure::new(space.clone(), common::random_simplex(&mut rng, k)).unwrap();
        let solver = w1_labels(&a, &b).unwrap();
        let cost: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| space.dist(i, j)).collect())
            .collect();
        let oracle = tree_enumeration_oracle(a.weights(), b.weights(), &cost);
        worst_labels = worst_labels.max((solver - oracle).abs());
    }
    if worst_product > 1e-9 || worst_labels > 1e-9 {
        c.fail(format!(
            "max |solver - oracle|: product {worst_product:.2e}, labels {worst_labels:.2e}"
        ));
    }
    c.pass(format!(
        "200 product pairs (max gap {worst_product:.1e}) and 200 label pairs \
         (max gap {worst_labels:.1e}) against enumeration oracles"
    ));
}

#[test]
fn acceptance_03_bl_w1_sandwich() {
    let c = Criterion::begin("BL/W1 sandwich inequality", 60.0);
    let mut rng = rng::stream(1005, Purpose::Experiment, 3);
    let mut level = 0.0f64;
    for case in 0..500 {
        let k = 2 + case % 3;
        let space = random_metric_space(&mut rng, k);
        let a = LabelMeasure::new(space.clone(), common::random_simplex(&mut rng, k)).unwrap();
        let b = LabelMeasure::new(space.clone(), common::random_simplex(&mut rng, k)).unwrap();
        let bl = a.sub(&b).unwrap().bl_norm();
        let w1 = w1_labels(&a, &b).unwrap();
        if bl > w1 + 1e-9 || w1 > (1.0 + space.diameter()) * bl + 1e-9 {
            c.fail(format!(
                "case {case}: bl {bl}, w1 {w1}, (1+D) bl {}",
                (1.0 + space.diameter()) * bl
            ));
        }
        if bl > 0.0 {
            level = level.max(w1 / bl / (1.0 + space.diameter()));
        }
    }
    c.pass(format!(
        "500 random pairs inside the sandwich (tightest upper slack {level:.3})"
    ));
}

#[test]
fn acceptance_04_picard_factorial_decay() {
    let c = Criterion::begin("Picard iterate-difference factorial decay", 120.0);
    let space = LabelSpace::line_segment(2).unwrap();
    let field = LinearField::new(LINEAR, &space).unwrap();
    let law = centered_law(0.1);
    let initial = law.sample(&space, 1, 50, 404).unwrap();
    let cfg = SimConfig {
        n: 50,
        d: 1,
        dt: 1e-3,
        t_end: 0.5,
        sigma: 0.02,
        theta: 0.25,
        seed: 404,
    };
    let report = picard_decay_report(&cfg, &field, &initial, 8).unwrap();
    let ratios = &report.ratios;
    if ratios.len() < 7 {
        c.fail(format!(
            "needed 7 ratios above the noise floor, got {ratios:?}"
        ));
    }
    for n in 2..=5 {
        if ratios[n + 1] >= ratios[n] - 1e-12 {
            c.fail(format!(
                "ratios not strictly decreasing at n = {n}: {ratios:?}"
            ));
        }
    }
    c.pass(format!(
        "ratios strictly decreasing for n = 2..6: {:?} (fitted M = {:.3})",
        &ratios[2..7],
        report.m_hat
    ));
}

#[test]
fn acceptance_05_stability_bound() {
    let c = Criterion::begin("synchronous-coupling W1 stability bound", 300.0);
    let mut rng = rng::stream(1007, Purpose::Experiment, 4);
    let space = LabelSpace::line_segment(2).unwrap();
    let t_checks = [0.1, 0.2, 0.3, 0.4, 0.5];
    let mut min_margin = f64::INFINITY;
    for run in 0..100u64 {
        let params = LinearFieldParams {
            a: rng::uniform(&mut rng, -0.5, 0.5),
            b: rng::uniform(&mut rng, -0.3, 0.3),
            c: rng::uniform(&mut rng, -0.3, 0.3),
            d: rng::uniform(&mut rng, -0.4, 0.4),
            e: rng::uniform(&mut rng, -0.2, 0.2),
            f: rng::uniform(&mut rng, -0.2, 0.2),
        };
        let field = LinearField::new(params, &space).unwrap();
        let law = centered_law(0.1);
        let initial = law.sample(&space, 1, 16, 7000 + run).unwrap();
        let offset = rng::uniform(&mut rng, 0.01, 0.2);
        let mut xs = initial.xs().to_vec();
        for x in xs.iter_mut() {
            *x += offset;
        }
        let shifted =
            EmpiricalMeasure::from_columnar(space.clone(), 1, xs, initial.lambdas().to_vec())
                .unwrap();
        let cfg = SimConfig {
            n: 16,
            d: 1,
            dt: 2e-3,
            t_end: 0.5,
            sigma: rng::uniform(&mut rng, 0.0, 0.1),
            theta: 0.2,
            seed: 7000 + run,
        };
        let report = stability_check(&cfg, &field, &initial, &shifted, &t_checks).unwrap();
        if !report.ok {
            c.fail(format!("run {run}: {}", report.detail));
        }
        for (_, w1_t, bound) in &report.rows {
            if *bound > 0.0 && bound.is_finite() {
                min_margin = min_margin.min(bound / w1_t.max(1e-300));
            }
        }
    }
    c.pass(format!(
        "100 randomized coupled pairs never exceeded the bound at 5 checkpoints \
         (tightest bound/W1 ratio {min_margin:.1})"
    ));
}

#[test]
fn acceptance_06_weak_form_residual_decreases() {
    let c = Criterion::begin("weak-form residual shrinks with (dt, N paths)", 600.0);
    let space = LabelSpace::line_segment(2).unwrap();
    let field = LinearField::new(LINEAR, &space).unwrap();
    let law = centered_law(0.05);
    let phis = standard_family(&space, 1).unwrap();
    let run = |dt: f64, n: usize, n_paths: usize, seed: u64| {
        let cfg = SimConfig {
            n,
            d: 1,
            dt,
            t_end: 1.0,
            sigma: 0.02,
            theta: 0.02,
            seed,
        };
        weak_form_residual(&cfg, &field, &law, &space, &phis, n_paths)
            .unwrap()
            .max_abs
    };
    let reps = 10;
    let mut coarse = Vec::with_capacity(reps);
    let mut fine = Vec::with_capacity(reps);
    for rep in 0..reps as u64 {
        coarse.push(run(2e-3, 50, 20, replicate_seed(606, rep)));
        fine.push(run(1e-3, 100, 40, replicate_seed(707, rep)));
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    };
    let m_coarse = median(&mut coarse);
    let m_fine = median(&mut fine);
    if m_fine >= m_coarse {
        c.fail(format!(
            "median max-residual did not decrease: {m_coarse:.3e} -> {m_fine:.3e}"
        ));
    }
    c.pass(format!(
        "median max-residual decreased {m_coarse:.3e} -> {m_fine:.3e} \
         from (dt 2e-3, 50x20) to (dt 1e-3, 100x40)"
    ));
}

#[test]
fn acceptance_07_meanfield_self_convergence() {
    let c = Criterion::begin("mean-field W1 self-convergence", 900.0);
    let space = LabelSpace::line_segment(2).unwrap();
    let ns = [25usize, 50, 100, 200];
    let t_checks = [0.25, 0.5, 1.0];

    // interacting system: medians monotone nonincreasing in N at every t
    let field = LinearField::new(LINEAR, &space).unwrap();
    let law = centered_law(0.05);
    let cfg = SimConfig {
        n: 25,
        d: 1,
        dt: 2e-3,
        t_end: 1.0,
        sigma: 0.02,
        theta: 0.05,
        seed: 808,
    };
    let report =
        meanfield_convergence(&cfg, &field, &law, &space, &ns, 800, &t_checks, 10).unwrap();
    for (ti, t) in t_checks.iter().enumerate() {
        if !report.monotone[ti] {
            c.fail(format!(
                "medians not monotone at t = {t}: {:?}",
                report.median[ti]
            ));
        }
    }

    // no-interaction control: i.i.d. Gaussian positions, slope in the
    // empirical-measure sampling band
    let control_law = InitialLaw {
        position: PositionLaw::Fixed(0.0),
        lambda: LambdaLaw::Fixed(vec![0.5, 0.5]),
    };
    let control_cfg = SimConfig {
        n: 25,
        d: 1,
        dt: 0.05,
        t_end: 1.0,
        sigma: 0.5,
        theta: 0.2,
        seed: 909,
    };
    let control = meanfield_convergence(
        &control_cfg,
        &ZeroField,
        &control_law,
        &space,
        &ns,
        800,
        &t_checks,
        10,
    )
    .unwrap();
    for (ti, t) in t_checks.iter().enumerate() {
        let slope = control.slopes[ti];
        if !(-0.7..=-0.3).contains(&slope) {
            c.fail(format!(
                "control slope at t = {t} outside [-0.7, -0.3]: {slope:.3} \
                 (medians {:?})",
                control.median[ti]
            ));
        }
    }
    c.pass(format!(
        "interacting medians monotone at t = {t_checks:?}; control slopes {:?} in [-0.7, -0.3]",
        control
            .slopes
            .iter()
            .map(|s| (s * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    ));
}

#[test]
fn acceptance_08_moment_envelope() {
    let c = Criterion::begin("moment Gronwall envelope and N-independence", 300.0);
    let space = LabelSpace::line_segment(2).unwrap();
    let field = LinearField::new(LINEAR, &space).unwrap();
    let (m_v, m_t) = probe_growth(&field, &space, 1, 400, 1010).unwrap();
    // position law with a small coefficient of variation, so the sup of the
    // empirical second moment is dominated by the flow rather than by the
    // initial sampling fluctuation the 20% gate would otherwise measure
    let law = InitialLaw {
        position: PositionLaw::Gaussian {
            mean: 0.3,
            sd: 0.05,
        },
        lambda: LambdaLaw::Jitter { eps: 0.05 },
    };
    let mut sup_x2 = Vec::new();
    let mut sup_m1 = Vec::new();
    for n in [50usize, 100, 200] {
        let cfg = SimConfig {
            n,
            d: 1,
            dt: 2e-3,
            t_end: 1.0,
            sigma: 0.01,
            theta: 0.05,
            seed: 1111,
        };
        let initial = law.sample(&space, 1, n, 1111 + n as u64).unwrap();
        let traj = particle::simulate(&cfg, &field, &initial).unwrap();
        let report = moment_monitor(&traj, m_v, m_t, cfg.sigma);
        if !report.within {
            c.fail(format!(
                "N = {n}: sup m1 {:.4} vs envelope {:.4}, sup x2 {:.4} vs {:.4}, bl2 {:.4}",
                report.sup_m1,
                report.envelope_m1,
                report.sup_x2,
                report.envelope_x2,
                report.sup_bl2
            ));
        }
        sup_x2.push(report.sup_x2);
        sup_m1.push(report.sup_m1);
    }
    let spread = |v: &[f64]| {
        let max = v.iter().fold(f64::MIN, |a, b| a.max(*b));
        let min = v.iter().fold(f64::MAX, |a, b| a.min(*b));
        max / min
    };
    let x2_spread = spread(&sup_x2);
    let m1_spread = spread(&sup_m1);
    if x2_spread > 1.2 || m1_spread > 1.2 {
        c.fail(format!(
            "sup moments disagree across N beyond 20%: x2 {sup_x2:?} (ratio {x2_spread:.3}), \
             m1 {sup_m1:?} (ratio {m1_spread:.3})"
        ));
    }
    c.pass(format!(
        "sup moments inside envelopes at N = 50/100/200; cross-N ratios \
         x2 {x2_spread:.3}, m1 {m1_spread:.3} (<= 1.2); probed M_v {m_v:.3}, M_T {m_t:.3}"
    ));
}

#[test]
fn acceptance_09_spiking_reproduction() {
    let c = Criterion::begin("integrate-and-fire reproduction run", 300.0);
    let space = LabelSpace::line_segment(2).unwrap();
    let field = LinearField::new(LINEAR, &space).unwrap();
    let n = 1000;
    let law = InitialLaw {
        position: PositionLaw::Uniform { lo: 0.01, hi: 0.69 },
        lambda: LambdaLaw::Jitter { eps: 0.02 },
    };
    let initial = law.sample(&space, 1, n, 20240).unwrap();
    let cfg = SpikeConfig {
        base: SimConfig {
            n,
            d: 1,
            dt: 1e-3,
            t_end: 5.0,
            sigma: 0.001, // documented default, see configs/spiking_reproduction.conf
            theta: 0.01,
            seed: 20240,
        },
        x_f: 0.7,
        x_r: 0.01,
        x_f_jitter: None,
        het: None,
    };
    let (traj, record) = match simulate_spiking(&cfg, &field, &initial) {
        Ok(x) => x,
        Err(e) => c.fail(format!("run aborted: {e}")),
    };

    // >= 1 spike per 100 agents on average over [0, 5]
    let per_agent = record.count() as f64 / n as f64;
    if per_agent < 0.01 {
        c.fail(format!("{per_agent:.4} spikes per agent, need >= 0.01"));
    }

    // all recorded potentials strictly below the threshold after resets
    for s in 1..=traj.steps() {
        if traj.xs_at(s).iter().any(|x| *x >= cfg.x_f) {
            c.fail(format!("potential at or above X_F at step {s}"));
        }
    }

    // label simplex throughout
    for s in 0..=traj.steps() {
        let lam = traj.lambdas_at(s);
        for i in 0..n {
            let sum: f64 = lam[i * 2..(i + 1) * 2].iter().sum();
            if (sum - 1.0).abs() > 1e-10 || lam[i * 2..(i + 1) * 2].iter().any(|w| *w < -1e-10) {
                c.fail(format!("simplex violation at step {s}, agent {i}"));
            }
        }
    }

    // lambda-trace kinks: one-sided difference quotients of <lambda, emb>
    // jump by more than 5x the pre-spike local quotient variation
    let emb = space.canonical_embedding();
    let window = 16usize;
    let dt = cfg.base.dt;
    let mut sampled = 0usize;
    let mut kinks = 0usize;
    for (agent, t) in record.spikes.iter().step_by(7) {
        let s = (t / dt).round() as usize;
        if s < window + 1 || s + 1 > traj.steps() {
            continue;
        }
        // skip windows contaminated by another spike of the same agent
        let clean = record
            .spikes
            .iter()
            .filter(|(a, tt)| a == agent && tt != t)
            .all(|(_, tt)| ((tt / dt).round() as usize).abs_diff(s) > window);
        if !clean {
            continue;
        }
        let series: Vec<f64> = (s - window - 1..=s + 1)
            .map(|step| {
                let lam = traj.lambdas_at(step);
                lam[agent * 2] * emb[0] + lam[agent * 2 + 1] * emb[1]
            })
            .collect();
        let q: Vec<f64> = series.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        // q has window+1 entries; the last straddles the spike step
        let jump = (q[q.len() - 1] - q[q.len() - 2]).abs();
        let pre = &q[..q.len() - 1];
        let pre_var = pre
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max);
        sampled += 1;
        if jump > 5.0 * pre_var {
            kinks += 1;
        }
    }
    if sampled < 50 {
        c.fail(format!("only {sampled} clean spike windows sampled"));
    }
    let kink_rate = kinks as f64 / sampled as f64;
    if kink_rate < 0.9 {
        c.fail(format!(
            "kink detected at only {kinks}/{sampled} sampled spikes"
        ));
    }
    c.pass(format!(
        "{:.2} spikes/agent, potentials < X_F, simplex clean, lambda kinks at \
         {kinks}/{sampled} sampled spikes",
        per_agent
    ));
}

#[test]
fn acceptance_10_analytic_controls() {
    let c = Criterion::begin("analytic controls (decay order, variance, ramp)", 300.0);
    let space = LabelSpace::line_segment(2).unwrap();

    // explicit-Euler weak order on the decaying linear flow
    let decay_field = LinearField::new(
        LinearFieldParams {
            a: -1.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e: 0.0,
            f: 0.0,
        },
        &space,
    )
    .unwrap();
    let one = EmpiricalMeasure::from_states(vec![AgentState::new(
        vec![1.0],
        LabelMeasure::uniform(space.clone()),
    )])
    .unwrap();
    let run = |dt: f64| {
        let cfg = SimConfig {
            n: 1,
            d: 1,
            dt,
            t_end: 1.0,
            sigma: 0.0,
            theta: 0.05,
            seed: 1,
        };
        let traj = particle::simulate(&cfg, &decay_field, &one).unwrap();
        traj.xs_at(traj.steps())[0]
    };
    let exact = (-1.0f64).exp();
    let ratio = (run(0.01) - exact).abs() / (run(0.005) - exact).abs();
    if !(1.6..=2.4).contains(&ratio) {
        c.fail(format!("Richardson ratio {ratio:.3} outside [1.6, 2.4]"));
    }

    // Brownian variance 2 sigma T within 5% over 1e4 seeds
    let zero = EmpiricalMeasure::from_states(vec![AgentState::new(
        vec![0.0],
        LabelMeasure::uniform(space.clone()),
    )])
    .unwrap();
    let t_end = 0.25;
    let sigma = 0.5;
    let (mut sum, mut sumsq) = (0.0f64, 0.0f64);
    let reps = 10_000;
    for rep in 0..reps {
        let cfg = SimConfig {
            n: 1,
            d: 1,
            dt: t_end / 8.0,
            t_end,
            sigma,
            theta: 0.05,
            seed: replicate_seed(314, rep),
        };
        let traj = particle::simulate(&cfg, &ZeroField, &zero).unwrap();
        let x = traj.xs_at(traj.steps())[0];
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / reps as f64;
    let var = sumsq / reps as f64 - mean * mean;
    let expected = 2.0 * sigma * t_end;
    if (var - expected).abs() > 0.05 * expected {
        c.fail(format!(
            "variance {var:.4} deviates from {expected} beyond 5%"
        ));
    }

    // deterministic ramp: exactly periodic spikes
    let ramp = ConstField::new(vec![0.3], vec![0.0, 0.0]).unwrap();
    let start = EmpiricalMeasure::from_states(vec![AgentState::new(
        vec![0.0],
        LabelMeasure::uniform(space.clone()),
    )])
    .unwrap();
    let cfg = SpikeConfig {
        base: SimConfig {
            n: 1,
            d: 1,
            dt: 0.01,
            t_end: 30.0,
            sigma: 0.0,
            theta: 0.1,
            seed: 3,
        },
        x_f: 0.7,
        x_r: 0.0,
        x_f_jitter: None,
        het: None,
    };
    let (_, record) = simulate_spiking(&cfg, &ramp, &start).unwrap();
    let period = ((cfg.x_f - cfg.x_r) / (0.3 * 0.01)).ceil() * 0.01;
    let isis = record.inter_spike_intervals(0);
    if isis.is_empty() || isis.iter().any(|isi| (isi - period).abs() > 1e-12) {
        c.fail(format!(
            "ramp not exactly periodic: {isis:?} vs period {period}"
        ));
    }
    c.pass(format!(
        "Richardson ratio {ratio:.2}; Brownian variance {var:.4} vs {expected}; \
         ramp period {period} exact over {} spikes",
        isis.len() + 1
    ));
}
