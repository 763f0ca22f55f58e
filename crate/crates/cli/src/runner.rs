//! Mode dispatch: builds the field and initial ensemble, runs the requested
//! simulation or experiment, writes CSV artifacts, a re-runnable manifest,
//! and a verdict report. Exit status 0 means every verdict passed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};

use mfsim_core::experiments::{
    meanfield_convergence, moment_monitor, picard_decay_report, probe_growth_pair, stability_check,
    standard_family, weak_form_residual, Verdict,
};
use mfsim_core::fields::{self, Field, FieldSpec, KernelField, KernelOperatorSpec};
use mfsim_core::measures::EmpiricalMeasure;
use mfsim_core::particle::{self, delta_r_for_run, SimConfig, Trajectory};
use mfsim_core::spiking::{
    raster_and_rates, simulate_spiking, write_rates_csv, HeterogeneousNoiseSpec, SpikeConfig,
};

use crate::config::{field_name, render_config, Mode, RunConfig, Theta};
use crate::svg::{self, Series};

pub struct Outcome {
    pub passed: bool,
    pub report: String,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;

    let field = fields::build(&cfg.field, &cfg.space)?;
    let initial = cfg
        .init
        .sample(&cfg.space, cfg.sim_d, cfg.sim_n, cfg.seed)?;
    let resolved_theta = match cfg.theta {
        Theta::Value(v) => v,
        Theta::Auto => {
            let delta = delta_r_for_run(field.as_ref(), &initial);
            SimConfig::default_theta(delta, cfg.sim_dt)
        }
    };
    let sim = cfg.sim(resolved_theta);

    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut lines: Vec<String> = Vec::new();
    lines.push(format!("mode: {}", cfg.mode.name()));
    lines.push(format!("field: {}", field_name(&cfg.field)));
    lines.push(format!("seed: {}", cfg.seed));
    lines.push(format!(
        "sim: n = {}, d = {}, dt = {}, t = {}, sigma = {}, theta = {resolved_theta}",
        sim.n, sim.d, sim.dt, sim.t_end, sim.sigma
    ));

    match cfg.mode {
        Mode::Simulate => run_simulate(
            cfg,
            &sim,
            field.as_ref(),
            &initial,
            &mut verdicts,
            &mut lines,
        )?,
        Mode::Spiking => run_spiking(
            cfg,
            &sim,
            field.as_ref(),
            &initial,
            &mut verdicts,
            &mut lines,
        )?,
        Mode::Converge => run_converge(cfg, &sim, field.as_ref(), &mut verdicts, &mut lines)?,
        Mode::Stability => run_stability(
            cfg,
            &sim,
            field.as_ref(),
            &initial,
            &mut verdicts,
            &mut lines,
        )?,
        Mode::Weakform => run_weakform(cfg, &sim, field.as_ref(), &mut verdicts, &mut lines)?,
        Mode::Picard => run_picard(
            cfg,
            &sim,
            field.as_ref(),
            &initial,
            &mut verdicts,
            &mut lines,
        )?,
        Mode::Moments => run_moments(
            cfg,
            &sim,
            field.as_ref(),
            &initial,
            &mut verdicts,
            &mut lines,
        )?,
    }

    // kernel centering residual is reported, never silently normalized away
    if let FieldSpec::KernelMoment {
        velocity,
        on_x,
        on_lambda,
        beta,
    } = &cfg.field
    {
        let kernel = KernelField::new(
            cfg.space.clone(),
            KernelOperatorSpec {
                alpha: fields::AlphaKind::MomentCombo {
                    on_x: on_x.clone(),
                    on_lambda: on_lambda.clone(),
                },
                beta: beta.clone(),
            },
            Some(*velocity),
        )?;
        let view = fields::EnsembleView::of(&initial);
        lines.push(format!(
            "kernel mu-pairing residual at t = 0: {}",
            kernel.mu_pairing(&view)
        ));
    }

    let wall = start.elapsed().as_secs_f64();
    let manifest = format!(
        "# mfsim run manifest (re-runnable as a config file)\n\
         # version = {}\n\
         # wall_time_s = {wall:.3}\n\
         # rng: ChaCha8, key = splitmix64-expanded seed, stream id = (purpose << 48) | index\n\
         {}",
        env!("CARGO_PKG_VERSION"),
        render_config(cfg, resolved_theta)
    );
    fs::write(cfg.out.join("manifest.txt"), manifest).context("writing manifest")?;

    let passed = verdicts.iter().all(|v| v.pass);
    let mut report = String::new();
    report.push_str(&format!("mfsim report: {}\n", cfg.mode.name()));
    for line in &lines {
        report.push_str(line);
        report.push('\n');
    }
    for v in &verdicts {
        report.push_str(&format!(
            "[{}] {}: {}\n",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        ));
    }
    report.push_str(&format!(
        "verdict: {} ({}/{} checks)\n",
        if passed { "PASS" } else { "FAIL" },
        verdicts.iter().filter(|v| v.pass).count(),
        verdicts.len()
    ));
    report.push_str(&format!("wall_time_s: {wall:.3}\n"));
    fs::write(cfg.out.join("report.txt"), &report).context("writing report")?;

    Ok(Outcome { passed, report })
}

fn csv_writer(path: &PathBuf) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Trajectory-wide label-simplex scan: nonnegativity and unit mass within
/// 1e-10 at every recorded state.
fn simplex_verdict(traj: &Trajectory) -> Verdict {
    let k = traj.label_count();
    let mut worst_mass = 0.0f64;
    let mut worst_neg = 0.0f64;
    for s in 0..=traj.steps() {
        let lam = traj.lambdas_at(s);
        for i in 0..traj.n() {
            let row = &lam[i * k..(i + 1) * k];
            let sum: f64 = row.iter().sum();
            worst_mass = worst_mass.max((sum - 1.0).abs());
            for w in row {
                worst_neg = worst_neg.max(-w);
            }
        }
    }
    Verdict::new(
        "label-simplex-invariance",
        worst_mass <= 1e-10 && worst_neg <= 1e-10,
        format!("max |mass - 1| = {worst_mass:.3e}, max negativity = {worst_neg:.3e}"),
    )
}

fn trajectory_svgs(cfg: &RunConfig, traj: &Trajectory) -> Result<()> {
    if !cfg.emit_svg {
        return Ok(());
    }
    let shown = traj.n().min(40);
    let stride = (traj.steps() / 2000).max(1);
    let xs: Vec<Series> = (0..shown)
        .map(|i| Series {
            name: if shown <= 8 {
                format!("agent {i}")
            } else {
                String::new()
            },
            points: traj
                .times
                .iter()
                .enumerate()
                .step_by(stride)
                .map(|(s, t)| (*t, traj.xs_at(s)[i * traj.dim()]))
                .collect(),
        })
        .collect();
    let mut f = csv_writer(&cfg.out.join("trajectory.svg"))?;
    svg::line_plot(&mut f, "position trajectories", "t", "x", &xs)?;
    let k = traj.label_count();
    let lams: Vec<Series> = (0..shown)
        .map(|i| Series {
            name: if shown <= 8 {
                format!("agent {i}")
            } else {
                String::new()
            },
            points: traj
                .times
                .iter()
                .enumerate()
                .step_by(stride)
                .map(|(s, t)| (*t, traj.lambdas_at(s)[i * k]))
                .collect(),
        })
        .collect();
    let mut f = csv_writer(&cfg.out.join("lambda.svg"))?;
    svg::line_plot(
        &mut f,
        "first label weight trajectories",
        "t",
        "lambda_1",
        &lams,
    )?;
    Ok(())
}

fn run_simulate(
    cfg: &RunConfig,
    sim: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
    verdicts: &mut Vec<Verdict>,
    lines: &mut Vec<String>,
) -> Result<()> {
    let traj = particle::simulate(sim, field, initial)?;
    let mut f = csv_writer(&cfg.out.join("trajectory.csv"))?;
    traj.write_csv(&mut f, cfg.traj_stride)?;
    f.flush()?;
    let mut f = csv_writer(&cfg.out.join("noise.csv"))?;
    traj.write_noise_csv(&mut f)?;
    f.flush()?;
    verdicts.push(simplex_verdict(&traj));
    lines.push(format!("steps: {}", traj.steps()));
    trajectory_svgs(cfg, &traj)?;
    Ok(())
}

fn run_spiking(
    cfg: &RunConfig,
    sim: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
    verdicts: &mut Vec<Verdict>,
    lines: &mut Vec<String>,
) -> Result<()> {
    let sp = cfg
        .spike
        .as_ref()
        .expect("spiking mode carries spike params");
    let het = match &cfg.het {
        None => None,
        Some(h) => Some(HeterogeneousNoiseSpec::geometric(
            &cfg.space, h.order, h.a0,
        )?),
    };
    let spike_cfg = SpikeConfig {
        base: *sim,
        x_f: sp.x_f,
        x_r: sp.x_r,
        x_f_jitter: sp.x_f_jitter,
        het,
    };
    let (traj, record) = simulate_spiking(&spike_cfg, field, initial)?;

    let mut f = csv_writer(&cfg.out.join("trajectory.csv"))?;
    traj.write_csv(&mut f, sp.traj_stride)?;
    f.flush()?;
    let mut f = csv_writer(&cfg.out.join("raster.csv"))?;
    record.write_raster_csv(&mut f)?;
    f.flush()?;
    let rates = raster_and_rates(&record, sim.n, sp.bin, sim.t_end)?;
    let mut f = csv_writer(&cfg.out.join("rates.csv"))?;
    write_rates_csv(&rates, &mut f)?;
    f.flush()?;

    let threshold = spike_cfg.threshold_for_run();
    let mut above = 0usize;
    for s in 1..=traj.steps() {
        above += traj.xs_at(s).iter().filter(|x| **x >= threshold).count();
    }
    verdicts.push(Verdict::new(
        "post-reset-potentials-below-threshold",
        above == 0,
        format!("{above} recorded potentials at or above X_F = {threshold}"),
    ));
    verdicts.push(simplex_verdict(&traj));
    let spikes_per_agent = record.count() as f64 / sim.n as f64;
    lines.push(format!(
        "spikes: {} total, {spikes_per_agent:.3} per agent over [0, {}]",
        record.count(),
        sim.t_end
    ));
    let mean_overshoot = if record.overshoots.is_empty() {
        0.0
    } else {
        record.overshoots.iter().sum::<f64>() / record.overshoots.len() as f64
    };
    lines.push(format!(
        "mean reset overshoot (discarded): {mean_overshoot:.3e}"
    ));

    if cfg.emit_svg {
        let pts: Vec<(f64, f64)> = record
            .spikes
            .iter()
            .map(|(agent, t)| (*t, *agent as f64))
            .collect();
        let mut f = csv_writer(&cfg.out.join("raster.svg"))?;
        svg::scatter_plot(&mut f, "spike raster", "t", "agent", &pts)?;
        trajectory_svgs(cfg, &traj)?;
    }
    Ok(())
}

fn run_converge(
    cfg: &RunConfig,
    sim: &SimConfig,
    field: &dyn Field,
    verdicts: &mut Vec<Verdict>,
    lines: &mut Vec<String>,
) -> Result<()> {
    let e = &cfg.exp;
    let report = meanfield_convergence(
        sim,
        field,
        &cfg.init,
        &cfg.space,
        &e.ns,
        e.n_ref,
        &e.t_checks,
        e.n_reps,
    )?;
    let mut f = csv_writer(&cfg.out.join("w1_decay.csv"))?;
    writeln!(f, "t,n,median_w1,mean_w1")?;
    for (ti, t) in report.t_checks.iter().enumerate() {
        for (ni, n) in report.ns.iter().enumerate() {
            let reps = &report.w1[ti][ni];
            let mean: f64 = reps.iter().sum::<f64>() / reps.len() as f64;
            writeln!(f, "{t},{n},{},{mean}", report.median[ti][ni])?;
        }
    }
    f.flush()?;
    for (ti, t) in report.t_checks.iter().enumerate() {
        lines.push(format!(
            "t = {t}: medians {:?}, fitted log-log slope {:.3}",
            report.median[ti], report.slopes[ti]
        ));
        verdicts.push(Verdict::new(
            "w1-decay-monotone-in-n",
            report.monotone[ti],
            format!("t = {t}: medians {:?}", report.median[ti]),
        ));
    }
    if cfg.emit_svg {
        let series: Vec<Series> = report
            .t_checks
            .iter()
            .enumerate()
            .map(|(ti, t)| Series {
                name: format!("t = {t}"),
                points: report
                    .ns
                    .iter()
                    .zip(&report.median[ti])
                    .map(|(n, w)| ((*n as f64).log10(), w.max(1e-300).log10()))
                    .collect(),
            })
            .collect();
        let mut f = csv_writer(&cfg.out.join("decay.svg"))?;
        svg::line_plot(
            &mut f,
            "W1 self-convergence",
            "log10 N",
            "log10 W1",
            &series,
        )?;
    }
    Ok(())
}

fn run_stability(
    cfg: &RunConfig,
    sim: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
    verdicts: &mut Vec<Verdict>,
    lines: &mut Vec<String>,
) -> Result<()> {
    // second system: the same ensemble with positions shifted by `perturb`
    let mut xs = initial.xs().to_vec();
    for x in xs.iter_mut() {
        *x += cfg.exp.perturb;
    }
    let shifted = EmpiricalMeasure::from_columnar(
        cfg.space.clone(),
        cfg.sim_d,
        xs,
        initial.lambdas().to_vec(),
    )?;
    let report = stability_check(sim, field, initial, &shifted, &cfg.exp.t_checks)?;
    let mut f = csv_writer(&cfg.out.join("stability.csv"))?;
    writeln!(f, "t,w1,bound")?;
    for (t, w1, bound) in &report.rows {
        writeln!(f, "{t},{w1},{bound}")?;
    }
    f.flush()?;
    lines.push(format!(
        "L_R_hat = {:.4}, C = {:.4}, W1(0) = {:.6}",
        report.l_r_hat, report.prefactor, report.w1_initial
    ));
    verdicts.push(Verdict::new(
        "w1-stability-bound",
        report.ok,
        report.detail.clone(),
    ));
    Ok(())
}

fn run_weakform(
    cfg: &RunConfig,
    sim: &SimConfig,
    field: &dyn Field,
    verdicts: &mut Vec<Verdict>,
    lines: &mut Vec<String>,
) -> Result<()> {
    let phis = standard_family(&cfg.space, cfg.sim_d)?;
    let report = weak_form_residual(sim, field, &cfg.init, &cfg.space, &phis, cfg.exp.n_paths)?;
    let mut f = csv_writer(&cfg.out.join("residual.csv"))?;
    write!(f, "t")?;
    for name in &report.names {
        write!(f, ",{name}")?;
    }
    writeln!(f)?;
    for (s, t) in report.times.iter().enumerate() {
        write!(f, "{t}")?;
        for trace in &report.traces {
            write!(f, ",{}", trace[s])?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    lines.push(format!(
        "max |residual| over the family: {:.6e}",
        report.max_abs
    ));
    verdicts.push(Verdict::new(
        "weak-form-residual-finite",
        report.max_abs.is_finite(),
        format!(
            "max |r| = {:.6e} over {} paths",
            report.max_abs, cfg.exp.n_paths
        ),
    ));
    if cfg.emit_svg {
        let series: Vec<Series> = report
            .names
            .iter()
            .zip(&report.traces)
            .map(|(name, trace)| Series {
                name: name.clone(),
                points: report
                    .times
                    .iter()
                    .zip(trace)
                    .map(|(t, r)| (*t, *r))
                    .collect(),
            })
            .collect();
        let mut f = csv_writer(&cfg.out.join("residual.svg"))?;
        svg::line_plot(&mut f, "weak-form residual", "t", "|r|", &series)?;
    }
    Ok(())
}

fn run_picard(
    cfg: &RunConfig,
    sim: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
    verdicts: &mut Vec<Verdict>,
    lines: &mut Vec<String>,
) -> Result<()> {
    let report = picard_decay_report(sim, field, initial, cfg.exp.n_iters)?;
    let mut f = csv_writer(&cfg.out.join("picard.csv"))?;
    writeln!(f, "iteration,sup_diff,ratio")?;
    for (n, d) in report.sup_diffs.iter().enumerate() {
        let ratio = if n == 0 {
            String::new()
        } else {
            format!("{}", d / report.sup_diffs[n - 1])
        };
        writeln!(f, "{n},{d},{ratio}")?;
    }
    f.flush()?;
    lines.push(format!(
        "fitted decay constant M = {:.4} (rms {:.3}), ratios {:?}",
        report.m_hat, report.fit_rms, report.ratios
    ));
    verdicts.push(Verdict::new(
        "picard-super-geometric-decay",
        report.ratios_strictly_decreasing,
        report.detail.clone(),
    ));
    Ok(())
}

fn run_moments(
    cfg: &RunConfig,
    sim: &SimConfig,
    field: &dyn Field,
    initial: &EmpiricalMeasure,
    verdicts: &mut Vec<Verdict>,
    lines: &mut Vec<String>,
) -> Result<()> {
    let traj = particle::simulate(sim, field, initial)?;
    let (m_v, m_t) = probe_growth_pair(field, &cfg.space, cfg.sim_d, cfg.seed)?;
    let report = moment_monitor(&traj, m_v, m_t, sim.sigma);
    let mut f = csv_writer(&cfg.out.join("moments.csv"))?;
    writeln!(f, "t,m1,mean_x2,mean_bl2")?;
    for (t, m1, x2, bl2) in &report.rows {
        writeln!(f, "{t},{m1},{x2},{bl2}")?;
    }
    f.flush()?;
    lines.push(format!(
        "probed growth constants: M_v = {m_v:.4}, M_T = {m_t:.4}"
    ));
    lines.push(format!(
        "sup m1 = {:.4} (envelope {:.4}), sup |x|^2 = {:.4} (envelope {:.4}), sup BL^2 = {:.4}",
        report.sup_m1, report.envelope_m1, report.sup_x2, report.envelope_x2, report.sup_bl2
    ));
    verdicts.push(Verdict::new(
        "moments-inside-gronwall-envelope",
        report.within,
        format!(
            "sup m1 {:.4} <= {:.4}, sup x2 {:.4} <= {:.4}, sup BL^2 {:.4} <= 1",
            report.sup_m1, report.envelope_m1, report.sup_x2, report.envelope_x2, report.sup_bl2
        ),
    ));
    Ok(())
}
