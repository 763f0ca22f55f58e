//! Run configuration: a line-oriented sectioned key-value format with `#`
//! comments. Every value is validated eagerly and every error names the
//! offending key and line.
//!
//! ```text
//! mode = spiking
//! seed = 42
//!
//! [sim]
//! n = 1000
//! dt = 0.001
//! ...
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use mfsim_core::fields::{FieldSpec, LinearFieldParams};
use mfsim_core::measures::LabelSpace;
use mfsim_core::particle::{InitialLaw, LambdaLaw, PositionLaw, SimConfig};

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type CfgResult<T> = Result<T, ConfigError>;

fn err<T>(line: Option<usize>, key: &str, message: impl Into<String>) -> CfgResult<T> {
    Err(ConfigError {
        line,
        key: key.into(),
        message: message.into(),
    })
}

/// Raw parse: `(section, key) -> (value, line)`. The top level is section "".
pub struct RawConfig {
    entries: BTreeMap<(String, String), (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CfgResult<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return err(Some(line_no), line, "malformed section header");
                }
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(Some(line_no), line, "expected `key = value`");
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return err(Some(line_no), line, "empty key");
            }
            let full = (section.clone(), key.clone());
            if entries.contains_key(&full) {
                return err(
                    Some(line_no),
                    &format!("[{section}] {key}"),
                    "duplicate key",
                );
            }
            entries.insert(full, (value, line_no));
        }
        Ok(Self { entries })
    }

    fn get(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn label(section: &str, key: &str) -> String {
        if section.is_empty() {
            key.to_string()
        } else {
            format!("[{section}] {key}")
        }
    }

    fn req(&self, section: &str, key: &str) -> CfgResult<(&str, usize)> {
        match self.get(section, key) {
            Some((v, l)) => Ok((v.as_str(), *l)),
            None => err(None, &Self::label(section, key), "missing required key"),
        }
    }

    fn f64(&self, section: &str, key: &str) -> CfgResult<f64> {
        let (v, l) = self.req(section, key)?;
        parse_f64(v, l, &Self::label(section, key))
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> CfgResult<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some((v, l)) => parse_f64(v, *l, &Self::label(section, key)),
        }
    }

    fn usize(&self, section: &str, key: &str) -> CfgResult<usize> {
        let (v, l) = self.req(section, key)?;
        parse_usize(v, l, &Self::label(section, key))
    }

    fn usize_or(&self, section: &str, key: &str, default: usize) -> CfgResult<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some((v, l)) => parse_usize(v, *l, &Self::label(section, key)),
        }
    }

    fn u64_or(&self, section: &str, key: &str, default: u64) -> CfgResult<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some((v, l)) => v.parse::<u64>().map_err(|e| ConfigError {
                line: Some(*l),
                key: Self::label(section, key),
                message: e.to_string(),
            }),
        }
    }

    fn bool_or(&self, section: &str, key: &str, default: bool) -> CfgResult<bool> {
        match self.get(section, key) {
            None => Ok(default),
            Some((v, l)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => err(
                    Some(*l),
                    &Self::label(section, key),
                    format!("not a bool: {other}"),
                ),
            },
        }
    }

    fn f64_list(&self, section: &str, key: &str) -> CfgResult<Vec<f64>> {
        let (v, l) = self.req(section, key)?;
        v.split(',')
            .map(|part| parse_f64(part.trim(), l, &Self::label(section, key)))
            .collect()
    }

    fn f64_list_or(&self, section: &str, key: &str, default: &[f64]) -> CfgResult<Vec<f64>> {
        if self.get(section, key).is_none() {
            return Ok(default.to_vec());
        }
        self.f64_list(section, key)
    }

    fn usize_list_or(&self, section: &str, key: &str, default: &[usize]) -> CfgResult<Vec<usize>> {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some((v, l)) => v
                .split(',')
                .map(|part| parse_usize(part.trim(), *l, &Self::label(section, key)))
                .collect(),
        }
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> CfgResult<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        Ok(x) => err(Some(line), key, format!("value {x} is not finite")),
        Err(e) => err(Some(line), key, e.to_string()),
    }
}

fn parse_usize(v: &str, line: usize, key: &str) -> CfgResult<usize> {
    v.parse::<usize>().map_err(|e| ConfigError {
        line: Some(line),
        key: key.into(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Spiking,
    Converge,
    Stability,
    Weakform,
    Picard,
    Moments,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Spiking => "spiking",
            Mode::Converge => "converge",
            Mode::Stability => "stability",
            Mode::Weakform => "weakform",
            Mode::Picard => "picard",
            Mode::Moments => "moments",
        }
    }
}

/// Relaxation constant: explicit, or resolved at run time from the probed
/// feasibility constant (`min(1/delta_R_hat, 10 dt)`).
#[derive(Debug, Clone, Copy)]
pub enum Theta {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone)]
pub struct SpikeParams {
    pub x_f: f64,
    pub x_r: f64,
    pub x_f_jitter: Option<(f64, f64)>,
    pub bin: f64,
    pub traj_stride: usize,
}

#[derive(Debug, Clone)]
pub struct HetParams {
    pub order: usize,
    pub a0: f64,
}

#[derive(Debug, Clone)]
pub struct ExpParams {
    pub ns: Vec<usize>,
    pub n_ref: usize,
    pub t_checks: Vec<f64>,
    pub n_reps: usize,
    pub n_iters: usize,
    pub n_paths: usize,
    pub perturb: f64,
}

#[derive(Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub emit_svg: bool,
    pub threads: Option<usize>,
    pub space: Arc<LabelSpace>,
    pub field: FieldSpec,
    pub sim_n: usize,
    pub sim_d: usize,
    pub sim_dt: f64,
    pub sim_t: f64,
    pub sim_sigma: f64,
    pub theta: Theta,
    pub traj_stride: usize,
    pub init: InitialLaw,
    pub spike: Option<SpikeParams>,
    pub het: Option<HetParams>,
    pub exp: ExpParams,
}

impl RunConfig {
    /// SimConfig with the given resolved theta.
    pub fn sim(&self, theta: f64) -> SimConfig {
        SimConfig {
            n: self.sim_n,
            d: self.sim_d,
            dt: self.sim_dt,
            t_end: self.sim_t,
            sigma: self.sim_sigma,
            theta,
            seed: self.seed,
        }
    }
}

pub fn parse_config(text: &str) -> CfgResult<RunConfig> {
    let raw = RawConfig::parse(text)?;

    let (mode_str, mode_line) = raw.req("", "mode")?;
    let mode = match mode_str {
        "simulate" => Mode::Simulate,
        "spiking" => Mode::Spiking,
        "converge" => Mode::Converge,
        "stability" => Mode::Stability,
        "weakform" => Mode::Weakform,
        "picard" => Mode::Picard,
        "moments" => Mode::Moments,
        other => {
            return err(
                Some(mode_line),
                "mode",
                format!(
                    "unknown mode `{other}` (expected simulate, spiking, converge, stability, \
                     weakform, picard, moments)"
                ),
            )
        }
    };
    let seed = raw.u64_or("", "seed", 0)?;
    let out = PathBuf::from(match raw.get("", "out") {
        Some((v, _)) => v.clone(),
        None => "out".to_string(),
    });
    let emit_svg = raw.bool_or("", "emit_svg", false)?;
    let threads = match raw.get("", "threads") {
        None => None,
        Some((v, l)) => Some(parse_usize(v, *l, "threads")?),
    };

    let space = parse_labels(&raw)?;
    let field = parse_field(&raw, &space)?;
    let init = parse_init(&raw, &space)?;

    let sim_n = raw.usize("sim", "n")?;
    let sim_d = raw.usize_or("sim", "d", 1)?;
    let sim_dt = raw.f64("sim", "dt")?;
    let sim_t = raw.f64("sim", "t")?;
    let sim_sigma = raw.f64_or("sim", "sigma", 0.0)?;
    let theta = match raw.get("sim", "theta") {
        None => Theta::Auto,
        Some((v, l)) => {
            if v == "auto" {
                Theta::Auto
            } else {
                let value = parse_f64(v, *l, "[sim] theta")?;
                if value <= 0.0 {
                    return err(Some(*l), "[sim] theta", "must be positive");
                }
                Theta::Value(value)
            }
        }
    };
    let traj_stride = raw.usize_or("sim", "traj_stride", 1)?;

    // eager invariant checks with line references
    let probe = SimConfig {
        n: sim_n,
        d: sim_d,
        dt: sim_dt,
        t_end: sim_t,
        sigma: sim_sigma,
        theta: 1.0,
        seed,
    };
    if let Err(e) = probe.validate().and_then(|_| probe.steps().map(|_| ())) {
        let line = raw.get("sim", "dt").map(|(_, l)| *l);
        return err(line, "[sim]", e.to_string());
    }
    if let Some(req) = field_dim_requirement(&field) {
        if req != sim_d {
            let line = raw.get("sim", "d").map(|(_, l)| *l);
            return err(
                line,
                "[sim] d",
                format!("field `{}` requires dimension {req}", field_name(&field)),
            );
        }
    }

    let spike = if mode == Mode::Spiking {
        let x_f = raw.f64("spike", "x_f")?;
        let x_r = raw.f64("spike", "x_r")?;
        if x_r >= x_f {
            let line = raw.get("spike", "x_r").map(|(_, l)| *l);
            return err(
                line,
                "[spike] x_r",
                format!("reset {x_r} must lie below threshold {x_f}"),
            );
        }
        let x_f_jitter = match raw.get("spike", "x_f_jitter") {
            None => None,
            Some((v, l)) => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 2 {
                    return err(Some(*l), "[spike] x_f_jitter", "expected `lo hi`");
                }
                let lo = parse_f64(parts[0], *l, "[spike] x_f_jitter")?;
                let hi = parse_f64(parts[1], *l, "[spike] x_f_jitter")?;
                if lo > hi || x_r >= lo {
                    return err(
                        Some(*l),
                        "[spike] x_f_jitter",
                        "interval must be ordered and lie above the reset",
                    );
                }
                Some((lo, hi))
            }
        };
        let bin = raw.f64_or("spike", "bin", 0.1)?;
        if bin <= 0.0 {
            let line = raw.get("spike", "bin").map(|(_, l)| *l);
            return err(line, "[spike] bin", "must be positive");
        }
        Some(SpikeParams {
            x_f,
            x_r,
            x_f_jitter,
            bin,
            traj_stride,
        })
    } else {
        None
    };

    let het = match raw.get("het", "order") {
        None => None,
        Some(_) => {
            let order = raw.usize("het", "order")?;
            let a0 = raw.f64("het", "a0")?;
            if order + 1 > space.len() {
                let line = raw.get("het", "order").map(|(_, l)| *l);
                return err(
                    line,
                    "[het] order",
                    format!(
                        "truncation order {order} needs at least {} atoms",
                        order + 1
                    ),
                );
            }
            if a0 < 0.0 {
                let line = raw.get("het", "a0").map(|(_, l)| *l);
                return err(line, "[het] a0", "must be nonnegative");
            }
            Some(HetParams { order, a0 })
        }
    };

    let exp = ExpParams {
        ns: raw.usize_list_or("experiment", "ns", &[25, 50, 100, 200])?,
        n_ref: raw.usize_or("experiment", "n_ref", 800)?,
        t_checks: raw.f64_list_or("experiment", "t_checks", &[0.25, 0.5, 1.0])?,
        n_reps: raw.usize_or("experiment", "n_reps", 10)?,
        n_iters: raw.usize_or("experiment", "n_iters", 8)?,
        n_paths: raw.usize_or("experiment", "n_paths", 20)?,
        perturb: raw.f64_or("experiment", "perturb", 0.1)?,
    };
    if mode == Mode::Converge {
        if !exp.ns.windows(2).all(|w| w[0] < w[1]) {
            let line = raw.get("experiment", "ns").map(|(_, l)| *l);
            return err(line, "[experiment] ns", "sizes must be strictly increasing");
        }
        if exp.n_ref <= *exp.ns.last().unwrap() {
            let line = raw.get("experiment", "n_ref").map(|(_, l)| *l);
            return err(
                line,
                "[experiment] n_ref",
                "must exceed the largest ladder size",
            );
        }
    }
    if matches!(mode, Mode::Converge | Mode::Stability) {
        for t in &exp.t_checks {
            if *t > sim_t + 1e-12 {
                let line = raw.get("experiment", "t_checks").map(|(_, l)| *l);
                return err(
                    line,
                    "[experiment] t_checks",
                    format!("checkpoint {t} exceeds horizon {sim_t}"),
                );
            }
        }
    }

    Ok(RunConfig {
        mode,
        seed,
        out,
        emit_svg,
        threads,
        space,
        field,
        sim_n,
        sim_d,
        sim_dt,
        sim_t,
        sim_sigma,
        theta,
        traj_stride,
        init,
        spike,
        het,
        exp,
    })
}

fn parse_labels(raw: &RawConfig) -> CfgResult<Arc<LabelSpace>> {
    match (raw.get("labels", "atoms"), raw.get("labels", "file")) {
        (Some(_), Some((_, l))) => err(
            Some(*l),
            "[labels] file",
            "give either `atoms` or `file`, not both",
        ),
        (Some((v, l)), None) => {
            let k = parse_usize(v, *l, "[labels] atoms")?;
            LabelSpace::line_segment(k).map_err(|e| ConfigError {
                line: Some(*l),
                key: "[labels] atoms".into(),
                message: e.to_string(),
            })
        }
        (None, Some((path, l))) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                line: Some(*l),
                key: "[labels] file".into(),
                message: format!("{path}: {e}"),
            })?;
            LabelSpace::from_text(&text).map_err(|e| ConfigError {
                line: Some(*l),
                key: "[labels] file".into(),
                message: e.to_string(),
            })
        }
        (None, None) => err(None, "[labels]", "missing `atoms = K` or `file = path`"),
    }
}

fn parse_field(raw: &RawConfig, space: &Arc<LabelSpace>) -> CfgResult<FieldSpec> {
    let (name, line) = raw.req("field", "name")?;
    match name {
        "zero" => Ok(FieldSpec::Zero),
        "linear" => {
            let params = LinearFieldParams {
                a: raw.f64("field", "a")?,
                b: raw.f64("field", "b")?,
                c: raw.f64("field", "c")?,
                d: raw.f64("field", "d")?,
                e: raw.f64("field", "e")?,
                f: raw.f64("field", "f")?,
            };
            Ok(FieldSpec::Linear(params))
        }
        "kernel-moment" => {
            let velocity = (
                raw.f64_or("field", "a", 0.0)?,
                raw.f64_or("field", "b", 0.0)?,
                raw.f64_or("field", "c", 0.0)?,
            );
            let k = space.len();
            let on_x = raw.f64_list("field", "on_x")?;
            let on_lambda = raw.f64_list("field", "on_lambda")?;
            let beta = raw.f64_list_or("field", "beta", &vec![0.0; k])?;
            for (key, list) in [("on_x", &on_x), ("on_lambda", &on_lambda), ("beta", &beta)] {
                if list.len() != k {
                    let line = raw.get("field", key).map(|(_, l)| *l);
                    return err(
                        line,
                        &format!("[field] {key}"),
                        format!("expected {k} entries (one per atom), got {}", list.len()),
                    );
                }
            }
            Ok(FieldSpec::KernelMoment {
                velocity,
                on_x,
                on_lambda,
                beta,
            })
        }
        "const" => {
            let v = raw.f64_list("field", "v")?;
            let t = raw.f64_list_or("field", "t", &vec![0.0; space.len()])?;
            Ok(FieldSpec::Const { v, t })
        }
        other => err(
            Some(line),
            "[field] name",
            format!(
                "unknown field `{other}` (registered: {:?})",
                mfsim_core::fields::known_names()
            ),
        ),
    }
}

fn parse_init(raw: &RawConfig, space: &Arc<LabelSpace>) -> CfgResult<InitialLaw> {
    let position = match raw.get("init", "x") {
        None => PositionLaw::Uniform { lo: -0.5, hi: 0.5 },
        Some((v, l)) => {
            let parts: Vec<&str> = v.split_whitespace().collect();
            match parts.as_slice() {
                ["fixed", a] => PositionLaw::Fixed(parse_f64(a, *l, "[init] x")?),
                ["uniform", a, b] => {
                    let lo = parse_f64(a, *l, "[init] x")?;
                    let hi = parse_f64(b, *l, "[init] x")?;
                    if lo > hi {
                        return err(Some(*l), "[init] x", "uniform bounds out of order");
                    }
                    PositionLaw::Uniform { lo, hi }
                }
                ["gaussian", a, b] => PositionLaw::Gaussian {
                    mean: parse_f64(a, *l, "[init] x")?,
                    sd: parse_f64(b, *l, "[init] x")?,
                },
                _ => {
                    return err(
                        Some(*l),
                        "[init] x",
                        "expected `fixed v`, `uniform lo hi`, or `gaussian mean sd`",
                    )
                }
            }
        }
    };
    let lambda = match raw.get("init", "lambda") {
        None => LambdaLaw::Jitter { eps: 0.05 },
        Some((v, l)) => {
            let parts: Vec<&str> = v.split_whitespace().collect();
            match parts.as_slice() {
                ["uniform"] => LambdaLaw::UniformSimplex,
                ["jitter", e] => {
                    let eps = parse_f64(e, *l, "[init] lambda")?;
                    if !(0.0..1.0).contains(&eps) {
                        return err(Some(*l), "[init] lambda", "jitter must lie in [0, 1)");
                    }
                    LambdaLaw::Jitter { eps }
                }
                ["fixed", list] => {
                    let weights: CfgResult<Vec<f64>> = list
                        .split(',')
                        .map(|p| parse_f64(p.trim(), *l, "[init] lambda"))
                        .collect();
                    let weights = weights?;
                    if weights.len() != space.len() {
                        return err(
                            Some(*l),
                            "[init] lambda",
                            format!("expected {} weights", space.len()),
                        );
                    }
                    let sum: f64 = weights.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
                        return err(
                            Some(*l),
                            "[init] lambda",
                            "weights must be a probability vector",
                        );
                    }
                    LambdaLaw::Fixed(weights)
                }
                _ => {
                    return err(
                        Some(*l),
                        "[init] lambda",
                        "expected `uniform`, `jitter eps`, or `fixed w1,..,wK`",
                    )
                }
            }
        }
    };
    Ok(InitialLaw { position, lambda })
}

pub fn field_name(spec: &FieldSpec) -> &'static str {
    match spec {
        FieldSpec::Zero => "zero",
        FieldSpec::Linear(_) => "linear",
        FieldSpec::KernelMoment { .. } => "kernel-moment",
        FieldSpec::Const { .. } => "const",
    }
}

fn field_dim_requirement(spec: &FieldSpec) -> Option<usize> {
    match spec {
        FieldSpec::Zero => None,
        FieldSpec::Linear(_) | FieldSpec::KernelMoment { .. } => Some(1),
        FieldSpec::Const { v, .. } => Some(v.len()),
    }
}

/// Normalized config echo: parseable by [`parse_config`] and byte-stable, so
/// a manifest re-run reproduces the artifacts.
pub fn render_config(cfg: &RunConfig, resolved_theta: f64) -> String {
    let mut s = String::new();
    s.push_str(&format!("mode = {}\n", cfg.mode.name()));
    s.push_str(&format!("seed = {}\n", cfg.seed));
    s.push_str(&format!("out = {}\n", cfg.out.display()));
    s.push_str(&format!("emit_svg = {}\n", cfg.emit_svg));
    if let Some(t) = cfg.threads {
        s.push_str(&format!("threads = {t}\n"));
    }
    s.push_str("\n[labels]\n");
    s.push_str(&format!("atoms = {}\n", cfg.space.len()));
    s.push_str("\n[field]\n");
    s.push_str(&format!("name = {}\n", field_name(&cfg.field)));
    match &cfg.field {
        FieldSpec::Zero => {}
        FieldSpec::Linear(p) => {
            for (k, v) in [
                ("a", p.a),
                ("b", p.b),
                ("c", p.c),
                ("d", p.d),
                ("e", p.e),
                ("f", p.f),
            ] {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        FieldSpec::KernelMoment {
            velocity,
            on_x,
            on_lambda,
            beta,
        } => {
            s.push_str(&format!(
                "a = {}\nb = {}\nc = {}\n",
                velocity.0, velocity.1, velocity.2
            ));
            s.push_str(&format!("on_x = {}\n", join(on_x)));
            s.push_str(&format!("on_lambda = {}\n", join(on_lambda)));
            s.push_str(&format!("beta = {}\n", join(beta)));
        }
        FieldSpec::Const { v, t } => {
            s.push_str(&format!("v = {}\n", join(v)));
            s.push_str(&format!("t = {}\n", join(t)));
        }
    }
    s.push_str("\n[sim]\n");
    s.push_str(&format!("n = {}\n", cfg.sim_n));
    s.push_str(&format!("d = {}\n", cfg.sim_d));
    s.push_str(&format!("dt = {}\n", cfg.sim_dt));
    s.push_str(&format!("t = {}\n", cfg.sim_t));
    s.push_str(&format!("sigma = {}\n", cfg.sim_sigma));
    s.push_str(&format!("theta = {resolved_theta}\n"));
    s.push_str(&format!("traj_stride = {}\n", cfg.traj_stride));
    s.push_str("\n[init]\n");
    match &cfg.init.position {
        PositionLaw::Fixed(v) => s.push_str(&format!("x = fixed {v}\n")),
        PositionLaw::Uniform { lo, hi } => s.push_str(&format!("x = uniform {lo} {hi}\n")),
        PositionLaw::Gaussian { mean, sd } => s.push_str(&format!("x = gaussian {mean} {sd}\n")),
    }
    match &cfg.init.lambda {
        LambdaLaw::Fixed(w) => s.push_str(&format!("lambda = fixed {}\n", join(w))),
        LambdaLaw::Jitter { eps } => s.push_str(&format!("lambda = jitter {eps}\n")),
        LambdaLaw::UniformSimplex => s.push_str("lambda = uniform\n"),
    }
    if let Some(sp) = &cfg.spike {
        s.push_str("\n[spike]\n");
        s.push_str(&format!("x_f = {}\n", sp.x_f));
        s.push_str(&format!("x_r = {}\n", sp.x_r));
        if let Some((lo, hi)) = sp.x_f_jitter {
            s.push_str(&format!("x_f_jitter = {lo} {hi}\n"));
        }
        s.push_str(&format!("bin = {}\n", sp.bin));
    }
    if let Some(h) = &cfg.het {
        s.push_str("\n[het]\n");
        s.push_str(&format!("order = {}\n", h.order));
        s.push_str(&format!("a0 = {}\n", h.a0));
    }
    s.push_str("\n[experiment]\n");
    s.push_str(&format!(
        "ns = {}\n",
        cfg.exp
            .ns
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    s.push_str(&format!("n_ref = {}\n", cfg.exp.n_ref));
    s.push_str(&format!("t_checks = {}\n", join(&cfg.exp.t_checks)));
    s.push_str(&format!("n_reps = {}\n", cfg.exp.n_reps));
    s.push_str(&format!("n_iters = {}\n", cfg.exp.n_iters));
    s.push_str(&format!("n_paths = {}\n", cfg.exp.n_paths));
    s.push_str(&format!("perturb = {}\n", cfg.exp.perturb));
    s
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}
