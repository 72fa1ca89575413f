//! Experiment drivers behind the command-line tool. Each command returns a
//! typed report plus an exit code; the binary only parses flags and prints.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::Serialize;

use crate::config::{self, bundled, GainsDefinition, SystemDefinition};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lure_model::{LipschitzReport, SampleSet};
use crate::observer_design::{self, Certificate, RangePolicy, Verdict, VerdictReport};
use crate::set_valued::{GuidedSignParams, SigmoidVariant, SignMode};
use crate::simulate::{self, ChatteringIndex, Coordinates, Scheme, Series, SimConfig};
use crate::Vector;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT_ERROR: i32 = 2;

/// Output error level used for first-crossing and decay measurements.
pub const EY_TOL: f64 = 1e-3;

/// Sign realization requested on the command line. The bare names
/// `guided` and `sigmoid` pick the experiment's default parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignModeArg {
    Explicit(SignMode),
    GuidedDefault,
    SigmoidDefault,
}

impl SignModeArg {
    pub fn resolve(self, guided: GuidedSignParams) -> SignMode {
        match self {
            SignModeArg::Explicit(m) => m,
            SignModeArg::GuidedDefault => SignMode::Guided(guided),
            SignModeArg::SigmoidDefault => SignMode::Sigmoid { eps: 1e-3, variant: SigmoidVariant::Abs },
        }
    }
}

impl FromStr for SignModeArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "guided" => Ok(SignModeArg::GuidedDefault),
            "sigmoid" => Ok(SignModeArg::SigmoidDefault),
            _ => s.parse().map(SignModeArg::Explicit),
        }
    }
}

/// Example 1 guide `delta(t) = exp(-0.5 t)`, `M = 1`, `N = 3`.
pub fn example1_guide() -> GuidedSignParams {
    GuidedSignParams { k1: 0.5, k2: 0.0, m: 1.0, n: 3.0 }
}

/// Example 2 guide: `delta(0) = e^{2.5} > |e_y(0)| = 12`, decaying at 0.1.
pub fn example2_guide() -> GuidedSignParams {
    GuidedSignParams { k1: 0.1, k2: -2.5, m: 1.0, n: 3.0 }
}

/// Outcome of a command: the report to serialize and the process exit code.
#[derive(Debug, Clone)]
pub struct Outcome<R> {
    pub report: R,
    pub exit_code: i32,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn create_file(dir: &Path, name: &str) -> Result<std::io::BufWriter<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(std::io::BufWriter::new(fs::File::create(dir.join(name))?))
}

fn load_system_or(path: Option<&Path>, fallback: &str) -> Result<SystemDefinition> {
    match path {
        Some(p) => config::load_system(p),
        None => config::parse_system(fallback),
    }
}

fn load_gains_or(path: Option<&Path>, fallback: &str) -> Result<GainsDefinition> {
    match path {
        Some(p) => config::load_gains(p),
        None => config::parse_gains(fallback),
    }
}

fn sample_set(def: &SystemDefinition, count: Option<usize>, seed: u64) -> Result<SampleSet> {
    let d = def.system.dims();
    SampleSet::uniform(&def.sample_box, d.n, d.r, count.unwrap_or(SampleSet::DEFAULT_SIZE), seed)
}

fn vec_or(what: &str, v: Option<&Vec<f64>>, n: usize) -> Result<Vector> {
    match v {
        Some(v) if v.len() == n => Ok(Vector::from_row_slice(v)),
        Some(v) => Err(Error::Config(format!("{what} has {} entries, expected {n}", v.len()))),
        None => Err(Error::Config(format!("no {what} given"))),
    }
}

/// One design check at a given `gamma` (or the reduced conditions).
#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub label: String,
    pub gamma: Option<f64>,
    pub all_pass: bool,
    pub verdicts: Vec<Verdict>,
}

impl CheckEntry {
    fn new(label: &str, gamma: Option<f64>, report: &VerdictReport) -> Self {
        Self { label: label.into(), gamma, all_pass: report.all_pass(), verdicts: report.conditions.clone() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HSummary {
    /// `(F P^{-1} F^T)^{-1} F`, row-major.
    pub gain: Vec<Vec<f64>>,
    pub sampled_bound: f64,
    pub max_matching_residual: f64,
}

fn rows(m: &crate::Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

// ---------------------------------------------------------------- example 1

#[derive(Debug, Clone)]
pub struct Example1Options {
    pub config: Option<PathBuf>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    /// Runs this single variant instead of the default four.
    pub sign_mode: Option<SignModeArg>,
    pub out: PathBuf,
}

impl Default for Example1Options {
    fn default() -> Self {
        Self { config: None, step: None, horizon: None, sign_mode: None, out: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantMetrics {
    pub name: String,
    pub sign_mode: String,
    pub csv: String,
    pub chattering: ChatteringIndex,
    /// First time after which `|x| <= convergence_tol` holds to the end.
    pub convergence_time: Option<f64>,
    pub terminal_abs_x: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example1Report {
    pub schema: u32,
    pub command: String,
    pub step: f64,
    pub horizon: f64,
    pub gain: f64,
    pub x0: Vec<f64>,
    pub window_fraction: f64,
    pub convergence_tol: f64,
    pub variants: Vec<VariantMetrics>,
}

pub const EXAMPLE1_WINDOW: f64 = 0.5;
pub const EXAMPLE1_TOL: f64 = 1e-4;

/// The four default variants of Example 1.
pub fn example1_variants() -> Vec<(String, SignMode)> {
    vec![
        ("exact".into(), SignMode::Exact),
        ("sigmoid_1e-3".into(), SignMode::Sigmoid { eps: 1e-3, variant: SigmoidVariant::Abs }),
        ("sigmoid_1e-6".into(), SignMode::Sigmoid { eps: 1e-6, variant: SigmoidVariant::Abs }),
        ("guided".into(), SignMode::Guided(example1_guide())),
    ]
}

/// `x' = 3 sin x - 4 Sign(x)` under each sign realization, one worker per
/// variant.
pub fn cmd_example1(opts: &Example1Options) -> Result<Outcome<Example1Report>> {
    let file = match &opts.config {
        Some(p) => config::parse_sign_system(&fs::read_to_string(p)?)?,
        None => config::parse_sign_system(bundled::EXAMPLE1)?,
    };
    let drift = config::registry::drift(&file.drift)?;
    let step = opts.step.unwrap_or(file.step);
    let horizon = opts.horizon.unwrap_or(file.horizon);
    let base = SimConfig::new(0.0, horizon, step)?;
    let x0 = Vector::from_row_slice(&file.x0);
    let variants = match opts.sign_mode {
        Some(arg) => {
            let mode = arg.resolve(example1_guide());
            vec![(mode.label().replace(':', "_"), mode)]
        }
        None => example1_variants(),
    };

    let results: Vec<Result<VariantMetrics>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|(name, mode)| {
                let cfg = base.with_sign_mode(*mode);
                let x0 = &x0;
                let out = &opts.out;
                let gain = file.gain;
                scope.spawn(move || -> Result<VariantMetrics> {
                    let tr = simulate::simulate_sign_system(drift, gain, &cfg, x0)?;
                    let csv = format!("example1_{name}.csv");
                    let mut w = create_file(out, &csv)?;
                    tr.write_csv(&mut w)?;
                    std::io::Write::flush(&mut w)?;
                    Ok(VariantMetrics {
                        name: name.clone(),
                        sign_mode: mode.label(),
                        csv,
                        chattering: simulate::chattering_index(&tr, Series::State(0), EXAMPLE1_WINDOW)?,
                        convergence_time: simulate::convergence_time(&tr, Series::State(0), EXAMPLE1_TOL)?,
                        terminal_abs_x: tr.x.last().map_or(f64::NAN, |x| x.amax()),
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Precondition("worker panicked".into())))).collect()
    });
    let variants = results.into_iter().collect::<Result<Vec<_>>>()?;
    for v in &variants {
        info!("{}: {:.1} switches per unit time, terminal |x| = {:e}", v.name, v.chattering.switch_count_per_unit_time, v.terminal_abs_x);
    }
    let report = Example1Report {
        schema: SCHEMA_VERSION,
        command: "example1".into(),
        step,
        horizon,
        gain: file.gain,
        x0: file.x0.clone(),
        window_fraction: EXAMPLE1_WINDOW,
        convergence_tol: EXAMPLE1_TOL,
        variants,
    };
    write_json(&opts.out, "example1_metrics.json", &report)?;
    Ok(Outcome { report, exit_code: EXIT_OK })
}

// ---------------------------------------------------------------- example 2

#[derive(Debug, Clone)]
pub struct Example2Options {
    pub system: Option<PathBuf>,
    pub gains: Option<PathBuf>,
    pub step: f64,
    pub horizon: f64,
    pub sign_mode: Option<SignModeArg>,
    pub scheme: Scheme,
    pub coordinates: Coordinates,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: PathBuf,
}

impl Default for Example2Options {
    fn default() -> Self {
        Self {
            system: None,
            gains: None,
            step: 1e-3,
            horizon: 60.0,
            sign_mode: None,
            scheme: Scheme::Euler,
            coordinates: Coordinates::Error,
            beta: None,
            gamma: None,
            seed: 0,
            samples: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateEntry {
    pub issued: bool,
    pub refused_reason: Option<String>,
    pub certificate: Option<Certificate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example2Measured {
    pub ey_tol: f64,
    pub ey_first_crossing: Option<f64>,
    pub ey_convergence_time: Option<f64>,
    pub first_crossing_within_tf_bound: Option<bool>,
    /// `max_k |e(t_k)| / envelope(t_k)`.
    pub envelope_max_ratio: Option<f64>,
    pub e_norm_final: f64,
    pub ey_norm_final: f64,
    pub injection_chattering: ChatteringIndex,
    pub omega_hat_chattering: ChatteringIndex,
}

#[derive(Debug, Clone, Serialize)]
pub struct Example2Report {
    pub schema: u32,
    pub command: String,
    pub system: String,
    pub step: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub coordinates: Coordinates,
    pub sign_mode: String,
    pub beta: f64,
    pub checks: Vec<CheckEntry>,
    pub h: HSummary,
    pub certificate: CertificateEntry,
    pub measured: Example2Measured,
    pub csv: String,
}

/// Design checks, certificate and bounded-`h` observer run on Example 2 (or
/// on the given files).
pub fn cmd_example2(opts: &Example2Options) -> Result<Outcome<Example2Report>> {
    let def = load_system_or(opts.system.as_deref(), bundled::EXAMPLE2_SYSTEM)?;
    let gdef = load_gains_or(opts.gains.as_deref(), bundled::EXAMPLE2_GAINS)?;
    let (mut gains, file_gamma) = gdef.observer.ok_or_else(|| Error::Config("gains file has no [observer] section".into()))?;
    if let Some(beta) = opts.beta {
        gains = gains.with_beta(beta)?;
    }
    let sys = &def.system;
    let bounds = def.bounds;
    let init = def.initial.as_ref().ok_or_else(|| Error::Config("system file has no [initial] section".into()))?;
    let n = sys.dims().n;
    let x0 = vec_or("initial.x0", Some(&init.x0), n)?;
    let xhat0 = vec_or("initial.xhat0", init.xhat0.as_ref(), n)?;

    let samples = sample_set(&def, opts.samples, opts.seed)?;
    let gamma_used = opts.gamma.or(file_gamma).unwrap_or(bounds.l1);
    let gamma_nominal = bounds.gamma();
    let used = observer_design::check_assumption4(sys, &gains, gamma_used, &samples)?;
    let nominal = observer_design::check_assumption4(sys, &gains, gamma_nominal, &samples)?;
    let checks = vec![CheckEntry::new("bounded_h", Some(gamma_used), &used), CheckEntry::new("nominal", Some(gamma_nominal), &nominal)];

    let hmap = observer_design::compute_h(sys, &gains.p)?;
    let hs = hmap.sample(sys, &samples);
    let h = HSummary { gain: rows(&hmap.gain), sampled_bound: hs.bound, max_matching_residual: hs.max_residual };

    let mode = opts.sign_mode.unwrap_or(SignModeArg::Explicit(SignMode::Exact)).resolve(example2_guide());
    let cfg = SimConfig::new(0.0, opts.horizon, opts.step)?
        .with_scheme(opts.scheme)
        .with_coordinates(opts.coordinates)
        .with_sign_mode(mode)
        .with_seed(opts.seed)
        .with_strict(false);
    let tr = simulate::simulate_bounded_h(sys, &gains, &bounds, &cfg, &x0, &xhat0)?;
    let csv = "example2_trajectory.csv".to_string();
    let mut w = create_file(&opts.out, &csv)?;
    tr.write_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;

    let e0 = &xhat0 - &x0;
    let v0 = e0.dot(&(&gains.p * &e0));
    let certify = |probe: Option<f64>| {
        observer_design::finite_time_certificate(sys, &gains, &bounds, &used, gamma_used, v0, probe, RangePolicy::Report)
    };
    let certificate = match certify(None) {
        Ok(first) => {
            let probe = if first.t1 <= opts.horizon { tr.w_at(first.t1) } else { None };
            let cert = if probe.is_some() { certify(probe)? } else { first };
            for v in cert.verdicts.iter().filter(|v| !v.pass) {
                warn!("certificate issued with failed condition {} (residual {:e})", v.name, v.residual);
            }
            CertificateEntry { issued: true, refused_reason: None, certificate: Some(cert) }
        }
        Err(Error::CertificateRefused(reason)) => {
            warn!("certificate refused: {reason}; simulation ran without a guarantee");
            CertificateEntry { issued: false, refused_reason: Some(reason), certificate: None }
        }
        Err(e) => return Err(e),
    };

    let ey_first_crossing = simulate::first_crossing(&tr, Series::OutputErrorNorm, EY_TOL)?;
    let cert = certificate.certificate.as_ref();
    let envelope_max_ratio = cert.map(|c| {
        let env = c.exponential();
        tr.times.iter().zip(&tr.e_norm).map(|(t, e)| e / env.envelope(t - cfg.t0)).fold(0.0_f64, f64::max)
    });
    let measured = Example2Measured {
        ey_tol: EY_TOL,
        ey_first_crossing,
        ey_convergence_time: simulate::convergence_time(&tr, Series::OutputErrorNorm, EY_TOL)?,
        first_crossing_within_tf_bound: cert.map(|c| ey_first_crossing.is_some_and(|t| t <= c.tf_bound)),
        envelope_max_ratio,
        e_norm_final: *tr.e_norm.last().unwrap_or(&f64::NAN),
        ey_norm_final: *tr.ey_norm.last().unwrap_or(&f64::NAN),
        injection_chattering: simulate::chattering_index(&tr, Series::Injection(0), 0.5)?,
        omega_hat_chattering: simulate::chattering_index(&tr, Series::OmegaHat(0), 0.5)?,
    };

    let report = Example2Report {
        schema: SCHEMA_VERSION,
        command: "example2".into(),
        system: def.name.clone(),
        step: opts.step,
        horizon: opts.horizon,
        scheme: opts.scheme,
        coordinates: opts.coordinates,
        sign_mode: mode.label(),
        beta: gains.beta,
        checks,
        h,
        certificate,
        measured,
        csv,
    };
    write_json(&opts.out, "example2_report.json", &report)?;
    Ok(Outcome { report, exit_code: EXIT_OK })
}

// ---------------------------------------------------------------- check

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub system: Option<PathBuf>,
    pub gains: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: PathBuf,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { system: None, gains: None, gamma: None, seed: 0, samples: None, out: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub schema: u32,
    pub command: String,
    pub system: String,
    pub all_pass: bool,
    pub checks: Vec<CheckEntry>,
    pub h: Option<HSummary>,
    /// Informational; does not affect the exit code.
    pub lipschitz: LipschitzReport,
}

/// Design conditions for every gain set in the gains file. Exit code 0 iff
/// all of them pass.
pub fn cmd_check(opts: &CheckOptions) -> Result<Outcome<CheckReport>> {
    let def = load_system_or(opts.system.as_deref(), bundled::EXAMPLE2_SYSTEM)?;
    let gdef = load_gains_or(opts.gains.as_deref(), bundled::EXAMPLE2_GAINS)?;
    let sys = &def.system;
    let samples = sample_set(&def, opts.samples, opts.seed)?;
    let mut checks = Vec::new();
    let mut h = None;
    if let Some((gains, file_gamma)) = &gdef.observer {
        let gamma = opts.gamma.or(*file_gamma).unwrap_or_else(|| def.bounds.gamma());
        let report = observer_design::check_assumption4(sys, gains, gamma, &samples)?;
        checks.push(CheckEntry::new("observer", Some(gamma), &report));
        let hmap = observer_design::compute_h(sys, &gains.p)?;
        let hs = hmap.sample(sys, &samples);
        h = Some(HSummary { gain: rows(&hmap.gain), sampled_bound: hs.bound, max_matching_residual: hs.max_residual });
    }
    if let Some((q, rg)) = &gdef.reduced {
        let dec = sys.decompose(*q)?;
        let report = observer_design::check_assumption4prime(&dec, rg, &def.bounds, &samples)?;
        checks.push(CheckEntry::new("reduced", None, &report));
    }
    let lipschitz = crate::lure_model::spot_check_lipschitz(sys, &def.bounds, &def.sample_box, samples.points.len(), opts.seed)?;
    let all_pass = checks.iter().all(|c| c.all_pass);
    let report = CheckReport { schema: SCHEMA_VERSION, command: "check".into(), system: def.name.clone(), all_pass, checks, h, lipschitz };
    write_json(&opts.out, "check_report.json", &report)?;
    Ok(Outcome { report, exit_code: if all_pass { EXIT_OK } else { EXIT_CHECK_FAILED } })
}

// ---------------------------------------------------------------- reduced demo

#[derive(Debug, Clone)]
pub struct ReducedOptions {
    pub system: Option<PathBuf>,
    pub gains: Option<PathBuf>,
    pub step: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub coordinates: Coordinates,
    pub epsilon: Option<f64>,
    pub zhat0: Option<Vec<f64>>,
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: PathBuf,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self {
            system: None,
            gains: None,
            step: 1e-3,
            horizon: 30.0,
            scheme: Scheme::Euler,
            coordinates: Coordinates::Error,
            epsilon: None,
            zhat0: None,
            seed: 0,
            samples: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedReport {
    pub schema: u32,
    pub command: String,
    pub system: String,
    pub q: usize,
    pub epsilon: f64,
    pub check: CheckEntry,
    pub simulated: bool,
    pub step: f64,
    pub horizon: f64,
    /// Largest eigenvalue of `Q`.
    pub q_max: f64,
    /// `eps / (2 q_max)`
    pub guaranteed_rate: f64,
    /// Least-squares slope of `-ln |e_z|` while `|e_z|` is resolvable.
    pub estimated_rate: Option<f64>,
    pub ez_norm_initial: Option<f64>,
    pub ez_norm_final: Option<f64>,
    pub x2_err_final: Option<f64>,
    pub csv: Option<String>,
}

/// Decay rate of a positive series from a log-linear fit over the samples
/// above `floor`.
pub fn estimate_decay_rate(times: &[f64], values: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times.iter().zip(values).filter(|(_, v)| **v > floor).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Reduced-order observer demo. Exit code 1 (without simulating) when the
/// reduced design conditions fail.
pub fn cmd_reduced_demo(opts: &ReducedOptions) -> Result<Outcome<ReducedReport>> {
    let def = load_system_or(opts.system.as_deref(), bundled::REDUCED_SYSTEM)?;
    let gdef = load_gains_or(opts.gains.as_deref(), bundled::REDUCED_GAINS)?;
    let (q, mut rg) = gdef.reduced.ok_or_else(|| Error::Config("gains file has no [reduced] section".into()))?;
    if let Some(eps) = opts.epsilon {
        rg = rg.with_epsilon(eps)?;
    }
    let dec = def.system.decompose(q)?;
    let samples = sample_set(&def, opts.samples, opts.seed)?;
    let verdicts = observer_design::check_assumption4prime(&dec, &rg, &def.bounds, &samples)?;
    let check = CheckEntry::new("reduced", None, &verdicts);
    let q_max = linalg::max_sym_eigenvalue(&rg.q_mat);
    let mut report = ReducedReport {
        schema: SCHEMA_VERSION,
        command: "reduced-demo".into(),
        system: def.name.clone(),
        q,
        epsilon: rg.epsilon,
        check,
        simulated: false,
        step: opts.step,
        horizon: opts.horizon,
        q_max,
        guaranteed_rate: rg.epsilon / (2.0 * q_max),
        estimated_rate: None,
        ez_norm_initial: None,
        ez_norm_final: None,
        x2_err_final: None,
        csv: None,
    };
    if !verdicts.all_pass() {
        warn!("reduced design conditions fail; not simulating");
        write_json(&opts.out, "reduced_demo_report.json", &report)?;
        return Ok(Outcome { report, exit_code: EXIT_CHECK_FAILED });
    }

    let n = def.system.dims().n;
    let init = def.initial.as_ref();
    let x0 = vec_or("initial.x0", init.map(|i| &i.x0), n)?;
    let zhat0 = match (&opts.zhat0, init.and_then(|i| i.zhat0.as_ref())) {
        (Some(v), _) | (None, Some(v)) => vec_or("zhat0", Some(v), n - q)?,
        (None, None) => Vector::zeros(n - q),
    };
    let cfg = SimConfig::new(0.0, opts.horizon, opts.step)?
        .with_scheme(opts.scheme)
        .with_coordinates(opts.coordinates)
        .with_seed(opts.seed)
        .with_strict(false);
    let tr = simulate::simulate_reduced(&dec, &rg, &def.bounds, &cfg, &x0, &zhat0)?;
    let csv = "reduced_demo_trajectory.csv".to_string();
    let mut w = create_file(&opts.out, &csv)?;
    tr.write_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;

    let ez0 = tr.ez_norm.first().copied();
    report.simulated = true;
    report.estimated_rate = ez0.and_then(|e0| estimate_decay_rate(&tr.times, &tr.ez_norm, (e0 * 1e-10).max(1e-13)));
    report.ez_norm_initial = ez0;
    report.ez_norm_final = tr.ez_norm.last().copied();
    report.x2_err_final = tr.x2_err_norm.last().copied();
    report.csv = Some(csv);
    write_json(&opts.out, "reduced_demo_report.json", &report)?;
    Ok(Outcome { report, exit_code: EXIT_OK })
}
