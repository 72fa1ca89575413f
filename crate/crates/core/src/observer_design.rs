//! Verification of candidate observer gains and the convergence
//! certificates that follow from them.
//!
//! Nothing here synthesizes gains: every check takes a candidate and
//! reports a residual against a fixed threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::lure_model::{DecomposedSystem, LipschitzBounds, LureSystem, SampleSet};

/// Acceptance threshold on the largest eigenvalue of the dissipation
/// matrix. Example data sits exactly on the boundary (max eigenvalue 0),
/// so this tolerance is load-bearing.
pub const TOL_PSD: f64 = 1e-9;
/// Relative threshold for matrix equalities.
pub const TOL_EQUALITY: f64 = 1e-9;
/// Relative threshold for sampled functional equalities.
pub const TOL_FUNCTIONAL: f64 = 1e-8;
/// Relative rank threshold for `F`.
pub const TOL_RANK: f64 = 1e-10;
/// Bound on the relative residual of the projector identity.
pub const TOL_RANGE: f64 = 1e-8;

/// Gains of the full-order observer.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub p: Matrix,
    pub l: Matrix,
    pub k: Matrix,
    pub beta: f64,
    pub epsilon: f64,
}

impl ObserverGains {
    pub fn new(p: Matrix, l: Matrix, k: Matrix, beta: f64, epsilon: f64) -> Result<Self> {
        check_spd(&p, "P")?;
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self { p, l, k, beta, epsilon })
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
        }
        self.beta = beta;
        Ok(self)
    }

    /// Shapes against a plant: `P` n×n, `L` n×p, `K` m×p.
    pub fn check_dims(&self, sys: &LureSystem) -> Result<()> {
        let d = sys.dims();
        if self.p.shape() != (d.n, d.n) {
            return Err(dim_err("P", format!("{}x{}", d.n, d.n), format!("{:?}", self.p.shape())));
        }
        if self.l.shape() != (d.n, d.p) {
            return Err(dim_err("L", format!("{}x{}", d.n, d.p), format!("{:?}", self.l.shape())));
        }
        if self.k.shape() != (d.m, d.p) {
            return Err(dim_err("K", format!("{}x{}", d.m, d.p), format!("{:?}", self.k.shape())));
        }
        Ok(())
    }

    pub fn p_inverse(&self) -> Result<Matrix> {
        linalg::inverse(&self.p, 1e-14, "P")
    }
}

fn check_spd(p: &Matrix, what: &str) -> Result<()> {
    if !p.is_square() || p.is_empty() {
        return Err(Error::InvalidParameter(format!("{what} must be square and non-empty")));
    }
    if !linalg::is_symmetric(p, 1e-12) {
        return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
    }
    let lmin = linalg::min_sym_eigenvalue(p);
    if !(lmin > 0.0) {
        return Err(Error::InvalidParameter(format!("{what} is not positive definite (min eigenvalue {lmin:e})")));
    }
    Ok(())
}

/// Gains of the reduced-order observer; `K = P22^{-1} P21` is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedGains {
    pub q_mat: Matrix,
    pub p21: Matrix,
    pub p22: Matrix,
    pub epsilon: f64,
    k: Matrix,
}

impl ReducedGains {
    pub fn new(q_mat: Matrix, p21: Matrix, p22: Matrix, epsilon: f64) -> Result<Self> {
        check_spd(&q_mat, "Q")?;
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        if p22.shape() != q_mat.shape() {
            return Err(dim_err("P22", format!("{:?}", q_mat.shape()), format!("{:?}", p22.shape())));
        }
        if p21.nrows() != p22.nrows() {
            return Err(dim_err("P21 rows", p22.nrows(), p21.nrows()));
        }
        let k = linalg::inverse(&p22, 1e-12, "P22")? * &p21;
        Ok(Self { q_mat, p21, p22, epsilon, k })
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.q_mat, self.p21, self.p22, epsilon)
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }
}

/// One checked condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    fn at_most(name: &str, residual: f64, threshold: f64) -> Self {
        Self { name: name.to_string(), residual, threshold, pass: residual <= threshold }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub conditions: Vec<Verdict>,
}

impl VerdictReport {
    pub fn all_pass(&self) -> bool {
        !self.conditions.is_empty() && self.conditions.iter().all(|v| v.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.conditions.iter().find(|v| v.name == name)
    }
}

pub const DISSIPATION: &str = "dissipation_inequality";
pub const OUTPUT_COUPLING: &str = "output_coupling_equality";
pub const DISTURBANCE_MATCHING: &str = "disturbance_matching";
pub const REDUCED_DISSIPATION: &str = "reduced_dissipation_inequality";
pub const REDUCED_COUPLING: &str = "reduced_output_coupling_equality";
pub const REDUCED_ANNIHILATION: &str = "reduced_disturbance_annihilation";

/// `h(x, u) = ((F P^{-1} F^T)^{-1} F f2(x, u))^T`, the l×p matrix with
/// `f2^T P = h F` whenever `f2` has range in `im(P^{-1} F^T)`.
#[derive(Debug, Clone)]
pub struct HMap {
    /// `(F P^{-1} F^T)^{-1} F`, p×n.
    pub gain: Matrix,
    p: Matrix,
    f: Matrix,
}

impl HMap {
    pub fn eval(&self, sys: &LureSystem, x: &Vector, u: &Vector) -> Matrix {
        (&self.gain * sys.f2(x, u)).transpose()
    }

    /// `|f2^T P - h F|` (spectral norm).
    pub fn residual(&self, sys: &LureSystem, x: &Vector, u: &Vector) -> f64 {
        let f2 = sys.f2(x, u);
        let h = (&self.gain * &f2).transpose();
        linalg::spectral_norm(&(f2.transpose() * &self.p - h * &self.f))
    }

    /// Empirical sup of `|h|`, per-sample residuals, and the scale used to
    /// normalize them (`max(1, sup |f2^T P|)`).
    pub fn sample(&self, sys: &LureSystem, samples: &SampleSet) -> HSample {
        let mut bound = 0.0_f64;
        let mut scale = 1.0_f64;
        let mut residuals = Vec::with_capacity(samples.points.len());
        for (x, u) in &samples.points {
            let f2 = sys.f2(x, u);
            let f2tp = f2.transpose() * &self.p;
            let h = (&self.gain * &f2).transpose();
            bound = bound.max(linalg::spectral_norm(&h));
            scale = scale.max(linalg::spectral_norm(&f2tp));
            residuals.push(linalg::spectral_norm(&(f2tp - h * &self.f)));
        }
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        HSample { bound, max_residual, scale, residuals }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HSample {
    pub bound: f64,
    pub max_residual: f64,
    pub scale: f64,
    pub residuals: Vec<f64>,
}

fn check_full_row_rank(f: &Matrix) -> Result<()> {
    let r = linalg::rank(f, TOL_RANK);
    if r != f.nrows() {
        return Err(Error::RankDeficient { what: "F".into(), rank: r, expected: f.nrows() });
    }
    Ok(())
}

/// `(F P^{-1} F^T)^{-1}`.
pub fn output_metric(p: &Matrix, f: &Matrix) -> Result<Matrix> {
    check_full_row_rank(f)?;
    let pinv = linalg::inverse(p, 1e-14, "P")?;
    linalg::inverse(&(f * pinv * f.transpose()), 1e-14, "F P^-1 F^T")
}

pub fn compute_h(sys: &LureSystem, p: &Matrix) -> Result<HMap> {
    let f = sys.f();
    let n = sys.dims().n;
    if p.shape() != (n, n) {
        return Err(dim_err("P", format!("{n}x{n}"), format!("{:?}", p.shape())));
    }
    let g = output_metric(p, f)?;
    Ok(HMap { gain: g * f, p: p.clone(), f: f.clone() })
}

/// Dissipation matrix `P(A-LF) + (A-LF)^T P + gamma P^2 + (gamma + eps) I`.
pub fn dissipation_matrix(sys: &LureSystem, gains: &ObserverGains, gamma: f64) -> Matrix {
    let n = sys.dims().n;
    let acl = sys.a() - &gains.l * sys.f();
    let p = &gains.p;
    p * &acl + acl.transpose() * p + p * p * gamma + Matrix::identity(n, n) * (gamma + gains.epsilon)
}

/// Check the design conditions of the full-order observer for a given
/// `gamma` (use `L1 + L2 L3` for the general observer, `L1` for the
/// bounded-`h` observer).
pub fn check_assumption4(sys: &LureSystem, gains: &ObserverGains, gamma: f64, samples: &SampleSet) -> Result<VerdictReport> {
    gains.check_dims(sys)?;
    let mut conditions = Vec::with_capacity(3);

    let m = dissipation_matrix(sys, gains, gamma);
    conditions.push(Verdict::at_most(DISSIPATION, linalg::max_sym_eigenvalue(&m), TOL_PSD));

    let lhs = sys.b().transpose() * &gains.p;
    let rhs = sys.c() - &gains.k * sys.f();
    let scale = 1.0_f64.max(linalg::max_abs(&lhs)).max(linalg::max_abs(sys.c()));
    conditions.push(Verdict::at_most(OUTPUT_COUPLING, linalg::max_abs(&(lhs - rhs)), TOL_EQUALITY * scale));

    match compute_h(sys, &gains.p) {
        Ok(h) => {
            let s = h.sample(sys, samples);
            conditions.push(Verdict::at_most(DISTURBANCE_MATCHING, s.max_residual, TOL_FUNCTIONAL * s.scale));
        }
        // Without full row rank the matching equality cannot be formed.
        Err(Error::RankDeficient { .. } | Error::Singular(_)) => {
            conditions.push(Verdict { name: DISTURBANCE_MATCHING.into(), residual: f64::INFINITY, threshold: TOL_FUNCTIONAL, pass: false });
        }
        Err(e) => return Err(e),
    }
    Ok(VerdictReport { conditions })
}

/// Reduced dissipation matrix
/// `Q(A22+K A12) + (..)^T Q + L1 Q (K K^T + I) Q + (L1 + eps) I`.
pub fn reduced_dissipation_matrix(dec: &DecomposedSystem, rg: &ReducedGains, l1: f64) -> Matrix {
    let k = rg.k();
    let nq = dec.a22.nrows();
    let id = Matrix::identity(nq, nq);
    let a = &dec.a22 + k * &dec.a12;
    let q = &rg.q_mat;
    q * &a + a.transpose() * q + q * (k * k.transpose() + &id) * q * l1 + id * (l1 + rg.epsilon)
}

fn check_reduced_dims(dec: &DecomposedSystem, rg: &ReducedGains) -> Result<()> {
    let nq = dec.n() - dec.q;
    if rg.q_mat.shape() != (nq, nq) {
        return Err(dim_err("Q", format!("{nq}x{nq}"), format!("{:?}", rg.q_mat.shape())));
    }
    if rg.p21.shape() != (nq, dec.q) {
        return Err(dim_err("P21", format!("{nq}x{}", dec.q), format!("{:?}", rg.p21.shape())));
    }
    Ok(())
}

pub fn check_assumption4prime(dec: &DecomposedSystem, rg: &ReducedGains, bounds: &LipschitzBounds, samples: &SampleSet) -> Result<VerdictReport> {
    check_reduced_dims(dec, rg)?;
    let k = rg.k();
    let mut conditions = Vec::with_capacity(3);

    let m = reduced_dissipation_matrix(dec, rg, bounds.l1);
    conditions.push(Verdict::at_most(REDUCED_DISSIPATION, linalg::max_sym_eigenvalue(&m), TOL_PSD));

    let lhs = (&dec.b2 + k * &dec.b1).transpose() * &rg.q_mat;
    let scale = 1.0_f64.max(linalg::max_abs(&lhs)).max(linalg::max_abs(&dec.c2));
    conditions.push(Verdict::at_most(REDUCED_COUPLING, linalg::max_abs(&(lhs - &dec.c2)), TOL_EQUALITY * scale));

    let mut row = Matrix::zeros(rg.p22.nrows(), dec.n());
    row.view_mut((0, 0), (rg.p21.nrows(), dec.q)).copy_from(&rg.p21);
    row.view_mut((0, dec.q), rg.p22.shape()).copy_from(&rg.p22);
    let mut worst = 0.0_f64;
    let mut scale = 1.0_f64;
    for (x, u) in &samples.points {
        let f2 = dec.system().f2(x, u);
        worst = worst.max(linalg::spectral_norm(&(&row * &f2)));
        scale = scale.max(linalg::spectral_norm(&f2) * linalg::spectral_norm(&row));
    }
    conditions.push(Verdict::at_most(REDUCED_ANNIHILATION, worst, TOL_FUNCTIONAL * scale));
    Ok(VerdictReport { conditions })
}

/// Relative residual `|F^T (F P^{-1} F^T)^{-1} F x - P x| / |P x|`.
pub fn lemma1_residual(p: &Matrix, f: &Matrix, x: &Vector) -> Result<f64> {
    let g = output_metric(p, f)?;
    let px = p * x;
    let lhs = f.transpose() * g * (f * x);
    let denom = px.norm();
    Ok(if denom == 0.0 { (lhs - px).norm() } else { (lhs - px).norm() / denom })
}

/// Projector identity on random vectors of `im(P^{-1} F^T)`; returns the
/// largest relative residual over `trials` draws.
pub fn lemma1_identity_check(p: &Matrix, f: &Matrix, trials: usize, seed: u64) -> Result<f64> {
    check_spd(p, "P")?;
    if f.ncols() != p.nrows() {
        return Err(dim_err("F columns", p.nrows(), f.ncols()));
    }
    let g = output_metric(p, f)?;
    let pinv = linalg::inverse(p, 1e-14, "P")?;
    let pinv_ft = &pinv * f.transpose();
    let proj = f.transpose() * g * f;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let z = Vector::from_fn(f.nrows(), |_, _| rng.random_range(-1.0..=1.0));
        let x = &pinv_ft * z;
        let px = p * &x;
        if px.norm() == 0.0 {
            continue;
        }
        worst = worst.max((&proj * &x - &px).norm() / px.norm());
    }
    Ok(worst)
}

/// Exponential decay certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialCertificate {
    pub alpha_max: f64,
    pub alpha_min: f64,
    /// `eps / (2 alpha_max)`
    pub rate: f64,
    /// `sqrt(V(t0) / alpha_min)`
    pub envelope_scale: f64,
}

impl ExponentialCertificate {
    /// Upper bound on `|e(t - t0)|`.
    pub fn envelope(&self, elapsed: f64) -> f64 {
        self.envelope_scale * (-self.rate * elapsed).exp()
    }
}

/// Requires a passing design report.
pub fn exponential_certificate(gains: &ObserverGains, report: &VerdictReport, v0: f64) -> Result<ExponentialCertificate> {
    if !report.all_pass() {
        let failed: Vec<&str> = report.conditions.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
        return Err(Error::CertificateRefused(format!("design conditions not satisfied: {failed:?}")));
    }
    if !(v0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("initial Lyapunov value must be >= 0, got {v0}")));
    }
    let eig = linalg::sym_eigenvalues(&gains.p);
    let alpha_min = eig[0];
    let alpha_max = *eig.last().unwrap();
    Ok(ExponentialCertificate {
        alpha_max,
        alpha_min,
        rate: gains.epsilon / (2.0 * alpha_max),
        envelope_scale: (v0 / alpha_min).sqrt(),
    })
}

/// How the `im(B) ⊆ im(P^{-1} F^T)` precondition of the finite-time bound
/// is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    /// Refuse the certificate when the condition fails.
    Enforce,
    /// Issue the certificate and record the failed verdict.
    Report,
}

pub const RANGE_CONDITION: &str = "input_range_condition";
pub const GAIN_MARGIN: &str = "gain_margin";

/// Full certificate: exponential envelope plus finite-time reach bound of
/// the output error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub gamma_used: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub rate: f64,
    pub envelope_scale: f64,
    /// `beta - L3 L4`
    pub sigma: f64,
    /// Largest eigenvalue of `(F P^{-1} F^T)^{-1}`.
    pub gamma_max: f64,
    /// `sigma / sqrt(2 gamma_max)`
    pub kappa: f64,
    pub a_minus_lf_norm: f64,
    pub output_gain_norm: f64,
    pub t1_log_argument: f64,
    pub t1: f64,
    /// `W(t1)` overapproximated from the envelope.
    pub w_t1_bound: f64,
    pub tf_bound_from_envelope: f64,
    pub w_t1_measured: Option<f64>,
    pub tf_bound_from_probe: Option<f64>,
    /// Probe value when supplied, envelope value otherwise.
    pub tf_bound: f64,
    pub verdicts: Vec<Verdict>,
}

impl Certificate {
    pub fn exponential(&self) -> ExponentialCertificate {
        ExponentialCertificate { alpha_max: self.alpha_max, alpha_min: self.alpha_min, rate: self.rate, envelope_scale: self.envelope_scale }
    }

    /// `t_f` bound for a given `W(t1)`.
    pub fn tf_for(&self, w_t1: f64) -> f64 {
        self.t1 + 2.0 * w_t1.max(0.0).sqrt() / self.kappa
    }
}

/// Finite-time certificate for the bounded-`h` observer.
///
/// `report` must be a passing design report (typically at `gamma = L1`),
/// `bounds.l4` must be set, and `beta > L3 L4`.
#[allow(clippy::too_many_arguments)]
pub fn finite_time_certificate(
    sys: &LureSystem,
    gains: &ObserverGains,
    bounds: &LipschitzBounds,
    report: &VerdictReport,
    gamma_used: f64,
    v0: f64,
    w_at_t1: Option<f64>,
    policy: RangePolicy,
) -> Result<Certificate> {
    gains.check_dims(sys)?;
    let l4 = bounds
        .l4
        .ok_or_else(|| Error::CertificateRefused("a bound L4 on |h| is required".into()))?;
    let sigma = gains.beta - bounds.l3 * l4;
    if !(sigma > 0.0) {
        return Err(Error::CertificateRefused(format!(
            "beta = {} must exceed L3 L4 = {} (sigma = {sigma})",
            gains.beta,
            bounds.l3 * l4
        )));
    }
    let f = sys.f();
    check_full_row_rank(f)?;
    let exp = exponential_certificate(gains, report, v0)?;

    let mut range_residual = 0.0_f64;
    for j in 0..sys.b().ncols() {
        let col = sys.b().column(j).into_owned();
        if col.norm() > 0.0 {
            range_residual = range_residual.max(lemma1_residual(&gains.p, f, &col)?);
        }
    }
    let range = Verdict::at_most(RANGE_CONDITION, range_residual, TOL_RANGE);
    if !range.pass && policy == RangePolicy::Enforce {
        return Err(Error::CertificateRefused(format!("im(B) is not contained in im(P^-1 F^T): residual {range_residual:e}")));
    }

    let g = output_metric(&gains.p, f)?;
    let gamma_max = linalg::max_sym_eigenvalue(&g);
    let kappa = sigma / (2.0 * gamma_max).sqrt();
    let a_minus_lf_norm = linalg::spectral_norm(&(sys.a() - &gains.l * f));
    let output_gain_norm = linalg::spectral_norm(&(&g * f));
    let t1_log_argument = 2.0 * output_gain_norm * (a_minus_lf_norm + bounds.l1) / sigma * exp.envelope_scale;
    let t1 = if t1_log_argument <= 1.0 { 0.0 } else { 2.0 * exp.alpha_max / gains.epsilon * t1_log_argument.ln() };

    let env_t1 = exp.envelope(t1);
    let w_t1_bound = 0.5 * gamma_max * linalg::spectral_norm(f).powi(2) * env_t1 * env_t1;
    let tf = |w: f64| t1 + 2.0 * w.max(0.0).sqrt() / kappa;
    let tf_bound_from_envelope = tf(w_t1_bound);
    let tf_bound_from_probe = w_at_t1.map(tf);

    Ok(Certificate {
        gamma_used,
        alpha_max: exp.alpha_max,
        alpha_min: exp.alpha_min,
        rate: exp.rate,
        envelope_scale: exp.envelope_scale,
        sigma,
        gamma_max,
        kappa,
        a_minus_lf_norm,
        output_gain_norm,
        t1_log_argument,
        t1,
        w_t1_bound,
        tf_bound_from_envelope,
        w_t1_measured: w_at_t1,
        tf_bound_from_probe,
        tf_bound: tf_bound_from_probe.unwrap_or(tf_bound_from_envelope),
        verdicts: vec![range, Verdict { name: GAIN_MARGIN.into(), residual: sigma, threshold: 0.0, pass: true }],
    })
}
