//! Fixed-step co-simulation of plant and observer inclusions, Lyapunov
//! monitoring and chattering metrics.
//!
//! Set-valued terms are realized by the min-norm selection at every stage
//! evaluation. Explicit Euler is the reference scheme; RK4 is available but
//! loses its order at switching surfaces.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::lure_model::{DecomposedSystem, LipschitzBounds, LureSystem, SampleBox, SampleSet};
use crate::observer_design::{self, HMap, ObserverGains, ReducedGains};
use crate::set_valued::SignMode;

/// States whose norm exceeds this abort the run.
pub const BLOW_UP_NORM: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Rk4,
}

/// State variables carried by the full-order integrator.
///
/// Both choices integrate the same coupled inclusion. `Error` carries
/// `(x, e)` with `e = x̂ - x` and evaluates the error dynamics directly,
/// which keeps `e` resolvable when the plant state itself diverges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    /// `(x, x̂)`
    Plant,
    /// `(x, e)`; the blow-up guard applies to `e` only.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t0: f64,
    pub t_end: f64,
    pub step: f64,
    pub scheme: Scheme,
    pub coordinates: Coordinates,
    pub sign_mode: SignMode,
    /// Dead-zone radius for branch detection, applied to the observer's
    /// sign term (exact mode) and to the set-valued operator.
    pub tol_zero: f64,
    /// Refuse runs whose gain preconditions fail.
    pub strict: bool,
    /// Seed for any sampled precondition checks.
    pub seed: u64,
}

impl SimConfig {
    pub fn new(t0: f64, t_end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
        }
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must satisfy t_end > t0, got [{t0}, {t_end}]")));
        }
        Ok(Self { t0, t_end, step, scheme: Scheme::Euler, coordinates: Coordinates::Plant, sign_mode: SignMode::Exact, tol_zero: 0.0, strict: true, seed: 0 })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_coordinates(mut self, coordinates: Coordinates) -> Self {
        self.coordinates = coordinates;
        self
    }

    pub fn with_sign_mode(mut self, mode: SignMode) -> Self {
        self.sign_mode = mode;
        self
    }

    pub fn with_tol_zero(mut self, tol: f64) -> Result<Self> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol_zero must be >= 0, got {tol}")));
        }
        self.tol_zero = tol;
        Ok(self)
    }

    pub fn with_strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of steps; the last grid point is `t0 + steps * step`.
    pub fn steps(&self) -> usize {
        (((self.t_end - self.t0) / self.step).round() as usize).max(1)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.step
    }
}

/// Advance `y` over the grid of `cfg`, calling `record(k, t_k, y_k)` at
/// every grid point including the initial one.
fn integrate<F, R>(cfg: &SimConfig, y0: Vector, rhs: F, record: R) -> Result<()>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
    R: FnMut(usize, f64, &Vector) -> Result<()>,
{
    integrate_guarded(cfg, y0, 0..usize::MAX, rhs, record)
}

/// As [`integrate`], with the norm guard restricted to the components in
/// `guarded` (non-finite values anywhere still abort).
fn integrate_guarded<F, R>(cfg: &SimConfig, y0: Vector, guarded: std::ops::Range<usize>, mut rhs: F, mut record: R) -> Result<()>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
    R: FnMut(usize, f64, &Vector) -> Result<()>,
{
    let lo = guarded.start.min(y0.len());
    let hi = guarded.end.min(y0.len());
    let h = cfg.step;
    let mut y = y0;
    record(0, cfg.t0, &y)?;
    for k in 0..cfg.steps() {
        let t = cfg.time(k);
        let next = match cfg.scheme {
            Scheme::Euler => {
                let d = rhs(t, &y)?;
                &y + d * h
            }
            Scheme::Rk4 => {
                let k1 = rhs(t, &y)?;
                let k2 = rhs(t + 0.5 * h, &(&y + &k1 * (0.5 * h)))?;
                let k3 = rhs(t + 0.5 * h, &(&y + &k2 * (0.5 * h)))?;
                let k4 = rhs(t + h, &(&y + &k3 * h))?;
                &y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
        };
        if next.iter().any(|v| !v.is_finite()) || next.rows(lo, hi - lo).norm() > BLOW_UP_NORM {
            return Err(Error::BlowUp { index: k + 1, last_valid: k, time: cfg.time(k + 1) });
        }
        y = next;
        record(k + 1, cfg.time(k + 1), &y)?;
    }
    Ok(())
}

/// Which correction term the full-order observer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverForm {
    /// `-beta P^{-1} F^T |h(x̂, u)| Sign(e_y)`
    ScaledByH,
    /// `-beta P^{-1} F^T Sign(e_y)`
    BoundedH,
}

/// Full-order sliding mode observer. It only ever sees the measured
/// output `y`, the known input `u` and time.
struct Observer<'a> {
    sys: &'a LureSystem,
    gains: &'a ObserverGains,
    form: ObserverForm,
    sign_mode: SignMode,
    tol_zero: f64,
    pinv_ft: Matrix,
    h: HMap,
}

struct ObserverEval {
    deriv: Vector,
    omega_hat: Vector,
    injection: Vector,
}

impl<'a> Observer<'a> {
    fn new(sys: &'a LureSystem, gains: &'a ObserverGains, form: ObserverForm, cfg: &SimConfig) -> Result<Self> {
        let pinv_ft = gains.p_inverse()? * sys.f().transpose();
        let h = observer_design::compute_h(sys, &gains.p)?;
        Ok(Self { sys, gains, form, sign_mode: cfg.sign_mode, tol_zero: cfg.tol_zero, pinv_ft, h })
    }

    fn eval(&self, t: f64, xhat: &Vector, y: &Vector, u: &Vector) -> Result<ObserverEval> {
        let sys = self.sys;
        let ey = sys.f() * xhat - y;
        let arg = sys.c() * xhat - &self.gains.k * &ey;
        let omega_hat = sys.select_omega(&arg)?;
        let injection = self.sign_mode.apply(t, &ey, self.tol_zero)?;
        let scale = match self.form {
            ObserverForm::ScaledByH => self.gains.beta * linalg::spectral_norm(&self.h.eval(sys, xhat, u)),
            ObserverForm::BoundedH => self.gains.beta,
        };
        let deriv = sys.a() * xhat + sys.b() * &omega_hat - &self.gains.l * &ey + sys.f1(xhat, u) - &self.pinv_ft * &injection * scale;
        Ok(ObserverEval { deriv, omega_hat, injection })
    }

    /// Time derivative of `e = x̂ - x`, assembled from increments so that no
    /// term of the size of `x` is ever cancelled numerically.
    fn eval_error(&self, t: f64, x: &Vector, e: &Vector, u: &Vector) -> Result<ObserverEval> {
        let sys = self.sys;
        let xhat = x + e;
        let ey = sys.f() * e;
        let cx = sys.c() * x;
        let omega = sys.select_omega(&cx)?;
        let omega_hat = sys.select_omega(&(&cx + (sys.c() * e - &self.gains.k * &ey)))?;
        let injection = self.sign_mode.apply(t, &ey, self.tol_zero)?;
        let scale = match self.form {
            ObserverForm::ScaledByH => self.gains.beta * linalg::spectral_norm(&self.h.eval(sys, &xhat, u)),
            ObserverForm::BoundedH => self.gains.beta,
        };
        let theta = sys.theta(t, x, u);
        let deriv = (sys.a() - &self.gains.l * sys.f()) * e + sys.b() * (&omega_hat - &omega) + (sys.f1(&xhat, u) - sys.f1(x, u))
            - sys.f2(x, u) * theta
            - &self.pinv_ft * &injection * scale;
        Ok(ObserverEval { deriv, omega_hat, injection })
    }
}

/// Plant and observer histories on a common grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub x_hat: Vec<Vector>,
    pub ey: Vec<Vector>,
    pub e_norm: Vec<f64>,
    pub ey_norm: Vec<f64>,
    /// `e^T P e`
    pub v: Vec<f64>,
    /// `1/2 e_y^T (F P^{-1} F^T)^{-1} e_y`
    pub w: Vec<f64>,
    pub omega: Vec<Vector>,
    pub omega_hat: Vec<Vector>,
    /// Realized `Sign(e_y)` before gain scaling.
    pub injection: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value of `W` at the grid point closest to `t`.
    pub fn w_at(&self, t: f64) -> Option<f64> {
        nearest_index(&self.times, t).map(|k| self.w[k])
    }

    /// CSV with `t, x_1..x_n, xhat_1..xhat_n, e_norm, ey_norm, V, W, omega,
    /// omega_hat`; vector-valued omegas get `_i` suffixes.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.x.first().map_or(0, |v| v.len());
        let m = self.omega.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("xhat_{i}")));
        header.extend(["e_norm", "ey_norm", "V", "W"].map(String::from));
        header.extend(indexed("omega", m));
        header.extend(indexed("omega_hat", m));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k]];
            row.extend(self.x[k].iter());
            row.extend(self.x_hat[k].iter());
            row.extend([self.e_norm[k], self.ey_norm[k], self.v[k], self.w[k]]);
            row.extend(self.omega[k].iter());
            row.extend(self.omega_hat[k].iter());
            write_row(&mut out, &row)?;
        }
        Ok(())
    }
}

fn indexed(name: &str, m: usize) -> Vec<String> {
    if m == 1 {
        vec![name.to_string()]
    } else {
        (1..=m).map(|i| format!("{name}_{i}")).collect()
    }
}

/// 17 significant digits.
fn write_row<W: Write>(out: &mut W, row: &[f64]) -> Result<()> {
    let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
    writeln!(out, "{}", cells.join(","))?;
    Ok(())
}

fn nearest_index(times: &[f64], t: f64) -> Option<usize> {
    times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(k, _)| k)
}

fn with_dead_zone(sys: &LureSystem, tol: f64) -> Result<LureSystem> {
    if tol > sys.operator().dead_zone() {
        sys.clone().with_operator(sys.operator().clone().with_dead_zone(tol)?)
    } else {
        Ok(sys.clone())
    }
}

fn run_full(sys: &LureSystem, gains: &ObserverGains, form: ObserverForm, cfg: &SimConfig, x0: &Vector, xhat0: &Vector) -> Result<Trajectory> {
    gains.check_dims(sys)?;
    let n = sys.dims().n;
    if x0.len() != n {
        return Err(dim_err("x0", n, x0.len()));
    }
    if xhat0.len() != n {
        return Err(dim_err("xhat0", n, xhat0.len()));
    }
    let sys = with_dead_zone(sys, cfg.tol_zero)?;
    let obs = Observer::new(&sys, gains, form, cfg)?;
    let g = observer_design::output_metric(&gains.p, sys.f())?;

    let error_coords = cfg.coordinates == Coordinates::Error;
    let mut y0 = Vector::zeros(2 * n);
    y0.rows_mut(0, n).copy_from(x0);
    if error_coords {
        y0.rows_mut(n, n).copy_from(&(xhat0 - x0));
    } else {
        y0.rows_mut(n, n).copy_from(xhat0);
    }

    let cap = cfg.steps() + 1;
    let mut tr = Trajectory {
        times: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
        x_hat: Vec::with_capacity(cap),
        ey: Vec::with_capacity(cap),
        e_norm: Vec::with_capacity(cap),
        ey_norm: Vec::with_capacity(cap),
        v: Vec::with_capacity(cap),
        w: Vec::with_capacity(cap),
        omega: Vec::with_capacity(cap),
        omega_hat: Vec::with_capacity(cap),
        injection: Vec::with_capacity(cap),
    };

    let eval = |t: f64, y: &Vector| -> Result<(Vector, Vector, Vector, ObserverEval)> {
        let x = y.rows(0, n).into_owned();
        let u = sys.input(t);
        if error_coords {
            let e = y.rows(n, n).into_owned();
            let ob = obs.eval_error(t, &x, &e, &u)?;
            Ok((x, e, u, ob))
        } else {
            let xhat = y.rows(n, n).into_owned();
            let meas = sys.f() * &x;
            let ob = obs.eval(t, &xhat, &meas, &u)?;
            let e = &xhat - &x;
            Ok((x, e, u, ob))
        }
    };
    let rhs = |t: f64, y: &Vector| -> Result<Vector> {
        let (x, _, u, ob) = eval(t, y)?;
        let dx = sys.plant_rhs(t, &x, &u)?;
        let mut d = Vector::zeros(2 * n);
        d.rows_mut(0, n).copy_from(&dx);
        d.rows_mut(n, n).copy_from(&ob.deriv);
        Ok(d)
    };
    let record = |_k: usize, t: f64, y: &Vector| -> Result<()> {
        let (x, e, _, ob) = eval(t, y)?;
        let ey = sys.f() * &e;
        tr.times.push(t);
        tr.e_norm.push(e.norm());
        tr.ey_norm.push(ey.norm());
        tr.v.push(e.dot(&(&gains.p * &e)));
        tr.w.push(0.5 * ey.dot(&(&g * &ey)));
        tr.omega.push(sys.omega(&x)?);
        tr.omega_hat.push(ob.omega_hat);
        tr.injection.push(ob.injection);
        tr.ey.push(ey);
        tr.x_hat.push(&x + &e);
        tr.x.push(x);
        Ok(())
    };
    let guarded = if error_coords { n..2 * n } else { 0..2 * n };
    integrate_guarded(cfg, y0, guarded, rhs, record)?;
    Ok(tr)
}

/// Plant with the `|h|`-scaled observer. Requires `beta >= L3`.
pub fn simulate_full(sys: &LureSystem, gains: &ObserverGains, bounds: &LipschitzBounds, cfg: &SimConfig, x0: &Vector, xhat0: &Vector) -> Result<Trajectory> {
    if gains.beta < bounds.l3 {
        let msg = format!("beta = {} must be >= L3 = {}", gains.beta, bounds.l3);
        if cfg.strict {
            return Err(Error::Precondition(msg));
        }
        log::warn!("{msg}; simulating anyway");
    }
    run_full(sys, gains, ObserverForm::ScaledByH, cfg, x0, xhat0)
}

/// Plant with the bounded-`h` observer. Requires `beta > L3 L4`.
pub fn simulate_bounded_h(sys: &LureSystem, gains: &ObserverGains, bounds: &LipschitzBounds, cfg: &SimConfig, x0: &Vector, xhat0: &Vector) -> Result<Trajectory> {
    let l4 = bounds
        .l4
        .ok_or_else(|| Error::Precondition("bounded-h observer needs a bound L4 on |h|".into()))?;
    if !(gains.beta > bounds.l3 * l4) {
        let msg = format!("beta = {} must exceed L3 L4 = {}", gains.beta, bounds.l3 * l4);
        if cfg.strict {
            return Err(Error::Precondition(msg));
        }
        log::warn!("{msg}; simulating anyway");
    }
    run_full(sys, gains, ObserverForm::BoundedH, cfg, x0, xhat0)
}

/// Reduced-order run: true plant, transformed state `z = x2 + K x1` and
/// its estimate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub z: Vec<Vector>,
    pub z_hat: Vec<Vector>,
    /// `|ẑ - z|`
    pub ez_norm: Vec<f64>,
    /// `|x̂2 - x2|`
    pub x2_err_norm: Vec<f64>,
    /// `e_z^T Q e_z`
    pub wq: Vec<f64>,
    pub omega: Vec<Vector>,
    pub omega_hat: Vec<Vector>,
}

impl ReducedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with `t, x_1..x_n, z_1.., zhat_1.., ez_norm, x2_err_norm, Wq,
    /// omega, omega_hat`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.x.first().map_or(0, |v| v.len());
        let nz = self.z.first().map_or(0, |v| v.len());
        let m = self.omega.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=nz).map(|i| format!("z_{i}")));
        header.extend((1..=nz).map(|i| format!("zhat_{i}")));
        header.extend(["ez_norm", "x2_err_norm", "Wq"].map(String::from));
        header.extend(indexed("omega", m));
        header.extend(indexed("omega_hat", m));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k]];
            row.extend(self.x[k].iter());
            row.extend(self.z[k].iter());
            row.extend(self.z_hat[k].iter());
            row.extend([self.ez_norm[k], self.x2_err_norm[k], self.wq[k]]);
            row.extend(self.omega[k].iter());
            row.extend(self.omega_hat[k].iter());
            write_row(&mut out, &row)?;
        }
        Ok(())
    }
}

/// Reduced-order observer driven by the measured block `x1`. In strict
/// mode the reduced design conditions are checked first on a default
/// sample set seeded from `cfg.seed`. With [`Coordinates::Error`] the state
/// is `(x, e_z)` and `z_hat = x2 + K x1 + e_z` is only formed for output.
pub fn simulate_reduced(dec: &DecomposedSystem, rg: &ReducedGains, bounds: &LipschitzBounds, cfg: &SimConfig, x0: &Vector, zhat0: &Vector) -> Result<ReducedTrajectory> {
    let sys = with_dead_zone(dec.system(), cfg.tol_zero)?;
    let n = sys.dims().n;
    let q = dec.q;
    let nz = n - q;
    if x0.len() != n {
        return Err(dim_err("x0", n, x0.len()));
    }
    if zhat0.len() != nz {
        return Err(dim_err("zhat0", nz, zhat0.len()));
    }
    if cfg.strict {
        let samples = SampleSet::for_system(&sys, &SampleBox::default(), cfg.seed)?;
        let report = observer_design::check_assumption4prime(dec, rg, bounds, &samples)?;
        if !report.all_pass() {
            let failed: Vec<&str> = report.conditions.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
            return Err(Error::Precondition(format!("reduced design conditions fail: {failed:?}")));
        }
    }
    let k = rg.k().clone();
    let fq_inv = linalg::inverse(&dec.fq, 1e-12, "Fq")?;
    let a_z = &dec.a22 + &k * &dec.a12;
    let b_z = &dec.b2 + &k * &dec.b1;
    let drive = (&dec.a21 + &k * &dec.a11) - &a_z * &k;
    let c_x1 = &dec.c1 - &dec.c2 * &k;
    // (K  I) selects K f11 + f12.
    let mut k_i = Matrix::zeros(nz, n);
    k_i.view_mut((0, 0), (nz, q)).copy_from(&k);
    k_i.view_mut((0, q), (nz, nz)).fill_with_identity();

    let observer = |t: f64, zhat: &Vector, meas: &Vector| -> Result<(Vector, Vector)> {
        let x1 = &fq_inv * meas;
        let u = sys.input(t);
        let omega_hat = sys.select_omega(&(&dec.c2 * zhat + &c_x1 * &x1))?;
        let xhat = dec.join(&x1, &(zhat - &k * &x1));
        let d = &a_z * zhat + &b_z * &omega_hat + &drive * &x1 + &k_i * sys.f1(&xhat, &u);
        Ok((d, omega_hat))
    };

    // Error form: e_z' = A_z e_z + B_z (ω̃ - ω) + (K I)(f1(x̂) - f1(x) - f2(x) θ).
    let error_rhs = |t: f64, x: &Vector, ez: &Vector| -> Result<(Vector, Vector)> {
        let u = sys.input(t);
        let (x1, x2) = dec.split(x);
        let cx = sys.c() * x;
        let omega = sys.select_omega(&cx)?;
        let omega_hat = sys.select_omega(&(&cx + &dec.c2 * ez))?;
        let xhat = dec.join(&x1, &(&x2 + ez));
        let df1 = sys.f1(&xhat, &u) - sys.f1(x, &u) - sys.f2(x, &u) * sys.theta(t, x, &u);
        let d = &a_z * ez + &b_z * (&omega_hat - &omega) + &k_i * df1;
        Ok((d, omega_hat))
    };
    let error_coords = cfg.coordinates == Coordinates::Error;

    let mut y0 = Vector::zeros(n + nz);
    y0.rows_mut(0, n).copy_from(x0);
    if error_coords {
        let (x1, x2) = dec.split(x0);
        y0.rows_mut(n, nz).copy_from(&(zhat0 - (&x2 + &k * &x1)));
    } else {
        y0.rows_mut(n, nz).copy_from(zhat0);
    }
    let mut tr = ReducedTrajectory::default();
    let rhs = |t: f64, y: &Vector| -> Result<Vector> {
        let x = y.rows(0, n).into_owned();
        let w = y.rows(n, nz).into_owned();
        let u = sys.input(t);
        let dx = sys.plant_rhs(t, &x, &u)?;
        let (dw, _) = if error_coords { error_rhs(t, &x, &w)? } else { observer(t, &w, &(sys.f() * &x))? };
        let mut d = Vector::zeros(n + nz);
        d.rows_mut(0, n).copy_from(&dx);
        d.rows_mut(n, nz).copy_from(&dw);
        Ok(d)
    };
    let record = |_k: usize, t: f64, y: &Vector| -> Result<()> {
        let x = y.rows(0, n).into_owned();
        let w = y.rows(n, nz).into_owned();
        let (x1, x2) = dec.split(&x);
        let z = &x2 + &k * &x1;
        let (ez, zhat, omega_hat) = if error_coords {
            let (_, omega_hat) = error_rhs(t, &x, &w)?;
            (w.clone(), &z + &w, omega_hat)
        } else {
            let (_, omega_hat) = observer(t, &w, &(sys.f() * &x))?;
            (&w - &z, w, omega_hat)
        };
        tr.times.push(t);
        tr.ez_norm.push(ez.norm());
        tr.x2_err_norm.push(if error_coords { ez.norm() } else { (&zhat - &k * &x1 - &x2).norm() });
        tr.wq.push(ez.dot(&(&rg.q_mat * &ez)));
        tr.omega.push(sys.omega(&x)?);
        tr.omega_hat.push(omega_hat);
        tr.z.push(z);
        tr.z_hat.push(zhat);
        tr.x.push(x);
        Ok(())
    };
    let guarded = if error_coords { n..n + nz } else { 0..n + nz };
    integrate_guarded(cfg, y0, guarded, rhs, record)?;
    Ok(tr)
}

/// Run of `x' = drift(t, x) - gain * S(t, x)` with `S` the configured sign
/// realization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub injection: Vec<Vector>,
}

impl SignTrajectory {
    /// CSV with `t, x_1..x_n, s_1..s_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.x.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("s_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k]];
            row.extend(self.x[k].iter());
            row.extend(self.injection[k].iter());
            write_row(&mut out, &row)?;
        }
        Ok(())
    }
}

pub fn simulate_sign_system<D>(drift: D, gain: f64, cfg: &SimConfig, x0: &Vector) -> Result<SignTrajectory>
where
    D: Fn(f64, &Vector) -> Vector,
{
    let mode = cfg.sign_mode;
    let tol = cfg.tol_zero;
    let mut tr = SignTrajectory::default();
    let rhs = |t: f64, x: &Vector| -> Result<Vector> { Ok(drift(t, x) - mode.apply(t, x, tol)? * gain) };
    let record = |_k: usize, t: f64, x: &Vector| -> Result<()> {
        tr.times.push(t);
        tr.injection.push(mode.apply(t, x, tol)?);
        tr.x.push(x.clone());
        Ok(())
    };
    integrate(cfg, x0.clone(), rhs, record)?;
    Ok(tr)
}

/// Scalar series that can be extracted from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    /// Plant state component.
    State(usize),
    /// Observer state component (`x̂` or `ẑ`).
    Estimate(usize),
    /// Output error component.
    OutputError(usize),
    /// `|e|` (or `|e_z|`).
    ErrorNorm,
    /// `|e_y|` (or `|x̂2 - x2|`).
    OutputErrorNorm,
    /// `V` (or `W_Q`).
    Lyapunov,
    /// `W`
    OutputLyapunov,
    Omega(usize),
    OmegaHat(usize),
    /// Realized sign component.
    Injection(usize),
}

pub trait TimeSeries {
    fn times(&self) -> &[f64];
    /// `None` when the trajectory does not carry the series.
    fn series(&self, sel: Series) -> Option<Vec<f64>>;
}

fn component(v: &[Vector], i: usize) -> Option<Vec<f64>> {
    if v.first().is_some_and(|x| i < x.len()) {
        Some(v.iter().map(|x| x[i]).collect())
    } else {
        None
    }
}

impl TimeSeries for Trajectory {
    fn times(&self) -> &[f64] {
        &self.times
    }

    fn series(&self, sel: Series) -> Option<Vec<f64>> {
        match sel {
            Series::State(i) => component(&self.x, i),
            Series::Estimate(i) => component(&self.x_hat, i),
            Series::OutputError(i) => component(&self.ey, i),
            Series::ErrorNorm => Some(self.e_norm.clone()),
            Series::OutputErrorNorm => Some(self.ey_norm.clone()),
            Series::Lyapunov => Some(self.v.clone()),
            Series::OutputLyapunov => Some(self.w.clone()),
            Series::Omega(i) => component(&self.omega, i),
            Series::OmegaHat(i) => component(&self.omega_hat, i),
            Series::Injection(i) => component(&self.injection, i),
        }
    }
}

impl TimeSeries for ReducedTrajectory {
    fn times(&self) -> &[f64] {
        &self.times
    }

    fn series(&self, sel: Series) -> Option<Vec<f64>> {
        match sel {
            Series::State(i) => component(&self.x, i),
            Series::Estimate(i) => component(&self.z_hat, i),
            Series::ErrorNorm => Some(self.ez_norm.clone()),
            Series::OutputErrorNorm => Some(self.x2_err_norm.clone()),
            Series::Lyapunov => Some(self.wq.clone()),
            Series::Omega(i) => component(&self.omega, i),
            Series::OmegaHat(i) => component(&self.omega_hat, i),
            _ => None,
        }
    }
}

impl TimeSeries for SignTrajectory {
    fn times(&self) -> &[f64] {
        &self.times
    }

    fn series(&self, sel: Series) -> Option<Vec<f64>> {
        match sel {
            Series::State(i) => component(&self.x, i),
            Series::Injection(i) => component(&self.injection, i),
            Series::ErrorNorm => Some(self.x.iter().map(|v| v.norm()).collect()),
            _ => None,
        }
    }
}

fn select<T: TimeSeries + ?Sized>(traj: &T, sel: Series) -> Result<Vec<f64>> {
    traj.series(sel)
        .ok_or_else(|| Error::InvalidParameter(format!("trajectory has no series {sel:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatteringIndex {
    pub window_start: f64,
    pub window_end: f64,
    pub switch_count: usize,
    pub switch_count_per_unit_time: f64,
    pub mean_amplitude: f64,
    pub max_amplitude: f64,
}

/// Sign changes and amplitude of a scalar series over the trailing
/// `window_fraction` of the horizon. Exact zeros do not count as a sign.
pub fn chattering_index<T: TimeSeries + ?Sized>(traj: &T, sel: Series, window_fraction: f64) -> Result<ChatteringIndex> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("window fraction must be in (0, 1], got {window_fraction}")));
    }
    let times = traj.times();
    let (Some(&t_first), Some(&t_last)) = (times.first(), times.last()) else {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    };
    let signal = select(traj, sel)?;
    let start = t_last - window_fraction * (t_last - t_first);
    let idx: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= start - 1e-12 * t_last.abs().max(1.0)).collect();
    if idx.len() < 2 {
        return Err(Error::InvalidParameter("chattering window contains fewer than two samples".into()));
    }
    let window_start = times[idx[0]];
    let duration = t_last - window_start;
    let mut switches = 0;
    let mut last_sign = 0.0;
    let mut sum = 0.0;
    let mut max_amp = 0.0_f64;
    for &k in &idx {
        let s = signal[k];
        sum += s.abs();
        max_amp = max_amp.max(s.abs());
        if s != 0.0 {
            let sg = s.signum();
            if last_sign != 0.0 && sg != last_sign {
                switches += 1;
            }
            last_sign = sg;
        }
    }
    Ok(ChatteringIndex {
        window_start,
        window_end: t_last,
        switch_count: switches,
        switch_count_per_unit_time: if duration > 0.0 { switches as f64 / duration } else { 0.0 },
        mean_amplitude: sum / idx.len() as f64,
        max_amplitude: max_amp,
    })
}

/// First grid time after which the series stays `<= tol` through the end.
pub fn convergence_time<T: TimeSeries + ?Sized>(traj: &T, sel: Series, tol: f64) -> Result<Option<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be > 0, got {tol}")));
    }
    let s = select(traj, sel)?;
    let times = traj.times();
    let mut first: Option<usize> = None;
    for (k, v) in s.iter().enumerate() {
        if v.abs() <= tol {
            first.get_or_insert(k);
        } else {
            first = None;
        }
    }
    Ok(first.map(|k| times[k]))
}

/// First grid time at which the series is `<= tol`.
pub fn first_crossing<T: TimeSeries + ?Sized>(traj: &T, sel: Series, tol: f64) -> Result<Option<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be > 0, got {tol}")));
    }
    let s = select(traj, sel)?;
    Ok(s.iter().position(|v| v.abs() <= tol).map(|k| traj.times()[k]))
}
