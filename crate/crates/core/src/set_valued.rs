//! Monotone set-valued operators, their selections, and continuous
//! approximations of the multivalued `Sign` map.
//!
//! Branch points (where a map is multivalued) are detected by comparing
//! the switching argument against a dead-zone radius, `0.0` by default,
//! which reduces to an exact zero test.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::Vector;

/// Value of a set-valued map at a point.
#[derive(Debug, Clone, PartialEq)]
pub enum SetValue {
    Singleton(Vector),
    /// Axis-aligned box `[lo, hi]`; a closed interval in one dimension.
    Interval { lo: Vector, hi: Vector },
    /// Closed Euclidean ball.
    Ball { center: Vector, radius: f64 },
}

impl SetValue {
    pub fn is_singleton(&self) -> bool {
        matches!(self, SetValue::Singleton(_))
    }

    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        match self {
            SetValue::Singleton(s) => (s - v).norm() <= tol,
            SetValue::Interval { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            SetValue::Ball { center, radius } => (v - center).norm() <= radius + tol,
        }
    }

    /// Element of smallest Euclidean norm (projection of the origin).
    pub fn min_norm_element(&self) -> Vector {
        match self {
            SetValue::Singleton(s) => s.clone(),
            SetValue::Interval { lo, hi } => {
                Vector::from_iterator(lo.len(), lo.iter().zip(hi.iter()).map(|(l, h)| 0.0_f64.clamp(*l, *h)))
            }
            SetValue::Ball { center, radius } => {
                let c = center.norm();
                if c <= *radius {
                    Vector::zeros(center.len())
                } else {
                    center * (1.0 - radius / c)
                }
            }
        }
    }

    /// Draw an arbitrary element, used to exercise non-canonical selections.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vector {
        match self {
            SetValue::Singleton(s) => s.clone(),
            SetValue::Interval { lo, hi } => Vector::from_iterator(
                lo.len(),
                lo.iter().zip(hi.iter()).map(|(l, h)| if l == h { *l } else { rng.random_range(*l..=*h) }),
            ),
            SetValue::Ball { center, radius } => {
                let dir = random_unit(center.len(), rng);
                let r = radius * rng.random::<f64>().powf(1.0 / center.len() as f64);
                center + dir * r
            }
        }
    }
}

/// Set value of a custom map at its branch point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZeroSet {
    /// Componentwise `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
    Ball { radius: f64 },
}

pub type Branch = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

#[derive(Clone)]
pub enum MapKind {
    /// Multivalued sign in `R^m`: `x/|x|` off the origin, the unit ball at it.
    Sign,
    /// Componentwise relay `sign(s) (a|s| + b)`, `[-b, b]` at `s = 0`.
    Relay { slope: f64, offset: f64 },
    /// User-supplied single-valued branch plus the set value at the origin.
    Custom { branch: Branch, zero_set: ZeroSet },
}

impl fmt::Debug for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Sign => write!(f, "Sign"),
            MapKind::Relay { slope, offset } => write!(f, "Relay {{ slope: {slope}, offset: {offset} }}"),
            MapKind::Custom { zero_set, .. } => write!(f, "Custom {{ zero_set: {zero_set:?} }}"),
        }
    }
}

/// A monotone set-valued operator `R^m ⇉ R^m`.
#[derive(Debug, Clone)]
pub struct SetValuedMap {
    kind: MapKind,
    dimension: usize,
    dead_zone: f64,
}

impl SetValuedMap {
    pub fn sign(dimension: usize) -> Result<Self> {
        Self::new(MapKind::Sign, dimension)
    }

    pub fn relay(slope: f64, offset: f64) -> Result<Self> {
        Self::relay_n(slope, offset, 1)
    }

    pub fn relay_n(slope: f64, offset: f64, dimension: usize) -> Result<Self> {
        if !(slope >= 0.0 && slope.is_finite()) || !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "relay needs slope >= 0 and offset >= 0, got ({slope}, {offset})"
            )));
        }
        Self::new(MapKind::Relay { slope, offset }, dimension)
    }

    /// Custom operator. Monotonicity of `branch` is the caller's
    /// responsibility; see [`monotonicity_gap`].
    pub fn custom(branch: Branch, zero_set: ZeroSet, dimension: usize) -> Result<Self> {
        match zero_set {
            ZeroSet::Interval { lo, hi } if lo > hi => {
                return Err(Error::InvalidParameter(format!("empty zero-set interval [{lo}, {hi}]")))
            }
            ZeroSet::Ball { radius } if radius < 0.0 => {
                return Err(Error::InvalidParameter(format!("negative zero-set radius {radius}")))
            }
            _ => {}
        }
        Self::new(MapKind::Custom { branch, zero_set }, dimension)
    }

    fn new(kind: MapKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("set-valued map dimension must be positive".into()));
        }
        Ok(Self { kind, dimension, dead_zone: 0.0 })
    }

    /// Treat arguments within `radius` of the branch surface as on it.
    /// Meant for rounding-level radii: a relay widened this way is
    /// monotone only up to a gap of order `offset * radius`.
    pub fn with_dead_zone(mut self, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidParameter(format!("dead zone must be >= 0, got {radius}")));
        }
        self.dead_zone = radius;
        Ok(self)
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn dead_zone(&self) -> f64 {
        self.dead_zone
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dimension {
            return Err(dim_err("set-valued map argument", self.dimension, x.len()));
        }
        Ok(())
    }

    /// Full set value at `x`.
    pub fn eval(&self, x: &Vector) -> Result<SetValue> {
        self.check_dim(x)?;
        let m = self.dimension;
        Ok(match &self.kind {
            MapKind::Sign => {
                let n = x.norm();
                if n <= self.dead_zone {
                    SetValue::Ball { center: Vector::zeros(m), radius: 1.0 }
                } else {
                    SetValue::Singleton(x / n)
                }
            }
            MapKind::Relay { slope, offset } => {
                let mut branch = false;
                let mut lo = Vector::zeros(m);
                let mut hi = Vector::zeros(m);
                for (i, s) in x.iter().enumerate() {
                    if s.abs() <= self.dead_zone {
                        branch = true;
                        lo[i] = -offset;
                        hi[i] = *offset;
                    } else {
                        let v = s.signum() * (slope * s.abs() + offset);
                        lo[i] = v;
                        hi[i] = v;
                    }
                }
                if branch {
                    SetValue::Interval { lo, hi }
                } else {
                    SetValue::Singleton(lo)
                }
            }
            MapKind::Custom { branch, zero_set } => {
                if x.norm() <= self.dead_zone {
                    match *zero_set {
                        ZeroSet::Interval { lo, hi } => SetValue::Interval {
                            lo: Vector::from_element(m, lo),
                            hi: Vector::from_element(m, hi),
                        },
                        ZeroSet::Ball { radius } => SetValue::Ball { center: Vector::zeros(m), radius },
                    }
                } else {
                    let v = branch(x);
                    if v.len() != m {
                        return Err(dim_err("custom branch output", m, v.len()));
                    }
                    SetValue::Singleton(v)
                }
            }
        })
    }

    /// Canonical selection used by every integrator.
    pub fn min_norm_selection(&self, x: &Vector) -> Result<Vector> {
        Ok(self.eval(x)?.min_norm_element())
    }
}

/// Smallest sampled value of `<x* - y*, x - y>` over `pairs` random pairs,
/// drawn from `[-scale, scale]^m`. Every tenth pair pins one point at the
/// origin and uses a random (not min-norm) selection there.
pub fn monotonicity_gap(map: &SetValuedMap, pairs: usize, scale: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = map.dimension();
    let mut worst = f64::INFINITY;
    for k in 0..pairs {
        let x = if k % 10 == 0 {
            Vector::zeros(m)
        } else {
            Vector::from_fn(m, |_, _| rng.random_range(-scale..=scale))
        };
        let y = Vector::from_fn(m, |_, _| rng.random_range(-scale..=scale));
        let xs = if k % 20 == 0 { map.eval(&x)?.sample(&mut rng) } else { map.min_norm_selection(&x)? };
        let ys = map.min_norm_selection(&y)?;
        worst = worst.min((xs - ys).dot(&(x - y)));
    }
    Ok(worst)
}

fn random_unit<R: Rng>(m: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Min-norm selection of `Sign`: `x/|x|`, or `0` at the origin.
pub fn sign_exact(x: &Vector) -> Vector {
    let n = x.norm();
    if n == 0.0 {
        Vector::zeros(x.len())
    } else {
        x / n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidVariant {
    /// `x / (|x| + eps)`
    Abs,
    /// `x / sqrt(|x|^2 + eps)`
    Sqrt,
}

impl FromStr for SigmoidVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(Self::Abs),
            "sqrt" => Ok(Self::Sqrt),
            other => Err(Error::InvalidParameter(format!("unknown sigmoid variant '{other}'"))),
        }
    }
}

impl fmt::Display for SigmoidVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Abs => "abs",
            Self::Sqrt => "sqrt",
        })
    }
}

pub fn sign_sigmoid(x: &Vector, eps: f64, variant: SigmoidVariant) -> Result<Vector> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("sigmoid eps must be > 0, got {eps}")));
    }
    let n = x.norm();
    let denom = match variant {
        SigmoidVariant::Abs => n + eps,
        SigmoidVariant::Sqrt => (n * n + eps).sqrt(),
    };
    Ok(x / denom)
}

/// Parameters of the time-guided sign approximation with exponential guide
/// `delta(t) = exp(-k1 t - k2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidedSignParams {
    pub k1: f64,
    pub k2: f64,
    pub m: f64,
    pub n: f64,
}

impl GuidedSignParams {
    /// `k2` may be negative, which lets `delta(0)` exceed one.
    pub fn new(k1: f64, k2: f64, m: f64, n: f64) -> Result<Self> {
        if !(k1 > 0.0) || !k2.is_finite() || !(m > 0.0) || !(n > 0.0) || !k1.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "guided sign needs k1 > 0, finite k2, M > 0, N > 0; got ({k1}, {k2}, {m}, {n})"
            )));
        }
        Ok(Self { k1, k2, m, n })
    }

    pub fn delta(&self, t: f64) -> f64 {
        (-self.k1 * t - self.k2).exp()
    }
}

/// Time-guided sign approximation with the exponential guide.
pub fn sign_delta(t: f64, x: &Vector, p: &GuidedSignParams) -> Result<Vector> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    Ok(sign_delta_with_radius(x, p.delta(t), p.m, p.n))
}

/// Same shape with an arbitrary decreasing guide `delta: t -> (0, inf)`.
pub fn sign_delta_with_guide(t: f64, x: &Vector, delta: impl Fn(f64) -> f64, m: f64, n: f64) -> Result<Vector> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    Ok(sign_delta_with_radius(x, delta(t), m, n))
}

fn sign_delta_with_radius(x: &Vector, delta: f64, m: f64, n: f64) -> Vector {
    let r = x.norm();
    if r == 0.0 {
        return Vector::zeros(x.len());
    }
    let unit = x / r;
    if r > delta {
        unit
    } else {
        let factor = 1.0 - (1.0 - r / delta) / (1.0 + m * r).powf(n);
        unit * factor
    }
}

/// How the `Sign` of an output error is realized inside an integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SignMode {
    Exact,
    Sigmoid { eps: f64, variant: SigmoidVariant },
    Guided(GuidedSignParams),
}

impl SignMode {
    /// Realized sign at `(t, x)`. In exact mode arguments with norm at most
    /// `dead_zone` select `0`.
    pub fn apply(&self, t: f64, x: &Vector, dead_zone: f64) -> Result<Vector> {
        match self {
            SignMode::Exact => {
                if x.norm() <= dead_zone {
                    Ok(Vector::zeros(x.len()))
                } else {
                    Ok(sign_exact(x))
                }
            }
            SignMode::Sigmoid { eps, variant } => sign_sigmoid(x, *eps, *variant),
            SignMode::Guided(p) => sign_delta(t, x, p),
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignMode::Exact => write!(f, "exact"),
            SignMode::Sigmoid { eps, variant } => write!(f, "sigmoid:{eps:e}:{variant}"),
            SignMode::Guided(p) => write!(f, "guided:{}:{}:{}:{}", p.k1, p.k2, p.m, p.n),
        }
    }
}

impl FromStr for SignMode {
    type Err = Error;

    /// `exact`, `sigmoid:EPS:VARIANT` or `guided:K1:K2:M:N`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number '{v}' in sign mode '{s}'")))
        };
        match parts.as_slice() {
            ["exact"] => Ok(SignMode::Exact),
            ["sigmoid", eps, variant] => {
                let eps = num(eps)?;
                if !(eps > 0.0) {
                    return Err(Error::InvalidParameter(format!("sigmoid eps must be > 0, got {eps}")));
                }
                Ok(SignMode::Sigmoid { eps, variant: variant.parse()? })
            }
            ["guided", k1, k2, m, n] => Ok(SignMode::Guided(GuidedSignParams::new(num(k1)?, num(k2)?, num(m)?, num(n)?)?)),
            _ => Err(Error::InvalidParameter(format!(
                "unrecognized sign mode '{s}' (expected exact | sigmoid:EPS:VARIANT | guided:K1:K2:M:N)"
            ))),
        }
    }
}
