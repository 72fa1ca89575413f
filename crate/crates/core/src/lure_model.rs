//! Set-valued Lur'e plant
//!
//! ```text
//! x' = A x + B w + f1(x, u) + f2(x, u) theta(t, x, u)
//! w  ∈ -F(C x)
//! y  = F x
//! ```
//!
//! and its block decomposition for reduced-order observation.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::set_valued::SetValuedMap;

/// `f1(x, u)`, an n-vector.
pub type VectorField = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
/// `f2(x, u)`, an n×l matrix.
pub type MatrixField = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;
/// Unknown signal `theta(t, x, u)`, an l-vector. Only the plant reads it.
pub type Disturbance = Arc<dyn Fn(f64, &Vector, &Vector) -> Vector + Send + Sync>;
/// Known control input `u(t)`, an r-vector.
pub type InputSignal = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// state
    pub n: usize,
    /// nonlinearity channel
    pub m: usize,
    /// measured output
    pub p: usize,
    /// control input
    pub r: usize,
    /// unknown signal
    pub l: usize,
}

/// Callables of the plant.
#[derive(Clone)]
pub struct Nonlinearities {
    pub f1: VectorField,
    pub f2: MatrixField,
    pub theta: Disturbance,
    pub input: InputSignal,
}

impl Nonlinearities {
    /// `f1 = 0`, `f2 = 0`, `theta = 0`, `u = 0`.
    pub fn zero(n: usize, r: usize, l: usize) -> Self {
        Self {
            f1: Arc::new(move |_, _| Vector::zeros(n)),
            f2: Arc::new(move |_, _| Matrix::zeros(n, l)),
            theta: Arc::new(move |_, _, _| Vector::zeros(l)),
            input: Arc::new(move |_| Vector::zeros(r)),
        }
    }
}

#[derive(Clone)]
pub struct LureSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    f: Matrix,
    op: SetValuedMap,
    nl: Nonlinearities,
    dims: Dims,
}

impl fmt::Debug for LureSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LureSystem")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("c", &self.c)
            .field("f", &self.f)
            .field("op", &self.op)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

impl LureSystem {
    /// Validates every matrix shape against `A` (n), `B` (m), `F` (p) and
    /// the output sizes of the callables probed at the origin.
    #[allow(clippy::too_many_arguments)]
    pub fn new(a: Matrix, b: Matrix, c: Matrix, f: Matrix, op: SetValuedMap, nl: Nonlinearities, r: usize, l: usize) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(dim_err("A (square)", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
        }
        let m = b.ncols();
        if b.nrows() != n {
            return Err(dim_err("B rows", n, b.nrows()));
        }
        if c.nrows() != m || c.ncols() != n {
            return Err(dim_err("C", format!("{m}x{n}"), format!("{}x{}", c.nrows(), c.ncols())));
        }
        let p = f.nrows();
        if f.ncols() != n || p == 0 {
            return Err(dim_err("F columns", n, f.ncols()));
        }
        if op.dimension() != m {
            return Err(dim_err("set-valued operator dimension", m, op.dimension()));
        }
        let x0 = Vector::zeros(n);
        let u0 = (nl.input)(0.0);
        if u0.len() != r {
            return Err(dim_err("input u(t)", r, u0.len()));
        }
        let f1 = (nl.f1)(&x0, &u0);
        if f1.len() != n {
            return Err(dim_err("f1 output", n, f1.len()));
        }
        let f2 = (nl.f2)(&x0, &u0);
        if f2.nrows() != n || f2.ncols() != l {
            return Err(dim_err("f2 output", format!("{n}x{l}"), format!("{}x{}", f2.nrows(), f2.ncols())));
        }
        let th = (nl.theta)(0.0, &x0, &u0);
        if th.len() != l {
            return Err(dim_err("theta output", l, th.len()));
        }
        Ok(Self { a, b, c, f, op, nl, dims: Dims { n, m, p, r, l } })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn f(&self) -> &Matrix {
        &self.f
    }
    pub fn operator(&self) -> &SetValuedMap {
        &self.op
    }
    pub fn nonlinearities(&self) -> &Nonlinearities {
        &self.nl
    }

    pub fn f1(&self, x: &Vector, u: &Vector) -> Vector {
        (self.nl.f1)(x, u)
    }
    pub fn f2(&self, x: &Vector, u: &Vector) -> Matrix {
        (self.nl.f2)(x, u)
    }
    pub fn theta(&self, t: f64, x: &Vector, u: &Vector) -> Vector {
        (self.nl.theta)(t, x, u)
    }
    pub fn input(&self, t: f64) -> Vector {
        (self.nl.input)(t)
    }

    /// Replace the set-valued operator (e.g. to add a dead zone).
    pub fn with_operator(mut self, op: SetValuedMap) -> Result<Self> {
        if op.dimension() != self.dims.m {
            return Err(dim_err("set-valued operator dimension", self.dims.m, op.dimension()));
        }
        self.op = op;
        Ok(self)
    }

    pub fn with_nonlinearities(self, nl: Nonlinearities) -> Result<Self> {
        let Dims { r, l, .. } = self.dims;
        Self::new(self.a, self.b, self.c, self.f, self.op, nl, r, l)
    }

    fn check_state(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dims.n {
            return Err(dim_err("state", self.dims.n, x.len()));
        }
        Ok(())
    }

    /// `w = -minnorm F(s)`.
    pub fn select_omega(&self, s: &Vector) -> Result<Vector> {
        Ok(-self.op.min_norm_selection(s)?)
    }

    /// Plant nonlinearity value `w ∈ -F(Cx)` under the min-norm selection.
    pub fn omega(&self, x: &Vector) -> Result<Vector> {
        self.check_state(x)?;
        self.select_omega(&(&self.c * x))
    }

    pub fn output(&self, x: &Vector) -> Result<Vector> {
        self.check_state(x)?;
        Ok(&self.f * x)
    }

    /// Right-hand side of the plant inclusion under the min-norm selection.
    pub fn plant_rhs(&self, t: f64, x: &Vector, u: &Vector) -> Result<Vector> {
        self.check_state(x)?;
        if u.len() != self.dims.r {
            return Err(dim_err("input", self.dims.r, u.len()));
        }
        let w = self.omega(x)?;
        let th = self.theta(t, x, u);
        Ok(&self.a * x + &self.b * w + self.f1(x, u) + self.f2(x, u) * th)
    }

    pub fn decompose(&self, q: usize) -> Result<DecomposedSystem> {
        DecomposedSystem::new(self.clone(), q)
    }
}

/// Lipschitz and boundedness constants of the plant data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBounds {
    /// Lipschitz constant of `f1` in `x`.
    pub l1: f64,
    /// Lipschitz constant of `f2` in `x`.
    pub l2: f64,
    /// Bound on `|theta|`.
    pub l3: f64,
    /// Optional bound on `|h|`.
    pub l4: Option<f64>,
}

impl LipschitzBounds {
    pub fn new(l1: f64, l2: f64, l3: f64, l4: Option<f64>) -> Result<Self> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(l1) || !ok(l2) || !ok(l3) || l4.is_some_and(|v| !ok(v)) {
            return Err(Error::InvalidParameter(format!(
                "Lipschitz/bound constants must be finite and >= 0: ({l1}, {l2}, {l3}, {l4:?})"
            )));
        }
        Ok(Self { l1, l2, l3, l4 })
    }

    /// `gamma = L1 + L2 L3`.
    pub fn gamma(&self) -> f64 {
        self.l1 + self.l2 * self.l3
    }
}

/// Axis-aligned box for random draws of `(x, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub state: (f64, f64),
    pub input: (f64, f64),
}

impl Default for SampleBox {
    fn default() -> Self {
        Self { state: (-10.0, 10.0), input: (-10.0, 10.0) }
    }
}

/// A fixed, seeded set of `(x, u)` evaluation points.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub points: Vec<(Vector, Vector)>,
}

impl SampleSet {
    pub const DEFAULT_SIZE: usize = 1000;

    pub fn uniform(bx: &SampleBox, n: usize, r: usize, count: usize, seed: u64) -> Result<Self> {
        let valid = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !valid(bx.state) || !valid(bx.input) {
            return Err(Error::InvalidParameter(format!("invalid sample box {bx:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let points = (0..count)
            .map(|_| {
                let x = Vector::from_fn(n, |_, _| draw(&mut rng, bx.state));
                let u = Vector::from_fn(r, |_, _| draw(&mut rng, bx.input));
                (x, u)
            })
            .collect();
        Ok(Self { points })
    }

    /// Default draw for a system: 10³ points from `bx`.
    pub fn for_system(sys: &LureSystem, bx: &SampleBox, seed: u64) -> Result<Self> {
        let d = sys.dims();
        Self::uniform(bx, d.n, d.r, Self::DEFAULT_SIZE, seed)
    }
}

/// Outcome of a sampled Lipschitz spot check.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub f1_max_quotient: f64,
    pub f2_max_quotient: f64,
    pub theta_max_norm: f64,
    pub warnings: Vec<String>,
}

/// Spot-check the declared constants on random pairs. Violations are
/// logged as warnings and returned; they are not errors.
pub fn spot_check_lipschitz(sys: &LureSystem, bounds: &LipschitzBounds, bx: &SampleBox, pairs: usize, seed: u64) -> Result<LipschitzReport> {
    let d = sys.dims();
    let a = SampleSet::uniform(bx, d.n, d.r, pairs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (lo, hi) = bx.state;
    let mut f1q = 0.0_f64;
    let mut f2q = 0.0_f64;
    let mut thmax = 0.0_f64;
    for (k, (x, u)) in a.points.iter().enumerate() {
        // Mix far pairs with close pairs so local slopes are probed too.
        let y = if k % 2 == 0 {
            Vector::from_fn(d.n, |_, _| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        } else {
            x + Vector::from_fn(d.n, |_, _| rng.random_range(-1e-3..=1e-3))
        };
        let dx = (x - &y).norm();
        if dx == 0.0 {
            continue;
        }
        f1q = f1q.max((sys.f1(x, u) - sys.f1(&y, u)).norm() / dx);
        f2q = f2q.max(linalg::spectral_norm(&(sys.f2(x, u) - sys.f2(&y, u))) / dx);
        let t = rng.random_range(0.0..=100.0);
        thmax = thmax.max(sys.theta(t, x, u).norm());
    }
    let slack = 1.0 + 1e-9;
    let mut warnings = Vec::new();
    if f1q > bounds.l1 * slack {
        warnings.push(format!("sampled Lipschitz quotient of f1 is {f1q:.6}, declared L1 = {}", bounds.l1));
    }
    if f2q > bounds.l2 * slack {
        warnings.push(format!("sampled Lipschitz quotient of f2 is {f2q:.6}, declared L2 = {}", bounds.l2));
    }
    if thmax > bounds.l3 * slack {
        warnings.push(format!("sampled |theta| reaches {thmax:.6}, declared L3 = {}", bounds.l3));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LipschitzReport { pairs, f1_max_quotient: f1q, f2_max_quotient: f2q, theta_max_norm: thmax, warnings })
}

/// Block view of a plant whose output matrix has the form `F = (Fq 0)`
/// with `Fq` invertible, so that `x1` (the first `q` states) is measured.
#[derive(Debug, Clone)]
pub struct DecomposedSystem {
    pub q: usize,
    pub a11: Matrix,
    pub a12: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub c1: Matrix,
    pub c2: Matrix,
    pub fq: Matrix,
    system: LureSystem,
}

impl DecomposedSystem {
    pub fn new(system: LureSystem, q: usize) -> Result<Self> {
        let Dims { n, p, .. } = system.dims();
        if q == 0 || q >= n {
            return Err(Error::InvalidParameter(format!("block size q must satisfy 1 <= q < n = {n}, got {q}")));
        }
        let f = system.f();
        if p != q {
            return Err(Error::NotDecomposable(format!("F has {p} rows but q = {q}; expected F = (Fq 0) with Fq {q}x{q}")));
        }
        if f.columns(q, n - q).iter().any(|v| *v != 0.0) {
            return Err(Error::NotDecomposable(format!("F is not of the form (Fq 0): trailing {} columns are nonzero", n - q)));
        }
        let fq = f.columns(0, q).into_owned();
        let s = linalg::singular_values(&fq);
        let smax = s[0];
        let smin = *s.last().unwrap();
        if smax == 0.0 || smin <= 1e-12 * smax {
            return Err(Error::Singular(format!("Fq (sigma_min = {smin:e}, sigma_max = {smax:e})")));
        }
        let a = system.a();
        let b = system.b();
        let c = system.c();
        let m = b.ncols();
        Ok(Self {
            q,
            a11: a.view((0, 0), (q, q)).into_owned(),
            a12: a.view((0, q), (q, n - q)).into_owned(),
            a21: a.view((q, 0), (n - q, q)).into_owned(),
            a22: a.view((q, q), (n - q, n - q)).into_owned(),
            b1: b.view((0, 0), (q, m)).into_owned(),
            b2: b.view((q, 0), (n - q, m)).into_owned(),
            c1: c.view((0, 0), (m, q)).into_owned(),
            c2: c.view((0, q), (m, n - q)).into_owned(),
            fq,
            system,
        })
    }

    pub fn system(&self) -> &LureSystem {
        &self.system
    }

    pub fn n(&self) -> usize {
        self.system.dims().n
    }

    /// Rebuild `(A, B, C, F)` from the blocks.
    pub fn reassemble(&self) -> (Matrix, Matrix, Matrix, Matrix) {
        let q = self.q;
        let n = self.n();
        let m = self.b1.ncols();
        let mut a = Matrix::zeros(n, n);
        a.view_mut((0, 0), (q, q)).copy_from(&self.a11);
        a.view_mut((0, q), (q, n - q)).copy_from(&self.a12);
        a.view_mut((q, 0), (n - q, q)).copy_from(&self.a21);
        a.view_mut((q, q), (n - q, n - q)).copy_from(&self.a22);
        let mut b = Matrix::zeros(n, m);
        b.view_mut((0, 0), (q, m)).copy_from(&self.b1);
        b.view_mut((q, 0), (n - q, m)).copy_from(&self.b2);
        let mut c = Matrix::zeros(m, n);
        c.view_mut((0, 0), (m, q)).copy_from(&self.c1);
        c.view_mut((0, q), (m, n - q)).copy_from(&self.c2);
        let mut f = Matrix::zeros(q, n);
        f.view_mut((0, 0), (q, q)).copy_from(&self.fq);
        (a, b, c, f)
    }

    /// Split a full state into `(x1, x2)`.
    pub fn split(&self, x: &Vector) -> (Vector, Vector) {
        let q = self.q;
        (x.rows(0, q).into_owned(), x.rows(q, self.n() - q).into_owned())
    }

    pub fn join(&self, x1: &Vector, x2: &Vector) -> Vector {
        let mut x = Vector::zeros(self.n());
        x.rows_mut(0, self.q).copy_from(x1);
        x.rows_mut(self.q, x2.len()).copy_from(x2);
        x
    }

    pub fn f11(&self, x: &Vector, u: &Vector) -> Vector {
        self.system.f1(x, u).rows(0, self.q).into_owned()
    }
    pub fn f12(&self, x: &Vector, u: &Vector) -> Vector {
        self.system.f1(x, u).rows(self.q, self.n() - self.q).into_owned()
    }
    pub fn f21(&self, x: &Vector, u: &Vector) -> Matrix {
        self.system.f2(x, u).rows(0, self.q).into_owned()
    }
    pub fn f22(&self, x: &Vector, u: &Vector) -> Matrix {
        self.system.f2(x, u).rows(self.q, self.n() - self.q).into_owned()
    }
}
