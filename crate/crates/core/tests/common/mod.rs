//! Independent reference computations for the integration tests. Nothing
//! here calls into the library's linear algebra.
#![allow(dead_code)]

use lure_smo::config::{self, bundled, SystemDefinition};
use lure_smo::lure_model::{LureSystem, Nonlinearities};
use lure_smo::observer_design::ObserverGains;
use lure_smo::set_valued::SetValuedMap;
use lure_smo::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn matmul(a: &Rows, b: &Rows) -> Rows {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

pub fn transpose(a: &Rows) -> Rows {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Cyclic Jacobi rotations on a symmetric matrix; eigenvalues ascending.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigenvalues(a: &Rows) -> Vec<f64> {
    let n = a.len();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Largest singular value by power iteration on `A^T A`.
pub fn spectral_norm_power(a: &Rows) -> f64 {
    let ata = matmul(&transpose(a), a);
    let n = ata.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| ata[i][j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda.sqrt()
}

pub fn example2() -> (SystemDefinition, ObserverGains) {
    let def = config::parse_system(bundled::EXAMPLE2_SYSTEM).unwrap();
    let (gains, _) = config::parse_gains(bundled::EXAMPLE2_GAINS).unwrap().observer.unwrap();
    (def, gains)
}

pub fn example2_x0() -> Vector {
    Vector::from_row_slice(&[3.0, 2.0, 1.0])
}

pub fn example2_xhat0() -> Vector {
    Vector::from_row_slice(&[15.0, 27.0, 16.0])
}

/// Example 2 data with `f2 = 0` and a pure linear relay branch.
pub fn smooth_example2() -> LureSystem {
    let (def, _) = example2();
    let nl = def.system.nonlinearities().clone();
    let nl = Nonlinearities { f2: Arc::new(|_: &Vector, _: &Vector| Matrix::zeros(3, 1)), ..nl };
    def.system.with_nonlinearities(nl).unwrap().with_operator(SetValuedMap::relay(2.0, 0.0).unwrap()).unwrap()
}

/// Stable 2-state system used where plant coordinates must stay small.
pub fn stable_system() -> (LureSystem, ObserverGains) {
    let a = Matrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -3.0]);
    let b = Matrix::from_row_slice(2, 1, &[1.0, 0.0]);
    let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let f = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let nl = Nonlinearities {
        f1: Arc::new(|x: &Vector, u: &Vector| Vector::from_row_slice(&[0.2 * x[1].sin() + u[0], 0.0])),
        f2: Arc::new(|x: &Vector, _: &Vector| Matrix::from_row_slice(2, 1, &[x[0].cos(), 0.0])),
        theta: Arc::new(|t: f64, _: &Vector, _: &Vector| Vector::from_element(1, 0.5 * t.sin())),
        input: Arc::new(|t: f64| Vector::from_element(1, t.cos())),
    };
    let sys = LureSystem::new(a, b, c, f, SetValuedMap::relay(1.0, 0.5).unwrap(), nl, 1, 1).unwrap();
    let gains = ObserverGains::new(Matrix::identity(2, 2), Matrix::from_row_slice(2, 1, &[2.0, 0.0]), Matrix::zeros(1, 1), 1.0, 0.2).unwrap();
    (sys, gains)
}

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
    &m * m.transpose() + Matrix::identity(n, n) * 0.5
}

/// Full-row-rank `p x n` matrix: random entries plus a dominant identity
/// block in a random column set.
pub fn random_full_row_rank(p: usize, n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut f = Matrix::from_fn(p, n, |_, _| rng.random_range(-0.3..=0.3));
    let mut cols: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        cols.swap(i, rng.random_range(0..=i));
    }
    for (i, &c) in cols.iter().take(p).enumerate() {
        f[(i, c)] += 2.0;
    }
    f
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
