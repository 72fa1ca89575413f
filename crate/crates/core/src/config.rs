//! TOML system and gain definitions.
//!
//! Matrices are row-major nested arrays of decimal floats. Nonlinearities
//! are referenced by registered name (see [`registry`]); there is no
//! expression language.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::lure_model::{LipschitzBounds, LureSystem, Nonlinearities, SampleBox};
use crate::observer_design::{ObserverGains, ReducedGains};
use crate::set_valued::SetValuedMap;

/// Built-in nonlinearities addressable from config files.
pub mod registry {
    use super::*;
    use crate::lure_model::{Disturbance, InputSignal, MatrixField, VectorField};

    pub const ZERO: &str = "zero";

    pub fn f1(name: &str, n: usize) -> Result<VectorField> {
        Ok(match name {
            ZERO => Arc::new(move |_, _| Vector::zeros(n)),
            // (3u + 0.8 sin x2, 2u + 0.9 cos x1, -u + 0.8 sin x3)
            "example2_f1" => Arc::new(|x: &Vector, u: &Vector| {
                Vector::from_row_slice(&[3.0 * u[0] + 0.8 * x[1].sin(), 2.0 * u[0] + 0.9 * x[0].cos(), -u[0] + 0.8 * x[2].sin()])
            }),
            // (0.3 sin x2 + u, 0.4 sin x2); Lipschitz constant 0.5
            "reduced_demo_f1" => Arc::new(|x: &Vector, u: &Vector| Vector::from_row_slice(&[0.3 * x[1].sin() + u[0], 0.4 * x[1].sin()])),
            other => return Err(unknown("f1", other)),
        })
    }

    pub fn f2(name: &str, n: usize, l: usize) -> Result<MatrixField> {
        Ok(match name {
            ZERO => Arc::new(move |_, _| Matrix::zeros(n, l)),
            // (3 sin x2, 0, 0)^T
            "example2_f2" => Arc::new(|x: &Vector, _: &Vector| Matrix::from_row_slice(3, 1, &[3.0 * x[1].sin(), 0.0, 0.0])),
            // (cos x2, 0)^T
            "reduced_demo_f2" => Arc::new(|x: &Vector, _: &Vector| Matrix::from_row_slice(2, 1, &[x[1].cos(), 0.0])),
            other => return Err(unknown("f2", other)),
        })
    }

    pub fn theta(name: &str, l: usize) -> Result<Disturbance> {
        Ok(match name {
            ZERO => Arc::new(move |_, _, _| Vector::zeros(l)),
            "example2_theta" => Arc::new(|t: f64, _: &Vector, _: &Vector| Vector::from_element(1, 3.0 * t.sin())),
            "reduced_demo_theta" => Arc::new(|t: f64, _: &Vector, _: &Vector| Vector::from_element(1, t.sin())),
            other => return Err(unknown("theta", other)),
        })
    }

    pub fn input(name: &str, r: usize) -> Result<InputSignal> {
        Ok(match name {
            ZERO => Arc::new(move |_| Vector::zeros(r)),
            "example2_input" => Arc::new(|t: f64| Vector::from_element(1, 8.0 * t.cos())),
            "reduced_demo_input" => Arc::new(|t: f64| Vector::from_element(1, t.cos())),
            other => return Err(unknown("input", other)),
        })
    }

    /// Scalar drift `mu(x)` for sign-driven systems.
    pub fn drift(name: &str) -> Result<fn(f64, &Vector) -> Vector> {
        Ok(match name {
            ZERO => |_, x| Vector::zeros(x.len()),
            "example1_mu" => |_, x| x.map(|v| 3.0 * v.sin()),
            other => return Err(unknown("drift", other)),
        })
    }

    fn unknown(kind: &str, name: &str) -> Error {
        Error::Config(format!("unknown {kind} nonlinearity '{name}'"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Sign {
        dimension: usize,
        #[serde(default)]
        dead_zone: f64,
    },
    Relay {
        slope: f64,
        offset: f64,
        #[serde(default = "one")]
        dimension: usize,
        #[serde(default)]
        dead_zone: f64,
    },
}

fn one() -> usize {
    1
}

impl OperatorSpec {
    pub fn build(&self) -> Result<SetValuedMap> {
        match *self {
            OperatorSpec::Sign { dimension, dead_zone } => SetValuedMap::sign(dimension)?.with_dead_zone(dead_zone),
            OperatorSpec::Relay { slope, offset, dimension, dead_zone } => {
                SetValuedMap::relay_n(slope, offset, dimension)?.with_dead_zone(dead_zone)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    #[serde(rename = "L4", default)]
    pub l4: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default)]
    pub zhat0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    /// Input dimension.
    pub r: usize,
    /// Unknown-signal dimension.
    pub l: usize,
    pub f1: String,
    pub f2: String,
    pub theta: String,
    pub input: String,
    pub operator: OperatorSpec,
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub sample_box: Option<SampleBox>,
}

/// A parsed and validated system definition.
#[derive(Debug, Clone)]
pub struct SystemDefinition {
    pub name: String,
    pub system: LureSystem,
    pub bounds: LipschitzBounds,
    pub initial: Option<InitialSpec>,
    pub sample_box: SampleBox,
}

impl SystemFile {
    pub fn build(&self) -> Result<SystemDefinition> {
        let a = matrix("A", &self.a)?;
        let n = a.nrows();
        let nl = Nonlinearities {
            f1: registry::f1(&self.f1, n)?,
            f2: registry::f2(&self.f2, n, self.l)?,
            theta: registry::theta(&self.theta, self.l)?,
            input: registry::input(&self.input, self.r)?,
        };
        let system = LureSystem::new(
            a,
            matrix("B", &self.b)?,
            matrix("C", &self.c)?,
            matrix("F", &self.f)?,
            self.operator.build()?,
            nl,
            self.r,
            self.l,
        )?;
        let b = &self.bounds;
        let bounds = LipschitzBounds::new(b.l1, b.l2, b.l3, b.l4)?;
        if let Some(init) = &self.initial {
            check_len("initial.x0", &init.x0, n)?;
            if let Some(v) = &init.xhat0 {
                check_len("initial.xhat0", v, n)?;
            }
        }
        Ok(SystemDefinition {
            name: self.name.clone().unwrap_or_else(|| "system".into()),
            system,
            bounds,
            initial: self.initial.clone(),
            sample_box: self.sample_box.unwrap_or_default(),
        })
    }
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Config(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    linalg::from_rows(rows).map_err(|e| Error::Config(format!("matrix {name}: {e}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub beta: f64,
    pub epsilon: f64,
    /// Overrides `gamma = L1 + L2 L3`.
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedSpec {
    pub q: usize,
    #[serde(rename = "Q")]
    pub q_mat: Vec<Vec<f64>>,
    #[serde(rename = "P21")]
    pub p21: Vec<Vec<f64>>,
    #[serde(rename = "P22")]
    pub p22: Vec<Vec<f64>>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    #[serde(default)]
    pub observer: Option<ObserverSpec>,
    #[serde(default)]
    pub reduced: Option<ReducedSpec>,
}

#[derive(Debug, Clone)]
pub struct GainsDefinition {
    pub observer: Option<(ObserverGains, Option<f64>)>,
    pub reduced: Option<(usize, ReducedGains)>,
}

impl GainsFile {
    pub fn build(&self) -> Result<GainsDefinition> {
        let observer = match &self.observer {
            Some(o) => Some((
                ObserverGains::new(matrix("P", &o.p)?, matrix("L", &o.l)?, matrix("K", &o.k)?, o.beta, o.epsilon)?,
                o.gamma,
            )),
            None => None,
        };
        let reduced = match &self.reduced {
            Some(r) => Some((r.q, ReducedGains::new(matrix("Q", &r.q_mat)?, matrix("P21", &r.p21)?, matrix("P22", &r.p22)?, r.epsilon)?)),
            None => None,
        };
        if observer.is_none() && reduced.is_none() {
            return Err(Error::Config("gains file defines neither [observer] nor [reduced]".into()));
        }
        Ok(GainsDefinition { observer, reduced })
    }
}

/// Scalar (or vector) sign-driven system `x' = mu(x) - gain Sign(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignSystemFile {
    pub drift: String,
    pub gain: f64,
    pub x0: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
}

pub fn parse_system(text: &str) -> Result<SystemDefinition> {
    let file: SystemFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.build()
}

pub fn parse_gains(text: &str) -> Result<GainsDefinition> {
    let file: GainsFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.build()
}

pub fn parse_sign_system(text: &str) -> Result<SignSystemFile> {
    let file: SignSystemFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    registry::drift(&file.drift)?;
    if file.x0.is_empty() {
        return Err(Error::Config("x0 must be non-empty".into()));
    }
    Ok(file)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn load_system(path: &Path) -> Result<SystemDefinition> {
    parse_system(&read(path)?)
}

pub fn load_gains(path: &Path) -> Result<GainsDefinition> {
    parse_gains(&read(path)?)
}

/// Example definitions compiled into the binary.
pub mod bundled {
    pub const EXAMPLE1: &str = include_str!("../configs/example1.toml");
    pub const EXAMPLE2_SYSTEM: &str = include_str!("../configs/example2_system.toml");
    pub const EXAMPLE2_GAINS: &str = include_str!("../configs/example2_gains.toml");
    pub const REDUCED_SYSTEM: &str = include_str!("../configs/reduced_demo_system.toml");
    pub const REDUCED_GAINS: &str = include_str!("../configs/reduced_demo_gains.toml");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        let sys = parse_system(bundled::EXAMPLE2_SYSTEM).unwrap();
        assert_eq!(sys.system.dims().n, 3);
        assert!(parse_gains(bundled::EXAMPLE2_GAINS).unwrap().observer.is_some());
        let red = parse_system(bundled::REDUCED_SYSTEM).unwrap();
        assert_eq!(red.system.dims().n, 2);
        assert!(parse_gains(bundled::REDUCED_GAINS).unwrap().reduced.is_some());
        parse_sign_system(bundled::EXAMPLE1).unwrap();
    }

    #[test]
    fn malformed_matrix_literal_is_a_config_error() {
        let bad = bundled::EXAMPLE2_SYSTEM.replace("[5.0, -3.0, 4.0]", "[5.0, -3.0]");
        assert!(matches!(parse_system(&bad), Err(Error::Config(_)) | Err(Error::DimensionMismatch { .. })));
        let garbage = bundled::EXAMPLE2_SYSTEM.replace("[5.0, -3.0, 4.0]", "[5.0, -3.0, four]");
        assert!(matches!(parse_system(&garbage), Err(Error::Config(_))));
        let ragged = bundled::EXAMPLE2_SYSTEM.replace("[0.0, 0.0, -1.0]", "[0.0, -1.0]");
        assert!(matches!(parse_system(&ragged), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_nonlinearity_is_rejected() {
        let bad = bundled::EXAMPLE2_SYSTEM.replace("\"example2_f1\"", "\"sin_of_everything\"");
        assert!(matches!(parse_system(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn empty_gains_file_is_rejected() {
        assert!(parse_gains("").is_err());
    }
}
