//! Synthetic functional regression data.
//!
//! Curves follow a truncated Karhunen-Loeve expansion on a Fourier basis,
//! `X(t) = sum_j sqrt(theta_j) Z_j phi_j(t)` with `theta_j = C j^-2` and
//! independent standard normal `Z_j`. Responses are
//! `Y = int beta X + f(X) U` with `U ~ Uniform[-3/4, 3/4]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::curves::{Curve, Grid, Sample};
use crate::error::{Error, Result};

/// Half-width of the uniform error factor.
pub const UNIFORM_HALF_WIDTH: f64 = 0.75;

/// How the argument `pi/20t` of the slope function is grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaReading {
    /// `(pi / 20) * t`
    Product,
    /// `pi / (20 t)`
    Reciprocal,
}

impl FromStr for BetaReading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(Self::Product),
            "reciprocal" => Ok(Self::Reciprocal),
            other => Err(Error::InvalidParameter(format!(
                "unknown beta reading '{other}'"
            ))),
        }
    }
}

/// `beta(t) = 0.02 sin(8 - arg(t)) (1{t <= 190} + 0.5 1{t > 190})`.
pub fn beta(t: f64, reading: BetaReading) -> f64 {
    let arg = match reading {
        BetaReading::Product => PI / 20.0 * t,
        BetaReading::Reciprocal => PI / (20.0 * t),
    };
    let step = if t <= 190.0 { 1.0 } else { 0.5 };
    0.02 * (8.0 - arg).sin() * step
}

/// Error scale `f(X)` as a function of the regression mean `mu = int beta X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ErrorModel {
    /// No noise.
    None,
    /// `f^2 = 0.1 mu^2`
    ModelI,
    /// `f^2 = 0.1 mu^2 + 0.2 |mu|^(1/2)`
    ModelII,
    /// `f` constant.
    Constant(f64),
}

impl ErrorModel {
    pub fn scale(&self, mu: f64) -> f64 {
        match *self {
            ErrorModel::None => 0.0,
            ErrorModel::ModelI => (0.1 * mu * mu).sqrt(),
            ErrorModel::ModelII => (0.1 * mu * mu + 0.2 * mu.abs().sqrt()).sqrt(),
            ErrorModel::Constant(f) => f,
        }
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorModel::None => write!(f, "none"),
            ErrorModel::ModelI => write!(f, "i"),
            ErrorModel::ModelII => write!(f, "ii"),
            ErrorModel::Constant(c) => write!(f, "const:{c}"),
        }
    }
}

impl FromStr for ErrorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "i" | "1" => Ok(Self::ModelI),
            "ii" | "2" => Ok(Self::ModelII),
            other => match other.strip_prefix("const:") {
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .map(Self::Constant)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad constant in '{other}'"))),
                None => Err(Error::InvalidParameter(format!(
                    "unknown error model '{other}'"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub start: f64,
    pub end: f64,
    pub points: usize,
    /// Number of Karhunen-Loeve terms.
    pub components: usize,
    /// `C` in `theta_j = C j^-2`.
    pub eigen_scale: f64,
    pub beta_reading: BetaReading,
    pub error_model: ErrorModel,
    pub seed: u64,
}

impl Default for SyntheticDesign {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 365.0,
            points: 365,
            components: 10,
            eigen_scale: 1e6,
            beta_reading: BetaReading::Product,
            error_model: ErrorModel::ModelI,
            seed: 0,
        }
    }
}

impl SyntheticDesign {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidParameter(
                "need at least one component".into(),
            ));
        }
        if !(self.eigen_scale > 0.0 && self.eigen_scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "eigen scale must be positive".into(),
            ));
        }
        if let ErrorModel::Constant(f) = self.error_model {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::InvalidParameter(
                    "constant error scale must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(self.start, self.end, self.points)
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigen_scale / (j * j) as f64
    }
}

/// `L^2`-orthonormal Fourier functions on `[start, end]`: a constant, then
/// alternating sine and cosine pairs of increasing frequency.
pub fn fourier_basis(grid: &Grid, count: usize) -> Vec<Vec<f64>> {
    let a = grid.start();
    let len = grid.end() - a;
    (1..=count)
        .map(|j| {
            grid.points()
                .iter()
                .map(|&t| {
                    if j == 1 {
                        1.0 / len.sqrt()
                    } else {
                        let k = (j / 2) as f64;
                        let x = 2.0 * PI * k * (t - a) / len;
                        let s = (2.0 / len).sqrt();
                        if j % 2 == 0 {
                            s * x.sin()
                        } else {
                            s * x.cos()
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// A generated sample with its noiseless targets.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub sample: Sample,
    /// `mu(X_i) = int beta X_i`.
    pub mu: Vec<f64>,
    pub beta: Curve,
}

pub fn generate_sample(design: &SyntheticDesign, n: usize) -> Result<SyntheticData> {
    design.validate()?;
    let grid = Arc::new(design.grid()?);
    let basis = fourier_basis(&grid, design.components);
    let sd: Vec<f64> = (1..=design.components)
        .map(|j| design.eigenvalue(j).sqrt())
        .collect();
    let beta_curve = Curve::from_fn(Arc::clone(&grid), |t| beta(t, design.beta_reading));
    let unif = Uniform::new_inclusive(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let m = grid.len();
    let mut rows = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = vec![0.0; m];
        for (phi, s) in basis.iter().zip(&sd) {
            let z: f64 = StandardNormal.sample(&mut rng);
            let c = s * z;
            for (xk, pk) in x.iter_mut().zip(phi) {
                *xk += c * pk;
            }
        }
        let mean = grid.dot(&x, beta_curve.values());
        let u: f64 = rng.sample(unif);
        y.push(mean + design.error_model.scale(mean) * u);
        mu.push(mean);
        rows.push(x);
    }
    let sample = Sample::from_rows(grid, rows, y)?;
    Ok(SyntheticData {
        sample,
        mu,
        beta: beta_curve,
    })
}
