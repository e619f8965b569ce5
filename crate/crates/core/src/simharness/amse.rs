//! Monte Carlo check of the variance factor gained by weighting.
//!
//! With a known orthonormal basis the regression is carried out directly
//! on independent Gaussian scores `X_j ~ N(0, theta_j)`, `theta_j = j^-2`.
//! The error variance `sigma^2` and the working variance `tau^2` are
//! functions of finitely many scores. The weighted predictor (weights
//! `tau^-2`) should have variance smaller than the unweighted one by the
//! factor
//!
//! `E{sigma^2 tau^-4} / (E{tau^-2})^2 / E{sigma^2}`.
//!
//! Scores on which `sigma` or `tau` depend are set to zero at the
//! evaluation point so that their design correlation with the weights
//! does not enter the comparison.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive variance function of the scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScoreFunction {
    /// `c`
    Constant { c: f64 },
    /// `a + b X_j^2`
    Quadratic { a: f64, b: f64, component: usize },
    /// `a exp(g X_j)`
    Exponential { a: f64, g: f64, component: usize },
}

impl ScoreFunction {
    /// Evaluate on a score vector; `component` is 1-based.
    pub fn eval(&self, scores: &[f64]) -> f64 {
        match *self {
            ScoreFunction::Constant { c } => c,
            ScoreFunction::Quadratic { a, b, component } => {
                let x = scores[component - 1];
                a + b * x * x
            }
            ScoreFunction::Exponential { a, g, component } => a * (g * scores[component - 1]).exp(),
        }
    }

    pub fn component(&self) -> Option<usize> {
        match *self {
            ScoreFunction::Constant { .. } => None,
            ScoreFunction::Quadratic { component, .. }
            | ScoreFunction::Exponential { component, .. } => Some(component),
        }
    }

    fn validate(&self, components: usize) -> Result<()> {
        let ok = match *self {
            ScoreFunction::Constant { c } => c > 0.0 && c.is_finite(),
            ScoreFunction::Quadratic { a, b, component } => {
                a > 0.0 && b >= 0.0 && b.is_finite() && (1..=components).contains(&component)
            }
            ScoreFunction::Exponential { a, g, component } => {
                a > 0.0 && g.is_finite() && (1..=components).contains(&component)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid variance function {self} for {components} components"
            )))
        }
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFunction::Constant { c } => write!(f, "const:{c}"),
            ScoreFunction::Quadratic { a, b, component } => write!(f, "quad:{a},{b},{component}"),
            ScoreFunction::Exponential { a, g, component } => write!(f, "exp:{a},{g},{component}"),
        }
    }
}

/// `const:C`, `quad:A,B,J` (`A + B X_J^2`) or `exp:A,G,J` (`A exp(G X_J)`).
impl FromStr for ScoreFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse variance function '{s}'"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let num = |i: usize| {
            parts
                .get(i)
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(bad)
        };
        let idx = |i: usize| {
            parts
                .get(i)
                .and_then(|p| p.parse::<usize>().ok())
                .ok_or_else(bad)
        };
        match (kind, parts.len()) {
            ("const", 1) => Ok(ScoreFunction::Constant { c: num(0)? }),
            ("quad", 3) => Ok(ScoreFunction::Quadratic {
                a: num(0)?,
                b: num(1)?,
                component: idx(2)?,
            }),
            ("exp", 3) => Ok(ScoreFunction::Exponential {
                a: num(0)?,
                g: num(1)?,
                component: idx(2)?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmseConfig {
    /// Error variance `sigma^2`.
    pub sigma2: ScoreFunction,
    /// Working variance `tau^2`; weights are `1 / tau^2`.
    pub tau2: ScoreFunction,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Number of regression components `r`.
    pub components: usize,
}

impl Default for AmseConfig {
    fn default() -> Self {
        let sigma2 = ScoreFunction::Quadratic {
            a: 0.5,
            b: 0.5,
            component: 1,
        };
        Self {
            sigma2,
            tau2: sigma2,
            n: 500,
            replications: 200,
            seed: 0,
            components: 5,
        }
    }
}

impl AmseConfig {
    fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidParameter(
                "need at least one component".into(),
            ));
        }
        if self.n < self.components + 2 {
            return Err(Error::InsufficientData {
                needed: self.components + 2,
                got: self.n,
            });
        }
        if self.replications < 2 {
            return Err(Error::InvalidParameter(
                "need at least two replications".into(),
            ));
        }
        self.sigma2.validate(self.components)?;
        self.tau2.validate(self.components)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.components)
            .map(|j| 1.0 / (j * j) as f64)
            .collect()
    }

    fn slopes(&self) -> Vec<f64> {
        (1..=self.components).map(|j| 1.0 / j as f64).collect()
    }

    /// Evaluation scores: `sqrt(theta_j)`, or zero where the variance
    /// functions depend on the score.
    pub fn evaluation_point(&self) -> Vec<f64> {
        let skip = [self.sigma2.component(), self.tau2.component()];
        self.eigenvalues()
            .iter()
            .enumerate()
            .map(|(j, t)| {
                if skip.contains(&Some(j + 1)) {
                    0.0
                } else {
                    t.sqrt()
                }
            })
            .collect()
    }
}

const INTERCEPT: f64 = 1.0;
const QUAD_NODES: usize = 801;
const QUAD_HALF_WIDTH: f64 = 9.0;

/// Expectations under independent `N(0, theta_j)` scores, by trapezoid
/// quadrature over the (at most two) scores the integrand depends on.
fn expectation(eigenvalues: &[f64], comps: &[usize], f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 2.0 * QUAD_HALF_WIDTH / (QUAD_NODES - 1) as f64;
    let nodes: Vec<(f64, f64)> = (0..QUAD_NODES)
        .map(|k| {
            let z = -QUAD_HALF_WIDTH + h * k as f64;
            let w = if k == 0 || k == QUAD_NODES - 1 {
                0.5
            } else {
                1.0
            };
            (
                z,
                w * h * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            )
        })
        .collect();
    let mut x = vec![0.0; eigenvalues.len()];
    match comps {
        [] => f(&x),
        [a] => nodes
            .iter()
            .map(|&(z, w)| {
                x[a - 1] = z * eigenvalues[a - 1].sqrt();
                w * f(&x)
            })
            .sum(),
        [a, b] => {
            let mut total = 0.0;
            for &(za, wa) in &nodes {
                x[a - 1] = za * eigenvalues[a - 1].sqrt();
                for &(zb, wb) in &nodes {
                    x[b - 1] = zb * eigenvalues[b - 1].sqrt();
                    total += wa * wb * f(&x);
                }
            }
            total
        }
        _ => unreachable!("at most two distinct components"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceFactors {
    /// `E{sigma^2 tau^-4} / (E{tau^-2})^2`.
    pub rho2: f64,
    /// `E{sigma^2}`, the factor without weighting.
    pub unweighted: f64,
    /// `rho2 / unweighted`.
    pub ratio: f64,
}

pub fn variance_factors(
    sigma2: &ScoreFunction,
    tau2: &ScoreFunction,
    eigenvalues: &[f64],
) -> VarianceFactors {
    let mut comps: Vec<usize> = [sigma2.component(), tau2.component()]
        .into_iter()
        .flatten()
        .collect();
    comps.sort_unstable();
    comps.dedup();
    let e_s2_t4 = expectation(eigenvalues, &comps, |x| {
        sigma2.eval(x) / tau2.eval(x).powi(2)
    });
    let e_t2 = expectation(eigenvalues, &comps, |x| 1.0 / tau2.eval(x));
    let e_s2 = expectation(eigenvalues, &comps, |x| sigma2.eval(x));
    let rho2 = e_s2_t4 / (e_t2 * e_t2);
    VarianceFactors {
        rho2,
        unweighted: e_s2,
        ratio: rho2 / e_s2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmseReport {
    pub config: AmseConfig,
    /// Sample variance ratio of the weighted over the unweighted predictions.
    pub empirical_ratio: f64,
    /// Quadrature value of the asymptotic factor ratio.
    pub theoretical_ratio: f64,
    /// Ratio of the mean design-conditional variances (lower Monte Carlo noise).
    pub conditional_ratio: f64,
    pub weighted_variance: f64,
    pub unweighted_variance: f64,
    pub factors: VarianceFactors,
    pub evaluation_point: Vec<f64>,
}

/// One replication's predictions and their design-conditional moments.
#[derive(Debug, Clone, Copy)]
struct Estimate {
    prediction: f64,
    conditional_variance: f64,
    conditional_bias: f64,
}

/// Weighted least squares prediction at `x`, written as `sum_i l_i Y_i`
/// so that conditional moments are available.
fn linear_estimate(
    scores: &[Vec<f64>],
    y: &[f64],
    mu: &[f64],
    var: &[f64],
    probs: &[f64],
    x: &[f64],
    target: f64,
) -> Result<Estimate> {
    let r = x.len();
    let mean: Vec<f64> = (0..r)
        .map(|j| probs.iter().zip(scores).map(|(p, s)| p * s[j]).sum())
        .collect();
    let mut gram = DMatrix::<f64>::zeros(r, r);
    for (p, s) in probs.iter().zip(scores) {
        for j in 0..r {
            for k in 0..r {
                gram[(j, k)] += p * (s[j] - mean[j]) * (s[k] - mean[k]);
            }
        }
    }
    let chol = Cholesky::new(gram).ok_or(Error::Singular {
        order: r,
        condition: f64::INFINITY,
    })?;
    let g = chol.solve(&DVector::from_fn(r, |j, _| x[j] - mean[j]));
    let mut prediction = 0.0;
    let mut cond_var = 0.0;
    let mut cond_mean = 0.0;
    for i in 0..y.len() {
        let lev: f64 = (0..r).map(|j| (scores[i][j] - mean[j]) * g[j]).sum();
        let l = probs[i] * (1.0 + lev);
        prediction += l * y[i];
        cond_mean += l * mu[i];
        cond_var += l * l * var[i];
    }
    Ok(Estimate {
        prediction,
        conditional_variance: cond_var,
        conditional_bias: cond_mean - target,
    })
}

fn replication(config: &AmseConfig, n: usize, index: usize) -> Result<(Estimate, Estimate)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let sd: Vec<f64> = config.eigenvalues().iter().map(|t| t.sqrt()).collect();
    let b = config.slopes();
    let x = config.evaluation_point();
    let target = INTERCEPT + b.iter().zip(&x).map(|(b, x)| b * x).sum::<f64>();

    let mut scores = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let s: Vec<f64> = sd
            .iter()
            .map(|sd| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        let delta: f64 = StandardNormal.sample(&mut rng);
        let m = INTERCEPT + b.iter().zip(&s).map(|(b, x)| b * x).sum::<f64>();
        let v = config.sigma2.eval(&s);
        y.push(m + v.sqrt() * delta);
        mu.push(m);
        var.push(v);
        w.push(1.0 / config.tau2.eval(&s));
        scores.push(s);
    }
    let total: f64 = w.iter().sum();
    let probs_w: Vec<f64> = w.iter().map(|w| w / total).collect();
    let probs_u = vec![1.0 / n as f64; n];
    let weighted = linear_estimate(&scores, &y, &mu, &var, &probs_w, &x, target)?;
    let unweighted = linear_estimate(&scores, &y, &mu, &var, &probs_u, &x, target)?;
    Ok((weighted, unweighted))
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn run(config: &AmseConfig, n: usize) -> Result<Vec<(Estimate, Estimate)>> {
    (0..config.replications)
        .into_par_iter()
        .map(|i| replication(config, n, i))
        .collect()
}

/// Empirical and theoretical variance ratios of the weighted over the
/// unweighted predictor with known basis and known working variance.
pub fn amse_factor_check(config: &AmseConfig) -> Result<AmseReport> {
    config.validate()?;
    let reps = run(config, config.n)?;
    let pw: Vec<f64> = reps.iter().map(|(w, _)| w.prediction).collect();
    let pu: Vec<f64> = reps.iter().map(|(_, u)| u.prediction).collect();
    let weighted_variance = sample_variance(&pw);
    let unweighted_variance = sample_variance(&pu);
    let cw = reps
        .iter()
        .map(|(w, _)| w.conditional_variance)
        .sum::<f64>();
    let cu = reps
        .iter()
        .map(|(_, u)| u.conditional_variance)
        .sum::<f64>();
    let factors = variance_factors(&config.sigma2, &config.tau2, &config.eigenvalues());
    Ok(AmseReport {
        config: config.clone(),
        empirical_ratio: weighted_variance / unweighted_variance,
        theoretical_ratio: factors.ratio,
        conditional_ratio: cw / cu,
        weighted_variance,
        unweighted_variance,
        factors,
        evaluation_point: config.evaluation_point(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorScaling {
    pub sizes: (usize, usize),
    /// Root mean squared error `(small n, large n)` of the weighted predictor.
    pub weighted_rmse: (f64, f64),
    pub unweighted_rmse: (f64, f64),
}

impl ErrorScaling {
    pub fn weighted_shrinkage(&self) -> f64 {
        self.weighted_rmse.0 / self.weighted_rmse.1
    }

    pub fn unweighted_shrinkage(&self) -> f64 {
        self.unweighted_rmse.0 / self.unweighted_rmse.1
    }
}

/// Root mean squared prediction error at two sample sizes, from the
/// design-conditional mean squared errors averaged over replications.
pub fn error_scaling(config: &AmseConfig, small: usize, large: usize) -> Result<ErrorScaling> {
    config.validate()?;
    let rmse = |n: usize| -> Result<(f64, f64)> {
        let probe = AmseConfig {
            n,
            ..config.clone()
        };
        probe.validate()?;
        let reps = run(&probe, n)?;
        let mse = |e: &Estimate| e.conditional_variance + e.conditional_bias.powi(2);
        let count = reps.len() as f64;
        let w = reps.iter().map(|(w, _)| mse(w)).sum::<f64>() / count;
        let u = reps.iter().map(|(_, u)| mse(u)).sum::<f64>() / count;
        Ok((w.sqrt(), u.sqrt()))
    };
    let (ws, us) = rmse(small)?;
    let (wl, ul) = rmse(large)?;
    Ok(ErrorScaling {
        sizes: (small, large),
        weighted_rmse: (ws, wl),
        unweighted_rmse: (us, ul),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["const:1", "quad:0.5,0.5,1", "exp:1,0.3,2"] {
            let f: ScoreFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("quad:1,2".parse::<ScoreFunction>().is_err());
        assert!("cubic:1".parse::<ScoreFunction>().is_err());
    }

    #[test]
    fn homoscedastic_factor_is_one() {
        let c = ScoreFunction::Constant { c: 1.0 };
        let f = variance_factors(&c, &c, &[1.0, 0.25]);
        assert!((f.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_integrates_gaussian_moments() {
        let theta = [2.0];
        let e2 = expectation(&theta, &[1], |x| x[0] * x[0]);
        let e4 = expectation(&theta, &[1], |x| x[0].powi(4));
        assert!((e2 - 2.0).abs() < 1e-12);
        assert!((e4 - 12.0).abs() < 1e-10);
    }

    #[test]
    fn evaluation_point_zeroes_dependent_scores() {
        let cfg = AmseConfig::default();
        let x = cfg.evaluation_point();
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_component() {
        let cfg = AmseConfig {
            sigma2: ScoreFunction::Quadratic {
                a: 1.0,
                b: 1.0,
                component: 9,
            },
            ..AmseConfig::default()
        };
        assert!(amse_factor_check(&cfg).is_err());
    }
}
