//! Heteroscedasticity-weighted predictors.
//!
//! * **tilde**: weighted least squares on the unweighted principal
//!   component scores. The weighted centred scores are correlated, so a
//!   small dense system is solved.
//! * **check**: weighted least squares on the principal components of the
//!   weighted covariance. Those scores are uncorrelated under the weights,
//!   so the coefficients decouple exactly as in the unweighted fit.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curves::{Curve, Sample};
use crate::error::{Error, Result};
use crate::fpca::{normalized_weights, pca_with, Flavor, PcBasis, PcaOptions};
use crate::linmodel::{centred_prediction, check_parts, diagonal_fit};

/// Systems whose condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Tilde,
    Check,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Tilde, Variant::Check];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tilde => "tilde",
            Variant::Check => "check",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tilde" => Ok(Variant::Tilde),
            "check" => Ok(Variant::Check),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightedFit {
    variant: Variant,
    basis: Arc<PcBasis>,
    coeffs: Vec<f64>,
    y_bar_w: f64,
    score_means_w: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedFit {
    pub fn from_parts(
        variant: Variant,
        basis: Arc<PcBasis>,
        coeffs: Vec<f64>,
        y_bar_w: f64,
        score_means_w: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        check_parts(&basis, &coeffs, &score_means_w, y_bar_w)?;
        Ok(Self {
            variant,
            basis,
            coeffs,
            y_bar_w,
            score_means_w,
            weights,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn basis(&self) -> &Arc<PcBasis> {
        &self.basis
    }

    /// `t` for the tilde variant, `s` for the check variant.
    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn y_bar_w(&self) -> f64 {
        self.y_bar_w
    }

    pub fn score_means_w(&self) -> &[f64] {
        &self.score_means_w
    }

    /// Observation weights the fit was computed with.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict(&self, x: &Curve) -> Result<f64> {
        let scores = self.basis.scores(x, self.truncation())?;
        Ok(centred_prediction(
            self.y_bar_w,
            &self.coeffs,
            &self.score_means_w,
            &scores,
        ))
    }
}

pub fn predict_weighted(fit: &WeightedFit, x: &Curve) -> Result<f64> {
    fit.predict(x)
}

/// Weighted centred normal equations on the first `k_max` score columns.
/// Leading sub-blocks give the systems for every smaller truncation.
pub(crate) struct TildeSystem {
    y_bar: f64,
    means: Vec<f64>,
    gram: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl TildeSystem {
    pub fn new(scores: &[Vec<f64>], y: &[f64], probs: &[f64], k_max: usize) -> Self {
        let y_bar: f64 = probs.iter().zip(y).map(|(p, y)| p * y).sum();
        let means: Vec<f64> = (0..k_max)
            .map(|j| probs.iter().zip(scores).map(|(p, s)| p * s[j]).sum())
            .collect();
        let mut gram = vec![vec![0.0; k_max]; k_max];
        let mut rhs = vec![0.0; k_max];
        let mut centred = vec![0.0; k_max];
        for ((p, s), yi) in probs.iter().zip(scores).zip(y) {
            for j in 0..k_max {
                centred[j] = s[j] - means[j];
            }
            let dy = yi - y_bar;
            for j in 0..k_max {
                let pj = p * centred[j];
                rhs[j] += pj * dy;
                for k in 0..=j {
                    gram[j][k] += pj * centred[k];
                }
            }
        }
        for j in 0..k_max {
            for k in 0..j {
                gram[k][j] = gram[j][k];
            }
        }
        Self {
            y_bar,
            means,
            gram,
            rhs,
        }
    }

    pub fn y_bar(&self) -> f64 {
        self.y_bar
    }

    pub fn means(&self, t: usize) -> &[f64] {
        &self.means[..t]
    }

    pub fn solve(&self, t: usize) -> Result<Vec<f64>> {
        if t == 0 {
            return Ok(Vec::new());
        }
        let m = DMatrix::from_fn(t, t, |j, k| self.gram[j][k]);
        // Jacobi scaling first, so the guard only sees genuine collinearity
        let d: Vec<f64> = (0..t).map(|j| m[(j, j)]).collect();
        if let Some(j) = d.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateComponent { component: j + 1 });
        }
        let inv_sqrt: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
        let scaled = DMatrix::from_fn(t, t, |j, k| m[(j, k)] * inv_sqrt[j] * inv_sqrt[k]);
        let ev = scaled.clone().symmetric_eigenvalues();
        let (lo, hi) = ev
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular {
                order: t,
                condition,
            });
        }
        let chol = Cholesky::new(scaled).ok_or(Error::Singular {
            order: t,
            condition,
        })?;
        let b = DVector::from_fn(t, |j, _| self.rhs[j] * inv_sqrt[j]);
        let z = chol.solve(&b);
        Ok((0..t).map(|j| z[j] * inv_sqrt[j]).collect())
    }
}

/// Weighted least squares on the first `t` components of an unweighted
/// basis.
pub fn fit_weighted_tilde(
    sample: &Sample,
    basis: Arc<PcBasis>,
    weights: &[f64],
    t: usize,
) -> Result<WeightedFit> {
    if basis.flavor() != Flavor::Unweighted {
        return Err(Error::InvalidParameter(
            "the tilde variant uses the unweighted basis".into(),
        ));
    }
    if t > basis.n_components() {
        return Err(Error::DegenerateComponent {
            component: basis.n_components() + 1,
        });
    }
    let probs = normalized_weights(weights, sample.len())?;
    let scores = basis.score_matrix(sample, t)?;
    let system = TildeSystem::new(&scores, sample.responses(), &probs, t);
    let coeffs = system.solve(t)?;
    Ok(WeightedFit {
        variant: Variant::Tilde,
        coeffs,
        y_bar_w: system.y_bar(),
        score_means_w: system.means(t).to_vec(),
        basis,
        weights: weights.to_vec(),
    })
}

/// Weighted least squares on the first `s` weighted principal components.
pub fn fit_weighted_check(sample: &Sample, weights: &[f64], s: usize) -> Result<WeightedFit> {
    let basis = pca_with(sample, Some(weights), PcaOptions::default())?;
    fit_check_on_basis(sample, Arc::new(basis), weights, s)
}

pub(crate) fn fit_check_on_basis(
    sample: &Sample,
    basis: Arc<PcBasis>,
    weights: &[f64],
    s: usize,
) -> Result<WeightedFit> {
    if s > basis.n_components() {
        return Err(Error::DegenerateComponent {
            component: basis.n_components() + 1,
        });
    }
    let probs = normalized_weights(weights, sample.len())?;
    let scores = basis.score_matrix(sample, s)?;
    let d = diagonal_fit(&scores, sample.responses(), &probs, s)?;
    Ok(WeightedFit {
        variant: Variant::Check,
        basis,
        coeffs: d.coeffs,
        y_bar_w: d.y_bar,
        score_means_w: d.means,
        weights: weights.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::Grid;
    use crate::fpca::empirical_pca;
    use crate::linmodel::fit_unweighted;

    fn toy(n: usize) -> Sample {
        let g = Arc::new(Grid::uniform(0.0, 1.0, 10).unwrap());
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let a = (i as f64 * 2.1).sin();
                let b = (i as f64 * 0.7).cos();
                let c = ((i * i) as f64 * 0.43).sin();
                g.points()
                    .iter()
                    .map(|t| a + b * t * t + c * (5.0 * t).cos())
                    .collect()
            })
            .collect();
        let y = (0..n).map(|i| ((i * 13) % 7) as f64 * 0.3 - 1.0).collect();
        Sample::from_rows(g, rows, y).unwrap()
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("Tilde".parse::<Variant>().unwrap(), Variant::Tilde);
        assert_eq!("check".parse::<Variant>().unwrap(), Variant::Check);
        assert!("hat".parse::<Variant>().is_err());
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let s = toy(9);
        let basis = Arc::new(empirical_pca(&s).unwrap());
        let w = vec![2.5; 9];
        let pilot = fit_unweighted(&s, Arc::clone(&basis), 3).unwrap();
        let tilde = fit_weighted_tilde(&s, Arc::clone(&basis), &w, 3).unwrap();
        let check = fit_weighted_check(&s, &w, 3).unwrap();
        for (a, b) in pilot.coeffs().iter().zip(tilde.coeffs()) {
            assert!((a - b).abs() < 1e-9);
        }
        for c in s.curves() {
            let p = pilot.predict(c).unwrap();
            assert!((tilde.predict(c).unwrap() - p).abs() < 1e-9);
            assert!((check.predict(c).unwrap() - p).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_truncation_is_weighted_mean() {
        let s = toy(6);
        let w = [1.0, 2.0, 3.0, 1.0, 1.0, 2.0];
        let fit = fit_weighted_check(&s, &w, 0).unwrap();
        let expect = s
            .responses()
            .iter()
            .zip(&w)
            .map(|(y, w)| y * w)
            .sum::<f64>()
            / 10.0;
        assert!((fit.y_bar_w() - expect).abs() < 1e-12);
        for c in s.curves() {
            assert_eq!(fit.predict(c).unwrap(), fit.y_bar_w());
        }
    }

    #[test]
    fn check_predicts_weighted_mean_at_weighted_mean_curve() {
        let s = toy(8);
        let w = [1.0, 5.0, 0.5, 2.0, 1.0, 3.0, 0.2, 1.0];
        let fit = fit_weighted_check(&s, &w, 3).unwrap();
        let p = fit.predict(fit.basis().mean()).unwrap();
        assert!((p - fit.y_bar_w()).abs() < 1e-10);
    }

    #[test]
    fn collinear_system_is_rejected() {
        // two identical score columns
        let scores: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64]).collect();
        let y = vec![0.0, 1.0, 0.5, 2.0, 1.0, 3.0];
        let probs = vec![1.0 / 6.0; 6];
        let sys = TildeSystem::new(&scores, &y, &probs, 2);
        assert!(sys.solve(1).is_ok());
        assert!(matches!(
            sys.solve(2),
            Err(Error::Singular { order: 2, .. })
        ));
    }

    #[test]
    fn rejects_bad_weights() {
        let s = toy(5);
        let basis = Arc::new(empirical_pca(&s).unwrap());
        assert!(fit_weighted_tilde(&s, basis, &[1.0, 1.0, -1.0, 1.0, 1.0], 1).is_err());
        assert!(fit_weighted_check(&s, &[1.0; 4], 1).is_err());
    }
}
