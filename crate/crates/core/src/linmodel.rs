//! Unweighted principal-component regression (the pilot estimator).
//!
//! With the basis taken from the sample's own principal components the
//! centred scores are uncorrelated, so the least-squares coefficients are
//! available one component at a time:
//!
//! `b_j = sum_i (X_ij - Xbar_j)(Y_i - Ybar) / sum_i (X_ij - Xbar_j)^2`.
//!
//! The intercept is kept implicitly as `(Ybar, Xbar_j)`.

use std::sync::Arc;

use crate::curves::{Curve, Sample};
use crate::error::{Error, Result};
use crate::fpca::{Flavor, PcBasis};

#[derive(Debug, Clone)]
pub struct LinearFit {
    basis: Arc<PcBasis>,
    coeffs: Vec<f64>,
    y_bar: f64,
    score_means: Vec<f64>,
}

impl LinearFit {
    pub fn from_parts(
        basis: Arc<PcBasis>,
        coeffs: Vec<f64>,
        y_bar: f64,
        score_means: Vec<f64>,
    ) -> Result<Self> {
        check_parts(&basis, &coeffs, &score_means, y_bar)?;
        Ok(Self {
            basis,
            coeffs,
            y_bar,
            score_means,
        })
    }

    pub fn basis(&self) -> &Arc<PcBasis> {
        &self.basis
    }

    /// Truncation level (number of components).
    pub fn r(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn y_bar(&self) -> f64 {
        self.y_bar
    }

    pub fn score_means(&self) -> &[f64] {
        &self.score_means
    }

    /// `alpha = Ybar - sum_j b_j Xbar_j`.
    pub fn intercept(&self) -> f64 {
        self.y_bar
            - self
                .coeffs
                .iter()
                .zip(&self.score_means)
                .map(|(b, m)| b * m)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &Curve) -> Result<f64> {
        let scores = self.basis.scores(x, self.r())?;
        Ok(centred_prediction(
            self.y_bar,
            &self.coeffs,
            &self.score_means,
            &scores,
        ))
    }

    pub fn fitted_values(&self, sample: &Sample) -> Result<Vec<f64>> {
        sample.curves().iter().map(|c| self.predict(c)).collect()
    }
}

pub(crate) fn check_parts(
    basis: &PcBasis,
    coeffs: &[f64],
    score_means: &[f64],
    y_bar: f64,
) -> Result<()> {
    if coeffs.len() != score_means.len() {
        return Err(Error::LengthMismatch {
            expected: coeffs.len(),
            got: score_means.len(),
        });
    }
    if coeffs.len() > basis.n_components() {
        return Err(Error::IndexOutOfRange {
            index: coeffs.len() - 1,
            available: basis.n_components(),
        });
    }
    if !y_bar.is_finite() || coeffs.iter().chain(score_means).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite fit parameter".into()));
    }
    Ok(())
}

pub(crate) fn centred_prediction(y_bar: f64, coeffs: &[f64], means: &[f64], scores: &[f64]) -> f64 {
    y_bar
        + coeffs
            .iter()
            .zip(means)
            .zip(scores)
            .map(|((b, m), x)| b * (x - m))
            .sum::<f64>()
}

/// Weighted means and per-component coefficients for a basis whose centred
/// (weighted) scores are uncorrelated. `probs` must sum to one.
pub(crate) struct DiagonalFit {
    pub y_bar: f64,
    pub means: Vec<f64>,
    pub coeffs: Vec<f64>,
}

/// Components are reported 1-based in errors.
pub(crate) fn diagonal_fit(
    scores: &[Vec<f64>],
    y: &[f64],
    probs: &[f64],
    k: usize,
) -> Result<DiagonalFit> {
    let d = diagonal_fit_prefix(scores, y, probs, k);
    if d.coeffs.len() < k {
        return Err(Error::DegenerateComponent {
            component: d.coeffs.len() + 1,
        });
    }
    Ok(d)
}

/// As [`diagonal_fit`], but stops at the first degenerate component and
/// returns the coefficients found so far.
pub(crate) fn diagonal_fit_prefix(
    scores: &[Vec<f64>],
    y: &[f64],
    probs: &[f64],
    k: usize,
) -> DiagonalFit {
    let y_bar: f64 = probs.iter().zip(y).map(|(p, y)| p * y).sum();
    let mut means = Vec::with_capacity(k);
    let mut coeffs = Vec::with_capacity(k);
    for j in 0..k {
        let mean: f64 = probs.iter().zip(scores).map(|(p, s)| p * s[j]).sum();
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for ((p, s), yi) in probs.iter().zip(scores).zip(y) {
            let dx = s[j] - mean;
            sxx += p * dx * dx;
            sxy += p * dx * (yi - y_bar);
        }
        if !(sxx > 0.0) {
            break;
        }
        means.push(mean);
        coeffs.push(sxy / sxx);
    }
    DiagonalFit {
        y_bar,
        means,
        coeffs,
    }
}

/// Least-squares fit on the first `r` components of `basis`, which must be
/// the unweighted principal components of `sample` itself.
pub fn fit_unweighted(sample: &Sample, basis: Arc<PcBasis>, r: usize) -> Result<LinearFit> {
    if basis.flavor() != Flavor::Unweighted {
        return Err(Error::InvalidParameter(
            "the pilot fit needs an unweighted basis".into(),
        ));
    }
    if r > basis.n_components() {
        return Err(Error::DegenerateComponent {
            component: basis.n_components() + 1,
        });
    }
    let scores = basis.score_matrix(sample, r)?;
    let n = sample.len();
    let probs = vec![1.0 / n as f64; n];
    let d = diagonal_fit(&scores, sample.responses(), &probs, r)?;
    Ok(LinearFit {
        basis,
        coeffs: d.coeffs,
        y_bar: d.y_bar,
        score_means: d.means,
    })
}

pub fn predict(fit: &LinearFit, x: &Curve) -> Result<f64> {
    fit.predict(x)
}

/// `Y_i - predict(fit, X_i)` over the training sample.
pub fn residuals(fit: &LinearFit, sample: &Sample) -> Result<Vec<f64>> {
    sample
        .curves()
        .iter()
        .zip(sample.responses())
        .map(|(c, y)| fit.predict(c).map(|p| y - p))
        .collect()
}
