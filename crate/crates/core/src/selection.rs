//! Cross-validated choice of the pilot truncation `r` and the weighted
//! truncation `k` (`t` for the tilde variant, `s` for the check variant),
//! and the end-to-end fitted pipeline.
//!
//! Every fold refits everything on its training observations: the
//! principal components, the pilot fit, the variance model and the
//! weighted fit. The held-out responses are never read while fitting.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{Curve, Sample};
use crate::error::{Error, Result};
use crate::fpca::{empirical_pca, normalized_weights, pca_with, PcBasis, PcaOptions};
use crate::linmodel::{centred_prediction, diagonal_fit_prefix, fit_unweighted, LinearFit};
use crate::varmodel::{fit_power_of_mean, VarianceConfig, VarianceModel};
use crate::wls::{fit_check_on_basis, fit_weighted_tilde, TildeSystem, Variant, WeightedFit};

/// Largest truncation considered by default.
pub const DEFAULT_MAX_TRUNCATION: usize = 20;

/// Relative tolerance under which two criterion values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `min(20, (n - 1) / 4)`.
pub fn default_max_truncation(n: usize) -> usize {
    DEFAULT_MAX_TRUNCATION.min(n.saturating_sub(1) / 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CvConfig {
    pub r_max: Option<usize>,
    pub k_max: Option<usize>,
    /// `None` is leave-one-out; `Some(p)` assigns observation `i` to fold
    /// `i mod p`.
    pub folds: Option<usize>,
    pub variance: VarianceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub variant: Variant,
    pub r_max: usize,
    pub k_max: usize,
    /// `scores[r][k]`; failed cells hold `+inf`.
    pub scores: Vec<Vec<f64>>,
    pub chosen: (usize, usize),
    pub ties_broken: bool,
    /// Criterion of the unweighted predictor for each `r`, from the same folds.
    pub unweighted_scores: Vec<f64>,
    pub unweighted_r: usize,
}

/// Held-out predictions of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub test_indices: Vec<usize>,
    /// `unweighted[r]`, one entry per test index; `None` if the fit failed.
    pub unweighted: Vec<Option<Vec<f64>>>,
    /// `weighted[v][r][k]` for the `v`-th requested variant.
    pub weighted: Vec<Vec<Vec<Option<Vec<f64>>>>>,
}

/// Argmin over a grid of criterion values. Ties (within
/// [`TIE_TOLERANCE`] relative) go to the smallest `r + k`, then the
/// smallest `r`. Non-finite cells are skipped. Returns `(r, k, ties_broken)`.
pub fn select_cell(scores: &[Vec<f64>]) -> Option<(usize, usize, bool)> {
    let best = scores
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let limit = best + TIE_TOLERANCE * best.abs();
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for (r, row) in scores.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if v.is_finite() && v <= limit {
                candidates.push((r, k));
            }
        }
    }
    let ties = candidates.len() > 1;
    candidates.sort_by_key(|&(r, k)| (r + k, r));
    candidates.first().map(|&(r, k)| (r, k, ties))
}

struct Plan {
    r_max: usize,
    k_max: usize,
    folds: Vec<Vec<usize>>,
}

fn plan(sample: &Sample, config: &CvConfig) -> Result<Plan> {
    let n = sample.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    let p = match config.folds {
        None => n,
        Some(p) if (2..=n).contains(&p) => p,
        Some(p) => {
            return Err(Error::InvalidParameter(format!(
                "fold count {p} must lie in [2, {n}]"
            )))
        }
    };
    let folds: Vec<Vec<usize>> = (0..p).map(|f| (f..n).step_by(p).collect()).collect();
    let smallest_train = n - folds.iter().map(|f| f.len()).max().unwrap_or(1);
    let feasible = (smallest_train - 1).min(sample.grid().len());
    let default = default_max_truncation(n);
    let r_max = config.r_max.unwrap_or(default);
    let k_max = config.k_max.unwrap_or(default);
    if r_max > feasible || k_max > feasible {
        return Err(Error::InvalidParameter(format!(
            "truncation grid ({r_max}, {k_max}) exceeds the {feasible} components estimable from {smallest_train} observations"
        )));
    }
    Ok(Plan {
        r_max,
        k_max,
        folds,
    })
}

/// Held-out predictions for every fold, cell and requested variant.
pub fn fold_predictions(
    sample: &Sample,
    variants: &[Variant],
    config: &CvConfig,
) -> Result<Vec<FoldPredictions>> {
    let plan = plan(sample, config)?;
    let n = sample.len();
    Ok(plan
        .folds
        .par_iter()
        .map(|test| {
            let train_idx: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
            let tests: Vec<&Curve> = test.iter().map(|&i| &sample.curves()[i]).collect();
            // train_idx has at least 3 entries, so subset cannot fail
            let train = sample.subset(&train_idx).expect("valid fold");
            let mut out = predict_fold(
                &train,
                &tests,
                variants,
                plan.r_max,
                plan.k_max,
                &config.variance,
            );
            out.test_indices = test.clone();
            out
        })
        .collect())
}

/// Fits every `(r, k)` pipeline on `train` and predicts `tests`.
fn predict_fold(
    train: &Sample,
    tests: &[&Curve],
    variants: &[Variant],
    r_max: usize,
    k_max: usize,
    variance: &VarianceConfig,
) -> FoldPredictions {
    let empty_weighted = vec![vec![vec![None; k_max + 1]; r_max + 1]; variants.len()];
    let mut out = FoldPredictions {
        test_indices: Vec::new(),
        unweighted: vec![None; r_max + 1],
        weighted: empty_weighted,
    };
    let cap = r_max.max(k_max);
    let Ok(basis) = pca_with(
        train,
        None,
        PcaOptions {
            max_components: Some(cap),
        },
    ) else {
        return out;
    };
    let avail = basis.n_components().min(cap);
    let (Ok(train_scores), Ok(test_scores)) = (
        basis.score_matrix(train, avail),
        tests
            .iter()
            .map(|c| basis.scores(c, avail))
            .collect::<Result<Vec<_>>>(),
    ) else {
        return out;
    };
    let y = train.responses();
    let n = train.len();
    let uniform = vec![1.0 / n as f64; n];
    let pilot = diagonal_fit_prefix(&train_scores, y, &uniform, avail.min(r_max));

    for r in 0..=r_max.min(pilot.coeffs.len()) {
        let coeffs = &pilot.coeffs[..r];
        let means = &pilot.means[..r];
        let predict = |s: &[f64]| centred_prediction(pilot.y_bar, coeffs, means, &s[..r]);
        out.unweighted[r] = Some(test_scores.iter().map(|s| predict(s)).collect());

        let fitted: Vec<f64> = train_scores.iter().map(|s| predict(s)).collect();
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let Ok(model) = fit_power_of_mean(&fitted, &resid, variance) else {
            continue;
        };
        let weights = model.weights(&fitted);
        let Ok(probs) = normalized_weights(&weights, n) else {
            continue;
        };

        for (v, variant) in variants.iter().enumerate() {
            let row = &mut out.weighted[v][r];
            match variant {
                Variant::Tilde => {
                    let kt = k_max.min(avail);
                    let system = TildeSystem::new(&train_scores, y, &probs, kt);
                    for (k, cell) in row.iter_mut().enumerate().take(kt + 1) {
                        let Ok(b) = system.solve(k) else { break };
                        let m = system.means(k);
                        *cell = Some(
                            test_scores
                                .iter()
                                .map(|s| centred_prediction(system.y_bar(), &b, m, &s[..k]))
                                .collect(),
                        );
                    }
                }
                Variant::Check => {
                    let Ok(wbasis) = pca_with(
                        train,
                        Some(&weights),
                        PcaOptions {
                            max_components: Some(k_max),
                        },
                    ) else {
                        continue;
                    };
                    let kc = wbasis.n_components().min(k_max);
                    let (Ok(ws), Ok(wt)) = (
                        wbasis.score_matrix(train, kc),
                        tests
                            .iter()
                            .map(|c| wbasis.scores(c, kc))
                            .collect::<Result<Vec<_>>>(),
                    ) else {
                        continue;
                    };
                    let d = diagonal_fit_prefix(&ws, y, &probs, kc);
                    for (k, cell) in row.iter_mut().enumerate().take(d.coeffs.len() + 1) {
                        *cell = Some(
                            wt.iter()
                                .map(|s| {
                                    centred_prediction(
                                        d.y_bar,
                                        &d.coeffs[..k],
                                        &d.means[..k],
                                        &s[..k],
                                    )
                                })
                                .collect(),
                        );
                    }
                }
            }
        }
    }
    out
}

fn squared_error(y: &[f64], test: &[usize], pred: &Option<Vec<f64>>) -> f64 {
    match pred {
        Some(p) => test.iter().zip(p).map(|(&i, p)| (y[i] - p).powi(2)).sum(),
        None => f64::INFINITY,
    }
}

/// Cross-validation for several variants sharing the same folds.
pub fn cross_validate_variants(
    sample: &Sample,
    variants: &[Variant],
    config: &CvConfig,
) -> Result<Vec<CvResult>> {
    let plan = plan(sample, config)?;
    let folds = fold_predictions(sample, variants, config)?;
    let y = sample.responses();

    // ordered reduction over folds keeps results reproducible
    let mut unweighted = vec![0.0; plan.r_max + 1];
    let mut weighted = vec![vec![vec![0.0; plan.k_max + 1]; plan.r_max + 1]; variants.len()];
    for fold in &folds {
        for (r, acc) in unweighted.iter_mut().enumerate() {
            *acc += squared_error(y, &fold.test_indices, &fold.unweighted[r]);
        }
        for (v, grid) in weighted.iter_mut().enumerate() {
            for (r, row) in grid.iter_mut().enumerate() {
                for (k, acc) in row.iter_mut().enumerate() {
                    *acc += squared_error(y, &fold.test_indices, &fold.weighted[v][r][k]);
                }
            }
        }
    }
    let unweighted_r = select_cell(&unweighted.iter().map(|&w| vec![w]).collect::<Vec<_>>())
        .map(|(r, _, _)| r)
        .ok_or(Error::AllCellsFailed)?;

    variants
        .iter()
        .zip(weighted)
        .map(|(&variant, scores)| {
            let (r, k, ties_broken) = select_cell(&scores).ok_or(Error::AllCellsFailed)?;
            Ok(CvResult {
                variant,
                r_max: plan.r_max,
                k_max: plan.k_max,
                scores,
                chosen: (r, k),
                ties_broken,
                unweighted_scores: unweighted.clone(),
                unweighted_r,
            })
        })
        .collect()
}

pub fn cross_validate(sample: &Sample, variant: Variant, config: &CvConfig) -> Result<CvResult> {
    let mut all = cross_validate_variants(sample, &[variant], config)?;
    Ok(all.remove(0))
}

/// Pilot fit, variance model and weighted fit at fixed truncations.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub pilot: LinearFit,
    pub variance: VarianceModel,
    pub weighted: WeightedFit,
    pub selection: Option<CvResult>,
}

impl Pipeline {
    pub fn variant(&self) -> Variant {
        self.weighted.variant()
    }

    /// Weighted prediction.
    pub fn predict(&self, x: &Curve) -> Result<f64> {
        self.weighted.predict(x)
    }

    /// Prediction of the pilot (unweighted) fit.
    pub fn predict_unweighted(&self, x: &Curve) -> Result<f64> {
        self.pilot.predict(x)
    }
}

pub fn fit_pipeline(
    sample: &Sample,
    r: usize,
    k: usize,
    variant: Variant,
    variance: &VarianceConfig,
) -> Result<Pipeline> {
    let basis = Arc::new(empirical_pca(sample)?);
    fit_pipeline_on_basis(sample, basis, r, k, variant, variance)
}

pub(crate) fn fit_pipeline_on_basis(
    sample: &Sample,
    basis: Arc<PcBasis>,
    r: usize,
    k: usize,
    variant: Variant,
    variance: &VarianceConfig,
) -> Result<Pipeline> {
    let pilot = fit_unweighted(sample, Arc::clone(&basis), r)?;
    let fitted = pilot.fitted_values(sample)?;
    let resid: Vec<f64> = sample
        .responses()
        .iter()
        .zip(&fitted)
        .map(|(y, f)| y - f)
        .collect();
    let model = fit_power_of_mean(&fitted, &resid, variance)?;
    let weights = model.weights(&fitted);
    let weighted = match variant {
        Variant::Tilde => fit_weighted_tilde(sample, basis, &weights, k)?,
        Variant::Check => {
            let wbasis = pca_with(sample, Some(&weights), PcaOptions::default())?;
            fit_check_on_basis(sample, Arc::new(wbasis), &weights, k)?
        }
    };
    Ok(Pipeline {
        pilot,
        variance: model,
        weighted,
        selection: None,
    })
}

/// Cross-validate `(r, k)` and fit the pipeline at the chosen cell.
pub fn fit_with_cv(sample: &Sample, variant: Variant, config: &CvConfig) -> Result<Pipeline> {
    let cv = cross_validate(sample, variant, config)?;
    let (r, k) = cv.chosen;
    let mut pipeline = fit_pipeline(sample, r, k, variant, &config.variance)?;
    pipeline.selection = Some(cv);
    Ok(pipeline)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_size() {
        assert_eq!(default_max_truncation(8), 1);
        assert_eq!(default_max_truncation(102), 20);
        assert_eq!(default_max_truncation(41), 10);
    }

    #[test]
    fn tie_rule() {
        let grid = vec![
            vec![5.0, 4.0, 3.0],
            vec![4.0, 3.0, 9.0],
            vec![f64::INFINITY, 7.0, 3.0],
        ];
        // (0,2) and (1,1) tie on r + k = 2; smaller r wins
        assert_eq!(select_cell(&grid), Some((0, 2, true)));
        let single = vec![vec![2.0, 1.0], vec![1.5, 3.0]];
        assert_eq!(select_cell(&single), Some((0, 1, false)));
        let dead = vec![vec![f64::INFINITY; 2]; 2];
        assert_eq!(select_cell(&dead), None);
    }
}
