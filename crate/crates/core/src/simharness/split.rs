//! Repeated random half-split evaluation of the weighted predictors
//! against the unweighted one.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::Sample;
use crate::error::{Error, Result};
use crate::fpca::empirical_pca;
use crate::linmodel::fit_unweighted;
use crate::selection::{cross_validate_variants, fit_pipeline_on_basis, CvConfig};
use crate::wls::Variant;

/// What held-out predictions are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Observed responses.
    Y,
    /// Known regression means (simulated data only).
    Mu,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Y => "y",
            Target::Mu => "mu",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(Target::Y),
            "mu" => Ok(Target::Mu),
            other => Err(Error::InvalidParameter(format!("unknown target '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub replicates: usize,
    /// Training size; defaults to half the sample.
    pub train_size: Option<usize>,
    pub variants: Vec<Variant>,
    pub target: Target,
    pub seed: u64,
    pub cv: CvConfig,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            replicates: 100,
            train_size: None,
            variants: vec![Variant::Tilde, Variant::Check],
            target: Target::Y,
            seed: 0,
            cv: CvConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub mse: f64,
    /// `ln(MSE_weighted / MSE_unweighted)`.
    pub log_ratio: f64,
    /// Share of held-out curves predicted strictly better than by the
    /// unweighted predictor.
    pub win_proportion: f64,
    pub chosen: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub mse_unweighted: f64,
    pub unweighted_r: usize,
    pub outcomes: Vec<VariantOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    /// Min, lower quartile, median, upper quartile, max of the log ratios.
    pub log_ratio_quantiles: [f64; 5],
    pub median_log_ratio: f64,
    pub mean_win_proportion: f64,
    /// Share of replicates whose win proportion exceeds one half.
    pub share_win_above_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub replicates_requested: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub target: Target,
    pub variants: Vec<Variant>,
    pub replicates: Vec<ReplicateResult>,
    pub failed: Vec<FailedReplicate>,
    pub summaries: Vec<VariantSummary>,
}

impl ExperimentReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    /// One row per completed replicate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "replicate".to_string(),
            "mse_unweighted".to_string(),
            "r_unweighted".to_string(),
        ];
        for v in &self.variants {
            for col in ["mse", "log_ratio", "win_proportion", "r", "k"] {
                header.push(format!("{col}_{v}"));
            }
        }
        w.write_record(&header)?;
        for rep in &self.replicates {
            let mut row = vec![
                rep.index.to_string(),
                rep.mse_unweighted.to_string(),
                rep.unweighted_r.to_string(),
            ];
            for o in &rep.outcomes {
                row.extend([
                    o.mse.to_string(),
                    o.log_ratio.to_string(),
                    o.win_proportion.to_string(),
                    o.chosen.0.to_string(),
                    o.chosen.1.to_string(),
                ]);
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Repeatedly split `sample` at random, fit on one part with
/// cross-validated truncations and score predictions on the other.
pub fn split_experiment(
    sample: &Sample,
    truth: Option<&[f64]>,
    config: &SplitConfig,
) -> Result<ExperimentReport> {
    let n = sample.len();
    let n_train = config.train_size.unwrap_or(n / 2);
    if config.replicates == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replicate".into(),
        ));
    }
    if n_train < 4 || n_train >= n {
        return Err(Error::InvalidParameter(format!(
            "training size {n_train} must lie in [4, {}] so that both parts are non-empty",
            n.saturating_sub(1)
        )));
    }
    if config.variants.is_empty() {
        return Err(Error::InvalidParameter("no variants requested".into()));
    }
    let mut dedup = config.variants.clone();
    dedup.sort();
    dedup.dedup();
    if dedup.len() != config.variants.len() {
        return Err(Error::InvalidParameter("duplicate variants".into()));
    }
    let targets: &[f64] = match (config.target, truth) {
        (Target::Y, _) => sample.responses(),
        (Target::Mu, Some(mu)) if mu.len() == n => mu,
        (Target::Mu, Some(mu)) => {
            return Err(Error::LengthMismatch {
                expected: n,
                got: mu.len(),
            })
        }
        (Target::Mu, None) => {
            return Err(Error::InvalidParameter(
                "target 'mu' needs the true regression means".into(),
            ))
        }
    };

    let outcomes: Vec<std::result::Result<ReplicateResult, FailedReplicate>> = (0..config
        .replicates)
        .into_par_iter()
        .map(|b| {
            run_replicate(sample, targets, n_train, b, config).map_err(|e| FailedReplicate {
                index: b,
                error: e.to_string(),
            })
        })
        .collect();

    let mut replicates = Vec::new();
    let mut failed = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => replicates.push(r),
            Err(f) => failed.push(f),
        }
    }
    let summaries = config
        .variants
        .iter()
        .enumerate()
        .map(|(v, &variant)| summarize(variant, v, &replicates))
        .collect();
    Ok(ExperimentReport {
        replicates_requested: config.replicates,
        n_train,
        n_test: n - n_train,
        seed: config.seed,
        target: config.target,
        variants: config.variants.clone(),
        replicates,
        failed,
        summaries,
    })
}

fn summarize(variant: Variant, pos: usize, reps: &[ReplicateResult]) -> VariantSummary {
    let mut logs: Vec<f64> = reps.iter().map(|r| r.outcomes[pos].log_ratio).collect();
    logs.sort_by(f64::total_cmp);
    let q = [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&logs, p));
    let wins: Vec<f64> = reps
        .iter()
        .map(|r| r.outcomes[pos].win_proportion)
        .collect();
    let count = wins.len().max(1) as f64;
    VariantSummary {
        variant,
        log_ratio_quantiles: q,
        median_log_ratio: q[2],
        mean_win_proportion: wins.iter().sum::<f64>() / count,
        share_win_above_half: wins.iter().filter(|&&p| p > 0.5).count() as f64 / count,
    }
}

fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_replicate(
    sample: &Sample,
    targets: &[f64],
    n_train: usize,
    index: usize,
    config: &SplitConfig,
) -> Result<ReplicateResult> {
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.shuffle(&mut replicate_rng(config.seed, index));
    let (train_idx, test_idx) = order.split_at(n_train);
    let train = sample.subset(train_idx)?;

    let cv = cross_validate_variants(&train, &config.variants, &config.cv)?;
    let basis = Arc::new(empirical_pca(&train)?);
    let unweighted_r = cv[0].unweighted_r;
    let pilot = fit_unweighted(&train, Arc::clone(&basis), unweighted_r)?;

    let test_curves: Vec<_> = test_idx.iter().map(|&i| &sample.curves()[i]).collect();
    let test_targets: Vec<f64> = test_idx.iter().map(|&i| targets[i]).collect();
    let base_err: Vec<f64> = test_curves
        .iter()
        .zip(&test_targets)
        .map(|(c, t)| pilot.predict(c).map(|p| (p - t).powi(2)))
        .collect::<Result<_>>()?;
    let n_test = test_idx.len() as f64;
    let mse_unweighted = base_err.iter().sum::<f64>() / n_test;

    let mut outcomes = Vec::with_capacity(cv.len());
    for res in &cv {
        let (r, k) = res.chosen;
        let pipeline = fit_pipeline_on_basis(
            &train,
            Arc::clone(&basis),
            r,
            k,
            res.variant,
            &config.cv.variance,
        )?;
        let err: Vec<f64> = test_curves
            .iter()
            .zip(&test_targets)
            .map(|(c, t)| pipeline.predict(c).map(|p| (p - t).powi(2)))
            .collect::<Result<_>>()?;
        let mse = err.iter().sum::<f64>() / n_test;
        let wins = err.iter().zip(&base_err).filter(|(w, u)| w < u).count();
        outcomes.push(VariantOutcome {
            variant: res.variant,
            mse,
            log_ratio: (mse / mse_unweighted).ln(),
            win_proportion: wins as f64 / n_test,
            chosen: res.chosen,
        });
    }
    Ok(ReplicateResult {
        index,
        mse_unweighted,
        unweighted_r,
        outcomes,
    })
}
