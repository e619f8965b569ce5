//! Power-of-the-mean variance model `g(u) = |c1 u|^c2`, fitted to squared
//! pilot residuals.
//!
//! Writing `a = |c1|^c2` turns the objective
//! `T(c1, c2) = sum_i (e_i^2 - |c1 mu_i|^c2)^2` into a linear least-squares
//! problem in `a` for fixed `c2`, with closed-form optimum
//! `a(c2) = sum e_i^2 m_i^c2 / sum m_i^(2 c2)`, `m_i = max(|mu_i|, floor)`.
//! The remaining exponent is found by a grid search on `[0, c2_max]`
//! refined with golden-section search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceConfig {
    pub c2_max: f64,
    pub grid_step: f64,
    pub tolerance: f64,
    /// Mean floor as a fraction of the largest training `|mu|`.
    pub floor_fraction: f64,
    /// Weights are clamped to `[median / ratio, median * ratio]`.
    pub weight_cap_ratio: f64,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        Self {
            c2_max: 4.0,
            grid_step: 0.01,
            tolerance: 1e-6,
            floor_fraction: 1e-6,
            weight_cap_ratio: 1e4,
        }
    }
}

impl VarianceConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.c2_max >= 0.0
            && self.c2_max.is_finite()
            && self.grid_step > 0.0
            && self.tolerance > 0.0
            && self.floor_fraction > 0.0
            && self.weight_cap_ratio >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid variance configuration {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// The fitted means carried no information about the exponent, so the
    /// homoscedastic model `c2 = 0` was used.
    HomoscedasticFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceModel {
    pub c2: f64,
    pub a: f64,
    pub mean_floor: f64,
    pub weight_cap_ratio: f64,
    pub median_weight: f64,
    pub status: FitStatus,
}

impl VarianceModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c2.is_finite()
            && self.a > 0.0
            && self.a.is_finite()
            && self.mean_floor > 0.0
            && self.weight_cap_ratio >= 1.0
            && self.median_weight > 0.0
            && self.median_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid variance model {self:?}"
            )))
        }
    }

    /// `c1 = a^(1/c2)`; undefined for the homoscedastic model.
    pub fn c1(&self) -> Option<f64> {
        (self.c2 != 0.0).then(|| self.a.powf(1.0 / self.c2))
    }

    /// Modelled variance `a * max(|u|, floor)^c2`.
    pub fn variance(&self, u: f64) -> f64 {
        self.a * u.abs().max(self.mean_floor).powf(self.c2)
    }

    /// Inverse modelled variance before clamping.
    pub fn raw_weight(&self, u: f64) -> f64 {
        1.0 / self.variance(u)
    }

    pub fn weight(&self, u: f64) -> f64 {
        let lo = self.median_weight / self.weight_cap_ratio;
        let hi = self.median_weight * self.weight_cap_ratio;
        self.raw_weight(u).clamp(lo, hi)
    }

    pub fn weights(&self, fitted: &[f64]) -> Vec<f64> {
        fitted.iter().map(|&u| self.weight(u)).collect()
    }
}

pub fn weight(model: &VarianceModel, fitted_value: f64) -> f64 {
    model.weight(fitted_value)
}

/// `T` in the `(a, c2)` parametrization, with the mean floor applied.
pub fn objective(fitted: &[f64], residuals: &[f64], a: f64, c2: f64, floor: f64) -> f64 {
    fitted
        .iter()
        .zip(residuals)
        .map(|(u, e)| {
            let d = e * e - a * u.abs().max(floor).powf(c2);
            d * d
        })
        .sum()
}

struct Profile {
    log_m: Vec<f64>,
    e2: Vec<f64>,
    log_ref: f64,
}

impl Profile {
    /// Optimal scale and objective at exponent `c`, computed on means
    /// rescaled by the largest one to keep the powers in range.
    fn eval(&self, c: f64) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        let q: Vec<f64> = self
            .log_m
            .iter()
            .map(|l| (c * (l - self.log_ref)).exp())
            .collect();
        for (qi, e2) in q.iter().zip(&self.e2) {
            num += e2 * qi;
            den += qi * qi;
        }
        let a_scaled = (num / den).max(f64::MIN_POSITIVE);
        let t = q
            .iter()
            .zip(&self.e2)
            .map(|(qi, e2)| (e2 - a_scaled * qi).powi(2))
            .sum();
        (a_scaled * (-c * self.log_ref).exp(), t)
    }
}

/// Minimize the residual objective over `c2` in `[0, c2_max]`.
pub fn fit_power_of_mean(
    fitted: &[f64],
    residuals: &[f64],
    config: &VarianceConfig,
) -> Result<VarianceModel> {
    config.validate()?;
    let n = fitted.len();
    if residuals.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: residuals.len(),
        });
    }
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if fitted.iter().chain(residuals).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "non-finite fitted value or residual".into(),
        ));
    }
    if residuals.iter().all(|&e| e == 0.0) {
        return Err(Error::InvalidParameter(
            "all residuals are zero; the variance model is not identifiable".into(),
        ));
    }
    let max_abs = fitted.iter().fold(0.0_f64, |m, u| m.max(u.abs()));
    let mean_floor = config.floor_fraction * if max_abs > 0.0 { max_abs } else { 1.0 };
    let m: Vec<f64> = fitted.iter().map(|u| u.abs().max(mean_floor)).collect();
    let e2: Vec<f64> = residuals.iter().map(|e| e * e).collect();

    let (m_min, m_max) = m.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (c2, a, status) = if m_max / m_min - 1.0 < 1e-12 {
        let a = e2.iter().sum::<f64>() / n as f64;
        (0.0, a, FitStatus::HomoscedasticFallback)
    } else {
        let profile = Profile {
            log_m: m.iter().map(|v| v.ln()).collect(),
            e2,
            log_ref: m_max.ln(),
        };
        let (c2, a) = search_exponent(&profile, config);
        (c2, a, FitStatus::Fitted)
    };

    let mut model = VarianceModel {
        c2,
        a,
        mean_floor,
        weight_cap_ratio: config.weight_cap_ratio,
        median_weight: 1.0,
        status,
    };
    let mut raw: Vec<f64> = fitted.iter().map(|&u| model.raw_weight(u)).collect();
    model.median_weight = median(&mut raw);
    model.validate()?;
    Ok(model)
}

fn search_exponent(profile: &Profile, config: &VarianceConfig) -> (f64, f64) {
    let steps = (config.c2_max / config.grid_step).round() as usize;
    let mut best_c = 0.0;
    let (mut best_a, mut best_t) = profile.eval(0.0);
    for k in 1..=steps {
        let c = (k as f64 * config.grid_step).min(config.c2_max);
        let (a, t) = profile.eval(c);
        if t < best_t {
            best_c = c;
            best_a = a;
            best_t = t;
        }
    }

    // golden-section refinement on the bracketing grid cells
    let mut lo = (best_c - config.grid_step).max(0.0);
    let mut hi = (best_c + config.grid_step).min(config.c2_max);
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = profile.eval(x1).1;
    let mut f2 = profile.eval(x2).1;
    while hi - lo > config.tolerance {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = profile.eval(x1).1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = profile.eval(x2).1;
        }
    }
    let c = 0.5 * (lo + hi);
    let (a, t) = profile.eval(c);
    if t <= best_t {
        (c, a)
    } else {
        (best_c, best_a)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn means(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.5 + 0.37 * i as f64).collect()
    }

    #[test]
    fn recovers_exact_linear_power() {
        let mu = means(20);
        let res: Vec<f64> = mu.iter().map(|u| (2.0 * u).abs().sqrt()).collect();
        let m = fit_power_of_mean(&mu, &res, &VarianceConfig::default()).unwrap();
        assert_eq!(m.status, FitStatus::Fitted);
        assert!((m.c2 - 1.0).abs() < 1e-4, "c2 = {}", m.c2);
        assert!((m.c1().unwrap() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn constant_residuals_are_homoscedastic() {
        let mu = means(15);
        let res: Vec<f64> = (0..15)
            .map(|i| if i % 2 == 0 { 0.7 } else { -0.7 })
            .collect();
        let m = fit_power_of_mean(&mu, &res, &VarianceConfig::default()).unwrap();
        assert!(m.c2.abs() < 1e-4);
        assert!((m.a - 0.49).abs() < 1e-6);
    }

    #[test]
    fn equal_means_fall_back() {
        let mu = vec![2.0; 6];
        let res = vec![0.1, -0.3, 0.2, 0.5, -0.1, 0.0];
        let m = fit_power_of_mean(&mu, &res, &VarianceConfig::default()).unwrap();
        assert_eq!(m.status, FitStatus::HomoscedasticFallback);
        assert_eq!(m.c2, 0.0);
        assert!(m.c1().is_none());
    }

    #[test]
    fn input_validation() {
        let cfg = VarianceConfig::default();
        assert!(fit_power_of_mean(&[1.0, 2.0], &[0.1, 0.2], &cfg).is_err());
        assert!(fit_power_of_mean(&[1.0, 2.0, 3.0], &[0.0; 3], &cfg).is_err());
        assert!(fit_power_of_mean(&[1.0, 2.0, 3.0], &[0.1, 0.2], &cfg).is_err());
    }

    fn model(c2: f64, a: f64) -> VarianceModel {
        VarianceModel {
            c2,
            a,
            mean_floor: 1e-6,
            weight_cap_ratio: 1e4,
            median_weight: 1.0 / 9.0,
            status: FitStatus::Fitted,
        }
    }

    #[test]
    fn weight_formulas() {
        let m = model(2.0, 1.0);
        assert!((m.weight(3.0) - 1.0 / 9.0).abs() < 1e-15);
        let h = VarianceModel {
            median_weight: 0.5,
            ..model(0.0, 2.0)
        };
        for u in [-5.0, 0.0, 1e-9, 3.0, 1e6] {
            assert_eq!(h.weight(u), 0.5);
        }
        let f = model(1.5, 2.0);
        let raw = f.raw_weight(0.0);
        assert!((raw - 1.0 / (2.0 * 1e-6_f64.powf(1.5))).abs() / raw < 1e-12);
        // far above the cap, so it binds
        assert_eq!(f.weight(0.0), f.median_weight * 1e4);
        assert!(f.weight(0.0).is_finite());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
