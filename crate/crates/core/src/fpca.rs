//! Functional principal components of a sample of curves.
//!
//! The covariance kernel is discretized on the sample grid and symmetrized
//! with the square roots of the trapezoid weights, `B = W^{1/2} K W^{1/2}`,
//! so a dense symmetric eigensolver applies. Eigenvectors `v` of `B` map
//! back to eigenfunctions `psi = W^{-1/2} v`, which are orthonormal under
//! the quadrature inner product. When there are fewer curves than grid
//! points the `n x n` Gram matrix of the scaled, centred curves is
//! decomposed instead; it has the same nonzero spectrum.
//!
//! The weighted flavour replaces the `1/n` averages by `w_i / sum(w)`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curves::{same_grid, Curve, Grid, Sample};
use crate::error::{Error, Result};

/// Components whose eigenvalue falls below this fraction of the leading
/// eigenvalue are not retained.
pub const RELATIVE_EIGEN_CUTOFF: f64 = 1e-12;

/// Eigenvalues below this fraction of the mean uncentred `int X^2` are
/// rounding noise from centring and are not retained either.
const NOISE_EIGEN_CUTOFF: f64 = 1e-24;

const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Unweighted,
    Weighted,
}

/// Mean curve plus ordered eigenpairs of the (possibly weighted) empirical
/// covariance operator.
#[derive(Debug, Clone)]
pub struct PcBasis {
    flavor: Flavor,
    mean: Curve,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Curve>,
}

impl PcBasis {
    /// Reassemble a basis, e.g. after deserialization.
    pub fn from_parts(
        flavor: Flavor,
        mean: Curve,
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<Curve>,
    ) -> Result<Self> {
        if eigenfunctions.len() > eigenvalues.len() {
            return Err(Error::LengthMismatch {
                expected: eigenvalues.len(),
                got: eigenfunctions.len(),
            });
        }
        if eigenfunctions.iter().any(|f| !f.shares_grid(&mean)) {
            return Err(Error::GridMismatch);
        }
        if eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0)
            || eigenvalues.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::InvalidParameter(
                "eigenvalues must be finite, nonnegative and non-increasing".into(),
            ));
        }
        Ok(Self {
            flavor,
            mean,
            eigenvalues,
            eigenfunctions,
        })
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn mean(&self) -> &Curve {
        &self.mean
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.mean.grid()
    }

    /// Full (clamped) spectrum, non-increasing. Only the first
    /// [`n_components`](Self::n_components) have eigenfunctions.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Curve] {
        &self.eigenfunctions
    }

    pub fn n_components(&self) -> usize {
        self.eigenfunctions.len()
    }

    pub fn eigenfunction(&self, j: usize) -> Result<&Curve> {
        self.eigenfunctions.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            available: self.eigenfunctions.len(),
        })
    }

    /// Uncentred scores of `x` on the first `k` eigenfunctions.
    pub fn scores(&self, x: &Curve, k: usize) -> Result<Vec<f64>> {
        if k > self.n_components() {
            return Err(Error::IndexOutOfRange {
                index: k.saturating_sub(1),
                available: self.n_components(),
            });
        }
        if !same_grid(x.grid(), self.grid()) {
            return Err(Error::GridMismatch);
        }
        let grid = self.grid();
        Ok(self.eigenfunctions[..k]
            .iter()
            .map(|psi| grid.dot(x.values(), psi.values()))
            .collect())
    }

    /// Score rows for every curve of `sample` on the first `k` eigenfunctions.
    pub fn score_matrix(&self, sample: &Sample, k: usize) -> Result<Vec<Vec<f64>>> {
        sample.curves().iter().map(|c| self.scores(c, k)).collect()
    }
}

/// Quadrature inner product of the uncentred `curve` with eigenfunction `j`
/// (zero based).
pub fn score(curve: &Curve, basis: &PcBasis, j: usize) -> Result<f64> {
    let psi = basis.eigenfunction(j)?;
    if !curve.shares_grid(psi) {
        return Err(Error::GridMismatch);
    }
    Ok(curve.grid().dot(curve.values(), psi.values()))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PcaOptions {
    /// Map back at most this many eigenfunctions. The spectrum is always
    /// reported in full.
    pub max_components: Option<usize>,
}

/// Unweighted principal components of `sample`.
pub fn empirical_pca(sample: &Sample) -> Result<PcBasis> {
    pca_with(sample, None, PcaOptions::default())
}

/// Principal components of the covariance reweighted by `weights`.
pub fn weighted_pca(sample: &Sample, weights: &[f64]) -> Result<PcBasis> {
    pca_with(sample, Some(weights), PcaOptions::default())
}

pub fn pca_with(sample: &Sample, weights: Option<&[f64]>, options: PcaOptions) -> Result<PcBasis> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let probs = match weights {
        None => vec![1.0 / n as f64; n],
        Some(w) => normalized_weights(w, n)?,
    };
    let flavor = if weights.is_some() {
        Flavor::Weighted
    } else {
        Flavor::Unweighted
    };
    let grid = sample.grid();
    let rows: Vec<&[f64]> = sample.curves().iter().map(|c| c.values()).collect();
    let d = decompose(grid, &rows, &probs, options.max_components);
    let mean = Curve::new(Arc::clone(grid), d.mean)?;
    let eigenfunctions = d
        .functions
        .into_iter()
        .map(|v| Curve::new(Arc::clone(grid), v))
        .collect::<Result<Vec<_>>>()?;
    Ok(PcBasis {
        flavor,
        mean,
        eigenvalues: d.eigenvalues,
        eigenfunctions,
    })
}

pub(crate) fn normalized_weights(weights: &[f64], n: usize) -> Result<Vec<f64>> {
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::InvalidWeight { index, value });
    }
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

struct Decomposition {
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    functions: Vec<Vec<f64>>,
}

fn decompose(
    grid: &Grid,
    rows: &[&[f64]],
    probs: &[f64],
    max_components: Option<usize>,
) -> Decomposition {
    let n = rows.len();
    let m = grid.len();
    let mut mean = vec![0.0; m];
    for (row, p) in rows.iter().zip(probs) {
        for (acc, x) in mean.iter_mut().zip(row.iter()) {
            *acc += p * x;
        }
    }
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    // scaled centred curves, one row per observation
    let a = DMatrix::from_fn(n, m, |i, k| {
        probs[i].sqrt() * (rows[i][k] - mean[k]) * sqrt_w[k]
    });

    let use_gram = n < m;
    let sym = if use_gram {
        &a * a.transpose()
    } else {
        a.transpose() * &a
    };
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    // stable: tied eigenvalues keep solver order
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

    let leading = eigenvalues.first().copied().unwrap_or(0.0);
    let energy: f64 = rows
        .iter()
        .zip(probs)
        .map(|(row, p)| p * grid.dot(row, row))
        .sum();
    let cutoff = (RELATIVE_EIGEN_CUTOFF * leading).max(NOISE_EIGEN_CUTOFF * energy);
    let mut retained = eigenvalues
        .iter()
        .take_while(|&&l| leading > 0.0 && l > cutoff)
        .count();
    if let Some(cap) = max_components {
        retained = retained.min(cap);
    }

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(retained);
    for (pos, &idx) in order.iter().take(retained).enumerate() {
        let u = eig.eigenvectors.column(idx);
        let v: Vec<f64> = if use_gram {
            let scale = 1.0 / eigenvalues[pos].sqrt();
            (0..m)
                .map(|k| scale * (0..n).map(|i| a[(i, k)] * u[i]).sum::<f64>())
                .collect()
        } else {
            u.iter().copied().collect()
        };
        vectors.push(v);
    }
    if use_gram {
        reorthonormalize(&mut vectors);
    }

    let functions = vectors
        .into_iter()
        .map(|v| {
            let mut psi: Vec<f64> = v.iter().zip(&sqrt_w).map(|(x, s)| x / s).collect();
            fix_sign(grid, &mut psi);
            psi
        })
        .collect();

    Decomposition {
        mean,
        eigenvalues,
        functions,
    }
}

/// Two passes of modified Gram-Schmidt in the Euclidean metric of `v`.
/// Restores orthonormality lost when mapping small Gram eigenvectors back.
fn reorthonormalize(vectors: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for j in 0..vectors.len() {
            let (done, rest) = vectors.split_at_mut(j);
            let v = &mut rest[0];
            for q in done.iter() {
                let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (x, qk) in v.iter_mut().zip(q) {
                    *x -= proj * qk;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}

/// Nonnegative integral; if the integral is numerically zero, the
/// largest-magnitude value is made positive.
fn fix_sign(grid: &Grid, psi: &mut [f64]) {
    let integral = grid.integrate(psi);
    let flip = if integral.abs() > SIGN_TOLERANCE {
        integral < 0.0
    } else {
        let mut best = 0;
        for (k, v) in psi.iter().enumerate() {
            if v.abs() > psi[best].abs() {
                best = k;
            }
        }
        psi[best] < 0.0
    };
    if flip {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::inner_product;

    fn grid(m: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(0.0, 1.0, m).unwrap())
    }

    #[test]
    fn identical_curves_have_no_components() {
        let g = grid(6);
        let c = Curve::from_fn(Arc::clone(&g), |t| t * t + 1.0);
        let s = Sample::new(
            Arc::clone(&g),
            vec![c.clone(), c.clone(), c.clone()],
            vec![0.0; 3],
        )
        .unwrap();
        let b = empirical_pca(&s).unwrap();
        assert_eq!(b.n_components(), 0);
        assert!(b.eigenvalues().iter().all(|&l| l.abs() < 1e-14));
        for (u, v) in b.mean().values().iter().zip(c.values()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn two_curves_single_component() {
        let g = grid(11);
        let a = Curve::from_fn(Arc::clone(&g), |t| 1.0 + t);
        let d = Curve::from_fn(Arc::clone(&g), |t| (3.0 * t).sin() - 0.2);
        let s = Sample::new(
            Arc::clone(&g),
            vec![
                a.combine(1.0, &d, 1.0).unwrap(),
                a.combine(1.0, &d, -1.0).unwrap(),
            ],
            vec![0.0, 1.0],
        )
        .unwrap();
        let b = empirical_pca(&s).unwrap();
        assert_eq!(b.n_components(), 1);
        // K = d(s)d(t), so theta = <d,d>
        let dd = inner_product(&d, &d).unwrap();
        assert!((b.eigenvalues()[0] - dd).abs() < 1e-12);
        let psi = b.eigenfunction(0).unwrap();
        let c = inner_product(psi, &d).unwrap();
        assert!((c.abs() - dd.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn score_orthonormality_and_linearity() {
        let g = grid(15);
        let curves: Vec<Curve> = (0..5)
            .map(|i| {
                let f = i as f64;
                Curve::from_fn(Arc::clone(&g), move |t| (f * t).cos() + f * t * t - 0.3 * f)
            })
            .collect();
        let s = Sample::new(Arc::clone(&g), curves, vec![0.0; 5]).unwrap();
        let b = empirical_pca(&s).unwrap();
        assert!(b.n_components() >= 2);
        let p0 = b.eigenfunction(0).unwrap();
        let p1 = b.eigenfunction(1).unwrap();
        assert!((score(p0, &b, 0).unwrap() - 1.0).abs() < 1e-10);
        assert!(score(p1, &b, 0).unwrap().abs() < 1e-8);
        let mix = p0.combine(2.0, p1, 3.0).unwrap();
        assert!((score(&mix, &b, 0).unwrap() - 2.0).abs() < 1e-8);
        assert!(matches!(
            score(p0, &b, b.n_components()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_weights() {
        let g = grid(4);
        let c = Curve::from_fn(Arc::clone(&g), |t| t);
        let s = Sample::new(g, vec![c.clone(), c], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            weighted_pca(&s, &[1.0, 0.0]),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
        assert!(weighted_pca(&s, &[1.0]).is_err());
    }

    #[test]
    fn sign_convention() {
        let g = grid(21);
        let mut neg: Vec<f64> = g.points().iter().map(|t| -1.0 - t).collect();
        fix_sign(&g, &mut neg);
        assert!(g.integrate(&neg) > 0.0);
        // zero integral: the largest-magnitude value decides
        let g5 = grid(5);
        let mut v = vec![0.0, -2.0, 1.0, 1.0, 0.0];
        assert_eq!(g5.integrate(&v), 0.0);
        fix_sign(&g5, &mut v);
        assert_eq!(v, vec![0.0, 2.0, -1.0, -1.0, 0.0]);
    }
}
