//! Reference implementations used as oracles. They share no code with the
//! library: trapezoid weights, a cyclic Jacobi eigensolver and Householder
//! least squares are written out from scratch.
#![allow(dead_code)]

use std::sync::Arc;

use fdwls::{Grid, Sample};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn trapezoid_weights(t: &[f64]) -> Vec<f64> {
    let m = t.len();
    (0..m)
        .map(|k| {
            let left = if k > 0 { t[k] - t[k - 1] } else { 0.0 };
            let right = if k + 1 < m { t[k + 1] - t[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

pub fn integrate(t: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..t.len() - 1 {
        let h = t[k + 1] - t[k];
        s += 0.5 * h * (f[k] * g[k] + f[k + 1] * g[k + 1]);
    }
    s
}

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing, vectors
/// as columns `vecs[i][j]` (component `i` of vector `j`).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n)
        .map(|r| order.iter().map(|&c| v[r][c]).collect())
        .collect();
    (vals, vecs)
}

/// Minimize `sum_i w_i (y_i - x_i . b)^2` by Householder QR on the
/// `sqrt(w)`-scaled system. Rows of `x` are observations.
pub fn weighted_lstsq(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = x.len();
    let p = x[0].len();
    let mut a: Vec<Vec<f64>> = x
        .iter()
        .zip(w)
        .map(|(row, wi)| row.iter().map(|v| v * wi.sqrt()).collect())
        .collect();
    let mut b: Vec<f64> = y.iter().zip(w).map(|(yi, wi)| yi * wi.sqrt()).collect();
    for j in 0..p {
        let norm = (j..n).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| a[i][j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j..p {
            let dot: f64 = (j..n).map(|i| v[i - j] * a[i][c]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..n {
                a[i][c] -= f * v[i - j];
            }
        }
        let dot: f64 = (j..n).map(|i| v[i - j] * b[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..n {
            b[i] -= f * v[i - j];
        }
    }
    let mut coef = vec![0.0; p];
    for j in (0..p).rev() {
        let s: f64 = (j + 1..p).map(|k| a[j][k] * coef[k]).sum();
        coef[j] = (b[j] - s) / a[j][j];
    }
    coef
}

/// Strictly increasing, irregular grid on `[0, 1]`.
pub fn random_grid(rng: &mut ChaCha8Rng, m: usize) -> Arc<Grid> {
    let mut t = vec![0.0];
    for _ in 1..m {
        let last = *t.last().unwrap();
        t.push(last + rng.random_range(0.5..1.5));
    }
    let end = *t.last().unwrap();
    Arc::new(Grid::new(t.into_iter().map(|v| v / end).collect()).unwrap())
}

/// Curves with a few random smooth modes plus small roughness, and
/// responses linear in the curves plus noise.
pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Sample {
    let grid = random_grid(rng, m);
    let modes = 6;
    let freq: Vec<f64> = (0..modes)
        .map(|j| (j + 1) as f64 * rng.random_range(0.8..1.2))
        .collect();
    let phase: Vec<f64> = (0..modes).map(|_| rng.random_range(0.0..6.3)).collect();
    let beta: Vec<f64> = grid
        .points()
        .iter()
        .map(|t| (3.0 * t).sin() + rng.random_range(-0.1..0.1))
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let amp: Vec<f64> = (0..modes)
            .map(|j| rng.random_range(-1.0..1.0) / (j + 1) as f64)
            .collect();
        let shift = rng.random_range(-0.5..0.5);
        let row: Vec<f64> = grid
            .points()
            .iter()
            .map(|t| {
                let smooth: f64 = (0..modes)
                    .map(|j| amp[j] * (freq[j] * 3.0 * t + phase[j]).sin())
                    .sum();
                shift + smooth + 0.01 * rng.random_range(-1.0..1.0)
            })
            .collect();
        let signal = integrate(grid.points(), &row, &beta);
        y.push(0.3 + signal + 0.1 * rng.random_range(-1.0..1.0) * (1.0 + signal.abs()));
        rows.push(row);
    }
    Sample::from_rows(grid, rows, y).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.1..10.0)).collect()
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(floor, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}
