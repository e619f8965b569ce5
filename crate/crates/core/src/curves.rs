//! Discretized functions on a compact interval.
//!
//! Every curve is stored by its values on a shared [`Grid`]. Integrals are
//! evaluated with the composite trapezoid rule, whose weights are computed
//! once per grid from the point spacings, so non-equispaced grids are fine.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Strictly increasing evaluation points with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite grid point {p}")));
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at index {}",
                k + 1
            )));
        }
        let m = points.len();
        let mut weights = vec![0.0; m];
        for k in 0..m - 1 {
            let h = 0.5 * (points[k + 1] - points[k]);
            weights[k] += h;
            weights[k + 1] += h;
        }
        Ok(Self { points, weights })
    }

    /// `m` equispaced points covering `[start, end]`.
    pub fn uniform(start: f64, end: f64, m: usize) -> Result<Self> {
        if m < 2 || !(end > start) {
            return Err(Error::InvalidGrid(format!(
                "cannot build {m} uniform points on [{start}, {end}]"
            )));
        }
        let step = (end - start) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|k| start + step * k as f64).collect();
        points[m - 1] = end;
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Trapezoid integral of grid values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Trapezoid integral of the product of two value vectors.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(g.len(), self.len());
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

/// A function sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct Curve {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shares_grid(&self, other: &Curve) -> bool {
        same_grid(&self.grid, &other.grid)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Pointwise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Curve, b: f64) -> Result<Curve> {
        if !self.shares_grid(other) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Curve {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    pub fn scale(&self, a: f64) -> Curve {
        Curve {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a.points == b.points
}

/// Quadrature approximation of the integral of `f * g`.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    if !f.shares_grid(g) {
        return Err(Error::GridMismatch);
    }
    Ok(f.grid.dot(&f.values, &g.values))
}

/// Piecewise-linear interpolation of `(abscissae, ordinates)` onto `target`.
pub fn resample(abscissae: &[f64], ordinates: &[f64], target: &Arc<Grid>) -> Result<Curve> {
    if abscissae.len() != ordinates.len() {
        return Err(Error::LengthMismatch {
            expected: abscissae.len(),
            got: ordinates.len(),
        });
    }
    if abscissae.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: abscissae.len(),
        });
    }
    if let Some(k) = abscissae.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!(
            "source abscissae not strictly increasing at index {}",
            k + 1
        )));
    }
    let (lo, hi) = (abscissae[0], abscissae[abscissae.len() - 1]);
    let mut values = Vec::with_capacity(target.len());
    let mut seg = 0;
    for &t in target.points() {
        if t < lo || t > hi {
            return Err(Error::Extrapolation {
                t,
                min: lo,
                max: hi,
            });
        }
        // target points are increasing, so the segment pointer only moves forward
        while seg + 2 < abscissae.len() && t > abscissae[seg + 1] {
            seg += 1;
        }
        let (x0, x1) = (abscissae[seg], abscissae[seg + 1]);
        let (y0, y1) = (ordinates[seg], ordinates[seg + 1]);
        let v = if t == x0 {
            y0
        } else if t == x1 {
            y1
        } else {
            y0 + (y1 - y0) * (t - x0) / (x1 - x0)
        };
        values.push(v);
    }
    Ok(Curve {
        grid: Arc::clone(target),
        values,
    })
}

/// Paired observations `(X_i, Y_i)` on one common grid.
#[derive(Debug, Clone)]
pub struct Sample {
    grid: Arc<Grid>,
    curves: Vec<Curve>,
    responses: Vec<f64>,
}

impl Sample {
    pub fn new(grid: Arc<Grid>, curves: Vec<Curve>, responses: Vec<f64>) -> Result<Self> {
        if curves.len() != responses.len() {
            return Err(Error::LengthMismatch {
                expected: curves.len(),
                got: responses.len(),
            });
        }
        if curves.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: curves.len(),
            });
        }
        if curves.iter().any(|c| !same_grid(&grid, &c.grid)) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid,
            curves,
            responses,
        })
    }

    /// Build from raw rows of grid values.
    pub fn from_rows(grid: Arc<Grid>, rows: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        let curves = rows
            .into_iter()
            .map(|v| Curve::new(Arc::clone(&grid), v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, curves, responses)
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Same curves with a different response vector.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.grid), self.curves.clone(), responses)
    }

    /// Sub-sample in the order given by `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut curves = Vec::with_capacity(indices.len());
        let mut responses = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    available: self.len(),
                });
            }
            curves.push(self.curves[i].clone());
            responses.push(self.responses[i]);
        }
        Self::new(Arc::clone(&self.grid), curves, responses)
    }

    /// The sample with observation `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| k != i).collect();
        self.subset(&keep)
    }
}
