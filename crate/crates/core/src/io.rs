//! Dataset CSV files and the JSON model document.
//!
//! A dataset is comma-separated with a header row `y,t_1,...,t_m` naming
//! the grid points, then one row per observation: the response followed by
//! the curve values. Row numbers in errors are file lines (the header is
//! line 1); column numbers are 1-based fields.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curves::{resample, Curve, Grid, Sample};
use crate::error::{Error, Result};
use crate::fpca::{Flavor, PcBasis};
use crate::linmodel::LinearFit;
use crate::selection::{CvResult, Pipeline};
use crate::varmodel::VarianceModel;
use crate::wls::{Variant, WeightedFit};

pub const MODEL_FORMAT: &str = "fdwls-model";
pub const MODEL_VERSION: u32 = 1;

/// Raw table: grid points from the header, then responses (if the first
/// column is `y`) and curve rows.
struct Table {
    points: Vec<f64>,
    responses: Option<Vec<f64>>,
    rows: Vec<Vec<f64>>,
}

fn parse_cell(s: &str, row: usize, column: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("'{s}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column,
            message: format!("non-finite value '{s}'"),
        });
    }
    Ok(v)
}

fn read_table<R: Read>(input: R, require_y: bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "empty file".into(),
            })
        }
    };
    let has_y = header.get(0).map(|h| h.trim() == "y").unwrap_or(false);
    if require_y && !has_y {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "first header must be 'y'".into(),
        });
    }
    let skip = usize::from(has_y);
    let points = header
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(c, h)| parse_cell(h, 1, c + 1))
        .collect::<Result<Vec<f64>>>()?;
    if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Parse {
            row: 1,
            column: k + 2 + skip,
            message: "grid points must be strictly increasing".into(),
        });
    }
    let width = points.len() + skip;
    let mut responses = has_y.then(Vec::new);
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Parse {
                row: line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        if let Some(ys) = responses.as_mut() {
            ys.push(parse_cell(&rec[0], line, 1)?);
        }
        let row = rec
            .iter()
            .enumerate()
            .skip(skip)
            .map(|(c, v)| parse_cell(v, line, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table {
        points,
        responses,
        rows,
    })
}

/// Curves of `table` on `target` (resampled) or on the file's own grid.
fn table_curves(table: &Table, target: Option<Arc<Grid>>) -> Result<(Arc<Grid>, Vec<Curve>)> {
    let own = Grid::new(table.points.clone()).map_err(|e| Error::Parse {
        row: 1,
        column: 1,
        message: e.to_string(),
    })?;
    match target {
        Some(g) if g.points() != own.points() => {
            let curves = table
                .rows
                .iter()
                .map(|r| resample(&table.points, r, &g))
                .collect::<Result<Vec<_>>>()?;
            Ok((g, curves))
        }
        Some(g) => {
            let curves = table
                .rows
                .iter()
                .map(|r| Curve::new(Arc::clone(&g), r.clone()))
                .collect::<Result<Vec<_>>>()?;
            Ok((g, curves))
        }
        None => {
            let g = Arc::new(own);
            let curves = table
                .rows
                .iter()
                .map(|r| Curve::new(Arc::clone(&g), r.clone()))
                .collect::<Result<Vec<_>>>()?;
            Ok((g, curves))
        }
    }
}

pub fn read_dataset<R: Read>(input: R, resample_to: Option<Arc<Grid>>) -> Result<Sample> {
    let table = read_table(input, true)?;
    let (grid, curves) = table_curves(&table, resample_to)?;
    Sample::new(grid, curves, table.responses.unwrap_or_default())
}

/// Load a dataset, optionally interpolating every curve onto another grid
/// inside the file's range.
pub fn load_dataset(path: impl AsRef<Path>, resample_to: Option<Arc<Grid>>) -> Result<Sample> {
    read_dataset(File::open(path)?, resample_to)
}

/// Curves only. A leading `y` column is accepted and ignored.
pub fn read_curves<R: Read>(input: R, grid: Option<Arc<Grid>>) -> Result<Vec<Curve>> {
    let table = read_table(input, false)?;
    Ok(table_curves(&table, grid)?.1)
}

pub fn load_curves(path: impl AsRef<Path>, grid: Option<Arc<Grid>>) -> Result<Vec<Curve>> {
    read_curves(File::open(path)?, grid)
}

pub fn write_dataset<W: Write>(sample: &Sample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    header.extend(sample.grid().points().iter().map(|p| p.to_string()));
    w.write_record(&header)?;
    for (c, y) in sample.curves().iter().zip(sample.responses()) {
        let mut row = vec![y.to_string()];
        row.extend(c.values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Single named column, one value per line.
pub fn write_column<W: Write>(name: &str, values: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([name])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_column<R: Read>(name: &str, input: R) -> Result<Vec<f64>> {
    let table_err = |row, message: String| Error::Parse {
        row,
        column: 1,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| table_err(1, "empty file".into()))??;
    if header.len() != 1 || &header[0] != name {
        return Err(table_err(1, format!("expected a single column '{name}'")));
    }
    records
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            parse_cell(&rec[0], i + 2, 1)
        })
        .collect()
}

/// `t,beta` table of a curve.
pub fn write_curve<W: Write>(name: &str, curve: &Curve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", name])?;
    for (t, v) in curve.grid().points().iter().zip(curve.values()) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDoc {
    pub flavor: Flavor,
    pub mean: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
}

impl BasisDoc {
    fn from_basis(b: &PcBasis) -> Self {
        Self {
            flavor: b.flavor(),
            mean: b.mean().values().to_vec(),
            eigenvalues: b.eigenvalues().to_vec(),
            eigenfunctions: b
                .eigenfunctions()
                .iter()
                .map(|c| c.values().to_vec())
                .collect(),
        }
    }

    fn into_basis(self, grid: &Arc<Grid>) -> Result<PcBasis> {
        let mean = Curve::new(Arc::clone(grid), self.mean)?;
        let funcs = self
            .eigenfunctions
            .into_iter()
            .map(|v| Curve::new(Arc::clone(grid), v))
            .collect::<Result<Vec<_>>>()?;
        PcBasis::from_parts(self.flavor, mean, self.eigenvalues, funcs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotDoc {
    pub basis: BasisDoc,
    pub coeffs: Vec<f64>,
    pub y_bar: f64,
    pub score_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDoc {
    /// Absent when the fit uses the pilot basis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisDoc>,
    pub coeffs: Vec<f64>,
    pub y_bar_w: f64,
    pub score_means_w: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Cross-validation record; failed cells are stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub r_max: usize,
    pub k_max: usize,
    pub scores: Vec<Vec<Option<f64>>>,
    pub chosen: (usize, usize),
    pub ties_broken: bool,
    pub unweighted_scores: Vec<Option<f64>>,
    pub unweighted_r: usize,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl SelectionDoc {
    fn from_result(cv: &CvResult) -> Self {
        Self {
            r_max: cv.r_max,
            k_max: cv.k_max,
            scores: cv
                .scores
                .iter()
                .map(|row| row.iter().copied().map(finite_or_none).collect())
                .collect(),
            chosen: cv.chosen,
            ties_broken: cv.ties_broken,
            unweighted_scores: cv
                .unweighted_scores
                .iter()
                .copied()
                .map(finite_or_none)
                .collect(),
            unweighted_r: cv.unweighted_r,
        }
    }

    fn into_result(self, variant: Variant) -> CvResult {
        let inf = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
        CvResult {
            variant,
            r_max: self.r_max,
            k_max: self.k_max,
            scores: self
                .scores
                .into_iter()
                .map(|row| row.into_iter().map(inf).collect())
                .collect(),
            chosen: self.chosen,
            ties_broken: self.ties_broken,
            unweighted_scores: self.unweighted_scores.into_iter().map(inf).collect(),
            unweighted_r: self.unweighted_r,
        }
    }
}

/// Versioned JSON document holding a fitted [`Pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub variant: Variant,
    pub grid: Vec<f64>,
    pub pilot: PilotDoc,
    pub variance: VarianceModel,
    pub weighted: WeightedDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionDoc>,
}

impl ModelFile {
    pub fn from_pipeline(p: &Pipeline) -> Self {
        let pilot_basis = p.pilot.basis();
        let shared = Arc::ptr_eq(pilot_basis, p.weighted.basis());
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            variant: p.variant(),
            grid: pilot_basis.grid().points().to_vec(),
            pilot: PilotDoc {
                basis: BasisDoc::from_basis(pilot_basis),
                coeffs: p.pilot.coeffs().to_vec(),
                y_bar: p.pilot.y_bar(),
                score_means: p.pilot.score_means().to_vec(),
            },
            variance: p.variance.clone(),
            weighted: WeightedDoc {
                basis: (!shared).then(|| BasisDoc::from_basis(p.weighted.basis())),
                coeffs: p.weighted.coeffs().to_vec(),
                y_bar_w: p.weighted.y_bar_w(),
                score_means_w: p.weighted.score_means_w().to_vec(),
                weights: p.weighted.weights().to_vec(),
            },
            selection: p.selection.as_ref().map(SelectionDoc::from_result),
        }
    }

    pub fn into_pipeline(self) -> Result<Pipeline> {
        if self.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!(
                "unknown format '{}'",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported version {}",
                self.version
            )));
        }
        self.variance.validate()?;
        let grid = Arc::new(Grid::new(self.grid)?);
        let pilot_basis = Arc::new(self.pilot.basis.into_basis(&grid)?);
        let pilot = LinearFit::from_parts(
            Arc::clone(&pilot_basis),
            self.pilot.coeffs,
            self.pilot.y_bar,
            self.pilot.score_means,
        )?;
        let wbasis = match self.weighted.basis {
            Some(doc) => Arc::new(doc.into_basis(&grid)?),
            None => pilot_basis,
        };
        let weighted = WeightedFit::from_parts(
            self.variant,
            wbasis,
            self.weighted.coeffs,
            self.weighted.y_bar_w,
            self.weighted.score_means_w,
            self.weighted.weights,
        )?;
        Ok(Pipeline {
            pilot,
            variance: self.variance,
            weighted,
            selection: self.selection.map(|s| s.into_result(self.variant)),
        })
    }
}

pub fn write_model<W: Write>(pipeline: &Pipeline, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &ModelFile::from_pipeline(pipeline))?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<Pipeline> {
    let doc: ModelFile = serde_json::from_reader(input)?;
    doc.into_pipeline()
}

pub fn save_model(pipeline: &Pipeline, path: impl AsRef<Path>) -> Result<()> {
    let mut f = File::create(path)?;
    write_model(pipeline, &mut f)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Pipeline> {
    read_model(File::open(path)?)
}
