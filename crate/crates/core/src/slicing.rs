//! Forward slicing: projections of point clouds and line integrals of grid
//! densities, together with the per-angle quantile/density conversions.
//!
//! Grid conventions: the offset axis uses `u_points` cells of width
//! `(u_max - u_min) / u_points`, values sampled at cell centers, and row mass
//! is the rectangle sum `sum(v) * du`. The probability axis uses midpoints
//! s_k = (k - 1/2) / S, which avoids the undefined quantile endpoints.

use ndarray::Array2;
use rayon::prelude::*;

use crate::domain::{AngleGrid, DensityGrid, PointCloud};
use crate::error::{Error, Result};

/// Slack for the nondecreasing check on quantile rows; covers interpolation
/// round-off without admitting real violations.
const MONOTONE_TOL: f64 = 1e-12;
/// Row-mass tolerance for sliced densities.
pub const ROW_MASS_TOL: f64 = 1e-6;

/// Quantile functions on the midpoint probability grid, one row per angle.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedQuantiles {
    angle_grid: AngleGrid,
    values: Array2<f64>, // L x S
}

impl SlicedQuantiles {
    pub fn new(angle_grid: AngleGrid, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != angle_grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} quantile rows for {} angles",
                values.nrows(),
                angle_grid.len()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument("empty probability grid".into()));
        }
        for (row, r) in values.rows().into_iter().enumerate() {
            for k in 1..r.len() {
                if r[k] < r[k - 1] - MONOTONE_TOL {
                    return Err(Error::MonotonicityViolation { row, index: k });
                }
            }
        }
        Ok(Self { angle_grid, values })
    }

    pub fn angle_grid(&self) -> &AngleGrid {
        &self.angle_grid
    }

    pub fn num_angles(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_probs(&self) -> usize {
        self.values.ncols()
    }

    /// s_k = (k - 1/2) / S.
    pub fn prob_grid(&self) -> Vec<f64> {
        let s = self.values.ncols();
        (0..s).map(|k| (k as f64 + 0.5) / s as f64).collect()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, l: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(l)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.values.ncols() == other.values.ncols()
            && self.angle_grid.approx_eq(&other.angle_grid, 1e-12)
    }

    /// CSV layout: `# sliced_quantiles,L=..,S=..` then one row per angle,
    /// leading field the planar angle in radians.
    pub fn to_csv(&self) -> Result<String> {
        if self.angle_grid.dim() != 2 {
            return Err(Error::UnsupportedDimension {
                p: self.angle_grid.dim(),
                msg: "CSV serialization carries planar angles only",
            });
        }
        let mut out = format!(
            "# sliced_quantiles,L={},S={}\n",
            self.num_angles(),
            self.num_probs()
        );
        for l in 0..self.num_angles() {
            out.push_str(&self.angle_grid.angle_radians(l).to_string());
            for v in self.values.row(l) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            msg: "empty sliced-quantiles file".into(),
        })?;
        if !header.starts_with("# sliced_quantiles") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected sliced_quantiles header, got {header:?}"),
            });
        }
        let mut angles = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, raw) in lines.enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let mut fields = raw.split(',');
            let alpha: f64 = fields
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    line: idx + 2,
                    msg: "cannot parse angle".into(),
                })?;
            angles.push(vec![alpha.cos(), alpha.sin()]);
            let row: std::result::Result<Vec<f64>, _> =
                fields.map(|f| f.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|_| Error::Parse {
                line: idx + 2,
                msg: "cannot parse quantile value".into(),
            })?);
        }
        let grid = AngleGrid::from_vectors(angles)?;
        let s = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut values = Array2::zeros((rows.len(), s));
        for (l, row) in rows.iter().enumerate() {
            if row.len() != s {
                return Err(Error::Schema(format!(
                    "quantile row {l} has {} values, expected {s}",
                    row.len()
                )));
            }
            for (k, v) in row.iter().enumerate() {
                values[[l, k]] = *v;
            }
        }
        Self::new(grid, values)
    }
}

/// Per-angle 1-D densities on a shared cell-centered offset grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedDensities {
    angle_grid: AngleGrid,
    u_min: f64,
    u_max: f64,
    values: Array2<f64>, // L x U
}

impl SlicedDensities {
    pub fn new(
        angle_grid: AngleGrid,
        u_min: f64,
        u_max: f64,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != angle_grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} density rows for {} angles",
                values.nrows(),
                angle_grid.len()
            )));
        }
        if !(u_min < u_max) || values.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "sliced densities need u_min < u_max and a nonempty grid".into(),
            ));
        }
        let du = (u_max - u_min) / values.ncols() as f64;
        for (row, r) in values.rows().into_iter().enumerate() {
            if let Some((index, v)) = r.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "density row {row} has negative value {v} at index {index}"
                )));
            }
            let mass: f64 = r.sum() * du;
            if (mass - 1.0).abs() > ROW_MASS_TOL {
                return Err(Error::InvalidArgument(format!(
                    "density row {row} has mass {mass}, expected 1 within {ROW_MASS_TOL:e}"
                )));
            }
        }
        Ok(Self {
            angle_grid,
            u_min,
            u_max,
            values,
        })
    }

    pub fn angle_grid(&self) -> &AngleGrid {
        &self.angle_grid
    }

    pub fn num_angles(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn spacing(&self) -> f64 {
        (self.u_max - self.u_min) / self.values.ncols() as f64
    }

    /// Cell-center coordinates.
    pub fn u_grid(&self) -> Vec<f64> {
        let du = self.spacing();
        (0..self.values.ncols())
            .map(|m| self.u_min + (m as f64 + 0.5) * du)
            .collect()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, l: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(l)
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.angle_grid.dim() != 2 {
            return Err(Error::UnsupportedDimension {
                p: self.angle_grid.dim(),
                msg: "CSV serialization carries planar angles only",
            });
        }
        let mut out = format!(
            "# sliced_densities,L={},U={},u_min={},u_max={}\n",
            self.num_angles(),
            self.num_points(),
            self.u_min,
            self.u_max
        );
        for l in 0..self.num_angles() {
            out.push_str(&self.angle_grid.angle_radians(l).to_string());
            for v in self.values.row(l) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            msg: "empty sliced-densities file".into(),
        })?;
        if !header.starts_with("# sliced_densities") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected sliced_densities header, got {header:?}"),
            });
        }
        let mut u_min = None;
        let mut u_max = None;
        for field in header.trim_start_matches('#').split(',') {
            let field = field.trim();
            if let Some(v) = field.strip_prefix("u_min=") {
                u_min = v.parse::<f64>().ok();
            } else if let Some(v) = field.strip_prefix("u_max=") {
                u_max = v.parse::<f64>().ok();
            }
        }
        let (u_min, u_max) = match (u_min, u_max) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "header must carry u_min and u_max".into(),
                })
            }
        };
        let mut angles = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, raw) in lines.enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let mut fields = raw.split(',');
            let alpha: f64 = fields
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    line: idx + 2,
                    msg: "cannot parse angle".into(),
                })?;
            angles.push(vec![alpha.cos(), alpha.sin()]);
            let row: std::result::Result<Vec<f64>, _> =
                fields.map(|f| f.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|_| Error::Parse {
                line: idx + 2,
                msg: "cannot parse density value".into(),
            })?);
        }
        let grid = AngleGrid::from_vectors(angles)?;
        let u = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut values = Array2::zeros((rows.len(), u));
        for (l, row) in rows.iter().enumerate() {
            if row.len() != u {
                return Err(Error::Schema(format!(
                    "density row {l} has {} values, expected {u}",
                    row.len()
                )));
            }
            for (m, v) in row.iter().enumerate() {
                values[[l, m]] = *v;
            }
        }
        Self::new(grid, u_min, u_max, values)
    }
}

/// How quantile atoms become a 1-D density row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Plain histogram of the equal-mass atoms onto the cells.
    None,
    /// Gaussian kernel smoothing with a fixed bandwidth, then
    /// truncate-normalize to the grid range.
    Fixed(f64),
    /// Gaussian kernel smoothing with the Silverman rule evaluated on the
    /// atoms of each row. Calibrated for i.i.d. samples; on systematic
    /// equal-mass atoms it widens the distribution noticeably.
    Silverman,
    /// Per-atom Gaussian bandwidths proportional to the local atom gap.
    /// Fills the inter-atom space without inflating the variance, which is
    /// what the quantile atoms need: they are a systematic sample, not an
    /// i.i.d. one.
    Adaptive { factor: f64 },
}

/// Projections <W_j, theta>, sorted nondecreasing.
pub fn slice_pointcloud(cloud: &PointCloud, theta: ndarray::ArrayView1<'_, f64>) -> Vec<f64> {
    debug_assert_eq!(cloud.dim(), theta.len());
    let mut projections: Vec<f64> = cloud
        .points()
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum())
        .collect();
    projections.sort_by(f64::total_cmp);
    projections
}

/// Radon transform of a planar grid density: line integrals by midpoint
/// stepping with bilinear interpolation, step = half the cell diagonal,
/// each row renormalized to unit mass.
pub fn radon_grid(f: &DensityGrid, angles: &AngleGrid, u_points: usize) -> Result<SlicedDensities> {
    if f.dim() != 2 || angles.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            p: f.dim(),
            msg: "grid slicing is implemented for planar densities",
        });
    }
    if u_points < 8 {
        return Err(Error::Resolution(format!(
            "offset grid needs at least 8 points, got {u_points}"
        )));
    }
    let radius = f.domain().projection_radius();
    let du = 2.0 * radius / u_points as f64;
    let step = 0.5 * (f.spacing(0).powi(2) + f.spacing(1).powi(2)).sqrt();
    let n_steps = (2.0 * radius / step).ceil() as usize;
    let ds = 2.0 * radius / n_steps as f64;

    let rows: Vec<Vec<f64>> = (0..angles.len())
        .into_par_iter()
        .map(|l| {
            let theta = angles.direction(l);
            let (c, s) = (theta[0], theta[1]);
            let mut row = vec![0.0; u_points];
            for (m, value) in row.iter_mut().enumerate() {
                let u = -radius + (m as f64 + 0.5) * du;
                let mut acc = 0.0;
                for step_idx in 0..n_steps {
                    let t = -radius + (step_idx as f64 + 0.5) * ds;
                    // z = u*theta + t*perp(theta)
                    acc += f.interp2(u * c - t * s, u * s + t * c);
                }
                *value = acc * ds;
            }
            let mass: f64 = row.iter().sum::<f64>() * du;
            if mass > 0.0 {
                row.iter_mut().for_each(|v| *v /= mass);
            }
            row
        })
        .collect();

    let mut values = Array2::zeros((angles.len(), u_points));
    for (l, row) in rows.iter().enumerate() {
        for (m, v) in row.iter().enumerate() {
            values[[l, m]] = *v;
        }
    }
    SlicedDensities::new(angles.clone(), -radius, radius, values)
}

/// Empirical quantiles of the projections at the midpoint grid, by the
/// left-continuous inverse of the empirical CDF.
pub fn quantiles_from_cloud(
    cloud: &PointCloud,
    angles: &AngleGrid,
    s_points: usize,
) -> Result<SlicedQuantiles> {
    if s_points == 0 {
        return Err(Error::InvalidArgument("empty probability grid".into()));
    }
    if cloud.dim() != angles.dim() {
        return Err(Error::GridMismatch(format!(
            "cloud dimension {} vs angle dimension {}",
            cloud.dim(),
            angles.dim()
        )));
    }
    let n = cloud.len();
    let mut values = Array2::zeros((angles.len(), s_points));
    for l in 0..angles.len() {
        let sorted = slice_pointcloud(cloud, angles.direction(l));
        for k in 0..s_points {
            let s = (k as f64 + 0.5) / s_points as f64;
            let j = (n as f64 * s).ceil().max(1.0) as usize;
            values[[l, k]] = sorted[j.min(n) - 1];
        }
    }
    SlicedQuantiles::new(angles.clone(), values)
}

/// Quantiles of each density row: piecewise-linear CDF through the cell
/// edges, inverted at the midpoint probabilities.
pub fn quantiles_from_density(
    densities: &SlicedDensities,
    s_points: usize,
) -> Result<SlicedQuantiles> {
    if s_points == 0 {
        return Err(Error::InvalidArgument("empty probability grid".into()));
    }
    let u = densities.num_points();
    let du = densities.spacing();
    let mut values = Array2::zeros((densities.num_angles(), s_points));
    for l in 0..densities.num_angles() {
        let row = densities.row(l);
        // CDF at cell edges; exact for piecewise-constant rows.
        let mut cdf = vec![0.0; u + 1];
        for m in 0..u {
            cdf[m + 1] = cdf[m] + row[m] * du;
        }
        let total = cdf[u];
        if total <= 0.0 {
            return Err(Error::EmptyMass(format!(
                "density row {l} has zero mass; quantiles undefined"
            )));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        let mut edge = 1usize;
        for k in 0..s_points {
            let s = (k as f64 + 0.5) / s_points as f64;
            while edge < u && cdf[edge] < s {
                edge += 1;
            }
            let (c0, c1) = (cdf[edge - 1], cdf[edge]);
            let left = densities.u_min + (edge - 1) as f64 * du;
            values[[l, k]] = if c1 > c0 {
                left + (s - c0) / (c1 - c0) * du
            } else {
                left
            };
        }
    }
    SlicedQuantiles::new(densities.angle_grid().clone(), values)
}

/// Density rows from quantile rows: S equal-mass atoms per row, then either
/// a histogram or Gaussian kernel smoothing on the cell grid.
pub fn density_from_quantiles(
    quantiles: &SlicedQuantiles,
    u_points: usize,
    u_min: f64,
    u_max: f64,
    smoothing: Smoothing,
) -> Result<SlicedDensities> {
    if u_points < 8 {
        return Err(Error::Resolution(format!(
            "offset grid needs at least 8 points, got {u_points}"
        )));
    }
    if !(u_min < u_max) {
        return Err(Error::InvalidArgument(format!(
            "need u_min < u_max, got [{u_min}, {u_max}]"
        )));
    }
    let s_points = quantiles.num_probs();
    let du = (u_max - u_min) / u_points as f64;
    let mut values = Array2::zeros((quantiles.num_angles(), u_points));
    for l in 0..quantiles.num_angles() {
        let atoms = quantiles.row(l);
        let atom_slice = atoms.as_slice().unwrap();
        let bandwidths: Option<Vec<f64>> = match smoothing {
            Smoothing::None => None,
            Smoothing::Fixed(b) => {
                if !(b > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "smoothing bandwidth must be positive, got {b}"
                    )));
                }
                Some(vec![b; s_points])
            }
            Smoothing::Silverman => {
                silverman_bandwidth(atom_slice).map(|b| vec![b; s_points])
            }
            Smoothing::Adaptive { factor } => {
                if !(factor > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "adaptive smoothing factor must be positive, got {factor}"
                    )));
                }
                // Half-gap to the neighbors, floored at half a cell so
                // coincident atoms still spread over the containing cell.
                let floor = 0.5 * du;
                Some(
                    (0..s_points)
                        .map(|k| {
                            let left = if k > 0 { k - 1 } else { k };
                            let right = (k + 1).min(s_points - 1);
                            let gap = (atom_slice[right] - atom_slice[left])
                                / (right - left).max(1) as f64;
                            (factor * gap).max(floor)
                        })
                        .collect(),
                )
            }
        };
        let mut row = vec![0.0; u_points];
        match bandwidths {
            None => {
                let weight = 1.0 / (s_points as f64 * du);
                for q in atoms {
                    let idx = ((q - u_min) / du).floor().clamp(0.0, (u_points - 1) as f64);
                    row[idx as usize] += weight;
                }
            }
            Some(bandwidths) => {
                let weight = 1.0 / s_points as f64;
                let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
                for (q, b) in atom_slice.iter().zip(&bandwidths) {
                    let norm = weight / (b * sqrt_2pi);
                    let reach = 9.0 * b;
                    let first = (((q - reach) - u_min) / du - 0.5).floor().max(0.0) as usize;
                    let last = ((((q + reach) - u_min) / du - 0.5).ceil() as isize)
                        .clamp(0, u_points as isize - 1) as usize;
                    if first >= u_points {
                        continue;
                    }
                    for (m, value) in row.iter_mut().enumerate().take(last + 1).skip(first) {
                        let um = u_min + (m as f64 + 0.5) * du;
                        let d = (um - q) / b;
                        *value += norm * (-0.5 * d * d).exp();
                    }
                }
            }
        }
        // Truncate-normalize onto the grid range.
        let mass: f64 = row.iter().sum::<f64>() * du;
        if mass <= 0.0 {
            return Err(Error::EmptyMass(format!(
                "quantile row {l} leaves no mass on [{u_min}, {u_max}]"
            )));
        }
        for (m, v) in row.iter().enumerate() {
            values[[l, m]] = v / mass;
        }
    }
    SlicedDensities::new(quantiles.angle_grid().clone(), u_min, u_max, values)
}

/// Silverman rule on the atoms; `None` for degenerate (constant) rows, where
/// the caller falls back to a histogram.
fn silverman_bandwidth(atoms: &[f64]) -> Option<f64> {
    let n = atoms.len();
    if n < 2 {
        return None;
    }
    let mean = atoms.iter().sum::<f64>() / n as f64;
    let sd = (atoms.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    // Atoms arrive sorted (quantile rows), so the IQR reads off directly.
    let iqr = atoms[(3 * n) / 4] - atoms[n / 4];
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread <= 0.0 {
        None
    } else {
        Some(0.9 * spread * (n as f64).powf(-0.2))
    }
}
