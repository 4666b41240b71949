//! Shared domain types: the support box, angle grids, point clouds,
//! gridded densities and regression datasets.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the unit-norm check on slicing directions.
pub const ANGLE_NORM_TOL: f64 = 1e-12;
/// Tolerance for the unit-mass check on density grids.
pub const GRID_MASS_TOL: f64 = 1e-8;

/// Axis-aligned box support in R^p.
///
/// The support of all densities handled by the crate. Restricting to boxes
/// gives exact cell volumes and a trivial membership test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(format!(
                "domain bounds must be nonempty and of equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "domain axis {k} must satisfy lower < upper with finite bounds, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The square [-1,1]^2 used throughout the simulation scenarios.
    pub fn unit_square() -> Self {
        Self::new(vec![-1.0, -1.0], vec![1.0, 1.0]).expect("valid bounds")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Largest Euclidean norm attained on the box (at one of its corners).
    /// Every projection <z, theta> with z in the box lies in [-R, R].
    pub fn projection_radius(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Finite grid of unit slicing directions with the uniform measure 1/L.
///
/// For p = 2 the directions are equally spaced over [0, pi); evenness of the
/// Radon transform makes the other half circle redundant.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    angles: Array2<f64>, // L x p, unit rows
}

impl AngleGrid {
    /// Equispaced planar grid: alpha_l = pi (l-1) / L, theta_l = (cos, sin).
    pub fn planar(p: usize, count: usize) -> Result<Self> {
        if p != 2 {
            return Err(Error::UnsupportedDimension {
                p,
                msg: "equispaced angle grids are only generated for planar distributions",
            });
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "angle grid needs at least 2 directions, got {count}"
            )));
        }
        let mut angles = Array2::zeros((count, 2));
        for l in 0..count {
            let alpha = std::f64::consts::PI * l as f64 / count as f64;
            angles[[l, 0]] = alpha.cos();
            angles[[l, 1]] = alpha.sin();
        }
        Ok(Self { angles })
    }

    /// Grid from explicit unit vectors (any p). Used for tests of evenness
    /// and for point-cloud slicing beyond the plane.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "angle grid needs at least 2 directions, got {}",
                vectors.len()
            )));
        }
        let p = vectors[0].len();
        let mut angles = Array2::zeros((vectors.len(), p));
        for (l, v) in vectors.iter().enumerate() {
            if v.len() != p {
                return Err(Error::Schema(format!(
                    "direction {l} has dimension {} but expected {p}",
                    v.len()
                )));
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > ANGLE_NORM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "direction {l} has norm {norm}, expected 1 within {ANGLE_NORM_TOL:e}"
                )));
            }
            for (k, x) in v.iter().enumerate() {
                angles[[l, k]] = *x;
            }
        }
        Ok(Self { angles })
    }

    pub fn len(&self) -> usize {
        self.angles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.angles.ncols()
    }

    /// Weight of each direction under the normalized measure on Theta.
    pub fn measure_weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn direction(&self, l: usize) -> ndarray::ArrayView1<'_, f64> {
        self.angles.row(l)
    }

    pub fn directions(&self) -> &Array2<f64> {
        &self.angles
    }

    /// Planar angle in radians, for serialization.
    pub fn angle_radians(&self, l: usize) -> f64 {
        self.angles[[l, 1]].atan2(self.angles[[l, 0]])
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.angles.shape() == other.angles.shape()
            && self
                .angles
                .iter()
                .zip(other.angles.iter())
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Empirical distribution: N unweighted support points in R^p.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>, // N x p
}

impl PointCloud {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::DegenerateSample(
                "point cloud must contain at least one point".into(),
            ));
        }
        if let Some((idx, _)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let row = idx / points.ncols();
            return Err(Error::InvalidArgument(format!(
                "point {row} has a non-finite coordinate"
            )));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::DegenerateSample(
                "point cloud must contain at least one point".into(),
            ));
        }
        let p = rows[0].len();
        let mut points = Array2::zeros((rows.len(), p));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Schema(format!(
                    "point {i} has dimension {} but expected {p}",
                    r.len()
                )));
            }
            for (k, v) in r.iter().enumerate() {
                points[[i, k]] = *v;
            }
        }
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, j: usize) -> ndarray::ArrayView1<'_, f64> {
        self.points.row(j)
    }

    /// Mean point, used by diagnostics and the Dirac-line tests.
    pub fn mean(&self) -> Array1<f64> {
        let n = self.len() as f64;
        self.points.sum_axis(ndarray::Axis(0)) / n
    }
}

/// Density values on a regular grid of cell centers over a box domain.
///
/// `shape[k]` counts cells along axis k; values are stored row-major and
/// must form a valid density: nonnegative with unit Riemann sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    domain: Domain,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(domain: Domain, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let grid = Self::unchecked(domain, shape, values)?;
        let mass = grid.riemann_sum();
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::InvalidArgument(format!(
                "density grid mass {mass} deviates from 1 by more than {GRID_MASS_TOL:e}; \
                 use new_normalized to renormalize"
            )));
        }
        Ok(grid)
    }

    /// Like [`DensityGrid::new`] but rescales the values to unit mass.
    pub fn new_normalized(domain: Domain, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let mut grid = Self::unchecked(domain, shape, values)?;
        let mass = grid.riemann_sum();
        if mass <= 0.0 {
            return Err(Error::EmptyMass(
                "density grid has zero total mass and cannot be normalized".into(),
            ));
        }
        grid.values.iter_mut().for_each(|v| *v /= mass);
        Ok(grid)
    }

    fn unchecked(domain: Domain, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.len() != domain.dim() {
            return Err(Error::Schema(format!(
                "grid shape has {} axes but the domain has {}",
                shape.len(),
                domain.dim()
            )));
        }
        let cells: usize = shape.iter().product();
        if cells == 0 || values.len() != cells {
            return Err(Error::Schema(format!(
                "expected {cells} grid values, got {}",
                values.len()
            )));
        }
        if let Some((idx, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "grid value {idx} is {v}; density values must be finite and >= 0"
            )));
        }
        Ok(Self {
            domain,
            shape,
            values,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.domain
            .lower()
            .iter()
            .zip(self.domain.upper())
            .zip(&self.shape)
            .map(|((lo, hi), s)| (hi - lo) / *s as f64)
            .product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.domain.upper()[axis] - self.domain.lower()[axis]) / self.shape[axis] as f64
    }

    /// Center coordinate of cell index i along the given axis.
    pub fn center(&self, axis: usize, i: usize) -> f64 {
        self.domain.lower()[axis] + (i as f64 + 0.5) * self.spacing(axis)
    }

    pub fn riemann_sum(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Planar accessor; valid only for p = 2 grids.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.values[i * self.shape[1] + j]
    }

    /// Bilinear interpolation between cell centers, zero outside the domain.
    /// Only defined for p = 2.
    pub fn interp2(&self, x: f64, y: f64) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        if !self.domain.contains(&[x, y]) {
            return 0.0;
        }
        let (nx, ny) = (self.shape[0], self.shape[1]);
        let fx = (x - self.domain.lower()[0]) / self.spacing(0) - 0.5;
        let fy = (y - self.domain.lower()[1]) / self.spacing(1) - 0.5;
        let i0 = fx.floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j0 = fy.floor().clamp(0.0, (ny - 1) as f64) as usize;
        let i1 = (i0 + 1).min(nx - 1);
        let j1 = (j0 + 1).min(ny - 1);
        let tx = (fx - i0 as f64).clamp(0.0, 1.0);
        let ty = (fy - j0 as f64).clamp(0.0, 1.0);
        let v00 = self.at2(i0, j0);
        let v01 = self.at2(i0, j1);
        let v10 = self.at2(i1, j0);
        let v11 = self.at2(i1, j1);
        v00 * (1.0 - tx) * (1.0 - ty)
            + v10 * tx * (1.0 - ty)
            + v01 * (1.0 - tx) * ty
            + v11 * tx * ty
    }

    /// Sup-norm distance between two grids on the same domain and shape.
    pub fn sup_distance(&self, other: &DensityGrid) -> Result<f64> {
        if self.shape != other.shape || self.domain != other.domain {
            return Err(Error::GridMismatch(
                "sup distance requires identical domain and shape".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// L2 distance sqrt(sum (a-b)^2 * cellvol) between two matching grids.
    pub fn l2_distance(&self, other: &DensityGrid) -> Result<f64> {
        if self.shape != other.shape || self.domain != other.domain {
            return Err(Error::GridMismatch(
                "L2 distance requires identical domain and shape".into(),
            ));
        }
        let sq: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sq * self.cell_volume()).sqrt())
    }
}

/// Responses of a regression dataset: either empirical clouds or gridded
/// densities, one per sample.
#[derive(Debug, Clone)]
pub enum Responses {
    Clouds(Vec<PointCloud>),
    Grids(Vec<DensityGrid>),
}

impl Responses {
    pub fn len(&self) -> usize {
        match self {
            Responses::Clouds(c) => c.len(),
            Responses::Grids(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// n i.i.d. pairs of a Euclidean predictor and a distributional response
/// supported on a common domain.
#[derive(Debug, Clone)]
pub struct RegressionDataset {
    predictors: Array2<f64>, // n x q
    responses: Responses,
    domain: Domain,
}

impl RegressionDataset {
    pub fn new(predictors: Array2<f64>, responses: Responses, domain: Domain) -> Result<Self> {
        let n = predictors.nrows();
        if n < 2 {
            return Err(Error::DegenerateSample(format!(
                "regression needs at least 2 samples, got {n}"
            )));
        }
        if responses.len() != n {
            return Err(Error::Schema(format!(
                "{n} predictors but {} responses",
                responses.len()
            )));
        }
        if let Some(v) = predictors.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite predictor value {v}"
            )));
        }
        let p = domain.dim();
        match &responses {
            Responses::Clouds(clouds) => {
                for (i, c) in clouds.iter().enumerate() {
                    if c.dim() != p {
                        return Err(Error::Schema(format!(
                            "cloud {i} lives in R^{} but the domain is R^{p}",
                            c.dim()
                        )));
                    }
                }
            }
            Responses::Grids(grids) => {
                for (i, g) in grids.iter().enumerate() {
                    if g.domain() != &domain {
                        return Err(Error::Schema(format!(
                            "grid {i} does not share the dataset domain"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            predictors,
            responses,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.predictors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn predictor_dim(&self) -> usize {
        self.predictors.ncols()
    }

    pub fn predictors(&self) -> &Array2<f64> {
        &self.predictors
    }

    pub fn predictor(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.predictors.row(i)
    }

    pub fn responses(&self) -> &Responses {
        &self.responses
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Restriction to a subset of sample indices, used by cross-validation.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let q = self.predictor_dim();
        let mut predictors = Array2::zeros((indices.len(), q));
        for (row, &i) in indices.iter().enumerate() {
            predictors.row_mut(row).assign(&self.predictors.row(i));
        }
        let responses = match &self.responses {
            Responses::Clouds(c) => {
                Responses::Clouds(indices.iter().map(|&i| c[i].clone()).collect())
            }
            Responses::Grids(g) => Responses::Grids(indices.iter().map(|&i| g[i].clone()).collect()),
        };
        Self::new(predictors, responses, self.domain.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_grid_two_angles() {
        let grid = AngleGrid::planar(2, 2).unwrap();
        assert!((grid.direction(0)[0] - 1.0).abs() < 1e-15);
        assert!(grid.direction(0)[1].abs() < 1e-15);
        assert!(grid.direction(1)[0].abs() < 1e-12);
        assert!((grid.direction(1)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planar_grid_includes_diagonal() {
        let grid = AngleGrid::planar(2, 4).unwrap();
        let half_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((grid.direction(1)[0] - half_sqrt2).abs() < 1e-12);
        assert!((grid.direction(1)[1] - half_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn planar_grid_rejects_higher_dimension() {
        match AngleGrid::planar(3, 8) {
            Err(Error::UnsupportedDimension { p: 3, .. }) => {}
            other => panic!("expected unsupported-dimension error, got {other:?}"),
        }
    }

    #[test]
    fn angle_grid_unit_norm() {
        for count in [2usize, 3, 7, 60, 181] {
            let grid = AngleGrid::planar(2, count).unwrap();
            for l in 0..count {
                let d = grid.direction(l);
                let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
                assert!((norm - 1.0).abs() <= ANGLE_NORM_TOL);
            }
        }
    }

    #[test]
    fn density_grid_rejects_bad_mass() {
        let domain = Domain::unit_square();
        // Mass 2 on [-1,1]^2.
        let values = vec![0.5; 16];
        assert!(DensityGrid::new(domain.clone(), vec![4, 4], values.clone()).is_err());
        let grid = DensityGrid::new_normalized(domain, vec![4, 4], values).unwrap();
        assert!((grid.riemann_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_grid_uniform_mass() {
        let domain = Domain::unit_square();
        let grid = DensityGrid::new(domain, vec![8, 8], vec![0.25; 64]).unwrap();
        assert!((grid.riemann_sum() - 1.0).abs() < 1e-12);
        assert!((grid.interp2(0.1, -0.3) - 0.25).abs() < 1e-12);
        assert_eq!(grid.interp2(1.5, 0.0), 0.0);
    }

    #[test]
    fn projection_radius_is_corner_norm() {
        let domain = Domain::unit_square();
        assert!((domain.projection_radius() - 2f64.sqrt()).abs() < 1e-15);
        let shifted = Domain::new(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert!((shifted.projection_radius() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn point_cloud_rejects_nonfinite() {
        let err = PointCloud::from_rows(&[vec![0.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
