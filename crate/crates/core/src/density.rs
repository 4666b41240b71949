//! Multivariate kernel density estimation with truncation to the support box.
//!
//! The estimator evaluates a product-kernel sum on the grid and then
//! renormalizes over the domain, which realizes truncation to the common
//! support. Also hosts inverse-CDF sampling from gridded densities, used to
//! feed grid responses to the particle-based regressors.

use rand::Rng;
use rayon::prelude::*;

use crate::domain::{DensityGrid, Domain, PointCloud};
use crate::error::{Error, Result};

/// Rule-of-thumb bandwidth constant. The theory fixes only the rate
/// N^{-1/(p+4)}; the Silverman-style constant makes the choice deterministic.
pub const BANDWIDTH_CONSTANT: f64 = 1.06;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Product of 1-D Epanechnikov kernels; compact support in the unit cube.
    EpanechnikovProduct,
    /// Product of 1-D standard Gaussians. Violates compact support; offered
    /// for smoothness experiments.
    GaussianProduct,
}

impl Kernel {
    fn eval_1d(self, u: f64) -> f64 {
        match self {
            Kernel::EpanechnikovProduct => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.75 * (1.0 - u * u)
                }
            }
            Kernel::GaussianProduct => {
                (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
        }
    }

    /// Points farther than this (in bandwidth units) contribute nothing
    /// (exactly for Epanechnikov, to double precision for the Gaussian).
    fn support_radius(self) -> f64 {
        match self {
            Kernel::EpanechnikovProduct => 1.0,
            Kernel::GaussianProduct => 9.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub kernel: Kernel,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Auto,
            kernel: Kernel::EpanechnikovProduct,
        }
    }
}

/// b = 1.06 * scale * N^{-1/(p+4)}, with `scale` the geometric mean of the
/// per-axis sample standard deviations.
pub fn auto_bandwidth(n: usize, p: usize, scale: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::DegenerateSample(format!(
            "bandwidth selection needs N >= 2, got {n}"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateSample(format!(
            "bandwidth selection needs positive spread, got scale = {scale}"
        )));
    }
    Ok(BANDWIDTH_CONSTANT * scale * (n as f64).powf(-1.0 / (p as f64 + 4.0)))
}

/// Geometric mean of per-axis standard deviations of a cloud.
pub fn cloud_scale(cloud: &PointCloud) -> f64 {
    let n = cloud.len() as f64;
    let p = cloud.dim();
    let mean = cloud.mean();
    let mut log_sum = 0.0;
    for k in 0..p {
        let var = cloud
            .points()
            .column(k)
            .iter()
            .map(|v| (v - mean[k]).powi(2))
            .sum::<f64>()
            / n;
        if var <= 0.0 {
            return 0.0;
        }
        log_sum += 0.5 * var.ln();
    }
    (log_sum / p as f64).exp()
}

fn resolve_bandwidth(cloud: &PointCloud, cfg: &KdeConfig) -> Result<f64> {
    match cfg.bandwidth {
        Bandwidth::Fixed(b) => {
            if !(b > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth must be positive, got {b}"
                )));
            }
            Ok(b)
        }
        Bandwidth::Auto => auto_bandwidth(cloud.len(), cloud.dim(), cloud_scale(cloud)),
    }
}

/// Kernel density estimate truncated to `domain`: the raw product-kernel sum
/// is evaluated at all grid cell centers and renormalized over the box.
pub fn kde_on_grid(
    cloud: &PointCloud,
    domain: &Domain,
    shape: &[usize],
    cfg: &KdeConfig,
) -> Result<DensityGrid> {
    let p = domain.dim();
    if cloud.dim() != p {
        return Err(Error::Schema(format!(
            "cloud dimension {} does not match domain dimension {p}",
            cloud.dim()
        )));
    }
    if shape.len() != p || shape.iter().any(|s| *s < 8) {
        return Err(Error::Resolution(format!(
            "KDE grid needs at least 8 cells per axis, got {shape:?}"
        )));
    }
    let b = resolve_bandwidth(cloud, cfg)?;
    let reach = b * cfg.kernel.support_radius();

    let cells: usize = shape.iter().product();
    let spacing: Vec<f64> = (0..p)
        .map(|k| (domain.upper()[k] - domain.lower()[k]) / shape[k] as f64)
        .collect();
    let norm = 1.0 / (cloud.len() as f64 * b.powi(p as i32));

    // Each cell is independent, so the evaluation can be split freely
    // across workers without affecting the result.
    let raw: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|flat| {
            let mut idx = flat;
            let mut z = vec![0.0; p];
            for k in (0..p).rev() {
                let i = idx % shape[k];
                idx /= shape[k];
                z[k] = domain.lower()[k] + (i as f64 + 0.5) * spacing[k];
            }
            let mut acc = 0.0;
            'points: for point in cloud.points().rows() {
                let mut prod = 1.0;
                for k in 0..p {
                    let d = z[k] - point[k];
                    if d.abs() > reach {
                        continue 'points;
                    }
                    prod *= cfg.kernel.eval_1d(d / b);
                }
                acc += prod;
            }
            acc * norm
        })
        .collect();

    let cell_volume: f64 = spacing.iter().product();
    let mass: f64 = raw.iter().sum::<f64>() * cell_volume;
    if mass <= 0.0 {
        return Err(Error::EmptyMass(
            "all kernel mass falls outside the domain".into(),
        ));
    }
    DensityGrid::new_normalized(domain.clone(), shape.to_vec(), raw)
}

/// Draws `count` points from a gridded density by axis-wise inverse-CDF
/// sampling: each axis index is drawn from the conditional marginal given
/// the earlier axes, then the point is placed uniformly inside the cell.
///
/// This is an approximation used to hand grid responses to the
/// particle-based regressors, which are native to point clouds.
pub fn sample_grid<R: Rng>(grid: &DensityGrid, count: usize, rng: &mut R) -> Result<PointCloud> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "cannot sample an empty cloud".into(),
        ));
    }
    let p = grid.dim();
    let shape = grid.shape();
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let mut fixed: Vec<usize> = Vec::with_capacity(p);
        for axis in 0..p {
            // Marginal over the remaining axes, conditional on fixed indices.
            let mut weights = vec![0.0; shape[axis]];
            accumulate_conditional(grid, &fixed, axis, &mut weights);
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(Error::EmptyMass(
                    "conditional slice of the grid carries no mass".into(),
                ));
            }
            let target: f64 = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = shape[axis] - 1;
            for (i, w) in weights.iter().enumerate() {
                cum += w;
                if target < cum {
                    chosen = i;
                    break;
                }
            }
            fixed.push(chosen);
        }
        let mut z = Vec::with_capacity(p);
        for (axis, &i) in fixed.iter().enumerate() {
            let h = grid.spacing(axis);
            let low = grid.domain().lower()[axis] + i as f64 * h;
            z.push(low + rng.random::<f64>() * h);
        }
        rows.push(z);
    }
    PointCloud::from_rows(&rows)
}

fn accumulate_conditional(
    grid: &DensityGrid,
    fixed: &[usize],
    axis: usize,
    weights: &mut [f64],
) {
    let shape = grid.shape();
    let p = shape.len();
    // Iterate all cells consistent with the fixed prefix.
    let free_axes: Vec<usize> = (axis + 1..p).collect();
    let free_cells: usize = free_axes.iter().map(|&k| shape[k]).product();
    for i in 0..shape[axis] {
        let mut acc = 0.0;
        for flat in 0..free_cells {
            let mut idx = vec![0usize; p];
            idx[..fixed.len()].copy_from_slice(fixed);
            idx[axis] = i;
            let mut rem = flat;
            for &k in free_axes.iter().rev() {
                idx[k] = rem % shape[k];
                rem /= shape[k];
            }
            let mut offset = 0usize;
            for k in 0..p {
                offset = offset * shape[k] + idx[k];
            }
            acc += grid.values()[offset];
        }
        weights[i] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    #[test]
    fn auto_bandwidth_formula() {
        let b = auto_bandwidth(256, 2, 1.0).unwrap();
        let expected = 1.06 * 256f64.powf(-1.0 / 6.0);
        assert!((b - expected).abs() < 1e-12);
        assert!((b - 0.4206612787715729).abs() < 1e-12);
    }

    #[test]
    fn auto_bandwidth_rejects_degenerate() {
        assert!(matches!(
            auto_bandwidth(1, 2, 1.0),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            auto_bandwidth(100, 2, 0.0),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn kde_uniform_interior_accuracy() {
        // Monte Carlo oracle: the truncated uniform on [-1,1]^2 has density
        // 0.25; only the interior is checked to dodge boundary bias. The
        // renormalization over the box still inflates interior values by a
        // few percent when the data support equals the box, so the bound
        // carries little slack at b = 0.2.
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let dist = Uniform::new_inclusive(-1.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![dist.sample(&mut rng), dist.sample(&mut rng)])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let cfg = KdeConfig {
            bandwidth: Bandwidth::Fixed(0.2),
            kernel: Kernel::EpanechnikovProduct,
        };
        let grid = kde_on_grid(&cloud, &Domain::unit_square(), &[64, 64], &cfg).unwrap();
        let mut sup = 0.0f64;
        for i in 0..64 {
            for j in 0..64 {
                let x = grid.center(0, i);
                let y = grid.center(1, j);
                if x.abs() <= 0.5 && y.abs() <= 0.5 {
                    sup = sup.max((grid.at2(i, j) - 0.25).abs());
                }
            }
        }
        assert!(sup <= 0.05, "interior sup error {sup} exceeds 0.05");
    }

    #[test]
    fn kde_output_is_normalized() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let grid = kde_on_grid(
            &cloud,
            &Domain::unit_square(),
            &[32, 32],
            &KdeConfig::default(),
        )
        .unwrap();
        assert!((grid.riemann_sum() - 1.0).abs() < 1e-8);
        assert!(grid.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn kde_all_mass_outside_domain() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![10.0 + 0.001 * i as f64, 10.0])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let cfg = KdeConfig {
            bandwidth: Bandwidth::Fixed(0.1),
            kernel: Kernel::EpanechnikovProduct,
        };
        match kde_on_grid(&cloud, &Domain::unit_square(), &[16, 16], &cfg) {
            Err(Error::EmptyMass(_)) => {}
            other => panic!("expected empty-mass error, got {other:?}"),
        }
    }

    #[test]
    fn kde_invariant_under_point_permutation() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let normal = Normal::new(0.0, 0.25).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)])
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let cfg = KdeConfig {
            bandwidth: Bandwidth::Fixed(0.15),
            kernel: Kernel::EpanechnikovProduct,
        };
        let a = kde_on_grid(&cloud, &Domain::unit_square(), &[16, 16], &cfg).unwrap();
        rows.reverse();
        rows.swap(3, 77);
        let permuted = PointCloud::from_rows(&rows).unwrap();
        let b = kde_on_grid(&permuted, &Domain::unit_square(), &[16, 16], &cfg).unwrap();
        for (va, vb) in a.values().iter().zip(b.values()) {
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn kde_l2_error_shrinks_with_n() {
        // Gaussian blob, auto bandwidth; checks the N^{-2/(4+p)} trend as a
        // log-log slope over three decades.
        let sigma = 0.3;
        let domain = Domain::unit_square();
        let shape = [64usize, 64];
        // Truth: truncated N(0, sigma^2 I) renormalized on the box.
        let mut truth_values = Vec::with_capacity(64 * 64);
        for i in 0..64 {
            for j in 0..64 {
                let x = domain.lower()[0] + (i as f64 + 0.5) * (2.0 / 64.0);
                let y = domain.lower()[1] + (j as f64 + 0.5) * (2.0 / 64.0);
                truth_values
                    .push((-0.5 * (x * x + y * y) / (sigma * sigma)).exp());
            }
        }
        let truth =
            DensityGrid::new_normalized(domain.clone(), shape.to_vec(), truth_values).unwrap();

        let normal = Normal::new(0.0, sigma).unwrap();
        let mut errors = Vec::new();
        for (exp, n) in [(2u32, 100usize), (3, 1000), (4, 10000)] {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + exp as u64);
            let mut rows = Vec::with_capacity(n);
            while rows.len() < n {
                let x = normal.sample(&mut rng);
                let y = normal.sample(&mut rng);
                if x.abs() <= 1.0 && y.abs() <= 1.0 {
                    rows.push(vec![x, y]);
                }
            }
            let cloud = PointCloud::from_rows(&rows).unwrap();
            let est = kde_on_grid(&cloud, &domain, &shape, &KdeConfig::default()).unwrap();
            errors.push(est.l2_distance(&truth).unwrap());
        }
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "errors not strictly decreasing: {errors:?}"
        );
        // Least-squares slope of log error against log N.
        let xs: Vec<f64> = [100.0f64, 1000.0, 10000.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let xbar = xs.iter().sum::<f64>() / 3.0;
        let ybar = ys.iter().sum::<f64>() / 3.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xbar) * (y - ybar))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xbar).powi(2)).sum::<f64>();
        assert!(
            (slope + 1.0 / 3.0).abs() <= 0.15,
            "log-log slope {slope} outside -1/3 +- 0.15"
        );
    }

    #[test]
    fn grid_sampling_matches_marginals() {
        // Asymmetric density: 3/4 of the mass in the left half.
        let domain = Domain::unit_square();
        let values: Vec<f64> = (0..32 * 32)
            .map(|flat| if flat / 32 < 16 { 0.375 } else { 0.125 })
            .collect();
        let grid = DensityGrid::new(domain, vec![32, 32], values).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let cloud = sample_grid(&grid, 4000, &mut rng).unwrap();
        let left = cloud
            .points()
            .rows()
            .into_iter()
            .filter(|r| r[0] < 0.0)
            .count() as f64
            / 4000.0;
        assert!((left - 0.75).abs() < 0.03, "left fraction {left}");
    }
}
