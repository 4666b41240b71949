//! Simulation scenarios and the Monte Carlo benchmark harness.
//!
//! Both scenarios draw bivariate Gaussians truncated to the unit square,
//! with mean and covariance driven by a scalar predictor on [-0.5, 0.5].
//! The harness fits the requested estimators over seeded runs and reports
//! the mean integrated squared slice-averaged error against a large seeded
//! reference sample of the true conditional distribution at each query.
//!
//! The error metric integrates over a query grid on the sampled predictor
//! range [-0.5, 0.5] (21 equispaced points); the integral's nominal [0, 1]
//! parametrization is mapped onto that range.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{AngleGrid, Domain, PointCloud, RegressionDataset, Responses};
use crate::error::{Error, Result};
use crate::frechet::SmoothingKernel;
use crate::metrics::emiswe;
use crate::regressors::{
    cross_validate, fit_model, output_quantiles, ModelConfig, ModelKind, SawConfig, SwwConfig,
    WeightScheme,
};
use crate::seeds::{self, Stream};
use crate::slicing::{quantiles_from_cloud, SlicedQuantiles, Smoothing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scenario {
    /// Mean and eigenvalue profiles linear in the predictor.
    One,
    /// Nonlinear mean (sine bend) and eigenvalue profiles.
    Two,
}

impl Scenario {
    pub fn mean(self, x: f64) -> [f64; 2] {
        match self {
            Scenario::One => [0.4 * x, 0.4 * x],
            Scenario::Two => [
                0.4 * x,
                0.4 * x - 0.05 * (std::f64::consts::PI * x / 0.5).sin(),
            ],
        }
    }

    /// Mean of the eigenvalue pair before the 1/100 scale.
    pub fn eigen_mean(self, x: f64) -> [f64; 2] {
        match self {
            Scenario::One => [1.25 + 0.5 * x, 0.75 - 0.5 * x],
            Scenario::Two => [0.75 + x * x, 0.625 + x * x * x],
        }
    }
}

/// 45-degree rotation shared by both scenarios.
const ROTATION: [[f64; 2]; 2] = [
    [
        std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ],
    [
        -std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ],
];

/// Covariance V diag(xi) V'.
pub fn covariance(xi: [f64; 2]) -> [[f64; 2]; 2] {
    let v = ROTATION;
    let mut out = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            out[a][b] = v[a][0] * xi[0] * v[b][0] + v[a][1] * xi[1] * v[b][1];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub n_obs: usize,
    pub seed: u64,
}

const SIGMA_EIGEN: f64 = 0.1; // std of the eigenvalue draws before scaling
const EIGEN_SCALE: f64 = 0.01;
const MAX_REDRAWS: usize = 1000;

fn draw_eigenvalues<R: Rng>(scenario: Scenario, x: f64, rng: &mut R) -> Result<[f64; 2]> {
    let mean = scenario.eigen_mean(x);
    for _ in 0..MAX_REDRAWS {
        let e1: f64 = mean[0] + SIGMA_EIGEN * rng.sample::<f64, _>(StandardNormal);
        let e2: f64 = mean[1] + SIGMA_EIGEN * rng.sample::<f64, _>(StandardNormal);
        // Negative eigenvalues sit 6+ standard deviations out; redraw the
        // (astronomically rare) offenders so the covariance stays positive
        // definite.
        if e1 > 0.0 && e2 > 0.0 {
            return Ok([EIGEN_SCALE * e1, EIGEN_SCALE * e2]);
        }
    }
    Err(Error::Numeric(
        "eigenvalue draws kept coming back non-positive".into(),
    ))
}

/// Draws `count` points from the truncated Gaussian with the given mean and
/// eigenvalues by rejection into the unit square.
fn draw_truncated_cloud<R: Rng>(
    mean: [f64; 2],
    xi: [f64; 2],
    count: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    // z = mean + V diag(sqrt(xi)) g reproduces covariance V diag(xi) V'.
    let (s1, s2) = (xi[0].sqrt(), xi[1].sqrt());
    let mut points = Array2::zeros((count, 2));
    for row in 0..count {
        let mut accepted = false;
        for _ in 0..MAX_REDRAWS {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            let z1 = mean[0] + ROTATION[0][0] * s1 * g1 + ROTATION[0][1] * s2 * g2;
            let z2 = mean[1] + ROTATION[1][0] * s1 * g1 + ROTATION[1][1] * s2 * g2;
            if z1.abs() <= 1.0 && z2.abs() <= 1.0 {
                points[[row, 0]] = z1;
                points[[row, 1]] = z2;
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Numeric(
                "rejection sampling into the unit square kept failing".into(),
            ));
        }
    }
    PointCloud::new(points)
}

/// One simulated dataset: uniform predictors and truncated-Gaussian
/// response clouds with per-sample random eigenvalue pairs.
pub fn sample_scenario(spec: &ScenarioSpec) -> Result<RegressionDataset> {
    if spec.n < 2 || spec.n_obs < 2 {
        return Err(Error::DegenerateSample(
            "scenarios need n >= 2 samples and N >= 2 observations".into(),
        ));
    }
    let mut rng = seeds::rng(spec.seed, Stream::Scenario, 0);
    let mut predictors = Array2::zeros((spec.n, 1));
    let mut clouds = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let x = rng.random::<f64>() - 0.5;
        predictors[[i, 0]] = x;
        let xi = draw_eigenvalues(spec.scenario, x, &mut rng)?;
        clouds.push(draw_truncated_cloud(
            spec.scenario.mean(x),
            xi,
            spec.n_obs,
            &mut rng,
        )?);
    }
    RegressionDataset::new(
        predictors,
        Responses::Clouds(clouds),
        Domain::unit_square(),
    )
}

/// Reference cloud for the true conditional distribution at x: eigenvalues
/// at their conditional means, a large seeded draw.
pub fn truth_cloud(
    scenario: Scenario,
    x: f64,
    draws: usize,
    seed: u64,
    query_index: u64,
) -> Result<PointCloud> {
    let mut rng = seeds::rng(seed, Stream::Truth, query_index);
    let mean_xi = scenario.eigen_mean(x);
    let xi = [EIGEN_SCALE * mean_xi[0], EIGEN_SCALE * mean_xi[1]];
    draw_truncated_cloud(scenario.mean(x), xi, draws, &mut rng)
}

/// Harness-wide configuration shared by all methods in a table run.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub angle_count: usize,
    pub quantile_points: usize,
    pub u_points: usize,
    pub output_shape: (usize, usize),
    pub smoothing: Smoothing,
    /// Query grid resolution for the error integral.
    pub query_count: usize,
    /// Reference draws per truth query.
    pub truth_draws: usize,
    /// Cutoff grid: Nyquist halvings, j = 0..levels.
    pub tau_levels: usize,
    /// Bandwidth grid for the local models.
    pub h_grid: Vec<f64>,
    pub kernel: SmoothingKernel,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            angle_count: 60,
            quantile_points: 128,
            u_points: 256,
            output_shape: (64, 64),
            smoothing: Smoothing::Adaptive { factor: 1.0 },
            query_count: 21,
            truth_draws: 10_000,
            tau_levels: 6,
            h_grid: vec![0.08, 0.15, 0.3],
            kernel: SmoothingKernel::Gaussian,
        }
    }
}

impl HarnessConfig {
    pub fn queries(&self) -> Vec<f64> {
        (0..self.query_count)
            .map(|k| -0.5 + k as f64 / (self.query_count - 1) as f64)
            .collect()
    }

    pub fn tau_grid(&self, domain: &Domain) -> Vec<f64> {
        let du = 2.0 * domain.projection_radius() / self.u_points as f64;
        let nyquist = std::f64::consts::PI / du;
        (0..self.tau_levels)
            .map(|j| nyquist / (1u32 << j) as f64)
            .collect()
    }

    fn sww_config(&self, domain: &Domain) -> SwwConfig {
        SwwConfig {
            angle_count: self.angle_count,
            quantile_points: self.quantile_points,
            u_points: self.u_points,
            tau: self.tau_grid(domain)[1.min(self.tau_levels - 1)],
            output_shape: self.output_shape,
            smoothing: self.smoothing,
        }
    }

    fn saw_config(&self, seed: u64) -> SawConfig {
        SawConfig {
            angle_count: self.angle_count,
            seed,
            ..SawConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub method: ModelKind,
    pub n: usize,
    pub n_obs: usize,
    /// Mean error over runs, in units of 1e-4.
    pub emiswe_e4: f64,
    /// Standard error of the mean, same units.
    pub stderr_e4: f64,
    pub runs: usize,
    /// Raw per-run values (natural units).
    pub raw: Vec<f64>,
}

/// Truth slicings on the query grid, shared across runs of a scenario.
pub fn truth_slicings(
    scenario: Scenario,
    harness: &HarnessConfig,
    seed: u64,
) -> Result<Vec<SlicedQuantiles>> {
    let angles = AngleGrid::planar(2, harness.angle_count)?;
    harness
        .queries()
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let cloud = truth_cloud(scenario, *x, harness.truth_draws, seed, k as u64)?;
            quantiles_from_cloud(&cloud, &angles, harness.quantile_points)
        })
        .collect()
}

/// One Monte Carlo run of one method: simulate, tune by cross-validation
/// where the method requires it, fit the query grid, and score against the
/// truth slicings.
pub fn run_method_once(
    scenario: Scenario,
    method: ModelKind,
    n: usize,
    n_obs: usize,
    harness: &HarnessConfig,
    truth: &[SlicedQuantiles],
    run_seed: u64,
) -> Result<f64> {
    let dataset = sample_scenario(&ScenarioSpec {
        scenario,
        n,
        n_obs,
        seed: run_seed,
    })?;
    let queries: Vec<Vec<f64>> = harness.queries().iter().map(|x| vec![*x]).collect();
    let angles = AngleGrid::planar(2, harness.angle_count)?;

    let scheme = match method {
        ModelKind::Gsaw | ModelKind::Gsww => WeightScheme::Global,
        ModelKind::Lsaw | ModelKind::Lsww => WeightScheme::Local {
            bandwidth: harness.h_grid[harness.h_grid.len() / 2],
            kernel: harness.kernel,
        },
    };
    let base = match method {
        ModelKind::Gsaw | ModelKind::Lsaw => ModelConfig::Saw {
            scheme,
            cfg: harness.saw_config(run_seed),
        },
        ModelKind::Gsww | ModelKind::Lsww => ModelConfig::Sww {
            scheme,
            cfg: harness.sww_config(dataset.domain()),
        },
    };

    let tau_grid = harness.tau_grid(dataset.domain());
    let config = match method {
        ModelKind::Gsaw => base,
        ModelKind::Lsaw => {
            let report = cross_validate(&dataset, method, &[], &harness.h_grid, &base, run_seed)?;
            apply_best(&base, None, report.best_bandwidth)
        }
        ModelKind::Gsww => {
            let report = cross_validate(&dataset, method, &tau_grid, &[], &base, run_seed)?;
            apply_best(&base, report.best_tau, None)
        }
        ModelKind::Lsww => {
            let report = cross_validate(
                &dataset,
                method,
                &tau_grid,
                &harness.h_grid,
                &base,
                run_seed,
            )?;
            apply_best(&base, report.best_tau, report.best_bandwidth)
        }
    };

    let fit = fit_model(&dataset, &queries, &config)?;
    let fitted = fit
        .outputs
        .iter()
        .map(|o| output_quantiles(o, &angles, harness.quantile_points, harness.u_points))
        .collect::<Result<Vec<_>>>()?;
    emiswe(&fitted, truth)
}

fn apply_best(base: &ModelConfig, tau: Option<f64>, h: Option<f64>) -> ModelConfig {
    let mut config = base.clone();
    match &mut config {
        ModelConfig::Sww { cfg, scheme } => {
            if let Some(t) = tau {
                cfg.tau = t;
            }
            if let (Some(hv), WeightScheme::Local { bandwidth, .. }) = (h, scheme) {
                *bandwidth = hv;
            }
        }
        ModelConfig::Saw { scheme, .. } => {
            if let (Some(hv), WeightScheme::Local { bandwidth, .. }) = (h, scheme) {
                *bandwidth = hv;
            }
        }
    }
    config
}

/// Full benchmark table: every (method, n, N) cell averaged over seeded
/// Monte Carlo runs. Runs are independent jobs; results reduce in run
/// order, so tables are reproducible for a fixed seed.
pub fn run_table(
    scenario: Scenario,
    methods: &[ModelKind],
    n_list: &[usize],
    n_obs_list: &[usize],
    runs: usize,
    seed: u64,
    harness: &HarnessConfig,
) -> Result<Vec<TableRow>> {
    if methods.is_empty() || n_list.is_empty() || n_obs_list.is_empty() || runs == 0 {
        return Err(Error::InvalidArgument(
            "table needs methods, sizes, and at least one run".into(),
        ));
    }
    let truth = truth_slicings(scenario, harness, seed)?;
    let mut rows = Vec::new();
    for &method in methods {
        for &n in n_list {
            for &n_obs in n_obs_list {
                let raw: Vec<Result<f64>> = (0..runs)
                    .into_par_iter()
                    .map(|k| {
                        let run_seed = seeds::derive(seed, Stream::Run, k as u64);
                        run_method_once(scenario, method, n, n_obs, harness, &truth, run_seed)
                    })
                    .collect();
                let raw = raw.into_iter().collect::<Result<Vec<f64>>>()?;
                let mean = raw.iter().sum::<f64>() / runs as f64;
                let variance = if runs > 1 {
                    raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (runs - 1) as f64
                } else {
                    0.0
                };
                let stderr = (variance / runs as f64).sqrt();
                rows.push(TableRow {
                    method,
                    n,
                    n_obs,
                    emiswe_e4: mean * 1e4,
                    stderr_e4: stderr * 1e4,
                    runs,
                    raw,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV rendering of a table, matching the documented column set.
pub fn table_to_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("method,n,N,emiswe_e4,stderr_e4,runs\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.method, row.n, row.n_obs, row.emiswe_e4, row.stderr_e4, row.runs
        ));
    }
    out
}
