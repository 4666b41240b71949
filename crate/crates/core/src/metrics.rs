//! Distances between sliced distributions: the 1-D Wasserstein distance in
//! quantile form, its slice-averaged aggregation, the simulation error
//! metric, and the fraction of variance explained.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::slicing::SlicedQuantiles;

/// A distance value together with the per-angle squared contributions.
#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub value: f64,
    pub per_angle: Option<Vec<f64>>,
}

/// 1-D L2-Wasserstein distance between two quantile rows: the square root
/// of the midpoint-rule quadrature of the squared quantile difference.
pub fn wasserstein_1d(
    qa: ndarray::ArrayView1<'_, f64>,
    qb: ndarray::ArrayView1<'_, f64>,
) -> Result<f64> {
    Ok(wasserstein_1d_squared(qa, qb)?.sqrt())
}

pub fn wasserstein_1d_squared(
    qa: ndarray::ArrayView1<'_, f64>,
    qb: ndarray::ArrayView1<'_, f64>,
) -> Result<f64> {
    if qa.len() != qb.len() || qa.is_empty() {
        return Err(Error::GridMismatch(format!(
            "quantile rows of lengths {} and {}",
            qa.len(),
            qb.len()
        )));
    }
    let s = qa.len() as f64;
    Ok(qa
        .iter()
        .zip(qb.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / s)
}

/// Slice-averaged Wasserstein distance between two quantile slicings:
/// sqrt of the mean per-angle squared 1-D distance, under the normalized
/// angle measure. The same aggregation serves both abstract slice families
/// and slicings of multivariate distributions, which coincide by definition.
pub fn sliced_wasserstein(a: &SlicedQuantiles, b: &SlicedQuantiles) -> Result<DistanceReport> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch(
            "sliced distance needs matching angle and probability grids".into(),
        ));
    }
    let mut per_angle = Vec::with_capacity(a.num_angles());
    for l in 0..a.num_angles() {
        per_angle.push(wasserstein_1d_squared(a.row(l), b.row(l))?);
    }
    let value = (per_angle.iter().sum::<f64>() / per_angle.len() as f64).sqrt();
    Ok(DistanceReport {
        value,
        per_angle: Some(per_angle),
    })
}

pub fn sliced_wasserstein_squared(a: &SlicedQuantiles, b: &SlicedQuantiles) -> Result<f64> {
    Ok(sliced_wasserstein(a, b)?.value.powi(2))
}

/// Mean over a query grid of squared slice-averaged distances between a
/// fitted map and the truth; one Monte Carlo run's contribution to the
/// simulation metric.
pub fn emiswe(fitted: &[SlicedQuantiles], truth: &[SlicedQuantiles]) -> Result<f64> {
    if fitted.is_empty() || fitted.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching nonempty query grids, got {} and {}",
            fitted.len(),
            truth.len()
        )));
    }
    let mut acc = 0.0;
    for (f, t) in fitted.iter().zip(truth) {
        acc += sliced_wasserstein_squared(f, t)?;
    }
    Ok(acc / fitted.len() as f64)
}

/// Pointwise mean of the quantile rows: the barycenter of the slicings
/// under the slice-averaged distance for equal weights. Means of
/// nondecreasing rows are nondecreasing, so no projection is needed.
pub fn frechet_mean_quantiles(responses: &[SlicedQuantiles]) -> Result<SlicedQuantiles> {
    let first = responses
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty response list".into()))?;
    let (l, s) = (first.num_angles(), first.num_probs());
    let mut mean = Array2::zeros((l, s));
    for q in responses {
        if !q.same_grid(first) {
            return Err(Error::GridMismatch(
                "responses must share the slicing grid".into(),
            ));
        }
        mean += q.values();
    }
    mean /= responses.len() as f64;
    SlicedQuantiles::new(first.angle_grid().clone(), mean)
}

/// Slice-averaged Wasserstein R^2: one minus the ratio of residual to total
/// variation around the sample barycenter.
pub fn sw_r2(responses: &[SlicedQuantiles], fitted: &[SlicedQuantiles]) -> Result<f64> {
    if responses.len() != fitted.len() || responses.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need matching lists of at least 2 fits, got {} and {}",
            responses.len(),
            fitted.len()
        )));
    }
    let barycenter = frechet_mean_quantiles(responses)?;
    let mut residual = 0.0;
    let mut total = 0.0;
    for (r, f) in responses.iter().zip(fitted) {
        residual += sliced_wasserstein_squared(r, f)?;
        total += sliced_wasserstein_squared(r, &barycenter)?;
    }
    if total <= 1e-300 {
        return Err(Error::DegenerateVariance(
            "all responses identical; R^2 undefined".into(),
        ));
    }
    Ok(1.0 - residual / total)
}
