//! Weight machinery for global and local Fréchet regression, and the
//! per-slice distribution fit used by the slice-wise estimators: weighted
//! pointwise quantile mean followed by the exact L2 projection onto the
//! nondecreasing cone (pool adjacent violators), then range clipping.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

/// Sample moments backing the global weight formula
/// s_i(x) = 1 + (X_i - mean)' inv_cov (x - mean).
#[derive(Debug, Clone)]
pub struct GlobalWeightModel {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    inverse_covariance: Array2<f64>,
    /// Ratio of extreme covariance eigenvalues.
    condition: f64,
}

impl GlobalWeightModel {
    pub fn fit(predictors: ArrayView2<'_, f64>) -> Result<Self> {
        let n = predictors.nrows();
        let q = predictors.ncols();
        if n < 2 {
            return Err(Error::DegenerateSample(format!(
                "covariance needs at least 2 samples, got {n}"
            )));
        }
        let mean = predictors.sum_axis(ndarray::Axis(0)) / n as f64;
        let mut covariance = Array2::zeros((q, q));
        for row in predictors.rows() {
            for a in 0..q {
                for b in 0..q {
                    covariance[[a, b]] += (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
        }
        covariance /= n as f64;
        for k in 0..q {
            if covariance[[k, k]] <= PIVOT_TOL {
                return Err(Error::RankDeficient {
                    dim: k,
                    msg: "has (numerically) zero variance".into(),
                });
            }
        }
        let chol = cholesky(&covariance)?;
        let inverse_covariance = inverse_from_cholesky(&chol);
        let eigen = jacobi_eigenvalues(&covariance);
        let condition = eigen.iter().fold(f64::MIN, |a, b| a.max(*b))
            / eigen.iter().fold(f64::MAX, |a, b| a.min(*b)).max(PIVOT_TOL);
        Ok(Self {
            mean,
            covariance,
            inverse_covariance,
            condition,
        })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn inverse_covariance(&self) -> &Array2<f64> {
        &self.inverse_covariance
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Weight vector at the query; averages exactly to 1 and may be
    /// negative.
    pub fn weights(&self, predictors: ArrayView2<'_, f64>, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.mean.len();
        if x.len() != q || predictors.ncols() != q {
            return Err(Error::Schema(format!(
                "query dimension {} does not match predictor dimension {q}",
                x.len()
            )));
        }
        // v = inv_cov (x - mean)
        let mut v = vec![0.0; q];
        for a in 0..q {
            for b in 0..q {
                v[a] += self.inverse_covariance[[a, b]] * (x[b] - self.mean[b]);
            }
        }
        Ok(predictors
            .rows()
            .into_iter()
            .map(|row| {
                1.0 + row
                    .iter()
                    .zip(&self.mean)
                    .zip(&v)
                    .map(|((xi, m), vi)| (xi - m) * vi)
                    .sum::<f64>()
            })
            .collect())
    }
}

/// Global Fréchet regression weights at a query point.
pub fn global_weights(predictors: ArrayView2<'_, f64>, x: &[f64]) -> Result<Vec<f64>> {
    GlobalWeightModel::fit(predictors)?.weights(predictors, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingKernel {
    Gaussian,
    Epanechnikov,
}

impl SmoothingKernel {
    fn eval(self, u: f64) -> f64 {
        match self {
            SmoothingKernel::Gaussian => {
                (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
            SmoothingKernel::Epanechnikov => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.75 * (1.0 - u * u)
                }
            }
        }
    }
}

/// Local linear weights with their backing moments.
#[derive(Debug, Clone)]
pub struct LocalWeights {
    pub values: Vec<f64>,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub sigma0_sq: f64,
}

/// Local Fréchet regression weights for a scalar predictor:
/// s_i = K_h(X_i - x) [v2 - v1 (X_i - x)] / sigma0^2, mean exactly 1.
pub fn local_weights(
    predictors: &[f64],
    x: f64,
    h: f64,
    kernel: SmoothingKernel,
) -> Result<LocalWeights> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let n = predictors.len() as f64;
    let (mut v0, mut v1, mut v2) = (0.0, 0.0, 0.0);
    for &xi in predictors {
        let d = xi - x;
        let k = kernel.eval(d / h) / h;
        v0 += k;
        v1 += k * d;
        v2 += k * d * d;
    }
    v0 /= n;
    v1 /= n;
    v2 /= n;
    let sigma0_sq = v0 * v2 - v1 * v1;
    if sigma0_sq <= 1e-12 {
        return Err(Error::BandwidthTooSmall { h, x });
    }
    let values = predictors
        .iter()
        .map(|&xi| {
            let d = xi - x;
            let k = kernel.eval(d / h) / h;
            k * (v2 - v1 * d) / sigma0_sq
        })
        .collect();
    Ok(LocalWeights {
        values,
        v0,
        v1,
        v2,
        sigma0_sq,
    })
}

/// Exact L2 projection onto nondecreasing sequences (uniform quadrature
/// weights), by pooling adjacent violators.
pub fn pava(values: &[f64]) -> Vec<f64> {
    let mut block_value: Vec<f64> = Vec::with_capacity(values.len());
    let mut block_size: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        let mut value = v;
        let mut size = 1.0;
        while let Some(&last) = block_value.last() {
            if last <= value {
                break;
            }
            let last_size = block_size.pop().unwrap();
            let last_value = block_value.pop().unwrap();
            value = (last_value * last_size + value * size) / (last_size + size);
            size += last_size;
        }
        block_value.push(value);
        block_size.push(size);
    }
    let mut out = Vec::with_capacity(values.len());
    for (v, s) in block_value.iter().zip(&block_size) {
        for _ in 0..(*s as usize) {
            out.push(*v);
        }
    }
    out
}

/// Per-slice Fréchet regression: the weighted pointwise quantile mean
/// (1/n) sum_i w_i Q_i, projected onto the monotone cone and clipped into
/// the attainable projection range.
pub fn frechet_slice_fit(
    rows: ArrayView2<'_, f64>,
    weights: &[f64],
    bounds: (f64, f64),
) -> Result<Vec<f64>> {
    let n = rows.nrows();
    if n == 0 || weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {n} rows",
            weights.len()
        )));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - n as f64).abs() > 1e-8 * (n as f64).max(1.0) {
        return Err(Error::DegenerateWeights(format!(
            "weights sum to {sum}, expected n = {n}"
        )));
    }
    let (lo, hi) = bounds;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "invalid bounds [{lo}, {hi}]"
        )));
    }
    let s = rows.ncols();
    let mut mean = vec![0.0; s];
    for (row, w) in rows.rows().into_iter().zip(weights) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut fitted = pava(&mean);
    for v in &mut fitted {
        *v = v.clamp(lo, hi);
    }
    Ok(fitted)
}

fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let q = a.nrows();
    let mut l = Array2::zeros((q, q));
    let scale = (0..q).map(|k| a[[k, k]]).fold(0.0f64, f64::max);
    for i in 0..q {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= PIVOT_TOL * scale.max(1.0) {
                    return Err(Error::RankDeficient {
                        dim: i,
                        msg: "makes the predictor covariance singular".into(),
                    });
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

fn inverse_from_cholesky(l: &Array2<f64>) -> Array2<f64> {
    let q = l.nrows();
    // Invert the lower-triangular factor by forward substitution.
    let mut linv = Array2::zeros((q, q));
    for j in 0..q {
        linv[[j, j]] = 1.0 / l[[j, j]];
        for i in j + 1..q {
            let mut sum = 0.0;
            for k in j..i {
                sum -= l[[i, k]] * linv[[k, j]];
            }
            linv[[i, j]] = sum / l[[i, i]];
        }
    }
    // inv = L^{-T} L^{-1}
    let mut inv = Array2::zeros((q, q));
    for a in 0..q {
        for b in 0..q {
            let mut sum = 0.0;
            for k in a.max(b)..q {
                sum += linv[[k, a]] * linv[[k, b]];
            }
            inv[[a, b]] = sum;
        }
    }
    inv
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let q = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..q {
            for j in i + 1..q {
                off += m[[i, j]].abs();
            }
        }
        if off < 1e-14 {
            break;
        }
        for p in 0..q {
            for r in p + 1..q {
                if m[[p, r]].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (m[[r, r]] - m[[p, p]]) / m[[p, r]];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..q {
                    let mkp = m[[k, p]];
                    let mkr = m[[k, r]];
                    m[[k, p]] = c * mkp - s * mkr;
                    m[[k, r]] = s * mkp + c * mkr;
                }
                for k in 0..q {
                    let mpk = m[[p, k]];
                    let mrk = m[[r, k]];
                    m[[p, k]] = c * mpk - s * mrk;
                    m[[r, k]] = s * mpk + c * mrk;
                }
            }
        }
    }
    (0..q).map(|k| m[[k, k]]).collect()
}

/// Reference least-squares solver used by tests and diagnostics: solves the
/// normal equations of an intercept + linear model by Gaussian elimination.
pub fn ols_prediction(
    predictors: ArrayView2<'_, f64>,
    responses: ArrayView1<'_, f64>,
    x: &[f64],
) -> Result<f64> {
    let n = predictors.nrows();
    let q = predictors.ncols();
    if responses.len() != n || x.len() != q {
        return Err(Error::Schema("mismatched regression inputs".into()));
    }
    let d = q + 1;
    let mut ata = vec![vec![0.0; d]; d];
    let mut atb = vec![0.0; d];
    for i in 0..n {
        let mut row = vec![1.0];
        row.extend(predictors.row(i).iter());
        for a in 0..d {
            for b in 0..d {
                ata[a][b] += row[a] * row[b];
            }
            atb[a] += row[a] * responses[i];
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))
            .unwrap();
        if ata[pivot][col].abs() < 1e-12 {
            return Err(Error::RankDeficient {
                dim: col,
                msg: "normal equations are singular".into(),
            });
        }
        ata.swap(col, pivot);
        atb.swap(col, pivot);
        for row in col + 1..d {
            let factor = ata[row][col] / ata[col][col];
            for k in col..d {
                ata[row][k] -= factor * ata[col][k];
            }
            atb[row] -= factor * atb[col];
        }
    }
    let mut beta = vec![0.0; d];
    for row in (0..d).rev() {
        let mut sum = atb[row];
        for k in row + 1..d {
            sum -= ata[row][k] * beta[k];
        }
        beta[row] = sum / ata[row][row];
    }
    Ok(beta[0] + beta[1..].iter().zip(x).map(|(b, xi)| b * xi).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn global_weights_at_mean_are_one() {
        let x = array![[0.1], [0.5], [-0.3], [0.7]];
        let model = GlobalWeightModel::fit(x.view()).unwrap();
        let mean = model.mean()[0];
        let w = model.weights(x.view(), &[mean]).unwrap();
        for wi in w {
            assert!((wi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn global_weights_two_point_design() {
        let x = array![[-1.0], [1.0]];
        let w = global_weights(x.view(), &[1.0]).unwrap();
        assert!((w[0] - 0.0).abs() < 1e-12);
        assert!((w[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn global_weights_constant_column_rejected() {
        let x = array![[1.0, 0.5], [2.0, 0.5], [3.0, 0.5]];
        match GlobalWeightModel::fit(x.view()) {
            Err(Error::RankDeficient { dim: 1, .. }) => {}
            other => panic!("expected rank deficiency on dim 1, got {other:?}"),
        }
    }

    #[test]
    fn global_weights_mean_is_one_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut x = Array2::zeros((20, 3));
        for v in x.iter_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let w = global_weights(x.view(), &[0.2, -0.4, 0.9]).unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!((mean - 1.0).abs() < 1e-10, "weight mean {mean}");
    }

    #[test]
    fn local_weights_symmetric_design() {
        let w = local_weights(&[-1.0, 0.0, 1.0], 0.0, 1.0, SmoothingKernel::Gaussian).unwrap();
        assert!((w.values[0] - w.values[2]).abs() < 1e-14);
        assert!(w.v1.abs() < 1e-15);
    }

    #[test]
    fn local_weights_mean_is_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        for kernel in [SmoothingKernel::Gaussian, SmoothingKernel::Epanechnikov] {
            let w = local_weights(&xs, 0.4, 0.3, kernel).unwrap();
            let mean = w.values.iter().sum::<f64>() / w.values.len() as f64;
            assert!((mean - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn local_weights_match_direct_formula() {
        // Independent scalar evaluation of the weight formula.
        let xs = [0.0, 0.5, 1.0];
        let (x, h) = (0.25, 0.5);
        let epan = |u: f64| if u.abs() >= 1.0 { 0.0 } else { 0.75 * (1.0 - u * u) };
        let n = 3.0;
        let kh: Vec<f64> = xs.iter().map(|xi| epan((xi - x) / h) / h).collect();
        let v0: f64 = kh.iter().sum::<f64>() / n;
        let v1: f64 = kh.iter().zip(&xs).map(|(k, xi)| k * (xi - x)).sum::<f64>() / n;
        let v2: f64 = kh
            .iter()
            .zip(&xs)
            .map(|(k, xi)| k * (xi - x) * (xi - x))
            .sum::<f64>()
            / n;
        let s0 = v0 * v2 - v1 * v1;
        let expected: Vec<f64> = kh
            .iter()
            .zip(&xs)
            .map(|(k, xi)| k * (v2 - v1 * (xi - x)) / s0)
            .collect();
        let w = local_weights(&xs, x, h, SmoothingKernel::Epanechnikov).unwrap();
        for (a, b) in w.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn local_weights_tiny_bandwidth_rejected() {
        match local_weights(&[0.0, 0.5, 1.0], 0.25, 1e-4, SmoothingKernel::Epanechnikov) {
            Err(Error::BandwidthTooSmall { .. }) => {}
            other => panic!("expected bandwidth-too-small, got {other:?}"),
        }
    }

    #[test]
    fn slice_fit_unit_weights_is_mean() {
        let rows = array![[0.0, 1.0, 2.0], [1.0, 2.0, 3.0]];
        let out = frechet_slice_fit(rows.view(), &[1.0, 1.0], (-10.0, 10.0)).unwrap();
        assert_eq!(out, vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn slice_fit_single_row_identity() {
        let rows = array![[0.25, 0.5, 0.75]];
        let out = frechet_slice_fit(rows.view(), &[1.0], (-1.0, 1.0)).unwrap();
        assert_eq!(out, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn slice_fit_negative_weight_projection() {
        // Raw mean (0, 2, 1) violates monotonicity; the projection pools the
        // last two coordinates to 1.5 each.
        let rows = array![[0.0, 1.0, 2.0], [0.0, 0.0, 3.0]];
        let out = frechet_slice_fit(rows.view(), &[4.0, -2.0], (-10.0, 10.0)).unwrap();
        assert_eq!(out, vec![0.0, 1.5, 1.5]);
    }

    #[test]
    fn pava_kkt_on_three_points() {
        // Exhaustive check against a fine monotone lattice.
        let raw = [0.0, 2.0, 1.0];
        let fit = pava(&raw);
        let objective =
            |v: &[f64]| -> f64 { v.iter().zip(&raw).map(|(a, b)| (a - b) * (a - b)).sum() };
        let best = objective(&fit);
        let grid: Vec<f64> = (0..=80).map(|i| i as f64 * 0.025).collect();
        for &a in &grid {
            for &b in grid.iter().filter(|&&b| b >= a) {
                for &c in grid.iter().filter(|&&c| c >= b) {
                    assert!(objective(&[a, b, c]) >= best - 1e-9);
                }
            }
        }
    }

    #[test]
    fn pava_identity_on_monotone_input() {
        let raw = [-1.0, -0.5, -0.5, 0.0, 2.0];
        assert_eq!(pava(&raw), raw.to_vec());
    }

    #[test]
    fn slice_fit_output_monotone_and_bounded() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = 4;
            let s = 6;
            let mut rows = Array2::zeros((n, s));
            for i in 0..n {
                let mut vals: Vec<f64> = (0..s).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                vals.sort_by(f64::total_cmp);
                for (k, v) in vals.iter().enumerate() {
                    rows[[i, k]] = *v;
                }
            }
            let mut weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w += (n as f64 - sum) / n as f64);
            let out = frechet_slice_fit(rows.view(), &weights, (-0.8, 0.8)).unwrap();
            for w in out.windows(2) {
                assert!(w[1] >= w[0]);
            }
            for v in &out {
                assert!(*v >= -0.8 && *v <= 0.8);
            }
        }
    }

    #[test]
    fn slice_fit_zero_weights_rejected() {
        let rows = array![[0.0, 1.0], [1.0, 2.0]];
        assert!(matches!(
            frechet_slice_fit(rows.view(), &[0.0, 0.0], (-1.0, 3.0)),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn global_weights_reproduce_least_squares() {
        // Scalar responses embedded as Dirac rows: the weighted mean equals
        // the usual least-squares prediction (normal-equations oracle).
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let n = 12;
        let mut x = Array2::zeros((n, 1));
        let mut y = Array1::zeros(n);
        for i in 0..n {
            x[[i, 0]] = rng.random::<f64>() * 2.0 - 1.0;
            y[i] = 0.7 * x[[i, 0]] - 0.2 + 0.05 * (rng.random::<f64>() - 0.5);
        }
        let query = [0.33];
        let w = global_weights(x.view(), &query).unwrap();
        let frechet_fit: f64 =
            w.iter().zip(y.iter()).map(|(wi, yi)| wi * yi).sum::<f64>() / n as f64;
        let ols = ols_prediction(x.view(), y.view(), &query).unwrap();
        assert!(
            (frechet_fit - ols).abs() < 1e-8,
            "Fréchet fit {frechet_fit} vs least squares {ols}"
        );
    }
}
