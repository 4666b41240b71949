//! Abstract slicing-transform contract: a forward map from grid densities
//! to per-angle slice densities plus a regularized inverse. The Radon
//! transform is the sole registered implementation; the contract is the
//! seam for circular or generalized variants.

use crate::domain::{AngleGrid, DensityGrid, Domain};
use crate::error::{Error, Result};
use crate::inversion::{fbp_inverse, normalize_to_density, FbpConfig};
use crate::slicing::{radon_grid, SlicedDensities};

pub trait SlicingTransform: Send + Sync {
    fn name(&self) -> &'static str;

    /// Forward slicing of a valid density; every output row must be a
    /// valid 1-D density.
    fn forward(
        &self,
        f: &DensityGrid,
        angles: &AngleGrid,
        u_points: usize,
    ) -> Result<SlicedDensities>;

    /// Regularized inverse at cutoff tau; output is a valid density.
    fn regularized_inverse(
        &self,
        densities: &SlicedDensities,
        tau: f64,
        domain: &Domain,
        output_shape: (usize, usize),
    ) -> Result<DensityGrid>;
}

pub struct RadonTransform;

impl SlicingTransform for RadonTransform {
    fn name(&self) -> &'static str {
        "radon"
    }

    fn forward(
        &self,
        f: &DensityGrid,
        angles: &AngleGrid,
        u_points: usize,
    ) -> Result<SlicedDensities> {
        radon_grid(f, angles, u_points)
    }

    fn regularized_inverse(
        &self,
        densities: &SlicedDensities,
        tau: f64,
        domain: &Domain,
        output_shape: (usize, usize),
    ) -> Result<DensityGrid> {
        let raw = fbp_inverse(
            densities,
            &FbpConfig {
                tau,
                output_shape,
                domain: domain.clone(),
            },
        )?;
        normalize_to_density(&raw, domain, &[output_shape.0, output_shape.1])
    }
}

static RADON: RadonTransform = RadonTransform;

/// Registry lookup by name; the same instance semantics every call.
pub fn lookup(name: &str) -> Option<&'static dyn SlicingTransform> {
    match name {
        "radon" => Some(&RADON),
        _ => None,
    }
}

pub fn registered_names() -> Vec<&'static str> {
    vec!["radon"]
}

/// Empirical contract report: forward-continuity ratios over input pairs
/// and round-trip errors over a cutoff ladder. Diagnostic, not gating;
/// injectivity is not machine-checkable.
#[derive(Debug, Clone)]
pub struct ContractReport {
    /// Per pair: max over angles of the slice L2 distance divided by the
    /// input L2 distance. Identical pairs are skipped.
    pub lipschitz_ratios: Vec<f64>,
    /// Cauchy-Schwarz bound on the ratio for box domains.
    pub ratio_bound: f64,
    /// (tau, sup round-trip error) for each requested cutoff, per input.
    pub round_trips: Vec<Vec<(f64, f64)>>,
}

pub fn verify_contract(
    transform: &dyn SlicingTransform,
    inputs: &[DensityGrid],
    angles: &AngleGrid,
    u_points: usize,
    taus: &[f64],
) -> Result<ContractReport> {
    if inputs.len() < 2 {
        return Err(Error::InvalidArgument(
            "contract verification needs at least two distinct densities".into(),
        ));
    }
    let domain = inputs[0].domain().clone();
    for f in inputs {
        if f.domain() != &domain || f.shape() != inputs[0].shape() {
            return Err(Error::GridMismatch(
                "contract inputs must share domain and shape".into(),
            ));
        }
    }
    // half-width bound: |D|_inf <= C gives ratio <= (2C)^{(p-1)/2}.
    let half_width = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(lo, hi)| lo.abs().max(hi.abs()))
        .fold(0.0f64, f64::max);
    let ratio_bound = (2.0 * half_width).powf((domain.dim() as f64 - 1.0) / 2.0);

    let sliced: Vec<SlicedDensities> = inputs
        .iter()
        .map(|f| transform.forward(f, angles, u_points))
        .collect::<Result<Vec<_>>>()?;

    let mut lipschitz_ratios = Vec::new();
    for a in 0..inputs.len() {
        for b in a + 1..inputs.len() {
            let input_distance = inputs[a].l2_distance(&inputs[b])?;
            if input_distance <= 1e-14 {
                // 0/0 guard: identical pair carries no ratio information.
                continue;
            }
            let du = sliced[a].spacing();
            let mut worst: f64 = 0.0;
            for l in 0..angles.len() {
                let sq: f64 = sliced[a]
                    .row(l)
                    .iter()
                    .zip(sliced[b].row(l))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                worst = worst.max((sq * du).sqrt());
            }
            lipschitz_ratios.push(worst / input_distance);
        }
    }

    let shape = (inputs[0].shape()[0], inputs[0].shape()[1]);
    let round_trips = inputs
        .iter()
        .zip(&sliced)
        .map(|(f, s)| {
            taus.iter()
                .map(|&tau| {
                    let rec = transform.regularized_inverse(s, tau, &domain, shape)?;
                    Ok((tau, rec.sup_distance(f)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ContractReport {
        lipschitz_ratios,
        ratio_bound,
        round_trips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::nyquist;

    fn blob(shape: usize, sigma: f64, center: (f64, f64)) -> DensityGrid {
        let domain = Domain::unit_square();
        let h = 2.0 / shape as f64;
        let mut values = Vec::new();
        for i in 0..shape {
            for j in 0..shape {
                let x = -1.0 + (i as f64 + 0.5) * h - center.0;
                let y = -1.0 + (j as f64 + 0.5) * h - center.1;
                values.push((-0.5 * (x * x + y * y) / (sigma * sigma)).exp());
            }
        }
        DensityGrid::new_normalized(domain, vec![shape, shape], values).unwrap()
    }

    #[test]
    fn registry_returns_radon() {
        let t = lookup("radon").expect("radon registered");
        assert_eq!(t.name(), "radon");
        assert!(lookup("circular").is_none());
        assert_eq!(registered_names(), vec!["radon"]);
    }

    #[test]
    fn lipschitz_ratios_within_bound() {
        // The continuity constant for the box [-1,1]^2 is sqrt(2C) = sqrt 2;
        // verified with 10% slack per the contract.
        let inputs = vec![
            blob(96, 0.3, (0.0, 0.0)),
            blob(96, 0.25, (0.2, -0.1)),
            blob(96, 0.35, (-0.15, 0.2)),
        ];
        let angles = AngleGrid::planar(2, 24).unwrap();
        let report = verify_contract(&RadonTransform, &inputs, &angles, 192, &[]).unwrap();
        assert_eq!(report.lipschitz_ratios.len(), 3);
        assert!((report.ratio_bound - 2f64.sqrt()).abs() < 1e-12);
        for ratio in &report.lipschitz_ratios {
            assert!(ratio.is_finite());
            assert!(
                *ratio <= report.ratio_bound * 1.1,
                "ratio {ratio} above bound {}",
                report.ratio_bound
            );
        }
    }

    #[test]
    fn identical_pair_is_skipped() {
        let f = blob(64, 0.3, (0.0, 0.0));
        let inputs = vec![f.clone(), f.clone(), blob(64, 0.25, (0.1, 0.0))];
        let angles = AngleGrid::planar(2, 12).unwrap();
        let report = verify_contract(&RadonTransform, &inputs, &angles, 128, &[]).unwrap();
        // Three pairs, one identical: two ratios reported.
        assert_eq!(report.lipschitz_ratios.len(), 2);
    }

    #[test]
    fn round_trip_errors_decrease_in_tau() {
        // A blob sharp enough that the cutoff bias still dominates at
        // Nyq/8..Nyq/2.
        let f = blob(128, 0.04, (0.0, 0.0));
        let g = blob(128, 0.05, (0.1, 0.1));
        let angles = AngleGrid::planar(2, 90).unwrap();
        let sliced = radon_grid(&f, &angles, 256).unwrap();
        let nyq = nyquist(&sliced);
        let taus = [nyq / 8.0, nyq / 4.0, nyq / 2.0];
        let report =
            verify_contract(&RadonTransform, &[f, g], &angles, 256, &taus).unwrap();
        for trips in &report.round_trips {
            assert_eq!(trips.len(), 3);
            assert!(
                trips[0].1 > trips[1].1 && trips[1].1 > trips[2].1,
                "round-trip errors not strictly decreasing: {trips:?}"
            );
        }
    }
}
