//! Scratch diagnostics for calibrating the statistically tight tests.
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Uniform};
use swreg::density::{kde_on_grid, Bandwidth, KdeConfig, Kernel};
use swreg::domain::{AngleGrid, DensityGrid, Domain, PointCloud};
use swreg::slicing::radon_grid;

fn main() {
    kde_probe();
    disk_probe(1);
    disk_probe(4);
    disk_probe(8);
    curve_probe();
}

fn kde_probe() {
    for seed in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
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
        let mut mean_inner = 0.0;
        let mut count = 0;
        for i in 0..64 {
            for j in 0..64 {
                let x = grid.center(0, i);
                let y = grid.center(1, j);
                if x.abs() <= 0.5 && y.abs() <= 0.5 {
                    sup = sup.max((grid.at2(i, j) - 0.25).abs());
                    mean_inner += grid.at2(i, j);
                    count += 1;
                }
            }
        }
        println!(
            "kde seed {seed}: sup {:.4}, inner mean {:.4}",
            sup,
            mean_inner / count as f64
        );
    }
}

fn disk_probe(supersample: usize) {
    let shape = 256;
    let domain = Domain::unit_square();
    let h = 2.0 / shape as f64;
    let mut values = Vec::with_capacity(shape * shape);
    for i in 0..shape {
        for j in 0..shape {
            let mut inside = 0usize;
            for a in 0..supersample {
                for b in 0..supersample {
                    let x = -1.0 + (i as f64 + (a as f64 + 0.5) / supersample as f64) * h;
                    let y = -1.0 + (j as f64 + (b as f64 + 0.5) / supersample as f64) * h;
                    if x * x + y * y <= 1.0 {
                        inside += 1;
                    }
                }
            }
            values.push(inside as f64 / (supersample * supersample) as f64
                * std::f64::consts::FRAC_1_PI);
        }
    }
    let disk = DensityGrid::new_normalized(domain, vec![shape, shape], values).unwrap();
    let angles = AngleGrid::planar(2, 6).unwrap();
    let sliced = radon_grid(&disk, &angles, 256).unwrap();
    let u_grid = sliced.u_grid();
    let mut sup: f64 = 0.0;
    let mut sup_inner: f64 = 0.0; // |u| <= 0.99
    let mut arg = (0usize, 0usize);
    for l in 0..sliced.num_angles() {
        for (m, &u) in u_grid.iter().enumerate() {
            let truth = if u.abs() < 1.0 {
                2.0 / std::f64::consts::PI * (1.0 - u * u).sqrt()
            } else {
                0.0
            };
            let e = (sliced.row(l)[m] - truth).abs();
            if e > sup {
                sup = e;
                arg = (l, m);
            }
            if u.abs() <= 0.99 && e > sup_inner {
                sup_inner = e;
            }
        }
    }
    println!(
        "disk supersample {supersample}: sup {:.4} at angle {} u {:.4}; sup(|u|<=0.99) {:.4}",
        sup, arg.0, u_grid[arg.1], sup_inner
    );
}

#[allow(dead_code)]
fn curve_probe() {
    for (shape, u, l, sigma) in [(128usize, 256usize, 180usize, 0.3f64), (128, 256, 180, 0.2), (128, 256, 90, 0.2), (64, 128, 90, 0.3)] {
        let domain = Domain::unit_square();
        let h = 2.0 / shape as f64;
        let mut values = Vec::new();
        for i in 0..shape {
            for j in 0..shape {
                let x = -1.0 + (i as f64 + 0.5) * h;
                let y = -1.0 + (j as f64 + 0.5) * h;
                values.push((-0.5 * (x * x + y * y) / (sigma * sigma)).exp());
            }
        }
        let f = DensityGrid::new_normalized(domain, vec![shape, shape], values).unwrap();
        let angles = AngleGrid::planar(2, l).unwrap();
        let sliced = radon_grid(&f, &angles, u).unwrap();
        let nyq = swreg::inversion::nyquist(&sliced);
        let taus: Vec<f64> = (0..8).rev().map(|j| nyq / (1u32 << j) as f64).collect();
        let curve = swreg::inversion::reconstruction_error_curve(&f, l, u, &taus).unwrap();
        println!("shape {shape} U {u} L {l} sigma {sigma} nyq {nyq:.1}:");
        for (t, e) in curve {
            println!("  tau {t:8.2}  sup {e:.5}");
        }
    }
}
