use std::time::Instant;
use swreg::regressors::ModelKind;
use swreg::simulation::{run_table, HarnessConfig, Scenario};

fn main() {
    let harness = HarnessConfig::default();
    for method in [ModelKind::Gsww, ModelKind::Gsaw] {
        let t0 = Instant::now();
        let rows = run_table(Scenario::One, &[method], &[100], &[100], 10, 20240811, &harness).unwrap();
        let row = &rows[0];
        println!(
            "{} n=100 N=100 runs=10: emiswe {:.3}e-4 (stderr {:.3}) in {:?}",
            row.method, row.emiswe_e4, row.stderr_e4, t0.elapsed()
        );
    }
}
