//! Long-running exploration of the default benchmark, ignored by default.
//! Run with `cargo test -p ssem-core --test calibration -- --ignored --nocapture`
//! to see per-cell timings and the condition ordering for a single seed.

use ssem_core::eval::benchmark::{benchmark_conditions, benchmark_seeds};
use ssem_core::eval::run_experiment_matrix;
use std::time::Instant;

#[test]
#[ignore]
fn time_one_seed_of_the_default_benchmark() {
    let conditions = benchmark_conditions();
    let seed = benchmark_seeds()[0];
    for condition in &conditions {
        let start = Instant::now();
        let report = run_experiment_matrix(std::slice::from_ref(condition), &[seed], None).unwrap();
        let elapsed = start.elapsed();
        let cell = &report.cells[0];
        println!(
            "{}/{}/{}: accuracy {:.4} in {:.1?}",
            cell.architecture, cell.direction, cell.condition, cell.accuracy, elapsed
        );
        assert!(report.failures.is_empty());
    }
}
