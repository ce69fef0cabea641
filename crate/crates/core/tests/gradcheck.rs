//! Tape gradients against central finite differences.

mod common;

use common::{composite_loss_error, op_cases};

#[test]
fn every_op_matches_finite_differences() {
    for case in op_cases() {
        let worst = case.worst_error(100);
        assert!(worst < 1e-4, "{}: worst relative error {worst:e}", case.name);
    }
}

#[test]
fn composite_loss_matches_finite_differences() {
    for seed in [1u64, 2, 3] {
        let (checked, worst) = composite_loss_error(seed);
        assert!(checked > 100);
        assert!(worst < 1e-3, "seed {seed}: worst relative error {worst:e}");
    }
}
