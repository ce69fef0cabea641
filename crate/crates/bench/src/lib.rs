//! Fixtures shared by the kernel benchmarks.

use boxtm::boxalg::BoxEmbed;
use boxtm::diffcore::Matrix;
use boxtm::model::BoxParams;

/// Deterministic pseudo-random box parameters (`n × dim`).
pub fn box_params(n: usize, dim: usize, salt: u64) -> BoxParams {
    let mut state = salt.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    BoxParams {
        min: Matrix::from_shape_fn((n, dim), |_| next() * 0.5),
        size: Matrix::from_shape_fn((n, dim), |_| next() * 0.5 - 1.5),
    }
}

pub fn boxes(n: usize, dim: usize, salt: u64) -> Vec<BoxEmbed> {
    box_params(n, dim, salt).boxes()
}
