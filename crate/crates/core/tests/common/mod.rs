//! Helpers shared by the integration test files.
#![allow(dead_code)] // each test binary uses its own subset

use num_complex::Complex64;
use penstab::linalg;

/// Worst relative mismatch between two eigenvalue multisets after greedy
/// nearest pairing. Panics if the sets cannot be fully paired.
pub fn max_rel_mismatch(reference: &[Complex64], other: &[Complex64]) -> f64 {
    assert_eq!(
        reference.len(),
        other.len(),
        "eigenvalue counts differ: {} vs {}",
        reference.len(),
        other.len()
    );
    let pairs = linalg::greedy_pairs(reference, other, |_| f64::INFINITY);
    assert_eq!(pairs.len(), reference.len());
    pairs
        .iter()
        .map(|(i, _, d)| d / reference[*i].norm().max(1.0))
        .fold(0.0_f64, f64::max)
}

/// Eigenvalues of a real matrix with the structural zeros filtered out
/// (magnitude below 1e-12 relative to the largest one).
pub fn nonzero_eigenvalues(m: &nalgebra::DMatrix<f64>) -> Vec<Complex64> {
    let vals = linalg::eigenvalues(m).expect("eigenvalue computation");
    let scale = vals.iter().fold(1.0_f64, |acc, z| acc.max(z.norm()));
    vals.into_iter()
        .filter(|z| z.norm() > 1e-12 * scale)
        .collect()
}

/// Geometric grid with inclusive endpoints.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo * (step * i as f64).exp() })
        .collect()
}
