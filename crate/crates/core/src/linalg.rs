//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reciprocal condition number sigma_min / sigma_max.
///
/// Empty matrices are perfectly conditioned by convention (they represent
/// absent algebraic blocks).
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 {
        0.0
    } else {
        smin / smax
    }
}

/// Condition number sigma_max / sigma_min (infinite for singular input).
pub fn cond(m: &DMatrix<f64>) -> f64 {
    let r = rcond(m);
    if r == 0.0 {
        f64::INFINITY
    } else {
        1.0 / r
    }
}

/// Solve A X = B for a square A, guarding empty systems and rank deficiency.
///
/// `rcond_floor` is the reciprocal-condition threshold below which the
/// system is declared singular; the caller maps the error to its own
/// variant via `on_singular`.
pub fn solve_checked(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rcond_floor: f64,
    on_singular: impl Fn(f64) -> Error,
) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "solve expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: lhs is {}x{} but rhs has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if a.nrows() == 0 {
        // nalgebra's LU solve does not accept 0x0 systems.
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let rc = rcond(a);
    if rc < rcond_floor {
        return Err(on_singular(rc));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| on_singular(rc))
}

/// Solve with a vector right-hand side.
pub fn solve_vec_checked(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rcond_floor: f64,
    on_singular: impl Fn(f64) -> Error,
) -> Result<DVector<f64>> {
    let b_mat = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve_checked(a, &b_mat, rcond_floor, on_singular)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// Infinity norm of a vector; zero for the empty vector.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Checks that every entry is finite.
pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Checks that every entry of a vector is finite.
pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Eigenvalues of a general real matrix via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(Error::NonFinite("eigenvalue input".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let ev = a.clone().complex_eigenvalues();
    let mut out: Vec<Complex64> = ev.iter().map(|c| Complex64::new(c.re, c.im)).collect();
    if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::ConvergenceFailure);
    }
    sort_complex(&mut out);
    Ok(out)
}

/// Canonical deterministic ordering: ascending by real part, then imaginary.
pub fn sort_complex(vals: &mut [Complex64]) {
    vals.sort_by(|a, b| {
        a.re.total_cmp(&b.re)
            .then_with(|| a.im.total_cmp(&b.im))
    });
}

/// Greedy minimum-distance assignment between two eigenvalue lists.
///
/// All candidate pairs are ranked by distance and accepted while both ends
/// are unused and the distance does not exceed `cap(reference)`. Returns
/// `(ref_index, other_index, distance)` triples.
pub fn greedy_pairs(
    reference: &[Complex64],
    other: &[Complex64],
    cap: impl Fn(Complex64) -> f64,
) -> Vec<(usize, usize, f64)> {
    let mut candidates: Vec<(usize, usize, f64)> = Vec::with_capacity(reference.len() * other.len());
    for (i, r) in reference.iter().enumerate() {
        for (j, d) in other.iter().enumerate() {
            let dist = (r - d).norm();
            if dist <= cap(*r) {
                candidates.push((i, j, dist));
            }
        }
    }
    candidates.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut used_ref = vec![false; reference.len()];
    let mut used_other = vec![false; other.len()];
    let mut out = Vec::new();
    for (i, j, dist) in candidates {
        if !used_ref[i] && !used_other[j] {
            used_ref[i] = true;
            used_other[j] = true;
            out.push((i, j, dist));
        }
    }
    out.sort_by_key(|x| x.0);
    out
}

/// Least-squares slope of y against x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Converts row-major nested vectors into a matrix, validating row lengths.
pub fn matrix_from_rows(rows: &[Vec<f64>], ncols_hint: usize) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(ncols_hint, |r| r.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Converts a matrix to row-major nested vectors.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Places `block` into `dest` with its upper-left corner at (`row`, `col`).
pub fn set_block(dest: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    dest.view_mut((row, col), (block.nrows(), block.ncols()))
        .copy_from(block);
}
