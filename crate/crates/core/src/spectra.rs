//! Standard, generalized and delay eigenproblems, the Z-to-S map and
//! per-mode damping/frequency summaries.
//!
//! The dense solver rides on the real Schur decomposition. The generalized
//! solver reduces (E, A) to a standard problem: directly through E when E
//! is well conditioned, otherwise through the shift-inverted operator
//! (A - sigma E)^{-1} E whose eigenvalues theta relate to the pencil's via
//! s = sigma + 1/theta, with theta = 0 marking the infinite eigenvalue.
//! Either backend can be swapped out behind [`eig_dense`] /
//! [`eig_generalized`] without touching the rest of the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_g17;
use crate::linalg;
use crate::pencils::{DelayPencil, Domain, Interfacing, Pencil, PencilForm};

/// Reciprocal magnitude below which an eigenvalue counts as infinite.
const RECIPROCAL_INF_TOL: f64 = 1e-10;

/// Relative magnitude below which a Z-domain sparse pencil eigenvalue is a
/// structural zero of the algebraic rows (an infinitely fast mode).
const STRUCTURAL_ZERO_TOL: f64 = 1e-12;

/// Half-width of the band around +-pi/h flagged as aliasing-suspect.
const ALIASING_BAND: f64 = 1e-6;

/// Where a spectrum came from; echoed into report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSource {
    pub kind: String,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interfacing: Option<Interfacing>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub form: Option<PencilForm>,
}

/// Eigenvalues of a pencil: the finite ones listed, the infinite ones
/// counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<Complex64>,
    infinite_multiplicity: usize,
    domain: Domain,
    source: Option<SpectrumSource>,
}

impl Spectrum {
    /// Builds a spectrum from bare finite eigenvalues (for example a
    /// published list); values are brought into canonical order.
    pub fn from_values(eigenvalues: Vec<Complex64>, domain: Domain) -> Self {
        let mut eigenvalues = eigenvalues;
        linalg::sort_complex(&mut eigenvalues);
        Self {
            eigenvalues,
            infinite_multiplicity: 0,
            domain,
            source: None,
        }
    }

    /// Finite eigenvalues in canonical (re, im) order.
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    /// Multiplicity of the eigenvalue at infinity. For Z-domain sparse
    /// pencils this also counts the structural zeros of the algebraic
    /// rows, which map to Re(s) = -inf.
    pub fn infinite_multiplicity(&self) -> usize {
        self.infinite_multiplicity
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn source(&self) -> Option<&SpectrumSource> {
        self.source.as_ref()
    }

    /// Total eigenvalue count, finite plus infinite.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len() + self.infinite_multiplicity
    }

    /// Largest finite eigenvalue magnitude; zero for an empty list.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// Restamps domain and source (used by pencil-aware constructors).
    pub fn with_provenance(mut self, domain: Domain, source: Option<SpectrumSource>) -> Self {
        self.domain = domain;
        self.source = source;
        self
    }

    /// Finite eigenvalues expressed in the S-plane together with sentinel
    /// entries for the modes without a finite image.
    pub fn mapped_to_s(&self) -> Result<Vec<MappedEigenvalue>> {
        let mut out = Vec::with_capacity(self.dim());
        match self.domain {
            Domain::S => {
                for &s in &self.eigenvalues {
                    out.push(MappedEigenvalue {
                        native: s,
                        s: Some(s),
                        aliasing: false,
                    });
                }
                for _ in 0..self.infinite_multiplicity {
                    out.push(MappedEigenvalue {
                        native: Complex64::new(f64::INFINITY, 0.0),
                        s: None,
                        aliasing: false,
                    });
                }
            }
            Domain::Z => {
                let h = self
                    .source
                    .as_ref()
                    .map(|s| s.h)
                    .filter(|h| *h > 0.0)
                    .ok_or_else(|| {
                        Error::InvalidArgument(
                            "Z-domain spectrum carries no positive step size to map with".into(),
                        )
                    })?;
                for &z in &self.eigenvalues {
                    match map_z_to_s(z, h) {
                        Ok(s) => out.push(MappedEigenvalue {
                            native: z,
                            s: Some(s),
                            aliasing: is_aliasing_suspect(s, h),
                        }),
                        Err(Error::ZeroEigenvalue) => out.push(MappedEigenvalue {
                            native: z,
                            s: None,
                            aliasing: false,
                        }),
                        Err(e) => return Err(e),
                    }
                }
                for _ in 0..self.infinite_multiplicity {
                    out.push(MappedEigenvalue {
                        native: Complex64::new(0.0, 0.0),
                        s: None,
                        aliasing: false,
                    });
                }
            }
        }
        Ok(out)
    }

    /// CSV rows `re,im,domain,finite,aliasing_flag` in the native domain.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,domain,finite,aliasing_flag\n");
        let mapped = self.mapped_to_s().ok();
        for (i, z) in self.eigenvalues.iter().enumerate() {
            let aliasing = mapped
                .as_ref()
                .map(|m| m[i].aliasing)
                .unwrap_or(false);
            out.push_str(&format!(
                "{},{},{},true,{}\n",
                fmt_g17(z.re),
                fmt_g17(z.im),
                self.domain,
                aliasing
            ));
        }
        for _ in 0..self.infinite_multiplicity {
            let (re, im) = match self.domain {
                Domain::S => ("inf", "0"),
                Domain::Z => ("0", "0"),
            };
            out.push_str(&format!("{re},{im},{},false,false\n", self.domain));
        }
        out
    }

    /// CSV rows `re,im,s_re,s_im,domain,finite,aliasing_flag` with the
    /// eigenvalues mapped to the S-plane.
    pub fn to_csv_mapped(&self) -> Result<String> {
        let mapped = self.mapped_to_s()?;
        let mut out = String::from("re,im,s_re,s_im,domain,finite,aliasing_flag\n");
        for entry in mapped {
            match entry.s {
                Some(s) => out.push_str(&format!(
                    "{},{},{},{},{},true,{}\n",
                    fmt_g17(entry.native.re),
                    fmt_g17(entry.native.im),
                    fmt_g17(s.re),
                    fmt_g17(s.im),
                    self.domain,
                    entry.aliasing
                )),
                None => {
                    let s_re = match self.domain {
                        Domain::S => "inf",
                        Domain::Z => "-inf",
                    };
                    out.push_str(&format!(
                        "{},{},{},0,{},false,false\n",
                        fmt_g17(entry.native.re),
                        fmt_g17(entry.native.im),
                        s_re,
                        self.domain
                    ));
                }
            }
        }
        Ok(out)
    }

    /// JSON mirror with the metadata header.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct EigJson {
            re: f64,
            im: f64,
        }
        #[derive(Serialize)]
        struct SpectrumJson<'a> {
            domain: Domain,
            #[serde(skip_serializing_if = "Option::is_none")]
            source: &'a Option<SpectrumSource>,
            infinite_multiplicity: usize,
            eigenvalues: Vec<EigJson>,
        }
        let doc = SpectrumJson {
            domain: self.domain,
            source: &self.source,
            infinite_multiplicity: self.infinite_multiplicity,
            eigenvalues: self
                .eigenvalues
                .iter()
                .map(|z| EigJson { re: z.re, im: z.im })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("spectrum serialization cannot fail")
    }
}

/// A native eigenvalue together with its S-plane image, when one exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedEigenvalue {
    pub native: Complex64,
    /// None when the mode has no finite S-plane image (z = 0 or s at
    /// infinity).
    pub s: Option<Complex64>,
    pub aliasing: bool,
}

/// Damping ratio and natural frequency of one S-plane mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub eigenvalue_re: f64,
    pub eigenvalue_im: f64,
    /// zeta = -Re(s)/|s| as a fraction (1.0 = critically damped real mode).
    pub damping_ratio: f64,
    /// f_n = |s| / (2 pi) in Hz.
    pub natural_frequency_hz: f64,
}

/// All eigenvalues of a general square matrix.
pub fn eig_dense(a: &DMatrix<f64>) -> Result<Spectrum> {
    let eigenvalues = linalg::eigenvalues(a)?;
    Ok(Spectrum {
        eigenvalues,
        infinite_multiplicity: 0,
        domain: Domain::S,
        source: None,
    })
}

/// Finite and infinite eigenvalues of the pencil s E - A.
///
/// An eigenvalue is counted as infinite when its reciprocal-form
/// counterpart 1/s falls within `1e-10` of zero.
pub fn eig_generalized(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Spectrum> {
    if e.nrows() != e.ncols() || a.nrows() != a.ncols() || e.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "pencil matrices must be square with equal dimensions, got {}x{} and {}x{}",
            e.nrows(),
            e.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    if !linalg::all_finite(e) || !linalg::all_finite(a) {
        return Err(Error::NonFinite("pencil matrices".into()));
    }
    let n = e.nrows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            infinite_multiplicity: 0,
            domain: Domain::S,
            source: None,
        });
    }

    if linalg::rcond(e) > 1e-12 {
        // E is invertible: the problem is standard after one solve.
        let x = linalg::solve_checked(e, a, 1e-14, |rc| Error::SingularMassMatrix { rcond: rc })?;
        let vals = linalg::eigenvalues(&x)?;
        let (finite, infinite): (Vec<_>, Vec<_>) = vals
            .into_iter()
            .partition(|s| s.norm() < 1.0 / RECIPROCAL_INF_TOL);
        return Ok(Spectrum {
            eigenvalues: finite,
            infinite_multiplicity: infinite.len(),
            domain: Domain::S,
            source: None,
        });
    }

    // Singular E: shift-invert through (A - sigma E)^{-1} E. theta = 0
    // corresponds to the infinite eigenvalue; otherwise s = sigma + 1/theta.
    let candidates = [
        0.0, 1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 3.25, -3.25, 10.0, -10.0,
    ];
    let mut chosen: Option<(f64, f64)> = None;
    for sigma in candidates {
        let c = a - e * sigma;
        let rc = linalg::rcond(&c);
        if rc > 1e-8 {
            chosen = Some((sigma, rc));
            break;
        }
        if chosen.is_none_or(|(_, best)| rc > best) {
            chosen = Some((sigma, rc));
        }
    }
    let (sigma, rc) = chosen.expect("candidate list is nonempty");
    if rc < 1e-13 {
        return Err(Error::SingularPencil);
    }
    let c = a - e * sigma;
    let b = linalg::solve_checked(&c, e, 1e-14, |_| Error::SingularPencil)?;
    let thetas = linalg::eigenvalues(&b)?;
    let theta_scale = thetas.iter().fold(1.0_f64, |acc, t| acc.max(t.norm()));
    let mut finite = Vec::new();
    let mut infinite = 0usize;
    for theta in thetas {
        if theta.norm() <= RECIPROCAL_INF_TOL.max(1e-14 * theta_scale) {
            infinite += 1;
        } else {
            let s = sigma + theta.inv();
            if s.norm() >= 1.0 / RECIPROCAL_INF_TOL {
                infinite += 1;
            } else {
                finite.push(s);
            }
        }
    }
    linalg::sort_complex(&mut finite);
    Ok(Spectrum {
        eigenvalues: finite,
        infinite_multiplicity: infinite,
        domain: Domain::S,
        source: None,
    })
}

fn source_of(pencil: &Pencil, kind: &str) -> SpectrumSource {
    SpectrumSource {
        kind: kind.to_string(),
        h: pencil.h(),
        r: pencil.r(),
        interfacing: pencil.interfacing(),
        form: Some(pencil.form()),
    }
}

/// Spectrum of a pencil with its provenance stamped on.
///
/// For sparse Z-domain pencils the structural zeros contributed by the
/// all-zero algebraic rows (modes with Re(s) = -inf) are counted together
/// with the infinite multiplicity instead of being listed as dynamics.
pub fn pencil_spectrum(pencil: &Pencil) -> Result<Spectrum> {
    let kind = match (pencil.domain(), pencil.interfacing()) {
        (Domain::S, _) => "dae",
        (Domain::Z, _) if pencil.dim() > pencil.nu() + pencil.mu() => "companion",
        (Domain::Z, _) => "pc",
    };
    let mut spec = eig_generalized(pencil.e(), pencil.a())?
        .with_provenance(pencil.domain(), Some(source_of(pencil, kind)));
    if pencil.domain() == Domain::Z && pencil.form() == PencilForm::Sparse {
        let scale = spec
            .eigenvalues
            .iter()
            .fold(1.0_f64, |acc, z| acc.max(z.norm()));
        let (zeros, dynamic): (Vec<_>, Vec<_>) = spec
            .eigenvalues
            .into_iter()
            .partition(|z| z.norm() <= STRUCTURAL_ZERO_TOL * scale);
        spec.eigenvalues = dynamic;
        spec.infinite_multiplicity += zeros.len();
    }
    Ok(spec)
}

/// Principal-branch map from the Z-plane to the S-plane: s = log(z)/h with
/// Im(s h) in (-pi, pi].
pub fn map_z_to_s(z: Complex64, h: f64) -> Result<Complex64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive and finite, got {h}"
        )));
    }
    if z.re == 0.0 && z.im == 0.0 {
        return Err(Error::ZeroEigenvalue);
    }
    // Canonicalize -0.0 so real negative z lands on the +pi branch edge.
    let z = Complex64::new(z.re, if z.im == 0.0 { 0.0 } else { z.im });
    Ok(z.ln() / h)
}

/// True when the mapped eigenvalue sits within the band around the Nyquist
/// edge Im(s) = +-pi/h.
pub fn is_aliasing_suspect(s: Complex64, h: f64) -> bool {
    (s.im.abs() - std::f64::consts::PI / h).abs() <= ALIASING_BAND
}

/// Ratio of the largest to the smallest finite nonzero eigenvalue
/// magnitude.
pub fn stiffness_ratio(spec: &Spectrum) -> Result<f64> {
    if spec.domain() != Domain::S {
        return Err(Error::WrongDomain { expected: "S" });
    }
    let mags: Vec<f64> = spec
        .eigenvalues()
        .iter()
        .map(|z| z.norm())
        .filter(|m| *m > 0.0)
        .collect();
    if mags.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let max = mags.iter().cloned().fold(f64::MIN, f64::max);
    let min = mags.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max / min)
}

/// Damping ratio and natural frequency of one mode.
pub fn damping_frequency(s: Complex64) -> Result<ModeSummary> {
    let mag = s.norm();
    if mag == 0.0 {
        return Err(Error::ZeroEigenvalue);
    }
    Ok(ModeSummary {
        eigenvalue_re: s.re,
        eigenvalue_im: s.im,
        damping_ratio: -s.re / mag,
        natural_frequency_hz: mag / (2.0 * std::f64::consts::PI),
    })
}

/// One delay-root Newton run that did not converge.
#[derive(Debug)]
pub struct DelayRootFailure {
    pub guess: Complex64,
    pub error: Error,
}

/// Converged delay roots plus the per-guess failures.
#[derive(Debug)]
pub struct DelaySolveResult {
    pub spectrum: Spectrum,
    pub failures: Vec<DelayRootFailure>,
}

/// Newton iteration on the bordered system
/// `[M(s) v; c^T v - 1] = 0` for each starting guess, where M is the
/// delay pencil's characteristic matrix. Converged roots within 1e-6 of an
/// earlier one are deduplicated; failed guesses are reported, not dropped.
pub fn solve_delay_eigs(
    dp: &DelayPencil,
    guesses: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<DelaySolveResult> {
    if guesses.is_empty() {
        return Err(Error::InvalidArgument(
            "delay solver needs at least one starting guess".into(),
        ));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut roots: Vec<Complex64> = Vec::new();
    let mut failures = Vec::new();
    for &guess in guesses {
        match newton_delay_root(dp, guess, tol, max_iter) {
            Ok(root) => {
                if !roots.iter().any(|r| (r - root).norm() <= 1e-6) {
                    roots.push(root);
                }
            }
            Err(error) => failures.push(DelayRootFailure { guess, error }),
        }
    }
    linalg::sort_complex(&mut roots);
    let spectrum = Spectrum {
        eigenvalues: roots,
        infinite_multiplicity: 0,
        domain: Domain::S,
        source: Some(SpectrumSource {
            kind: "delay".to_string(),
            h: dp.h(),
            r: None,
            interfacing: None,
            form: Some(dp.form()),
        }),
    };
    Ok(DelaySolveResult { spectrum, failures })
}

fn newton_delay_root(
    dp: &DelayPencil,
    guess: Complex64,
    tol: f64,
    max_iter: usize,
) -> Result<Complex64> {
    let n = dp.dim();
    let mut s = guess;
    let mut v = initial_null_vector(dp, s);

    // Normalization probe: the first unit vector unless the candidate null
    // vector is essentially orthogonal to it.
    let vmax = v.iter().fold(0.0_f64, |acc, x| acc.max(x.norm()));
    let pivot = if v[0].norm() > 1e-8 * vmax {
        0
    } else {
        (0..n)
            .max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm()))
            .unwrap_or(0)
    };
    v /= v[pivot];

    for _ in 0..max_iter {
        let m = dp.characteristic(s);
        let mv = &m * &v;
        let vnorm = v.norm();
        if mv.norm() / vnorm <= tol {
            return Ok(s);
        }

        let dm_v = dp.characteristic_ds(s) * &v;
        let mut jac = DMatrix::<Complex64>::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&m);
        for i in 0..n {
            jac[(i, n)] = dm_v[i];
        }
        jac[(n, pivot)] = Complex64::new(1.0, 0.0);

        let mut rhs = DVector::<Complex64>::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -mv[i];
        }
        rhs[n] = Complex64::new(1.0, 0.0) - v[pivot];

        let delta = jac.lu().solve(&rhs).ok_or(Error::NoRootFound {
            guess,
            max_iter,
        })?;
        for i in 0..n {
            v[i] += delta[i];
        }
        s += delta[n];
        if !s.re.is_finite() || !s.im.is_finite() {
            return Err(Error::NoRootFound { guess, max_iter });
        }
    }
    Err(Error::NoRootFound { guess, max_iter })
}

fn initial_null_vector(dp: &DelayPencil, s: Complex64) -> DVector<Complex64> {
    let n = dp.dim();
    // Dense deterministic probe (golden-angle phases) so the null direction
    // is reachable whatever the structure of M; a unit-vector probe can sit
    // in the wrong invariant subspace of triangular matrices.
    let mut v = DVector::from_fn(n, |i, _| {
        let theta = 2.399963229728653 * (i + 1) as f64;
        Complex64::new(theta.cos(), theta.sin())
    });
    let norm = v.norm();
    v.unscale_mut(norm);
    let m = dp.characteristic(s);
    let scale = m.iter().fold(1.0_f64, |acc, x| acc.max(x.norm()));
    let shift = DMatrix::from_diagonal_element(n, n, Complex64::new(1e-12 * scale, 1e-12 * scale));
    let shifted = &m + shift;
    // Inverse iteration: amplifies the near-null direction when s is close
    // to a root; harmless when it is not (Newton corrects v and s anyway).
    for _ in 0..2 {
        let candidate = m
            .clone()
            .lu()
            .solve(&v)
            .or_else(|| shifted.clone().lu().solve(&v));
        match candidate {
            Some(w)
                if w.iter().all(|x| x.re.is_finite() && x.im.is_finite())
                    && w.norm() > 1e-300 =>
            {
                let norm = w.norm();
                v = w.unscale(norm);
            }
            _ => break,
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use crate::pencils;
    use approx::assert_relative_eq;

    #[test]
    fn eig_dense_diagonal() {
        let a = DMatrix::from_partial_diagonal(2, 2, &[-1.0, -2.0]);
        let spec = eig_dense(&a).unwrap();
        assert_relative_eq!(spec.eigenvalues()[0].re, -2.0, epsilon = 1e-12);
        assert_relative_eq!(spec.eigenvalues()[1].re, -1.0, epsilon = 1e-12);
        assert_eq!(spec.infinite_multiplicity(), 0);
    }

    #[test]
    fn eig_dense_companion_of_quadratic() {
        // z^2 - 3z + 2 = (z - 1)(z - 2)
        let a = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, 1.0, 0.0]);
        let spec = eig_dense(&a).unwrap();
        assert_relative_eq!(spec.eigenvalues()[0].re, 1.0, epsilon = 1e-10);
        assert_relative_eq!(spec.eigenvalues()[1].re, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn eig_generalized_singular_e() {
        let e = DMatrix::from_partial_diagonal(2, 2, &[1.0, 0.0]);
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]);
        let spec = eig_generalized(&e, &a).unwrap();
        assert_eq!(spec.eigenvalues().len(), 1);
        assert_relative_eq!(spec.eigenvalues()[0].re, -2.0, epsilon = 1e-10);
        assert_eq!(spec.infinite_multiplicity(), 1);
    }

    #[test]
    fn eig_generalized_identity_e_matches_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, -0.7]);
        let e = DMatrix::identity(2, 2);
        let gen = eig_generalized(&e, &a).unwrap();
        let dense = eig_dense(&a).unwrap();
        for (x, y) in gen.eigenvalues().iter().zip(dense.eigenvalues()) {
            assert!((x - y).norm() <= 1e-10);
        }
    }

    #[test]
    fn dae_sparse_pencil_spectrum() {
        let ssm = fixtures::scalar_dae_default_ssm();
        let p = pencils::pencil_dae(&ssm, PencilForm::Sparse).unwrap();
        let spec = pencil_spectrum(&p).unwrap();
        assert_eq!(spec.eigenvalues().len(), 1);
        assert_relative_eq!(spec.eigenvalues()[0].re, -1.0, epsilon = 1e-10);
        assert_eq!(spec.infinite_multiplicity(), 1);
        assert_eq!(spec.domain(), Domain::S);
    }

    #[test]
    fn pc_sparse_pencil_counts_structural_zeros_as_infinite() {
        let ssm = fixtures::scalar_dae_default_ssm();
        let p = pencils::pencil_pc_extrapolation(&ssm, 0.1, 1, PencilForm::Sparse).unwrap();
        let spec = pencil_spectrum(&p).unwrap();
        assert_eq!(spec.eigenvalues().len(), 1);
        assert_eq!(spec.infinite_multiplicity(), 1);
        let dense = pencils::pencil_pc_extrapolation(&ssm, 0.1, 1, PencilForm::Dense).unwrap();
        let dense_spec = pencil_spectrum(&dense).unwrap();
        assert!(
            (spec.eigenvalues()[0] - dense_spec.eigenvalues()[0]).norm() <= 1e-10,
            "sparse {} vs dense {}",
            spec.eigenvalues()[0],
            dense_spec.eigenvalues()[0]
        );
    }

    #[test]
    fn z_to_s_examples() {
        assert_relative_eq!(
            map_z_to_s(Complex64::new(1.0, 0.0), 0.3).unwrap().norm(),
            0.0,
            epsilon = 1e-15
        );
        let s = map_z_to_s(Complex64::new((-0.2_f64).exp(), 0.0), 0.1).unwrap();
        assert_relative_eq!(s.re, -2.0, epsilon = 1e-12);
        let s = map_z_to_s(Complex64::new(0.82, 0.0), 0.1).unwrap();
        assert_relative_eq!(s.re, -1.9845, epsilon = 5e-5);
        assert!(map_z_to_s(Complex64::new(0.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn z_to_s_principal_branch_on_negative_axis() {
        let s = map_z_to_s(Complex64::new(-0.5, -0.0), 0.1).unwrap();
        assert!(s.im > 0.0, "negative real z maps to +pi branch, got {s}");
        assert!(is_aliasing_suspect(s, 0.1));
    }

    #[test]
    fn stiffness_published_values() {
        let spec = Spectrum {
            eigenvalues: vec![Complex64::new(-106.01, 0.0), Complex64::new(-0.02, 0.0)],
            infinite_multiplicity: 0,
            domain: Domain::S,
            source: None,
        };
        assert_relative_eq!(stiffness_ratio(&spec).unwrap(), 5300.5, epsilon = 1e-9);

        let single = Spectrum {
            eigenvalues: vec![Complex64::new(-3.0, 1.0)],
            infinite_multiplicity: 0,
            domain: Domain::S,
            source: None,
        };
        assert_relative_eq!(stiffness_ratio(&single).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn stiffness_needs_a_nonzero_mode() {
        let empty = Spectrum::from_values(vec![], Domain::S);
        assert_eq!(stiffness_ratio(&empty).unwrap_err().name(), "EmptySpectrum");
        let zero_only = Spectrum::from_values(vec![Complex64::new(0.0, 0.0)], Domain::S);
        assert_eq!(
            stiffness_ratio(&zero_only).unwrap_err().name(),
            "EmptySpectrum"
        );
        let z_domain = Spectrum::from_values(vec![Complex64::new(0.5, 0.0)], Domain::Z);
        assert_eq!(stiffness_ratio(&z_domain).unwrap_err().name(), "WrongDomain");
    }

    #[test]
    fn damping_published_modes() {
        let m1 = damping_frequency(Complex64::new(-0.3212, 4.0435)).unwrap();
        assert!((m1.damping_ratio * 100.0 - 7.92).abs() < 0.01);
        assert!((m1.natural_frequency_hz - 0.6456).abs() < 1e-3);
        let m2 = damping_frequency(Complex64::new(-1.4318, 8.7610)).unwrap();
        assert!((m2.damping_ratio * 100.0 - 16.13).abs() < 0.01);
        assert!((m2.natural_frequency_hz - 1.4129).abs() < 1e-3);
        let real = damping_frequency(Complex64::new(-5.0, 0.0)).unwrap();
        assert_relative_eq!(real.damping_ratio, 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            real.natural_frequency_hz,
            5.0 / (2.0 * std::f64::consts::PI),
            epsilon = 1e-15
        );
        assert!(damping_frequency(Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn delay_roots_scalar_fixture() {
        let ssm = fixtures::scalar_dae_ssm(-2.0, 1.0, 1.0, 1.0);
        let dp = pencils::pencil_delay(&ssm, 0.1, PencilForm::Dense).unwrap();
        let result = solve_delay_eigs(&dp, &[Complex64::new(-3.0, 0.0)], 1e-12, 100).unwrap();
        assert!(result.failures.is_empty());
        let root = result.spectrum.eigenvalues()[0];

        // Independent oracle: fixed-point iteration s <- -2 - exp(-0.1 s).
        let mut oracle = Complex64::new(-3.0, 0.0);
        for _ in 0..200 {
            oracle = Complex64::new(-2.0, 0.0) - (-0.1 * oracle).exp();
        }
        assert!(
            (root - oracle).norm() <= 1e-9,
            "root {root} vs oracle {oracle}"
        );
        assert!((root.re + 3.4058).abs() < 5e-5);
    }

    #[test]
    fn delay_roots_no_delay_term() {
        let ssm = crate::model::SmallSignalModel::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -4.0]),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        let dp = pencils::pencil_delay(&ssm, 0.1, PencilForm::Dense).unwrap();
        let guesses: Vec<Complex64> = eig_dense(ssm.fx()).unwrap().eigenvalues().to_vec();
        let result = solve_delay_eigs(&dp, &guesses, 1e-10, 50).unwrap();
        assert!(result.failures.is_empty());
        // A1 = 0 keeps the guesses fixed: the entry residual already
        // vanishes, so the roots are exactly eig(A0).
        assert_eq!(result.spectrum.eigenvalues(), guesses.as_slice());
    }

    #[test]
    fn delay_roots_merge_at_zero_delay() {
        let ssm = fixtures::scalar_dae_ssm(-2.0, 1.0, 1.0, 1.0);
        let dp = pencils::pencil_delay(&ssm, 0.0, PencilForm::Dense).unwrap();
        let result = solve_delay_eigs(&dp, &[Complex64::new(-3.0, 0.0)], 1e-12, 100).unwrap();
        // h = 0 merges the coefficients: root of s + 2 + 1 = 0.
        assert_relative_eq!(result.spectrum.eigenvalues()[0].re, -3.0, epsilon = 1e-10);
    }

    #[test]
    fn spectrum_csv_shapes() {
        let ssm = fixtures::scalar_dae_default_ssm();
        let p = pencils::pencil_dae(&ssm, PencilForm::Sparse).unwrap();
        let spec = pencil_spectrum(&p).unwrap();
        let csv = spec.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "re,im,domain,finite,aliasing_flag");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("inf,0,S,false"));
        let json = spec.to_json();
        assert!(json.contains("\"infinite_multiplicity\": 1"));
    }
}
