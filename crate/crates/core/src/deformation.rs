//! Pairing of reference and deformed spectra, deformation metrics,
//! numerical stability margins and accuracy-constrained step bounds.
//!
//! The reference spectrum is that of the DAE pencil itself; "deformed"
//! spectra come from the Z-domain scheme pencils mapped back to the
//! S-plane, or from the delay pencil. Comparing matched modes quantifies
//! how much a scheme/step-size combination distorts each mode.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_g17;
use crate::linalg;
use crate::model::SmallSignalModel;
use crate::pencils::{self, Domain, PcScheme, Pencil, PencilForm};
use crate::spectra::{self, MappedEigenvalue, Spectrum};

/// Distance cap for mode matching: generous for fast modes, absolute floor
/// for the slow ones.
fn match_cap(reference: Complex64) -> f64 {
    0.5 * reference.norm() + 1.0
}

/// How reference and deformed eigenvalues are put in correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStrategy {
    /// Greedy minimum-distance matching under the distance cap.
    Nearest,
    /// Matching seeded at the smallest step of a sweep and propagated
    /// along the grid; for a single pair of spectra this reduces to
    /// nearest matching (the propagation lives in [`sweep`]).
    Continuation,
}

/// One matched (reference, deformed) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModePair {
    pub reference: Complex64,
    pub deformed: Complex64,
    pub distance: f64,
}

/// Partial injection between two spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePairing {
    pub pairs: Vec<ModePair>,
    pub unmatched_reference: Vec<Complex64>,
    pub unmatched_deformed: Vec<Complex64>,
}

/// Pairs the finite eigenvalues of two S-domain spectra.
pub fn match_modes(
    reference: &Spectrum,
    deformed: &Spectrum,
    _strategy: MatchStrategy,
) -> Result<ModePairing> {
    if reference.domain() != Domain::S || deformed.domain() != Domain::S {
        return Err(Error::WrongDomain { expected: "S" });
    }
    let refs = reference.eigenvalues();
    let defs = deformed.eigenvalues();
    let matched = linalg::greedy_pairs(refs, defs, match_cap);
    let mut used_ref = vec![false; refs.len()];
    let mut used_def = vec![false; defs.len()];
    let mut pairs = Vec::with_capacity(matched.len());
    for (i, j, distance) in matched {
        used_ref[i] = true;
        used_def[j] = true;
        pairs.push(ModePair {
            reference: refs[i],
            deformed: defs[j],
            distance,
        });
    }
    Ok(ModePairing {
        pairs,
        unmatched_reference: refs
            .iter()
            .zip(&used_ref)
            .filter(|(_, used)| !**used)
            .map(|(v, _)| *v)
            .collect(),
        unmatched_deformed: defs
            .iter()
            .zip(&used_def)
            .filter(|(_, used)| !**used)
            .map(|(v, _)| *v)
            .collect(),
    })
}

/// Relative displacement 100 |s_hat - s| / |s| in percent.
pub fn relative_error(s: Complex64, s_hat: Complex64) -> Result<f64> {
    if s.norm() == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(100.0 * (s_hat - s).norm() / s.norm())
}

/// Signed damping-ratio change 100 (zeta_hat - zeta) in percentage points.
pub fn damping_deformation(s: Complex64, s_hat: Complex64) -> Result<f64> {
    let zeta = spectra::damping_frequency(s)?.damping_ratio;
    let zeta_hat = spectra::damping_frequency(s_hat)?.damping_ratio;
    Ok(100.0 * (zeta_hat - zeta))
}

/// Builds the Z-domain pencil for a scheme, preferring the dense reduction
/// and falling back to the sparse assembly when g_y blocks it.
fn zpencil(ssm: &SmallSignalModel, scheme: &PcScheme, h: f64) -> Result<Pencil> {
    match pencils::zpencil_for_scheme(ssm, scheme, h, PencilForm::Dense) {
        Err(Error::SingularAlgebraicJacobian { .. }) => {
            pencils::zpencil_for_scheme(ssm, scheme, h, PencilForm::Sparse)
        }
        other => other,
    }
}

fn reference_spectrum(ssm: &SmallSignalModel) -> Result<Spectrum> {
    let pencil = match pencils::pencil_dae(ssm, PencilForm::Dense) {
        Err(Error::SingularAlgebraicJacobian { .. }) => {
            pencils::pencil_dae(ssm, PencilForm::Sparse)?
        }
        other => other?,
    };
    spectra::pencil_spectrum(&pencil)
}

fn scheme_radius(ssm: &SmallSignalModel, scheme: &PcScheme, h: f64) -> Result<f64> {
    let pencil = zpencil(ssm, scheme, h)?;
    Ok(spectra::pencil_spectrum(&pencil)?.spectral_radius())
}

/// Outcome of a stability-margin bisection.
#[derive(Debug, Clone, Copy)]
pub struct MarginResult {
    /// Largest verified-stable step size.
    pub h_max: f64,
    /// Set when the whole bracket is stable and h_max equals h_hi.
    pub at_upper_bound: bool,
    /// Final bisection bracket (stable end, unstable end).
    pub bracket: (f64, f64),
    /// Spectral radius at the stable end of the bracket.
    pub radius_at_h_max: f64,
    /// Spectral radius at the other end of the bracket; below 1 only when
    /// the search ran into `at_upper_bound`.
    pub radius_above: f64,
}

/// Largest h keeping every finite Z-pencil eigenvalue strictly inside the
/// unit circle, located by bisection over [h_lo, h_hi] to within `tol`.
pub fn stability_margin(
    ssm: &SmallSignalModel,
    scheme: &PcScheme,
    h_lo: f64,
    h_hi: f64,
    tol: f64,
) -> Result<MarginResult> {
    if !(h_lo > 0.0 && h_hi > h_lo && tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < h_lo < h_hi and tol > 0, got h_lo = {h_lo}, h_hi = {h_hi}, tol = {tol}"
        )));
    }
    let radius_lo = scheme_radius(ssm, scheme, h_lo)?;
    if radius_lo >= 1.0 {
        return Err(Error::UnstableAtLowerBound {
            h_lo,
            radius: radius_lo,
        });
    }
    let radius_hi = scheme_radius(ssm, scheme, h_hi)?;
    if radius_hi < 1.0 {
        return Ok(MarginResult {
            h_max: h_hi,
            at_upper_bound: true,
            bracket: (h_lo, h_hi),
            radius_at_h_max: radius_hi,
            radius_above: radius_hi,
        });
    }
    let mut lo = h_lo;
    let mut hi = h_hi;
    let mut radius_at_lo = radius_lo;
    let mut radius_at_hi = radius_hi;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let radius = scheme_radius(ssm, scheme, mid)?;
        if radius < 1.0 {
            lo = mid;
            radius_at_lo = radius;
        } else {
            hi = mid;
            radius_at_hi = radius;
        }
    }
    Ok(MarginResult {
        h_max: lo,
        at_upper_bound: false,
        bracket: (lo, hi),
        radius_at_h_max: radius_at_lo,
        radius_above: radius_at_hi,
    })
}

/// Outcome of an accuracy-constrained step search.
#[derive(Debug, Clone, Copy)]
pub struct MaxStepResult {
    pub h_max: f64,
    /// Reference-spectrum index of the mode that binds the criterion;
    /// absent when the search ran into the upper bound.
    pub binding_mode: Option<usize>,
    pub at_upper_bound: bool,
    pub bracket: (f64, f64),
    /// Result of the post-hoc probe at h_max + tol: true when the
    /// criterion is indeed violated there. A false value flags locally
    /// non-monotone error behavior.
    pub forward_check_violated: bool,
}

/// Number of coarse scan points used to bracket the first violation.
const MAXSTEP_SCAN_POINTS: usize = 24;

/// Largest h for which every target mode keeps its relative error within
/// `criterion_pct`.
///
/// Error growth along h is not guaranteed monotone, so the search scans a
/// coarse geometric grid from h_lo upward, brackets the FIRST violation
/// and refines it by bisection; the returned bound is the conservative
/// one. Aliasing-suspect eigenvalues never satisfy a criterion: a target
/// mode that only matches an aliased eigenvalue counts as lost.
pub fn max_step_for_accuracy(
    ssm: &SmallSignalModel,
    scheme: &PcScheme,
    target_modes: &[Complex64],
    criterion_pct: f64,
    h_lo: f64,
    h_hi: f64,
    tol: f64,
) -> Result<MaxStepResult> {
    if !(h_lo > 0.0 && h_hi > h_lo && tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < h_lo < h_hi and tol > 0, got h_lo = {h_lo}, h_hi = {h_hi}, tol = {tol}"
        )));
    }
    if criterion_pct.is_nan() || criterion_pct <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "criterion must be positive, got {criterion_pct}"
        )));
    }
    if target_modes.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one target mode".into(),
        ));
    }
    let reference = reference_spectrum(ssm)?;
    let targets = resolve_targets(&reference, target_modes)?;

    // Worst offender among the targets at one probe step size.
    let evaluate = |h: f64| -> Result<Option<(usize, f64)>> {
        let pencil = zpencil(ssm, scheme, h)?;
        let spec = spectra::pencil_spectrum(&pencil)?;
        let pool: Vec<MappedEigenvalue> = spec
            .mapped_to_s()?
            .into_iter()
            .filter(|m| m.s.is_some() && !m.aliasing)
            .collect();
        let pool_s: Vec<Complex64> = pool.iter().map(|m| m.s.expect("filtered")).collect();
        let ref_vals: Vec<Complex64> = targets.iter().map(|t| t.value).collect();
        let matched = linalg::greedy_pairs(&ref_vals, &pool_s, match_cap);
        if matched.len() < targets.len() {
            let missing = (0..targets.len())
                .find(|i| !matched.iter().any(|(ri, _, _)| ri == i))
                .expect("some target is unmatched");
            return Err(Error::ModeLost {
                mode: targets[missing].id,
                h,
            });
        }
        let mut worst: Option<(usize, f64)> = None;
        for (ri, pi, _) in matched {
            let err = relative_error(ref_vals[ri], pool_s[pi])?;
            if err > criterion_pct && worst.is_none_or(|(_, w)| err > w) {
                worst = Some((targets[ri].id, err));
            }
        }
        Ok(worst)
    };

    if evaluate(h_lo)?.is_some() {
        return Err(Error::CriterionUnmetAtLowerBound { h_lo });
    }

    // Coarse geometric scan for the first violation bracket.
    let grid = geom_grid(h_lo, h_hi, MAXSTEP_SCAN_POINTS);
    let mut bracket: Option<(f64, f64, (usize, f64))> = None;
    for window in grid.windows(2) {
        if let Some(v) = evaluate(window[1])? {
            bracket = Some((window[0], window[1], v));
            break;
        }
    }
    let (mut lo, mut hi, mut binding) = match bracket {
        None => {
            return Ok(MaxStepResult {
                h_max: h_hi,
                binding_mode: None,
                at_upper_bound: true,
                bracket: (h_lo, h_hi),
                forward_check_violated: false,
            })
        }
        Some(b) => b,
    };

    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match evaluate(mid)? {
            Some(v) => {
                hi = mid;
                binding = v;
            }
            None => lo = mid,
        }
    }
    let forward_check_violated = matches!(evaluate(lo + tol), Ok(Some(_)) | Err(_));
    Ok(MaxStepResult {
        h_max: lo,
        binding_mode: Some(binding.0),
        at_upper_bound: false,
        bracket: (lo, hi),
        forward_check_violated,
    })
}

struct Target {
    /// Index within the canonical reference spectrum.
    id: usize,
    value: Complex64,
}

fn resolve_targets(reference: &Spectrum, requested: &[Complex64]) -> Result<Vec<Target>> {
    let refs = reference.eigenvalues();
    let mut out = Vec::with_capacity(requested.len());
    for &want in requested {
        let (id, value, dist) = refs
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, v, (v - want).norm()))
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .ok_or(Error::EmptySpectrum)?;
        if dist > 1e-6 * (1.0 + want.norm()) {
            return Err(Error::InvalidArgument(format!(
                "target mode {want} is not in the reference spectrum (closest is {value})"
            )));
        }
        if out.iter().any(|t: &Target| t.id == id) {
            return Err(Error::InvalidArgument(format!(
                "target mode {want} resolves to an already-claimed reference mode"
            )));
        }
        out.push(Target { id, value });
    }
    Ok(out)
}

fn geom_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo * (ratio * i as f64).exp()
            }
        })
        .collect()
}

/// One variant of a deformation sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepVariant {
    Scheme(PcScheme),
    /// One-step-lag delay pencil; ignores corrector count and interfacing.
    Delay,
}

impl SweepVariant {
    fn label(&self) -> String {
        match self {
            SweepVariant::Scheme(s) => s.label(),
            SweepVariant::Delay => "delay".to_string(),
        }
    }
}

/// One metric row of a deformation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: String,
    pub h: f64,
    pub mode_id: usize,
    pub reference: Complex64,
    pub deformed: Complex64,
    pub rel_err_pct: f64,
    pub damp_def_pts: f64,
    pub aliasing: bool,
}

/// A sweep cell that failed without aborting the run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub variant: String,
    pub h: f64,
    /// The lost mode, when the failure is a tracking loss.
    pub mode_id: Option<usize>,
    pub error: String,
}

/// Deformation metrics across an h-grid for several scheme variants.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationReport {
    pub rows: Vec<ReportRow>,
    pub failures: Vec<CellFailure>,
    pub variants: Vec<String>,
    pub h_grid: Vec<f64>,
}

impl DeformationReport {
    /// CSV with the fixed column set
    /// `variant,h,mode_id,ref_re,ref_im,def_re,def_im,rel_err_pct,damp_def_pts,aliasing`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variant,h,mode_id,ref_re,ref_im,def_re,def_im,rel_err_pct,damp_def_pts,aliasing\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.variant,
                fmt_g17(row.h),
                row.mode_id,
                fmt_g17(row.reference.re),
                fmt_g17(row.reference.im),
                fmt_g17(row.deformed.re),
                fmt_g17(row.deformed.im),
                fmt_g17(row.rel_err_pct),
                fmt_g17(row.damp_def_pts),
                row.aliasing
            ));
        }
        out
    }

    /// JSON mirror of the report.
    pub fn to_json(&self) -> String {
        use serde_json::json;
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "variant": r.variant,
                    "h": r.h,
                    "mode_id": r.mode_id,
                    "ref_re": r.reference.re,
                    "ref_im": r.reference.im,
                    "def_re": r.deformed.re,
                    "def_im": r.deformed.im,
                    "rel_err_pct": r.rel_err_pct,
                    "damp_def_pts": r.damp_def_pts,
                    "aliasing": r.aliasing,
                })
            })
            .collect();
        let failures: Vec<serde_json::Value> = self
            .failures
            .iter()
            .map(|f| {
                json!({
                    "variant": f.variant,
                    "h": f.h,
                    "mode_id": f.mode_id,
                    "error": f.error,
                })
            })
            .collect();
        serde_json::to_string_pretty(&json!({
            "variants": self.variants,
            "h_grid": self.h_grid,
            "rows": rows,
            "failures": failures,
        }))
        .expect("report serialization cannot fail")
    }
}

/// Runs every variant across the step grid, tracking modes by continuation
/// from the smallest step upward, and collects the metric rows.
///
/// Per-cell solver failures are recorded in the report instead of aborting
/// the sweep. Variants run in parallel; rows come out in deterministic
/// (variant, mode, h) order regardless of scheduling.
pub fn sweep(
    ssm: &SmallSignalModel,
    variants: &[SweepVariant],
    h_grid: &[f64],
    target_modes: Option<&[Complex64]>,
) -> Result<DeformationReport> {
    if h_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "h grid must be strictly increasing".into(),
        ));
    }
    if h_grid.iter().any(|h| *h <= 0.0) {
        return Err(Error::InvalidArgument("h grid must be positive".into()));
    }
    let labels: Vec<String> = variants.iter().map(|v| v.label()).collect();
    if h_grid.is_empty() || variants.is_empty() {
        return Ok(DeformationReport {
            rows: Vec::new(),
            failures: Vec::new(),
            variants: labels,
            h_grid: h_grid.to_vec(),
        });
    }

    let reference = reference_spectrum(ssm)?;
    let tracked: Vec<Target> = match target_modes {
        Some(wanted) => resolve_targets(&reference, wanted)?,
        None => reference
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(id, &value)| Target { id, value })
            .collect(),
    };

    let per_variant: Vec<(Vec<ReportRow>, Vec<CellFailure>)> = variants
        .par_iter()
        .map(|variant| sweep_one_variant(ssm, variant, h_grid, &tracked))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (mut r, mut f) in per_variant {
        rows.append(&mut r);
        failures.append(&mut f);
    }
    let variant_rank = |label: &str| -> usize {
        labels.iter().position(|l| l == label).unwrap_or(usize::MAX)
    };
    rows.sort_by(|a, b| {
        variant_rank(&a.variant)
            .cmp(&variant_rank(&b.variant))
            .then(a.mode_id.cmp(&b.mode_id))
            .then(a.h.total_cmp(&b.h))
    });
    Ok(DeformationReport {
        rows,
        failures,
        variants: labels,
        h_grid: h_grid.to_vec(),
    })
}

fn sweep_one_variant(
    ssm: &SmallSignalModel,
    variant: &SweepVariant,
    h_grid: &[f64],
    tracked: &[Target],
) -> (Vec<ReportRow>, Vec<CellFailure>) {
    let label = variant.label();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    // Continuation state: last matched position per tracked mode, seeded
    // with the reference values at the smallest step.
    let mut positions: Vec<Complex64> = tracked.iter().map(|t| t.value).collect();

    for &h in h_grid {
        let deformed = match deformed_pool(ssm, variant, h, &positions) {
            Ok(pool) => pool,
            Err(e) => {
                failures.push(CellFailure {
                    variant: label.clone(),
                    h,
                    mode_id: None,
                    error: e.name().to_string(),
                });
                continue;
            }
        };
        let pool_s: Vec<Complex64> = deformed.iter().map(|m| m.0).collect();
        let matched = linalg::greedy_pairs(&positions, &pool_s, match_cap);
        let mut claimed = vec![false; tracked.len()];
        for (ti, pi, _) in matched {
            claimed[ti] = true;
            let s_hat = pool_s[pi];
            let reference = tracked[ti].value;
            let rel = relative_error(reference, s_hat).unwrap_or(f64::NAN);
            let damp = damping_deformation(reference, s_hat).unwrap_or(f64::NAN);
            rows.push(ReportRow {
                variant: label.clone(),
                h,
                mode_id: tracked[ti].id,
                reference,
                deformed: s_hat,
                rel_err_pct: rel,
                damp_def_pts: damp,
                aliasing: deformed[pi].1,
            });
            positions[ti] = s_hat;
        }
        for (ti, was_claimed) in claimed.iter().enumerate() {
            if !was_claimed {
                failures.push(CellFailure {
                    variant: label.clone(),
                    h,
                    mode_id: Some(tracked[ti].id),
                    error: "ModeLost".to_string(),
                });
            }
        }
    }
    (rows, failures)
}

/// Finite S-plane eigenvalues (with aliasing flags) of one sweep cell.
fn deformed_pool(
    ssm: &SmallSignalModel,
    variant: &SweepVariant,
    h: f64,
    guesses: &[Complex64],
) -> Result<Vec<(Complex64, bool)>> {
    match variant {
        SweepVariant::Scheme(scheme) => {
            let pencil = zpencil(ssm, scheme, h)?;
            let spec = spectra::pencil_spectrum(&pencil)?;
            Ok(spec
                .mapped_to_s()?
                .into_iter()
                .filter_map(|m| m.s.map(|s| (s, m.aliasing)))
                .collect())
        }
        SweepVariant::Delay => {
            let pencil = match pencils::pencil_delay(ssm, h, PencilForm::Dense) {
                Err(Error::SingularAlgebraicJacobian { .. }) => {
                    pencils::pencil_delay(ssm, h, PencilForm::Sparse)?
                }
                other => other?,
            };
            let result = spectra::solve_delay_eigs(&pencil, guesses, 1e-10, 100)?;
            Ok(result
                .spectrum
                .eigenvalues()
                .iter()
                .map(|&s| (s, false))
                .collect())
        }
    }
}
