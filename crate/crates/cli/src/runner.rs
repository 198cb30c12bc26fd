//! Executes a [`RunManifest`] and writes its artifacts atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::json;

use penstab::deformation::{self, SweepVariant};
use penstab::pencils::{self, PcScheme, PencilForm};
use penstab::simulator::{self, IntegrationScheme, SimConfig};
use penstab::spectra::{self, Spectrum};
use penstab::{DaeModel, Error as CoreError, SmallSignalModel};

use crate::manifest::{
    CommandKind, FamilyArg, FormatArg, GridSpec, InterfacingArg, RunManifest,
};

/// Validation failures exit with status 2, numerical failures with 3.
#[derive(Debug)]
pub enum RunError {
    Validation(String),
    Numerical(CoreError),
}

impl RunError {
    /// Machine-readable error record for stderr.
    pub fn record(&self) -> String {
        let (kind, error, message) = match self {
            RunError::Validation(msg) => ("validation", "InvalidArgument", msg.clone()),
            RunError::Numerical(e) => ("numerical", e.root_name(), e.to_string()),
        };
        serde_json::to_string(&json!({
            "kind": kind,
            "error": error,
            "message": message,
        }))
        .expect("error record serialization cannot fail")
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        RunError::Numerical(e)
    }
}

/// Files written by a successful run.
#[derive(Debug)]
pub struct RunOutput {
    pub artifacts: Vec<PathBuf>,
}

/// Executes the manifest. Relative model paths resolve against
/// `model_base`; the output path is taken as given.
pub fn run(manifest: &RunManifest, model_base: &Path) -> Result<RunOutput, RunError> {
    let model_path = resolve(model_base, &manifest.model);
    let ssm = SmallSignalModel::from_json_file(&model_path).map_err(|e| match e {
        CoreError::FileFormat(msg) => RunError::Validation(msg),
        CoreError::DimensionMismatch(msg) => RunError::Validation(msg),
        other => RunError::Numerical(other),
    })?;
    let out = PathBuf::from(&manifest.out);
    match manifest.command {
        CommandKind::Eig => run_eig(manifest, &ssm, &out),
        CommandKind::PencilEig => run_pencil_eig(manifest, &ssm, &out),
        CommandKind::Margin => run_margin(manifest, &ssm, &out),
        CommandKind::Maxstep => run_maxstep(manifest, &ssm, &out),
        CommandKind::Sweep => run_sweep(manifest, &ssm, &out),
        CommandKind::Simulate => run_simulate(manifest, &ssm, &out),
    }
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = PathBuf::from(path);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Writes through a temp file in the destination directory followed by an
/// atomic rename; a failing run never leaves partial output behind.
fn write_atomic(path: &Path, contents: &str) -> Result<(), RunError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| RunError::Validation(format!("{}: {e}", dir.display())))?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| RunError::Validation(format!("{}: {e}", path.display())))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| RunError::Validation(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| RunError::Validation(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn format_of(manifest: &RunManifest) -> FormatArg {
    manifest.format.unwrap_or(FormatArg::Csv)
}

fn single_r(manifest: &RunManifest) -> Result<usize, RunError> {
    match manifest.r.as_slice() {
        [r] => Ok(*r),
        [] => Err(RunError::Validation(
            "this command needs exactly one corrector count (--r)".into(),
        )),
        _ => Err(RunError::Validation(
            "this command accepts exactly one corrector count; lists are for sweep".into(),
        )),
    }
}

fn positive(name: &str, value: Option<f64>) -> Result<f64, RunError> {
    match value {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(RunError::Validation(format!(
            "{name} must be positive and finite, got {v}"
        ))),
        None => Err(RunError::Validation(format!("{name} is required"))),
    }
}

fn scheme_from(manifest: &RunManifest, r: usize) -> Result<PcScheme, RunError> {
    let interfacing: penstab::Interfacing = manifest
        .interfacing
        .unwrap_or(InterfacingArg::Ext)
        .into();
    match manifest.family.unwrap_or(FamilyArg::Heun) {
        FamilyArg::Heun => Ok(PcScheme::heun(r, interfacing)),
        FamilyArg::Ab => {
            let k = manifest
                .k
                .ok_or_else(|| RunError::Validation("family ab needs --k".into()))?;
            PcScheme::adams_bashforth(k, r, interfacing).map_err(RunError::Numerical)
        }
        FamilyArg::Delay => Err(RunError::Validation(
            "family delay has no PC scheme; it is only valid for pencil-eig and sweep".into(),
        )),
        FamilyArg::Tm => Err(RunError::Validation(
            "family tm is only valid for simulate".into(),
        )),
    }
}

fn grid_required(manifest: &RunManifest) -> Result<GridSpec, RunError> {
    let grid = manifest
        .grid
        .ok_or_else(|| RunError::Validation("this command needs --grid lo:hi:n(log|lin)".into()))?;
    // Stored manifests bypass the CLI grid parser, so revalidate here.
    if !(grid.lo > 0.0 && grid.hi > grid.lo) {
        return Err(RunError::Validation(format!(
            "grid needs 0 < lo < hi, got {}:{}",
            grid.lo, grid.hi
        )));
    }
    if grid.n < 1 {
        return Err(RunError::Validation("grid needs at least one point".into()));
    }
    Ok(grid)
}

fn reference_spectrum(ssm: &SmallSignalModel) -> Result<Spectrum, RunError> {
    let pencil = match pencils::pencil_dae(ssm, PencilForm::Dense) {
        Err(CoreError::SingularAlgebraicJacobian { .. }) => {
            pencils::pencil_dae(ssm, PencilForm::Sparse)?
        }
        other => other?,
    };
    Ok(spectra::pencil_spectrum(&pencil)?)
}

/// Maps manifest mode ids to reference eigenvalues.
fn target_modes(
    manifest: &RunManifest,
    reference: &Spectrum,
) -> Result<Option<Vec<Complex64>>, RunError> {
    if manifest.modes.is_empty() {
        return Ok(None);
    }
    let eigs = reference.eigenvalues();
    let mut out = Vec::with_capacity(manifest.modes.len());
    for &id in &manifest.modes {
        let value = eigs.get(id).ok_or_else(|| {
            RunError::Validation(format!(
                "mode id {id} out of range; the reference spectrum has {} finite modes",
                eigs.len()
            ))
        })?;
        out.push(*value);
    }
    Ok(Some(out))
}

fn run_eig(manifest: &RunManifest, ssm: &SmallSignalModel, out: &Path) -> Result<RunOutput, RunError> {
    let form: PencilForm = manifest.form.map(Into::into).unwrap_or(PencilForm::Dense);
    let pencil = pencils::pencil_dae(ssm, form)?;
    let spec = spectra::pencil_spectrum(&pencil)?;
    let body = match format_of(manifest) {
        FormatArg::Csv => spec.to_csv(),
        FormatArg::Json => spec.to_json(),
    };
    write_atomic(out, &body)?;
    Ok(RunOutput {
        artifacts: vec![out.to_path_buf()],
    })
}

fn run_pencil_eig(
    manifest: &RunManifest,
    ssm: &SmallSignalModel,
    out: &Path,
) -> Result<RunOutput, RunError> {
    let h = positive("--h", manifest.h)?;
    let spec = match manifest.family.unwrap_or(FamilyArg::Heun) {
        FamilyArg::Delay => {
            let form: PencilForm = manifest.form.map(Into::into).unwrap_or(PencilForm::Dense);
            let pencil = pencils::pencil_delay(ssm, h, form)?;
            let reference = reference_spectrum(ssm)?;
            let guesses = reference.eigenvalues().to_vec();
            if guesses.is_empty() {
                return Err(RunError::Numerical(CoreError::EmptySpectrum));
            }
            let solved = spectra::solve_delay_eigs(&pencil, &guesses, 1e-10, 200)?;
            for failure in &solved.failures {
                eprintln!(
                    "warning: delay root search failed from guess {}: {}",
                    failure.guess, failure.error
                );
            }
            if solved.spectrum.eigenvalues().is_empty() {
                return Err(RunError::Numerical(CoreError::NoRootFound {
                    guess: guesses[0],
                    max_iter: 200,
                }));
            }
            solved.spectrum
        }
        _ => {
            let r = single_r(manifest)?;
            let scheme = scheme_from(manifest, r)?;
            let form: PencilForm = manifest.form.map(Into::into).unwrap_or(PencilForm::Dense);
            let pencil = pencils::zpencil_for_scheme(ssm, &scheme, h, form)?;
            spectra::pencil_spectrum(&pencil)?
        }
    };
    let body = match format_of(manifest) {
        FormatArg::Csv => spec.to_csv_mapped()?,
        FormatArg::Json => spec.to_json(),
    };
    write_atomic(out, &body)?;
    Ok(RunOutput {
        artifacts: vec![out.to_path_buf()],
    })
}

fn run_margin(
    manifest: &RunManifest,
    ssm: &SmallSignalModel,
    out: &Path,
) -> Result<RunOutput, RunError> {
    let r = single_r(manifest)?;
    let scheme = scheme_from(manifest, r)?;
    let grid = grid_required(manifest)?;
    let tol = manifest.tol.unwrap_or(1e-6);
    if tol <= 0.0 {
        return Err(RunError::Validation(format!(
            "--tol must be positive, got {tol}"
        )));
    }
    let result = deformation::stability_margin(ssm, &scheme, grid.lo, grid.hi, tol)?;
    let body = serde_json::to_string_pretty(&json!({
        "command": "margin",
        "scheme": scheme.label(),
        "h_max": result.h_max,
        "at_upper_bound": result.at_upper_bound,
        "bracket_lo": result.bracket.0,
        "bracket_hi": result.bracket.1,
        "radius_at_h_max": result.radius_at_h_max,
        "radius_above": result.radius_above,
        "tol": tol,
        "manifest": manifest,
    }))
    .expect("margin serialization cannot fail");
    write_atomic(out, &body)?;
    Ok(RunOutput {
        artifacts: vec![out.to_path_buf()],
    })
}

fn run_maxstep(
    manifest: &RunManifest,
    ssm: &SmallSignalModel,
    out: &Path,
) -> Result<RunOutput, RunError> {
    let r = single_r(manifest)?;
    let scheme = scheme_from(manifest, r)?;
    let grid = grid_required(manifest)?;
    let criterion = positive("--criterion-pct", manifest.criterion_pct)?;
    let tol = manifest.tol.unwrap_or(1e-6);
    let reference = reference_spectrum(ssm)?;
    let targets = match target_modes(manifest, &reference)? {
        Some(t) => t,
        None => reference.eigenvalues().to_vec(),
    };
    let result = deformation::max_step_for_accuracy(
        ssm, &scheme, &targets, criterion, grid.lo, grid.hi, tol,
    )?;
    let body = serde_json::to_string_pretty(&json!({
        "command": "maxstep",
        "scheme": scheme.label(),
        "criterion_pct": criterion,
        "h_max": result.h_max,
        "binding_mode": result.binding_mode,
        "at_upper_bound": result.at_upper_bound,
        "bracket_lo": result.bracket.0,
        "bracket_hi": result.bracket.1,
        "forward_check_violated": result.forward_check_violated,
        "tol": tol,
        "manifest": manifest,
    }))
    .expect("maxstep serialization cannot fail");
    write_atomic(out, &body)?;
    Ok(RunOutput {
        artifacts: vec![out.to_path_buf()],
    })
}

fn run_sweep(
    manifest: &RunManifest,
    ssm: &SmallSignalModel,
    out: &Path,
) -> Result<RunOutput, RunError> {
    let grid = grid_required(manifest)?;
    let points = grid.points();
    let variants: Vec<SweepVariant> = match manifest.family.unwrap_or(FamilyArg::Heun) {
        FamilyArg::Delay => vec![SweepVariant::Delay],
        _ => {
            if manifest.r.is_empty() {
                return Err(RunError::Validation(
                    "sweep needs at least one corrector count (--r), or family delay".into(),
                ));
            }
            let mut out_variants = Vec::with_capacity(manifest.r.len());
            for &r in &manifest.r {
                out_variants.push(SweepVariant::Scheme(scheme_from(manifest, r)?));
            }
            out_variants
        }
    };
    let reference = reference_spectrum(ssm)?;
    let targets = target_modes(manifest, &reference)?;
    let report = deformation::sweep(ssm, &variants, &points, targets.as_deref())?;
    let body = match format_of(manifest) {
        FormatArg::Csv => report.to_csv(),
        FormatArg::Json => report.to_json(),
    };
    write_atomic(out, &body)?;
    Ok(RunOutput {
        artifacts: vec![out.to_path_buf()],
    })
}

fn run_simulate(
    manifest: &RunManifest,
    ssm: &SmallSignalModel,
    out: &Path,
) -> Result<RunOutput, RunError> {
    let h = positive("--h", manifest.h)?;
    let t_end = positive("--tend", manifest.tend)?;
    let family = manifest.family.unwrap_or(FamilyArg::Heun);
    let scheme = match family {
        FamilyArg::Tm => IntegrationScheme::Tm,
        FamilyArg::Delay => {
            return Err(RunError::Validation(
                "family delay cannot be simulated; use heun, ab or tm".into(),
            ))
        }
        _ => IntegrationScheme::Pc(scheme_from(manifest, single_r(manifest)?)?),
    };
    let cfg = SimConfig::new(h, t_end, scheme.clone())?;
    let model = DaeModel::linear(ssm);

    // Deterministic default excitation: unit deviation on every state with
    // consistent algebraic values.
    let x0 = nalgebra::DVector::from_element(ssm.nu(), 1.0);
    let y0 = if ssm.mu() == 0 {
        nalgebra::DVector::zeros(0)
    } else {
        simulator::solve_algebraic(
            &model,
            &x0,
            &nalgebra::DVector::zeros(ssm.mu()),
            cfg.newton_tol,
            cfg.newton_max_iter,
        )?
    };

    let traj = match &cfg.scheme {
        IntegrationScheme::Tm => simulator::simulate_simultaneous_tm(&model, &x0, &y0, &cfg)?,
        IntegrationScheme::Fem => simulator::simulate_fem(&model, &x0, &y0, &cfg)?,
        IntegrationScheme::Pc(s) if s.k() == 1 => {
            simulator::simulate_psa_hm(&model, &x0, &y0, &cfg)?
        }
        IntegrationScheme::Pc(_) => simulator::simulate_adams_pc(&model, &x0, &y0, &cfg)?,
    };

    let body = match format_of(manifest) {
        FormatArg::Csv => traj.to_csv(),
        FormatArg::Json => trajectory_json(&traj),
    };
    write_atomic(out, &body)?;
    let sidecar = sidecar_path(out);
    write_atomic(&sidecar, &traj.diagnostics_json())?;
    Ok(RunOutput {
        artifacts: vec![out.to_path_buf(), sidecar],
    })
}

/// Diagnostics sidecar lives next to the trajectory artifact.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".diag.json");
    out.with_file_name(name)
}

fn trajectory_json(traj: &penstab::simulator::Trajectory) -> String {
    let states: Vec<Vec<f64>> = traj.states.iter().map(|x| x.iter().cloned().collect()).collect();
    let algebraics: Vec<Vec<f64>> = traj
        .algebraics
        .iter()
        .map(|y| y.iter().cloned().collect())
        .collect();
    serde_json::to_string_pretty(&json!({
        "times": traj.times,
        "states": states,
        "algebraics": algebraics,
        "bootstrap_steps": traj.bootstrap_steps,
    }))
    .expect("trajectory serialization cannot fail")
}
