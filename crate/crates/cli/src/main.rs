//! penstab: pencil-based stability and accuracy analysis of partitioned
//! predictor-corrector integration for DAE models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use penstab_cli::manifest::{
    CommandKind, FamilyArg, FormArg, FormatArg, GridSpec, InterfacingArg, RunManifest,
};
use penstab_cli::runner;

#[derive(Parser)]
#[command(
    name = "penstab",
    about = "Matrix-pencil stability and accuracy analysis of partitioned predictor-corrector DAE integration",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterfacingOpt {
    Ext,
    Perfect,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyOpt {
    Heun,
    Ab,
    Delay,
    Tm,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormOpt {
    Sparse,
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatOpt {
    Csv,
    Json,
}

/// Flags shared by every analysis subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Model file (JSON blocks or Matrix Market paths)
    #[arg(long)]
    model: PathBuf,
    /// Output artifact path
    #[arg(long)]
    out: PathBuf,
    /// Output format
    #[arg(long, value_enum)]
    format: Option<FormatOpt>,
    /// Seed echoed into JSON outputs
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SchemeArgs {
    /// Corrector count(s); comma-separated list is accepted by sweep only
    #[arg(long, value_delimiter = ',')]
    r: Vec<usize>,
    /// Interfacing strategy for the algebraic variables
    #[arg(long, value_enum)]
    interfacing: Option<InterfacingOpt>,
    /// Scheme family
    #[arg(long, value_enum)]
    family: Option<FamilyOpt>,
    /// History depth for the Adams-Bashforth family
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum of the reference DAE pencil
    Eig {
        #[command(flatten)]
        common: CommonArgs,
        /// Pencil assembly
        #[arg(long, value_enum)]
        form: Option<FormOpt>,
    },
    /// Spectrum of a scheme or delay pencil, mapped to the S-plane
    PencilEig {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Step size in seconds
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_enum)]
        form: Option<FormOpt>,
    },
    /// Numerical stability margin by bisection over a step bracket
    Margin {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Search bracket lo:hi:n(log|lin); only lo and hi matter here
        #[arg(long)]
        grid: Option<String>,
        /// Bisection tolerance in seconds
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Largest step satisfying a relative-error criterion
    Maxstep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        grid: Option<String>,
        /// Relative-error criterion in percent
        #[arg(long)]
        criterion_pct: Option<f64>,
        /// Mode ids to track (indices into the reference spectrum)
        #[arg(long, value_delimiter = ',')]
        modes: Vec<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Deformation metrics across a step grid
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_delimiter = ',')]
        modes: Vec<usize>,
    },
    /// Time-domain trajectory of the model under a scheme
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        h: Option<f64>,
        /// End time in seconds
        #[arg(long)]
        tend: Option<f64>,
    },
    /// Replay a stored manifest file
    Run {
        /// Manifest JSON file
        manifest: PathBuf,
        /// Override the manifest's output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let (manifest, base_dir) = match build_manifest(cli.command) {
        Ok(pair) => pair,
        Err(msg) => {
            eprintln!(
                "{}",
                serde_json::json!({"kind": "validation", "error": "InvalidArgument", "message": msg})
            );
            return ExitCode::from(2);
        }
    };
    match runner::run(&manifest, &base_dir) {
        Ok(output) => {
            for artifact in output.artifacts {
                println!("wrote {}", artifact.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// PENSTAB_PSA_THREADS-style worker cap; sweep cells run on this pool.
fn configure_threads() {
    if let Ok(value) = std::env::var("PENCIL_PSA_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn build_manifest(command: Command) -> Result<(RunManifest, PathBuf), String> {
    let cwd = PathBuf::from(".");
    let manifest = match command {
        Command::Eig { common, form } => {
            let mut m = base_manifest(CommandKind::Eig, &common)?;
            m.form = form.map(convert_form);
            m
        }
        Command::PencilEig {
            common,
            scheme,
            h,
            form,
        } => {
            let mut m = base_manifest(CommandKind::PencilEig, &common)?;
            apply_scheme(&mut m, &scheme);
            m.h = h;
            m.form = form.map(convert_form);
            m
        }
        Command::Margin {
            common,
            scheme,
            grid,
            tol,
        } => {
            let mut m = base_manifest(CommandKind::Margin, &common)?;
            apply_scheme(&mut m, &scheme);
            m.grid = parse_grid(grid)?;
            m.tol = tol;
            m
        }
        Command::Maxstep {
            common,
            scheme,
            grid,
            criterion_pct,
            modes,
            tol,
        } => {
            let mut m = base_manifest(CommandKind::Maxstep, &common)?;
            apply_scheme(&mut m, &scheme);
            m.grid = parse_grid(grid)?;
            m.criterion_pct = criterion_pct;
            m.modes = modes;
            m.tol = tol;
            m
        }
        Command::Sweep {
            common,
            scheme,
            grid,
            modes,
        } => {
            let mut m = base_manifest(CommandKind::Sweep, &common)?;
            apply_scheme(&mut m, &scheme);
            m.grid = parse_grid(grid)?;
            m.modes = modes;
            m
        }
        Command::Simulate {
            common,
            scheme,
            h,
            tend,
        } => {
            let mut m = base_manifest(CommandKind::Simulate, &common)?;
            apply_scheme(&mut m, &scheme);
            m.h = h;
            m.tend = tend;
            m
        }
        Command::Run { manifest, out } => {
            let text = std::fs::read_to_string(&manifest)
                .map_err(|e| format!("{}: {e}", manifest.display()))?;
            let mut parsed = RunManifest::from_json(&text)
                .map_err(|e| format!("{}: {e}", manifest.display()))?;
            if let Some(out) = out {
                parsed.out = out.display().to_string();
            }
            let base = manifest
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            return Ok((parsed, base));
        }
    };
    Ok((manifest, cwd))
}

fn base_manifest(kind: CommandKind, common: &CommonArgs) -> Result<RunManifest, String> {
    let mut m = RunManifest::new(
        kind,
        common.model.display().to_string(),
        common.out.display().to_string(),
    );
    m.format = common.format.map(|f| match f {
        FormatOpt::Csv => FormatArg::Csv,
        FormatOpt::Json => FormatArg::Json,
    });
    m.seed = common.seed;
    Ok(m)
}

fn apply_scheme(m: &mut RunManifest, scheme: &SchemeArgs) {
    m.r = scheme.r.clone();
    m.interfacing = scheme.interfacing.map(|i| match i {
        InterfacingOpt::Ext => InterfacingArg::Ext,
        InterfacingOpt::Perfect => InterfacingArg::Perfect,
    });
    m.family = scheme.family.map(|f| match f {
        FamilyOpt::Heun => FamilyArg::Heun,
        FamilyOpt::Ab => FamilyArg::Ab,
        FamilyOpt::Delay => FamilyArg::Delay,
        FamilyOpt::Tm => FamilyArg::Tm,
    });
    m.k = scheme.k;
}

fn convert_form(f: FormOpt) -> FormArg {
    match f {
        FormOpt::Sparse => FormArg::Sparse,
        FormOpt::Dense => FormArg::Dense,
    }
}

fn parse_grid(grid: Option<String>) -> Result<Option<GridSpec>, String> {
    grid.map(|g| GridSpec::parse(&g)).transpose()
}
