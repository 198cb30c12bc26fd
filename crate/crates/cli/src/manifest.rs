//! Run manifests: the JSON description of one CLI invocation.
//!
//! Every subcommand invocation is normalized into a [`RunManifest`] before
//! execution, and stored manifests can be replayed with `penstab run`.
//! Identical manifests produce byte-identical artifacts.

use serde::{Deserialize, Serialize};

/// Which artifact a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    /// Spectrum of the reference DAE pencil.
    Eig,
    /// Spectrum of a scheme/delay pencil with S-mapped columns.
    PencilEig,
    /// Numerical stability margin by bisection.
    Margin,
    /// Accuracy-constrained maximum step size.
    Maxstep,
    /// Deformation metrics across a step grid.
    Sweep,
    /// Time-domain trajectory.
    Simulate,
}

impl std::fmt::Display for CommandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CommandKind::Eig => "eig",
            CommandKind::PencilEig => "pencil-eig",
            CommandKind::Margin => "margin",
            CommandKind::Maxstep => "maxstep",
            CommandKind::Sweep => "sweep",
            CommandKind::Simulate => "simulate",
        };
        write!(f, "{name}")
    }
}

/// Scheme family selector. `Delay` is accepted by `pencil-eig` and
/// `sweep`; `Tm` by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Heun,
    Ab,
    Delay,
    Tm,
}

/// Interfacing selector matching the CLI spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterfacingArg {
    Ext,
    Perfect,
}

impl From<InterfacingArg> for penstab::Interfacing {
    fn from(v: InterfacingArg) -> Self {
        match v {
            InterfacingArg::Ext => penstab::Interfacing::Extrapolation,
            InterfacingArg::Perfect => penstab::Interfacing::Perfect,
        }
    }
}

/// Pencil assembly selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormArg {
    Sparse,
    Dense,
}

impl From<FormArg> for penstab::PencilForm {
    fn from(v: FormArg) -> Self {
        match v {
            FormArg::Sparse => penstab::PencilForm::Sparse,
            FormArg::Dense => penstab::PencilForm::Dense,
        }
    }
}

/// Output format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Json,
}

/// Grid spacing selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Lin,
}

/// A step-size grid `lo:hi:n(log|lin)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    /// Parses the CLI spelling, e.g. `1e-4:1e-2:20log`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid must be lo:hi:n(log|lin), got '{text}'"));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| format!("bad grid lower bound '{}'", parts[0]))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| format!("bad grid upper bound '{}'", parts[1]))?;
        let tail = parts[2];
        let (n_str, spacing) = if let Some(stripped) = tail.strip_suffix("log") {
            (stripped, Spacing::Log)
        } else if let Some(stripped) = tail.strip_suffix("lin") {
            (stripped, Spacing::Lin)
        } else {
            return Err(format!("grid spacing must end in 'log' or 'lin', got '{tail}'"));
        };
        let n: usize = n_str
            .parse()
            .map_err(|_| format!("bad grid point count '{n_str}'"))?;
        if !(lo > 0.0 && hi > lo) {
            return Err(format!("grid needs 0 < lo < hi, got {lo}:{hi}"));
        }
        if n < 1 || (n == 1 && spacing == Spacing::Log) {
            return Err(format!("grid needs at least one point, got {n}"));
        }
        Ok(Self { lo, hi, n, spacing })
    }

    /// Materializes the grid points, endpoints inclusive.
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let n = self.n;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    return self.hi;
                }
                let t = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Lin => self.lo + t * (self.hi - self.lo),
                    Spacing::Log => self.lo * (self.hi / self.lo).powf(t),
                }
            })
            .collect()
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let spacing = match self.spacing {
            Spacing::Log => "log",
            Spacing::Lin => "lin",
        };
        write!(f, "{}:{}:{}{}", self.lo, self.hi, self.n, spacing)
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: CommandKind,
    /// Model file path, resolved relative to the manifest's directory.
    pub model: String,
    /// Output artifact path.
    pub out: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Corrector counts; sweep accepts several, everything else exactly one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interfacing: Option<InterfacingArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<FormArg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion_pct: Option<f64>,
    /// Mode ids (indices into the canonically ordered reference spectrum).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tend: Option<f64>,
    /// Search tolerance in seconds for margin/maxstep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<FormatArg>,
    /// Echoed into JSON outputs; reserved for randomized workflows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(command: CommandKind, model: impl Into<String>, out: impl Into<String>) -> Self {
        Self {
            command,
            model: model.into(),
            out: out.into(),
            h: None,
            r: Vec::new(),
            interfacing: None,
            family: None,
            k: None,
            form: None,
            grid: None,
            criterion_pct: None,
            modes: Vec::new(),
            tend: None,
            tol: None,
            format: None,
            seed: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = GridSpec::parse("1e-4:1e-2:20log").unwrap();
        assert_eq!(g.n, 20);
        assert_eq!(g.spacing, Spacing::Log);
        let pts = g.points();
        assert_eq!(pts.len(), 20);
        assert_eq!(pts[0], 1e-4);
        assert_eq!(pts[19], 1e-2);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));

        let lin = GridSpec::parse("0.1:0.5:5lin").unwrap().points();
        assert_eq!(lin, vec![0.1, 0.2, 0.30000000000000004, 0.4, 0.5]);

        assert!(GridSpec::parse("1:0.5:5log").is_err());
        assert!(GridSpec::parse("1e-4:1e-2:xlog").is_err());
        assert!(GridSpec::parse("1e-4:1e-2:5").is_err());
    }

    #[test]
    fn manifest_round_trip_is_lossless() {
        let mut m = RunManifest::new(CommandKind::Sweep, "models/x.json", "out/x.csv");
        m.r = vec![0, 1, 2];
        m.interfacing = Some(InterfacingArg::Ext);
        m.family = Some(FamilyArg::Heun);
        m.grid = Some(GridSpec::parse("1e-4:1e-2:8log").unwrap());
        m.modes = vec![0, 1];
        m.format = Some(FormatArg::Csv);
        m.seed = Some(7);
        let text = m.to_json();
        let parsed = RunManifest::from_json(&text).unwrap();
        assert_eq!(parsed, m);
        assert_eq!(parsed.to_json(), text);
    }

    #[test]
    fn manifest_rejects_unknown_fields() {
        let text = r#"{"command":"eig","model":"m.json","out":"o.csv","bogus":1}"#;
        assert!(RunManifest::from_json(text).is_err());
    }
}
