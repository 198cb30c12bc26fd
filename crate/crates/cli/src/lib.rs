//! Library half of the penstab command-line front end: manifest schema and
//! the runner that turns a manifest into artifact files.

pub mod manifest;
pub mod runner;

pub use manifest::{
    CommandKind, FamilyArg, FormArg, FormatArg, GridSpec, InterfacingArg, RunManifest, Spacing,
};
pub use runner::{run, RunError, RunOutput};
