use std::fs;
use std::path::{Path, PathBuf};

use dpcda::accountant::{compose_and_convert, PrivacyReport};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Relative slack allowed when recomputing a stored epsilon.
const REVALIDATION_TOLERANCE: f64 = 1e-12;

/// Record of one invocation, written as JSON beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Every parameter after defaults and calibration were applied.
    pub parameters: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
    /// Absent for commands that do not account, null for non-private runs.
    pub privacy_report: Option<PrivacyReport>,
}

/// `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            duration_seconds: 0.0,
            privacy_report: None,
        }
    }

    /// Recomputes the embedded report from its own parameters and checks
    /// that epsilon and the optimal order agree.
    pub fn revalidate(&self) -> Result<(), CliError> {
        let Some(report) = &self.privacy_report else {
            return Ok(());
        };
        let again = compose_and_convert(&report.params)
            .map_err(|e| CliError::Validation(format!("manifest report no longer accounts: {e}")))?;
        let rel = (again.epsilon - report.epsilon).abs() / report.epsilon.abs().max(f64::MIN_POSITIVE);
        if rel > REVALIDATION_TOLERANCE || again.alpha_star != report.alpha_star {
            return Err(CliError::Validation(format!(
                "manifest epsilon {} at alpha {} recomputes to {} at alpha {}",
                report.epsilon, report.alpha_star, again.epsilon, again.alpha_star
            )));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Validation(format!("manifest encoding: {e}")))?;
        fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
    }
}

/// Reads a manifest and revalidates its report.
pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    manifest.revalidate()?;
    Ok(manifest)
}
