use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fail::Failure;

/// Every setting a subcommand can take. The same keys work in a TOML config
/// file and as `--kebab-case` flags; flags win. Keys a subcommand does not use
/// are ignored by it, unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_size: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_domain: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_a: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_b: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda3: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda4: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triptych: Option<bool>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub original: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translated: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fuzz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),* $(,)?) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }

    /// Values set in `flags` replace those in `self`.
    pub fn overlay(self, flags: RunConfig) -> RunConfig {
        overlay!(
            self, flags, out, seed, image_size, per_domain, overlap, records, images, fraction,
            radius_m, domain_a, domain_b, manifest, min_bytes, steps, lambda0, lambda1, lambda2,
            lambda3, lambda4, checkpoint_every, trace_every, resume, checkpoint, input, direction,
            triptych, original, translated, fuzz, gain, format, subject, label,
        )
    }

    /// Records the settings a run used next to its outputs.
    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let text = toml::to_string(self).map_err(|e| Failure::usage(e.to_string()))?;
        fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, Failure> {
    value
        .as_ref()
        .ok_or_else(|| Failure::usage(format!("missing --{flag}")))
}

pub fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::usage(message()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: RunConfig = toml::from_str("seed = 3\nsteps = 50\nfuzz = 0.1\n").unwrap();
        let flags = RunConfig {
            seed: Some(9),
            ..RunConfig::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.steps, Some(50));
        assert_eq!(merged.fuzz, Some(0.1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 3\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig {
            out: Some("runs/a".into()),
            lambda0: Some(50.0),
            triptych: Some(true),
            ..RunConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
