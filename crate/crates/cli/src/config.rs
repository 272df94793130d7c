//! Run configuration: built-in defaults, then an optional JSON file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{Failure, Format};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    pub protocol: Option<String>,
    pub n: Option<usize>,
    pub stages: Option<usize>,
    pub q: Option<u64>,
    pub rate_bps: Option<f64>,
    pub minutes_per_round: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub protocol: Option<String>,
    pub n: Option<usize>,
    pub stages: Option<usize>,
    pub q: u64,
    pub rate_bps: f64,
    pub minutes_per_round: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
}

pub const DEFAULT_Q: u64 = 10_000;
pub const DEFAULT_RATE_BPS: f64 = 238.0;
pub const DEFAULT_MINUTES_PER_ROUND: f64 = 60.0;

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub protocol: Option<String>,
    pub n: Option<usize>,
    pub stages: Option<usize>,
    pub q: Option<u64>,
    pub rate_bps: Option<f64>,
    pub minutes_per_round: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: Overrides) -> Self {
        RunConfig {
            protocol: flags.protocol.or(file.protocol),
            n: flags.n.or(file.n),
            stages: flags.stages.or(file.stages),
            q: flags.q.or(file.q).unwrap_or(DEFAULT_Q),
            rate_bps: flags.rate_bps.or(file.rate_bps).unwrap_or(DEFAULT_RATE_BPS),
            minutes_per_round: flags.minutes_per_round.or(file.minutes_per_round).unwrap_or(DEFAULT_MINUTES_PER_ROUND),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            output: flags.output.or(file.output),
            format: flags.format.or(file.format).unwrap_or(Format::Csv),
        }
    }
}
