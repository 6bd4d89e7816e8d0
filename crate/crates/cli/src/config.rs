//! Config file loading and flag overrides.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use refex_core::eval::MucMode;
use refex_core::pipeline::{PipelineConfig, TaggerChoice};
use refex_core::tagging::TaggerNoise;

use crate::UsageError;

/// Flags shared by every pipeline stage. Each mirrors a config-file key.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; flags override its values.
    #[arg(long, env = "REFEX_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Row clustering radius on the y-center (normalized units).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub eps_y: Option<f64>,
    /// Largest horizontal gap between lines of one group.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub eps_x: Option<f64>,
    #[arg(long, global = true)]
    pub min_pts: Option<usize>,
    /// Smallest empty vertical band that splits a group into columns.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub col_gap: Option<f64>,
    /// Tokens allowed between two address fragments that still merge.
    #[arg(long, global = true)]
    pub merge_gap: Option<usize>,
    /// Do not let an orphan I- tag start an entity.
    #[arg(long, global = true)]
    pub no_i_start: bool,
    /// standard (precision over actual) or paper (precision over possible).
    #[arg(long, global = true)]
    pub muc5_mode: Option<MucMode>,
    /// Skip the rule post-processing of predictions.
    #[arg(long, global = true)]
    pub no_hybrid: bool,
    /// `heuristic` or `file:<pattern>` where `{stem}` names the page.
    #[arg(long, global = true)]
    pub tagger: Option<String>,
    /// Per-entity error rate of the heuristic tagger.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tagger_noise: Option<f64>,
    #[arg(long, global = true)]
    pub tagger_seed: Option<u64>,
}

/// On-disk config: the pipeline config plus the tagger keys.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    #[serde(flatten)]
    pipeline: PipelineConfig,
    tagger: Option<String>,
    tagger_noise: Option<f64>,
    tagger_seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub pipeline: PipelineConfig,
    pub tagger: TaggerChoice,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Resolved, UsageError> {
        let mut file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let p = &mut file.pipeline;
        if let Some(v) = self.eps_y {
            p.grouping.eps_y = v;
        }
        if let Some(v) = self.eps_x {
            p.grouping.eps_x = v;
        }
        if let Some(v) = self.min_pts {
            p.grouping.min_pts = v;
        }
        if let Some(v) = self.col_gap {
            p.grouping.column_gap = v;
        }
        if let Some(v) = self.merge_gap {
            p.decode.address_merge_gap = v;
        }
        if self.no_i_start {
            p.decode.allow_i_start = false;
        }
        if let Some(m) = self.muc5_mode {
            p.mode = m;
        }
        if self.no_hybrid {
            p.hybrid = false;
        }
        p.validate().map_err(|e| UsageError(e.to_string()))?;

        let spec = self.tagger.clone().or(file.tagger).unwrap_or_else(|| "heuristic".into());
        let rate = self.tagger_noise.or(file.tagger_noise).unwrap_or(0.0);
        let seed = self.tagger_seed.or(file.tagger_seed).unwrap_or(0);
        let tagger = parse_tagger(&spec, rate, seed)?;
        Ok(Resolved {
            pipeline: file.pipeline,
            tagger,
        })
    }
}

pub fn parse_tagger(spec: &str, rate: f64, seed: u64) -> Result<TaggerChoice, UsageError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(UsageError(format!("tagger noise {rate} must be in [0, 1]")));
    }
    if spec == "heuristic" {
        let noise = (rate > 0.0).then_some(TaggerNoise { rate, seed });
        return Ok(TaggerChoice::heuristic(noise));
    }
    match spec.strip_prefix("file:") {
        Some(pattern) if !pattern.is_empty() => {
            if rate > 0.0 {
                return Err(UsageError("--tagger-noise applies only to the heuristic tagger".into()));
            }
            Ok(TaggerChoice::File(pattern.to_string()))
        }
        _ => Err(UsageError(format!("unknown tagger `{spec}` (expected heuristic or file:<pattern>)"))),
    }
}
