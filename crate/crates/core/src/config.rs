//! Run configuration: one strict-schema TOML file covering dataset paths,
//! codec executables, the training grid, the sweep grid and reporting.
//! Unknown keys are rejected; paths are validated before any job starts.

use std::path::{Path, PathBuf};

use crate::codec::{CodecSettings, ExecPaths};
use crate::error::{Error, Result};
use crate::media::ChromaLayout;
use crate::model::ModelConfig;
use crate::resample::ScaleRatio;
use crate::surrogate::SigmaScope;
use crate::train::{Strategy, TrainConfig};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub path: PathBuf,
    /// Raw .yuv sources need explicit geometry; .y4m parses its own header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<ChromaLayout>,
}

impl SourceSpec {
    pub fn raw_geometry(&self) -> Option<(usize, usize, ChromaLayout)> {
        match (self.width, self.height, self.layout) {
            (Some(w), Some(h), Some(l)) => Some((w, h, l)),
            _ => None,
        }
    }

    /// Stable identifier used in CSV rows and file names.
    pub fn name(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.display().to_string())
            .replace([',', '/'], "_")
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub sources: Vec<SourceSpec>,
    pub patch_size: usize,
    pub stride: usize,
    /// Limit frames read per source (0 = all).
    pub max_frames_per_source: usize,
    /// Every n-th patch goes to the held-out set (0 = no holdout).
    pub holdout_every: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            sources: Vec::new(),
            patch_size: 64,
            stride: 64,
            max_frames_per_source: 0,
            holdout_every: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecSection {
    /// "toy" or "x264".
    pub backend: String,
    pub qstep: f64,
    pub qp: u8,
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keyint: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder: Option<PathBuf>,
    pub extra_flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temp_dir: Option<PathBuf>,
}

impl Default for CodecSection {
    fn default() -> Self {
        CodecSection {
            backend: "toy".into(),
            qstep: 0.05,
            qp: 30,
            preset: "medium".into(),
            keyint: None,
            encoder: None,
            decoder: None,
            extra_flags: Vec::new(),
            temp_dir: None,
        }
    }
}

impl CodecSection {
    pub fn settings(&self) -> Result<CodecSettings> {
        let s = match self.backend.as_str() {
            "toy" => CodecSettings::Toy { qstep: self.qstep },
            "x264" => CodecSettings::X264 {
                qp: self.qp,
                preset: self.preset.clone(),
                keyint: self.keyint,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown codec backend `{other}` (expected toy or x264)"
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn exec(&self) -> ExecPaths {
        ExecPaths {
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            extra_flags: self.extra_flags.clone(),
            temp_dir: self.temp_dir.clone(),
        }
    }

    pub fn is_external(&self) -> bool {
        self.backend == "x264"
    }

    /// The quantizer grid for this backend out of the two candidate lists.
    pub fn grid<'a>(&self, qps: &'a [u8], qsteps: &'a [f64]) -> Vec<f64> {
        if self.is_external() {
            qps.iter().map(|&q| q as f64).collect()
        } else {
            qsteps.to_vec()
        }
    }
}

fn default_qps() -> Vec<u8> {
    (17..=47).step_by(3).collect()
}

fn default_qsteps() -> Vec<f64> {
    // geometric ladder, roughly matching the QP 17..47 operating range
    vec![0.01, 0.016, 0.025, 0.04, 0.063, 0.1, 0.16, 0.25, 0.4, 0.63, 1.0]
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub strategies: Vec<Strategy>,
    pub scales: Vec<ScaleRatio>,
    /// Quantizer grids; which one applies depends on the codec backend.
    pub qps: Vec<u8>,
    pub qsteps: Vec<f64>,
    /// λ grid for scaled-rd cells.
    pub lambdas: Vec<f64>,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub activation_slope: f64,
    pub sigma_scope: SigmaScope,
    pub sigma_floor: f64,
    pub tau: f64,
    pub eval_every: usize,
    /// Cap on training patches (0 = all).
    pub max_patches: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            strategies: vec![Strategy::DOnly, Strategy::ScaledD],
            scales: vec![ScaleRatio::new(1, 2).unwrap()],
            qps: vec![30],
            qsteps: vec![0.05],
            lambdas: vec![1e-4],
            epochs: 100,
            max_steps: None,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 4,
            hidden_channels: 32,
            kernel: 3,
            activation_slope: 0.1,
            sigma_scope: SigmaScope::PerSample,
            sigma_floor: 1e-6,
            tau: 0.02,
            eval_every: 0,
            max_patches: 0,
        }
    }
}

impl TrainSection {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden_channels: self.hidden_channels,
            kernel: self.kernel,
            activation_slope: self.activation_slope,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Evaluation sequences; defaults to the dataset sources.
    pub sequences: Vec<SourceSpec>,
    /// "lanczos", "bicubic", "bilinear", or "learned:<strategy>".
    pub filters: Vec<String>,
    pub scales: Vec<ScaleRatio>,
    pub qps: Vec<u8>,
    pub qsteps: Vec<f64>,
    /// Limit frames per sequence (0 = all).
    pub max_frames: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sequences: Vec::new(),
            filters: vec!["lanczos".into()],
            scales: ScaleRatio::eval_set(),
            qps: default_qps(),
            qsteps: default_qsteps(),
            max_frames: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub reference: String,
    pub metrics: Vec<String>,
    /// CSV of externally computed scores to merge (sequence,filter,scale,q,value).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_scores: Option<PathBuf>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            reference: "lanczos".into(),
            metrics: vec!["psnr_y".into(), "psnr_weighted".into(), "ssim_y".into()],
            external_scores: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads for grid cells and sweep points (0 = one per CPU).
    pub jobs: usize,
    pub dataset: DatasetSection,
    pub codec: CodecSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            jobs: 0,
            dataset: DatasetSection::default(),
            codec: CodecSection::default(),
            train: TrainSection::default(),
            sweep: SweepSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn effective_jobs(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Validate everything that can be checked without running jobs:
    /// schema-level invariants plus the existence of every input path.
    pub fn validate(&self) -> Result<()> {
        self.codec.settings()?;
        for spec in self.dataset.sources.iter().chain(&self.sweep.sequences) {
            if !spec.path.exists() {
                return Err(Error::Config(format!(
                    "source file not found: {}",
                    spec.path.display()
                )));
            }
            let is_y4m = spec
                .path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
            if !is_y4m && spec.raw_geometry().is_none() {
                return Err(Error::Config(format!(
                    "raw source {} needs width/height/layout",
                    spec.path.display()
                )));
            }
        }
        if self.dataset.patch_size == 0 || self.dataset.stride == 0 {
            return Err(Error::Config("patch_size and stride must be positive".into()));
        }
        for f in &self.sweep.filters {
            parse_filter_name(f)?;
        }
        for m in &self.report.metrics {
            crate::eval::Metric::parse(m)?;
        }
        if let Some(p) = &self.report.external_scores {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "external scores file not found: {}",
                    p.display()
                )));
            }
        }
        self.train.model_config().validate()?;
        let grid_q = self.codec.grid(&self.train.qps, &self.train.qsteps);
        if grid_q.is_empty() || self.train.scales.is_empty() || self.train.strategies.is_empty() {
            return Err(Error::Config(
                "training grid needs at least one strategy, scale and quantizer".into(),
            ));
        }
        if self
            .train
            .strategies
            .contains(&Strategy::ScaledRd)
            && self.train.lambdas.is_empty()
        {
            return Err(Error::Config("scaled-rd cells need a lambda grid".into()));
        }
        Ok(())
    }

    /// One training cell of the grid.
    pub fn train_config(
        &self,
        strategy: Strategy,
        scale: ScaleRatio,
        q: f64,
        lambda: f64,
    ) -> Result<TrainConfig> {
        let codec = if strategy.requires_codec() {
            Some(self.codec.settings()?.with_q(q))
        } else {
            None
        };
        Ok(TrainConfig {
            strategy,
            scale,
            codec,
            lambda,
            epochs: self.train.epochs,
            max_steps: self.train.max_steps,
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            batch_size: self.train.batch_size,
            seed: self.seed,
            sigma_scope: self.train.sigma_scope,
            sigma_floor: self.train.sigma_floor,
            tau: self.train.tau,
            eval_every: self.train.eval_every,
            model: self.train.model_config(),
        })
    }
}

/// A sweep filter name: a fixed kernel or a trained strategy's checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub enum FilterName {
    Lanczos,
    Bicubic,
    Bilinear,
    Learned(Strategy),
}

pub fn parse_filter_name(name: &str) -> Result<FilterName> {
    match name {
        "lanczos" => Ok(FilterName::Lanczos),
        "bicubic" => Ok(FilterName::Bicubic),
        "bilinear" => Ok(FilterName::Bilinear),
        other => match other.strip_prefix("learned:") {
            Some(strategy) => Ok(FilterName::Learned(strategy.parse()?)),
            None => Err(Error::Config(format!(
                "unknown filter `{other}` (expected lanczos, bicubic, bilinear, or learned:<strategy>)"
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("seed = 1\nbogus_key = 2\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err =
            toml::from_str::<RunConfig>("[train]\nlearning_rate_typo = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate_typo"), "{err}");
    }

    #[test]
    fn missing_files_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.dataset.sources.push(SourceSpec {
            path: PathBuf::from("/nonexistent/clip.y4m"),
            width: None,
            height: None,
            layout: None,
        });
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/clip.y4m"));
    }

    #[test]
    fn filter_names_parse() {
        assert_eq!(parse_filter_name("lanczos").unwrap(), FilterName::Lanczos);
        assert_eq!(
            parse_filter_name("learned:scaled-d").unwrap(),
            FilterName::Learned(Strategy::ScaledD)
        );
        assert!(parse_filter_name("nearest").is_err());
    }

    #[test]
    fn default_qp_grid_matches_the_protocol() {
        let qps = default_qps();
        assert_eq!(qps.first(), Some(&17));
        assert_eq!(qps.last(), Some(&47));
        assert_eq!(qps.len(), 11);
        assert!(qps.windows(2).all(|w| w[1] - w[0] == 3));
    }
}
