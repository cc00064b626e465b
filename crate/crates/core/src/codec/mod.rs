//! Black-box encode/decode round trips returning reconstructed frames plus
//! exact bitstream sizes, via an external H.264 encoder subprocess or the
//! built-in deterministic toy DCT codec for hermetic testing.

pub mod external;
pub mod toy;

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::media::FramePlanar;
use crate::tensor::{Scalar, Shape, Tensor};

/// Serializable codec settings; executable locations live in [`ExecPaths`]
/// because they are machine-specific and do not belong in checkpoints.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "backend", deny_unknown_fields)]
pub enum CodecSettings {
    /// Hermetic in-process DCT codec; `qstep` is the uniform quantizer step
    /// in [0,1] signal units.
    #[serde(rename = "toy")]
    Toy { qstep: f64 },
    /// External H.264 encoder in constant-QP mode.
    #[serde(rename = "x264")]
    X264 {
        qp: u8,
        #[serde(default = "default_preset")]
        preset: String,
        /// GOP length; `Some(1)` forces intra-only coding, `None` leaves the
        /// encoder default.
        #[serde(default)]
        keyint: Option<u32>,
    },
}

fn default_preset() -> String {
    "medium".into()
}

impl CodecSettings {
    pub fn validate(&self) -> Result<()> {
        match self {
            CodecSettings::Toy { qstep } => {
                if *qstep <= 0.0 {
                    return Err(Error::Config(format!("toy qstep must be > 0, got {qstep}")));
                }
            }
            CodecSettings::X264 { qp, .. } => {
                if *qp > 51 {
                    return Err(Error::Config(format!("x264 qp must be in [0, 51], got {qp}")));
                }
            }
        }
        Ok(())
    }

    /// Same backend at a different quantizer, for sweeps and calibration.
    pub fn with_q(&self, q: f64) -> CodecSettings {
        match self {
            CodecSettings::Toy { .. } => CodecSettings::Toy { qstep: q },
            CodecSettings::X264 { preset, keyint, .. } => CodecSettings::X264 {
                qp: q.round().clamp(0.0, 51.0) as u8,
                preset: preset.clone(),
                keyint: *keyint,
            },
        }
    }

    /// The quantizer knob as a plain number (QP or qstep).
    pub fn q(&self) -> f64 {
        match self {
            CodecSettings::Toy { qstep } => *qstep,
            CodecSettings::X264 { qp, .. } => *qp as f64,
        }
    }

    /// Intra-only variant used for per-step training round trips.
    pub fn intra_only(&self) -> CodecSettings {
        match self {
            CodecSettings::Toy { .. } => self.clone(),
            CodecSettings::X264 { qp, preset, .. } => CodecSettings::X264 {
                qp: *qp,
                preset: preset.clone(),
                keyint: Some(1),
            },
        }
    }
}

/// Where to find the external executables and where to put temp files.
#[derive(Clone, Debug, Default)]
pub struct ExecPaths {
    pub encoder: Option<PathBuf>,
    pub decoder: Option<PathBuf>,
    pub extra_flags: Vec<String>,
    pub temp_dir: Option<PathBuf>,
}

/// Everything needed to run one encode/decode round trip.
#[derive(Clone, Debug)]
pub struct CodecConfig {
    pub settings: CodecSettings,
    pub exec: ExecPaths,
    pub fps: (u32, u32),
}

impl CodecConfig {
    pub fn toy(qstep: f64) -> Self {
        CodecConfig {
            settings: CodecSettings::Toy { qstep },
            exec: ExecPaths::default(),
            fps: (30, 1),
        }
    }

    pub fn new(settings: CodecSettings, exec: ExecPaths) -> Self {
        CodecConfig {
            settings,
            exec,
            fps: (30, 1),
        }
    }

    pub fn with_settings(&self, settings: CodecSettings) -> Self {
        CodecConfig {
            settings,
            exec: self.exec.clone(),
            fps: self.fps,
        }
    }
}

/// Reconstructed frames plus the exact bitstream size in bits.
#[derive(Clone, Debug)]
pub struct CodecResult {
    pub recon: Vec<FramePlanar>,
    pub bits: u64,
    /// Backend provenance: encoder version and flags for the external
    /// backend, settings for the toy backend.
    pub metadata: String,
}

impl CodecResult {
    /// Reconstruction as a flat [n, 3, h, w] batch in 4:4:4.
    pub fn recon_chw<T: Scalar>(&self) -> Vec<T> {
        let mut out = Vec::new();
        for frame in &self.recon {
            let full = frame.to_444();
            out.extend(full.to_chw().iter().map(|&v| T::from_f64(v as f64)));
        }
        out
    }
}

/// One round trip through the configured backend. Deterministic for fixed
/// input, config, and encoder version.
pub fn encode_decode(frames: &[FramePlanar], cfg: &CodecConfig) -> Result<CodecResult> {
    if frames.is_empty() {
        return Err(Error::Config("encode_decode on empty frame list".into()));
    }
    let first = &frames[0];
    for f in frames {
        if (f.width, f.height) != (first.width, first.height) {
            return Err(Error::Config("encode_decode: frames must share dims".into()));
        }
    }
    cfg.settings.validate()?;
    match &cfg.settings {
        CodecSettings::Toy { qstep } => toy::encode_decode(frames, *qstep),
        CodecSettings::X264 { qp, preset, keyint } => {
            external::encode_decode(frames, *qp, preset, *keyint, &cfg.exec, cfg.fps)
        }
    }
}

/// Compression error ε = recon − y as a detached constant tensor. The codec
/// reconstruction comes from outside the tape, so ε never carries gradient.
pub fn compression_error<T: Scalar>(y: &Tensor<T>, result: &CodecResult) -> Tensor<T> {
    let recon = result.recon_chw::<T>();
    assert_eq!(
        recon.len(),
        y.data().len(),
        "compression_error: recon has {} samples, y has {}",
        recon.len(),
        y.data().len()
    );
    let eps: Vec<T> = recon
        .iter()
        .zip(y.data())
        .map(|(&r, &v)| r - v)
        .collect();
    Tensor::constant(eps, Shape::new(y.shape().dims().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::mse_plane;
    use crate::synth::synth_frame;
    use crate::tensor::Tape;

    #[test]
    fn compression_error_definition_holds() {
        let frame = synth_frame(5, 16, 16, 0);
        let cfg = CodecConfig::toy(0.05);
        let result = encode_decode(&[frame.clone()], &cfg).unwrap();
        let tape: Tape<f32> = Tape::new();
        let y = tape.leaf(frame.to_chw(), Shape::new(vec![1, 3, 16, 16]));
        let eps = compression_error(&y, &result);
        assert!(!eps.requires_grad());
        let recon = result.recon_chw::<f32>();
        for ((e, y), r) in eps.data().iter().zip(y.data()).zip(&recon) {
            assert_eq!(e + y, *r); // ε + y == recon, elementwise
        }
        // mean(ε²) agrees with the metrics module on the same pair
        let n = eps.data().len() as f64;
        let mean_sq: f64 = eps.data().iter().map(|&e| (e as f64) * (e as f64)).sum::<f64>() / n;
        let m = (mse_plane(&frame.y, &result.recon[0].y)
            + mse_plane(&frame.u, &result.recon[0].u)
            + mse_plane(&frame.v, &result.recon[0].v))
            / 3.0;
        assert!((mean_sq - m).abs() < 1e-10, "{mean_sq} vs {m}");
    }

    #[test]
    fn lossless_round_trip_gives_zero_error() {
        let mut frame = synth_frame(6, 16, 16, 0);
        for plane in [&mut frame.y, &mut frame.u, &mut frame.v] {
            for v in &mut plane.data {
                *v = crate::media::quantize_u8(*v) as f32 / 255.0;
            }
        }
        let cfg = CodecConfig::toy(0.2 / 255.0);
        let result = encode_decode(&[frame.clone()], &cfg).unwrap();
        let tape: Tape<f32> = Tape::new();
        let y = tape.leaf(frame.to_chw(), Shape::new(vec![1, 3, 16, 16]));
        let eps = compression_error(&y, &result);
        assert!(eps.data().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn settings_validate() {
        assert!(CodecSettings::Toy { qstep: -1.0 }.validate().is_err());
        assert!(CodecSettings::X264 {
            qp: 52,
            preset: "medium".into(),
            keyint: None
        }
        .validate()
        .is_err());
        assert!(CodecSettings::X264 {
            qp: 30,
            preset: "medium".into(),
            keyint: None
        }
        .validate()
        .is_ok());
    }
}
