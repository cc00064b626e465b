//! Checkpoint persistence: little-endian binary with magic "SCLD", a format
//! version, per-tensor records (name, dims, f32 payload) and a trailing TOML
//! metadata blob. Round-trips are bit-exact; loading a higher format version
//! fails before any partial state escapes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ConvLayer, ModelConfig, ModelParams, LAYERS_PER_HALF};
use crate::rateproxy::RateProxyParams;

use super::TrainConfig;

pub const MAGIC: &[u8; 4] = b"SCLD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_proxy: Option<RateProxyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codec_metadata: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Rebuild the downsampler parameters from the tensor records.
    pub fn model_params(&self) -> Result<ModelParams<f32>> {
        let cfg: &ModelConfig = &self.meta.config.model;
        let read_half = |half: &str| -> Result<Vec<ConvLayer<f32>>> {
            (0..LAYERS_PER_HALF)
                .map(|i| {
                    let w = self
                        .tensor(&format!("{half}.{i}.weight"))
                        .ok_or_else(|| Error::Other(format!("checkpoint missing {half}.{i}.weight")))?;
                    let b = self
                        .tensor(&format!("{half}.{i}.bias"))
                        .ok_or_else(|| Error::Other(format!("checkpoint missing {half}.{i}.bias")))?;
                    if w.dims.len() != 4 {
                        return Err(Error::Other(format!("bad dims for {half}.{i}.weight")));
                    }
                    Ok(ConvLayer {
                        out_ch: w.dims[0],
                        in_ch: w.dims[1],
                        k: w.dims[2],
                        weight: w.data.clone(),
                        bias: b.data.clone(),
                    })
                })
                .collect()
        };
        Ok(ModelParams {
            config: cfg.clone(),
            pre: read_half("pre")?,
            post: read_half("post")?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let blob = toml::to_string(&self.meta).expect("checkpoint meta serializes");
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(blob.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Checkpoint> {
        let corrupt = |detail: &str| Error::CorruptCheckpoint {
            path: origin.to_path_buf(),
            detail: detail.to_string(),
        };
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(corrupt("unexpected end of file"));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let take_u32 = |pos: &mut usize| -> Result<u32> {
            Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
        };

        if take(&mut pos, 4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = take_u32(&mut pos)?;
        if version > FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                path: origin.to_path_buf(),
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let count = take_u32(&mut pos)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = take_u32(&mut pos)? as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|_| corrupt("tensor name is not UTF-8"))?;
            let rank = take_u32(&mut pos)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(take_u32(&mut pos)? as usize);
            }
            let numel: usize = dims.iter().product();
            let raw = take(&mut pos, numel * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        let blob_len = take_u32(&mut pos)? as usize;
        let blob = std::str::from_utf8(take(&mut pos, blob_len)?)
            .map_err(|_| corrupt("metadata blob is not UTF-8"))?;
        if pos != bytes.len() {
            return Err(corrupt("trailing bytes after metadata"));
        }
        let meta: CheckpointMeta =
            toml::from_str(blob).map_err(|e| corrupt(&format!("bad metadata: {e}")))?;
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::cli::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{Strategy, TrainConfig};

    fn sample() -> Checkpoint {
        let config = TrainConfig {
            strategy: Strategy::ScaledD,
            ..TrainConfig::default()
        };
        Checkpoint {
            meta: CheckpointMeta {
                config,
                rate_proxy: Some(RateProxyParams {
                    tau: 0.02,
                    a: 3.5,
                    b: 120.0,
                }),
                codec_metadata: Some("toy-dct qstep=0.05".into()),
            },
            tensors: vec![
                NamedTensor {
                    name: "pre.0.weight".into(),
                    dims: vec![2, 3, 3, 3],
                    data: (0..54).map(|i| i as f32 * 0.25).collect(),
                },
                NamedTensor {
                    name: "history.loss".into(),
                    dims: vec![3],
                    data: vec![1.0, 0.5, 0.25],
                },
            ],
        }
    }

    #[test]
    fn bytes_roundtrip_bit_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        // save -> load -> save produces byte-identical output
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = sample().to_bytes();
        for cut in [3usize, 11, bytes.len() / 2, bytes.len() - 1] {
            let err = Checkpoint::from_bytes(&bytes[..cut], Path::new("mem")).unwrap_err();
            assert!(matches!(err, Error::CorruptCheckpoint { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn future_version_is_rejected_cleanly() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap_err();
        match err {
            Error::CheckpointVersion { found, supported, .. } => {
                assert_eq!(found, FORMAT_VERSION + 1);
                assert_eq!(supported, FORMAT_VERSION);
            }
            other => panic!("unexpected: {other}"),
        }
    }
}
