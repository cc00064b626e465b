//! External H.264 round trips: frames go to 4:2:0 8-bit raw video, through
//! the encoder in constant-QP mode, the elementary stream size is measured,
//! then an ffmpeg-style decoder brings the stream back to raw 4:2:0. Each
//! call owns its temp directory, so arbitrarily many may run concurrently.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::media::{write_frames, ChromaLayout, FramePlanar, SequenceSource};

use super::CodecResult;

pub const ENCODER_ENV: &str = "SCALEDOWN_ENCODER";
pub const DECODER_ENV: &str = "SCALEDOWN_DECODER";
pub const DEFAULT_ENCODER: &str = "x264";
pub const DEFAULT_DECODER: &str = "ffmpeg";

pub fn encoder_path(exec: &super::ExecPaths) -> PathBuf {
    exec.encoder
        .clone()
        .or_else(|| std::env::var_os(ENCODER_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ENCODER))
}

pub fn decoder_path(exec: &super::ExecPaths) -> PathBuf {
    exec.decoder
        .clone()
        .or_else(|| std::env::var_os(DECODER_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DECODER))
}

/// `<tool> --version` first line, cached per executable path. Also the
/// availability probe: a missing binary reports `None`.
fn version_of(path: &Path) -> Option<String> {
    static CACHE: Mutex<Option<HashMap<PathBuf, Option<String>>>> = Mutex::new(None);
    let mut guard = CACHE.lock().unwrap();
    let cache = guard.get_or_insert_with(HashMap::new);
    if let Some(v) = cache.get(path) {
        return v.clone();
    }
    let version = Command::new(path)
        .arg("--version")
        .output()
        .ok()
        .map(|out| {
            String::from_utf8_lossy(if out.stdout.is_empty() {
                &out.stderr
            } else {
                &out.stdout
            })
            .lines()
            .next()
            .unwrap_or_default()
            .trim()
            .to_string()
        });
    cache.insert(path.to_path_buf(), version.clone());
    version
}

/// True when both the encoder and decoder executables respond.
pub fn available(exec: &super::ExecPaths) -> bool {
    version_of(&encoder_path(exec)).is_some() && version_of(&decoder_path(exec)).is_some()
}

fn run(cmd: &mut Command, name: &str) -> Result<()> {
    let output = cmd.output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            if name == "decoder" {
                Error::DecoderMissing {
                    name: cmd.get_program().to_string_lossy().into_owned(),
                }
            } else {
                Error::EncoderMissing {
                    name: cmd.get_program().to_string_lossy().into_owned(),
                }
            }
        } else {
            Error::io(PathBuf::from(cmd.get_program()), e)
        }
    })?;
    if !output.status.success() {
        return Err(Error::CodecSubprocess {
            name: cmd.get_program().to_string_lossy().into_owned(),
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr)
                .chars()
                .take(2000)
                .collect(),
        });
    }
    Ok(())
}

pub fn encode_decode(
    frames: &[FramePlanar],
    qp: u8,
    preset: &str,
    keyint: Option<u32>,
    exec: &super::ExecPaths,
    fps: (u32, u32),
) -> Result<CodecResult> {
    let encoder = encoder_path(exec);
    let decoder = decoder_path(exec);
    if version_of(&encoder).is_none() {
        return Err(Error::EncoderMissing {
            name: encoder.to_string_lossy().into_owned(),
        });
    }
    if version_of(&decoder).is_none() {
        return Err(Error::DecoderMissing {
            name: decoder.to_string_lossy().into_owned(),
        });
    }

    let (width, height) = (frames[0].width, frames[0].height);
    if width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Config(format!(
            "external backend needs even dims for 4:2:0, got {width}x{height}"
        )));
    }
    let tmp = match &exec.temp_dir {
        Some(dir) => tempfile::Builder::new().prefix("sdcodec").tempdir_in(dir),
        None => tempfile::Builder::new().prefix("sdcodec").tempdir(),
    }
    .map_err(|e| Error::io("tempdir", e))?;
    let input = tmp.path().join("input.yuv");
    let stream = tmp.path().join("stream.264");
    let decoded = tmp.path().join("decoded.yuv");

    write_frames(frames, &input, ChromaLayout::C420, fps)?;

    let mut enc = Command::new(&encoder);
    enc.arg("--input-res")
        .arg(format!("{width}x{height}"))
        .arg("--fps")
        .arg(format!("{}/{}", fps.0, fps.1))
        .arg("--input-csp")
        .arg("i420")
        .arg("--preset")
        .arg(preset)
        .arg("--qp")
        .arg(qp.to_string());
    if let Some(k) = keyint {
        enc.arg("--keyint").arg(k.to_string());
        if k == 1 {
            enc.arg("--min-keyint").arg("1");
        }
    }
    for flag in &exec.extra_flags {
        enc.arg(flag);
    }
    enc.arg("-o").arg(&stream).arg(&input);
    run(&mut enc, "encoder")?;

    // Annex B elementary stream size; no container overhead is counted.
    let bits = 8 * std::fs::metadata(&stream)
        .map_err(|e| Error::io(&stream, e))?
        .len();
    if bits == 0 {
        return Err(Error::CodecMismatch {
            detail: "encoder produced an empty stream".into(),
        });
    }

    let mut dec = Command::new(&decoder);
    dec.arg("-hide_banner")
        .arg("-loglevel")
        .arg("error")
        .arg("-f")
        .arg("h264")
        .arg("-i")
        .arg(&stream)
        .arg("-f")
        .arg("rawvideo")
        .arg("-pix_fmt")
        .arg("yuv420p")
        .arg("-y")
        .arg(&decoded);
    run(&mut dec, "decoder")?;

    let src = SequenceSource::open_raw(&decoded, width, height, ChromaLayout::C420)?;
    if src.frame_count != frames.len() {
        return Err(Error::CodecMismatch {
            detail: format!(
                "decoder returned {} frames for {} inputs",
                src.frame_count,
                frames.len()
            ),
        });
    }
    let decoded_frames = src.read_all()?;
    // Return in the caller's layout: the 4:2:0 -> 4:4:4 path is the same
    // bicubic chroma upsampling the rest of the pipeline uses.
    let recon: Vec<FramePlanar> = match frames[0].layout {
        ChromaLayout::C420 => decoded_frames,
        ChromaLayout::C444 => decoded_frames.iter().map(|f| f.to_444()).collect(),
    };

    let flags = format!(
        "preset={preset} qp={qp} keyint={} extra={:?}",
        keyint.map_or("default".to_string(), |k| k.to_string()),
        exec.extra_flags
    );
    Ok(CodecResult {
        recon,
        bits,
        metadata: format!(
            "{} | {flags}",
            version_of(&encoder).unwrap_or_else(|| "unknown encoder".into())
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ExecPaths;
    use crate::synth::synth_sequence;

    #[test]
    fn missing_encoder_yields_actionable_error() {
        let exec = ExecPaths {
            encoder: Some(PathBuf::from("definitely-not-installed-encoder-xyz")),
            ..Default::default()
        };
        let frames = synth_sequence(1, 16, 16, 1);
        let err = encode_decode(&frames, 30, "medium", None, &exec, (30, 1)).unwrap_err();
        match err {
            Error::EncoderMissing { name } => {
                assert!(name.contains("definitely-not-installed-encoder-xyz"))
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn round_trip_when_installed() {
        let exec = ExecPaths::default();
        if !available(&exec) {
            eprintln!("skipping: external encoder/decoder not installed");
            return;
        }
        let frames = synth_sequence(2, 32, 32, 2);
        let a = encode_decode(&frames, 30, "medium", Some(1), &exec, (30, 1)).unwrap();
        assert!(a.bits > 0);
        assert_eq!(a.recon.len(), 2);
        assert_eq!(a.recon[0].width, 32);
        let b = encode_decode(&frames, 30, "medium", Some(1), &exec, (30, 1)).unwrap();
        assert_eq!(a.bits, b.bits);
        for (fa, fb) in a.recon.iter().zip(&b.recon) {
            assert_eq!(fa.y.data, fb.y.data);
        }
    }
}
