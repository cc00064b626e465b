//! Raw YUV / Y4M reading and writing, chroma layout conversion, chroma
//! degradation simulation, and training patch extraction. Samples are
//! normalized to [0,1] floats internally (8-bit values divided by 255);
//! writes clamp and quantize round-half-away-from-zero.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::resample::{resize_plane, FilterKind};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ChromaLayout {
    #[serde(rename = "444")]
    C444,
    #[serde(rename = "420")]
    C420,
}

impl ChromaLayout {
    pub fn frame_bytes(&self, width: usize, height: usize) -> usize {
        match self {
            ChromaLayout::C444 => 3 * width * height,
            ChromaLayout::C420 => width * height + 2 * (width / 2) * (height / 2),
        }
    }

    fn y4m_tag(&self) -> &'static str {
        match self {
            ChromaLayout::C444 => "C444",
            ChromaLayout::C420 => "C420",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "plane data/dims mismatch");
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Self {
        Plane {
            width,
            height,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    fn to_bytes(&self, out: &mut Vec<u8>) {
        out.extend(self.data.iter().map(|&v| quantize_u8(v)));
    }
}

/// Clamp to [0,1] and quantize to 8 bits, rounding half away from zero.
pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// One video frame as three float planes with a declared chroma layout.
/// In 4:2:0 the chroma planes are exactly half the luma dims, which requires
/// even width and height.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePlanar {
    pub width: usize,
    pub height: usize,
    pub layout: ChromaLayout,
    pub y: Plane,
    pub u: Plane,
    pub v: Plane,
}

impl FramePlanar {
    pub fn constant(width: usize, height: usize, y: f32, u: f32, v: f32) -> Self {
        FramePlanar {
            width,
            height,
            layout: ChromaLayout::C444,
            y: Plane::filled(width, height, y),
            u: Plane::filled(width, height, u),
            v: Plane::filled(width, height, v),
        }
    }

    /// Flat [3, h, w] layout (Y, U, V), 4:4:4 only.
    pub fn to_chw(&self) -> Vec<f32> {
        assert_eq!(
            self.layout,
            ChromaLayout::C444,
            "to_chw requires 4:4:4 frames"
        );
        let mut out = Vec::with_capacity(3 * self.width * self.height);
        out.extend_from_slice(&self.y.data);
        out.extend_from_slice(&self.u.data);
        out.extend_from_slice(&self.v.data);
        out
    }

    /// Inverse of [`to_chw`]; values are taken as-is (no clamping).
    pub fn from_chw(data: &[f32], height: usize, width: usize) -> Self {
        assert_eq!(data.len(), 3 * width * height, "from_chw length mismatch");
        let n = width * height;
        FramePlanar {
            width,
            height,
            layout: ChromaLayout::C444,
            y: Plane::new(width, height, data[0..n].to_vec()),
            u: Plane::new(width, height, data[n..2 * n].to_vec()),
            v: Plane::new(width, height, data[2 * n..3 * n].to_vec()),
        }
    }

    /// Convert to 4:2:0 by bilinear half-scaling the chroma planes.
    pub fn to_420(&self) -> Result<FramePlanar> {
        match self.layout {
            ChromaLayout::C420 => Ok(self.clone()),
            ChromaLayout::C444 => {
                if self.width % 2 != 0 || self.height % 2 != 0 {
                    return Err(Error::Config(format!(
                        "4:2:0 conversion needs even dims, got {}x{}",
                        self.width, self.height
                    )));
                }
                let (cw, ch) = (self.width / 2, self.height / 2);
                let half = |p: &Plane| {
                    Plane::new(
                        cw,
                        ch,
                        resize_plane(&p.data, p.height, p.width, ch, cw, FilterKind::Bilinear),
                    )
                };
                Ok(FramePlanar {
                    width: self.width,
                    height: self.height,
                    layout: ChromaLayout::C420,
                    y: self.y.clone(),
                    u: half(&self.u),
                    v: half(&self.v),
                })
            }
        }
    }

    /// Convert to 4:4:4 by bicubic 2x upsampling of the chroma planes.
    pub fn to_444(&self) -> FramePlanar {
        match self.layout {
            ChromaLayout::C444 => self.clone(),
            ChromaLayout::C420 => {
                let up = |p: &Plane| {
                    Plane::new(
                        self.width,
                        self.height,
                        resize_plane(
                            &p.data,
                            p.height,
                            p.width,
                            self.height,
                            self.width,
                            FilterKind::CatmullRom,
                        ),
                    )
                };
                FramePlanar {
                    width: self.width,
                    height: self.height,
                    layout: ChromaLayout::C444,
                    y: self.y.clone(),
                    u: up(&self.u),
                    v: up(&self.v),
                }
            }
        }
    }
}

/// Apply the 4:2:0 chroma degradation to a 4:4:4 frame: chroma is bilinearly
/// downsampled by 1/2 and bicubically upsampled back; luma is untouched.
pub fn simulate_chroma_degradation(frame: &FramePlanar) -> Result<FramePlanar> {
    if frame.layout != ChromaLayout::C444 {
        return Err(Error::Config(
            "chroma degradation expects a 4:4:4 frame".into(),
        ));
    }
    Ok(frame.to_420()?.to_444())
}

/// An on-disk frame sequence: raw planar YUV (dims declared by the caller) or
/// Y4M (dims parsed from the stream header).
#[derive(Clone, Debug)]
pub struct SequenceSource {
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub layout: ChromaLayout,
    /// frames per second as a rational (Y4M F tag; 30:1 for raw files)
    pub fps: (u32, u32),
    /// byte offset of each frame's payload
    offsets: Vec<u64>,
}

impl SequenceSource {
    /// Open a raw .yuv stream with declared geometry. The file size must be
    /// an exact multiple of the frame size.
    pub fn open_raw(
        path: impl Into<PathBuf>,
        width: usize,
        height: usize,
        layout: ChromaLayout,
    ) -> Result<SequenceSource> {
        let path = path.into();
        let meta = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?;
        let frame_bytes = layout.frame_bytes(width, height) as u64;
        if frame_bytes == 0 || meta.len() % frame_bytes != 0 {
            return Err(Error::TruncatedFile {
                expected: (meta.len() / frame_bytes.max(1) + 1) * frame_bytes,
                found: meta.len(),
                path,
            });
        }
        let frame_count = (meta.len() / frame_bytes) as usize;
        let offsets = (0..frame_count).map(|i| i as u64 * frame_bytes).collect();
        Ok(SequenceSource {
            path,
            width,
            height,
            frame_count,
            layout,
            fps: (30, 1),
            offsets,
        })
    }

    /// Open a .y4m stream, parsing the header and indexing FRAME markers.
    pub fn open_y4m(path: impl Into<PathBuf>) -> Result<SequenceSource> {
        let path = path.into();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = BufReader::new(file);
        let mut header = Vec::new();
        reader
            .read_until(b'\n', &mut header)
            .map_err(|e| Error::io(&path, e))?;
        let header = String::from_utf8_lossy(&header);
        let bad = |detail: &str| Error::MalformedY4m {
            path: path.clone(),
            detail: detail.to_string(),
        };
        let mut fields = header.trim_end().split(' ');
        if fields.next() != Some("YUV4MPEG2") {
            return Err(bad("missing YUV4MPEG2 signature"));
        }
        let (mut width, mut height, mut fps, mut layout) = (0usize, 0usize, (30u32, 1u32), None);
        for tag in fields {
            let (key, value) = tag.split_at(1);
            match key {
                "W" => width = value.parse().map_err(|_| bad("bad W tag"))?,
                "H" => height = value.parse().map_err(|_| bad("bad H tag"))?,
                "F" => {
                    let (n, d) = value.split_once(':').ok_or_else(|| bad("bad F tag"))?;
                    fps = (
                        n.parse().map_err(|_| bad("bad F tag"))?,
                        d.parse().map_err(|_| bad("bad F tag"))?,
                    );
                }
                "C" => {
                    layout = Some(match value {
                        "444" => ChromaLayout::C444,
                        v if v.starts_with("420") => ChromaLayout::C420,
                        other => {
                            return Err(Error::UnsupportedLayout {
                                found: other.to_string(),
                            })
                        }
                    })
                }
                _ => {} // I, A, X tags are irrelevant here
            }
        }
        if width == 0 || height == 0 {
            return Err(bad("missing W/H tags"));
        }
        let layout = layout.unwrap_or(ChromaLayout::C420); // Y4M default
        let frame_bytes = layout.frame_bytes(width, height) as u64;

        // Index FRAME markers.
        let mut offsets = Vec::new();
        let mut pos = header.len() as u64;
        let mut marker = Vec::new();
        loop {
            marker.clear();
            let n = reader
                .read_until(b'\n', &mut marker)
                .map_err(|e| Error::io(&path, e))?;
            if n == 0 {
                break;
            }
            if !marker.starts_with(b"FRAME") {
                return Err(bad("expected FRAME marker"));
            }
            pos += n as u64;
            offsets.push(pos);
            pos += frame_bytes;
            if reader
                .seek(SeekFrom::Current(frame_bytes as i64))
                .map_err(|e| Error::io(&path, e))?
                != pos
            {
                return Err(bad("truncated frame payload"));
            }
        }
        Ok(SequenceSource {
            frame_count: offsets.len(),
            path,
            width,
            height,
            layout,
            fps,
            offsets,
        })
    }

    /// Open by extension: `.y4m` parses the stream header, anything else is
    /// raw planar YUV with caller-declared geometry.
    pub fn open(
        path: impl Into<PathBuf>,
        raw_geometry: Option<(usize, usize, ChromaLayout)>,
    ) -> Result<SequenceSource> {
        let path: PathBuf = path.into();
        let is_y4m = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
        if is_y4m {
            Self::open_y4m(path)
        } else {
            let (w, h, layout) = raw_geometry.ok_or_else(|| {
                Error::Config(format!(
                    "raw sequence {} needs explicit width/height/layout",
                    path.display()
                ))
            })?;
            Self::open_raw(path, w, h, layout)
        }
    }

    /// Read a frame range (clipped to what the file holds).
    pub fn read_frames(&self, range: std::ops::Range<usize>) -> Result<Vec<FramePlanar>> {
        let end = range.end.min(self.frame_count);
        let start = range.start.min(end);
        let mut file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let frame_bytes = self.layout.frame_bytes(self.width, self.height);
        let mut buf = vec![0u8; frame_bytes];
        let (cw, ch) = match self.layout {
            ChromaLayout::C444 => (self.width, self.height),
            ChromaLayout::C420 => (self.width / 2, self.height / 2),
        };
        let mut frames = Vec::with_capacity(end - start);
        for idx in start..end {
            file.seek(SeekFrom::Start(self.offsets[idx]))
                .map_err(|e| Error::io(&self.path, e))?;
            file.read_exact(&mut buf).map_err(|e| Error::io(&self.path, e))?;
            let ylen = self.width * self.height;
            let clen = cw * ch;
            frames.push(FramePlanar {
                width: self.width,
                height: self.height,
                layout: self.layout,
                y: Plane::from_bytes(self.width, self.height, &buf[0..ylen]),
                u: Plane::from_bytes(cw, ch, &buf[ylen..ylen + clen]),
                v: Plane::from_bytes(cw, ch, &buf[ylen + clen..ylen + 2 * clen]),
            });
        }
        Ok(frames)
    }

    pub fn read_all(&self) -> Result<Vec<FramePlanar>> {
        self.read_frames(0..self.frame_count)
    }
}

/// Write frames in planar order (Y, U, V per frame) after converting to
/// `layout`. `.y4m` destinations get a stream header and FRAME markers;
/// anything else is raw.
pub fn write_frames(
    frames: &[FramePlanar],
    dst: &Path,
    layout: ChromaLayout,
    fps: (u32, u32),
) -> Result<()> {
    let file = File::create(dst).map_err(|e| Error::io(dst, e))?;
    let mut out = BufWriter::new(file);
    let is_y4m = dst
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    if let Some(first) = frames.first() {
        if is_y4m {
            write!(
                out,
                "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 {}\n",
                first.width,
                first.height,
                fps.0,
                fps.1,
                layout.y4m_tag()
            )
            .map_err(|e| Error::io(dst, e))?;
        }
        let mut bytes = Vec::new();
        for frame in frames {
            assert_eq!(
                (frame.width, frame.height),
                (first.width, first.height),
                "write_frames: inconsistent frame dims"
            );
            let converted = match layout {
                ChromaLayout::C420 => frame.to_420()?,
                ChromaLayout::C444 => frame.to_444(),
            };
            if is_y4m {
                out.write_all(b"FRAME\n").map_err(|e| Error::io(dst, e))?;
            }
            bytes.clear();
            converted.y.to_bytes(&mut bytes);
            converted.u.to_bytes(&mut bytes);
            converted.v.to_bytes(&mut bytes);
            out.write_all(&bytes).map_err(|e| Error::io(dst, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(dst, e))
}

/// Cut frames into a deterministic, seed-shuffled set of square 4:4:4
/// patches on a stride grid.
pub fn extract_patches(
    frames: &[FramePlanar],
    patch: usize,
    stride: usize,
    seed: u64,
) -> Result<Vec<FramePlanar>> {
    assert!(patch > 0 && stride > 0, "patch and stride must be positive");
    let mut patches = Vec::new();
    for frame in frames {
        if patch > frame.width || patch > frame.height {
            return Err(Error::Config(format!(
                "patch {patch} larger than frame {}x{}",
                frame.width, frame.height
            )));
        }
        let full = frame.to_444();
        let mut y0 = 0;
        while y0 + patch <= frame.height {
            let mut x0 = 0;
            while x0 + patch <= frame.width {
                let crop = |p: &Plane| {
                    let mut data = Vec::with_capacity(patch * patch);
                    for y in y0..y0 + patch {
                        data.extend_from_slice(&p.data[y * p.width + x0..y * p.width + x0 + patch]);
                    }
                    Plane::new(patch, patch, data)
                };
                patches.push(FramePlanar {
                    width: patch,
                    height: patch,
                    layout: ChromaLayout::C444,
                    y: crop(&full.y),
                    u: crop(&full.u),
                    v: crop(&full.v),
                });
                x0 += stride;
            }
            y0 += stride;
        }
    }
    Rng::new(seed).shuffle(&mut patches);
    Ok(patches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rules() {
        assert_eq!(quantize_u8(0.5), 128); // round(127.5) away from zero
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(1.2), 255); // clamp
        assert_eq!(quantize_u8(-0.1), 0);
        assert_eq!(quantize_u8(0.0), 0);
    }

    #[test]
    fn raw_420_byte_layout() {
        // 2x2 single-frame 4:2:0 file: 4 luma bytes then 1 U and 1 V byte.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.yuv");
        std::fs::write(&path, [10u8, 20, 30, 40, 128, 250]).unwrap();
        let src = SequenceSource::open_raw(&path, 2, 2, ChromaLayout::C420).unwrap();
        assert_eq!(src.frame_count, 1);
        let frames = src.read_all().unwrap();
        let f = &frames[0];
        let want_y: Vec<f32> = [10u8, 20, 30, 40].iter().map(|&b| b as f32 / 255.0).collect();
        assert_eq!(f.y.data, want_y);
        assert_eq!(f.u.data, vec![128.0 / 255.0]);
        assert_eq!(f.v.data, vec![250.0 / 255.0]);
    }

    #[test]
    fn truncated_raw_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.yuv");
        std::fs::write(&path, vec![0u8; 7]).unwrap();
        let err = SequenceSource::open_raw(&path, 2, 2, ChromaLayout::C420).unwrap_err();
        assert!(matches!(err, Error::TruncatedFile { .. }), "{err}");
    }

    #[test]
    fn y4m_header_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.y4m");
        let mut bytes = b"YUV4MPEG2 W64 H32 F30:1 C420\n".to_vec();
        bytes.extend_from_slice(b"FRAME\n");
        bytes.extend(std::iter::repeat(0u8).take(ChromaLayout::C420.frame_bytes(64, 32)));
        std::fs::write(&path, bytes).unwrap();
        let src = SequenceSource::open_y4m(&path).unwrap();
        assert_eq!((src.width, src.height), (64, 32));
        assert_eq!(src.layout, ChromaLayout::C420);
        assert_eq!(src.fps, (30, 1));
        assert_eq!(src.frame_count, 1);
    }

    #[test]
    fn y4m_bad_signature_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.y4m");
        std::fs::write(&path, b"MPEG4YUV W2 H2\n").unwrap();
        assert!(matches!(
            SequenceSource::open_y4m(&path),
            Err(Error::MalformedY4m { .. })
        ));
    }

    #[test]
    fn write_read_roundtrip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (name, layout) in [("a.yuv", ChromaLayout::C420), ("a.y4m", ChromaLayout::C444)] {
            let path = dir.path().join(name);
            let mut rng = Rng::new(9);
            let frames: Vec<FramePlanar> = (0..3)
                .map(|_| {
                    let plane = |w: usize, h: usize, rng: &mut Rng| {
                        Plane::new(
                            w,
                            h,
                            (0..w * h)
                                .map(|_| (rng.next_below(256) as f32) / 255.0)
                                .collect(),
                        )
                    };
                    let (cw, ch) = match layout {
                        ChromaLayout::C444 => (8, 6),
                        ChromaLayout::C420 => (4, 3),
                    };
                    FramePlanar {
                        width: 8,
                        height: 6,
                        layout,
                        y: plane(8, 6, &mut rng),
                        u: plane(cw, ch, &mut rng),
                        v: plane(cw, ch, &mut rng),
                    }
                })
                .collect();
            write_frames(&frames, &path, layout, (30, 1)).unwrap();
            let src = SequenceSource::open(
                &path,
                Some((8, 6, layout)),
            )
            .unwrap();
            let back = src.read_all().unwrap();
            assert_eq!(back.len(), frames.len());
            for (a, b) in frames.iter().zip(&back) {
                assert_eq!(a.y.data, b.y.data, "{name}");
                assert_eq!(a.u.data, b.u.data, "{name}");
                assert_eq!(a.v.data, b.v.data, "{name}");
            }
        }
    }

    #[test]
    fn chroma_degradation_preserves_luma_and_constants() {
        let frame = FramePlanar::constant(8, 8, 0.25, 0.5, 0.75);
        let out = simulate_chroma_degradation(&frame).unwrap();
        assert_eq!(out.y.data, frame.y.data);
        for (&u, &v) in out.u.data.iter().zip(&out.v.data) {
            assert!((u - 0.5).abs() < 1e-5 && (v - 0.75).abs() < 1e-5);
        }
    }

    #[test]
    fn chroma_degradation_shrinks_checkerboard_range() {
        let mut frame = FramePlanar::constant(4, 4, 0.5, 0.0, 0.5);
        for y in 0..4 {
            for x in 0..4 {
                frame.u.data[y * 4 + x] = if (x + y) % 2 == 0 { 1.0 } else { 0.0 };
            }
        }
        let out = simulate_chroma_degradation(&frame).unwrap();
        let max = out.u.data.iter().cloned().fold(f32::MIN, f32::max);
        let min = out.u.data.iter().cloned().fold(f32::MAX, f32::min);
        assert!(max < 1.0 && min > 0.0, "low-pass lost: [{min}, {max}]");
    }

    #[test]
    fn patch_grid_counts() {
        let frame = FramePlanar::constant(256, 256, 0.5, 0.5, 0.5);
        let patches = extract_patches(&[frame.clone()], 64, 64, 1).unwrap();
        assert_eq!(patches.len(), 16);
        let one = extract_patches(&[frame.clone()], 256, 256, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(extract_patches(&[frame], 300, 64, 1).is_err());
    }

    #[test]
    fn patch_order_is_seeded() {
        let mut rng = Rng::new(5);
        let mut frame = FramePlanar::constant(8, 8, 0.0, 0.5, 0.5);
        for v in &mut frame.y.data {
            *v = rng.next_f64() as f32;
        }
        let a = extract_patches(&[frame.clone()], 4, 4, 77).unwrap();
        let b = extract_patches(&[frame.clone()], 4, 4, 77).unwrap();
        let c = extract_patches(&[frame], 4, 4, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
