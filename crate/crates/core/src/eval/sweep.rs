//! One rate-distortion operating point: downsample with the filter under
//! test, run the codec round trip, upsample back with the fixed bicubic
//! client upsampler, and measure rate and quality against the source.

use crate::codec::{encode_decode, CodecConfig};
use crate::error::Result;
use crate::eval::metrics::{mse_plane, ssim, PSNR_CAP};
use crate::media::{ChromaLayout, FramePlanar, Plane};
use crate::model::{forward_infer, ModelParams};
use crate::resample::{resize_frame, resize_plane, FilterKind, ScaleRatio};

/// One operating point of the sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RDPoint {
    pub scale: ScaleRatio,
    /// Quantizer knob: QP for the external backend, qstep for the toy one.
    pub q: f64,
    pub rate_bpp: f64,
    pub psnr_y: f64,
    pub psnr_weighted: f64,
    pub ssim_y: f64,
    pub bits: u64,
    pub frames: usize,
}

/// The downsampler under test at one grid point.
pub enum PointFilter<'a> {
    Fixed(FilterKind),
    Learned(&'a ModelParams<f32>),
}

fn upsample_to(frame: &FramePlanar, width: usize, height: usize) -> FramePlanar {
    let full = frame.to_444();
    let up = |p: &Plane| {
        Plane::new(
            width,
            height,
            resize_plane(&p.data, p.height, p.width, height, width, FilterKind::CatmullRom),
        )
    };
    FramePlanar {
        width,
        height,
        layout: ChromaLayout::C444,
        y: up(&full.y),
        u: up(&full.u),
        v: up(&full.v),
    }
}

/// Downsample -> encode/decode -> upsample -> metrics. The codec config
/// carries the quantizer for this point; sequence PSNR averages per-plane
/// MSEs across frames before the log, SSIM averages per-frame scores.
pub fn evaluate_point(
    source: &[FramePlanar],
    filter: &PointFilter,
    scale: ScaleRatio,
    codec: &CodecConfig,
) -> Result<RDPoint> {
    assert!(!source.is_empty(), "evaluate_point needs at least one frame");
    let src_layout = source[0].layout;

    // Downsample, then normalize to the source chroma layout so both the
    // learned and fixed paths feed the codec identically.
    let mut down = Vec::with_capacity(source.len());
    for frame in source {
        let d = match filter {
            PointFilter::Fixed(kind) => resize_frame(frame, scale, *kind)?,
            PointFilter::Learned(params) => forward_infer(params, &frame.to_444(), scale),
        };
        down.push(match src_layout {
            ChromaLayout::C420 => d.to_420()?,
            ChromaLayout::C444 => d.to_444(),
        });
    }

    let coded = encode_decode(&down, codec)?;

    let (src_w, src_h) = (source[0].width, source[0].height);
    let mut mse_y = 0.0;
    let mut mse_u = 0.0;
    let mut mse_v = 0.0;
    let mut ssim_acc = 0.0;
    for (src, rec) in source.iter().zip(&coded.recon) {
        let up = upsample_to(rec, src_w, src_h);
        let up_native = match src_layout {
            ChromaLayout::C420 => up.to_420()?,
            ChromaLayout::C444 => up,
        };
        mse_y += mse_plane(&src.y, &up_native.y);
        mse_u += mse_plane(&src.u, &up_native.u);
        mse_v += mse_plane(&src.v, &up_native.v);
        ssim_acc += ssim(src, &up_native)?;
    }
    let n = source.len() as f64;
    let to_db = |mse: f64| {
        if mse <= 0.0 {
            PSNR_CAP
        } else {
            (-10.0 * mse.log10()).min(PSNR_CAP)
        }
    };
    Ok(RDPoint {
        scale,
        q: codec.settings.q(),
        rate_bpp: coded.bits as f64 / (src_w as f64 * src_h as f64 * n),
        psnr_y: to_db(mse_y / n),
        psnr_weighted: to_db((6.0 * mse_y + mse_u + mse_v) / (8.0 * n)),
        ssim_y: ssim_acc / n,
        bits: coded.bits,
        frames: source.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecSettings;
    use crate::synth::synth_sequence;

    #[test]
    fn rate_drops_as_quantizer_coarsens() {
        let frames = synth_sequence(3, 48, 48, 2);
        let cfg = CodecConfig::toy(0.02);
        let mut last_rate = f64::INFINITY;
        let mut last_psnr = f64::INFINITY;
        for q in [0.02, 0.08, 0.32] {
            let point = evaluate_point(
                &frames,
                &PointFilter::Fixed(FilterKind::Lanczos3),
                ScaleRatio::new(1, 2).unwrap(),
                &cfg.with_settings(CodecSettings::Toy { qstep: q }),
            )
            .unwrap();
            assert!(point.rate_bpp < last_rate, "q {q}: rate {}", point.rate_bpp);
            assert!(point.psnr_y < last_psnr, "q {q}: psnr {}", point.psnr_y);
            last_rate = point.rate_bpp;
            last_psnr = point.psnr_y;
            assert!(point.rate_bpp > 0.0);
            assert!(point.ssim_y > 0.0 && point.ssim_y <= 1.0);
        }
    }

    #[test]
    fn identity_scale_beats_downscaling_at_fine_quantization() {
        let frames = synth_sequence(5, 48, 48, 1);
        let cfg = CodecConfig::toy(0.01);
        let full = evaluate_point(
            &frames,
            &PointFilter::Fixed(FilterKind::Lanczos3),
            ScaleRatio::ONE,
            &cfg,
        )
        .unwrap();
        let half = evaluate_point(
            &frames,
            &PointFilter::Fixed(FilterKind::Lanczos3),
            ScaleRatio::new(1, 2).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!(
            full.psnr_y > half.psnr_y,
            "{} vs {}",
            full.psnr_y,
            half.psnr_y
        );
    }

    #[test]
    fn deterministic_points() {
        let frames = synth_sequence(9, 32, 32, 1);
        let cfg = CodecConfig::toy(0.05);
        let s = ScaleRatio::new(1, 2).unwrap();
        let a = evaluate_point(&frames, &PointFilter::Fixed(FilterKind::Bilinear), s, &cfg).unwrap();
        let b = evaluate_point(&frames, &PointFilter::Fixed(FilterKind::Bilinear), s, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
