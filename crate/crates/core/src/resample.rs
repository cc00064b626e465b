//! Separable image resampling: differentiable bilinear downsampling at
//! rational scales, fixed differentiable bicubic (Catmull-Rom) upsampling,
//! and a non-differentiable anti-aliased Lanczos-3 resizer for the baseline
//! rate-distortion hull. All filters use the align-corners=false convention
//! with edge clamping; sampling positions come from the actual output/input
//! dimension ratio after even-floor rounding.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::media::{ChromaLayout, FramePlanar, Plane};
use crate::tensor::{LinearOp, Scalar, Tape, Tensor};

/// Rational downscale ratio, 0 < num/den <= 1 for downsampling use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScaleRatio {
    num: u32,
    den: u32,
}

impl ScaleRatio {
    pub const ONE: ScaleRatio = ScaleRatio { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!(
                "scale ratio {num}/{den} must have positive terms"
            )));
        }
        Ok(ScaleRatio { num, den })
    }

    /// The default evaluation set.
    pub fn eval_set() -> Vec<ScaleRatio> {
        [(2, 3), (1, 2), (2, 5), (1, 3), (1, 4), (1, 5)]
            .iter()
            .map(|&(n, d)| ScaleRatio { num: n, den: d })
            .collect()
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_identity(&self) -> bool {
        self.num == self.den
    }

    /// floor(dim * s) rounded down to even; 4:2:0 encoders need even luma dims.
    pub fn target_dim(&self, dim: usize) -> usize {
        let t = dim * self.num as usize / self.den as usize;
        t & !1
    }

    /// Both target dims, rejecting degenerate outputs.
    pub fn target_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.is_identity() {
            return Ok((h, w));
        }
        let (th, tw) = (self.target_dim(h), self.target_dim(w));
        if th < 2 || tw < 2 {
            return Err(Error::Config(format!(
                "scale {} of {h}x{w} gives target {th}x{tw}; dimensions must be >= 2",
                self
            )));
        }
        Ok((th, tw))
    }
}

impl std::fmt::Display for ScaleRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl std::str::FromStr for ScaleRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("bad scale ratio `{s}`")))
        };
        match s.split_once('/') {
            Some((n, d)) => ScaleRatio::new(parse(n)?, parse(d)?),
            None => ScaleRatio::new(parse(s)?, 1),
        }
    }
}

impl serde::Serialize for ScaleRatio {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for ScaleRatio {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Resampling kernels. Lanczos widens its support when minifying
/// (anti-aliasing); bilinear and bicubic always use their natural support,
/// matching mainstream non-antialiased scalers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    Bilinear,
    CatmullRom,
    Lanczos3,
}

impl FilterKind {
    fn radius(&self) -> f64 {
        match self {
            FilterKind::Bilinear => 1.0,
            FilterKind::CatmullRom => 2.0,
            FilterKind::Lanczos3 => 3.0,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        match self {
            FilterKind::Bilinear => {
                if x < 1.0 {
                    1.0 - x
                } else {
                    0.0
                }
            }
            FilterKind::CatmullRom => {
                // Keys cubic with a = -0.5
                if x < 1.0 {
                    (1.5 * x - 2.5) * x * x + 1.0
                } else if x < 2.0 {
                    ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
                } else {
                    0.0
                }
            }
            FilterKind::Lanczos3 => {
                if x < 3.0 {
                    sinc(x) * sinc(x / 3.0)
                } else {
                    0.0
                }
            }
        }
    }

    fn antialias(&self) -> bool {
        matches!(self, FilterKind::Lanczos3)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Weights of one output sample over a run of clamped input indices.
#[derive(Clone, Debug)]
struct Taps<T> {
    start: usize,
    weights: Vec<T>,
}

fn build_taps<T: Scalar>(in_dim: usize, out_dim: usize, kind: FilterKind) -> Vec<Taps<T>> {
    assert!(in_dim >= 1 && out_dim >= 1);
    let ratio = out_dim as f64 / in_dim as f64;
    // When minifying with an anti-aliased kernel, stretch the kernel by 1/ratio.
    let (scale, radius) = if kind.antialias() && ratio < 1.0 {
        (ratio, kind.radius() / ratio)
    } else {
        (1.0, kind.radius())
    };
    (0..out_dim)
        .map(|o| {
            let src = (o as f64 + 0.5) / ratio - 0.5;
            let lo = (src - radius).ceil() as isize;
            let hi = (src + radius).floor() as isize;
            let mut weights: Vec<f64> = (lo..=hi).map(|i| kind.eval((src - i as f64) * scale)).collect();
            // Normalize so every output pixel's taps sum to exactly 1 (DC
            // preservation; also what makes windowed sinc usable for minify).
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            // Clamp indices at the edges; merging duplicate clamped taps is
            // unnecessary since weights just accumulate on apply.
            let start = lo.clamp(0, in_dim as isize - 1) as usize;
            let mut clamped = vec![T::ZERO; (hi.clamp(0, in_dim as isize - 1) as usize) - start + 1];
            for (j, i) in (lo..=hi).enumerate() {
                let ci = i.clamp(0, in_dim as isize - 1) as usize;
                let slot = ci - start;
                clamped[slot] = clamped[slot] + T::from_f64(weights[j]);
            }
            Taps {
                start,
                weights: clamped,
            }
        })
        .collect()
}

/// Precomputed separable resampling plan; a linear operator on planes whose
/// transpose is the exact backward pass.
pub struct ResamplePlan<T> {
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    rows: Vec<Taps<T>>,
    cols: Vec<Taps<T>>,
}

impl<T: Scalar> ResamplePlan<T> {
    pub fn build(in_h: usize, in_w: usize, out_h: usize, out_w: usize, kind: FilterKind) -> Self {
        ResamplePlan {
            in_h,
            in_w,
            out_h,
            out_w,
            rows: build_taps(in_h, out_h, kind),
            cols: build_taps(in_w, out_w, kind),
        }
    }
}

impl<T: Scalar> LinearOp<T> for ResamplePlan<T> {
    fn in_dims(&self) -> (usize, usize) {
        (self.in_h, self.in_w)
    }

    fn out_dims(&self) -> (usize, usize) {
        (self.out_h, self.out_w)
    }

    fn apply(&self, plane: &[T]) -> Vec<T> {
        debug_assert_eq!(plane.len(), self.in_h * self.in_w);
        // horizontal, then vertical
        let mut tmp = vec![T::ZERO; self.in_h * self.out_w];
        for y in 0..self.in_h {
            let row = &plane[y * self.in_w..(y + 1) * self.in_w];
            let out_row = &mut tmp[y * self.out_w..(y + 1) * self.out_w];
            for (ox, taps) in self.cols.iter().enumerate() {
                let mut acc = T::ZERO;
                for (j, &w) in taps.weights.iter().enumerate() {
                    acc += w * row[taps.start + j];
                }
                out_row[ox] = acc;
            }
        }
        let mut out = vec![T::ZERO; self.out_h * self.out_w];
        for (oy, taps) in self.rows.iter().enumerate() {
            let out_row = &mut out[oy * self.out_w..(oy + 1) * self.out_w];
            for (j, &w) in taps.weights.iter().enumerate() {
                let src_row = &tmp[(taps.start + j) * self.out_w..(taps.start + j + 1) * self.out_w];
                for (o, &s) in out_row.iter_mut().zip(src_row) {
                    *o += w * s;
                }
            }
        }
        out
    }

    fn transpose(&self, cotangent: &[T]) -> Vec<T> {
        debug_assert_eq!(cotangent.len(), self.out_h * self.out_w);
        // transpose of (rows ∘ cols) is colsᵀ ∘ rowsᵀ
        let mut tmp = vec![T::ZERO; self.in_h * self.out_w];
        for (oy, taps) in self.rows.iter().enumerate() {
            let g_row = &cotangent[oy * self.out_w..(oy + 1) * self.out_w];
            for (j, &w) in taps.weights.iter().enumerate() {
                let dst = &mut tmp[(taps.start + j) * self.out_w..(taps.start + j + 1) * self.out_w];
                for (d, &g) in dst.iter_mut().zip(g_row) {
                    *d += w * g;
                }
            }
        }
        let mut out = vec![T::ZERO; self.in_h * self.in_w];
        for y in 0..self.in_h {
            let g_row = &tmp[y * self.out_w..(y + 1) * self.out_w];
            let dst = &mut out[y * self.in_w..(y + 1) * self.in_w];
            for (ox, taps) in self.cols.iter().enumerate() {
                let g = g_row[ox];
                for (j, &w) in taps.weights.iter().enumerate() {
                    dst[taps.start + j] += w * g;
                }
            }
        }
        out
    }
}

/// Resize a raw plane outside the tape.
pub fn resize_plane(
    data: &[f32],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    kind: FilterKind,
) -> Vec<f32> {
    if (in_h, in_w) == (out_h, out_w) && kind != FilterKind::Lanczos3 {
        return data.to_vec();
    }
    ResamplePlan::<f32>::build(in_h, in_w, out_h, out_w, kind).apply(data)
}

/// Differentiable bilinear downsampling to the even-floor target of `s`.
pub fn bilinear_downsample<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, s: ScaleRatio) -> Tensor<T> {
    let (_, _, h, w) = x.shape().nchw();
    let (th, tw) = s
        .target_dims(h, w)
        .unwrap_or_else(|e| panic!("bilinear_downsample: {e}"));
    if (th, tw) == (h, w) {
        // still a tape node so callers can rely on tracking
        return tape.scale(x, T::ONE);
    }
    let plan = ResamplePlan::<T>::build(h, w, th, tw, FilterKind::Bilinear);
    tape.linear(x, Arc::new(plan))
}

/// Differentiable bicubic (Catmull-Rom) upsampling to explicit target dims.
pub fn bicubic_upsample<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    target_h: usize,
    target_w: usize,
) -> Tensor<T> {
    let (_, _, h, w) = x.shape().nchw();
    assert!(
        target_h >= h && target_w >= w,
        "bicubic_upsample: target {target_h}x{target_w} smaller than source {h}x{w}"
    );
    let plan = ResamplePlan::<T>::build(h, w, target_h, target_w, FilterKind::CatmullRom);
    tape.linear(x, Arc::new(plan))
}

/// Resize a whole frame with the given kernel, keeping its chroma layout.
/// Luma goes to the even-floor target; 4:2:0 chroma tracks at half dims.
pub fn resize_frame(frame: &FramePlanar, s: ScaleRatio, kind: FilterKind) -> Result<FramePlanar> {
    let (th, tw) = s.target_dims(frame.height, frame.width)?;
    if s.is_identity() && kind != FilterKind::Lanczos3 {
        return Ok(frame.clone());
    }
    let resize = |p: &Plane, oh: usize, ow: usize| Plane {
        width: ow,
        height: oh,
        data: resize_plane(&p.data, p.height, p.width, oh, ow, kind),
    };
    let (ch, cw) = match frame.layout {
        ChromaLayout::C444 => (th, tw),
        ChromaLayout::C420 => (th / 2, tw / 2),
    };
    Ok(FramePlanar {
        width: tw,
        height: th,
        layout: frame.layout,
        y: resize(&frame.y, th, tw),
        u: resize(&frame.u, ch, cw),
        v: resize(&frame.v, ch, cw),
    })
}

/// The non-learned baseline resizer for the reference hull.
pub fn lanczos_resize(frame: &FramePlanar, s: ScaleRatio) -> Result<FramePlanar> {
    resize_frame(frame, s, FilterKind::Lanczos3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn tensor_from(data: Vec<f64>, h: usize, w: usize) -> (Tape<f64>, Tensor<f64>) {
        let tape = Tape::new();
        let t = tape.leaf(data, Shape::new(vec![1, 1, h, w]));
        (tape, t)
    }

    #[test]
    fn even_floor_targets() {
        let cases = [
            ((2u32, 3u32), 64usize, 42usize),
            ((1, 2), 64, 32),
            ((2, 5), 64, 24),
            ((1, 3), 64, 20),
            ((1, 4), 64, 16),
            ((1, 5), 64, 12),
            ((2, 3), 1080, 720),
            ((2, 5), 1080, 432),
            ((1, 4), 1080, 270),
        ];
        for ((n, d), dim, want) in cases {
            let s = ScaleRatio::new(n, d).unwrap();
            assert_eq!(s.target_dim(dim), want, "{n}/{d} of {dim}");
        }
    }

    #[test]
    fn scale_one_is_identity() {
        let (tape, x) = tensor_from(vec![0.1, 0.7, 0.3, 0.9], 2, 2);
        let y = bilinear_downsample(&tape, &x, ScaleRatio::ONE);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn bilinear_half_on_ramp_matches_hand_values() {
        // 4x4 ramp, s = 1/2 under align-corners=false: each output is the
        // mean of its 2x2 block.
        let ramp: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let (tape, x) = tensor_from(ramp, 4, 4);
        let y = bilinear_downsample(&tape, &x, ScaleRatio::new(1, 2).unwrap());
        let want = [
            (0.0 + 1.0 + 4.0 + 5.0) / 4.0,
            (2.0 + 3.0 + 6.0 + 7.0) / 4.0,
            (8.0 + 9.0 + 12.0 + 13.0) / 4.0,
            (10.0 + 11.0 + 14.0 + 15.0) / 4.0,
        ];
        for (got, want) in y.data().iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn constants_are_preserved() {
        for s in ScaleRatio::eval_set() {
            let data = vec![0.42f64; 24 * 24];
            let (tape, x) = tensor_from(data, 24, 24);
            let y = bilinear_downsample(&tape, &x, s);
            for &v in y.data() {
                assert!((v - 0.42).abs() < 1e-5, "bilinear s={s}: {v}");
            }
            let up = bicubic_upsample(&tape, &y, 24, 24);
            for &v in up.data() {
                assert!((v - 0.42).abs() < 1e-5, "bicubic s={s}: {v}");
            }
        }
    }

    #[test]
    fn bicubic_identity_when_target_equals_source() {
        let data: Vec<f64> = (0..36).map(|v| (v as f64) / 36.0).collect();
        let (tape, x) = tensor_from(data.clone(), 6, 6);
        let y = bicubic_upsample(&tape, &x, 6, 6);
        assert_eq!(y.data(), &data[..]);
    }

    #[test]
    fn bicubic_2x_matches_direct_kernel_sum() {
        // scalar reference: same kernel, same align-corners=false mapping
        let data = vec![0.0, 1.0, 0.5, 0.25];
        let (tape, x) = tensor_from(data.clone(), 2, 2);
        let up = bicubic_upsample(&tape, &x, 4, 4);
        let kernel = |x: f64| FilterKind::CatmullRom.eval(x);
        let sample = |src: f64, line: &[f64]| -> f64 {
            let lo = (src - 2.0).ceil() as isize;
            let hi = (src + 2.0).floor() as isize;
            (lo..=hi)
                .map(|i| {
                    let ci = i.clamp(0, line.len() as isize - 1) as usize;
                    kernel(src - i as f64) * line[ci]
                })
                .sum()
        };
        for oy in 0..4 {
            for ox in 0..4 {
                let sy = (oy as f64 + 0.5) / 2.0 - 0.5;
                let sx = (ox as f64 + 0.5) / 2.0 - 0.5;
                // separable: sample rows at sx, then the column at sy
                let r0 = sample(sx, &data[0..2]);
                let r1 = sample(sx, &data[2..4]);
                let want = sample(sy, &[r0, r1]);
                let got = up.data()[oy * 4 + ox];
                assert!((got - want).abs() < 1e-12, "({oy},{ox}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn lanczos_identity_and_impulse() {
        let mut data = vec![0.0f32; 9 * 9];
        data[4 * 9 + 4] = 1.0;
        let out = resize_plane(&data, 9, 9, 9, 9, FilterKind::Lanczos3);
        for (i, (&a, &b)) in data.iter().zip(&out).enumerate() {
            assert!((a - b).abs() < 1e-6, "idx {i}: {a} vs {b}");
        }
    }

    #[test]
    fn lanczos_impulse_taps_match_kernel_table() {
        // Minify rows only: 12 -> 6, impulse at input index 5. Output o reads
        // src = (o + 0.5)*2 - 0.5 with the kernel stretched by 2 and
        // normalized; compare against directly evaluated taps.
        let mut line = vec![0.0f32; 12];
        line[5] = 1.0;
        let out = resize_plane(&line, 1, 12, 1, 6, FilterKind::Lanczos3);
        for o in 0..6 {
            let src = (o as f64 + 0.5) * 2.0 - 0.5;
            let lo = (src - 6.0).ceil() as isize;
            let hi = (src + 6.0).floor() as isize;
            let ws: Vec<f64> = (lo..=hi)
                .map(|i| FilterKind::Lanczos3.eval((src - i as f64) * 0.5))
                .collect();
            let sum: f64 = ws.iter().sum();
            let mut want = 0.0;
            for (j, i) in (lo..=hi).enumerate() {
                if i.clamp(0, 11) == 5 {
                    want += ws[j] / sum;
                }
            }
            assert!(
                (out[o] as f64 - want).abs() < 1e-6,
                "o={o}: {} vs {want}",
                out[o]
            );
        }
    }

    #[test]
    fn downsample_gradient_is_transpose() {
        // For a linear operator, <A x, g> == <x, A^T g> for all x, g.
        let mut rng = crate::rng::Rng::new(11);
        let plan = ResamplePlan::<f64>::build(8, 6, 4, 2, FilterKind::Bilinear);
        let x: Vec<f64> = (0..48).map(|_| rng.next_f64()).collect();
        let g: Vec<f64> = (0..8).map(|_| rng.next_f64()).collect();
        let ax = plan.apply(&x);
        let atg = plan.transpose(&g);
        let lhs: f64 = ax.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&atg).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn scale_ratio_parses() {
        let s: ScaleRatio = "2/5".parse().unwrap();
        assert_eq!((s.num(), s.den()), (2, 5));
        assert_eq!(s.to_string(), "2/5");
        assert!("0/2".parse::<ScaleRatio>().is_err());
        let one: ScaleRatio = "1".parse().unwrap();
        assert!(one.is_identity());
    }
}
