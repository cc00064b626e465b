//! Differentiable rate estimate: blockwise DCT, a smooth ℓ0 surrogate on the
//! coefficients, and an affine bits mapping calibrated against the true
//! codec. The estimate is luma-only; chroma's roughly affine share is
//! absorbed by the offset term.

use std::sync::Arc;

use crate::codec::{encode_decode, CodecConfig};
use crate::dct::{dct_block, idct_block, pad_replicate, read_block, write_block, BLOCK};
use crate::error::{Error, Result};
use crate::media::{FramePlanar, Plane};
use crate::tensor::{LinearOp, Scalar, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateProxyParams {
    /// Softness scale of the ℓ0 surrogate, in [0,1] signal units.
    pub tau: f64,
    /// Bits per unit of soft count.
    pub a: f64,
    /// Bits offset.
    pub b: f64,
}

impl Default for RateProxyParams {
    fn default() -> Self {
        // tau ≈ one 8-bit quantization step at mid quantizers
        RateProxyParams {
            tau: 0.02,
            a: 1.0,
            b: 0.0,
        }
    }
}

impl RateProxyParams {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("rate proxy tau must be > 0, got {}", self.tau)));
        }
        if self.a < 0.0 {
            return Err(Error::Config(format!("rate proxy slope must be >= 0, got {}", self.a)));
        }
        Ok(())
    }
}

/// Orthonormal blockwise 8x8 DCT as a plane-linear tape operator; inputs are
/// edge-replicated up to block multiples, and the transpose folds the
/// replicated cotangents back onto the edge pixels.
pub struct BlockDctOp {
    h: usize,
    w: usize,
    ph: usize,
    pw: usize,
}

impl BlockDctOp {
    pub fn new(h: usize, w: usize) -> Self {
        let (ph, pw) = crate::dct::padded_dims(h, w);
        BlockDctOp { h, w, ph, pw }
    }
}

impl<T: Scalar> LinearOp<T> for BlockDctOp {
    fn in_dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    fn out_dims(&self) -> (usize, usize) {
        (self.ph, self.pw)
    }

    fn apply(&self, plane: &[T]) -> Vec<T> {
        let as_f64: Vec<f64> = plane.iter().map(|v| v.to_f64()).collect();
        let (padded, ph, pw) = pad_replicate(&as_f64, self.h, self.w);
        let mut out = vec![0.0f64; ph * pw];
        for by in 0..ph / BLOCK {
            for bx in 0..pw / BLOCK {
                let block = read_block(&padded, pw, by, bx);
                write_block(&mut out, pw, by, bx, &dct_block(&block));
            }
        }
        out.into_iter().map(T::from_f64).collect()
    }

    fn transpose(&self, cotangent: &[T]) -> Vec<T> {
        let g: Vec<f64> = cotangent.iter().map(|v| v.to_f64()).collect();
        let mut padded = vec![0.0f64; self.ph * self.pw];
        for by in 0..self.ph / BLOCK {
            for bx in 0..self.pw / BLOCK {
                let block = read_block(&g, self.pw, by, bx);
                write_block(&mut padded, self.pw, by, bx, &idct_block(&block));
            }
        }
        // fold the replicate-pad: every padded cell contributes to its source
        let mut out = vec![0.0f64; self.h * self.w];
        for py in 0..self.ph {
            let sy = py.min(self.h - 1);
            for px in 0..self.pw {
                let sx = px.min(self.w - 1);
                out[sy * self.w + sx] += padded[py * self.pw + px];
            }
        }
        out.into_iter().map(T::from_f64).collect()
    }
}

/// Blockwise 2-D DCT of every (n, c) plane; output dims are padded up to
/// multiples of 8.
pub fn block_dct2d<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>) -> Tensor<T> {
    let (_, _, h, w) = x.shape().nchw();
    tape.linear(x, Arc::new(BlockDctOp::new(h, w)))
}

/// R̂ = a · soft_l0(dct(luma(y)), τ) + b, averaged per frame over the batch.
/// Differentiable w.r.t. y; `y` is the downsampler output (pre-codec), where
/// gradients exist by construction.
pub fn rate_estimate<T: Scalar>(tape: &Tape<T>, y: &Tensor<T>, p: &RateProxyParams) -> Tensor<T> {
    let (n, c, h, w) = y.shape().nchw();
    let luma = if c == 1 {
        y.clone()
    } else {
        let parts: Vec<Tensor<T>> = (0..n)
            .map(|i| tape.slice(y, i * c * h * w, h * w, vec![1, 1, h, w]))
            .collect();
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        tape.concat(&refs, vec![n, 1, h, w])
    };
    let coeffs = block_dct2d(tape, &luma);
    let count = tape.soft_l0(&coeffs, T::from_f64(p.tau));
    let per_frame = tape.scale(&count, T::from_f64(p.a / n as f64));
    tape.offset(&per_frame, T::from_f64(p.b))
}

/// Soft count of one plane outside the tape (calibration path).
pub fn soft_l0_plane(plane: &Plane, tau: f64) -> f64 {
    let as_f64: Vec<f64> = plane.data.iter().map(|&v| v as f64).collect();
    let (padded, ph, pw) = pad_replicate(&as_f64, plane.height, plane.width);
    let t2 = tau * tau;
    let mut acc = 0.0;
    for by in 0..ph / BLOCK {
        for bx in 0..pw / BLOCK {
            let block = read_block(&padded, pw, by, bx);
            for c in dct_block(&block) {
                acc += c * c / (c * c + t2);
            }
        }
    }
    acc
}

/// Ordinary least squares of y ≈ a·x + b with the Pearson correlation of the
/// fit inputs. Errors out when the predictor is (numerically) constant.
pub fn fit_affine(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= 1e-12 * n {
        return Err(Error::DegenerateFit {
            detail: "all soft-l0 values are equal".into(),
        });
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let pearson = if syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx.sqrt() * syy.sqrt())
    };
    Ok((a, b, pearson))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    fit_affine(xs, ys).map(|(_, _, r)| r).unwrap_or(0.0)
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub params: RateProxyParams,
    pub pearson: f64,
    pub spearman: f64,
    pub samples: usize,
}

/// Least-squares fit of true codec bits against soft-l0 counts over a grid of
/// frames × quantizer values. The spread across quantizers is required: a
/// single-q calibration set is rejected as rank-deficient in the quantity the
/// proxy will be asked to track during training.
pub fn calibrate(
    frames: &[FramePlanar],
    base: &CodecConfig,
    qs: &[f64],
    tau: f64,
) -> Result<CalibrationReport> {
    let mut distinct = qs.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit {
            detail: format!(
                "calibration needs >= 3 distinct quantizer values, got {}",
                distinct.len()
            ),
        });
    }
    if frames.len() * distinct.len() < 8 {
        return Err(Error::DegenerateFit {
            detail: format!(
                "calibration needs >= 8 samples, got {} frames x {} quantizers",
                frames.len(),
                distinct.len()
            ),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for frame in frames {
        let soft = soft_l0_plane(&frame.y, tau);
        for &q in &distinct {
            let cfg = base.with_settings(base.settings.with_q(q));
            let result = encode_decode(std::slice::from_ref(frame), &cfg)?;
            xs.push(soft);
            ys.push(result.bits as f64);
        }
    }
    let (a, b, pearson_r) = fit_affine(&xs, &ys)?;
    if a < 0.0 {
        return Err(Error::DegenerateFit {
            detail: format!("negative bits-per-count slope {a:.3}"),
        });
    }
    let params = RateProxyParams { tau, a, b };
    params.validate()?;
    Ok(CalibrationReport {
        params,
        pearson: pearson_r,
        spearman: spearman(&xs, &ys),
        samples: xs.len(),
    })
}
