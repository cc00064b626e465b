//! Built-in deterministic toy codec for hermetic testing: per plane, inputs
//! snap to the 8-bit grid, 8x8 orthonormal DCT, uniform quantization,
//! dequantize, inverse DCT, clamp, snap back to the 8-bit grid. Bits are an
//! exact zigzag run-length code-length count (signed exp-Golomb for levels,
//! unsigned for runs, one end-of-block bit); no decodable stream is produced
//! because none is needed.

use crate::dct::{dct_block, idct_block, pad_replicate, read_block, write_block, BLOCK};
use crate::error::{Error, Result};
use crate::media::{quantize_u8, FramePlanar, Plane};

use super::CodecResult;

/// Round half away from zero, matching `f64::round`.
fn quantize_level(c: f64, qstep: f64) -> i64 {
    (c / qstep).round() as i64
}

fn zigzag_order() -> [usize; 64] {
    // walk anti-diagonals, alternating direction
    let mut order = [0usize; 64];
    let mut idx = 0;
    for s in 0..(2 * BLOCK - 1) {
        let cells: Vec<(usize, usize)> = (0..=s.min(BLOCK - 1))
            .filter_map(|i| {
                let (y, x) = (i, s - i);
                (x < BLOCK).then_some((y, x))
            })
            .collect();
        let iter: Box<dyn Iterator<Item = &(usize, usize)>> = if s % 2 == 0 {
            Box::new(cells.iter().rev())
        } else {
            Box::new(cells.iter())
        };
        for &(y, x) in iter {
            order[idx] = y * BLOCK + x;
            idx += 1;
        }
    }
    order
}

fn zigzag() -> &'static [usize; 64] {
    use std::sync::OnceLock;
    static Z: OnceLock<[usize; 64]> = OnceLock::new();
    Z.get_or_init(zigzag_order)
}

/// Length in bits of the unsigned exp-Golomb code for k.
fn ue_len(k: u64) -> u64 {
    2 * (64 - (k + 1).leading_zeros() as u64 - 1) + 1
}

/// Length in bits of the signed exp-Golomb code for v.
fn se_len(v: i64) -> u64 {
    let mapped = if v > 0 { 2 * v as u64 - 1 } else { (-2 * v) as u64 };
    ue_len(mapped)
}

/// Code length of one quantized block: DC level, then (zero-run, level)
/// pairs over the zigzag scan of the AC coefficients, then one EOB bit.
fn block_bits(levels: &[i64; 64]) -> u64 {
    let z = zigzag();
    let mut bits = se_len(levels[0]);
    let mut run = 0u64;
    for &pos in z.iter().skip(1) {
        let level = levels[pos];
        if level == 0 {
            run += 1;
        } else {
            bits += ue_len(run) + se_len(level);
            run = 0;
        }
    }
    bits + 1
}

pub(crate) struct PlaneCode {
    /// Quantized levels per block, kept for inspection in tests.
    #[cfg_attr(not(test), allow(dead_code))]
    pub levels: Vec<[i64; 64]>,
    pub bits: u64,
    pub recon: Plane,
}

/// Full round trip for one plane. Returns the quantized levels so tests can
/// inspect which coefficients survived.
pub(crate) fn code_plane(plane: &Plane, qstep: f64) -> PlaneCode {
    let snapped: Vec<f64> = plane
        .data
        .iter()
        .map(|&v| quantize_u8(v) as f64 / 255.0)
        .collect();
    let (padded, ph, pw) = pad_replicate(&snapped, plane.height, plane.width);
    let mut recon_padded = vec![0.0f64; ph * pw];
    let mut levels = Vec::with_capacity((ph / BLOCK) * (pw / BLOCK));
    let mut bits = 0u64;
    for by in 0..ph / BLOCK {
        for bx in 0..pw / BLOCK {
            let block = read_block(&padded, pw, by, bx);
            let coeffs = dct_block(&block);
            let mut q = [0i64; 64];
            let mut deq = [0.0f64; 64];
            for i in 0..64 {
                q[i] = quantize_level(coeffs[i], qstep);
                deq[i] = q[i] as f64 * qstep;
            }
            bits += block_bits(&q);
            let back = idct_block(&deq);
            write_block(&mut recon_padded, pw, by, bx, &back);
            levels.push(q);
        }
    }
    let mut recon = Vec::with_capacity(plane.width * plane.height);
    for y in 0..plane.height {
        for x in 0..plane.width {
            let v = recon_padded[y * pw + x].clamp(0.0, 1.0) as f32;
            recon.push(quantize_u8(v) as f32 / 255.0);
        }
    }
    PlaneCode {
        levels,
        bits,
        recon: Plane::new(plane.width, plane.height, recon),
    }
}

/// In-process encode/decode round trip over all planes of all frames.
pub fn encode_decode(frames: &[FramePlanar], qstep: f64) -> Result<CodecResult> {
    if qstep <= 0.0 {
        return Err(Error::Config(format!("toy codec qstep must be > 0, got {qstep}")));
    }
    let mut recon = Vec::with_capacity(frames.len());
    let mut bits = 0u64;
    for frame in frames {
        let y = code_plane(&frame.y, qstep);
        let u = code_plane(&frame.u, qstep);
        let v = code_plane(&frame.v, qstep);
        bits += y.bits + u.bits + v.bits;
        recon.push(FramePlanar {
            width: frame.width,
            height: frame.height,
            layout: frame.layout,
            y: y.recon,
            u: u.recon,
            v: v.recon,
        });
    }
    Ok(CodecResult {
        recon,
        bits,
        metadata: format!("toy-dct qstep={qstep}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::psnr_plane;
    use crate::synth::synth_frame;

    #[test]
    fn zigzag_is_a_permutation_with_known_prefix() {
        let z = zigzag();
        let mut seen = [false; 64];
        for &p in z.iter() {
            assert!(!seen[p]);
            seen[p] = true;
        }
        // first entries of the classic scan: (0,0) (0,1) (1,0) (2,0) (1,1) (0,2)
        assert_eq!(&z[..6], &[0, 1, 8, 16, 9, 2]);
    }

    #[test]
    fn exp_golomb_lengths() {
        assert_eq!(ue_len(0), 1);
        assert_eq!(ue_len(1), 3);
        assert_eq!(ue_len(2), 3);
        assert_eq!(ue_len(3), 5);
        assert_eq!(se_len(0), 1);
        assert_eq!(se_len(1), 3); // maps to 1
        assert_eq!(se_len(-1), 3); // maps to 2
    }

    #[test]
    fn constant_frame_keeps_only_dc() {
        let frame = FramePlanar::constant(16, 16, 0.5, 0.5, 0.5);
        let code = code_plane(&frame.y, 0.5);
        for block in &code.levels {
            // snapped 0.5 -> 128/255; DC = 8 * value, level = round(DC / 0.5)
            let want_dc = (8.0 * (128.0 / 255.0) / 0.5_f64).round() as i64;
            assert_eq!(block[0], want_dc);
            assert!(block[1..].iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn huge_qstep_zeroes_everything_at_minimal_cost() {
        let frame = synth_frame(3, 16, 16, 0);
        let code = code_plane(&frame.y, 1e6);
        for block in &code.levels {
            assert!(block.iter().all(|&l| l == 0));
        }
        // 4 blocks, 2 bits each: se(0) for DC plus the EOB bit
        assert_eq!(code.bits, 4 * 2);
        // recon is the quantized value of zero-dequantized blocks: all zeros
        assert!(code.recon.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn near_lossless_at_tiny_qstep() {
        let frame = synth_frame(1, 32, 32, 0);
        let out = encode_decode(&[frame.clone()], 0.001).unwrap();
        let p = psnr_plane(&frame.y, &out.recon[0].y);
        assert!(p > 55.0, "psnr {p}");
    }

    #[test]
    fn lossless_on_grid_inputs_with_fine_qstep() {
        // 8-bit representable input plus qstep below half an 8-bit step:
        // the round trip must return the input bit-exactly.
        let mut frame = synth_frame(2, 16, 16, 0);
        for plane in [&mut frame.y, &mut frame.u, &mut frame.v] {
            for v in &mut plane.data {
                *v = quantize_u8(*v) as f32 / 255.0;
            }
        }
        let out = encode_decode(&[frame.clone()], 0.4 / 255.0).unwrap();
        assert_eq!(out.recon[0].y.data, frame.y.data);
        assert_eq!(out.recon[0].u.data, frame.u.data);
        assert_eq!(out.recon[0].v.data, frame.v.data);
    }

    #[test]
    fn bits_decrease_with_coarser_quantization() {
        let frame = synth_frame(7, 32, 32, 0);
        let fine = encode_decode(&[frame.clone()], 0.5).unwrap();
        let coarse = encode_decode(&[frame], 2.0).unwrap();
        assert!(fine.bits >= coarse.bits, "{} vs {}", fine.bits, coarse.bits);
    }

    #[test]
    fn psnr_degrades_monotonically_with_qstep() {
        let frame = synth_frame(9, 32, 32, 0);
        let mut last = f64::INFINITY;
        for qstep in [0.25, 1.0, 4.0, 16.0] {
            let out = encode_decode(&[frame.clone()], qstep).unwrap();
            let p = psnr_plane(&frame.y, &out.recon[0].y);
            assert!(p <= last, "qstep {qstep}: psnr {p} > {last}");
            last = p;
        }
    }

    #[test]
    fn deterministic_round_trips() {
        let frame = synth_frame(11, 24, 24, 0);
        let a = encode_decode(&[frame.clone()], 0.05).unwrap();
        let b = encode_decode(&[frame], 0.05).unwrap();
        assert_eq!(a.bits, b.bits);
        for (fa, fb) in a.recon.iter().zip(&b.recon) {
            assert_eq!(fa.y.data, fb.y.data);
            assert_eq!(fa.u.data, fb.u.data);
            assert_eq!(fa.v.data, fb.v.data);
        }
    }

    #[test]
    fn rejects_nonpositive_qstep() {
        let frame = FramePlanar::constant(8, 8, 0.5, 0.5, 0.5);
        assert!(encode_decode(&[frame], 0.0).is_err());
    }
}
