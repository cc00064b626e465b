//! Stride-1 2-D convolution kernels (cross-correlation convention) with the
//! exact transposed passes used for backward. Plain nested loops with the
//! innermost loop over contiguous output columns; reduction order is fixed
//! so results are bit-reproducible.

use super::{Scalar, Shape};

/// Forward pass. input NCHW, weight OIKK, bias O, symmetric zero padding.
/// Output spatial dims are H + 2p − K + 1 (same-size when 2p = K − 1).
pub fn forward<T: Scalar>(
    input: &[T],
    in_shape: &Shape,
    weight: &[T],
    w_shape: &Shape,
    bias: &[T],
    b_shape: &Shape,
    padding: usize,
) -> (Vec<T>, Shape) {
    let (n, ci, h, w) = in_shape.nchw();
    let (co, wi, kh, kw) = w_shape.nchw();
    assert_eq!(
        ci,
        wi,
        "conv2d: input has {ci} channels but weight expects {wi}"
    );
    assert_eq!(kh, kw, "conv2d: only square kernels supported");
    assert_eq!(b_shape.dims(), &[co], "conv2d: bias must have shape [{co}]");
    let k = kh;
    assert!(
        h + 2 * padding >= k && w + 2 * padding >= k,
        "conv2d: {k}x{k} kernel does not fit {h}x{w} input with padding {padding}"
    );
    let oh = h + 2 * padding - k + 1;
    let ow = w + 2 * padding - k + 1;

    let mut out = vec![T::ZERO; n * co * oh * ow];
    for ni in 0..n {
        for o in 0..co {
            let out_base = (ni * co + o) * oh * ow;
            for slot in &mut out[out_base..out_base + oh * ow] {
                *slot = bias[o];
            }
            for i in 0..ci {
                let in_base = (ni * ci + i) * h * w;
                let w_base = (o * ci + i) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight[w_base + ky * k + kx];
                        if wv == T::ZERO {
                            continue;
                        }
                        // output (oy, ox) reads input (oy + ky - p, ox + kx - p)
                        for oy in 0..oh {
                            let iy = (oy + ky) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row_in = in_base + iy as usize * w;
                            let row_out = out_base + oy * ow;
                            let x0 = (padding as isize - kx as isize).max(0) as usize;
                            let x1 = ow.min(w + padding - kx);
                            for ox in x0..x1 {
                                let ix = ox + kx - padding;
                                out[row_out + ox] += wv * input[row_in + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, Shape::new(vec![n, co, oh, ow]))
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

/// Backward pass. `cotangent` has the forward output's layout; each requested
/// gradient is computed with loops ordered to keep accumulation deterministic.
pub fn backward<T: Scalar>(
    cotangent: &[T],
    input: &[T],
    in_shape: &Shape,
    weight: &[T],
    w_shape: &Shape,
    padding: usize,
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> ConvGrads<T> {
    let (n, ci, h, w) = in_shape.nchw();
    let (co, _, k, _) = w_shape.nchw();
    let oh = h + 2 * padding - k + 1;
    let ow = w + 2 * padding - k + 1;
    debug_assert_eq!(cotangent.len(), n * co * oh * ow);

    let bias = need_bias.then(|| {
        let mut db = vec![T::ZERO; co];
        for ni in 0..n {
            for o in 0..co {
                let base = (ni * co + o) * oh * ow;
                for &g in &cotangent[base..base + oh * ow] {
                    db[o] += g;
                }
            }
        }
        db
    });

    let weight_grad = need_weight.then(|| {
        let mut dw = vec![T::ZERO; co * ci * k * k];
        for o in 0..co {
            for i in 0..ci {
                let w_base = (o * ci + i) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = T::ZERO;
                        for ni in 0..n {
                            let out_base = (ni * co + o) * oh * ow;
                            let in_base = (ni * ci + i) * h * w;
                            for oy in 0..oh {
                                let iy = (oy + ky) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row_in = in_base + iy as usize * w;
                                let row_out = out_base + oy * ow;
                                let x0 = (padding as isize - kx as isize).max(0) as usize;
                                let x1 = ow.min(w + padding - kx);
                                for ox in x0..x1 {
                                    acc += cotangent[row_out + ox] * input[row_in + ox + kx - padding];
                                }
                            }
                        }
                        dw[w_base + ky * k + kx] = acc;
                    }
                }
            }
        }
        dw
    });

    let input_grad = need_input.then(|| {
        let mut dx = vec![T::ZERO; n * ci * h * w];
        for ni in 0..n {
            for o in 0..co {
                let out_base = (ni * co + o) * oh * ow;
                for i in 0..ci {
                    let in_base = (ni * ci + i) * h * w;
                    let w_base = (o * ci + i) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = weight[w_base + ky * k + kx];
                            if wv == T::ZERO {
                                continue;
                            }
                            for oy in 0..oh {
                                let iy = (oy + ky) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row_in = in_base + iy as usize * w;
                                let row_out = out_base + oy * ow;
                                let x0 = (padding as isize - kx as isize).max(0) as usize;
                                let x1 = ow.min(w + padding - kx);
                                for ox in x0..x1 {
                                    dx[row_in + ox + kx - padding] += wv * cotangent[row_out + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    });

    ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias,
    }
}
