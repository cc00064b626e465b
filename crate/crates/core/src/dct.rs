//! Orthonormal 8x8 DCT-II, shared by the toy codec and the rate proxy so both
//! sides of the pipeline agree on the transform.

pub const BLOCK: usize = 8;

/// Orthonormal DCT-II basis matrix: row k, column n is
/// c_k * cos(pi * (2n + 1) * k / 16) with c_0 = sqrt(1/8), c_k = sqrt(2/8).
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    use std::sync::OnceLock;
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut d = [[0.0; BLOCK]; BLOCK];
        for (k, row) in d.iter_mut().enumerate() {
            let ck = if k == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = ck
                    * (std::f64::consts::PI * (2.0 * n as f64 + 1.0) * k as f64
                        / (2.0 * BLOCK as f64))
                        .cos();
            }
        }
        d
    })
}

/// 2-D DCT of one 8x8 block: C = D X D^T.
pub fn dct_block(x: &[f64; 64]) -> [f64; 64] {
    let d = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp = X D^T
    for r in 0..BLOCK {
        for k in 0..BLOCK {
            let mut acc = 0.0;
            for n in 0..BLOCK {
                acc += x[r * BLOCK + n] * d[k][n];
            }
            tmp[r * BLOCK + k] = acc;
        }
    }
    // cols: out = D tmp
    let mut out = [0.0; 64];
    for k in 0..BLOCK {
        for c in 0..BLOCK {
            let mut acc = 0.0;
            for n in 0..BLOCK {
                acc += d[k][n] * tmp[n * BLOCK + c];
            }
            out[k * BLOCK + c] = acc;
        }
    }
    out
}

/// Inverse of [`dct_block`]; the basis is orthonormal so this is D^T C D.
pub fn idct_block(c: &[f64; 64]) -> [f64; 64] {
    let d = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp = C D
    for r in 0..BLOCK {
        for n in 0..BLOCK {
            let mut acc = 0.0;
            for k in 0..BLOCK {
                acc += c[r * BLOCK + k] * d[k][n];
            }
            tmp[r * BLOCK + n] = acc;
        }
    }
    // cols: out = D^T tmp
    let mut out = [0.0; 64];
    for n in 0..BLOCK {
        for col in 0..BLOCK {
            let mut acc = 0.0;
            for k in 0..BLOCK {
                acc += d[k][n] * tmp[k * BLOCK + col];
            }
            out[n * BLOCK + col] = acc;
        }
    }
    out
}

/// Dims rounded up to the next multiple of the block size.
pub fn padded_dims(h: usize, w: usize) -> (usize, usize) {
    (h.div_ceil(BLOCK) * BLOCK, w.div_ceil(BLOCK) * BLOCK)
}

/// Edge-replication pad to block multiples.
pub fn pad_replicate(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ph, pw) = padded_dims(h, w);
    if (ph, pw) == (h, w) {
        return (plane.to_vec(), h, w);
    }
    let mut out = vec![0.0; ph * pw];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            out[y * pw + x] = plane[sy * w + sx];
        }
    }
    (out, ph, pw)
}

/// Gather one block starting at (by*8, bx*8) from a padded plane.
pub fn read_block(plane: &[f64], pw: usize, by: usize, bx: usize) -> [f64; 64] {
    let mut b = [0.0; 64];
    for y in 0..BLOCK {
        let row = (by * BLOCK + y) * pw + bx * BLOCK;
        b[y * BLOCK..(y + 1) * BLOCK].copy_from_slice(&plane[row..row + BLOCK]);
    }
    b
}

pub fn write_block(plane: &mut [f64], pw: usize, by: usize, bx: usize, b: &[f64; 64]) {
    for y in 0..BLOCK {
        let row = (by * BLOCK + y) * pw + bx * BLOCK;
        plane[row..row + BLOCK].copy_from_slice(&b[y * BLOCK..(y + 1) * BLOCK]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_block_has_only_dc() {
        let x = [0.5; 64];
        let c = dct_block(&x);
        // orthonormal scaling: DC = 8 * value
        assert!((c[0] - 4.0).abs() < 1e-12, "dc {}", c[0]);
        for (i, &v) in c.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "ac[{i}] = {v}");
        }
    }

    #[test]
    fn parseval_and_roundtrip() {
        let mut rng = Rng::new(3);
        let mut x = [0.0; 64];
        for v in &mut x {
            *v = rng.next_f64();
        }
        let c = dct_block(&x);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = c.iter().map(|v| v * v).sum();
        assert!((ex - ec).abs() < 1e-9, "parseval {ex} vs {ec}");
        let back = idct_block(&c);
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
