//! PSNR and SSIM on planar [0,1] float frames. PSNR is capped at 99 dB so
//! identical frames stay finite; the weighted variant combines per-plane MSEs
//! 6:1:1 before the log. SSIM follows the usual 11x11 Gaussian window with
//! sigma 1.5, K1 = 0.01, K2 = 0.03 on the luma plane, valid windows only.

use crate::error::{Error, Result};
use crate::media::{FramePlanar, Plane};

pub const PSNR_CAP: f64 = 99.0;

pub fn mse_plane(a: &Plane, b: &Plane) -> f64 {
    assert_eq!(
        (a.width, a.height),
        (b.width, b.height),
        "mse_plane: dims mismatch"
    );
    let mut acc = 0.0f64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc / a.data.len() as f64
}

fn mse_to_db(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP)
}

/// Per-plane PSNR in dB on [0,1] floats (peak = 1).
pub fn psnr_plane(a: &Plane, b: &Plane) -> f64 {
    mse_to_db(mse_plane(a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaneSel {
    Y,
    U,
    V,
}

pub fn psnr(a: &FramePlanar, b: &FramePlanar, plane: PlaneSel) -> f64 {
    match plane {
        PlaneSel::Y => psnr_plane(&a.y, &b.y),
        PlaneSel::U => psnr_plane(&a.u, &b.u),
        PlaneSel::V => psnr_plane(&a.v, &b.v),
    }
}

/// 6:1:1 weighted PSNR: the per-plane MSEs are combined before the log.
pub fn psnr_weighted(a: &FramePlanar, b: &FramePlanar) -> f64 {
    let m = (6.0 * mse_plane(&a.y, &b.y) + mse_plane(&a.u, &b.u) + mse_plane(&a.v, &b.v)) / 8.0;
    mse_to_db(m)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian filter, valid region only: output is
/// (h - 10) x (w - 10).
fn blur_valid(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0f64; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                acc += kv * src[y * w + ox + j];
            }
            tmp[y * ow + ox] = acc;
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                acc += kv * tmp[(oy + j) * ow + ox];
            }
            out[oy * ow + ox] = acc;
        }
    }
    out
}

/// Mean local SSIM over the luma plane.
pub fn ssim(a: &FramePlanar, b: &FramePlanar) -> Result<f64> {
    ssim_plane(&a.y, &b.y)
}

pub fn ssim_plane(a: &Plane, b: &Plane) -> Result<f64> {
    assert_eq!(
        (a.width, a.height),
        (b.width, b.height),
        "ssim: dims mismatch"
    );
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Config(format!(
            "ssim needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width, a.height
        )));
    }
    let (w, h) = (a.width, a.height);
    let xa: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let xb: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    let aa: Vec<f64> = xa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = xb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x * y).collect();

    let mu_a = blur_valid(&xa, w, h);
    let mu_b = blur_valid(&xb, w, h);
    let s_aa = blur_valid(&aa, w, h);
    let s_bb = blur_valid(&bb, w, h);
    let s_ab = blur_valid(&ab, w, h);

    let c1 = SSIM_K1 * SSIM_K1; // (K1 * L)^2 with L = 1
    let c2 = SSIM_K2 * SSIM_K2;
    let mut acc = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = s_aa[i] - ma * ma;
        let var_b = s_bb[i] - mb * mb;
        let cov = s_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(acc / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::synth::synth_frame;

    #[test]
    fn identical_frames_hit_the_cap() {
        let f = synth_frame(1, 32, 32, 0);
        assert_eq!(psnr(&f, &f, PlaneSel::Y), PSNR_CAP);
        assert_eq!(psnr_weighted(&f, &f), PSNR_CAP);
        assert!((ssim(&f, &f).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn max_error_is_zero_db() {
        let a = FramePlanar::constant(8, 8, 0.0, 0.0, 0.0);
        let b = FramePlanar::constant(8, 8, 1.0, 1.0, 1.0);
        assert_eq!(psnr(&a, &b, PlaneSel::Y), 0.0);
    }

    #[test]
    fn uniform_one_lsb_offset_matches_closed_form() {
        let a = FramePlanar::constant(16, 16, 0.5, 0.5, 0.5);
        let mut b = a.clone();
        for v in &mut b.y.data {
            *v += 1.0 / 255.0;
        }
        let want = 20.0 * 255.0f64.log10(); // mse = (1/255)^2
        let got = psnr(&a, &b, PlaneSel::Y);
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }

    #[test]
    fn inverted_pattern_destroys_ssim() {
        let mut a = synth_frame(2, 32, 32, 0);
        // stretch to high contrast
        for v in &mut a.y.data {
            *v = if *v > 0.5 { 0.95 } else { 0.05 };
        }
        let mut b = a.clone();
        for v in &mut b.y.data {
            *v = 1.0 - *v;
        }
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.5, "ssim {s}");
    }

    #[test]
    fn noise_strictly_decreases_ssim() {
        let a = synth_frame(3, 32, 32, 0);
        let mut rng = Rng::new(4);
        let mut b = a.clone();
        for v in &mut b.y.data {
            *v = (*v + 0.02 * rng.next_normal() as f32).clamp(0.0, 1.0);
        }
        let clean = ssim(&a, &a).unwrap();
        let noisy = ssim(&a, &b).unwrap();
        assert!(noisy < clean, "{noisy} !< {clean}");
    }

    #[test]
    fn small_frames_are_rejected() {
        let a = FramePlanar::constant(8, 8, 0.5, 0.5, 0.5);
        assert!(ssim(&a, &a).is_err());
    }
}
