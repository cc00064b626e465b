//! Synthetic natural-ish test content: multi-octave value noise with a 1/f
//! amplitude falloff plus a slow temporal drift. Deterministic per seed, so
//! hermetic tests and the self-verification suites can run without any video
//! assets on disk.

use crate::media::{ChromaLayout, FramePlanar, Plane};
use crate::rng::Rng;

/// Bilinearly interpolated random lattice, one octave.
fn value_noise(seed: u64, w: usize, h: usize, cell: f64, shift: f64) -> Vec<f32> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let mut rng = Rng::new(seed);
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.next_f64()).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell;
        let gy = fy as usize;
        let ty = fy - gy as f64;
        for x in 0..w {
            let fx = x as f64 / cell + shift;
            let gx = fx as usize;
            let tx = fx - gx as f64;
            let idx = |yy: usize, xx: usize| grid[(yy.min(gh - 1)) * gw + xx.min(gw - 1)];
            let top = idx(gy, gx) * (1.0 - tx) + idx(gy, gx + 1) * tx;
            let bot = idx(gy + 1, gx) * (1.0 - tx) + idx(gy + 1, gx + 1) * tx;
            out.push((top * (1.0 - ty) + bot * ty) as f32);
        }
    }
    out
}

fn textured_plane(seed: u64, w: usize, h: usize, octaves: &[(f64, f64)], t: usize) -> Plane {
    let mut data = vec![0.0f32; w * h];
    let mut total = 0.0f32;
    for (i, &(cell, amp)) in octaves.iter().enumerate() {
        let shift = t as f64 * 0.35 / cell;
        let layer = value_noise(seed.wrapping_add(i as u64 * 977), w, h, cell, shift);
        for (d, l) in data.iter_mut().zip(layer) {
            *d += amp as f32 * l;
        }
        total += amp as f32;
    }
    for d in &mut data {
        *d = (*d / total).clamp(0.0, 1.0);
    }
    Plane::new(w, h, data)
}

/// One 4:4:4 frame of synthetic content; `t` is the frame index of a slow pan.
pub fn synth_frame(seed: u64, w: usize, h: usize, t: usize) -> FramePlanar {
    // luma carries fine texture, chroma stays smooth like camera content
    let y = textured_plane(seed, w, h, &[(24.0, 1.0), (9.0, 0.55), (3.5, 0.3), (1.6, 0.12)], t);
    let u = textured_plane(seed ^ 0xaaaa, w, h, &[(32.0, 1.0), (11.0, 0.25)], t);
    let v = textured_plane(seed ^ 0x5555, w, h, &[(28.0, 1.0), (13.0, 0.25)], t);
    FramePlanar {
        width: w,
        height: h,
        layout: ChromaLayout::C444,
        y,
        u,
        v,
    }
}

pub fn synth_sequence(seed: u64, w: usize, h: usize, frames: usize) -> Vec<FramePlanar> {
    (0..frames).map(|t| synth_frame(seed, w, h, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = synth_frame(42, 32, 24, 3);
        let b = synth_frame(42, 32, 24, 3);
        assert_eq!(a.y.data, b.y.data);
        assert!(a.y.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = synth_frame(43, 32, 24, 3);
        assert_ne!(a.y.data, c.y.data);
    }

    #[test]
    fn frames_drift_over_time() {
        let a = synth_frame(1, 32, 32, 0);
        let b = synth_frame(1, 32, 32, 1);
        assert_ne!(a.y.data, b.y.data);
        // but only slightly: it's a pan, not a scene cut
        let diff: f32 = a
            .y
            .data
            .iter()
            .zip(&b.y.data)
            .map(|(x, y)| (x - y).abs())
            .sum::<f32>()
            / (32.0 * 32.0);
        assert!(diff < 0.1, "mean |diff| {diff}");
    }
}
