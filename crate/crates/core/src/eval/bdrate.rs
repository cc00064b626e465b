//! Bjøntegaard delta bitrate between two rate-distortion hulls: log10(rate)
//! is interpolated as a piecewise-cubic-Hermite function of quality (PCHIP,
//! Fritsch-Carlson slopes), the difference is integrated analytically over
//! the common quality interval, and the mean log-rate gap converts to a
//! percentage. Negative means the test hull saves rate. PCHIP rather than a
//! single cubic fit: hulls here span six scales and eleven quantizers, a
//! range where one global cubic oscillates.

use crate::error::{Error, Result};

/// Monotone cubic Hermite slopes (Fritsch-Carlson).
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = ys
        .windows(2)
        .zip(&h)
        .map(|(w, &hi)| (w[1] - w[0]) / hi)
        .collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    m
}

/// Exact integral of the PCHIP interpolant over [lo, hi], which must lie
/// within the data range.
fn pchip_integral(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> f64 {
    let m = pchip_slopes(xs, ys);
    let mut total = 0.0;
    for i in 0..xs.len() - 1 {
        let (x0, x1) = (xs[i], xs[i + 1]);
        if x1 <= lo || x0 >= hi {
            continue;
        }
        let h = x1 - x0;
        // Hermite basis as a cubic in t ∈ [0,1]
        let (y0, y1) = (ys[i], ys[i + 1]);
        let (m0, m1) = (m[i] * h, m[i + 1] * h);
        let a = 2.0 * y0 + m0 - 2.0 * y1 + m1;
        let b = -3.0 * y0 - 2.0 * m0 + 3.0 * y1 - m1;
        let c = m0;
        let d = y0;
        let t0 = ((lo - x0) / h).max(0.0);
        let t1 = ((hi - x0) / h).min(1.0);
        let anti = |t: f64| ((a / 4.0 * t + b / 3.0) * t + c / 2.0) * t * t + d * t;
        total += h * (anti(t1) - anti(t0));
    }
    total
}

/// BD-BR in percent between two hulls given as (rate, quality) lists with
/// strictly increasing quality. Requires >= 4 points per hull and overlapping
/// quality ranges.
pub fn bd_br(reference: &[(f64, f64)], test: &[(f64, f64)]) -> Result<f64> {
    for (name, hull) in [("reference", reference), ("test", test)] {
        if hull.len() < 4 {
            return Err(Error::Config(format!(
                "bd_br: {name} hull has {} points, need at least 4",
                hull.len()
            )));
        }
        for w in hull.windows(2) {
            if w[1].1 <= w[0].1 {
                return Err(Error::Config(format!(
                    "bd_br: {name} hull quality is not strictly increasing"
                )));
            }
        }
        if hull.iter().any(|&(r, _)| r <= 0.0) {
            return Err(Error::Config(format!("bd_br: {name} hull has rate <= 0")));
        }
    }
    let lo = reference[0].1.max(test[0].1);
    let hi = reference[reference.len() - 1].1.min(test[test.len() - 1].1);
    if hi <= lo {
        return Err(Error::Config(format!(
            "bd_br: no quality overlap (reference spans {:.3}..{:.3}, test {:.3}..{:.3})",
            reference[0].1,
            reference[reference.len() - 1].1,
            test[0].1,
            test[test.len() - 1].1
        )));
    }
    let split = |hull: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) {
        (
            hull.iter().map(|&(_, q)| q).collect(),
            hull.iter().map(|&(r, _)| r.log10()).collect(),
        )
    };
    let (ref_q, ref_lr) = split(reference);
    let (test_q, test_lr) = split(test);
    let avg_diff = (pchip_integral(&test_q, &test_lr, lo, hi)
        - pchip_integral(&ref_q, &ref_lr, lo, hi))
        / (hi - lo);
    Ok((10f64.powf(avg_diff) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hull() -> Vec<(f64, f64)> {
        vec![
            (0.05, 30.0),
            (0.11, 33.5),
            (0.24, 36.0),
            (0.50, 38.2),
            (1.10, 40.1),
            (2.30, 41.5),
        ]
    }

    #[test]
    fn identical_hulls_give_zero() {
        let h = hull();
        assert_eq!(bd_br(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn uniform_rate_scaling_is_exact() {
        let h = hull();
        let scaled = |k: f64| -> Vec<(f64, f64)> { h.iter().map(|&(r, q)| (r * k, q)).collect() };
        let up = bd_br(&h, &scaled(1.1)).unwrap();
        assert!((up - 10.0).abs() < 0.1, "1.1x: {up}");
        let down = bd_br(&h, &scaled(0.5)).unwrap();
        assert!((down + 50.0).abs() < 0.1, "0.5x: {down}");
    }

    #[test]
    fn container_overhead_invariance() {
        // scaling BOTH hulls by the same factor leaves BD-BR unchanged
        let h = hull();
        let test: Vec<(f64, f64)> = h
            .iter()
            .map(|&(r, q)| (r * 0.93, q + 0.2))
            .collect();
        let base = bd_br(&h, &test).unwrap();
        let k = 7.3;
        let href: Vec<(f64, f64)> = h.iter().map(|&(r, q)| (r * k, q)).collect();
        let htest: Vec<(f64, f64)> = test.iter().map(|&(r, q)| (r * k, q)).collect();
        let scaled = bd_br(&href, &htest).unwrap();
        assert!((base - scaled).abs() < 1e-9, "{base} vs {scaled}");
    }

    #[test]
    fn antisymmetry_identity() {
        // bd(A,B) ≈ −bd(B,A) / (1 + bd(B,A)/100)
        let a = hull();
        let b: Vec<(f64, f64)> = a.iter().map(|&(r, q)| (r * 0.85, q + 0.3)).collect();
        let ab = bd_br(&a, &b).unwrap();
        let ba = bd_br(&b, &a).unwrap();
        let predicted = -ba / (1.0 + ba / 100.0);
        assert!((ab - predicted).abs() < 0.1, "{ab} vs {predicted}");
    }

    #[test]
    fn no_overlap_is_an_error() {
        let a = hull();
        let b: Vec<(f64, f64)> = a.iter().map(|&(r, q)| (r, q + 100.0)).collect();
        assert!(bd_br(&a, &b).is_err());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let a = hull();
        assert!(bd_br(&a[..3], &a).is_err());
    }

    #[test]
    fn partial_overlap_integrates_the_common_interval() {
        // test hull shifted up in quality: still overlaps on [33.5, 41.5]
        let a = hull();
        let b: Vec<(f64, f64)> = a.iter().map(|&(r, q)| (r * 1.2, q + 2.0)).collect();
        let v = bd_br(&a, &b).unwrap();
        assert!(v.is_finite());
        // 1.2x rate at ~equal quality minus the 2 dB quality head start:
        // must come out lower than the pure 20% inflation
        assert!(v < 20.0, "{v}");
    }
}
