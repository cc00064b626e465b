//! Rate-distortion convex hulls: Pareto filtering followed by the upper
//! convex envelope in the (rate, quality) plane, collinear points retained.

/// Indices of the hull points of `points` = (rate, quality) pairs, sorted by
/// ascending rate. Along the result both rate and quality strictly increase.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<usize> {
    assert!(!points.is_empty(), "convex_hull of an empty point set");
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .partial_cmp(&points[j])
            .expect("non-finite rate/quality")
    });

    // Pareto filter: a point survives when nothing else has <= rate and
    // >= quality with one strict. Scanning by descending (rate, quality), the
    // last kept point always has the lowest rate and highest quality so far.
    let mut pareto: Vec<usize> = Vec::new();
    for &idx in order.iter().rev() {
        match pareto.last() {
            None => pareto.push(idx),
            Some(&best) => {
                if points[idx].1 > points[best].1 {
                    pareto.push(idx);
                } else if points[idx].1 == points[best].1 && points[idx].0 < points[best].0 {
                    // same quality, strictly cheaper: replaces the kept point
                    pareto.pop();
                    pareto.push(idx);
                }
            }
        }
    }
    pareto.reverse(); // strictly ascending in both rate and quality

    if pareto.len() <= 2 {
        return pareto;
    }

    // Upper envelope, monotone-chain style. Keep collinear points: pop only
    // when the middle point lies strictly below the chord.
    let mut hull: Vec<usize> = Vec::new();
    for &idx in &pareto {
        while hull.len() >= 2 {
            let a = points[hull[hull.len() - 2]];
            let b = points[hull[hull.len() - 1]];
            let c = points[idx];
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            // cross > 0: b below segment a-c (quality up-left turn), drop it
            if cross > 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(idx);
    }
    hull
}

/// Brute-force oracle: a Pareto-optimal point is on the hull unless it lies
/// strictly below some segment between two other Pareto points. Quadratic in
/// the point count; used by tests and the self-verification suite.
pub fn convex_hull_oracle(points: &[(f64, f64)]) -> Vec<usize> {
    assert!(!points.is_empty());
    let dominated = |i: usize| {
        points.iter().enumerate().any(|(j, p)| {
            j != i
                && p.0 <= points[i].0
                && p.1 >= points[i].1
                && (p.0 < points[i].0 || p.1 > points[i].1 || j < i && *p == points[i])
        })
    };
    let pareto: Vec<usize> = (0..points.len()).filter(|&i| !dominated(i)).collect();
    let mut hull: Vec<usize> = pareto
        .iter()
        .copied()
        .filter(|&i| {
            let (ri, qi) = points[i];
            !pareto.iter().any(|&a| {
                pareto.iter().any(|&b| {
                    let (ra, qa) = points[a];
                    let (rb, qb) = points[b];
                    if !(ra < ri && ri < rb) {
                        return false;
                    }
                    // strictly below the chord a-b at rate ri
                    (rb - ra) * (qi - qa) - (qb - qa) * (ri - ra) < 0.0
                })
            })
        })
        .collect();
    hull.sort_by(|&i, &j| points[i].partial_cmp(&points[j]).unwrap());
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn single_point_hull() {
        assert_eq!(convex_hull(&[(1.0, 30.0)]), vec![0]);
    }

    #[test]
    fn collinear_points_are_retained() {
        let pts = vec![(1.0, 30.0), (2.0, 32.0), (3.0, 34.0)];
        assert_eq!(convex_hull(&pts), vec![0, 1, 2]);
    }

    #[test]
    fn dominated_points_never_change_the_hull() {
        let pts = vec![(1.0, 30.0), (2.0, 36.0), (4.0, 40.0)];
        let base = convex_hull(&pts);
        let mut with_dominated = pts.clone();
        with_dominated.push((2.5, 33.0)); // worse than (2.0, 36.0)
        let got = convex_hull(&with_dominated);
        assert_eq!(
            got.iter().map(|&i| with_dominated[i]).collect::<Vec<_>>(),
            base.iter().map(|&i| pts[i]).collect::<Vec<_>>()
        );
    }

    #[test]
    fn equal_quality_keeps_the_cheaper_point() {
        let pts = vec![(2.0, 30.0), (1.0, 30.0), (3.0, 35.0)];
        let hull = convex_hull(&pts);
        assert_eq!(hull, vec![1, 2]);
    }

    #[test]
    fn non_convex_middle_point_is_dropped() {
        // (2, 31) sags below the chord from (1, 30) to (4, 40)
        let pts = vec![(1.0, 30.0), (2.0, 31.0), (4.0, 40.0)];
        let hull = convex_hull(&pts);
        assert_eq!(hull, vec![0, 2]);
    }

    #[test]
    fn matches_oracle_on_random_grids() {
        let mut rng = Rng::new(123);
        for case in 0..300 {
            let n = 1 + rng.next_below(12);
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    (
                        (1 + rng.next_below(40)) as f64,
                        (1 + rng.next_below(40)) as f64,
                    )
                })
                .collect();
            let got: Vec<(f64, f64)> =
                convex_hull(&pts).iter().map(|&i| pts[i]).collect();
            let want: Vec<(f64, f64)> =
                convex_hull_oracle(&pts).iter().map(|&i| pts[i]).collect();
            assert_eq!(got, want, "case {case}: {pts:?}");
        }
    }

    #[test]
    fn hull_quality_strictly_increases_with_rate() {
        let mut rng = Rng::new(7);
        for _ in 0..100 {
            let pts: Vec<(f64, f64)> = (0..10)
                .map(|_| (rng.next_f64() * 10.0, rng.next_f64() * 20.0))
                .collect();
            let hull = convex_hull(&pts);
            for pair in hull.windows(2) {
                let (a, b) = (pts[pair[0]], pts[pair[1]]);
                assert!(a.0 < b.0 && a.1 < b.1, "{a:?} -> {b:?}");
            }
        }
    }
}
