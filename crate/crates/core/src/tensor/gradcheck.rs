//! Central finite-difference gradient checking, the independent oracle every
//! differentiable primitive is verified against. Always runs in f64.

use super::{Shape, Tape, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Result of one gradient check: the largest relative deviation between the
/// tape gradient and the central-difference estimate across all inputs.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn ok(&self) -> bool {
        self.max_rel_err < DEFAULT_TOLERANCE
    }
}

/// Check the tape gradient of a scalar-valued function against central finite
/// differences at step `h`.
///
/// `f` is called with a fresh tape and leaf tensors built from `inputs`
/// (data, shape) pairs and must return a scalar loss on that tape. The
/// relative error is max |analytic − numeric| over all components, divided by
/// the largest gradient magnitude seen (floored to avoid 0/0 on flat
/// functions).
pub fn check<F>(f: F, inputs: &[(Vec<f64>, Shape)], h: f64) -> GradCheck
where
    F: Fn(&Tape<f64>, &[Tensor<f64>]) -> Tensor<f64>,
{
    let eval = |datas: &[Vec<f64>]| -> f64 {
        let tape = Tape::new();
        let leaves: Vec<Tensor<f64>> = datas
            .iter()
            .zip(inputs)
            .map(|(d, (_, shape))| tape.leaf(d.clone(), shape.clone()))
            .collect();
        f(&tape, &leaves).item()
    };

    // Analytic gradients from one taped evaluation.
    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(d, shape)| tape.leaf(d.clone(), shape.clone()))
        .collect();
    let loss = f(&tape, &leaves);
    assert_eq!(loss.data().len(), 1, "gradcheck requires a scalar loss");
    let grads = tape.backward(&loss);
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|l| grads.wrt_or_zeros(l)).collect();

    let mut datas: Vec<Vec<f64>> = inputs.iter().map(|(d, _)| d.clone()).collect();
    let mut max_abs = 1e-8f64;
    let mut max_diff = 0.0f64;
    for (idx, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = datas[idx][j];
            datas[idx][j] = orig + h;
            let up = eval(&datas);
            datas[idx][j] = orig - h;
            let down = eval(&datas);
            datas[idx][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            max_abs = max_abs.max(numeric.abs()).max(grad[j].abs());
            max_diff = max_diff.max((grad[j] - numeric).abs());
        }
    }
    GradCheck {
        max_rel_err: max_diff / max_abs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catches_a_wrong_gradient() {
        // sum(x * x) has gradient 2x; the check must fail if we sneak in a
        // function whose tape gradient disagrees with its forward value.
        let inputs = vec![(vec![0.5, -1.5, 2.0], Shape::new(vec![3]))];
        let good = check(
            |tape, xs| {
                let sq = tape.mul(&xs[0], &xs[0]);
                tape.sum(&sq)
            },
            &inputs,
            DEFAULT_STEP,
        );
        assert!(good.ok(), "rel err {}", good.max_rel_err);

        // stop_gradient blocks one factor, so the tape gradient is x, not 2x;
        // the finite-difference oracle sees the true 2x and must disagree.
        let bad = check(
            |tape, xs| {
                let frozen = tape.stop_gradient(&xs[0]);
                let sq = tape.mul(&xs[0], &frozen);
                tape.sum(&sq)
            },
            &inputs,
            DEFAULT_STEP,
        );
        assert!(!bad.ok(), "expected mismatch, got {}", bad.max_rel_err);
    }
}
