//! The learned downsampler: a pre-filter CNN, bilinear downsampling at a
//! rational scale, and a detail-restoration CNN, with residual connections
//! around both CNN halves so the zero-initialized network degenerates to
//! plain bilinear downsampling.

use crate::media::FramePlanar;
use crate::resample::{bilinear_downsample, ScaleRatio};
use crate::rng::Rng;
use crate::tensor::{Scalar, Shape, Tape, Tensor};

pub const LAYERS_PER_HALF: usize = 5;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_channels: usize,
    pub kernel: usize,
    pub activation_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_channels: 32,
            kernel: 3,
            activation_slope: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.hidden_channels == 0 {
            return Err(crate::Error::Config("hidden_channels must be >= 1".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(crate::Error::Config(
                "kernel must be odd for same-size convolutions".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// All trainable tensors, in the fixed order used by the optimizer and the
/// checkpoint format.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub pre: Vec<ConvLayer<T>>,
    pub post: Vec<ConvLayer<T>>,
}

fn channel_plan(hidden: usize) -> Vec<(usize, usize)> {
    let mut plan = Vec::with_capacity(LAYERS_PER_HALF);
    plan.push((3, hidden));
    for _ in 0..LAYERS_PER_HALF - 2 {
        plan.push((hidden, hidden));
    }
    plan.push((hidden, 3));
    plan
}

/// Kaiming-style fan-in scaled normal init, zero biases, deterministic per
/// seed.
pub fn init_params(seed: u64, config: &ModelConfig) -> ModelParams<f32> {
    config.validate().expect("invalid model config");
    let mut rng = Rng::new(seed ^ 0x6d6f_64656c_u64);
    let k = config.kernel;
    let half = |rng: &mut Rng| -> Vec<ConvLayer<f32>> {
        channel_plan(config.hidden_channels)
            .into_iter()
            .map(|(in_ch, out_ch)| {
                let fan_in = in_ch * k * k;
                let std = (2.0 / fan_in as f64).sqrt();
                let weight = (0..out_ch * in_ch * k * k)
                    .map(|_| (rng.next_normal() * std) as f32)
                    .collect();
                ConvLayer {
                    in_ch,
                    out_ch,
                    k,
                    weight,
                    bias: vec![0.0; out_ch],
                }
            })
            .collect()
    };
    ModelParams {
        config: config.clone(),
        pre: half(&mut rng),
        post: half(&mut rng),
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn convert<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |layers: &[ConvLayer<T>]| {
            layers
                .iter()
                .map(|l| ConvLayer {
                    in_ch: l.in_ch,
                    out_ch: l.out_ch,
                    k: l.k,
                    weight: l.weight.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
                    bias: l.bias.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
                })
                .collect()
        };
        ModelParams {
            config: self.config.clone(),
            pre: conv(&self.pre),
            post: conv(&self.post),
        }
    }

    /// Named tensors in checkpoint/optimizer order.
    pub fn entries(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (half, layers) in [("pre", &self.pre), ("post", &self.post)] {
            for (i, l) in layers.iter().enumerate() {
                out.push((
                    format!("{half}.{i}.weight"),
                    vec![l.out_ch, l.in_ch, l.k, l.k],
                    l.weight.as_slice(),
                ));
                out.push((format!("{half}.{i}.bias"), vec![l.out_ch], l.bias.as_slice()));
            }
        }
        out
    }

    pub fn entries_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layers in [&mut self.pre, &mut self.post] {
            for l in layers {
                out.push(l.weight.as_mut_slice());
                out.push(l.bias.as_mut_slice());
            }
        }
        out
    }

    /// Exact trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.entries().iter().map(|(_, _, d)| d.len()).sum()
    }
}

/// Parameter tensors materialized on a tape (tracked) or as constants
/// (inference).
pub struct ModelLeaves<T: Scalar> {
    pub pre: Vec<(Tensor<T>, Tensor<T>)>,
    pub post: Vec<(Tensor<T>, Tensor<T>)>,
    slope: T,
}

impl<T: Scalar> ModelLeaves<T> {
    /// Tensors in the same order as [`ModelParams::entries`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for half in [&self.pre, &self.post] {
            for (w, b) in half {
                out.push(w);
                out.push(b);
            }
        }
        out
    }

    /// Rebuild from a flat tensor list in [`ModelParams::entries`] order
    /// (weight/bias pairs, pre half then post half).
    pub fn from_tensors(tensors: &[Tensor<T>], config: &ModelConfig) -> ModelLeaves<T> {
        assert_eq!(tensors.len(), 4 * LAYERS_PER_HALF, "expected one weight and bias per layer");
        let pairs: Vec<(Tensor<T>, Tensor<T>)> = tensors
            .chunks_exact(2)
            .map(|c| (c[0].clone(), c[1].clone()))
            .collect();
        ModelLeaves {
            pre: pairs[..LAYERS_PER_HALF].to_vec(),
            post: pairs[LAYERS_PER_HALF..].to_vec(),
            slope: T::from_f64(config.activation_slope),
        }
    }
}

/// Put the parameters on a tape. `trainable` controls whether they become
/// tracked leaves or constants.
pub fn register<T: Scalar>(
    tape: &Tape<T>,
    params: &ModelParams<T>,
    trainable: bool,
) -> ModelLeaves<T> {
    let lift = |layers: &[ConvLayer<T>]| {
        layers
            .iter()
            .map(|l| {
                let wshape = Shape::new(vec![l.out_ch, l.in_ch, l.k, l.k]);
                let bshape = Shape::new(vec![l.out_ch]);
                if trainable {
                    (
                        tape.leaf(l.weight.clone(), wshape),
                        tape.leaf(l.bias.clone(), bshape),
                    )
                } else {
                    (
                        Tensor::constant(l.weight.clone(), wshape),
                        Tensor::constant(l.bias.clone(), bshape),
                    )
                }
            })
            .collect()
    };
    ModelLeaves {
        pre: lift(&params.pre),
        post: lift(&params.post),
        slope: T::from_f64(params.config.activation_slope),
    }
}

fn cnn_half<T: Scalar>(tape: &Tape<T>, x: &Tensor<T>, layers: &[(Tensor<T>, Tensor<T>)], slope: T) -> Tensor<T> {
    let pad = layers[0].0.shape().dims()[2] / 2;
    let mut h = x.clone();
    for (i, (w, b)) in layers.iter().enumerate() {
        h = tape.conv2d(&h, w, b, pad);
        if i + 1 < layers.len() {
            h = tape.leaky_relu(&h, slope);
        }
    }
    tape.add(x, &h)
}

/// Downsampler forward pass: pre-CNN with residual, bilinear downsample at
/// `s`, post-CNN with residual. Input and output are N x 3 x H x W.
pub fn forward<T: Scalar>(
    tape: &Tape<T>,
    x: &Tensor<T>,
    leaves: &ModelLeaves<T>,
    s: ScaleRatio,
) -> Tensor<T> {
    let filtered = cnn_half(tape, x, &leaves.pre, leaves.slope);
    let down = bilinear_downsample(tape, &filtered, s);
    cnn_half(tape, &down, &leaves.post, leaves.slope)
}

/// Inference on one 4:4:4 frame without gradient tracking.
pub fn forward_infer(params: &ModelParams<f32>, frame: &FramePlanar, s: ScaleRatio) -> FramePlanar {
    let tape: Tape<f32> = Tape::new();
    let x = Tensor::constant(
        frame.to_chw(),
        Shape::new(vec![1, 3, frame.height, frame.width]),
    );
    let leaves = register(&tape, params, false);
    let y = forward(&tape, &x, &leaves, s);
    let (_, _, h, w) = y.shape().nchw();
    FramePlanar::from_chw(y.data(), h, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_frame;

    fn count_formula(hidden: usize, k: usize) -> usize {
        let per_half: usize = channel_plan(hidden)
            .iter()
            .map(|(i, o)| o * i * k * k + o)
            .sum();
        2 * per_half
    }

    #[test]
    fn param_count_matches_closed_form() {
        for hidden in [1, 8, 32] {
            let cfg = ModelConfig {
                hidden_channels: hidden,
                ..Default::default()
            };
            let p = init_params(1, &cfg);
            assert_eq!(p.param_count(), count_formula(hidden, 3), "hidden {hidden}");
        }
        // hidden=32 spelled out: two halves of
        // 3*32*9+32 + 3*(32*32*9+32) + 32*3*9+3
        let want = 2 * ((32 * 3 * 9 + 32) + 3 * (32 * 32 * 9 + 32) + (3 * 32 * 9 + 3));
        assert_eq!(
            init_params(1, &ModelConfig::default()).param_count(),
            want
        );
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let cfg = ModelConfig::default();
        let a = init_params(7, &cfg);
        let b = init_params(7, &cfg);
        assert_eq!(a, b);
        let c = init_params(8, &cfg);
        assert_ne!(a, c);
        // fan-in scaling: middle layers have fan_in = 32*9
        let mid = &a.pre[2];
        let n = mid.weight.len() as f64;
        let var = mid.weight.iter().map(|&w| (w as f64) * (w as f64)).sum::<f64>() / n;
        let want = 2.0 / (32.0 * 9.0);
        assert!(
            (var - want).abs() < 0.2 * want,
            "var {var:.3e} vs {want:.3e}"
        );
        assert!(a.pre.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn output_dims_follow_the_even_floor_rule() {
        let cfg = ModelConfig {
            hidden_channels: 2,
            ..Default::default()
        };
        let params = init_params(3, &cfg);
        let frame = synth_frame(1, 64, 64, 0);
        for s in ScaleRatio::eval_set() {
            let out = forward_infer(&params, &frame, s);
            assert_eq!(out.height, s.target_dim(64), "scale {s}");
            assert_eq!(out.width, s.target_dim(64), "scale {s}");
        }
    }

    #[test]
    fn hidden_one_still_works() {
        let cfg = ModelConfig {
            hidden_channels: 1,
            ..Default::default()
        };
        let params = init_params(5, &cfg);
        let frame = synth_frame(2, 16, 16, 0);
        let out = forward_infer(&params, &frame, ScaleRatio::new(1, 2).unwrap());
        assert_eq!((out.width, out.height), (8, 8));
    }

    #[test]
    fn zero_weights_reduce_to_bilinear_downsampling() {
        let cfg = ModelConfig {
            hidden_channels: 4,
            ..Default::default()
        };
        let mut params = init_params(9, &cfg);
        for layers in [&mut params.pre, &mut params.post] {
            for l in layers {
                l.weight.iter_mut().for_each(|w| *w = 0.0);
                l.bias.iter_mut().for_each(|b| *b = 0.0);
            }
        }
        let frame = synth_frame(4, 32, 32, 0);
        let s = ScaleRatio::new(1, 2).unwrap();
        let out = forward_infer(&params, &frame, s);
        let want = crate::resample::resize_frame(&frame, s, crate::resample::FilterKind::Bilinear)
            .unwrap();
        for (a, b) in out.y.data.iter().zip(&want.y.data) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}
