//! Differentiation through the black-box codec. The straight-through
//! estimator passes cotangents unchanged; the scaled estimator
//! reparameterizes the compression error so its backward becomes
//! I − ε(ε−ε̄)ᵀ/(Nσ²) per scope group. Both keep the forward pass equal to
//! the true codec reconstruction — training distortion is always measured on
//! real codec output.
//!
//! The scaled backward is not hand-coded: it emerges from composing
//! stop-gradient, subtraction, standard deviation and a scalar quotient on
//! the tape. `verify::surrogate_jacobian` cross-checks it against the closed
//! form.

use crate::codec::CodecResult;
use crate::tensor::{Scalar, Shape, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SurrogateMode {
    #[serde(rename = "ste")]
    Ste,
    #[serde(rename = "scaled")]
    Scaled,
}

/// Population over which σ(ε) is computed. Per-sample flattens all pixels and
/// channels of one batch item into a single group; per-channel keeps each
/// (item, channel) plane separate (available for ablation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SigmaScope {
    #[serde(rename = "per-sample")]
    PerSample,
    #[serde(rename = "per-channel")]
    PerChannel,
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SurrogateConfig {
    pub mode: SurrogateMode,
    pub sigma_scope: SigmaScope,
    /// Groups with σ(ε) below this fall back to the straight-through path
    /// instead of dividing by (nearly) zero. In [0,1] signal units.
    pub sigma_floor: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            mode: SurrogateMode::Scaled,
            sigma_scope: SigmaScope::PerSample,
            sigma_floor: 1e-6,
        }
    }
}

/// Per-call diagnostics; fallbacks are silent but counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SurrogateStats {
    pub groups: usize,
    pub fallback_groups: usize,
}

fn check_shapes<T: Scalar>(y: &Tensor<T>, recon: &Tensor<T>) {
    assert_eq!(
        y.shape().dims(),
        recon.shape().dims(),
        "surrogate: y {:?} vs recon {:?}",
        y.shape().dims(),
        recon.shape().dims()
    );
    assert!(
        !recon.requires_grad(),
        "surrogate: the codec reconstruction must be a detached constant"
    );
}

/// Straight-through estimator: ŷ forwards the codec reconstruction exactly
/// and backwards the identity (the compression error is detached).
pub fn ste_apply<T: Scalar>(tape: &Tape<T>, y: &Tensor<T>, recon: &Tensor<T>) -> Tensor<T> {
    check_shapes(y, recon);
    let eps: Vec<T> = recon
        .data()
        .iter()
        .zip(y.data())
        .map(|(&r, &v)| r - v)
        .collect();
    let eps = Tensor::constant(eps, y.shape().clone());
    // Pin the forward value to the reconstruction bits: y + (recon − y)
    // re-rounds in float arithmetic, and forward-exactness is a contract.
    tape.add_pinned(y, &eps, recon.data().to_vec())
}

/// Contiguous (offset, len) scope groups of an NCHW tensor's flat layout.
fn scope_groups(shape: &Shape, scope: SigmaScope) -> Vec<(usize, usize)> {
    let dims = shape.dims();
    let (n, c, rest) = match dims.len() {
        4 => (dims[0], dims[1], dims[2] * dims[3]),
        // treat lower-rank tensors as one sample with one channel
        _ => (1, 1, shape.numel()),
    };
    match scope {
        SigmaScope::PerSample => (0..n).map(|i| (i * c * rest, c * rest)).collect(),
        SigmaScope::PerChannel => (0..n * c).map(|i| (i * rest, rest)).collect(),
    }
}

/// Scaled surrogate: per scope group, ŷ = y + sg(ε)·σ(ε)/sg(σ(ε)).
/// Forward equals the reconstruction; backward is the scaled estimator's
/// Jacobian transpose, emerging from the tape composition. Groups with
/// σ(ε) < sigma_floor take the straight-through path and are counted.
pub fn scaled_apply<T: Scalar>(
    tape: &Tape<T>,
    y: &Tensor<T>,
    recon: &Tensor<T>,
    cfg: &SurrogateConfig,
) -> (Tensor<T>, SurrogateStats) {
    check_shapes(y, recon);
    let groups = scope_groups(y.shape(), cfg.sigma_scope);
    let floor = T::from_f64(cfg.sigma_floor);
    let mut stats = SurrogateStats {
        groups: groups.len(),
        fallback_groups: 0,
    };
    let mut parts = Vec::with_capacity(groups.len());
    for &(off, len) in &groups {
        assert!(len >= 2, "surrogate scope group must have >= 2 elements");
        let y_g = tape.slice(y, off, len, vec![len]);
        let recon_g: Vec<T> = recon.data()[off..off + len].to_vec();
        let recon_t = Tensor::constant(recon_g.clone(), vec![len]);
        let eps = tape.sub(&recon_t, &y_g);
        let sigma = tape.std_dev(&eps);
        if sigma.item() < floor {
            // straight-through for this group
            let eps_const = Tensor::constant(eps.data().to_vec(), vec![len]);
            parts.push(tape.add_pinned(&y_g, &eps_const, recon_g));
            stats.fallback_groups += 1;
        } else {
            let sg_eps = tape.stop_gradient(&eps);
            let sg_sigma = tape.stop_gradient(&sigma);
            let ratio = tape.div(&sigma, &sg_sigma); // forward 1, backward 1/σ into σ(ε)
            let term = tape.mul(&sg_eps, &ratio);
            parts.push(tape.add_pinned(&y_g, &term, recon_g));
        }
    }
    let out = if parts.len() == 1 {
        tape.slice(&parts[0], 0, y.data().len(), y.shape().clone())
    } else {
        let refs: Vec<&Tensor<T>> = parts.iter().collect();
        tape.concat(&refs, y.shape().clone())
    };
    (out, stats)
}

/// Mode dispatch with the σ→0 safeguard.
pub fn apply<T: Scalar>(
    tape: &Tape<T>,
    y: &Tensor<T>,
    recon: &Tensor<T>,
    cfg: &SurrogateConfig,
) -> (Tensor<T>, SurrogateStats) {
    match cfg.mode {
        SurrogateMode::Ste => {
            let groups = scope_groups(y.shape(), cfg.sigma_scope).len();
            (
                ste_apply(tape, y, recon),
                SurrogateStats {
                    groups,
                    fallback_groups: 0,
                },
            )
        }
        SurrogateMode::Scaled => scaled_apply(tape, y, recon, cfg),
    }
}

/// Convenience: reconstruction tensor of a codec result, shaped like `y`.
pub fn recon_tensor<T: Scalar>(result: &CodecResult, like: &Tensor<T>) -> Tensor<T> {
    let recon = result.recon_chw::<T>();
    assert_eq!(
        recon.len(),
        like.data().len(),
        "codec result does not match tensor shape"
    );
    Tensor::constant(recon, like.shape().clone())
}
