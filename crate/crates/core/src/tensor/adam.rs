use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the shared step counter.
/// Moment slots are created lazily on the first update and must keep the same
/// lengths as their parameters afterwards.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over a parameter list. `params` and
    /// `grads` are parallel slices; every call advances the step counter by 1.
    /// Moments are kept in f64 regardless of the training dtype so two runs
    /// with identical gradients stay bit-identical.
    pub fn update<T: Scalar>(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), grads.len(), "params/grads count mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        assert_eq!(self.m.len(), params.len(), "Adam state/param count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len(), "param/grad length mismatch");
            assert_eq!(p.len(), m.len(), "param/state length mismatch");
            for i in 0..p.len() {
                let gi = g[i].to_f64();
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                let delta = self.config.lr * m_hat / (v_hat.sqrt() + self.config.epsilon);
                p[i] = T::from_f64(p[i].to_f64() - delta);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(AdamConfig::default());
        let mut p = vec![1.0f32, -2.0, 3.5];
        let g = vec![0.0f32; 3];
        let before = p.clone();
        state.update(&mut [&mut p], &[&g]);
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // With constant g=1 the bias-corrected first step is lr / (1 + eps).
        let cfg = AdamConfig {
            lr: 1e-4,
            ..Default::default()
        };
        let mut state = AdamState::new(cfg);
        let mut p = vec![0.0f64];
        state.update(&mut [&mut p], &[&[1.0f64]]);
        let delta = -p[0];
        assert!((delta - 1e-4).abs() < 1e-9, "delta {delta}");
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut state = AdamState::new(AdamConfig::default());
            let mut p = vec![0.5f32, -0.25];
            for step in 0..10 {
                let g = vec![0.1f32 * (step as f32 + 1.0), -0.05];
                state.update(&mut [&mut p], &[&g]);
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn shape_mismatch_panics() {
        let mut state = AdamState::new(AdamConfig::default());
        let mut p = vec![1.0f32, 2.0];
        state.update(&mut [&mut p], &[&[1.0f32]]);
    }
}
