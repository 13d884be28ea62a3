//! Adam optimizer with bias correction.

use crate::autodiff::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }
}

/// One Adam update in place. Advances the state's step counter.
pub fn adam_step<T: Scalar>(
    params: &mut Tensor<T>,
    grads: &Tensor<T>,
    state: &mut AdamState<T>,
    hp: &AdamParams,
) {
    assert_eq!(params.shape(), grads.shape(), "adam shape mismatch");
    assert_eq!(params.data.len(), state.m.len(), "adam state mismatch");
    state.step += 1;
    let t = state.step as f64;
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one_m_b1 = T::from_f64(1.0 - hp.beta1);
    let one_m_b2 = T::from_f64(1.0 - hp.beta2);
    // Fold the bias corrections into the step size.
    let corr1 = 1.0 - hp.beta1.powf(t);
    let corr2 = 1.0 - hp.beta2.powf(t);
    let lr_t = T::from_f64(hp.lr / corr1);
    let inv_sqrt_corr2 = T::from_f64(1.0 / corr2.sqrt());
    let eps = T::from_f64(hp.eps);

    for i in 0..params.data.len() {
        let g = grads.data[i];
        state.m[i] = b1 * state.m[i] + one_m_b1 * g;
        state.v[i] = b2 * state.v[i] + one_m_b2 * g * g;
        let denom = (state.v[i].sqrt() * inv_sqrt_corr2) + eps;
        params.data[i] = params.data[i] - lr_t * state.m[i] / denom;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_but_advances_time() {
        let mut p: Tensor<f64> = Tensor::from_f64_slice(1, 3, &[1.0, -2.0, 0.5]);
        let g = Tensor::zeros(1, 3);
        let mut state = AdamState::new(3);
        adam_step(&mut p, &g, &mut state, &AdamParams::default());
        assert_eq!(p.data, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // Constant gradient 1.0: bias-corrected first step is lr / (1+eps').
        let mut p: Tensor<f64> = Tensor::from_f64_slice(1, 1, &[0.0]);
        let g = Tensor::from_f64_slice(1, 1, &[1.0]);
        let mut state = AdamState::new(1);
        let hp = AdamParams {
            lr: 0.1,
            ..Default::default()
        };
        adam_step(&mut p, &g, &mut state, &hp);
        assert!((p.data[0] + 0.1).abs() < 1e-6, "step was {}", p.data[0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // Independent oracle: run the optimizer on f(x) = x^2 and check
        // it contracts toward zero.
        let mut x: Tensor<f64> = Tensor::from_f64_slice(1, 1, &[1.0]);
        let mut state = AdamState::new(1);
        let hp = AdamParams {
            lr: 0.05,
            ..Default::default()
        };
        for _ in 0..100 {
            let g = Tensor::from_f64_slice(1, 1, &[2.0 * x.data[0]]);
            adam_step(&mut x, &g, &mut state, &hp);
        }
        assert!(x.data[0].abs() < 0.05, "ended at {}", x.data[0]);
    }

    #[test]
    fn works_in_f32() {
        let mut x: Tensor<f32> = Tensor::from_f64_slice(1, 1, &[1.0]);
        let mut state = AdamState::new(1);
        let hp = AdamParams {
            lr: 0.05,
            ..Default::default()
        };
        for _ in 0..100 {
            let g = Tensor::from_vec(1, 1, vec![2.0 * x.data[0]]);
            adam_step(&mut x, &g, &mut state, &hp);
        }
        assert!(x.data[0].abs() < 0.05);
    }
}
