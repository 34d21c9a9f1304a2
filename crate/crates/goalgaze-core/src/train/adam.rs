//! Standard bias-corrected Adam.

use crate::error::{Error, Result};
use crate::tensor::Element;

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for one parameter group.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Element> AdamState<T> {
    pub fn new(numel: usize) -> Self {
        AdamState { m: vec![T::zero(); numel], v: vec![T::zero(); numel], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One in-place Adam update.
pub fn adam_step<T: Element>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    hp: &AdamHyper,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "adam: {} params, {} grads, state of {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one = T::one();
    let bc1 = T::from_f64(1.0 - hp.beta1.powi(state.t as i32));
    let bc2 = T::from_f64(1.0 - hp.beta2.powi(state.t as i32));
    let lr = T::from_f64(hp.lr);
    let eps = T::from_f64(hp.eps);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = vec![1.0f64, -2.0, 0.5];
        let g = vec![0.0; 3];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &g, &mut st, &AdamHyper::with_lr(0.1)).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign_for_large_gradients() {
        for &g in &[1e3f64, -1e4, 2.5e6] {
            let mut p = vec![0.0f64];
            let mut st = AdamState::new(1);
            adam_step(&mut p, &[g], &mut st, &AdamHyper::with_lr(0.01)).unwrap();
            // bias-corrected first step: -lr * g / (|g| + eps')
            assert!((p[0] + 0.01 * g.signum()).abs() < 1e-6, "g={g}: step {}", p[0]);
        }
    }

    #[test]
    fn five_steps_on_a_parabola_match_a_reference_implementation() {
        // minimize f(x) = x^2 from x = 1 with lr 0.1; gradient is 2x
        let hp = AdamHyper::with_lr(0.1);
        let mut x = vec![1.0f64];
        let mut st = AdamState::new(1);

        // hand-rolled scalar reference, written independently
        let (mut rx, mut rm, mut rv) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=5u32 {
            let g = 2.0 * rx;
            rm = 0.9 * rm + 0.1 * g;
            rv = 0.999 * rv + 0.001 * g * g;
            let mh = rm / (1.0 - 0.9f64.powi(t as i32));
            let vh = rv / (1.0 - 0.999f64.powi(t as i32));
            rx -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let g_impl = 2.0 * x[0];
            adam_step(&mut x, &[g_impl], &mut st, &hp).unwrap();
            assert!((x[0] - rx).abs() < 1e-12, "step {t}: {} vs reference {rx}", x[0]);
        }
        assert!(x[0] < 1.0);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let mut p = vec![0.0f64; 2];
        let mut st = AdamState::new(2);
        assert!(adam_step(&mut p, &[1.0], &mut st, &AdamHyper::with_lr(0.1)).is_err());
        let mut st3 = AdamState::new(3);
        assert!(adam_step(&mut p, &[1.0, 2.0], &mut st3, &AdamHyper::with_lr(0.1)).is_err());
    }
}
