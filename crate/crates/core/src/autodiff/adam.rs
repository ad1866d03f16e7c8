use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};

/// Adam optimizer state: first/second moment accumulators per parameter
/// plus the step counter. The learning rate stays constant for the whole
/// run; there is no schedule.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, store: &ParamStore) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: store.iter().map(|p| vec![0.0; p.values.len()]).collect(),
            v: store.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    /// One Adam update with bias correction.
    ///
    /// `grads[i]` is the gradient for parameter `i`, or `None` when the
    /// parameter did not participate in this step (it is left untouched,
    /// moments included).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f64>>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::Contract(format!(
                "adam_step got {} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        self.step = self
            .step
            .checked_add(1)
            .ok_or_else(|| Error::Numeric("adam step counter overflow".into()))?;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (idx, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let p = store.get_mut(idx);
            if grad.len() != p.values.len() {
                return Err(Error::Contract(format!(
                    "gradient length {} does not match parameter `{}` ({})",
                    grad.len(),
                    p.name,
                    p.values.len()
                )));
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            if p.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite parameter values in `{}` after adam step {}",
                    p.name, self.step
                )));
            }
        }
        Ok(())
    }
}
