use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.005,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment buffers for a fixed subset of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    ids: Vec<ParamId>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore, ids: &[ParamId]) -> Self {
        let zeros = |id: &ParamId| {
            let v = store.value(*id);
            Tensor::zeros(v.rows(), v.cols())
        };
        AdamState {
            config,
            ids: ids.to_vec(),
            first: ids.iter().map(zeros).collect(),
            second: ids.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One Adam update of every managed parameter, then clears their gradients.
    ///
    /// Weight decay enters as `g + λθ`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for &id in &self.ids {
            if !store.get(id).has_grad {
                return Err(Error::Contract(format!(
                    "parameter '{}' has no gradient for this step",
                    store.name(id)
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            weight_decay,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (k, &id) in self.ids.iter().enumerate() {
            let p = store.get_mut(id);
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            for (((theta, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data_mut().iter_mut())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let grad = *g + weight_decay * *theta;
                *m = beta1 * *m + (1.0 - beta1) * grad;
                *v = beta2 * *v + (1.0 - beta2) * grad * grad;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                *g = 0.0;
            }
            p.has_grad = false;
        }
        Ok(())
    }
}
