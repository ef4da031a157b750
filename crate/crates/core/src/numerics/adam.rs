use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// Moment estimates for every parameter of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Rebuilds a state from saved moments.
    pub fn from_parts(
        config: AdamConfig,
        step: u64,
        first: Vec<Tensor>,
        second: Vec<Tensor>,
    ) -> Result<Self> {
        if first.len() != second.len()
            || first.iter().zip(&second).any(|(m, v)| m.shape() != v.shape())
        {
            return Err(Error::dim("first and second moments disagree in shape"));
        }
        Ok(AdamState {
            config,
            step,
            first,
            second,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Applies one bias-corrected update using the gradients held in `store`.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        for (_, p) in store.iter() {
            if p.trainable && !p.grad.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in parameter `{}`",
                    p.name
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let m = self.first[id.index()].data_mut();
            let v = self.second[id.index()].data_mut();
            let grad = p.grad.data().to_vec();
            for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[i] + weight_decay * *theta;
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> (ParamStore, crate::numerics::ParamId) {
        let mut s = ParamStore::new();
        let id = s.register("theta", Tensor::scalar(v)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let (mut s, id) = scalar_store(0.7);
        let mut adam = AdamState::new(
            &s,
            AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        for _ in 0..5 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.value(id).item(), 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = scalar_store(1.0);
        let mut adam = AdamState::new(
            &s,
            AdamConfig {
                lr: 0.1,
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        s.get_mut(id).grad = Tensor::scalar(1.0);
        adam.step(&mut s).unwrap();
        // m_hat / sqrt(v_hat) = 1 on the first step
        assert!((s.value(id).item() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let (mut s, id) = scalar_store(1.0);
        let mut adam = AdamState::new(
            &s,
            AdamConfig {
                lr: 0.05,
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        for _ in 0..200 {
            let theta = s.value(id).item();
            s.get_mut(id).grad = Tensor::scalar(2.0 * theta);
            adam.step(&mut s).unwrap();
        }
        assert!(s.value(id).item().abs() < 1e-2, "theta = {}", s.value(id).item());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut s, id) = scalar_store(1.0);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        s.get_mut(id).grad = Tensor::scalar(f64::NAN);
        let err = adam.step(&mut s).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(adam.step_count(), 0);
        assert_eq!(s.value(id).item(), 1.0);
    }
}
