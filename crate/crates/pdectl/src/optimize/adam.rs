//! Moment-based gradient descent with bias correction, over flat parameter
//! vectors and over named parameter sets.

use std::collections::BTreeMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nets::ParamSet;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(learning_rate: f64, len: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One update over a flat parameter vector.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn restore(
        learning_rate: f64,
        step: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::ShapeMismatch("moment lengths differ".into()));
        }
        Ok(Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step,
            m,
            v,
        })
    }
}

/// One optimizer state per named parameter array, with a shared step count.
pub struct NamedAdam {
    states: BTreeMap<String, AdamState>,
    pub learning_rate: f64,
}

impl NamedAdam {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        let states = params
            .iter()
            .map(|(k, t)| (k.clone(), AdamState::new(learning_rate, t.len())))
            .collect();
        Self {
            states,
            learning_rate,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
        for s in self.states.values_mut() {
            s.learning_rate = lr;
        }
    }

    /// Apply one step; missing gradients leave their parameters unchanged.
    pub fn update(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, grad) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name}")))?;
            if p.len() != grad.len() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient length mismatch for {name}"
                )));
            }
            let s = self.states.get_mut(name).expect("state exists per param");
            s.update(p.data_mut(), grad.data());
        }
        Ok(())
    }

    pub fn states(&self) -> &BTreeMap<String, AdamState> {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut BTreeMap<String, AdamState> {
        &mut self.states
    }

    /// Rebuild an optimizer from serialized first/second moments; parameters
    /// without stored moments start fresh.
    pub fn from_moments(
        params: &ParamSet,
        learning_rate: f64,
        step: u64,
        mut moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        let mut states = BTreeMap::new();
        for (k, t) in params {
            let st = match moments.remove(k) {
                Some((m, v)) => {
                    if m.len() != t.len() {
                        return Err(Error::ShapeMismatch(format!(
                            "stored moments for {k} have wrong length"
                        )));
                    }
                    let mut st = AdamState::restore(learning_rate, step, m, v)?;
                    st.learning_rate = learning_rate;
                    st
                }
                None => AdamState::new(learning_rate, t.len()),
            };
            states.insert(k.clone(), st);
        }
        Ok(Self {
            states,
            learning_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut st = AdamState::new(0.1, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        for _ in 0..5 {
            st.update(&mut p, &[0.0, 0.0, 0.0]);
        }
        for (a, b) in p.iter().zip(&before) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut st = AdamState::new(0.05, 1);
        let mut p = vec![0.0];
        st.update(&mut p, &[3.7]);
        assert!((p[0] + 0.05).abs() < 1e-6, "step was {}", p[0]);
        let mut st = AdamState::new(0.05, 1);
        let mut p = vec![0.0];
        st.update(&mut p, &[-0.002]);
        assert!((p[0] - 0.05).abs() < 1e-4, "step was {}", p[0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut st = AdamState::new(0.1, 2);
        let mut p = vec![3.0, -4.0];
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            st.update(&mut p, &g);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3), "ended at {p:?}");
    }
}
