//! Adam optimizer over a parameter store.

use crate::error::{Error, Result};
use crate::networks::ParameterStore;
use crate::scalar::Scalar;

/// Adam with L2 weight decay folded into the gradient.
pub struct Adam<S: Scalar> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(store: &ParameterStore<S>, lr: f64, betas: (f64, f64), weight_decay: f64) -> Adam<S> {
        let m = store
            .entries()
            .map(|(_, t)| vec![S::ZERO; t.numel()])
            .collect();
        let v = store
            .entries()
            .map(|(_, t)| vec![S::ZERO; t.numel()])
            .collect();
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m,
            v,
        }
    }

    /// Apply one update. `grads` must hold one buffer per parameter, in store
    /// order, each matching its parameter's length.
    pub fn step(&mut self, store: &mut ParameterStore<S>, grads: &[Vec<S>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::arg(
                "adam",
                format!("{} gradient buffers for {} parameters", grads.len(), self.m.len()),
            ));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2) = (S::from_f64(self.beta1), S::from_f64(self.beta2));
        let (ob1, ob2) = (S::from_f64(1.0 - self.beta1), S::from_f64(1.0 - self.beta2));
        let wd = S::from_f64(self.weight_decay);
        let scale = S::from_f64(self.lr / bc1);
        let v_scale = S::from_f64(1.0 / bc2);
        let eps = S::from_f64(self.eps);

        for (pi, (_, tensor)) in store.entries_mut().enumerate() {
            let g = &grads[pi];
            if g.len() != tensor.numel() {
                return Err(Error::shape(
                    "adam",
                    format!("gradient {pi} has {} elements, parameter has {}", g.len(), tensor.numel()),
                ));
            }
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                let grad = g[i] + wd * *p;
                m[i] = b1 * m[i] + ob1 * grad;
                v[i] = b2 * v[i] + ob2 * grad * grad;
                let denom = (v[i] * v_scale).sqrt() + eps;
                *p = *p - scale * m[i] / denom;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{build_network, NetworkSpec, Role};

    #[test]
    fn descends_on_a_quadratic() {
        // Minimize sum(p^2) over every parameter of a tiny net.
        let spec = NetworkSpec::new(Role::Depth, 16, 16, vec![2, 2, 2]).unwrap();
        let mut store = build_network::<f64>(&spec, 1).unwrap();
        let mut adam = Adam::new(&store, 0.05, (0.9, 0.999), 0.0);
        let objective = |s: &ParameterStore<f64>| -> f64 {
            s.entries()
                .flat_map(|(_, t)| t.data().iter())
                .map(|&p| p * p)
                .sum()
        };
        let before = objective(&store);
        for _ in 0..200 {
            let grads: Vec<Vec<f64>> = store
                .entries()
                .map(|(_, t)| t.data().iter().map(|&p| 2.0 * p).collect())
                .collect();
            adam.step(&mut store, &grads).unwrap();
        }
        let after = objective(&store);
        assert!(after < before * 1e-2, "no descent: {before} -> {after}");
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let spec = NetworkSpec::new(Role::Depth, 16, 16, vec![2, 2, 2]).unwrap();
        let mut store = build_network::<f32>(&spec, 1).unwrap();
        let mut adam = Adam::new(&store, 0.001, (0.9, 0.999), 0.0);
        assert!(adam.step(&mut store, &[]).is_err());
    }
}
