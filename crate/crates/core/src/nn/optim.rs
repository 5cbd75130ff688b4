use ndarray::Zip;

use super::graph::Mat;
use super::params::{ParamGrads, ParamStore};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = |_| -> Vec<Mat> {
            store
                .ids()
                .map(|id| Mat::zeros(store.get(id).raw_dim()))
                .collect()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(()),
            v: zeros(()),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let lr = self.lr;
        for id in store.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id) else { continue };
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            Zip::from(store.get_mut(id))
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *w -= lr * mh / (vh.sqrt() + eps);
                });
        }
    }
}
