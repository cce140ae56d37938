use serde::{Deserialize, Serialize};

use crate::numerics::{Real, Tensor};

/// Adaptive moment estimation over a flat list of parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adam {
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(shapes: &[Vec<usize>], beta1: Real, beta2: Real, eps: Real) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
        }
    }

    /// Zeroes both moments and the step counter.
    pub fn reset(&mut self) {
        self.t = 0;
        for t in self.m.iter_mut().chain(self.v.iter_mut()) {
            t.data_mut().fill(0.0);
        }
    }

    /// Applies one update. Entries whose gradient is `None` are left alone,
    /// moments included.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>], lr: Real) {
        self.begin_step();
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if let Some(g) = g {
                self.update(i, p, g, lr);
            }
        }
    }

    /// Advances the step counter; follow with one [`Adam::update`] per
    /// parameter that has a gradient.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, i: usize, p: &mut Tensor, g: &Tensor, lr: Real) {
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
            v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *w -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

pub fn global_norm(grads: &[Option<Tensor>]) -> Real {
    grads.iter().flatten().map(Tensor::sum_of_squares).sum::<Real>().sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Option<Tensor>], max_norm: Real) -> Real {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    norm
}
