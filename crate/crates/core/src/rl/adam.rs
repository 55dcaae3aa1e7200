//! Adam with bias correction and optional global-norm gradient clipping.

use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm above which gradients are rescaled.
    pub clip_norm: Option<f64>,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64, clip_norm: Option<f64>) -> Self {
        Self { lr, beta1, beta2, eps, clip_norm, m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "optimizer built for a different parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        let scale = match self.clip_norm {
            Some(c) => {
                let norm = grads.iter().map(|g| g.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let step = T::lit(self.lr / c1);
        let root_c2 = T::lit(c2.sqrt());
        let eps = T::lit(self.eps);
        let scale = T::lit(scale);
        let one = T::one();
        for i in 0..params.len() {
            let g = grads[i] * scale;
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() / root_c2 + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0f64, -2.0, 3.0];
        let mut opt = Adam::new(3, 1e-3, 0.9, 0.999, 1e-8, None);
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]);
        }
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut p = vec![0.0f64; 2];
        let mut opt = Adam::new(2, 1e-4, 0.9, 0.999, 1e-8, None);
        let mut last = p.clone();
        for _ in 0..2000 {
            opt.step(&mut p, &[0.5, -3.0]);
            let d0 = p[0] - last[0];
            let d1 = p[1] - last[1];
            assert!((d0 + 1e-4).abs() < 1e-9 && (d1 - 1e-4).abs() < 1e-9);
            last = p.clone();
        }
    }

    #[test]
    fn clipping_bounds_the_first_step() {
        let mut a = vec![0.0f64; 2];
        let mut b = vec![0.0f64; 2];
        Adam::new(2, 0.1, 0.9, 0.999, 1e-8, Some(1.0)).step(&mut a, &[30.0, 40.0]);
        Adam::new(2, 0.1, 0.9, 0.999, 1e-8, None).step(&mut b, &[0.6, 0.8]);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3f32; 4];
            let mut opt = Adam::new(4, 1e-2, 0.9, 0.999, 1e-8, Some(10.0));
            for t in 0..50 {
                let g: Vec<f32> = (0..4).map(|i| ((t * 4 + i) as f32).sin()).collect();
                opt.step(&mut p, &g);
            }
            p
        };
        assert_eq!(run(), run());
    }
}
