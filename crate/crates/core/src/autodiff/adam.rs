use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state with zeroed moments for parameters of the given sizes.
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() || p.numel() != self.m[i].len() {
                return Err(Error::shape(
                    "adam_step",
                    format!("param {i}: {} values, gradient {}", p.numel(), g.len()),
                ));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                let gj = grads[i][j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *x -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Tensor::row(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut s = AdamState::new(0.1, &[3]);
        for _ in 0..5 {
            s.step(&mut [&mut p], &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.t, 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -7.0, 250.0] {
            let mut p = Tensor::row(vec![0.0]);
            let mut s = AdamState::new(1e-2, &[1]);
            s.step(&mut [&mut p], &[vec![g]]).unwrap();
            let expected = -1e-2 * g / (g.abs() + 1e-8);
            assert!((p.item() - expected).abs() < 1e-15);
            assert!((p.item().abs() - 1e-2).abs() < 1e-7);
        }
    }

    #[test]
    fn two_steps_match_scalar_trace() {
        let (lr, b1, b2, eps, g) = (0.05, 0.9, 0.999, 1e-8, 0.3);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        let mut p = Tensor::row(vec![1.0]);
        let mut s = AdamState::new(lr, &[1]);
        s.step(&mut [&mut p], &[vec![g]]).unwrap();
        s.step(&mut [&mut p], &[vec![g]]).unwrap();
        assert!((p.item() - x).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::row(vec![0.0, 0.0]);
        let mut s = AdamState::new(0.1, &[2]);
        assert!(s.step(&mut [&mut p], &[vec![0.0]]).is_err());
    }
}
