use crate::error::{Error, Result};
use crate::transformer::Real;

/// Adam with bias correction over an ordered list of flat tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update. Moments are created on first use and must keep their shapes afterwards.
    pub fn step(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::State("parameter and gradient lists differ in length".into()));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || params
                .iter()
                .zip(&grads)
                .zip(&self.m)
                .any(|((p, g), m)| p.len() != g.len() || g.len() != m.len())
        {
            return Err(Error::State("optimizer moments do not match parameters".into()));
        }
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::lit(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::lit(self.learning_rate);
        let eps = T::lit(self.eps);
        let one = T::one();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_stepped_recurrence() {
        // Minimize θ² from θ = 1 with a hand-written Adam loop as oracle.
        let mut opt = Adam::<f64>::new(0.1);
        let mut theta = [1.0f64];
        let (mut m, mut v, mut want) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=3 {
            let g = [2.0 * theta[0]];
            opt.step(vec![&mut theta[..]], vec![&g[..]]).unwrap();
            let gw = 2.0 * want;
            m = 0.9 * m + 0.1 * gw;
            v = 0.999 * v + 0.001 * gw * gw;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            want -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((theta[0] - want).abs() < 1e-12);
        }
        assert_eq!(opt.t, 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::<f64>::new(0.01);
        let mut p = [0.5, -0.5];
        opt.step(vec![&mut p[..]], vec![&[3.0, -7.0][..]]).unwrap();
        assert!((p[0] - 0.49).abs() < 1e-9);
        assert!((p[1] + 0.49).abs() < 1e-9);
    }

    #[test]
    fn shape_change_is_state_error() {
        let mut opt = Adam::<f32>::new(0.01);
        let mut p = [0.0f32; 2];
        opt.step(vec![&mut p[..]], vec![&[1.0, 1.0][..]]).unwrap();
        let mut q = [0.0f32; 3];
        assert!(matches!(
            opt.step(vec![&mut q[..]], vec![&[1.0, 1.0, 1.0][..]]),
            Err(Error::State(_))
        ));
    }
}
