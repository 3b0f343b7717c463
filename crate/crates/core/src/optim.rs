//! Adaptive-moment gradient ascent.

/// Adam optimizer state for a flat parameter vector. Steps perform gradient
/// ascent (parameters move along the gradient).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Adam::with_coefficients(dim, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_coefficients(dim: usize, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// Apply one ascent step in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] += self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascends_a_concave_quadratic() {
        // maximize -(x - 3)^2, gradient -2(x - 3)
        let mut opt = Adam::new(1, 0.1);
        let mut x = vec![0.0];
        for _ in 0..500 {
            let g = vec![-2.0 * (x[0] - 3.0)];
            opt.step(&mut x, &g);
        }
        assert!((x[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // with bias correction the first step is lr * sign(grad)
        let mut opt = Adam::new(2, 0.01);
        let mut x = vec![0.0, 0.0];
        opt.step(&mut x, &[5.0, -0.3]);
        assert!((x[0] - 0.01).abs() < 1e-9);
        assert!((x[1] + 0.01).abs() < 1e-9);
    }
}
