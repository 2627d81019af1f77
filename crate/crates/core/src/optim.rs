//! Best-response rules: the parameter updates applied after each backward pass.

use std::fmt;
use std::str::FromStr;

use crate::error::{config, usage, Result};
use crate::lens::DenseParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(usage(format!("learning rate {lr} must be positive")));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps, .. } = *self {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                return Err(usage(format!("Adam betas ({beta1}, {beta2}) must lie in [0, 1)")));
            }
            if !(eps > 0.0) {
                return Err(usage(format!("Adam epsilon {eps} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Sgd { .. } => f.write_str("sgd"),
            OptimizerKind::Adam { .. } => f.write_str("adam"),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = crate::Error;

    /// `sgd` or `adam` with default hyperparameters.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::sgd(1e-3)),
            "adam" => Ok(Self::default()),
            other => Err(usage(format!("unknown optimizer '{other}' (expected sgd or adam)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first_moment: Vec<DenseParams>,
    second_moment: Vec<DenseParams>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            t: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[DenseParams], &[DenseParams]) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn step(&mut self, params: &mut [DenseParams], grads: &[DenseParams]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| !p.same_shape(g)) {
            return Err(config("gradient layout does not match parameters"));
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (theta, &gi) in p.values_mut().zip(g.values()) {
                        *theta -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                if self.first_moment.is_empty() {
                    self.first_moment = zeros_like(params);
                    self.second_moment = zeros_like(params);
                } else if self.first_moment.len() != params.len()
                    || self.first_moment.iter().zip(params.iter()).any(|(m, p)| !m.same_shape(p))
                {
                    return Err(config("Adam accumulators do not match parameters"));
                }
                let t = self.t as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for (((theta, &gi), mi), vi) in
                        p.values_mut().zip(g.values()).zip(m.values_mut()).zip(v.values_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

fn zeros_like(params: &[DenseParams]) -> Vec<DenseParams> {
    params.iter().map(|p| DenseParams::zeros(p.n_out(), p.n_in())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lens::Matrix;

    fn scalar(v: f64) -> Vec<DenseParams> {
        vec![DenseParams::new(Matrix::from_vec(1, 1, vec![v]).unwrap(), vec![v]).unwrap()]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in [OptimizerKind::sgd(0.1), OptimizerKind::default()] {
            let mut opt = Optimizer::new(kind).unwrap();
            let mut p = scalar(1.25);
            for _ in 0..5 {
                opt.step(&mut p, &scalar(0.0)).unwrap();
            }
            assert_eq!(p, scalar(1.25));
        }
    }

    #[test]
    fn sgd_example() {
        let mut opt = Optimizer::new(OptimizerKind::sgd(0.1)).unwrap();
        let mut p = scalar(1.0);
        opt.step(&mut p, &scalar(2.0)).unwrap();
        assert!((p[0].bias[0] - 0.8).abs() < 1e-15);
        assert!((p[0].weights.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Optimizer::new(OptimizerKind::default()).unwrap();
        let mut p = scalar(0.0);
        opt.step(&mut p, &scalar(1.0)).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps)
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0].bias[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_moments_stay_finite() {
        let mut opt = Optimizer::new(OptimizerKind::default()).unwrap();
        let mut p = scalar(0.0);
        for i in 0..1000 {
            let g = if i % 2 == 0 { 1e6 } else { -1e6 };
            opt.step(&mut p, &scalar(g)).unwrap();
        }
        let (m, v) = opt.moments();
        assert!(m.iter().chain(v).flat_map(|d| d.values()).all(|x| x.is_finite()));
        assert_eq!(opt.steps(), 1000);
    }

    #[test]
    fn rejects_bad_settings_and_shapes() {
        assert!(Optimizer::new(OptimizerKind::sgd(0.0)).is_err());
        assert!(Optimizer::new(OptimizerKind::Adam { lr: 1e-3, beta1: 1.0, beta2: 0.9, eps: 1e-8 }).is_err());
        let mut opt = Optimizer::new(OptimizerKind::sgd(0.1)).unwrap();
        let mut p = scalar(0.0);
        assert!(opt.step(&mut p, &[DenseParams::zeros(2, 1)]).is_err());
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
        assert_eq!("Adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::default());
    }
}
