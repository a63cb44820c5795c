//! Adam with bias correction. Moment slots are positional: the caller must
//! present the same parameter list, in the same order, on every step — the
//! networks' `named_params_mut` order guarantees that here.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    step: i32,
    /// (first moment, second moment) per parameter, created on first use.
    slots: Vec<(Matrix, Matrix)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, step: 0, slots: Vec::new() }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// One update over all parameters. `grads` must align with `params`;
    /// a non-finite gradient or updated value aborts, naming the parameter.
    pub fn step(&mut self, params: Vec<(String, &mut Matrix)>, grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Contract(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|(_, p)| {
                    let (r, c) = p.shape();
                    (Matrix::zeros(r, c), Matrix::zeros(r, c))
                })
                .collect();
        } else if self.slots.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer created for {} parameters, got {}",
                self.slots.len(),
                params.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (((name, param), grad), (m, v)) in
            params.into_iter().zip(grads).zip(self.slots.iter_mut())
        {
            if param.shape() != grad.shape() {
                return Err(Error::Contract(format!(
                    "gradient shape {:?} does not match parameter {name} {:?}",
                    grad.shape(),
                    param.shape()
                )));
            }
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
            let g = grad.data();
            let p = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for k in 0..p.len() {
                md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * g[k];
                vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = md[k] / bc1;
                let v_hat = vd[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            if !param.is_finite() {
                return Err(Error::NonFinite(format!("{name} after update")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> Matrix {
        Matrix::scalar(v)
    }

    #[test]
    fn first_step_moves_by_almost_exactly_lr() {
        // Bias correction cancels on step one: update = lr * g/|g| / (1 + eps').
        let mut adam = Adam::new(1e-3, 0.9, 0.999);
        let mut theta = single(0.0);
        adam.step(vec![("theta".into(), &mut theta)], &[single(1.0)]).unwrap();
        let got = theta.get(0, 0);
        assert!((got + 1e-3).abs() < 1e-10, "{got}");
    }

    #[test]
    fn zero_gradients_leave_parameters_alone() {
        let mut adam = Adam::new(0.1, 0.9, 0.999);
        let mut theta = single(0.75);
        for _ in 0..5 {
            adam.step(vec![("theta".into(), &mut theta)], &[single(0.0)]).unwrap();
        }
        assert_eq!(theta.get(0, 0), 0.75);
    }

    #[test]
    fn quadratic_descent_matches_scalar_simulation() {
        // Optimize f(theta) = theta^2 from 1 and mirror every update with a
        // plain scalar re-implementation of the same recursion.
        let (lr, b1, b2) = (0.05, 0.9, 0.999);
        let mut adam = Adam::new(lr, b1, b2);
        let mut theta = single(1.0);
        let (mut sm, mut sv, mut st) = (0.0, 0.0, 1.0_f64);
        for step in 1..=100 {
            let g = 2.0 * theta.get(0, 0);
            adam.step(vec![("theta".into(), &mut theta)], &[single(g)]).unwrap();
            let g2 = 2.0 * st;
            sm = b1 * sm + (1.0 - b1) * g2;
            sv = b2 * sv + (1.0 - b2) * g2 * g2;
            let bc1 = 1.0 - b1.powi(step);
            let bc2 = 1.0 - b2.powi(step);
            st -= lr * (sm / bc1) / ((sv / bc2).sqrt() + ADAM_EPS);
            assert!(
                (theta.get(0, 0) - st).abs() < 1e-15,
                "step {step}: {} vs {st}",
                theta.get(0, 0)
            );
        }
        assert!(theta.get(0, 0).abs() < 0.5, "{}", theta.get(0, 0));
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut adam = Adam::new(0.1, 0.9, 0.999);
        let mut theta = single(0.0);
        let err = adam
            .step(vec![("gen.h0.w".into(), &mut theta)], &[single(f64::NAN)])
            .unwrap_err();
        match err {
            Error::NonFinite(msg) => assert!(msg.contains("gen.h0.w"), "{msg}"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn slot_count_drift_is_rejected() {
        let mut adam = Adam::new(0.1, 0.9, 0.999);
        let mut a = single(0.0);
        let mut b = single(0.0);
        adam.step(
            vec![("a".into(), &mut a), ("b".into(), &mut b)],
            &[single(1.0), single(1.0)],
        )
        .unwrap();
        let err = adam.step(vec![("a".into(), &mut a)], &[single(1.0)]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
