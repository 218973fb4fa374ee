use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
}

impl AdamState {
    pub fn new(params: &[DMatrix<f64>]) -> Self {
        let zeros: Vec<DMatrix<f64>> = params.iter().map(|p| DMatrix::zeros(p.nrows(), p.ncols())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [DMatrix<f64>], grads: &[DMatrix<f64>], state: &mut AdamState, hp: &AdamParams) -> Result<()> {
    check_len("gradient tensors", params.len(), grads.len())?;
    check_len("moment tensors", params.len(), state.m.len())?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for k in 0..params.len() {
        check_len("gradient size", params[k].len(), grads[k].len())?;
        let (p, g, m, v) = (
            params[k].as_mut_slice(),
            grads[k].as_slice(),
            state.m[k].as_mut_slice(),
            state.v[k].as_mut_slice(),
        );
        for i in 0..p.len() {
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_element(1, 1, v)]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(1.5);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &scalar(0.0), &mut st, &AdamParams::default()).unwrap();
        assert_eq!(p[0][0], 1.5);
        assert_eq!((st.m[0][0], st.v[0][0]), (0.0, 0.0));
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = scalar(1.5);
        let mut st = AdamState::new(&p);
        st.m[0][0] = 0.4;
        st.v[0][0] = 0.2;
        adam_step(&mut p, &scalar(0.0), &mut st, &AdamParams::default()).unwrap();
        assert!((st.m[0][0] - 0.36).abs() < 1e-15);
        assert!((st.v[0][0] - 0.2 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let hp = AdamParams {
            learning_rate: 0.01,
            ..AdamParams::default()
        };
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0][0];
            adam_step(&mut p, &scalar(-3.0), &mut st, &hp).unwrap();
            last = p[0][0] - before;
        }
        assert!((last - 0.01).abs() < 1e-8);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        let hp = AdamParams {
            learning_rate: 0.01,
            ..AdamParams::default()
        };
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p);
        for _ in 0..10_000 {
            let g = 2.0 * (p[0][0] - 3.0);
            adam_step(&mut p, &scalar(g), &mut st, &hp).unwrap();
        }
        assert!((p[0][0] - 3.0).abs() < 1e-3);
    }
}
