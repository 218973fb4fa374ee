//! Multilayer perceptron with an affine decoder and optional linear bypass.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, LpvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(&self, z: &mut DMatrix<f64>) {
        if let Self::Tanh = self {
            z.apply(|v| *v = v.tanh());
        }
    }

    /// Derivative expressed through the activation value.
    fn derivative_from_output(&self, a: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - a * a,
            Self::Identity => 1.0,
        }
    }
}

/// Shape of a network: encoder widths `[n_in, h_1, ..., h_k, n_theta_hat]`,
/// decoder output width and bypass flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub n_out: usize,
    pub bypass: bool,
    pub activation: Activation,
}

impl Architecture {
    pub fn n_in(&self) -> usize {
        self.widths[0]
    }

    pub fn n_theta_hat(&self) -> usize {
        *self.widths.last().expect("at least input and code widths")
    }

    pub fn encoder_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Parameter shapes in storage order: `(W, b)` per encoder layer, then
    /// the decoder `(W_Gamma, b_Gamma)`, then the bypass matrix if enabled.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = Vec::new();
        for w in self.widths.windows(2) {
            s.push((w[1], w[0]));
            s.push((w[1], 1));
        }
        s.push((self.n_out, self.n_theta_hat()));
        s.push((self.n_out, 1));
        if self.bypass {
            s.push((self.n_out, self.n_in()));
        }
        s
    }

    /// Whether the parameter at `index` is a weight matrix (regularized).
    pub fn is_weight(&self, index: usize) -> bool {
        index % 2 == 0
    }
}

/// Activations of one forward pass, kept for back-propagation.
pub struct ForwardCache {
    /// `activations[0]` is the input batch; `activations[l]` the output of encoder layer `l`.
    pub activations: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    pub arch: Architecture,
    pub params: Vec<DMatrix<f64>>,
}

impl MlpNetwork {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        if arch.widths.len() < 2 || arch.widths.iter().any(|&w| w == 0) || arch.n_out == 0 {
            return Err(LpvError::InvalidArgument(format!(
                "invalid network widths {:?} -> {}",
                arch.widths, arch.n_out
            )));
        }
        let params = arch.shapes().into_iter().map(|(r, c)| DMatrix::zeros(r, c)).collect();
        Ok(Self { arch, params })
    }

    /// Glorot-uniform weights, zero biases, zero bypass.
    pub fn glorot(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let n_enc = net.arch.encoder_layers();
        for (k, p) in net.params.iter_mut().enumerate() {
            let is_layer_weight = k % 2 == 0 && k <= 2 * n_enc;
            if is_layer_weight {
                let bound = (6.0 / (p.nrows() + p.ncols()) as f64).sqrt();
                p.apply(|v| *v = rng.gen_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<DMatrix<f64>>) -> Result<Self> {
        let shapes = arch.shapes();
        check_len("network parameter count", shapes.len(), params.len())?;
        for (k, (p, s)) in params.iter().zip(&shapes).enumerate() {
            if p.shape() != *s {
                return Err(LpvError::DimensionMismatch {
                    what: format!("network parameter {k}"),
                    expected: s.0 * s.1,
                    got: p.len(),
                });
            }
        }
        Ok(Self { arch, params })
    }

    pub fn weight(&self, layer: usize) -> &DMatrix<f64> {
        &self.params[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &DMatrix<f64> {
        &self.params[2 * layer + 1]
    }

    pub fn decoder_weight(&self) -> &DMatrix<f64> {
        &self.params[2 * self.arch.encoder_layers()]
    }

    pub fn decoder_bias(&self) -> DVector<f64> {
        self.params[2 * self.arch.encoder_layers() + 1].column(0).into_owned()
    }

    pub fn bypass(&self) -> Option<&DMatrix<f64>> {
        self.arch.bypass.then(|| &self.params[2 * self.arch.encoder_layers() + 2])
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Encoder output `theta_hat` for a batch of inputs (one per column).
    pub fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(x)?.activations.pop().expect("encoder has layers"))
    }

    /// `W_Gamma theta_hat + b_Gamma` (+ bypass term when `x` is given).
    pub fn decode(&self, theta: &DMatrix<f64>, x: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let mut out = self.decoder_weight() * theta;
        let b = self.decoder_bias();
        for mut col in out.column_iter_mut() {
            col += &b;
        }
        if let (Some(p), Some(x)) = (self.bypass(), x) {
            out += p * x;
        }
        out
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        check_len("network input width", self.arch.n_in(), x.nrows())?;
        let mut activations = Vec::with_capacity(self.arch.widths.len());
        activations.push(x.clone());
        for l in 0..self.arch.encoder_layers() {
            let prev = activations.last().expect("non-empty");
            let mut z = self.weight(l) * prev;
            let b = self.bias(l).column(0);
            for mut col in z.column_iter_mut() {
                col += &b;
            }
            self.arch.activation.apply(&mut z);
            activations.push(z);
        }
        let output = self.decode(activations.last().expect("non-empty"), Some(x));
        Ok(ForwardCache { activations, output })
    }

    /// Mean squared reconstruction loss `(1/B) sum_j |out_j - y_j|^2` plus
    /// `l2 * sum |W|^2` over weight matrices.
    pub fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, l2: f64) -> Result<f64> {
        let out = self.forward(x)?.output;
        Ok(data_loss(&out, y) + l2 * self.weight_penalty())
    }

    pub fn weight_penalty(&self) -> f64 {
        self.params
            .iter()
            .enumerate()
            .filter(|(k, _)| self.arch.is_weight(*k))
            .map(|(_, p)| p.norm_squared())
            .sum()
    }

    /// Sum over the batch of the per-sample squared-error gradients (no
    /// `1/B`, no regularization), so batches can be split and summed.
    pub fn gradient_sum(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<DMatrix<f64>>)> {
        check_len("target width", self.arch.n_out, y.nrows())?;
        check_len("batch size", x.ncols(), y.ncols())?;
        let cache = self.forward(x)?;
        let diff = &cache.output - y;
        let sse = diff.norm_squared();
        let delta_out = diff * 2.0;
        let mut grads: Vec<DMatrix<f64>> = self.params.iter().map(|p| DMatrix::zeros(p.nrows(), p.ncols())).collect();
        let n_enc = self.arch.encoder_layers();
        let code = &cache.activations[n_enc];
        grads[2 * n_enc] = &delta_out * code.transpose();
        grads[2 * n_enc + 1] = row_sums(&delta_out);
        if self.arch.bypass {
            grads[2 * n_enc + 2] = &delta_out * x.transpose();
        }
        let mut delta_a = self.decoder_weight().transpose() * &delta_out;
        for l in (0..n_enc).rev() {
            let a = &cache.activations[l + 1];
            let act = self.arch.activation;
            let delta_z = delta_a.zip_map(a, |d, av| d * act.derivative_from_output(av));
            grads[2 * l] = &delta_z * cache.activations[l].transpose();
            grads[2 * l + 1] = row_sums(&delta_z);
            if l > 0 {
                delta_a = self.weight(l).transpose() * &delta_z;
            }
        }
        Ok((sse, grads))
    }

    /// Gradient of [`MlpNetwork::loss`].
    pub fn gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, l2: f64) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let (sse, mut grads) = self.gradient_sum(x, y)?;
        let inv_b = 1.0 / x.ncols() as f64;
        for (k, g) in grads.iter_mut().enumerate() {
            *g *= inv_b;
            if self.arch.is_weight(k) && l2 > 0.0 {
                *g += &self.params[k] * (2.0 * l2);
            }
        }
        Ok((sse * inv_b + l2 * self.weight_penalty(), grads))
    }
}

pub fn data_loss(out: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (out - y).norm_squared() / out.ncols().max(1) as f64
}

fn row_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), 1, |i, _| m.row(i).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(widths: Vec<usize>, n_out: usize, bypass: bool, activation: Activation) -> Architecture {
        Architecture {
            widths,
            n_out,
            bypass,
            activation,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNetwork::zeros(arch(vec![3, 4, 2], 5, false, Activation::Tanh)).unwrap();
        let x = DMatrix::from_element(3, 2, 0.7);
        let cache = net.forward(&x).unwrap();
        assert_eq!(cache.output, DMatrix::zeros(5, 2));
        assert_eq!(cache.activations[2], DMatrix::zeros(2, 2));
    }

    #[test]
    fn linear_network_is_a_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = arch(vec![3, 2], 4, false, Activation::Identity);
        let net = MlpNetwork::glorot(a, &mut rng).unwrap();
        let x = DMatrix::from_fn(3, 5, |i, j| (i as f64) - 0.3 * j as f64);
        let expect = net.decoder_weight() * net.weight(0) * &x;
        assert!((net.forward(&x).unwrap().output - expect).amax() < 1e-14);
    }

    #[test]
    fn weight_flags() {
        let a = arch(vec![3, 4, 2], 5, true, Activation::Tanh);
        let flags: Vec<bool> = (0..a.shapes().len()).map(|k| a.is_weight(k)).collect();
        assert_eq!(flags, vec![true, false, true, false, true, false, true]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = MlpNetwork::zeros(arch(vec![3, 2], 1, false, Activation::Tanh)).unwrap();
        assert!(net.forward(&DMatrix::zeros(2, 1)).is_err());
    }
}
