//! Learned scheduling reduction: a tanh MLP encoder `(x, u) -> theta_hat`
//! followed by an affine decoder `theta_hat -> Gamma_hat`.

mod adam;
mod mlp;

use std::path::Path;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use adam::{adam_step, AdamParams, AdamState};
pub use mlp::{data_loss, Activation, Architecture, ForwardCache, MlpNetwork};

use crate::container::{fmt_f64, write_csv, Container, NamedArray};
use crate::error::{check_len, LpvError, Result};
use crate::lpv::{unvec_gamma, unvec_gamma_into, AffineLpvModel, GammaLayout, SchedulingReduction, VariationDataset};
use crate::model::{Dims, FactorMatrices, FactorizedModel, StateSpacePoint};
use crate::pca::{NormMode, Normalizer};
use crate::region::{build_region, RegionMethod, ScheduledRegion, DEFAULT_MVEE_TOLERANCE};
use crate::sim::SampleSet;

/// Samples per gradient chunk. Chunks are summed in index order, so results
/// do not depend on the number of worker threads.
const GRADIENT_CHUNK: usize = 32;

/// Network input: states with angular coordinates replaced by a block of
/// sines followed by a block of cosines, then the inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub nx: usize,
    pub nu: usize,
    pub angular: Vec<usize>,
}

impl FeatureMap {
    pub fn for_model(model: &dyn FactorizedModel) -> Self {
        let dims = model.dims();
        let mut angular = model.angular_states().to_vec();
        angular.sort_unstable();
        angular.dedup();
        Self {
            nx: dims.nx,
            nu: dims.nu,
            angular,
        }
    }

    pub fn len(&self) -> usize {
        self.nx + self.angular.len() + self.nu
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("feature map state", self.nx, x.len())?;
        check_len("feature map input", self.nu, u.len())?;
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.nx {
            if self.angular.first() == Some(&i) {
                out.extend(self.angular.iter().map(|&a| x[a].sin()));
                out.extend(self.angular.iter().map(|&a| x[a].cos()));
            } else if !self.angular.contains(&i) {
                out.push(x[i]);
            }
        }
        out.extend(u.iter());
        Ok(DVector::from_vec(out))
    }

    /// Features of every sample, one per column.
    pub fn apply_all(&self, points: &[StateSpacePoint]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.len(), points.len());
        for (j, pt) in points.iter().enumerate() {
            m.set_column(j, &self.apply(&pt.x, &pt.u)?);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Widths of the hidden layers before the `theta_hat` layer.
    pub hidden: Vec<usize>,
    pub bypass: bool,
    pub normalization: NormMode,
    pub region_method: RegionMethod,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 128,
            epochs: 200,
            l2: 1e-4,
            seed: 0,
            patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden: vec![64; 4],
            bypass: false,
            normalization: NormMode::Std,
            region_method: RegionMethod::Auto,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(LpvError::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(LpvError::Config("Adam moment parameters must be below 1".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(LpvError::Config(format!("train.l2 must be non-negative, got {}", self.l2)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.patience == 0 {
            return Err(LpvError::Config("batch_size, epochs and patience must be positive".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(LpvError::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingCurve {
    /// Record 0 holds the losses of the initial network.
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingCurve {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// `epoch, train_loss, val_loss, best`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self.records.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_f64(r.train_loss),
                fmt_f64(r.val_loss),
                (r.epoch == self.best_epoch).to_string(),
            ]
        });
        write_csv(path, &["epoch", "train_loss", "val_loss", "best"], rows)
    }
}

/// Mean squared error over all columns, evaluated chunk-wise.
pub fn evaluate_loss(net: &MlpNetwork, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let n = x.ncols();
    if n == 0 {
        return Ok(0.0);
    }
    let chunk = 1024;
    let parts: Vec<f64> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let (s, len) = (c * chunk, chunk.min(n - c * chunk));
            let out = net.forward(&x.columns(s, len).into_owned())?.output;
            Ok((out - y.columns(s, len)).norm_squared())
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() / n as f64)
}

fn gather_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), idx.len());
    for (j, &k) in idx.iter().enumerate() {
        out.set_column(j, &m.column(k));
    }
    out
}

fn batch_gradient(net: &MlpNetwork, x: &DMatrix<f64>, y: &DMatrix<f64>, l2: f64) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let n = x.ncols();
    let parts: Vec<(f64, Vec<DMatrix<f64>>)> = (0..n.div_ceil(GRADIENT_CHUNK))
        .into_par_iter()
        .map(|c| {
            let (s, len) = (c * GRADIENT_CHUNK, GRADIENT_CHUNK.min(n - c * GRADIENT_CHUNK));
            net.gradient_sum(&x.columns(s, len).into_owned(), &y.columns(s, len).into_owned())
        })
        .collect::<Result<_>>()?;
    let mut it = parts.into_iter();
    let (mut sse, mut grads) = it.next().ok_or_else(|| LpvError::Empty("empty minibatch".into()))?;
    for (s, g) in it {
        sse += s;
        for (acc, gi) in grads.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    let inv_b = 1.0 / n as f64;
    for (k, g) in grads.iter_mut().enumerate() {
        *g *= inv_b;
        if net.arch.is_weight(k) && l2 > 0.0 {
            *g += &net.params[k] * (2.0 * l2);
        }
    }
    Ok((sse * inv_b + l2 * net.weight_penalty(), grads))
}

/// Trains `net` in place with minibatch Adam and early stopping on the
/// validation loss; on return `net` holds the weights of the best epoch.
pub fn fit_network(
    net: &mut MlpNetwork,
    train: (&DMatrix<f64>, &DMatrix<f64>),
    val: (&DMatrix<f64>, &DMatrix<f64>),
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingCurve> {
    cfg.validate()?;
    let (xt, yt) = train;
    let (xv, yv) = val;
    check_len("training targets", xt.ncols(), yt.ncols())?;
    check_len("validation targets", xv.ncols(), yv.ncols())?;
    if xt.ncols() == 0 || xv.ncols() == 0 {
        return Err(LpvError::Empty("training and validation sets must be non-empty".into()));
    }
    let hp = cfg.adam();
    let mut state = AdamState::new(&net.params);
    let mut order: Vec<usize> = (0..xt.ncols()).collect();
    let initial = EpochRecord {
        epoch: 0,
        train_loss: evaluate_loss(net, xt, yt)?,
        val_loss: evaluate_loss(net, xv, yv)?,
    };
    let mut curve = TrainingCurve {
        records: vec![initial],
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_params = net.params.clone();
    let mut best_val = initial.val_loss;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = gather_columns(xt, idx);
            let yb = gather_columns(yt, idx);
            let (loss, grads) = batch_gradient(net, &xb, &yb, cfg.l2)?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(LpvError::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (loss {loss}); try a smaller learning rate"
                )));
            }
            adam_step(&mut net.params, &grads, &mut state, &hp)?;
        }
        let rec = EpochRecord {
            epoch,
            train_loss: evaluate_loss(net, xt, yt)?,
            val_loss: evaluate_loss(net, xv, yv)?,
        };
        if !rec.val_loss.is_finite() || !rec.train_loss.is_finite() {
            return Err(LpvError::Training(format!("non-finite loss after epoch {epoch}")));
        }
        debug!("epoch {epoch}: train {:.3e} val {:.3e}", rec.train_loss, rec.val_loss);
        curve.records.push(rec);
        if rec.val_loss < best_val {
            best_val = rec.val_loss;
            best_params.clone_from(&net.params);
            curve.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("early stop at epoch {epoch}; best epoch {}", curve.best_epoch);
                curve.stopped_early = true;
                break;
            }
        }
    }
    net.params = best_params;
    Ok(curve)
}

/// A trained encoder with the affine LPV model its decoder defines.
#[derive(Debug, Clone)]
pub struct DnnReduction {
    pub features: FeatureMap,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    pub net: MlpNetwork,
    pub layout: GammaLayout,
    pub dims: Dims,
    pub region: ScheduledRegion,
    pub lpv: AffineLpvModel,
    pub curve: TrainingCurve,
    pub config: TrainConfig,
}

fn training_matrices(
    features: &FeatureMap,
    samples: &SampleSet,
    ds: &VariationDataset,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let points: Vec<StateSpacePoint> = ds
        .sample_index
        .iter()
        .map(|&k| {
            samples
                .points
                .get(k)
                .cloned()
                .ok_or_else(|| LpvError::InvalidArgument(format!("sample index {k} outside the sample set")))
        })
        .collect::<Result<_>>()?;
    Ok((features.apply_all(&points)?, ds.data.clone()))
}

/// Trains a reduction with `n_theta_hat` encoder outputs. The variation
/// datasets must have been built from the given sample sets.
pub fn train(
    model: &dyn FactorizedModel,
    train_set: (&SampleSet, &VariationDataset),
    val_set: (&SampleSet, &VariationDataset),
    n_theta_hat: usize,
    cfg: &TrainConfig,
) -> Result<DnnReduction> {
    cfg.validate()?;
    if n_theta_hat == 0 {
        return Err(LpvError::InvalidArgument("n_theta_hat must be at least 1".into()));
    }
    let (train_samples, train_ds) = train_set;
    let (val_samples, val_ds) = val_set;
    if train_ds.layout != val_ds.layout {
        return Err(LpvError::InvalidArgument("training and validation layouts differ".into()));
    }
    let features = FeatureMap::for_model(model);
    let (xt, yt) = training_matrices(&features, train_samples, train_ds)?;
    let (xv, yv) = training_matrices(&features, val_samples, val_ds)?;
    let input_norm = Normalizer::fit(&xt, cfg.normalization)?;
    let output_norm = Normalizer::fit(&yt, cfg.normalization)?;
    let (xt, yt) = (input_norm.normalize_columns(&xt)?, output_norm.normalize_columns(&yt)?);
    let (xv, yv) = (input_norm.normalize_columns(&xv)?, output_norm.normalize_columns(&yv)?);

    let mut widths = vec![features.len()];
    widths.extend(&cfg.hidden);
    widths.push(n_theta_hat);
    let arch = Architecture {
        widths,
        n_out: yt.nrows(),
        bypass: cfg.bypass,
        activation: Activation::Tanh,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = MlpNetwork::glorot(arch, &mut rng)?;
    info!(
        "training {} parameters on {} samples (validation {})",
        net.parameter_count(),
        xt.ncols(),
        xv.ncols()
    );
    let curve = fit_network(&mut net, (&xt, &yt), (&xv, &yv), cfg, &mut rng)?;

    let theta = net.encode(&xt)?;
    let points: Vec<DVector<f64>> = theta.column_iter().map(|c| c.into_owned()).collect();
    let region = build_region(&points, cfg.region_method, DEFAULT_MVEE_TOLERANCE)?;
    let lpv = decoder_lpv(&net, &output_norm, &train_ds.mean_matrices, train_ds.layout, &region)?;
    Ok(DnnReduction {
        features,
        input_norm,
        output_norm,
        net,
        layout: train_ds.layout,
        dims: train_ds.dims,
        region,
        lpv,
        curve,
        config: cfg.clone(),
    })
}

impl DnnReduction {
    /// Rebuilds the scheduling region from the encoder image of `samples`.
    pub fn rebound(&mut self, samples: &[StateSpacePoint], method: RegionMethod) -> Result<()> {
        let points = samples.par_iter().map(|pt| self.encode(pt)).collect::<Result<Vec<_>>>()?;
        self.region = build_region(&points, method, DEFAULT_MVEE_TOLERANCE)?;
        self.lpv.region = self.region.bx.clone();
        Ok(())
    }
}

/// `M0 = unvec(S^-1 b + c)`, `M_i = unvec(S^-1 W_i)`. The bypass is not part
/// of the exported model.
fn decoder_lpv(
    net: &MlpNetwork,
    norm: &Normalizer,
    complement: &FactorMatrices,
    layout: GammaLayout,
    region: &ScheduledRegion,
) -> Result<AffineLpvModel> {
    let dims = complement.dims();
    let b = net.decoder_bias();
    let g0 = norm.denormalize(&b)?;
    let m0 = unvec_gamma_into(complement, &g0, layout)?.stacked();
    let coefficients = net
        .decoder_weight()
        .column_iter()
        .map(|col| {
            let g = DVector::from_fn(col.len(), |i, _| col[i] / norm.scale[i]);
            Ok(unvec_gamma(&g, &dims, layout)?.stacked())
        })
        .collect::<Result<Vec<_>>>()?;
    AffineLpvModel::new(dims, m0, coefficients, region.bx.clone(), "dnn")
}

const DNN_META: &str = "dnn";

impl DnnReduction {
    pub fn n_theta_hat(&self) -> usize {
        self.net.arch.n_theta_hat()
    }

    pub fn normalized_features(&self, pt: &StateSpacePoint) -> Result<DVector<f64>> {
        self.input_norm.normalize(&self.features.apply(&pt.x, &pt.u)?)
    }

    pub fn encode(&self, pt: &StateSpacePoint) -> Result<DVector<f64>> {
        let f = self.normalized_features(pt)?;
        let theta = self.net.encode(&DMatrix::from_column_slice(f.len(), 1, f.as_slice()))?;
        Ok(theta.column(0).into_owned())
    }

    /// `Gamma_hat` from `theta_hat`, with the bypass evaluated at `pt` when
    /// the network has one and `pt` is given.
    pub fn reconstruct_gamma(&self, theta: &DVector<f64>, pt: Option<&StateSpacePoint>) -> Result<DVector<f64>> {
        check_len("reduced scheduling vector", self.n_theta_hat(), theta.len())?;
        let x = match (self.net.arch.bypass, pt) {
            (true, Some(pt)) => {
                let f = self.normalized_features(pt)?;
                Some(DMatrix::from_column_slice(f.len(), 1, f.as_slice()))
            }
            _ => None,
        };
        let t = DMatrix::from_column_slice(theta.len(), 1, theta.as_slice());
        let out = self.net.decode(&t, x.as_ref());
        self.output_norm.denormalize(&out.column(0).into_owned())
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = self.lpv.to_container();
        if let serde_json::Value::Object(meta) = &mut c.meta {
            meta.insert(
                DNN_META.into(),
                json!({
                    "architecture": self.net.arch,
                    "features": self.features,
                    "layout": self.layout,
                    "input_mode": self.input_norm.mode,
                    "input_degenerate": self.input_norm.degenerate,
                    "output_mode": self.output_norm.mode,
                    "output_degenerate": self.output_norm.degenerate,
                    "region": self.region,
                    "curve": self.curve,
                    "config": self.config,
                }),
            );
        }
        for (k, p) in self.net.params.iter().enumerate() {
            c.push_matrix(format!("dnn_param_{k}"), p);
        }
        c.push(NamedArray::row_vector("dnn_in_center", &self.input_norm.center));
        c.push(NamedArray::row_vector("dnn_in_scale", &self.input_norm.scale));
        c.push(NamedArray::row_vector("dnn_out_center", &self.output_norm.center));
        c.push(NamedArray::row_vector("dnn_out_scale", &self.output_norm.scale));
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let lpv = AffineLpvModel::from_container(c)?;
        let meta = c
            .meta
            .get(DNN_META)
            .ok_or_else(|| LpvError::Format("LPV container carries no DNN reduction (produced by reduce-dnn?)".into()))?;
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| LpvError::Format(format!("DNN header lacks '{k}'")))
        };
        let arch: Architecture = serde_json::from_value(get("architecture")?)?;
        let params = (0..arch.shapes().len())
            .map(|k| c.matrix(&format!("dnn_param_{k}")))
            .collect::<Result<Vec<_>>>()?;
        let net = MlpNetwork::from_params(arch, params)?;
        let input_norm = Normalizer {
            mode: serde_json::from_value(get("input_mode")?)?,
            center: c.array("dnn_in_center")?.data.clone(),
            scale: c.array("dnn_in_scale")?.data.clone(),
            degenerate: serde_json::from_value(get("input_degenerate")?)?,
        };
        let output_norm = Normalizer {
            mode: serde_json::from_value(get("output_mode")?)?,
            center: c.array("dnn_out_center")?.data.clone(),
            scale: c.array("dnn_out_scale")?.data.clone(),
            degenerate: serde_json::from_value(get("output_degenerate")?)?,
        };
        Ok(Self {
            features: serde_json::from_value(get("features")?)?,
            input_norm,
            output_norm,
            net,
            layout: serde_json::from_value(get("layout")?)?,
            dims: lpv.dims,
            region: serde_json::from_value(get("region")?)?,
            curve: serde_json::from_value(get("curve")?)?,
            config: serde_json::from_value(get("config")?)?,
            lpv,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }

    pub fn sidecar(&self) -> serde_json::Value {
        json!({
            "method": "dnn",
            "normalization": self.output_norm.mode.tag(),
            "n_theta_hat": self.n_theta_hat(),
            "architecture": self.net.arch,
            "parameters": self.net.parameter_count(),
            "best_epoch": self.curve.best_epoch,
            "epochs_run": self.curve.records.len().saturating_sub(1),
            "stopped_early": self.curve.stopped_early,
            "best_val_loss": self.curve.best().map(|r| r.val_loss),
            "bypass_in_exported_model": false,
            "region": self.region,
        })
    }
}

impl SchedulingReduction for DnnReduction {
    fn method(&self) -> &str {
        "dnn"
    }

    fn normalization(&self) -> &str {
        self.output_norm.mode.tag()
    }

    fn n_theta_hat(&self) -> usize {
        DnnReduction::n_theta_hat(self)
    }

    fn reduced_theta(&self, _model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<DVector<f64>> {
        self.encode(pt)
    }

    fn lpv(&self) -> &AffineLpvModel {
        &self.lpv
    }

    fn matrices_at(&self, model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<FactorMatrices> {
        let theta = self.reduced_theta(model, pt)?;
        if !self.net.arch.bypass {
            return self.lpv.matrices_at(&theta);
        }
        let base = self.lpv.matrices_at(&theta)?;
        unvec_gamma_into(&base, &self.reconstruct_gamma(&theta, Some(pt))?, self.layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_arch(bypass: bool) -> Architecture {
        Architecture {
            widths: vec![3, 8, 8],
            n_out: 4,
            bypass,
            activation: Activation::Tanh,
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn features_expand_angles() {
        let fm = FeatureMap {
            nx: 4,
            nu: 1,
            angular: vec![1, 2],
        };
        let x = DVector::from_vec(vec![5.0, 0.0, 0.0, 7.0]);
        let f = fm.apply(&x, &DVector::from_vec(vec![9.0])).unwrap();
        assert_eq!(f.as_slice(), &[5.0, 0.0, 0.0, 1.0, 1.0, 7.0, 9.0]);
        assert_eq!(fm.len(), 7);
    }

    #[test]
    fn chunked_gradient_matches_whole_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpNetwork::glorot(small_arch(true), &mut rng).unwrap();
        let x = random_batch(&mut rng, 3, 100);
        let y = random_batch(&mut rng, 4, 100);
        let (l1, g1) = net.gradient(&x, &y, 1e-3).unwrap();
        let (l2, g2) = batch_gradient(&net, &x, &y, 1e-3).unwrap();
        assert!((l1 - l2).abs() < 1e-12 * l1);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn decoder_is_affine_in_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpNetwork::glorot(small_arch(true), &mut rng).unwrap();
        let mut net = net;
        let k = net.params.len() - 1;
        net.params[k] = random_batch(&mut rng, 4, 3);
        let x = random_batch(&mut rng, 3, 1);
        let (t1, t2) = (random_batch(&mut rng, 8, 1), random_batch(&mut rng, 8, 1));
        let alpha = 0.3;
        let mix = &t1 * alpha + &t2 * (1.0 - alpha);
        let lhs = net.decode(&mix, Some(&x));
        let rhs = net.decode(&t1, Some(&x)) * alpha + net.decode(&t2, Some(&x)) * (1.0 - alpha);
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn constant_target_is_learned_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = MlpNetwork::glorot(small_arch(false), &mut rng).unwrap();
        let x = random_batch(&mut rng, 3, 256);
        let xv = random_batch(&mut rng, 3, 64);
        let target = DVector::from_vec(vec![0.5, -0.25, 0.0, 1.0]);
        let y = DMatrix::from_fn(4, 256, |i, _| target[i]);
        let yv = DMatrix::from_fn(4, 64, |i, _| target[i]);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 32,
            epochs: 30,
            l2: 0.0,
            ..TrainConfig::default()
        };
        let curve = fit_network(&mut net, (&x, &y), (&xv, &yv), &cfg, &mut rng).unwrap();
        let best = curve.best().unwrap();
        assert!(best.val_loss < 1e-3 * curve.records[0].val_loss.max(1.0), "{best:?}");
        assert!(best.train_loss < curve.records[0].train_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let mut net = MlpNetwork::glorot(small_arch(true), &mut rng).unwrap();
            let x = DMatrix::from_fn(3, 200, |i, j| ((i * 31 + j * 7) as f64).sin());
            let y = DMatrix::from_fn(4, 200, |i, j| (x[(i % 3, j)] * (i + 1) as f64).tanh());
            let cfg = TrainConfig {
                learning_rate: 1e-3,
                epochs: 3,
                batch_size: 50,
                ..TrainConfig::default()
            };
            let xv = x.columns(0, 40).into_owned();
            let yv = y.columns(0, 40).into_owned();
            fit_network(&mut net, (&x, &y), (&xv, &yv), &cfg, &mut rng).unwrap();
            net.params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = MlpNetwork::glorot(small_arch(false), &mut rng).unwrap();
        let x = random_batch(&mut rng, 3, 10);
        let mut y = random_batch(&mut rng, 4, 10);
        y[(0, 0)] = f64::INFINITY;
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let err = fit_network(&mut net, (&x, &y), (&x, &y), &cfg, &mut rng);
        assert!(matches!(err, Err(LpvError::Training(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
