//! Scheduling reduction by principal component analysis of `Pi_N`.

use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::{fmt_f64, write_csv, Container, NamedArray};
use crate::error::{check_len, LpvError, Result};
use crate::lpv::{
    gamma_of, unvec_gamma, unvec_gamma_into, AffineLpvModel, GammaLayout, SchedulingReduction, VariationDataset,
};
use crate::model::{evaluate_matrices, Dims, FactorizedModel, StateSpacePoint};
use crate::region::{build_region, RegionMethod, ScheduledRegion, DEFAULT_MVEE_TOLERANCE};

/// Above this many samples the SVD goes through the `n_Pi x n_Pi` Gram matrix.
pub const GRAM_THRESHOLD: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Center on the row mean, scale by the sample standard deviation.
    #[default]
    Std,
    /// Center on the row mean, scale by the row range.
    Minmax,
}

impl NormMode {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Std => "std",
            Self::Minmax => "minmax",
        }
    }
}

impl std::str::FromStr for NormMode {
    type Err = LpvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(Self::Std),
            "minmax" | "min-max" | "min_max" => Ok(Self::Minmax),
            other => Err(LpvError::InvalidArgument(format!(
                "unknown normalization '{other}' (expected std or minmax)"
            ))),
        }
    }
}

/// Row-wise affine normalization `(v - center) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Rows treated as constant (scale forced to 1).
    pub degenerate: Vec<usize>,
}

impl Normalizer {
    /// Fits on the rows of `data` (one variable per row, one sample per column).
    pub fn fit(data: &DMatrix<f64>, mode: NormMode) -> Result<Self> {
        let (rows, n) = data.shape();
        if n < 2 {
            return Err(LpvError::Empty(format!("normalizer needs at least 2 samples, got {n}")));
        }
        let mut center = Vec::with_capacity(rows);
        let mut scale = Vec::with_capacity(rows);
        let mut degenerate = Vec::new();
        for i in 0..rows {
            let row = data.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(LpvError::NonFinite(format!("normalizer input row {i}")));
            }
            let mean = row.mean();
            let (lo, hi) = (row.min(), row.max());
            let spread = match mode {
                NormMode::Std => (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt(),
                NormMode::Minmax => hi - lo,
            };
            let magnitude = lo.abs().max(hi.abs()).max(1.0);
            if hi - lo <= 1e-12 * magnitude || spread == 0.0 {
                degenerate.push(i);
                scale.push(1.0);
            } else {
                scale.push(1.0 / spread);
            }
            center.push(mean);
        }
        Ok(Self {
            mode,
            center,
            scale,
            degenerate,
        })
    }

    /// Identity normalizer of the given length.
    pub fn identity(len: usize) -> Self {
        Self {
            mode: NormMode::Std,
            center: vec![0.0; len],
            scale: vec![1.0; len],
            degenerate: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn normalize(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("normalizer input", self.len(), v.len())?;
        Ok(DVector::from_fn(v.len(), |i, _| (v[i] - self.center[i]) * self.scale[i]))
    }

    pub fn denormalize(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("normalizer input", self.len(), v.len())?;
        Ok(DVector::from_fn(v.len(), |i, _| v[i] / self.scale[i] + self.center[i]))
    }

    pub fn normalize_columns(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("normalizer rows", self.len(), data.nrows())?;
        Ok(DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
            (data[(i, j)] - self.center[i]) * self.scale[i]
        }))
    }

    pub fn denormalize_columns(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("normalizer rows", self.len(), data.nrows())?;
        Ok(DMatrix::from_fn(data.nrows(), data.ncols(), |i, j| {
            data[(i, j)] / self.scale[i] + self.center[i]
        }))
    }
}

/// Left singular vectors and singular values of normalized data, in
/// descending order with the largest-magnitude entry of each vector positive.
pub fn left_singular_basis(data: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (m, n) = data.shape();
    if m == 0 || n == 0 {
        return Err(LpvError::Empty("SVD of an empty matrix".into()));
    }
    let (u, sigma) = if n > GRAM_THRESHOLD {
        debug!("SVD via {m}x{m} Gram matrix");
        let gram = data * data.transpose();
        let eig = gram.symmetric_eigen();
        let sigma: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        (eig.eigenvectors, sigma)
    } else if n > 2 * m {
        debug!("SVD via QR of the {n}x{m} transpose");
        let r = data.transpose().qr().r();
        let svd = r.transpose().svd(true, false);
        let u = svd
            .u
            .ok_or_else(|| LpvError::Decomposition("SVD did not return U".into()))?;
        (u, svd.singular_values.iter().copied().collect())
    } else if n >= m {
        // nalgebra's SVD of a wide matrix returns wrong singular values when
        // singular vectors are requested; decompose the tall transpose instead
        let svd = data.transpose().svd(false, true);
        let u = svd
            .v_t
            .ok_or_else(|| LpvError::Decomposition("SVD did not return V".into()))?
            .transpose();
        (u, svd.singular_values.iter().copied().collect())
    } else {
        let svd = data.clone().svd(true, false);
        let u = svd
            .u
            .ok_or_else(|| LpvError::Decomposition("SVD did not return U".into()))?;
        (u, svd.singular_values.iter().copied().collect())
    };
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(LpvError::Decomposition("non-finite singular values".into()));
    }
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let k = order.len().min(m);
    let mut out = DMatrix::zeros(m, k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let mut col = u.column(src).into_owned();
        if col[col.iamax()] < 0.0 {
            col.neg_mut();
        }
        out.set_column(j, &col);
    }
    Ok((out, order.iter().take(k).map(|&i| sigma[i]).collect()))
}

/// Number of singular values above `max(rows, cols) * eps * sigma_1`.
pub fn numerical_rank(sigma: &[f64], rows: usize, cols: usize) -> usize {
    let Some(&top) = sigma.first() else { return 0 };
    let tol = rows.max(cols) as f64 * f64::EPSILON * top;
    sigma.iter().filter(|&&s| s > tol).count()
}

/// SVD of a normalized variation dataset, shared by every truncation level.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub normalizer: Normalizer,
    pub layout: GammaLayout,
    pub dims: Dims,
    /// All left singular vectors, `n_Pi x min(n_Pi, N)`.
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
    /// Normalized training data `Pi_bar`.
    pub normalized: DMatrix<f64>,
    mean_matrices: crate::model::FactorMatrices,
}

impl PcaBasis {
    pub fn fit(ds: &VariationDataset, mode: NormMode) -> Result<Self> {
        Self::fit_with(ds, Normalizer::fit(&ds.data, mode)?)
    }

    pub fn fit_with(ds: &VariationDataset, normalizer: Normalizer) -> Result<Self> {
        let normalized = normalizer.normalize_columns(&ds.data)?;
        let (u, singular_values) = left_singular_basis(&normalized)?;
        let numerical_rank = numerical_rank(&singular_values, ds.n_pi(), ds.len());
        Ok(Self {
            normalizer,
            layout: ds.layout,
            dims: ds.dims,
            u,
            singular_values,
            numerical_rank,
            normalized,
            mean_matrices: ds.mean_matrices.clone(),
        })
    }

    pub fn max_components(&self) -> usize {
        self.u.ncols()
    }

    /// `sqrt(sum_{i > n_s} sigma_i^2)`, the optimal rank-`n_s` residual.
    pub fn tail_energy(&self, n_s: usize) -> f64 {
        self.singular_values.iter().skip(n_s).map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `Pi_bar - U_s U_s^T Pi_bar` on the training data.
    pub fn training_residual(&self, n_s: usize) -> Result<f64> {
        let us = self.truncated_u(n_s)?;
        let proj = &us * (us.transpose() * &self.normalized);
        Ok((&self.normalized - proj).norm())
    }

    fn truncated_u(&self, n_s: usize) -> Result<DMatrix<f64>> {
        if n_s == 0 || n_s > self.max_components() {
            return Err(LpvError::InvalidArgument(format!(
                "number of components must be in 1..={}, got {n_s}",
                self.max_components()
            )));
        }
        Ok(self.u.columns(0, n_s).into_owned())
    }

    /// Truncates to `n_s` components and builds the reduced affine model,
    /// with the region fitted to the training scheduling trajectory.
    pub fn reduction(&self, n_s: usize, region_method: RegionMethod) -> Result<PcaReduction> {
        let us = self.truncated_u(n_s)?;
        let theta = us.transpose() * &self.normalized;
        let points: Vec<DVector<f64>> = theta.column_iter().map(|c| c.into_owned()).collect();
        let region = build_region(&points, region_method, DEFAULT_MVEE_TOLERANCE)?;
        PcaReduction::assemble(
            self.normalizer.clone(),
            self.layout,
            self.dims,
            us,
            self.singular_values.clone(),
            self.numerical_rank,
            &self.mean_matrices,
            region,
        )
    }

    /// Singular-value spectrum as CSV: `index, sigma, sigma_rel, energy, above_rank_threshold`.
    pub fn write_spectrum_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_spectrum_csv(path, &self.singular_values, self.numerical_rank)
    }
}

pub fn write_spectrum_csv(path: impl AsRef<Path>, sigma: &[f64], rank: usize) -> Result<()> {
    let total: f64 = sigma.iter().map(|s| s * s).sum::<f64>().max(f64::MIN_POSITIVE);
    let top = sigma.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let mut cumulative = 0.0;
    let rows: Vec<Vec<String>> = sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            cumulative += s * s;
            vec![
                (i + 1).to_string(),
                fmt_f64(s),
                fmt_f64(s / top),
                fmt_f64(cumulative / total),
                (i < rank).to_string(),
            ]
        })
        .collect();
    write_csv(
        path,
        &["index", "sigma", "sigma_rel", "energy", "above_rank_threshold"],
        rows,
    )
}

/// A truncated PCA basis with its reduced affine LPV model.
#[derive(Debug, Clone)]
pub struct PcaReduction {
    pub normalizer: Normalizer,
    pub layout: GammaLayout,
    pub dims: Dims,
    /// `U_s`, `n_Pi x n_s`.
    pub u_s: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
    pub region: ScheduledRegion,
    pub lpv: AffineLpvModel,
}

const PCA_META: &str = "pca";

impl PcaReduction {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        normalizer: Normalizer,
        layout: GammaLayout,
        dims: Dims,
        u_s: DMatrix<f64>,
        singular_values: Vec<f64>,
        numerical_rank: usize,
        complement: &crate::model::FactorMatrices,
        region: ScheduledRegion,
    ) -> Result<Self> {
        let center = DVector::from_column_slice(&normalizer.center);
        let m0 = unvec_gamma_into(complement, &center, layout)?.stacked();
        let coefficients = u_s
            .column_iter()
            .map(|col| {
                let g = DVector::from_fn(col.len(), |i, _| col[i] / normalizer.scale[i]);
                Ok(unvec_gamma(&g, &dims, layout)?.stacked())
            })
            .collect::<Result<Vec<_>>>()?;
        let lpv = AffineLpvModel::new(dims, m0, coefficients, region.bx.clone(), "pca")?;
        Ok(Self {
            normalizer,
            layout,
            dims,
            u_s,
            singular_values,
            numerical_rank,
            region,
            lpv,
        })
    }

    pub fn n_s(&self) -> usize {
        self.u_s.ncols()
    }

    /// `theta_hat = U_s^T N(Gamma)`.
    pub fn project_gamma(&self, gamma: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.u_s.transpose() * self.normalizer.normalize(gamma)?)
    }

    /// `Gamma_hat = S^{-1} U_s theta_hat + Pi_c`.
    pub fn reconstruct_gamma(&self, theta_hat: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("reduced scheduling vector", self.n_s(), theta_hat.len())?;
        self.normalizer.denormalize(&(&self.u_s * theta_hat))
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = self.lpv.to_container();
        if let serde_json::Value::Object(meta) = &mut c.meta {
            meta.insert(
                PCA_META.into(),
                json!({
                    "mode": self.normalizer.mode,
                    "n_s": self.n_s(),
                    "layout": self.layout,
                    "singular_values": self.singular_values,
                    "numerical_rank": self.numerical_rank,
                    "degenerate_rows": self.normalizer.degenerate,
                    "region": self.region,
                }),
            );
        }
        c.push(NamedArray::row_vector("pca_center", &self.normalizer.center));
        c.push(NamedArray::row_vector("pca_scale", &self.normalizer.scale));
        c.push_matrix("pca_u", &self.u_s);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let lpv = AffineLpvModel::from_container(c)?;
        let meta = c
            .meta
            .get(PCA_META)
            .ok_or_else(|| LpvError::Format("LPV container carries no PCA reduction (produced by reduce-pca?)".into()))?;
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| LpvError::Format(format!("PCA header lacks '{k}'")))
        };
        let normalizer = Normalizer {
            mode: serde_json::from_value(get("mode")?)?,
            center: c.array("pca_center")?.data.clone(),
            scale: c.array("pca_scale")?.data.clone(),
            degenerate: serde_json::from_value(get("degenerate_rows")?)?,
        };
        Ok(Self {
            normalizer,
            layout: serde_json::from_value(get("layout")?)?,
            dims: lpv.dims,
            u_s: c.matrix("pca_u")?,
            singular_values: serde_json::from_value(get("singular_values")?)?,
            numerical_rank: serde_json::from_value(get("numerical_rank")?)?,
            region: serde_json::from_value(get("region")?)?,
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
            "method": "pca",
            "normalization": self.normalizer.mode.tag(),
            "n_s": self.n_s(),
            "numerical_rank": self.numerical_rank,
            "singular_values": self.singular_values,
            "region": self.region,
        })
    }
}

/// Fits a PCA reduction with `n_s` components using an already fitted normalizer.
pub fn fit_pca(ds: &VariationDataset, normalizer: &Normalizer, n_s: usize) -> Result<PcaReduction> {
    let basis = PcaBasis::fit_with(ds, normalizer.clone())?;
    if n_s > basis.numerical_rank {
        warn!(
            "requested {n_s} components but the data has numerical rank {}",
            basis.numerical_rank
        );
    }
    basis.reduction(n_s, RegionMethod::Auto)
}

impl SchedulingReduction for PcaReduction {
    fn method(&self) -> &str {
        "pca"
    }

    fn normalization(&self) -> &str {
        self.normalizer.mode.tag()
    }

    fn n_theta_hat(&self) -> usize {
        self.n_s()
    }

    fn reduced_theta(&self, model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<DVector<f64>> {
        let m = evaluate_matrices(model, &pt.without_disturbance())?;
        self.project_gamma(&gamma_of(&m, self.layout))
    }

    fn lpv(&self) -> &AffineLpvModel {
        &self.lpv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    #[test]
    fn minmax_arithmetic() {
        let n = Normalizer::fit(&row(&[1.0, 2.0, 3.0]), NormMode::Minmax).unwrap();
        assert_eq!(n.center, vec![2.0]);
        assert_eq!(n.scale, vec![0.5]);
        let z = n.normalize_columns(&row(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(z.as_slice(), &[-0.5, 0.0, 0.5]);
    }

    #[test]
    fn std_arithmetic() {
        let n = Normalizer::fit(&row(&[0.0, 2.0]), NormMode::Std).unwrap();
        assert_eq!(n.center, vec![1.0]);
        let z = n.normalize_columns(&row(&[0.0, 2.0])).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((z[0] + h).abs() < 1e-15 && (z[1] - h).abs() < 1e-15);
    }

    #[test]
    fn constant_row_is_degenerate() {
        let n = Normalizer::fit(&row(&[5.0, 5.0, 5.0]), NormMode::Std).unwrap();
        assert_eq!((n.center[0], n.scale[0]), (5.0, 1.0));
        assert_eq!(n.degenerate, vec![0]);
        assert_eq!(n.normalize_columns(&row(&[5.0, 5.0, 5.0])).unwrap(), DMatrix::zeros(1, 3));
    }

    #[test]
    fn single_sample_rejected() {
        assert!(Normalizer::fit(&row(&[1.0]), NormMode::Std).is_err());
    }

    proptest! {
        #[test]
        fn normalize_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 12), minmax in any::<bool>()) {
            let data = DMatrix::from_row_slice(3, 4, &vals);
            let mode = if minmax { NormMode::Minmax } else { NormMode::Std };
            let n = Normalizer::fit(&data, mode).unwrap();
            let back = n.denormalize_columns(&n.normalize_columns(&data).unwrap()).unwrap();
            prop_assert!((back - &data).amax() <= 1e-12 * data.amax().max(1.0));
            if minmax {
                let z = n.normalize_columns(&data).unwrap();
                prop_assert!(z.amax() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn basis_is_orthonormal_and_sorted(vals in prop::collection::vec(-10.0f64..10.0, 40)) {
            let data = DMatrix::from_row_slice(4, 10, &vals);
            let (u, s) = left_singular_basis(&data).unwrap();
            prop_assert!((u.transpose() * &u - DMatrix::identity(u.ncols(), u.ncols())).amax() < 1e-10);
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]) && s.iter().all(|&x| x >= 0.0));
            for j in 0..u.ncols() {
                let c = u.column(j);
                prop_assert!(c[c.iamax()] > 0.0);
            }
        }
    }

    #[test]
    fn rank_one_matrix() {
        let data = DMatrix::from_element(2, 2, 1.0);
        let (u, s) = left_singular_basis(&data).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-12 && s[1].abs() < 1e-12);
        let us = u.columns(0, 1);
        assert!((&us * (us.transpose() * &data) - &data).amax() < 1e-12);
        assert_eq!(numerical_rank(&s, 2, 2), 1);
    }

    fn gram_singular_values(data: &DMatrix<f64>) -> Vec<f64> {
        let eig = (data * data.transpose()).symmetric_eigen();
        let mut s: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn every_svd_route_matches_gram_spectrum() {
        for cols in [2, 5, 50] {
            let data = DMatrix::from_fn(3, cols, |i, j| ((i * 7 + j * 3) as f64).sin() * (i + 1) as f64 + 0.1 * j as f64);
            let (u, s) = left_singular_basis(&data).unwrap();
            let reference = gram_singular_values(&data);
            for (a, b) in s.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-8 * reference[0], "{cols} columns: {a} vs {b}");
            }
            assert!((u.transpose() * &u - DMatrix::identity(u.ncols(), u.ncols())).amax() < 1e-12);
            // U_s U_s^T reproduces the data at full rank
            assert!((&u * (u.transpose() * &data) - &data).amax() < 1e-12 * data.amax());
        }
    }

    #[test]
    fn isometry_with_identity_normalizer() {
        let data = DMatrix::from_fn(3, 20, |i, j| ((i + 2 * j) as f64).cos());
        let (u, _) = left_singular_basis(&data).unwrap();
        let n = Normalizer::identity(3);
        let theta = DVector::from_vec(vec![0.3, -1.2, 0.5]);
        let gamma = n.denormalize(&(&u * &theta)).unwrap();
        assert!((gamma.norm() - theta.norm()).abs() < 1e-12);
    }
}
