//! Affine LPV models `M(theta) = M0 + sum_i theta_i M_i` and the variation
//! dataset `Pi_N` of vectorized system matrices.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::{write_json, Container, NamedArray};
use crate::error::{check_len, LpvError, Result};
use crate::model::{
    apply_scheduling, constant_template, evaluate_matrices, extract_full_scheduling, full_scheduling_region, Block,
    Dims, FactorMatrices, FactorizedModel, StateSpacePoint,
};
use crate::region::BoxRegion;
use crate::sim::SampleSet;

/// Which part of the stacked system matrix is vectorized into `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaLayout {
    /// `[A B_u]`, the disturbance-free state equation.
    #[default]
    StateInput,
    /// All six blocks `[A B_u B_w; C D_u D_w]`.
    Full,
}

impl GammaLayout {
    pub fn shape(&self, dims: &Dims) -> (usize, usize) {
        match self {
            Self::StateInput => (dims.nx, dims.nx + dims.nu),
            Self::Full => (dims.block_rows(), dims.block_cols()),
        }
    }

    pub fn len(&self, dims: &Dims) -> usize {
        let (r, c) = self.shape(dims);
        r * c
    }

    pub fn blocks(&self) -> &'static [Block] {
        match self {
            Self::StateInput => &[Block::A, Block::Bu],
            Self::Full => &Block::ALL,
        }
    }
}

/// Column-major vectorization of a matrix.
pub fn vec_matrix(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_matrix`].
pub fn unvec_matrix(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    check_len("vectorized matrix", rows * cols, v.len())?;
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// `vec([A B_u B_w; C D_u D_w])`, checking that the blocks fit together.
pub fn vec_gamma(
    a: &DMatrix<f64>,
    bu: &DMatrix<f64>,
    bw: &DMatrix<f64>,
    c: &DMatrix<f64>,
    du: &DMatrix<f64>,
    dw: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let dims = Dims {
        nx: a.nrows(),
        nu: bu.ncols(),
        nw: bw.ncols(),
        ny: c.nrows(),
    };
    check_len("A columns", dims.nx, a.ncols())?;
    for (what, m, rows, cols) in [
        ("B_u", bu, dims.nx, dims.nu),
        ("B_w", bw, dims.nx, dims.nw),
        ("C", c, dims.ny, dims.nx),
        ("D_u", du, dims.ny, dims.nu),
        ("D_w", dw, dims.ny, dims.nw),
    ] {
        if m.shape() != (rows, cols) {
            return Err(LpvError::DimensionMismatch {
                what: format!("{what} block ({}x{}), expected {rows}x{cols}", m.nrows(), m.ncols()),
                expected: rows * cols,
                got: m.len(),
            });
        }
    }
    let m = FactorMatrices {
        a: a.clone(),
        bu: bu.clone(),
        bw: bw.clone(),
        c: c.clone(),
        du: du.clone(),
        dw: dw.clone(),
    };
    Ok(gamma_of(&m, GammaLayout::Full))
}

/// `Gamma` of a set of factorization matrices under `layout`.
pub fn gamma_of(m: &FactorMatrices, layout: GammaLayout) -> DVector<f64> {
    match layout {
        GammaLayout::Full => vec_matrix(&m.stacked()),
        GammaLayout::StateInput => {
            let (nx, nu) = (m.a.nrows(), m.bu.ncols());
            let mut ab = DMatrix::zeros(nx, nx + nu);
            ab.view_mut((0, 0), (nx, nx)).copy_from(&m.a);
            ab.view_mut((0, nx), (nx, nu)).copy_from(&m.bu);
            vec_matrix(&ab)
        }
    }
}

/// Writes `Gamma` back into the blocks it covers, leaving the others of
/// `base` untouched.
pub fn unvec_gamma_into(base: &FactorMatrices, gamma: &DVector<f64>, layout: GammaLayout) -> Result<FactorMatrices> {
    let dims = base.dims();
    let (r, c) = layout.shape(&dims);
    let m = unvec_matrix(gamma, r, c)?;
    match layout {
        GammaLayout::Full => FactorMatrices::from_stacked(&dims, &m),
        GammaLayout::StateInput => {
            let mut out = base.clone();
            out.a.copy_from(&m.view((0, 0), (dims.nx, dims.nx)));
            out.bu.copy_from(&m.view((0, dims.nx), (dims.nx, dims.nu)));
            Ok(out)
        }
    }
}

/// `unvec(Gamma)` with every block outside the layout set to zero.
pub fn unvec_gamma(gamma: &DVector<f64>, dims: &Dims, layout: GammaLayout) -> Result<FactorMatrices> {
    unvec_gamma_into(&FactorMatrices::zeros(dims), gamma, layout)
}

/// The variation dataset: column `k` is `Gamma` at sample `k` (with `w = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct VariationDataset {
    pub layout: GammaLayout,
    pub dims: Dims,
    /// `n_Pi x N`
    pub data: DMatrix<f64>,
    /// Sample index of every column.
    pub sample_index: Vec<usize>,
    /// Samples whose matrices could not be evaluated.
    pub skipped: usize,
    /// Mean of the full factorization over the dataset; supplies the blocks
    /// outside the layout when a reduced model is assembled.
    pub mean_matrices: FactorMatrices,
}

impl VariationDataset {
    pub fn n_pi(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Rows whose values are not all identical.
    pub fn varying_rows(&self) -> Vec<usize> {
        (0..self.n_pi())
            .filter(|&i| {
                let row = self.data.row(i);
                row.max() > row.min()
            })
            .collect()
    }
}

/// Builds `Pi_N` from a sample set. Samples whose matrices are not finite
/// are skipped and counted.
pub fn build_variation_dataset(
    model: &dyn FactorizedModel,
    samples: &SampleSet,
    layout: GammaLayout,
) -> Result<VariationDataset> {
    let dims = model.dims();
    let evaluated: Vec<Option<FactorMatrices>> = samples
        .points
        .par_iter()
        .map(|pt| evaluate_matrices(model, &pt.without_disturbance()).ok())
        .collect();
    let skipped = evaluated.iter().filter(|m| m.is_none()).count();
    if skipped > 0 {
        warn!("variation dataset: skipped {skipped} samples with non-finite matrices");
    }
    let good: Vec<(usize, FactorMatrices)> = evaluated
        .into_iter()
        .enumerate()
        .filter_map(|(k, m)| m.map(|m| (k, m)))
        .collect();
    if good.is_empty() {
        return Err(LpvError::Empty("no sample produced finite factorization matrices".into()));
    }
    let n_pi = layout.len(&dims);
    let mut data = DMatrix::zeros(n_pi, good.len());
    let mut sum = DMatrix::zeros(dims.block_rows(), dims.block_cols());
    for (j, (_, m)) in good.iter().enumerate() {
        data.set_column(j, &gamma_of(m, layout));
        sum += m.stacked();
    }
    let mean_matrices = FactorMatrices::from_stacked(&dims, &(sum / good.len() as f64))?;
    Ok(VariationDataset {
        layout,
        dims,
        data,
        sample_index: good.iter().map(|(k, _)| *k).collect(),
        skipped,
        mean_matrices,
    })
}

const LPV_KIND: &str = "affine_lpv_model";

/// `M(theta) = M0 + sum_i theta_i M_i` on the stacked system matrix, with the
/// scheduling region it is valid on.
#[derive(Debug)]
pub struct AffineLpvModel {
    pub dims: Dims,
    pub m0: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
    pub region: BoxRegion,
    /// Free-form provenance tag, e.g. `"pca"` or `"full_order"`.
    pub source: String,
    warned: AtomicBool,
}

impl Clone for AffineLpvModel {
    fn clone(&self) -> Self {
        Self::new(
            self.dims,
            self.m0.clone(),
            self.coefficients.clone(),
            self.region.clone(),
            self.source.clone(),
        )
        .expect("a valid model clones into a valid model")
    }
}

impl PartialEq for AffineLpvModel {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.m0 == other.m0
            && self.coefficients == other.coefficients
            && self.region == other.region
            && self.source == other.source
    }
}

impl AffineLpvModel {
    pub fn new(
        dims: Dims,
        m0: DMatrix<f64>,
        coefficients: Vec<DMatrix<f64>>,
        region: BoxRegion,
        source: impl Into<String>,
    ) -> Result<Self> {
        let shape = (dims.block_rows(), dims.block_cols());
        for (k, m) in std::iter::once(&m0).chain(&coefficients).enumerate() {
            if m.shape() != shape {
                return Err(LpvError::DimensionMismatch {
                    what: format!("LPV matrix {k} shape {}x{}", m.nrows(), m.ncols()),
                    expected: shape.0 * shape.1,
                    got: m.len(),
                });
            }
        }
        check_len("scheduling region dimension", coefficients.len(), region.dim())?;
        Ok(Self {
            dims,
            m0,
            coefficients,
            region,
            source: source.into(),
            warned: AtomicBool::new(false),
        })
    }

    pub fn n_theta(&self) -> usize {
        self.coefficients.len()
    }

    /// Stacked `M(theta)`. Evaluation outside the region is allowed and
    /// logged once per model.
    pub fn stacked_at(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len("scheduling vector", self.n_theta(), theta.len())?;
        let scale = theta.amax().max(1.0);
        if !self.region.contains(theta, 1e-9 * scale) && !self.warned.swap(true, Ordering::Relaxed) {
            warn!(
                "{} LPV model evaluated outside its scheduling region (further occurrences not logged)",
                self.source
            );
        }
        let mut m = self.m0.clone();
        for (t, mi) in theta.iter().zip(&self.coefficients) {
            m += mi * *t;
        }
        Ok(m)
    }

    pub fn matrices_at(&self, theta: &DVector<f64>) -> Result<FactorMatrices> {
        FactorMatrices::from_stacked(&self.dims, &self.stacked_at(theta)?)
    }

    /// `(x_dot, y)` of the LPV model at `theta` and `pt`.
    pub fn evaluate(&self, theta: &DVector<f64>, pt: &StateSpacePoint) -> Result<(DVector<f64>, DVector<f64>)> {
        pt.check(&self.dims)?;
        let m = self.matrices_at(theta)?;
        Ok((m.state_derivative(pt), m.output(pt)))
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(
            LPV_KIND,
            json!({
                "dims": self.dims,
                "n_theta": self.n_theta(),
                "region": self.region,
                "source": self.source,
            }),
        );
        c.push(NamedArray::from_matrix("M0", &self.m0));
        for (i, m) in self.coefficients.iter().enumerate() {
            c.push(NamedArray::from_matrix(format!("M{}", i + 1), m));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(LPV_KIND)?;
        let field = |k: &str| {
            c.meta
                .get(k)
                .cloned()
                .ok_or_else(|| LpvError::Format(format!("LPV container header lacks '{k}'")))
        };
        let dims: Dims = serde_json::from_value(field("dims")?)?;
        let n: usize = serde_json::from_value(field("n_theta")?)?;
        let region: BoxRegion = serde_json::from_value(field("region")?)?;
        let source: String = serde_json::from_value(field("source")?)?;
        let m0 = c.matrix("M0")?;
        let coefficients = (1..=n).map(|i| c.matrix(&format!("M{i}"))).collect::<Result<Vec<_>>>()?;
        Self::new(dims, m0, coefficients, region, source)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }

    /// Human-readable summary for reports.
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "source": self.source,
            "dims": self.dims,
            "n_theta": self.n_theta(),
            "region": self.region,
            "region_volume": self.region.volume(),
            "m0_frobenius": self.m0.norm(),
            "coefficient_frobenius": self.coefficients.iter().map(|m| m.norm()).collect::<Vec<_>>(),
        })
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, &self.summary())
    }
}

/// The exact full-order embedding: `M0` is the constant part of the
/// factorization and `M_i` selects the `i`-th scheduling entry. The region is
/// the gridded componentwise hull of `psi` over the operating region.
pub fn full_embedding(model: &dyn FactorizedModel, grid_density: usize) -> Result<AffineLpvModel> {
    let dims = model.dims();
    let entries = model.scheduling_entries();
    let template = constant_template(model);
    let zero = FactorMatrices::zeros(&dims);
    let coefficients = (0..entries.len())
        .map(|i| {
            let mut theta = DVector::zeros(entries.len());
            theta[i] = 1.0;
            Ok(apply_scheduling(&zero, entries, &theta)?.stacked())
        })
        .collect::<Result<Vec<_>>>()?;
    let region = BoxRegion::axis_aligned(&full_scheduling_region(model, grid_density)?);
    AffineLpvModel::new(dims, template.stacked(), coefficients, region, "full_order")
}

/// A scheduling map `theta_hat = psi_hat(x, u, w)` paired with the affine
/// model it schedules.
pub trait SchedulingReduction: Send + Sync {
    /// Method tag used in reports (`"pca"`, `"dnn"`, `"full_order"`).
    fn method(&self) -> &str;

    /// Normalization tag used in reports.
    fn normalization(&self) -> &str;

    fn n_theta_hat(&self) -> usize;

    fn reduced_theta(&self, model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<DVector<f64>>;

    fn lpv(&self) -> &AffineLpvModel;

    /// Reconstructed factorization at `pt`. Reductions whose reconstruction
    /// is not purely affine in `theta_hat` override this.
    fn matrices_at(&self, model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<FactorMatrices> {
        self.lpv().matrices_at(&self.reduced_theta(model, pt)?)
    }
}

/// The identity reduction `theta_hat = psi`.
#[derive(Debug, Clone)]
pub struct FullOrderEmbedding {
    pub lpv: AffineLpvModel,
}

impl FullOrderEmbedding {
    pub fn new(model: &dyn FactorizedModel, grid_density: usize) -> Result<Self> {
        Ok(Self {
            lpv: full_embedding(model, grid_density)?,
        })
    }
}

impl SchedulingReduction for FullOrderEmbedding {
    fn method(&self) -> &str {
        "full_order"
    }

    fn normalization(&self) -> &str {
        "none"
    }

    fn n_theta_hat(&self) -> usize {
        self.lpv.n_theta()
    }

    fn reduced_theta(&self, model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<DVector<f64>> {
        extract_full_scheduling(model, pt)
    }

    fn lpv(&self) -> &AffineLpvModel {
        &self.lpv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnalyticBenchmarkModel, Interval};
    use proptest::prelude::*;

    #[test]
    fn column_major_order() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let e = |r, c| DMatrix::zeros(r, c);
        let g = vec_gamma(&a, &e(2, 0), &e(2, 0), &e(0, 2), &e(0, 0), &e(0, 0)).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn zero_blocks_give_zero_vector() {
        let z = DMatrix::zeros(1, 1);
        let g = vec_gamma(&z, &z, &z, &z, &z, &z).unwrap();
        assert_eq!(g, DVector::zeros(6));
    }

    #[test]
    fn mismatched_blocks_rejected() {
        let a = DMatrix::zeros(2, 2);
        let bad = DMatrix::zeros(3, 1);
        let z = |r, c| DMatrix::zeros(r, c);
        assert!(vec_gamma(&a, &bad, &z(2, 0), &z(0, 2), &z(0, 1), &z(0, 0)).is_err());
    }

    proptest! {
        #[test]
        fn vec_unvec_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 25)) {
            let dims = Dims { nx: 3, nu: 1, nw: 1, ny: 2 };
            let m = DMatrix::from_column_slice(5, 5, &vals);
            let f = FactorMatrices::from_stacked(&dims, &m).unwrap();
            for layout in [GammaLayout::Full, GammaLayout::StateInput] {
                let g = gamma_of(&f, layout);
                prop_assert_eq!(g.len(), layout.len(&dims));
                let back = unvec_gamma_into(&f, &g, layout).unwrap();
                prop_assert_eq!(&back, &f);
            }
        }

        #[test]
        fn lpv_is_affine(alpha in -2.0f64..3.0, t1 in prop::collection::vec(-1.0f64..1.0, 2), t2 in prop::collection::vec(-1.0f64..1.0, 2)) {
            let dims = Dims { nx: 2, nu: 1, nw: 0, ny: 1 };
            let m = |s: f64| DMatrix::from_fn(3, 3, |i, j| s * (i as f64 + 1.0) - j as f64);
            let region = BoxRegion::axis_aligned(&[Interval::new(-1.0, 1.0); 2]);
            let lpv = AffineLpvModel::new(dims, m(0.5), vec![m(1.0), m(-2.0)], region, "test").unwrap();
            let pt = StateSpacePoint::from_slices(&[0.3, -0.7], &[1.1], &[]);
            let (th1, th2) = (DVector::from_vec(t1), DVector::from_vec(t2));
            let mix = &th1 * alpha + &th2 * (1.0 - alpha);
            let (x1, _) = lpv.evaluate(&th1, &pt).unwrap();
            let (x2, _) = lpv.evaluate(&th2, &pt).unwrap();
            let (xm, _) = lpv.evaluate(&mix, &pt).unwrap();
            let expect = x1 * alpha + x2 * (1.0 - alpha);
            prop_assert!((xm - expect).amax() <= 1e-12 * (1.0 + alpha.abs()) * 10.0);
        }
    }

    #[test]
    fn full_embedding_is_exact_on_analytic_model() {
        let model = AnalyticBenchmarkModel::new();
        let emb = FullOrderEmbedding::new(&model, 8).unwrap();
        let pt = StateSpacePoint::from_slices(&[0.4, -1.2, 2.0], &[0.5], &[]);
        let theta = emb.reduced_theta(&model, &pt).unwrap();
        let (xdot, _) = emb.lpv.evaluate(&theta, &pt).unwrap();
        let f = crate::model::evaluate_f(&model, &pt).unwrap();
        assert!((xdot - &f).amax() <= 1e-12 * f.amax().max(1.0));
        assert!(emb.lpv.region.contains(&theta, 1e-9));
    }

    #[test]
    fn zero_model_gives_zero_derivative() {
        let dims = Dims { nx: 2, nu: 1, nw: 0, ny: 0 };
        let region = BoxRegion::axis_aligned(&[Interval::new(-1.0, 1.0)]);
        let lpv = AffineLpvModel::new(dims, DMatrix::zeros(2, 3), vec![DMatrix::zeros(2, 3)], region, "z").unwrap();
        let (xdot, y) = lpv
            .evaluate(&DVector::from_vec(vec![5.0]), &StateSpacePoint::from_slices(&[1.0, 2.0], &[3.0], &[]))
            .unwrap();
        assert_eq!(xdot, DVector::zeros(2));
        assert_eq!(y.len(), 0);
    }

    #[test]
    fn container_round_trip() {
        let model = AnalyticBenchmarkModel::new();
        let lpv = full_embedding(&model, 4).unwrap();
        let back = AffineLpvModel::from_container(&Container::from_bytes(&lpv.to_container().to_bytes().unwrap()).unwrap())
            .unwrap();
        assert_eq!(back, lpv);
    }
}
