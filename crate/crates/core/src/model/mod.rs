//! Nonlinear benchmark systems in factorized form.
//!
//! A model supplies two independent evaluation routes: the direct state
//! derivative `f(x, u, w)` and the matrix functions `A, B_u, B_w, C, D_u, D_w`
//! such that `f = A x + B_u u + B_w w`. Every matrix entry that is not
//! constant over the operating region becomes one component of the full
//! scheduling map `psi`.

mod analytic;
mod parafoil;

pub use analytic::AnalyticBenchmarkModel;
pub use parafoil::{ParafoilModel, ParafoilParams};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, LpvError, Result};

/// Intervals narrower than this are treated as degenerate.
pub const DEGENERATE_WIDTH: f64 = 1e-12;
/// Width a degenerate interval is widened to (symmetrically).
pub const WIDENED_WIDTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub nu: usize,
    pub nw: usize,
    pub ny: usize,
}

impl Dims {
    /// Rows of the stacked system matrix `[A B_u B_w; C D_u D_w]`.
    pub fn block_rows(&self) -> usize {
        self.nx + self.ny
    }

    /// Columns of the stacked system matrix.
    pub fn block_cols(&self) -> usize {
        self.nx + self.nu + self.nw
    }
}

/// One `(x, u, w)` evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpacePoint {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
}

impl StateSpacePoint {
    pub fn new(x: DVector<f64>, u: DVector<f64>, w: DVector<f64>) -> Self {
        Self { x, u, w }
    }

    pub fn from_slices(x: &[f64], u: &[f64], w: &[f64]) -> Self {
        Self {
            x: DVector::from_column_slice(x),
            u: DVector::from_column_slice(u),
            w: DVector::from_column_slice(w),
        }
    }

    /// Same point with the disturbance set to zero.
    pub fn without_disturbance(&self) -> Self {
        Self {
            x: self.x.clone(),
            u: self.u.clone(),
            w: DVector::zeros(self.w.len()),
        }
    }

    pub fn check(&self, dims: &Dims) -> Result<()> {
        check_len("state x", dims.nx, self.x.len())?;
        check_len("input u", dims.nu, self.u.len())?;
        check_len("disturbance w", dims.nw, self.w.len())?;
        if self
            .x
            .iter()
            .chain(self.u.iter())
            .chain(self.w.iter())
            .any(|v| !v.is_finite())
        {
            return Err(LpvError::NonFinite("state-space point".into()));
        }
        Ok(())
    }
}

/// Block of the stacked system matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    A,
    Bu,
    Bw,
    C,
    Du,
    Dw,
}

impl Block {
    pub const ALL: [Block; 6] = [Block::A, Block::Bu, Block::Bw, Block::C, Block::Du, Block::Dw];

    /// Offset of the block inside `[A B_u B_w; C D_u D_w]`.
    pub fn offset(&self, dims: &Dims) -> (usize, usize) {
        match self {
            Block::A => (0, 0),
            Block::Bu => (0, dims.nx),
            Block::Bw => (0, dims.nx + dims.nu),
            Block::C => (dims.nx, 0),
            Block::Du => (dims.nx, dims.nx),
            Block::Dw => (dims.nx, dims.nx + dims.nu),
        }
    }

    pub fn shape(&self, dims: &Dims) -> (usize, usize) {
        match self {
            Block::A => (dims.nx, dims.nx),
            Block::Bu => (dims.nx, dims.nu),
            Block::Bw => (dims.nx, dims.nw),
            Block::C => (dims.ny, dims.nx),
            Block::Du => (dims.ny, dims.nu),
            Block::Dw => (dims.ny, dims.nw),
        }
    }
}

/// Values of the factorization matrix functions at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrices {
    pub a: DMatrix<f64>,
    pub bu: DMatrix<f64>,
    pub bw: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub du: DMatrix<f64>,
    pub dw: DMatrix<f64>,
}

impl FactorMatrices {
    pub fn zeros(dims: &Dims) -> Self {
        Self {
            a: DMatrix::zeros(dims.nx, dims.nx),
            bu: DMatrix::zeros(dims.nx, dims.nu),
            bw: DMatrix::zeros(dims.nx, dims.nw),
            c: DMatrix::zeros(dims.ny, dims.nx),
            du: DMatrix::zeros(dims.ny, dims.nu),
            dw: DMatrix::zeros(dims.ny, dims.nw),
        }
    }

    /// Full-state output: `C = I`, `D_u = D_w = 0`.
    pub fn with_identity_output(dims: &Dims) -> Self {
        let mut m = Self::zeros(dims);
        m.c = DMatrix::identity(dims.ny, dims.nx);
        m
    }

    pub fn block(&self, block: Block) -> &DMatrix<f64> {
        match block {
            Block::A => &self.a,
            Block::Bu => &self.bu,
            Block::Bw => &self.bw,
            Block::C => &self.c,
            Block::Du => &self.du,
            Block::Dw => &self.dw,
        }
    }

    pub fn block_mut(&mut self, block: Block) -> &mut DMatrix<f64> {
        match block {
            Block::A => &mut self.a,
            Block::Bu => &mut self.bu,
            Block::Bw => &mut self.bw,
            Block::C => &mut self.c,
            Block::Du => &mut self.du,
            Block::Dw => &mut self.dw,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            nx: self.a.nrows(),
            nu: self.bu.ncols(),
            nw: self.bw.ncols(),
            ny: self.c.nrows(),
        }
    }

    /// `A x + B_u u + B_w w`.
    pub fn state_derivative(&self, pt: &StateSpacePoint) -> DVector<f64> {
        &self.a * &pt.x + &self.bu * &pt.u + &self.bw * &pt.w
    }

    /// `C x + D_u u + D_w w`.
    pub fn output(&self, pt: &StateSpacePoint) -> DVector<f64> {
        &self.c * &pt.x + &self.du * &pt.u + &self.dw * &pt.w
    }

    /// The stacked matrix `[A B_u B_w; C D_u D_w]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let dims = self.dims();
        let mut m = DMatrix::zeros(dims.block_rows(), dims.block_cols());
        for block in Block::ALL {
            let (r0, c0) = block.offset(&dims);
            let b = self.block(block);
            m.view_mut((r0, c0), b.shape()).copy_from(b);
        }
        m
    }

    pub fn from_stacked(dims: &Dims, m: &DMatrix<f64>) -> Result<Self> {
        check_len("stacked rows", dims.block_rows(), m.nrows())?;
        check_len("stacked cols", dims.block_cols(), m.ncols())?;
        let mut out = Self::zeros(dims);
        for block in Block::ALL {
            let (r0, c0) = block.offset(dims);
            let shape = block.shape(dims);
            out.block_mut(block).copy_from(&m.view((r0, c0), shape));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// Widens intervals narrower than [`DEGENERATE_WIDTH`] to [`WIDENED_WIDTH`].
    pub fn widened(self) -> Self {
        if self.width() < DEGENERATE_WIDTH {
            let mid = self.mid();
            Self::new(mid - 0.5 * WIDENED_WIDTH, mid + 0.5 * WIDENED_WIDTH)
        } else {
            self
        }
    }
}

/// Per-coordinate bounds of `X x U x W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingRegion {
    pub x: Vec<Interval>,
    pub u: Vec<Interval>,
    pub w: Vec<Interval>,
}

impl OperatingRegion {
    pub fn contains(&self, pt: &StateSpacePoint) -> bool {
        let inside = |bounds: &[Interval], v: &DVector<f64>| {
            bounds.iter().zip(v.iter()).all(|(b, &s)| b.contains(s, 0.0))
        };
        inside(&self.x, &pt.x) && inside(&self.u, &pt.u) && inside(&self.w, &pt.w)
    }

    fn all(&self) -> Vec<Interval> {
        self.x
            .iter()
            .chain(self.u.iter())
            .chain(self.w.iter())
            .copied()
            .collect()
    }

    fn point_from_flat(&self, flat: &[f64]) -> StateSpacePoint {
        let nx = self.x.len();
        let nu = self.u.len();
        StateSpacePoint::from_slices(&flat[..nx], &flat[nx..nx + nu], &flat[nx + nu..])
    }

    /// Uniform sample from the region.
    pub fn sample(&self, rng: &mut dyn RngCore) -> StateSpacePoint {
        let flat: Vec<f64> = self
            .all()
            .iter()
            .map(|b| if b.width() > 0.0 { rng.gen_range(b.lo..=b.hi) } else { b.lo })
            .collect();
        self.point_from_flat(&flat)
    }

    /// Uniform sample with `w = 0`.
    pub fn sample_without_disturbance(&self, rng: &mut dyn RngCore) -> StateSpacePoint {
        self.sample(rng).without_disturbance()
    }

    pub fn center(&self) -> StateSpacePoint {
        let flat: Vec<f64> = self.all().iter().map(Interval::mid).collect();
        self.point_from_flat(&flat)
    }
}

/// Location of one extracted nonlinearity in the stacked system matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulingEntry {
    pub block: Block,
    pub row: usize,
    pub col: usize,
}

/// A nonlinear model together with its matrix-function factorization.
///
/// Implementations are immutable; every method is a pure function of its
/// arguments so models can be shared across threads.
pub trait FactorizedModel: Send + Sync {
    fn id(&self) -> &'static str;

    fn dims(&self) -> Dims;

    fn region(&self) -> &OperatingRegion;

    /// Direct evaluation of `f(x, u, w)` from the model equations.
    fn f_unchecked(&self, pt: &StateSpacePoint) -> DVector<f64>;

    /// The factorization matrices at `pt`.
    fn matrices_unchecked(&self, pt: &StateSpacePoint) -> FactorMatrices;

    /// Matrix entries that vary over the operating region, in column-major
    /// order of the stacked matrix.
    fn scheduling_entries(&self) -> &[SchedulingEntry];

    /// Indices of angle-valued states (expanded to sin/cos for learned maps).
    fn angular_states(&self) -> &[usize] {
        &[]
    }

    /// Maps a state to its canonical representative (e.g. wraps angles).
    fn canonicalize_state(&self, _x: &mut DVector<f64>) {}

    /// A typical initial condition for open-loop data generation.
    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64>;

    /// Parameter values and dimensions for reports.
    fn metadata(&self) -> serde_json::Value;
}

/// Evaluates `f(x, u, w)`.
pub fn evaluate_f(model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<DVector<f64>> {
    pt.check(&model.dims())?;
    let f = model.f_unchecked(pt);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(LpvError::NonFinite(format!(
            "{}: state derivative (point outside the operating region?)",
            model.id()
        )));
    }
    Ok(f)
}

/// Evaluates the factorization matrices at `pt`.
pub fn evaluate_matrices(model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<FactorMatrices> {
    pt.check(&model.dims())?;
    let m = model.matrices_unchecked(pt);
    if m.stacked().iter().any(|v| !v.is_finite()) {
        return Err(LpvError::NonFinite(format!("{}: factorization matrices", model.id())));
    }
    Ok(m)
}

/// Full-order scheduling vector `theta = psi(x, u, w)`.
pub fn extract_full_scheduling(model: &dyn FactorizedModel, pt: &StateSpacePoint) -> Result<DVector<f64>> {
    let m = evaluate_matrices(model, pt)?;
    Ok(scheduling_from_matrices(model.scheduling_entries(), &m))
}

pub fn scheduling_from_matrices(entries: &[SchedulingEntry], m: &FactorMatrices) -> DVector<f64> {
    DVector::from_iterator(
        entries.len(),
        entries.iter().map(|e| m.block(e.block)[(e.row, e.col)]),
    )
}

/// Constant part of the factorization: the matrices with every scheduling
/// entry set to zero.
pub fn constant_template(model: &dyn FactorizedModel) -> FactorMatrices {
    let mut m = model.matrices_unchecked(&model.region().center());
    for e in model.scheduling_entries() {
        m.block_mut(e.block)[(e.row, e.col)] = 0.0;
    }
    m
}

/// Inserts `theta` into the constant template.
pub fn apply_scheduling(
    template: &FactorMatrices,
    entries: &[SchedulingEntry],
    theta: &DVector<f64>,
) -> Result<FactorMatrices> {
    check_len("scheduling vector", entries.len(), theta.len())?;
    let mut m = template.clone();
    for (e, &t) in entries.iter().zip(theta.iter()) {
        m.block_mut(e.block)[(e.row, e.col)] += t;
    }
    Ok(m)
}

/// Finds the entries of the factorization that differ between probe points.
///
/// Used by model constructors: probes are drawn from the operating region with
/// a fixed seed, so the result is a deterministic property of the model.
pub(crate) fn detect_scheduling_entries(
    dims: &Dims,
    region: &OperatingRegion,
    blocks: &[Block],
    matrices: impl Fn(&StateSpacePoint) -> FactorMatrices,
) -> Vec<SchedulingEntry> {
    const PROBES: usize = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let reference = matrices(&region.center());
    let mut varying = vec![false; dims.block_rows() * dims.block_cols()];
    let stacked_ref = reference.stacked();
    for _ in 0..PROBES {
        let m = matrices(&region.sample(&mut rng)).stacked();
        for (k, (a, b)) in m.iter().zip(stacked_ref.iter()).enumerate() {
            if a != b {
                varying[k] = true;
            }
        }
    }
    let rows = dims.block_rows();
    let mut entries = Vec::new();
    for col in 0..dims.block_cols() {
        for row in 0..rows {
            if !varying[col * rows + row] {
                continue;
            }
            let block = blocks.iter().copied().find(|b| {
                let (r0, c0) = b.offset(dims);
                let (nr, nc) = b.shape(dims);
                row >= r0 && row < r0 + nr && col >= c0 && col < c0 + nc
            });
            if let Some(block) = block {
                let (r0, c0) = block.offset(dims);
                entries.push(SchedulingEntry {
                    block,
                    row: row - r0,
                    col: col - c0,
                });
            }
        }
    }
    entries
}

/// Componentwise hull of `psi` over the operating region.
///
/// `grid_density` is the number of intervals per coordinate axis; grids for
/// densities `g` and `2g` are nested, so doubling never shrinks the box.
/// Low-dimensional regions (at most 4 coordinates) use the full tensor grid.
/// Higher-dimensional regions sweep each coordinate over its 1-D grid while
/// the remaining coordinates sit at a fixed set of base points (region center,
/// the 2 extreme corners and seeded random samples). The random base points
/// are also evaluated directly.
pub fn full_scheduling_region(model: &dyn FactorizedModel, grid_density: usize) -> Result<Vec<Interval>> {
    if grid_density < 2 {
        return Err(LpvError::InvalidArgument(format!(
            "grid_density must be >= 2, got {grid_density}"
        )));
    }
    let region = model.region();
    let bounds = region.all();
    let dim = bounds.len();
    let axis = |b: &Interval, i: usize| b.lo + b.width() * (i as f64) / (grid_density as f64);
    let n_theta = model.scheduling_entries().len();
    let mut lo = vec![f64::INFINITY; n_theta];
    let mut hi = vec![f64::NEG_INFINITY; n_theta];
    let mut visit = |flat: &[f64]| -> Result<()> {
        let theta = extract_full_scheduling(model, &region.point_from_flat(flat))?;
        for (k, t) in theta.iter().enumerate() {
            lo[k] = lo[k].min(*t);
            hi[k] = hi[k].max(*t);
        }
        Ok(())
    };

    if dim <= 4 {
        let per_axis = grid_density + 1;
        let total = per_axis.pow(dim as u32);
        let mut flat = vec![0.0; dim];
        for idx in 0..total {
            let mut rest = idx;
            for (d, b) in bounds.iter().enumerate() {
                flat[d] = axis(b, rest % per_axis);
                rest /= per_axis;
            }
            visit(&flat)?;
        }
    } else {
        const RANDOM_BASES: usize = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        let mut bases: Vec<Vec<f64>> = vec![
            bounds.iter().map(Interval::mid).collect(),
            bounds.iter().map(|b| b.lo).collect(),
            bounds.iter().map(|b| b.hi).collect(),
        ];
        for _ in 0..RANDOM_BASES {
            bases.push(
                bounds
                    .iter()
                    .map(|b| if b.width() > 0.0 { rng.gen_range(b.lo..=b.hi) } else { b.lo })
                    .collect(),
            );
        }
        for base in &bases {
            visit(base)?;
            for (d, b) in bounds.iter().enumerate() {
                let mut flat = base.clone();
                for i in 0..=grid_density {
                    flat[d] = axis(b, i);
                    visit(&flat)?;
                }
            }
        }
    }
    Ok(lo
        .into_iter()
        .zip(hi)
        .map(|(l, h)| Interval::new(l, h).widened())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_round_trip() {
        let dims = Dims { nx: 2, nu: 1, nw: 1, ny: 2 };
        let mut m = FactorMatrices::with_identity_output(&dims);
        m.a[(0, 1)] = 3.0;
        m.bu[(1, 0)] = -2.0;
        m.bw[(0, 0)] = 0.5;
        let s = m.stacked();
        assert_eq!(s.shape(), (4, 4));
        assert_eq!(s[(0, 1)], 3.0);
        assert_eq!(s[(1, 2)], -2.0);
        assert_eq!(s[(0, 3)], 0.5);
        assert_eq!(s[(2, 0)], 1.0);
        assert_eq!(FactorMatrices::from_stacked(&dims, &s).unwrap(), m);
    }

    #[test]
    fn degenerate_interval_is_widened() {
        let i = Interval::new(2.0, 2.0).widened();
        assert!((i.width() - WIDENED_WIDTH).abs() < 1e-15);
        assert!((i.mid() - 2.0).abs() < 1e-15);
        let j = Interval::new(0.0, 1.0).widened();
        assert_eq!(j, Interval::new(0.0, 1.0));
    }

    #[test]
    fn point_dimension_check() {
        let dims = Dims { nx: 2, nu: 1, nw: 0, ny: 2 };
        let ok = StateSpacePoint::from_slices(&[1.0, 2.0], &[0.0], &[]);
        assert!(ok.check(&dims).is_ok());
        let bad = StateSpacePoint::from_slices(&[1.0], &[0.0], &[]);
        assert!(matches!(bad.check(&dims), Err(LpvError::DimensionMismatch { .. })));
        let nan = StateSpacePoint::from_slices(&[f64::NAN, 0.0], &[0.0], &[]);
        assert!(matches!(nan.check(&dims), Err(LpvError::NonFinite(_))));
    }
}
