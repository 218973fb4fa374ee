use nalgebra::DVector;
use rand::{Rng, RngCore};
use serde_json::json;

use super::{
    detect_scheduling_entries, Block, Dims, FactorMatrices, FactorizedModel, Interval, OperatingRegion,
    SchedulingEntry, StateSpacePoint,
};

/// Unnormalized sinc, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Three-state, one-input benchmark with two independent nonlinearities.
///
/// ```text
/// x1' = x2
/// x2' = -sinc(x1) x1 + cos(x1) u
/// x3' = -x3 + sinc(x1) x2
/// ```
///
/// Factorized as `A = [[0,1,0],[-sinc(x1),0,0],[0,sinc(x1),-1]]`,
/// `B_u = [0, cos(x1), 0]^T`. The extracted scheduling vector has three
/// entries (`-sinc`, `sinc`, `cos`) but spans only two independent functions,
/// so the centered variation matrix has rank exactly 2.
#[derive(Debug, Clone)]
pub struct AnalyticBenchmarkModel {
    region: OperatingRegion,
    entries: Vec<SchedulingEntry>,
}

impl AnalyticBenchmarkModel {
    /// Rank of the centered variation matrix, known by construction.
    pub const VARIATION_RANK: usize = 2;

    pub fn new() -> Self {
        let region = OperatingRegion {
            x: vec![
                Interval::new(-std::f64::consts::PI, std::f64::consts::PI),
                Interval::new(-3.0, 3.0),
                Interval::new(-3.0, 3.0),
            ],
            u: vec![Interval::new(-1.0, 1.0)],
            w: vec![],
        };
        let dims = Self::DIMS;
        let entries = detect_scheduling_entries(&dims, &region, &[Block::A, Block::Bu, Block::Bw], |pt| {
            Self::factorize(pt)
        });
        Self { region, entries }
    }

    const DIMS: Dims = Dims { nx: 3, nu: 1, nw: 0, ny: 3 };

    fn factorize(pt: &StateSpacePoint) -> FactorMatrices {
        let s = sinc(pt.x[0]);
        let mut m = FactorMatrices::with_identity_output(&Self::DIMS);
        m.a[(0, 1)] = 1.0;
        m.a[(1, 0)] = -s;
        m.a[(2, 1)] = s;
        m.a[(2, 2)] = -1.0;
        m.bu[(1, 0)] = pt.x[0].cos();
        m
    }
}

impl Default for AnalyticBenchmarkModel {
    fn default() -> Self {
        Self::new()
    }
}

impl FactorizedModel for AnalyticBenchmarkModel {
    fn id(&self) -> &'static str {
        "analytic"
    }

    fn dims(&self) -> Dims {
        Self::DIMS
    }

    fn region(&self) -> &OperatingRegion {
        &self.region
    }

    fn f_unchecked(&self, pt: &StateSpacePoint) -> DVector<f64> {
        let (x1, x2, x3) = (pt.x[0], pt.x[1], pt.x[2]);
        DVector::from_vec(vec![
            x2,
            -x1.sin() + x1.cos() * pt.u[0],
            -x3 + sinc(x1) * x2,
        ])
    }

    fn matrices_unchecked(&self, pt: &StateSpacePoint) -> FactorMatrices {
        Self::factorize(pt)
    }

    fn scheduling_entries(&self) -> &[SchedulingEntry] {
        &self.entries
    }

    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_vec(vec![
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-1.0..1.0),
        ])
    }

    fn metadata(&self) -> serde_json::Value {
        json!({
            "model": self.id(),
            "dims": Self::DIMS,
            "n_theta": self.entries.len(),
            "variation_rank": Self::VARIATION_RANK,
            "scheduling_entries": self.entries,
            "region": self.region,
        })
    }
}
