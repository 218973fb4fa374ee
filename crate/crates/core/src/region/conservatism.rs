//! Unused-volume ratio of a scheduling box relative to the convex hull of
//! the scheduling trajectory.

use log::warn;
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boxes::BoxRegion;
use super::check_points;
use super::hull::{convex_hull_2d, polygon_area, polygon_contains, ConvexHull3};
use crate::error::{LpvError, Result};

const CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservatismReport {
    /// `(1 - p) / p` with `p` the fraction of box samples inside the hull.
    pub ratio: f64,
    pub std_error: f64,
    pub inside_fraction: f64,
    pub samples: usize,
    pub box_volume: f64,
    /// Exact hull volume, available up to dimension 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hull_volume: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_ratio: Option<f64>,
    pub membership: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

enum HullTest {
    Interval(f64, f64),
    Polygon(Vec<DVector<f64>>),
    Hull3(ConvexHull3),
    Lp(Vec<DVector<f64>>),
    /// Zero-volume hull: nothing sampled from the box lies inside.
    Flat,
}

impl HullTest {
    fn new(points: &[DVector<f64>], d: usize) -> Self {
        match d {
            1 => {
                let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    Self::Interval(lo, hi)
                } else {
                    Self::Flat
                }
            }
            2 => {
                let poly = convex_hull_2d(points);
                if poly.len() >= 3 {
                    Self::Polygon(poly)
                } else {
                    Self::Flat
                }
            }
            3 => ConvexHull3::build(points).map_or(Self::Flat, Self::Hull3),
            _ => Self::Lp(points.to_vec()),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Interval(..) | Self::Polygon(_) | Self::Hull3(_) => "exact_hull",
            Self::Lp(_) => "lp",
            Self::Flat => "degenerate_hull",
        }
    }

    fn volume(&self) -> Option<f64> {
        match self {
            Self::Interval(lo, hi) => Some(hi - lo),
            Self::Polygon(p) => Some(polygon_area(p)),
            Self::Hull3(h) => Some(h.volume()),
            Self::Flat => Some(0.0),
            Self::Lp(_) => None,
        }
    }

    fn contains(&self, q: &DVector<f64>, tol: f64) -> bool {
        match self {
            Self::Interval(lo, hi) => q[0] >= lo - tol && q[0] <= hi + tol,
            Self::Polygon(p) => polygon_contains(p, q, tol),
            Self::Hull3(h) => h.contains(q, tol),
            Self::Lp(points) => lp_hull_contains(points, q),
            Self::Flat => false,
        }
    }
}

/// Feasibility of `q = sum_j l_j p_j`, `sum_j l_j = 1`, `l >= 0`.
pub fn lp_hull_contains(points: &[DVector<f64>], q: &DVector<f64>) -> bool {
    let d = q.len();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = points.iter().map(|_| problem.add_var(0.0, (0.0, f64::INFINITY))).collect();
    for i in 0..d {
        let mut expr = LinearExpr::empty();
        for (v, p) in vars.iter().zip(points) {
            expr.add(*v, p[i]);
        }
        problem.add_constraint(expr, ComparisonOp::Eq, q[i]);
    }
    let mut sum = LinearExpr::empty();
    for v in &vars {
        sum.add(*v, 1.0);
    }
    problem.add_constraint(sum, ComparisonOp::Eq, 1.0);
    problem.solve().is_ok()
}

/// Monte Carlo estimate of `(Vol(box) - Vol(hull)) / Vol(hull)`.
///
/// Samples are drawn uniformly in the box in fixed-size chunks; chunk `c`
/// uses stream `c` of a generator seeded with `seed`, so the estimate does
/// not depend on the thread count. Hull membership is exact up to dimension
/// 3 and an LP feasibility test above; the LP path costs one solve per
/// sample, so keep `mc_samples` modest there.
pub fn conservatism_ratio(
    points: &[DVector<f64>],
    bx: &BoxRegion,
    mc_samples: usize,
    seed: u64,
) -> Result<ConservatismReport> {
    let d = check_points(points)?;
    if d != bx.dim() {
        return Err(LpvError::DimensionMismatch {
            what: "box dimension".into(),
            expected: d,
            got: bx.dim(),
        });
    }
    if mc_samples == 0 {
        return Err(LpvError::InvalidArgument("mc_samples must be positive".into()));
    }
    let scale = bx
        .lower
        .iter()
        .zip(&bx.upper)
        .map(|(l, h)| l.abs().max(h.abs()).max(h - l))
        .fold(1e-300, f64::max);
    let tol = 1e-9 * scale;
    if let Some(p) = points.iter().find(|p| !bx.contains(p, tol)) {
        return Err(LpvError::InvalidArgument(format!(
            "box does not contain every point (first outside: {:?})",
            p.as_slice()
        )));
    }

    let test = HullTest::new(points, d);
    let membership_tol = 1e-12 * scale;
    let chunks = mc_samples.div_ceil(CHUNK);
    let inside: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(mc_samples - c * CHUNK);
            (0..n)
                .filter(|_| test.contains(&bx.sample(&mut rng), membership_tol))
                .count()
        })
        .sum();

    let n = mc_samples as f64;
    let p = inside as f64 / n;
    let box_volume = bx.volume();
    let hull_volume = test.volume();
    let exact_ratio = hull_volume.filter(|&v| v > 0.0).map(|v| (box_volume - v) / v);
    let (ratio, std_error, diagnostic) = if inside == 0 {
        let msg = "no Monte Carlo sample fell inside the convex hull; ratio reported as infinite".to_string();
        warn!("{msg}");
        (f64::INFINITY, f64::INFINITY, Some(msg))
    } else {
        ((1.0 - p) / p, (p * (1.0 - p) / n).sqrt() / (p * p), None)
    };
    Ok(ConservatismReport {
        ratio,
        std_error,
        inside_fraction: p,
        samples: mc_samples,
        box_volume,
        hull_volume,
        exact_ratio,
        membership: test.name().into(),
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{axis_aligned_box, ellipsoid_to_box, min_volume_ellipsoid};

    fn pts(raw: &[&[f64]]) -> Vec<DVector<f64>> {
        raw.iter().map(|p| DVector::from_column_slice(p)).collect()
    }

    #[test]
    fn own_corners_have_zero_ratio() {
        let b = axis_aligned_box(&pts(&[&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]])).unwrap();
        let rep = conservatism_ratio(&b.corners(), &b, 20_000, 1).unwrap();
        assert!(rep.ratio.abs() <= 3.0 * rep.std_error + 1e-12);
        assert_eq!(rep.exact_ratio.map(|r| r.abs() < 1e-12), Some(true));
    }

    #[test]
    fn square_in_circle_box_matches_closed_form() {
        let square = pts(&[&[1.0, 1.0], &[-1.0, 1.0], &[1.0, -1.0], &[-1.0, -1.0]]);
        let bx = ellipsoid_to_box(&min_volume_ellipsoid(&square, 1e-9).unwrap());
        let rep = conservatism_ratio(&square, &bx, 200_000, 9).unwrap();
        // box side 2*sqrt(2) around a square of area 4
        assert!((rep.ratio - 1.0).abs() <= 3.0 * rep.std_error);
    }

    #[test]
    fn estimate_independent_of_thread_count() {
        let tri = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let bx = axis_aligned_box(&tri).unwrap();
        let a = conservatism_ratio(&tri, &bx, 50_000, 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| conservatism_ratio(&tri, &bx, 50_000, 4).unwrap());
        assert_eq!(a, b);
        assert!((a.ratio - 1.0).abs() <= 3.0 * a.std_error);
    }

    #[test]
    fn lp_membership_in_four_dims() {
        let mut simplex = vec![DVector::zeros(4)];
        for i in 0..4 {
            let mut e = DVector::zeros(4);
            e[i] = 1.0;
            simplex.push(e);
        }
        assert!(lp_hull_contains(&simplex, &DVector::from_element(4, 0.2)));
        assert!(!lp_hull_contains(&simplex, &DVector::from_element(4, 0.3)));
        // unit simplex fills 1/24 of the unit cube
        let bx = axis_aligned_box(&simplex).unwrap();
        let rep = conservatism_ratio(&simplex, &bx, 4000, 2).unwrap();
        assert_eq!(rep.membership, "lp");
        assert!((rep.ratio - 23.0).abs() <= 3.0 * rep.std_error);
    }

    #[test]
    fn flat_hull_reports_infinite_ratio() {
        let line = pts(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        let bx = axis_aligned_box(&line).unwrap();
        let rep = conservatism_ratio(&line, &bx, 1000, 0).unwrap();
        assert!(rep.ratio.is_infinite());
        assert!(rep.diagnostic.is_some());
    }

    #[test]
    fn rejects_box_missing_points() {
        let p = pts(&[&[0.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]);
        let mut bx = axis_aligned_box(&p).unwrap();
        bx.upper[0] = 0.5;
        assert!(conservatism_ratio(&p, &bx, 10, 0).is_err());
    }
}
