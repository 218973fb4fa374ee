use log::warn;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::hull::{convex_hull_2d, ConvexHull3};
use super::kabsch::{kabsch_rotation, proper_rotation};
use super::{check_points, covariance, points_matrix};
use crate::error::{LpvError, Result};
use crate::model::Interval;

/// Possibly rotated box `{theta = R z : lower <= z <= upper}`.
///
/// Without a rotation the box is axis-aligned in the scheduling frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(
        default,
        serialize_with = "ser_rotation",
        deserialize_with = "de_rotation",
        skip_serializing_if = "Option::is_none"
    )]
    pub rotation: Option<DMatrix<f64>>,
}

fn ser_rotation<S: Serializer>(r: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Option<Vec<Vec<f64>>> = r
        .as_ref()
        .map(|m| m.row_iter().map(|row| row.iter().copied().collect()).collect());
    rows.serialize(s)
}

fn de_rotation<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DMatrix<f64>>, D::Error> {
    let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
    Ok(rows.map(|rows| {
        let n = rows.len();
        DMatrix::from_fn(n, n, |i, j| rows[i].get(j).copied().unwrap_or(0.0))
    }))
}

impl BoxRegion {
    pub fn axis_aligned(intervals: &[Interval]) -> Self {
        Self {
            lower: intervals.iter().map(|i| i.lo).collect(),
            upper: intervals.iter().map(|i| i.hi).collect(),
            rotation: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &h)| Interval::new(l, h))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, h)| h - l).product()
    }

    /// Box-frame coordinates `z = R^T theta`.
    pub fn to_box_frame(&self, theta: &DVector<f64>) -> DVector<f64> {
        match &self.rotation {
            Some(r) => r.transpose() * theta,
            None => theta.clone(),
        }
    }

    pub fn from_box_frame(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.rotation {
            Some(r) => r * z,
            None => z.clone(),
        }
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        if theta.len() != self.dim() {
            return false;
        }
        let z = self.to_box_frame(theta);
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }

    /// Vertices of the box in the scheduling frame.
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                let z = DVector::from_fn(d, |i, _| {
                    if mask >> i & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                });
                self.from_box_frame(&z)
            })
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |i, _| {
            let (l, h) = (self.lower[i], self.upper[i]);
            if h > l {
                rng.gen_range(l..h)
            } else {
                l
            }
        });
        self.from_box_frame(&z)
    }

    /// Axis-aligned bounding box of this box in the scheduling frame.
    pub fn bounding_intervals(&self) -> Vec<Interval> {
        match &self.rotation {
            None => self.intervals(),
            Some(_) => {
                let corners = self.corners();
                (0..self.dim())
                    .map(|i| {
                        let lo = corners.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
                        let hi = corners.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max);
                        Interval::new(lo, hi)
                    })
                    .collect()
            }
        }
    }
}

/// Componentwise extremes in the frame given by `rotation` (identity if none),
/// with degenerate intervals widened.
fn box_in_frame(points: &[DVector<f64>], rotation: Option<DMatrix<f64>>) -> BoxRegion {
    let d = points[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        let z = match &rotation {
            Some(r) => r.transpose() * p,
            None => p.clone(),
        };
        for i in 0..d {
            lo[i] = lo[i].min(z[i]);
            hi[i] = hi[i].max(z[i]);
        }
    }
    let intervals: Vec<Interval> = lo
        .into_iter()
        .zip(hi)
        .map(|(l, h)| Interval::new(l, h).widened())
        .collect();
    let mut b = BoxRegion::axis_aligned(&intervals);
    b.rotation = rotation;
    b
}

/// Smallest axis-aligned box containing every point.
pub fn axis_aligned_box(points: &[DVector<f64>]) -> Result<BoxRegion> {
    check_points(points)?;
    Ok(box_in_frame(points, None))
}

/// Rotated bounding box for 2-D and 3-D clouds.
///
/// Candidate frames are the coordinate axes, the principal axes of the cloud
/// (aligned with a Kabsch fit of the cloud onto its principal-axis
/// coordinates) and the frames induced by the convex hull: every hull edge in
/// 2-D, every hull facet normal combined with the edges of the projected hull
/// in 3-D. The candidate with the least volume is returned, so the result
/// never exceeds the axis-aligned box.
pub fn kabsch_box(points: &[DVector<f64>]) -> Result<BoxRegion> {
    let d = check_points(points)?;
    if !(2..=3).contains(&d) {
        return Err(LpvError::InvalidArgument(format!(
            "kabsch box needs dimension 2 or 3, got {d}"
        )));
    }
    if points.len() < d + 1 {
        return Err(LpvError::InvalidArgument(format!(
            "kabsch box in {d}-D needs at least {} points, got {}",
            d + 1,
            points.len()
        )));
    }
    let pm = points_matrix(points);
    let cov = covariance(&pm);
    let eig = cov.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    if scale <= 0.0 || eig.eigenvalues.amin() <= 1e-14 * scale {
        warn!("kabsch box: rank-deficient point cloud, falling back to the axis-aligned box");
        return axis_aligned_box(points);
    }

    let mut candidates: Vec<DMatrix<f64>> = Vec::new();
    // principal-axis frame, recovered as the rotation that best maps the
    // cloud's principal coordinates back onto the cloud
    let centroid = pm.column_mean();
    let centered = DMatrix::from_fn(d, points.len(), |i, j| pm[(i, j)] - centroid[i]);
    let principal_coords = eig.eigenvectors.transpose() * &centered;
    candidates.push(kabsch_rotation(&principal_coords, &centered)?);

    // extents of a convex set are attained at its vertices
    let vertices = match d {
        2 => {
            let hull = convex_hull_2d(points);
            candidates.extend(edge_frames_2d(&hull));
            hull
        }
        _ => match ConvexHull3::build(points) {
            Some(hull) => {
                let vertices = hull.vertices();
                let mut best: Option<(f64, DMatrix<f64>)> = None;
                for normal in hull.facet_normals() {
                    if let Some((vol, frame)) = best_facet_frame(&normal, &vertices) {
                        if best.as_ref().is_none_or(|b| vol < b.0) {
                            best = Some((vol, frame));
                        }
                    }
                }
                candidates.extend(best.map(|b| b.1));
                vertices
            }
            None => points.to_vec(),
        },
    };

    let mut best = box_in_frame(&vertices, None);
    for r in candidates {
        let b = box_in_frame(&vertices, Some(r));
        if b.volume() < best.volume() {
            best = b;
        }
    }
    Ok(best)
}

/// One rotation per hull edge, with the first axis along the edge.
fn edge_frames_2d(hull: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
    let n = hull.len();
    (0..n)
        .filter_map(|i| {
            let e = &hull[(i + 1) % n] - &hull[i];
            let len = e.norm();
            (len > 0.0).then(|| {
                let (c, s) = (e[0] / len, e[1] / len);
                DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
            })
        })
        .collect()
}

/// `(area, cos, sin)` of the least-area rectangle with a side along one of
/// the edges of the convex polygon `hull`.
fn min_area_rectangle(hull: &[DVector<f64>]) -> Option<(f64, f64, f64)> {
    let n = hull.len();
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..n {
        let e = &hull[(i + 1) % n] - &hull[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let (c, s) = (e[0] / len, e[1] / len);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in hull {
            let z = [c * p[0] + s * p[1], -s * p[0] + c * p[1]];
            for k in 0..2 {
                lo[k] = lo[k].min(z[k]);
                hi[k] = hi[k].max(z[k]);
            }
        }
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        if best.is_none_or(|b| area < b.0) {
            best = Some((area, c, s));
        }
    }
    best
}

/// Least-volume frame with the third axis along `normal`: the in-plane axes
/// follow the best edge of the vertices' projection onto the facet plane.
fn best_facet_frame(normal: &Vector3<f64>, vertices: &[DVector<f64>]) -> Option<(f64, DMatrix<f64>)> {
    let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let t1 = normal.cross(&helper).normalize();
    let t2 = normal.cross(&t1);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let projected: Vec<DVector<f64>> = vertices
        .iter()
        .map(|p| {
            let q = Vector3::new(p[0], p[1], p[2]);
            let h = q.dot(normal);
            lo = lo.min(h);
            hi = hi.max(h);
            DVector::from_vec(vec![q.dot(&t1), q.dot(&t2)])
        })
        .collect();
    let (area, c, s) = min_area_rectangle(&convex_hull_2d(&projected))?;
    let a = t1 * c + t2 * s;
    let b = normal.cross(&a);
    let frame = DMatrix::from_columns(&[
        DVector::from_column_slice(a.as_slice()),
        DVector::from_column_slice(b.as_slice()),
        DVector::from_column_slice(normal.as_slice()),
    ]);
    Some((area * (hi - lo), proper_rotation(&frame)))
}
