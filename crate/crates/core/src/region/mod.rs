//! Reduced scheduling regions and their conservatism.

pub mod boxes;
pub mod conservatism;
pub mod ellipsoid;
pub mod hull;
pub mod kabsch;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::container::{fmt_f64, write_csv, write_json};
use crate::error::{check_len, LpvError, Result};

pub use boxes::{axis_aligned_box, kabsch_box, BoxRegion};
pub use conservatism::{conservatism_ratio, ConservatismReport};
pub use ellipsoid::{ellipsoid_to_box, min_enclosing_sphere, min_volume_ellipsoid, Ellipsoid, MveeReport};

pub const DEFAULT_MVEE_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

/// Points as the columns of a `d x n` matrix.
pub fn points_matrix(points: &[DVector<f64>]) -> DMatrix<f64> {
    let d = points.first().map_or(0, |p| p.len());
    DMatrix::from_fn(d, points.len(), |i, j| points[j][i])
}

/// Sample covariance (divisor `n - 1`, or `n` for a single point) of the
/// columns of `pm`.
pub fn covariance(pm: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = (pm.nrows(), pm.ncols());
    let mean = pm.column_mean();
    let centered = DMatrix::from_fn(d, n, |i, j| pm[(i, j)] - mean[i]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    &centered * centered.transpose() / denom
}

pub(crate) fn check_points(points: &[DVector<f64>]) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| LpvError::Empty("region construction needs at least one point".into()))?;
    let d = first.len();
    for p in points {
        check_len("point dimension", d, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(LpvError::NonFinite("region point".into()));
        }
    }
    Ok(d)
}

/// Convex hull vertices in 2-D and 3-D; the input itself otherwise or when
/// the hull is degenerate.
pub(crate) fn hull_vertices(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    match points.first().map(|p| p.len()) {
        Some(2) => {
            let h = hull::convex_hull_2d(points);
            if h.len() >= 3 {
                h
            } else {
                points.to_vec()
            }
        }
        Some(3) => hull::ConvexHull3::build(points).map_or_else(|| points.to_vec(), |h| h.vertices()),
        _ => points.to_vec(),
    }
}

/// How the reduced scheduling region is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegionMethod {
    /// Kabsch box up to dimension 3, ellipsoid-derived box above.
    #[default]
    Auto,
    AxisAligned,
    Kabsch,
    Ellipsoid,
    Sphere,
}

impl std::str::FromStr for RegionMethod {
    type Err = LpvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "axis_aligned" | "axis-aligned" | "minmax" => Ok(Self::AxisAligned),
            "kabsch" => Ok(Self::Kabsch),
            "ellipsoid" => Ok(Self::Ellipsoid),
            "sphere" => Ok(Self::Sphere),
            other => Err(LpvError::InvalidArgument(format!("unknown region method '{other}'"))),
        }
    }
}

/// A constructed region: the box used for synthesis and, for the
/// ellipsoid-based methods, the enclosing ellipsoid it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledRegion {
    pub method: RegionMethod,
    #[serde(rename = "box")]
    pub bx: BoxRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipsoid: Option<Ellipsoid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mvee: Option<MveeReport>,
}

pub fn build_region(points: &[DVector<f64>], method: RegionMethod, tolerance: f64) -> Result<ScheduledRegion> {
    let d = check_points(points)?;
    let resolved = match method {
        RegionMethod::Auto if d == 1 => RegionMethod::AxisAligned,
        RegionMethod::Auto if d <= 3 => RegionMethod::Kabsch,
        RegionMethod::Auto => RegionMethod::Ellipsoid,
        m => m,
    };
    let mut out = ScheduledRegion {
        method: resolved,
        bx: BoxRegion::axis_aligned(&[]),
        ellipsoid: None,
        mvee: None,
    };
    match resolved {
        RegionMethod::AxisAligned => out.bx = axis_aligned_box(points)?,
        RegionMethod::Kabsch => out.bx = kabsch_box(points)?,
        RegionMethod::Ellipsoid => {
            let (ell, rep) = ellipsoid::min_volume_ellipsoid_with_report(points, tolerance)?;
            out.bx = ellipsoid_to_box(&ell);
            out.ellipsoid = Some(ell);
            out.mvee = Some(rep);
        }
        RegionMethod::Sphere => {
            let ell = min_enclosing_sphere(points)?;
            out.bx = ellipsoid_to_box(&ell);
            out.ellipsoid = Some(ell);
        }
        RegionMethod::Auto => unreachable!("auto is resolved above"),
    }
    Ok(out)
}

/// Index pairs of box corners joined by an edge (corners ordered as in
/// [`BoxRegion::corners`]).
pub fn box_edges(dim: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for mask in 0..1usize << dim {
        for bit in 0..dim {
            if mask >> bit & 1 == 0 {
                edges.push((mask, mask | 1 << bit));
            }
        }
    }
    edges
}

fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|i| format!("{prefix}{}", i + 1)).collect()
}

/// Writes a point cloud as CSV with columns `theta1..thetad`.
pub fn write_points_csv(path: impl AsRef<Path>, points: &[DVector<f64>]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.len());
    let header = coord_header("theta", d);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, points.iter().map(|p| p.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>()))
}

/// Writes the box wireframe as one row per edge: `edge, end, theta1..thetad`.
pub fn write_box_wireframe_csv(path: impl AsRef<Path>, bx: &BoxRegion) -> Result<()> {
    let corners = bx.corners();
    let mut header = vec!["edge".to_string(), "end".to_string()];
    header.extend(coord_header("theta", bx.dim()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = box_edges(bx.dim()).into_iter().enumerate().flat_map(|(e, (a, b))| {
        [(0, a), (1, b)].map(|(end, idx)| {
            let mut row = vec![e.to_string(), end.to_string()];
            row.extend(corners[idx].iter().map(|&v| fmt_f64(v)));
            row
        })
    });
    write_csv(path, &header, rows)
}

/// Writes ellipsoid surface points (2-D polygon or 3-D grid) as CSV.
pub fn write_ellipsoid_surface_csv(path: impl AsRef<Path>, ell: &Ellipsoid, resolution: usize) -> Result<()> {
    write_points_csv(path, &ell.surface_points(resolution))
}

/// Self-contained region description for 3-D plots: points, box corners and
/// edges, and the optional ellipsoid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionDocument {
    pub dim: usize,
    pub region: ScheduledRegion,
    pub box_volume: f64,
    pub corners: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservatism: Option<ConservatismReport>,
}

impl RegionDocument {
    pub fn new(region: ScheduledRegion, points: &[DVector<f64>], conservatism: Option<ConservatismReport>) -> Self {
        let dim = region.bx.dim();
        Self {
            dim,
            box_volume: region.bx.volume(),
            corners: region.bx.corners().iter().map(|c| c.iter().copied().collect()).collect(),
            edges: box_edges(dim),
            points: points.iter().map(|p| p.iter().copied().collect()).collect(),
            region,
            conservatism,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}
