//! Exact convex hulls in two and three dimensions.

use nalgebra::{DVector, Vector3};
use std::collections::HashSet;

fn cross2(o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Vertices of the 2-D convex hull in counter-clockwise order
/// (Andrew's monotone chain). Collinear boundary points are dropped.
pub fn convex_hull_2d(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut pts: Vec<&DVector<f64>> = points.iter().collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| a[0] == b[0] && a[1] == b[1]);
    if pts.len() < 3 {
        return pts.into_iter().cloned().collect();
    }
    let mut hull: Vec<&DVector<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &&DVector<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.into_iter().cloned().collect()
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[DVector<f64>]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (&poly[i], &poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    0.5 * twice.abs()
}

/// Membership in a counter-clockwise convex polygon, with tolerance `tol`
/// on the distance to each edge line.
pub fn polygon_contains(poly: &[DVector<f64>], p: &DVector<f64>, tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        cross2(a, b, p) >= -tol * len
    })
}

#[derive(Debug, Clone)]
struct Facet {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
}

/// 3-D convex hull with outward-oriented triangular facets.
#[derive(Debug, Clone)]
pub struct ConvexHull3 {
    points: Vec<Vector3<f64>>,
    facets: Vec<Facet>,
    interior: Vector3<f64>,
    eps: f64,
}

impl ConvexHull3 {
    /// Incremental construction. Returns `None` for clouds that do not span
    /// three dimensions.
    pub fn build(input: &[DVector<f64>]) -> Option<Self> {
        let points: Vec<Vector3<f64>> = input.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        if points.len() < 4 {
            return None;
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let scale = (hi - lo).norm();
        if scale == 0.0 {
            return None;
        }
        let eps = 1e-10 * scale;

        let i0 = (0..points.len()).min_by(|&a, &b| points[a].x.total_cmp(&points[b].x))?;
        let i1 = (0..points.len()).max_by(|&a, &b| {
            (points[a] - points[i0]).norm_squared().total_cmp(&(points[b] - points[i0]).norm_squared())
        })?;
        let dir = (points[i1] - points[i0]).normalize();
        let line_dist = |p: &Vector3<f64>| {
            let d = p - points[i0];
            (d - dir * d.dot(&dir)).norm()
        };
        let i2 = (0..points.len()).max_by(|&a, &b| line_dist(&points[a]).total_cmp(&line_dist(&points[b])))?;
        if line_dist(&points[i2]) <= eps {
            return None;
        }
        let n = (points[i1] - points[i0]).cross(&(points[i2] - points[i0])).normalize();
        let plane_dist = |p: &Vector3<f64>| (p - points[i0]).dot(&n).abs();
        let i3 = (0..points.len()).max_by(|&a, &b| plane_dist(&points[a]).total_cmp(&plane_dist(&points[b])))?;
        if plane_dist(&points[i3]) <= eps {
            return None;
        }
        let interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
        let mut hull = Self {
            points,
            facets: Vec::new(),
            interior,
            eps,
        };
        for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
            hull.push_facet(tri);
        }
        let seed: HashSet<usize> = [i0, i1, i2, i3].into_iter().collect();
        for idx in 0..hull.points.len() {
            if !seed.contains(&idx) {
                hull.insert(idx);
            }
        }
        Some(hull)
    }

    fn push_facet(&mut self, v: [usize; 3]) {
        let [a, b, c] = v;
        let (pa, pb, pc) = (self.points[a], self.points[b], self.points[c]);
        let mut normal = (pb - pa).cross(&(pc - pa));
        let mut v = v;
        if normal.dot(&(self.interior - pa)) > 0.0 {
            normal = -normal;
            v = [a, c, b];
        }
        let len = normal.norm();
        if len == 0.0 {
            return;
        }
        let normal = normal / len;
        self.facets.push(Facet {
            v,
            normal,
            offset: normal.dot(&pa),
        });
    }

    fn insert(&mut self, idx: usize) {
        let p = self.points[idx];
        let visible: Vec<usize> = self
            .facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.normal.dot(&p) - f.offset > self.eps)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            return;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for &fi in &visible {
            let [a, b, c] = self.facets[fi].v;
            for e in [(a, b), (b, c), (c, a)] {
                if !edges.remove(&(e.1, e.0)) {
                    edges.insert(e);
                }
            }
        }
        let vis: HashSet<usize> = visible.into_iter().collect();
        let mut k = 0;
        self.facets.retain(|_| {
            let keep = !vis.contains(&k);
            k += 1;
            keep
        });
        let mut horizon: Vec<(usize, usize)> = edges.into_iter().collect();
        horizon.sort_unstable();
        for (a, b) in horizon {
            self.push_facet([a, b, idx]);
        }
    }

    pub fn volume(&self) -> f64 {
        self.facets
            .iter()
            .map(|f| {
                let [a, b, c] = f.v;
                let (pa, pb, pc) = (self.points[a], self.points[b], self.points[c]);
                ((pa - self.interior).dot(&(pb - self.interior).cross(&(pc - self.interior)))).abs() / 6.0
            })
            .sum()
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        let q = Vector3::new(p[0], p[1], p[2]);
        self.facets.iter().all(|f| f.normal.dot(&q) - f.offset <= tol)
    }

    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    pub fn facet_normals(&self) -> Vec<Vector3<f64>> {
        self.facets.iter().map(|f| f.normal).collect()
    }

    /// Hull vertices in ascending input-index order.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let mut idx: Vec<usize> = self.facets.iter().flat_map(|f| f.v).collect();
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter()
            .map(|i| DVector::from_column_slice(self.points[i].as_slice()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn square_hull_and_area() {
        let pts = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.5, 0.5]), v(&[1.0, 1.0]), v(&[0.0, 1.0]), v(&[0.5, 0.0])];
        let hull = convex_hull_2d(&pts);
        assert_eq!(hull.len(), 4);
        assert!((polygon_area(&hull) - 1.0).abs() < 1e-15);
        assert!(polygon_contains(&hull, &v(&[0.3, 0.9]), 0.0));
        assert!(!polygon_contains(&hull, &v(&[1.1, 0.5]), 1e-9));
    }

    #[test]
    fn cube_hull_volume() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(v(&[(i & 1) as f64, (i >> 1 & 1) as f64, (i >> 2 & 1) as f64]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            pts.push(v(&[rng.gen(), rng.gen(), rng.gen()]));
        }
        let hull = ConvexHull3::build(&pts).unwrap();
        assert!((hull.volume() - 1.0).abs() < 1e-12);
        assert_eq!(hull.vertices().len(), 8);
        for p in &pts {
            assert!(hull.contains(p, 1e-9));
        }
        assert!(!hull.contains(&v(&[1.01, 0.5, 0.5]), 1e-9));
    }

    #[test]
    fn random_cloud_hull_contains_all_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<DVector<f64>> = (0..2000)
            .map(|_| v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-0.5..0.5)]))
            .collect();
        let hull = ConvexHull3::build(&pts).unwrap();
        assert!(pts.iter().all(|p| hull.contains(p, 1e-9)));
        assert!(hull.volume() <= 8.0 + 1e-12);
        assert!(hull.volume() > 7.0);
    }

    #[test]
    fn planar_cloud_has_no_3d_hull() {
        let pts = vec![v(&[0.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]), v(&[1.0, 1.0, 0.0])];
        assert!(ConvexHull3::build(&pts).is_none());
    }
}
