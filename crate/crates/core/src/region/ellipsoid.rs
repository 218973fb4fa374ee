//! Enclosing ellipsoids and spheres.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::boxes::BoxRegion;
use super::{check_points, covariance, hull_vertices, points_matrix};
use crate::error::{LpvError, Result};
use crate::model::WIDENED_WIDTH;

/// `{theta : (theta - c)^T E (theta - c) <= 1}` with `E` symmetric positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EllipsoidRepr", try_from = "EllipsoidRepr")]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    center: Vec<f64>,
    shape: Vec<Vec<f64>>,
}

impl From<Ellipsoid> for EllipsoidRepr {
    fn from(e: Ellipsoid) -> Self {
        Self {
            center: e.center.iter().copied().collect(),
            shape: e.shape.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl TryFrom<EllipsoidRepr> for Ellipsoid {
    type Error = LpvError;

    fn try_from(r: EllipsoidRepr) -> Result<Self> {
        let d = r.center.len();
        if r.shape.len() != d || r.shape.iter().any(|row| row.len() != d) {
            return Err(LpvError::Format("ellipsoid shape must be square and match the center".into()));
        }
        Ok(Self {
            center: DVector::from_vec(r.center),
            shape: DMatrix::from_fn(d, d, |i, j| r.shape[i][j]),
        })
    }
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / d as f64 * unit_ball_volume(d - 2),
    }
}

impl Ellipsoid {
    pub fn sphere(center: DVector<f64>, radius: f64) -> Self {
        let d = center.len();
        Self {
            center,
            shape: DMatrix::identity(d, d) / (radius * radius),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn membership(&self, p: &DVector<f64>) -> f64 {
        let d = p - &self.center;
        d.dot(&(&self.shape * &d))
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        self.membership(p) <= 1.0 + tol
    }

    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) / self.shape.determinant().sqrt()
    }

    /// Principal axes as columns (a proper rotation, largest semi-axis first)
    /// and the matching semi-axis lengths.
    pub fn axes(&self) -> (DMatrix<f64>, Vec<f64>) {
        let sym = (&self.shape + self.shape.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let d = self.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut frame = DMatrix::zeros(d, d);
        let mut semi = Vec::with_capacity(d);
        for (k, &i) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(i).into_owned();
            if col[col.iamax()] < 0.0 {
                col.neg_mut();
            }
            frame.set_column(k, &col);
            semi.push(1.0 / eig.eigenvalues[i].sqrt());
        }
        (super::kabsch::proper_rotation(&frame), semi)
    }

    /// Points on the boundary, for wireframe export. 2-D: a polygon of `n`
    /// points; 3-D: an `n x n` latitude/longitude grid.
    pub fn surface_points(&self, n: usize) -> Vec<DVector<f64>> {
        let (frame, semi) = self.axes();
        let map = |z: DVector<f64>| {
            let scaled = DVector::from_fn(z.len(), |i, _| z[i] * semi[i]);
            &self.center + &frame * scaled
        };
        let tau = std::f64::consts::TAU;
        match self.dim() {
            2 => (0..n)
                .map(|i| {
                    let a = tau * i as f64 / n as f64;
                    map(DVector::from_vec(vec![a.cos(), a.sin()]))
                })
                .collect(),
            3 => {
                let mut out = Vec::with_capacity(n * n);
                for i in 0..n {
                    let polar = std::f64::consts::PI * i as f64 / (n - 1).max(1) as f64;
                    for j in 0..n {
                        let az = tau * j as f64 / n as f64;
                        out.push(map(DVector::from_vec(vec![
                            polar.sin() * az.cos(),
                            polar.sin() * az.sin(),
                            polar.cos(),
                        ])));
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

/// Diagnostics of a minimum-volume ellipsoid computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MveeReport {
    pub iterations: usize,
    /// `max_j M_j / (d + 1) - 1` at termination.
    pub gap: f64,
    pub converged: bool,
    /// Dimension actually used when the cloud was rank-deficient.
    pub reduced_dim: Option<usize>,
}

const MAX_ITERATIONS: usize = 200_000;

/// Lifted leverage values `q_j^T X^{-1} q_j` for `q_j = [p_j; 1]`.
fn leverages(p: &DMatrix<f64>, xinv: &DMatrix<f64>, cols: &[usize]) -> Vec<f64> {
    let k = p.nrows();
    cols.iter()
        .map(|&j| {
            let mut s = 0.0;
            for a in 0..=k {
                let qa = if a < k { p[(a, j)] } else { 1.0 };
                for b in 0..=k {
                    let qb = if b < k { p[(b, j)] } else { 1.0 };
                    s += qa * xinv[(a, b)] * qb;
                }
            }
            s
        })
        .collect()
}

fn lifted_scatter(p: &DMatrix<f64>, u: &[f64], support: &[usize]) -> Result<DMatrix<f64>> {
    let k = p.nrows();
    let mut x = DMatrix::zeros(k + 1, k + 1);
    for &j in support {
        if u[j] == 0.0 {
            continue;
        }
        for a in 0..=k {
            let qa = if a < k { p[(a, j)] } else { 1.0 };
            for b in 0..=k {
                let qb = if b < k { p[(b, j)] } else { 1.0 };
                x[(a, b)] += u[j] * qa * qb;
            }
        }
    }
    x.try_inverse()
        .ok_or_else(|| LpvError::Decomposition("singular scatter matrix in ellipsoid iteration".into()))
}

/// Khachiyan iteration with away steps on the columns in `active`, warm
/// started from `u`. Returns the iteration count and final gap on `active`.
fn khachiyan(p: &DMatrix<f64>, u: &mut [f64], active: &[usize], tol: f64, budget: usize) -> Result<(usize, f64)> {
    let n = (p.nrows() + 1) as f64;
    let mut iterations = 0;
    loop {
        let xinv = lifted_scatter(p, u, active)?;
        let m = leverages(p, &xinv, active);
        let (imax, &mmax) = m
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("active set is non-empty");
        let gap = mmax / n - 1.0;
        if gap <= tol || iterations >= budget {
            return Ok((iterations, gap));
        }
        let (imin, &mmin) = m
            .iter()
            .enumerate()
            .filter(|(i, _)| u[active[*i]] > 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("weights are non-empty");
        let (i, mj) = if mmax - n >= n - mmin { (imax, mmax) } else { (imin, mmin) };
        let j = active[i];
        let mut tau = (mj - n) / (n * (mj - 1.0));
        if tau < 0.0 {
            tau = tau.max(-u[j] / (1.0 - u[j]));
        }
        for &a in active {
            u[a] *= 1.0 - tau;
        }
        u[j] += tau;
        if u[j] < 0.0 {
            u[j] = 0.0;
        }
        iterations += 1;
    }
}

/// Lifted columns `[p_j; 1]` for `j` in `cols`.
fn lifted(p: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let k = p.nrows();
    DMatrix::from_fn(k + 1, cols.len(), |a, j| if a < k { p[(a, cols[j])] } else { 1.0 })
}

/// Log-barrier Newton path following for the weights on `active`:
/// maximizes `log det X(u) + mu sum log u` over the simplex while `mu` shrinks.
/// Returns the Newton step count, or `None` on numerical breakdown.
fn barrier_newton(p: &DMatrix<f64>, u: &mut [f64], active: &[usize], tol: f64, mu0: f64) -> Option<usize> {
    let n = (p.nrows() + 1) as f64;
    let a = active.len();
    let q = lifted(p, active);
    let mut w: Vec<f64> = active.iter().map(|&j| u[j].max(1e-3 / a as f64)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);

    let objective = |w: &[f64], mu: f64| -> Option<f64> {
        let x = &q * DMatrix::from_diagonal(&DVector::from_column_slice(w)) * q.transpose();
        let chol = x.cholesky()?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(logdet + mu * w.iter().map(|v| v.ln()).sum::<f64>())
    };

    let mut mu = mu0 / a as f64;
    let mut steps = 0;
    loop {
        for _ in 0..60 {
            let x = &q * DMatrix::from_diagonal(&DVector::from_column_slice(&w)) * q.transpose();
            let l = x.cholesky()?.l();
            let r = l.solve_lower_triangular(&q)?;
            let g_mat = r.transpose() * &r;
            let grad = DVector::from_fn(a, |i, _| g_mat[(i, i)] + mu / w[i]);
            let hess = DMatrix::from_fn(a, a, |i, j| {
                g_mat[(i, j)] * g_mat[(i, j)] + if i == j { mu / (w[i] * w[i]) } else { 0.0 }
            });
            let hc = hess.cholesky()?;
            let ag = hc.solve(&grad);
            let a1 = hc.solve(&DVector::from_element(a, 1.0));
            let lambda = -ag.sum() / a1.sum();
            let dir = &ag + &a1 * lambda;
            let decrement = dir.dot(&(&grad + DVector::from_element(a, lambda)));
            steps += 1;
            let mut t = 1.0f64;
            for (wi, di) in w.iter().zip(dir.iter()) {
                if *di < 0.0 {
                    t = t.min(-0.95 * wi / di);
                }
            }
            let f0 = objective(&w, mu)?;
            loop {
                let trial: Vec<f64> = w.iter().zip(dir.iter()).map(|(wi, di)| wi + t * di).collect();
                if let Some(f) = objective(&trial, mu) {
                    if f >= f0 + 0.25 * t * decrement.max(0.0) || t < 1e-12 {
                        w = trial;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-14 {
                    return None;
                }
            }
            if decrement.abs() < 1e-6 {
                break;
            }
        }
        // the barrier optimum has max_j m_j <= n + a mu
        if a as f64 * mu / n <= 0.25 * tol {
            break;
        }
        mu *= 0.1;
    }
    for (&j, &wi) in active.iter().zip(&w) {
        u[j] = wi;
    }
    Some(steps)
}

/// Full-rank core: points as columns of `p` (k x n).
fn mvee_full_rank(p: &DMatrix<f64>, tol: f64) -> Result<(Ellipsoid, MveeReport)> {
    let (k, npts) = (p.nrows(), p.ncols());
    let n = (k + 1) as f64;
    // initial active set: coordinate extremes plus the points farthest from
    // the centroid in the covariance metric
    let cov = covariance(p);
    let cov_inv = cov
        .try_inverse()
        .ok_or_else(|| LpvError::Decomposition("singular covariance in ellipsoid fit".into()))?;
    let mean = p.column_mean();
    let mut score: Vec<(f64, usize)> = (0..npts)
        .map(|j| {
            let d = p.column(j) - &mean;
            (d.dot(&(&cov_inv * &d)), j)
        })
        .collect();
    score.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut active: Vec<usize> = score.iter().take(20 * (k + 1)).map(|s| s.1).collect();
    for r in 0..k {
        let row = p.row(r);
        active.push(
            (0..npts)
                .min_by(|&a, &b| row[a].total_cmp(&row[b]))
                .expect("non-empty"),
        );
        active.push(
            (0..npts)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .expect("non-empty"),
        );
    }
    active.sort_unstable();
    active.dedup();

    let mut u = vec![0.0; npts];
    for &j in &active {
        u[j] = 1.0 / active.len() as f64;
    }
    let all: Vec<usize> = (0..npts).collect();
    let mut iterations = 0;
    let (gap, converged) = loop {
        let mu0 = if iterations == 0 { 1.0 } else { 1e-3 };
        match barrier_newton(p, &mut u, &active, tol, mu0) {
            Some(it) => iterations += it,
            None => {
                let (it, _) = khachiyan(p, &mut u, &active, tol, MAX_ITERATIONS.saturating_sub(iterations))?;
                iterations += it;
            }
        }
        let (it, _) = khachiyan(p, &mut u, &active, tol, MAX_ITERATIONS.saturating_sub(iterations))?;
        iterations += it;
        let xinv = lifted_scatter(p, &u, &active)?;
        let m = leverages(p, &xinv, &all);
        let gap = m.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / n - 1.0;
        if gap <= tol {
            break (gap, true);
        }
        if iterations >= MAX_ITERATIONS {
            warn!("ellipsoid iteration budget exhausted with gap {gap:.3e}");
            break (gap, false);
        }
        let mut violators: Vec<(f64, usize)> = m
            .iter()
            .enumerate()
            .filter(|(_, &v)| v / n - 1.0 > tol)
            .map(|(j, &v)| (v, j))
            .collect();
        violators.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        active.extend(violators.iter().take(50).map(|v| v.1));
        active.sort_unstable();
        active.dedup();
    };

    let c = p * DVector::from_column_slice(&u);
    let mut scatter = DMatrix::zeros(k, k);
    for j in 0..npts {
        if u[j] > 0.0 {
            let d = p.column(j) - &c;
            scatter += u[j] * &d * d.transpose();
        }
    }
    let mut shape = scatter
        .try_inverse()
        .ok_or_else(|| LpvError::Decomposition("singular ellipsoid scatter".into()))?
        / k as f64;
    shape = (&shape + shape.transpose()) * 0.5;
    let mut ell = Ellipsoid { center: c, shape };
    let worst = (0..npts)
        .map(|j| ell.membership(&p.column(j).into_owned()))
        .fold(0.0, f64::max);
    if worst > 1.0 {
        ell.shape /= worst;
    }
    Ok((
        ell,
        MveeReport {
            iterations,
            gap,
            converged,
            reduced_dim: None,
        },
    ))
}

/// Minimum-volume enclosing ellipsoid (Khachiyan's algorithm with away steps
/// and an active-set outer loop). The result is rescaled so that every point
/// has membership at most one.
///
/// Rank-deficient clouds are fitted in their affine hull; the missing
/// directions get a semi-axis of half the degenerate widening width.
pub fn min_volume_ellipsoid_with_report(points: &[DVector<f64>], tolerance: f64) -> Result<(Ellipsoid, MveeReport)> {
    let d = check_points(points)?;
    if !(tolerance > 0.0) {
        return Err(LpvError::InvalidArgument(format!("ellipsoid tolerance must be positive, got {tolerance}")));
    }
    let reduced: Vec<DVector<f64>> = if (2..=3).contains(&d) {
        hull_vertices(points)
    } else {
        points.to_vec()
    };
    let pm = points_matrix(&reduced);
    let mean = pm.column_mean();
    let eig = covariance(&pm).symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 1e-12 * top && top > 0.0).collect();
    if keep.len() < d {
        warn!(
            "ellipsoid fit: point cloud spans {} of {d} dimensions, fitting in the affine hull",
            keep.len()
        );
    }
    let r = keep.len();
    // whitened coordinates: the iteration is affine invariant but its
    // leverages are not well conditioned on elongated clouds
    let basis = DMatrix::from_columns(
        &keep
            .iter()
            .map(|&i| eig.eigenvectors.column(i) * eig.eigenvalues[i].sqrt())
            .collect::<Vec<_>>(),
    );
    let whiten = DMatrix::from_columns(
        &keep
            .iter()
            .map(|&i| eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt())
            .collect::<Vec<_>>(),
    );
    let thin = 0.5 * WIDENED_WIDTH;
    let mut shape = DMatrix::zeros(d, d);
    for i in (0..d).filter(|i| !keep.contains(i)) {
        let v = eig.eigenvectors.column(i);
        shape += v * v.transpose() / (thin * thin);
    }
    let (center, iterations, gap, converged) = if r == 0 {
        (mean.clone(), 0, 0.0, true)
    } else {
        let centered = DMatrix::from_fn(d, pm.ncols(), |i, j| pm[(i, j)] - mean[i]);
        let coords = whiten.transpose() * centered;
        let (sub, rep) = if r == 1 {
            let lo = coords.row(0).min();
            let hi = coords.row(0).max();
            let half = 0.5 * (hi - lo);
            (
                Ellipsoid {
                    center: DVector::from_element(1, 0.5 * (hi + lo)),
                    shape: DMatrix::from_element(1, 1, 1.0 / (half * half)),
                },
                MveeReport {
                    iterations: 0,
                    gap: 0.0,
                    converged: true,
                    reduced_dim: None,
                },
            )
        } else {
            mvee_full_rank(&coords, tolerance)?
        };
        shape += &whiten * &sub.shape * whiten.transpose();
        (&mean + &basis * &sub.center, rep.iterations, rep.gap, rep.converged)
    };
    let shape = (&shape + shape.transpose()) * 0.5;
    let mut ell = Ellipsoid { center, shape };
    let worst = points.iter().map(|p| ell.membership(p)).fold(0.0, f64::max);
    if worst > 1.0 {
        ell.shape /= worst;
    }
    Ok((
        ell,
        MveeReport {
            iterations,
            gap,
            converged,
            reduced_dim: (r < d).then_some(r),
        },
    ))
}

pub fn min_volume_ellipsoid(points: &[DVector<f64>], tolerance: f64) -> Result<Ellipsoid> {
    Ok(min_volume_ellipsoid_with_report(points, tolerance)?.0)
}

fn ball_through(support: &[DVector<f64>]) -> Option<(DVector<f64>, f64)> {
    let r0 = support.first()?;
    if support.len() == 1 {
        return Some((r0.clone(), 0.0));
    }
    let a = DMatrix::from_columns(&support[1..].iter().map(|s| s - r0).collect::<Vec<_>>());
    let g = a.transpose() * &a;
    let b = DVector::from_fn(support.len() - 1, |i, _| 0.5 * (&support[i + 1] - r0).norm_squared());
    let lambda = g.lu().solve(&b)?;
    if lambda.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let c = r0 + a * lambda;
    let r2 = (&c - r0).norm_squared();
    Some((c, r2))
}

/// Smallest ball through the support points; falls back to the diametral
/// ball of the farthest pair when the support is affinely dependent.
fn support_ball(support: &[DVector<f64>]) -> (DVector<f64>, f64) {
    if let Some(b) = ball_through(support) {
        return b;
    }
    let mut best = (support[0].clone(), 0.0);
    for i in 0..support.len() {
        for j in i + 1..support.len() {
            let r2 = 0.25 * (&support[i] - &support[j]).norm_squared();
            if r2 > best.1 {
                best = ((&support[i] + &support[j]) * 0.5, r2);
            }
        }
    }
    best
}

fn welzl_mtf(points: &mut [DVector<f64>], end: usize, support: &mut Vec<DVector<f64>>, eps: f64) -> (DVector<f64>, f64) {
    let d = points[0].len();
    let mut ball = if support.is_empty() {
        (points[0].clone(), -1.0)
    } else {
        support_ball(support)
    };
    if support.len() == d + 1 {
        return ball;
    }
    for i in 0..end {
        if ball.1 < 0.0 || (&points[i] - &ball.0).norm_squared() > ball.1 + eps {
            support.push(points[i].clone());
            ball = welzl_mtf(points, i, support, eps);
            support.pop();
            points[..=i].rotate_right(1);
        }
    }
    ball
}

/// Exact minimum enclosing sphere (Welzl's move-to-front algorithm on a
/// seeded shuffle of the hull vertices).
pub fn min_enclosing_sphere(points: &[DVector<f64>]) -> Result<Ellipsoid> {
    let d = check_points(points)?;
    let mut pts = if (2..=3).contains(&d) {
        hull_vertices(points)
    } else {
        points.to_vec()
    };
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5fe7e));
    let scale = pts.iter().map(|p| p.norm_squared()).fold(0.0, f64::max).max(1.0);
    let eps = 1e-12 * scale;
    let n = pts.len();
    let (center, r2) = welzl_mtf(&mut pts, n, &mut Vec::new(), eps);
    let radius = r2.max(0.0).sqrt();
    // cover roundoff so membership holds exactly for every input point
    let worst = points.iter().map(|p| (p - &center).norm()).fold(radius, f64::max);
    let radius = if worst > 0.0 { worst } else { 0.5 * WIDENED_WIDTH };
    Ok(Ellipsoid::sphere(center, radius))
}

/// Box aligned with the ellipsoid's principal axes, half-widths `1/sqrt(lambda_i)`.
pub fn ellipsoid_to_box(ell: &Ellipsoid) -> BoxRegion {
    let (frame, semi) = ell.axes();
    let zc = frame.transpose() * &ell.center;
    BoxRegion {
        lower: (0..ell.dim()).map(|i| zc[i] - semi[i]).collect(),
        upper: (0..ell.dim()).map(|i| zc[i] + semi[i]).collect(),
        rotation: Some(frame),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pts(raw: &[&[f64]]) -> Vec<DVector<f64>> {
        raw.iter().map(|p| DVector::from_column_slice(p)).collect()
    }

    #[test]
    fn diamond_gives_unit_circle() {
        let p = pts(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]);
        let (e, rep) = min_volume_ellipsoid_with_report(&p, 1e-6).unwrap();
        assert!(e.center.norm() < 1e-6);
        assert!((&e.shape - DMatrix::identity(2, 2)).abs().max() < 1e-6);
        assert!(rep.converged && rep.gap <= 1e-6);
    }

    #[test]
    fn square_corners_give_circumscribed_circle() {
        let p = pts(&[&[1.0, 1.0], &[-1.0, 1.0], &[1.0, -1.0], &[-1.0, -1.0]]);
        let e = min_volume_ellipsoid(&p, 1e-6).unwrap();
        assert!((e.volume() - 2.0 * std::f64::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn scaling_scales_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<DVector<f64>> = (0..300)
            .map(|_| DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let v1 = min_volume_ellipsoid(&p, 1e-8).unwrap().volume();
        let scaled: Vec<DVector<f64>> = p.iter().map(|x| x * 3.0).collect();
        let v3 = min_volume_ellipsoid(&scaled, 1e-8).unwrap().volume();
        assert!((v3 / v1 / 81.0 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn contains_all_points_in_higher_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p: Vec<DVector<f64>> = (0..5000)
            .map(|_| DVector::from_fn(6, |i, _| rng.gen_range(-1.0..1.0) * (i + 1) as f64))
            .collect();
        let (e, rep) = min_volume_ellipsoid_with_report(&p, 1e-6).unwrap();
        assert!(rep.converged);
        assert!(p.iter().all(|x| e.contains(x, 1e-9)));
    }

    #[test]
    fn flat_cloud_is_fitted_in_its_plane() {
        let p = pts(&[&[1.0, 0.0, 2.0], &[-1.0, 0.0, 2.0], &[0.0, 1.0, 2.0], &[0.0, -1.0, 2.0]]);
        let (e, rep) = min_volume_ellipsoid_with_report(&p, 1e-6).unwrap();
        assert_eq!(rep.reduced_dim, Some(2));
        assert!(p.iter().all(|x| e.contains(x, 1e-9)));
        assert!(!e.contains(&DVector::from_vec(vec![0.0, 0.0, 2.1]), 1e-9));
    }

    #[test]
    fn sphere_of_square_corners() {
        let p = pts(&[&[1.0, 1.0], &[-1.0, 1.0], &[1.0, -1.0], &[-1.0, -1.0], &[0.2, 0.1]]);
        let s = min_enclosing_sphere(&p).unwrap();
        assert!(s.center.norm() < 1e-12);
        assert!((s.shape[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sphere_contains_random_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<DVector<f64>> = (0..3000)
            .map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let s = min_enclosing_sphere(&p).unwrap();
        assert!(p.iter().all(|x| s.contains(x, 1e-12)));
        // the enclosing ball of a cube sample is at most the cube's circumscribed ball
        assert!(1.0 / s.shape[(0, 0)].sqrt() <= 3f64.sqrt() + 1e-12);
    }

    #[test]
    fn box_of_axis_aligned_ellipse() {
        let e = Ellipsoid {
            center: DVector::zeros(2),
            shape: DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0])),
        };
        let b = ellipsoid_to_box(&e);
        let iv = b.bounding_intervals();
        assert!((iv[0].lo + 2.0).abs() < 1e-12 && (iv[0].hi - 2.0).abs() < 1e-12);
        assert!((iv[1].lo + 1.0).abs() < 1e-12 && (iv[1].hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let e = Ellipsoid::sphere(DVector::from_vec(vec![1.0, 2.0, 3.0]), 2.0);
        let back: Ellipsoid = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
