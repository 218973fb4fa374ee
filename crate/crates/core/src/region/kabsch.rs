use nalgebra::DMatrix;

use crate::error::{check_len, LpvError, Result};

/// Proper rotation `R` minimizing `sum |R p_i - q_i|^2` over the centered
/// clouds `P` and `Q` (points as columns).
pub fn kabsch_rotation(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len("kabsch point count", p.ncols(), q.ncols())?;
    check_len("kabsch dimension", p.nrows(), q.nrows())?;
    let d = p.nrows();
    let center = |m: &DMatrix<f64>| {
        let mean = m.column_mean();
        DMatrix::from_fn(d, m.ncols(), |i, j| m[(i, j)] - mean[i])
    };
    let h = center(p) * center(q).transpose();
    let svd = h.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| LpvError::Decomposition("kabsch SVD did not return U".into()))?;
    let v = svd
        .v_t
        .ok_or_else(|| LpvError::Decomposition("kabsch SVD did not return V".into()))?
        .transpose();
    let mut correction = DMatrix::identity(d, d);
    if (&v * u.transpose()).determinant() < 0.0 {
        correction[(d - 1, d - 1)] = -1.0;
    }
    Ok(v * correction * u.transpose())
}

/// Flips the last column if needed so the frame has determinant +1.
pub fn proper_rotation(frame: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = frame.clone();
    if r.determinant() < 0.0 {
        let n = r.ncols();
        r.column_mut(n - 1).neg_mut();
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot2(a: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
    }

    #[test]
    fn recovers_planted_rotation() {
        let p = DMatrix::from_row_slice(2, 4, &[0.0, 2.0, 1.0, -1.0, 0.0, 0.5, 3.0, 1.0]);
        let r = rot2(0.7);
        let q = &r * &p;
        let est = kabsch_rotation(&p, &q).unwrap();
        assert!((est - r).abs().max() < 1e-12);
    }

    #[test]
    fn reflection_is_corrected() {
        let p = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let mirror = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, -1.0]));
        let est = kabsch_rotation(&p, &(&mirror * &p)).unwrap();
        assert!((est.determinant() - 1.0).abs() < 1e-12);
        assert!((est.transpose() * &est - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }
}
