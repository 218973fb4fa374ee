//! Reduction quality: element-wise `Pi` error, state-derivative error and
//! open-loop trajectory comparison.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{fmt_f64, write_csv, write_json};
use crate::error::{check_len, LpvError, Result};
use crate::lpv::{gamma_of, GammaLayout, SchedulingReduction};
use crate::model::{evaluate_matrices, Block, FactorizedModel, StateSpacePoint};
use crate::sim::{integrate_rk4, integrate_with, InputSignal, Trajectory};

/// Row-wise normalized errors with the rows whose reference was identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowErrors {
    pub values: Vec<f64>,
    /// Rows with `|ref_i|_inf = 0`, reported with denominator 1.
    pub flagged: Vec<usize>,
}

/// `e_i = |R_i - Rhat_i|_2 / |R_i|_inf` for every row `i`.
pub fn row_errors(reference: &DMatrix<f64>, approx: &DMatrix<f64>) -> Result<RowErrors> {
    if reference.shape() != approx.shape() {
        return Err(LpvError::DimensionMismatch {
            what: format!("approximation shape (reference {:?})", reference.shape()),
            expected: reference.len(),
            got: approx.len(),
        });
    }
    let mut values = Vec::with_capacity(reference.nrows());
    let mut flagged = Vec::new();
    for i in 0..reference.nrows() {
        let r = reference.row(i);
        let num = (r - approx.row(i)).norm();
        let mut den = r.amax();
        if den == 0.0 {
            flagged.push(i);
            den = 1.0;
        }
        values.push(num / den);
    }
    Ok(RowErrors { values, flagged })
}

/// Element error of the scheduling variations, one value per row of `Pi`.
pub fn error_pi(pi: &DMatrix<f64>, pi_hat: &DMatrix<f64>) -> Result<RowErrors> {
    row_errors(pi, pi_hat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RmsConvention {
    /// `sqrt(sum a_i^2)`, without division by the count.
    #[default]
    RootSumSquares,
    /// `sqrt(sum a_i^2 / n)`.
    RootMeanSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub max: f64,
    pub rms: f64,
}

pub fn aggregate(v: &[f64]) -> Result<Aggregate> {
    aggregate_with(v, RmsConvention::RootSumSquares)
}

pub fn aggregate_with(v: &[f64], convention: RmsConvention) -> Result<Aggregate> {
    if v.is_empty() {
        return Err(LpvError::Empty("cannot aggregate an empty error vector".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ss: f64 = v.iter().map(|a| a * a).sum();
    let rms = match convention {
        RmsConvention::RootSumSquares => ss.sqrt(),
        RmsConvention::RootMeanSquare => (ss / v.len() as f64).sqrt(),
    };
    Ok(Aggregate { max, rms })
}

/// `[A B_u]` at `pt` applied to `[x; u]`.
fn state_input_derivative(m: &crate::model::FactorMatrices, pt: &StateSpacePoint) -> DVector<f64> {
    m.block(Block::A) * &pt.x + m.block(Block::Bu) * &pt.u
}

/// Reference and reconstruction evaluated over a sample list.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub pi: DMatrix<f64>,
    pub pi_hat: DMatrix<f64>,
    /// `A x + B_u u` per sample (column).
    pub f: DMatrix<f64>,
    pub f_hat: DMatrix<f64>,
    pub skipped: usize,
}

/// Evaluates the true factorization and the reduction's reconstruction at
/// every point (with `w = 0`). Points where either fails are skipped.
pub fn reconstruct(
    model: &dyn FactorizedModel,
    reduction: &dyn SchedulingReduction,
    points: &[StateSpacePoint],
    layout: GammaLayout,
) -> Result<Reconstruction> {
    let dims = model.dims();
    let rows: Vec<Option<[DVector<f64>; 4]>> = points
        .par_iter()
        .map(|pt| {
            let pt = pt.without_disturbance();
            let m = evaluate_matrices(model, &pt).ok()?;
            let mh = reduction.matrices_at(model, &pt).ok()?;
            let out = [
                gamma_of(&m, layout),
                gamma_of(&mh, layout),
                state_input_derivative(&m, &pt),
                state_input_derivative(&mh, &pt),
            ];
            out.iter().all(|v| v.iter().all(|x| x.is_finite())).then_some(out)
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        warn!("error evaluation skipped {skipped} samples");
    }
    let good: Vec<&[DVector<f64>; 4]> = rows.iter().flatten().collect();
    if good.is_empty() {
        return Err(LpvError::Empty("no sample could be evaluated".into()));
    }
    let n_pi = layout.len(&dims);
    let build = |k: usize, len: usize| {
        let mut m = DMatrix::zeros(len, good.len());
        for (j, r) in good.iter().enumerate() {
            m.set_column(j, &r[k]);
        }
        m
    };
    Ok(Reconstruction {
        pi: build(0, n_pi),
        pi_hat: build(1, n_pi),
        f: build(2, dims.nx),
        f_hat: build(3, dims.nx),
        skipped,
    })
}

/// State-derivative error, one value per state.
pub fn error_xdot(
    model: &dyn FactorizedModel,
    reduction: &dyn SchedulingReduction,
    points: &[StateSpacePoint],
) -> Result<(RowErrors, usize)> {
    let rec = reconstruct(model, reduction, points, GammaLayout::StateInput)?;
    Ok((row_errors(&rec.f, &rec.f_hat)?, rec.skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: String,
    pub normalization: String,
    pub dataset: String,
    pub n_theta_hat: usize,
    /// Samples the errors were computed on; `e_Pi` scales with `sqrt(N)`.
    pub n_samples: usize,
    pub skipped: usize,
    pub rms_convention: RmsConvention,
    pub e_pi: RowErrors,
    pub e_xdot: RowErrors,
    pub pi: Aggregate,
    pub xdot: Aggregate,
}

impl ErrorReport {
    pub fn from_reconstruction(
        reduction: &dyn SchedulingReduction,
        rec: &Reconstruction,
        dataset: &str,
        convention: RmsConvention,
    ) -> Result<Self> {
        let e_pi = error_pi(&rec.pi, &rec.pi_hat)?;
        let e_xdot = row_errors(&rec.f, &rec.f_hat)?;
        Ok(Self {
            method: reduction.method().to_string(),
            normalization: reduction.normalization().to_string(),
            dataset: dataset.to_string(),
            n_theta_hat: reduction.n_theta_hat(),
            n_samples: rec.pi.ncols(),
            skipped: rec.skipped,
            rms_convention: convention,
            pi: aggregate_with(&e_pi.values, convention)?,
            xdot: aggregate_with(&e_xdot.values, convention)?,
            e_pi,
            e_xdot,
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    /// The four aggregate measures as `(name, value)`.
    pub fn measures(&self) -> [(&'static str, f64); 4] {
        [
            ("e_pi_max", self.pi.max),
            ("e_pi_rms", self.pi.rms),
            ("e_xdot_max", self.xdot.max),
            ("e_xdot_rms", self.xdot.rms),
        ]
    }
}

/// Computes both error measures of a reduction on `points`.
pub fn evaluate_reduction(
    model: &dyn FactorizedModel,
    reduction: &dyn SchedulingReduction,
    points: &[StateSpacePoint],
    layout: GammaLayout,
    dataset: &str,
) -> Result<ErrorReport> {
    let rec = reconstruct(model, reduction, points, layout)?;
    ErrorReport::from_reconstruction(reduction, &rec, dataset, RmsConvention::RootSumSquares)
}

/// Tidy CSV, one row per `(method, normalization, n_theta_hat, measure)`.
pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[ErrorReport]) -> Result<()> {
    let rows = reports.iter().flat_map(|r| {
        r.measures().into_iter().map(move |(name, v)| {
            vec![
                r.method.clone(),
                r.normalization.clone(),
                r.n_theta_hat.to_string(),
                r.dataset.clone(),
                r.n_samples.to_string(),
                name.to_string(),
                fmt_f64(v),
            ]
        })
    });
    write_csv(
        path,
        &[
            "method",
            "normalization",
            "n_theta_hat",
            "dataset",
            "n_samples",
            "measure",
            "value",
        ],
        rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonError {
    pub t: f64,
    /// `|x(t) - x_hat(t)|_2`
    pub error: f64,
}

/// A reduced-model trajectory and its deviation from the nonlinear one.
#[derive(Debug, Clone)]
pub struct ReducedTrajectory {
    pub label: String,
    pub n_theta_hat: usize,
    pub trajectory: Trajectory,
    /// Largest `|x(t) - x_hat(t)|_inf` over the compared horizon.
    pub max_error: f64,
    pub final_error: f64,
    /// Per-state absolute error at the last compared time.
    pub final_state_error: Vec<f64>,
    pub horizons: Vec<HorizonError>,
}

impl ReducedTrajectory {
    pub fn diverged(&self) -> bool {
        self.trajectory.diverged
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub nonlinear: Trajectory,
    pub reduced: Vec<ReducedTrajectory>,
}

#[derive(Serialize)]
struct ReducedSummary<'a> {
    label: &'a str,
    n_theta_hat: usize,
    diverged: bool,
    steps: usize,
    max_error: f64,
    final_error: f64,
    final_state_error: &'a [f64],
    horizons: &'a [HorizonError],
}

impl TrajectoryBundle {
    /// Long format: `model, n_theta_hat, t, x0.., u0..`, the nonlinear model first.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let nl = &self.nonlinear;
        let mut header = vec!["model".to_string(), "n_theta_hat".to_string(), "t".to_string()];
        header.extend((0..nl.nx).map(|i| format!("x{i}")));
        header.extend((0..nl.nu).map(|i| format!("u{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let series = std::iter::once(("nonlinear", String::new(), nl))
            .chain(self.reduced.iter().map(|r| (r.label.as_str(), r.n_theta_hat.to_string(), &r.trajectory)));
        let rows = series.flat_map(|(label, n, tr)| {
            (0..tr.len()).map(move |k| {
                [label.to_string(), n.clone(), fmt_f64(tr.time(k))]
                    .into_iter()
                    .chain(tr.state(k).iter().map(|&v| fmt_f64(v)))
                    .chain(tr.input(k).iter().map(|&v| fmt_f64(v)))
                    .collect::<Vec<_>>()
            })
        });
        write_csv(path, &header, rows)
    }

    pub fn summary(&self) -> serde_json::Value {
        let reduced: Vec<ReducedSummary> = self
            .reduced
            .iter()
            .map(|r| ReducedSummary {
                label: &r.label,
                n_theta_hat: r.n_theta_hat,
                diverged: r.diverged(),
                steps: r.trajectory.len(),
                max_error: r.max_error,
                final_error: r.final_error,
                final_state_error: &r.final_state_error,
                horizons: &r.horizons,
            })
            .collect();
        serde_json::json!({
            "h": self.nonlinear.h,
            "steps": self.nonlinear.len(),
            "nonlinear_diverged": self.nonlinear.diverged,
            "reduced": reduced,
        })
    }
}

/// Integrates the nonlinear model and every reduced model from `x0` under
/// the same input. Each reduced model is scheduled along its own state,
/// `x_hat' = A(theta_hat) x_hat + B_u(theta_hat) u + B_w(theta_hat) w`
/// with `theta_hat = psi_hat(x_hat, u, w)`.
pub fn compare_trajectories(
    model: &dyn FactorizedModel,
    reductions: &[(&str, &dyn SchedulingReduction)],
    x0: &DVector<f64>,
    input: &InputSignal,
    h: f64,
    duration: f64,
) -> Result<TrajectoryBundle> {
    let dims = model.dims();
    check_len("initial state", dims.nx, x0.len())?;
    let nonlinear = integrate_rk4(model, x0, input, None, h, duration)?;
    let wind = vec![0.0; dims.nw];
    let w = DVector::zeros(dims.nw);
    let reduced = reductions
        .par_iter()
        .map(|(label, red)| {
            let rhs = |x: &DVector<f64>, u: &DVector<f64>| {
                let pt = StateSpacePoint {
                    x: x.clone(),
                    u: u.clone(),
                    w: w.clone(),
                };
                match red.matrices_at(model, &pt) {
                    Ok(m) => m.state_derivative(&pt),
                    Err(_) => DVector::from_element(dims.nx, f64::NAN),
                }
            };
            let tr = integrate_with(rhs, |x| model.canonicalize_state(x), x0, input, dims.nu, &wind, h, duration)?;
            Ok(deviation(label, red.n_theta_hat(), &nonlinear, tr))
        })
        .collect::<Result<Vec<_>>>()?;
    for r in reduced.iter().filter(|r| r.diverged()) {
        warn!("reduced model '{}' diverged after {} steps", r.label, r.trajectory.len());
    }
    Ok(TrajectoryBundle { nonlinear, reduced })
}

fn deviation(label: &str, n_theta_hat: usize, reference: &Trajectory, tr: Trajectory) -> ReducedTrajectory {
    let n = tr.len().min(reference.len());
    let diff = |k: usize| -> Vec<f64> {
        reference
            .state(k)
            .iter()
            .zip(tr.state(k))
            .map(|(a, b)| (a - b).abs())
            .collect()
    };
    let max_error = (0..n)
        .map(|k| diff(k).into_iter().fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let last = n.saturating_sub(1);
    let final_state_error = diff(last);
    let final_error = final_state_error.iter().map(|e| e * e).sum::<f64>().sqrt();
    let horizons = [0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&frac| {
            let k = ((last as f64) * frac).round() as usize;
            HorizonError {
                t: tr.time(k),
                error: diff(k).iter().map(|e| e * e).sum::<f64>().sqrt(),
            }
        })
        .collect();
    ReducedTrajectory {
        label: label.to_string(),
        n_theta_hat,
        trajectory: tr,
        max_error,
        final_error,
        final_state_error,
        horizons,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    pub points: usize,
    pub skipped: usize,
    /// `max_k |f_k - f_hat_k|_inf / |f_k|_inf`
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// Compares `f(x, u, 0)` with the affine model scheduled by the full
/// extracted scheduling vector.
pub fn embedding_exactness(
    model: &dyn FactorizedModel,
    lpv: &crate::lpv::AffineLpvModel,
    points: &[StateSpacePoint],
) -> Result<ExactnessReport> {
    let errs: Vec<Option<f64>> = points
        .par_iter()
        .map(|pt| {
            let pt = pt.without_disturbance();
            let f = crate::model::evaluate_f(model, &pt).ok()?;
            let theta = crate::model::extract_full_scheduling(model, &pt).ok()?;
            let (xdot, _) = lpv.evaluate(&theta, &pt).ok()?;
            let den = f.amax();
            let num = (&f - xdot).amax();
            Some(if den > 0.0 { num / den } else { num })
        })
        .collect();
    let good: Vec<f64> = errs.iter().flatten().copied().collect();
    if good.is_empty() {
        return Err(LpvError::Empty("no point could be evaluated".into()));
    }
    Ok(ExactnessReport {
        points: good.len(),
        skipped: points.len() - good.len(),
        max_rel_error: good.iter().copied().fold(0.0, f64::max),
        mean_rel_error: good.iter().sum::<f64>() / good.len() as f64,
    })
}

/// Writes a report list as JSON.
pub fn write_reports_json(path: impl AsRef<Path>, reports: &[ErrorReport]) -> Result<()> {
    write_json(path, &reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_reconstruction_has_zero_error() {
        let pi = DMatrix::from_fn(3, 5, |i, j| (i + j) as f64 - 2.0);
        let e = error_pi(&pi, &pi).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
    }

    #[test]
    fn single_row_arithmetic() {
        let pi = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let e = error_pi(&pi, &DMatrix::zeros(1, 2)).unwrap();
        assert_eq!(e.values, vec![1.0]);
        assert!(e.flagged.is_empty());
    }

    #[test]
    fn zero_row_is_flagged() {
        let pi = DMatrix::zeros(2, 3);
        let mut hat = DMatrix::zeros(2, 3);
        hat[(1, 0)] = 3.0;
        hat[(1, 1)] = 4.0;
        let e = error_pi(&pi, &hat).unwrap();
        assert_eq!(e.values, vec![0.0, 5.0]);
        assert_eq!(e.flagged, vec![0, 1]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(error_pi(&DMatrix::zeros(2, 3), &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[3.0, 4.0]).unwrap(), Aggregate { max: 4.0, rms: 5.0 });
        assert_eq!(aggregate(&[0.0, 0.0]).unwrap(), Aggregate { max: 0.0, rms: 0.0 });
        assert_eq!(aggregate(&[2.5]).unwrap(), Aggregate { max: 2.5, rms: 2.5 });
        assert!(aggregate(&[]).is_err());
        let ms = aggregate_with(&[3.0, 4.0], RmsConvention::RootMeanSquare).unwrap();
        assert!((ms.rms - 12.5f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn max_bounds_rms(v in prop::collection::vec(0.0f64..1e3, 1..40)) {
            let a = aggregate(&v).unwrap();
            prop_assert!(a.max >= a.rms / (v.len() as f64).sqrt() * (1.0 - 1e-12));
            prop_assert!(a.rms >= a.max * (1.0 - 1e-12));
        }

        #[test]
        fn errors_are_non_negative(vals in prop::collection::vec(-5.0f64..5.0, 24)) {
            let a = DMatrix::from_row_slice(3, 4, &vals[..12]);
            let b = DMatrix::from_row_slice(3, 4, &vals[12..]);
            let e = error_pi(&a, &b).unwrap();
            prop_assert!(e.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
