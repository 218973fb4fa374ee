//! Fixed-step integration and trajectory-dataset generation.

use std::path::Path;

use log::warn;
use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::{fmt_f64, write_csv, Container, NamedArray};
use crate::error::{check_len, LpvError, Result};
use crate::model::{Dims, FactorizedModel, Interval, StateSpacePoint};

/// Open-loop input signal, held constant over each integration step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal {
    Constant { value: Vec<f64> },
    /// `values[i]` applies from `switch_times[i]` until the next switch;
    /// `switch_times[0]` must be 0.
    PiecewiseConstant {
        switch_times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl InputSignal {
    pub fn zeros(nu: usize) -> Self {
        InputSignal::Constant { value: vec![0.0; nu] }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        match self {
            InputSignal::Constant { value } => value,
            InputSignal::PiecewiseConstant { switch_times, values } => {
                let i = switch_times.partition_point(|&s| s <= t).max(1) - 1;
                &values[i]
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputSignal::Constant { value } => value.len(),
            InputSignal::PiecewiseConstant { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self, nu: usize) -> Result<()> {
        if let InputSignal::PiecewiseConstant { switch_times, values } = self {
            if switch_times.is_empty() || switch_times.len() != values.len() {
                return Err(LpvError::InvalidArgument(
                    "piecewise-constant input needs one value per switch time".into(),
                ));
            }
            if switch_times[0] != 0.0 || switch_times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(LpvError::InvalidArgument(
                    "switch times must start at 0 and increase strictly".into(),
                ));
            }
            for v in values {
                check_len("input value", nu, v.len())?;
            }
        } else {
            check_len("input value", nu, self.dim())?;
        }
        Ok(())
    }

    /// Random piecewise-constant signal with uniform levels in `bounds` and
    /// dwell times drawn from `[dwell_min, dwell_max]` seconds.
    pub fn random_steps(bounds: &[Interval], duration: f64, dwell: (f64, f64), rng: &mut impl Rng) -> Self {
        let mut switch_times = Vec::new();
        let mut values = Vec::new();
        let mut t = 0.0;
        while t < duration {
            switch_times.push(t);
            values.push(bounds.iter().map(|b| rng.gen_range(b.lo..=b.hi)).collect());
            t += rng.gen_range(dwell.0..=dwell.1);
        }
        InputSignal::PiecewiseConstant { switch_times, values }
    }

    /// Fixed maneuver profiles expressed as fractions of each input range.
    ///
    /// Known names: `glide`, `left_turn`, `right_turn`, `flare`, `s_turn`.
    pub fn maneuver(name: &str, bounds: &[Interval], duration: f64) -> Result<Self> {
        let level = |fracs: &[f64]| -> Vec<f64> {
            bounds
                .iter()
                .enumerate()
                .map(|(i, b)| b.lo + b.width() * fracs[i.min(fracs.len() - 1)])
                .collect()
        };
        let segments: Vec<(f64, Vec<f64>)> = match name {
            "glide" => vec![(0.0, vec![0.0, 0.0])],
            "left_turn" => vec![(0.0, vec![0.0, 0.0]), (0.2, vec![0.8, 0.1]), (0.8, vec![0.0, 0.0])],
            "right_turn" => vec![(0.0, vec![0.0, 0.0]), (0.2, vec![0.1, 0.8]), (0.8, vec![0.0, 0.0])],
            "flare" => vec![(0.0, vec![0.1, 0.1]), (0.6, vec![0.5, 0.5]), (0.85, vec![1.0, 1.0])],
            "s_turn" => vec![
                (0.0, vec![0.0, 0.0]),
                (0.15, vec![0.7, 0.0]),
                (0.4, vec![0.0, 0.7]),
                (0.65, vec![0.7, 0.0]),
                (0.9, vec![0.0, 0.0]),
            ],
            other => return Err(LpvError::InvalidArgument(format!("unknown maneuver '{other}'"))),
        };
        Ok(InputSignal::PiecewiseConstant {
            switch_times: segments.iter().map(|(f, _)| f * duration).collect(),
            values: segments.iter().map(|(_, fr)| level(fr)).collect(),
        })
    }
}

/// One open-loop simulation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub x0: Vec<f64>,
    pub input: InputSignal,
    pub duration: f64,
    #[serde(default)]
    pub wind: Vec<f64>,
}

/// Random scenarios: typical initial states with piecewise-constant inputs
/// (dwell 1-5 s) covering the input region. Wind is zero.
pub fn random_scenarios(model: &dyn FactorizedModel, count: usize, duration: f64, seed: u64) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = model.dims();
    (0..count)
        .map(|_| Scenario {
            x0: model.sample_initial_state(&mut rng).as_slice().to_vec(),
            input: InputSignal::random_steps(&model.region().u, duration, (1.0, 5.0), &mut rng),
            duration,
            wind: vec![0.0; dims.nw],
        })
        .collect()
}

/// Scenarios flying each fixed maneuver from a seeded initial state.
pub fn maneuver_scenarios(model: &dyn FactorizedModel, duration: f64, seed: u64) -> Result<Vec<Scenario>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = model.dims();
    ["glide", "left_turn", "right_turn", "flare", "s_turn"]
        .iter()
        .map(|name| {
            Ok(Scenario {
                x0: model.sample_initial_state(&mut rng).as_slice().to_vec(),
                input: InputSignal::maneuver(name, &model.region().u, duration)?,
                duration,
                wind: vec![0.0; dims.nw],
            })
        })
        .collect()
}

/// Uniformly sampled solution of an initial value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub nx: usize,
    pub nu: usize,
    /// row k holds x(k h)
    pub states: Vec<f64>,
    /// row k holds the input applied over [k h, (k+1) h)
    pub inputs: Vec<f64>,
    pub wind: Vec<f64>,
    /// integration stopped early on a non-finite state
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / self.nx.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.nx..(k + 1) * self.nx]
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.nu..(k + 1) * self.nu]
    }

    pub fn point(&self, k: usize) -> StateSpacePoint {
        StateSpacePoint::from_slices(self.state(k), self.input(k), &self.wind)
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((0..self.nx).map(|i| format!("x{i}")));
        header.extend((0..self.nu).map(|i| format!("u{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            path,
            &header,
            (0..self.len()).map(|k| {
                std::iter::once(fmt_f64(self.time(k)))
                    .chain(self.state(k).iter().map(|&v| fmt_f64(v)))
                    .chain(self.input(k).iter().map(|&v| fmt_f64(v)))
                    .collect::<Vec<_>>()
            }),
        )
    }
}

/// One classical fourth-order Runge-Kutta step for `x' = f(x)`.
pub fn rk4_step(f: &impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * h)));
    let k3 = f(&(x + &k2 * (0.5 * h)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Integrates `x' = f(x, u)` with a zero-order-hold input, applying
/// `canonicalize` after every step. Stops at the first non-finite state.
pub fn integrate_with(
    f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    canonicalize: impl Fn(&mut DVector<f64>),
    x0: &DVector<f64>,
    input: &InputSignal,
    nu: usize,
    wind: &[f64],
    h: f64,
    duration: f64,
) -> Result<Trajectory> {
    if !(h > 0.0) || !(duration >= h) {
        return Err(LpvError::InvalidArgument(format!(
            "need h > 0 and T >= h, got h={h}, T={duration}"
        )));
    }
    input.validate(nu)?;
    let steps = (duration / h).round() as usize;
    let nx = x0.len();
    let mut states = Vec::with_capacity((steps + 1) * nx);
    let mut inputs = Vec::with_capacity((steps + 1) * nu);
    let mut x = x0.clone();
    canonicalize(&mut x);
    let mut diverged = false;
    for k in 0..=steps {
        let u = DVector::from_column_slice(input.at(k as f64 * h));
        states.extend_from_slice(x.as_slice());
        inputs.extend_from_slice(u.as_slice());
        if k == steps {
            break;
        }
        let mut next = rk4_step(&|s: &DVector<f64>| f(s, &u), &x, h);
        canonicalize(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        x = next;
    }
    Ok(Trajectory {
        h,
        nx,
        nu,
        states,
        inputs,
        wind: wind.to_vec(),
        diverged,
    })
}

/// Integrates the nonlinear model with classical RK4 at fixed step `h`.
pub fn integrate_rk4(
    model: &dyn FactorizedModel,
    x0: &DVector<f64>,
    input: &InputSignal,
    wind: Option<&[f64]>,
    h: f64,
    duration: f64,
) -> Result<Trajectory> {
    let dims = model.dims();
    check_len("initial state", dims.nx, x0.len())?;
    let zero_wind = vec![0.0; dims.nw];
    let wind = wind.unwrap_or(&zero_wind);
    check_len("wind", dims.nw, wind.len())?;
    let w = DVector::from_column_slice(wind);
    integrate_with(
        |x, u| {
            model.f_unchecked(&StateSpacePoint {
                x: x.clone(),
                u: u.clone(),
                w: w.clone(),
            })
        },
        |x| model.canonicalize_state(x),
        x0,
        input,
        dims.nu,
        wind,
        h,
        duration,
    )
}

/// Integrates every scenario (in parallel); output order follows the input.
pub fn simulate_scenarios(model: &dyn FactorizedModel, scenarios: &[Scenario], h: f64) -> Result<Vec<Trajectory>> {
    scenarios
        .par_iter()
        .map(|s| {
            let x0 = DVector::from_column_slice(&s.x0);
            let wind = if s.wind.is_empty() { None } else { Some(s.wind.as_slice()) };
            let traj = integrate_rk4(model, &x0, &s.input, wind, h, s.duration)?;
            Ok(traj)
        })
        .collect()
}

/// Sampled `(x, u, w)` points with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub model_id: String,
    pub dims: Dims,
    pub h: f64,
    pub seed: u64,
    pub points: Vec<StateSpacePoint>,
    /// (trajectory id, time index) per point
    pub provenance: Vec<(u32, u32)>,
    /// false when the point lies outside the model's operating region
    pub in_region: Vec<bool>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn out_of_region(&self) -> usize {
        self.in_region.iter().filter(|b| !**b).count()
    }

    /// Points whose index satisfies `keep`.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> SampleSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        SampleSet {
            model_id: self.model_id.clone(),
            dims: self.dims,
            h: self.h,
            seed: self.seed,
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
            in_region: idx.iter().map(|&i| self.in_region[i]).collect(),
        }
    }

    /// Seeded random split into (train, validation) with `val_fraction` of
    /// the points in the validation part.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(LpvError::InvalidArgument(format!(
                "validation fraction must be in [0, 1), got {val_fraction}"
            )));
        }
        let n_val = (self.len() as f64 * val_fraction).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut is_val = vec![false; self.len()];
        for i in index::sample(&mut rng, self.len(), n_val) {
            is_val[i] = true;
        }
        Ok((self.select(|i| !is_val[i]), self.select(|i| is_val[i])))
    }

    pub fn to_container(&self) -> Container {
        let n = self.len();
        let mut c = Container::new(
            "sample_set",
            json!({
                "model": self.model_id,
                "dims": self.dims,
                "h": self.h,
                "seed": self.seed,
                "n": n,
            }),
        );
        let columnar = |name: &str, d: usize, get: &dyn Fn(&StateSpacePoint) -> &DVector<f64>| {
            let mut data = Vec::with_capacity(d * n);
            for i in 0..d {
                data.extend(self.points.iter().map(|p| get(p)[i]));
            }
            NamedArray::new(name, d, n, data)
        };
        c.push(columnar("x", self.dims.nx, &|p| &p.x));
        c.push(columnar("u", self.dims.nu, &|p| &p.u));
        c.push(columnar("w", self.dims.nw, &|p| &p.w));
        c.push(NamedArray::row_vector(
            "trajectory",
            &self.provenance.iter().map(|p| p.0 as f64).collect::<Vec<_>>(),
        ));
        c.push(NamedArray::row_vector(
            "time_index",
            &self.provenance.iter().map(|p| p.1 as f64).collect::<Vec<_>>(),
        ));
        c.push(NamedArray::row_vector(
            "in_region",
            &self.in_region.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        ));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("sample_set")?;
        let meta = &c.meta;
        let dims: Dims = serde_json::from_value(meta["dims"].clone())?;
        let n = meta["n"]
            .as_u64()
            .ok_or_else(|| LpvError::Format("sample_set header lacks n".into()))? as usize;
        let x = c.array("x")?;
        let u = c.array("u")?;
        let w = c.array("w")?;
        for (a, d) in [(x, dims.nx), (u, dims.nu), (w, dims.nw)] {
            if a.rows != d || a.cols != n {
                return Err(LpvError::Format(format!("array '{}' has wrong shape", a.name)));
            }
        }
        let col = |a: &NamedArray, k: usize| -> Vec<f64> { (0..a.rows).map(|i| a.data[i * n + k]).collect() };
        let points = (0..n)
            .map(|k| StateSpacePoint::from_slices(&col(x, k), &col(u, k), &col(w, k)))
            .collect();
        let traj = &c.array("trajectory")?.data;
        let tidx = &c.array("time_index")?.data;
        let inr = &c.array("in_region")?.data;
        if traj.len() != n || tidx.len() != n || inr.len() != n {
            return Err(LpvError::Format("provenance arrays have wrong length".into()));
        }
        Ok(SampleSet {
            model_id: meta["model"].as_str().unwrap_or_default().to_string(),
            dims,
            h: meta["h"].as_f64().unwrap_or(0.0),
            seed: meta["seed"].as_u64().unwrap_or(0),
            points,
            provenance: traj.iter().zip(tidx).map(|(&a, &b)| (a as u32, b as u32)).collect(),
            in_region: inr.iter().map(|&v| v != 0.0).collect(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let d = self.dims;
        let mut header = vec!["trajectory".to_string(), "time_index".to_string()];
        header.extend((0..d.nx).map(|i| format!("x{i}")));
        header.extend((0..d.nu).map(|i| format!("u{i}")));
        header.extend((0..d.nw).map(|i| format!("w{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            path,
            &header,
            self.points.iter().zip(&self.provenance).map(|(p, prov)| {
                [prov.0.to_string(), prov.1.to_string()]
                    .into_iter()
                    .chain(p.x.iter().chain(p.u.iter()).chain(p.w.iter()).map(|&v| fmt_f64(v)))
                    .collect::<Vec<_>>()
            }),
        )
    }
}

/// Builds a sample set from already simulated trajectories.
pub fn sample_trajectories(
    model: &dyn FactorizedModel,
    trajectories: &[Trajectory],
    n_samples: usize,
    seed: u64,
) -> Result<SampleSet> {
    let dims = model.dims();
    for (i, t) in trajectories.iter().enumerate() {
        if t.diverged {
            warn!("{}: trajectory {i} diverged after {} steps; kept truncated", model.id(), t.len());
        }
    }
    let offsets: Vec<usize> = trajectories
        .iter()
        .scan(0usize, |acc, t| {
            let start = *acc;
            *acc += t.len();
            Some(start)
        })
        .collect();
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    if total == 0 {
        return Err(LpvError::Simulation("no trajectory produced any point".into()));
    }
    if n_samples == 0 || n_samples > total {
        return Err(LpvError::InvalidArgument(format!(
            "sample count {n_samples} must be in 1..={total} (points available)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, total, n_samples).into_vec();
    picked.sort_unstable();
    let mut points = Vec::with_capacity(n_samples);
    let mut provenance = Vec::with_capacity(n_samples);
    let mut in_region = Vec::with_capacity(n_samples);
    for g in picked {
        let ti = offsets.partition_point(|&o| o <= g) - 1;
        let k = g - offsets[ti];
        let p = trajectories[ti].point(k);
        in_region.push(model.region().contains(&p));
        points.push(p);
        provenance.push((ti as u32, k as u32));
    }
    let set = SampleSet {
        model_id: model.id().to_string(),
        dims,
        h: trajectories[0].h,
        seed,
        points,
        provenance,
        in_region,
    };
    if set.out_of_region() > 0 {
        warn!(
            "{}: {} of {} sampled points lie outside the operating region",
            model.id(),
            set.out_of_region(),
            set.len()
        );
    }
    Ok(set)
}

/// Simulates all scenarios and draws `n_samples` points uniformly without
/// replacement, reproducibly from `seed`.
pub fn generate_dataset(
    model: &dyn FactorizedModel,
    scenarios: &[Scenario],
    h: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SampleSet> {
    let trajectories = simulate_scenarios(model, scenarios, h)?;
    if trajectories.iter().all(|t| t.diverged && t.len() <= 1) {
        return Err(LpvError::Simulation("all scenarios diverged".into()));
    }
    sample_trajectories(model, &trajectories, n_samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnalyticBenchmarkModel;

    #[test]
    fn rk4_linear_test_equation() {
        let x = DVector::from_element(1, 1.0);
        let y = rk4_step(&|s: &DVector<f64>| -s.clone(), &x, 0.1);
        // 1 - h + h^2/2 - h^3/6 + h^4/24
        let poly = 1.0 - 0.1 + 0.005 - 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((y[0] - poly).abs() < 1e-15);
        assert!((y[0] - 0.9048375).abs() < 1e-7);
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn zero_dynamics_stay_constant() {
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let t = integrate_with(
            |x, _| DVector::zeros(x.len()),
            |_| {},
            &x0,
            &InputSignal::zeros(1),
            1,
            &[],
            0.01,
            1.0,
        )
        .unwrap();
        assert_eq!(t.len(), 101);
        assert!((0..t.len()).all(|k| t.state(k) == x0.as_slice()));
    }

    #[test]
    fn divergence_truncates_with_flag() {
        let x0 = DVector::from_element(1, 1.0);
        let t = integrate_with(
            |x, _| x.map(|v| v * v * 1e3),
            |_| {},
            &x0,
            &InputSignal::zeros(0),
            0,
            &[],
            0.1,
            10.0,
        )
        .unwrap();
        assert!(t.diverged);
        assert!(t.len() < 101);
        assert!(t.states.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_step_rejected() {
        let m = AnalyticBenchmarkModel::new();
        let x0 = DVector::zeros(3);
        assert!(integrate_rk4(&m, &x0, &InputSignal::zeros(1), None, 0.0, 1.0).is_err());
        assert!(integrate_rk4(&m, &x0, &InputSignal::zeros(1), None, 0.1, 0.05).is_err());
    }

    #[test]
    fn piecewise_constant_lookup() {
        let s = InputSignal::PiecewiseConstant {
            switch_times: vec![0.0, 1.0, 2.5],
            values: vec![vec![1.0], vec![2.0], vec![3.0]],
        };
        assert_eq!(s.at(0.0), &[1.0]);
        assert_eq!(s.at(0.999), &[1.0]);
        assert_eq!(s.at(1.0), &[2.0]);
        assert_eq!(s.at(100.0), &[3.0]);
    }

    #[test]
    fn full_sample_is_identity_subsample() {
        let m = AnalyticBenchmarkModel::new();
        let sc = random_scenarios(&m, 2, 1.0, 3);
        let traj = simulate_scenarios(&m, &sc, 0.01).unwrap();
        let total: usize = traj.iter().map(Trajectory::len).sum();
        let set = sample_trajectories(&m, &traj, total, 9).unwrap();
        let mut k = 0;
        for (ti, t) in traj.iter().enumerate() {
            for i in 0..t.len() {
                assert_eq!(set.provenance[k], (ti as u32, i as u32));
                assert_eq!(set.points[k], t.point(i));
                k += 1;
            }
        }
        assert!(sample_trajectories(&m, &traj, total + 1, 9).is_err());
    }

    #[test]
    fn dataset_is_deterministic() {
        let m = AnalyticBenchmarkModel::new();
        let sc = random_scenarios(&m, 3, 2.0, 11);
        let a = generate_dataset(&m, &sc, 0.01, 100, 5).unwrap();
        let b = generate_dataset(&m, &sc, 0.01, 100, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&m, &sc, 0.01, 100, 6).unwrap();
        assert_ne!(a.provenance, c.provenance);
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let m = AnalyticBenchmarkModel::new();
        let sc = random_scenarios(&m, 2, 2.0, 1);
        let set = generate_dataset(&m, &sc, 0.01, 200, 2).unwrap();
        let (tr, va) = set.split(0.25, 4).unwrap();
        assert_eq!(tr.len() + va.len(), 200);
        assert_eq!(va.len(), 50);
        for p in &va.provenance {
            assert!(!tr.provenance.contains(p));
        }
    }

    #[test]
    fn sample_set_container_round_trip() {
        let m = AnalyticBenchmarkModel::new();
        let sc = random_scenarios(&m, 2, 1.0, 1);
        let set = generate_dataset(&m, &sc, 0.01, 50, 2).unwrap();
        let back = SampleSet::from_container(&Container::from_bytes(&set.to_container().to_bytes().unwrap()).unwrap())
            .unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn maneuvers_are_valid_signals() {
        let bounds = vec![Interval::new(0.0, 1.0); 2];
        for name in ["glide", "left_turn", "right_turn", "flare", "s_turn"] {
            let s = InputSignal::maneuver(name, &bounds, 60.0).unwrap();
            s.validate(2).unwrap();
        }
        assert!(InputSignal::maneuver("loop", &bounds, 60.0).is_err());
    }
}
