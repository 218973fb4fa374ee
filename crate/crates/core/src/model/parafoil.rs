//! Single-rigid-body parafoil return vehicle.
//!
//! State `x = [r, eta, v, omega]` (12), input `delta = [delta_l, delta_r]` in
//! `[0, 1]^2`, disturbance `w` (inertial wind, 3). Position is Earth-centred
//! with the local vertical along `+z`; attitude uses Z-Y-X Euler angles
//! `eta = [roll, pitch, yaw]`; velocities and rates are in the body frame
//! (x forward, y left, z up).
//!
//! The aerodynamic coefficients are polynomial surrogates chosen so that the
//! vehicle trims in a stable glide of roughly 16 m/s at a 3:1 glide ratio:
//!
//! ```text
//! v_a = v - R(eta)^T w,   V = |v_a|,   k = rho(h) S / 2
//! f_a = k V D(delta) v_a + k V c F_omega omega + k V^2 F_delta delta
//! m_a = k V b M_v(delta) v_a + k V b^2 M_omega omega + k V^2 b M_delta delta
//! D(delta) = D_0 + (delta_l + delta_r) D_1,  M_v(delta) = M_v0 + (delta_l + delta_r) M_v1
//! ```
//!
//! Factorization (column assignment of each term):
//!
//! | term | block | column |
//! |------|-------|--------|
//! | `R(eta) v` | `A` | `v` |
//! | `J(eta) omega` | `A` | `omega` |
//! | `-omega x v` | `A` | `v` |
//! | gravity `-mu R^T r / |r|^3` | `A` | `r` |
//! | `k V D(delta) v_a` | `A` / `B_w` | `v` / `w` |
//! | `k V c F_omega omega` | `A` | `omega` |
//! | `k V^2 F_delta delta` | `B_u` | `delta` |
//! | `-omega x I omega` | `A` | `omega` |
//! | `k V b M_v(delta) v_a` | `A` / `B_w` | `v` / `w` |
//! | `k V b^2 M_omega omega` | `A` | `omega` |
//! | `k V^2 b M_delta delta` | `B_u` | `delta` |
//!
//! The brake-dependent parts of `D` and `M_v` multiply a velocity direction
//! and could be assigned to either the `v` or the `delta` columns; they go to
//! `v`, the column with the larger typical magnitude (tens of m/s against a
//! unit deflection).

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;

use super::{
    detect_scheduling_entries, Block, Dims, FactorMatrices, FactorizedModel, Interval, OperatingRegion,
    SchedulingEntry, StateSpacePoint,
};

type M3 = [[f64; 3]; 3];

/// Physical and aerodynamic parameters of [`ParafoilModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParafoilParams {
    /// kg
    pub mass: f64,
    /// kg m^2, body frame
    pub inertia: M3,
    /// m^3/s^2
    pub gravitational_parameter: f64,
    /// m
    pub earth_radius: f64,
    /// kg/m^3 at sea level
    pub sea_level_density: f64,
    /// m
    pub density_scale_height: f64,
    /// canopy reference area, m^2
    pub area: f64,
    /// span, m
    pub span: f64,
    /// mean chord, m
    pub chord: f64,
    pub force_velocity: M3,
    pub force_velocity_brake: M3,
    pub force_rate: M3,
    pub force_deflection: [[f64; 2]; 3],
    pub moment_velocity: M3,
    pub moment_velocity_brake: M3,
    pub moment_rate: M3,
    pub moment_deflection: [[f64; 2]; 3],
}

impl Default for ParafoilParams {
    fn default() -> Self {
        let (cl, cdx, cdy, cdz) = (0.6, 0.2, 0.5, 0.2);
        let cm_w = -0.03;
        // pitch trim at the glide angle tan(gamma) = cdx / cl
        let cm_u = cm_w * cdx / cl;
        Self {
            mass: 2000.0,
            inertia: [[2.0e4, 0.0, 1.0e3], [0.0, 1.5e4, 0.0], [1.0e3, 0.0, 2.5e4]],
            gravitational_parameter: 3.986_004_418e14,
            earth_radius: 6.371e6,
            sea_level_density: 1.225,
            density_scale_height: 8500.0,
            area: 300.0,
            span: 20.0,
            chord: 5.0,
            force_velocity: [[-cdx, 0.0, -cl], [0.0, -cdy, 0.0], [cl, 0.0, -cdz]],
            force_velocity_brake: [[-0.10, 0.0, -0.15], [0.0, 0.0, 0.0], [0.15, 0.0, -0.10]],
            force_rate: [[0.0, 0.1, 0.0], [-0.05, 0.0, 0.05], [0.0, -0.3, 0.0]],
            force_deflection: [[-0.01, -0.01], [0.02, -0.02], [0.01, 0.01]],
            moment_velocity: [[0.0, 0.004, 0.0], [cm_u, 0.0, cm_w], [0.0, 0.006, 0.0]],
            moment_velocity_brake: [[0.0, 0.0, 0.0], [-0.003, 0.0, 0.0], [0.0, 0.0, 0.0]],
            moment_rate: [[-0.05, 0.0, 0.01], [0.0, -0.08, 0.0], [0.01, 0.0, -0.04]],
            moment_deflection: [[-0.002, 0.002], [0.001, 0.001], [0.004, -0.004]],
        }
    }
}

fn m3(a: &M3) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| a[i][j])
}

fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Body-to-inertial rotation for Z-Y-X Euler angles.
pub fn rotation(eta: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = eta.x.sin_cos();
    let (st, ct) = eta.y.sin_cos();
    let (ss, cs) = eta.z.sin_cos();
    Matrix3::new(
        ct * cs,
        sp * st * cs - cp * ss,
        cp * st * cs + sp * ss,
        ct * ss,
        sp * st * ss + cp * cs,
        cp * st * ss - sp * cs,
        -st,
        sp * ct,
        cp * ct,
    )
}

/// Body rates to Euler-angle rates.
pub fn euler_rate_map(eta: &Vector3<f64>) -> Matrix3<f64> {
    let (sp, cp) = eta.x.sin_cos();
    let (st, ct) = eta.y.sin_cos();
    let tt = st / ct;
    Matrix3::new(1.0, sp * tt, cp * tt, 0.0, cp, -sp, 0.0, sp / ct, cp / ct)
}

/// Precomputed constant matrices.
#[derive(Debug, Clone)]
struct Coefficients {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    d0: Matrix3<f64>,
    d1: Matrix3<f64>,
    f_rate: Matrix3<f64>,
    f_defl: nalgebra::Matrix3x2<f64>,
    mv0: Matrix3<f64>,
    mv1: Matrix3<f64>,
    m_rate: Matrix3<f64>,
    m_defl: nalgebra::Matrix3x2<f64>,
}

/// Quantities shared by the direct and factorized routes.
struct Operating {
    rot: Matrix3<f64>,
    r: Vector3<f64>,
    eta: Vector3<f64>,
    v: Vector3<f64>,
    omega: Vector3<f64>,
    delta: nalgebra::Vector2<f64>,
    airspeed: Vector3<f64>,
    speed: f64,
    dyn_factor: f64,
    drag: Matrix3<f64>,
    moment_vel: Matrix3<f64>,
}

#[derive(Debug, Clone)]
pub struct ParafoilModel {
    params: ParafoilParams,
    coeffs: Coefficients,
    region: OperatingRegion,
    entries: Vec<SchedulingEntry>,
}

impl ParafoilModel {
    const DIMS: Dims = Dims { nx: 12, nu: 2, nw: 3, ny: 12 };

    pub fn new(params: ParafoilParams) -> Self {
        let inertia = m3(&params.inertia);
        let inertia_inv = inertia
            .try_inverse()
            .expect("parafoil inertia matrix must be invertible");
        let coeffs = Coefficients {
            inertia,
            inertia_inv,
            d0: m3(&params.force_velocity),
            d1: m3(&params.force_velocity_brake),
            f_rate: m3(&params.force_rate),
            f_defl: nalgebra::Matrix3x2::from_fn(|i, j| params.force_deflection[i][j]),
            mv0: m3(&params.moment_velocity),
            mv1: m3(&params.moment_velocity_brake),
            m_rate: m3(&params.moment_rate),
            m_defl: nalgebra::Matrix3x2::from_fn(|i, j| params.moment_deflection[i][j]),
        };
        let re = params.earth_radius;
        let region = OperatingRegion {
            x: vec![
                Interval::new(-3.0e3, 3.0e3),
                Interval::new(-3.0e3, 3.0e3),
                Interval::new(re, re + 6.0e3),
                Interval::new(-PI, PI),
                Interval::new(-1.2, 1.2),
                Interval::new(-PI, PI),
                Interval::new(-50.0, 50.0),
                Interval::new(-50.0, 50.0),
                Interval::new(-50.0, 50.0),
                Interval::new(-0.1, 0.1),
                Interval::new(-0.1, 0.1),
                Interval::new(-0.1, 0.1),
            ],
            u: vec![Interval::new(0.0, 1.0); 2],
            w: vec![Interval::new(-18.0, 18.0); 3],
        };
        let mut model = Self {
            params,
            coeffs,
            region,
            entries: Vec::new(),
        };
        model.entries = detect_scheduling_entries(
            &Self::DIMS,
            &model.region,
            &[Block::A, Block::Bu, Block::Bw],
            |pt| model.factorize(pt),
        );
        model
    }

    pub fn params(&self) -> &ParafoilParams {
        &self.params
    }

    /// Air density at altitude `h` above the reference sphere.
    pub fn density(&self, altitude: f64) -> f64 {
        self.params.sea_level_density * (-altitude / self.params.density_scale_height).exp()
    }

    fn operating(&self, pt: &StateSpacePoint) -> Operating {
        let x = &pt.x;
        let r = Vector3::new(x[0], x[1], x[2]);
        let eta = Vector3::new(x[3], x[4], x[5]);
        let v = Vector3::new(x[6], x[7], x[8]);
        let omega = Vector3::new(x[9], x[10], x[11]);
        let delta = nalgebra::Vector2::new(pt.u[0], pt.u[1]);
        let wind = Vector3::new(pt.w[0], pt.w[1], pt.w[2]);
        let rot = rotation(&eta);
        let airspeed = v - rot.transpose() * wind;
        let speed = airspeed.norm();
        let altitude = r.norm() - self.params.earth_radius;
        let dyn_factor = 0.5 * self.density(altitude) * self.params.area;
        let brake = delta.x + delta.y;
        let c = &self.coeffs;
        Operating {
            rot,
            r,
            eta,
            v,
            omega,
            delta,
            airspeed,
            speed,
            dyn_factor,
            drag: c.d0 + c.d1 * brake,
            moment_vel: c.mv0 + c.mv1 * brake,
        }
    }

    fn factorize(&self, pt: &StateSpacePoint) -> FactorMatrices {
        let op = self.operating(pt);
        let c = &self.coeffs;
        let p = &self.params;
        let (m, b, cbar) = (p.mass, p.span, p.chord);
        let kv = op.dyn_factor * op.speed;
        let kv2 = kv * op.speed;
        let rt = op.rot.transpose();
        let rn = op.r.norm();

        let mut fm = FactorMatrices::with_identity_output(&Self::DIMS);
        let mut put = |block: Block, r0: usize, c0: usize, mat: &dyn Fn(usize, usize) -> f64, cols: usize| {
            let target = fm.block_mut(block);
            for i in 0..3 {
                for j in 0..cols {
                    target[(r0 + i, c0 + j)] += mat(i, j);
                }
            }
        };
        // kinematics
        put(Block::A, 0, 6, &|i, j| op.rot[(i, j)], 3);
        let jmap = euler_rate_map(&op.eta);
        put(Block::A, 3, 9, &|i, j| jmap[(i, j)], 3);
        // translational dynamics
        let grav = rt * (-p.gravitational_parameter / (rn * rn * rn));
        put(Block::A, 6, 0, &|i, j| grav[(i, j)], 3);
        let avv = -cross_matrix(&op.omega) + op.drag * (kv / m);
        put(Block::A, 6, 6, &|i, j| avv[(i, j)], 3);
        let avw = c.f_rate * (kv * cbar / m);
        put(Block::A, 6, 9, &|i, j| avw[(i, j)], 3);
        let bvd = c.f_defl * (kv2 / m);
        put(Block::Bu, 6, 0, &|i, j| bvd[(i, j)], 2);
        let bvw = -(op.drag * rt) * (kv / m);
        put(Block::Bw, 6, 0, &|i, j| bvw[(i, j)], 3);
        // rotational dynamics
        let awv = c.inertia_inv * op.moment_vel * (kv * b);
        put(Block::A, 9, 6, &|i, j| awv[(i, j)], 3);
        let aww = -(c.inertia_inv * cross_matrix(&op.omega) * c.inertia) + c.inertia_inv * c.m_rate * (kv * b * b);
        put(Block::A, 9, 9, &|i, j| aww[(i, j)], 3);
        let bwd = c.inertia_inv * c.m_defl * (kv2 * b);
        put(Block::Bu, 9, 0, &|i, j| bwd[(i, j)], 2);
        let bww = -(c.inertia_inv * op.moment_vel * rt) * (kv * b);
        put(Block::Bw, 9, 0, &|i, j| bww[(i, j)], 3);
        fm
    }

    /// Aerodynamic force and moment in the body frame.
    pub fn aerodynamics(&self, pt: &StateSpacePoint) -> (Vector3<f64>, Vector3<f64>) {
        let op = self.operating(pt);
        let c = &self.coeffs;
        let (b, cbar) = (self.params.span, self.params.chord);
        let k = op.dyn_factor;
        let speed = op.speed;
        let force = op.drag * op.airspeed * (k * speed)
            + c.f_rate * op.omega * (k * speed * cbar)
            + c.f_defl * op.delta * (k * speed * speed);
        let moment = op.moment_vel * op.airspeed * (k * speed * b)
            + c.m_rate * op.omega * (k * speed * b * b)
            + c.m_defl * op.delta * (k * speed * speed * b);
        (force, moment)
    }

    /// Gravity force in the body frame.
    pub fn gravity(&self, pt: &StateSpacePoint) -> Vector3<f64> {
        let op = self.operating(pt);
        let rn = op.r.norm();
        let g_inertial = -op.r * (self.params.gravitational_parameter / (rn * rn * rn));
        op.rot.transpose() * g_inertial * self.params.mass
    }
}

impl Default for ParafoilModel {
    fn default() -> Self {
        Self::new(ParafoilParams::default())
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w < -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl FactorizedModel for ParafoilModel {
    fn id(&self) -> &'static str {
        "parafoil"
    }

    fn dims(&self) -> Dims {
        Self::DIMS
    }

    fn region(&self) -> &OperatingRegion {
        &self.region
    }

    fn f_unchecked(&self, pt: &StateSpacePoint) -> DVector<f64> {
        let op = self.operating(pt);
        let c = &self.coeffs;
        let (force, moment) = self.aerodynamics(pt);
        let gravity = self.gravity(pt);
        let r_dot = op.rot * op.v;
        let eta_dot = euler_rate_map(&op.eta) * op.omega;
        let v_dot = -op.omega.cross(&op.v) + (force + gravity) / self.params.mass;
        let omega_dot = c.inertia_inv * (-op.omega.cross(&(c.inertia * op.omega)) + moment);
        let mut out = DVector::zeros(12);
        out.fixed_rows_mut::<3>(0).copy_from(&r_dot);
        out.fixed_rows_mut::<3>(3).copy_from(&eta_dot);
        out.fixed_rows_mut::<3>(6).copy_from(&v_dot);
        out.fixed_rows_mut::<3>(9).copy_from(&omega_dot);
        out
    }

    fn matrices_unchecked(&self, pt: &StateSpacePoint) -> FactorMatrices {
        self.factorize(pt)
    }

    fn scheduling_entries(&self) -> &[SchedulingEntry] {
        &self.entries
    }

    fn angular_states(&self) -> &[usize] {
        &[3, 4, 5]
    }

    fn canonicalize_state(&self, x: &mut DVector<f64>) {
        // roll and yaw are periodic; pitch stays inside its region in stable flight
        x[3] = wrap_angle(x[3]);
        x[5] = wrap_angle(x[5]);
    }

    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let re = self.params.earth_radius;
        DVector::from_vec(vec![
            rng.gen_range(-500.0..500.0),
            rng.gen_range(-500.0..500.0),
            re + rng.gen_range(2000.0..5500.0),
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-PI..PI),
            rng.gen_range(12.0..18.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-6.0..-3.0),
            rng.gen_range(-0.02..0.02),
            rng.gen_range(-0.02..0.02),
            rng.gen_range(-0.02..0.02),
        ])
    }

    fn metadata(&self) -> serde_json::Value {
        let ab = self
            .entries
            .iter()
            .filter(|e| matches!(e.block, Block::A | Block::Bu))
            .count();
        json!({
            "model": self.id(),
            "dims": Self::DIMS,
            "n_theta": self.entries.len(),
            "n_theta_a_bu": ab,
            "scheduling_entries": self.entries,
            "region": self.region,
            "params": self.params,
        })
    }
}
