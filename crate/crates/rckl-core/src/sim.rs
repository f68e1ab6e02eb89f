//! Ground-truth simulation: unicycle/bicycle driving in a 2D workspace with
//! scaled range or range-squared measurements to scattered landmarks.
//!
//! Instances are a pure function of their [`WorldConfig`] (which includes the
//! seed), so datasets regenerate bit-exactly. Process noise enters through
//! the input channels (the vehicle executes `input + noise`, the commanded
//! input is recorded) plus a small additive state floor, which keeps the
//! generating system inside the control-affine class with additive
//! disturbance. Measurement noise is additive on the scalar measurement.
//!
//! The module also provides the analytic models and Jacobians used by the
//! model-based baselines (MB with the true scale factor, MBI with scale 1).

use nalgebra::{DMatrix, DVector, Vector2};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geom::{angle_diff, wrap_angle};
use crate::model::{TrainingMeasurement, TrainingSet, Transition};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VehicleModel {
    Unicycle,
    Bicycle { wheelbase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Range,
    RangeSquared,
}

/// When measurements arrive: every timestep, or in duty windows of a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Dense,
    Sporadic { period: usize, duty: f64 },
}

impl Schedule {
    pub fn active(&self, k: usize) -> bool {
        match *self {
            Schedule::Dense => true,
            Schedule::Sporadic { period, duty } => {
                let window = ((duty * period as f64).round() as usize).min(period);
                k % period < window
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub vehicle: VehicleModel,
    pub dt: f64,
    /// Number of transitions K; the trajectory has K+1 states.
    pub steps: usize,
    pub num_landmarks: usize,
    /// Landmark and waypoint box: [xmin, xmax, ymin, ymax].
    pub bounds: [f64; 4],
    /// Measurement scale factor μ.
    pub scale: f64,
    pub meas_kind: MeasurementKind,
    /// Input-channel noise std devs (per applied input).
    pub input_noise: [f64; 2],
    /// Additive state noise floor std devs (x, y, theta) per step.
    pub state_noise: [f64; 3],
    /// Measurement noise std dev.
    pub meas_noise: f64,
    pub schedule: Schedule,
    /// Measurements beyond this range are dropped.
    pub max_range: Option<f64>,
    /// Cruise speed range for the waypoint controller.
    pub speed_range: [f64; 2],
    /// If set, at most this many landmarks are measured per active timestep
    /// (seeded subsampling; used for training sets).
    pub meas_per_step: Option<usize>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleModel::Unicycle,
            dt: 0.1,
            steps: 200,
            num_landmarks: 10,
            bounds: [-8.0, 8.0, -8.0, 8.0],
            scale: 1.05,
            meas_kind: MeasurementKind::Range,
            input_noise: [0.05, 0.02],
            state_noise: [1e-3, 1e-3, 1e-3],
            meas_noise: 0.05,
            schedule: Schedule::Dense,
            max_range: None,
            speed_range: [0.6, 1.4],
            meas_per_step: None,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Config("scale factor must be positive".into()));
        }
        if self.input_noise.iter().chain(self.state_noise.iter()).any(|s| *s < 0.0)
            || self.meas_noise < 0.0
        {
            return Err(Error::Config("noise std devs must be nonnegative".into()));
        }
        if self.bounds[0] >= self.bounds[1] || self.bounds[2] >= self.bounds[3] {
            return Err(Error::Config("empty workspace bounds".into()));
        }
        Ok(())
    }
}

/// One simulated measurement of landmark `j` at timestep `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMeasurement {
    pub k: usize,
    pub j: usize,
    pub value: f64,
    pub sensor: usize,
}

/// A simulated world: ground-truth trajectory, commanded inputs, landmarks,
/// and the measurement stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    /// States ξ_0..ξ_K, each (x, y, theta).
    pub states: Vec<DVector<f64>>,
    /// Commanded inputs ν_1..ν_K.
    pub inputs: Vec<DVector<f64>>,
    /// Landmark positions ψ_1..ψ_V.
    pub landmarks: Vec<DVector<f64>>,
    pub measurements: Vec<SimMeasurement>,
    pub seed: u64,
}

impl SimInstance {
    pub fn num_steps(&self) -> usize {
        self.inputs.len()
    }

    /// Total traveled distance of the ground-truth trajectory.
    pub fn path_length(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }

    /// Converts the instance into training data: transition i is
    /// (ξ_i, ξ_{i+1}, ν_{i+1}) and measurements at timestep k ≥ 1 attach to
    /// transition k-1 (measurements at the initial state are dropped).
    pub fn to_training_set(&self) -> TrainingSet {
        let mut ts = TrainingSet::default();
        for i in 0..self.num_steps() {
            ts.transitions.push(Transition {
                prev: self.states[i].clone(),
                next: self.states[i + 1].clone(),
                input: self.inputs[i].clone(),
            });
        }
        for m in &self.measurements {
            if m.k == 0 {
                continue;
            }
            ts.measurements.push(TrainingMeasurement {
                step: m.k - 1,
                landmark: self.landmarks[m.j].clone(),
                value: DVector::from_vec(vec![m.value]),
                sensor: m.sensor,
            });
        }
        ts
    }
}

/// Forward-Euler unicycle step; theta is wrapped to (-pi, pi].
pub fn step_unicycle(xi: &DVector<f64>, nu: &DVector<f64>, dt: f64) -> DVector<f64> {
    let (u, w) = (nu[0], nu[1]);
    DVector::from_vec(vec![
        xi[0] + u * xi[2].cos() * dt,
        xi[1] + u * xi[2].sin() * dt,
        wrap_angle(xi[2] + w * dt),
    ])
}

/// Forward-Euler bicycle step with steering angle φ on the front axle.
pub fn step_bicycle(
    xi: &DVector<f64>,
    nu: &DVector<f64>,
    dt: f64,
    wheelbase: f64,
) -> Result<DVector<f64>> {
    let (u, phi) = (nu[0], nu[1]);
    if phi.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Config(format!("steering angle {phi} out of range")));
    }
    Ok(DVector::from_vec(vec![
        xi[0] + u * xi[2].cos() * dt,
        xi[1] + u * xi[2].sin() * dt,
        wrap_angle(xi[2] + (u / wheelbase) * phi.tan() * dt),
    ]))
}

/// Noiseless measurement value: μ·r or μ·r².
pub fn measurement_value(
    xi: &DVector<f64>,
    psi: &DVector<f64>,
    mu: f64,
    kind: MeasurementKind,
) -> f64 {
    let r = ((xi[0] - psi[0]).powi(2) + (xi[1] - psi[1]).powi(2)).sqrt();
    match kind {
        MeasurementKind::Range => mu * r,
        MeasurementKind::RangeSquared => mu * r * r,
    }
}

/// Measurement with additive Gaussian noise.
pub fn measure<R: Rng>(
    xi: &DVector<f64>,
    psi: &DVector<f64>,
    mu: f64,
    kind: MeasurementKind,
    noise_std: f64,
    rng: &mut R,
) -> f64 {
    let mut v = measurement_value(xi, psi, mu, kind);
    if noise_std > 0.0 {
        let n: f64 = rng.sample(StandardNormal);
        v += noise_std * n;
    }
    v
}

fn vehicle_step(
    vehicle: VehicleModel,
    xi: &DVector<f64>,
    nu: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    match vehicle {
        VehicleModel::Unicycle => step_unicycle(xi, nu, dt),
        VehicleModel::Bicycle { wheelbase } => {
            step_bicycle(xi, nu, dt, wheelbase).expect("controller keeps steering in range")
        }
    }
}

/// Generates a seeded instance: waypoint-following drive with noisy dynamics
/// and scheduled noisy measurements.
pub fn generate_instance(cfg: &WorldConfig) -> Result<SimInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [xmin, xmax, ymin, ymax] = cfg.bounds;
    let ux = Uniform::new(xmin, xmax);
    let uy = Uniform::new(ymin, ymax);

    let landmarks: Vec<DVector<f64>> = (0..cfg.num_landmarks)
        .map(|_| DVector::from_vec(vec![ux.sample(&mut rng), uy.sample(&mut rng)]))
        .collect();

    // Waypoints stay inside a 90% box so the trajectory does not hug the
    // workspace boundary.
    let margin_x = 0.05 * (xmax - xmin);
    let margin_y = 0.05 * (ymax - ymin);
    let wx = Uniform::new(xmin + margin_x, xmax - margin_x);
    let wy = Uniform::new(ymin + margin_y, ymax - margin_y);
    let uspeed = Uniform::new(cfg.speed_range[0], cfg.speed_range[1]);
    let utheta = Uniform::new(-std::f64::consts::PI, std::f64::consts::PI);

    let mut state = DVector::from_vec(vec![
        wx.sample(&mut rng),
        wy.sample(&mut rng),
        utheta.sample(&mut rng),
    ]);
    let mut waypoint = Vector2::new(wx.sample(&mut rng), wy.sample(&mut rng));
    let mut speed = uspeed.sample(&mut rng);
    let mut since_waypoint = 0usize;

    let mut states = Vec::with_capacity(cfg.steps + 1);
    let mut inputs = Vec::with_capacity(cfg.steps);
    states.push(state.clone());

    let max_turn = 1.0; // rad/s
    for _ in 0..cfg.steps {
        let to_target = Vector2::new(waypoint.x - state[0], waypoint.y - state[1]);
        if to_target.norm() < 1.0 || since_waypoint > 150 {
            waypoint = Vector2::new(wx.sample(&mut rng), wy.sample(&mut rng));
            speed = uspeed.sample(&mut rng);
            since_waypoint = 0;
        }
        since_waypoint += 1;
        let bearing = (waypoint.y - state[1]).atan2(waypoint.x - state[0]);
        let turn = (2.0 * angle_diff(bearing, state[2])).clamp(-max_turn, max_turn);
        let command = match cfg.vehicle {
            VehicleModel::Unicycle => DVector::from_vec(vec![speed, turn]),
            VehicleModel::Bicycle { wheelbase } => {
                let phi = (wheelbase * turn / speed.max(0.2)).atan().clamp(-0.5, 0.5);
                DVector::from_vec(vec![speed, phi])
            }
        };
        let mut applied = command.clone();
        for i in 0..2 {
            if cfg.input_noise[i] > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                applied[i] += cfg.input_noise[i] * n;
            }
        }
        let mut next = vehicle_step(cfg.vehicle, &state, &applied, cfg.dt);
        for i in 0..3 {
            if cfg.state_noise[i] > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                next[i] += cfg.state_noise[i] * n;
            }
        }
        next[2] = wrap_angle(next[2]);
        inputs.push(command);
        states.push(next.clone());
        state = next;
    }

    let mut measurements = Vec::new();
    for k in 0..=cfg.steps {
        if !cfg.schedule.active(k) {
            continue;
        }
        let xi = &states[k];
        let mut visible: Vec<usize> = (0..cfg.num_landmarks)
            .filter(|&j| match cfg.max_range {
                None => true,
                Some(r) => {
                    ((xi[0] - landmarks[j][0]).powi(2) + (xi[1] - landmarks[j][1]).powi(2)).sqrt()
                        <= r
                }
            })
            .collect();
        if let Some(n) = cfg.meas_per_step {
            // Seeded subsample without replacement, order-preserving.
            while visible.len() > n {
                let drop = rng.gen_range(0..visible.len());
                visible.remove(drop);
            }
        }
        for j in visible {
            let value =
                measure(xi, &landmarks[j], cfg.scale, cfg.meas_kind, cfg.meas_noise, &mut rng);
            measurements.push(SimMeasurement { k, j, value, sensor: 0 });
        }
    }

    Ok(SimInstance { states, inputs, landmarks, measurements, seed: cfg.seed })
}

/// Analytic process model for the model-based baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticProcess {
    pub vehicle: VehicleModel,
    pub dt: f64,
}

impl AnalyticProcess {
    /// Noiseless step (theta wrapped).
    pub fn step(&self, xi: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        vehicle_step(self.vehicle, xi, nu, self.dt)
    }

    /// ∂f/∂ξ at (ξ, ν).
    pub fn jacobian(&self, xi: &DVector<f64>, nu: &DVector<f64>) -> DMatrix<f64> {
        let u = nu[0];
        let (s, c) = xi[2].sin_cos();
        DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, -self.dt * u * s, 0.0, 1.0, self.dt * u * c, 0.0, 0.0, 1.0],
        )
    }

    /// ∂f/∂ν at (ξ, ν); maps input-channel noise into the state.
    pub fn input_jacobian(&self, xi: &DVector<f64>, nu: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = xi[2].sin_cos();
        match self.vehicle {
            VehicleModel::Unicycle => {
                DMatrix::from_row_slice(3, 2, &[self.dt * c, 0.0, self.dt * s, 0.0, 0.0, self.dt])
            }
            VehicleModel::Bicycle { wheelbase } => {
                let (u, phi) = (nu[0], nu[1]);
                let sec2 = 1.0 / phi.cos().powi(2);
                DMatrix::from_row_slice(
                    3,
                    2,
                    &[
                        self.dt * c,
                        0.0,
                        self.dt * s,
                        0.0,
                        self.dt * phi.tan() / wheelbase,
                        self.dt * u * sec2 / wheelbase,
                    ],
                )
            }
        }
    }

    /// Per-step process noise covariance for the simulator's noise model:
    /// input-channel noise mapped through ∂f/∂ν plus the additive floor.
    pub fn noise_cov(
        &self,
        xi: &DVector<f64>,
        nu: &DVector<f64>,
        input_noise: [f64; 2],
        state_noise: [f64; 3],
    ) -> DMatrix<f64> {
        let jn = self.input_jacobian(xi, nu);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
            input_noise[0] * input_noise[0],
            input_noise[1] * input_noise[1],
        ]));
        let mut q = &jn * d * jn.transpose();
        for i in 0..3 {
            q[(i, i)] += state_noise[i] * state_noise[i];
        }
        q
    }
}

/// Analytic measurement model with an assumed scale factor (MB uses the true
/// μ, MBI uses 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticMeasurement {
    pub mu: f64,
    pub kind: MeasurementKind,
}

impl AnalyticMeasurement {
    pub fn value(&self, xi: &DVector<f64>, psi: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![measurement_value(xi, psi, self.mu, self.kind)])
    }

    /// (∂γ/∂ξ, ∂γ/∂ψ); the range Jacobian is the unit bearing vector scaled
    /// by μ.
    pub fn jacobians(&self, xi: &DVector<f64>, psi: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let dx = xi[0] - psi[0];
        let dy = xi[1] - psi[1];
        let r = (dx * dx + dy * dy).sqrt().max(1e-12);
        let (gx, gy) = match self.kind {
            MeasurementKind::Range => (self.mu * dx / r, self.mu * dy / r),
            MeasurementKind::RangeSquared => (2.0 * self.mu * dx, 2.0 * self.mu * dy),
        };
        (
            DMatrix::from_row_slice(1, 3, &[gx, gy, 0.0]),
            DMatrix::from_row_slice(1, 2, &[-gx, -gy]),
        )
    }
}

/// Builds the analytic factor definitions for a model-based estimator with
/// the given assumed scale.
pub fn analytic_jacobians(
    vehicle: VehicleModel,
    dt: f64,
    mu_assumed: f64,
    kind: MeasurementKind,
) -> (AnalyticProcess, AnalyticMeasurement) {
    (AnalyticProcess { vehicle, dt }, AnalyticMeasurement { mu: mu_assumed, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unicycle_examples() {
        let xi = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let out = step_unicycle(&xi, &DVector::from_vec(vec![1.0, 0.0]), 0.1);
        assert_relative_eq!(out, DVector::from_vec(vec![0.1, 0.0, 0.0]), epsilon = 1e-15);

        let out = step_unicycle(&xi, &DVector::from_vec(vec![0.0, 0.5]), 0.1);
        assert_relative_eq!(out[0], 0.0);
        assert_relative_eq!(out[1], 0.0);
        assert_relative_eq!(out[2], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn unicycle_full_circle_error_order_dt() {
        let dt = 0.01;
        let (u, w) = (1.0, 0.5);
        let steps = (crate::geom::TAU / (w * dt)).round() as usize;
        let mut xi = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        for _ in 0..steps {
            xi = step_unicycle(&xi, &DVector::from_vec(vec![u, w]), dt);
        }
        // Euler integration returns near the start with O(dt) error per unit
        // path; allow a generous multiple.
        let err = (xi[0].powi(2) + xi[1].powi(2)).sqrt();
        let path = u * steps as f64 * dt;
        assert!(err < 5.0 * dt * path, "err = {err}");
    }

    #[test]
    fn bicycle_examples() {
        let xi = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let straight = step_bicycle(&xi, &DVector::from_vec(vec![1.0, 0.0]), 0.1, 0.5).unwrap();
        assert_relative_eq!(
            straight,
            step_unicycle(&xi, &DVector::from_vec(vec![1.0, 0.0]), 0.1),
            epsilon = 1e-15
        );
        let stationary = step_bicycle(&xi, &DVector::from_vec(vec![0.0, 0.3]), 0.1, 0.5).unwrap();
        assert_relative_eq!(stationary, xi, epsilon = 1e-15);
        assert!(step_bicycle(&xi, &DVector::from_vec(vec![1.0, 1.6]), 0.1, 0.5).is_err());

        // Small steering: turn rate ≈ u tan(phi) / L.
        let (phi, wheelbase, u, dt) = (0.05f64, 0.5, 1.0, 0.001);
        let mut state = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let steps = 1000;
        for _ in 0..steps {
            state = step_bicycle(&state, &DVector::from_vec(vec![u, phi]), dt, wheelbase).unwrap();
        }
        let expected_theta = (u / wheelbase) * phi.tan() * dt * steps as f64;
        assert_relative_eq!(state[2], expected_theta, epsilon = 1e-9);
    }

    #[test]
    fn measurement_examples() {
        let xi = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let psi = DVector::from_vec(vec![3.0, 4.0]);
        assert_relative_eq!(measurement_value(&xi, &psi, 1.05, MeasurementKind::Range), 5.25);
        assert_relative_eq!(
            measurement_value(&xi, &psi, 1.05, MeasurementKind::RangeSquared),
            26.25
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let at_lmk = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        let v = measure(&at_lmk, &psi, 1.05, MeasurementKind::Range, 0.1, &mut rng);
        assert!(v.abs() < 1.0, "noise only, got {v}");
    }

    #[test]
    fn instance_determinism_and_noiseless_consistency() {
        let cfg = WorldConfig {
            steps: 50,
            num_landmarks: 4,
            input_noise: [0.0, 0.0],
            state_noise: [0.0, 0.0, 0.0],
            meas_noise: 0.0,
            seed: 7,
            ..WorldConfig::default()
        };
        let a = generate_instance(&cfg).unwrap();
        let b = generate_instance(&cfg).unwrap();
        assert_eq!(a, b);
        for m in &a.measurements {
            let expect =
                measurement_value(&a.states[m.k], &a.landmarks[m.j], cfg.scale, cfg.meas_kind);
            assert_relative_eq!(m.value, expect, epsilon = 1e-12);
        }
        // Noiseless rollout of the recorded inputs reproduces the states.
        let proc = AnalyticProcess { vehicle: cfg.vehicle, dt: cfg.dt };
        let mut xi = a.states[0].clone();
        for (i, nu) in a.inputs.iter().enumerate() {
            xi = proc.step(&xi, nu);
            assert_relative_eq!(xi, a.states[i + 1], epsilon = 1e-12);
        }
    }

    #[test]
    fn sporadic_schedule_counts() {
        let cfg = WorldConfig {
            steps: 1000,
            num_landmarks: 3,
            schedule: Schedule::Sporadic { period: 50, duty: 0.2 },
            ..WorldConfig::default()
        };
        let inst = generate_instance(&cfg).unwrap();
        let active: usize = (0..=cfg.steps).filter(|&k| cfg.schedule.active(k)).count();
        assert_eq!(inst.measurements.len(), cfg.num_landmarks * active);
        // Window arithmetic: 10 of every 50 steps, plus k = 1000 itself.
        assert_eq!(active, 20 * 10 + 1);
    }

    #[test]
    fn injected_noise_statistics() {
        // Only an x-floor noise: the per-step x residual against the
        // noiseless step is exactly the injected noise.
        let cfg = WorldConfig {
            steps: 100_000,
            num_landmarks: 0,
            bounds: [-1e6, 1e6, -1e6, 1e6],
            input_noise: [0.0, 0.0],
            state_noise: [0.1, 0.0, 0.0],
            meas_noise: 0.0,
            seed: 3,
            ..WorldConfig::default()
        };
        let inst = generate_instance(&cfg).unwrap();
        let proc = AnalyticProcess { vehicle: cfg.vehicle, dt: cfg.dt };
        let mut sq = 0.0;
        for k in 0..inst.num_steps() {
            let pred = proc.step(&inst.states[k], &inst.inputs[k]);
            sq += (inst.states[k + 1][0] - pred[0]).powi(2);
        }
        let std = (sq / inst.num_steps() as f64).sqrt();
        assert!((std - 0.1).abs() < 0.005, "empirical std {std}");
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let dt = 0.1;
        for (vehicle, nu) in [
            (VehicleModel::Unicycle, DVector::from_vec(vec![0.9, 0.4])),
            (VehicleModel::Bicycle { wheelbase: 0.5 }, DVector::from_vec(vec![0.9, 0.3])),
        ] {
            let proc = AnalyticProcess { vehicle, dt };
            let xi = DVector::from_vec(vec![0.7, -1.2, 0.6]);
            let jac = proc.jacobian(&xi, &nu);
            let fd = crate::linalg::central_difference_jacobian(|x| proc.step(x, &nu), &xi, 1e-6);
            assert_relative_eq!(jac, fd, epsilon = 1e-6);
            let jin = proc.input_jacobian(&xi, &nu);
            let fdin =
                crate::linalg::central_difference_jacobian(|n| proc.step(&xi, n), &nu, 1e-6);
            assert_relative_eq!(jin, fdin, epsilon = 1e-6);
        }
        // Unit bearing vector example.
        let meas = AnalyticMeasurement { mu: 1.0, kind: MeasurementKind::Range };
        let xi = DVector::from_vec(vec![0.0, 0.0, 0.3]);
        let psi = DVector::from_vec(vec![3.0, 4.0]);
        let (gx, gl) = meas.jacobians(&xi, &psi);
        assert_relative_eq!(gx[(0, 0)], -0.6, epsilon = 1e-12);
        assert_relative_eq!(gx[(0, 1)], -0.8, epsilon = 1e-12);
        assert_relative_eq!(gl[(0, 0)], 0.6, epsilon = 1e-12);
    }
}
