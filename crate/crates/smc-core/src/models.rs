//! Case-study models: stochastic volatility (exchange-rate style), four-state
//! bearing-only tracking with one or many sensors, a Student-t target for the
//! static samplers, and a linear-Gaussian model whose Kalman filter provides
//! an exact oracle for validating the particle filter.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SmcError};
use crate::rng::measurement_rng;
use crate::samplers::{PfModel, SmcsModel};

/// Log-density of a scalar Gaussian with the given variance.
pub fn gaussian_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + d * d / variance)
}

// ---------------------------------------------------------------------------
// Stochastic volatility (pound/dollar exchange-rate model)
// ---------------------------------------------------------------------------

/// Coefficients of the stochastic volatility model
/// `X_t = phi*X_{t-1} + sigma*V_t`, `Y_t = beta*exp(X_t/2)*W_t`.
#[derive(Debug, Clone, Copy)]
pub struct EconParams {
    pub phi: f64,
    pub sigma: f64,
    pub beta: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        EconParams {
            phi: 0.9731,
            sigma: 0.1726,
            beta: 0.6338,
        }
    }
}

impl EconParams {
    /// Stationary prior variance sigma^2 / (1 - phi^2).
    pub fn prior_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

/// One transition of the volatility state.
pub fn econ_step<R: Rng>(params: &EconParams, x: f64, rng: &mut R) -> f64 {
    let v: f64 = StandardNormal.sample(rng);
    params.phi * x + params.sigma * v
}

/// Log-likelihood of measurement `y` given state `x`: `Y|X ~ N(0, beta^2 e^x)`.
pub fn econ_log_likelihood(params: &EconParams, x: f64, y: f64) -> f64 {
    gaussian_log_pdf(y, 0.0, params.beta * params.beta * x.exp())
}

/// Volatility model with a self-simulated measurement stream; the dynamics
/// serve as the proposal, so the weight update is the likelihood.
#[derive(Debug, Clone)]
pub struct EconModel {
    pub params: EconParams,
    /// Latent states X_1..X_T of the simulated trajectory.
    pub latent: Vec<f64>,
    /// Measurements Y_1..Y_T.
    pub measurements: Vec<f64>,
}

impl EconModel {
    /// Simulates a trajectory of `t_steps` measurements from the model.
    pub fn simulate(params: EconParams, t_steps: usize, seed: u64) -> Self {
        let mut rng = measurement_rng(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut x = params.prior_variance().sqrt() * z;
        let mut latent = Vec::with_capacity(t_steps);
        let mut measurements = Vec::with_capacity(t_steps);
        for _ in 0..t_steps {
            x = econ_step(&params, x, &mut rng);
            let w: f64 = StandardNormal.sample(&mut rng);
            measurements.push(params.beta * (x / 2.0).exp() * w);
            latent.push(x);
        }
        EconModel {
            params,
            latent,
            measurements,
        }
    }
}

impl PfModel for EconModel {
    fn dim(&self) -> usize {
        1
    }

    fn measurement_dim(&self) -> usize {
        1
    }

    fn measurement(&self, t: usize) -> Option<&[f64]> {
        self.measurements.get(t - 1).map(std::slice::from_ref)
    }

    fn truth(&self, t: usize) -> Option<&[f64]> {
        self.latent.get(t - 1).map(std::slice::from_ref)
    }

    fn sample_prior<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let z: f64 = StandardNormal.sample(rng);
        out[0] = self.params.prior_variance().sqrt() * z;
    }

    fn propose<R: Rng>(&self, prev: &[f64], _y: &[f64], rng: &mut R, out: &mut [f64]) {
        out[0] = econ_step(&self.params, prev[0], rng);
    }

    fn log_weight_update(&self, _prev: &[f64], proposed: &[f64], y: &[f64]) -> f64 {
        econ_log_likelihood(&self.params, proposed[0], y[0])
    }
}

// ---------------------------------------------------------------------------
// Bearing-only tracking
// ---------------------------------------------------------------------------

/// Bearing-only tracking with state `[x, vx, y, vy]`: positions at indices
/// 0 and 2, velocities at 1 and 3.
#[derive(Debug, Clone)]
pub struct BearingParams {
    /// Sampling period in seconds.
    pub delta: f64,
    /// Measurement noise variance per sensor.
    pub meas_variance: f64,
    /// Sensor positions on the Cartesian plane.
    pub sensors: Vec<[f64; 2]>,
}

impl BearingParams {
    /// `d` sensors evenly spaced on a circle of the given radius around
    /// `center` (the initial target position).
    pub fn with_sensor_circle(d: usize, center: [f64; 2], radius: f64) -> Self {
        assert!(d >= 1, "at least one sensor required");
        let sensors = (0..d)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / d as f64;
                [
                    center[0] + radius * angle.cos(),
                    center[1] + radius * angle.sin(),
                ]
            })
            .collect();
        BearingParams {
            delta: 1.0,
            meas_variance: 1e-4,
            sensors,
        }
    }

    /// State transition matrix A (positions advance by delta * velocity).
    pub fn transition(&self) -> [[f64; 4]; 4] {
        let d = self.delta;
        [
            [1.0, d, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Process covariance: two identical 2x2 blocks
    /// `[5d^3/3, 5d^2/2; 5d^2/2, 5d]` over (position, velocity).
    pub fn process_covariance(&self) -> [[f64; 4]; 4] {
        let d = self.delta;
        let a = 5.0 * d * d * d / 3.0;
        let b = 5.0 * d * d / 2.0;
        let c = 5.0 * d;
        [
            [a, b, 0.0, 0.0],
            [b, c, 0.0, 0.0],
            [0.0, 0.0, a, b],
            [0.0, 0.0, b, c],
        ]
    }

    /// Cholesky factor of the block-diagonal process covariance.
    pub fn process_cholesky(&self) -> [[f64; 4]; 4] {
        let cov = self.process_covariance();
        let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).sqrt();
        [
            [l11, 0.0, 0.0, 0.0],
            [l21, l22, 0.0, 0.0],
            [0.0, 0.0, l11, 0.0],
            [0.0, 0.0, l21, l22],
        ]
    }
}

/// One transition `x' = A x + v`, `v ~ N(0, Sigma)`.
pub fn bearing_step<R: Rng>(params: &BearingParams, x: &[f64], rng: &mut R, out: &mut [f64]) {
    let a = params.transition();
    let l = params.process_cholesky();
    let z: [f64; 4] = [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ];
    for i in 0..4 {
        let mut v = 0.0;
        for j in 0..4 {
            v += a[i][j] * x[j] + l[i][j] * z[j];
        }
        out[i] = v;
    }
}

/// Noiseless bearing from the target to one sensor.
pub fn bearing_angle(x: &[f64], sensor: [f64; 2]) -> Result<f64> {
    let dx = x[0] - sensor[0];
    let dy = x[2] - sensor[1];
    if dx == 0.0 && dy == 0.0 {
        return Err(SmcError::NonFinite(
            "bearing undefined: target coincides with sensor",
        ));
    }
    Ok(dy.atan2(dx))
}

/// Noisy bearings to every sensor.
pub fn bearing_measure<R: Rng>(params: &BearingParams, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    params
        .sensors
        .iter()
        .map(|&s| {
            let w: f64 = StandardNormal.sample(rng);
            Ok(bearing_angle(x, s)? + params.meas_variance.sqrt() * w)
        })
        .collect()
}

fn bearing_log_likelihood(params: &BearingParams, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (k, &sensor) in params.sensors.iter().enumerate() {
        match bearing_angle(x, sensor) {
            Ok(angle) => acc += gaussian_log_pdf(y[k], angle, params.meas_variance),
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    acc
}

/// Bearing-only tracking model with self-simulated measurements. The prior
/// is a unit-covariance Gaussian around the true initial state.
#[derive(Debug, Clone)]
pub struct BearingModel {
    pub params: BearingParams,
    pub initial_state: [f64; 4],
    /// Latent states, T rows of 4.
    pub latent: Vec<[f64; 4]>,
    /// Measurements, T rows of D.
    pub measurements: Vec<Vec<f64>>,
}

impl BearingModel {
    pub fn simulate(
        params: BearingParams,
        initial_state: [f64; 4],
        t_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = measurement_rng(seed);
        let mut x = initial_state;
        let mut latent = Vec::with_capacity(t_steps);
        let mut measurements = Vec::with_capacity(t_steps);
        for _ in 0..t_steps {
            let mut next = [0.0; 4];
            bearing_step(&params, &x, &mut rng, &mut next);
            x = next;
            measurements.push(bearing_measure(&params, &x, &mut rng)?);
            latent.push(x);
        }
        Ok(BearingModel {
            params,
            initial_state,
            latent,
            measurements,
        })
    }
}

impl PfModel for BearingModel {
    fn dim(&self) -> usize {
        4
    }

    fn measurement_dim(&self) -> usize {
        self.params.sensors.len()
    }

    fn measurement(&self, t: usize) -> Option<&[f64]> {
        self.measurements.get(t - 1).map(|v| v.as_slice())
    }

    fn truth(&self, t: usize) -> Option<&[f64]> {
        self.latent.get(t - 1).map(|v| v.as_slice())
    }

    fn sample_prior<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *o = self.initial_state[i] + z;
        }
    }

    fn propose<R: Rng>(&self, prev: &[f64], _y: &[f64], rng: &mut R, out: &mut [f64]) {
        bearing_step(&self.params, prev, rng, out);
    }

    fn log_weight_update(&self, _prev: &[f64], proposed: &[f64], y: &[f64]) -> f64 {
        bearing_log_likelihood(&self.params, proposed, y)
    }
}

// ---------------------------------------------------------------------------
// Student-t target
// ---------------------------------------------------------------------------

/// Parameters of the scalar Student-t density.
#[derive(Debug, Clone, Copy)]
pub struct StudentTParams {
    /// Degrees of freedom.
    pub nu: f64,
    /// Location.
    pub mu: f64,
}

/// Log-density of the Student-t distribution with `nu` degrees of freedom
/// centred at `mu`.
pub fn student_t_log_pdf(x: f64, params: &StudentTParams) -> f64 {
    let nu = params.nu;
    let d = x - params.mu;
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - (nu + 1.0) / 2.0 * (1.0 + d * d / nu).ln()
}

/// Symmetric random-walk step `x' = x + eps * z` per dimension.
pub fn random_walk_propose<R: Rng>(x: &[f64], eps: f64, rng: &mut R, out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        let z: f64 = StandardNormal.sample(rng);
        *o = v + eps * z;
    }
}

/// Log-density of the random-walk kernel `q(to | from)`.
pub fn random_walk_log_density(to: &[f64], from: &[f64], eps: f64) -> f64 {
    to.iter()
        .zip(from)
        .map(|(&a, &b)| gaussian_log_pdf(a, b, eps * eps))
        .sum()
}

/// Static Student-t target sampled with a Gaussian random-walk kernel and
/// the naive backward kernel `L(a|b) = q(a|b)`.
#[derive(Debug, Clone)]
pub struct StudentTSmcsModel {
    pub target: StudentTParams,
    /// Random-walk scale of the forward kernel.
    pub eps: f64,
    /// Initial proposal N(q0_mean, q0_std^2).
    pub q0_mean: f64,
    pub q0_std: f64,
}

impl StudentTSmcsModel {
    pub fn new(nu: f64, mu: f64, eps: f64) -> Self {
        StudentTSmcsModel {
            target: StudentTParams { nu, mu },
            eps,
            q0_mean: 0.0,
            q0_std: 10.0,
        }
    }
}

impl SmcsModel for StudentTSmcsModel {
    fn dim(&self) -> usize {
        1
    }

    fn sample_initial<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let z: f64 = StandardNormal.sample(rng);
        out[0] = self.q0_mean + self.q0_std * z;
    }

    fn log_initial_proposal(&self, x: &[f64]) -> f64 {
        gaussian_log_pdf(x[0], self.q0_mean, self.q0_std * self.q0_std)
    }

    fn log_target(&self, x: &[f64]) -> f64 {
        student_t_log_pdf(x[0], &self.target)
    }

    fn propose<R: Rng>(&self, prev: &[f64], rng: &mut R, out: &mut [f64]) {
        random_walk_propose(prev, self.eps, rng, out);
    }

    fn log_forward(&self, new: &[f64], prev: &[f64]) -> f64 {
        random_walk_log_density(new, prev, self.eps)
    }

    fn log_l_kernel(&self, old: &[f64], new: &[f64]) -> f64 {
        // Naive backward kernel: same density as the forward kernel.
        random_walk_log_density(old, new, self.eps)
    }

    fn log_kernel_ratio(&self, _prev: &[f64], _new: &[f64]) -> f64 {
        // L(a|b) = q(a|b) with a symmetric q: the kernel densities cancel.
        0.0
    }
}

// ---------------------------------------------------------------------------
// Linear-Gaussian model and its Kalman oracle
// ---------------------------------------------------------------------------

/// Scalar model `x' = a x + v`, `y = x + w` with Gaussian noise, used as a
/// closed-form test oracle.
#[derive(Debug, Clone, Copy)]
pub struct LinearGaussianParams {
    pub a: f64,
    pub process_std: f64,
    pub meas_std: f64,
    pub prior_mean: f64,
    pub prior_std: f64,
}

impl Default for LinearGaussianParams {
    fn default() -> Self {
        LinearGaussianParams {
            a: 0.9,
            process_std: 0.5,
            meas_std: 0.5,
            prior_mean: 0.0,
            prior_std: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    pub params: LinearGaussianParams,
    pub latent: Vec<f64>,
    pub measurements: Vec<f64>,
}

impl LinearGaussianModel {
    pub fn simulate(params: LinearGaussianParams, t_steps: usize, seed: u64) -> Self {
        let mut rng = measurement_rng(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut x = params.prior_mean + params.prior_std * z;
        let mut latent = Vec::with_capacity(t_steps);
        let mut measurements = Vec::with_capacity(t_steps);
        for _ in 0..t_steps {
            let v: f64 = StandardNormal.sample(&mut rng);
            x = params.a * x + params.process_std * v;
            let w: f64 = StandardNormal.sample(&mut rng);
            measurements.push(x + params.meas_std * w);
            latent.push(x);
        }
        LinearGaussianModel {
            params,
            latent,
            measurements,
        }
    }
}

impl PfModel for LinearGaussianModel {
    fn dim(&self) -> usize {
        1
    }

    fn measurement_dim(&self) -> usize {
        1
    }

    fn measurement(&self, t: usize) -> Option<&[f64]> {
        self.measurements.get(t - 1).map(std::slice::from_ref)
    }

    fn truth(&self, t: usize) -> Option<&[f64]> {
        self.latent.get(t - 1).map(std::slice::from_ref)
    }

    fn sample_prior<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let z: f64 = StandardNormal.sample(rng);
        out[0] = self.params.prior_mean + self.params.prior_std * z;
    }

    fn propose<R: Rng>(&self, prev: &[f64], _y: &[f64], rng: &mut R, out: &mut [f64]) {
        let v: f64 = StandardNormal.sample(rng);
        out[0] = self.params.a * prev[0] + self.params.process_std * v;
    }

    fn log_weight_update(&self, _prev: &[f64], proposed: &[f64], y: &[f64]) -> f64 {
        gaussian_log_pdf(
            y[0],
            proposed[0],
            self.params.meas_std * self.params.meas_std,
        )
    }
}

/// Exact filtering means and variances for the linear-Gaussian model:
/// entry `t` is the posterior after assimilating `measurements[t]`.
pub fn kalman_oracle(params: &LinearGaussianParams, measurements: &[f64]) -> Vec<(f64, f64)> {
    let q = params.process_std * params.process_std;
    let r = params.meas_std * params.meas_std;
    let mut mean = params.prior_mean;
    let mut var = params.prior_std * params.prior_std;
    let mut out = Vec::with_capacity(measurements.len());
    for &y in measurements {
        // Predict.
        mean *= params.a;
        var = params.a * params.a * var + q;
        // Update.
        let gain = var / (var + r);
        mean += gain * (y - mean);
        var *= 1.0 - gain;
        out.push((mean, var));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn econ_step_deterministic_in_zero_noise_limit() {
        let params = EconParams {
            sigma: 0.0,
            ..EconParams::default()
        };
        let mut rng = StdRng::seed_from_u64(1);
        let x = econ_step(&params, 2.0, &mut rng);
        assert_eq!(x, params.phi * 2.0);
    }

    #[test]
    fn econ_log_likelihood_at_zero_measurement() {
        let params = EconParams::default();
        let x: f64 = 0.7;
        let expected =
            -0.5 * (2.0 * std::f64::consts::PI * params.beta * params.beta * x.exp()).ln();
        assert!((econ_log_likelihood(&params, x, 0.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn econ_simulation_is_reproducible() {
        let a = EconModel::simulate(EconParams::default(), 20, 77);
        let b = EconModel::simulate(EconParams::default(), 20, 77);
        assert_eq!(a.measurements, b.measurements);
        assert_eq!(a.latent, b.latent);
    }

    #[test]
    fn bearing_transition_structure() {
        // Zero process noise: position advances by delta * velocity.
        let params = BearingParams::with_sensor_circle(1, [0.0, 0.0], 100.0);
        let a = params.transition();
        let x = [1.0, 1.0, 0.0, 0.0];
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| a[i][j] * x[j]).sum();
        }
        assert_eq!(out, [2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bearing_angle_quarter_turn() {
        // Target at (1, _, 1, _), sensor at origin: bearing pi/4.
        let x = [1.0, 0.0, 1.0, 0.0];
        let angle = bearing_angle(&x, [0.0, 0.0]).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn bearing_coincident_sensor_is_error() {
        let x = [3.0, 0.0, 4.0, 0.0];
        assert!(bearing_angle(&x, [3.0, 4.0]).is_err());
    }

    #[test]
    fn bearing_vector_measurement_matches_scalar_formula() {
        let params = BearingParams {
            delta: 1.0,
            meas_variance: 0.0,
            sensors: vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
        };
        let x = [5.0, 0.0, 7.0, 0.0];
        let mut rng = StdRng::seed_from_u64(3);
        let y = bearing_measure(&params, &x, &mut rng).unwrap();
        for (k, &sensor) in params.sensors.iter().enumerate() {
            let expected = (x[2] - sensor[1]).atan2(x[0] - sensor[0]);
            assert_eq!(y[k], expected);
        }
    }

    #[test]
    fn bearing_covariance_is_positive_definite() {
        let params = BearingParams::with_sensor_circle(2, [0.0, 0.0], 100.0);
        let l = params.process_cholesky();
        for i in 0..4 {
            assert!(l[i][i] > 0.0);
        }
        // L L^T reproduces the covariance.
        let cov = params.process_covariance();
        for i in 0..4 {
            for j in 0..4 {
                let mut v = 0.0;
                for (k, _) in l.iter().enumerate() {
                    v += l[i][k] * l[j][k];
                }
                assert!((v - cov[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bearing_sampler_reproduces_covariance() {
        let params = BearingParams::with_sensor_circle(1, [0.0, 0.0], 100.0);
        let cov = params.process_covariance();
        let mut rng = StdRng::seed_from_u64(8);
        let draws = 100_000;
        let mut sums = [[0.0f64; 4]; 4];
        let x = [0.0; 4];
        let mut out = [0.0; 4];
        for _ in 0..draws {
            bearing_step(&params, &x, &mut rng, &mut out);
            for i in 0..4 {
                for j in 0..4 {
                    sums[i][j] += out[i] * out[j];
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                let emp = sums[i][j] / draws as f64;
                if cov[i][j] != 0.0 {
                    let rel = ((emp - cov[i][j]) / cov[i][j]).abs();
                    assert!(rel < 0.05, "cov[{i}][{j}]: empirical {emp}");
                }
            }
        }
    }

    #[test]
    fn student_t_standard_cauchy_mode() {
        let params = StudentTParams { nu: 1.0, mu: 0.0 };
        let expected = (1.0 / std::f64::consts::PI).ln();
        assert!((student_t_log_pdf(0.0, &params) - expected).abs() < 1e-12);
    }

    #[test]
    fn student_t_is_symmetric() {
        let params = StudentTParams { nu: 5.0, mu: 3.0 };
        for d in [0.1, 0.7, 2.5, 10.0] {
            let lhs = student_t_log_pdf(params.mu + d, &params);
            let rhs = student_t_log_pdf(params.mu - d, &params);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn student_t_integrates_to_one() {
        // Simpson quadrature over [-50, 50]; nu=1 has heavy tails, so its
        // truncation error is larger.
        for nu in [1.0, 5.0, 30.0] {
            let params = StudentTParams { nu, mu: 0.0 };
            let steps = 200_000;
            let (lo, hi) = (-50.0, 50.0);
            let h = (hi - lo) / steps as f64;
            let mut acc = 0.0;
            for i in 0..=steps {
                let x = lo + i as f64 * h;
                let w = if i == 0 || i == steps {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * student_t_log_pdf(x, &params).exp();
            }
            let integral = acc * h / 3.0;
            let tol = if nu == 1.0 { 2e-2 } else { 1e-6 };
            assert!((integral - 1.0).abs() < tol, "nu={nu}: integral {integral}");
        }
    }

    #[test]
    fn random_walk_zero_scale_is_identity() {
        let mut rng = StdRng::seed_from_u64(4);
        let x = vec![1.5, -2.0];
        let mut out = vec![0.0; 2];
        random_walk_propose(&x, 0.0, &mut rng, &mut out);
        assert_eq!(out, x);
    }

    #[test]
    fn random_walk_density_is_symmetric() {
        let a = vec![0.3, 1.2];
        let b = vec![-0.5, 2.0];
        assert_eq!(
            random_walk_log_density(&a, &b, 0.7),
            random_walk_log_density(&b, &a, 0.7)
        );
    }

    #[test]
    fn random_walk_empirical_variance() {
        let mut rng = StdRng::seed_from_u64(12);
        let eps = 0.8;
        let draws = 100_000;
        let mut sum_sq = 0.0;
        let x = [0.0];
        let mut out = [0.0];
        for _ in 0..draws {
            random_walk_propose(&x, eps, &mut rng, &mut out);
            sum_sq += out[0] * out[0];
        }
        let emp = sum_sq / draws as f64;
        assert!(((emp - eps * eps) / (eps * eps)).abs() < 0.03);
    }

    #[test]
    fn kalman_no_measurement_noise_tracks_observation() {
        let params = LinearGaussianParams {
            meas_std: 1e-9,
            ..Default::default()
        };
        let out = kalman_oracle(&params, &[3.0, -1.0, 0.5]);
        for (y, (mean, _)) in [3.0, -1.0, 0.5].iter().zip(&out) {
            assert!((mean - y).abs() < 1e-6);
        }
    }

    #[test]
    fn kalman_variance_shrinks_without_process_noise() {
        let params = LinearGaussianParams {
            a: 1.0,
            process_std: 0.0,
            ..Default::default()
        };
        let out = kalman_oracle(&params, &[0.1, 0.2, 0.3, 0.4]);
        for w in out.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
    }

    #[test]
    fn kalman_matches_importance_sampling_estimate() {
        // One-step check: importance sampling from the prior predictive with
        // likelihood weights agrees with the Kalman posterior within Monte
        // Carlo error.
        let params = LinearGaussianParams::default();
        let y = 0.8;
        let oracle = kalman_oracle(&params, &[y]);
        let mut rng = StdRng::seed_from_u64(19);
        let draws = 1_000_000;
        let (mut wsum, mut wxsum, mut wx2sum) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let x0 = params.prior_mean + params.prior_std * z0;
            let v: f64 = StandardNormal.sample(&mut rng);
            let x1 = params.a * x0 + params.process_std * v;
            let w = gaussian_log_pdf(y, x1, params.meas_std * params.meas_std).exp();
            wsum += w;
            wxsum += w * x1;
            wx2sum += w * x1 * x1;
        }
        let mean = wxsum / wsum;
        let var = wx2sum / wsum - mean * mean;
        // Weighted draws have an effective size below the raw count; 0.01 is
        // well past three standard errors for this setup.
        assert!(
            (mean - oracle[0].0).abs() < 0.01,
            "IS mean {mean} vs {}",
            oracle[0].0
        );
        assert!(var > 0.0);
    }
}
