//! Top-level algorithms: SIR particle filter, SMC sampler with recycling,
//! and Metropolis-Hastings.
//!
//! The two SMC procedures are collective: every rank runs the same loop on
//! its own shard and meets the others in the weight, estimate and resampling
//! collectives. Metropolis-Hastings is strictly single-worker. Weights are
//! carried in the log domain and normalised with a max shift, so long
//! worst-case runs cannot underflow.

use std::time::Instant;

use rand::Rng;

use crate::comm::Communicator;
use crate::error::{Result, SmcError};
use crate::kernels::KeyedShard;
use crate::resample::{
    ess, mvr_ncopies, normalise_log, redistribute, NormalisedWeights, ParticleShard, ResampleConfig,
};
use crate::rng::{offset_rng, worker_rng};

/// State-space model plugged into the SIR particle filter: prior and
/// proposal samplers, the weight-update density, and the measurement stream.
pub trait PfModel: Sync {
    /// State dimension M.
    fn dim(&self) -> usize;

    /// Measurement dimension D.
    fn measurement_dim(&self) -> usize;

    /// Measurement for iteration `t` (1-based), if the stream is long enough.
    fn measurement(&self, t: usize) -> Option<&[f64]>;

    /// True latent state for iteration `t`, when the stream is simulated.
    fn truth(&self, _t: usize) -> Option<&[f64]> {
        None
    }

    fn sample_prior<R: Rng>(&self, rng: &mut R, out: &mut [f64]);

    fn propose<R: Rng>(&self, prev: &[f64], y: &[f64], rng: &mut R, out: &mut [f64]);

    /// Log of the weight-update factor
    /// `p(x_t|x_{t-1}) p(y_t|x_t) / q(x_t|x_{t-1}, y_t)`.
    fn log_weight_update(&self, prev: &[f64], proposed: &[f64], y: &[f64]) -> f64;
}

/// Static-target model for the SMC sampler: initial proposal, target
/// log-density, forward kernel and backward (L) kernel.
pub trait SmcsModel: Sync {
    fn dim(&self) -> usize;

    fn sample_initial<R: Rng>(&self, rng: &mut R, out: &mut [f64]);

    fn log_initial_proposal(&self, x: &[f64]) -> f64;

    fn log_target(&self, x: &[f64]) -> f64;

    fn propose<R: Rng>(&self, prev: &[f64], rng: &mut R, out: &mut [f64]);

    /// Forward kernel density `q_t(new | prev)`.
    fn log_forward(&self, new: &[f64], prev: &[f64]) -> f64;

    /// Backward kernel density `L_t(old | new)`.
    fn log_l_kernel(&self, old: &[f64], new: &[f64]) -> f64;

    /// Log of `L_t(prev | new) / q_t(new | prev)`, the kernel part of the
    /// weight update. Models whose backward kernel equals the forward one
    /// may override this with the algebraic cancellation.
    fn log_kernel_ratio(&self, prev: &[f64], new: &[f64]) -> f64 {
        self.log_l_kernel(prev, new) - self.log_forward(new, prev)
    }
}

/// Counters, section timings and per-step diagnostics of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    /// Number of iterations in which resampling was triggered.
    pub resamples: u64,
    /// Wall time spent in importance sampling (propose + weight update).
    pub importance_sampling_s: f64,
    /// Wall time spent in the resampling path (copy counts + redistribute).
    pub resample_s: f64,
    /// Effective sample size observed at each iteration, before any
    /// resampling that iteration triggered.
    pub ess_series: Vec<f64>,
}

/// Per-iteration estimates and normalisation constants of an SMC sampler
/// run, plus the recycled combination.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    /// f_t: weighted mean of the population at each iteration.
    pub per_step: Vec<Vec<f64>>,
    /// c_t: ratio of consecutive unnormalised weight sums.
    pub constants: Vec<f64>,
    /// Recycled estimate: the c_t-weighted average of the f_t.
    pub recycled: Vec<f64>,
}

fn shard_len(cfg: &ResampleConfig, comm: &Communicator) -> Result<usize> {
    let p = comm.size() as u64;
    if !cfg.n_total.is_multiple_of(p) || cfg.n_total < p {
        return Err(SmcError::InvalidConfig(format!(
            "population {} not divisible over {} ranks",
            cfg.n_total, p
        )));
    }
    Ok((cfg.n_total / p) as usize)
}

fn check_finite_log_weights(log_w: &[f64]) -> Result<()> {
    if log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(SmcError::NonFinite("model log-density"));
    }
    Ok(())
}

/// Weighted mean of the global population under the given weights.
fn weighted_mean(
    comm: &Communicator,
    states: &ParticleShard,
    weights: &NormalisedWeights,
) -> Result<Vec<f64>> {
    let m = states.m();
    let mut local = vec![0.0; m];
    for (i, &w) in weights.values().iter().enumerate() {
        let row = states.row(i);
        for d in 0..m {
            local[d] += w * row[d];
        }
    }
    comm.allreduce_sum_vec_f64(local)
}

fn resample_population(
    comm: &Communicator,
    cfg: &ResampleConfig,
    weights: &NormalisedWeights,
    states: ParticleShard,
    u_rng: &mut impl Rng,
) -> Result<ParticleShard> {
    let counts = mvr_ncopies(comm, weights, cfg.n_total, u_rng)?;
    let m = states.m();
    let shard = KeyedShard::new(counts.0, states.into_rows(), m)?;
    redistribute(comm, cfg, shard)
}

/// SIR particle filter: prior initialisation, then per iteration importance
/// sampling, normalisation, effective sample size, conditional resampling,
/// and the weighted-mean state estimate. Returns the estimate series.
pub fn run_sir_pf<M: PfModel>(
    comm: &Communicator,
    model: &M,
    cfg: &ResampleConfig,
    t_steps: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, RunStats)> {
    let n = shard_len(cfg, comm)?;
    let m = model.dim();
    let mut rng = worker_rng(seed, comm.rank());
    let mut u_rng = offset_rng(seed);
    let mut stats = RunStats::default();

    let mut states = ParticleShard::new(vec![0.0; n * m], m)?;
    for i in 0..n {
        model.sample_prior(&mut rng, &mut states.rows_mut()[i * m..(i + 1) * m]);
    }
    let mut scratch = ParticleShard::new(vec![0.0; n * m], m)?;
    let mut log_w = vec![-(cfg.n_total as f64).ln(); n];
    let uniform_weight = 1.0 / cfg.n_total as f64;

    let mut estimates = Vec::with_capacity(t_steps);
    for t in 1..=t_steps {
        let y = model.measurement(t).ok_or_else(|| {
            SmcError::InvalidConfig(format!("measurement stream ended before step {t}"))
        })?;

        let is_start = Instant::now();
        {
            let out_rows = scratch.rows_mut();
            for i in 0..n {
                let prev = states.row(i);
                let out = &mut out_rows[i * m..(i + 1) * m];
                model.propose(prev, y, &mut rng, out);
                log_w[i] += model.log_weight_update(prev, out, y);
            }
        }
        std::mem::swap(&mut states, &mut scratch);
        check_finite_log_weights(&log_w)?;
        stats.importance_sampling_s += is_start.elapsed().as_secs_f64();

        let (weights, _) = normalise_log(comm, &log_w)?;
        let n_eff = ess(comm, &weights)?;
        stats.ess_series.push(n_eff);

        let estimate = if n_eff < cfg.threshold {
            let rs_start = Instant::now();
            states = resample_population(comm, cfg, &weights, states, &mut u_rng)?;
            log_w.fill(-(cfg.n_total as f64).ln());
            stats.resamples += 1;
            stats.resample_s += rs_start.elapsed().as_secs_f64();
            let uniform = NormalisedWeights::uniform(n, uniform_weight);
            weighted_mean(comm, &states, &uniform)?
        } else {
            weighted_mean(comm, &states, &weights)?
        };
        estimates.push(estimate);
    }
    Ok((estimates, stats))
}

/// SMC sampler with recycling: importance weights against a static target,
/// per-iteration normalisation constants, conditional resampling, and a
/// final recycled estimate combining all iterations.
pub fn run_smc_sampler<M: SmcsModel>(
    comm: &Communicator,
    model: &M,
    cfg: &ResampleConfig,
    t_steps: usize,
    seed: u64,
) -> Result<(EstimateSeries, RunStats)> {
    let n = shard_len(cfg, comm)?;
    let m = model.dim();
    let mut rng = worker_rng(seed, comm.rank());
    let mut u_rng = offset_rng(seed);
    let mut stats = RunStats::default();

    let mut states = ParticleShard::new(vec![0.0; n * m], m)?;
    let mut log_w = Vec::with_capacity(n);
    let mut log_target = Vec::with_capacity(n);
    for i in 0..n {
        let row = &mut states.rows_mut()[i * m..(i + 1) * m];
        model.sample_initial(&mut rng, row);
        let lt = model.log_target(row);
        log_w.push(lt - model.log_initial_proposal(row));
        log_target.push(lt);
    }
    check_finite_log_weights(&log_w)?;
    let mut scratch = ParticleShard::new(vec![0.0; n * m], m)?;

    // Denominator of the first normalisation constant: the initial
    // importance weights, before any reset.
    let (_, mut prev_log_sum) = normalise_log(comm, &log_w)?;

    let mut per_step = Vec::with_capacity(t_steps);
    let mut constants = Vec::with_capacity(t_steps);
    for _t in 1..=t_steps {
        let is_start = Instant::now();
        {
            let out_rows = scratch.rows_mut();
            for i in 0..n {
                let prev = states.row(i);
                let out = &mut out_rows[i * m..(i + 1) * m];
                model.propose(prev, &mut rng, out);
                let lt_new = model.log_target(out);
                log_w[i] += lt_new - log_target[i] + model.log_kernel_ratio(prev, out);
                log_target[i] = lt_new;
            }
        }
        std::mem::swap(&mut states, &mut scratch);
        check_finite_log_weights(&log_w)?;
        stats.importance_sampling_s += is_start.elapsed().as_secs_f64();

        let (weights, log_sum) = normalise_log(comm, &log_w)?;
        let constant = (log_sum - prev_log_sum).exp();
        if !constant.is_finite() || constant <= 0.0 {
            return Err(SmcError::NonPositiveConstant(constant));
        }
        constants.push(constant);
        per_step.push(weighted_mean(comm, &states, &weights)?);

        let n_eff = ess(comm, &weights)?;
        stats.ess_series.push(n_eff);
        if n_eff < cfg.threshold {
            let rs_start = Instant::now();
            states = resample_population(comm, cfg, &weights, states, &mut u_rng)?;
            log_w.fill(-(cfg.n_total as f64).ln());
            for i in 0..n {
                log_target[i] = model.log_target(states.row(i));
            }
            stats.resamples += 1;
            stats.resample_s += rs_start.elapsed().as_secs_f64();
            // Weights were reset to 1/N, so their sum is exactly 1.
            prev_log_sum = 0.0;
        } else {
            prev_log_sum = log_sum;
        }
    }

    let recycled = recycle(&per_step, &constants)?;
    Ok((
        EstimateSeries {
            per_step,
            constants,
            recycled,
        },
        stats,
    ))
}

/// Combines per-iteration estimates weighted by their normalisation
/// constants: `f_hat = sum_t f_t c_t / sum_t c_t`.
pub fn recycle(per_step: &[Vec<f64>], constants: &[f64]) -> Result<Vec<f64>> {
    if per_step.len() != constants.len() || per_step.is_empty() {
        return Err(SmcError::LengthMismatch {
            expected: per_step.len().max(1),
            got: constants.len(),
        });
    }
    if let Some(&bad) = constants.iter().find(|c| !c.is_finite() || **c <= 0.0) {
        return Err(SmcError::NonPositiveConstant(bad));
    }
    let m = per_step[0].len();
    let mut acc = vec![0.0; m];
    let mut total = 0.0;
    for (f, &c) in per_step.iter().zip(constants) {
        for d in 0..m {
            acc[d] += f[d] * c;
        }
        total += c;
    }
    for a in acc.iter_mut() {
        *a /= total;
    }
    Ok(acc)
}

/// Random-walk proposal for Metropolis-Hastings: `x* ~ N(x, eps^2 * Sigma)`.
#[derive(Debug, Clone)]
pub struct MhProposal {
    /// Step scale epsilon.
    pub eps: f64,
    /// Cholesky factor of Sigma (row-major M x M); identity when `None`.
    pub cholesky: Option<Vec<f64>>,
}

impl MhProposal {
    pub fn isotropic(eps: f64) -> Self {
        MhProposal {
            eps,
            cholesky: None,
        }
    }

    fn step<R: Rng>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        use rand_distr::{Distribution, StandardNormal};
        let m = x.len();
        match &self.cholesky {
            None => {
                for (o, &v) in out.iter_mut().zip(x) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = v + self.eps * z;
                }
            }
            Some(l) => {
                let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
                for i in 0..m {
                    let mut v = 0.0;
                    for j in 0..=i {
                        v += l[i * m + j] * z[j];
                    }
                    out[i] = x[i] + self.eps * v;
                }
            }
        }
    }
}

/// Metropolis-Hastings configuration.
#[derive(Debug, Clone)]
pub struct MhConfig {
    /// Chain length T.
    pub iterations: u64,
    /// Burn-in: samples discarded from the front of the chain.
    pub burn_in: u64,
    pub proposal: MhProposal,
}

impl MhConfig {
    /// Burn-in defaults to 10% of the chain.
    pub fn new(iterations: u64, eps: f64) -> Result<Self> {
        if iterations == 0 || eps <= 0.0 {
            return Err(SmcError::InvalidConfig(
                "chain length and step scale must be positive".to_string(),
            ));
        }
        Ok(MhConfig {
            iterations,
            burn_in: iterations / 10,
            proposal: MhProposal::isotropic(eps),
        })
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Result<Self> {
        if burn_in >= self.iterations {
            return Err(SmcError::InvalidConfig(format!(
                "burn-in {burn_in} must be below the chain length {}",
                self.iterations
            )));
        }
        self.burn_in = burn_in;
        Ok(self)
    }
}

/// Output of a Metropolis-Hastings run.
#[derive(Debug, Clone)]
pub struct MhOutput {
    /// The whole chain, T rows of M, flattened.
    pub samples: Vec<f64>,
    pub dim: usize,
    /// Mean over the chain after burn-in.
    pub mean: Vec<f64>,
    /// Fraction of accepted proposals.
    pub acceptance_rate: f64,
}

/// Random-walk Metropolis-Hastings over `log_target`, started from
/// `initial`. The proposal is symmetric, so the acceptance ratio reduces to
/// the target ratio; a proposal is accepted when `u < a`.
pub fn run_mh<F>(log_target: F, initial: &[f64], cfg: &MhConfig, seed: u64) -> Result<MhOutput>
where
    F: Fn(&[f64]) -> f64,
{
    let m = initial.len();
    let mut rng = worker_rng(seed, 0);
    let mut x = initial.to_vec();
    let mut log_pi = log_target(&x);
    if !log_pi.is_finite() {
        return Err(SmcError::NonFinite("target density at the initial point"));
    }

    let t_total = cfg.iterations as usize;
    let mut samples = Vec::with_capacity(t_total * m);
    let mut proposal = vec![0.0; m];
    let mut accepted = 0u64;
    let mut mean = vec![0.0; m];
    for t in 1..=t_total {
        cfg.proposal.step(&x, &mut rng, &mut proposal);
        let log_pi_star = log_target(&proposal);
        // Symmetric proposal: q terms cancel exactly.
        let log_a = (log_pi_star - log_pi).min(0.0);
        let u: f64 = rng.random();
        if u < log_a.exp() {
            x.copy_from_slice(&proposal);
            log_pi = log_pi_star;
            accepted += 1;
        }
        samples.extend_from_slice(&x);
        if t as u64 > cfg.burn_in {
            for d in 0..m {
                mean[d] += x[d];
            }
        }
    }
    let kept = (cfg.iterations - cfg.burn_in) as f64;
    for v in mean.iter_mut() {
        *v /= kept;
    }
    Ok(MhOutput {
        samples,
        dim: m,
        mean,
        acceptance_rate: accepted as f64 / cfg.iterations as f64,
    })
}

/// Multiplicatively adjusts the step scale until the empirical acceptance
/// rate of a short pilot chain lands in [0.2, 0.5].
pub fn tune_mh_step<F>(log_target: F, initial: &[f64], seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut eps = 1.0;
    for round in 0..24 {
        let cfg = MhConfig::new(2000, eps)?;
        let out = run_mh(&log_target, initial, &cfg, seed ^ (round as u64) << 32)?;
        if out.acceptance_rate > 0.5 {
            eps *= 1.6;
        } else if out.acceptance_rate < 0.2 {
            eps /= 1.6;
        } else {
            return Ok(eps);
        }
    }
    Ok(eps)
}
