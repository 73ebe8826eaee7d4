//! The experiment harness: inputs, timing and the benchmark protocols.
//!
//! Timing covers only the algorithm body: every measured section sits
//! between two group barriers (setup and input generation are outside), and
//! rank 0's monotonic-clock reading becomes the record.

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use smc_core::comm::{spawn_group, Communicator};
use smc_core::error::{Result, SmcError};
use smc_core::kernels::{
    bitonic_sort, parallel_nearly_sort, KeyedShard, LocalSortAlgo, SortDirection,
};
use smc_core::models::{
    student_t_log_pdf, BearingModel, BearingParams, EconModel, EconParams, StudentTParams,
    StudentTSmcsModel,
};
use smc_core::resample::{
    self, mvr_ncopies, normalise, RedistributeAlgo, ResampleConfig, WeightShard,
};
use smc_core::samplers::{
    run_mh, run_sir_pf, run_smc_sampler, tune_mh_step, MhConfig, PfModel, RunStats,
};

use crate::record::{median, RunRecord};

/// Parameters shared by every experiment.
#[derive(Debug, Clone)]
pub struct BenchCommon {
    /// Total population / key count N (power of two).
    pub n_total: u64,
    pub p_list: Vec<usize>,
    pub t_steps: usize,
    pub reps: u64,
    pub seed: u64,
}

impl BenchCommon {
    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 || !self.n_total.is_power_of_two() {
            return Err(SmcError::InvalidConfig(format!(
                "N = {} is not a power of two",
                self.n_total
            )));
        }
        for &p in &self.p_list {
            if p == 0 || !p.is_power_of_two() {
                return Err(SmcError::InvalidConfig(format!(
                    "P = {p} is not a power of two"
                )));
            }
            if self.n_total < p as u64 {
                return Err(SmcError::InvalidConfig(format!(
                    "N = {} smaller than P = {p}",
                    self.n_total
                )));
            }
        }
        if self.reps == 0 {
            return Err(SmcError::InvalidConfig("reps must be positive".into()));
        }
        Ok(())
    }
}

/// The three sorting contestants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortAlgo {
    /// Parallel nearly sort.
    Ns,
    /// Bitonic sort with the serial bitonic network locally.
    Bs,
    /// Bitonic sort with mergesort locally.
    BsMs,
}

impl SortAlgo {
    pub fn name(&self) -> &'static str {
        match self {
            SortAlgo::Ns => "NS",
            SortAlgo::Bs => "BS",
            SortAlgo::BsMs => "BS+MS",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NS" => Ok(SortAlgo::Ns),
            "BS" => Ok(SortAlgo::Bs),
            "BS+MS" | "BSMS" => Ok(SortAlgo::BsMs),
            other => Err(SmcError::InvalidConfig(format!(
                "unknown sort algo {other}"
            ))),
        }
    }
}

/// Redistribute contestants, by their short ids.
pub fn parse_redistribute(s: &str) -> Result<RedistributeAlgo> {
    match s.trim().to_ascii_uppercase().as_str() {
        "CR" | "C-R" => Ok(RedistributeAlgo::Centralised),
        "BR" | "B-R" => Ok(RedistributeAlgo::Bitonic),
        "NR" | "N-R" => Ok(RedistributeAlgo::Nearly),
        other => Err(SmcError::InvalidConfig(format!(
            "unknown redistribute algo {other}"
        ))),
    }
}

pub fn redistribute_name(algo: RedistributeAlgo) -> &'static str {
    match algo {
        RedistributeAlgo::Centralised => "CR",
        RedistributeAlgo::Bitonic => "BR",
        RedistributeAlgo::Nearly => "NR",
    }
}

fn input_rng(seed: u64, rep: u64, rank: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((1 << 40) + rep * 256 + rank as u64);
    rng
}

fn input_offset_rng(seed: u64, rep: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((1 << 41) + rep);
    rng
}

/// Benchmark input: copy counts from a Gaussian weight draw pushed through
/// minimum variance resampling (so the counts satisfy the mass property),
/// paired with Gaussian particle payloads.
pub fn generate_keyed_input(
    comm: &Communicator,
    n_total: u64,
    m: usize,
    seed: u64,
    rep: u64,
) -> Result<KeyedShard> {
    let n = n_total as usize / comm.size();
    let mut rng = input_rng(seed, rep, comm.rank());
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs()
        })
        .collect();
    let normalised = normalise(comm, &WeightShard::new(weights)?)?;
    let mut u_rng = input_offset_rng(seed, rep);
    let counts = mvr_ncopies(comm, &normalised, n_total, &mut u_rng)?;
    let rows: Vec<f64> = (0..n * m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        })
        .collect();
    KeyedShard::new(counts.0, rows, m)
}

/// Runs `body` between two barriers and returns rank 0's elapsed seconds.
fn timed<T>(comm: &Communicator, body: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    comm.barrier()?;
    let start = Instant::now();
    let value = body()?;
    comm.barrier()?;
    Ok((value, start.elapsed().as_secs_f64()))
}

fn run_group<F>(p: usize, entry: F) -> Result<Vec<RunRecord>>
where
    F: Fn(&Communicator) -> Result<Vec<RunRecord>> + Send + Sync,
{
    let per_rank = spawn_group(p, entry)?;
    let mut rank0 = Vec::new();
    for (rank, result) in per_rank.into_iter().enumerate() {
        let records = result?;
        if rank == 0 {
            rank0 = records;
        }
    }
    Ok(rank0)
}

/// Sorting benchmark: NS vs BS vs BS+MS on identical inputs (M = 1).
pub fn bench_sort(common: &BenchCommon, algos: &[SortAlgo]) -> Result<Vec<RunRecord>> {
    common.validate()?;
    let mut records = Vec::new();
    for &p in &common.p_list {
        let common = common.clone();
        let algos = algos.to_vec();
        let group = run_group(p, move |comm| {
            let mut out = Vec::new();
            for rep in 0..common.reps {
                let input = generate_keyed_input(comm, common.n_total, 1, common.seed, rep)?;
                for &algo in &algos {
                    let shard = input.clone();
                    let (_, secs) = timed(comm, || match algo {
                        SortAlgo::Ns => parallel_nearly_sort(comm, shard),
                        SortAlgo::Bs => bitonic_sort(
                            comm,
                            shard,
                            SortDirection::Ascending,
                            LocalSortAlgo::Bitonic,
                        ),
                        SortAlgo::BsMs => bitonic_sort(
                            comm,
                            shard,
                            SortDirection::Ascending,
                            LocalSortAlgo::Mergesort,
                        ),
                    })?;
                    if comm.rank() == 0 {
                        let mut r = RunRecord::new("sort", algo.name());
                        r.n = common.n_total;
                        r.m = 1;
                        r.p = p as u64;
                        r.seed = common.seed;
                        r.rep = rep;
                        r.wall_time_s = secs;
                        out.push(r);
                    }
                }
            }
            Ok(out)
        })?;
        records.extend(group);
    }
    Ok(records)
}

/// Redistribute benchmark: C-R vs B-R vs N-R on identical inputs (M = 1).
/// Centralised runs that exceed `cr_capacity` are recorded as missing
/// points (no row).
pub fn bench_redistribute(
    common: &BenchCommon,
    algos: &[RedistributeAlgo],
    br_local: LocalSortAlgo,
    cr_capacity: Option<u64>,
) -> Result<Vec<RunRecord>> {
    common.validate()?;
    let mut records = Vec::new();
    for &p in &common.p_list {
        let common = common.clone();
        let algos = algos.to_vec();
        let group = run_group(p, move |comm| {
            let mut out = Vec::new();
            for rep in 0..common.reps {
                let input = generate_keyed_input(comm, common.n_total, 1, common.seed, rep)?;
                for &algo in &algos {
                    let shard = input.clone();
                    let result = timed(comm, || match algo {
                        RedistributeAlgo::Centralised => {
                            resample::redistribute_centralised(comm, shard, cr_capacity)
                        }
                        RedistributeAlgo::Bitonic => {
                            resample::redistribute_bitonic(comm, shard, br_local)
                        }
                        RedistributeAlgo::Nearly => resample::redistribute_nearly(comm, shard),
                    });
                    let secs = match result {
                        Ok((_, secs)) => secs,
                        // Out-of-capacity centralised runs become missing points.
                        Err(SmcError::Capacity { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    if comm.rank() == 0 {
                        let mut r = RunRecord::new("redistribute", redistribute_name(algo));
                        r.n = common.n_total;
                        r.m = 1;
                        r.p = p as u64;
                        r.seed = common.seed;
                        r.rep = rep;
                        r.wall_time_s = secs;
                        out.push(r);
                    }
                }
            }
            Ok(out)
        })?;
        records.extend(group);
    }
    Ok(records)
}

/// Which model a filter/sampler benchmark runs.
#[derive(Debug, Clone)]
pub enum BenchModel {
    Econ,
    Bearing { sensors: usize },
    StudentT { nu: f64, mu: f64, eps: f64 },
}

impl BenchModel {
    fn experiment_id(&self) -> &'static str {
        match self {
            BenchModel::Econ => "pf-econ",
            BenchModel::Bearing { .. } => "pf-bearing",
            BenchModel::StudentT { .. } => "smcs",
        }
    }

    fn algo_prefix(&self) -> &'static str {
        match self {
            BenchModel::StudentT { .. } => "SMCS",
            _ => "PF",
        }
    }

    fn dim(&self) -> u64 {
        match self {
            BenchModel::Econ => 1,
            BenchModel::Bearing { .. } => 4,
            BenchModel::StudentT { .. } => 1,
        }
    }

    fn sensor_count(&self) -> u64 {
        match self {
            BenchModel::Bearing { sensors } => *sensors as u64,
            _ => 0,
        }
    }
}

fn pf_rmse(estimates: &[Vec<f64>], truth: impl Fn(usize) -> Option<Vec<f64>>) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (idx, est) in estimates.iter().enumerate() {
        if let Some(target) = truth(idx + 1) {
            for (e, t) in est.iter().zip(&target) {
                acc += (e - t) * (e - t);
                count += 1;
            }
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        (acc / count as f64).sqrt()
    }
}

fn run_model_once(
    comm: &Communicator,
    model: &BenchModel,
    cfg: &ResampleConfig,
    t_steps: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64, RunStats, f64)> {
    match model {
        BenchModel::Econ => {
            let sim = EconModel::simulate(EconParams::default(), t_steps, seed);
            let ((estimates, stats), secs) =
                timed(comm, || run_sir_pf(comm, &sim, cfg, t_steps, seed))?;
            let rmse = pf_rmse(&estimates, |t| sim.truth(t).map(|s| s.to_vec()));
            let last = estimates.last().cloned().unwrap_or_default();
            Ok((last, rmse, stats, secs))
        }
        BenchModel::Bearing { sensors } => {
            let params = BearingParams::with_sensor_circle(*sensors, [0.0, 0.0], 100.0);
            let sim = BearingModel::simulate(params, [0.0, 1.0, 0.0, 1.0], t_steps, seed)?;
            let ((estimates, stats), secs) =
                timed(comm, || run_sir_pf(comm, &sim, cfg, t_steps, seed))?;
            let rmse = pf_rmse(&estimates, |t| sim.truth(t).map(|s| s.to_vec()));
            let last = estimates.last().cloned().unwrap_or_default();
            Ok((last, rmse, stats, secs))
        }
        BenchModel::StudentT { nu, mu, eps } => {
            let sim = StudentTSmcsModel::new(*nu, *mu, *eps);
            let ((series, stats), secs) =
                timed(comm, || run_smc_sampler(comm, &sim, cfg, t_steps, seed))?;
            let rmse = (series.recycled[0] - mu).abs();
            Ok((series.recycled, rmse, stats, secs))
        }
    }
}

/// Full filter / sampler timing runs; `worst_case` sets the resampling
/// threshold to N so redistribution happens every iteration.
pub fn bench_worst_case(
    model: &BenchModel,
    common: &BenchCommon,
    algos: &[RedistributeAlgo],
    worst_case: bool,
) -> Result<Vec<RunRecord>> {
    common.validate()?;
    let mut records = Vec::new();
    for &p in &common.p_list {
        let common = common.clone();
        let algos = algos.to_vec();
        let model = model.clone();
        let group = run_group(p, move |comm| {
            let mut out = Vec::new();
            for rep in 0..common.reps {
                let run_seed = common.seed.wrapping_add(rep);
                for &algo in &algos {
                    let mut cfg = ResampleConfig::new(common.n_total, algo)?;
                    if worst_case {
                        cfg = cfg.with_threshold(common.n_total as f64)?;
                    }
                    let (estimate, rmse, stats, secs) =
                        run_model_once(comm, &model, &cfg, common.t_steps, run_seed)?;
                    if comm.rank() == 0 {
                        let algo_name =
                            format!("{}-{}", model.algo_prefix(), redistribute_name(algo));
                        let mut r = RunRecord::new(model.experiment_id(), &algo_name);
                        r.n = common.n_total;
                        r.m = model.dim();
                        r.p = p as u64;
                        r.t = common.t_steps as u64;
                        r.d = model.sensor_count();
                        r.seed = run_seed;
                        r.rep = rep;
                        r.wall_time_s = secs;
                        r.resamples = stats.resamples;
                        r.estimate = estimate;
                        r.rmse = rmse;
                        r.is_seconds = stats.importance_sampling_s;
                        r.resample_seconds = stats.resample_s;
                        out.push(r);
                    }
                }
            }
            Ok(out)
        })?;
        records.extend(group);
    }
    Ok(records)
}

/// Bearing-only tracking with increasing sensor counts; records carry the
/// importance-sampling share so the summary can report where the workload
/// sits.
pub fn bench_multisensor(
    d_list: &[usize],
    common: &BenchCommon,
    algo: RedistributeAlgo,
) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for &d in d_list {
        if d == 0 {
            return Err(SmcError::InvalidConfig("sensor count must be >= 1".into()));
        }
        let model = BenchModel::Bearing { sensors: d };
        let mut group = bench_worst_case(&model, common, &[algo], true)?;
        for r in &mut group {
            r.experiment = "multisensor".to_string();
        }
        records.extend(group);
    }
    Ok(records)
}

/// Report of the sampler-vs-chain comparison.
#[derive(Debug, Clone)]
pub struct VsMhReport {
    /// Step scale shared by both samplers.
    pub eps: f64,
    /// Chain length of the equal-workload phase: N * T_SMC.
    pub t_mh_equal_workload: u64,
    /// Median MH wall time at the equal workload.
    pub mh_median_wall_s: f64,
    /// Per-P median SMCS wall time and the inter-task speed-up
    /// SU_P = time_MH / time_SMCS.
    pub per_p: Vec<VsMhRow>,
    /// Chain length of the equal-time phase: N * T_SMC * SU_1.
    pub t_mh_equal_time: u64,
    /// RMSE of MH over the repeat seeds at the equal-time budget.
    pub mh_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct VsMhRow {
    pub p: u64,
    pub smcs_median_wall_s: f64,
    pub speedup: f64,
    /// SMCS iterations granted by the speed-up: round(T_SMC * SU_P).
    pub t_smcs_equal_time: u64,
    pub smcs_rmse: f64,
    /// Ideal accuracy ratio for a perfectly parallel chain: 1/sqrt(P).
    pub ideal_accuracy_ratio: f64,
}

/// Options of the SMCS-vs-MH protocol.
#[derive(Debug, Clone)]
pub struct VsMhOptions {
    pub nu: f64,
    pub mu: f64,
    /// Shared random-walk scale; tuned on an MH pilot when absent.
    pub eps: Option<f64>,
    /// Burn-in; defaults to 10% of the chain.
    pub tau: Option<u64>,
    /// Overrides the measured speed-ups (one per entry of `p_list`), making
    /// the equal-time phase independent of local timing.
    pub su_override: Option<Vec<f64>>,
}

/// Two-phase comparison against Metropolis-Hastings on the same Student-t
/// target with the same random-walk proposal.
///
/// Phase 1 measures run time at the equal workload `T_MH = N * T_SMC` and
/// derives the inter-task speed-up SU_P. Phase 2 fixes the MH budget via
/// SU_1, grants the SMC sampler `T_SMC * SU_P` iterations (the equal-time
/// budget) and compares RMSE over the repeat seeds.
pub fn compare_mh(
    common: &BenchCommon,
    opts: &VsMhOptions,
) -> Result<(Vec<RunRecord>, VsMhReport)> {
    common.validate()?;
    let target_params = StudentTParams {
        nu: opts.nu,
        mu: opts.mu,
    };
    let log_target = move |x: &[f64]| student_t_log_pdf(x[0], &target_params);
    let eps = match opts.eps {
        Some(e) => e,
        None => tune_mh_step(log_target, &[0.0], common.seed)?,
    };
    let t_smc = common.t_steps as u64;
    let t_mh = common.n_total * t_smc;
    let mut records = Vec::new();

    // Phase 1: equal workload.
    let mh_cfg = base_mh_config(t_mh, eps, opts.tau)?;
    let mut mh_walls = Vec::new();
    for rep in 0..common.reps {
        let start = Instant::now();
        let out = run_mh(log_target, &[0.0], &mh_cfg, common.seed.wrapping_add(rep))?;
        let secs = start.elapsed().as_secs_f64();
        mh_walls.push(secs);
        let mut r = RunRecord::new("vs-mh-workload", "MH");
        r.n = common.n_total;
        r.m = 1;
        r.p = 1;
        r.t = t_mh;
        r.seed = common.seed.wrapping_add(rep);
        r.rep = rep;
        r.wall_time_s = secs;
        r.estimate = out.mean.clone();
        r.rmse = (out.mean[0] - opts.mu).abs();
        records.push(r);
    }
    let mh_median = median(&mh_walls);

    let smcs_model = StudentTSmcsModel::new(opts.nu, opts.mu, eps);
    let mut smcs_medians = Vec::new();
    for &p in &common.p_list {
        let common_c = common.clone();
        let model = smcs_model.clone();
        let group = run_group(p, move |comm| {
            let mut out = Vec::new();
            for rep in 0..common_c.reps {
                let cfg = ResampleConfig::new(common_c.n_total, RedistributeAlgo::Nearly)?
                    .with_threshold(common_c.n_total as f64)?;
                let run_seed = common_c.seed.wrapping_add(rep);
                let ((series, stats), secs) = timed(comm, || {
                    run_smc_sampler(comm, &model, &cfg, common_c.t_steps, run_seed)
                })?;
                if comm.rank() == 0 {
                    let mut r = RunRecord::new("vs-mh-workload", "SMCS-NR");
                    r.n = common_c.n_total;
                    r.m = 1;
                    r.p = p as u64;
                    r.t = common_c.t_steps as u64;
                    r.seed = run_seed;
                    r.rep = rep;
                    r.wall_time_s = secs;
                    r.resamples = stats.resamples;
                    r.estimate = series.recycled.clone();
                    r.rmse = (series.recycled[0] - model.target.mu).abs();
                    r.is_seconds = stats.importance_sampling_s;
                    r.resample_seconds = stats.resample_s;
                    out.push(r);
                }
            }
            Ok(out)
        })?;
        let walls: Vec<f64> = group.iter().map(|r| r.wall_time_s).collect();
        smcs_medians.push(median(&walls));
        records.extend(group);
    }

    let speedups: Vec<f64> = match &opts.su_override {
        Some(su) => {
            if su.len() != common.p_list.len() {
                return Err(SmcError::InvalidConfig(format!(
                    "--su needs {} entries, got {}",
                    common.p_list.len(),
                    su.len()
                )));
            }
            su.clone()
        }
        None => smcs_medians.iter().map(|m| mh_median / m).collect(),
    };

    // Phase 2: equal time. The MH budget is fixed from SU at P = 1.
    let su_1 = common
        .p_list
        .iter()
        .position(|&p| p == 1)
        .map(|i| speedups[i])
        .unwrap_or(1.0);
    let t_mh_equal_time = ((common.n_total * t_smc) as f64 * su_1).round().max(1.0) as u64;
    let mh_cfg2 = base_mh_config(t_mh_equal_time, eps, opts.tau)?;
    let mut mh_sq_errors = Vec::new();
    for rep in 0..common.reps {
        let out = run_mh(
            log_target,
            &[0.0],
            &mh_cfg2,
            common.seed.wrapping_add(1000 + rep),
        )?;
        let err = out.mean[0] - opts.mu;
        mh_sq_errors.push(err * err);
        let mut r = RunRecord::new("vs-mh-accuracy", "MH");
        r.n = common.n_total;
        r.m = 1;
        r.p = 1;
        r.t = t_mh_equal_time;
        r.seed = common.seed.wrapping_add(1000 + rep);
        r.rep = rep;
        r.estimate = out.mean.clone();
        r.rmse = err.abs();
        records.push(r);
    }
    let mh_rmse = (mh_sq_errors.iter().sum::<f64>() / mh_sq_errors.len() as f64).sqrt();

    let mut per_p = Vec::new();
    for (i, &p) in common.p_list.iter().enumerate() {
        let su = speedups[i];
        let t_equal_time = ((t_smc as f64) * su).round().max(1.0) as usize;
        let model = smcs_model.clone();
        let common_c = common.clone();
        let group = run_group(p, move |comm| {
            let mut out = Vec::new();
            for rep in 0..common_c.reps {
                let cfg = ResampleConfig::new(common_c.n_total, RedistributeAlgo::Nearly)?
                    .with_threshold(common_c.n_total as f64)?;
                let run_seed = common_c.seed.wrapping_add(1000 + rep);
                let (series, stats) = run_smc_sampler(comm, &model, &cfg, t_equal_time, run_seed)?;
                if comm.rank() == 0 {
                    let mut r = RunRecord::new("vs-mh-accuracy", "SMCS-NR");
                    r.n = common_c.n_total;
                    r.m = 1;
                    r.p = p as u64;
                    r.t = t_equal_time as u64;
                    r.seed = run_seed;
                    r.rep = rep;
                    r.resamples = stats.resamples;
                    r.estimate = series.recycled.clone();
                    r.rmse = (series.recycled[0] - model.target.mu).abs();
                    out.push(r);
                }
            }
            Ok(out)
        })?;
        let sq: Vec<f64> = group.iter().map(|r| r.rmse * r.rmse).collect();
        let smcs_rmse = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        records.extend(group);
        per_p.push(VsMhRow {
            p: p as u64,
            smcs_median_wall_s: smcs_medians[i],
            speedup: su,
            t_smcs_equal_time: t_equal_time as u64,
            smcs_rmse,
            ideal_accuracy_ratio: 1.0 / (p as f64).sqrt(),
        });
    }

    Ok((
        records,
        VsMhReport {
            eps,
            t_mh_equal_workload: t_mh,
            mh_median_wall_s: mh_median,
            per_p,
            t_mh_equal_time,
            mh_rmse,
        },
    ))
}

fn base_mh_config(iterations: u64, eps: f64, tau: Option<u64>) -> Result<MhConfig> {
    let cfg = MhConfig::new(iterations, eps)?;
    match tau {
        Some(t) => cfg.with_burn_in(t),
        None => Ok(cfg),
    }
}
