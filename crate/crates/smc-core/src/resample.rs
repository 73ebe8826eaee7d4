//! Weight normalisation, effective sample size, minimum variance resampling
//! and the redistribute variants.
//!
//! Resampling converts normalised weights into integer copy counts whose
//! global sum is exactly the population size, then physically rebuilds the
//! particle population according to those counts:
//!
//! - `redistribute_sequential` (S-R): the plain single-rank double loop.
//! - `redistribute_centralised` (C-R): gather to rank 0, S-R there, scatter.
//!   Needs the whole population on one rank.
//! - `redistribute_bitonic` (B-R): parallel bitonic sort of the counts, then
//!   recursive workload splitting with rotational shifts.
//! - `redistribute_nearly` (N-R): as B-R but with the nearly sort, which
//!   only separates zero counts from positive ones.

use rand::Rng;

use crate::comm::{Communicator, Message, Payload};
use crate::error::{Result, SmcError};
use crate::kernels::{
    bitonic_sort_packed, parallel_nearly_sort_packed, KeyedShard, LocalSortAlgo, Packed,
    SortDirection,
};
use crate::meter;

const TAG_STRADDLE: i64 = 110;

/// Relative tolerance for the normalised-sum check, scaled by N.
const NORMALISED_TOL: f64 = 1e-12;

/// Rank-local block of unnormalised, linear-domain weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightShard {
    values: Vec<f64>,
}

impl WeightShard {
    /// Validates that no entry is negative or NaN.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(SmcError::NonFinite("weight shard"));
        }
        Ok(WeightShard { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Rank-local block of normalised weights; only produced by the
/// normalisation routines, so downstream consumers can rely on the global
/// sum being 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalisedWeights {
    values: Vec<f64>,
}

impl NormalisedWeights {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Uniform weights (each `weight`, globally summing to 1), as produced
    /// by a post-resampling reset.
    pub(crate) fn uniform(len: usize, weight: f64) -> Self {
        NormalisedWeights {
            values: vec![weight; len],
        }
    }

    #[cfg(test)]
    pub(crate) fn from_raw_unchecked(values: Vec<f64>) -> Self {
        NormalisedWeights { values }
    }
}

/// Rank-local particle block: `len` rows of `m` state entries.
///
/// Buffers are tracked by the worker's allocation meter, like
/// [`KeyedShard`] payloads.
#[derive(Debug)]
pub struct ParticleShard {
    rows: Vec<f64>,
    m: usize,
}

impl ParticleShard {
    pub fn new(rows: Vec<f64>, m: usize) -> Result<Self> {
        if m == 0 || !rows.len().is_multiple_of(m) {
            return Err(SmcError::LengthMismatch {
                expected: rows.len().next_multiple_of(m.max(1)),
                got: rows.len(),
            });
        }
        meter::acquire(rows.len());
        Ok(ParticleShard { rows, m })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.m..(i + 1) * self.m]
    }

    pub fn into_rows(mut self) -> Vec<f64> {
        meter::release(self.rows.len());
        std::mem::take(&mut self.rows)
    }
}

impl Clone for ParticleShard {
    fn clone(&self) -> Self {
        meter::acquire(self.rows.len());
        ParticleShard {
            rows: self.rows.clone(),
            m: self.m,
        }
    }
}

impl Drop for ParticleShard {
    fn drop(&mut self) {
        meter::release(self.rows.len());
    }
}

impl PartialEq for ParticleShard {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.rows == other.rows
    }
}

/// Rank-local duplication counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NCopiesShard(pub Vec<i64>);

/// Which parallel redistribute backs the resampling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedistributeAlgo {
    Centralised,
    Bitonic,
    Nearly,
}

/// Resampling configuration.
#[derive(Debug, Clone)]
pub struct ResampleConfig {
    /// Total population size N (power of two).
    pub n_total: u64,
    /// Resampling threshold N*: resample when the effective sample size
    /// drops below it. Defaults to N/2.
    pub threshold: f64,
    pub algo: RedistributeAlgo,
    /// Local sort used inside the bitonic redistribute.
    pub local_sort: LocalSortAlgo,
    /// Rank-0 scalar budget for the centralised variant, if capped.
    pub cr_capacity: Option<u64>,
    /// Sort particle rows lexicographically after every redistribute. Used
    /// by tests to compare variants; off in benchmarks.
    pub canonicalise: bool,
}

impl ResampleConfig {
    pub fn new(n_total: u64, algo: RedistributeAlgo) -> Result<Self> {
        if n_total == 0 || !n_total.is_power_of_two() {
            return Err(SmcError::InvalidConfig(format!(
                "population size {n_total} is not a power of two"
            )));
        }
        Ok(ResampleConfig {
            n_total,
            threshold: n_total as f64 / 2.0,
            algo,
            local_sort: LocalSortAlgo::Mergesort,
            cr_capacity: None,
            canonicalise: false,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if threshold < 1.0 || threshold > self.n_total as f64 || threshold.is_nan() {
            return Err(SmcError::InvalidConfig(format!(
                "threshold {threshold} outside [1, {}]",
                self.n_total
            )));
        }
        self.threshold = threshold;
        Ok(self)
    }
}

/// Divides every weight by the global sum, so the shards jointly sum to 1.
pub fn normalise(comm: &Communicator, w: &WeightShard) -> Result<NormalisedWeights> {
    let local: f64 = w.values().iter().sum();
    let total = comm.allreduce_sum_f64(local)?;
    if !total.is_finite() || total <= 0.0 {
        return Err(SmcError::DegenerateWeights(total));
    }
    Ok(NormalisedWeights {
        values: w.values().iter().map(|v| v / total).collect(),
    })
}

/// Normalises log-domain weights via a max shift, returning the normalised
/// weights and the global log-sum (log of the sum of the linear weights).
pub fn normalise_log(comm: &Communicator, log_w: &[f64]) -> Result<(NormalisedWeights, f64)> {
    if log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(SmcError::NonFinite("log-weight shard"));
    }
    let local_max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let global_max = comm.allreduce_max_f64(local_max)?;
    if global_max == f64::NEG_INFINITY {
        return Err(SmcError::DegenerateWeights(0.0));
    }
    let shifted: Vec<f64> = log_w.iter().map(|v| (v - global_max).exp()).collect();
    let local_sum: f64 = shifted.iter().sum();
    let total = comm.allreduce_sum_f64(local_sum)?;
    if !total.is_finite() || total <= 0.0 {
        return Err(SmcError::DegenerateWeights(total));
    }
    let values = shifted.iter().map(|s| s / total).collect();
    Ok((NormalisedWeights { values }, global_max + total.ln()))
}

/// Effective sample size `1 / sum(w_i^2)` of a normalised weight array.
pub fn ess(comm: &Communicator, w: &NormalisedWeights) -> Result<f64> {
    let local_sum: f64 = w.values().iter().sum();
    let local_sq: f64 = w.values().iter().map(|v| v * v).sum();
    let reduced = comm.allreduce_sum_vec_f64(vec![local_sum, local_sq, w.len() as f64])?;
    let (total, total_sq, n) = (reduced[0], reduced[1], reduced[2]);
    let deviation = (total - 1.0).abs();
    if deviation > NORMALISED_TOL * n {
        return Err(SmcError::NotNormalised(deviation));
    }
    Ok(1.0 / total_sq)
}

/// Minimum variance resampling: converts normalised weights into duplication
/// counts via the global CDF and a single shared uniform offset.
///
/// With `c_i` the inclusive CDF over all ranks and `u` drawn once on rank 0,
/// `ncopies_i = floor(N*c_i - u) - floor(N*c_{i-1} - u)`. The final CDF entry
/// is pinned to exactly 1, making the counts sum to exactly N.
pub fn mvr_ncopies<R: Rng>(
    comm: &Communicator,
    w: &NormalisedWeights,
    n_total: u64,
    rng: &mut R,
) -> Result<NCopiesShard> {
    let rank = comm.rank();
    let size = comm.size();

    // Local inclusive prefix, then a sequential-order chain of rank offsets
    // so rank boundaries agree bitwise with a single-sequence evaluation.
    let mut prefix = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for v in w.values() {
        acc += v;
        prefix.push(acc);
    }
    let offset = exclusive_offset_f64(comm, acc)?;

    let u = if rank == 0 { rng.random::<f64>() } else { 0.0 };
    let u = comm.broadcast_f64(u)?;

    let n_real = n_total as f64;
    let mut counts = Vec::with_capacity(w.len());
    let mut prev_c = offset.min(1.0);
    for (i, p) in prefix.iter().enumerate() {
        let mut c = (offset + p).min(1.0);
        if rank == size - 1 && i == w.len() - 1 {
            c = 1.0;
        }
        let hi = (n_real * c - u).floor();
        let lo = (n_real * prev_c - u).floor();
        counts.push(((hi - lo) as i64).max(0));
        prev_c = c;
    }

    let total = comm.allreduce_sum_i64(counts.iter().sum())?;
    if total != n_total as i64 {
        return Err(SmcError::MassMismatch {
            expected: n_total as i64,
            got: total,
        });
    }
    Ok(NCopiesShard(counts))
}

/// Exclusive prefix of per-rank totals, chained left-to-right on rank 0 so
/// each rank's offset equals the previous rank's inclusive value bit-for-bit.
fn exclusive_offset_f64(comm: &Communicator, local_total: f64) -> Result<f64> {
    if comm.size() == 1 {
        return Ok(0.0);
    }
    let gathered = comm.gather_f64(&[local_total])?;
    let offsets = gathered.map(|totals| {
        let mut out = Vec::with_capacity(totals.len());
        let mut acc = 0.0;
        for t in &totals {
            out.push(acc);
            acc += t;
        }
        out
    });
    let shard = comm.scatter_f64(offsets.as_deref())?;
    Ok(shard[0])
}

/// Resets every weight to 1/N.
pub fn reset_weights(len: usize, n_total: u64) -> WeightShard {
    WeightShard {
        values: vec![1.0 / n_total as f64; len],
    }
}

/// Sequential redistribute (S-R): writes `ncopies[j]` copies of row `j`, in
/// ascending `j`, into a fresh buffer.
pub fn redistribute_sequential(
    ncopies: &[i64],
    particles: &ParticleShard,
) -> Result<ParticleShard> {
    let total: i64 = ncopies.iter().sum();
    if total != particles.len() as i64 || ncopies.len() != particles.len() {
        return Err(SmcError::MassMismatch {
            expected: particles.len() as i64,
            got: total,
        });
    }
    let m = particles.m();
    let mut rows = vec![0.0; particles.rows().len()];
    meter::acquire(rows.len());
    let mut out = 0usize;
    for (j, &copies) in ncopies.iter().enumerate() {
        for _ in 0..copies {
            rows[out * m..(out + 1) * m].copy_from_slice(particles.row(j));
            out += 1;
        }
    }
    Ok(ParticleShard { rows, m })
}

/// Centralised redistribute (C-R): rank 0 gathers counts and particles, runs
/// S-R on the whole population and scatters the result. The output equals the
/// sequential oracle exactly, order included, at the price of an N*M-scalar
/// staging buffer on rank 0.
pub fn redistribute_centralised(
    comm: &Communicator,
    shard: KeyedShard,
    capacity: Option<u64>,
) -> Result<ParticleShard> {
    let n = shard.len();
    let m = shard.m();
    let n_total = (n * comm.size()) as u64;
    if let Some(limit) = capacity {
        let needed = n_total * m as u64;
        if needed > limit {
            return Err(SmcError::Capacity { needed, limit });
        }
    }
    check_global_mass(comm, shard.keys(), n_total)?;

    let gathered_keys = comm.gather_i64(shard.keys())?;
    let gathered_rows = comm.gather_f64(shard.rows())?;
    drop(shard);

    let root_result = match (gathered_keys, gathered_rows) {
        (Some(keys), Some(rows)) => {
            let staged = ParticleShard::new(rows, m)?;
            let redistributed = redistribute_sequential(&keys, &staged)?;
            Some(redistributed.into_rows())
        }
        _ => None,
    };
    let local = comm.scatter_f64(root_result.as_deref())?;
    ParticleShard::new(local, m)
}

fn check_global_mass(comm: &Communicator, keys: &[i64], n_total: u64) -> Result<()> {
    let total = comm.allreduce_sum_i64(keys.iter().sum())?;
    if total != n_total as i64 {
        return Err(SmcError::MassMismatch {
            expected: n_total as i64,
            got: total,
        });
    }
    Ok(())
}

/// Recursive workload balancing over a (nearly) sorted count sequence.
///
/// Each node splits its copy mass in half: the cumulative sum locates the
/// pivot, a rotational shift aligns the pivot with the node midpoint, and
/// when the pivot count straddles the boundary it is split — the left half
/// keeps `ncopies[pivot] - (csum[pivot] - N/2)` copies and the remainder
/// becomes a new entry in the first free (zero) slot of the right half.
/// Recursion bottoms out at single ranks, which run S-R locally.
pub fn distribute(comm: &Communicator, shard: KeyedShard) -> Result<ParticleShard> {
    let packed = Packed::from_shard(&shard);
    drop(shard);
    distribute_packed(comm, packed, true)
}

/// S-R straight out of the interleaved working buffer.
fn sequential_redistribute_packed(packed: &Packed) -> Result<ParticleShard> {
    let n = packed.len();
    let m = packed.m();
    let total: i64 = (0..n).map(|i| packed.key(i)).sum();
    if total != n as i64 {
        return Err(SmcError::MassMismatch {
            expected: n as i64,
            got: total,
        });
    }
    let mut rows = vec![0.0; n * m];
    meter::acquire(rows.len());
    let mut out = 0usize;
    for j in 0..n {
        for _ in 0..packed.key(j) {
            rows[out * m..(out + 1) * m].copy_from_slice(packed.row(j));
            out += 1;
        }
    }
    Ok(ParticleShard { rows, m })
}

pub(crate) fn distribute_packed(
    comm: &Communicator,
    packed: Packed,
    ascending: bool,
) -> Result<ParticleShard> {
    let size = comm.size();
    let n = packed.len();
    let m = packed.m();
    if size == 1 {
        return sequential_redistribute_packed(&packed);
    }

    let node_len = (n * size) as i64;
    let half = node_len / 2;
    let local_mass: i64 = (0..n).map(|i| packed.key(i)).sum();
    let incl = comm.scan_sum_i64(local_mass)?;
    let offset = incl - local_mass;

    // First global index whose cumulative mass reaches half the node's.
    let mut candidate = i64::MAX;
    let mut running = offset;
    for i in 0..n {
        running += packed.key(i);
        if running >= half {
            candidate = (comm.rank() * n + i) as i64;
            break;
        }
    }
    let pivot = comm.allreduce_min_i64(candidate)?;
    if pivot == i64::MAX {
        return Err(SmcError::MassSplit(format!(
            "no pivot found for node of {node_len} slots"
        )));
    }

    let owns_pivot = (pivot as usize) / n == comm.rank();
    let csum_contrib = if owns_pivot {
        offset
            + (0..=(pivot as usize) % n)
                .map(|i| packed.key(i))
                .sum::<i64>()
    } else {
        0
    };
    let local_zeros = (0..n).filter(|&i| packed.key(i) == 0).count() as i64;
    let sums = comm.allreduce_sum_vec_i64(vec![local_mass, csum_contrib, local_zeros])?;
    let (total, csum_pivot, zeros) = (sums[0], sums[1], sums[2]);
    if total != node_len {
        return Err(SmcError::MassSplit(format!(
            "node holds mass {total}, expected {node_len}"
        )));
    }

    let r = (pivot - (half - 1)).rem_euclid(node_len) as usize;
    let shifted = comm.rotational_shift_f64(packed.into_buf(), 1 + m, r)?;
    let mut packed = Packed::from_buf(shifted, m);

    let remainder = csum_pivot - half;
    if remainder > 0 {
        // After the shift the pivot entry sits on the last slot of the left
        // half; the spare copies go to the first zero slot of the right half.
        let boundary = if ascending {
            node_len - 1 - pivot
        } else {
            (node_len - 1 - zeros) - pivot
        };
        if boundary < 0 || boundary >= half {
            return Err(SmcError::MassSplit(format!(
                "straddle boundary {boundary} outside right half of {half}"
            )));
        }
        let donor_rank = ((half - 1) as usize) / n;
        let target_global = (half + boundary) as usize;
        let target_rank = target_global / n;
        let rank = comm.rank();
        if rank == donor_rank {
            let slot = (half - 1) as usize % n;
            let kept = packed.key(slot) - remainder;
            if kept < 0 {
                return Err(SmcError::MassSplit(format!(
                    "pivot slot holds {} copies, cannot spare {remainder}",
                    packed.key(slot)
                )));
            }
            let mut payload = Vec::with_capacity(1 + m);
            payload.push(remainder as f64);
            payload.extend_from_slice(packed.row(slot));
            packed.set_key(slot, kept);
            comm.send(target_rank, Message::reals(TAG_STRADDLE, payload))?;
        }
        if rank == target_rank {
            let msg = comm.recv(donor_rank, TAG_STRADDLE)?;
            let payload = match msg.payload {
                Payload::Reals(v) => v,
                Payload::Ints(_) => return Err(SmcError::PayloadType),
            };
            let slot = target_global % n;
            if packed.key(slot) != 0 {
                return Err(SmcError::MassSplit(format!(
                    "straddle target slot holds count {}, expected 0",
                    packed.key(slot)
                )));
            }
            packed.set_key(slot, payload[0] as i64);
            packed.row_mut(slot).copy_from_slice(&payload[1..]);
        }
    }

    let half_ranks = size / 2;
    let (sub, child_ascending) = if comm.rank() < half_ranks {
        (comm.subgroup(0, half_ranks)?, true)
    } else {
        (comm.subgroup(half_ranks, half_ranks)?, false)
    };
    distribute_packed(&sub, packed, child_ascending)
}

/// Bitonic-sort-based redistribute (B-R).
pub fn redistribute_bitonic(
    comm: &Communicator,
    shard: KeyedShard,
    local_sort: LocalSortAlgo,
) -> Result<ParticleShard> {
    let mut packed = Packed::from_shard(&shard);
    drop(shard);
    if comm.size() > 1 {
        packed = bitonic_sort_packed(comm, packed, SortDirection::Ascending, local_sort)?;
    }
    distribute_packed(comm, packed, true)
}

/// Nearly-sort-based redistribute (N-R).
pub fn redistribute_nearly(comm: &Communicator, shard: KeyedShard) -> Result<ParticleShard> {
    let mut packed = Packed::from_shard(&shard);
    drop(shard);
    if comm.size() > 1 {
        packed = parallel_nearly_sort_packed(comm, packed)?;
    }
    distribute_packed(comm, packed, true)
}

/// Runs the configured redistribute variant.
pub fn redistribute(
    comm: &Communicator,
    cfg: &ResampleConfig,
    shard: KeyedShard,
) -> Result<ParticleShard> {
    let out = match cfg.algo {
        RedistributeAlgo::Centralised => redistribute_centralised(comm, shard, cfg.cr_capacity)?,
        RedistributeAlgo::Bitonic => redistribute_bitonic(comm, shard, cfg.local_sort)?,
        RedistributeAlgo::Nearly => redistribute_nearly(comm, shard)?,
    };
    if cfg.canonicalise {
        canonicalise(comm, out)
    } else {
        Ok(out)
    }
}

/// Stable global ordering of particle rows (lexicographic), used by tests to
/// compare redistribute variants that permute the population differently.
pub fn canonicalise(comm: &Communicator, shard: ParticleShard) -> Result<ParticleShard> {
    let m = shard.m();
    if comm.size() == 1 {
        let mut rows: Vec<Vec<f64>> = (0..shard.len()).map(|i| shard.row(i).to_vec()).collect();
        rows.sort_by(|a, b| compare_rows(a, b));
        return ParticleShard::new(rows.concat(), m);
    }
    let gathered = comm.gather_f64(shard.rows())?;
    drop(shard);
    let sorted = gathered.map(|all| {
        let mut rows: Vec<Vec<f64>> = all.chunks(m).map(|c| c.to_vec()).collect();
        rows.sort_by(|a, b| compare_rows(a, b));
        rows.concat()
    });
    let local = comm.scatter_f64(sorted.as_deref())?;
    ParticleShard::new(local, m)
}

fn compare_rows(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}
