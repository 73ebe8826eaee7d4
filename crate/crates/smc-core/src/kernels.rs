//! Sorting-network kernels over (copy-count, particle) pairs.
//!
//! All kernels move a key and its payload row atomically. The parallel
//! kernels run the classic bitonic network over rank blocks: `bitonic_sort`
//! replaces each comparator with a merge-split of locally sorted blocks,
//! `parallel_nearly_sort` replaces it with a nearly merge, which only
//! separates zero keys from positive keys and therefore does a fixed `n`
//! writes per rank regardless of key values.
//!
//! Internally the kernels work on one interleaved buffer, `1 + m` reals per
//! element, so a key and its row form a single wire message and the
//! workload-splitting recursion can shift elements without repacking.

use crate::comm::{CommScalar, Communicator, Message};
use crate::error::{Result, SmcError};
use crate::meter;

const TAG_COMPARE_SPLIT: i64 = 101;
const TAG_NEARLY_MERGE: i64 = 102;

/// Keys above this magnitude would not round-trip through an f64 payload.
const MAX_EXACT_KEY: i64 = 1 << 53;

/// Sort order for key sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortDirection {
    Ascending,
    Descending,
}

/// Local sorting routine plugged into the parallel bitonic sort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalSortAlgo {
    /// Bottom-up mergesort; deterministic and data-independent.
    Mergesort,
    /// Serial bitonic network; requires a power-of-two block length.
    Bitonic,
}

/// Which class a rank consumes first in a nearly merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearlyMergeRole {
    ZerosFirst,
    PositivesFirst,
}

/// A rank-local block of copy counts paired index-for-index with particle
/// rows (`len` rows of `m` reals, flattened row-major).
///
/// Payload buffers are tracked by the worker's allocation meter for the
/// space-behaviour checks; keys are not counted.
#[derive(Debug)]
pub struct KeyedShard {
    keys: Vec<i64>,
    rows: Vec<f64>,
    m: usize,
}

impl KeyedShard {
    pub fn new(keys: Vec<i64>, rows: Vec<f64>, m: usize) -> Result<Self> {
        if m == 0 || rows.len() != keys.len() * m {
            return Err(SmcError::LengthMismatch {
                expected: keys.len() * m.max(1),
                got: rows.len(),
            });
        }
        if keys.iter().any(|&k| k < 0) {
            return Err(SmcError::InvalidConfig(
                "copy counts must be non-negative".to_string(),
            ));
        }
        meter::acquire(rows.len());
        Ok(KeyedShard { keys, rows, m })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn keys(&self) -> &[i64] {
        &self.keys
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.m..(i + 1) * self.m]
    }

    pub fn into_parts(mut self) -> (Vec<i64>, Vec<f64>) {
        meter::release(self.rows.len());
        (
            std::mem::take(&mut self.keys),
            std::mem::take(&mut self.rows),
        )
    }
}

impl Clone for KeyedShard {
    fn clone(&self) -> Self {
        meter::acquire(self.rows.len());
        KeyedShard {
            keys: self.keys.clone(),
            rows: self.rows.clone(),
            m: self.m,
        }
    }
}

impl Drop for KeyedShard {
    fn drop(&mut self) {
        meter::release(self.rows.len());
    }
}

impl PartialEq for KeyedShard {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.keys == other.keys && self.rows == other.rows
    }
}

/// Interleaved working form of a keyed shard: element `i` occupies the
/// `1 + m` reals at `i * (1 + m)`, key first. Copy counts are bounded by the
/// population size, far below the 2^53 exact-integer range of an f64.
#[derive(Debug)]
pub(crate) struct Packed {
    buf: Vec<f64>,
    m: usize,
}

impl Packed {
    pub(crate) fn width(&self) -> usize {
        1 + self.m
    }

    pub(crate) fn len(&self) -> usize {
        self.buf.len() / (1 + self.m)
    }

    pub(crate) fn m(&self) -> usize {
        self.m
    }

    pub(crate) fn key(&self, i: usize) -> i64 {
        self.buf[i * (1 + self.m)] as i64
    }

    pub(crate) fn set_key(&mut self, i: usize, key: i64) {
        debug_assert!(key.abs() < MAX_EXACT_KEY);
        self.buf[i * (1 + self.m)] = key as f64;
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let at = i * (1 + self.m) + 1;
        &self.buf[at..at + self.m]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let at = i * (1 + self.m) + 1;
        let m = self.m;
        &mut self.buf[at..at + m]
    }

    /// Element `i` as its full wire slice (key plus row).
    fn elem(&self, i: usize) -> &[f64] {
        let w = 1 + self.m;
        &self.buf[i * w..(i + 1) * w]
    }

    pub(crate) fn from_shard(shard: &KeyedShard) -> Packed {
        let m = shard.m();
        let mut buf = Vec::with_capacity(shard.len() * (1 + m));
        for i in 0..shard.len() {
            debug_assert!(shard.keys()[i].abs() < MAX_EXACT_KEY);
            buf.push(shard.keys()[i] as f64);
            buf.extend_from_slice(shard.row(i));
        }
        meter::acquire(shard.len() * m);
        Packed { buf, m }
    }

    pub(crate) fn from_buf(buf: Vec<f64>, m: usize) -> Packed {
        debug_assert_eq!(buf.len() % (1 + m), 0);
        meter::acquire(buf.len() / (1 + m) * m);
        Packed { buf, m }
    }

    pub(crate) fn into_buf(mut self) -> Vec<f64> {
        meter::release(self.len() * self.m);
        std::mem::take(&mut self.buf)
    }

    pub(crate) fn into_shard(self) -> KeyedShard {
        let n = self.len();
        let m = self.m;
        let mut keys = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n * m);
        for chunk in self.buf.chunks_exact(1 + m) {
            keys.push(chunk[0] as i64);
            rows.extend_from_slice(&chunk[1..]);
        }
        drop(self);
        meter::acquire(rows.len());
        KeyedShard { keys, rows, m }
    }

    fn empty_like(&self) -> Packed {
        meter::acquire(self.len() * self.m);
        Packed {
            buf: vec![0.0; self.buf.len()],
            m: self.m,
        }
    }
}

impl Clone for Packed {
    fn clone(&self) -> Self {
        meter::acquire(self.len() * self.m);
        Packed {
            buf: self.buf.clone(),
            m: self.m,
        }
    }
}

impl Drop for Packed {
    fn drop(&mut self) {
        meter::release(self.buf.len() / (1 + self.m) * self.m);
    }
}

/// Sorts a shard by key, carrying payload rows along.
///
/// Both routines are data-independent: mergesort performs a fixed number of
/// element moves, the serial bitonic network a fixed number of
/// compare-exchanges, whatever the key values.
pub fn local_sort(shard: KeyedShard, direction: SortDirection, algo: LocalSortAlgo) -> KeyedShard {
    let packed = Packed::from_shard(&shard);
    drop(shard);
    local_sort_packed(packed, direction, algo).into_shard()
}

pub(crate) fn local_sort_packed(
    packed: Packed,
    direction: SortDirection,
    algo: LocalSortAlgo,
) -> Packed {
    let n = packed.len();
    let mut pairs: Vec<(i64, u32)> = (0..n).map(|i| (packed.key(i), i as u32)).collect();
    match algo {
        LocalSortAlgo::Mergesort => mergesort_pairs(&mut pairs, direction),
        LocalSortAlgo::Bitonic => {
            assert!(
                n.is_power_of_two() || n == 0,
                "serial bitonic sort needs a power-of-two block"
            );
            bitonic_sort_pairs(&mut pairs, direction);
        }
    }
    apply_permutation(packed, &pairs)
}

fn apply_permutation(packed: Packed, pairs: &[(i64, u32)]) -> Packed {
    let w = packed.width();
    let mut out = packed.empty_like();
    for (slot, &(_, src)) in pairs.iter().enumerate() {
        out.buf[slot * w..(slot + 1) * w].copy_from_slice(packed.elem(src as usize));
    }
    out
}

fn mergesort_pairs(pairs: &mut [(i64, u32)], direction: SortDirection) {
    let n = pairs.len();
    if n < 2 {
        return;
    }
    let take_left = |a: i64, b: i64| match direction {
        SortDirection::Ascending => a <= b,
        SortDirection::Descending => a >= b,
    };
    let mut buf = pairs.to_vec();
    let mut width = 1;
    let mut src_is_pairs = true;
    while width < n {
        {
            let (src, dst): (&[(i64, u32)], &mut [(i64, u32)]) = if src_is_pairs {
                (&*pairs, &mut buf[..])
            } else {
                (&buf[..], &mut *pairs)
            };
            let mut start = 0;
            while start < n {
                let mid = (start + width).min(n);
                let end = (start + 2 * width).min(n);
                let (mut i, mut j) = (start, mid);
                for slot in dst[start..end].iter_mut() {
                    if i < mid && (j >= end || take_left(src[i].0, src[j].0)) {
                        *slot = src[i];
                        i += 1;
                    } else {
                        *slot = src[j];
                        j += 1;
                    }
                }
                start = end;
            }
        }
        src_is_pairs = !src_is_pairs;
        width *= 2;
    }
    if !src_is_pairs {
        pairs.copy_from_slice(&buf);
    }
}

fn bitonic_sort_pairs(pairs: &mut [(i64, u32)], direction: SortDirection) {
    let n = pairs.len();
    let mut k = 2;
    while k <= n {
        let mut j = k / 2;
        while j >= 1 {
            for i in 0..n {
                let l = i ^ j;
                if l > i {
                    let up = (i & k) == 0;
                    let up = match direction {
                        SortDirection::Ascending => up,
                        SortDirection::Descending => !up,
                    };
                    if (up && pairs[i].0 > pairs[l].0) || (!up && pairs[i].0 < pairs[l].0) {
                        pairs.swap(i, l);
                    }
                }
            }
            j /= 2;
        }
        k *= 2;
    }
}

/// Two-cursor pass separating zero keys (written left-to-right) from positive
/// keys (written right-to-left): the output is ascending nearly-sorted and
/// positives appear in reverse of their input order. Exactly `n` writes.
pub fn sequential_nearly_sort(shard: KeyedShard) -> KeyedShard {
    sequential_nearly_sort_counted(shard).0
}

pub(crate) fn sequential_nearly_sort_counted(shard: KeyedShard) -> (KeyedShard, usize) {
    let packed = Packed::from_shard(&shard);
    drop(shard);
    let (out, writes) = nearly_sort_packed_counted(packed);
    (out.into_shard(), writes)
}

fn nearly_sort_packed_counted(packed: Packed) -> (Packed, usize) {
    let n = packed.len();
    let w = packed.width();
    let mut out = packed.empty_like();
    let mut writes = 0;
    let mut left = 0usize;
    let mut right = n;
    for i in 0..n {
        let slot = if packed.key(i) > 0 {
            right -= 1;
            right
        } else {
            let s = left;
            left += 1;
            s
        };
        out.buf[slot * w..(slot + 1) * w].copy_from_slice(packed.elem(i));
        writes += 1;
    }
    (out, writes)
}

pub(crate) fn nearly_sort_packed(packed: Packed) -> Packed {
    nearly_sort_packed_counted(packed).0
}

/// Exchanges this rank's whole block with `partner`, returning the partner's
/// block. The local copy survives, so both sides can merge.
fn exchange_packed(
    comm: &Communicator,
    packed: &Packed,
    partner: usize,
    tag: i64,
) -> Result<Packed> {
    let m = packed.m;
    let outgoing = packed.buf.clone();
    let incoming = f64::unwrap(
        comm.sendrecv(partner, Message::reals(tag, outgoing))?
            .payload,
    )?;
    if incoming.len() != packed.buf.len() {
        return Err(SmcError::LengthMismatch {
            expected: packed.buf.len(),
            got: incoming.len(),
        });
    }
    Ok(Packed::from_buf(incoming, m))
}

/// Pairwise step of the nearly-sort network.
///
/// Both ranks hold nearly-sorted blocks whose concatenation is
/// nearly-bitonic. After the exchange, the `ZerosFirst` rank keeps as many
/// zero-keyed pairs as fit (then positives, zeros leading its block); the
/// partner keeps the complementary pairs with positives leading. Each rank
/// consumes its `n` outputs in encounter order over the combined sequence,
/// so the step is O(n) with exactly `n` writes.
pub fn nearly_merge(
    comm: &Communicator,
    shard: KeyedShard,
    partner: usize,
    role: NearlyMergeRole,
) -> Result<KeyedShard> {
    let packed = Packed::from_shard(&shard);
    drop(shard);
    let zeros_first = role == NearlyMergeRole::ZerosFirst;
    let (out, _) = nearly_merge_packed(comm, packed, partner, role, zeros_first)?;
    Ok(out.into_shard())
}

#[cfg(test)]
pub(crate) fn nearly_merge_counted(
    comm: &Communicator,
    shard: KeyedShard,
    partner: usize,
    role: NearlyMergeRole,
) -> Result<(KeyedShard, usize)> {
    let packed = Packed::from_shard(&shard);
    drop(shard);
    let zeros_first = role == NearlyMergeRole::ZerosFirst;
    let (out, writes) = nearly_merge_packed(comm, packed, partner, role, zeros_first)?;
    Ok((out.into_shard(), writes))
}

/// `store_zeros_first` chooses the orientation of the kept block
/// independently of which class is consumed; the network uses this to keep
/// every block oriented with its merge direction.
fn nearly_merge_packed(
    comm: &Communicator,
    packed: Packed,
    partner: usize,
    role: NearlyMergeRole,
    store_zeros_first: bool,
) -> Result<(Packed, usize)> {
    let n = packed.len();
    let w = packed.width();
    let other = exchange_packed(comm, &packed, partner, TAG_NEARLY_MERGE)?;

    // Encounter order over the combined 2n pairs: lower rank's block first.
    let (first, second) = if comm.rank() < partner {
        (&packed, &other)
    } else {
        (&other, &packed)
    };
    let mut zero_slots: Vec<(u8, u32)> = Vec::with_capacity(2 * n);
    let mut positive_slots: Vec<(u8, u32)> = Vec::with_capacity(2 * n);
    for (block_id, block) in [first, second].into_iter().enumerate() {
        for i in 0..n {
            if block.key(i) > 0 {
                positive_slots.push((block_id as u8, i as u32));
            } else {
                zero_slots.push((block_id as u8, i as u32));
            }
        }
    }
    let zeros_taken = n.min(zero_slots.len());
    let positives_taken = n - zeros_taken;

    let (my_zeros, my_positives): (&[(u8, u32)], &[(u8, u32)]) = match role {
        NearlyMergeRole::ZerosFirst => (
            &zero_slots[..zeros_taken],
            &positive_slots[..positives_taken],
        ),
        NearlyMergeRole::PositivesFirst => (
            &zero_slots[zeros_taken..],
            &positive_slots[positives_taken..],
        ),
    };

    let mut out = packed.empty_like();
    let mut writes = 0;
    let ordered: [&[(u8, u32)]; 2] = if store_zeros_first {
        [my_zeros, my_positives]
    } else {
        [my_positives, my_zeros]
    };
    for class in ordered {
        for &(block_id, i) in class {
            let block = if block_id == 0 { first } else { second };
            out.buf[writes * w..(writes + 1) * w].copy_from_slice(block.elem(i as usize));
            writes += 1;
        }
    }
    drop(packed);
    drop(other);
    Ok((out, writes))
}

/// Merge-split comparator: keeps the lower or upper half of the union of two
/// locally sorted blocks, leaving the kept block sorted ascending. Ties take
/// the lower rank's element first, so both sides pick complementary halves.
fn compare_split_packed(
    comm: &Communicator,
    packed: Packed,
    partner: usize,
    take_min: bool,
) -> Result<Packed> {
    let n = packed.len();
    let w = packed.width();
    let other = exchange_packed(comm, &packed, partner, TAG_COMPARE_SPLIT)?;
    let (a, b) = if comm.rank() < partner {
        (&packed, &other)
    } else {
        (&other, &packed)
    };

    let mut out = packed.empty_like();
    if take_min {
        let (mut i, mut j) = (0usize, 0usize);
        for slot in 0..n {
            let from_a = j >= n || (i < n && a.key(i) <= b.key(j));
            let (block, idx) = if from_a { (a, &mut i) } else { (b, &mut j) };
            out.buf[slot * w..(slot + 1) * w].copy_from_slice(block.elem(*idx));
            *idx += 1;
        }
    } else {
        let (mut i, mut j) = (n, n);
        for slot in (0..n).rev() {
            let from_b = i == 0 || (j > 0 && b.key(j - 1) >= a.key(i - 1));
            let (block, idx) = if from_b { (b, &mut j) } else { (a, &mut i) };
            *idx -= 1;
            out.buf[slot * w..(slot + 1) * w].copy_from_slice(block.elem(*idx));
        }
    }
    drop(packed);
    drop(other);
    Ok(out)
}

/// Yields the bitonic network schedule for this rank: merge blocks of
/// doubling span, alternating direction, final block ascending.
fn bitonic_stages(rank: usize, size: usize) -> impl Iterator<Item = (usize, bool)> {
    let mut stages = Vec::new();
    let mut k = 2;
    while k <= size {
        let ascending = rank & k == 0;
        let mut j = k / 2;
        while j >= 1 {
            stages.push((rank ^ j, ascending));
            j /= 2;
        }
        k *= 2;
    }
    stages.into_iter()
}

/// Parallel bitonic sort of the global key sequence across ranks.
///
/// Blocks are sorted locally with the selected routine, then merged through
/// the network; for ascending order rank 0 ends up holding the smallest
/// block. The global multiset of (key, row) pairs is preserved.
pub fn bitonic_sort(
    comm: &Communicator,
    shard: KeyedShard,
    direction: SortDirection,
    algo: LocalSortAlgo,
) -> Result<KeyedShard> {
    let packed = Packed::from_shard(&shard);
    drop(shard);
    Ok(bitonic_sort_packed(comm, packed, direction, algo)?.into_shard())
}

pub(crate) fn bitonic_sort_packed(
    comm: &Communicator,
    packed: Packed,
    direction: SortDirection,
    algo: LocalSortAlgo,
) -> Result<Packed> {
    let rank = comm.rank();
    let size = comm.size();
    let mut block = local_sort_packed(packed, SortDirection::Ascending, algo);
    for (partner, ascending) in bitonic_stages(rank, size) {
        let ascending = match direction {
            SortDirection::Ascending => ascending,
            SortDirection::Descending => !ascending,
        };
        let take_min = ascending == (rank < partner);
        block = compare_split_packed(comm, block, partner, take_min)?;
    }
    if direction == SortDirection::Descending {
        let n = block.len();
        let pairs: Vec<(i64, u32)> = (0..n).rev().map(|i| (0, i as u32)).collect();
        block = apply_permutation(block, &pairs);
    }
    Ok(block)
}

/// Parallel nearly sort: local two-cursor pass, then the bitonic network with
/// nearly merges in place of comparators. The global output is ascending
/// nearly-sorted (no positive key precedes a zero key anywhere).
pub fn parallel_nearly_sort(comm: &Communicator, shard: KeyedShard) -> Result<KeyedShard> {
    let packed = Packed::from_shard(&shard);
    drop(shard);
    Ok(parallel_nearly_sort_packed(comm, packed)?.into_shard())
}

pub(crate) fn parallel_nearly_sort_packed(comm: &Communicator, packed: Packed) -> Result<Packed> {
    let rank = comm.rank();
    let size = comm.size();
    let mut block = nearly_sort_packed(packed);
    for (partner, ascending) in bitonic_stages(rank, size) {
        let role = if ascending == (rank < partner) {
            NearlyMergeRole::ZerosFirst
        } else {
            NearlyMergeRole::PositivesFirst
        };
        block = nearly_merge_packed(comm, block, partner, role, ascending)?.0;
    }
    Ok(block)
}
