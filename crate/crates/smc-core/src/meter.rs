//! Per-worker accounting of particle-payload buffers.
//!
//! The redistribute variants differ in how much working memory a rank needs:
//! the centralised variant stages the whole population on rank 0, the
//! sort-based variants only ever hold a constant number of shard-sized
//! buffers. The meter records, per worker thread, the number of payload
//! scalars (f64 state entries) held in working buffers: the concurrent total,
//! its peak, and the largest single buffer ever allocated.
//!
//! Buffers moved to a peer count against the receiver, not the sender.

use std::cell::Cell;

thread_local! {
    static CURRENT: Cell<u64> = const { Cell::new(0) };
    static PEAK: Cell<u64> = const { Cell::new(0) };
    static LARGEST: Cell<u64> = const { Cell::new(0) };
}

/// Snapshot of one worker's accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MeterStats {
    /// Peak number of payload scalars held concurrently.
    pub peak_concurrent: u64,
    /// Largest single buffer, in payload scalars.
    pub largest_single: u64,
}

/// Resets this worker's counters.
pub fn reset() {
    CURRENT.set(0);
    PEAK.set(0);
    LARGEST.set(0);
}

/// Reads this worker's counters.
pub fn stats() -> MeterStats {
    MeterStats {
        peak_concurrent: PEAK.get(),
        largest_single: LARGEST.get(),
    }
}

/// Records acquisition of a buffer of `scalars` payload scalars.
pub fn acquire(scalars: usize) {
    let scalars = scalars as u64;
    let now = CURRENT.get() + scalars;
    CURRENT.set(now);
    if now > PEAK.get() {
        PEAK.set(now);
    }
    if scalars > LARGEST.get() {
        LARGEST.set(scalars);
    }
}

/// Records release (drop or hand-off to a peer) of a buffer.
pub fn release(scalars: usize) {
    let scalars = scalars as u64;
    CURRENT.set(CURRENT.get().saturating_sub(scalars));
}
