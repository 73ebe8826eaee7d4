//! Rank-addressed SPMD communicator over in-process workers.
//!
//! `spawn_group` launches `P` workers (threads), each running the same entry
//! function with a distinct rank, mirroring how an MPI program is launched.
//! Workers own their data exclusively; the only cross-worker interaction is
//! message passing through the operations below. Payloads are moved, never
//! aliased, across rank boundaries.
//!
//! Collective reductions use a fixed binary-tree order, so results are
//! bit-identical on every rank and reproducible run-to-run for a given `P`.

use std::rc::Rc;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::error::{Result, SmcError};

const TAG_REDUCE: i64 = -1;
const TAG_BCAST: i64 = -2;
const TAG_SCAN: i64 = -3;
const TAG_GATHER: i64 = -4;
const TAG_SCATTER: i64 = -5;
const TAG_SHIFT_BLOCK: i64 = -6;
const TAG_SHIFT_REMAINDER: i64 = -7;

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Contiguous sequence of fixed-width scalars exchanged between ranks.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Ints(Vec<i64>),
    Reals(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Ints(v) => v.len(),
            Payload::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A tagged payload. Tags are checked on receipt: a mismatch means the ranks
/// disagree about which operation is in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub tag: i64,
    pub payload: Payload,
}

impl Message {
    pub fn ints(tag: i64, data: Vec<i64>) -> Self {
        Message {
            tag,
            payload: Payload::Ints(data),
        }
    }

    pub fn reals(tag: i64, data: Vec<f64>) -> Self {
        Message {
            tag,
            payload: Payload::Reals(data),
        }
    }
}

/// Scalar types that can travel in a [`Payload`].
pub trait CommScalar: Copy + Send + 'static {
    fn wrap(data: Vec<Self>) -> Payload;
    fn unwrap(payload: Payload) -> Result<Vec<Self>>;
}

impl CommScalar for i64 {
    fn wrap(data: Vec<Self>) -> Payload {
        Payload::Ints(data)
    }

    fn unwrap(payload: Payload) -> Result<Vec<Self>> {
        match payload {
            Payload::Ints(v) => Ok(v),
            Payload::Reals(_) => Err(SmcError::PayloadType),
        }
    }
}

impl CommScalar for f64 {
    fn wrap(data: Vec<Self>) -> Payload {
        Payload::Reals(data)
    }

    fn unwrap(payload: Payload) -> Result<Vec<Self>> {
        match payload {
            Payload::Reals(v) => Ok(v),
            Payload::Ints(_) => Err(SmcError::PayloadType),
        }
    }
}

/// Options for [`spawn_group_with`].
#[derive(Debug, Clone)]
pub struct GroupOptions {
    /// How long a rank waits on a receive before reporting an unmatched call.
    pub timeout: Duration,
}

impl Default for GroupOptions {
    fn default() -> Self {
        let timeout = std::env::var("SMC_COMM_TIMEOUT_MS")
            .ok()
            .and_then(|v| v.parse::<u64>().ok())
            .map(Duration::from_millis)
            .unwrap_or(DEFAULT_TIMEOUT);
        GroupOptions { timeout }
    }
}

/// Handle carrying (rank, size) and the channel endpoints of one worker.
///
/// A communicator may be narrowed to a contiguous sub-range of ranks with
/// [`Communicator::subgroup`]; collective calls are then relative to that
/// window. Handles hold `Rc` internals and cannot leave their worker thread.
#[derive(Clone)]
pub struct Communicator {
    world_rank: usize,
    base: usize,
    size: usize,
    timeout: Duration,
    senders: Rc<Vec<Sender<Message>>>,
    receivers: Rc<Vec<Receiver<Message>>>,
}

/// Runs `entry` on `p` workers with ranks `0..p` and default options.
pub fn spawn_group<R, F>(p: usize, entry: F) -> Result<Vec<R>>
where
    F: Fn(&Communicator) -> R + Send + Sync,
    R: Send,
{
    spawn_group_with(p, GroupOptions::default(), entry)
}

/// Runs `entry` on `p` workers, returning the per-rank results in rank order.
///
/// `p` must be a power of two. A worker panic surfaces as
/// [`SmcError::WorkerFailed`] carrying the failing rank.
pub fn spawn_group_with<R, F>(p: usize, opts: GroupOptions, entry: F) -> Result<Vec<R>>
where
    F: Fn(&Communicator) -> R + Send + Sync,
    R: Send,
{
    if p == 0 || !p.is_power_of_two() {
        return Err(SmcError::NotPowerOfTwo(p));
    }
    if let Some(cap) = worker_cap() {
        if p > cap {
            return Err(SmcError::WorkerCapExceeded { requested: p, cap });
        }
    }

    // Full p x p channel matrix; workers[to] owns the receive side of every
    // (from, to) link.
    let mut sender_rows: Vec<Vec<Sender<Message>>> =
        (0..p).map(|_| Vec::with_capacity(p)).collect();
    let mut receiver_rows: Vec<Vec<Receiver<Message>>> =
        (0..p).map(|_| Vec::with_capacity(p)).collect();
    for to in 0..p {
        for from in 0..p {
            let (tx, rx) = unbounded();
            sender_rows[from].push(tx);
            receiver_rows[to].push(rx);
        }
    }

    let entry = &entry;
    let timeout = opts.timeout;
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(p);
        for (rank, (senders, receivers)) in sender_rows
            .into_iter()
            .zip(receiver_rows)
            .enumerate()
        {
            handles.push(scope.spawn(move || {
                let comm = Communicator {
                    world_rank: rank,
                    base: 0,
                    size: p,
                    timeout,
                    senders: Rc::new(senders),
                    receivers: Rc::new(receivers),
                };
                entry(&comm)
            }));
        }
        let mut results = Vec::with_capacity(p);
        let mut failure: Option<SmcError> = None;
        for (rank, handle) in handles.into_iter().enumerate() {
            match handle.join() {
                Ok(r) => results.push(r),
                Err(panic) => {
                    if failure.is_none() {
                        failure = Some(SmcError::WorkerFailed {
                            rank,
                            message: panic_message(panic.as_ref()),
                        });
                    }
                }
            }
        }
        match failure {
            Some(err) => Err(err),
            None => Ok(results),
        }
    })
}

fn worker_cap() -> Option<usize> {
    std::env::var("SMC_MAX_WORKERS").ok()?.parse().ok()
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}

impl Communicator {
    /// Rank of this worker within the (sub)group.
    pub fn rank(&self) -> usize {
        self.world_rank - self.base
    }

    /// Number of ranks in the (sub)group.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Narrows the communicator to ranks `offset..offset + len` of this group.
    ///
    /// Only ranks inside the window may use the returned handle; collective
    /// calls on it must be issued by every rank of the window.
    pub fn subgroup(&self, offset: usize, len: usize) -> Result<Communicator> {
        if len == 0 || !len.is_power_of_two() {
            return Err(SmcError::NotPowerOfTwo(len));
        }
        if offset + len > self.size {
            return Err(SmcError::InvalidConfig(format!(
                "subgroup {offset}..{} exceeds group size {}",
                offset + len,
                self.size
            )));
        }
        let rank = self.rank();
        if rank < offset || rank >= offset + len {
            return Err(SmcError::OutsideSubgroup(rank));
        }
        Ok(Communicator {
            world_rank: self.world_rank,
            base: self.base + offset,
            size: len,
            timeout: self.timeout,
            senders: Rc::clone(&self.senders),
            receivers: Rc::clone(&self.receivers),
        })
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer >= self.size {
            return Err(SmcError::InvalidConfig(format!(
                "peer {peer} outside group of size {}",
                self.size
            )));
        }
        Ok(())
    }

    /// One-way send to `peer` (group-relative). Never blocks.
    pub fn send(&self, peer: usize, msg: Message) -> Result<()> {
        self.check_peer(peer)?;
        let world_peer = self.base + peer;
        self.senders[world_peer]
            .send(msg)
            .map_err(|_| SmcError::Disconnected {
                rank: self.rank(),
                from: peer,
            })
    }

    /// Blocking receive from `peer`, checking the expected tag.
    ///
    /// Short waits are served by a yield loop: when workers outnumber cores,
    /// collective rounds chain many short waits, and rescheduling a parked
    /// thread costs far more than the message itself. Long waits fall back
    /// to a parked receive.
    pub fn recv(&self, peer: usize, expected_tag: i64) -> Result<Message> {
        self.check_peer(peer)?;
        let world_peer = self.base + peer;
        let receiver = &self.receivers[world_peer];
        let mut polled = None;
        for attempt in 0..2048 {
            match receiver.try_recv() {
                Ok(msg) => {
                    polled = Some(msg);
                    break;
                }
                Err(crossbeam_channel::TryRecvError::Empty) => {
                    if attempt % 8 == 7 {
                        std::thread::yield_now();
                    } else {
                        std::hint::spin_loop();
                    }
                }
                Err(crossbeam_channel::TryRecvError::Disconnected) => {
                    return Err(SmcError::Disconnected {
                        rank: self.rank(),
                        from: peer,
                    })
                }
            }
        }
        let msg = match polled {
            Some(msg) => msg,
            None => receiver.recv_timeout(self.timeout).map_err(|e| match e {
                RecvTimeoutError::Timeout => SmcError::RecvTimeout {
                    rank: self.rank(),
                    from: peer,
                    after: self.timeout,
                },
                RecvTimeoutError::Disconnected => SmcError::Disconnected {
                    rank: self.rank(),
                    from: peer,
                },
            })?,
        };
        if msg.tag != expected_tag {
            return Err(SmcError::CollectiveMismatch {
                expected: expected_tag,
                got: msg.tag,
            });
        }
        Ok(msg)
    }

    /// Symmetric exchange with `peer`: both sides call with each other's rank.
    ///
    /// Matched calls are deadlock-free (sends are buffered) and must carry
    /// payloads of identical length.
    pub fn sendrecv(&self, peer: usize, out: Message) -> Result<Message> {
        if peer == self.rank() {
            return Err(SmcError::SelfExchange(self.rank()));
        }
        self.sendrecv_pair(peer, peer, out)
    }

    /// General exchange: send `out` to `dest` while receiving from `source`.
    /// The counterpart of `MPI_Sendrecv`; `dest` and `source` may differ.
    pub fn sendrecv_pair(&self, dest: usize, source: usize, out: Message) -> Result<Message> {
        let tag = out.tag;
        let sent_len = out.payload.len();
        self.send(dest, out)?;
        let incoming = self.recv(source, tag)?;
        if incoming.payload.len() != sent_len {
            return Err(SmcError::LengthMismatch {
                expected: sent_len,
                got: incoming.payload.len(),
            });
        }
        Ok(incoming)
    }

    /// Reduce a vector elementwise onto rank 0 with a fixed binary-tree order.
    fn reduce_vec<T, F>(&self, local: Vec<T>, op: F) -> Result<Option<Vec<T>>>
    where
        T: CommScalar,
        F: Fn(T, T) -> T,
    {
        let rank = self.rank();
        let mut acc = local;
        let mut stride = 1;
        while stride < self.size {
            let span = stride * 2;
            if rank.is_multiple_of(span) {
                if rank + stride < self.size {
                    let incoming = T::unwrap(self.recv(rank + stride, TAG_REDUCE)?.payload)?;
                    if incoming.len() != acc.len() {
                        return Err(SmcError::LengthMismatch {
                            expected: acc.len(),
                            got: incoming.len(),
                        });
                    }
                    for (a, b) in acc.iter_mut().zip(incoming) {
                        *a = op(*a, b);
                    }
                }
            } else {
                self.send(
                    rank - stride,
                    Message {
                        tag: TAG_REDUCE,
                        payload: T::wrap(acc),
                    },
                )?;
                return Ok(None);
            }
            stride = span;
        }
        Ok(Some(acc))
    }

    /// Broadcast a vector from rank 0 along a binomial tree.
    fn broadcast_vec<T: CommScalar>(&self, root_value: Option<Vec<T>>) -> Result<Vec<T>> {
        let rank = self.rank();
        let mut value = if rank == 0 {
            Some(root_value.ok_or_else(|| {
                SmcError::InvalidConfig("broadcast root has no value".to_string())
            })?)
        } else {
            None
        };
        let mut stride = self.size / 2;
        while stride >= 1 {
            let span = stride * 2;
            if rank.is_multiple_of(span) {
                let v = value.as_ref().expect("broadcast holder has a value");
                self.send(
                    rank + stride,
                    Message {
                        tag: TAG_BCAST,
                        payload: T::wrap(v.clone()),
                    },
                )?;
            } else if rank % span == stride {
                value = Some(T::unwrap(self.recv(rank - stride, TAG_BCAST)?.payload)?);
            }
            stride /= 2;
        }
        Ok(value.expect("every rank holds the value after broadcast"))
    }

    fn allreduce_vec<T, F>(&self, local: Vec<T>, op: F) -> Result<Vec<T>>
    where
        T: CommScalar,
        F: Fn(T, T) -> T,
    {
        if self.size == 1 {
            return Ok(local);
        }
        let reduced = self.reduce_vec(local, op)?;
        self.broadcast_vec(reduced)
    }

    /// Global sum; bit-identical on every rank.
    pub fn allreduce_sum_f64(&self, local: f64) -> Result<f64> {
        Ok(self.allreduce_vec(vec![local], |a, b| a + b)?[0])
    }

    pub fn allreduce_sum_i64(&self, local: i64) -> Result<i64> {
        Ok(self.allreduce_vec(vec![local], |a, b| a + b)?[0])
    }

    /// Elementwise global sum of equal-length vectors.
    pub fn allreduce_sum_vec_f64(&self, local: Vec<f64>) -> Result<Vec<f64>> {
        self.allreduce_vec(local, |a, b| a + b)
    }

    pub fn allreduce_sum_vec_i64(&self, local: Vec<i64>) -> Result<Vec<i64>> {
        self.allreduce_vec(local, |a, b| a + b)
    }

    pub fn allreduce_max_f64(&self, local: f64) -> Result<f64> {
        Ok(self.allreduce_vec(vec![local], f64::max)?[0])
    }

    pub fn allreduce_min_i64(&self, local: i64) -> Result<i64> {
        Ok(self.allreduce_vec(vec![local], i64::min)?[0])
    }

    /// Broadcast one real from rank 0; other ranks' argument is ignored.
    pub fn broadcast_f64(&self, value: f64) -> Result<f64> {
        if self.size == 1 {
            return Ok(value);
        }
        let root = if self.rank() == 0 {
            Some(vec![value])
        } else {
            None
        };
        Ok(self.broadcast_vec::<f64>(root)?[0])
    }

    /// Inclusive prefix sum across ranks: rank `r` returns the sum of the
    /// locals of ranks `0..=r`.
    pub fn scan_sum_i64(&self, local: i64) -> Result<i64> {
        self.scan_sum(local)
    }

    pub fn scan_sum_f64(&self, local: f64) -> Result<f64> {
        self.scan_sum(local)
    }

    fn scan_sum<T>(&self, local: T) -> Result<T>
    where
        T: CommScalar + std::ops::Add<Output = T>,
    {
        let rank = self.rank();
        let mut acc = local;
        let mut stride = 1;
        while stride < self.size {
            if rank + stride < self.size {
                self.send(
                    rank + stride,
                    Message {
                        tag: TAG_SCAN,
                        payload: T::wrap(vec![acc]),
                    },
                )?;
            }
            if rank >= stride {
                let incoming = T::unwrap(self.recv(rank - stride, TAG_SCAN)?.payload)?;
                acc = incoming[0] + acc;
            }
            stride *= 2;
        }
        Ok(acc)
    }

    /// Concatenates equal-length shards onto rank 0 in rank order.
    pub fn gather_i64(&self, local: &[i64]) -> Result<Option<Vec<i64>>> {
        self.gather(local)
    }

    pub fn gather_f64(&self, local: &[f64]) -> Result<Option<Vec<f64>>> {
        self.gather(local)
    }

    fn gather<T: CommScalar>(&self, local: &[T]) -> Result<Option<Vec<T>>> {
        if self.rank() == 0 {
            let mut all = Vec::with_capacity(local.len() * self.size);
            all.extend_from_slice(local);
            for peer in 1..self.size {
                let shard = T::unwrap(self.recv(peer, TAG_GATHER)?.payload)?;
                if shard.len() != local.len() {
                    return Err(SmcError::LengthMismatch {
                        expected: local.len(),
                        got: shard.len(),
                    });
                }
                all.extend_from_slice(&shard);
            }
            Ok(Some(all))
        } else {
            self.send(
                0,
                Message {
                    tag: TAG_GATHER,
                    payload: T::wrap(local.to_vec()),
                },
            )?;
            Ok(None)
        }
    }

    /// Splits rank 0's sequence into `P` contiguous shards; rank `r` receives
    /// slice `r*n..(r+1)*n`. Non-root ranks pass `None`.
    pub fn scatter_i64(&self, root_data: Option<&[i64]>) -> Result<Vec<i64>> {
        self.scatter(root_data)
    }

    pub fn scatter_f64(&self, root_data: Option<&[f64]>) -> Result<Vec<f64>> {
        self.scatter(root_data)
    }

    fn scatter<T: CommScalar>(&self, root_data: Option<&[T]>) -> Result<Vec<T>> {
        if self.rank() == 0 {
            let data = root_data
                .ok_or_else(|| SmcError::InvalidConfig("scatter root has no data".to_string()))?;
            if !data.len().is_multiple_of(self.size) {
                return Err(SmcError::LengthMismatch {
                    expected: data.len().next_multiple_of(self.size),
                    got: data.len(),
                });
            }
            let n = data.len() / self.size;
            for peer in 1..self.size {
                self.send(
                    peer,
                    Message {
                        tag: TAG_SCATTER,
                        payload: T::wrap(data[peer * n..(peer + 1) * n].to_vec()),
                    },
                )?;
            }
            Ok(data[..n].to_vec())
        } else {
            T::unwrap(self.recv(0, TAG_SCATTER)?.payload)
        }
    }

    /// Barrier: all ranks leave only after all have arrived.
    pub fn barrier(&self) -> Result<()> {
        self.allreduce_sum_i64(0).map(|_| ())
    }

    /// Circularly shifts the distributed array left by `r` positions.
    ///
    /// Each rank holds `data.len() / elem_width` elements of width
    /// `elem_width` scalars; the global array has `n * P` elements. The shift
    /// amount is decomposed into powers of two, giving at most `log2(P)`
    /// whole-block exchange rounds plus one boundary exchange for the
    /// `r mod n` remainder.
    pub fn rotational_shift_f64(
        &self,
        data: Vec<f64>,
        elem_width: usize,
        r: usize,
    ) -> Result<Vec<f64>> {
        assert!(elem_width > 0, "element width must be positive");
        if !data.len().is_multiple_of(elem_width) {
            return Err(SmcError::LengthMismatch {
                expected: data.len().next_multiple_of(elem_width),
                got: data.len(),
            });
        }
        let n = data.len() / elem_width;
        let node_len = n * self.size;
        if r >= node_len.max(1) {
            return Err(SmcError::ShiftOutOfRange {
                r: r as i64,
                len: node_len,
            });
        }
        let mut cur = data;
        if r == 0 || node_len == 0 {
            return Ok(cur);
        }

        let rank = self.rank();
        let size = self.size;
        let whole_blocks = r / n;
        let remainder = r % n;

        let mut block = 1;
        while block <= whole_blocks {
            if whole_blocks & block != 0 {
                let dest = (rank + size - block) % size;
                let source = (rank + block) % size;
                cur = f64::unwrap(
                    self.sendrecv_pair(dest, source, Message::reals(TAG_SHIFT_BLOCK, cur))?
                        .payload,
                )?;
            }
            block <<= 1;
        }

        if remainder > 0 {
            let cut = remainder * elem_width;
            if size == 1 {
                cur.rotate_left(cut);
            } else {
                let dest = (rank + size - 1) % size;
                let source = (rank + 1) % size;
                let prefix = cur[..cut].to_vec();
                let incoming = f64::unwrap(
                    self.sendrecv_pair(dest, source, Message::reals(TAG_SHIFT_REMAINDER, prefix))?
                        .payload,
                )?;
                cur.copy_within(cut.., 0);
                let tail_start = cur.len() - cut;
                cur[tail_start..].copy_from_slice(&incoming);
            }
        }
        Ok(cur)
    }
}
