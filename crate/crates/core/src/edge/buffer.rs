use std::collections::VecDeque;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::clinical::ObservationBundle;

#[derive(Debug)]
struct Ring {
    items: VecDeque<ObservationBundle>,
    capacity: usize,
    dropped: u64,
    next_seq: u64,
    closed: bool,
}

/// Bounded FIFO of bundles awaiting acknowledgement, shared by the capture
/// side (producer) and the flush side (consumer). When full, the oldest
/// bundle is evicted. It also owns the agent's sequence counter so both
/// sides agree on numbering.
#[derive(Debug)]
pub struct EdgeBuffer {
    ring: Mutex<Ring>,
    ready: Condvar,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("bundle seq {got} does not match next seq {expected}")]
pub struct SeqMismatch {
    pub expected: u64,
    pub got: u64,
}

impl EdgeBuffer {
    /// `first_seq` is the sequence number the next bundle must carry.
    pub fn new(capacity: usize, first_seq: u64) -> Self {
        assert!(capacity >= 1, "buffer capacity must be at least 1");
        EdgeBuffer {
            ring: Mutex::new(Ring {
                items: VecDeque::with_capacity(capacity.min(4096)),
                capacity,
                dropped: 0,
                next_seq: first_seq.max(1),
                closed: false,
            }),
            ready: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Ring> {
        self.ring.lock().expect("buffer lock")
    }

    pub fn next_seq(&self) -> u64 {
        self.lock().next_seq
    }

    /// Appends `bundle`, which must carry [`next_seq`](Self::next_seq).
    /// Returns the evicted bundle when the ring was full.
    pub fn enqueue(
        &self,
        bundle: ObservationBundle,
    ) -> Result<Option<ObservationBundle>, SeqMismatch> {
        let mut r = self.lock();
        if bundle.seq() != r.next_seq {
            return Err(SeqMismatch {
                expected: r.next_seq,
                got: bundle.seq(),
            });
        }
        r.next_seq += 1;
        let evicted = if r.items.len() == r.capacity {
            r.dropped += 1;
            r.items.pop_front()
        } else {
            None
        };
        r.items.push_back(bundle);
        drop(r);
        self.ready.notify_all();
        Ok(evicted)
    }

    pub fn front(&self) -> Option<ObservationBundle> {
        self.lock().items.front().cloned()
    }

    /// Removes the head if it carries `seq`.
    pub fn pop_acked(&self, seq: u64) -> bool {
        let mut r = self.lock();
        if r.items.front().is_some_and(|b| b.seq() == seq) {
            r.items.pop_front();
            true
        } else {
            false
        }
    }

    /// Sequence number to report as already delivered when (re)connecting:
    /// everything before the head was acked or evicted.
    pub fn delivered_floor(&self) -> u64 {
        let r = self.lock();
        r.items.front().map_or(r.next_seq - 1, |b| b.seq() - 1)
    }

    /// Applies a server resume point: discards buffered bundles it already
    /// holds and moves the counter past it. Returns how many were discarded.
    pub fn resume_from(&self, seq: u64) -> usize {
        let mut r = self.lock();
        let before = r.items.len();
        while r.items.front().is_some_and(|b| b.seq() < seq) {
            r.items.pop_front();
        }
        r.next_seq = r.next_seq.max(seq);
        before - r.items.len()
    }

    pub fn len(&self) -> usize {
        self.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.lock().capacity
    }

    pub fn dropped_count(&self) -> u64 {
        self.lock().dropped
    }

    pub fn seqs(&self) -> Vec<u64> {
        self.lock().items.iter().map(|b| b.seq()).collect()
    }

    /// Blocks until the buffer is non-empty, closed, or `timeout` passes.
    pub fn wait_nonempty(&self, timeout: Duration) -> bool {
        let r = self.lock();
        let (r, _) = self
            .ready
            .wait_timeout_while(r, timeout, |r| r.items.is_empty() && !r.closed)
            .expect("buffer lock");
        !r.items.is_empty()
    }

    /// Wakes waiting consumers for shutdown.
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }
}
