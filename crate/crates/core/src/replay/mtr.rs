use std::collections::VecDeque;

use rand::Rng;

use super::{apportion, Experience, ReplayStrategy, SampledBatch, Snapshot, NO_SUB_BUFFER};
use crate::rngs::{self, Rng as StdRng};
use crate::{Error, Result};

/// Multi-timescale replay buffer.
///
/// A cascade of `n_b` FIFO sub-buffers of `N / n_b` slots each, plus an
/// overflow FIFO whose limit is whatever the cascade leaves free of `N`.
///
/// A push enters sub-buffer 1. Whenever a sub-buffer overflows its oldest
/// item is evicted and a `beta` coin decides its fate: heads promotes it to
/// the next sub-buffer (possibly cascading further), tails sends it to the
/// overflow queue. Heads on the last sub-buffer discards the item, since
/// there is nowhere further to go. The overflow queue is then trimmed from
/// the front until the total is at most `N`; once the cascade is full the
/// overflow limit is zero and everything it would receive is dropped.
#[derive(Debug, Clone)]
pub struct MtrBuffer<T> {
    capacity: usize,
    sub_capacity: usize,
    beta: f64,
    subs: Vec<VecDeque<T>>,
    overflow: VecDeque<T>,
    cascade_len: usize,
    rng: StdRng,
}

impl<T> MtrBuffer<T> {
    pub fn new(capacity: usize, n_sub: usize, beta: f64, seed: u64) -> Result<Self> {
        Self::with_rng(
            capacity,
            n_sub,
            beta,
            rngs::stream(seed, rngs::STREAM_BUFFER),
        )
    }

    pub fn with_rng(capacity: usize, n_sub: usize, beta: f64, rng: StdRng) -> Result<Self> {
        if n_sub == 0 || capacity < n_sub || !capacity.is_multiple_of(n_sub) {
            return Err(Error::Config(format!(
                "mtr capacity {capacity} must be a positive multiple of n_b = {n_sub}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!(
                "beta_mtr must lie in [0, 1], got {beta}"
            )));
        }
        let sub_capacity = capacity / n_sub;
        Ok(Self {
            capacity,
            sub_capacity,
            beta,
            subs: (0..n_sub)
                .map(|_| VecDeque::with_capacity(sub_capacity + 1))
                .collect(),
            overflow: VecDeque::new(),
            cascade_len: 0,
            rng,
        })
    }

    pub fn push(&mut self, item: T) {
        self.push_observed(item, drop);
    }

    /// Pushes `item`, handing every item that leaves the buffer on this push
    /// to `on_discard`.
    pub fn push_observed(&mut self, item: T, mut on_discard: impl FnMut(T)) {
        let last = self.subs.len() - 1;
        let mut carry = item;
        let mut k = 0;
        loop {
            let sub = &mut self.subs[k];
            sub.push_back(carry);
            if sub.len() <= self.sub_capacity {
                self.cascade_len += 1;
                break;
            }
            let evicted = sub
                .pop_front()
                .expect("sub-buffer over capacity is nonempty");
            let promote = self.rng.random::<f64>() < self.beta;
            if promote && k < last {
                carry = evicted;
                k += 1;
            } else {
                if promote {
                    on_discard(evicted);
                } else {
                    self.overflow.push_back(evicted);
                }
                break;
            }
        }
        let limit = self.overflow_limit();
        while self.overflow.len() > limit {
            on_discard(
                self.overflow
                    .pop_front()
                    .expect("overflow over limit is nonempty"),
            );
        }
        debug_assert!(self.invariants_hold());
    }

    /// Current maximum size of the overflow queue.
    pub fn overflow_limit(&self) -> usize {
        self.capacity - self.cascade_len
    }

    pub fn len(&self) -> usize {
        self.cascade_len + self.overflow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_sub(&self) -> usize {
        self.subs.len()
    }

    pub fn sub_capacity(&self) -> usize {
        self.sub_capacity
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cascade_len(&self) -> usize {
        self.cascade_len
    }

    pub fn is_cascade_full(&self) -> bool {
        self.cascade_len == self.capacity
    }

    pub fn sub_lens(&self) -> Vec<usize> {
        self.subs.iter().map(VecDeque::len).collect()
    }

    pub fn overflow_len(&self) -> usize {
        self.overflow.len()
    }

    /// Sub-buffer `k` (1-based), oldest first.
    pub fn sub_buffer(&self, k: usize) -> impl Iterator<Item = &T> {
        self.subs[k - 1].iter()
    }

    pub fn overflow(&self) -> impl Iterator<Item = &T> {
        self.overflow.iter()
    }

    pub fn invariants_hold(&self) -> bool {
        let sizes_ok = self.subs.iter().all(|s| s.len() <= self.sub_capacity);
        let cascade_ok = self.subs.iter().map(VecDeque::len).sum::<usize>() == self.cascade_len;
        let total_ok = self.cascade_len + self.overflow.len() <= self.capacity;
        let full_ok = !self.is_cascade_full() || self.overflow.is_empty();
        sizes_ok && cascade_ok && total_ok && full_ok
    }

    /// Per-group draw counts, cascade sub-buffers first and overflow last.
    pub fn quotas(&mut self, batch_size: usize) -> Vec<usize> {
        let mut occupancies = self.sub_lens();
        occupancies.push(self.overflow.len());
        apportion(&occupancies, batch_size, &mut self.rng)
    }

    /// Draws a batch as `(item, source_id)` pairs; sub-buffers are numbered
    /// from 1 and the overflow queue is [`NO_SUB_BUFFER`].
    pub fn sample_refs(&mut self, batch_size: usize) -> Result<Vec<(&T, usize)>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let quotas = self.quotas(batch_size);
        let mut out = Vec::with_capacity(quotas.iter().sum());
        let n_sub = self.subs.len();
        for (group, &quota) in quotas.iter().enumerate() {
            let (queue, source) = if group < n_sub {
                (&self.subs[group], group + 1)
            } else {
                (&self.overflow, NO_SUB_BUFFER)
            };
            for _ in 0..quota {
                let idx = self.rng.random_range(0..queue.len());
                out.push((&queue[idx], source));
            }
        }
        Ok(out)
    }

    fn load_sections(&mut self, mut sections: Vec<VecDeque<T>>) -> Result<()> {
        if sections.len() != self.subs.len() + 1 {
            return Err(Error::Snapshot(format!(
                "expected {} sections, found {}",
                self.subs.len() + 1,
                sections.len()
            )));
        }
        let overflow = sections.pop().expect("length checked");
        let cascade_len: usize = sections.iter().map(VecDeque::len).sum();
        let filled_in_order = sections
            .windows(2)
            .all(|w| w[1].is_empty() || w[0].len() == self.sub_capacity);
        if sections.iter().any(|s| s.len() > self.sub_capacity)
            || !filled_in_order
            || cascade_len + overflow.len() > self.capacity
        {
            return Err(Error::Snapshot(
                "mtr sections violate buffer invariants".into(),
            ));
        }
        self.subs = sections;
        self.overflow = overflow;
        self.cascade_len = cascade_len;
        Ok(())
    }
}

impl ReplayStrategy for MtrBuffer<Experience> {
    fn kind(&self) -> &'static str {
        "mtr"
    }

    fn push(&mut self, exp: Experience) {
        MtrBuffer::push(self, exp);
    }

    fn sample(&mut self, batch_size: usize) -> Result<SampledBatch> {
        let refs = self.sample_refs(batch_size)?;
        let mut batch = SampledBatch {
            experiences: Vec::with_capacity(refs.len()),
            source_ids: Vec::with_capacity(refs.len()),
        };
        for (exp, source) in refs {
            batch.experiences.push(exp.clone());
            batch.source_ids.push(source);
        }
        Ok(batch)
    }

    fn len(&self) -> usize {
        MtrBuffer::len(self)
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn cascade_occupancies(&self) -> Option<Vec<usize>> {
        Some(self.sub_lens())
    }

    fn for_each_stored(&self, f: &mut dyn FnMut(&Experience, usize)) {
        for (k, sub) in self.subs.iter().enumerate() {
            sub.iter().for_each(|e| f(e, k + 1));
        }
        self.overflow.iter().for_each(|e| f(e, NO_SUB_BUFFER));
    }

    fn to_snapshot(&self) -> Snapshot {
        let mut sections: Vec<Vec<Experience>> = self
            .subs
            .iter()
            .map(|s| s.iter().cloned().collect())
            .collect();
        sections.push(self.overflow.iter().cloned().collect());
        Snapshot {
            kind: "mtr".into(),
            seen: 0,
            sections,
        }
    }

    fn restore(&mut self, snapshot: Snapshot) -> Result<()> {
        if snapshot.kind != "mtr" {
            return Err(Error::Snapshot(format!(
                "expected mtr snapshot, found {}",
                snapshot.kind
            )));
        }
        self.load_sections(snapshot.sections.into_iter().map(VecDeque::from).collect())
    }
}
