use rand::Rng;

use super::{
    apportion, Experience, FifoBuffer, ReplayStrategy, ReservoirBuffer, SampledBatch, Snapshot,
    NO_SUB_BUFFER,
};
use crate::rngs::{self, Rng as StdRng};
use crate::{Error, Result};

/// Half-reservoir-half-FIFO baseline.
///
/// Each push goes, by a fair coin, to either a FIFO part or a reservoir part
/// of equal capacity. Samples are drawn from the two parts in proportion to
/// their occupancies.
#[derive(Debug, Clone)]
pub struct HalfHalfBuffer<T> {
    fifo_part: FifoBuffer<T>,
    reservoir_part: ReservoirBuffer<T>,
    rng: StdRng,
}

impl<T> HalfHalfBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity < 2 || !capacity.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "half-half capacity must be even and at least 2, got {capacity}"
            )));
        }
        let half = capacity / 2;
        Ok(Self {
            fifo_part: FifoBuffer::new(half, seed)?,
            reservoir_part: ReservoirBuffer::with_rng(half, rngs::stream(seed, 0x4a11))?,
            rng: rngs::stream(seed, rngs::STREAM_BUFFER),
        })
    }

    /// Routes `item` by coin flip. Returns `true` when it went to the FIFO part.
    pub fn push(&mut self, item: T) -> bool {
        let to_fifo = self.rng.random_bool(0.5);
        if to_fifo {
            self.fifo_part.push(item);
        } else {
            self.reservoir_part.push(item);
        }
        to_fifo
    }

    pub fn len(&self) -> usize {
        self.fifo_part.len() + self.reservoir_part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.fifo_part.capacity() + self.reservoir_part.capacity()
    }

    pub fn fifo_part(&self) -> &FifoBuffer<T> {
        &self.fifo_part
    }

    pub fn reservoir_part(&self) -> &ReservoirBuffer<T> {
        &self.reservoir_part
    }

    /// Number of draws from (fifo, reservoir) for a batch of `batch_size`.
    pub fn quotas(&mut self, batch_size: usize) -> (usize, usize) {
        let q = apportion(
            &[self.fifo_part.len(), self.reservoir_part.len()],
            batch_size,
            &mut self.rng,
        );
        (q[0], q[1])
    }
}

impl<T: Clone> HalfHalfBuffer<T> {
    pub fn sample(&mut self, batch_size: usize) -> Result<Vec<T>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let (from_fifo, from_reservoir) = self.quotas(batch_size);
        let mut out: Vec<T> = self
            .fifo_part
            .sample_with(from_fifo, &mut self.rng)
            .into_iter()
            .cloned()
            .collect();
        out.extend(
            self.reservoir_part
                .sample_with(from_reservoir, &mut self.rng)
                .into_iter()
                .cloned(),
        );
        Ok(out)
    }
}

impl ReplayStrategy for HalfHalfBuffer<Experience> {
    fn kind(&self) -> &'static str {
        "half"
    }

    fn push(&mut self, exp: Experience) {
        HalfHalfBuffer::push(self, exp);
    }

    fn sample(&mut self, batch_size: usize) -> Result<SampledBatch> {
        let experiences = HalfHalfBuffer::sample(self, batch_size)?;
        let source_ids = vec![NO_SUB_BUFFER; experiences.len()];
        Ok(SampledBatch {
            experiences,
            source_ids,
        })
    }

    fn len(&self) -> usize {
        HalfHalfBuffer::len(self)
    }

    fn capacity(&self) -> usize {
        HalfHalfBuffer::capacity(self)
    }

    fn for_each_stored(&self, f: &mut dyn FnMut(&Experience, usize)) {
        self.fifo_part.iter().for_each(|e| f(e, NO_SUB_BUFFER));
        self.reservoir_part
            .items()
            .iter()
            .for_each(|e| f(e, NO_SUB_BUFFER));
    }

    fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            kind: "half".into(),
            seen: self.reservoir_part.seen(),
            sections: vec![
                self.fifo_part.iter().cloned().collect(),
                self.reservoir_part.items().to_vec(),
            ],
        }
    }

    fn restore(&mut self, snapshot: Snapshot) -> Result<()> {
        let seen = snapshot.seen;
        let [fifo, reservoir]: [Vec<Experience>; 2] = snapshot.expect_sections("half")?;
        if fifo.len() > self.fifo_part.capacity() {
            return Err(Error::Snapshot("fifo part exceeds capacity".into()));
        }
        self.fifo_part.clear();
        for e in fifo {
            self.fifo_part.push(e);
        }
        self.reservoir_part.clear();
        self.reservoir_part.restore_items(reservoir, seen)
    }
}
