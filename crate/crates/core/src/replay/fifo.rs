use std::collections::VecDeque;

use rand::Rng;

use super::{Experience, ReplayStrategy, SampledBatch, Snapshot, NO_SUB_BUFFER};
use crate::rngs::{self, Rng as StdRng};
use crate::{Error, Result};

/// First-in first-out buffer: once full, each push evicts the oldest item.
#[derive(Debug, Clone)]
pub struct FifoBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
    rng: StdRng,
}

impl<T> FifoBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("fifo capacity must be positive".into()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
            rng: rngs::stream(seed, rngs::STREAM_BUFFER),
        })
    }

    /// Appends `item`, returning the evicted oldest item if the buffer was full.
    pub fn push(&mut self, item: T) -> Option<T> {
        let evicted = if self.items.len() == self.capacity {
            self.items.pop_front()
        } else {
            None
        };
        self.items.push_back(item);
        evicted
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub(crate) fn clear(&mut self) {
        self.items.clear();
    }

    /// Uniform draws with replacement using the supplied generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..count)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

impl<T: Clone> FifoBuffer<T> {
    pub fn sample(&mut self, count: usize) -> Result<Vec<T>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = count.min(self.items.len());
        let len = self.items.len();
        Ok((0..n)
            .map(|_| self.items[self.rng.random_range(0..len)].clone())
            .collect())
    }
}

impl ReplayStrategy for FifoBuffer<Experience> {
    fn kind(&self) -> &'static str {
        "fifo"
    }

    fn push(&mut self, exp: Experience) {
        FifoBuffer::push(self, exp);
    }

    fn sample(&mut self, batch_size: usize) -> Result<SampledBatch> {
        let experiences = FifoBuffer::sample(self, batch_size)?;
        let source_ids = vec![NO_SUB_BUFFER; experiences.len()];
        Ok(SampledBatch {
            experiences,
            source_ids,
        })
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn for_each_stored(&self, f: &mut dyn FnMut(&Experience, usize)) {
        self.items.iter().for_each(|e| f(e, NO_SUB_BUFFER));
    }

    fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            kind: "fifo".into(),
            seen: 0,
            sections: vec![self.items.iter().cloned().collect()],
        }
    }

    fn restore(&mut self, snapshot: Snapshot) -> Result<()> {
        let [items]: [Vec<Experience>; 1] = snapshot.expect_sections("fifo")?;
        if items.len() > self.capacity {
            return Err(Error::Snapshot("fifo section exceeds capacity".into()));
        }
        self.items = items.into();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evicts_oldest_at_capacity() {
        let mut buf = FifoBuffer::new(3, 0).unwrap();
        for c in ['a', 'b', 'c'] {
            assert_eq!(buf.push(c), None);
        }
        assert_eq!(buf.push('d'), Some('a'));
        assert_eq!(buf.iter().copied().collect::<String>(), "bcd");
    }

    #[test]
    fn empty_sample_is_an_error() {
        let mut buf = FifoBuffer::<u32>::new(4, 0).unwrap();
        assert!(matches!(buf.sample(2), Err(Error::EmptyBuffer)));
        assert!(FifoBuffer::<u32>::new(0, 0).is_err());
    }

    #[test]
    fn warmup_sample_returns_occupancy() {
        let mut buf = FifoBuffer::new(10, 0).unwrap();
        buf.push(1u32);
        buf.push(2);
        let s = buf.sample(8).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| *x == 1 || *x == 2));
    }
}
