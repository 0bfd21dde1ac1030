use rand::Rng;

use super::{Experience, ReplayStrategy, SampledBatch, Snapshot, NO_SUB_BUFFER};
use crate::rngs::{self, Rng as StdRng};
use crate::{Error, Result};

/// Reservoir buffer (Algorithm R).
///
/// After `t ≥ C` insertions every item ever inserted is present with
/// probability `C / t`: the `t`-th item replaces a uniformly chosen slot with
/// probability `C / t`.
#[derive(Debug, Clone)]
pub struct ReservoirBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    seen: u64,
    rng: StdRng,
}

impl<T> ReservoirBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        Self::with_rng(capacity, rngs::stream(seed, rngs::STREAM_BUFFER))
    }

    pub fn with_rng(capacity: usize, rng: StdRng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("reservoir capacity must be positive".into()));
        }
        Ok(Self {
            items: Vec::with_capacity(capacity),
            capacity,
            seen: 0,
            rng,
        })
    }

    /// Offers `item` to the reservoir. Returns whichever item left storage:
    /// the replaced slot's occupant, or `item` itself if it was rejected.
    pub fn push(&mut self, item: T) -> Option<T> {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
            return None;
        }
        let j = self.rng.random_range(0..self.seen);
        if j < self.capacity as u64 {
            Some(std::mem::replace(&mut self.items[j as usize], item))
        } else {
            Some(item)
        }
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

    /// Number of items offered so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub(crate) fn clear(&mut self) {
        self.items.clear();
        self.seen = 0;
    }

    pub(crate) fn restore_items(&mut self, items: Vec<T>, seen: u64) -> Result<()> {
        if items.len() > self.capacity || (seen as usize) < items.len() {
            return Err(Error::Snapshot("reservoir section inconsistent".into()));
        }
        self.items = items;
        self.seen = seen;
        Ok(())
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..count)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

impl<T: Clone> ReservoirBuffer<T> {
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

impl ReplayStrategy for ReservoirBuffer<Experience> {
    fn kind(&self) -> &'static str {
        "reservoir"
    }

    fn push(&mut self, exp: Experience) {
        ReservoirBuffer::push(self, exp);
    }

    fn sample(&mut self, batch_size: usize) -> Result<SampledBatch> {
        let experiences = ReservoirBuffer::sample(self, batch_size)?;
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
            kind: "reservoir".into(),
            seen: self.seen,
            sections: vec![self.items.clone()],
        }
    }

    fn restore(&mut self, snapshot: Snapshot) -> Result<()> {
        let seen = snapshot.seen;
        let [items]: [Vec<Experience>; 1] = snapshot.expect_sections("reservoir")?;
        self.restore_items(items, seen)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_pushes_are_all_kept() {
        let mut r = ReservoirBuffer::new(10, 3).unwrap();
        for i in 0..10u32 {
            assert_eq!(r.push(i), None);
        }
        let mut kept = r.items().to_vec();
        kept.sort();
        assert_eq!(kept, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn single_slot_keeps_each_item_with_equal_probability() {
        let t = 5u32;
        let trials = 20_000;
        let mut counts = vec![0u32; t as usize];
        for trial in 0..trials {
            let mut r = ReservoirBuffer::new(1, trial as u64).unwrap();
            for i in 0..t {
                r.push(i);
            }
            counts[r.items()[0] as usize] += 1;
        }
        let p = 1.0 / t as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - p).abs() < 4.0 * se, "freq {freq}");
        }
    }

    #[test]
    fn inclusion_frequency_matches_capacity_over_seen() {
        // C = 10, t = 100: every item retained with probability 0.1
        let trials = 20_000;
        let mut counts = vec![0u32; 100];
        for trial in 0..trials {
            let mut r = ReservoirBuffer::new(10, 1_000 + trial as u64).unwrap();
            for i in 0..100u32 {
                r.push(i);
            }
            for &i in r.items() {
                counts[i as usize] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.1).abs() < 0.01, "freq {freq}");
        }
    }
}
