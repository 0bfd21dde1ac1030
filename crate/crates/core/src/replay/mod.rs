//! Experience replay strategies.
//!
//! All buffers share the [`ReplayStrategy`] interface and are created by name
//! through a [`BufferRegistry`]. The concrete types are generic over the
//! stored item so the retention studies can drive them with plain integers.

mod fifo;
mod half;
mod mtr;
mod registry;
mod reservoir;
pub mod snapshot;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::Result;

pub use fifo::FifoBuffer;
pub use half::HalfHalfBuffer;
pub use mtr::MtrBuffer;
pub use registry::{BufferFactory, BufferRegistry, BufferSpec};
pub use reservoir::ReservoirBuffer;
pub use snapshot::Snapshot;

/// Source id for items that do not come from a cascade sub-buffer
/// (the MTR overflow queue, or any non-cascade buffer).
pub const NO_SUB_BUFFER: usize = 0;

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True environment termination. Time-limit truncation is not terminal.
    pub terminal: bool,
    /// Global environment step at insertion.
    pub insert_step: u64,
}

/// A minibatch plus, for each item, the cascade sub-buffer it was drawn from
/// (`1..=n_b`), or [`NO_SUB_BUFFER`].
#[derive(Debug, Clone, Default)]
pub struct SampledBatch {
    pub experiences: Vec<Experience>,
    pub source_ids: Vec<usize>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }
}

/// Common interface of every replay buffer.
pub trait ReplayStrategy: Send {
    /// Registry name of the strategy.
    fn kind(&self) -> &'static str;

    fn push(&mut self, exp: Experience);

    /// Draws `min(batch_size, len)` experiences, with replacement.
    fn sample(&mut self, batch_size: usize) -> Result<SampledBatch>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn capacity(&self) -> usize;

    /// Occupancy of each cascade sub-buffer, for buffers that have a cascade.
    fn cascade_occupancies(&self) -> Option<Vec<usize>> {
        None
    }

    /// Visits every stored experience with its source id.
    fn for_each_stored(&self, f: &mut dyn FnMut(&Experience, usize));

    fn to_snapshot(&self) -> Snapshot;

    /// Replaces the contents with those of `snapshot`. The RNG state is not
    /// part of a snapshot.
    fn restore(&mut self, snapshot: Snapshot) -> Result<()>;
}

/// Splits `min(batch, Σ occupancies)` draws over groups in proportion to
/// their occupancies using the largest-remainder method. Ties between equal
/// remainders are broken uniformly at random.
pub fn apportion<R: Rng + ?Sized>(occupancies: &[usize], batch: usize, rng: &mut R) -> Vec<usize> {
    let total: usize = occupancies.iter().sum();
    let mut quotas = vec![0usize; occupancies.len()];
    if total == 0 {
        return quotas;
    }
    let n = batch.min(total) as u128;
    let total = total as u128;
    // exact quota = n * occ / total; remainders kept as integers (numerators)
    let mut remainders = Vec::with_capacity(occupancies.len());
    let mut assigned = 0u128;
    for (i, &occ) in occupancies.iter().enumerate() {
        let num = n * occ as u128;
        quotas[i] = (num / total) as usize;
        assigned += num / total;
        remainders.push((i, num % total));
    }
    let left = (n - assigned) as usize;
    if left > 0 {
        remainders.shuffle(rng);
        // stable sort keeps the shuffled order among equal remainders
        remainders.sort_by_key(|r| std::cmp::Reverse(r.1));
        for &(i, _) in remainders.iter().take(left) {
            quotas[i] += 1;
        }
    }
    quotas
}
