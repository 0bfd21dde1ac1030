use std::collections::BTreeMap;

use super::{Experience, FifoBuffer, HalfHalfBuffer, MtrBuffer, ReplayStrategy, ReservoirBuffer};
use crate::{Error, Result};

/// Construction parameters shared by every buffer factory. Strategies ignore
/// the fields they do not use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferSpec {
    pub capacity: usize,
    pub n_sub: usize,
    pub beta_mtr: f64,
    pub seed: u64,
}

pub type BufferFactory = fn(&BufferSpec) -> Result<Box<dyn ReplayStrategy>>;

/// Name → factory table for replay strategies.
#[derive(Clone, Default)]
pub struct BufferRegistry {
    factories: BTreeMap<String, BufferFactory>,
}

impl BufferRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `fifo`, `reservoir`, `half` and `mtr`.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register("fifo", |s| {
            Ok(Box::new(FifoBuffer::<Experience>::new(s.capacity, s.seed)?))
        });
        r.register("reservoir", |s| {
            Ok(Box::new(ReservoirBuffer::<Experience>::new(
                s.capacity, s.seed,
            )?))
        });
        r.register("half", |s| {
            Ok(Box::new(HalfHalfBuffer::<Experience>::new(
                s.capacity, s.seed,
            )?))
        });
        r.register("mtr", |s| {
            Ok(Box::new(MtrBuffer::<Experience>::new(
                s.capacity, s.n_sub, s.beta_mtr, s.seed,
            )?))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: BufferFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn create(&self, name: &str, spec: &BufferSpec) -> Result<Box<dyn ReplayStrategy>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "buffer",
                name: name.to_string(),
                known: self.names().join(", "),
            })?;
        factory(spec)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_list_the_known_ones() {
        let r = BufferRegistry::with_builtins();
        let spec = BufferSpec {
            capacity: 10,
            n_sub: 2,
            beta_mtr: 0.5,
            seed: 0,
        };
        let err = r.create("lifo", &spec).err().unwrap();
        assert!(
            err.to_string().contains("fifo, half, mtr, reservoir"),
            "{err}"
        );
        for name in r.names() {
            assert_eq!(r.create(name, &spec).unwrap().kind(), name);
        }
    }
}
