//! Binary snapshot of buffer contents.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"MTRB"
//! version  u16
//! kind     u16 length + UTF-8 bytes
//! seen     u64            (reservoir insertion counter, 0 otherwise)
//! sections u32 count, then per section:
//!     records u64 count, then per record:
//!         u32 byte length + payload
//! ```
//!
//! A record payload is `insert_step u64, terminal u8, reward f64` followed by
//! the state, action and next-state vectors, each as `u32 len` + `f64` values.

use std::io::{Read, Write};

use super::Experience;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MTRB";
pub const VERSION: u16 = 1;

/// Buffer contents, one section per internal queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: String,
    pub seen: u64,
    pub sections: Vec<Vec<Experience>>,
}

impl Snapshot {
    pub(crate) fn expect_sections<const K: usize>(
        self,
        kind: &str,
    ) -> Result<[Vec<Experience>; K]> {
        if self.kind != kind {
            return Err(Error::Snapshot(format!(
                "expected {kind} snapshot, found {}",
                self.kind
            )));
        }
        let found = self.sections.len();
        self.sections.try_into().map_err(|_| {
            Error::Snapshot(format!("{kind} snapshot needs {K} sections, found {found}"))
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let kind = self.kind.as_bytes();
        let kind_len =
            u16::try_from(kind.len()).map_err(|_| Error::Snapshot("kind too long".into()))?;
        w.write_all(&kind_len.to_le_bytes())?;
        w.write_all(kind)?;
        w.write_all(&self.seen.to_le_bytes())?;
        w.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        let mut payload = Vec::new();
        for section in &self.sections {
            w.write_all(&(section.len() as u64).to_le_bytes())?;
            for exp in section {
                payload.clear();
                encode_record(exp, &mut payload);
                w.write_all(&(payload.len() as u32).to_le_bytes())?;
                w.write_all(&payload)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let kind_len = u16::from_le_bytes(read_array(r)?) as usize;
        let mut kind = vec![0u8; kind_len];
        r.read_exact(&mut kind)?;
        let kind =
            String::from_utf8(kind).map_err(|_| Error::Snapshot("kind is not UTF-8".into()))?;
        let seen = u64::from_le_bytes(read_array(r)?);
        let n_sections = u32::from_le_bytes(read_array(r)?);
        let mut sections = Vec::with_capacity(n_sections as usize);
        let mut payload = Vec::new();
        for _ in 0..n_sections {
            let n = u64::from_le_bytes(read_array(r)?);
            let mut section = Vec::new();
            for _ in 0..n {
                let len = u32::from_le_bytes(read_array(r)?) as usize;
                payload.resize(len, 0);
                r.read_exact(&mut payload)?;
                section.push(decode_record(&payload)?);
            }
            sections.push(section);
        }
        Ok(Self {
            kind,
            seen,
            sections,
        })
    }
}

fn read_array<R: Read, const K: usize>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn encode_record(exp: &Experience, out: &mut Vec<u8>) {
    out.extend_from_slice(&exp.insert_step.to_le_bytes());
    out.push(exp.terminal as u8);
    out.extend_from_slice(&exp.reward.to_le_bytes());
    for v in [&exp.state, &exp.action, &exp.next_state] {
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for x in v.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Snapshot("truncated record".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn vec(&mut self) -> Result<Vec<f64>> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        (0..len).map(|_| self.f64()).collect()
    }
}

fn decode_record(bytes: &[u8]) -> Result<Experience> {
    let mut c = Cursor { bytes };
    let insert_step = c.u64()?;
    let terminal = match c.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Snapshot(format!("bad terminal flag {other}"))),
    };
    let reward = c.f64()?;
    let state = c.vec()?;
    let action = c.vec()?;
    let next_state = c.vec()?;
    if !c.bytes.is_empty() {
        return Err(Error::Snapshot("trailing bytes in record".into()));
    }
    if state.len() != next_state.len() {
        return Err(Error::Snapshot(
            "state and next_state dimensions differ".into(),
        ));
    }
    Ok(Experience {
        state,
        action,
        reward,
        next_state,
        terminal,
        insert_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::{BufferRegistry, BufferSpec};
    use proptest::prelude::*;

    fn exp(i: u64) -> Experience {
        Experience {
            state: vec![i as f64, 0.5, -9.81],
            action: vec![0.25],
            reward: -(i as f64),
            next_state: vec![i as f64 + 1.0, 0.5, -9.81],
            terminal: i.is_multiple_of(7),
            insert_step: i,
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let snap = Snapshot {
            kind: "fifo".into(),
            seen: 0,
            sections: vec![vec![exp(1), exp(2)]],
        };
        let mut bytes = Vec::new();
        snap.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"MTRB");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Snapshot::read_from(&mut bad.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(Snapshot::read_from(&mut &truncated[..]).is_err());
    }

    #[test]
    fn every_strategy_restores_its_own_snapshot() {
        let registry = BufferRegistry::with_builtins();
        let spec = BufferSpec {
            capacity: 40,
            n_sub: 4,
            beta_mtr: 0.85,
            seed: 3,
        };
        for name in ["fifo", "reservoir", "half", "mtr"] {
            let mut buf = registry.create(name, &spec).unwrap();
            for i in 0..300 {
                buf.push(exp(i));
            }
            let snap = buf.to_snapshot();
            let mut bytes = Vec::new();
            snap.write_to(&mut bytes).unwrap();
            let decoded = Snapshot::read_from(&mut bytes.as_slice()).unwrap();
            assert_eq!(decoded, snap);
            let mut fresh = registry.create(name, &spec).unwrap();
            fresh.restore(decoded).unwrap();
            assert_eq!(fresh.len(), buf.len());
            assert_eq!(fresh.to_snapshot(), snap);
            assert_eq!(fresh.cascade_occupancies(), buf.cascade_occupancies());
        }
    }

    proptest! {
        #[test]
        fn records_round_trip(
            step in any::<u64>(),
            reward in any::<f64>().prop_filter("finite", |x| x.is_finite()),
            state in proptest::collection::vec(-1e6f64..1e6, 0..6),
            action in proptest::collection::vec(-1f64..1.0, 0..3),
            terminal in any::<bool>(),
        ) {
            let e = Experience {
                next_state: state.iter().map(|x| x * 2.0).collect(),
                state, action, reward, terminal, insert_step: step,
            };
            let mut buf = Vec::new();
            encode_record(&e, &mut buf);
            prop_assert_eq!(decode_record(&buf).unwrap(), e);
        }
    }
}
