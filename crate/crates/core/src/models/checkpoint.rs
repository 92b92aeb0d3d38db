//! `CVCK` checkpoint files.
//!
//! Layout (little-endian): magic `CVCK`, u16 version, u32 byte length of a
//! UTF-8 `key=value` config block, the block, u32 record count, then per
//! record a u16 name length, the UTF-8 name and a `.cvt` payload (dtype,
//! ndim, dims, f32 data) without the `.cvt` magic.

use std::fs;
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::io::{decode_from, encode_into, Cursor};
use crate::tensor::{AnyTensor, Real};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CVCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Config plus named tensors, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub config: KeyValues,
    pub records: Vec<(String, AnyTensor<T>)>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(config: KeyValues) -> Self {
        Self { config, records: Vec::new() }
    }

    /// Appends every entry of `store` as `{prefix}{name}`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore<T>) {
        for p in store.iter() {
            self.records.push((format!("{prefix}{}", p.name), p.value.clone()));
        }
    }

    /// Fills `store` from the `{prefix}*` records. Every store entry must be
    /// present exactly once with a matching kind and shape.
    pub fn restore_store(&self, prefix: &str, store: &mut ParamStore<T>) -> Result<()> {
        let mut seen = vec![false; store.len()];
        for (name, value) in &self.records {
            let Some(local) = name.strip_prefix(prefix) else { continue };
            let id = store.find(local).ok_or_else(|| Error::Format(format!("checkpoint has unknown tensor {name}")))?;
            if std::mem::replace(&mut seen[id.index()], true) {
                return Err(Error::Format(format!("checkpoint repeats tensor {name}")));
            }
            store.set(local, value.clone())?;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            let missing = &store.iter().nth(i).expect("index in range").name;
            return Err(Error::Format(format!("checkpoint lacks tensor {prefix}{missing}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AnyTensor<T>> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn save_checkpoint<T: Real>(ck: &Checkpoint<T>) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let text = ck.config.to_text();
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(ck.records.len() as u32).to_le_bytes());
    for (name, t) in &ck.records {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        encode_into(t, &mut out);
    }
    out
}

pub fn load_checkpoint<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a CVCK checkpoint".into()));
    }
    let version = cur.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = cur.u32()? as usize;
    let text = std::str::from_utf8(cur.take(len)?).map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let config = KeyValues::parse(text)?;
    let count = cur.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(n)?).map_err(|_| Error::Format("record name is not UTF-8".into()))?.to_string();
        records.push((name, decode_from(&mut cur)?));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint records".into()));
    }
    Ok(Checkpoint { config, records })
}

pub fn write_checkpoint<T: Real>(path: impl AsRef<Path>, ck: &Checkpoint<T>) -> Result<()> {
    let path = path.as_ref();
    // Write then rename so an interrupted run never leaves a torn file.
    let tmp = path.with_extension("cvck.tmp");
    fs::write(&tmp, save_checkpoint(ck))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    load_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stores() -> (ParamStore<f32>, ParamStore<f32>, KeyValues) {
        let mut kv = KeyValues::new();
        let (gc, dc) = (GeneratorConfig { depth: 2, channels: 4, ..Default::default() }, DiscriminatorConfig::default());
        gc.write_kv(&mut kv);
        dc.write_kv(&mut kv);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mut g, mut d) = (ParamStore::new(), ParamStore::new());
        Generator::new(&mut g, &gc, &mut rng).unwrap();
        Discriminator::new(&mut d, &dc, &mut rng).unwrap();
        (g, d, kv)
    }

    #[test]
    fn round_trip_is_exact_in_f32() {
        let (g, d, kv) = stores();
        let mut ck = Checkpoint::new(kv.clone());
        ck.push_store("gen/", &g);
        ck.push_store("disc/", &d);
        let bytes = save_checkpoint(&ck);
        assert_eq!(&bytes[..4], b"CVCK");
        let back = load_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.records.len(), g.len() + d.len());

        let (mut g2, _, _) = stores();
        for id in g2.ids().collect::<Vec<_>>() {
            let z = g2.get(id).zeros_like();
            *g2.get_mut(id) = z;
        }
        back.restore_store("gen/", &mut g2).unwrap();
        for (a, b) in g.iter().zip(g2.iter()) {
            assert_eq!(a.value, b.value, "{}", a.name);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (g, _, kv) = stores();
        let mut ck = Checkpoint::new(kv);
        ck.push_store("gen/", &g);
        let bytes = save_checkpoint(&ck);
        assert!(load_checkpoint::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(load_checkpoint::<f32>(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(load_checkpoint::<f32>(&extra).is_err());

        let mut partial = ck.clone();
        partial.records.pop();
        let (mut g2, _, _) = stores();
        assert!(partial.restore_store("gen/", &mut g2).is_err());
        let mut dup = ck.clone();
        dup.records.push(ck.records[0].clone());
        assert!(dup.restore_store("gen/", &mut g2).is_err());
    }
}
