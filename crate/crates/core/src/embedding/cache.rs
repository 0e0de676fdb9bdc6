use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::RwLock;

use super::encoder::{EmbeddingVector, TextEncoder};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NFEMBED\0";
const VERSION: u32 = 1;

/// Wraps an encoder with an in-memory table of computed embeddings that can
/// be persisted between runs.
///
/// Layout on disk (little endian): magic, `u32` version, `u32` dimension,
/// `u32` length + UTF-8 encoder id, `u64` entry count, then per entry a
/// `u32` length + UTF-8 key followed by `dim` `f32` values. Entries are
/// written in key order so identical caches are byte-identical.
pub struct CachedEncoder<E> {
    inner: E,
    table: RwLock<HashMap<String, EmbeddingVector>>,
}

impl<E: TextEncoder> CachedEncoder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            table: RwLock::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.table.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &str) -> bool {
        self.table.read().expect("cache lock").contains_key(key)
    }

    /// Loads entries from `path`, refusing files written for a different
    /// encoder or dimension.
    pub fn load(&self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (dim, id, entries) =
            decode(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if dim != self.inner.dim() || id != self.inner.id() {
            return Err(Error::ConfigMismatch(format!(
                "embedding cache was written by `{id}` (dim {dim}), encoder is `{}` (dim {})",
                self.inner.id(),
                self.inner.dim()
            )));
        }
        let n = entries.len();
        self.table.write().expect("cache lock").extend(entries);
        Ok(n)
    }

    /// Writes the cache atomically (temporary file + rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let table = self.table.read().expect("cache lock");
        let mut keys: Vec<&String> = table.keys().collect();
        keys.sort();
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.inner.dim() as u32).to_le_bytes());
        put_str(&mut buf, &self.inner.id());
        buf.extend_from_slice(&(keys.len() as u64).to_le_bytes());
        for k in keys {
            put_str(&mut buf, k);
            for x in table[k].values() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let tmp = path.with_extension("tmp");
        let write = || -> io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| Error::io(path, e))
    }
}

impl<E: TextEncoder> TextEncoder for CachedEncoder<E> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        if let Some(v) = self.table.read().expect("cache lock").get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.encode(text)?;
        // first writer wins, so every caller observes the same vector
        let mut table = self.table.write().expect("cache lock");
        Ok(table.entry(text.to_string()).or_insert(v).clone())
    }

    fn fingerprint(&self) -> [u8; 32] {
        self.inner.fingerprint()
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

type Decoded = (usize, String, Vec<(String, EmbeddingVector)>);

fn decode(mut bytes: &[u8]) -> io::Result<Decoded> {
    fn u32_le(r: &mut &[u8]) -> io::Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn string(r: &mut &[u8]) -> io::Result<String> {
        let len = u32_le(r)? as usize;
        if len > r.len() {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated string"));
        }
        let mut b = vec![0u8; len];
        r.read_exact(&mut b)?;
        String::from_utf8(b).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
    let r = &mut bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not an embedding cache"));
    }
    let version = u32_le(r)?;
    if version != VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported cache version {version}"),
        ));
    }
    let dim = u32_le(r)? as usize;
    let id = string(r)?;
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let key = string(r)?;
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(f32::from_bits(u32_le(r)?));
        }
        entries.push((key, EmbeddingVector(values)));
    }
    if !r.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "trailing bytes"));
    }
    Ok((dim, id, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::StubEncoder;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(StubEncoder, AtomicUsize);

    impl TextEncoder for Counting {
        fn id(&self) -> String {
            self.0.id()
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn encode(&self, text: &str) -> Result<EmbeddingVector> {
            self.1.fetch_add(1, Ordering::SeqCst);
            self.0.encode(text)
        }
        fn fingerprint(&self) -> [u8; 32] {
            self.0.fingerprint()
        }
    }

    #[test]
    fn second_lookup_hits_cache() {
        let enc = CachedEncoder::new(Counting(StubEncoder::new(8, 1), AtomicUsize::new(0)));
        let a = enc.encode("bun").unwrap();
        let b = enc.encode("bun").unwrap();
        assert_eq!(a, b);
        assert_eq!(enc.inner().1.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn persisted_cache_round_trips_and_checks_encoder() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let enc = CachedEncoder::new(StubEncoder::new(12, 5));
        for t in ["bun", "lettuce", "beef patty"] {
            enc.encode(t).unwrap();
        }
        enc.save(&path).unwrap();

        let fresh = CachedEncoder::new(StubEncoder::new(12, 5));
        assert_eq!(fresh.load(&path).unwrap(), 3);
        assert_eq!(fresh.encode("lettuce").unwrap(), enc.encode("lettuce").unwrap());

        let again = dir.path().join("emb2.bin");
        fresh.save(&again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());

        let other = CachedEncoder::new(StubEncoder::new(16, 5));
        assert!(matches!(other.load(&path), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn corrupt_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, b"NFEMBED\0\x01\0\0\0").unwrap();
        let enc = CachedEncoder::new(StubEncoder::new(4, 0));
        assert!(matches!(enc.load(&path), Err(Error::Checkpoint(_))));
    }
}
