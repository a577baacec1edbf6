//! Embedding store files.
//!
//! Little-endian layout:
//!
//! ```text
//! "AMES" · version u32 (= 1) · dim u32 · record count u64
//! per record:
//!   key length u16 · key "<product_id>\x1f<kind>\x1f<index>" (UTF-8)
//!   token count u32 · has_cls u8 (0/1)
//!   (token count + has_cls) × dim × f32, CLS row last
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use amacer_core::corpus::{Product, SeqKey, SeqKind};
use amacer_core::embed::EmbeddingStore;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AMES";
pub const VERSION: u32 = 1;
const KEY_SEP: char = '\x1f';

pub fn encode_key(key: &SeqKey) -> String {
    format!("{}{KEY_SEP}{}{KEY_SEP}{}", key.product_id, key.kind.as_str(), key.index)
}

pub fn decode_key(raw: &str) -> Option<SeqKey> {
    let mut parts = raw.split(KEY_SEP);
    let (id, kind, index) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || id.is_empty() {
        return None;
    }
    let kind = SeqKind::parse(kind)?;
    let index: u32 = index.parse().ok()?;
    if kind == SeqKind::Title && index != 0 {
        return None;
    }
    Some(SeqKey { product_id: id.to_string(), kind, index })
}

/// One sequence worth of vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreRecord {
    pub key: SeqKey,
    pub tokens: Vec<f32>,
    pub cls: Option<Vec<f32>>,
}

/// Streams records to a store file.
#[derive(Debug)]
pub struct StoreWriter<W: Write> {
    out: W,
    dim: usize,
    remaining: u64,
}

impl StoreWriter<BufWriter<File>> {
    pub fn create(path: &Path, dim: usize, records: u64) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        StoreWriter::new(BufWriter::new(file), dim, records).map_err(|e| Error::io(path, e))
    }
}

impl<W: Write> StoreWriter<W> {
    pub fn new(mut out: W, dim: usize, records: u64) -> std::io::Result<Self> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(dim as u32).to_le_bytes())?;
        out.write_all(&records.to_le_bytes())?;
        Ok(StoreWriter { out, dim, remaining: records })
    }

    pub fn write(&mut self, key: &SeqKey, tokens: &[f32], cls: Option<&[f32]>) -> std::io::Result<()> {
        let invalid = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidInput, m);
        if self.remaining == 0 {
            return Err(invalid("more records than declared".into()));
        }
        if !tokens.len().is_multiple_of(self.dim) || cls.is_some_and(|c| c.len() != self.dim) {
            return Err(invalid(format!("record {key} does not match dim {}", self.dim)));
        }
        let raw_key = encode_key(key);
        let key_len = u16::try_from(raw_key.len()).map_err(|_| invalid(format!("key {key} too long")))?;
        self.out.write_all(&key_len.to_le_bytes())?;
        self.out.write_all(raw_key.as_bytes())?;
        self.out.write_all(&((tokens.len() / self.dim) as u32).to_le_bytes())?;
        self.out.write_all(&[u8::from(cls.is_some())])?;
        for v in tokens.iter().chain(cls.into_iter().flatten()) {
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.remaining -= 1;
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if self.remaining != 0 {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "fewer records than declared"));
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes a whole store in one go.
pub fn save_store(path: &Path, dim: usize, records: &[StoreRecord]) -> Result<()> {
    let mut w = StoreWriter::create(path, dim, records.len() as u64)?;
    for r in records {
        w.write(&r.key, &r.tokens, r.cls.as_deref()).map_err(|e| Error::io(path, e))?;
    }
    w.finish().map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Cursor<'a, R> {
    inner: R,
    offset: u64,
    path: &'a Path,
}

impl<R: Read> Cursor<'_, R> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format { path: self.path.to_path_buf(), offset: self.offset, message: message.into() }
    }

    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf, what)?;
        Ok(buf)
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let mut read = 0;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => return Err(self.fail(format!("truncated {what}"))),
                Ok(n) => read += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io(self.path, e)),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn at_end(&mut self) -> Result<bool> {
        let mut b = [0u8; 1];
        loop {
            match self.inner.read(&mut b) {
                Ok(n) => return Ok(n == 0),
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io(self.path, e)),
            }
        }
    }
}

/// Reads every record, checking structure as it goes. Errors carry the
/// byte offset where the problem was found.
pub fn read_records(path: &Path) -> Result<(usize, Vec<StoreRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { inner: BufReader::new(file), offset: 0, path };
    let magic = c.bytes::<4>("magic")?;
    if &magic != MAGIC {
        c.offset = 0;
        return Err(c.fail(format!("bad magic {magic:?}, expected AMES")));
    }
    let version = u32::from_le_bytes(c.bytes("version")?);
    if version != VERSION {
        c.offset -= 4;
        return Err(c.fail(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(c.bytes("dim")?) as usize;
    if dim == 0 {
        c.offset -= 4;
        return Err(c.fail("dim must be positive"));
    }
    let count = u64::from_le_bytes(c.bytes("record count")?);
    let mut records = Vec::new();
    let mut row = vec![0u8; dim * 4];
    for r in 0..count {
        let start = c.offset;
        let key_len = u16::from_le_bytes(c.bytes(&format!("record {r} key length"))?) as usize;
        let mut raw = vec![0u8; key_len];
        c.fill(&mut raw, &format!("record {r} key"))?;
        let key = std::str::from_utf8(&raw).ok().and_then(decode_key).ok_or_else(|| {
            Error::Format { path: path.to_path_buf(), offset: start + 2, message: format!("record {r} has a malformed key") }
        })?;
        let tokens = u32::from_le_bytes(c.bytes(&format!("record {r} token count"))?) as usize;
        let has_cls = c.bytes::<1>(&format!("record {r} cls flag"))?[0];
        if has_cls > 1 {
            c.offset -= 1;
            return Err(c.fail(format!("record {r} cls flag must be 0 or 1, got {has_cls}")));
        }
        if tokens == 0 {
            c.offset -= 5;
            return Err(c.fail(format!("record {r} ({key}) has no tokens")));
        }
        let mut values = Vec::with_capacity((tokens + has_cls as usize) * dim);
        for _ in 0..tokens + has_cls as usize {
            c.fill(&mut row, &format!("record {r} ({key}) vectors"))?;
            values.extend(row.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format { path: path.to_path_buf(), offset: start, message: format!("record {r} ({key}) has non-finite values") });
        }
        let cls = (has_cls == 1).then(|| values.split_off(tokens * dim));
        records.push(StoreRecord { key, tokens: values, cls });
    }
    if !c.at_end()? {
        return Err(c.fail("trailing bytes after the last record"));
    }
    Ok((dim, records))
}

/// Loads a store file into a dense [`EmbeddingStore`].
pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    let (dim, records) = read_records(path)?;
    let mut store = EmbeddingStore::new(dim)?;
    for r in records {
        let tokens: Vec<f64> = r.tokens.iter().map(|&v| f64::from(v)).collect();
        let cls: Option<Vec<f64>> = r.cls.map(|c| c.into_iter().map(f64::from).collect());
        store.insert(r.key, &tokens, cls.as_deref())?;
    }
    Ok(store)
}

/// Checks that every sequence of `products` is in the store with a matching
/// token count.
pub fn check_alignment(store: &EmbeddingStore, products: &[Product]) -> Result<()> {
    for seq in products.iter().flat_map(|p| p.sequences()) {
        let rows = store
            .sequence(&seq.key)
            .ok_or_else(|| Error::Validation(format!("embedding store has no record for {}", seq.key)))?;
        if rows.tokens.len() != seq.len() {
            return Err(Error::Validation(format!(
                "embedding store has {} token vectors for {}, products file has {} tokens",
                rows.tokens.len(),
                seq.key,
                seq.len()
            )));
        }
    }
    Ok(())
}
