//! Flat versioned checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! b"MAPNCKPT" | u32 version | u64 meta_len | meta (UTF-8 JSON)
//! u64 record_count
//! per record: u32 len | name | u32 len | tag | u32 rank | rank x u64 dims | numel x f64
//! ```
//!
//! Tags are `shared`, `specific:<label>`, or auxiliary tags such as
//! `adam_m` / `adam_v` for optimizer state.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MAPNCKPT";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub tag: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub records: Vec<Record>,
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r).map_err(truncated)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("non UTF-8 string".into()))
}

fn truncated(e: io::Error) -> Error {
    Error::Checkpoint(format!("truncated checkpoint: {e}"))
}

impl Checkpoint {
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let meta = serde_json::to_vec(&self.meta)?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            write_str(w, &r.name)?;
            write_str(w, &r.tag)?;
            w.write_all(&(r.shape.len() as u32).to_le_bytes())?;
            for &d in &r.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &r.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = read_u32(r).map_err(truncated)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let meta_len = read_u64(r).map_err(truncated)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta).map_err(truncated)?;
        let meta = serde_json::from_slice(&meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
        let n = read_u64(r).map_err(truncated)? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = read_str(r)?;
            let tag = read_str(r)?;
            let rank = read_u32(r).map_err(truncated)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(r).map(|d| d as usize))
                .collect::<io::Result<Vec<_>>>()
                .map_err(truncated)?;
            let numel: usize = shape.iter().product();
            let mut bytes = vec![0u8; numel * 8];
            r.read_exact(&mut bytes).map_err(truncated)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            records.push(Record { name, tag, shape, data });
        }
        Ok(Self { meta, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub fn with_tag<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.tag == tag)
    }
}
