use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::phantom::RawImage;
use super::preprocess::preprocess;
use super::Split;
use crate::error::{Error, Result};
use crate::kspace::ComplexImage;

/// Writes `values` as grayscale, mapping `[lo, hi]` linearly onto the full
/// code range and clamping outside it. The format follows the extension
/// (`.png` or `.pgm`).
pub fn write_grayscale(path: &Path, height: usize, width: usize, values: &[f64], lo: f64, hi: f64, sixteen_bit: bool) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::shape("write_grayscale", format!("{} values for {height}x{width}", values.len())));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let unit = |v: f64| ((v - lo) / span).clamp(0.0, 1.0);
    let (w, h) = (width as u32, height as u32);
    let result = if sixteen_bit {
        let px: Vec<u16> = values.iter().map(|&v| (unit(v) * 65535.0).round() as u16).collect();
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, px).expect("buffer sized above").save(path)
    } else {
        let px: Vec<u8> = values.iter().map(|&v| (unit(v) * 255.0).round() as u8).collect();
        GrayImage::from_raw(w, h, px).expect("buffer sized above").save(path)
    };
    result.map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Reads an 8- or 16-bit grayscale file as values in [0, 1].
pub fn read_grayscale(path: &Path) -> Result<RawImage> {
    let img = image::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let gray = img.into_luma16();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect();
    RawImage::new(h as usize, w as usize, data)
}

#[derive(Debug)]
pub struct IngestReport {
    /// Preprocessed slices with their source files, in file name order.
    pub slices: Vec<(PathBuf, ComplexImage)>,
    pub errors: Vec<(PathBuf, String)>,
}

/// Reads every `.png`/`.pgm` file in `dir` through [`preprocess`]. Files that
/// fail are reported and skipped.
pub fn ingest_external(dir: &Path, height: usize, width: usize) -> Result<IngestReport> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        })
        .collect();
    files.sort();
    let mut report = IngestReport {
        slices: Vec::new(),
        errors: Vec::new(),
    };
    for path in files {
        match read_grayscale(&path).and_then(|raw| preprocess(&raw, height, width)) {
            Ok(img) => report.slices.push((path, img)),
            Err(e) => report.errors.push((path, e.to_string())),
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    pub label: String,
    pub split: Split,
    pub index: usize,
    /// Generator seed for synthetic slices.
    pub seed: Option<u64>,
    /// Original file for ingested slices.
    pub source: Option<String>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub height: usize,
    pub width: usize,
    pub entries: Vec<CorpusEntry>,
}

pub const MANIFEST: &str = "manifest.json";

fn encode_slice(img: &ComplexImage) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 + 8 * img.re.len());
    bytes.extend_from_slice(&(img.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&(img.width() as u32).to_le_bytes());
    for v in &img.re {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn decode_slice(bytes: &[u8]) -> Result<ComplexImage> {
    if bytes.len() < 8 {
        return Err(Error::Data("slice file shorter than its header".into()));
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() != 8 * h * w {
        return Err(Error::Data(format!("slice file holds {} bytes for {h}x{w}", body.len())));
    }
    let re = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ComplexImage::from_real(h, w, re)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A directory of binary slice files plus `manifest.json`.
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Corpus {
    /// Opens `dir`, starting an empty manifest if none exists yet.
    pub fn open_or_create(dir: &Path, height: usize, width: usize) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if path.exists() {
            let c = Self::open(dir)?;
            if (c.manifest.height, c.manifest.width) != (height, width) {
                return Err(Error::Data(format!(
                    "corpus {} holds {}x{} slices, not {height}x{width}",
                    dir.display(),
                    c.manifest.height,
                    c.manifest.width
                )));
            }
            return Ok(c);
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                height,
                width,
                entries: Vec::new(),
            },
        })
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Writes one slice file and records it, replacing any entry with the
    /// same label, split and index.
    pub fn add(&mut self, img: &ComplexImage, label: &str, split: Split, index: usize, seed: Option<u64>, source: Option<String>) -> Result<()> {
        if img.dims() != (self.manifest.height, self.manifest.width) {
            return Err(Error::Data(format!(
                "{label} slice {index} is {}x{}, corpus is {}x{}",
                img.height(),
                img.width(),
                self.manifest.height,
                self.manifest.width
            )));
        }
        let file = format!("{label}_{split}_{index:05}.bin");
        let bytes = encode_slice(img);
        let path = self.dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        self.manifest
            .entries
            .retain(|e| !(e.label == label && e.split == split && e.index == index));
        self.manifest.entries.push(CorpusEntry {
            file,
            label: label.to_string(),
            split,
            index,
            seed,
            source,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn save_manifest(&self) -> Result<()> {
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads the slices of one label and split, ordered by index, verifying
    /// checksums.
    pub fn load(&self, label: &str, split: Split) -> Result<Vec<ComplexImage>> {
        let mut entries: Vec<&CorpusEntry> = self
            .manifest
            .entries
            .iter()
            .filter(|e| e.label == label && e.split == split)
            .collect();
        entries.sort_by_key(|e| e.index);
        entries
            .into_iter()
            .map(|e| {
                let path = self.dir.join(&e.file);
                let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
                if sha256_hex(&bytes) != e.sha256 {
                    return Err(Error::Data(format!("{}: checksum mismatch", path.display())));
                }
                decode_slice(&bytes)
            })
            .collect()
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.manifest.entries.iter().map(|e| e.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }
}
