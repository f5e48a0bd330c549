//! `MILDS-1` dataset directories.
//!
//! ```text
//! <dir>/manifest.json   version, dim, generator echo, bag records, file checksums
//! <dir>/<split>.bin     per bag: n*d little-endian f32 (row-major), then n label bytes
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::bag::{bag_label, Bag};
use super::generate::{Dataset, GenSpec, SplitName};
use crate::ad::NumericArray;
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "MILDS-1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BagRecord {
    pub bag_id: u32,
    pub bag_label: u8,
    pub n: usize,
    pub file: String,
    /// Byte offset of the bag's first feature value within `file`.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub bytes: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: String,
    pub dim: usize,
    pub spec: Option<GenSpec>,
    pub bag_counts: IndexMap<String, usize>,
    pub splits: IndexMap<String, Vec<BagRecord>>,
    pub files: IndexMap<String, FileRecord>,
}

fn split_file(name: SplitName) -> String {
    format!("{}.bin", name.as_str())
}

fn encode_bag(bag: &Bag, out: &mut Vec<u8>) {
    for v in bag.features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&bag.instance_labels);
}

/// Writes `dataset` under `dir`, creating the directory if needed.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    for bag in dataset.bags() {
        bag.validate()?;
        if bag.dim() != dataset.dim {
            return Err(Error::DimensionMismatch {
                what: "dataset",
                expected: dataset.dim,
                found: bag.dim(),
            });
        }
    }
    fs::create_dir_all(dir)?;

    let mut bag_counts = IndexMap::new();
    let mut splits = IndexMap::new();
    let mut files = IndexMap::new();
    for name in SplitName::ALL {
        let file = split_file(name);
        let bags = dataset.split(name);
        let mut bytes = Vec::new();
        let mut records = Vec::with_capacity(bags.len());
        for bag in bags {
            records.push(BagRecord {
                bag_id: bag.id,
                bag_label: bag.label,
                n: bag.len(),
                file: file.clone(),
                offset: bytes.len() as u64,
            });
            encode_bag(bag, &mut bytes);
        }
        fs::write(dir.join(&file), &bytes)?;
        files.insert(
            file,
            FileRecord {
                bytes: bytes.len() as u64,
                crc32: crc32fast::hash(&bytes),
            },
        );
        bag_counts.insert(name.as_str().to_string(), bags.len());
        splits.insert(name.as_str().to_string(), records);
    }

    let manifest = DatasetManifest {
        version: DATASET_FORMAT.to_string(),
        dim: dataset.dim,
        spec: dataset.spec.clone(),
        bag_counts,
        splits,
        files,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn read_existing(path: PathBuf) -> Result<Vec<u8>> {
    match fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile { path }),
        Err(e) => Err(e.into()),
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = read_existing(path.clone())?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e.to_string()))?;
    if manifest.version != DATASET_FORMAT {
        return Err(Error::VersionMismatch {
            expected: DATASET_FORMAT.into(),
            found: manifest.version,
        });
    }
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let d = manifest.dim;
    if d == 0 {
        return Err(corrupt(&dir.join(MANIFEST_FILE), "dimension is 0"));
    }

    let mut blobs: IndexMap<&str, Vec<u8>> = IndexMap::new();
    for (file, rec) in &manifest.files {
        let path = dir.join(file);
        let bytes = read_existing(path.clone())?;
        if bytes.len() as u64 != rec.bytes {
            return Err(corrupt(
                &path,
                format!("expected {} bytes, found {} (truncated?)", rec.bytes, bytes.len()),
            ));
        }
        let crc = crc32fast::hash(&bytes);
        if crc != rec.crc32 {
            return Err(corrupt(
                &path,
                format!("checksum mismatch: manifest {:08x}, file {crc:08x}", rec.crc32),
            ));
        }
        blobs.insert(file.as_str(), bytes);
    }

    let mut out: IndexMap<SplitName, Vec<Bag>> = IndexMap::new();
    for name in SplitName::ALL {
        let records = manifest.splits.get(name.as_str()).map_or(&[][..], Vec::as_slice);
        let expected = manifest.bag_counts.get(name.as_str()).copied().unwrap_or(0);
        if records.len() != expected {
            return Err(corrupt(
                &dir.join(MANIFEST_FILE),
                format!("split {} lists {} bags, count says {expected}", name.as_str(), records.len()),
            ));
        }
        let mut bags = Vec::with_capacity(records.len());
        for rec in records {
            let path = dir.join(&rec.file);
            let Some(blob) = blobs.get(rec.file.as_str()) else {
                return Err(Error::MissingFile { path });
            };
            if rec.n == 0 {
                return Err(corrupt(&path, format!("bag {} has no instances", rec.bag_id)));
            }
            let start = rec.offset as usize;
            let feat_bytes = rec.n * d * 4;
            let end = start + feat_bytes + rec.n;
            if end > blob.len() {
                return Err(corrupt(&path, format!("bag {} runs past end of file", rec.bag_id)));
            }
            let features: Vec<f32> = blob[start..start + feat_bytes]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let labels = blob[start + feat_bytes..end].to_vec();
            let derived = bag_label(&labels).map_err(|e| corrupt(&path, e.to_string()))?;
            if derived != rec.bag_label {
                return Err(corrupt(
                    &path,
                    format!("bag {} label {} contradicts its instances", rec.bag_id, rec.bag_label),
                ));
            }
            bags.push(Bag {
                id: rec.bag_id,
                label: rec.bag_label,
                features: NumericArray::matrix(rec.n, d, features)?,
                instance_labels: labels,
            });
        }
        out.insert(name, bags);
    }

    Ok(Dataset {
        dim: d,
        spec: manifest.spec,
        train: out.shift_remove(&SplitName::Train).unwrap_or_default(),
        valid: out.shift_remove(&SplitName::Valid).unwrap_or_default(),
        test: out.shift_remove(&SplitName::Test).unwrap_or_default(),
    })
}
