use std::collections::HashMap;
use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::geo::{read_image_index, ImageRef};

use super::DatasetError;

pub const INDEX_FILE: &str = "index.csv";
const PNG_SIGNATURE: [u8; 8] = *b"\x89PNG\r\n\x1a\n";

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image: ImageRef,
    pub byte_size: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestError {
    pub path: PathBuf,
    pub message: String,
}

/// Images of one directory that pass the size filter.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Files under the size threshold.
    pub excluded: Vec<ManifestEntry>,
    pub errors: Vec<IngestError>,
    pub min_byte_size: u64,
}

impl Manifest {
    pub fn excluded_count(&self) -> usize {
        self.excluded.len()
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.entries.iter().map(|e| &e.image)
    }

    /// Resolves an entry's path against the manifest directory.
    pub fn resolve(dir: &Path, image: &ImageRef) -> PathBuf {
        let p = Path::new(&image.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            dir.join(p)
        }
    }
}

/// Scans `dir` for `*.png`, keeping files of at least `min_byte_size` bytes.
/// Coordinates come from `index.csv` in the same directory when present.
/// Entries are ordered by id (the file stem).
pub fn ingest(dir: &Path, min_byte_size: u64) -> Result<Manifest, DatasetError> {
    let index_path = dir.join(INDEX_FILE);
    let index: Option<HashMap<String, ImageRef>> = if index_path.exists() {
        let file = File::open(&index_path).map_err(|e| DatasetError::io(&index_path, e))?;
        let refs = read_image_index(file)
            .map_err(|e| DatasetError::Index(format!("{}: {e}", index_path.display())))?;
        Some(refs.into_iter().map(|r| (r.id.clone(), r)).collect())
    } else {
        None
    };

    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))? {
        let path = entry.map_err(|e| DatasetError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            files.push((stem.to_string(), path));
        }
    }
    files.sort();

    let mut manifest = Manifest {
        entries: Vec::new(),
        excluded: Vec::new(),
        errors: Vec::new(),
        min_byte_size,
    };
    for (id, path) in files {
        let record_err = |message: String| IngestError {
            path: path.clone(),
            message,
        };
        let byte_size = match check_png(&path) {
            Ok(n) => n,
            Err(message) => {
                manifest.errors.push(record_err(message));
                continue;
            }
        };
        let file_name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let image = match &index {
            Some(map) => match map.get(&id) {
                Some(r) => r.clone(),
                None => {
                    manifest
                        .errors
                        .push(record_err(format!("{id} missing from {INDEX_FILE}")));
                    continue;
                }
            },
            None => ImageRef {
                id,
                lat: 0.0,
                lon: 0.0,
                heading: 0,
                path: file_name,
            },
        };
        let entry = ManifestEntry { image, byte_size };
        if byte_size >= min_byte_size {
            manifest.entries.push(entry);
        } else {
            manifest.excluded.push(entry);
        }
    }
    Ok(manifest)
}

fn check_png(path: &Path) -> Result<u64, String> {
    let mut file = File::open(path).map_err(|e| e.to_string())?;
    let size = file.metadata().map_err(|e| e.to_string())?.len();
    let mut sig = [0u8; 8];
    file.read_exact(&mut sig)
        .map_err(|_| "too short to be a PNG".to_string())?;
    if sig != PNG_SIGNATURE {
        return Err("not a PNG file".into());
    }
    Ok(size)
}
