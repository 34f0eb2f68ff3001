use std::fs;
use std::path::Path;

use streetshift_core::dataset::{ingest, resize_bilinear, ImageBuffer, Manifest};
use streetshift_core::geo::ImageRef;

use crate::fail::Failure;

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_png(img: &ImageBuffer, path: &Path) -> Result<(), Failure> {
    img.write_png(path).map_err(|e| Failure::usage(e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Reads an image and resizes it to `size`×`size` when given and needed.
pub fn read_image(path: &Path, size: Option<u32>) -> Result<ImageBuffer, Failure> {
    let img = ImageBuffer::read_png(path).map_err(|e| Failure::usage(e.to_string()))?;
    match size {
        Some(s) if img.dims() != (s, s) => {
            resize_bilinear(&img, s).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
        }
        _ => Ok(img),
    }
}

/// Usable images of a directory, ordered by id. Unreadable files are reported
/// and skipped.
pub fn load_dir(
    dir: &Path,
    min_bytes: u64,
    size: Option<u32>,
) -> Result<Vec<(ImageRef, ImageBuffer)>, Failure> {
    if !dir.is_dir() {
        return Err(Failure::usage(format!("{} is not a directory", dir.display())));
    }
    let manifest = ingest(dir, min_bytes).map_err(|e| Failure::usage(e.to_string()))?;
    for e in &manifest.errors {
        eprintln!("warning: skipping {}: {}", e.path.display(), e.message);
    }
    if manifest.excluded_count() > 0 {
        eprintln!(
            "note: {} image(s) in {} under {min_bytes} bytes excluded",
            manifest.excluded_count(),
            dir.display()
        );
    }
    load_refs(dir, manifest.images().cloned().collect(), size)
}

pub fn load_refs(
    dir: &Path,
    refs: Vec<ImageRef>,
    size: Option<u32>,
) -> Result<Vec<(ImageRef, ImageBuffer)>, Failure> {
    refs.into_iter()
        .map(|r| {
            let img = read_image(&Manifest::resolve(dir, &r), size)?;
            Ok((r, img))
        })
        .collect()
}
