use std::fs::{self, File};
use std::path::Path;

use streetshift_core::geo::{
    aggregate_by_group, build_domain_pair, load_records, read_image_index, write_domain_manifest,
    DEFAULT_FRACTION, DEFAULT_RADIUS_M,
};

use crate::config::{check, required, RunConfig};
use crate::fail::Failure;

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let records_path = required(&cfg.records, "records")?;
    let images_path = required(&cfg.images, "images")?;
    let out = required(&cfg.out, "out")?;
    let fraction = cfg.fraction.unwrap_or(DEFAULT_FRACTION);
    let radius = cfg.radius_m.unwrap_or(DEFAULT_RADIUS_M);
    check(fraction > 0.0 && fraction <= 0.5, || "--fraction must lie in (0, 0.5]".into())?;
    check(radius >= 0.0 && radius.is_finite(), || "--radius-m must be a finite non-negative number".into())?;

    let open = |p: &Path| File::open(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())));
    let loaded = load_records(open(records_path)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", records_path.display())))?;
    for e in &loaded.errors {
        eprintln!("warning: {}: skipped {e}", records_path.display());
    }
    let records = aggregate_by_group(&loaded.records);

    let mut images = read_image_index(open(images_path)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", images_path.display())))?;
    images.retain(|img| match img.validate() {
        Ok(()) => true,
        Err(msg) => {
            eprintln!("warning: skipped {msg}");
            false
        }
    });
    // Manifest paths are made absolute so they survive being read from elsewhere.
    let base = images_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let base = fs::canonicalize(base).map_err(|e| Failure::usage(format!("{}: {e}", base.display())))?;
    for img in &mut images {
        if Path::new(&img.path).is_relative() {
            img.path = base.join(&img.path).to_string_lossy().into_owned();
        }
    }

    let (pair, stats) =
        build_domain_pair(&records, &images, fraction, radius).map_err(|e| Failure::domains(e.to_string()))?;
    let file = File::create(out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    write_domain_manifest(file, &pair).map_err(|e| Failure::usage(e.to_string()))?;

    println!(
        "{} records; selected {} best and {} worst locations",
        records.len(),
        stats.selected_best,
        stats.selected_worst
    );
    println!(
        "excluded: {} best and {} worst locations without an image within {radius} m, {} contested image(s)",
        stats.unmatched_best, stats.unmatched_worst, stats.contested
    );
    println!("domain A (best): {} images, domain B (worst): {} images", pair.best.len(), pair.worst.len());
    if pair.best.is_empty() && pair.worst.is_empty() {
        eprintln!("warning: no images matched; the manifest is empty");
    }
    Ok(())
}
