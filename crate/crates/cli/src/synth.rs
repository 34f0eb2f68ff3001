use std::fs::File;

use streetshift_core::dataset::{derived_seed, synth_domain, SceneDistribution};
use streetshift_core::geo::{write_image_index, ImageRef};
use streetshift_core::model::SUPPORTED_SIZES;

use crate::config::{check, required, RunConfig};
use crate::fail::Failure;
use crate::io::{create_dir, write_png};

pub const DEFAULT_PER_DOMAIN: usize = 200;
pub const DEFAULT_IMAGE_SIZE: u32 = 32;

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let out = required(&cfg.out, "out")?;
    let per_domain = cfg.per_domain.unwrap_or(DEFAULT_PER_DOMAIN);
    let seed = cfg.seed.unwrap_or(0);
    let size = cfg.image_size.unwrap_or(DEFAULT_IMAGE_SIZE);
    let overlap = cfg.overlap.unwrap_or(1.0);
    check(per_domain > 0, || "--per-domain must be at least 1".into())?;
    check(SUPPORTED_SIZES.contains(&size), || {
        format!("--image-size must be one of {SUPPORTED_SIZES:?}")
    })?;
    check((0.0..=1.0).contains(&overlap), || "--overlap must lie in [0, 1]".into())?;

    let green = SceneDistribution::green();
    let b = green.blend(&SceneDistribution::grey(), overlap);
    for (i, (name, dist)) in [("domain_a", &green), ("domain_b", &b)].into_iter().enumerate() {
        let dir = out.join(name);
        create_dir(&dir)?;
        let images = synth_domain(per_domain, dist, derived_seed(seed, i as u64), size)
            .map_err(|e| Failure::usage(e.to_string()))?;
        let mut refs = Vec::with_capacity(images.len());
        for (j, img) in images.iter().enumerate() {
            let id = format!("{}{j:05}", &name[7..]);
            let path = format!("{id}.png");
            write_png(img, &dir.join(&path))?;
            refs.push(ImageRef {
                id,
                lat: 0.0,
                lon: 0.0,
                heading: 0,
                path,
            });
        }
        let index = dir.join("index.csv");
        let file = File::create(&index)
            .map_err(|e| Failure::usage(format!("{}: {e}", index.display())))?;
        write_image_index(file, &refs).map_err(|e| Failure::usage(e.to_string()))?;
        println!("{}: {} images", dir.display(), refs.len());
    }
    RunConfig {
        out: Some(out.clone()),
        per_domain: Some(per_domain),
        seed: Some(seed),
        image_size: Some(size),
        overlap: Some(overlap),
        ..RunConfig::default()
    }
    .write(&out.join("run.toml"))
}
