use rayon::prelude::*;

use streetshift_core::analysis::{diff_image, DEFAULT_FUZZ};
use streetshift_core::dataset::ImageBuffer;
use streetshift_core::model::{load_checkpoint, Direction};

use crate::config::{check, required, RunConfig};
use crate::fail::Failure;
use crate::io::{create_dir, load_dir, write_png};

fn parse_direction(s: &str) -> Result<Direction, Failure> {
    match s {
        "a-to-b" => Ok(Direction::AToB),
        "b-to-a" => Ok(Direction::BToA),
        other => Err(Failure::usage(format!("--direction must be a-to-b or b-to-a, got {other:?}"))),
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let checkpoint = required(&cfg.checkpoint, "checkpoint")?;
    let input = required(&cfg.input, "input")?;
    let out = required(&cfg.out, "out")?;
    let direction_name = cfg.direction.clone().unwrap_or_else(|| "a-to-b".into());
    let direction = parse_direction(&direction_name)?;
    let fuzz = cfg.fuzz.unwrap_or(DEFAULT_FUZZ);
    let triptych = cfg.triptych.unwrap_or(false);
    check((0.0..=1.0).contains(&fuzz), || "--fuzz must lie in [0, 1]".into())?;

    let model = load_checkpoint(checkpoint)
        .map_err(|e| Failure::checkpoint(format!("{}: {e}", checkpoint.display())))?;
    let images = load_dir(input, 0, Some(model.config.image_size))?;
    check(!images.is_empty(), || format!("no images in {}", input.display()))?;

    let results: Vec<(ImageBuffer, ImageBuffer)> = images
        .par_iter()
        .map(|(_, img)| {
            let t = model
                .translate(img, direction)
                .map_err(|e| Failure::usage(e.to_string()))?;
            let d = diff_image(img, &t, fuzz).map_err(|e| Failure::usage(e.to_string()))?;
            Ok((t, d.render()))
        })
        .collect::<Result<_, Failure>>()?;

    let mut dirs = vec!["original", "translated", "diff"];
    if triptych {
        dirs.push("triptych");
    }
    for d in &dirs {
        create_dir(&out.join(d))?;
    }
    for ((r, original), (translated, diff)) in images.iter().zip(&results) {
        let name = format!("{}.png", r.id);
        write_png(original, &out.join("original").join(&name))?;
        write_png(translated, &out.join("translated").join(&name))?;
        write_png(diff, &out.join("diff").join(&name))?;
        if triptych {
            let strip = ImageBuffer::hconcat(&[original, translated, diff])
                .map_err(|e| Failure::usage(e.to_string()))?;
            write_png(&strip, &out.join("triptych").join(&name))?;
        }
    }
    RunConfig {
        checkpoint: Some(checkpoint.clone()),
        input: Some(input.clone()),
        out: Some(out.clone()),
        direction: Some(direction_name),
        fuzz: Some(fuzz),
        triptych: Some(triptych),
        ..RunConfig::default()
    }
    .write(&out.join("run.toml"))?;
    println!("translated {} image(s) into {}", images.len(), out.display());
    Ok(())
}
