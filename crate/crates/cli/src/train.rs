use std::fs::{self, File};
use std::path::{Path, PathBuf};

use streetshift_core::dataset::ImageBuffer;
use streetshift_core::geo::read_domain_manifest;
use streetshift_core::model::{
    write_trace, Checkpoint, Lambdas, ModelConfig, ModelError, TraceRow, TrainSettings, Trainer,
    TrainingSet, UnitModel,
};

use crate::config::{check, required, RunConfig};
use crate::fail::Failure;
use crate::io::{create_dir, load_dir, load_refs};
use crate::synth::DEFAULT_IMAGE_SIZE;

pub const DEFAULT_STEPS: u64 = 10_000;
pub const DEFAULT_CHECKPOINT_EVERY: u64 = 1_000;
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRACE_FILE: &str = "trace.csv";

fn domains(cfg: &RunConfig, size: u32) -> Result<(Vec<ImageBuffer>, Vec<ImageBuffer>), Failure> {
    let strip = |v: Vec<(_, ImageBuffer)>| v.into_iter().map(|(_, img)| img).collect::<Vec<_>>();
    let (a, b) = match (&cfg.manifest, &cfg.domain_a, &cfg.domain_b) {
        (Some(m), None, None) => {
            let file = File::open(m).map_err(|e| Failure::usage(format!("{}: {e}", m.display())))?;
            let (best, worst) = read_domain_manifest(file)
                .map_err(|e| Failure::usage(format!("{}: {e}", m.display())))?;
            let dir = m.parent().unwrap_or(Path::new("."));
            (
                strip(load_refs(dir, best, Some(size))?),
                strip(load_refs(dir, worst, Some(size))?),
            )
        }
        (None, Some(a), Some(b)) => {
            let min = cfg.min_bytes.unwrap_or(0);
            (strip(load_dir(a, min, Some(size))?), strip(load_dir(b, min, Some(size))?))
        }
        _ => {
            return Err(Failure::usage(
                "give either --manifest or both --domain-a and --domain-b",
            ))
        }
    };
    check(!a.is_empty() && !b.is_empty(), || {
        format!("both domains need images (A has {}, B has {})", a.len(), b.len())
    })?;
    Ok((a, b))
}

fn fresh_trainer(cfg: &RunConfig) -> Result<Trainer, Failure> {
    let defaults = Lambdas::default();
    let lambdas = Lambdas {
        gan: cfg.lambda0.unwrap_or(defaults.gan),
        kl: cfg.lambda1.unwrap_or(defaults.kl),
        rec: cfg.lambda2.unwrap_or(defaults.rec),
        cc_kl: cfg.lambda3.unwrap_or(defaults.cc_kl),
        cc_rec: cfg.lambda4.unwrap_or(defaults.cc_rec),
    };
    let seed = cfg.seed.unwrap_or(0);
    let model_cfg = ModelConfig {
        image_size: cfg.image_size.unwrap_or(DEFAULT_IMAGE_SIZE),
        seed,
        lambdas,
        ..ModelConfig::default()
    };
    let model = UnitModel::build(&model_cfg).map_err(|e| Failure::usage(e.to_string()))?;
    Trainer::new(model, TrainSettings { seed, ..TrainSettings::default() })
        .map_err(|e| Failure::usage(e.to_string()))
}

/// Trace lines of an earlier run in `path` up to and including `step`.
fn earlier_trace(path: &Path, step: u64) -> Vec<String> {
    let Ok(text) = fs::read_to_string(path) else {
        return Vec::new();
    };
    text.lines()
        .skip(1)
        .take_while(|l| {
            l.split(',')
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|s| s <= step)
        })
        .map(str::to_string)
        .collect()
}

fn render_trace(earlier: &[String], rows: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, rows).expect("writing to memory");
    let text = String::from_utf8(buf).expect("csv is utf-8");
    let (header, body) = text.split_once('\n').unwrap_or((&text, ""));
    let mut out = format!("{header}\n");
    for line in earlier {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(body);
    out
}

/// Writes through a temporary file so an interrupted run never leaves a torn file.
fn replace(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn save(trainer: &Trainer, out: &Path, earlier: &[String], rows: &[TraceRow]) -> Result<(), Failure> {
    let bytes = trainer
        .checkpoint()
        .to_bytes()
        .map_err(|e| Failure::checkpoint(e.to_string()))?;
    replace(&out.join(CHECKPOINT_FILE), &bytes)?;
    replace(&out.join(TRACE_FILE), render_trace(earlier, rows).as_bytes())
}

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let out: PathBuf = required(&cfg.out, "out")?.clone();
    let steps = cfg.steps.unwrap_or(DEFAULT_STEPS);
    let every = cfg.checkpoint_every.unwrap_or(DEFAULT_CHECKPOINT_EVERY);
    let trace_every = cfg.trace_every.unwrap_or(1);
    check(steps > 0, || "--steps must be at least 1".into())?;
    check(every > 0, || "--checkpoint-every must be at least 1".into())?;
    check(trace_every > 0, || "--trace-every must be at least 1".into())?;

    let mut trainer = match &cfg.resume {
        Some(path) => Checkpoint::load(path)
            .and_then(|c| c.trainer())
            .map_err(|e| Failure::checkpoint(format!("{}: {e}", path.display())))?,
        None => fresh_trainer(cfg)?,
    };
    let size = trainer.model().config.image_size;
    let (a, b) = domains(cfg, size)?;
    let set_a = TrainingSet::new(trainer.model(), &a).map_err(|e| Failure::usage(e.to_string()))?;
    let set_b = TrainingSet::new(trainer.model(), &b).map_err(|e| Failure::usage(e.to_string()))?;
    create_dir(&out)?;

    let start = trainer.step_count();
    let earlier = if cfg.resume.is_some() {
        earlier_trace(&out.join(TRACE_FILE), start)
    } else {
        Vec::new()
    };
    if start >= steps {
        eprintln!("note: checkpoint is already at step {start}; nothing to train");
    }
    let mut rows = Vec::new();
    while trainer.step_count() < steps {
        let row = trainer.step(&set_a, &set_b).map_err(|e| match e {
            ModelError::NonFinite { step, term } => {
                Failure::training(format!("training diverged: non-finite {term} at step {step}"))
            }
            other => Failure::training(other.to_string()),
        })?;
        if row.step % trace_every == 0 {
            rows.push(row);
        }
        if row.step % every == 0 && row.step < steps {
            save(&trainer, &out, &earlier, &rows)?;
            println!(
                "step {}/{steps}: generator {:.3}, discriminator {:.3}",
                row.step, row.gen.total, row.disc
            );
        }
    }
    save(&trainer, &out, &earlier, &rows)?;

    let model = &trainer.model().config;
    let [l0, l1, l2, l3, l4] = model.lambdas.to_array();
    RunConfig {
        domain_a: cfg.domain_a.clone(),
        domain_b: cfg.domain_b.clone(),
        manifest: cfg.manifest.clone(),
        min_bytes: cfg.min_bytes,
        out: Some(out.clone()),
        steps: Some(steps),
        seed: Some(trainer.settings().seed),
        image_size: Some(model.image_size),
        lambda0: Some(l0),
        lambda1: Some(l1),
        lambda2: Some(l2),
        lambda3: Some(l3),
        lambda4: Some(l4),
        checkpoint_every: Some(every),
        trace_every: Some(trace_every),
        resume: cfg.resume.clone(),
        ..RunConfig::default()
    }
    .write(&out.join("run.toml"))?;
    println!(
        "trained to step {} on {} + {} images; wrote {}",
        trainer.step_count(),
        a.len(),
        b.len(),
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}
