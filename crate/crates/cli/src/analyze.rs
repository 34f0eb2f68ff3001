use std::collections::HashMap;

use streetshift_core::analysis::{
    amplified_change_image, batch_metrics, channel_stats, render_report, write_metric_dump,
    ChannelStatsRow, MetricRow, ReportFormat, TranslationReport, DEFAULT_FUZZ, DEFAULT_GAIN,
};
use streetshift_core::dataset::{average_image, ImageBuffer};

use crate::config::{check, required, RunConfig};
use crate::fail::Failure;
use crate::io::{create_dir, load_dir, write_png, write_text};

pub fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let original_dir = required(&cfg.original, "original")?;
    let translated_dir = required(&cfg.translated, "translated")?;
    let out = required(&cfg.out, "out")?;
    let fuzz = cfg.fuzz.unwrap_or(DEFAULT_FUZZ);
    let gain = cfg.gain.unwrap_or(DEFAULT_GAIN);
    let format_name = cfg.format.clone().unwrap_or_else(|| "markdown".into());
    let format: ReportFormat = format_name
        .parse()
        .map_err(|_| Failure::usage(format!("--format must be csv or markdown, got {format_name:?}")))?;
    let subject = cfg.subject.clone().unwrap_or_else(|| "Translation".into());
    let label = cfg.label.clone().unwrap_or_else(|| "A to B".into());
    check((0.0..=1.0).contains(&fuzz), || "--fuzz must lie in [0, 1]".into())?;
    check(gain > 0.0 && gain.is_finite(), || "--gain must be positive".into())?;

    let originals = load_dir(original_dir, 0, None)?;
    let mut translated: HashMap<String, ImageBuffer> = load_dir(translated_dir, 0, None)?
        .into_iter()
        .map(|(r, img)| (r.id, img))
        .collect();
    let mut pairs = Vec::new();
    for (r, img) in originals {
        match translated.remove(&r.id) {
            Some(t) => pairs.push((img, t)),
            None => eprintln!("warning: {} has no translated counterpart", r.id),
        }
    }
    let mut leftover: Vec<&String> = translated.keys().collect();
    leftover.sort();
    for id in leftover {
        eprintln!("warning: translated {id} has no original");
    }
    check(!pairs.is_empty(), || "no original/translated pairs to analyze".into())?;

    let metrics = batch_metrics(&pairs, fuzz).map_err(|e| Failure::usage(e.to_string()))?;
    let avg = |pick: fn(&(ImageBuffer, ImageBuffer)) -> &ImageBuffer| {
        average_image(pairs.iter().map(pick)).map_err(|e| Failure::usage(e.to_string()))
    };
    let avg_original = avg(|p| &p.0)?;
    let avg_translated = avg(|p| &p.1)?;
    let stats = channel_stats(&avg_original, &avg_translated).map_err(|e| Failure::usage(e.to_string()))?;
    let amplified = amplified_change_image(&avg_original, &avg_translated, gain)
        .map_err(|e| Failure::usage(e.to_string()))?;

    let rows = vec![MetricRow {
        subject: subject.clone(),
        direction: label.clone(),
        metrics,
    }];
    let report = TranslationReport {
        metrics: rows.clone(),
        channels: vec![ChannelStatsRow {
            label: format!("{subject}, {label}"),
            stats,
        }],
    };
    let text = render_report(&report, format);

    create_dir(out)?;
    write_text(&out.join("metrics.csv"), &write_metric_dump(&rows))?;
    let report_name = match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Markdown => "report.md",
    };
    write_text(&out.join(report_name), &text)?;
    write_png(&avg_original.to_image(), &out.join("average_original.png"))?;
    write_png(&avg_translated.to_image(), &out.join("average_translated.png"))?;
    for (img, channel) in amplified.iter().zip(["red", "green", "blue"]) {
        write_png(img, &out.join(format!("amplified_{channel}.png")))?;
    }
    RunConfig {
        original: Some(original_dir.clone()),
        translated: Some(translated_dir.clone()),
        out: Some(out.clone()),
        fuzz: Some(fuzz),
        gain: Some(gain),
        format: Some(format_name),
        subject: Some(subject),
        label: Some(label),
        ..RunConfig::default()
    }
    .write(&out.join("run.toml"))?;
    print!("{text}");
    Ok(())
}
