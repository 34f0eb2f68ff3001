use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use streetshift_core::dataset::ImageBuffer;

fn streetshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streetshift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    v.sort();
    v
}

fn synth(dir: &Path, per_domain: usize, size: u32) {
    let out = streetshift(&[
        "synth",
        "--out",
        p(dir),
        "--per-domain",
        &per_domain.to_string(),
        "--seed",
        "7",
        "--image-size",
        &size.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

fn train(data: &Path, out: &Path, steps: u64, extra: &[&str]) -> Output {
    let steps = steps.to_string();
    let (a, b) = (data.join("domain_a"), data.join("domain_b"));
    let mut args = vec![
        "train",
        "--domain-a",
        p(&a),
        "--domain-b",
        p(&b),
        "--out",
        p(out),
        "--steps",
        &steps,
        "--image-size",
        "16",
        "--seed",
        "3",
        "--checkpoint-every",
        "4",
    ];
    args.extend_from_slice(extra);
    streetshift(&args)
}

/// Every output file except run.toml, which records the output path.
fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "run.toml" {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_two_domains_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (one, two) = (tmp.path().join("one"), tmp.path().join("two"));
    synth(&one, 6, 16);
    synth(&two, 6, 16);
    for d in ["domain_a", "domain_b"] {
        assert_eq!(files(&one.join(d), "png").len(), 6);
        assert!(one.join(d).join("index.csv").exists());
    }
    assert_eq!(dir_bytes(&one), dir_bytes(&two));
    let img = ImageBuffer::read_png(&files(&one.join("domain_a"), "png")[0]).unwrap();
    assert_eq!(img.dims(), (16, 16));
}

#[test]
fn synth_rejects_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = streetshift(&["synth", "--out", p(tmp.path()), "--per-domain", "0"]);
    assert_eq!(code(&out), 2);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = streetshift(&["synth", "--out", p(&blocker.join("sub")), "--per-domain", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot create"));
    assert_eq!(code(&streetshift(&["synth"])), 2);
    assert_eq!(code(&streetshift(&["synth", "--bogus"])), 2);
}

fn domain_fixture(dir: &Path, values: impl Fn(usize) -> f64) -> (PathBuf, PathBuf) {
    let mut records = String::from("lat,lon,outcome,value\n");
    let mut index = String::from("id,lat,lon,heading,path\n");
    for i in 0..20 {
        let lon = 144.9 + i as f64 * 0.01;
        records.push_str(&format!("-37.8,{lon},general_health,{}\n", values(i)));
        index.push_str(&format!("img{i:02},-37.8,{lon},90,img{i:02}.png\n"));
    }
    let (r, x) = (dir.join("records.csv"), dir.join("index.csv"));
    fs::write(&r, records).unwrap();
    fs::write(&x, index).unwrap();
    (r, x)
}

#[test]
fn domains_selects_both_ends() {
    let tmp = tempfile::tempdir().unwrap();
    let (records, index) = domain_fixture(tmp.path(), |i| i as f64);
    let manifest = tmp.path().join("manifest.csv");
    let out = streetshift(&[
        "domains", "--records", p(&records), "--images", p(&index), "--out", p(&manifest),
        "--fraction", "0.1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&manifest).unwrap();
    let rows: Vec<(&str, &str)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0], f[1])
        })
        .collect();
    // Lower self-rated health scores are better.
    assert_eq!(
        rows,
        [("best", "img00"), ("best", "img01"), ("worst", "img19"), ("worst", "img18")]
    );
    assert!(stdout(&out).contains("selected 2 best and 2 worst"));
}

#[test]
fn domains_reports_overlap_and_empty_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let (records, index) = domain_fixture(tmp.path(), |_| 3.0);
    let manifest = tmp.path().join("m.csv");
    let args = ["domains", "--records", p(&records), "--images", p(&index), "--out", p(&manifest)];
    let out = streetshift(&args);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("overlap"), "{}", stderr(&out));

    let (records, _) = domain_fixture(tmp.path(), |i| i as f64);
    let far = tmp.path().join("far.csv");
    fs::write(&far, "id,lat,lon,heading,path\nx,-37.9,144.9,0,x.png\n").unwrap();
    let out = streetshift(&[
        "domains", "--records", p(&records), "--images", p(&far), "--out", p(&manifest),
        "--radius-m", "0",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"));
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), 1);
}

#[test]
fn train_writes_checkpoint_and_trace_and_resumes_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, 16);

    let straight = tmp.path().join("straight");
    let out = train(&data, &straight, 10, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = fs::read_to_string(straight.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);
    assert!(trace.starts_with("step,"));

    let twenty = tmp.path().join("twenty");
    assert_eq!(code(&train(&data, &twenty, 20, &[])), 0);
    let resumed = tmp.path().join("resumed");
    assert_eq!(code(&train(&data, &resumed, 10, &[])), 0);
    let ckpt = resumed.join("checkpoint.bin");
    let out = train(&data, &resumed, 20, &["--resume", p(&ckpt)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["checkpoint.bin", "trace.csv"] {
        assert_eq!(fs::read(twenty.join(f)).unwrap(), fs::read(resumed.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read(straight.join("checkpoint.bin")).unwrap(), {
        let again = tmp.path().join("again");
        assert_eq!(code(&train(&data, &again, 10, &[])), 0);
        fs::read(again.join("checkpoint.bin")).unwrap()
    });
}

#[test]
fn train_failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train(tmp.path(), &tmp.path().join("o"), 2, &[]);
    assert_eq!(code(&out), 2);

    let data = tmp.path().join("data");
    synth(&data, 2, 16);
    let out = train(&data, &tmp.path().join("o"), 5, &["--lambda0", "3e38"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"));

    let bad = tmp.path().join("bad.bin");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let out = train(&data, &tmp.path().join("o"), 5, &["--resume", p(&bad)]);
    assert_eq!(code(&out), 5);
}

#[test]
fn translate_and_analyze_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 3, 16);
    let run = tmp.path().join("run");
    assert_eq!(code(&train(&data, &run, 2, &[])), 0);
    let ckpt = run.join("checkpoint.bin");

    let translate = |out: &Path| {
        streetshift(&[
            "translate", "--checkpoint", p(&ckpt), "--input", p(&data.join("domain_a")), "--out",
            p(out), "--triptych",
        ])
    };
    let (t1, t2) = (tmp.path().join("t1"), tmp.path().join("t2"));
    let out = translate(&t1);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(code(&translate(&t2)), 0);
    assert_eq!(dir_bytes(&t1), dir_bytes(&t2));
    for d in ["original", "translated", "diff", "triptych"] {
        assert_eq!(files(&t1.join(d), "png").len(), 3, "{d}");
    }
    let strip = ImageBuffer::read_png(&files(&t1.join("triptych"), "png")[0]).unwrap();
    assert_eq!(strip.dims(), (48, 16));

    let analysis = tmp.path().join("analysis");
    let out = streetshift(&[
        "analyze", "--original", p(&t1.join("original")), "--translated", p(&t1.join("translated")),
        "--out", p(&analysis),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "metrics.csv", "report.md", "average_original.png", "average_translated.png",
        "amplified_red.png", "amplified_green.png", "amplified_blue.png", "run.toml",
    ] {
        assert!(analysis.join(f).exists(), "{f}");
    }
    assert!(stdout(&out).contains("### Proportion of changed pixels"));
}

#[test]
fn translate_rejects_bad_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("data"), 1, 16);
    let bad = tmp.path().join("bad.bin");
    fs::write(&bad, b"UNITCKPT but truncated").unwrap();
    let out = streetshift(&[
        "translate", "--checkpoint", p(&bad), "--input", p(&tmp.path().join("data/domain_a")),
        "--out", p(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&out), 5);
}

fn write_pairs(dir: &Path, pairs: &[([u8; 3], [u8; 3])]) -> (PathBuf, PathBuf) {
    let (o, t) = (dir.join("o"), dir.join("t"));
    fs::create_dir_all(&o).unwrap();
    fs::create_dir_all(&t).unwrap();
    for (i, (a, b)) in pairs.iter().enumerate() {
        ImageBuffer::filled(16, 16, *a).write_png(&o.join(format!("p{i}.png"))).unwrap();
        ImageBuffer::filled(16, 16, *b).write_png(&t.join(format!("p{i}.png"))).unwrap();
    }
    (o, t)
}

fn analyze(o: &Path, t: &Path, out: &Path, format: &str) -> Output {
    streetshift(&[
        "analyze", "--original", p(o), "--translated", p(t), "--out", p(out), "--format", format,
    ])
}

fn metric_values(dir: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(dir.join("metrics.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].to_string(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn analyze_identical_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, t) = write_pairs(tmp.path(), &[([10, 200, 30], [10, 200, 30])]);
    let out = analyze(&o, &t, &tmp.path().join("a"), "markdown");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let md = fs::read_to_string(tmp.path().join("a/report.md")).unwrap();
    let row = |title: &str| {
        md.split("### ")
            .find(|s| s.starts_with(title))
            .unwrap()
            .lines()
            .filter(|l| l.starts_with('|'))
            .nth(2)
            .unwrap()
            .to_string()
    };
    assert_eq!(row("Proportion"), "| Translation | 0.0% |");
    assert!(row("MSE").starts_with("| Translation | 0 | 100.0 | 1.00 |"), "{}", row("MSE"));
}

#[test]
fn analyze_constant_pairs_match_hand_values_in_both_formats() {
    let tmp = tempfile::tempdir().unwrap();
    // Pair 0: one channel off by 30 → mse 300, every pixel changed.
    // Pair 1: identical → mse 0, nothing changed.
    let (o, t) = write_pairs(tmp.path(), &[([100, 100, 100], [130, 100, 100]), ([50, 60, 70], [50, 60, 70])]);
    let (md, csv) = (tmp.path().join("md"), tmp.path().join("csv"));
    assert_eq!(code(&analyze(&o, &t, &md, "markdown")), 0);
    assert_eq!(code(&analyze(&o, &t, &csv, "csv")), 0);
    let values = metric_values(&md);
    assert_eq!(values, metric_values(&csv));
    let get = |name: &str| values.iter().find(|v| v.0 == name).unwrap().1;
    assert_eq!(get("change_proportion"), 0.5);
    assert_eq!(get("mse"), 150.0);
    let psnr_300 = 10.0 * (255.0f64 * 255.0 / 300.0).log10();
    assert!((get("psnr") - (psnr_300 + 100.0) / 2.0).abs() < 1e-9);

    let report = fs::read_to_string(csv.join("report.csv")).unwrap();
    let fields: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[2].parse::<f64>().unwrap(), get("change_proportion"));
    assert_eq!(fields[3].parse::<f64>().unwrap(), get("mse"));
}

#[test]
fn analyze_without_pairs_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, t) = write_pairs(tmp.path(), &[]);
    let out = analyze(&o, &t, &tmp.path().join("a"), "csv");
    assert_eq!(code(&out), 2);
    let out = analyze(&o, &t, &tmp.path().join("a"), "pdf");
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_supplies_defaults_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, format!("out = {:?}\nper_domain = 2\nimage_size = 16\n", p(&tmp.path().join("d")))).unwrap();
    let out = streetshift(&["synth", "--config", p(&cfg), "--per-domain", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(files(&tmp.path().join("d/domain_b"), "png").len(), 3);
    let recorded = fs::read_to_string(tmp.path().join("d/run.toml")).unwrap();
    assert!(recorded.contains("per_domain = 3"));

    fs::write(&cfg, "per_domian = 2\n").unwrap();
    let out = streetshift(&["synth", "--config", p(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("per_domian"));
}

#[test]
fn help_lists_flags_with_defaults() {
    for (cmd, flags) in [
        ("synth", &["--out", "--per-domain", "--seed", "--image-size", "--config"][..]),
        ("domains", &["--records", "--images", "--fraction", "--radius-m"][..]),
        (
            "train",
            &["--steps", "--lambda0", "--lambda1", "--lambda2", "--lambda3", "--lambda4", "--resume"][..],
        ),
        ("translate", &["--checkpoint", "--fuzz", "--triptych"][..]),
        ("analyze", &["--fuzz", "--format", "--gain"][..]),
    ] {
        let out = streetshift(&[cmd, "--help"]);
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
        assert!(text.contains("[default:"), "{cmd} --help shows no defaults");
    }
}

#[test]
fn bad_thread_setting_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_streetshift"))
        .args(["synth", "--out", "/nonexistent/x"])
        .env("STREETSHIFT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("STREETSHIFT_THREADS"));
}
