use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_threshseg");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn phantom(dir: &Path, kind: &str, size: &str) {
    let o = run(
        &[
            "phantom",
            "--kind",
            kind,
            "--size",
            size,
            "--sigma",
            "0.2",
            "--seed",
            "7",
            "--output-dir",
            "ph",
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn totals(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect()
}

fn without_wall_ms(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn segment_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "four-quadrant", "64");
    let o = run(
        &[
            "segment",
            "--input",
            "ph/four-quadrant.png",
            "--truth",
            "ph/four-quadrant_truth.png",
            "--phases",
            "4",
            "--dt",
            "0.01",
            "--lambda",
            "0.003",
            "--output-dir",
            "seg",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["labels.png", "overlay.png", "energy.csv", "manifest.json"] {
        assert!(d.join("seg").join(f).is_file(), "{f}");
    }
    for i in 0..4 {
        assert!(d.join(format!("seg/phase_{i}.pgm")).is_file());
    }
    let csv = fs::read_to_string(d.join("seg/energy.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "k,fidelity,perimeter,total,e_k,wall_ms"
    );
    let t = totals(&csv);
    assert!(t.windows(2).all(|w| w[1] <= w[0]));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("seg/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["phases"], 4);
    assert_eq!(manifest["converged"], true);
    assert!(manifest["misclassification"].as_f64().unwrap() < 0.01);
}

#[test]
fn segment_is_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "two-level", "48");
    let args = |out: &'static str| {
        vec![
            "segment",
            "--input",
            "ph/two-level.png",
            "--dt",
            "0.03",
            "--lambda",
            "0.01",
            "--init",
            "random",
            "--seed",
            "3",
            "--output-dir",
            out,
        ]
    };
    assert_eq!(code(&run(&args("a"), d)), 0);
    assert_eq!(code(&run(&args("b"), d)), 0);
    assert_eq!(
        code(&run(
            &[
                "segment",
                "--manifest",
                "a/manifest.json",
                "--output-dir",
                "c"
            ],
            d
        )),
        0
    );
    let a = fs::read_to_string(d.join("a/energy.csv")).unwrap();
    for other in ["b", "c"] {
        let b = fs::read_to_string(d.join(other).join("energy.csv")).unwrap();
        assert_eq!(without_wall_ms(&a), without_wall_ms(&b));
        assert_eq!(
            fs::read(d.join("a/labels.png")).unwrap(),
            fs::read(d.join(other).join("labels.png")).unwrap()
        );
    }
}

#[test]
fn segment_max_iter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "two-level", "32");
    let o = run(
        &[
            "segment",
            "--input",
            "ph/two-level.png",
            "--init",
            "random",
            "--max-iter",
            "1",
            "--output-dir",
            "s",
        ],
        d,
    );
    assert_eq!(code(&o), 2);
    assert!(d.join("s/energy.csv").is_file());
}

#[test]
fn segment_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&["segment", "--input", "missing.png"], d);
    assert_eq!(code(&o), 74);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.png"));

    fs::write(d.join("junk.png"), b"not an image at all").unwrap();
    assert_eq!(code(&run(&["segment", "--input", "junk.png"], d)), 74);

    assert_eq!(
        code(&run(
            &["segment", "--input", "x.png", "--init", "spiral"],
            d
        )),
        64
    );
    assert_eq!(
        code(&run(
            &["segment", "--input", "x.png", "--assert-decay", "maybe"],
            d
        )),
        64
    );
    assert_eq!(
        code(&run(&["segment", "--input", "x.png", "--phases", "1"], d)),
        64
    );
    assert_eq!(code(&run(&["segment"], d)), 64);
    assert_eq!(code(&run(&["frobnicate"], d)), 64);
    assert_eq!(code(&run(&["--help"], d)), 0);
    assert_eq!(code(&run(&["--version"], d)), 0);

    phantom(d, "two-level", "16");
    assert_eq!(
        code(&run(
            &["segment", "--input", "ph/two-level.png", "--dt", "-1"],
            d
        )),
        64
    );
}

#[test]
fn phantom_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "four-quadrant", "32");
    let first = fs::read(d.join("ph/four-quadrant.png")).unwrap();
    phantom(d, "four-quadrant", "32");
    assert_eq!(first, fs::read(d.join("ph/four-quadrant.png")).unwrap());
    assert!(d.join("ph/four-quadrant_truth.png").is_file());

    assert_eq!(code(&run(&["phantom", "--kind", "bogus"], d)), 64);
    assert_eq!(
        code(&run(&["phantom", "--kind", "disks", "--size", "8"], d)),
        64
    );
}

#[test]
fn noiseless_phantom_equals_truth_colors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        &[
            "phantom",
            "--kind",
            "two-level",
            "--size",
            "32",
            "--sigma",
            "0",
            "--output-dir",
            "p",
        ],
        d,
    );
    assert_eq!(code(&o), 0);
    let img = threshseg::image_io::load_image(d.join("p/two-level.png")).unwrap();
    let truth = threshseg::image_io::load_label_map(
        d.join("p/two-level_truth.png"),
        &threshseg::image_io::default_palette(2),
    )
    .unwrap();
    for (s, l) in img.samples.iter().zip(&truth.labels) {
        assert_eq!(*s, if *l == 1 { 255 } else { 0 });
    }
}

#[test]
fn sweep_writes_points_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    phantom(d, "two-level", "48");
    let o = run(
        &[
            "sweep",
            "--input",
            "ph/two-level.png",
            "--truth",
            "ph/two-level_truth.png",
            "--lambda",
            "0.001,0.01,0.025",
            "--dt",
            "0.03",
            "--output-dir",
            "sw",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(d.join("sw/summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(d.join("sw").join(r[7]).join("energy.csv").is_file());
        assert!(!r[6].is_empty());
    }

    assert_eq!(
        code(&run(
            &[
                "sweep",
                "--input",
                "ph/two-level.png",
                "--output-dir",
                "sw2"
            ],
            d
        )),
        64
    );
    assert_eq!(
        code(&run(
            &[
                "sweep",
                "--input",
                "ph/two-level.png",
                "--lambda",
                "",
                "--output-dir",
                "sw3"
            ],
            d
        )),
        64
    );
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        &["bench", "--sizes", "32", "--reps", "5", "--output-dir", "b"],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("b/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("size,reps,mean_ms,median_ms,min_ms\n32,5,"));

    assert_eq!(code(&run(&["bench", "--sizes", "8"], d)), 64);
    assert_eq!(code(&run(&["bench", "--reps", "4"], d)), 64);
}
