use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dirseg::render::write_rgb_png;
use dirseg::synth::generate;
use dirseg::tensorio::*;
use dirseg::{LossBreakdown, MetricsReport, SynthConfig};
use tempfile::TempDir;

fn dirseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirseg"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dirseg(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn synth(&self, name: &str, images: usize) -> PathBuf {
        let out = self.path(name);
        ok(&[
            "synth",
            "--images",
            &images.to_string(),
            "--seed",
            "5",
            "--out",
            s(&out),
        ]);
        out
    }
}

#[test]
fn encode_single_file_and_directory() {
    let f = Fixture::new();
    let gt = f.synth("gt", 3);
    let one = f.path("one");
    ok(&[
        "encode",
        s(&gt.join("instances/img_0001.png")),
        "--out",
        s(&one),
    ]);
    assert_eq!(std::fs::read_dir(&one).unwrap().count(), 1);

    let all = f.path("all");
    ok(&["encode", s(&gt.join("instances")), "--out", s(&all)]);
    for i in 0..3 {
        let name = format!("img_{i:04}.png");
        assert_eq!(
            std::fs::read(all.join(&name)).unwrap(),
            std::fs::read(gt.join("directions").join(&name)).unwrap()
        );
    }
}

#[test]
fn encode_reports_corrupt_file_and_continues() {
    let f = Fixture::new();
    let gt = f.synth("gt", 3);
    std::fs::write(gt.join("instances/img_0001.png"), b"not a png").unwrap();
    let out = f.path("enc");
    let res = dirseg(&["encode", s(&gt.join("instances")), "--out", s(&out)]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("img_0001.png"), "{err}");
    assert!(out.join("img_0000.png").exists() && out.join("img_0002.png").exists());
}

#[test]
fn decode_round_trips_encoded_maps() {
    let f = Fixture::new();
    let gt = f.synth("gt", 4);
    let pred = f.path("pred");
    ok(&[
        "decode",
        s(&gt.join("classes")),
        s(&gt.join("directions")),
        "--out",
        s(&pred),
    ]);
    assert_eq!(
        std::fs::read_to_string(pred.join("counts.csv")).unwrap(),
        std::fs::read_to_string(gt.join("counts.csv")).unwrap()
    );
    let report: MetricsReport = serde_json::from_str(&ok(&["eval", s(&gt), s(&pred)])).unwrap();
    assert_eq!(report.mpq, Some(1.0));
    assert_eq!(report.r2_t, Some(1.0));
}

#[test]
fn tensor_inputs_match_hard_maps() {
    let f = Fixture::new();
    let b = generate(&SynthConfig {
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let (h, w) = b.instances.dims();
    write_label_map(&b.classes.clone().into(), f.path("c.png")).unwrap();
    write_label_map(&b.directions.clone().into(), f.path("d.png")).unwrap();
    let seg = dirseg::ProbTensor::one_hot(h, w, 7, |r, c| b.classes.get(r, c) as usize);
    let dir =
        dirseg::ProbTensor::one_hot(h, w, 4, |r, c| b.directions.get(r, c).unwrap_or(0) as usize);
    write_tensor(&seg, f.path("c.bin")).unwrap();
    write_tensor(&dir, f.path("d.bin")).unwrap();

    ok(&[
        "decode",
        s(&f.path("c.png")),
        s(&f.path("d.png")),
        "--out",
        s(&f.path("hard")),
    ]);
    ok(&[
        "decode",
        s(&f.path("c.bin")),
        s(&f.path("d.bin")),
        "--out",
        s(&f.path("soft")),
    ]);
    for rel in ["instances/c.png", "classes/c.png", "counts.csv"] {
        assert_eq!(
            std::fs::read(f.path("hard").join(rel)).unwrap(),
            std::fs::read(f.path("soft").join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn decode_rejects_mismatched_dimensions() {
    let f = Fixture::new();
    write_label_map(&ClassMap::new(4, 4).into(), f.path("c.png")).unwrap();
    write_label_map(&DirectionMap::new(4, 5, 4).unwrap().into(), f.path("d.png")).unwrap();
    let res = dirseg(&[
        "decode",
        s(&f.path("c.png")),
        s(&f.path("d.png")),
        "--out",
        s(&f.path("o")),
    ]);
    assert!(!res.status.success());
}

#[test]
fn empty_predictions_score_zero() {
    let f = Fixture::new();
    let gt = f.synth("gt", 2);
    std::fs::remove_file(gt.join("counts.csv")).unwrap();
    let pred = f.path("pred");
    for sub in ["instances", "classes"] {
        std::fs::create_dir_all(pred.join(sub)).unwrap();
    }
    for i in 0..2 {
        let name = format!("img_{i:04}.png");
        write_label_map(
            &InstanceMap::new(96, 96).into(),
            pred.join("instances").join(&name),
        )
        .unwrap();
        write_label_map(
            &ClassMap::new(96, 96).into(),
            pred.join("classes").join(&name),
        )
        .unwrap();
    }
    let report: MetricsReport = serde_json::from_str(&ok(&["eval", s(&gt), s(&pred)])).unwrap();
    assert_eq!(report.mpq, Some(0.0));
    assert!(report.undefined_classes.is_empty());
    assert_eq!(report.r2_t, None);
}

#[test]
fn eval_requires_matching_files_and_counts() {
    let f = Fixture::new();
    let gt = f.synth("gt", 3);
    let pred = f.synth("pred", 3);
    std::fs::remove_file(pred.join("counts.csv")).unwrap();
    let res = dirseg(&["eval", s(&gt), s(&pred)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("counts.csv"));

    std::fs::remove_file(gt.join("counts.csv")).unwrap();
    std::fs::remove_file(pred.join("instances/img_0002.png")).unwrap();
    let res = dirseg(&["eval", s(&gt), s(&pred)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("img_0002"));
}

#[test]
fn counts_postprocessing() {
    let f = Fixture::new();
    let raw = f.path("raw.csv");
    std::fs::write(
        &raw,
        format!("{}\nimg1,-0.4,2.6,0,1.2,0.5,3\n", COUNTS_HEADER.join(",")),
    )
    .unwrap();
    let once = ok(&["counts", s(&raw)]);
    assert_eq!(once.lines().nth(1), Some("img1,0,3,0,1,1,3"));
    let out = f.path("once.csv");
    ok(&["counts", s(&raw), "--out", s(&out)]);
    assert_eq!(ok(&["counts", s(&out)]), once);

    std::fs::write(
        &raw,
        format!(
            "{}\nimg1,1,2,3,4,5,6\nimg2,1,x,3,4,5,6\n",
            COUNTS_HEADER.join(",")
        ),
    )
    .unwrap();
    let res = dirseg(&["counts", s(&raw)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("row 3"));
}

#[test]
fn synth_is_reproducible() {
    let f = Fixture::new();
    let a = f.synth("a", 3);
    let b = f.synth("b", 3);
    for rel in [
        "instances/img_0002.png",
        "classes/img_0000.png",
        "directions/img_0001.png",
        "counts.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap()
        );
    }
}

#[test]
fn render_empty_map_is_black() {
    let f = Fixture::new();
    write_label_map(&InstanceMap::new(5, 7).into(), f.path("i.png")).unwrap();
    ok(&["render", s(&f.path("i.png")), "--out", s(&f.path("o.png"))]);
    write_rgb_png(f.path("black.png"), 5, 7, &[0; 5 * 7 * 3]).unwrap();
    assert_eq!(
        std::fs::read(f.path("o.png")).unwrap(),
        std::fs::read(f.path("black.png")).unwrap()
    );
}

fn loss_fixture(f: &Fixture) -> Vec<String> {
    let b = generate(&SynthConfig {
        seed: 1,
        height: 32,
        width: 32,
        n_nuclei: 3,
        ..Default::default()
    })
    .unwrap();
    let (h, w) = b.instances.dims();
    write_label_map(&b.classes.clone().into(), f.path("c.png")).unwrap();
    write_label_map(&b.directions.clone().into(), f.path("d.png")).unwrap();
    write_tensor(
        &dirseg::ProbTensor::one_hot(h, w, 7, |r, c| b.classes.get(r, c) as usize),
        f.path("seg.bin"),
    )
    .unwrap();
    write_tensor(
        &dirseg::ProbTensor::one_hot(h, w, 4, |r, c| b.directions.get(r, c).unwrap_or(0) as usize),
        f.path("dir.bin"),
    )
    .unwrap();
    write_counts(&[("x".into(), b.counts)], f.path("n.csv")).unwrap();
    [
        "--seg-pred",
        "seg.bin",
        "--dir-pred",
        "dir.bin",
        "--classes",
        "c.png",
        "--direction-map",
        "d.png",
        "--count-pred",
        "n.csv",
        "--count-gt",
        "n.csv",
    ]
    .iter()
    .map(|a| {
        if a.starts_with("--") {
            a.to_string()
        } else {
            s(&f.path(a)).to_string()
        }
    })
    .collect()
}

#[test]
fn loss_of_perfect_inputs_is_zero_and_echoes_weights() {
    let f = Fixture::new();
    let args = loss_fixture(&f);
    let mut argv = vec!["loss"];
    argv.extend(args.iter().map(String::as_str));
    let l: LossBreakdown = serde_json::from_str(&ok(&argv)).unwrap();
    assert!(l.total <= 1e-5, "{l:?}");
    assert_eq!(
        [
            l.weights.w_ce,
            l.weights.w_dice,
            l.weights.w_dir,
            l.weights.w_l2
        ],
        [1.0, 4.0, 2.0, 0.005]
    );

    argv.extend(["--weights", "0.5,0,3,1e-3"]);
    let l: LossBreakdown = serde_json::from_str(&ok(&argv)).unwrap();
    assert_eq!(
        [
            l.weights.w_ce,
            l.weights.w_dice,
            l.weights.w_dir,
            l.weights.w_l2
        ],
        [0.5, 0.0, 3.0, 1e-3]
    );
}
