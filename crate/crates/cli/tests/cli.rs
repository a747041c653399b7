//! End-to-end checks of the command-line surface: artifacts, exit codes and
//! determinism, driven through the real binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn viseme() -> Command {
    Command::new(env!("CARGO_BIN_EXE_viseme"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    viseme()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Two-ramp test image written as canonical P5.
fn write_ramp(dir: &Path) -> PathBuf {
    let (w, h) = (64u32, 64u32);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for _y in 0..h {
        for x in 0..w {
            let v = if x < 32 {
                (10.0 + 0.5 * x as f64).round() as u8
            } else {
                (206.0 - 0.25 * x as f64).round() as u8
            };
            bytes.push(v);
        }
    }
    let path = dir.join("ramp.pgm");
    std::fs::write(&path, bytes).unwrap();
    path
}

#[test]
fn segment_emits_verifiable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = write_ramp(dir.path());
    let out = run(
        &["segment", "ramp.pgm", "--precision", "2", "--out", "art"],
        dir.path(),
    );
    assert_ok(&out);
    let stats = stdout_json(&out);
    assert!(stats["leaves"].as_u64().unwrap() >= 2);
    assert!(stats["max_eps"].as_f64().unwrap() <= 2.0);

    // Re-check residuals from the emitted artifacts.
    let tree_json = std::fs::read_to_string(dir.path().join("art/tree.json")).unwrap();
    let mut tree = viseme_core::segment::DecompTree::from_json(&tree_json).unwrap();
    let (w, h, labels) =
        viseme_core::image::load_label_map(&dir.path().join("art/labels.pgm")).unwrap();
    assert_eq!((w, h), (64, 64));
    tree.attach_pixels(&labels).unwrap();
    let img = viseme_core::image::MultiImage::load(&img_path, None).unwrap();
    for leaf in tree.leaves() {
        let set =
            viseme_core::image::SampleSet::from_indices(&img, leaf.pixels.clone().unwrap())
                .unwrap();
        assert!(leaf.model.max_error(&set) <= 2.0);
    }
}

#[test]
fn encode_decode_round_trip_via_files() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = write_ramp(dir.path());
    let out = run(
        &["encode", "ramp.pgm", "--precision", "2", "--out", "art"],
        dir.path(),
    );
    assert_ok(&out);
    let report = stdout_json(&out);
    assert!(report["max_error"].as_u64().unwrap() <= 3);

    let out = run(
        &[
            "decode",
            "--sentence",
            "art/sentence.json",
            "--alphabet",
            "art/alphabet.json",
            "--out",
            "art",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let decoded =
        viseme_core::image::MultiImage::load(&dir.path().join("art/decoded.pgm"), None).unwrap();
    let original = viseme_core::image::MultiImage::load(&img_path, None).unwrap();
    let (_, max_err) = viseme_core::codec::image_fidelity(&original, &decoded).unwrap();
    assert!(max_err <= 3, "decoded max error {max_err}");
}

#[test]
fn constant_image_reports_exact_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = b"P5\n16 16\n255\n".to_vec();
    bytes.extend(std::iter::repeat_n(77u8, 256));
    std::fs::write(dir.path().join("flat.pgm"), bytes).unwrap();
    let out = run(&["encode", "flat.pgm", "--out", "art"], dir.path());
    assert_ok(&out);
    let report = stdout_json(&out);
    assert_eq!(report["max_error"].as_u64().unwrap(), 0);
    assert_eq!(report["words"].as_u64().unwrap(), 1);
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["segment", "no-such-file.pgm"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn mismatched_alphabet_fails() {
    let dir = tempfile::tempdir().unwrap();
    write_ramp(dir.path());
    assert_ok(&run(
        &["encode", "ramp.pgm", "--precision", "2", "--out", "a1"],
        dir.path(),
    ));
    // A different quantization produces a different alphabet fingerprint.
    assert_ok(&run(
        &["encode", "ramp.pgm", "--precision", "2", "--vq-bits", "3", "--out", "a2"],
        dir.path(),
    ));
    let out = run(
        &[
            "decode",
            "--sentence",
            "a1/sentence.json",
            "--alphabet",
            "a2/alphabet.json",
            "--out",
            "a1",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn hilbert_plot_has_the_full_vertex_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["plot", "hilbert-curve", "--r", "3", "--out", "p"], dir.path());
    assert_ok(&out);
    let svg = std::fs::read_to_string(dir.path().join("p/hilbert-r3.svg")).unwrap();
    let vertices = svg
        .split("points=\"")
        .nth(1)
        .unwrap()
        .split('"')
        .next()
        .unwrap()
        .split_whitespace()
        .count();
    assert_eq!(vertices, 64);
}

#[test]
fn quadrant_tour_follows_the_base_pattern() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pts.json"),
        "[[0.75,0.75],[0.25,0.25],[0.75,0.25],[0.25,0.75]]",
    )
    .unwrap();
    let out = run(
        &["plot", "point-tour", "--points", "pts.json", "--r", "1", "--out", "p"],
        dir.path(),
    );
    assert_ok(&out);
    let svg = std::fs::read_to_string(dir.path().join("p/tour.svg")).unwrap();
    let verts: Vec<&str> = svg
        .split("points=\"")
        .nth(1)
        .unwrap()
        .split('"')
        .next()
        .unwrap()
        .split_whitespace()
        .collect();
    // Base pattern order over the quadrant centers: (0,0), (0,1), (1,1), (1,0).
    assert_eq!(
        verts,
        vec!["0.250,0.250", "0.250,0.750", "0.750,0.750", "0.750,0.250"]
    );
}

#[test]
fn overlay_keeps_input_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    write_ramp(dir.path());
    assert_ok(&run(
        &["segment", "ramp.pgm", "--precision", "2", "--out", "s"],
        dir.path(),
    ));
    assert_ok(&run(
        &[
            "plot",
            "segmentation-overlay",
            "--image",
            "ramp.pgm",
            "--labels",
            "s/labels.pgm",
            "--out",
            "s",
        ],
        dir.path(),
    ));
    let overlay =
        viseme_core::image::MultiImage::load(&dir.path().join("s/overlay.ppm"), None).unwrap();
    assert_eq!((overlay.width(), overlay.height()), (64, 64));
    assert_eq!(overlay.bands(), 3);
}

#[test]
fn repeated_encodes_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_ramp(dir.path());
    assert_ok(&run(
        &["encode", "ramp.pgm", "--precision", "2", "--out", "r1"],
        dir.path(),
    ));
    assert_ok(&run(
        &["encode", "ramp.pgm", "--precision", "2", "--out", "r2"],
        dir.path(),
    ));
    for name in ["sentence.json", "sentence.bin", "alphabet.json", "dictionary.json", "tree.json", "labels.pgm"] {
        let a = std::fs::read(dir.path().join("r1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn config_file_steers_commands_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    write_ramp(dir.path());
    std::fs::write(
        dir.path().join("run.cfg"),
        "precision=2\nmin_card=8\nvq_bits=5\nprofile=convex-hull\nclamp=2\nout=cfg-out\nseed=1\n",
    )
    .unwrap();
    let out = run(&["segment", "ramp.pgm", "--config", "run.cfg"], dir.path());
    assert_ok(&out);
    assert!(dir.path().join("cfg-out/tree.json").exists());
    // Flag overrides the config's output directory.
    let out = run(
        &["segment", "ramp.pgm", "--config", "run.cfg", "--out", "flag-out"],
        dir.path(),
    );
    assert_ok(&out);
    assert!(dir.path().join("flag-out/tree.json").exists());
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["selftest"], dir.path());
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.is_empty() || l.starts_with("[PASS]")));
}
