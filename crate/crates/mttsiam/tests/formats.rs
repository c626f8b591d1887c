use std::path::PathBuf;

use mttsiam::annotations::{load_annotations, parse_box_line, Layout};
use mttsiam::config::Settings;
use mttsiam::model_io;
use mttsiam_core::combinet::{Architecture, CombiNetModel};
use mttsiam_core::geometry::{BBox, ImageDims};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/otb_toy")
}

#[test]
fn toy_corpus_loads_three_sequences() {
    let seqs = load_annotations(&fixture(), Layout::Otb).unwrap();
    let summary: Vec<(&str, usize)> = seqs.iter().map(|s| (s.name.as_str(), s.boxes.len())).collect();
    assert_eq!(summary, [("ball", 12), ("car", 8), ("walker", 5)]);
    assert_eq!(seqs[0].boxes[11], Some(BBox::new(133.0, 72.0, 40.0, 40.0)));
    // Size inferred from the box extents without an image_size file.
    assert_eq!(seqs[0].dims, ImageDims::new(173, 112));
    assert_eq!(seqs[1].boxes[3], Some(BBox::new(35.0, 200.0, 60.0, 30.0)));
    let walker = &seqs[2];
    assert_eq!(walker.dims, ImageDims::new(320, 240));
    assert_eq!(walker.boxes[2], None);
    assert_eq!(walker.boxes[4], Some(BBox::new(18.0, 24.0, 40.0, 60.0)));
}

#[test]
fn spaced_line_matches_hand_parse() {
    let line = "10, 20, 40, 60";
    let hand: Vec<f64> = line.split(',').map(|s| s.trim().parse().unwrap()).collect();
    assert_eq!(parse_box_line(line).unwrap(), Some(BBox::new(hand[0], hand[1], hand[2], hand[3])));
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    let m = CombiNetModel::random(Architecture::default(), 99).unwrap();
    model_io::save(&m, &path).unwrap();
    let back = model_io::load(&path).unwrap();
    assert!(m.params().iter().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    model_io::save(&back, &dir.path().join("again.txt")).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(dir.path().join("again.txt")).unwrap()
    );
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "scenario.preset = sine-drift-distractors\nbag.n = 10\nselector.rw = 0.25\n").unwrap();
    let s = Settings::load(&path).unwrap();
    assert_eq!(s.pipeline.bag.n, 10);
    assert_eq!(s.scenario.drift_rate, 0.02);
    std::fs::write(&path, s.to_document()).unwrap();
    assert_eq!(Settings::load(&path).unwrap(), s);
}
