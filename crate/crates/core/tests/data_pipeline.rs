use std::fs;

use hscmt::data::{class_counts, load_dataset, split, synth_export, synth_generate, Sample, SYNTH_CLASSES};
use image::{GrayImage, Luma};

fn nearest_centroid_accuracy(train: &[Sample], test: &[Sample], k: usize) -> f64 {
    let dim = train[0].image.len();
    let mut centroids = vec![vec![0.0f64; dim]; k];
    let counts = class_counts(train, k);
    for s in train {
        for (c, v) in centroids[s.label].iter_mut().zip(s.image.data()) {
            *c += *v as f64 / counts[s.label] as f64;
        }
    }
    let hits = test
        .iter()
        .filter(|s| {
            let dist = |c: &Vec<f64>| c.iter().zip(s.image.data()).map(|(a, b)| (a - *b as f64).powi(2)).sum::<f64>();
            let best = (0..k).min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b]))).unwrap();
            best == s.label
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn synthetic_classes_are_separable_in_pixel_space() {
    let data = synth_generate(100, 64, 7).unwrap();
    assert_eq!(data.len(), 400);
    let s = split(&data, (0.7, 0.1, 0.2), 7).unwrap();
    let acc = nearest_centroid_accuracy(&s.train, &s.test, 4);
    assert!(acc > 0.9, "nearest-centroid accuracy {acc}");
}

#[test]
fn export_then_load_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_generate(3, 16, 1).unwrap();
    let paths = synth_export(&data, &SYNTH_CLASSES, dir.path()).unwrap();
    assert_eq!(paths.len(), 12);
    let loaded = load_dataset(dir.path(), 16).unwrap();
    assert_eq!(loaded.class_names, SYNTH_CLASSES.map(String::from).to_vec());
    assert_eq!(loaded.class_counts(), vec![3; 4]);
    assert_eq!(loaded.skipped, 0);
    for (a, b) in loaded.samples.iter().zip(&data) {
        assert_eq!(a.label, b.label);
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
    // Byte-identical re-export.
    let dir2 = tempfile::tempdir().unwrap();
    let paths2 = synth_export(&data, &SYNTH_CLASSES, dir2.path()).unwrap();
    for (p, q) in paths.iter().zip(&paths2) {
        assert_eq!(fs::read(p).unwrap(), fs::read(q).unwrap());
    }
}

#[test]
fn undecodable_files_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    for class in ["a", "b"] {
        fs::create_dir(dir.path().join(class)).unwrap();
        GrayImage::from_pixel(2, 2, Luma([255])).save(dir.path().join(class).join("x.png")).unwrap();
    }
    fs::write(dir.path().join("a").join("notes.txt"), "not an image").unwrap();
    let loaded = load_dataset(dir.path(), 2).unwrap();
    assert_eq!(loaded.samples.len(), 2);
    assert_eq!(loaded.skipped, 1);
    assert_eq!(loaded.samples[0].image.data(), &[1.0; 4]);
}

#[test]
fn empty_class_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("a")).unwrap();
    fs::create_dir(dir.path().join("b")).unwrap();
    GrayImage::from_pixel(4, 4, Luma([9])).save(dir.path().join("a").join("x.png")).unwrap();
    assert!(load_dataset(dir.path(), 4).is_err());
    assert!(load_dataset(&dir.path().join("missing"), 4).is_err());
}
