//! CIFAR-100 binary records: coarse label, fine label, then 32x32 R, G and B planes.

use std::path::Path;

use super::{idx::read_maybe_gz, DataError, DatasetSpec, LabeledImage};
use crate::image::Image;

pub const SIDE: usize = 32;
pub const PLANE: usize = SIDE * SIDE;
pub const RECORD_BYTES: usize = 2 + 3 * PLANE;

/// Fine label names in label-id order.
pub const FINE_LABELS: [&str; 100] = [
    "apple",
    "aquarium_fish",
    "baby",
    "bear",
    "beaver",
    "bed",
    "bee",
    "beetle",
    "bicycle",
    "bottle",
    "bowl",
    "boy",
    "bridge",
    "bus",
    "butterfly",
    "camel",
    "can",
    "castle",
    "caterpillar",
    "cattle",
    "chair",
    "chimpanzee",
    "clock",
    "cloud",
    "cockroach",
    "couch",
    "crab",
    "crocodile",
    "cup",
    "dinosaur",
    "dolphin",
    "elephant",
    "flatfish",
    "forest",
    "fox",
    "girl",
    "hamster",
    "house",
    "kangaroo",
    "keyboard",
    "lamp",
    "lawn_mower",
    "leopard",
    "lion",
    "lizard",
    "lobster",
    "man",
    "maple_tree",
    "motorcycle",
    "mountain",
    "mouse",
    "mushroom",
    "oak_tree",
    "orange",
    "orchid",
    "otter",
    "palm_tree",
    "pear",
    "pickup_truck",
    "pine_tree",
    "plain",
    "plate",
    "poppy",
    "porcupine",
    "possum",
    "rabbit",
    "raccoon",
    "ray",
    "road",
    "rocket",
    "rose",
    "sea",
    "seal",
    "shark",
    "shrew",
    "skunk",
    "skyscraper",
    "snail",
    "snake",
    "spider",
    "squirrel",
    "streetcar",
    "sunflower",
    "sweet_pepper",
    "table",
    "tank",
    "telephone",
    "television",
    "tiger",
    "tractor",
    "train",
    "trout",
    "tulip",
    "turtle",
    "wardrobe",
    "whale",
    "willow_tree",
    "wolf",
    "woman",
    "worm",
];

pub const DEFAULT_CLASSES: [&str; 10] =
    ["palm_tree", "spider", "dolphin", "rocket", "clock", "bicycle", "mushroom", "butterfly", "castle", "turtle"];

pub fn fine_label_id(name: &str) -> Option<u32> {
    FINE_LABELS.iter().position(|&n| n == name).map(|i| i as u32)
}

/// ITU-R BT.601 luma.
pub fn to_greyscale(r: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    r.iter().zip(g).zip(b).map(|((r, g), b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0)).collect()
}

/// Decodes every record of a CIFAR-100 binary file into greyscale images
/// carrying their fine label.
pub fn parse_records(bytes: &[u8], file: &Path) -> Result<Vec<LabeledImage>, DataError> {
    parse_records_where(bytes, file, |_| true)
}

fn parse_records_where(bytes: &[u8], file: &Path, keep: impl Fn(u32) -> bool) -> Result<Vec<LabeledImage>, DataError> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(DataError::RecordSize { path: file.to_path_buf(), len: bytes.len(), record: RECORD_BYTES });
    }
    let scale = |plane: &[u8]| plane.iter().map(|&v| f64::from(v) / 255.0).collect::<Vec<_>>();
    Ok(bytes
        .chunks_exact(RECORD_BYTES)
        .filter(|rec| keep(u32::from(rec[1])))
        .map(|rec| {
            let fine = u32::from(rec[1]);
            let r = scale(&rec[2..2 + PLANE]);
            let g = scale(&rec[2 + PLANE..2 + 2 * PLANE]);
            let b = scale(&rec[2 + 2 * PLANE..]);
            LabeledImage { image: Image::new(SIDE, SIDE, to_greyscale(&r, &g, &b)).expect("cifar dims"), label: fine }
        })
        .collect())
}

/// Loads `train.bin`, keeps only `spec.class_subset` (capped per class) and
/// returns items with their original fine labels.
pub fn load_cifar100(path: &Path, spec: &DatasetSpec) -> Result<Vec<LabeledImage>, DataError> {
    if spec.class_subset.is_empty() {
        return Err(DataError::Config("class_subset must not be empty".into()));
    }
    if let Some(bad) = spec.class_subset.iter().find(|&&c| c >= 100) {
        return Err(DataError::Config(format!("CIFAR-100 fine label {bad} out of range 0..100")));
    }
    let all = parse_records_where(&read_maybe_gz(path)?, path, |l| spec.class_subset.contains(&l))?;
    Ok(super::select_classes(all, &spec.class_subset, spec.max_samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Source;

    fn record(fine: u8, rgb: (u8, u8, u8)) -> Vec<u8> {
        let mut rec = vec![0u8, fine];
        rec.extend(std::iter::repeat_n(rgb.0, PLANE));
        rec.extend(std::iter::repeat_n(rgb.1, PLANE));
        rec.extend(std::iter::repeat_n(rgb.2, PLANE));
        rec
    }

    #[test]
    fn record_stride_and_names() {
        assert_eq!(RECORD_BYTES, 3074);
        assert_eq!(FINE_LABELS.len(), 100);
        let mut sorted = FINE_LABELS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, FINE_LABELS.to_vec(), "fine labels are alphabetical");
        for name in DEFAULT_CLASSES {
            assert!(fine_label_id(name).is_some(), "{name}");
        }
        assert_eq!(fine_label_id("palm_tree"), Some(56));
    }

    #[test]
    fn greyscale_weights() {
        assert!((to_greyscale(&[1.0], &[1.0], &[1.0])[0] - 1.0).abs() < 1e-12);
        assert_eq!(to_greyscale(&[0.0], &[0.0], &[0.0])[0], 0.0);
        assert!((to_greyscale(&[0.0], &[1.0], &[0.0])[0] - 0.587).abs() < 1e-12);
    }

    #[test]
    fn parses_and_rejects_partial_records() {
        let mut bytes = record(3, (255, 0, 0));
        bytes.extend(record(99, (0, 255, 0)));
        let items = parse_records(&bytes, Path::new("t")).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].label, 99);
        assert!((items[1].image.get(5, 5) - 0.587).abs() < 1e-12);
        bytes.pop();
        assert!(matches!(parse_records(&bytes, Path::new("t")), Err(DataError::RecordSize { .. })));
    }

    #[test]
    fn caps_with_uniform_per_class_allocation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.bin");
        let mut bytes = Vec::new();
        for i in 0..6000u32 {
            bytes.extend(record((i % 12) as u8, (10, 20, 30)));
        }
        std::fs::write(&path, &bytes).unwrap();
        let spec = DatasetSpec {
            source: Source::Cifar100,
            class_subset: (0..10).collect(),
            max_samples: 5000,
            ..DatasetSpec::default()
        };
        let items = load_cifar100(&path, &spec).unwrap();
        assert_eq!(items.len(), 5000);
        for c in 0..10 {
            assert_eq!(items.iter().filter(|it| it.label == c).count(), 500);
        }
        let empty = DatasetSpec { class_subset: vec![], ..spec };
        assert!(matches!(load_cifar100(&path, &empty), Err(DataError::Config(_))));
    }
}
