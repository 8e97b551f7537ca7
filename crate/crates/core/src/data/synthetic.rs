//! Procedural stroke glyphs: a stand-in environment dataset for tests and
//! benchmarks when no real dataset is on disk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::LabeledImage;
use crate::render::{add_noise, rasterize, CanvasSpec, Curve, Point, SplineParams};

type Stroke = [Point; 2];

/// Straight-stroke templates, one per class, in normalized coordinates.
const TEMPLATES: [&[Stroke]; 10] = [
    &[[[0.5, 0.15], [0.5, 0.85]]],
    &[[[0.15, 0.5], [0.85, 0.5]]],
    &[[[0.2, 0.2], [0.8, 0.8]]],
    &[[[0.8, 0.2], [0.2, 0.8]]],
    &[[[0.2, 0.2], [0.8, 0.8]], [[0.8, 0.2], [0.2, 0.8]]],
    &[[[0.5, 0.15], [0.5, 0.85]], [[0.15, 0.5], [0.85, 0.5]]],
    &[[[0.3, 0.15], [0.3, 0.85]], [[0.3, 0.85], [0.8, 0.85]]],
    &[[[0.15, 0.2], [0.85, 0.2]], [[0.5, 0.2], [0.5, 0.85]]],
    &[[[0.2, 0.2], [0.5, 0.85]], [[0.5, 0.85], [0.8, 0.2]]],
    &[[[0.25, 0.3], [0.75, 0.3]], [[0.25, 0.7], [0.75, 0.7]]],
];

pub const MAX_CLASSES: usize = TEMPLATES.len();

fn line(a: Point, b: Point) -> [Point; 4] {
    let lerp = |t: f64| [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
    [a, lerp(1.0 / 3.0), lerp(2.0 / 3.0), b]
}

/// Renders one jittered glyph of class `class` (< 10) on a `side`×`side` canvas.
pub fn glyph<R: Rng + ?Sized>(class: usize, side: usize, rng: &mut R) -> crate::image::Image {
    let jitter = Normal::new(0.0, 0.03).expect("valid sigma");
    let shift = [rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06)];
    let thickness = rng.random_range(1.0..1.8);
    let curves = TEMPLATES[class]
        .iter()
        .map(|&[a, b]| {
            let mut control = line(a, b);
            for p in &mut control {
                p[0] = (p[0] + shift[0] + jitter.sample(rng)).clamp(0.0, 1.0);
                p[1] = (p[1] + shift[1] + jitter.sample(rng)).clamp(0.0, 1.0);
            }
            Curve { control, thickness, intensity: 1.0 }
        })
        .collect();
    let spec = CanvasSpec::new(side, side, 0.0, 1.0);
    add_noise(&rasterize(&SplineParams { curves }, &spec).image, 0.02, rng)
}

/// `per_class` glyphs for each of `classes` classes, interleaved by class.
pub fn glyph_dataset(classes: usize, per_class: usize, side: usize, seed: u64) -> Vec<LabeledImage> {
    assert!(classes <= MAX_CLASSES, "at most {MAX_CLASSES} glyph classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..per_class)
        .flat_map(|_| 0..classes)
        .map(|c| LabeledImage { image: glyph(c, side, &mut rng), label: c as u32 })
        .collect()
}
