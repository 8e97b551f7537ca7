//! Sender signal medium: cubic Bézier strokes rasterized onto a greyscale
//! canvas, plus the stroke penalties and channel noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::image::Image;

/// Raw values per curve: 4 control points (8 coords), thickness, intensity.
pub const VALUES_PER_CURVE: usize = 10;
/// Polyline resolution used for distances and penalties.
pub const CURVE_SAMPLES: usize = 64;
pub const THICKNESS_RANGE: (f64, f64) = (0.5, 2.5);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("expected {expected} raw spline values ({curves} curves x 10), got {got}")]
    WrongLength { expected: usize, got: usize, curves: usize },
    #[error("bezier parameter t = {0} outside [0, 1]")]
    OutOfRange(f64),
}

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curve {
    /// Control points in canvas-normalized coordinates.
    pub control: [Point; 4],
    /// Stroke half-width in pixels.
    pub thickness: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplineParams {
    pub curves: Vec<Curve>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanvasSpec {
    pub height: usize,
    pub width: usize,
    pub background: f64,
    /// Value a fully covered pixel is blended toward.
    pub ink: f64,
}

impl CanvasSpec {
    pub fn new(height: usize, width: usize, background: f64, ink: f64) -> Self {
        Self { height, width, background, ink }
    }

    pub fn blank(&self) -> Image {
        Image::filled(self.height, self.width, self.background)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub image: Image,
    pub params: SplineParams,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps unbounded Gaussian samples into valid spline ranges.
pub fn squash_params(raw: &[f64], curves: usize) -> Result<SplineParams, RenderError> {
    let expected = curves * VALUES_PER_CURVE;
    if raw.len() != expected || curves == 0 {
        return Err(RenderError::WrongLength { expected, got: raw.len(), curves });
    }
    let (tlo, thi) = THICKNESS_RANGE;
    let curves = raw
        .chunks(VALUES_PER_CURVE)
        .map(|c| {
            let mut control = [[0.0; 2]; 4];
            for (i, pt) in control.iter_mut().enumerate() {
                *pt = [logistic(c[2 * i]), logistic(c[2 * i + 1])];
            }
            Curve { control, thickness: tlo + (thi - tlo) * logistic(c[8]), intensity: logistic(c[9]) }
        })
        .collect();
    Ok(SplineParams { curves })
}

fn bernstein(control: &[Point; 4], t: f64) -> Point {
    let u = 1.0 - t;
    let w = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
    let mut p = [0.0; 2];
    for (wi, c) in w.iter().zip(control) {
        p[0] += wi * c[0];
        p[1] += wi * c[1];
    }
    p
}

pub fn bezier_point(control: &[Point; 4], t: f64) -> Result<Point, RenderError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(RenderError::OutOfRange(t));
    }
    Ok(bernstein(control, t))
}

/// Second derivative of the cubic at `t`.
fn bezier_second(control: &[Point; 4], t: f64) -> Point {
    let [p0, p1, p2, p3] = control;
    let mut out = [0.0; 2];
    for d in 0..2 {
        out[d] = 6.0 * ((1.0 - t) * (p2[d] - 2.0 * p1[d] + p0[d]) + t * (p3[d] - 2.0 * p2[d] + p1[d]));
    }
    out
}

fn sample_ts(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| i as f64 / (n - 1) as f64)
}

/// Polyline approximation of a curve, in pixel coordinates.
pub fn polyline(curve: &Curve, spec: &CanvasSpec, samples: usize) -> Vec<Point> {
    sample_ts(samples)
        .map(|t| {
            let p = bernstein(&curve.control, t);
            [p[0] * spec.width as f64, p[1] * spec.height as f64]
        })
        .collect()
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (cx * cx + cy * cy).sqrt()
}

pub fn smoothstep(x: f64) -> f64 {
    let s = x.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Ink coverage of every pixel, before blending with the background.
pub fn coverage(params: &SplineParams, spec: &CanvasSpec) -> Vec<f64> {
    let (h, w) = (spec.height, spec.width);
    let mut cov = vec![0.0f64; h * w];
    for curve in &params.curves {
        if curve.intensity <= 0.0 {
            continue;
        }
        let pts = polyline(curve, spec, CURVE_SAMPLES);
        let reach = curve.thickness;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &pts {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let px0 = ((x0 - reach - 0.5).floor().max(0.0)) as usize;
        let py0 = ((y0 - reach - 0.5).floor().max(0.0)) as usize;
        let px1 = ((x1 + reach + 0.5).ceil().max(0.0) as usize).min(w);
        let py1 = ((y1 + reach + 0.5).ceil().max(0.0) as usize).min(h);
        for py in py0..py1 {
            for px in px0..px1 {
                let centre = [px as f64 + 0.5, py as f64 + 0.5];
                let d = pts.windows(2).map(|s| segment_distance(centre, s[0], s[1])).fold(f64::INFINITY, f64::min);
                let c = curve.intensity * smoothstep(curve.thickness - d);
                let slot = &mut cov[py * w + px];
                if c > *slot {
                    *slot = c;
                }
            }
        }
    }
    cov
}

pub fn rasterize(params: &SplineParams, spec: &CanvasSpec) -> Signal {
    let cov = coverage(params, spec);
    let pixels = cov.iter().map(|c| (spec.background + (spec.ink - spec.background) * c).clamp(0.0, 1.0)).collect();
    Signal { image: Image::new(spec.height, spec.width, pixels).expect("canvas dims"), params: params.clone() }
}

/// I.i.d. Gaussian pixel noise followed by clipping to `[0, 1]`.
pub fn add_noise<R: Rng + ?Sized>(image: &Image, sigma: f64, rng: &mut R) -> Image {
    if sigma <= 0.0 {
        return image.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    let pixels = image.pixels().iter().map(|&p| (p + normal.sample(rng)).clamp(0.0, 1.0)).collect();
    Image::new(image.height(), image.width(), pixels).expect("same dims")
}

/// Mean squared norm of the curves' second derivative in canvas units.
pub fn curvature_penalty(params: &SplineParams) -> f64 {
    if params.curves.is_empty() {
        return 0.0;
    }
    let total: f64 = params
        .curves
        .iter()
        .map(|c| {
            sample_ts(CURVE_SAMPLES)
                .map(|t| {
                    let a = bezier_second(&c.control, t);
                    a[0] * a[0] + a[1] * a[1]
                })
                .sum::<f64>()
                / CURVE_SAMPLES as f64
        })
        .sum();
    total / params.curves.len() as f64
}

/// Bounding-box area of all visible curve samples as a fraction of the canvas.
pub fn size_penalty(params: &SplineParams) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    let mut any = false;
    for c in params.curves.iter().filter(|c| c.intensity > 0.0) {
        for t in sample_ts(CURVE_SAMPLES) {
            let p = bernstein(&c.control, t);
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
            any = true;
        }
    }
    if !any {
        return 0.0;
    }
    ((x1 - x0) * (y1 - y0)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn straight(x0: f64, y0: f64, x1: f64, y1: f64, thickness: f64) -> Curve {
        let lerp = |t: f64| [x0 + (x1 - x0) * t, y0 + (y1 - y0) * t];
        Curve { control: [lerp(0.0), lerp(1.0 / 3.0), lerp(2.0 / 3.0), lerp(1.0)], thickness, intensity: 1.0 }
    }

    fn mnist_canvas() -> CanvasSpec {
        CanvasSpec::new(28, 28, 0.0, 1.0)
    }

    #[test]
    fn squash_midpoints_and_saturation() {
        let p = squash_params(&[0.0; 20], 2).unwrap();
        for c in &p.curves {
            assert!(c.control.iter().flatten().all(|&v| v == 0.5));
            assert_eq!(c.thickness, 1.5);
            assert_eq!(c.intensity, 0.5);
        }
        let mut raw = vec![0.0; 10];
        raw[0] = 800.0;
        raw[8] = 800.0;
        raw[9] = -800.0;
        let p = squash_params(&raw, 1).unwrap();
        assert_eq!(p.curves[0].control[0][0], 1.0);
        assert_eq!(p.curves[0].thickness, 2.5);
        assert_eq!(p.curves[0].intensity, 0.0);
        assert!(matches!(squash_params(&[0.0; 19], 2), Err(RenderError::WrongLength { .. })));
    }

    #[test]
    fn bezier_examples() {
        let c = [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        assert_eq!(bezier_point(&c, 0.0).unwrap(), c[0]);
        assert_eq!(bezier_point(&c, 1.0).unwrap(), c[3]);
        let mid = bezier_point(&c, 0.5).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-15 && (mid[1] - 0.75).abs() < 1e-15);
        let same = [[0.3, 0.7]; 4];
        for t in [0.0, 0.2, 0.77, 1.0] {
            let p = bezier_point(&same, t).unwrap();
            assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15);
        }
        assert!(matches!(bezier_point(&c, 1.5), Err(RenderError::OutOfRange(_))));
    }

    #[test]
    fn zero_intensity_gives_background() {
        let mut curve = straight(0.1, 0.1, 0.9, 0.9, 2.0);
        curve.intensity = 0.0;
        let spec = CanvasSpec::new(28, 28, 0.45, 0.0);
        let s = rasterize(&SplineParams { curves: vec![curve] }, &spec);
        assert!(s.image.pixels().iter().all(|&p| p == 0.45));
    }

    fn dense_oracle_inked(curve: &Curve, spec: &CanvasSpec) -> Vec<bool> {
        let pts = polyline(curve, spec, 4096);
        let mut out = vec![false; spec.height * spec.width];
        for py in 0..spec.height {
            for px in 0..spec.width {
                let c = [px as f64 + 0.5, py as f64 + 0.5];
                let d = pts
                    .iter()
                    .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                out[py * spec.width + px] = d < curve.thickness;
            }
        }
        out
    }

    pub(crate) fn iou(a: &[bool], b: &[bool]) -> f64 {
        let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
        let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn straight_stroke_matches_dense_sampling_oracle() {
        let spec = mnist_canvas();
        for (i, curve) in [
            straight(0.1, 0.2, 0.85, 0.7, 1.7),
            straight(0.5, 0.05, 0.52, 0.95, 2.2),
            straight(0.2, 0.8, 0.8, 0.8, 1.0),
        ]
        .iter()
        .enumerate()
        {
            let s = rasterize(&SplineParams { curves: vec![*curve] }, &spec);
            let inked: Vec<bool> = s.image.pixels().iter().map(|&p| p > spec.background).collect();
            let oracle = dense_oracle_inked(curve, &spec);
            let score = iou(&inked, &oracle);
            assert!(score >= 0.99, "case {i}: IoU {score}");
        }
    }

    #[test]
    fn noise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grey = Image::filled(32, 32, 0.5);
        assert_eq!(add_noise(&grey, 0.0, &mut rng), grey);
        let noisy = add_noise(&grey, 0.05, &mut rng);
        let n = noisy.pixels().len() as f64;
        let mean = noisy.pixels().iter().sum::<f64>() / n;
        let var = noisy.pixels().iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // standard error of the sample std is about sigma / sqrt(2(n-1))
        let se = 0.05 / (2.0 * (n - 1.0)).sqrt();
        assert!((var.sqrt() - 0.05).abs() < 3.0 * se, "std {}", var.sqrt());
        let white = Image::filled(28, 28, 1.0);
        assert!(add_noise(&white, 0.3, &mut rng).pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn curvature_examples() {
        let line = SplineParams { curves: vec![straight(0.1, 0.2, 0.9, 0.6, 1.0)] };
        assert!(curvature_penalty(&line) < 1e-9);
        let dot = SplineParams { curves: vec![Curve { control: [[0.4, 0.4]; 4], thickness: 1.0, intensity: 1.0 }] };
        assert!(curvature_penalty(&dot) < 1e-15);
    }

    #[test]
    fn curvature_matches_second_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let params = squash_params(&raw, 2).unwrap();
        let h = 1e-4;
        let mut total = 0.0;
        for c in &params.curves {
            let mut acc = 0.0;
            for i in 0..CURVE_SAMPLES {
                // central differences, shifted inward at the endpoints
                let t = (i as f64 / (CURVE_SAMPLES - 1) as f64).clamp(h, 1.0 - h);
                let p = |t| bezier_point(&c.control, t).unwrap();
                let (a, b, m) = (p(t - h), p(t + h), p(t));
                let dd = [(a[0] - 2.0 * m[0] + b[0]) / (h * h), (a[1] - 2.0 * m[1] + b[1]) / (h * h)];
                acc += dd[0] * dd[0] + dd[1] * dd[1];
            }
            total += acc / CURVE_SAMPLES as f64;
        }
        let oracle = total / params.curves.len() as f64;
        let got = curvature_penalty(&params);
        assert!((got - oracle).abs() < 1e-4 * oracle.max(1.0), "{got} vs {oracle}");
    }

    #[test]
    fn size_examples() {
        let dot = SplineParams { curves: vec![Curve { control: [[0.4, 0.6]; 4], thickness: 1.0, intensity: 1.0 }] };
        assert!(size_penalty(&dot) < 1e-15);
        let full = SplineParams { curves: vec![straight(0.0, 0.0, 1.0, 1.0, 1.0)] };
        assert!((size_penalty(&full) - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = squash_params(&raw, 3).unwrap();
        let pts: Vec<Point> = p.curves.iter().flat_map(|c| c.control).collect();
        let centroid = [
            pts.iter().map(|q| q[0]).sum::<f64>() / pts.len() as f64,
            pts.iter().map(|q| q[1]).sum::<f64>() / pts.len() as f64,
        ];
        let mut shrunk = p.clone();
        for c in &mut shrunk.curves {
            for q in &mut c.control {
                q[0] = centroid[0] + 0.5 * (q[0] - centroid[0]);
                q[1] = centroid[1] + 0.5 * (q[1] - centroid[1]);
            }
        }
        assert!((size_penalty(&shrunk) - size_penalty(&p) / 4.0).abs() < 1e-9);
    }

    #[test]
    fn translation_equivariance() {
        let spec = mnist_canvas();
        let curve =
            Curve { control: [[0.2, 0.3], [0.35, 0.8], [0.6, 0.1], [0.7, 0.6]], thickness: 1.6, intensity: 1.0 };
        let inked = |c: &Curve| -> Vec<bool> {
            rasterize(&SplineParams { curves: vec![*c] }, &spec).image.pixels().iter().map(|&p| p > 0.0).collect()
        };
        let base = inked(&curve);
        let mut shifted = curve;
        for q in &mut shifted.control {
            q[0] += 1.0 / 28.0;
        }
        let moved = inked(&shifted);
        let mut expected = vec![false; 28 * 28];
        for y in 0..28 {
            for x in 1..28 {
                expected[y * 28 + x] = base[y * 28 + x - 1];
            }
        }
        assert!(iou(&moved, &expected) >= 0.95);
    }

    proptest! {
        #[test]
        fn squash_is_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0, slot in 0usize..10) {
            prop_assume!(a < b);
            let mut ra = vec![0.0; 10];
            let mut rb = vec![0.0; 10];
            ra[slot] = a;
            rb[slot] = b;
            let (pa, pb) = (squash_params(&ra, 1).unwrap(), squash_params(&rb, 1).unwrap());
            let field = |p: &SplineParams| -> f64 {
                let c = &p.curves[0];
                match slot {
                    8 => c.thickness,
                    9 => c.intensity,
                    s => c.control[s / 2][s % 2],
                }
            };
            prop_assert!(field(&pa) <= field(&pb));
            if b - a > 1e-6 && b.abs() < 30.0 && a.abs() < 30.0 {
                prop_assert!(field(&pa) < field(&pb));
            }
        }

        #[test]
        fn thicker_never_decreases_coverage(
            raw in prop::collection::vec(-3.0f64..3.0, 20),
            extra in 0.0f64..1.0,
        ) {
            let spec = mnist_canvas();
            let thin = squash_params(&raw, 2).unwrap();
            let mut thick = thin.clone();
            for c in &mut thick.curves {
                c.thickness = (c.thickness + extra).min(THICKNESS_RANGE.1);
            }
            let (a, b) = (coverage(&thin, &spec), coverage(&thick, &spec));
            prop_assert!(a.iter().zip(&b).all(|(x, y)| y >= x));
        }

        #[test]
        fn raster_stays_in_unit_range(raw in prop::collection::vec(-5.0f64..5.0, 30), bg in 0.0f64..1.0, ink in 0.0f64..1.0) {
            let spec = CanvasSpec::new(32, 32, bg, ink);
            let p = squash_params(&raw, 3).unwrap();
            let s = rasterize(&p, &spec);
            prop_assert!(s.image.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert_eq!(&s, &rasterize(&p, &spec));
        }
    }
}
