//! Line charts of a metrics CSV, written as SVG or PNG.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::metrics::{read_metrics, MetricsTable};
use super::AppError;

const WIDTH: usize = 720;
const PANEL: usize = 220;
const MARGIN: usize = 40;
const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

fn series(table: &MetricsTable, epochs: &[Option<f64>], name: &str) -> Option<Series> {
    let values = table.column(name)?;
    let points: Vec<(f64, f64)> = epochs.iter().zip(values).filter_map(|(e, v)| Some((*e.as_ref()?, v?))).collect();
    (!points.is_empty()).then(|| Series { name: name.to_string(), points })
}

/// Success rates, probe entropy and referent sensitivities; empty panels
/// are dropped.
pub fn panels(table: &MetricsTable) -> Vec<Panel> {
    let epochs = table.column("epoch").unwrap_or_default();
    let pick = |names: &[&str]| names.iter().filter_map(|n| series(table, &epochs, n)).collect::<Vec<_>>();
    let pref_names: Vec<String> = table.columns.iter().filter(|c| c.starts_with("pref_r")).cloned().collect();
    let pref_refs: Vec<&str> = pref_names.iter().map(String::as_str).collect();
    [
        ("success", pick(&["comm_success", "env_accuracy"])),
        ("probe entropy", pick(&["probe_entropy_mean"])),
        ("referent sensitivity", pick(&pref_refs)),
    ]
    .into_iter()
    .filter(|(_, s)| !s.is_empty())
    .map(|(t, s)| Panel { title: t.to_string(), series: s })
    .collect()
}

fn bounds(panel: &Panel) -> (f64, f64, f64, f64) {
    let pts = panel.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    (x0, x1, y0, y1)
}

/// Maps data coordinates into the plot area of panel `i`.
fn project(i: usize, b: (f64, f64, f64, f64), (x, y): (f64, f64)) -> (f64, f64) {
    let (x0, x1, y0, y1) = b;
    let w = (WIDTH - 2 * MARGIN) as f64;
    let h = (PANEL - 2 * MARGIN) as f64;
    let px = MARGIN as f64 + (x - x0) / (x1 - x0) * w;
    let py = (i * PANEL + PANEL - MARGIN) as f64 - (y - y0) / (y1 - y0) * h;
    (px, py)
}

pub fn render_svg(panels: &[Panel]) -> String {
    let height = PANEL * panels.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        let b = bounds(panel);
        let top = i * PANEL + MARGIN;
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - 2 * MARGIN,
            PANEL - 2 * MARGIN
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="13">{}</text>"#,
            top - 8,
            panel.title
        );
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}" font-family="sans-serif" font-size="10">{:.3}</text><text x="4" y="{}" font-family="sans-serif" font-size="10">{:.3}</text>"#,
            top + 10,
            b.3,
            top + PANEL - 2 * MARGIN,
            b.2
        );
        for (j, ser) in panel.series.iter().enumerate() {
            let [r, g, bl] = PALETTE[j % PALETTE.len()];
            let pts: Vec<String> = ser
                .points
                .iter()
                .map(|&p| {
                    let (x, y) = project(i, b, p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="rgb({r},{g},{bl})" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                pts.join(" "),
                ser.name
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" fill="rgb({r},{g},{bl})">{}</text>"#,
                WIDTH - MARGIN - 140,
                top + 12 + 12 * j,
                ser.name
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

struct Canvas {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [u8; 3]) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            self.put((x0 + t * (x1 - x0)).round() as i64, (y0 + t * (y1 - y0)).round() as i64, c);
        }
    }
}

/// RGB raster of the same layout as the SVG, without text.
pub fn render_rgb(panels: &[Panel]) -> (usize, usize, Vec<u8>) {
    let height = PANEL * panels.len();
    let mut c = Canvas { width: WIDTH, height, rgb: vec![255; WIDTH * height * 3] };
    for (i, panel) in panels.iter().enumerate() {
        let (l, r) = (MARGIN as f64, (WIDTH - MARGIN) as f64);
        let (t, btm) = ((i * PANEL + MARGIN) as f64, (i * PANEL + PANEL - MARGIN) as f64);
        for (a, b) in [((l, t), (r, t)), ((r, t), (r, btm)), ((r, btm), (l, btm)), ((l, btm), (l, t))] {
            c.line(a, b, [0, 0, 0]);
        }
        let bx = bounds(panel);
        for (j, ser) in panel.series.iter().enumerate() {
            let col = PALETTE[j % PALETTE.len()];
            let pts: Vec<(f64, f64)> = ser.points.iter().map(|&p| project(i, bx, p)).collect();
            if pts.len() == 1 {
                c.line(pts[0], pts[0], col);
            }
            for w in pts.windows(2) {
                c.line(w[0], w[1], col);
            }
        }
    }
    (c.width, c.height, c.rgb)
}

/// Format follows the extension of `out` (`.svg` or `.png`).
pub fn plot(metrics: &Path, out: &Path) -> Result<(), AppError> {
    let table = read_metrics(metrics)?;
    let panels = panels(&table);
    if panels.is_empty() {
        return Err(AppError::Usage(format!("{}: nothing to plot", metrics.display())));
    }
    let io = |source| AppError::Io { path: out.to_path_buf(), source };
    match out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("svg") => std::fs::write(out, render_svg(&panels)).map_err(io),
        Some("png") => {
            let (w, h, rgb) = render_rgb(&panels);
            let file = File::create(out).map_err(io)?;
            let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let png_err = |e: png::EncodingError| AppError::Usage(format!("writing {}: {e}", out.display()));
            let mut wr = enc.write_header().map_err(png_err)?;
            wr.write_image_data(&rgb).map_err(png_err)?;
            wr.finish().map_err(png_err)
        }
        _ => Err(AppError::Usage(format!("{}: output must end in .svg or .png", out.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> MetricsTable {
        MetricsTable {
            columns: vec!["epoch".into(), "comm_success".into(), "probe_entropy_mean".into(), "pref_r0".into()],
            rows: vec![
                vec![Some(1.0), None, Some(1.2), None],
                vec![Some(2.0), Some(0.5), Some(1.0), None],
                vec![Some(3.0), Some(0.7), Some(0.8), None],
            ],
        }
    }

    #[test]
    fn blank_series_are_dropped() {
        let p = panels(&table());
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].series[0].points, vec![(2.0, 0.5), (3.0, 0.7)]);
    }

    #[test]
    fn projection_spans_plot_area() {
        let p = panels(&table());
        let b = bounds(&p[1]);
        assert_eq!(project(1, b, (1.0, 1.2)), (MARGIN as f64, (PANEL + MARGIN) as f64));
        assert_eq!(project(1, b, (3.0, 0.8)), ((WIDTH - MARGIN) as f64, (2 * PANEL - MARGIN) as f64));
    }

    #[test]
    fn svg_and_raster_have_one_row_per_panel() {
        let p = panels(&table());
        let svg = render_svg(&p);
        assert!(svg.starts_with("<svg") && svg.contains(&format!("height=\"{}\"", 2 * PANEL)));
        assert_eq!(svg.matches("<polyline").count(), 2);
        let (w, h, rgb) = render_rgb(&p);
        assert_eq!((w, h, rgb.len()), (WIDTH, 2 * PANEL, WIDTH * 2 * PANEL * 3));
        assert!(rgb.chunks(3).any(|px| px == PALETTE[0]));
    }
}
