//! Sign-evolution grids: rows are referents, columns are checkpoints.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::checkpoint::load_checkpoint;
use super::run::{checkpoint_path, CONFIG_FILE};
use super::{parse_config, AppError};
use crate::agents::sender_mean_signal;
use crate::game::sender_from_records;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignGridSpec {
    pub referents: Vec<usize>,
    pub epochs: Vec<usize>,
    /// Integer upscaling of each tile.
    pub scale: usize,
    pub agent: usize,
}

/// 8-bit greyscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GreyImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn render_sign_grid(run_dir: &Path, spec: &SignGridSpec) -> Result<GreyImage, AppError> {
    if spec.referents.is_empty() || spec.epochs.is_empty() || spec.scale == 0 {
        return Err(AppError::Usage("sign grid needs at least one referent, one epoch and scale >= 1".into()));
    }
    let missing: Vec<usize> = spec.epochs.iter().copied().filter(|&e| !checkpoint_path(run_dir, e).is_file()).collect();
    if !missing.is_empty() {
        return Err(AppError::MissingCheckpoints { run_dir: run_dir.to_path_buf(), epochs: missing });
    }
    let cfg = parse_config(&run_dir.join(CONFIG_FILE))?;
    let s = spec.scale;
    let mut grid: Option<GreyImage> = None;
    for (col, &epoch) in spec.epochs.iter().enumerate() {
        let ckpt = load_checkpoint(&checkpoint_path(run_dir, epoch))?;
        let (net, canvas) = sender_from_records(&cfg, &ckpt.records, spec.agent)?;
        let (th, tw) = (canvas.height * s, canvas.width * s);
        let g = grid.get_or_insert_with(|| GreyImage {
            width: tw * spec.epochs.len(),
            height: th * spec.referents.len(),
            pixels: vec![0; tw * spec.epochs.len() * th * spec.referents.len()],
        });
        for (row, &r) in spec.referents.iter().enumerate() {
            if r >= net.states() {
                return Err(AppError::Usage(format!("referent {r} outside 0..{}", net.states())));
            }
            let tile = sender_mean_signal(&net, r, &canvas)?.image.to_u8();
            for y in 0..th {
                for x in 0..tw {
                    g.pixels[(row * th + y) * g.width + col * tw + x] = tile[(y / s) * canvas.width + x / s];
                }
            }
        }
    }
    Ok(grid.expect("at least one epoch"))
}

pub fn write_png(path: &Path, img: &GreyImage) -> Result<(), AppError> {
    let io = |source| AppError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| AppError::Usage(format!("writing {}: {e}", path.display()));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&img.pixels).map_err(png_err)?;
    w.finish().map_err(png_err)
}

pub fn export_sign_grid(run_dir: &Path, spec: &SignGridSpec, out: &Path) -> Result<GreyImage, AppError> {
    let img = render_sign_grid(run_dir, spec)?;
    write_png(out, &img)?;
    Ok(img)
}
