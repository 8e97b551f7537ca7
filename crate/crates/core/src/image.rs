use crate::numerics::Tensor;

/// Greyscale image with pixel values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("image of {height}x{width} needs {} pixels, got {got}", height * width)]
pub struct ImageDimError {
    pub height: usize,
    pub width: usize,
    pub got: usize,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self, ImageDimError> {
        if pixels.len() != height * width {
            return Err(ImageDimError { height, width, got: pixels.len() });
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, pixels: vec![value; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len().max(1) as f64
    }

    /// Quantizes to 8-bit greyscale.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }
}

/// Stacks same-sized images into a `[B, 1, H, W]` tensor.
pub fn batch_tensor<'a>(images: impl IntoIterator<Item = &'a Image>) -> Tensor {
    let mut data = Vec::new();
    let mut count = 0;
    let mut dims = (0, 0);
    for img in images {
        if count == 0 {
            dims = img.dims();
        }
        assert_eq!(img.dims(), dims, "batch images must share dimensions");
        data.extend_from_slice(img.pixels());
        count += 1;
    }
    Tensor::new(vec![count, 1, dims.0, dims.1], data).expect("batch shape")
}
