//! Small fixed-purpose RGB image buffer with binary PPM (P6) output.

use std::io::{self, Write};

pub const BLACK: [u8; 3] = [0, 0, 0];
pub const GRAY: [u8; 3] = [128, 128, 128];
pub const RED: [u8; 3] = [255, 0, 0];
pub const BLUE: [u8; 3] = [0, 0, 255];
pub const GREEN: [u8; 3] = [0, 128, 0];

/// 8-bit RGB image, row-major, top row first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw RGB bytes, `height * width * 3` long.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the rectangle with pixel rows `[top, top+h)` and columns
    /// `[left, left+w)`.
    pub fn fill_rect(&mut self, top: usize, left: usize, h: usize, w: usize, rgb: [u8; 3]) {
        for row in top..top + h {
            let base = (row * self.width + left) * 3;
            for px in self.data[base..base + w * 3].chunks_exact_mut(3) {
                px.copy_from_slice(&rgb);
            }
        }
    }

    /// Pixel bytes scaled into `[0, 1]` floats, same layout.
    pub fn to_normalized_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&b| b as f32 / 255.0).collect()
    }

    /// Encodes as binary PPM: `P6\n<width> <height>\n255\n` then raw RGB.
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&self.to_ppm_bytes())
    }

    pub fn save_ppm(&self, path: impl AsRef<std::path::Path>) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_ppm(io::BufWriter::new(file))
    }
}
