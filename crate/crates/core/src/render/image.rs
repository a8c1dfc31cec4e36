use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SilhouetteImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Argument(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Write as grayscale PNG with 8 or 16 bits per pixel.
    pub fn write_png(&self, path: &Path, bit_depth: u8) -> Result<()> {
        let depth = match bit_depth {
            8 => png::BitDepth::Eight,
            16 => png::BitDepth::Sixteen,
            other => return Err(Error::Argument(format!("unsupported bit depth {other}"))),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(depth);
        let data: Vec<u8> = match depth {
            png::BitDepth::Eight => self.values.iter().map(|v| (v * 255.0).round() as u8).collect(),
            _ => self
                .values
                .iter()
                .flat_map(|v| ((v * 65535.0).round() as u16).to_be_bytes())
                .collect(),
        };
        let to_err = |e: png::EncodingError| Error::Processing(format!("{}: {e}", path.display()));
        let mut writer = encoder.write_header().map_err(to_err)?;
        writer.write_image_data(&data).map_err(to_err)?;
        writer.finish().map_err(to_err)
    }

    /// Read an 8- or 16-bit PNG. Color images are averaged over their RGB channels;
    /// alpha is ignored.
    pub fn read_png(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let decoder = png::Decoder::new(BufReader::new(file));
        let to_err = |e: png::DecodingError| Error::Processing(format!("{}: {e}", path.display()));
        let mut reader = decoder.read_info().map_err(to_err)?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Processing(format!("{}: image too large", path.display())))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(to_err)?;
        let (w, h) = (info.width as usize, info.height as usize);
        let channels = info.color_type.samples();
        let (max, bytes) = match info.bit_depth {
            png::BitDepth::Eight => (255.0, 1),
            png::BitDepth::Sixteen => (65535.0, 2),
            other => {
                return Err(Error::Processing(format!(
                    "{}: unsupported bit depth {other:?}",
                    path.display()
                )))
            }
        };
        if info.color_type == png::ColorType::Indexed {
            return Err(Error::Processing(format!("{}: palette images are not supported", path.display())));
        }
        let sample = |i: usize| -> f64 {
            if bytes == 1 {
                buf[i] as f64
            } else {
                u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f64
            }
        };
        let gray = matches!(info.color_type, png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha);
        let mut values = Vec::with_capacity(w * h);
        for p in 0..w * h {
            let base = p * channels;
            let v = if gray {
                sample(base)
            } else {
                (sample(base) + sample(base + 1) + sample(base + 2)) / 3.0
            };
            values.push(v / max);
        }
        Ok(Self { width: w, height: h, values })
    }
}
