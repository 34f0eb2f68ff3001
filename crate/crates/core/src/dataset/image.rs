use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Write};
use std::path::Path;

use super::DatasetError;

/// 8-bit RGB raster, row-major, channels interleaved.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageBuffer({}x{})", self.width, self.height)
    }
}

/// Rounds to the nearest integer, ties to even, and clamps into `0..=255`.
pub fn round_to_u8(v: f64) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, DatasetError> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize * 3 {
            return Err(DatasetError::Dimensions(format!(
                "{width}x{height} RGB needs {} bytes, got {}",
                width as usize * height as usize * 3,
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        ImageBuffer {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ImageBuffer {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sum = [0u64; 3];
        for p in self.pixels() {
            for c in 0..3 {
                sum[c] += p[c] as u64;
            }
        }
        let n = self.pixel_count() as f64;
        sum.map(|s| s as f64 / n)
    }

    pub fn ensure_same_dims(&self, other: &ImageBuffer) -> Result<(), DatasetError> {
        if self.dims() != other.dims() {
            return Err(DatasetError::Dimensions(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Places images side by side; all must share a height.
    pub fn hconcat(images: &[&ImageBuffer]) -> Result<ImageBuffer, DatasetError> {
        let first = images
            .first()
            .ok_or_else(|| DatasetError::Dimensions("nothing to concatenate".into()))?;
        let height = first.height;
        if images.iter().any(|i| i.height != height) {
            return Err(DatasetError::Dimensions("heights differ".into()));
        }
        let width: u32 = images.iter().map(|i| i.width).sum();
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height as usize {
            for img in images {
                let row = img.width as usize * 3;
                data.extend_from_slice(&img.data[y * row..(y + 1) * row]);
            }
        }
        ImageBuffer::new(width, height, data)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, DatasetError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| DatasetError::Png(e.to_string()))?;
            writer
                .write_image_data(&self.data)
                .map_err(|e| DatasetError::Png(e.to_string()))?;
            writer.finish().map_err(|e| DatasetError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, DatasetError> {
        decode(Cursor::new(bytes))
    }

    pub fn read_png(path: &Path) -> Result<Self, DatasetError> {
        let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
        decode(BufReader::new(file)).map_err(|e| match e {
            DatasetError::Png(msg) => DatasetError::Png(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<(), DatasetError> {
        let bytes = self.encode_png()?;
        let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).map_err(|e| DatasetError::io(path, e))?;
        w.flush().map_err(|e| DatasetError::io(path, e))
    }
}

fn decode<R: std::io::BufRead + std::io::Seek>(reader: R) -> Result<ImageBuffer, DatasetError> {
    let png_err = |e: png::DecodingError| DatasetError::Png(e.to_string());
    let mut decoder = png::Decoder::new(reader);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| DatasetError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    let data = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        png::ColorType::Indexed => {
            return Err(DatasetError::Png("unexpanded palette image".into()));
        }
    };
    ImageBuffer::new(info.width, info.height, data)
}

/// Bilinear resampling to `target × target` with pixel-centre alignment and
/// edge clamping.
pub fn resize_bilinear(img: &ImageBuffer, target: u32) -> Result<ImageBuffer, DatasetError> {
    if target == 0 {
        return Err(DatasetError::Dimensions("resize target must be ≥ 1".into()));
    }
    if img.dims() == (target, target) {
        return Ok(img.clone());
    }
    let axis = |out: u32, src: u32| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src as usize - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(target, img.width);
    let ys = axis(target, img.height);
    let w = img.width as usize;
    let src = img.data();
    let mut data = Vec::with_capacity(target as usize * target as usize * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let at = |x: usize, y: usize| src[(y * w + x) * 3 + c] as f64;
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                data.push(round_to_u8(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    ImageBuffer::new(target, target, data)
}
