use super::image::{round_to_u8, ImageBuffer};
use super::DatasetError;

/// Per-pixel, per-channel mean of an image set at double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageImage {
    width: u32,
    height: u32,
    mean: Vec<f64>,
}

impl AverageImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Interleaved RGB means.
    pub fn values(&self) -> &[f64] {
        &self.mean
    }

    /// Constant average, mostly for tests and fixtures.
    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        let mean = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        AverageImage {
            width,
            height,
            mean,
        }
    }

    pub fn from_image(img: &ImageBuffer) -> Self {
        AverageImage {
            width: img.width(),
            height: img.height(),
            mean: img.data().iter().map(|&v| v as f64).collect(),
        }
    }

    /// Spatial mean of each channel.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sum = [0.0f64; 3];
        for p in self.mean.chunks_exact(3) {
            for c in 0..3 {
                sum[c] += p[c];
            }
        }
        let n = (self.width as usize * self.height as usize) as f64;
        sum.map(|s| s / n)
    }

    /// 8-bit rendering, rounding half to even.
    pub fn to_image(&self) -> ImageBuffer {
        let data = self.mean.iter().map(|&v| round_to_u8(v)).collect();
        ImageBuffer::new(self.width, self.height, data).expect("dimensions carried over")
    }
}

/// Pixel-by-pixel average of a non-empty set of equally sized images.
///
/// Sums are exact integers in `u64`, so the result does not depend on the
/// order of the set.
pub fn average_image<'a, I>(images: I) -> Result<AverageImage, DatasetError>
where
    I: IntoIterator<Item = &'a ImageBuffer>,
{
    let mut iter = images.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| DatasetError::Dimensions("cannot average an empty set".into()))?;
    let mut sum: Vec<u64> = first.data().iter().map(|&v| v as u64).collect();
    let mut count = 1u64;
    for img in iter {
        first.ensure_same_dims(img)?;
        for (s, &v) in sum.iter_mut().zip(img.data()) {
            *s += v as u64;
        }
        count += 1;
    }
    Ok(AverageImage {
        width: first.width(),
        height: first.height(),
        mean: sum.into_iter().map(|s| s as f64 / count as f64).collect(),
    })
}
