use crate::dataset::ImageBuffer;

use super::{same_dims, AnalysisError};

pub const DEFAULT_FUZZ: f64 = 0.05;

/// Per-channel absolute differences plus the mask of pixels counted as changed.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffImage {
    diff: ImageBuffer,
    mask: Vec<bool>,
}

impl DiffImage {
    pub fn diff(&self) -> &ImageBuffer {
        &self.diff
    }

    /// Row-major, one flag per pixel.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn changed(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn proportion(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.changed() as f64 / self.mask.len() as f64
    }

    /// The difference raster with unchanged pixels painted black.
    pub fn render(&self) -> ImageBuffer {
        let mut out = self.diff.clone();
        for (px, keep) in out.data_mut().chunks_exact_mut(3).zip(&self.mask) {
            if !keep {
                px.fill(0);
            }
        }
        out
    }
}

/// Euclidean length of a difference pixel, normalized so white is 1.
pub fn color_distance(d: [u8; 3]) -> f64 {
    let sq: u32 = d.iter().map(|&c| c as u32 * c as u32).sum();
    (sq as f64 / (3.0 * 255.0 * 255.0)).sqrt()
}

pub fn diff_image(a: &ImageBuffer, b: &ImageBuffer, fuzz: f64) -> Result<DiffImage, AnalysisError> {
    same_dims(a.dims(), b.dims())?;
    if !(0.0..=1.0).contains(&fuzz) {
        return Err(AnalysisError::Fuzz(fuzz));
    }
    let data: Vec<u8> = a.data().iter().zip(b.data()).map(|(x, y)| x.abs_diff(*y)).collect();
    let mask = data
        .chunks_exact(3)
        .map(|p| color_distance([p[0], p[1], p[2]]) > fuzz)
        .collect();
    let diff = ImageBuffer::new(a.width(), a.height(), data).expect("same layout as input");
    Ok(DiffImage { diff, mask })
}

pub fn change_proportion(a: &ImageBuffer, b: &ImageBuffer, fuzz: f64) -> Result<f64, AnalysisError> {
    diff_image(a, b, fuzz).map(|d| d.proportion())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_have_no_change() {
        let a = ImageBuffer::from_fn(5, 4, |x, y| [x as u8 * 40, y as u8 * 50, 7]);
        let d = diff_image(&a, &a, DEFAULT_FUZZ).unwrap();
        assert!(d.diff().data().iter().all(|v| *v == 0));
        assert_eq!(d.changed(), 0);
        assert_eq!(change_proportion(&a, &a, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn black_against_white_changes_everything_below_full_fuzz() {
        let a = ImageBuffer::filled(3, 3, [0, 0, 0]);
        let b = ImageBuffer::filled(3, 3, [255, 255, 255]);
        for fuzz in [0.0, 0.05, 0.5, 0.999] {
            let d = diff_image(&a, &b, fuzz).unwrap();
            assert!(d.diff().data().iter().all(|v| *v == 255));
            assert_eq!(d.proportion(), 1.0);
        }
        assert_eq!(change_proportion(&a, &b, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_channel_threshold_at_five_percent() {
        let base = ImageBuffer::filled(1, 1, [100, 100, 100]);
        let small = ImageBuffer::filled(1, 1, [112, 100, 100]);
        let large = ImageBuffer::filled(1, 1, [125, 100, 100]);
        assert!((color_distance([12, 0, 0]) - 0.02717).abs() < 1e-5);
        assert!((color_distance([25, 0, 0]) - 0.05660).abs() < 1e-5);
        assert_eq!(change_proportion(&base, &small, 0.05).unwrap(), 0.0);
        assert_eq!(change_proportion(&base, &large, 0.05).unwrap(), 1.0);
    }

    #[test]
    fn half_inverted_is_one_half() {
        let a = ImageBuffer::from_fn(4, 4, |x, _| [x as u8 * 10, 90, 200]);
        let b = ImageBuffer::from_fn(4, 4, |x, y| {
            let p = a.pixel(x, y);
            if y < 2 {
                p.map(|c| 255 - c)
            } else {
                p
            }
        });
        assert_eq!(change_proportion(&a, &b, DEFAULT_FUZZ).unwrap(), 0.5);
    }

    #[test]
    fn render_blacks_out_unchanged_pixels() {
        let a = ImageBuffer::filled(2, 1, [10, 10, 10]);
        let mut b = a.clone();
        b.set_pixel(0, 0, [12, 10, 10]);
        b.set_pixel(1, 0, [200, 10, 10]);
        let d = diff_image(&a, &b, DEFAULT_FUZZ).unwrap();
        assert_eq!(d.diff().pixel(0, 0), [2, 0, 0]);
        assert_eq!(d.render().pixel(0, 0), [0, 0, 0]);
        assert_eq!(d.render().pixel(1, 0), [190, 0, 0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let a = ImageBuffer::filled(2, 2, [0, 0, 0]);
        let b = ImageBuffer::filled(2, 3, [0, 0, 0]);
        assert!(matches!(diff_image(&a, &b, 0.05), Err(AnalysisError::Dimensions { .. })));
        assert_eq!(diff_image(&a, &a, 1.5), Err(AnalysisError::Fuzz(1.5)));
        assert!(diff_image(&a, &a, f64::NAN).is_err());
    }
}
