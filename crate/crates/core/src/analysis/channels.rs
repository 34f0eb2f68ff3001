use crate::dataset::{round_to_u8, AverageImage, ImageBuffer};

use super::{same_dims, AnalysisError};

pub const DEFAULT_GAIN: f64 = 4.0;

/// Spatial channel means of an average original and its average translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelStats {
    pub original: [f64; 3],
    pub translated: [f64; 3],
    /// `100·(t − o)/o` per channel; `None` where the original mean is 0.
    pub diff_pct: [Option<f64>; 3],
}

pub fn percent_difference(original: f64, translated: f64) -> Option<f64> {
    (original != 0.0).then(|| 100.0 * (translated - original) / original)
}

pub fn channel_stats(
    avg_original: &AverageImage,
    avg_translated: &AverageImage,
) -> Result<ChannelStats, AnalysisError> {
    same_dims(avg_original.dims(), avg_translated.dims())?;
    let original = avg_original.channel_means();
    let translated = avg_translated.channel_means();
    let diff_pct = [0, 1, 2].map(|c| percent_difference(original[c], translated[c]));
    Ok(ChannelStats {
        original,
        translated,
        diff_pct,
    })
}

/// One grayscale image per channel: `128 + gain·(t − o)`, clamped, so grey
/// is no change, lighter an increase and darker a decrease.
pub fn amplified_change_image(
    avg_original: &AverageImage,
    avg_translated: &AverageImage,
    gain: f64,
) -> Result<[ImageBuffer; 3], AnalysisError> {
    same_dims(avg_original.dims(), avg_translated.dims())?;
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(AnalysisError::Gain(gain));
    }
    let (w, h) = avg_original.dims();
    let (o, t) = (avg_original.values(), avg_translated.values());
    Ok([0, 1, 2].map(|c| {
        ImageBuffer::from_fn(w, h, |x, y| {
            let i = ((y * w + x) * 3) as usize + c;
            let v = round_to_u8((128.0 + gain * (t[i] - o[i])).clamp(0.0, 255.0));
            [v, v, v]
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unchanged_average_has_zero_differences() {
        let o = AverageImage::filled(4, 4, [114.0, 116.0, 108.0]);
        let s = channel_stats(&o, &o).unwrap();
        assert_eq!(s.diff_pct, [Some(0.0); 3]);
    }

    #[test]
    fn zero_channel_is_undefined() {
        let o = AverageImage::filled(2, 2, [0.0, 10.0, 20.0]);
        let t = AverageImage::filled(2, 2, [5.0, 10.0, 10.0]);
        let s = channel_stats(&o, &t).unwrap();
        assert_eq!(s.diff_pct, [None, Some(0.0), Some(-50.0)]);
    }

    #[test]
    fn park_to_city_from_displayed_means() {
        let o = AverageImage::filled(1, 1, [114.0, 116.0, 108.0]);
        let t = AverageImage::filled(1, 1, [94.0, 93.0, 91.0]);
        let d = channel_stats(&o, &t).unwrap().diff_pct.map(Option::unwrap);
        let expected = [-17.5, -19.8, -15.7];
        for (v, e) in d.iter().zip(expected) {
            assert!((v - e).abs() < 0.05, "{v} vs {e}");
        }
    }

    #[test]
    fn amplification_plugs_in_and_clamps() {
        let o = AverageImage::filled(3, 2, [100.0, 100.0, 100.0]);
        let t = AverageImage::filled(3, 2, [100.0, 110.0, 36.0]);
        let [r, g, b] = amplified_change_image(&o, &t, DEFAULT_GAIN).unwrap();
        assert!(r.pixels().all(|p| p == [128; 3]));
        assert!(g.pixels().all(|p| p == [168; 3]));
        assert!(b.pixels().all(|p| p == [0; 3]));
        assert_eq!(
            amplified_change_image(&o, &t, 0.0).unwrap_err(),
            AnalysisError::Gain(0.0)
        );
    }
}
