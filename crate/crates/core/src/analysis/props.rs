use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::{average_image, AverageImage, ImageBuffer};

/// A random image and a partially perturbed copy, so pairs span small and
/// large differences.
fn pair(w: u32, h: u32, seed: u64) -> (ImageBuffer, ImageBuffer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<u8> = (0..w * h * 3).map(|_| rng.random()).collect();
    let a = ImageBuffer::new(w, h, data).unwrap();
    let p_change: f64 = rng.random();
    let spread: i32 = rng.random_range(1..=255);
    let mut b = a.clone();
    for v in b.data_mut() {
        if rng.random_bool(p_change) {
            *v = (*v as i32 + rng.random_range(-spread..=spread)).clamp(0, 255) as u8;
        }
    }
    (a, b)
}

fn oracle_mse(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.pixel(x, y), b.pixel(x, y));
            for c in 0..3 {
                s += (p[c] as f64 - q[c] as f64).powi(2);
            }
        }
    }
    s / (a.width() * a.height() * 3) as f64
}

fn oracle_changed(a: &ImageBuffer, b: &ImageBuffer, fuzz: f64) -> usize {
    let mut n = 0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.pixel(x, y), b.pixel(x, y));
            let sq: f64 = (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum();
            if sq.sqrt() / (255.0 * 3f64.sqrt()) > fuzz {
                n += 1;
            }
        }
    }
    n
}

/// Literal sliding-window SSIM with a full 2-D Gaussian window.
fn oracle_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (w, h) = (a.width() as usize, a.height() as usize);
    let l = |img: &ImageBuffer, x: usize, y: usize| {
        let [r, g, b] = img.pixel(x as u32, y as u32);
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    };
    let k = SSIM_WINDOW;
    let mut win = vec![vec![0.0; k]; k];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            total += *v;
        }
    }
    let mut sum = 0.0;
    let mut count = 0;
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let g = win[i][j] / total;
                    mx += g * l(a, x0 + j, y0 + i);
                    my += g * l(b, x0 + j, y0 + i);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let g = win[i][j] / total;
                    let dx = l(a, x0 + j, y0 + i) - mx;
                    let dy = l(b, x0 + j, y0 + i) - my;
                    vx += g * dx * dx;
                    vy += g * dy * dy;
                    cov += g * dx * dy;
                }
            }
            sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            count += 1;
        }
    }
    sum / count as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_match_brute_force(w in 16u32..=64, h in 16u32..=64, seed: u64, fuzz in 0.0f64..0.3) {
        let (a, b) = pair(w, h, seed);
        prop_assert_eq!(mse(&a, &b).unwrap(), oracle_mse(&a, &b));
        let d = diff_image(&a, &b, fuzz).unwrap();
        prop_assert_eq!(d.changed(), oracle_changed(&a, &b, fuzz));
        let s = ssim(&a, &b).unwrap();
        prop_assert!((s - oracle_ssim(&a, &b)).abs() < 1e-6);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn metrics_are_symmetric(w in 11u32..=40, h in 11u32..=40, seed: u64, fuzz in 0.0f64..1.0) {
        let (a, b) = pair(w, h, seed);
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert_eq!(diff_image(&a, &b, fuzz).unwrap(), diff_image(&b, &a, fuzz).unwrap());
    }

    /// Identity detection: zero MSE, zero change at fuzz 0 and unit SSIM agree.
    /// Perturbations touch the green channel so they always move luma.
    #[test]
    fn identity_detectors_agree(w in 11u32..=24, seed: u64, touch in proptest::option::of((0u32..11, 0u32..11, 1u8..=255))) {
        let (a, _) = pair(w, w, seed);
        let mut b = a.clone();
        if let Some((x, y, delta)) = touch {
            let mut p = b.pixel(x, y);
            p[1] = p[1].wrapping_add(delta);
            b.set_pixel(x, y, p);
        }
        let zero_mse = mse(&a, &b).unwrap() == 0.0;
        prop_assert_eq!(zero_mse, change_proportion(&a, &b, 0.0).unwrap() == 0.0);
        prop_assert_eq!(zero_mse, ssim(&a, &b).unwrap() == 1.0);
        prop_assert_eq!(zero_mse, touch.is_none());
    }

    #[test]
    fn change_proportion_is_monotone_in_fuzz(seed: u64, f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
        let (a, b) = pair(16, 16, seed);
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        prop_assert!(change_proportion(&a, &b, hi).unwrap() <= change_proportion(&a, &b, lo).unwrap());
    }

    #[test]
    fn psnr_strictly_decreases_with_mse(m1 in 1e-6f64..1e6, m2 in 1e-6f64..1e6) {
        prop_assume!(m1 != m2);
        let (lo, hi) = if m1 < m2 { (m1, m2) } else { (m2, m1) };
        prop_assert!(psnr_from_mse(hi) < psnr_from_mse(lo));
    }

    #[test]
    fn uniform_shift_amplifies_uniformly(base in 0.0f64..255.0, shift in -255.0f64..255.0, gain in 0.1f64..10.0) {
        let t = (base + shift).clamp(0.0, 255.0);
        let d = t - base;
        let o = AverageImage::filled(5, 3, [base; 3]);
        let tr = AverageImage::filled(5, 3, [t; 3]);
        let expected = crate::dataset::round_to_u8((128.0 + gain * d).clamp(0.0, 255.0));
        for img in amplified_change_image(&o, &tr, gain).unwrap() {
            prop_assert!(img.pixels().all(|p| p == [expected; 3]));
        }
    }

    #[test]
    fn channel_stats_ignore_set_order(seed: u64, n in 2usize..8, rot in 0usize..8) {
        let set: Vec<(ImageBuffer, ImageBuffer)> =
            (0..n).map(|i| pair(6, 5, seed.wrapping_add(i as u64))).collect();
        let stats = |pairs: &[(ImageBuffer, ImageBuffer)]| {
            let o = average_image(pairs.iter().map(|p| &p.0)).unwrap();
            let t = average_image(pairs.iter().map(|p| &p.1)).unwrap();
            channel_stats(&o, &t).unwrap()
        };
        let mut shuffled = set.clone();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        prop_assert_eq!(stats(&set), stats(&shuffled));
    }
}

#[test]
fn batch_metrics_compose_scalar_ops() {
    let pairs: Vec<_> = (0..100).map(|i| pair(16, 16, 1000 + i)).collect();
    let m = batch_metrics(&pairs, DEFAULT_FUZZ).unwrap();
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&ImageBuffer, &ImageBuffer) -> f64| {
        pairs.iter().map(|(a, b)| f(a, b)).sum::<f64>() / n
    };
    assert_eq!(m.mse, mean(&|a, b| mse(a, b).unwrap()));
    assert_eq!(m.psnr, mean(&|a, b| psnr(a, b).unwrap()));
    assert_eq!(m.ssim, mean(&|a, b| ssim(a, b).unwrap()));
    assert_eq!(
        m.change_proportion,
        mean(&|a, b| change_proportion(a, b, DEFAULT_FUZZ).unwrap())
    );
}
