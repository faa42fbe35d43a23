//! Blur-category kernels: defocus, glass, motion, zoom.

use crate::error::{Error, Result};
use crate::image::{convolve, disk_kernel, gaussian_blur, motion_kernel, ImageBuf, Rng64, MIN_DIM};

/// Out-of-focus PSF: convolution with a filled disk.
pub fn defocus_blur(img: &ImageBuf, radius: f64) -> Result<ImageBuf> {
    convolve(img, &disk_kernel(radius)?)
}

/// Camera-motion PSF: convolution with an antialiased line segment.
pub fn motion_blur(img: &ImageBuf, length: f64, angle: f64) -> Result<ImageBuf> {
    convolve(img, &motion_kernel(length, angle)?)
}

/// Frosted-glass blur: Gaussian blur, then `iterations` passes of
/// swapping each interior pixel with a uniformly chosen neighbor within
/// +-`max_shift`, then a final Gaussian blur. The swap stage is a
/// permutation of pixel values, scanned in row-major order.
pub fn glass_blur(
    img: &ImageBuf,
    sigma: f64,
    max_shift: usize,
    iterations: usize,
    rng: &mut Rng64,
) -> Result<ImageBuf> {
    if iterations == 0 {
        return Err(Error::InvalidParameter {
            name: "glass iterations",
            value: 0.0,
        });
    }
    let mut out = gaussian_blur(img, sigma)?;
    let (w, h) = (out.width(), out.height());
    let d = max_shift as isize;
    for _ in 0..iterations {
        for y in max_shift..h - max_shift {
            for x in max_shift..w - max_shift {
                let dx = rng.below(2 * max_shift as u64 + 1) as isize - d;
                let dy = rng.below(2 * max_shift as u64 + 1) as isize - d;
                let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                for c in 0..ImageBuf::CHANNELS {
                    let a = out.get(x, y, c);
                    let b = out.get(nx, ny, c);
                    out.set(x, y, c, b);
                    out.set(nx, ny, c, a);
                }
            }
        }
    }
    gaussian_blur(&out, sigma)
}

/// The zoom factor ladder for a severity: 1.0 up to `z_max` in steps of
/// 0.01, dense enough that adjacent zooms differ sub-pixel at 224 px.
pub fn zoom_ladder(z_max: f64) -> Vec<f64> {
    let steps = ((z_max - 1.0) / 0.01).round() as usize;
    (0..=steps).map(|i| 1.0 + 0.01 * i as f64).collect()
}

/// Radial zoom blur: the average over `factors` of the image rescaled
/// about its center by each factor. Sampling maps an output pixel to
/// `center + (pixel - center) / z` with bilinear interpolation, where
/// `center = (n - 1) / 2` in each dimension.
pub fn zoom_blur(img: &ImageBuf, factors: &[f64]) -> Result<ImageBuf> {
    if factors.is_empty() || factors[0] != 1.0 || factors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "zoom factors",
            value: factors.last().copied().unwrap_or(f64::NAN),
        });
    }
    let z_max = *factors.last().unwrap();
    let min_dim = img.width().min(img.height()) as f64;
    if min_dim / z_max < MIN_DIM as f64 {
        return Err(Error::InvalidParameter {
            name: "zoom crop below minimum size",
            value: z_max,
        });
    }
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    let inv_n = 1.0 / factors.len() as f64;
    ImageBuf::from_fn(img.width(), img.height(), |x, y, c| {
        factors
            .iter()
            .map(|&z| {
                img.sample_bilinear(cx + (x as f64 - cx) / z, cy + (y as f64 - cy) / z, c)
            })
            .sum::<f64>()
            * inv_n
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_img(w: usize, h: usize, seed: u64) -> ImageBuf {
        let mut rng = Rng64::new(seed);
        ImageBuf::from_fn(w, h, |_, _, _| rng.next_f64()).unwrap()
    }

    #[test]
    fn glass_blur_zero_shift_is_double_blur() {
        let img = random_img(16, 16, 1);
        let out = glass_blur(&img, 0.8, 0, 3, &mut Rng64::new(2)).unwrap();
        let double = gaussian_blur(&gaussian_blur(&img, 0.8).unwrap(), 0.8).unwrap();
        for (a, b) in out.data().iter().zip(double.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn glass_blur_swap_stage_is_a_permutation() {
        // replicate the swap stage alone and compare value multisets
        let img = random_img(12, 12, 3);
        let blurred = gaussian_blur(&img, 0.7).unwrap();
        let swapped = {
            // running glass_blur with a tiny final sigma is not exact;
            // instead check the full op preserves determinism and use
            // the internal stage here directly via a copy of the logic.
            let mut rng = Rng64::new(5);
            let mut out = blurred.clone();
            let (w, h, d) = (out.width(), out.height(), 2usize);
            for y in d..h - d {
                for x in d..w - d {
                    let dx = rng.below(2 * d as u64 + 1) as isize - d as isize;
                    let dy = rng.below(2 * d as u64 + 1) as isize - d as isize;
                    let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                    for c in 0..3 {
                        let a = out.get(x, y, c);
                        let b = out.get(nx, ny, c);
                        out.set(x, y, c, b);
                        out.set(nx, ny, c, a);
                    }
                }
            }
            out
        };
        let multiset = |img: &ImageBuf| {
            let mut v: Vec<u64> = img.data().iter().map(|f| f.to_bits()).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(multiset(&blurred), multiset(&swapped));
    }

    #[test]
    fn glass_blur_deterministic() {
        let img = random_img(16, 16, 9);
        let a = glass_blur(&img, 0.9, 2, 2, &mut Rng64::new(10)).unwrap();
        let b = glass_blur(&img, 0.9, 2, 2, &mut Rng64::new(10)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zoom_single_unit_factor_is_identity() {
        let img = random_img(16, 16, 4);
        let out = zoom_blur(&img, &[1.0]).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zoom_constant_image_unchanged() {
        let img = ImageBuf::constant(16, 16, 0.42).unwrap();
        let out = zoom_blur(&img, &zoom_ladder(1.2)).unwrap();
        for v in out.data() {
            assert!((v - 0.42).abs() < 1e-9);
        }
    }

    #[test]
    fn zoom_two_factors_matches_resample_oracle() {
        // 16x16 checkerboard; oracle resamples each factor independently
        // with its own bilinear gather, then averages.
        let img = ImageBuf::from_fn(16, 16, |x, y, _| ((x / 2 + y / 2) % 2) as f64).unwrap();
        let factors = [1.0, 1.25];
        let out = zoom_blur(&img, &factors).unwrap();
        let c = (16.0 - 1.0) / 2.0;
        for y in 0..16 {
            for x in 0..16 {
                for ch in 0..3 {
                    let mut expect = 0.0;
                    for z in factors {
                        expect += img.sample_bilinear(
                            c + (x as f64 - c) / z,
                            c + (y as f64 - c) / z,
                            ch,
                        );
                    }
                    expect /= factors.len() as f64;
                    assert!((out.get(x, y, ch) - expect).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zoom_rejects_oversized_factor() {
        let img = random_img(16, 16, 5);
        assert!(zoom_blur(&img, &[1.0, 3.0]).is_err());
        assert!(zoom_blur(&img, &[1.1, 1.2]).is_err()); // must start at 1
        assert!(zoom_blur(&img, &[1.0, 1.2, 1.1]).is_err()); // must ascend
    }

    #[test]
    fn zoom_ladder_is_aligned() {
        let ladder = zoom_ladder(1.11);
        assert_eq!(ladder.len(), 12);
        assert_eq!(ladder[0], 1.0);
        assert!((ladder[11] - 1.11).abs() < 1e-9);
    }
}
