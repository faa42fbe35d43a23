//! Structural similarity over luminance, used as the severity
//! separation measure.

use crate::error::{Error, Result};
use crate::image::{ImageBuf, Plane};

const WINDOW_RADIUS: usize = 5; // 11x11 window
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// 1-D window taps, normalized to sum 1. The 2-D window is their outer
/// product, which equals the normalized isotropic Gaussian.
fn window_taps() -> [f64; 11] {
    let mut taps = [0.0; 11];
    let mut sum = 0.0;
    for (d, v) in taps.iter_mut().enumerate() {
        let x = d as f64 - WINDOW_RADIUS as f64;
        *v = (-(x * x) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        sum += *v;
    }
    for v in taps.iter_mut() {
        *v /= sum;
    }
    taps
}

/// Windowed local means over the interior (windows that fit entirely),
/// computed separably. Returns a (w-10) x (h-10) grid, row-major.
fn local_means(p: &Plane, taps: &[f64; 11]) -> Vec<f64> {
    let (w, h) = (p.width, p.height);
    let iw = w - 2 * WINDOW_RADIUS;
    // horizontal pass: full height, interior width
    let mut hpass = vec![0.0f64; iw * h];
    for y in 0..h {
        for x in 0..iw {
            let mut acc = 0.0;
            for (d, &t) in taps.iter().enumerate() {
                acc += t * p.get(x + d, y);
            }
            hpass[y * iw + x] = acc;
        }
    }
    let ih = h - 2 * WINDOW_RADIUS;
    let mut out = vec![0.0f64; iw * ih];
    for y in 0..ih {
        for x in 0..iw {
            let mut acc = 0.0;
            for (d, &t) in taps.iter().enumerate() {
                acc += t * hpass[(y + d) * iw + x];
            }
            out[y * iw + x] = acc;
        }
    }
    out
}

/// Mean SSIM between two images of equal dimensions, computed on the
/// Rec.601 luminance with an 11x11 Gaussian window (sigma 1.5) and the
/// standard constants C1 = 0.01^2, C2 = 0.03^2 in unit range. Windows
/// are evaluated only where they fit entirely inside the image.
pub fn ssim(a: &ImageBuf, b: &ImageBuf) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let la = a.luminance();
    let lb = b.luminance();
    ssim_planes(&la, &lb)
}

pub(crate) fn ssim_planes(la: &Plane, lb: &Plane) -> Result<f64> {
    let (w, h) = (la.width, la.height);
    if w < 11 || h < 11 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let taps = window_taps();
    let product = |p: &Plane, q: &Plane| Plane {
        width: w,
        height: h,
        data: p.data.iter().zip(&q.data).map(|(x, y)| x * y).collect(),
    };
    let mu_a = local_means(la, &taps);
    let mu_b = local_means(lb, &taps);
    let aa = local_means(&product(la, la), &taps);
    let bb = local_means(&product(lb, lb), &taps);
    let ab = local_means(&product(la, lb), &taps);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = aa[i] - ma * ma;
        let var_b = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
            / ((ma * ma + mb * mb + C1) * (var_a + var_b + C2));
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Rng64;

    fn random_img(w: usize, h: usize, seed: u64) -> ImageBuf {
        let mut rng = Rng64::new(seed);
        ImageBuf::from_fn(w, h, |_, _, _| rng.next_f64()).unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let img = random_img(16, 16, 1);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric() {
        let a = random_img(16, 16, 2);
        let b = random_img(16, 16, 3);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = random_img(16, 16, 4);
        let b = random_img(16, 12, 5);
        assert!(matches!(ssim(&a, &b), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn matches_direct_windowed_formula_oracle() {
        // two fixed 16x16 patterns, oracle evaluates the formula at
        // every interior window with unnormalized double loops
        let a = ImageBuf::from_fn(16, 16, |x, y, _| {
            0.5 + 0.4 * ((x as f64 * 0.7).sin() * (y as f64 * 0.5).cos())
        })
        .unwrap();
        let b = ImageBuf::from_fn(16, 16, |x, y, _| {
            0.5 + 0.3 * (((x + y) as f64 * 0.6).sin())
        })
        .unwrap();
        let got = ssim(&a, &b).unwrap();

        let la = a.luminance();
        let lb = b.luminance();
        // independent weight computation
        let mut wsum = 0.0;
        let mut weight = vec![vec![0.0f64; 11]; 11];
        for dy in 0..11usize {
            for dx in 0..11usize {
                let y = dy as f64 - 5.0;
                let x = dx as f64 - 5.0;
                weight[dy][dx] = (-(x * x + y * y) / 4.5).exp();
                wsum += weight[dy][dx];
            }
        }
        let mut total = 0.0;
        let mut n = 0;
        for cy in 5..11usize {
            for cx in 5..11usize {
                let (mut ma, mut mb) = (0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let w = weight[dy][dx] / wsum;
                        ma += w * la.get(cx + dx - 5, cy + dy - 5);
                        mb += w * lb.get(cx + dx - 5, cy + dy - 5);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let w = weight[dy][dx] / wsum;
                        let da = la.get(cx + dx - 5, cy + dy - 5) - ma;
                        let db = lb.get(cx + dx - 5, cy + dy - 5) - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                }
                total += ((2.0 * ma * mb + 1e-4) * (2.0 * cov + 9e-4))
                    / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                n += 1;
            }
        }
        let expect = total / n as f64;
        assert!((got - expect).abs() < 1e-6, "got {got} expect {expect}");
    }

    #[test]
    fn degrades_with_noise() {
        let img = random_img(32, 32, 6);
        let noisy = crate::corrupt::add_gaussian_noise(&img, 0.2, &mut Rng64::new(7)).unwrap();
        assert!(ssim(&img, &noisy).unwrap() < 0.95);
    }
}
