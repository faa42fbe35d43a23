//! Input standardization: tile-wise contrast-limited histogram
//! equalization and a noise-gated non-local-means denoiser.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageBuf;

/// Contrast-limited adaptive histogram equalization settings.
#[derive(Debug, Clone, Copy)]
pub struct ClaheParams {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Clip limit as a multiple of the uniform bin height.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tile_rows: 8,
            tile_cols: 8,
            clip_limit: 2.0,
            bins: 256,
        }
    }
}

/// Non-local means settings. The filtering strength is `strength` times
/// the estimated noise level; images whose estimate falls below `gate`
/// are returned unchanged.
#[derive(Debug, Clone, Copy)]
pub struct NlMeansParams {
    pub patch_radius: usize,
    pub search_radius: usize,
    pub strength: f64,
    pub gate: f64,
}

impl Default for NlMeansParams {
    fn default() -> Self {
        NlMeansParams {
            patch_radius: 1,
            search_radius: 5,
            strength: 3.0,
            gate: 0.01,
        }
    }
}

/// Per-tile transfer function: a lookup table over histogram bins, or
/// `None` for a uniform tile, which maps through unchanged.
type TileLut = Option<Vec<f64>>;

fn tile_lut(values: &[f64], bins: usize, clip_limit: f64) -> TileLut {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return None;
    }
    let mut hist = vec![0.0f64; bins];
    for &v in values {
        hist[bin_of(v, bins)] += 1.0;
    }
    let n = values.len() as f64;
    let clip = clip_limit * n / bins as f64;
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > clip {
            excess += *h - clip;
            *h = clip;
        }
    }
    let share = excess / bins as f64;
    let mut lut = Vec::with_capacity(bins);
    let mut cdf = 0.0;
    for h in &hist {
        cdf += h + share;
        lut.push(cdf / n);
    }
    Some(lut)
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

fn map_value(lut: &TileLut, v: f64, bins: usize) -> f64 {
    match lut {
        None => v,
        Some(lut) => lut[bin_of(v, bins)],
    }
}

/// Tile boundary and center positions along one axis.
fn tile_edges(extent: usize, tiles: usize) -> Vec<(usize, usize, f64)> {
    (0..tiles)
        .map(|t| {
            let a = t * extent / tiles;
            let b = (t + 1) * extent / tiles;
            (a, b, (a + b) as f64 / 2.0 - 0.5)
        })
        .collect()
}

/// Neighbouring tile pair and interpolation weight for a coordinate.
fn tile_blend(edges: &[(usize, usize, f64)], pos: f64) -> (usize, usize, f64) {
    if pos <= edges[0].2 {
        return (0, 0, 0.0);
    }
    if pos >= edges[edges.len() - 1].2 {
        let last = edges.len() - 1;
        return (last, last, 0.0);
    }
    let hi = edges.iter().position(|e| e.2 >= pos).unwrap();
    let lo = hi - 1;
    let t = (pos - edges[lo].2) / (edges[hi].2 - edges[lo].2);
    (lo, hi, t)
}

/// Contrast-limited adaptive histogram equalization on the luminance
/// channel. Each tile's clipped histogram yields a monotone transfer
/// function; per-pixel output blends the four surrounding tile
/// transfers bilinearly, and the luminance shift is re-applied to the
/// color channels additively.
pub fn clahe(img: &ImageBuf, params: &ClaheParams) -> Result<ImageBuf> {
    if params.tile_rows < 2 || params.tile_cols < 2 {
        return Err(Error::InvalidParameter {
            name: "tile grid",
            value: params.tile_rows.min(params.tile_cols) as f64,
        });
    }
    if params.clip_limit < 1.0 {
        return Err(Error::InvalidParameter {
            name: "clip_limit",
            value: params.clip_limit,
        });
    }
    if params.bins < 2 {
        return Err(Error::InvalidParameter {
            name: "bins",
            value: params.bins as f64,
        });
    }
    if img.width() < params.tile_cols || img.height() < params.tile_rows {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }

    let luma = img.luminance();
    let row_edges = tile_edges(img.height(), params.tile_rows);
    let col_edges = tile_edges(img.width(), params.tile_cols);

    let mut luts: Vec<TileLut> = Vec::with_capacity(params.tile_rows * params.tile_cols);
    for &(y0, y1, _) in &row_edges {
        for &(x0, x1, _) in &col_edges {
            let mut values = Vec::with_capacity((y1 - y0) * (x1 - x0));
            for y in y0..y1 {
                for x in x0..x1 {
                    values.push(luma.get(x, y));
                }
            }
            luts.push(tile_lut(&values, params.bins, params.clip_limit));
        }
    }
    let lut_at = |r: usize, c: usize| &luts[r * params.tile_cols + c];

    let mut out = img.clone();
    for y in 0..img.height() {
        let (r0, r1, ty) = tile_blend(&row_edges, y as f64);
        for x in 0..img.width() {
            let (c0, c1, tx) = tile_blend(&col_edges, x as f64);
            let v = luma.get(x, y);
            let m00 = map_value(lut_at(r0, c0), v, params.bins);
            let m01 = map_value(lut_at(r0, c1), v, params.bins);
            let m10 = map_value(lut_at(r1, c0), v, params.bins);
            let m11 = map_value(lut_at(r1, c1), v, params.bins);
            let top = m00 + (m01 - m00) * tx;
            let bot = m10 + (m11 - m10) * tx;
            let mapped = top + (bot - top) * ty;
            let shift = mapped - v;
            for c in 0..3 {
                out.set(x, y, c, (img.get(x, y, c) + shift).clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// High-pass filter whose response to additive white noise has a known
/// gain, used to estimate the noise level.
const HP: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
/// L2 norm of `HP`: sqrt(4*1 + 4*4 + 16) = 6.
const HP_GAIN: f64 = 6.0;
/// Median absolute deviation of a standard normal.
const MAD_NORMAL: f64 = 0.6745;

/// Estimates the standard deviation of additive Gaussian noise on the
/// luminance channel: the median absolute response of a diagonal
/// high-pass filter, scaled by the filter's noise gain. The filter
/// annihilates constant, linear, and bilinear structure, so smooth
/// image content contributes little.
pub fn estimate_noise_sigma(img: &ImageBuf) -> Result<f64> {
    if img.width() < 16 || img.height() < 16 {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    let luma = img.luminance();
    let mut responses = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let mut acc = 0.0;
            for (dy, row) in HP.iter().enumerate() {
                for (dx, &w) in row.iter().enumerate() {
                    acc += w * luma.get_reflect(x as isize + dx as isize - 1, y as isize + dy as isize - 1);
                }
            }
            responses.push(acc.abs());
        }
    }
    responses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = responses.len() / 2;
    let median = if responses.len() % 2 == 0 {
        (responses[mid - 1] + responses[mid]) / 2.0
    } else {
        responses[mid]
    };
    Ok(median / MAD_NORMAL / HP_GAIN)
}

/// Noise-gated non-local means. If the estimated noise level is below
/// the gate the image is returned byte-identical; otherwise each pixel
/// becomes a convex combination of its search window, weighted by
/// noise-compensated patch similarity with strength h = k * sigma.
pub fn denoise_gated(img: &ImageBuf, params: &NlMeansParams) -> Result<ImageBuf> {
    if params.patch_radius < 1 || params.search_radius < params.patch_radius {
        return Err(Error::InvalidParameter {
            name: "search/patch radius",
            value: params.search_radius as f64,
        });
    }
    if params.strength <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "strength",
            value: params.strength,
        });
    }
    let sigma = estimate_noise_sigma(img)?;
    if sigma < params.gate {
        return Ok(img.clone());
    }
    let h = params.strength * sigma;
    let h2 = h * h;
    let bias = 2.0 * sigma * sigma;
    let pr = params.patch_radius as isize;
    let sr = params.search_radius as isize;
    let patch_samples = ((2 * pr + 1) * (2 * pr + 1) * 3) as f64;
    let (w, ht) = (img.width(), img.height());

    let patch_dist2 = |ax: isize, ay: isize, bx: isize, by: isize| -> f64 {
        let mut acc = 0.0;
        for dy in -pr..=pr {
            for dx in -pr..=pr {
                for c in 0..3 {
                    let a = img.get_reflect(ax + dx, ay + dy, c);
                    let b = img.get_reflect(bx + dx, by + dy, c);
                    acc += (a - b) * (a - b);
                }
            }
        }
        acc / patch_samples
    };

    let data: Vec<f64> = (0..ht)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut row = Vec::with_capacity(w * 3);
            for x in 0..w {
                let mut weight_sum = 0.0;
                let mut acc = [0.0f64; 3];
                for dy in -sr..=sr {
                    for dx in -sr..=sr {
                        let nx = x as isize + dx;
                        let ny = y as isize + dy;
                        let d2 = patch_dist2(x as isize, y as isize, nx, ny);
                        let weight = (-(d2 - bias).max(0.0) / h2).exp();
                        weight_sum += weight;
                        for (c, a) in acc.iter_mut().enumerate() {
                            *a += weight * img.get_reflect(nx, ny, c);
                        }
                    }
                }
                for a in acc {
                    row.push(a / weight_sum);
                }
            }
            row
        })
        .collect();
    ImageBuf::from_raw(w, ht, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Rng64;

    fn photo(w: usize, h: usize) -> ImageBuf {
        // smooth synthetic scene with mid-range values
        ImageBuf::from_fn(w, h, |x, y, c| {
            let u = x as f64 / w as f64;
            let v = y as f64 / h as f64;
            let base = 0.5
                + 0.22 * (u * 6.3 + c as f64).sin() * (v * 4.1).cos()
                + 0.08 * ((u + v) * 9.0).sin();
            base.clamp(0.05, 0.95)
        })
        .unwrap()
    }

    /// Adds the same per-pixel Gaussian draw to every channel so the
    /// luminance noise level equals `sigma` exactly.
    fn add_luma_noise(img: &ImageBuf, sigma: f64, seed: u64) -> ImageBuf {
        let mut rng = Rng64::new(seed);
        let mut out = img.clone();
        for y in 0..img.height() {
            for x in 0..img.width() {
                let n = sigma * rng.normal();
                for c in 0..3 {
                    out.set(x, y, c, (img.get(x, y, c) + n).clamp(0.0, 1.0));
                }
            }
        }
        out
    }

    #[test]
    fn clahe_constant_is_identity() {
        let img = ImageBuf::constant(32, 32, 0.37).unwrap();
        let out = clahe(&img, &ClaheParams::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn clahe_widens_low_contrast_ramp() {
        // horizontal ramp compressed into [0.4, 0.6]
        let img = ImageBuf::from_fn(64, 64, |x, _, _| 0.4 + 0.2 * x as f64 / 63.0).unwrap();
        let out = clahe(&img, &ClaheParams::default()).unwrap();
        let range = |i: &ImageBuf| {
            let l = i.luminance();
            let lo = l.data.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = l.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        assert!(
            range(&out) > range(&img) + 0.02,
            "range {} -> {}",
            range(&img),
            range(&out)
        );
    }

    #[test]
    fn clahe_unclipped_matches_plain_equalization_oracle() {
        // 2x2 grid of identical tiles; with an effectively infinite
        // clip limit every tile transfer equals plain equalization of
        // the shared content, and blending identical transfers is a
        // no-op.
        let mut rng = Rng64::new(5);
        let tile: Vec<f64> = (0..16 * 16).map(|_| rng.next_f64()).collect();
        let img = ImageBuf::from_fn(32, 32, |x, y, _| tile[(y % 16) * 16 + x % 16]).unwrap();
        let params = ClaheParams {
            tile_rows: 2,
            tile_cols: 2,
            clip_limit: 1e12,
            bins: 256,
        };
        let out = clahe(&img, &params).unwrap();

        // oracle: binned CDF of the tile contents
        let mut hist = [0.0f64; 256];
        for &v in &tile {
            hist[((v * 256.0) as usize).min(255)] += 1.0;
        }
        let mut cdf = [0.0f64; 256];
        let mut acc = 0.0;
        for (i, h) in hist.iter().enumerate() {
            acc += h;
            cdf[i] = acc / tile.len() as f64;
        }
        for y in 0..32 {
            for x in 0..32 {
                let v = img.get(x, y, 0);
                let expect = cdf[((v * 256.0) as usize).min(255)].clamp(0.0, 1.0);
                assert!(
                    (out.get(x, y, 0) - expect).abs() < 1e-9,
                    "({x},{y}): {} vs {}",
                    out.get(x, y, 0),
                    expect
                );
            }
        }
    }

    #[test]
    fn tile_transfer_is_monotone() {
        let mut rng = Rng64::new(9);
        let values: Vec<f64> = (0..400).map(|_| rng.next_f64()).collect();
        let lut = tile_lut(&values, 64, 2.0).expect("non-degenerate");
        assert!(lut.windows(2).all(|w| w[0] <= w[1]));
        assert!(tile_lut(&vec![0.5; 100], 64, 2.0).is_none());
    }

    #[test]
    fn clahe_rejects_bad_params() {
        let img = ImageBuf::constant(16, 16, 0.5).unwrap();
        let bad_grid = ClaheParams {
            tile_rows: 1,
            ..ClaheParams::default()
        };
        assert!(clahe(&img, &bad_grid).is_err());
        let bad_clip = ClaheParams {
            clip_limit: 0.5,
            ..ClaheParams::default()
        };
        assert!(clahe(&img, &bad_clip).is_err());
        let tiny = ImageBuf::constant(8, 8, 0.5).unwrap();
        let wide = ClaheParams {
            tile_rows: 9,
            tile_cols: 9,
            ..ClaheParams::default()
        };
        assert!(clahe(&tiny, &wide).is_err());
    }

    #[test]
    fn sigma_estimate_zero_on_constant() {
        let img = ImageBuf::constant(32, 32, 0.5).unwrap();
        assert_eq!(estimate_noise_sigma(&img).unwrap(), 0.0);
    }

    #[test]
    fn sigma_estimate_tracks_injected_noise() {
        let img = photo(64, 64);
        let noisy = add_luma_noise(&img, 0.05, 11);
        let est = estimate_noise_sigma(&noisy).unwrap();
        assert!((0.04..=0.06).contains(&est), "estimate {est}");
    }

    #[test]
    fn sigma_estimate_monotone_in_noise() {
        let img = photo(64, 64);
        let estimates: Vec<f64> = [0.02, 0.05, 0.1]
            .iter()
            .map(|&s| estimate_noise_sigma(&add_luma_noise(&img, s, 3)).unwrap())
            .collect();
        assert!(estimates[0] < estimates[1] && estimates[1] < estimates[2]);
    }

    #[test]
    fn sigma_estimate_requires_minimum_size() {
        let img = ImageBuf::constant(12, 12, 0.5).unwrap();
        assert!(matches!(
            estimate_noise_sigma(&img),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn gate_closed_is_exact_identity() {
        let img = photo(32, 32);
        let sigma = estimate_noise_sigma(&img).unwrap();
        assert!(sigma < 0.01, "fixture should pass the gate ({sigma})");
        let out = denoise_gated(&img, &NlMeansParams::default()).unwrap();
        assert_eq!(out, img);
        let constant = ImageBuf::constant(32, 32, 0.5).unwrap();
        let out = denoise_gated(&constant, &NlMeansParams::default()).unwrap();
        assert_eq!(out, constant);
    }

    #[test]
    fn denoising_reduces_mse() {
        let img = photo(48, 48);
        let noisy = add_luma_noise(&img, 0.1, 21);
        let denoised = denoise_gated(&noisy, &NlMeansParams::default()).unwrap();
        let mse = |a: &ImageBuf, b: &ImageBuf| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / a.data().len() as f64
        };
        assert!(
            mse(&denoised, &img) < mse(&noisy, &img),
            "mse {} -> {}",
            mse(&noisy, &img),
            mse(&denoised, &img)
        );
    }

    #[test]
    fn output_is_convex_combination_of_search_window() {
        let mut rng = Rng64::new(30);
        let img = ImageBuf::from_fn(24, 24, |_, _, _| rng.next_f64()).unwrap();
        let params = NlMeansParams {
            gate: 0.0,
            ..NlMeansParams::default()
        };
        let out = denoise_gated(&img, &params).unwrap();
        let sr = params.search_radius as isize;
        for y in 0..24usize {
            for x in 0..24usize {
                for c in 0..3 {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for dy in -sr..=sr {
                        for dx in -sr..=sr {
                            let v = img.get_reflect(x as isize + dx, y as isize + dy, c);
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    let v = out.get(x, y, c);
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_radii_rejected() {
        let img = photo(32, 32);
        let bad = NlMeansParams {
            patch_radius: 3,
            search_radius: 2,
            ..NlMeansParams::default()
        };
        assert!(denoise_gated(&img, &bad).is_err());
    }
}
