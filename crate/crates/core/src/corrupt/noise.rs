//! Noise-category kernels: gaussian, shot, impulse, speckle.

use crate::error::{Error, Result};
use crate::image::{ImageBuf, Rng64};

/// Additive i.i.d. Gaussian noise: out = clamp(img + N(0, sigma^2)).
pub fn add_gaussian_noise(img: &ImageBuf, sigma: f64, rng: &mut Rng64) -> Result<ImageBuf> {
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "noise sigma",
            value: sigma,
        });
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += sigma * rng.normal();
    }
    out.clamp_in_place();
    Ok(out)
}

/// Photon-count noise: out = clamp(Poisson(img * lambda) / lambda).
pub fn add_shot_noise(img: &ImageBuf, lambda: f64, rng: &mut Rng64) -> Result<ImageBuf> {
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "photon scale",
            value: lambda,
        });
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = rng.poisson(*v * lambda) / lambda;
    }
    out.clamp_in_place();
    Ok(out)
}

/// Salt-and-pepper in color: a `fraction` of pixels, chosen without
/// replacement, have each channel replaced by 0 or 1 independently.
pub fn add_impulse_noise(img: &ImageBuf, fraction: f64, rng: &mut Rng64) -> Result<ImageBuf> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter {
            name: "impulse fraction",
            value: fraction,
        });
    }
    let pixels = img.width() * img.height();
    let hits = (fraction * pixels as f64).round() as usize;
    let order = rng.permutation(pixels);
    let mut out = img.clone();
    for &p in order.iter().take(hits) {
        let x = p % img.width();
        let y = p / img.width();
        for c in 0..ImageBuf::CHANNELS {
            let salt = rng.next_u64() & 1 == 1;
            out.set(x, y, c, if salt { 1.0 } else { 0.0 });
        }
    }
    Ok(out)
}

/// Multiplicative noise: out = clamp(img + img * N(0, sigma^2)), so the
/// perturbation grows with the pixel intensity and vanishes at black.
pub fn add_speckle_noise(img: &ImageBuf, sigma: f64, rng: &mut Rng64) -> Result<ImageBuf> {
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "speckle sigma",
            value: sigma,
        });
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += *v * sigma * rng.normal();
    }
    out.clamp_in_place();
    Ok(out)
}
