//! Digital/photometric kernels: brightness, contrast, saturate,
//! elastic warp, pixelate, JPEG recompression.

use crate::error::{Error, Result};
use crate::image::{gaussian_blur_plane, ImageBuf, Plane, Rng64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotometricMode {
    Brightness,
    Contrast,
    Saturate,
}

/// Global photometric adjustments.
///
/// brightness: out = clamp(img + a), a in (-1, 1)
/// contrast:   out = clamp((img - mean) * a + mean), mean over all samples
/// saturate:   Rec.601 luma kept, chroma scaled by a >= 0
pub fn photometric(img: &ImageBuf, mode: PhotometricMode, amount: f64) -> Result<ImageBuf> {
    match mode {
        PhotometricMode::Brightness => {
            if amount <= -1.0 || amount >= 1.0 {
                return Err(Error::InvalidParameter {
                    name: "brightness amount",
                    value: amount,
                });
            }
            let mut out = img.clone();
            for v in out.data_mut() {
                *v += amount;
            }
            out.clamp_in_place();
            Ok(out)
        }
        PhotometricMode::Contrast => {
            if amount <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "contrast amount",
                    value: amount,
                });
            }
            let mean = img.mean();
            let mut out = img.clone();
            for v in out.data_mut() {
                *v = (*v - mean) * amount + mean;
            }
            out.clamp_in_place();
            Ok(out)
        }
        PhotometricMode::Saturate => {
            if amount < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "saturate amount",
                    value: amount,
                });
            }
            let lum = img.luminance();
            let mut out = img.clone();
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let yv = lum.get(x, y);
                    for c in 0..ImageBuf::CHANNELS {
                        out.set(x, y, c, yv + amount * (img.get(x, y, c) - yv));
                    }
                }
            }
            out.clamp_in_place();
            Ok(out)
        }
    }
}

/// Elastic deformation: i.i.d. uniform [-1, 1] displacement fields,
/// Gaussian-smoothed with `smoothing`, scaled by `displacement` (in
/// pixels), then a bilinear gather with reflect boundary.
///
/// The x-field is drawn first, then the y-field, each in row-major
/// order.
pub fn elastic(
    img: &ImageBuf,
    displacement: f64,
    smoothing: f64,
    rng: &mut Rng64,
) -> Result<ImageBuf> {
    if displacement < 0.0 {
        return Err(Error::InvalidParameter {
            name: "elastic displacement",
            value: displacement,
        });
    }
    if smoothing <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "elastic smoothing",
            value: smoothing,
        });
    }
    if displacement == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let field = |rng: &mut Rng64| {
        let mut p = Plane::new(w, h);
        for v in &mut p.data {
            *v = rng.uniform(-1.0, 1.0);
        }
        gaussian_blur_plane(&p, smoothing)
    };
    let dx = field(rng);
    let dy = field(rng);
    ImageBuf::from_fn(w, h, |x, y, c| {
        img.sample_bilinear(
            x as f64 + displacement * dx.get(x, y),
            y as f64 + displacement * dy.get(x, y),
            c,
        )
    })
}

/// Low-resolution look: box-average downscale by `factor`, then nearest
/// neighbor back to the original size.
pub fn pixelate(img: &ImageBuf, factor: f64) -> Result<ImageBuf> {
    if factor <= 1.0 {
        return Err(Error::InvalidParameter {
            name: "pixelate factor",
            value: factor,
        });
    }
    let new_w = (img.width() as f64 / factor).round() as usize;
    let new_h = (img.height() as f64 / factor).round() as usize;
    if new_w < 1 || new_h < 1 {
        return Err(Error::InvalidParameter {
            name: "pixelate factor (downscaled below 1 px)",
            value: factor,
        });
    }
    img.downscale_area(new_w, new_h)
        .upscale_nearest(img.width(), img.height())
}

/// Round trip through a baseline JPEG encode at `quality` in [1, 100].
pub fn jpeg_recompress(img: &ImageBuf, quality: u8) -> Result<ImageBuf> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidParameter {
            name: "jpeg quality",
            value: f64::from(quality),
        });
    }
    let bytes = img.encode_jpeg(quality)?;
    ImageBuf::decode(&bytes)
}
