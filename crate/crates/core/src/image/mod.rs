//! Pixel carrier and shared raster machinery.
//!
//! All corruption math runs on `ImageBuf`: row-major RGB, f64 samples in
//! [0, 1]. 8-bit files are decoded by /255 and encoded by round(255 x);
//! stored sRGB values are treated directly as unit-range samples.

use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, RgbImage};

use crate::error::{Error, Result};

pub mod kernel;
pub mod rng;

pub use kernel::{
    convolve, convolve_plane, disk_kernel, gaussian_blur, gaussian_blur_plane, gaussian_kernel,
    motion_kernel, Kernel2D,
};
pub use rng::Rng64;

/// Minimum spatial extent the corruption kernels assume.
pub const MIN_DIM: usize = 8;

/// Reflect an index into [0, n) by mirroring at the borders
/// (symmetric padding, edge sample repeated).
pub fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    debug_assert!(n > 0);
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// H×W×3 RGB image, row-major, samples in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageBuf {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::ImageTooSmall { width, height });
        }
        Ok(ImageBuf {
            width,
            height,
            data: vec![0.0; width * height * Self::CHANNELS],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut img = ImageBuf::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                for c in 0..Self::CHANNELS {
                    let v = f(x, y, c);
                    img.set(x, y, c, v);
                }
            }
        }
        img.clamp_in_place();
        Ok(img)
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::ImageTooSmall { width, height });
        }
        assert_eq!(data.len(), width * height * Self::CHANNELS);
        let mut img = ImageBuf {
            width,
            height,
            data,
        };
        img.clamp_in_place();
        Ok(img)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        let mut img = ImageBuf::new(width, height)?;
        img.data.fill(value.clamp(0.0, 1.0));
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * Self::CHANNELS + c] = v;
    }

    /// Sample with reflect padding at integer coordinates possibly
    /// outside the image.
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize, c: usize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height), c)
    }

    /// Bilinear sample at fractional coordinates with reflect boundary.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as isize;
        let y0 = y0 as isize;
        let v00 = self.get_reflect(x0, y0, c);
        let v10 = self.get_reflect(x0 + 1, y0, c);
        let v01 = self.get_reflect(x0, y0 + 1, c);
        let v11 = self.get_reflect(x0 + 1, y0 + 1, c);
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    pub fn clamp_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Rec.601 luminance plane: Y = 0.299 R + 0.587 G + 0.114 B.
    pub fn luminance(&self) -> Plane {
        let mut out = Plane::new(self.width, self.height);
        for i in 0..self.width * self.height {
            let r = self.data[i * 3];
            let g = self.data[i * 3 + 1];
            let b = self.data[i * 3 + 2];
            out.data[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        }
        out
    }

    pub fn max_luminance(&self) -> f64 {
        self.luminance().data.iter().cloned().fold(0.0, f64::max)
    }

    /// Mean over all samples of all channels.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn hflip(&self) -> ImageBuf {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..Self::CHANNELS {
                    out.set(x, y, c, self.get(self.width - 1 - x, y, c));
                }
            }
        }
        out
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageBuf> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::OversizeCrop(w.max(h), self.width, self.height));
        }
        ImageBuf::from_fn(w, h, |x, y, c| self.get(x0 + x, y0 + y, c))
    }

    /// Bilinear resize. Coordinates map pixel centers to pixel centers.
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Result<ImageBuf> {
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        ImageBuf::from_fn(new_w, new_h, |x, y, c| {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            self.sample_bilinear(src_x, src_y, c)
        })
    }

    /// Constructor for small intermediate buffers (e.g. pixelate's
    /// downscaled stage) that may legitimately fall below `MIN_DIM`.
    pub(crate) fn from_fn_unchecked(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = ImageBuf {
            width,
            height,
            data: vec![0.0; width * height * Self::CHANNELS],
        };
        for y in 0..height {
            for x in 0..width {
                for c in 0..Self::CHANNELS {
                    img.set(x, y, c, f(x, y, c));
                }
            }
        }
        img.clamp_in_place();
        img
    }

    /// Area-averaging downscale; each target pixel integrates its exact
    /// source rectangle including fractional coverage. The result may be
    /// smaller than `MIN_DIM` (it is an intermediate, not a kernel input).
    pub fn downscale_area(&self, new_w: usize, new_h: usize) -> ImageBuf {
        assert!(new_w <= self.width && new_h <= self.height && new_w > 0 && new_h > 0);
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        ImageBuf::from_fn_unchecked(new_w, new_h, |x, y, c| {
            let x_lo = x as f64 * sx;
            let x_hi = (x + 1) as f64 * sx;
            let y_lo = y as f64 * sy;
            let y_hi = (y + 1) as f64 * sy;
            let mut acc = 0.0;
            let mut area = 0.0;
            let mut yy = y_lo.floor() as usize;
            while (yy as f64) < y_hi {
                let wy = (y_hi.min((yy + 1) as f64) - y_lo.max(yy as f64)).max(0.0);
                let mut xx = x_lo.floor() as usize;
                while (xx as f64) < x_hi {
                    let wx = (x_hi.min((xx + 1) as f64) - x_lo.max(xx as f64)).max(0.0);
                    acc += self.get(xx.min(self.width - 1), yy.min(self.height - 1), c) * wx * wy;
                    area += wx * wy;
                    xx += 1;
                }
                yy += 1;
            }
            acc / area
        })
    }

    pub fn upscale_nearest(&self, new_w: usize, new_h: usize) -> Result<ImageBuf> {
        ImageBuf::from_fn(new_w, new_h, |x, y, c| {
            let sx = (x * self.width) / new_w;
            let sy = (y * self.height) / new_h;
            self.get(sx, sy, c)
        })
    }

    /// Resize the short side to `size` then center-crop to size×size.
    pub fn center_crop_resize(&self, size: usize) -> Result<ImageBuf> {
        let (w, h) = (self.width as f64, self.height as f64);
        let scale = size as f64 / w.min(h);
        let rw = (w * scale).round().max(size as f64) as usize;
        let rh = (h * scale).round().max(size as f64) as usize;
        let resized = self.resize_bilinear(rw, rh)?;
        resized.crop((rw - size) / 2, (rh - size) / 2, size, size)
    }

    // ---- 8-bit conversions and file I/O ----

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        assert_eq!(bytes.len(), width * height * 3);
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::ImageTooSmall { width, height });
        }
        Ok(ImageBuf {
            width,
            height,
            data: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let dynamic = image::open(path)?;
        let rgb = dynamic.to_rgb8();
        ImageBuf::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let dynamic = image::load_from_memory(bytes)?;
        let rgb = dynamic.to_rgb8();
        ImageBuf::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        PngEncoder::new(&mut buf).write_image(
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            ExtendedColorType::Rgb8,
        )?;
        Ok(buf)
    }

    pub fn encode_jpeg(&self, quality: u8) -> Result<Vec<u8>> {
        let rgb = RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .expect("buffer size matches dimensions");
        let mut buf = Vec::new();
        JpegEncoder::new_with_quality(&mut buf, quality).encode_image(&rgb)?;
        Ok(buf)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }
}

/// Single-channel f64 raster (luminance, masks, displacement fields).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }
}
