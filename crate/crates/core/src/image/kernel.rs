//! Point-spread functions and convolution shared by the blur kernels.

use crate::error::{Error, Result};
use crate::image::{ImageBuf, Plane};

/// Square normalized kernel of side 2*radius + 1.
#[derive(Debug, Clone)]
pub struct Kernel2D {
    radius: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    /// Builds from raw weights, normalizing to unit sum.
    pub fn from_weights(radius: usize, mut weights: Vec<f64>) -> Self {
        let side = 2 * radius + 1;
        assert_eq!(weights.len(), side * side);
        let sum: f64 = weights.iter().sum();
        assert!(sum > 0.0, "kernel weights must have positive sum");
        for w in &mut weights {
            *w /= sum;
        }
        Kernel2D { radius, weights }
    }

    pub fn identity() -> Self {
        Kernel2D {
            radius: 0,
            weights: vec![1.0],
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let side = 2 * self.radius + 1;
        let x = (dx + self.radius as isize) as usize;
        let y = (dy + self.radius as isize) as usize;
        self.weights[y * side + x]
    }
}

/// Filled-disk PSF. A radius below 1 degenerates to the identity.
pub fn disk_kernel(radius: f64) -> Result<Kernel2D> {
    if radius <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "disk radius",
            value: radius,
        });
    }
    let r = radius.floor() as usize;
    if r == 0 {
        return Ok(Kernel2D::identity());
    }
    let side = 2 * r + 1;
    let mut weights = vec![0.0; side * side];
    for dy in -(r as isize)..=(r as isize) {
        for dx in -(r as isize)..=(r as isize) {
            if (dx * dx + dy * dy) as f64 <= radius * radius {
                weights[(dy + r as isize) as usize * side + (dx + r as isize) as usize] = 1.0;
            }
        }
    }
    Ok(Kernel2D::from_weights(r, weights))
}

/// 2-D Gaussian truncated at 3 sigma.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel2D> {
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "gaussian sigma",
            value: sigma,
        });
    }
    let r = (3.0 * sigma).ceil() as usize;
    let side = 2 * r + 1;
    let mut weights = vec![0.0; side * side];
    for dy in -(r as isize)..=(r as isize) {
        for dx in -(r as isize)..=(r as isize) {
            let d2 = (dx * dx + dy * dy) as f64;
            weights[(dy + r as isize) as usize * side + (dx + r as isize) as usize] =
                (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    Ok(Kernel2D::from_weights(r, weights))
}

/// Antialiased line-segment PSF of the given length through the kernel
/// center, rasterized by bilinear splatting of dense samples along the
/// segment.
pub fn motion_kernel(length: f64, angle: f64) -> Result<Kernel2D> {
    if length <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "motion length",
            value: length,
        });
    }
    let half = (length - 1.0) / 2.0;
    let r = half.ceil().max(0.0) as usize;
    let side = 2 * r + 1;
    let mut weights = vec![0.0; side * side];
    let (dir_y, dir_x) = angle.sin_cos();
    let steps = (length * 16.0).ceil() as usize;
    for i in 0..=steps {
        let t = -half + length.min(half * 2.0).max(0.0) * i as f64 / steps as f64;
        let t = if length <= 1.0 { 0.0 } else { t };
        let x = r as f64 + t * dir_x;
        let y = r as f64 + t * dir_y;
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let mut splat = |xx: usize, yy: usize, w: f64| {
            if xx < side && yy < side {
                weights[yy * side + xx] += w;
            }
        };
        splat(x0, y0, (1.0 - fx) * (1.0 - fy));
        splat(x0 + 1, y0, fx * (1.0 - fy));
        splat(x0, y0 + 1, (1.0 - fx) * fy);
        splat(x0 + 1, y0 + 1, fx * fy);
        if length <= 1.0 {
            break;
        }
    }
    Ok(Kernel2D::from_weights(r, weights))
}

/// Per-channel 2-D convolution with reflect padding; output dimensions
/// equal the input's and samples are clamped to [0, 1].
pub fn convolve(img: &ImageBuf, k: &Kernel2D) -> Result<ImageBuf> {
    let r = k.radius() as isize;
    if k.radius() * 2 + 1 > img.width() || k.radius() * 2 + 1 > img.height() {
        return Err(Error::KernelExceedsImage);
    }
    ImageBuf::from_fn(img.width(), img.height(), |x, y, c| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                acc += k.weight(dx, dy) * img.get_reflect(x as isize + dx, y as isize + dy, c);
            }
        }
        acc
    })
}

/// 2-D convolution of a single-channel plane with reflect padding,
/// without clamping.
pub fn convolve_plane(plane: &Plane, k: &Kernel2D) -> Plane {
    let r = k.radius() as isize;
    let mut out = Plane::new(plane.width, plane.height);
    for y in 0..plane.height {
        for x in 0..plane.width {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    acc += k.weight(dx, dy) * plane.get_reflect(x as isize + dx, y as isize + dy);
                }
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with reflect padding, clamped at exit.
pub fn gaussian_blur(img: &ImageBuf, sigma: f64) -> Result<ImageBuf> {
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "gaussian sigma",
            value: sigma,
        });
    }
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let horizontal = ImageBuf::from_fn(img.width(), img.height(), |x, y, c| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * img.get_reflect(x as isize + i as isize - r, y as isize, c))
            .sum()
    })?;
    ImageBuf::from_fn(img.width(), img.height(), |x, y, c| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * horizontal.get_reflect(x as isize, y as isize + i as isize - r, c))
            .sum()
    })
}

/// Separable Gaussian blur of a single-channel plane (no clamping;
/// planes carry signed fields).
pub fn gaussian_blur_plane(plane: &Plane, sigma: f64) -> Plane {
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let mut horizontal = Plane::new(plane.width, plane.height);
    for y in 0..plane.height {
        for x in 0..plane.width {
            let v = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * plane.get_reflect(x as isize + i as isize - r, y as isize))
                .sum();
            horizontal.set(x, y, v);
        }
    }
    let mut out = Plane::new(plane.width, plane.height);
    for y in 0..plane.height {
        for x in 0..plane.width {
            let v = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horizontal.get_reflect(x as isize, y as isize + i as isize - r))
                .sum();
            out.set(x, y, v);
        }
    }
    out
}
