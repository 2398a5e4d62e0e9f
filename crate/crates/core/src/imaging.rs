//! Grayscale patch primitives: integral images, box averages, keypoint patch
//! normalization and training-time augmentation.
//!
//! Coordinates follow `(x = column, y = row)` with the origin at the top-left
//! pixel. Integer coordinates address pixel centres, so the geometric centre
//! of a `W x H` image is `((W - 1) / 2, (H - 1) / 2)`.
//!
//! A box of side `s` centred at `(x, y)` covers columns
//! `x - s/2 ..= x + ceil(s/2) - 1` (integer division) and the same rows, so
//! even sides lean towards the top-left. Boxes are clamped to the grid and
//! averages use the clamped area.

use std::ops::{Add, Sub};

use num_traits::Zero;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Side length of a normalized patch.
pub const PATCH_SIZE: usize = 32;
/// Number of pixels in a normalized patch.
pub const PATCH_PIXELS: usize = PATCH_SIZE * PATCH_SIZE;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixel read with border replication.
    #[inline]
    fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        f64::from(self.get(x, y))
    }
}

/// Summed-area table with one zero row and column prepended:
/// `at(r, c)` is the sum of all pixels with `row < r` and `col < c`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage<S> {
    width: usize,
    height: usize,
    sums: Vec<S>,
}

/// An axis-aligned pixel rectangle with half-open bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Clamped box of side `side` centred at `(x, y)` on a `width x height` grid.
pub fn clamped_box(x: i64, y: i64, side: i64, width: usize, height: usize) -> Result<PixelRect> {
    let inside = x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;
    if side < 1 || !inside {
        return Err(Error::InvalidBox {
            x,
            y,
            side,
            width,
            height,
        });
    }
    let lo = side / 2;
    let hi = side - lo; // ceil(side / 2)
    Ok(PixelRect {
        x0: (x - lo).max(0) as usize,
        y0: (y - lo).max(0) as usize,
        x1: (x + hi).min(width as i64) as usize,
        y1: (y + hi).min(height as i64) as usize,
    })
}

impl<S> IntegralImage<S>
where
    S: Copy + Zero + Add<Output = S> + Sub<Output = S>,
{
    fn build(width: usize, height: usize, value: impl Fn(usize, usize) -> S) -> Self {
        let stride = width + 1;
        let mut sums = vec![S::zero(); stride * (height + 1)];
        for y in 0..height {
            let mut row_sum = S::zero();
            for x in 0..width {
                row_sum = row_sum + value(x, y);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row_sum;
            }
        }
        IntegralImage {
            width,
            height,
            sums,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Entry `(r, c)` with `r <= height`, `c <= width`.
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> S {
        self.sums[r * (self.width + 1) + c]
    }

    /// Sum over the half-open rectangle.
    #[inline]
    pub fn rect_sum(&self, rect: PixelRect) -> S {
        // add before subtracting so unsigned sums never underflow
        self.at(rect.y1, rect.x1) + self.at(rect.y0, rect.x0)
            - self.at(rect.y0, rect.x1)
            - self.at(rect.y1, rect.x0)
    }

    /// Sum and pixel count of the clamped box of side `side` centred at `(x, y)`.
    pub fn box_sum(&self, x: i64, y: i64, side: i64) -> Result<(S, usize)> {
        let rect = clamped_box(x, y, side, self.width, self.height)?;
        Ok((self.rect_sum(rect), rect.area()))
    }
}

impl<T: Real> IntegralImage<T> {
    /// Mean over the clamped box.
    #[inline]
    pub fn box_mean(&self, x: i64, y: i64, side: i64) -> Result<T> {
        let (sum, area) = self.box_sum(x, y, side)?;
        Ok(sum / T::of(area as f64))
    }
}

/// Integral image of an 8-bit image, built in one pass.
pub fn integral_image(img: &GrayImage) -> IntegralImage<u64> {
    IntegralImage::build(img.width, img.height, |x, y| u64::from(img.get(x, y)))
}

/// Average intensity of the clamped `side x side` box centred at `center`.
pub fn box_average(ii: &IntegralImage<u64>, center: (i64, i64), side: i64) -> Result<f64> {
    let (sum, area) = ii.box_sum(center.0, center.1, side)?;
    Ok(sum as f64 / area as f64)
}

/// A normalized 32x32 patch with real-valued intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<T> {
    data: Vec<T>,
}

impl<T: Real> Patch<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        if data.len() != PATCH_PIXELS {
            return Err(Error::ShapeMismatch {
                expected: PATCH_PIXELS,
                actual: data.len(),
            });
        }
        let max = T::of(255.0);
        if let Some(bad) = data.iter().find(|v| !(**v >= T::zero() && **v <= max)) {
            return Err(Error::InvalidArgument(format!(
                "patch intensity {bad} outside [0, 255]"
            )));
        }
        Ok(Patch { data })
    }

    pub fn constant(value: T) -> Self {
        let value = value.max(T::zero()).min(T::of(255.0));
        Patch {
            data: vec![value; PATCH_PIXELS],
        }
    }

    /// Builds a patch from `f(x, y)`, clamping to `[0, 255]`.
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(PATCH_PIXELS);
        for y in 0..PATCH_SIZE {
            for x in 0..PATCH_SIZE {
                data.push(clamp_intensity(f(x, y)));
            }
        }
        Patch { data }
    }

    pub fn from_gray(img: &GrayImage) -> Result<Self> {
        if img.width() != PATCH_SIZE || img.height() != PATCH_SIZE {
            return Err(Error::ShapeMismatch {
                expected: PATCH_PIXELS,
                actual: img.width() * img.height(),
            });
        }
        Ok(Patch {
            data: img.pixels().iter().map(|&v| T::of(f64::from(v))).collect(),
        })
    }

    /// Rounds to the nearest 8-bit value.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self
            .data
            .iter()
            .map(|v| v.as_f64().round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::new(PATCH_SIZE, PATCH_SIZE, pixels).expect("patch dimensions")
    }

    pub fn cast<U: Real>(&self) -> Patch<U> {
        Patch {
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * PATCH_SIZE + x]
    }

    #[inline]
    fn get_clamped(&self, x: i64, y: i64) -> T {
        let x = x.clamp(0, PATCH_SIZE as i64 - 1) as usize;
        let y = y.clamp(0, PATCH_SIZE as i64 - 1) as usize;
        self.get(x, y)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn integral(&self) -> IntegralImage<T> {
        IntegralImage::build(PATCH_SIZE, PATCH_SIZE, |x, y| self.get(x, y))
    }

    /// Bilinear sample at real coordinates with border replication.
    pub fn sample(&self, x: T, y: T) -> T {
        bilinear(x, y, |xi, yi| self.get_clamped(xi, yi))
    }
}

#[inline]
fn clamp_intensity<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::of(255.0))
}

#[inline]
fn bilinear<T: Real>(x: T, y: T, pixel: impl Fn(i64, i64) -> T) -> T {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let xi = x0.to_i64().unwrap_or(0);
    let yi = y0.to_i64().unwrap_or(0);
    let top = pixel(xi, yi) * (T::one() - fx) + pixel(xi + 1, yi) * fx;
    let bottom = pixel(xi, yi + 1) * (T::one() - fx) + pixel(xi + 1, yi + 1) * fx;
    top * (T::one() - fy) + bottom * fy
}

/// An oriented local feature in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Diameter of the detected region in pixels.
    pub diameter: f64,
    /// Orientation in radians.
    pub orientation: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, diameter: f64, orientation: f64) -> Result<Self> {
        if !(diameter > 0.0) || !diameter.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "keypoint diameter must be positive, got {diameter}"
            )));
        }
        if !(x.is_finite() && y.is_finite() && orientation.is_finite()) {
            return Err(Error::InvalidArgument(
                "keypoint fields must be finite".into(),
            ));
        }
        Ok(Keypoint {
            x,
            y,
            diameter,
            orientation,
        })
    }
}

/// Default crop width as a multiple of the keypoint diameter.
pub const DEFAULT_CROP_FACTOR: f64 = 6.75;

/// Cuts the square of side `crop_factor * diameter` around `kp`, undoes its
/// orientation and resamples it to 32x32 with bilinear interpolation.
pub fn normalize_patch<T: Real>(
    img: &GrayImage,
    kp: &Keypoint,
    crop_factor: f64,
) -> Result<Patch<T>> {
    if !(crop_factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "crop factor must be positive, got {crop_factor}"
        )));
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    if !(kp.x >= -0.5 && kp.x < w - 0.5 && kp.y >= -0.5 && kp.y < h - 0.5) {
        return Err(Error::KeypointOutsideImage {
            x: kp.x,
            y: kp.y,
            width: img.width(),
            height: img.height(),
        });
    }
    let step = crop_factor * kp.diameter / PATCH_SIZE as f64;
    let (sin, cos) = kp.orientation.sin_cos();
    let half = PATCH_SIZE as f64 / 2.0;
    Ok(Patch::from_fn(|px, py| {
        let u = (px as f64 + 0.5 - half) * step;
        let v = (py as f64 + 0.5 - half) * step;
        let x = kp.x + cos * u - sin * v;
        let y = kp.y + sin * u + cos * v;
        T::of(bilinear(x, y, |xi, yi| img.get_clamped(xi, yi)))
    }))
}

/// Ranges for training-time photometric and geometric jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Rotation drawn from `[-max_rotation, max_rotation]` radians.
    pub max_rotation: f64,
    /// Scale factor interval; must contain 1.
    pub scale_range: (f64, f64),
    /// Additive intensity offset drawn from `[-illumination_delta, illumination_delta]`.
    pub illumination_delta: f64,
    /// Gaussian blur sigma interval in pixels.
    pub blur_sigma_range: (f64, f64),
    /// Standard deviation of i.i.d. pixel noise.
    pub noise_sigma: f64,
}

impl AugmentParams {
    /// All ranges zero: augmentation is the identity.
    pub fn none() -> Self {
        AugmentParams {
            max_rotation: 0.0,
            scale_range: (1.0, 1.0),
            illumination_delta: 0.0,
            blur_sigma_range: (0.0, 0.0),
            noise_sigma: 0.0,
        }
    }

    /// Small jitter used for descriptor training: 5 degrees, 5% scale,
    /// 10 intensity units, blur up to 0.8 px, noise sigma 2.
    pub fn mild() -> Self {
        AugmentParams {
            max_rotation: 5f64.to_radians(),
            scale_range: (0.95, 1.05),
            illumination_delta: 10.0,
            blur_sigma_range: (0.0, 0.8),
            noise_sigma: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.max_rotation,
            self.scale_range.0,
            self.scale_range.1,
            self.illumination_delta,
            self.blur_sigma_range.0,
            self.blur_sigma_range.1,
            self.noise_sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        let ok = finite
            && self.max_rotation >= 0.0
            && self.illumination_delta >= 0.0
            && self.noise_sigma >= 0.0
            && self.scale_range.0 > 0.0
            && self.scale_range.0 <= 1.0
            && self.scale_range.1 >= 1.0
            && self.blur_sigma_range.0 >= 0.0
            && self.blur_sigma_range.0 <= self.blur_sigma_range.1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid augmentation ranges: {self:?}"
            )))
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::none()
    }

    /// Draws one concrete transform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentDraw {
        AugmentDraw {
            rotation: uniform(rng, -self.max_rotation, self.max_rotation),
            scale: uniform(rng, self.scale_range.0, self.scale_range.1),
            illumination: uniform(rng, -self.illumination_delta, self.illumination_delta),
            blur_sigma: uniform(rng, self.blur_sigma_range.0, self.blur_sigma_range.1),
            noise_sigma: self.noise_sigma,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// A sampled augmentation. Noise is drawn when applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub rotation: f64,
    pub scale: f64,
    pub illumination: f64,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
}

impl AugmentDraw {
    /// Geometric warp, illumination shift, blur, then pixel noise; clamped to `[0, 255]`.
    pub fn apply<T: Real, R: Rng + ?Sized>(&self, patch: &Patch<T>, rng: &mut R) -> Patch<T> {
        let mut data = if self.rotation != 0.0 || self.scale != 1.0 {
            warp(patch, self.rotation, self.scale)
        } else {
            patch.data.clone()
        };
        if self.illumination != 0.0 {
            let shift = T::of(self.illumination);
            for v in data.iter_mut() {
                *v = clamp_intensity(*v + shift);
            }
        }
        if self.blur_sigma > 0.0 {
            data = gaussian_blur(&data, self.blur_sigma);
        }
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).expect("finite noise sigma");
            for v in data.iter_mut() {
                *v = clamp_intensity(*v + T::of(normal.sample(rng)));
            }
        }
        Patch { data }
    }
}

/// Samples a random transform from `params` and applies it.
pub fn augment_patch<T: Real, R: Rng + ?Sized>(
    patch: &Patch<T>,
    params: &AugmentParams,
    rng: &mut R,
) -> Patch<T> {
    if params.is_identity() {
        return patch.clone();
    }
    params.sample(rng).apply(patch, rng)
}

fn warp<T: Real>(patch: &Patch<T>, rotation: f64, scale: f64) -> Vec<T> {
    let c = (PATCH_SIZE as f64 - 1.0) / 2.0;
    let (sin, cos) = rotation.sin_cos();
    let mut out = Vec::with_capacity(PATCH_PIXELS);
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            // inverse map: output pixel -> source location
            let u = (x as f64 - c) / scale;
            let v = (y as f64 - c) / scale;
            let sx = c + cos * u + sin * v;
            let sy = c - sin * u + cos * v;
            out.push(clamp_intensity(patch.sample(T::of(sx), T::of(sy))));
        }
    }
    out
}

fn gaussian_blur<T: Real>(data: &[T], sigma: f64) -> Vec<T> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);
    let kernel: Vec<T> = kernel.into_iter().map(T::of).collect();

    let n = PATCH_SIZE as i64;
    let idx = |x: i64, y: i64| (y.clamp(0, n - 1) * n + x.clamp(0, n - 1)) as usize;
    let mut tmp = vec![T::zero(); PATCH_PIXELS];
    for y in 0..n {
        for x in 0..n {
            let mut acc = T::zero();
            for (k, w) in kernel.iter().enumerate() {
                acc += *w * data[idx(x + k as i64 - radius, y)];
            }
            tmp[(y * n + x) as usize] = acc;
        }
    }
    let mut out = vec![T::zero(); PATCH_PIXELS];
    for y in 0..n {
        for x in 0..n {
            let mut acc = T::zero();
            for (k, w) in kernel.iter().enumerate() {
                acc += *w * tmp[idx(x, y + k as i64 - radius)];
            }
            out[(y * n + x) as usize] = clamp_intensity(acc);
        }
    }
    out
}
