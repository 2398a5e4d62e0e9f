//! Synthetic patch corpora for tests and offline experiments.
//!
//! [`brown_like`] renders several observations of random textured scene
//! points, each under its own small similarity warp, gain/offset change and
//! pixel noise, at the 64x64 resolution of the Brown dataset. [`separable_toy`]
//! builds two labels that differ in one pixel only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::{LabeledPatchSet, BROWN_PATCH};
use crate::error::Result;
use crate::imaging::{GrayImage, Patch};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
struct Blob {
    x: f64,
    y: f64,
    sigma: f64,
    amplitude: f64,
}

#[derive(Debug, Clone, Copy)]
struct Grating {
    fx: f64,
    fy: f64,
    phase: f64,
    amplitude: f64,
}

/// Continuous intensity field around a scene point, in patch-centred units
/// (one unit is one pixel of a 64x64 observation at scale 1).
#[derive(Debug, Clone)]
pub struct SceneTexture {
    base: f64,
    blobs: Vec<Blob>,
    gratings: Vec<Grating>,
}

impl SceneTexture {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        // log-uniform sizes with amplitude growing with size, roughly 1/f
        let blobs = (0..rng.random_range(30..60))
            .map(|_| {
                let sigma = rng.random_range(1.5f64.ln()..12f64.ln()).exp();
                Blob {
                    x: rng.random_range(-40.0..40.0),
                    y: rng.random_range(-40.0..40.0),
                    sigma,
                    amplitude: rng.random_range(-8.0..8.0) * sigma,
                }
            })
            .collect();
        let gratings = (0..rng.random_range(0..3))
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::PI);
                let freq = rng.random_range(0.05..0.25);
                Grating {
                    fx: freq * angle.cos(),
                    fy: freq * angle.sin(),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amplitude: rng.random_range(5.0..30.0),
                }
            })
            .collect();
        SceneTexture {
            base: rng.random_range(70.0..180.0),
            blobs,
            gratings,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let blobs: f64 = self
            .blobs
            .iter()
            .map(|b| {
                b.amplitude
                    * (-((x - b.x).powi(2) + (y - b.y).powi(2)) / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum();
        let gratings: f64 = self
            .gratings
            .iter()
            .map(|g| g.amplitude * (g.fx * x + g.fy * y + g.phase).sin())
            .sum();
        self.base + blobs + gratings
    }
}

/// Per-observation nuisance ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewJitter {
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub max_shift: f64,
    pub gain_range: (f64, f64),
    pub max_offset: f64,
    pub noise_sigma: f64,
}

impl Default for ViewJitter {
    fn default() -> Self {
        ViewJitter {
            max_rotation_deg: 12.0,
            scale_range: (0.9, 1.1),
            max_shift: 2.0,
            gain_range: (0.8, 1.2),
            max_offset: 15.0,
            noise_sigma: 2.0,
        }
    }
}

/// Renders one 64x64 observation of `texture`.
pub fn render_view<R: Rng + ?Sized>(
    texture: &SceneTexture,
    jitter: &ViewJitter,
    rng: &mut R,
) -> GrayImage {
    let m = jitter.max_rotation_deg.to_radians();
    let angle = if m > 0.0 {
        rng.random_range(-m..=m)
    } else {
        0.0
    };
    let (lo, hi) = jitter.scale_range;
    let scale = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    let s = jitter.max_shift;
    let (tx, ty) = if s > 0.0 {
        (rng.random_range(-s..=s), rng.random_range(-s..=s))
    } else {
        (0.0, 0.0)
    };
    let (glo, ghi) = jitter.gain_range;
    let gain = if ghi > glo {
        rng.random_range(glo..=ghi)
    } else {
        glo
    };
    let o = jitter.max_offset;
    let offset = if o > 0.0 {
        rng.random_range(-o..=o)
    } else {
        0.0
    };
    let noise = Normal::new(0.0, jitter.noise_sigma.max(0.0)).expect("finite sigma");

    let c = (BROWN_PATCH as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut pixels = Vec::with_capacity(BROWN_PATCH * BROWN_PATCH);
    for y in 0..BROWN_PATCH {
        for x in 0..BROWN_PATCH {
            let (u, v) = ((x as f64 - c) * scale, (y as f64 - c) * scale);
            let sx = cos * u - sin * v + tx;
            let sy = sin * u + cos * v + ty;
            let value = gain * texture.value(sx, sy) + offset + noise.sample(rng);
            pixels.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(BROWN_PATCH, BROWN_PATCH, pixels).expect("64x64 buffer")
}

/// `points * views` observations labelled by scene point, ordered by label.
/// Every point uses its own generator derived from `seed`, so the output does
/// not depend on the thread count.
pub fn brown_like(
    points: usize,
    views: usize,
    jitter: &ViewJitter,
    seed: u64,
) -> (Vec<GrayImage>, Vec<u64>) {
    let per_point: Vec<Vec<GrayImage>> = (0..points)
        .into_par_iter()
        .map(|p| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (p as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let texture = SceneTexture::random(&mut rng);
            (0..views)
                .map(|_| render_view(&texture, jitter, &mut rng))
                .collect()
        })
        .collect();
    let labels = (0..points)
        .flat_map(|p| std::iter::repeat_n(p as u64, views))
        .collect();
    (per_point.into_iter().flatten().collect(), labels)
}

/// The 32x32 patches of [`brown_like`], downsampled as the Brown loader does.
pub fn brown_like_set<T: Real>(
    points: usize,
    views: usize,
    jitter: &ViewJitter,
    seed: u64,
) -> Result<LabeledPatchSet<T>> {
    let (images, labels) = brown_like(points, views, jitter, seed);
    let patches = images.iter().map(downsample).collect();
    LabeledPatchSet::new(patches, labels)
}

/// 2x2 box average of a 64x64 image.
pub fn downsample<T: Real>(img: &GrayImage) -> Patch<T> {
    Patch::from_fn(|x, y| {
        let s: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
            .iter()
            .map(|&(dx, dy)| u32::from(img.get(2 * x + dx, 2 * y + dy)))
            .sum();
        T::of(f64::from(s) / 4.0)
    })
}

/// Pixel that tells the two labels of [`separable_toy`] apart.
pub const TOY_PIXEL: (usize, usize) = (16, 16);

/// `per_label` patches of label 0 and of label 1. Each patch is flat at its
/// own random gray level; [`TOY_PIXEL`] sits 60 levels below that for label 0
/// and 60 above for label 1. Box differences and gradients ignore the
/// global level, so the pixel is the only informative signal.
pub fn separable_toy<T: Real>(per_label: usize, seed: u64) -> Result<LabeledPatchSet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(2 * per_label);
    let mut labels = Vec::with_capacity(2 * per_label);
    for label in 0..2u64 {
        for _ in 0..per_label {
            let level = f64::from(rng.random_range(70u8..=185));
            let pixel = if label == 0 {
                level - 60.0
            } else {
                level + 60.0
            };
            patches.push(Patch::from_fn(|x, y| {
                T::of(if (x, y) == TOY_PIXEL { pixel } else { level })
            }));
            labels.push(label);
        }
    }
    LabeledPatchSet::new(patches, labels)
}
