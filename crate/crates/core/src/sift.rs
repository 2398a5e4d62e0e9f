//! SIFT descriptor of a normalized 32x32 patch.
//!
//! Central-difference gradients, Gaussian spatial weighting with sigma equal
//! to half the patch width, trilinear voting into 4x4 spatial cells of 8
//! orientation bins, then L2 normalization, clamping at 0.2 and
//! renormalization. Gradient-free patches yield the zero vector.

use std::f64::consts::TAU;

use crate::imaging::{Patch, PATCH_SIZE};
use crate::scalar::Real;

pub const SIFT_CELLS: usize = 4;
pub const SIFT_BINS: usize = 8;
pub const SIFT_DIM: usize = SIFT_CELLS * SIFT_CELLS * SIFT_BINS;
const CLAMP: f64 = 0.2;

/// 128 histogram entries laid out as `(cell_row * 4 + cell_col) * 8 + bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftDescriptor<T> {
    values: Vec<T>,
}

impl<T: Real> SiftDescriptor<T> {
    pub fn zeros() -> Self {
        SiftDescriptor {
            values: vec![T::zero(); SIFT_DIM],
        }
    }

    /// Wraps raw values; `None` unless there are exactly 128 finite entries.
    pub fn from_values(values: Vec<T>) -> Option<Self> {
        (values.len() == SIFT_DIM && values.iter().all(|v| v.is_finite()))
            .then_some(SiftDescriptor { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn euclidean(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }
}

fn normalize<T: Real>(v: &mut [T]) -> bool {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::of(1e-12) {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}

pub fn sift_describe<T: Real>(patch: &Patch<T>) -> SiftDescriptor<T> {
    let n = PATCH_SIZE as i64;
    let cell = (PATCH_SIZE / SIFT_CELLS) as f64;
    let centre = (PATCH_SIZE as f64 - 1.0) / 2.0;
    let sigma = PATCH_SIZE as f64 / 2.0;
    let at = |x: i64, y: i64| {
        patch
            .get(x.clamp(0, n - 1) as usize, y.clamp(0, n - 1) as usize)
            .as_f64()
    };

    let mut hist = vec![0.0f64; SIFT_DIM];
    for y in 0..n {
        for x in 0..n {
            let dx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let dy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            let mag = dx.hypot(dy);
            if mag == 0.0 {
                continue;
            }
            let (ox, oy) = (x as f64 - centre, y as f64 - centre);
            let weight = (-(ox * ox + oy * oy) / (2.0 * sigma * sigma)).exp();
            let angle = dy.atan2(dx).rem_euclid(TAU);

            // continuous bin coordinates, cell centres at integer positions
            let cx = (x as f64 + 0.5) / cell - 0.5;
            let cy = (y as f64 + 0.5) / cell - 0.5;
            let co = angle / TAU * SIFT_BINS as f64;
            let (x0, y0, o0) = (cx.floor(), cy.floor(), co.floor());
            let (fx, fy, fo) = (cx - x0, cy - y0, co - o0);
            let vote = mag * weight;
            for (iy, wy) in [(y0 as i64, 1.0 - fy), (y0 as i64 + 1, fy)] {
                if !(0..SIFT_CELLS as i64).contains(&iy) || wy == 0.0 {
                    continue;
                }
                for (ix, wx) in [(x0 as i64, 1.0 - fx), (x0 as i64 + 1, fx)] {
                    if !(0..SIFT_CELLS as i64).contains(&ix) || wx == 0.0 {
                        continue;
                    }
                    for (io, wo) in [(o0 as i64, 1.0 - fo), (o0 as i64 + 1, fo)] {
                        if wo == 0.0 {
                            continue;
                        }
                        let bin = io.rem_euclid(SIFT_BINS as i64) as usize;
                        let k = (iy as usize * SIFT_CELLS + ix as usize) * SIFT_BINS + bin;
                        hist[k] += vote * wy * wx * wo;
                    }
                }
            }
        }
    }

    if !normalize(&mut hist) {
        return SiftDescriptor::zeros();
    }
    hist.iter_mut().for_each(|v| *v = v.min(CLAMP));
    normalize(&mut hist);
    SiftDescriptor {
        values: hist.into_iter().map(T::of).collect(),
    }
}

/// L1-normalize then take element-wise square roots; zero maps to zero.
pub fn root_sift<T: Real>(d: &SiftDescriptor<T>) -> SiftDescriptor<T> {
    let l1: T = d.values.iter().map(|v| v.abs()).sum();
    if l1 == T::zero() {
        return SiftDescriptor::zeros();
    }
    SiftDescriptor {
        values: d.values.iter().map(|&v| (v.abs() / l1).sqrt()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mass_by_bin(d: &SiftDescriptor<f64>) -> [f64; SIFT_BINS] {
        let mut m = [0.0; SIFT_BINS];
        for (k, v) in d.values().iter().enumerate() {
            m[k % SIFT_BINS] += v;
        }
        m
    }

    fn mass_by_cell(d: &SiftDescriptor<f64>) -> [f64; 16] {
        let mut m = [0.0; 16];
        for (k, v) in d.values().iter().enumerate() {
            m[k / SIFT_BINS] += v;
        }
        m
    }

    #[test]
    fn constant_patch_is_degenerate() {
        assert!(sift_describe(&Patch::<f32>::constant(128.0)).is_zero());
    }

    #[test]
    fn normalization_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = Patch::<f64>::from_fn(|_, _| rng.random_range(0.0..255.0));
            let d = sift_describe(&p);
            assert!((d.norm() - 1.0).abs() < 1e-6);
            assert!(d.values().iter().all(|&v| (0.0..=0.2 + 1e-6).contains(&v)));
        }
        let p = Patch::<f32>::from_fn(|x, y| ((x * y) % 7) as f32 * 30.0);
        assert!((sift_describe(&p).norm() - 1.0).abs() < 1e-6);
    }

    /// Reference histogram: no interpolation, no weighting, nearest bin.
    fn coarse_orientation_mass(p: &Patch<f64>) -> [f64; SIFT_BINS] {
        let mut m = [0.0; SIFT_BINS];
        for y in 1..31 {
            for x in 1..31 {
                let dx = (p.get(x + 1, y) - p.get(x - 1, y)) / 2.0;
                let dy = (p.get(x, y + 1) - p.get(x, y - 1)) / 2.0;
                let b = ((dy.atan2(dx).rem_euclid(TAU) / TAU * 8.0).round() as usize) % 8;
                m[b] += dx.hypot(dy);
            }
        }
        m
    }

    #[test]
    fn vertical_edge_votes_horizontal_gradient_bins() {
        let p = Patch::<f64>::from_fn(|x, _| if x < 16 { 40.0 } else { 200.0 });
        let reference = coarse_orientation_mass(&p);
        let total: f64 = reference.iter().sum();
        assert!((reference[0] + reference[4]) / total >= 0.8);

        let m = mass_by_bin(&sift_describe(&p));
        let total: f64 = m.iter().sum();
        assert!((m[0] + m[4]) / total >= 0.8, "{m:?}");
    }

    #[test]
    fn shifting_a_blob_moves_cell_mass() {
        let blob = |cx: f64, cy: f64| {
            Patch::<f64>::from_fn(move |x, y| {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                30.0 + 200.0 * (-d2 / 8.0).exp()
            })
        };
        let a = mass_by_cell(&sift_describe(&blob(11.5, 11.5)));
        let b = mass_by_cell(&sift_describe(&blob(19.5, 11.5)));
        // cell (1, 1) holds the blob first, then loses mass to cell (1, 2)
        assert!(b[5] < a[5]);
        assert!(b[6] > a[6]);
    }

    #[test]
    fn root_sift_formula() {
        assert!(root_sift(&SiftDescriptor::<f64>::zeros()).is_zero());
        let mut one_hot = vec![0.0; SIFT_DIM];
        one_hot[17] = 0.7;
        let r = root_sift(&SiftDescriptor::from_values(one_hot).unwrap());
        assert_eq!(r.values()[17], 1.0);
        assert_eq!(r.values().iter().filter(|v| **v != 0.0).count(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..SIFT_DIM).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = v.iter().sum();
        let r = root_sift(&SiftDescriptor::from_values(v.clone()).unwrap());
        for (a, b) in r.values().iter().zip(&v) {
            assert!((a - (b / s).sqrt()).abs() < 1e-9);
        }
    }
}
