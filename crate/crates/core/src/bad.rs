//! Box Average Difference descriptor.
//!
//! Each bit thresholds the difference between the mean intensities of two
//! equal-sized boxes inside the 32x32 patch: the bit is `+1` (set) when the
//! difference is `<= theta` and `-1` (clear) otherwise.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::descriptor::BinaryDescriptor;
use crate::error::{Error, Result};
use crate::imaging::{clamped_box, IntegralImage, Patch, PixelRect, PATCH_SIZE};
use crate::scalar::Real;

/// Largest admissible threshold magnitude (feature values lie in `[-255, 255]`).
pub const THETA_LIMIT: f64 = 255.0;

/// Geometry of a box pair: two centres and a common side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoxPair {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
    pub side: i32,
}

impl BoxPair {
    pub fn validate(&self) -> Result<()> {
        let n = PATCH_SIZE as i64;
        clamped_box(
            self.x1.into(),
            self.y1.into(),
            self.side.into(),
            PATCH_SIZE,
            PATCH_SIZE,
        )?;
        clamped_box(
            self.x2.into(),
            self.y2.into(),
            self.side.into(),
            PATCH_SIZE,
            PATCH_SIZE,
        )?;
        if i64::from(self.side) > n {
            return Err(Error::InvalidBox {
                x: self.x1.into(),
                y: self.y1.into(),
                side: self.side.into(),
                width: PATCH_SIZE,
                height: PATCH_SIZE,
            });
        }
        Ok(())
    }

    pub fn with_threshold(self, theta: f64) -> BoxPairFeature {
        BoxPairFeature {
            geometry: self,
            theta,
        }
    }

    pub(crate) fn compile(&self) -> Result<CompiledPair> {
        self.validate()?;
        let a = clamped_box(
            self.x1.into(),
            self.y1.into(),
            self.side.into(),
            PATCH_SIZE,
            PATCH_SIZE,
        )?;
        let b = clamped_box(
            self.x2.into(),
            self.y2.into(),
            self.side.into(),
            PATCH_SIZE,
            PATCH_SIZE,
        )?;
        Ok(CompiledPair {
            a,
            b,
            area_a: a.area() as f64,
            area_b: b.area() as f64,
        })
    }

    /// Box-mean difference on a precomputed patch integral image.
    pub fn value<T: Real>(&self, ii: &IntegralImage<T>) -> Result<T> {
        let a = ii.box_mean(self.x1.into(), self.y1.into(), self.side.into())?;
        let b = ii.box_mean(self.x2.into(), self.y2.into(), self.side.into())?;
        Ok(a - b)
    }
}

/// Precomputed clamped rectangles of a valid box pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CompiledPair {
    a: PixelRect,
    b: PixelRect,
    area_a: f64,
    area_b: f64,
}

impl CompiledPair {
    #[inline]
    pub(crate) fn value<T: Real>(&self, ii: &IntegralImage<T>) -> T {
        ii.rect_sum(self.a) / T::of(self.area_a) - ii.rect_sum(self.b) / T::of(self.area_b)
    }
}

/// One weak descriptor: a box pair with its threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPairFeature {
    pub geometry: BoxPair,
    pub theta: f64,
}

impl BoxPairFeature {
    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32, side: i32, theta: f64) -> Result<Self> {
        let f = BoxPairFeature {
            geometry: BoxPair {
                x1,
                y1,
                x2,
                y2,
                side,
            },
            theta,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.theta.abs() <= THETA_LIMIT) {
            return Err(Error::InvalidArgument(format!(
                "threshold {} outside [-{THETA_LIMIT}, {THETA_LIMIT}]",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Difference of the two box means of `f` on `patch`.
pub fn feature_value<T: Real>(patch: &Patch<T>, f: &BoxPairFeature) -> Result<T> {
    f.validate()?;
    f.geometry.value(&patch.integral())
}

/// `+1` when the feature value is at most the threshold, `-1` otherwise.
pub fn weak_response<T: Real>(patch: &Patch<T>, f: &BoxPairFeature) -> Result<i8> {
    let v = feature_value(patch, f)?;
    Ok(if v <= T::of(f.theta) { 1 } else { -1 })
}

/// An ordered list of weak descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct BadModel {
    features: Vec<BoxPairFeature>,
    compiled: Vec<CompiledPair>,
}

impl BadModel {
    pub fn new(features: Vec<BoxPairFeature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidArgument(
                "a BAD model needs at least one feature".into(),
            ));
        }
        let compiled = features
            .iter()
            .map(|f| {
                f.validate()?;
                f.geometry.compile()
            })
            .collect::<Result<_>>()?;
        Ok(BadModel { features, compiled })
    }

    pub fn bits(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[BoxPairFeature] {
        &self.features
    }

    /// Describes a patch given its integral image.
    pub fn describe_integral<T: Real>(&self, ii: &IntegralImage<T>) -> BinaryDescriptor {
        let mut d = BinaryDescriptor::zeros(self.bits());
        for (k, (f, c)) in self.features.iter().zip(&self.compiled).enumerate() {
            if c.value(ii) <= T::of(f.theta) {
                d.set(k, true);
            }
        }
        d
    }
}

/// Packs all weak responses of `model` on `patch`, reusing one integral image.
pub fn describe<T: Real>(patch: &Patch<T>, model: &BadModel) -> BinaryDescriptor {
    model.describe_integral(&patch.integral())
}

/// [`describe`] over many patches, in parallel, preserving input order.
pub fn describe_batch<T: Real>(patches: &[Patch<T>], model: &BadModel) -> Vec<BinaryDescriptor> {
    patches.par_iter().map(|p| describe(p, model)).collect()
}

const MODEL_MAGIC: &str = "BADMODEL v1";

/// Shortest decimal with at least four fractional digits that parses back exactly.
fn format_theta(theta: f64) -> String {
    let fixed = format!("{theta:.4}");
    if fixed.parse::<f64>() == Ok(theta) {
        fixed
    } else {
        format!("{theta:?}")
    }
}

/// Text form: `BADMODEL v1`, `K <int>`, then `x1 y1 x2 y2 s theta` per feature.
pub fn format_model(model: &BadModel) -> String {
    let mut out = format!("{MODEL_MAGIC}\nK {}\n", model.bits());
    for f in model.features() {
        let g = f.geometry;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            g.x1,
            g.y1,
            g.x2,
            g.y2,
            g.side,
            format_theta(f.theta)
        );
    }
    out
}

pub fn parse_model(path: &Path, text: &str) -> Result<BadModel> {
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or("").trim_end();
    if magic != MODEL_MAGIC {
        return Err(Error::Version {
            path: path.into(),
            expected: MODEL_MAGIC.into(),
            found: magic.into(),
        });
    }
    let k_line = lines.next().unwrap_or("");
    let k = k_line
        .strip_prefix("K ")
        .and_then(|v| v.trim().parse::<usize>().ok())
        .ok_or_else(|| {
            Error::format(path, format!("line 2: expected `K <int>`, got `{k_line}`"))
        })?;
    let mut features = Vec::with_capacity(k);
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let lineno = i + 3;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 6 {
            return Err(Error::format(
                path,
                format!("line {lineno}: expected 6 fields, got {}", tok.len()),
            ));
        }
        let int = |s: &str| {
            s.parse::<i32>()
                .map_err(|_| Error::format(path, format!("line {lineno}: `{s}` is not an integer")))
        };
        let theta = tok[5].parse::<f64>().map_err(|_| {
            Error::format(path, format!("line {lineno}: `{}` is not a number", tok[5]))
        })?;
        let f = BoxPairFeature::new(
            int(tok[0])?,
            int(tok[1])?,
            int(tok[2])?,
            int(tok[3])?,
            int(tok[4])?,
            theta,
        )
        .map_err(|e| Error::format(path, format!("line {lineno}: {e}")))?;
        features.push(f);
    }
    if features.len() != k {
        return Err(Error::format(
            path,
            format!(
                "header declares K = {k} but {} feature lines follow",
                features.len()
            ),
        ));
    }
    BadModel::new(features).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_model(model: &BadModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BadModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(rng: &mut ChaCha8Rng) -> Patch<f64> {
        Patch::from_fn(|_, _| rng.random_range(0.0..255.0))
    }

    fn random_feature(rng: &mut ChaCha8Rng) -> BoxPairFeature {
        BoxPairFeature::new(
            rng.random_range(0..32),
            rng.random_range(0..32),
            rng.random_range(0..32),
            rng.random_range(0..32),
            rng.random_range(1..=32),
            rng.random_range(-60.0..60.0),
        )
        .unwrap()
    }

    fn direct_mean(p: &Patch<f64>, x: i32, y: i32, s: i32) -> f64 {
        let (lo, hi) = (s / 2, s - s / 2 - 1);
        let mut sum = 0.0;
        let mut n = 0.0;
        for yy in (y - lo).max(0)..=(y + hi).min(31) {
            for xx in (x - lo).max(0)..=(x + hi).min(31) {
                sum += p.get(xx as usize, yy as usize);
                n += 1.0;
            }
        }
        sum / n
    }

    #[test]
    fn identical_boxes_and_constant_patches_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_patch(&mut rng);
        let f = BoxPairFeature::new(4, 9, 4, 9, 5, 0.0).unwrap();
        assert_eq!(feature_value(&p, &f).unwrap(), 0.0);
        let c = Patch::<f64>::constant(42.0);
        for _ in 0..20 {
            assert!(feature_value(&c, &random_feature(&mut rng)).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn feature_value_matches_direct_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let p = random_patch(&mut rng);
            let f = random_feature(&mut rng);
            let g = f.geometry;
            let expected =
                direct_mean(&p, g.x1, g.y1, g.side) - direct_mean(&p, g.x2, g.y2, g.side);
            assert!((feature_value(&p, &f).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn weak_response_boundaries() {
        let c = Patch::<f32>::constant(10.0);
        let at =
            |theta| weak_response(&c, &BoxPairFeature::new(0, 0, 5, 5, 3, theta).unwrap()).unwrap();
        assert_eq!(at(-1.0), -1);
        assert_eq!(at(0.0), 1);
        // feature value exactly equal to theta
        let p = Patch::<f64>::from_fn(|x, _| if x < 16 { 30.0 } else { 10.0 });
        let f = BoxPairFeature::new(2, 2, 20, 2, 1, 20.0).unwrap();
        assert_eq!(feature_value(&p, &f).unwrap(), 20.0);
        assert_eq!(weak_response(&p, &f).unwrap(), 1);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(BoxPairFeature::new(32, 0, 1, 1, 3, 0.0).is_err());
        assert!(BoxPairFeature::new(0, 0, 1, 1, 0, 0.0).is_err());
        assert!(BoxPairFeature::new(0, 0, 1, 1, 33, 0.0).is_err());
        assert!(BoxPairFeature::new(0, 0, 1, 1, 3, 300.0).is_err());
        assert!(BadModel::new(vec![]).is_err());
    }

    #[test]
    fn constant_patch_with_nonnegative_thresholds_sets_all_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fs = (0..8)
            .map(|_| {
                let mut f = random_feature(&mut rng);
                f.theta = f.theta.abs();
                f
            })
            .collect();
        let model = BadModel::new(fs).unwrap();
        let d = describe(&Patch::<f32>::constant(77.0), &model);
        assert_eq!(d.as_bytes(), &[0xff]);
    }

    #[test]
    fn twelve_bits_pack_into_two_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = BadModel::new((0..12).map(|_| random_feature(&mut rng)).collect()).unwrap();
        let d = describe(&random_patch(&mut rng), &model);
        assert_eq!(d.bits(), 12);
        assert_eq!(d.as_bytes().len(), 2);
        assert_eq!(d.as_bytes()[1] & 0xf0, 0);
    }

    #[test]
    fn packed_bits_equal_weak_responses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = BadModel::new((0..100).map(|_| random_feature(&mut rng)).collect()).unwrap();
        for _ in 0..20 {
            let p = random_patch(&mut rng);
            let d = describe(&p, &model);
            for (k, f) in model.features().iter().enumerate() {
                assert_eq!(d.get(k), weak_response(&p, f).unwrap() == 1);
            }
        }
    }

    #[test]
    fn batch_equals_sequential_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = BadModel::new((0..64).map(|_| random_feature(&mut rng)).collect()).unwrap();
        assert!(describe_batch::<f64>(&[], &model).is_empty());
        let patches: Vec<Patch<f64>> = (0..100).map(|_| random_patch(&mut rng)).collect();
        let seq: Vec<_> = patches.iter().map(|p| describe(p, &model)).collect();
        assert_eq!(describe_batch(&patches, &model), seq);
        assert_eq!(describe_batch(&patches[..1], &model), seq[..1]);
    }

    #[test]
    fn model_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut fs: Vec<BoxPairFeature> = (0..20).map(|_| random_feature(&mut rng)).collect();
        fs[0].theta = 12.05;
        fs[1].theta = -0.1 + 0.2;
        let model = BadModel::new(fs).unwrap();
        let text = format_model(&model);
        assert!(text.starts_with("BADMODEL v1\nK 20\n"));
        assert!(text.lines().nth(2).unwrap().ends_with(" 12.0500"));
        let back = parse_model(Path::new("m.txt"), &text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn model_parse_errors() {
        let p = Path::new("m.txt");
        assert!(matches!(
            parse_model(p, "BADMODEL v2\nK 1\n0 0 1 1 3 0.0\n"),
            Err(Error::Version { .. })
        ));
        assert!(matches!(
            parse_model(p, "BADMODEL v1\nK 2\n0 0 1 1 3 0.0\n"),
            Err(Error::Format { .. })
        ));
        assert!(parse_model(p, "BADMODEL v1\nK 1\n0 0 1 1 3\n").is_err());
        assert!(parse_model(p, "BADMODEL v1\nK 1\n0 0 1 x 3 0.5\n").is_err());
        assert!(parse_model(p, "BADMODEL v1\nK one\n").is_err());
    }
}
