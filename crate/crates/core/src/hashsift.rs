//! HashSIFT: a learned affine projection of SIFT binarized by sign.
//!
//! A `K x 129` matrix `B` maps the SIFT vector with a constant 1 appended to
//! `K` responses; bit `k` is set iff response `k` is non-negative. Training
//! replaces the sign by `tanh` and minimizes a triplet ranking loss on inner
//! products divided by `K`, with Adam.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::{draw_pairs, mine_triplets, LabeledPatchSet};
use crate::descriptor::BinaryDescriptor;
use crate::error::{Error, Result};
use crate::imaging::{augment_patch, AugmentParams, Patch};
use crate::scalar::Real;
use crate::sift::{root_sift, sift_describe, SiftDescriptor, SIFT_DIM};

/// Input width of the projection: SIFT plus the bias input.
pub const HASH_INPUT: usize = SIFT_DIM + 1;

/// Row-major `K x 129` projection; the last column is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct HashMatrix<T> {
    rows: usize,
    data: Vec<T>,
}

impl<T: Real> HashMatrix<T> {
    pub fn zeros(rows: usize) -> Self {
        HashMatrix {
            rows,
            data: vec![T::zero(); rows * HASH_INPUT],
        }
    }

    pub fn from_vec(rows: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::InvalidArgument(
                "a hash matrix needs at least one row".into(),
            ));
        }
        if data.len() != rows * HASH_INPUT {
            return Err(Error::ShapeMismatch {
                expected: rows * HASH_INPUT,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "hash matrix entries must be finite".into(),
            ));
        }
        Ok(HashMatrix { rows, data })
    }

    /// Entries drawn i.i.d. from `N(0, sigma^2)`.
    pub fn gaussian(rows: usize, sigma: f64, rng: &mut impl RngCore) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidArgument(format!("bad init sigma {sigma}: {e}")))?;
        Self::from_vec(
            rows,
            (0..rows * HASH_INPUT)
                .map(|_| T::of(normal.sample(rng)))
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.data[k * HASH_INPUT..(k + 1) * HASH_INPUT]
    }

    /// `B [f; 1]`.
    pub fn project(&self, f: &SiftDescriptor<T>) -> Vec<T> {
        let f = f.values();
        (0..self.rows)
            .map(|k| {
                let row = self.row(k);
                row[..SIFT_DIM]
                    .iter()
                    .zip(f)
                    .fold(row[SIFT_DIM], |acc, (&b, &x)| acc + b * x)
            })
            .collect()
    }
}

/// `tanh(B [f; 1])`, element-wise.
pub fn relaxed_descriptor<T: Real>(f: &SiftDescriptor<T>, b: &HashMatrix<T>) -> Vec<T> {
    b.project(f).into_iter().map(|z| z.tanh()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashSiftModel<T> {
    pub matrix: HashMatrix<T>,
    pub use_rootsift: bool,
}

impl<T: Real> HashSiftModel<T> {
    pub fn new(matrix: HashMatrix<T>, use_rootsift: bool) -> Self {
        HashSiftModel {
            matrix,
            use_rootsift,
        }
    }

    pub fn bits(&self) -> usize {
        self.matrix.rows()
    }

    /// SIFT of the patch, passed through RootSIFT when enabled.
    pub fn features(&self, patch: &Patch<T>) -> SiftDescriptor<T> {
        let d = sift_describe(patch);
        if self.use_rootsift {
            root_sift(&d)
        } else {
            d
        }
    }

    pub fn describe(&self, patch: &Patch<T>) -> BinaryDescriptor {
        binarize(&self.features(patch), self)
    }

    pub fn describe_batch(&self, patches: &[Patch<T>]) -> Vec<BinaryDescriptor> {
        patches.par_iter().map(|p| self.describe(p)).collect()
    }
}

/// Bit `k` is set iff row `k` of the projection is `>= 0` (`sgn(0) = +1`).
/// `f` is used as given; see [`HashSiftModel::features`].
pub fn binarize<T: Real>(f: &SiftDescriptor<T>, model: &HashSiftModel<T>) -> BinaryDescriptor {
    BinaryDescriptor::from_bits(model.matrix.project(f).into_iter().map(|z| z >= T::zero()))
}

/// SIFT features of an (anchor, positive, negative) triplet.
pub type SiftTriplet<'a, T> = [&'a SiftDescriptor<T>; 3];

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn check_batch<T>(batch: &[SiftTriplet<'_, T>]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::EmptyInput("hash loss needs at least one triplet"))
    } else {
        Ok(())
    }
}

/// Hinge argument `tau - D(a).D(p)/K + D(a).D(n)/K` of one triplet.
fn hinge_argument<T: Real>(d: &[Vec<T>; 3], tau: T) -> T {
    let k = T::of(d[0].len() as f64);
    tau - dot(&d[0], &d[1]) / k + dot(&d[0], &d[2]) / k
}

/// `sum_i [tau - D(a_i).D(p_i)/K + D(a_i).D(n_i)/K]_+` with `D = tanh(B [f; 1])`.
pub fn hash_loss<T: Real>(batch: &[SiftTriplet<'_, T>], b: &HashMatrix<T>, tau: T) -> Result<T> {
    check_batch(batch)?;
    Ok(batch
        .iter()
        .map(|t| hinge_argument(&t.map(|f| relaxed_descriptor(f, b)), tau).max(T::zero()))
        .sum())
}

/// Hinge arguments per triplet (useful to locate kinks).
pub fn hinge_arguments<T: Real>(batch: &[SiftTriplet<'_, T>], b: &HashMatrix<T>, tau: T) -> Vec<T> {
    batch
        .iter()
        .map(|t| hinge_argument(&t.map(|f| relaxed_descriptor(f, b)), tau))
        .collect()
}

const GRAD_CHUNK: usize = 32;

/// Loss and its (sub)gradient with respect to `B`. Inactive hinge terms
/// contribute zero. The reduction runs over fixed-size chunks in order, so
/// the result does not depend on the thread count.
pub fn hash_loss_and_grad<T: Real>(
    batch: &[SiftTriplet<'_, T>],
    b: &HashMatrix<T>,
    tau: T,
) -> Result<(T, HashMatrix<T>)> {
    check_batch(batch)?;
    let rows = b.rows();
    let inv_k = T::one() / T::of(rows as f64);
    let partials: Vec<(T, Vec<T>)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut loss = T::zero();
            let mut grad = vec![T::zero(); rows * HASH_INPUT];
            for t in chunk {
                let d = t.map(|f| relaxed_descriptor(f, b));
                let arg = hinge_argument(&d, tau);
                if arg <= T::zero() {
                    continue;
                }
                loss += arg;
                // dL/dD for each member, then through tanh' = 1 - D^2
                for k in 0..rows {
                    let (da, dp, dn) = (d[0][k], d[1][k], d[2][k]);
                    let ga = (dn - dp) * inv_k * (T::one() - da * da);
                    let gp = -da * inv_k * (T::one() - dp * dp);
                    let gn = da * inv_k * (T::one() - dn * dn);
                    let row = &mut grad[k * HASH_INPUT..(k + 1) * HASH_INPUT];
                    for (m, g) in [(0, ga), (1, gp), (2, gn)] {
                        let f = t[m].values();
                        for j in 0..SIFT_DIM {
                            row[j] += g * f[j];
                        }
                        row[SIFT_DIM] += g;
                    }
                }
            }
            (loss, grad)
        })
        .collect();
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); rows * HASH_INPUT];
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(acc, v)| *acc += v);
    }
    Ok((loss, HashMatrix { rows, data: grad }))
}

pub fn hash_loss_grad<T: Real>(
    batch: &[SiftTriplet<'_, T>],
    b: &HashMatrix<T>,
    tau: T,
) -> Result<HashMatrix<T>> {
    hash_loss_and_grad(batch, b, tau).map(|(_, g)| g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            learning_rate: T::of(2e-4),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
        }
    }
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: i32,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(
    params: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    cfg: &AdamConfig<T>,
) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            actual: grad.len(),
        });
    }
    state.step += 1;
    let c1 = T::one() - cfg.beta1.powi(state.step);
    let c2 = T::one() - cfg.beta2.powi(state.step);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (T::one() - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (T::one() - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashTrainConfig {
    pub bits: usize,
    /// Triplets per step.
    pub batch: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Margin on inner products divided by `bits`.
    pub margin: f64,
    /// Standard deviation of the Gaussian initialization.
    pub init_sigma: f64,
    pub augment: Option<AugmentParams>,
    pub use_rootsift: bool,
    pub swap: bool,
    pub seed: u64,
}

impl Default for HashTrainConfig {
    fn default() -> Self {
        HashTrainConfig {
            bits: 256,
            batch: 512,
            steps: 2000,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            margin: 0.4,
            init_sigma: 0.25,
            augment: Some(AugmentParams::mild()),
            use_rootsift: false,
            swap: true,
            seed: 0,
        }
    }
}

impl HashTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.learning_rate,
            self.margin,
            self.init_sigma,
            self.adam_epsilon,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        let betas = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if self.bits == 0 || self.batch == 0 || !positive || !betas {
            return Err(Error::InvalidArgument(format!(
                "invalid HashSIFT training config: {self:?}"
            )));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }

    fn adam<T: Real>(&self) -> AdamConfig<T> {
        AdamConfig {
            learning_rate: T::of(self.learning_rate),
            beta1: T::of(self.beta1),
            beta2: T::of(self.beta2),
            epsilon: T::of(self.adam_epsilon),
        }
    }
}

/// Untrained baseline: sign of a Gaussian random projection (the training
/// initialization for the same seed).
pub fn random_projection_model<T: Real>(
    bits: usize,
    sigma: f64,
    use_rootsift: bool,
    seed: u64,
) -> Result<HashSiftModel<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(HashSiftModel::new(
        HashMatrix::gaussian(bits, sigma, &mut rng)?,
        use_rootsift,
    ))
}

/// Trains `B` with Adam on batches of mined triplets; returns the model and
/// the loss of every step's batch.
///
/// Each step draws anchor-positive pairs and a candidate pool, jitters every
/// touched patch, computes its SIFT, mines the hardest negative of each
/// anchor by Euclidean distance between relaxed descriptors (with anchor
/// swap) and applies one Adam update.
pub fn train_hashsift<T: Real>(
    set: &LabeledPatchSet<T>,
    cfg: &HashTrainConfig,
) -> Result<(HashSiftModel<T>, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut matrix = HashMatrix::<T>::gaussian(cfg.bits, cfg.init_sigma, &mut rng)?;
    let mut state = AdamState::new(matrix.as_slice().len());
    let adam = cfg.adam::<T>();
    let tau = T::of(cfg.margin);
    let probe = HashSiftModel::new(HashMatrix::<T>::zeros(1), cfg.use_rootsift);

    let mut slot = vec![usize::MAX; set.len()];
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let draw = draw_pairs(set, cfg.batch, &mut rng)?;
        let touched = draw.touched();
        let seeds: Vec<u64> = touched.iter().map(|_| rng.next_u64()).collect();
        let feats: Vec<SiftDescriptor<T>> = touched
            .par_iter()
            .zip(seeds)
            .map(|(&i, s)| {
                let p = match &cfg.augment {
                    Some(a) => augment_patch(set.patch(i), a, &mut ChaCha8Rng::seed_from_u64(s)),
                    None => set.patch(i).clone(),
                };
                probe.features(&p)
            })
            .collect();
        let relaxed: Vec<Vec<T>> = feats
            .par_iter()
            .map(|f| relaxed_descriptor(f, &matrix))
            .collect();
        for (pos, &i) in touched.iter().enumerate() {
            slot[i] = pos;
        }
        let dist = |a: usize, b: usize| {
            let (x, y) = (&relaxed[slot[a]], &relaxed[slot[b]]);
            x.iter()
                .zip(y)
                .map(|(&u, &v)| (u - v) * (u - v))
                .sum::<T>()
                .sqrt()
                .as_f64()
        };
        let batch = mine_triplets(set, &draw, Some(&dist), cfg.swap, &mut rng)?;
        // fallback negatives from outside the pool
        let mut feats = feats;
        for t in &batch.triplets {
            if slot[t.negative] == usize::MAX {
                let p = match &cfg.augment {
                    Some(a) => augment_patch(
                        set.patch(t.negative),
                        a,
                        &mut ChaCha8Rng::seed_from_u64(rng.next_u64()),
                    ),
                    None => set.patch(t.negative).clone(),
                };
                slot[t.negative] = feats.len();
                feats.push(probe.features(&p));
            }
        }
        let triples: Vec<SiftTriplet<'_, T>> = batch
            .triplets
            .iter()
            .map(|t| {
                [
                    &feats[slot[t.anchor]],
                    &feats[slot[t.positive]],
                    &feats[slot[t.negative]],
                ]
            })
            .collect();
        let (loss, grad) = hash_loss_and_grad(&triples, &matrix, tau)?;
        adam_step(matrix.as_mut_slice(), grad.as_slice(), &mut state, &adam)?;
        losses.push(loss.as_f64());
        for t in &batch.triplets {
            slot[t.negative] = usize::MAX;
        }
        for &i in &touched {
            slot[i] = usize::MAX;
        }
    }
    Ok((HashSiftModel::new(matrix, cfg.use_rootsift), losses))
}

const MODEL_MAGIC: &str = "HASHSIFT v1";

/// Text form: `HASHSIFT v1`, `K <int> rootsift <0|1>`, then one row of 129
/// decimals per bit (17 significant digits).
pub fn format_model<T: Real>(model: &HashSiftModel<T>) -> String {
    let mut out = format!(
        "{MODEL_MAGIC}\nK {} rootsift {}\n",
        model.bits(),
        u8::from(model.use_rootsift)
    );
    for k in 0..model.bits() {
        let row: Vec<String> = model
            .matrix
            .row(k)
            .iter()
            .map(|v| format!("{:.16e}", v.as_f64()))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_model<T: Real>(path: &Path, text: &str) -> Result<HashSiftModel<T>> {
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or("").trim_end();
    if magic != MODEL_MAGIC {
        return Err(Error::Version {
            path: path.into(),
            expected: MODEL_MAGIC.into(),
            found: magic.into(),
        });
    }
    let header = lines.next().unwrap_or("");
    let tok: Vec<&str> = header.split_whitespace().collect();
    let (k, rootsift) = match tok.as_slice() {
        ["K", k, "rootsift", r] => (
            k.parse::<usize>().ok(),
            match *r {
                "0" => Some(false),
                "1" => Some(true),
                _ => None,
            },
        ),
        _ => (None, None),
    };
    let (Some(k), Some(rootsift)) = (k, rootsift) else {
        return Err(Error::format(
            path,
            format!("line 2: expected `K <int> rootsift <0|1>`, got `{header}`"),
        ));
    };
    let mut data = Vec::with_capacity(k * HASH_INPUT);
    let mut rows = 0;
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let values = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map(T::of))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|_| Error::format(path, format!("line {}: malformed number", i + 3)))?;
        if values.len() != HASH_INPUT {
            return Err(Error::format(
                path,
                format!(
                    "line {}: expected {HASH_INPUT} values, got {}",
                    i + 3,
                    values.len()
                ),
            ));
        }
        data.extend(values);
        rows += 1;
    }
    if rows != k {
        return Err(Error::format(
            path,
            format!("header declares K = {k} but {rows} rows follow"),
        ));
    }
    let matrix = HashMatrix::from_vec(k, data).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(HashSiftModel::new(matrix, rootsift))
}

pub fn save_model<T: Real>(model: &HashSiftModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<HashSiftModel<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(path, &text)
}
