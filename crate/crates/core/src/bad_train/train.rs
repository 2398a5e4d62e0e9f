//! Greedy BAD feature selection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bad::{BadModel, BoxPair, BoxPairFeature, THETA_LIMIT};
use crate::dataset::{draw_pairs, mine_triplets, sample_triplets, LabeledPatchSet, TripletBatch};
use crate::descriptor::BinaryDescriptor;
use crate::error::{Error, Result};
use crate::imaging::{augment_patch, AugmentParams, IntegralImage, Patch, PATCH_SIZE};
use crate::scalar::Real;

use super::loss::{margin_offset, step_term};
use super::threshold::{triplet_events, BucketScratch, ThresholdEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct BadTrainConfig {
    /// Number of bits to select.
    pub bits: usize,
    /// Triplets mined per iteration.
    pub triplets: usize,
    /// Candidate box pairs drawn per iteration.
    pub candidates: usize,
    /// Margin on per-bit-normalized similarities.
    pub margin: f64,
    /// Threshold grid step.
    pub precision: f64,
    /// Anchor swap during mining.
    pub swap: bool,
    /// Jitter applied to triplet patches each iteration.
    pub augment: Option<AugmentParams>,
    pub seed: u64,
}

impl Default for BadTrainConfig {
    fn default() -> Self {
        BadTrainConfig {
            bits: 256,
            triplets: 512,
            candidates: 1000,
            margin: 0.2,
            precision: 0.1,
            swap: true,
            augment: Some(AugmentParams::mild()),
            seed: 0,
        }
    }
}

impl BadTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.triplets == 0 || self.candidates == 0 {
            return Err(Error::InvalidArgument(
                "bits, triplets and candidates must all be at least 1".into(),
            ));
        }
        if !(self.margin > 0.0) || !(self.precision > 0.0) {
            return Err(Error::InvalidArgument(
                "margin and precision must be positive".into(),
            ));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

/// Triplet patches prepared for candidate evaluation at iteration `t`.
pub struct SelectionProblem<T> {
    /// Integral images in (anchor, positive, negative) order per triplet.
    integrals: Vec<IntegralImage<T>>,
    /// Bit-independent hinge argument per triplet.
    offsets: Vec<f64>,
    t: usize,
    precision: f64,
}

impl<T: Real> SelectionProblem<T> {
    /// `prev_ap` / `prev_an` are the normalized similarities over the first
    /// `t - 1` bits (ignored at `t = 1`).
    pub fn new(
        integrals: Vec<IntegralImage<T>>,
        prev_ap: &[f64],
        prev_an: &[f64],
        margin: f64,
        t: usize,
        precision: f64,
    ) -> Result<Self> {
        let n = integrals.len() / 3;
        if !integrals.len().is_multiple_of(3) || n == 0 {
            return Err(Error::InvalidArgument(
                "integrals must hold whole triplets".into(),
            ));
        }
        if prev_ap.len() != n || prev_an.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                actual: prev_ap.len().min(prev_an.len()),
            });
        }
        if t == 0 {
            return Err(Error::InvalidArgument("iteration index is 1-based".into()));
        }
        let offsets = prev_ap
            .iter()
            .zip(prev_an)
            .map(|(&ap, &an)| margin_offset(ap, an, margin, t))
            .collect();
        Ok(SelectionProblem {
            integrals,
            offsets,
            t,
            precision,
        })
    }

    pub fn triplets(&self) -> usize {
        self.offsets.len()
    }

    /// Feature values of `geometry` on every triplet member.
    pub fn values(&self, geometry: &BoxPair) -> Result<Vec<[f64; 3]>> {
        let c = geometry.compile()?;
        Ok(self
            .integrals
            .chunks_exact(3)
            .map(|m| {
                [
                    c.value(&m[0]).as_f64(),
                    c.value(&m[1]).as_f64(),
                    c.value(&m[2]).as_f64(),
                ]
            })
            .collect())
    }

    fn evaluate_with(
        &self,
        geometry: &BoxPair,
        scratch: &mut BucketScratch<f64>,
        events: &mut Vec<ThresholdEvent<f64>>,
    ) -> Result<(f64, f64)> {
        events.clear();
        let values = self.values(geometry)?;
        let base = triplet_events(&values, &self.offsets, self.t, events)?;
        let r = scratch.search(events, base)?;
        Ok((r.theta.clamp(-THETA_LIMIT, THETA_LIMIT), r.loss))
    }

    /// Optimal threshold and loss of one candidate geometry.
    pub fn evaluate(&self, geometry: &BoxPair) -> Result<(f64, f64)> {
        let mut scratch = BucketScratch::new(self.precision)?;
        self.evaluate_with(geometry, &mut scratch, &mut Vec::new())
    }

    /// Loss of a fully specified feature on these triplets.
    pub fn loss_of(&self, feature: &BoxPairFeature) -> Result<f64> {
        let values = self.values(&feature.geometry)?;
        Ok(values.iter().zip(&self.offsets).fold(0.0, |acc, (v, &o)| {
            acc + step_term(
                o,
                v.map(|x| if x <= feature.theta { 1 } else { -1 }),
                self.t,
            )
        }))
    }
}

/// Outcome of one greedy step.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub feature: BoxPairFeature,
    pub loss: f64,
    /// Index of the winner among the candidates.
    pub index: usize,
    /// Optimal loss of every candidate, in draw order.
    pub candidate_losses: Vec<f64>,
}

/// Evaluates every candidate with the bucketed threshold search and keeps the
/// lowest loss; ties go to the earliest candidate.
pub fn select_next_feature<T: Real>(
    problem: &SelectionProblem<T>,
    candidates: &[BoxPair],
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate features"));
    }
    let scored: Vec<(f64, f64)> = candidates
        .par_iter()
        .map_init(
            || (BucketScratch::new(problem.precision), Vec::new()),
            |(scratch, events), g| match scratch {
                Ok(s) => problem.evaluate_with(g, s, events),
                Err(e) => Err(Error::InvalidArgument(e.to_string())),
            },
        )
        .collect::<Result<_>>()?;
    let mut index = 0;
    for (j, &(_, loss)) in scored.iter().enumerate() {
        if loss < scored[index].1 {
            index = j;
        }
    }
    let (theta, loss) = scored[index];
    Ok(Selection {
        feature: candidates[index].with_threshold(theta),
        loss,
        index,
        candidate_losses: scored.into_iter().map(|(_, l)| l).collect(),
    })
}

/// Uniform box pair: centres over the 32x32 grid (distinct), side in `[1, 32]`.
pub fn sample_geometry<R: Rng + ?Sized>(rng: &mut R) -> BoxPair {
    let n = PATCH_SIZE as i32;
    loop {
        let g = BoxPair {
            x1: rng.random_range(0..n),
            y1: rng.random_range(0..n),
            x2: rng.random_range(0..n),
            y2: rng.random_range(0..n),
            side: rng.random_range(1..=n),
        };
        if (g.x1, g.y1) != (g.x2, g.y2) {
            return g;
        }
    }
}

/// Untrained baseline: `bits` random box pairs, all thresholds zero.
pub fn random_model(bits: usize, seed: u64) -> Result<BadModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BadModel::new(
        (0..bits)
            .map(|_| sample_geometry(&mut rng).with_threshold(0.0))
            .collect(),
    )
}

/// One row of the selection trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub iteration: usize,
    pub feature: BoxPairFeature,
    /// Loss of the selected feature on this iteration's triplets.
    pub loss: f64,
    /// Loss on the fixed diagnostic triplets after appending the feature.
    pub heldout_loss: f64,
    pub best_candidate_loss: f64,
    pub worst_candidate_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionTrace {
    pub records: Vec<SelectionRecord>,
}

impl SelectionTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with columns
    /// `iter,x1,y1,x2,y2,s,theta,loss,best_candidate_loss,worst_candidate_loss`,
    /// where `loss` is the diagnostic (held-out triplet) loss.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iter,x1,y1,x2,y2,s,theta,loss,best_candidate_loss,worst_candidate_loss\n",
        );
        for r in &self.records {
            let g = r.feature.geometry;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                g.x1,
                g.y1,
                g.x2,
                g.y2,
                g.side,
                r.feature.theta,
                r.heldout_loss,
                r.best_candidate_loss,
                r.worst_candidate_loss
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Patches of a batch in (anchor, positive, negative) order, optionally
/// jittered. Each patch gets its own generator seeded from `rng`, so results
/// do not depend on scheduling.
fn triplet_patches<T: Real>(
    set: &LabeledPatchSet<T>,
    batch: &TripletBatch,
    augment: Option<&AugmentParams>,
    rng: &mut ChaCha8Rng,
) -> Vec<Patch<T>> {
    let members: Vec<usize> = batch
        .triplets
        .iter()
        .flat_map(|t| [t.anchor, t.positive, t.negative])
        .collect();
    match augment {
        Some(params) if !params.is_identity() => {
            let seeds: Vec<u64> = members.iter().map(|_| rng.next_u64()).collect();
            members
                .par_iter()
                .zip(seeds)
                .map(|(&i, s)| {
                    augment_patch(set.patch(i), params, &mut ChaCha8Rng::seed_from_u64(s))
                })
                .collect()
        }
        _ => members.iter().map(|&i| set.patch(i).clone()).collect(),
    }
}

/// Normalized similarity `(bits - 2 * hamming) / bits`.
fn normalized_similarity(a: &BinaryDescriptor, b: &BinaryDescriptor) -> f64 {
    let k = a.bits() as f64;
    let d = f64::from(a.hamming(b).expect("equal lengths"));
    (k - 2.0 * d) / k
}

/// Greedy selection of `cfg.bits` weak descriptors.
///
/// Each iteration mines fresh triplets (random negatives at the first
/// iteration, hardest negatives under the partial descriptor afterwards),
/// jitters their patches, draws `cfg.candidates` box pairs and appends the
/// one whose optimal threshold gives the lowest incremental loss.
pub fn train_bad<T: Real>(
    set: &LabeledPatchSet<T>,
    cfg: &BadTrainConfig,
) -> Result<(BadModel, SelectionTrace)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // fixed diagnostic triplets, never augmented
    let heldout = sample_triplets(set, cfg.triplets, None, false, &mut rng)?;
    let heldout_ii: Vec<[IntegralImage<T>; 3]> = heldout
        .triplets
        .par_iter()
        .map(|t| [t.anchor, t.positive, t.negative].map(|i| set.patch(i).integral()))
        .collect();
    let mut heldout_ap = vec![0i64; heldout.len()];
    let mut heldout_an = vec![0i64; heldout.len()];

    let mut features: Vec<BoxPairFeature> = Vec::with_capacity(cfg.bits);
    let mut trace = SelectionTrace::default();
    let mut cache: Vec<Option<BinaryDescriptor>> = vec![None; set.len()];

    for t in 1..=cfg.bits {
        let draw = draw_pairs(set, cfg.triplets, &mut rng)?;
        let batch = if t == 1 {
            mine_triplets(set, &draw, None, cfg.swap, &mut rng)?
        } else {
            let partial = BadModel::new(features.clone())?;
            let touched = draw.touched();
            let descs: Vec<BinaryDescriptor> = touched
                .par_iter()
                .map(|&i| partial.describe_integral(&set.patch(i).integral()))
                .collect();
            for (&i, d) in touched.iter().zip(descs) {
                cache[i] = Some(d);
            }
            let dist = |a: usize, b: usize| {
                let (da, db) = (
                    cache[a].as_ref().expect("described"),
                    cache[b].as_ref().expect("described"),
                );
                f64::from(da.hamming(db).expect("equal lengths"))
            };
            let batch = mine_triplets(set, &draw, Some(&dist), cfg.swap, &mut rng)?;
            for &i in &touched {
                cache[i] = None;
            }
            batch
        };

        let patches = triplet_patches(set, &batch, cfg.augment.as_ref(), &mut rng);
        let integrals: Vec<IntegralImage<T>> = patches.par_iter().map(Patch::integral).collect();
        let (prev_ap, prev_an): (Vec<f64>, Vec<f64>) = if t == 1 {
            (vec![0.0; batch.len()], vec![0.0; batch.len()])
        } else {
            let partial = BadModel::new(features.clone())?;
            let descs: Vec<BinaryDescriptor> = integrals
                .par_iter()
                .map(|ii| partial.describe_integral(ii))
                .collect();
            descs
                .chunks_exact(3)
                .map(|m| {
                    (
                        normalized_similarity(&m[0], &m[1]),
                        normalized_similarity(&m[0], &m[2]),
                    )
                })
                .unzip()
        };
        let problem =
            SelectionProblem::new(integrals, &prev_ap, &prev_an, cfg.margin, t, cfg.precision)?;
        let candidates: Vec<BoxPair> = (0..cfg.candidates)
            .map(|_| sample_geometry(&mut rng))
            .collect();
        let selection = select_next_feature(&problem, &candidates)?;
        let feature = selection.feature;
        features.push(feature);

        // update diagnostic similarities with the new bit
        let compiled = feature.geometry.compile()?;
        let theta = T::of(feature.theta);
        let mut heldout_loss = 0.0;
        for (i, ii) in heldout_ii.iter().enumerate() {
            let h = ii
                .each_ref()
                .map(|x| if compiled.value(x) <= theta { 1i64 } else { -1 });
            heldout_ap[i] += h[0] * h[1];
            heldout_an[i] += h[0] * h[2];
            heldout_loss +=
                (cfg.margin - (heldout_ap[i] - heldout_an[i]) as f64 / t as f64).max(0.0);
        }

        let worst = selection
            .candidate_losses
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        trace.records.push(SelectionRecord {
            iteration: t,
            feature,
            loss: selection.loss,
            heldout_loss,
            best_candidate_loss: selection.loss,
            worst_candidate_loss: worst,
        });
    }
    Ok((BadModel::new(features)?, trace))
}

/// Mean `+1/-1` response of every bit over `patches`.
pub fn bit_means<T: Real>(model: &BadModel, patches: &[Patch<T>]) -> Vec<f64> {
    let descs = crate::bad::describe_batch(patches, model);
    let n = descs.len().max(1) as f64;
    (0..model.bits())
        .map(|k| {
            descs
                .iter()
                .map(|d| if d.get(k) { 1.0 } else { -1.0 })
                .sum::<f64>()
                / n
        })
        .collect()
}
