//! Hamming matching and the evaluation metrics: FPR-95 for patch
//! verification and precision-recall AP for nearest-neighbour matching.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::dataset::VerificationPairSet;
use crate::descriptor::{hamming_bytes, BinaryDescriptor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchResult {
    pub query_idx: usize,
    pub train_idx: usize,
    pub distance: u32,
}

fn common_bits(queries: &[BinaryDescriptor], trains: &[BinaryDescriptor]) -> Result<()> {
    if trains.is_empty() {
        return Err(Error::EmptyInput(
            "matching needs at least one train descriptor",
        ));
    }
    let k = trains[0].bits();
    for d in queries.iter().chain(trains) {
        if d.bits() != k {
            return Err(Error::BitLengthMismatch {
                left: k,
                right: d.bits(),
            });
        }
    }
    Ok(())
}

fn nearest(q: &BinaryDescriptor, trains: &[BinaryDescriptor]) -> (usize, u32) {
    let mut best = (0, u32::MAX);
    for (j, t) in trains.iter().enumerate() {
        let d = hamming_bytes(q.as_bytes(), t.as_bytes());
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Nearest train descriptor of every query; ties go to the lowest index.
pub fn brute_force_match(
    queries: &[BinaryDescriptor],
    trains: &[BinaryDescriptor],
) -> Result<Vec<MatchResult>> {
    common_bits(queries, trains)?;
    Ok(queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let (j, d) = nearest(q, trains);
            MatchResult {
                query_idx: i,
                train_idx: j,
                distance: d,
            }
        })
        .collect())
}

/// Keeps `(i, j)` only when each is the other's nearest neighbour.
pub fn mutual_nn(
    queries: &[BinaryDescriptor],
    trains: &[BinaryDescriptor],
) -> Result<Vec<MatchResult>> {
    let forward = brute_force_match(queries, trains)?;
    if queries.is_empty() {
        return Ok(forward);
    }
    let backward = brute_force_match(trains, queries)?;
    Ok(forward
        .into_iter()
        .filter(|m| backward[m.train_idx].train_idx == m.query_idx)
        .collect())
}

/// Fraction of negatives at or below the smallest distance that accepts at
/// least 95% of the positives.
pub fn fpr95<D: PartialOrd + Copy>(pos: &[D], neg: &[D]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyInput(
            "fpr95 needs positive and negative distances",
        ));
    }
    let mut sorted = pos.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("distances must be comparable"));
    let rank = (95 * sorted.len()).div_ceil(100);
    let t = sorted[rank - 1];
    Ok(neg.iter().filter(|d| **d <= t).count() as f64 / neg.len() as f64)
}

/// One threshold step of the sweep: everything at distance `<= threshold`
/// is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: u32,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PRCurve {
    pub points: Vec<PrPoint>,
    pub average_precision: f64,
}

/// Sweeps the acceptance distance over the matches. Recall is relative to
/// the whole ground truth; AP sums precision times recall gain at every
/// distinct distance, so tied matches count as one step.
pub fn matching_map(
    matches: &[MatchResult],
    ground_truth: &HashSet<(usize, usize)>,
) -> Result<PRCurve> {
    if ground_truth.is_empty() {
        return Err(Error::EmptyInput(
            "matching AP needs a non-empty ground truth",
        ));
    }
    let mut sorted: Vec<&MatchResult> = matches.iter().collect();
    sorted.sort_by_key(|m| m.distance);
    let total = ground_truth.len() as f64;
    let mut curve = PRCurve::default();
    let (mut accepted, mut correct) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let d = sorted[i].distance;
        let before = correct;
        while i < sorted.len() && sorted[i].distance == d {
            accepted += 1;
            correct +=
                usize::from(ground_truth.contains(&(sorted[i].query_idx, sorted[i].train_idx)));
            i += 1;
        }
        let precision = correct as f64 / accepted as f64;
        curve.average_precision += (correct - before) as f64 / total * precision;
        curve.points.push(PrPoint {
            threshold: d,
            precision,
            recall: correct as f64 / total,
        });
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub fpr95: f64,
    pub positives: usize,
    pub negatives: usize,
    pub pos_distances: Vec<f64>,
    pub neg_distances: Vec<f64>,
}

fn split_distances(
    pairs: &VerificationPairSet,
    dist: impl Fn(usize, usize) -> Result<f64> + Sync,
) -> Result<VerificationReport> {
    let d: Vec<f64> = pairs
        .pairs
        .par_iter()
        .map(|p| dist(p.a, p.b))
        .collect::<Result<_>>()?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (p, v) in pairs.pairs.iter().zip(d) {
        if p.is_match {
            pos.push(v);
        } else {
            neg.push(v);
        }
    }
    Ok(VerificationReport {
        fpr95: fpr95(&pos, &neg)?,
        positives: pos.len(),
        negatives: neg.len(),
        pos_distances: pos,
        neg_distances: neg,
    })
}

fn describe_used<P: Sync, D: Send>(
    patches: &[P],
    pairs: &VerificationPairSet,
    describe: impl Fn(&P) -> D + Sync,
) -> Result<Vec<Option<D>>> {
    let mut used = vec![false; patches.len()];
    for p in &pairs.pairs {
        for i in [p.a, p.b] {
            *used.get_mut(i).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "pair index {i} out of range for {} patches",
                    patches.len()
                ))
            })? = true;
        }
    }
    Ok(patches
        .par_iter()
        .zip(used)
        .map(|(p, u)| u.then(|| describe(p)))
        .collect())
}

/// FPR-95 of a binary descriptor on verification pairs, by Hamming distance.
pub fn verification_eval<P: Sync>(
    patches: &[P],
    pairs: &VerificationPairSet,
    describe: impl Fn(&P) -> BinaryDescriptor + Sync,
) -> Result<VerificationReport> {
    let descs = describe_used(patches, pairs, describe)?;
    split_distances(pairs, |a, b| {
        let (x, y) = (
            descs[a].as_ref().expect("described"),
            descs[b].as_ref().expect("described"),
        );
        Ok(f64::from(x.hamming(y)?))
    })
}

/// FPR-95 of a real-valued descriptor on verification pairs, by Euclidean
/// distance.
pub fn verification_eval_float<P: Sync>(
    patches: &[P],
    pairs: &VerificationPairSet,
    describe: impl Fn(&P) -> Vec<f64> + Sync,
) -> Result<VerificationReport> {
    let descs = describe_used(patches, pairs, describe)?;
    split_distances(pairs, |a, b| {
        let (x, y) = (
            descs[a].as_ref().expect("described"),
            descs[b].as_ref().expect("described"),
        );
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        Ok(x.iter()
            .zip(y)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt())
    })
}

/// Maps a point through a 3x3 homography.
pub fn apply_homography(h: &[[f64; 3]; 3], (x, y): (f64, f64)) -> (f64, f64) {
    let w = h[2][0] * x + h[2][1] * y + h[2][2];
    (
        (h[0][0] * x + h[0][1] * y + h[0][2]) / w,
        (h[1][0] * x + h[1][1] * y + h[1][2]) / w,
    )
}

pub const DEFAULT_GT_TOLERANCE: f64 = 2.5;

/// Correct correspondences: query points whose image under `h` lies within
/// `tolerance` pixels of a train point.
pub fn homography_ground_truth(
    queries: &[(f64, f64)],
    trains: &[(f64, f64)],
    h: &[[f64; 3]; 3],
    tolerance: f64,
) -> HashSet<(usize, usize)> {
    let mut gt = HashSet::new();
    for (i, &q) in queries.iter().enumerate() {
        let (px, py) = apply_homography(h, q);
        for (j, &(tx, ty)) in trains.iter().enumerate() {
            if (px - tx).hypot(py - ty) <= tolerance {
                gt.insert((i, j));
            }
        }
    }
    gt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::VerificationPair;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_desc(rng: &mut ChaCha8Rng, bits: usize) -> BinaryDescriptor {
        BinaryDescriptor::from_bits((0..bits).map(|_| rng.random_bool(0.5)))
    }

    #[test]
    fn self_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d: Vec<BinaryDescriptor> = (0..20).map(|_| random_desc(&mut rng, 64)).collect();
        for m in brute_force_match(&d, &d).unwrap() {
            assert_eq!((m.query_idx, m.distance), (m.train_idx, 0));
        }
        assert_eq!(mutual_nn(&d, &d).unwrap().len(), 20);
        assert!(brute_force_match(&d, &[]).is_err());
        assert!(brute_force_match(&d, &[random_desc(&mut rng, 32)]).is_err());
    }

    #[test]
    fn unique_zero_distance_train_wins() {
        let q = BinaryDescriptor::from_bits([true, false, true, true]);
        let far = BinaryDescriptor::from_bits([false, true, false, false]);
        let near = BinaryDescriptor::from_bits([true, false, true, false]);
        let trains = [far.clone(), near, q.clone(), far];
        assert_eq!(brute_force_match(&[q], &trains).unwrap()[0].train_idx, 2);
    }

    #[test]
    fn ties_take_lowest_index() {
        let q = BinaryDescriptor::from_bits([false; 4]);
        let a = BinaryDescriptor::from_bits([true, false, false, false]);
        let b = BinaryDescriptor::from_bits([false, true, false, false]);
        assert_eq!(brute_force_match(&[q], &[b, a]).unwrap()[0].train_idx, 0);
    }

    #[test]
    fn asymmetric_nearest_neighbour_is_dropped() {
        let t0 = BinaryDescriptor::from_bits([false; 4]);
        let q0 = BinaryDescriptor::from_bits([true, true, false, false]);
        let q1 = BinaryDescriptor::from_bits([true, false, false, false]);
        let m = mutual_nn(&[q0, q1], &[t0]).unwrap();
        assert_eq!(
            m,
            vec![MatchResult {
                query_idx: 1,
                train_idx: 0,
                distance: 1
            }]
        );
    }

    #[test]
    fn matchers_equal_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let q: Vec<BinaryDescriptor> = (0..rng.random_range(1..200))
                .map(|_| random_desc(&mut rng, 16))
                .collect();
            let t: Vec<BinaryDescriptor> = (0..rng.random_range(1..200))
                .map(|_| random_desc(&mut rng, 16))
                .collect();
            let nn = |a: &BinaryDescriptor, set: &[BinaryDescriptor]| {
                let mut best = 0;
                for j in 1..set.len() {
                    if a.hamming(&set[j]).unwrap() < a.hamming(&set[best]).unwrap() {
                        best = j;
                    }
                }
                best
            };
            let forward = brute_force_match(&q, &t).unwrap();
            for (i, m) in forward.iter().enumerate() {
                assert_eq!(m.train_idx, nn(&q[i], &t));
                assert_eq!(m.distance, q[i].hamming(&t[m.train_idx]).unwrap());
            }
            let mutual: Vec<(usize, usize)> = mutual_nn(&q, &t)
                .unwrap()
                .iter()
                .map(|m| (m.query_idx, m.train_idx))
                .collect();
            let expected: Vec<(usize, usize)> = (0..q.len())
                .map(|i| (i, nn(&q[i], &t)))
                .filter(|&(i, j)| nn(&t[j], &q) == i)
                .collect();
            assert_eq!(mutual, expected);
        }
    }

    /// Scans every candidate threshold instead of using the sorted rank.
    fn fpr95_scan(pos: &[u32], neg: &[u32]) -> f64 {
        let mut candidates: Vec<u32> = pos.iter().chain(neg).copied().collect();
        candidates.sort();
        let t = candidates
            .into_iter()
            .find(|t| 100 * pos.iter().filter(|d| *d <= t).count() >= 95 * pos.len())
            .unwrap();
        neg.iter().filter(|d| **d <= t).count() as f64 / neg.len() as f64
    }

    #[test]
    fn fpr95_examples() {
        let pos: Vec<u32> = (1..=20).collect();
        let neg: Vec<u32> = (10..30).collect();
        assert_eq!(fpr95(&pos, &neg).unwrap(), 0.5);
        assert_eq!(fpr95_scan(&pos, &neg), 0.5);
        assert_eq!(fpr95(&[1, 2, 3], &[4, 5]).unwrap(), 0.0);
        let same = [3u32, 1, 4, 1, 5, 9, 2, 6];
        assert_eq!(fpr95(&same, &same).unwrap(), fpr95_scan(&same, &same));
        assert!(fpr95::<u32>(&[], &[1]).is_err());
        assert!(fpr95::<u32>(&[1], &[]).is_err());
    }

    #[test]
    fn fpr95_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let pos: Vec<u32> = (0..rng.random_range(1..40))
                .map(|_| rng.random_range(0..30))
                .collect();
            let neg: Vec<u32> = (0..rng.random_range(1..40))
                .map(|_| rng.random_range(0..30))
                .collect();
            assert_eq!(fpr95(&pos, &neg).unwrap(), fpr95_scan(&pos, &neg));
        }
    }

    fn matching_ap_scan(matches: &[MatchResult], gt: &HashSet<(usize, usize)>) -> f64 {
        let mut thresholds: Vec<u32> = matches.iter().map(|m| m.distance).collect();
        thresholds.sort();
        thresholds.dedup();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for t in thresholds {
            let acc: Vec<&MatchResult> = matches.iter().filter(|m| m.distance <= t).collect();
            let ok = acc
                .iter()
                .filter(|m| gt.contains(&(m.query_idx, m.train_idx)))
                .count();
            let recall = ok as f64 / gt.len() as f64;
            ap += (recall - prev_recall) * (ok as f64 / acc.len() as f64);
            prev_recall = recall;
        }
        ap
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<MatchResult>, HashSet<(usize, usize)>) {
        let n = rng.random_range(1..25);
        let matches: Vec<MatchResult> = (0..n)
            .map(|i| MatchResult {
                query_idx: i,
                train_idx: rng.random_range(0..5),
                distance: rng.random_range(0..12),
            })
            .collect();
        let mut gt: HashSet<(usize, usize)> = (0..n).map(|i| (i, rng.random_range(0..5))).collect();
        gt.insert((n + 1, 0));
        (matches, gt)
    }

    #[test]
    fn matching_ap_examples() {
        let m = MatchResult {
            query_idx: 0,
            train_idx: 0,
            distance: 3,
        };
        let gt: HashSet<(usize, usize)> = [(0, 0)].into();
        assert_eq!(matching_map(&[m], &gt).unwrap().average_precision, 1.0);
        let wrong: HashSet<(usize, usize)> = [(0, 1)].into();
        assert_eq!(matching_map(&[m], &wrong).unwrap().average_precision, 0.0);
        assert!(matching_map(&[m], &HashSet::new()).is_err());
    }

    #[test]
    fn matching_ap_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let (m, gt) = random_instance(&mut rng);
            let curve = matching_map(&m, &gt).unwrap();
            assert!((curve.average_precision - matching_ap_scan(&m, &gt)).abs() < 1e-12);
            assert!(curve.points.windows(2).all(|w| w[0].recall <= w[1].recall));
        }
    }

    #[test]
    fn verification_eval_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let descs: Vec<BinaryDescriptor> = (0..400).map(|_| random_desc(&mut rng, 256)).collect();
        let mut pairs = VerificationPairSet::default();
        for i in 0..100 {
            pairs.pairs.push(VerificationPair {
                a: i,
                b: i,
                is_match: true,
            });
            pairs.pairs.push(VerificationPair {
                a: i,
                b: i + 100,
                is_match: false,
            });
        }
        let r = verification_eval(&descs, &pairs, |d| d.clone()).unwrap();
        assert_eq!((r.fpr95, r.positives, r.negatives), (0.0, 100, 100));

        // random bits: positive and negative distances share a distribution
        let mut pairs = VerificationPairSet::default();
        for i in 0..1000 {
            let (a, b) = (rng.random_range(0..400), rng.random_range(0..400));
            if a != b {
                pairs.pairs.push(VerificationPair {
                    a,
                    b,
                    is_match: i % 2 == 0,
                });
            }
        }
        let r = verification_eval(&descs, &pairs, |d| d.clone()).unwrap();
        assert!((r.fpr95 - 0.95).abs() <= 0.05, "{}", r.fpr95);

        let pos: Vec<u32> = pairs
            .pairs
            .iter()
            .filter(|p| p.is_match)
            .map(|p| descs[p.a].hamming(&descs[p.b]).unwrap())
            .collect();
        let neg: Vec<u32> = pairs
            .pairs
            .iter()
            .filter(|p| !p.is_match)
            .map(|p| descs[p.a].hamming(&descs[p.b]).unwrap())
            .collect();
        assert_eq!(r.fpr95, fpr95(&pos, &neg).unwrap());

        let bad = VerificationPairSet {
            pairs: vec![VerificationPair {
                a: 0,
                b: 999,
                is_match: true,
            }],
        };
        assert!(verification_eval(&descs, &bad, |d| d.clone()).is_err());
    }

    #[test]
    fn homography_ground_truth_tolerance() {
        let h = [[1.0, 0.0, 5.0], [0.0, 1.0, -2.0], [0.0, 0.0, 1.0]];
        let q = [(0.0, 0.0), (10.0, 10.0)];
        let t = [(5.0, -2.0), (16.0, 8.0), (15.0, 11.0)];
        let gt = homography_ground_truth(&q, &t, &h, DEFAULT_GT_TOLERANCE);
        assert_eq!(gt, [(0, 0), (1, 1)].into());
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(seed in any::<u64>(), bits in 1usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_desc(&mut rng, bits), random_desc(&mut rng, bits), random_desc(&mut rng, bits));
            let d = |x: &BinaryDescriptor, y: &BinaryDescriptor| x.hamming(y).unwrap();
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn fpr95_does_not_grow_with_far_negative(
            pos in prop::collection::vec(0u32..50, 1..40),
            neg in prop::collection::vec(0u32..50, 1..40),
            extra in 1u32..20,
        ) {
            let before = fpr95(&pos, &neg).unwrap();
            let mut sorted = pos.clone();
            sorted.sort();
            let t = sorted[(95 * pos.len()).div_ceil(100) - 1];
            let mut more = neg.clone();
            more.push(t + extra);
            prop_assert!(fpr95(&pos, &more).unwrap() <= before);
        }

        #[test]
        fn ap_is_bounded_and_one_iff_separated(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..20);
            let matches: Vec<MatchResult> = (0..n)
                .map(|i| MatchResult { query_idx: i, train_idx: i, distance: rng.random_range(0..30) })
                .collect();
            let correct: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            prop_assume!(correct.iter().any(|c| *c));
            let gt: HashSet<(usize, usize)> = (0..n).filter(|&i| correct[i]).map(|i| (i, i)).collect();
            let ap = matching_map(&matches, &gt).unwrap().average_precision;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
            let worst_ok = (0..n).filter(|&i| correct[i]).map(|i| matches[i].distance).max().unwrap();
            let best_bad = (0..n).filter(|&i| !correct[i]).map(|i| matches[i].distance).min();
            let separated = best_bad.is_none_or(|b| worst_ok < b);
            prop_assert_eq!((ap - 1.0).abs() < 1e-12, separated);
        }
    }
}
