//! Optimal stump threshold for a triplet loss by sweeping sorted feature values.
//!
//! With `h(x) = +1` iff `f(x) <= theta`, every triplet's loss is piecewise
//! constant in `theta` and only changes where `theta` crosses one of its
//! three feature values. Each crossing is recorded as an event carrying the
//! loss change, and the sweep accumulates them from the `theta = -inf` loss
//! (all responses `-1`). The loss at `+inf` equals the loss at `-inf`, so the
//! last event closes the sweep at the starting value.

use crate::error::{Error, Result};
use crate::scalar::LossScalar;

use super::loss::step_term;

/// Loss change when `theta` moves from just below to just above `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdEvent<L> {
    pub value: f64,
    pub delta: L,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSearchResult<L> {
    pub theta: f64,
    pub loss: L,
}

/// Lower end of the BAD feature range.
pub const VALUE_MIN: f64 = -255.0;
/// Upper end of the BAD feature range.
pub const VALUE_MAX: f64 = 255.0;

/// Appends the crossing events of each triplet and returns the summed loss
/// at `theta = -inf`.
///
/// `values[i]` holds the candidate feature on (anchor, positive, negative)
/// and `offsets[i]` the bit-independent hinge argument of triplet `i` (see
/// [`super::loss::margin_offset`]). Members sharing a value produce a
/// single event.
pub fn triplet_events<L: LossScalar>(
    values: &[[f64; 3]],
    offsets: &[L],
    t: usize,
    events: &mut Vec<ThresholdEvent<L>>,
) -> Result<L> {
    if values.len() != offsets.len() {
        return Err(Error::ShapeMismatch {
            expected: values.len(),
            actual: offsets.len(),
        });
    }
    let mut base = L::zero();
    for (v, &offset) in values.iter().zip(offsets) {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut bits = [-1i8; 3];
        let mut current = step_term(offset, bits, t);
        base = base + current;
        let mut k = 0;
        while k < 3 {
            let value = v[order[k]];
            while k < 3 && v[order[k]] == value {
                bits[order[k]] = 1;
                k += 1;
            }
            let next = step_term(offset, bits, t);
            events.push(ThresholdEvent {
                value,
                delta: next - current,
            });
            current = next;
        }
    }
    Ok(base)
}

/// Exact sweep over the sorted crossing values.
///
/// Returns the first minimum in sweep order. The threshold is placed
/// `epsilon` above the crossing value, or halfway to the next distinct value
/// when that is closer, so the reported loss is attained at `theta`.
pub fn find_threshold<L: LossScalar>(
    events: &[ThresholdEvent<L>],
    base_loss: L,
    epsilon: f64,
) -> Result<ThresholdSearchResult<L>> {
    if events.is_empty() {
        return Err(Error::EmptyInput(
            "threshold search needs at least one crossing",
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut sorted = events.to_vec();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));

    let mut best: Option<(usize, L)> = None;
    let mut sum = base_loss;
    let mut k = 0;
    while k < sorted.len() {
        let value = sorted[k].value;
        while k < sorted.len() && sorted[k].value == value {
            sum = sum + sorted[k].delta;
            k += 1;
        }
        if best.is_none_or(|(_, l)| sum < l) {
            best = Some((k - 1, sum));
        }
    }
    let (last, loss) = best.expect("non-empty events");
    let value = sorted[last].value;
    let step = match sorted.get(last + 1) {
        Some(next) => epsilon.min((next.value - value) / 2.0),
        None => epsilon,
    };
    Ok(ThresholdSearchResult {
        theta: value + step,
        loss,
    })
}

/// Number of grid points of the bucketed search at `precision`.
pub fn bucket_count(precision: f64) -> usize {
    ((VALUE_MAX - VALUE_MIN) / precision).round() as usize + 1
}

/// Counting-sort variant of [`find_threshold`] over a fixed grid of step
/// `precision` on `[-255, 255]`, `O(P + m)`.
///
/// Values are rounded to the nearest grid point and the threshold is placed
/// `precision / 2` above it. Values closer than one grid step may merge, so
/// the loss can differ from the exact optimum by at most the change within
/// one bucket; on grid-aligned values (e.g. integers at precision 0.1) the
/// result is exact.
pub fn find_threshold_bucketed<L: LossScalar>(
    events: &[ThresholdEvent<L>],
    base_loss: L,
    precision: f64,
) -> Result<ThresholdSearchResult<L>> {
    let mut scratch = BucketScratch::new(precision)?;
    scratch.search(events, base_loss)
}

/// Reusable bucket storage for repeated bucketed searches at one precision.
#[derive(Debug, Clone)]
pub struct BucketScratch<L> {
    precision: f64,
    sums: Vec<L>,
    occupied: Vec<bool>,
}

impl<L: LossScalar> BucketScratch<L> {
    pub fn new(precision: f64) -> Result<Self> {
        if !(precision > 0.0) || !precision.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "precision must be positive, got {precision}"
            )));
        }
        let m = bucket_count(precision);
        Ok(BucketScratch {
            precision,
            sums: vec![L::zero(); m],
            occupied: vec![false; m],
        })
    }

    #[inline]
    fn bucket(&self, value: f64) -> usize {
        let b = ((value - VALUE_MIN) / self.precision).round();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.sums.len() - 1)
        }
    }

    pub fn search(
        &mut self,
        events: &[ThresholdEvent<L>],
        base_loss: L,
    ) -> Result<ThresholdSearchResult<L>> {
        if events.is_empty() {
            return Err(Error::EmptyInput(
                "threshold search needs at least one crossing",
            ));
        }
        let (mut lo, mut hi) = (usize::MAX, 0);
        for e in events {
            let b = self.bucket(e.value);
            self.sums[b] = self.sums[b] + e.delta;
            self.occupied[b] = true;
            lo = lo.min(b);
            hi = hi.max(b);
        }
        let mut best: Option<(usize, L)> = None;
        let mut sum = base_loss;
        for b in lo..=hi {
            if !self.occupied[b] {
                continue;
            }
            sum = sum + self.sums[b];
            if best.is_none_or(|(_, l)| sum < l) {
                best = Some((b, sum));
            }
            self.sums[b] = L::zero();
            self.occupied[b] = false;
        }
        let (b, loss) = best.expect("non-empty events");
        Ok(ThresholdSearchResult {
            theta: VALUE_MIN + b as f64 * self.precision + self.precision / 2.0,
            loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::loss::margin_offset;
    use super::*;
    use num_rational::Ratio;
    use num_traits::Zero;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Q = Ratio<i64>;

    /// Direct loss at a threshold.
    fn loss_at(values: &[[f64; 3]], offsets: &[Q], t: usize, theta: f64) -> Q {
        values.iter().zip(offsets).fold(Q::zero(), |acc, (v, &o)| {
            acc + step_term(o, v.map(|x| if x <= theta { 1 } else { -1 }), t)
        })
    }

    /// O(P^2): evaluate the loss just above every distinct value.
    fn brute_force(values: &[[f64; 3]], offsets: &[Q], t: usize) -> Q {
        let mut all: Vec<f64> = values.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        let mut best = loss_at(values, offsets, t, f64::NEG_INFINITY);
        for w in 0..all.len() {
            let theta = match all.get(w + 1) {
                Some(n) => (all[w] + n) / 2.0,
                None => all[w] + 1.0,
            };
            let l = loss_at(values, offsets, t, theta);
            if l < best {
                best = l;
            }
        }
        best
    }

    fn random_instance(rng: &mut ChaCha8Rng, integer: bool) -> (Vec<[f64; 3]>, Vec<Q>, usize) {
        let n = rng.random_range(1..=100);
        let t = rng.random_range(1..=9);
        let tau = [Q::new(1, 10), Q::new(1, 5), Q::new(1, 2)][rng.random_range(0..3)];
        let value = |r: &mut ChaCha8Rng| {
            if integer {
                r.random_range(-40..=40) as f64
            } else {
                r.random_range(-40.0..40.0)
            }
        };
        let values = (0..n)
            .map(|_| [value(rng), value(rng), value(rng)])
            .collect();
        let prev = |r: &mut ChaCha8Rng| {
            if t > 1 {
                Q::new(r.random_range(-(t as i64 - 1)..t as i64), t as i64 - 1)
            } else {
                Q::zero()
            }
        };
        let offsets = (0..n)
            .map(|_| margin_offset(prev(rng), prev(rng), tau, t))
            .collect();
        (values, offsets, t)
    }

    #[test]
    fn separating_threshold_for_one_triplet() {
        let offsets = [margin_offset(Q::zero(), Q::zero(), Q::new(1, 2), 1)];
        let values = [[0.0, 1.0, 10.0]];
        let mut events = Vec::new();
        let base = triplet_events(&values, &offsets, 1, &mut events).unwrap();
        let r = find_threshold(&events, base, 0.05).unwrap();
        assert!(r.theta > 1.0 && r.theta < 10.0);
        assert_eq!(r.loss, Q::zero());
        assert_eq!(loss_at(&values, &offsets, 1, r.theta), r.loss);
    }

    #[test]
    fn equal_values_give_constant_loss() {
        let offsets = vec![margin_offset(Q::zero(), Q::zero(), Q::new(1, 5), 1); 4];
        let values = vec![[7.0; 3]; 4];
        let mut events = Vec::new();
        let base = triplet_events(&values, &offsets, 1, &mut events).unwrap();
        let r = find_threshold(&events, base, 0.05).unwrap();
        assert_eq!(r.theta, 7.05);
        assert_eq!(r.loss, base);
        let b = find_threshold_bucketed(&events, base, 0.1).unwrap();
        assert!((b.theta - 7.05).abs() < 1e-9);
        assert_eq!(b.loss, base);
    }

    #[test]
    fn exact_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..100 {
            let (values, offsets, t) = random_instance(&mut rng, case % 2 == 0);
            let mut events = Vec::new();
            let base = triplet_events(&values, &offsets, t, &mut events).unwrap();
            let r = find_threshold(&events, base, 0.05).unwrap();
            assert_eq!(r.loss, brute_force(&values, &offsets, t), "case {case}");
            assert_eq!(
                loss_at(&values, &offsets, t, r.theta),
                r.loss,
                "case {case}"
            );
        }
    }

    #[test]
    fn bucketed_matches_exact_on_integers() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for case in 0..100 {
            let (values, offsets, t) = random_instance(&mut rng, true);
            let mut events = Vec::new();
            let base = triplet_events(&values, &offsets, t, &mut events).unwrap();
            let exact = find_threshold(&events, base, 0.05).unwrap();
            let bucketed = find_threshold_bucketed(&events, base, 0.1).unwrap();
            assert_eq!(bucketed.loss, exact.loss, "case {case}");
            assert!((bucketed.theta - exact.theta).abs() < 1e-9, "case {case}");
            assert_eq!(loss_at(&values, &offsets, t, bucketed.theta), bucketed.loss);
        }
    }

    #[test]
    fn optimum_no_worse_than_constant_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let (values, offsets, t) = random_instance(&mut rng, false);
            let mut events = Vec::new();
            let base = triplet_events(&values, &offsets, t, &mut events).unwrap();
            let r = find_threshold(&events, base, 0.05).unwrap();
            assert!(r.loss <= loss_at(&values, &offsets, t, f64::NEG_INFINITY));
            assert!(r.loss <= loss_at(&values, &offsets, t, f64::INFINITY));
        }
    }

    #[test]
    fn single_value_and_errors() {
        let events = [ThresholdEvent {
            value: 3.0,
            delta: 0.0,
        }];
        let r = find_threshold_bucketed(&events, 1.0, 0.1).unwrap();
        assert!((r.theta - 3.05).abs() < 1e-9);
        assert_eq!(find_threshold(&events, 1.0, 0.05).unwrap().theta, 3.05);
        assert!(matches!(
            find_threshold::<f64>(&[], 0.0, 0.05),
            Err(Error::EmptyInput(_))
        ));
        assert!(find_threshold_bucketed(&events, 1.0, 0.0).is_err());
        assert!(find_threshold_bucketed(&events, 1.0, -0.1).is_err());
        assert_eq!(bucket_count(0.1), 5101);
    }

    #[test]
    fn scratch_is_reset_between_searches() {
        let mut scratch = BucketScratch::<f64>::new(0.1).unwrap();
        let a = [
            ThresholdEvent {
                value: 1.0,
                delta: -2.0,
            },
            ThresholdEvent {
                value: 5.0,
                delta: 2.0,
            },
        ];
        let first = scratch.search(&a, 3.0).unwrap();
        let second = scratch.search(&a, 3.0).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.loss, 1.0);
    }
}
