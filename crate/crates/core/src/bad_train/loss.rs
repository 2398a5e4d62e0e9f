//! Triplet ranking loss on per-bit-normalized similarities.
//!
//! Similarities between `+1/-1` codes are divided by the number of bits, so
//! they lie in `[-1, 1]` and a fixed margin means the same thing at every
//! greedy iteration. At iteration `t` the running similarity is
//! `S_t = (t - 1)/t * S_{t-1} + h_t(x) h_t(y) / t`.

use crate::error::{Error, Result};
use crate::scalar::LossScalar;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: a,
            actual: b,
        })
    }
}

/// `sum_i [tau - S(a_i, p_i) + S(a_i, n_i)]_+`.
pub fn triplet_loss<L: LossScalar>(s_ap: &[L], s_an: &[L], tau: L) -> Result<L> {
    check_len(s_ap.len(), s_an.len())?;
    Ok(s_ap
        .iter()
        .zip(s_an)
        .fold(L::zero(), |acc, (&ap, &an)| acc + (tau - ap + an).hinge()))
}

/// Weight of the previous normalized similarity at iteration `t`: `(t - 1) / t`.
pub fn carry_weight<L: LossScalar>(t: usize) -> L {
    L::from_usize_exact(t - 1) / L::from_usize_exact(t)
}

/// Hinge argument when the candidate bit agrees on every member, i.e. the
/// part of the `t`-th term that does not depend on the new bit:
/// `tau - (t - 1)/t * (S_ap - S_an)`.
pub fn margin_offset<L: LossScalar>(prev_ap: L, prev_an: L, tau: L, t: usize) -> L {
    tau - carry_weight::<L>(t) * (prev_ap - prev_an)
}

/// One hinge term of the incremental loss given the candidate bits of a triplet.
#[inline]
pub fn step_term<L: LossScalar>(offset: L, bits: [i8; 3], t: usize) -> L {
    let [a, p, n] = bits.map(i64::from);
    let k = L::from_i64(a * n - a * p).expect("small integer");
    (offset + k / L::from_usize_exact(t)).hinge()
}

/// Incremental loss of appending one bit at iteration `t` (1-based), given the
/// normalized similarities over the first `t - 1` bits.
pub fn per_step_loss<L: LossScalar>(
    prev_ap: &[L],
    prev_an: &[L],
    bits_a: &[i8],
    bits_p: &[i8],
    bits_n: &[i8],
    tau: L,
    t: usize,
) -> Result<L> {
    let n = prev_ap.len();
    for len in [prev_an.len(), bits_a.len(), bits_p.len(), bits_n.len()] {
        check_len(n, len)?;
    }
    if t == 0 {
        return Err(Error::InvalidArgument("iteration index is 1-based".into()));
    }
    if let Some(b) = [bits_a, bits_p, bits_n]
        .iter()
        .flat_map(|b| b.iter())
        .find(|&&b| b != 1 && b != -1)
    {
        return Err(Error::InvalidArgument(format!(
            "bit value {b} is not +1 or -1"
        )));
    }
    Ok((0..n).fold(L::zero(), |acc, i| {
        let offset = margin_offset(prev_ap[i], prev_an[i], tau, t);
        acc + step_term(offset, [bits_a[i], bits_p[i], bits_n[i]], t)
    }))
}
