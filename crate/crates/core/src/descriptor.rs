//! Packed binary descriptors and the `DESC v1` dump format.
//!
//! Bit `k` lives in byte `k / 8` at position `k % 8` (LSB first). A set bit
//! encodes a `+1` response, a clear bit `-1`. Trailing pad bits are zero.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor {
    bits: usize,
    bytes: Vec<u8>,
}

impl BinaryDescriptor {
    /// All-zero descriptor with `bits` bits.
    pub fn zeros(bits: usize) -> Self {
        BinaryDescriptor {
            bits,
            bytes: vec![0; bits.div_ceil(8)],
        }
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut bytes = Vec::new();
        let mut n = 0;
        for b in bits {
            if n % 8 == 0 {
                bytes.push(0);
            }
            if b {
                bytes[n / 8] |= 1 << (n % 8);
            }
            n += 1;
        }
        BinaryDescriptor { bits: n, bytes }
    }

    /// Wraps packed bytes; pad bits must be zero.
    pub fn from_bytes(bits: usize, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != bits.div_ceil(8) {
            return Err(Error::ShapeMismatch {
                expected: bits.div_ceil(8),
                actual: bytes.len(),
            });
        }
        if !bits.is_multiple_of(8) {
            let pad_mask = !((1u8 << (bits % 8)) - 1);
            if bytes[bytes.len() - 1] & pad_mask != 0 {
                return Err(Error::InvalidArgument(
                    "descriptor pad bits must be zero".into(),
                ));
            }
        }
        Ok(BinaryDescriptor { bits, bytes })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    #[inline]
    pub fn get(&self, k: usize) -> bool {
        assert!(k < self.bits, "bit {k} out of range for {} bits", self.bits);
        self.bytes[k / 8] >> (k % 8) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, k: usize, value: bool) {
        assert!(k < self.bits, "bit {k} out of range for {} bits", self.bits);
        if value {
            self.bytes[k / 8] |= 1 << (k % 8);
        } else {
            self.bytes[k / 8] &= !(1 << (k % 8));
        }
    }

    /// Responses as `+1` / `-1`.
    pub fn signs(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.bits).map(|k| if self.get(k) { 1 } else { -1 })
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.bytes.len() * 2);
        for b in &self.bytes {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    pub fn from_hex(bits: usize, hex: &str) -> Result<Self> {
        if !hex.len().is_multiple_of(2) || !hex.is_ascii() {
            return Err(Error::InvalidArgument(format!(
                "malformed hex descriptor `{hex}`"
            )));
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
            .collect::<std::result::Result<Vec<u8>, _>>()
            .map_err(|_| Error::InvalidArgument(format!("malformed hex descriptor `{hex}`")))?;
        Self::from_bytes(bits, bytes)
    }

    /// Number of differing bits.
    #[inline]
    pub fn hamming(&self, other: &Self) -> Result<u32> {
        if self.bits != other.bits {
            return Err(Error::BitLengthMismatch {
                left: self.bits,
                right: other.bits,
            });
        }
        Ok(hamming_bytes(&self.bytes, &other.bytes))
    }
}

/// Popcount of the XOR, eight bytes at a time.
#[inline]
pub fn hamming_bytes(a: &[u8], b: &[u8]) -> u32 {
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    let mut d = 0;
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x = u64::from_le_bytes(x.try_into().unwrap());
        let y = u64::from_le_bytes(y.try_into().unwrap());
        d += (x ^ y).count_ones();
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        d += (x ^ y).count_ones();
    }
    d
}

/// Hamming distance; see [`BinaryDescriptor::hamming`].
pub fn hamming(a: &BinaryDescriptor, b: &BinaryDescriptor) -> Result<u32> {
    a.hamming(b)
}

const DUMP_MAGIC: &str = "DESC v1";

/// Serializes descriptors as `DESC v1 bits=<K> count=<n>` followed by one
/// lowercase hex line per descriptor.
pub fn format_dump(bits: usize, descriptors: &[BinaryDescriptor]) -> Result<String> {
    let mut out = format!("{DUMP_MAGIC} bits={bits} count={}\n", descriptors.len());
    for d in descriptors {
        if d.bits() != bits {
            return Err(Error::BitLengthMismatch {
                left: bits,
                right: d.bits(),
            });
        }
        out.push_str(&d.to_hex());
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dump(
    path: impl AsRef<Path>,
    bits: usize,
    descriptors: &[BinaryDescriptor],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_dump(bits, descriptors)?).map_err(|e| Error::io(path, e))
}

/// Parses a dump; returns the bit count and descriptors.
pub fn parse_dump(path: &Path, text: &str) -> Result<(usize, Vec<BinaryDescriptor>)> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let rest = header
        .strip_prefix(DUMP_MAGIC)
        .ok_or_else(|| Error::Version {
            path: path.into(),
            expected: DUMP_MAGIC.into(),
            found: header.into(),
        })?;
    let mut bits = None;
    let mut count = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("bits", v)) => bits = v.parse::<usize>().ok(),
            Some(("count", v)) => count = v.parse::<usize>().ok(),
            _ => {
                return Err(Error::format(
                    path,
                    format!("unexpected header field `{field}`"),
                ))
            }
        }
    }
    let (bits, count) = match (bits, count) {
        (Some(b), Some(c)) if b > 0 => (b, c),
        _ => return Err(Error::format(path, "header must carry bits=<K> count=<n>")),
    };
    let descriptors = lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            BinaryDescriptor::from_hex(bits, l.trim())
                .map_err(|e| Error::format(path, format!("line {}: {e}", i + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    if descriptors.len() != count {
        return Err(Error::format(
            path,
            format!(
                "header declares {count} descriptors, found {}",
                descriptors.len()
            ),
        ));
    }
    Ok((bits, descriptors))
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<(usize, Vec<BinaryDescriptor>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dump(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bit_loop(a: &BinaryDescriptor, b: &BinaryDescriptor) -> u32 {
        (0..a.bits()).filter(|&k| a.get(k) != b.get(k)).count() as u32
    }

    #[test]
    fn packing_is_lsb_first_with_zero_pad() {
        let d = BinaryDescriptor::from_bits([
            true, false, false, false, false, false, false, false, false, true, true, true,
        ]);
        assert_eq!(d.bits(), 12);
        assert_eq!(d.as_bytes(), &[0x01, 0x0e]);
        assert!(BinaryDescriptor::from_bytes(12, vec![0, 0x10]).is_err());
    }

    #[test]
    fn self_and_complement_distances() {
        let a = BinaryDescriptor::from_bits((0..77).map(|k| k % 3 == 0));
        let b = BinaryDescriptor::from_bits((0..77).map(|k| k % 3 != 0));
        assert_eq!(a.hamming(&a).unwrap(), 0);
        assert_eq!(a.hamming(&b).unwrap(), 77);
        assert!(matches!(
            a.hamming(&BinaryDescriptor::zeros(76)),
            Err(Error::BitLengthMismatch { .. })
        ));
    }

    #[test]
    fn dump_rejects_bad_headers() {
        let p = Path::new("x.desc");
        assert!(matches!(
            parse_dump(p, "DESC v2 bits=8 count=0\n"),
            Err(Error::Version { .. })
        ));
        assert!(parse_dump(p, "DESC v1 bits=8 count=2\nff\n").is_err());
        assert!(parse_dump(p, "DESC v1 bits=8 count=1\nfff\n").is_err());
        let (k, d) = parse_dump(p, "DESC v1 bits=12 count=1\n0f0a\n").unwrap();
        assert_eq!((k, d[0].as_bytes()), (12, &[0x0f, 0x0a][..]));
    }

    fn descriptor(bits: usize) -> impl Strategy<Value = BinaryDescriptor> {
        proptest::collection::vec(any::<bool>(), bits).prop_map(BinaryDescriptor::from_bits)
    }

    proptest! {
        #[test]
        fn hamming_equals_bit_loop(a in descriptor(203), b in descriptor(203)) {
            prop_assert_eq!(a.hamming(&b).unwrap(), bit_loop(&a, &b));
        }

        #[test]
        fn hamming_is_a_metric(a in descriptor(96), b in descriptor(96), c in descriptor(96)) {
            let ab = a.hamming(&b).unwrap();
            prop_assert_eq!(ab, b.hamming(&a).unwrap());
            prop_assert!(ab <= a.hamming(&c).unwrap() + c.hamming(&b).unwrap());
            prop_assert_eq!(ab == 0, a == b);
        }

        #[test]
        fn dump_round_trips(ds in proptest::collection::vec(descriptor(21), 0..6)) {
            let text = format_dump(21, &ds).unwrap();
            let (k, back) = parse_dump(Path::new("t"), &text).unwrap();
            prop_assert_eq!(k, 21);
            prop_assert_eq!(back, ds);
        }
    }
}
