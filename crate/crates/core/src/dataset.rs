//! Labeled patch corpora, verification pairs and triplet mining.
//!
//! Two on-disk layouts are supported:
//!
//! * Brown: `<root>/patches*.bmp` mosaics of 1024x1024 pixels, each a 16x16
//!   row-major grid of 64x64 patches (mosaics sorted by file name, the last
//!   one may be partially filled), and `<root>/info.txt` whose i-th line
//!   starts with the 3D point id of patch i. Patches are reduced to 32x32 by
//!   2x2 box averaging.
//! * Directory: `<root>/<label>/<name>.(png|pgm)`, one 32x32 grayscale
//!   image per file, loaded in lexicographic order of label directory then
//!   file name. Labels are the directory names parsed as integers; if any
//!   directory name is not an integer, labels are directory ordinals.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Patch, PATCH_SIZE};
use crate::scalar::Real;

/// Brown mosaic geometry.
pub const BROWN_PATCH: usize = 64;
pub const BROWN_GRID: usize = 16;
pub const BROWN_MOSAIC: usize = BROWN_PATCH * BROWN_GRID;
pub const BROWN_PER_MOSAIC: usize = BROWN_GRID * BROWN_GRID;

/// Patches with one 3D point label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatchSet<T> {
    patches: Vec<Patch<T>>,
    labels: Vec<u64>,
}

impl<T: Real> LabeledPatchSet<T> {
    pub fn new(patches: Vec<Patch<T>>, labels: Vec<u64>) -> Result<Self> {
        if patches.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: patches.len(),
                actual: labels.len(),
            });
        }
        Ok(LabeledPatchSet { patches, labels })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patches(&self) -> &[Patch<T>] {
        &self.patches
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    #[inline]
    pub fn patch(&self, i: usize) -> &Patch<T> {
        &self.patches[i]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u64 {
        self.labels[i]
    }

    /// Patch indices per label, in ascending label order.
    pub fn groups(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        groups
    }

    pub fn distinct_labels(&self) -> usize {
        self.groups().len()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        LabeledPatchSet {
            patches: indices.iter().map(|&i| self.patches[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Splits by label: the first `train_fraction` of labels (ascending)
    /// goes to the first set, the rest to the second.
    pub fn split_by_label(&self, train_fraction: f64) -> (Self, Self) {
        let groups = self.groups();
        let cut = ((groups.len() as f64) * train_fraction).round() as usize;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (k, (_, idx)) in groups.into_iter().enumerate() {
            if k < cut {
                train.extend(idx);
            } else {
                test.extend(idx);
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        (self.subset(&train), self.subset(&test))
    }

    pub fn cast<U: Real>(&self) -> LabeledPatchSet<U> {
        LabeledPatchSet {
            patches: self.patches.iter().map(Patch::cast).collect(),
            labels: self.labels.clone(),
        }
    }
}

fn list_dir(root: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(root, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(w as usize, h as usize, img.into_raw())
}

fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    let buf = image::GrayImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .expect("buffer matches dimensions");
    buf.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

fn brown_mosaics(root: &Path) -> Result<Vec<PathBuf>> {
    Ok(list_dir(root)?
        .into_iter()
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("patches") && name.to_ascii_lowercase().ends_with(".bmp")
        })
        .collect())
}

/// Loads a Brown-layout corpus, downscaling patches to 32x32.
pub fn load_brown<T: Real>(root: impl AsRef<Path>) -> Result<LabeledPatchSet<T>> {
    let root = root.as_ref();
    let info_path = root.join("info.txt");
    let info = fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
    let labels = info
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .next()
                .and_then(|tok| tok.parse::<u64>().ok())
                .ok_or_else(|| {
                    Error::format(
                        &info_path,
                        format!("line {}: expected a point id, got `{l}`", i + 1),
                    )
                })
        })
        .collect::<Result<Vec<u64>>>()?;

    let mosaics = brown_mosaics(root)?;
    let needed = labels.len().div_ceil(BROWN_PER_MOSAIC);
    if mosaics.len() != needed {
        return Err(Error::format(
            root,
            format!(
                "{} info lines need {needed} mosaic(s), found {}",
                labels.len(),
                mosaics.len()
            ),
        ));
    }

    let mut patches = Vec::with_capacity(labels.len());
    for (m, path) in mosaics.iter().enumerate() {
        let mosaic = read_gray(path)?;
        if mosaic.width() != BROWN_MOSAIC || mosaic.height() != BROWN_MOSAIC {
            return Err(Error::format(
                path,
                format!(
                    "mosaic must be {BROWN_MOSAIC}x{BROWN_MOSAIC}, got {}x{}",
                    mosaic.width(),
                    mosaic.height()
                ),
            ));
        }
        let count = (labels.len() - m * BROWN_PER_MOSAIC).min(BROWN_PER_MOSAIC);
        for k in 0..count {
            let ox = (k % BROWN_GRID) * BROWN_PATCH;
            let oy = (k / BROWN_GRID) * BROWN_PATCH;
            patches.push(Patch::from_fn(|x, y| {
                let (sx, sy) = (ox + 2 * x, oy + 2 * y);
                let s = u32::from(mosaic.get(sx, sy))
                    + u32::from(mosaic.get(sx + 1, sy))
                    + u32::from(mosaic.get(sx, sy + 1))
                    + u32::from(mosaic.get(sx + 1, sy + 1));
                T::of(f64::from(s) / 4.0)
            }));
        }
    }
    LabeledPatchSet::new(patches, labels)
}

/// Writes 64x64 patches in the Brown layout (`patchesNNNN.bmp` + `info.txt`).
pub fn write_brown(root: impl AsRef<Path>, patches: &[GrayImage], labels: &[u64]) -> Result<()> {
    let root = root.as_ref();
    if patches.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: patches.len(),
            actual: labels.len(),
        });
    }
    if let Some(p) = patches
        .iter()
        .find(|p| p.width() != BROWN_PATCH || p.height() != BROWN_PATCH)
    {
        return Err(Error::InvalidArgument(format!(
            "Brown patches must be {BROWN_PATCH}x{BROWN_PATCH}, got {}x{}",
            p.width(),
            p.height()
        )));
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for (m, chunk) in patches.chunks(BROWN_PER_MOSAIC).enumerate() {
        let mut pixels = vec![0u8; BROWN_MOSAIC * BROWN_MOSAIC];
        for (k, p) in chunk.iter().enumerate() {
            let ox = (k % BROWN_GRID) * BROWN_PATCH;
            let oy = (k / BROWN_GRID) * BROWN_PATCH;
            for y in 0..BROWN_PATCH {
                let row = &p.pixels()[y * BROWN_PATCH..(y + 1) * BROWN_PATCH];
                let start = (oy + y) * BROWN_MOSAIC + ox;
                pixels[start..start + BROWN_PATCH].copy_from_slice(row);
            }
        }
        let mosaic = GrayImage::new(BROWN_MOSAIC, BROWN_MOSAIC, pixels)?;
        write_gray(&root.join(format!("patches{m:04}.bmp")), &mosaic)?;
    }
    let info: String = labels.iter().map(|l| format!("{l} 0\n")).collect();
    let info_path = root.join("info.txt");
    fs::write(&info_path, info).map_err(|e| Error::io(&info_path, e))
}

fn is_patch_file(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png") | Some("pgm")
    )
}

/// Loads a `<root>/<label>/<name>.(png|pgm)` corpus.
pub fn load_patch_dir<T: Real>(root: impl AsRef<Path>) -> Result<LabeledPatchSet<T>> {
    let root = root.as_ref();
    let dirs: Vec<PathBuf> = list_dir(root)?.into_iter().filter(|p| p.is_dir()).collect();
    let numeric: Option<Vec<u64>> = dirs
        .iter()
        .map(|d| {
            d.file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.parse().ok())
        })
        .collect();
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    for (ordinal, dir) in dirs.iter().enumerate() {
        let label = numeric.as_ref().map_or(ordinal as u64, |n| n[ordinal]);
        for file in list_dir(dir)?
            .into_iter()
            .filter(|p| p.is_file() && is_patch_file(p))
        {
            let img = read_gray(&file)?;
            if img.width() != PATCH_SIZE || img.height() != PATCH_SIZE {
                return Err(Error::format(
                    &file,
                    format!(
                        "expected a {PATCH_SIZE}x{PATCH_SIZE} patch, got {}x{}",
                        img.width(),
                        img.height()
                    ),
                ));
            }
            patches.push(Patch::from_gray(&img)?);
            labels.push(label);
        }
    }
    if patches.is_empty() {
        return Err(Error::format(root, "no patches found"));
    }
    LabeledPatchSet::new(patches, labels)
}

/// Writes a set as `<root>/<label>/<index>.png`, rounding intensities to 8 bits.
pub fn save_patch_dir<T: Real>(root: impl AsRef<Path>, set: &LabeledPatchSet<T>) -> Result<()> {
    let root = root.as_ref();
    for (i, (p, l)) in set.patches.iter().zip(&set.labels).enumerate() {
        let dir = root.join(format!("{l:010}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_gray(&dir.join(format!("{i:08}.png")), &p.to_gray())?;
    }
    Ok(())
}

/// Indices of an (anchor, positive, negative) triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    pub fn is_valid<T: Real>(&self, set: &LabeledPatchSet<T>) -> bool {
        let n = set.len();
        self.anchor < n
            && self.positive < n
            && self.negative < n
            && self.anchor != self.positive
            && set.label(self.anchor) == set.label(self.positive)
            && set.label(self.anchor) != set.label(self.negative)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Anchor-positive pairs plus the candidate pool negatives are mined from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletDraw {
    pub pairs: Vec<(usize, usize)>,
    pub pool: Vec<usize>,
}

impl TripletDraw {
    /// Every index that mining may touch, deduplicated, in first-seen order.
    pub fn touched(&self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        self.pairs
            .iter()
            .flat_map(|&(a, p)| [a, p])
            .chain(self.pool.iter().copied())
            .filter(|i| seen.insert(*i))
            .collect()
    }
}

/// Pool size per requested triplet.
pub const POOL_FACTOR: usize = 4;

/// Draws `n` anchor-positive pairs (label uniform over labels with at least
/// two patches) and a pool of `4n` distinct candidate indices.
pub fn draw_pairs<T: Real, R: Rng + ?Sized>(
    set: &LabeledPatchSet<T>,
    n: usize,
    rng: &mut R,
) -> Result<TripletDraw> {
    let groups = set.groups();
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "triplet mining needs at least 2 labels, found {}",
            groups.len()
        )));
    }
    let multi: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() >= 2).collect();
    if multi.is_empty() {
        return Err(Error::InsufficientData(
            "no label has at least 2 patches".into(),
        ));
    }
    let pairs = (0..n)
        .map(|_| {
            let g = multi[rng.random_range(0..multi.len())];
            let picked = index::sample(rng, g.len(), 2);
            (g[picked.index(0)], g[picked.index(1)])
        })
        .collect();
    let pool = index::sample(rng, set.len(), (POOL_FACTOR * n).min(set.len())).into_vec();
    Ok(TripletDraw { pairs, pool })
}

/// Distance between two patch indices under the current model.
pub type DistanceFn<'a> = dyn Fn(usize, usize) -> f64 + Sync + 'a;

/// Completes a draw into triplets.
///
/// With `dist`, each negative is the pool member of a different label with
/// minimal distance to the anchor (first in pool order on ties), and with
/// `swap` anchor and positive are exchanged when the positive is closer to
/// that negative. Without `dist`, negatives are uniform over eligible pool
/// members and no swap happens. If the pool holds no eligible member, the
/// negative is drawn uniformly from the whole set and no swap happens.
pub fn mine_triplets<T: Real, R: Rng + ?Sized>(
    set: &LabeledPatchSet<T>,
    draw: &TripletDraw,
    dist: Option<&DistanceFn<'_>>,
    swap: bool,
    rng: &mut R,
) -> Result<TripletBatch> {
    if set.distinct_labels() < 2 {
        return Err(Error::InsufficientData(
            "triplet mining needs at least 2 labels".into(),
        ));
    }
    let hardest: Vec<Option<usize>> = match dist {
        Some(d) => draw
            .pairs
            .par_iter()
            .map(|&(a, _)| {
                let la = set.label(a);
                let mut best: Option<(usize, f64)> = None;
                for &c in &draw.pool {
                    if set.label(c) == la {
                        continue;
                    }
                    let dc = d(a, c);
                    if best.is_none_or(|(_, bd)| dc < bd) {
                        best = Some((c, dc));
                    }
                }
                best.map(|(c, _)| c)
            })
            .collect(),
        None => draw
            .pairs
            .iter()
            .map(|&(a, _)| {
                let la = set.label(a);
                let eligible: Vec<usize> = draw
                    .pool
                    .iter()
                    .copied()
                    .filter(|&c| set.label(c) != la)
                    .collect();
                (!eligible.is_empty()).then(|| eligible[rng.random_range(0..eligible.len())])
            })
            .collect(),
    };

    let mut triplets = Vec::with_capacity(draw.pairs.len());
    for (&(a, p), neg) in draw.pairs.iter().zip(hardest) {
        let mined = dist.is_some() && neg.is_some();
        let n = match neg {
            Some(n) => n,
            None => loop {
                let c = rng.random_range(0..set.len());
                if set.label(c) != set.label(a) {
                    break c;
                }
            },
        };
        // a fallback negative lies outside the pool, so it is never swapped
        let (a, p) = match dist {
            Some(d) if mined && swap && d(p, n) < d(a, n) => (p, a),
            _ => (a, p),
        };
        triplets.push(Triplet {
            anchor: a,
            positive: p,
            negative: n,
        });
    }
    Ok(TripletBatch { triplets })
}

/// Draws `n` pairs and mines their negatives; see [`mine_triplets`].
pub fn sample_triplets<T: Real, R: Rng + ?Sized>(
    set: &LabeledPatchSet<T>,
    n: usize,
    dist: Option<&DistanceFn<'_>>,
    swap: bool,
    rng: &mut R,
) -> Result<TripletBatch> {
    let draw = draw_pairs(set, n, rng)?;
    mine_triplets(set, &draw, dist, swap, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerificationPair {
    pub a: usize,
    pub b: usize,
    pub is_match: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerificationPairSet {
    pub pairs: Vec<VerificationPair>,
}

/// `n_pos` same-label pairs followed by `n_neg` different-label pairs.
pub fn make_verification_pairs<T: Real, R: Rng + ?Sized>(
    set: &LabeledPatchSet<T>,
    n_pos: usize,
    n_neg: usize,
    rng: &mut R,
) -> Result<VerificationPairSet> {
    let groups = set.groups();
    let multi: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() >= 2).collect();
    if n_pos > 0 && multi.is_empty() {
        return Err(Error::InsufficientData(
            "positive pairs need a label with 2 patches".into(),
        ));
    }
    if n_neg > 0 && groups.len() < 2 {
        return Err(Error::InsufficientData(
            "negative pairs need 2 distinct labels".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        let g = multi[rng.random_range(0..multi.len())];
        let picked = index::sample(rng, g.len(), 2);
        pairs.push(VerificationPair {
            a: g[picked.index(0)],
            b: g[picked.index(1)],
            is_match: true,
        });
    }
    let labels: Vec<&Vec<usize>> = groups.values().collect();
    for _ in 0..n_neg {
        let picked = index::sample(rng, labels.len(), 2);
        let (ga, gb) = (labels[picked.index(0)], labels[picked.index(1)]);
        pairs.push(VerificationPair {
            a: ga[rng.random_range(0..ga.len())],
            b: gb[rng.random_range(0..gb.len())],
            is_match: false,
        });
    }
    Ok(VerificationPairSet { pairs })
}
