//! Learned binary patch descriptors.
//!
//! BAD compares mean intensities of box pairs with learned thresholds; its
//! box pairs are picked greedily under a triplet ranking loss. HashSIFT
//! binarizes a learned affine projection of SIFT. Both produce
//! [`BinaryDescriptor`]s compared by Hamming distance; [`matcheval`] holds
//! the matchers and the verification and matching metrics.
//!
//! Image and descriptor math is generic over the float type ([`Real`]);
//! threshold search is generic over an exact ordered field ([`LossScalar`]).

pub mod bad;
pub mod bad_train;
pub mod dataset;
pub mod descriptor;
pub mod error;
pub mod hashsift;
pub mod imaging;
pub mod matcheval;
pub mod scalar;
pub mod sift;
pub mod synthetic;

pub use bad::{BadModel, BoxPair, BoxPairFeature};
pub use bad_train::{train_bad, BadTrainConfig, SelectionTrace};
pub use dataset::{LabeledPatchSet, Triplet, TripletBatch, VerificationPair, VerificationPairSet};
pub use descriptor::{hamming, BinaryDescriptor};
pub use error::{Error, Result};
pub use hashsift::{train_hashsift, HashMatrix, HashSiftModel, HashTrainConfig};
pub use imaging::{AugmentParams, GrayImage, IntegralImage, Keypoint, Patch, PATCH_SIZE};
pub use matcheval::{brute_force_match, fpr95, matching_map, mutual_nn, MatchResult, PRCurve};
pub use scalar::{LossScalar, Real};
pub use sift::SiftDescriptor;

pub type Patch32 = Patch<f32>;
pub type Patch64 = Patch<f64>;
pub type LabeledPatchSet32 = LabeledPatchSet<f32>;
pub type LabeledPatchSet64 = LabeledPatchSet<f64>;
pub type SiftDescriptor32 = SiftDescriptor<f32>;
pub type SiftDescriptor64 = SiftDescriptor<f64>;
pub type HashSiftModel32 = HashSiftModel<f32>;
pub type HashSiftModel64 = HashSiftModel<f64>;
pub type HashMatrix64 = HashMatrix<f64>;
