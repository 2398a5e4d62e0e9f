//! Training of BAD descriptors by greedy weak-descriptor selection under a
//! triplet ranking loss.

pub mod loss;
pub mod threshold;
pub mod train;

pub use loss::{per_step_loss, triplet_loss};
pub use threshold::{
    find_threshold, find_threshold_bucketed, ThresholdEvent, ThresholdSearchResult,
};
pub use train::{
    bit_means, random_model, select_next_feature, train_bad, BadTrainConfig, Selection,
    SelectionProblem, SelectionRecord, SelectionTrace,
};
