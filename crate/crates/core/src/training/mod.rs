//! Corpus construction, leave-one-subject-out splits and the training loop.

mod corpus;
mod loso;
mod protocol;
mod trainer;

pub use corpus::build_train_corpus;
pub use loso::{make_loso_splits, LosoSplit};
pub use protocol::TrainProtocol;
pub use trainer::{
    batch_tensor, evaluate_loss, job_partition, job_seed, predict_segments, stratified_split,
    train, train_from, EpochRecord, JobPartition, Prediction, TrainTrace,
};
