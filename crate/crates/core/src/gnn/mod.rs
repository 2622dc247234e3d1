//! Base classifier: a two-layer GCN and an external vote table.

mod checkpoint;
mod model;
mod train;
mod votes;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use model::{argmax, GnnModel};
pub use train::{loss_and_grads, train, view_accuracy, EpochLog, Grads, Split, TrainConfig, TrainLog};
pub use votes::{load_votes, write_votes, VoteTable};
