//! Unsupervised text recognition at desk scale: a fully-convolutional
//! recogniser trained against a least-squares adversarial spell-checker on
//! unpaired images and strings, plus the synthetic data pipeline, metrics,
//! and experiment plumbing around it.

pub mod advtrain;
pub mod checkpoint;
pub mod evalkit;
pub mod nets;
pub mod pnm;
pub mod shard;
pub mod synthrender;
pub mod textcorpus;
