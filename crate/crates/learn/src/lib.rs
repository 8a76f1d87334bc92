//! Learned long-term-goal policy: a small convolutional actor-critic with
//! hand-written backpropagation, replay, augmentation and the training loop.

pub mod agent;
pub mod augment;
pub mod checkpoint;
pub mod features;
pub mod init;
pub mod layers;
pub mod model;
pub mod optim;
pub mod params;
pub mod real;
pub mod replay;
pub mod td3;
pub mod train;
