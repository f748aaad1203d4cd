//! Online-trained feedforward network driving a simulated one-armed crawling
//! robot.
//!
//! The network (1 input, variable sigmoid hidden layer, 2 outputs) learns a
//! pair of servo angles generation by generation: feedforward, denormalize
//! the outputs to degrees, compare against the required angles, and
//! backpropagate until both errors fall within a user tolerance. Around that
//! loop sit a planar kinematic crawler simulation used to derive the required
//! angles and replay learned gaits, a paper-trail of per-generation records
//! with CSV emission, hyperparameter sweep harnesses, and a textual model
//! store.

pub mod error;
pub mod experiments;
pub mod net;
pub mod sim;
pub mod store;
pub mod train;

pub use error::{Error, Result};
pub use net::{DenormMode, ForwardTrace, Network, NetworkConfig};
pub use train::{
    AngleTargets, GenerationRecord, InputPolicy, LrSchedule, TrainingConfig, TrainingRun,
};
