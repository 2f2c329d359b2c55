//! Hiding messages in the initial noise of a diffusion sampler.
//!
//! A message is projected into standard-normal noise, the probability-flow
//! ODE carries that noise to an image, and the receiver integrates the same
//! ODE backwards to recover the noise and read the message off it. The
//! image itself is an ordinary sample from the model.
//!
//! ```no_run
//! use noisecoder::{GaussianMixtureModel, Message, ProjectionKind, SigmaSchedule, StegoCodec, StegoKey};
//!
//! let model = GaussianMixtureModel::load("fixtures/gmm_desk.nzt")?;
//! let codec = StegoCodec::new(model, SigmaSchedule::default());
//! let key = StegoKey::new(ProjectionKind::Mb, 7, None)?;
//! let shape = codec.shape();
//! let message = Message::new(vec![1; shape.plane()], shape.width, shape.height, 1, 1)?;
//! let image = codec.hide(&message, &key, 0)?;
//! let decoded = codec.extract(&image, &key, 1)?;
//! # Ok::<(), noisecoder::Error>(())
//! ```

pub mod bridge;
pub mod codec;
pub mod diagnostics;
pub mod error;
pub mod gmm;
pub mod key;
pub mod message;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod tensor;

pub use bridge::{BridgeConfig, BridgeError, BridgeModel, Endpoint};
pub use codec::QuantMode;
pub use diagnostics::{check_collapse, CollapseReport, ErrorHistogram, Verdict};
pub use error::{Error, Result};
pub use gmm::GaussianMixtureModel;
pub use key::{Codebook, ProjectionKind, StegoKey};
pub use message::Message;
pub use parallel::Execution;
pub use pipeline::{StegoCodec, Trial, TrialReport};
pub use rng::{Purpose, StegoRng};
pub use sampler::{heun_forward, heun_inverse, ScoreModel};
pub use schedule::SigmaSchedule;
pub use tensor::{LatentTensor, NztTensor, Shape};
