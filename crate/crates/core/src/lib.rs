//! Distributed transfer learning for small convolutional networks.
//!
//! A pretrained primary network is decomposed into single-filter networks;
//! each network's classification evidence is summarized as a basic
//! probability assignment built from its confusion matrix, and fine-tuning
//! on the target domain proceeds by gradient updates scaled by each
//! network's assignment-derived cost, followed by reassembly into the
//! transferred target network.
//!
//! Modules:
//! - [`tensor`]: dense f64 arrays.
//! - [`nn`]: the forward/backward engine with cost-scaled SGD.
//! - [`evidence`]: confusion matrices → assignment vectors → filter costs.
//! - [`datasets`]: IDX ingestion, synthetic domain pairs, adapters, splits.
//! - [`transfer`]: decomposition, distributed fine-tuning, reassembly, and
//!   the standard fine-tuning baseline.

pub mod datasets;
pub mod error;
pub mod evidence;
pub mod nn;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
