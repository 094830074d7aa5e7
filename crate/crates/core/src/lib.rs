//! Compact self-attention that reuses the query projection as the value,
//! alongside the other query/key/value weight-sharing variants and a
//! LeViT-style block generalization.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`autodiff`]: a small dense tensor type and a tape for
//!   reverse-mode gradients, both driven through [`autodiff::TensorOps`]
//! * [`attention`] and [`levit`]: the attention variants
//! * [`gradcheck`]: finite-difference gradient oracle
//! * [`analysis`]: weight redundancy plus parameter and MAC accounting
//! * [`train`], [`bench`]: toy training and wall-clock timing
//! * [`io`]: the `ARMW` weight container
//! * [`cli`]: the `armour` command line
//!
//! See `examples/` for one runnable program per capability.

pub mod analysis;
pub mod attention;
pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod levit;
pub mod report;
pub mod tensor;
pub mod train;

pub use attention::{AttentionConfig, AttentionVariant, AttentionWeights};
pub use error::{ArmourError, Result};
pub use levit::{LevitBlockConfig, LevitBlockWeights, LevitVariant};
pub use tensor::Tensor;
