//! Fixed-topology neural-network core: tanh MLPs with hand-written reverse
//! mode, a diagonal Gaussian action head, Adam, and the checkpoint archive.
//!
//! Everything numeric is generic over [`Real`] so the same code runs in `f32`
//! for training and in `f64` for gradient checks.

mod actor_critic;
mod adam;
mod checkpoint;
mod gaussian;
mod mlp;

use std::fmt::Debug;

use thiserror::Error;

pub use actor_critic::ActorCritic;
pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointError, Tensor, CHECKPOINT_VERSION};
pub use gaussian::{gaussian_kl, gaussian_kl_grad, GaussianHead, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{Mlp, MlpCache};

/// Scalar type for network math.
pub trait Real:
    num_traits::Float + num_traits::NumAssign + num_traits::FromPrimitive + Default + Debug + Send + Sync + 'static + std::iter::Sum
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Default hidden width.
pub const HIDDEN: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),
    #[error("non-finite loss")]
    NonFiniteLoss,
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Dim { expected, got })
    }
}
