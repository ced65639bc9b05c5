//! Grayscale mathematical morphology with smooth, trainable morphological layers.
//!
//! The crate has two halves:
//!
//! - An exact morphology oracle ([`morphology`]): erosion, dilation, opening and
//!   closing of real-valued images with flat or grayscale structuring elements.
//! - Three differentiable morphological layers ([`layers`]): `PConv` (ratio of
//!   power-weighted convolutions), `LMorph` (counter-harmonic mean of `f + w`)
//!   and `SMorph` (α-softmax of `f + w`), each with analytic gradients for its
//!   kernel, its shape parameter and its input, plus a trailing scale/bias layer.
//!
//! On top of those sit a from-scratch trainer ([`train`]: Adam, reduce-on-plateau
//! scheduling, convergence detection), dataset synthesis ([`datasets`]: target
//! structuring elements, MNIST IDX ingestion, oracle-generated training pairs)
//! and a scenario harness ([`harness`]) used by the `morphlearn` CLI.
//!
//! All numeric code is generic over the [`Scalar`] type; `f64` is the default
//! used by the trainer and harness (see the aliases at the crate root).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub mod datasets;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod idx;
pub mod image;
pub mod io;
pub mod kernel;
pub mod layers;
pub mod morphology;
pub mod network;
pub mod smooth;
pub mod train;

pub use error::{Error, Result};
pub use image::{mse, pad, rescale_unit_band, Image, PadMode};
pub use kernel::{rmse, Kernel};
pub use layers::{Gradients, LayerKind, LayerState};
pub use network::Network;
pub use smooth::{alpha_softmax, chm};
pub use train::{adam_step, train, AdamState, PlateauAction, PlateauSchedule, TrainConfig};

/// Scalar type for pixels, kernel weights and trainable parameters.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn scalar<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}

pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type Kernel32 = Kernel<f32>;
pub type Kernel64 = Kernel<f64>;
pub type Network64 = Network<f64>;
