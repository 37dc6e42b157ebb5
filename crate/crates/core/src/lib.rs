//! Conditional image-to-image GANs built from standard or depthwise
//! separable convolutions.
//!
//! The crate is self-contained: a small f64 tensor type with reverse-mode
//! differentiation ([`tape`]), the convolution blocks ([`layers`]), the four
//! generator/discriminator variants ([`models`]), the adversarial training
//! loop ([`train`]), parameter and MAC accounting ([`cost`]), Frechet
//! distance evaluation ([`fid`]) and a synthetic multi-domain dataset
//! ([`data`]).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod cost;
pub mod data;
pub mod error;
pub mod fid;
pub mod kernels;
pub mod layers;
pub mod models;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use models::{Discriminator, Generator, ModelConfig, Scale, Variant};
pub use rng::Rng;
pub use tape::{Tape, Var};
pub use tensor::{Shape, Tensor};
