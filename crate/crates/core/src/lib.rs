//! Context-driven image outpainting: a residual encoder-decoder generator
//! trained against averaged global/local least-squares discriminators.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod generator;
pub mod nn;
pub mod objectives;
pub mod train;

pub use config::{TrainConfig, Variant};
pub use data::{
    composite_paste, load_image, local_crop, make_masked_input, DatasetManifest, Mask, Split,
};
pub use discriminator::{DiscPair, DiscTower, DiscWiring};
pub use error::{Error, Result};
pub use eval::{evaluate_model, render_report, LossReport};
pub use generator::{Generator, GeneratorArch, FRAME};
pub use objectives::{lambda_adv, LossWeights};
pub use train::{fit, train_step, Adam, EpochStats, Models, StepLosses, TrainState};
