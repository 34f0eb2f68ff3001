//! Streetscape style-transfer pipeline.
//!
//! - [`numeric`]: differentiable tensors, convolution layers, Adam.
//! - [`geo`]: outcome records, decile domain selection, nearest-image matching.
//! - [`dataset`]: PNG ingestion, resizing, average images, procedural scenes.
//! - [`model`]: the shared-latent translation model, its loss and training loop.
//! - [`analysis`]: difference images, MSE/PSNR/SSIM, channel statistics, reports.

pub mod analysis;
pub mod dataset;
pub mod geo;
pub mod model;
pub mod numeric;
