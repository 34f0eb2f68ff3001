use serde::{Deserialize, Serialize};

use crate::numeric::AdamConfig;

use super::ModelError;

/// Loss weights: adversarial, KL, reconstruction, cycle KL, cycle reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambdas {
    pub gan: f32,
    pub kl: f32,
    pub rec: f32,
    pub cc_kl: f32,
    pub cc_rec: f32,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas::from_array([50.0, 0.1, 100.0, 0.1, 100.0])
    }
}

impl Lambdas {
    pub fn from_array(l: [f32; 5]) -> Self {
        Lambdas {
            gan: l[0],
            kl: l[1],
            rec: l[2],
            cc_kl: l[3],
            cc_rec: l[4],
        }
    }

    pub fn to_array(self) -> [f32; 5] {
        [self.gan, self.kl, self.rec, self.cc_kl, self.cc_rec]
    }

    pub fn zero() -> Self {
        Lambdas::from_array([0.0; 5])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.to_array().iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(ModelError::Config(format!(
                "loss weights must be finite and non-negative: {:?}",
                self.to_array()
            )));
        }
        Ok(())
    }
}

pub const SUPPORTED_SIZES: [u32; 4] = [16, 32, 64, 128];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Square input side; 16 is a reduced tier for gradient checks.
    pub image_size: u32,
    pub latent_channels: usize,
    /// Width of the first encoder stage; later stages double it.
    pub base_channels: usize,
    /// Width of the first discriminator stage.
    pub disc_channels: usize,
    /// Instance-normalize the downsampling convolutions.
    pub down_norm: bool,
    pub init_std: f32,
    pub seed: u64,
    pub lambdas: Lambdas,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 32,
            latent_channels: 32,
            base_channels: 16,
            disc_channels: 8,
            down_norm: true,
            init_std: 0.02,
            seed: 0,
            lambdas: Lambdas::default(),
        }
    }
}

impl ModelConfig {
    /// Small network for gradient checks: 16×16 inputs, 8 latent channels.
    pub fn reduced(seed: u64) -> Self {
        ModelConfig {
            image_size: 16,
            latent_channels: 8,
            base_channels: 4,
            disc_channels: 4,
            seed,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !SUPPORTED_SIZES.contains(&self.image_size) {
            return Err(ModelError::UnsupportedSize(self.image_size));
        }
        if self.latent_channels == 0 || self.base_channels == 0 || self.disc_channels == 0 {
            return Err(ModelError::Config("channel counts must be ≥ 1".into()));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(ModelError::Config("init_std must be positive".into()));
        }
        self.lambdas.validate()
    }

    /// Side of the latent grid.
    pub fn latent_size(&self) -> usize {
        self.image_size as usize / 8
    }
}

/// Optimizer and sampling settings that affect the training trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub seed: u64,
    pub batch_size: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainSettings {
            seed: 0,
            batch_size: 1,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

impl TrainSettings {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be ≥ 1".into()));
        }
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(ModelError::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }
}
