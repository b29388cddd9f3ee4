use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Mlp,
    #[default]
    Gin,
}

impl std::str::FromStr for EncoderKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Self::Mlp),
            "gin" => Ok(Self::Gin),
            other => Err(invalid!(
                "unknown encoder kind {other:?} (expected mlp or gin)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TauSchedule {
    Fixed,
    Linear { end: f64 },
}

impl Default for TauSchedule {
    fn default() -> Self {
        Self::Linear { end: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NriConfig {
    pub encoder_kind: EncoderKind,
    pub hidden_dim: usize,
    pub edge_types: usize,
    pub encoder_dropout: f64,
    pub decoder_dropout: f64,
    pub gumbel_temperature: f64,
    pub tau_schedule: TauSchedule,
    pub smoothness_coeff: f64,
    pub kl_prior: Vec<f64>,
    pub recon_variance: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Appends the time gap of each transition to the decoder input.
    pub decoder_dt_input: bool,
}

impl Default for NriConfig {
    fn default() -> Self {
        Self {
            encoder_kind: EncoderKind::Gin,
            hidden_dim: 256,
            edge_types: 2,
            encoder_dropout: 0.3,
            decoder_dropout: 0.5,
            gumbel_temperature: 0.5,
            tau_schedule: TauSchedule::default(),
            smoothness_coeff: -500.0,
            kl_prior: vec![0.5, 0.5],
            recon_variance: 5e-5,
            epochs: 500,
            lr: 1e-3,
            batch_size: 128,
            seed: 0,
            decoder_dt_input: false,
        }
    }
}

impl NriConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid!(
                "hidden_dim, epochs and batch_size must be positive"
            ));
        }
        if self.edge_types != 2 {
            return Err(invalid!("edge_types must be 2, got {}", self.edge_types));
        }
        for (name, p) in [
            ("encoder_dropout", self.encoder_dropout),
            ("decoder_dropout", self.decoder_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(invalid!("{name} = {p} outside [0, 1)"));
            }
        }
        if !(self.gumbel_temperature > 0.0) {
            return Err(invalid!("gumbel_temperature must be > 0"));
        }
        if let TauSchedule::Linear { end } = self.tau_schedule {
            if !(end > 0.0) {
                return Err(invalid!("final temperature must be > 0"));
            }
        }
        if !(self.recon_variance > 0.0) || !(self.lr > 0.0) || !self.smoothness_coeff.is_finite() {
            return Err(invalid!(
                "recon_variance and lr must be > 0, smoothness_coeff finite"
            ));
        }
        if self.kl_prior.len() != self.edge_types
            || self.kl_prior.iter().any(|&p| !(p > 0.0))
            || (self.kl_prior.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(invalid!(
                "kl_prior must be {} positive probabilities summing to 1",
                self.edge_types
            ));
        }
        Ok(())
    }

    /// Temperature used during `epoch` (0-based).
    pub fn temperature(&self, epoch: usize) -> f64 {
        match self.tau_schedule {
            TauSchedule::Fixed => self.gumbel_temperature,
            TauSchedule::Linear { end } => {
                if self.epochs <= 1 {
                    return self.gumbel_temperature;
                }
                let f = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
                self.gumbel_temperature + (end - self.gumbel_temperature) * f
            }
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}
