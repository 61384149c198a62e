//! Observation autoencoder used to learn communication functions.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Activation, Adam, Head, Init, LrSchedule, Mlp};
use crate::rng::{stream, Purpose};

pub const HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Encoder half: `obs -> 32 -> embed`, ReLU on the hidden layer.
pub fn new_encoder(obs_dim: usize, embed_dim: usize, rng: &mut ChaCha8Rng) -> Result<Mlp> {
    Mlp::init(
        &[obs_dim, HIDDEN, embed_dim],
        &[Activation::Relu, Activation::None],
        Head::Vector,
        Init::FanInUniform,
        rng,
    )
}

impl Autoencoder {
    pub fn new(obs_dim: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Purpose::Init, 0);
        let encoder = new_encoder(obs_dim, embed_dim, &mut rng)?;
        let decoder = Mlp::init(
            &[embed_dim, HIDDEN, obs_dim],
            &[Activation::Relu, Activation::None],
            Head::Vector,
            Init::FanInUniform,
            &mut rng,
        )?;
        Ok(Self { encoder, decoder })
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(&self.encoder.forward(x)?)
    }

    /// Mean squared reconstruction error over a row-major batch.
    pub fn mse(&self, xs: &[f64], batch: usize) -> Result<f64> {
        let z = self.encoder.forward_cached(xs, batch)?;
        let y = self.decoder.forward_cached(z.output(), batch)?;
        Ok(y.output().iter().zip(xs).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / xs.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderReport {
    pub initial_loss: f64,
    /// Dataset MSE after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Fits an autoencoder with an `embed_dim` bottleneck to `data`.
pub fn train_autoencoder(
    data: &[Vec<f64>],
    obs_dim: usize,
    embed_dim: usize,
    cfg: &AutoencoderConfig,
    seed: u64,
) -> Result<(Autoencoder, AutoencoderReport)> {
    if data.is_empty() {
        return Err(Error::NoData("autoencoder dataset is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("autoencoder batch_size must be positive".into()));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != obs_dim) {
        return Err(Error::shape("autoencoder sample", obs_dim, bad.len()));
    }
    let flat: Vec<f64> = data.concat();
    let mut ae = Autoencoder::new(obs_dim, embed_dim, seed)?;
    let enc_len = ae.encoder.param_count();
    let mut opt = Adam::new(
        enc_len + ae.decoder.param_count(),
        LrSchedule {
            initial: cfg.learning_rate,
            anneal: false,
        },
    );
    let mut rng = stream(seed, Purpose::Warmup, 0);
    let initial_loss = ae.mse(&flat, data.len())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<f64> = chunk.iter().flat_map(|&i| data[i].iter().copied()).collect();
            let b = chunk.len();
            let zc = ae.encoder.forward_cached(&xs, b)?;
            let yc = ae.decoder.forward_cached(zc.output(), b)?;
            let scale = 2.0 / xs.len() as f64;
            let gy: Vec<f64> = yc.output().iter().zip(&xs).map(|(y, x)| scale * (y - x)).collect();
            let gd = ae.decoder.backward(&yc, &gy)?;
            let mut ge = ae.encoder.backward(&zc, &gd.input)?.params;
            let mut gdp = gd.params;
            let Autoencoder { encoder, decoder } = &mut ae;
            opt.step(
                &mut [
                    (encoder.params_mut(), &mut ge[..]),
                    (decoder.params_mut(), &mut gdp[..]),
                ],
                cfg.learning_rate,
                None,
            )?;
        }
        let loss = ae.mse(&flat, data.len())?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("autoencoder loss {loss}")));
        }
        epoch_losses.push(loss);
    }
    Ok((
        ae,
        AutoencoderReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture() {
        let ae = Autoencoder::new(18, 12, 0).unwrap();
        assert_eq!(ae.encoder.dims(), &[18, 32, 12]);
        assert_eq!(ae.decoder.dims(), &[12, 32, 18]);
        assert_eq!(ae.encoder.activations()[0], Activation::Relu);
        assert_eq!(ae.decoder.activations(), &[Activation::Relu, Activation::None]);
    }

    #[test]
    fn constant_data_is_learned() {
        let data = vec![vec![0.5, -0.25, 1.0]; 64];
        let cfg = AutoencoderConfig {
            epochs: 200,
            batch_size: 16,
            ..Default::default()
        };
        let (_, report) = train_autoencoder(&data, 3, 2, &cfg, 1).unwrap();
        assert!(*report.epoch_losses.last().unwrap() < 1e-3, "{report:?}");
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(matches!(
            train_autoencoder(&[], 3, 2, &AutoencoderConfig::default(), 0),
            Err(Error::NoData(_))
        ));
    }
}
