//! Autoencoder anomaly detector.
//!
//! An encoder `f` and decoder `g` are fit to normal recordings by minimizing
//! the mean per-sample L1 reconstruction error. A recording's anomaly score is
//! `||x - g(f(x))||_1` and it is flagged abnormal when the score is strictly
//! above `tau = mean + k * std` of the training scores (population std).

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::derive_seed;
use crate::error::{Error, Result};
use crate::ingest::ClassLabel;
use crate::nn::{self, adam_step, chain_specs, init_network, Activation, AdamConfig, AdamState, DenseNetwork, LayerSpec};
use crate::preprocess::FeatureVector;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub record_id: String,
    pub score: f64,
    /// Filled in once a threshold is applied.
    pub decision: Option<ClassLabel>,
}

/// `tau = mean + k * population_std`.
pub fn calibrate_threshold(training_scores: &[f64], k: f64) -> Result<f64> {
    if training_scores.len() < 2 {
        return Err(Error::Evaluation(format!(
            "threshold calibration needs at least 2 scores, got {}",
            training_scores.len()
        )));
    }
    if !k.is_finite() {
        return Err(Error::Config(format!("k_sigma must be finite, got {k}")));
    }
    let tau = stats::mean(training_scores) + k * stats::population_std(training_scores);
    if !tau.is_finite() {
        return Err(Error::Evaluation("non-finite threshold".into()));
    }
    Ok(tau)
}

/// Abnormal iff `score > tau`.
pub fn classify(score: f64, tau: f64) -> ClassLabel {
    if score > tau {
        ClassLabel::Abnormal
    } else {
        ClassLabel::Normal
    }
}

/// Stacks feature vectors into a batch, checking a common dimension.
pub fn feature_matrix(data: &[FeatureVector]) -> Result<Array2<f64>> {
    let dim = data
        .first()
        .map(|f| f.x.len())
        .ok_or_else(|| Error::EmptyInput("no feature vectors".into()))?;
    nn::stack_rows(data.iter().map(|f| f.x.as_slice()), dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeConfig {
    pub encoder_units: Vec<usize>,
    pub decoder_units: Vec<usize>,
    /// Appends an identity layer from the last decoder layer back to the input dimension.
    pub output_projection: bool,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub k_sigma: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            encoder_units: vec![128, 64, 16],
            decoder_units: vec![16, 64, 128],
            output_projection: true,
            adam: AdamConfig::new(0.001, 0.99),
            batch_size: 32,
            max_epochs: 200,
            patience: 25,
            k_sigma: 1.0,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_units.is_empty() || self.decoder_units.is_empty() {
            return Err(Error::Config("autoencoder needs encoder and decoder layers".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        self.adam.validate()
    }

    /// Encoder and decoder layer specs for input dimension `d`.
    pub fn layer_specs(&self, d: usize) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>)> {
        let mut enc_dims = vec![d];
        enc_dims.extend(&self.encoder_units);
        let latent = *enc_dims.last().expect("non-empty");
        let mut dec_dims = vec![latent];
        dec_dims.extend(&self.decoder_units);
        let mut decoder = chain_specs(&dec_dims, Activation::Relu);
        let last = *dec_dims.last().expect("non-empty");
        if self.output_projection {
            decoder.push(LayerSpec::new(last, d, Activation::Identity));
        } else if last != d {
            return Err(Error::Config(format!(
                "decoder ends at {last} units but features have dimension {d}; enable output_projection"
            )));
        }
        Ok((chain_specs(&enc_dims, Activation::Relu), decoder))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl LossHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, t) in self.train.iter().enumerate() {
            let v = self.validation.get(i).map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{i},{t},{v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    pub encoder: DenseNetwork,
    pub decoder: DenseNetwork,
    pub latent_dim: usize,
    pub tau: f64,
    pub k_sigma: f64,
    pub adam: AdamConfig,
    /// Training scores `tau` was computed from.
    pub calibration_scores: Vec<f64>,
}

impl AeModel {
    pub fn feature_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn reconstruct_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.encoder.infer_batch(x)?;
        self.decoder.infer_batch(z.view())
    }

    /// Scores for a batch of rows.
    pub fn score_matrix(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let recon = self.reconstruct_batch(x)?;
        Ok(nn::l1_rows(x, recon.view())?.to_vec())
    }

    pub fn score_batch(&self, data: &[FeatureVector]) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        self.score_matrix(feature_matrix(data)?.view())
    }

    /// Sets `tau` from the scores of `training` with multiplier `k`.
    pub fn calibrate(&mut self, training: &[FeatureVector], k: f64) -> Result<f64> {
        let scores = self.score_batch(training)?;
        self.tau = calibrate_threshold(&scores, k)?;
        self.k_sigma = k;
        self.calibration_scores = scores;
        Ok(self.tau)
    }
}

/// `s_x = ||x - g(f(x))||_1`, without a decision.
pub fn ae_score(model: &AeModel, x: &FeatureVector) -> Result<AnomalyScore> {
    if x.x.len() != model.feature_dim() {
        return Err(Error::shape(format!("feature dim {}", model.feature_dim()), x.x.len()));
    }
    let scores = model.score_batch(std::slice::from_ref(x))?;
    Ok(AnomalyScore {
        record_id: x.record_id.clone(),
        score: scores[0],
        decision: None,
    })
}

/// Mean per-sample L1 loss of one batch and the gradient-carrying step.
fn reconstruction_step(
    encoder: &DenseNetwork,
    decoder: &DenseNetwork,
    batch: ArrayView2<f64>,
) -> Result<(f64, nn::GradientSet, nn::GradientSet)> {
    let b = batch.nrows() as f64;
    let (z, enc_cache) = encoder.forward_batch(batch)?;
    let (recon, dec_cache) = decoder.forward_batch(z.view())?;
    let loss = nn::l1_rows(recon.view(), batch)?.sum() / b;
    let d_recon = nn::sign_diff(recon.view(), batch, 1.0 / b);
    let (dec_grads, d_z) = decoder.backward(&dec_cache, d_recon.view())?;
    let (enc_grads, _) = encoder.backward(&enc_cache, d_z.view())?;
    Ok((loss, enc_grads, dec_grads))
}

/// Mean per-sample L1 loss of a batch for given encoder/decoder parameters.
pub fn reconstruction_loss(encoder: &DenseNetwork, decoder: &DenseNetwork, batch: ArrayView2<f64>) -> Result<f64> {
    let z = encoder.infer_batch(batch)?;
    let recon = decoder.infer_batch(z.view())?;
    Ok(nn::l1_rows(recon.view(), batch)?.sum() / batch.nrows() as f64)
}

/// Fits the autoencoder on `normals`. `validation` (normals, may be empty)
/// drives early stopping; the parameters of the best epoch are kept.
/// The returned model is not yet calibrated (`tau` is NaN).
pub fn train_ae(
    normals: &[FeatureVector],
    validation: &[FeatureVector],
    config: &AeConfig,
    seed: u64,
) -> Result<(AeModel, LossHistory)> {
    config.validate()?;
    if normals.is_empty() {
        return Err(Error::TrainingData("autoencoder training set is empty".into()));
    }
    let data = feature_matrix(normals)?;
    let d = data.ncols();
    let val = if validation.is_empty() {
        None
    } else {
        let v = feature_matrix(validation)?;
        if v.ncols() != d {
            return Err(Error::shape(format!("validation feature dim {d}"), v.ncols()));
        }
        Some(v)
    };

    let (enc_specs, dec_specs) = config.layer_specs(d)?;
    let mut encoder = init_network(&enc_specs, derive_seed(seed, 11))?;
    let mut decoder = init_network(&dec_specs, derive_seed(seed, 12))?;
    let mut enc_opt = AdamState::new(&encoder, config.adam);
    let mut dec_opt = AdamState::new(&decoder, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 13));

    let mut history = LossHistory::default();
    let mut best = (f64::INFINITY, encoder.clone(), decoder.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..data.nrows()).collect();

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let (loss, enc_grads, dec_grads) = reconstruction_step(&encoder, &decoder, batch.view())?;
            if !loss.is_finite() || !enc_grads.is_finite() || !dec_grads.is_finite() {
                return Err(Error::TrainingAborted(format!(
                    "non-finite autoencoder loss at epoch {epoch} (loss {loss}, last finite epoch losses {:?})",
                    &history.train[history.train.len().saturating_sub(5)..]
                )));
            }
            adam_step(&mut encoder, &enc_grads, &mut enc_opt)?;
            adam_step(&mut decoder, &dec_grads, &mut dec_opt)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / data.nrows() as f64;
        history.train.push(train_loss);

        let monitor = match &val {
            Some(v) => {
                let l = reconstruction_loss(&encoder, &decoder, v.view())?;
                history.validation.push(l);
                l
            }
            None => train_loss,
        };
        if monitor < best.0 {
            best = (monitor, encoder.clone(), decoder.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (_, encoder, decoder) = best;
    let latent_dim = encoder.output_dim();
    Ok((
        AeModel {
            encoder,
            decoder,
            latent_dim,
            tau: f64::NAN,
            k_sigma: config.k_sigma,
            adam: config.adam,
            calibration_scores: Vec::new(),
        },
        history,
    ))
}
