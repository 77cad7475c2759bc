//! Encoder-decoder-encoder anomaly detector with a cross-entropy discriminator.
//!
//! The generator is `x -> z = f1(x) -> x_hat = g(z) -> z_hat = f2(x_hat)` and
//! minimizes
//!
//! ```text
//! L_G = 1/B sum [ lc ||x - x_hat||_1 + le ||z - z_hat||_1 - la ln D(x_hat) ]
//! ```
//!
//! while the discriminator `D` minimizes
//! `L_D = -1/B sum [ ln D(x) + ln(1 - D(g(z))) ]`. Each outer iteration runs
//! `k_d` discriminator updates followed by `k_g` generator updates, every
//! update on freshly drawn minibatches. The adversarial term uses one
//! minibatch and the reconstruction terms another.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ae::{calibrate_threshold, feature_matrix, AnomalyScore};
use crate::datasets::derive_seed;
use crate::error::{Error, Result};
use crate::ingest::ClassLabel;
use crate::nn::{
    self, adam_step, chain_specs, discriminator_bce, generator_adversarial, init_network, Activation, AdamConfig,
    AdamState, DenseNetwork, GradientSet, LayerSpec,
};
use crate::preprocess::FeatureVector;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// `||x - g(f1(x))||_1`
    #[default]
    Reconstruction,
    /// `||f1(x) - f2(g(f1(x)))||_1`
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub contextual: f64,
    pub latent: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            contextual: 50.0,
            latent: 1.0,
            adversarial: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanomalyConfig {
    pub encoder_units: Vec<usize>,
    pub decoder_units: Vec<usize>,
    pub discriminator_units: Vec<usize>,
    pub leaky_alpha: f64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub k_d: usize,
    pub k_g: usize,
    pub batch_size: usize,
    pub iterations_per_epoch: usize,
    pub max_epochs: usize,
    /// Evaluations without validation improvement before stopping.
    pub patience: usize,
    pub k_sigma: f64,
    pub score_mode: ScoreMode,
}

impl Default for GanomalyConfig {
    fn default() -> Self {
        GanomalyConfig {
            encoder_units: vec![128, 64, 16],
            decoder_units: vec![16, 64, 128],
            discriminator_units: vec![128, 16, 1],
            leaky_alpha: 0.2,
            adam: AdamConfig::new(0.0002, 0.5),
            weights: LossWeights::default(),
            k_d: 1,
            k_g: 2,
            batch_size: 32,
            iterations_per_epoch: 500,
            max_epochs: 12,
            patience: 25,
            k_sigma: 5.0,
            score_mode: ScoreMode::Reconstruction,
        }
    }
}

pub struct NetworkSpecs {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub discriminator: Vec<LayerSpec>,
}

impl GanomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_units.is_empty() || self.decoder_units.is_empty() || self.discriminator_units.is_empty() {
            return Err(Error::Config("GANomaly networks need at least one layer each".into()));
        }
        if self.discriminator_units.last() != Some(&1) {
            return Err(Error::Config("discriminator must end in a single unit".into()));
        }
        let w = self.weights;
        if [w.contextual, w.latent, w.adversarial].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if self.batch_size == 0 || self.iterations_per_epoch == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, iterations_per_epoch and max_epochs must be positive".into()));
        }
        if self.k_d == 0 && self.k_g == 0 {
            return Err(Error::Config("k_d and k_g cannot both be zero".into()));
        }
        self.adam.validate()
    }

    pub fn layer_specs(&self, d: usize) -> NetworkSpecs {
        let act = Activation::LeakyRelu { alpha: self.leaky_alpha };
        let mut enc_dims = vec![d];
        enc_dims.extend(&self.encoder_units);
        let latent = *enc_dims.last().expect("non-empty");
        let mut dec_dims = vec![latent];
        dec_dims.extend(&self.decoder_units);
        let mut decoder = chain_specs(&dec_dims, act);
        decoder.push(LayerSpec::new(*dec_dims.last().expect("non-empty"), d, Activation::Identity));
        let mut dis_dims = vec![d];
        dis_dims.extend(&self.discriminator_units);
        let mut discriminator = chain_specs(&dis_dims, act);
        discriminator.last_mut().expect("non-empty").activation = Activation::Sigmoid;
        NetworkSpecs {
            encoder: chain_specs(&enc_dims, act),
            decoder,
            discriminator,
        }
    }
}

/// The four networks of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanNetworks {
    pub encoder1: DenseNetwork,
    pub decoder: DenseNetwork,
    pub encoder2: DenseNetwork,
    pub discriminator: DenseNetwork,
}

impl GanNetworks {
    pub fn init(config: &GanomalyConfig, d: usize, seed: u64) -> Result<Self> {
        let specs = config.layer_specs(d);
        Ok(GanNetworks {
            encoder1: init_network(&specs.encoder, derive_seed(seed, 21))?,
            decoder: init_network(&specs.decoder, derive_seed(seed, 22))?,
            encoder2: init_network(&specs.encoder, derive_seed(seed, 23))?,
            discriminator: init_network(&specs.discriminator, derive_seed(seed, 24))?,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder1.input_dim()
    }

    fn check(&self) -> Result<()> {
        let d = self.feature_dim();
        let latent = self.encoder1.output_dim();
        let ok = self.decoder.input_dim() == latent
            && self.decoder.output_dim() == d
            && self.encoder2.input_dim() == d
            && self.encoder2.output_dim() == latent
            && self.discriminator.input_dim() == d
            && self.discriminator.output_dim() == 1;
        if ok {
            Ok(())
        } else {
            Err(Error::shape("consistent GANomaly network dimensions", "mismatched networks"))
        }
    }

    /// `g(f1(x))` for a batch.
    pub fn reconstruct(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.encoder1.infer_batch(x)?;
        self.decoder.infer_batch(z.view())
    }
}

/// Loss value, its parts, and parameter gradients of the generator networks.
#[derive(Debug, Clone)]
pub struct GeneratorLoss {
    pub loss: f64,
    pub contextual: f64,
    pub latent: f64,
    pub adversarial: f64,
    pub encoder1: GradientSet,
    pub decoder: GradientSet,
    pub encoder2: GradientSet,
}

/// Generator objective. `recon_batch` feeds the contextual and latent terms,
/// `adv_batch` the adversarial term (they may be the same rows). The
/// discriminator only propagates gradients to its input; its parameters are
/// untouched.
pub fn generator_loss(
    nets: &GanNetworks,
    recon_batch: ArrayView2<f64>,
    adv_batch: ArrayView2<f64>,
    weights: LossWeights,
) -> Result<GeneratorLoss> {
    let nr = recon_batch.nrows();
    let na = adv_batch.nrows();
    if nr == 0 || na == 0 {
        return Err(Error::EmptyInput("generator batch is empty".into()));
    }
    if recon_batch.ncols() != adv_batch.ncols() {
        return Err(Error::shape(format!("batch dim {}", recon_batch.ncols()), adv_batch.ncols()));
    }
    // One pass through f1 and g for both minibatches: rows [0, na) adversarial, [na, na+nr) reconstruction.
    let joint = concatenate(Axis(0), &[adv_batch, recon_batch])?;
    let (z, e1_cache) = nets.encoder1.forward_batch(joint.view())?;
    let (x_hat, dec_cache) = nets.decoder.forward_batch(z.view())?;

    let x_hat_adv = x_hat.slice(s![..na, ..]);
    let x_hat_rec = x_hat.slice(s![na.., ..]);
    let z_rec = z.slice(s![na.., ..]);

    let (z_hat, e2_cache) = nets.encoder2.forward_batch(x_hat_rec)?;
    let (p_fake, dis_cache) = nets.discriminator.forward_batch(x_hat_adv)?;

    let b = nr as f64;
    let contextual = nn::l1_rows(recon_batch, x_hat_rec)?.sum() / b;
    let latent = nn::l1_rows(z_rec, z_hat.view())?.sum() / b;
    let p: Vec<f64> = p_fake.column(0).to_vec();
    let (adversarial, dp) = generator_adversarial(&p)?;
    let loss = weights.contextual * contextual + weights.latent * latent + weights.adversarial * adversarial;

    // dL/dx_hat
    let mut d_x_hat = Array2::zeros(x_hat.raw_dim());
    let dp_mat = Array2::from_shape_vec((na, 1), dp.iter().map(|g| g * weights.adversarial).collect())
        .expect("column");
    let d_adv = nets.discriminator.backward_input(&dis_cache, dp_mat.view())?;
    d_x_hat.slice_mut(s![..na, ..]).assign(&d_adv);

    let d_z_hat = nn::sign_diff(z_hat.view(), z_rec, weights.latent / b);
    let (e2_grads, d_from_e2) = nets.encoder2.backward(&e2_cache, d_z_hat.view())?;
    let d_ctx = nn::sign_diff(x_hat_rec, recon_batch, weights.contextual / b);
    d_x_hat.slice_mut(s![na.., ..]).assign(&(d_ctx + d_from_e2));

    let (dec_grads, mut d_z) = nets.decoder.backward(&dec_cache, d_x_hat.view())?;
    // The latent term also depends on z through f1 directly.
    let d_z_direct = d_z_hat.mapv(|v| -v);
    {
        let mut rows = d_z.slice_mut(s![na.., ..]);
        rows += &d_z_direct;
    }
    let (e1_grads, _) = nets.encoder1.backward(&e1_cache, d_z.view())?;

    Ok(GeneratorLoss {
        loss,
        contextual,
        latent,
        adversarial,
        encoder1: e1_grads,
        decoder: dec_grads,
        encoder2: e2_grads,
    })
}

/// Generator objective value only.
pub fn generator_loss_value(
    nets: &GanNetworks,
    recon_batch: ArrayView2<f64>,
    adv_batch: ArrayView2<f64>,
    weights: LossWeights,
) -> Result<f64> {
    let z = nets.encoder1.infer_batch(recon_batch)?;
    let x_hat = nets.decoder.infer_batch(z.view())?;
    let z_hat = nets.encoder2.infer_batch(x_hat.view())?;
    let b = recon_batch.nrows() as f64;
    let contextual = nn::l1_rows(recon_batch, x_hat.view())?.sum() / b;
    let latent = nn::l1_rows(z.view(), z_hat.view())?.sum() / b;
    let x_hat_adv = nets.reconstruct(adv_batch)?;
    let p = nets.discriminator.infer_batch(x_hat_adv.view())?;
    let (adversarial, _) = generator_adversarial(&p.column(0).to_vec())?;
    Ok(weights.contextual * contextual + weights.latent * latent + weights.adversarial * adversarial)
}

/// Discriminator objective on real rows and generated rows, with gradients
/// for the discriminator parameters only.
pub fn discriminator_loss(
    discriminator: &DenseNetwork,
    real: ArrayView2<f64>,
    generated: ArrayView2<f64>,
) -> Result<(f64, GradientSet)> {
    if real.nrows() != generated.nrows() {
        return Err(Error::shape(format!("batch of {}", real.nrows()), generated.nrows()));
    }
    let n = real.nrows();
    let joint = concatenate(Axis(0), &[real, generated])?;
    let (p, cache) = discriminator.forward_batch(joint.view())?;
    let col = p.column(0);
    let p_real: Vec<f64> = col.slice(s![..n]).to_vec();
    let p_fake: Vec<f64> = col.slice(s![n..]).to_vec();
    let (loss, g_real, g_fake) = discriminator_bce(&p_real, &p_fake)?;
    let grad = Array2::from_shape_vec((2 * n, 1), g_real.into_iter().chain(g_fake).collect()).expect("column");
    let (grads, _) = discriminator.backward(&cache, grad.view())?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GanTrainingTrace {
    /// Mean discriminator loss per outer iteration.
    pub l_d: Vec<f64>,
    /// Mean generator loss per outer iteration.
    pub l_g: Vec<f64>,
    /// Iteration index at the end of each epoch.
    pub epoch_ends: Vec<usize>,
    /// Generator loss on the validation normals after each epoch.
    pub validation: Vec<f64>,
    pub discriminator_updates: usize,
    pub generator_updates: usize,
    pub best_epoch: usize,
}

impl GanTrainingTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,l_d,l_g\n");
        for (i, (d, g)) in self.l_d.iter().zip(&self.l_g).enumerate() {
            out.push_str(&format!("{i},{d},{g}\n"));
        }
        out
    }

    /// Mean of `l_d` over the trailing `fraction` of iterations.
    pub fn trailing_mean_l_d(&self, fraction: f64) -> f64 {
        let n = self.l_d.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        stats::mean(&self.l_d[n - k..])
    }

    pub fn is_finite(&self) -> bool {
        self.l_d.iter().chain(&self.l_g).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanomalyModel {
    pub networks: GanNetworks,
    pub weights: LossWeights,
    pub latent_dim: usize,
    pub score_mode: ScoreMode,
    pub tau: f64,
    pub k_sigma: f64,
    pub adam: AdamConfig,
    pub calibration_scores: Vec<f64>,
}

impl GanomalyModel {
    pub fn feature_dim(&self) -> usize {
        self.networks.feature_dim()
    }

    pub fn score_matrix(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let nets = &self.networks;
        let z = nets.encoder1.infer_batch(x)?;
        let x_hat = nets.decoder.infer_batch(z.view())?;
        let scores = match self.score_mode {
            ScoreMode::Reconstruction => nn::l1_rows(x, x_hat.view())?,
            ScoreMode::Latent => {
                let z_hat = nets.encoder2.infer_batch(x_hat.view())?;
                nn::l1_rows(z.view(), z_hat.view())?
            }
        };
        Ok(scores.to_vec())
    }

    pub fn score_batch(&self, data: &[FeatureVector]) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        self.score_matrix(feature_matrix(data)?.view())
    }

    pub fn calibrate(&mut self, training: &[FeatureVector], k: f64) -> Result<f64> {
        let scores = self.score_batch(training)?;
        self.tau = calibrate_threshold(&scores, k)?;
        self.k_sigma = k;
        self.calibration_scores = scores;
        Ok(self.tau)
    }
}

pub fn gan_score(model: &GanomalyModel, x: &FeatureVector) -> Result<AnomalyScore> {
    if x.x.len() != model.feature_dim() {
        return Err(Error::shape(format!("feature dim {}", model.feature_dim()), x.x.len()));
    }
    let s = model.score_batch(std::slice::from_ref(x))?;
    Ok(AnomalyScore {
        record_id: x.record_id.clone(),
        score: s[0],
        decision: None,
    })
}

fn draw_batch(data: &Array2<f64>, batch: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let idx = rand::seq::index::sample(rng, n, batch.min(n)).into_vec();
    data.select(Axis(0), &idx)
}

/// One discriminator update. Returns `L_D` before the update.
pub fn discriminator_update(
    nets: &mut GanNetworks,
    opt: &mut AdamState,
    latent_source: ArrayView2<f64>,
    real: ArrayView2<f64>,
) -> Result<f64> {
    let generated = nets.reconstruct(latent_source)?;
    let (loss, grads) = discriminator_loss(&nets.discriminator, real, generated.view())?;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::TrainingAborted(format!("non-finite discriminator loss {loss}")));
    }
    adam_step(&mut nets.discriminator, &grads, opt)?;
    Ok(loss)
}

pub struct GeneratorOptimizers {
    pub encoder1: AdamState,
    pub decoder: AdamState,
    pub encoder2: AdamState,
}

impl GeneratorOptimizers {
    pub fn new(nets: &GanNetworks, config: AdamConfig) -> Self {
        GeneratorOptimizers {
            encoder1: AdamState::new(&nets.encoder1, config),
            decoder: AdamState::new(&nets.decoder, config),
            encoder2: AdamState::new(&nets.encoder2, config),
        }
    }
}

/// One generator update. Returns `L_G` before the update.
pub fn generator_update(
    nets: &mut GanNetworks,
    opts: &mut GeneratorOptimizers,
    adv_batch: ArrayView2<f64>,
    recon_batch: ArrayView2<f64>,
    weights: LossWeights,
) -> Result<f64> {
    let g = generator_loss(nets, recon_batch, adv_batch, weights)?;
    if !g.loss.is_finite() || !g.encoder1.is_finite() || !g.decoder.is_finite() || !g.encoder2.is_finite() {
        return Err(Error::TrainingAborted(format!("non-finite generator loss {}", g.loss)));
    }
    adam_step(&mut nets.encoder1, &g.encoder1, &mut opts.encoder1)?;
    adam_step(&mut nets.decoder, &g.decoder, &mut opts.decoder)?;
    adam_step(&mut nets.encoder2, &g.encoder2, &mut opts.encoder2)?;
    Ok(g.loss)
}

/// Alternating optimization on normal samples. `validation` (normals, may be
/// empty) drives early stopping on the generator loss; the best epoch's
/// networks are kept. The returned model is uncalibrated.
pub fn train_ganomaly(
    normals: &[FeatureVector],
    validation: &[FeatureVector],
    config: &GanomalyConfig,
    seed: u64,
) -> Result<(GanomalyModel, GanTrainingTrace)> {
    config.validate()?;
    if normals.is_empty() {
        return Err(Error::TrainingData("GANomaly training set is empty".into()));
    }
    if normals.iter().any(|f| f.label != ClassLabel::Normal) {
        return Err(Error::TrainingData("GANomaly trains on normal samples only".into()));
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

    let mut nets = GanNetworks::init(config, d, seed)?;
    let mut d_opt = AdamState::new(&nets.discriminator, config.adam);
    let mut g_opts = GeneratorOptimizers::new(&nets, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 25));
    let mut trace = GanTrainingTrace::default();
    let mut best = (f64::INFINITY, nets.clone());
    let mut since_best = 0;
    let b = config.batch_size;

    for epoch in 0..config.max_epochs {
        for _ in 0..config.iterations_per_epoch {
            let mut l_d = 0.0;
            for _ in 0..config.k_d {
                let latent_src = draw_batch(&data, b, &mut rng);
                let real = draw_batch(&data, b, &mut rng);
                l_d += discriminator_update(&mut nets, &mut d_opt, latent_src.view(), real.view())
                    .map_err(|e| abort_with_trace(e, &trace))?;
                trace.discriminator_updates += 1;
            }
            let mut l_g = 0.0;
            for _ in 0..config.k_g {
                let adv = draw_batch(&data, b, &mut rng);
                let recon = draw_batch(&data, b, &mut rng);
                l_g += generator_update(&mut nets, &mut g_opts, adv.view(), recon.view(), config.weights)
                    .map_err(|e| abort_with_trace(e, &trace))?;
                trace.generator_updates += 1;
            }
            trace.l_d.push(if config.k_d > 0 { l_d / config.k_d as f64 } else { f64::NAN });
            trace.l_g.push(if config.k_g > 0 { l_g / config.k_g as f64 } else { f64::NAN });
        }
        trace.epoch_ends.push(trace.l_d.len());

        let monitor = match &val {
            Some(v) => {
                let l = generator_loss_value(&nets, v.view(), v.view(), config.weights)?;
                trace.validation.push(l);
                l
            }
            None => stats::mean(&trace.l_g[trace.l_g.len() - config.iterations_per_epoch..]),
        };
        if monitor < best.0 {
            best = (monitor, nets.clone());
            trace.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let networks = best.1;
    networks.check()?;
    let latent_dim = networks.encoder1.output_dim();
    Ok((
        GanomalyModel {
            networks,
            weights: config.weights,
            latent_dim,
            score_mode: config.score_mode,
            tau: f64::NAN,
            k_sigma: config.k_sigma,
            adam: config.adam,
            calibration_scores: Vec::new(),
        },
        trace,
    ))
}

fn abort_with_trace(e: Error, trace: &GanTrainingTrace) -> Error {
    match e {
        Error::TrainingAborted(msg) => {
            let tail = trace.l_d.len().saturating_sub(5);
            Error::TrainingAborted(format!(
                "{msg} after {} iterations; last l_d {:?}, last l_g {:?}",
                trace.l_d.len(),
                &trace.l_d[tail..],
                &trace.l_g[tail..]
            ))
        }
        other => other,
    }
}
