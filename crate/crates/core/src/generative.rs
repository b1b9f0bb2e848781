//! Importance-weighted VAE.
//!
//! Samples `x_i` drawn from a proposal are weighted by a shaped score
//! `f(R(x_i))` and the VAE is fitted by minimising
//!
//! ```text
//! L = (1/n) Σ_i w_i [ ½‖x_i − x̂_i‖² + γ |KL(q(z|x_i) ‖ N(0, I)) − C| ]
//! ```
//!
//! on normalised inputs, with one reparameterised latent sample per point.
//! The decoder then maps latent values onto high-scoring regions.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{unflatten_weights, BasisConfig, Rtp, ScalingConfig};
use crate::world::Trajectory;

pub const MODEL_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Score shaping

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingConfig {
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapedWeights {
    pub weights: Vec<f64>,
    /// Set when every score above the median equals the maximum, so the batch
    /// carries no ranking information and all weights were set to 1.
    pub degenerate: bool,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `f(R) = exp(α (R − R_max) / (R_max − R_med))` for `R ≥ R_med`, else 0.
pub fn shape_weights(scores: &[f64], cfg: &ShapingConfig) -> Result<ShapedWeights> {
    if scores.len() < 2 {
        return Err(Error::invalid("shaping needs at least two scores"));
    }
    if !(cfg.alpha > 0.0) {
        return Err(Error::invalid("shaping alpha must be positive"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let med = median(scores);
    if !(max > med) {
        log::warn!("degenerate score batch (max == median); using uniform weights");
        return Ok(ShapedWeights {
            weights: vec![1.0; scores.len()],
            degenerate: true,
        });
    }
    let spread = max - med;
    let weights = scores
        .iter()
        .map(|&r| {
            if r < med {
                0.0
            } else {
                (cfg.alpha * (r - max) / spread).exp()
            }
        })
        .collect();
    Ok(ShapedWeights {
        weights,
        degenerate: false,
    })
}

/// Unnormalised importance weight of a sample for the target `f(R) / Z`
/// under a proposal with density `proposal_density` at that sample. `Z` is
/// a shared constant and is left out.
pub fn target_importance_weight(shaped: f64, proposal_density: f64) -> f64 {
    shaped / proposal_density
}

/// Monte-Carlo weighted log-likelihood `(1/N) Σ w_i log p(x_i)`.
pub fn weighted_log_likelihood(weights: &[f64], log_likelihoods: &[f64]) -> f64 {
    let n = weights.len() as f64;
    weights.iter().zip(log_likelihoods).map(|(w, l)| w * l).sum::<f64>() / n
}

// ---------------------------------------------------------------------------
// Dense ReLU networks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LayerFile", try_from = "LayerFile")]
pub struct DenseLayer {
    /// out × in
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<DenseLayer> for LayerFile {
    fn from(layer: DenseLayer) -> Self {
        LayerFile {
            weight: layer.weight.row_iter().map(|r| r.iter().cloned().collect()).collect(),
            bias: layer.bias.iter().cloned().collect(),
        }
    }
}

impl TryFrom<LayerFile> for DenseLayer {
    type Error = String;

    fn try_from(file: LayerFile) -> std::result::Result<Self, Self::Error> {
        let rows = file.weight.len();
        let cols = file.weight.first().map_or(0, Vec::len);
        if file.weight.iter().any(|r| r.len() != cols) {
            return Err("ragged weight matrix".into());
        }
        if file.bias.len() != rows {
            return Err(format!("bias has {} entries for {rows} outputs", file.bias.len()));
        }
        let flat: Vec<f64> = file.weight.into_iter().flatten().collect();
        Ok(DenseLayer {
            weight: DMatrix::from_row_slice(rows, cols, &flat),
            bias: DVector::from_vec(file.bias),
        })
    }
}

/// Fully connected network, ReLU on hidden layers and identity on the output.
/// Activations are stored one sample per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
struct Tape {
    /// Input of each layer.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

fn affine(layer: &DenseLayer, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = &layer.weight * x;
    for mut col in out.column_iter_mut() {
        col += &layer.bias;
    }
    out
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid("network needs at least two non-empty layers"));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    weight: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() + 1 != self.layer_sizes.len() {
            return Err(Error::Format("layer count does not match layer sizes".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (fan_in, fan_out) = (self.layer_sizes[i], self.layer_sizes[i + 1]);
            if layer.weight.shape() != (fan_out, fan_in) || layer.bias.len() != fan_out {
                return Err(Error::Format(format!("layer {i} has the wrong shape")));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = affine(layer, &h);
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        h
    }

    fn forward_tape(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Tape) {
        let last = self.layers.len() - 1;
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(layer, &h);
            tape.inputs.push(h);
            if i < last {
                let mut a = z.clone();
                a.apply(|v| *v = v.max(0.0));
                tape.pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        (h, tape)
    }

    /// Back-propagates `grad_out` (d loss / d output); returns parameter
    /// gradients and d loss / d input.
    fn backward(&self, tape: &Tape, grad_out: DMatrix<f64>) -> (Vec<LayerGrad>, DMatrix<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                delta.zip_apply(&tape.pre[i], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let layer = &self.layers[i];
            grads.push(LayerGrad {
                weight: &delta * tape.inputs[i].transpose(),
                bias: delta.column_sum(),
            });
            delta = layer.weight.tr_mul(&delta);
        }
        grads.reverse();
        (grads, delta)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// Model

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemTag {
    Testfunc,
    Rtp,
}

/// Per-coordinate affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Unweighted statistics of the rows of `inputs` (N × dim).
    pub fn fit(inputs: &DMatrix<f64>) -> Self {
        let n = inputs.nrows() as f64;
        let mut mean = Vec::with_capacity(inputs.ncols());
        let mut scale = Vec::with_capacity(inputs.ncols());
        for col in inputs.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            scale.push(if s > 1e-12 { s } else { 1.0 });
        }
        Normalization { mean, scale }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// What a trajectory model's outputs mean: flattened B × D RTP weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtpMeta {
    pub basis: BasisConfig,
    pub scaling: ScalingConfig,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    pub steps: usize,
    pub dof: usize,
}

impl RtpMeta {
    pub fn rtp(&self) -> Result<Rtp> {
        Rtp::new(self.basis.clone(), self.scaling, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogSummary {
    pub epochs: usize,
    pub steps: usize,
    pub final_loss: f64,
    pub final_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct VaeModel {
    /// Outputs `(μ_z, log σ_z²)` stacked, `2 · latent_dim` values.
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub normalization: Normalization,
    pub problem_tag: ProblemTag,
    pub rtp_meta: Option<RtpMeta>,
    pub train_log_summary: Option<TrainLogSummary>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    problem_tag: ProblemTag,
    latent_dim: usize,
    input_dim: usize,
    normalization: Normalization,
    encoder: MlpParams,
    decoder: MlpParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rtp_meta: Option<RtpMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_log_summary: Option<TrainLogSummary>,
}

impl From<VaeModel> for ModelFile {
    fn from(m: VaeModel) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            problem_tag: m.problem_tag,
            latent_dim: m.latent_dim,
            input_dim: m.input_dim,
            normalization: m.normalization,
            encoder: m.encoder,
            decoder: m.decoder,
            rtp_meta: m.rtp_meta,
            train_log_summary: m.train_log_summary,
        }
    }
}

impl TryFrom<ModelFile> for VaeModel {
    type Error = String;

    fn try_from(f: ModelFile) -> std::result::Result<Self, Self::Error> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(format!("unsupported model format version {}", f.format_version));
        }
        let model = VaeModel {
            encoder: f.encoder,
            decoder: f.decoder,
            latent_dim: f.latent_dim,
            input_dim: f.input_dim,
            normalization: f.normalization,
            problem_tag: f.problem_tag,
            rtp_meta: f.rtp_meta,
            train_log_summary: f.train_log_summary,
        };
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }
}

/// Hidden layer sizes of both networks and the latent dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl VaeModel {
    pub fn new<R: Rng>(arch: &Architecture, input_dim: usize, rng: &mut R) -> Result<Self> {
        if !(1..=2).contains(&arch.latent_dim) {
            return Err(Error::invalid("latent dimension must be 1 or 2"));
        }
        let mut enc = vec![input_dim];
        enc.extend(&arch.encoder_hidden);
        enc.push(2 * arch.latent_dim);
        let mut dec = vec![arch.latent_dim];
        dec.extend(&arch.decoder_hidden);
        dec.push(input_dim);
        Ok(VaeModel {
            encoder: MlpParams::new(&enc, rng)?,
            decoder: MlpParams::new(&dec, rng)?,
            latent_dim: arch.latent_dim,
            input_dim,
            normalization: Normalization::identity(input_dim),
            problem_tag: ProblemTag::Testfunc,
            rtp_meta: None,
            train_log_summary: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.input_dim() != self.input_dim || self.encoder.output_dim() != 2 * self.latent_dim {
            return Err(Error::Format("encoder shape does not match model dimensions".into()));
        }
        if self.decoder.input_dim() != self.latent_dim || self.decoder.output_dim() != self.input_dim {
            return Err(Error::Format("decoder shape does not match model dimensions".into()));
        }
        if self.normalization.mean.len() != self.input_dim
            || self.normalization.scale.len() != self.input_dim
            || self.normalization.scale.iter().any(|s| !(*s > 0.0))
        {
            return Err(Error::Format("normalization does not match input dimension".into()));
        }
        if let Some(meta) = &self.rtp_meta {
            if meta.basis.count() * meta.dof != self.input_dim {
                return Err(Error::Format("rtp metadata does not match input dimension".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.slices_mut();
        out.extend(self.decoder.slices_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.decoder.parameter_count()
    }

    pub fn rtp(&self) -> Result<Option<Rtp>> {
        self.rtp_meta.as_ref().map(RtpMeta::rtp).transpose()
    }
}

/// Posterior mean and standard deviation for a raw (unnormalised) input.
pub fn encode(model: &VaeModel, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    Error::check_dim("encode input", model.input_dim, x.len())?;
    let xn = DMatrix::from_column_slice(model.input_dim, 1, &model.normalization.normalize(x));
    let out = model.encoder.forward(&xn);
    let l = model.latent_dim;
    let mu = (0..l).map(|j| out[(j, 0)]).collect();
    let sigma = (0..l).map(|j| (0.5 * out[(l + j, 0)]).exp()).collect();
    Ok((mu, sigma))
}

/// `z = μ + σ ⊙ ε` for a given noise vector.
pub fn reparameterize_with(mu: &[f64], sigma: &[f64], noise: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(sigma)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect()
}

pub fn reparameterize<R: Rng>(mu: &[f64], sigma: &[f64], rng: &mut R) -> Vec<f64> {
    let noise: Vec<f64> = mu.iter().map(|_| StandardNormal.sample(rng)).collect();
    reparameterize_with(mu, sigma, &noise)
}

/// Decoder mean in the original (unnormalised) input space.
pub fn decode(model: &VaeModel, z: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim("latent vector", model.latent_dim, z.len())?;
    let zm = DMatrix::from_column_slice(model.latent_dim, 1, z);
    let out = model.decoder.forward(&zm);
    Ok(model.normalization.denormalize(out.as_slice()))
}

/// Decoder output for `z`, plus the reconstructed trajectory for RTP models.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub x: Vec<f64>,
    pub trajectory: Option<Trajectory>,
}

pub fn generate(model: &VaeModel, z: &[f64]) -> Result<Generated> {
    let rtp = model.rtp()?;
    generate_with(model, rtp.as_ref(), z)
}

/// Like [`generate`] with a prebuilt RTP for repeated calls.
pub fn generate_with(model: &VaeModel, rtp: Option<&Rtp>, z: &[f64]) -> Result<Generated> {
    let x = decode(model, z)?;
    let trajectory = match (&model.rtp_meta, rtp) {
        (Some(meta), Some(rtp)) => {
            let w = unflatten_weights(&x, meta.basis.count(), meta.dof)?;
            Some(rtp.reconstruct_weights(&w, &meta.q_start, &meta.q_goal)?)
        }
        (Some(meta), None) => {
            let rtp = meta.rtp()?;
            let w = unflatten_weights(&x, meta.basis.count(), meta.dof)?;
            Some(rtp.reconstruct_weights(&w, &meta.q_start, &meta.q_goal)?)
        }
        _ => None,
    };
    Ok(Generated { x, trajectory })
}

/// `½ Σ_j (μ_j² + σ_j² − 1 − log σ_j²)`.
pub fn kl_to_standard_normal(mu: &[f64], sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| m * m + s * s - 1.0 - (s * s).ln())
        .sum::<f64>()
}

/// `weight · (½‖x − x̂‖² + γ |KL − C|)` for one raw input and fixed noise.
pub fn loss_per_sample(model: &VaeModel, x: &[f64], weight: f64, gamma: f64, capacity: f64, noise: &[f64]) -> Result<f64> {
    Error::check_dim("noise", model.latent_dim, noise.len())?;
    let (mu, sigma) = encode(model, x)?;
    let z = reparameterize_with(&mu, &sigma, noise);
    let zm = DMatrix::from_column_slice(model.latent_dim, 1, &z);
    let xhat = model.decoder.forward(&zm);
    let xn = model.normalization.normalize(x);
    let rec = 0.5 * xn.iter().zip(xhat.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let kl = kl_to_standard_normal(&mu, &sigma);
    Ok(weight * (rec + gamma * (kl - capacity).abs()))
}

// ---------------------------------------------------------------------------
// Batch objective and gradients

/// Averages over the minibatch (unweighted reconstruction and KL are
/// reported alongside the weighted loss).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub encoder: Vec<LayerGrad>,
    pub decoder: Vec<LayerGrad>,
}

impl VaeGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in self.encoder.iter().chain(&self.decoder) {
            out.push(g.weight.as_slice());
            out.push(g.bias.as_slice());
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

struct Forward {
    stats: BatchStats,
    enc_tape: Tape,
    dec_tape: Tape,
    enc_out: DMatrix<f64>,
    xhat: DMatrix<f64>,
    kl: Vec<f64>,
}

fn forward_batch(
    model: &VaeModel,
    xs: &DMatrix<f64>,
    weights: &[f64],
    noise: &DMatrix<f64>,
    gamma: f64,
    capacity: f64,
) -> Forward {
    let l = model.latent_dim;
    let n = xs.ncols();
    let (enc_out, enc_tape) = model.encoder.forward_tape(xs);
    let mut z = DMatrix::zeros(l, n);
    let mut kl = vec![0.0; n];
    for i in 0..n {
        for j in 0..l {
            let mu = enc_out[(j, i)];
            let logvar = enc_out[(l + j, i)];
            let var = logvar.exp();
            z[(j, i)] = mu + (0.5 * logvar).exp() * noise[(j, i)];
            kl[i] += 0.5 * (mu * mu + var - 1.0 - logvar);
        }
    }
    let (xhat, dec_tape) = model.decoder.forward_tape(&z);
    let mut loss = 0.0;
    let mut rec_total = 0.0;
    let mut kl_total = 0.0;
    for i in 0..n {
        let rec = 0.5 * xhat.column(i).iter().zip(xs.column(i).iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        loss += weights[i] * (rec + gamma * (kl[i] - capacity).abs());
        rec_total += rec;
        kl_total += kl[i];
    }
    let inv_n = 1.0 / n as f64;
    Forward {
        stats: BatchStats {
            loss: loss * inv_n,
            reconstruction: rec_total * inv_n,
            kl: kl_total * inv_n,
        },
        enc_tape,
        dec_tape,
        enc_out,
        xhat,
        kl,
    }
}

/// Weighted loss on normalised inputs `xs` (input_dim × n) with fixed noise
/// (latent_dim × n).
pub fn batch_loss(model: &VaeModel, xs: &DMatrix<f64>, weights: &[f64], noise: &DMatrix<f64>, gamma: f64, capacity: f64) -> BatchStats {
    forward_batch(model, xs, weights, noise, gamma, capacity).stats
}

pub fn batch_loss_and_grad(
    model: &VaeModel,
    xs: &DMatrix<f64>,
    weights: &[f64],
    noise: &DMatrix<f64>,
    gamma: f64,
    capacity: f64,
) -> (BatchStats, VaeGrads) {
    let l = model.latent_dim;
    let n = xs.ncols();
    let inv_n = 1.0 / n as f64;
    let fwd = forward_batch(model, xs, weights, noise, gamma, capacity);

    let mut grad_xhat = &fwd.xhat - xs;
    for (i, mut col) in grad_xhat.column_iter_mut().enumerate() {
        col *= weights[i] * inv_n;
    }
    let (dec_grads, grad_z) = model.decoder.backward(&fwd.dec_tape, grad_xhat);

    let mut grad_enc = DMatrix::zeros(2 * l, n);
    for i in 0..n {
        let diff = fwd.kl[i] - capacity;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        let kl_coeff = weights[i] * inv_n * gamma * sign;
        for j in 0..l {
            let mu = fwd.enc_out[(j, i)];
            let logvar = fwd.enc_out[(l + j, i)];
            let sigma = (0.5 * logvar).exp();
            let gz = grad_z[(j, i)];
            grad_enc[(j, i)] = gz + kl_coeff * mu;
            grad_enc[(l + j, i)] = gz * noise[(j, i)] * 0.5 * sigma + kl_coeff * 0.5 * (sigma * sigma - 1.0);
        }
    }
    let (enc_grads, _) = model.encoder.backward(&fwd.enc_tape, grad_enc);
    (
        fwd.stats,
        VaeGrads {
            encoder: enc_grads,
            decoder: dec_grads,
        },
    )
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// One bias-corrected Adam update over parallel parameter/gradient slices.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    Error::check_dim("adam tensors", params.len(), grads.len())?;
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.v = state.m.clone();
    }
    Error::check_dim("adam state", state.m.len(), params.len())?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        Error::check_dim("adam tensor", p.len(), g.len())?;
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// N × input_dim
    pub inputs: DMatrix<f64>,
    pub raw_scores: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SampleBatch {
    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.nrows();
        Error::check_dim("raw scores", n, self.raw_scores.len())?;
        Error::check_dim("weights", n, self.weights.len())?;
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        if !self.weights.iter().any(|w| *w > 0.0) {
            return Err(Error::invalid("at least one weight must be positive"));
        }
        if self.inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("inputs must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub capacity_start: f64,
    pub capacity_end: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        if !(self.gamma > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::invalid("gamma and learning rate must be positive"));
        }
        if !(self.capacity_start >= 0.0 && self.capacity_end >= self.capacity_start) {
            return Err(Error::invalid("capacity schedule must be non-negative and non-decreasing"));
        }
        Ok(())
    }

    /// Linear capacity schedule over `total` optimiser steps.
    pub fn capacity_at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.capacity_end;
        }
        let frac = step as f64 / (total - 1) as f64;
        self.capacity_start + (self.capacity_end - self.capacity_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
}

/// What the input vectors mean, recorded in the model.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Testfunc,
    Rtp(RtpMeta),
}

fn latent_noise<R: Rng>(rng: &mut R, latent_dim: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(latent_dim, n, |_, _| StandardNormal.sample(rng))
}

/// Fits the weighted VAE. Deterministic for a given `cfg.seed`.
pub fn train(batch: &SampleBatch, cfg: &TrainConfig, arch: &Architecture, problem: ProblemSpec) -> Result<(VaeModel, TrainLog)> {
    batch.validate()?;
    cfg.validate()?;
    let n = batch.inputs.nrows();
    let input_dim = batch.inputs.ncols();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut model = VaeModel::new(arch, input_dim, &mut init_rng)?;
    model.normalization = Normalization::fit(&batch.inputs);
    match problem {
        ProblemSpec::Testfunc => model.problem_tag = ProblemTag::Testfunc,
        ProblemSpec::Rtp(meta) => {
            model.problem_tag = ProblemTag::Rtp;
            model.rtp_meta = Some(meta);
        }
    }
    model.validate()?;

    // One column per sample.
    let mut xs = DMatrix::zeros(input_dim, n);
    for i in 0..n {
        let row: Vec<f64> = batch.inputs.row(i).iter().cloned().collect();
        xs.set_column(i, &DVector::from_vec(model.normalization.normalize(&row)));
    }
    let mean_w = batch.weights.iter().sum::<f64>() / n as f64;
    let weights: Vec<f64> = batch.weights.iter().map(|w| w / mean_w).collect();

    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::default();
    let mut log = TrainLog::default();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let snapshot = model.clone();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut rec_sum, mut kl_sum) = (0.0, 0.0, 0.0);
        let mut capacity = cfg.capacity_start;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select_columns(chunk);
            let wb: Vec<f64> = chunk.iter().map(|&i| weights[i]).collect();
            let noise = latent_noise(&mut rng, model.latent_dim, chunk.len());
            capacity = cfg.capacity_at(step, total_steps);
            let (stats, grads) = batch_loss_and_grad(&model, &xb, &wb, &noise, cfg.gamma, capacity);
            if !stats.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    detail: format!(
                        "loss {} (reconstruction {}, kl {})",
                        stats.loss, stats.reconstruction, stats.kl
                    ),
                    last_good: Some(Box::new(snapshot)),
                });
            }
            let grad_slices = grads.slices();
            let mut params = model.slices_mut();
            adam_step(&mut params, &grad_slices, &mut adam, cfg.learning_rate, &cfg.adam)?;
            let frac = chunk.len() as f64 / n as f64;
            loss_sum += stats.loss * frac;
            rec_sum += stats.reconstruction * frac;
            kl_sum += stats.kl * frac;
            step += 1;
        }
        log.epochs.push(EpochLog {
            epoch,
            loss: loss_sum,
            reconstruction: rec_sum,
            kl: kl_sum,
            capacity,
        });
        if epoch % 50 == 0 || epoch + 1 == cfg.epochs {
            log::debug!("epoch {epoch}: loss {loss_sum:.5} kl {kl_sum:.4} C {capacity:.3}");
        }
    }
    log.steps = step;
    let last = log.epochs.last().cloned();
    model.train_log_summary = last.map(|e| TrainLogSummary {
        epochs: cfg.epochs,
        steps: step,
        final_loss: e.loss,
        final_kl: e.kl,
    });
    Ok((model, log))
}

// ---------------------------------------------------------------------------
// Gradient verification

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckConfig {
    pub gamma: f64,
    pub capacity: f64,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        GradientCheckConfig {
            gamma: 0.5,
            capacity: 0.3,
            step: 1e-5,
            seed: 0,
        }
    }
}

/// Largest relative difference between the analytic gradient of the full
/// weighted loss and central finite differences, over every parameter.
/// `batch.inputs` are used as given (already normalised).
pub fn gradient_check(model: &VaeModel, batch: &SampleBatch, cfg: &GradientCheckConfig) -> Result<f64> {
    batch.inputs.ncols().eq(&model.input_dim).then_some(()).ok_or(Error::DimensionMismatch {
        context: "gradient check inputs",
        expected: model.input_dim,
        actual: batch.inputs.ncols(),
    })?;
    let n = batch.inputs.nrows();
    let xs = batch.inputs.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = latent_noise(&mut rng, model.latent_dim, n);
    let (_, grads) = batch_loss_and_grad(model, &xs, &batch.weights, &noise, cfg.gamma, cfg.capacity);
    let analytic = grads.flatten();

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut index = 0;
    let tensors = probe.slices_mut().len();
    for k in 0..tensors {
        let len = probe.slices_mut()[k].len();
        for i in 0..len {
            let original = probe.slices_mut()[k][i];
            probe.slices_mut()[k][i] = original + cfg.step;
            let plus = batch_loss(&probe, &xs, &batch.weights, &noise, cfg.gamma, cfg.capacity).loss;
            probe.slices_mut()[k][i] = original - cfg.step;
            let minus = batch_loss(&probe, &xs, &batch.weights, &noise, cfg.gamma, cfg.capacity).loss;
            probe.slices_mut()[k][i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[index];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
            index += 1;
        }
    }
    Ok(worst)
}
