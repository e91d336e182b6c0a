//! The pattern network: a convolutional encoder feeding a BinConcrete
//! latent, a kernel-bank decoder, the training loop, and subsequence
//! assignment.
//!
//! The encoder stacks three 1-D convolutions (12, 24, 32 feature maps,
//! kernel width 3, a 2/2 max-pool after the second) and maps the resulting
//! feature map through two softplus heads to the positive vectors whose
//! ratio is the posterior location. The decoder is a bank of `k` kernels of
//! length `m`; reconstruction is the latent-weighted sum of the kernels, so
//! a trained bank *is* the discovered pattern set.

mod checkpoint;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binconcrete::{self, BinConcreteParams, KlMode, DEFAULT_EPSILON};
use crate::data::{segment, TimeSeries, Window};
use crate::error::{Error, Result};
use crate::eval::hoyer_sparsity;
use crate::tensor::{adam_step, AdamParams, AdamState, Tape, Tensor};

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct T2PConfig {
    pub n_patterns: usize,
    /// Window size; also the length of every learned pattern.
    pub pattern_len: usize,
    pub prior_location: f64,
    /// Posterior temperature.
    pub lambda1: f64,
    /// Prior temperature.
    pub lambda2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub kl_mode: KlMode,
    /// Monte-Carlo samples per KL evaluation.
    pub mc_samples: usize,
    pub epsilon: f64,
}

impl Default for T2PConfig {
    fn default() -> Self {
        T2PConfig {
            n_patterns: 4,
            pattern_len: 100,
            prior_location: 0.8,
            lambda1: 0.83,
            lambda2: 0.21,
            epochs: 1000,
            learning_rate: 1e-3,
            batch_size: 8,
            seed: 0,
            kl_mode: KlMode::PosteriorSampled,
            mc_samples: 10,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl T2PConfig {
    /// Named presets matching the published experiment settings.
    pub fn preset(name: &str) -> Result<T2PConfig> {
        let base = T2PConfig::default();
        let cfg = match name {
            "sy4" => base,
            // SY10 embeds ten patterns; recall 1.0 needs k = 10.
            "sy10" => T2PConfig { n_patterns: 10, ..base },
            "vital-sign" => T2PConfig {
                n_patterns: 2,
                pattern_len: 850,
                lambda2: 0.23,
                ..base
            },
            "audio-mnist" => T2PConfig {
                n_patterns: 2,
                pattern_len: 8000,
                lambda2: 0.23,
                epochs: 2000,
                learning_rate: 1e-4,
                ..base
            },
            "ecg" => T2PConfig {
                n_patterns: 2,
                pattern_len: 96,
                lambda1: 0.91,
                lambda2: 0.25,
                epochs: 2000,
                ..base
            },
            "plane" => T2PConfig {
                n_patterns: 7,
                pattern_len: 144,
                prior_location: 0.92,
                lambda1: 0.90,
                lambda2: 0.10,
                epochs: 4000,
                ..base
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (known: sy4, sy10, vital-sign, audio-mnist, ecg, plane)"
                )))
            }
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_patterns == 0 {
            return Err(Error::Config("n_patterns must be positive".into()));
        }
        encoded_length(self.pattern_len)?;
        if !(self.prior_location > 0.0) {
            return Err(Error::Config("prior location must be positive".into()));
        }
        for (name, value) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {value}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn prior(&self) -> Result<Vec<BinConcreteParams>> {
        Ok(vec![
            BinConcreteParams::new(self.prior_location, self.lambda2)?;
            self.n_patterns
        ])
    }
}

/// Feature-map length after the encoder stack: two width-3 convolutions,
/// a 2/2 max-pool, then another width-3 convolution.
pub fn encoded_length(pattern_len: usize) -> Result<usize> {
    const MIN: usize = 10;
    if pattern_len < MIN {
        return Err(Error::Config(format!(
            "window length {pattern_len} too small; the encoder needs at least {MIN}"
        )));
    }
    Ok((pattern_len - 4) / 2 - 2)
}

/// Trainable parameters of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct T2PModel {
    pub config: T2PConfig,
    /// `[12, 1, 3]`
    pub conv1_w: Vec<f64>,
    /// `[24, 12, 3]`
    pub conv2_w: Vec<f64>,
    /// `[32, 24, 3]`
    pub conv3_w: Vec<f64>,
    /// `[k, 32 * encoded_length]`
    pub head_num_w: Vec<f64>,
    pub head_num_b: Vec<f64>,
    pub head_den_w: Vec<f64>,
    pub head_den_b: Vec<f64>,
    /// `[k, m]`: the pattern bank.
    pub bank: Vec<f64>,
}

/// Tape handles for one inserted copy of the parameters.
pub struct ParamHandles {
    pub conv1_w: Tensor,
    pub conv2_w: Tensor,
    pub conv3_w: Tensor,
    pub head_num_w: Tensor,
    pub head_num_b: Tensor,
    pub head_den_w: Tensor,
    pub head_den_b: Tensor,
    pub bank: Tensor,
}

impl ParamHandles {
    pub fn all(&self) -> [Tensor; 8] {
        [
            self.conv1_w,
            self.conv2_w,
            self.conv3_w,
            self.head_num_w,
            self.head_num_b,
            self.head_den_w,
            self.head_den_b,
            self.bank,
        ]
    }
}

const CONV1_MAPS: usize = 12;
const CONV2_MAPS: usize = 24;
const CONV3_MAPS: usize = 32;
const KERNEL_WIDTH: usize = 3;

impl T2PModel {
    /// Initialize with uniform weights in +-1/sqrt(fan_in) per layer.
    pub fn init(config: &T2PConfig, rng: &mut impl Rng) -> Result<T2PModel> {
        config.validate()?;
        let k = config.n_patterns;
        let m = config.pattern_len;
        let enc = encoded_length(m)?;
        let features = CONV3_MAPS * enc;
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        Ok(T2PModel {
            conv1_w: draw(CONV1_MAPS * KERNEL_WIDTH, KERNEL_WIDTH),
            conv2_w: draw(CONV2_MAPS * CONV1_MAPS * KERNEL_WIDTH, CONV1_MAPS * KERNEL_WIDTH),
            conv3_w: draw(CONV3_MAPS * CONV2_MAPS * KERNEL_WIDTH, CONV2_MAPS * KERNEL_WIDTH),
            head_num_w: draw(k * features, features),
            head_num_b: draw(k, features),
            head_den_w: draw(k * features, features),
            head_den_b: draw(k, features),
            bank: draw(k * m, k),
            config: config.clone(),
        })
    }

    fn shapes(&self) -> [(&'static str, Vec<usize>); 8] {
        let k = self.config.n_patterns;
        let m = self.config.pattern_len;
        let enc = (m - 4) / 2 - 2;
        let features = CONV3_MAPS * enc;
        [
            ("conv1_w", vec![CONV1_MAPS, 1, KERNEL_WIDTH]),
            ("conv2_w", vec![CONV2_MAPS, CONV1_MAPS, KERNEL_WIDTH]),
            ("conv3_w", vec![CONV3_MAPS, CONV2_MAPS, KERNEL_WIDTH]),
            ("head_num_w", vec![k, features]),
            ("head_num_b", vec![k]),
            ("head_den_w", vec![k, features]),
            ("head_den_b", vec![k]),
            ("bank", vec![k, m]),
        ]
    }

    fn arrays(&self) -> [&Vec<f64>; 8] {
        [
            &self.conv1_w,
            &self.conv2_w,
            &self.conv3_w,
            &self.head_num_w,
            &self.head_num_b,
            &self.head_den_w,
            &self.head_den_b,
            &self.bank,
        ]
    }

    fn arrays_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv2_w,
            &mut self.conv3_w,
            &mut self.head_num_w,
            &mut self.head_num_b,
            &mut self.head_den_w,
            &mut self.head_den_b,
            &mut self.bank,
        ]
    }

    /// All parameters as one flat vector (documented array order).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for a in self.arrays() {
            out.extend_from_slice(a);
        }
        out
    }

    /// Rebuild a model from a flat vector produced by [`T2PModel::to_flat`].
    pub fn from_flat(config: &T2PConfig, flat: &[f64]) -> Result<T2PModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = T2PModel::init(config, &mut rng)?;
        let expected: usize = model.arrays().iter().map(|a| a.len()).sum();
        if flat.len() != expected {
            return Err(Error::Dimension(format!(
                "flat parameter vector has {} entries, model needs {expected}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for a in model.arrays_mut() {
            let n = a.len();
            a.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(model)
    }

    /// Insert the parameters into a tape, trainable or frozen.
    pub fn insert_params(&self, tape: &mut Tape, trainable: bool) -> Result<ParamHandles> {
        let shapes = self.shapes();
        let arrays = self.arrays();
        let mut handles = Vec::with_capacity(8);
        for ((_, shape), values) in shapes.iter().zip(arrays.iter()) {
            let t = if trainable {
                tape.param(shape, values)?
            } else {
                tape.constant(shape, values)?
            };
            handles.push(t);
        }
        Ok(ParamHandles {
            conv1_w: handles[0],
            conv2_w: handles[1],
            conv3_w: handles[2],
            head_num_w: handles[3],
            head_num_b: handles[4],
            head_den_w: handles[5],
            head_den_b: handles[6],
            bank: handles[7],
        })
    }

    /// Encoder: window `[1, m]` to the two positive head vectors.
    pub fn encode(&self, tape: &mut Tape, params: &ParamHandles, x: Tensor) -> Result<(Tensor, Tensor)> {
        let m = self.config.pattern_len;
        if tape.value(x).len() != m {
            return Err(Error::Dimension(format!(
                "encode: window has {} samples, model expects {m}",
                tape.value(x).len()
            )));
        }
        let c1 = tape.conv1d(x, params.conv1_w, 1, 0)?;
        let h1 = tape.relu(c1);
        let c2 = tape.conv1d(h1, params.conv2_w, 1, 0)?;
        let h2 = tape.relu(c2);
        let pooled = tape.maxpool1d(h2, 2, 2)?;
        let c3 = tape.conv1d(pooled, params.conv3_w, 1, 0)?;
        let h3 = tape.relu(c3);
        let num_pre = tape.dense(h3, params.head_num_w, params.head_num_b)?;
        let den_pre = tape.dense(h3, params.head_den_w, params.head_den_b)?;
        // softplus keeps the heads positive; the 1e-6 shift keeps the
        // BinConcrete location strictly positive even when softplus
        // underflows.
        let num_sp = tape.softplus(num_pre);
        let den_sp = tape.softplus(den_pre);
        let num = tape.affine(num_sp, 1.0, 1e-6);
        let den = tape.affine(den_sp, 1.0, 1e-6);
        Ok((num, den))
    }

    /// Convenience: encode a plain window without keeping the tape.
    pub fn encode_window(&self, window: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let params = self.insert_params(&mut tape, false)?;
        let x = tape.constant(&[1, window.len()], window)?;
        let (num, den) = self.encode(&mut tape, &params, x)?;
        Ok((tape.value(num).to_vec(), tape.value(den).to_vec()))
    }

    /// Decoder: latent `[k]` to the reconstruction `[m]`, linear in z.
    pub fn decode(&self, tape: &mut Tape, params: &ParamHandles, z: Tensor) -> Result<Tensor> {
        if tape.value(z).len() != self.config.n_patterns {
            return Err(Error::Dimension(format!(
                "decode: latent has {} entries, model expects {}",
                tape.value(z).len(),
                self.config.n_patterns
            )));
        }
        tape.mix_rows(z, params.bank)
    }

    /// Convenience: decode a plain latent vector.
    pub fn decode_latent(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let params = self.insert_params(&mut tape, false)?;
        let zt = tape.constant(&[z.len()], z)?;
        let out = self.decode(&mut tape, &params, zt)?;
        Ok(tape.value(out).to_vec())
    }

    /// The k learned patterns, in bank order.
    pub fn extract_patterns(&self) -> PatternSet {
        let m = self.config.pattern_len;
        let patterns = (0..self.config.n_patterns)
            .map(|i| self.bank[i * m..(i + 1) * m].to_vec())
            .collect();
        PatternSet { pattern_len: m, patterns }
    }

    /// Deterministic latent code for a window: the sampler evaluated at
    /// U = 0.5 elementwise.
    pub fn latent_deterministic(&self, window: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let params = self.insert_params(&mut tape, false)?;
        let x = tape.constant(&[1, window.len()], window)?;
        let (num, den) = self.encode(&mut tape, &params, x)?;
        let u = vec![0.5; self.config.n_patterns];
        let sample =
            binconcrete::sample(&mut tape, num, den, self.config.lambda1, &u, self.config.epsilon)?;
        Ok(tape.value(sample.z).to_vec())
    }

    /// Deterministic assignment: `(argmax z, max z)` with ties broken by
    /// the lowest index.
    pub fn assign(&self, window: &[f64]) -> Result<(usize, f64)> {
        let z = self.latent_deterministic(window)?;
        Ok(argmax_with_score(&z))
    }

    /// Segment a series into non-overlapping windows and assign each one.
    pub fn summarize(&self, series: &TimeSeries) -> Result<Summary> {
        let m = self.config.pattern_len;
        let seg = segment(series, m)?;
        let bank = self.extract_patterns();
        let mut assignments = Vec::with_capacity(seg.windows.len());
        for (index, window) in seg.windows.iter().enumerate() {
            let (pattern_id, score) = self.assign(&window.values)?;
            let kernel = &bank.patterns[pattern_id];
            let recon_mse = window
                .values
                .iter()
                .zip(kernel)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / m as f64;
            assignments.push(WindowAssignment {
                index,
                start: window.start,
                pattern_id,
                score,
                recon_mse,
                label: window.label,
            });
        }
        Ok(Summary {
            n_patterns: self.config.n_patterns,
            window_len: m,
            series_len: series.len(),
            remainder: seg.remainder,
            assignments,
        })
    }

    /// Save the checkpoint (versioned binary, little-endian f64 arrays).
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        checkpoint::save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<T2PModel> {
        checkpoint::load(path.as_ref())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint::to_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<T2PModel> {
        checkpoint::from_bytes(bytes)
    }
}

pub(crate) fn argmax_with_score(z: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in z.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    (best, best_v)
}

/// The learned pattern kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternSet {
    pub pattern_len: usize,
    pub patterns: Vec<Vec<f64>>,
}

/// Per-window pattern assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowAssignment {
    pub index: usize,
    pub start: usize,
    pub pattern_id: usize,
    /// Max latent activation, in [0, 1].
    pub score: f64,
    /// MSE between the window and its assigned kernel.
    pub recon_mse: f64,
    /// Ground-truth window label when the series carried labels.
    pub label: Option<usize>,
}

/// Assignment map for a whole series.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub n_patterns: usize,
    pub window_len: usize,
    pub series_len: usize,
    /// Trailing samples not covered by any window.
    pub remainder: usize,
    pub assignments: Vec<WindowAssignment>,
}

impl Summary {
    pub fn pattern_ids(&self) -> Vec<usize> {
        self.assignments.iter().map(|a| a.pattern_id).collect()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.assignments.iter().map(|a| a.label).collect()
    }
}

/// Per-epoch training statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub mse: f64,
    pub kl: f64,
    pub sparsity: f64,
}

pub type TrainTrace = Vec<EpochStats>;

/// Pre-drawn noise for one window's loss term, so gradient checks can
/// freeze the stochastic inputs.
#[derive(Clone, Debug)]
pub struct WindowNoise {
    /// k uniforms for the reconstruction draw.
    pub recon: Vec<f64>,
    /// samples * k uniforms for the KL estimator.
    pub kl: Vec<f64>,
}

pub fn draw_window_noise(config: &T2PConfig, rng: &mut impl Rng) -> WindowNoise {
    let k = config.n_patterns;
    WindowNoise {
        recon: binconcrete::draw_open_unit(rng, k),
        kl: binconcrete::draw_open_unit(rng, config.mc_samples * k),
    }
}

/// Scalar pieces of one evaluated batch loss.
pub struct LossBreakdown {
    pub total: Tensor,
    pub loss: f64,
    pub mse: f64,
    pub kl: f64,
    /// Latent draw per window, in batch order.
    pub latents: Vec<Vec<f64>>,
}

/// Mean over the batch of `MSE(x, x_hat) + KL`, built on the given tape.
pub fn batch_loss(
    model: &T2PModel,
    tape: &mut Tape,
    params: &ParamHandles,
    batch: &[&[f64]],
    noise: &[WindowNoise],
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Contract("batch_loss: empty batch".into()));
    }
    if batch.len() != noise.len() {
        return Err(Error::Contract(format!(
            "batch_loss: {} windows but {} noise draws",
            batch.len(),
            noise.len()
        )));
    }
    let config = &model.config;
    let prior = config.prior()?;
    let m = config.pattern_len;
    let mut total: Option<Tensor> = None;
    let mut mse_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut latents = Vec::with_capacity(batch.len());
    for (window, noise) in batch.iter().zip(noise) {
        if window.len() != m {
            return Err(Error::Dimension(format!(
                "batch_loss: window has {} samples, model expects {m}",
                window.len()
            )));
        }
        let x = tape.constant(&[1, m], window)?;
        let (num, den) = model.encode(tape, params, x)?;
        let sample =
            binconcrete::sample(tape, num, den, config.lambda1, &noise.recon, config.epsilon)?;
        let recon = model.decode(tape, params, sample.z)?;
        let target = tape.constant(&[m], window)?;
        let diff = tape.sub(recon, target)?;
        let sq = tape.mul(diff, diff)?;
        let mse = tape.mean(sq)?;
        let location = tape.div(num, den)?;
        let kl = binconcrete::mc_kl_with_uniforms(
            tape,
            location,
            config.lambda1,
            &prior,
            &noise.kl,
            config.kl_mode,
            config.epsilon,
        )?;
        let window_loss = tape.add(mse, kl)?;
        mse_sum += tape.scalar_value(mse);
        kl_sum += tape.scalar_value(kl);
        latents.push(tape.value(sample.z).to_vec());
        total = Some(match total {
            Some(acc) => tape.add(acc, window_loss)?,
            None => window_loss,
        });
    }
    let n = batch.len() as f64;
    let total = tape.affine(total.expect("non-empty batch"), 1.0 / n, 0.0);
    Ok(LossBreakdown {
        total,
        loss: tape.scalar_value(total),
        mse: mse_sum / n,
        kl: kl_sum / n,
        latents,
    })
}

/// Convenience: draw fresh noise and evaluate the batch loss as a value.
pub fn loss_value(
    model: &T2PModel,
    batch: &[&[f64]],
    config: &T2PConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("loss: empty batch".into()));
    }
    let noise: Vec<WindowNoise> = batch.iter().map(|_| draw_window_noise(config, rng)).collect();
    let mut tape = Tape::new();
    let params = model.insert_params(&mut tape, false)?;
    let breakdown = batch_loss(model, &mut tape, &params, batch, &noise)?;
    Ok(breakdown.loss)
}

/// Train a fresh model on pre-segmented windows.
///
/// Runs `config.epochs` epochs of Adam over shuffled batches. Fully
/// reproducible for a fixed seed: initialization, shuffling and every
/// noise draw come from one seeded generator, and batches are processed
/// sequentially.
pub fn train(windows: &[Window], config: &T2PConfig) -> Result<(T2PModel, TrainTrace)> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::Contract("train: need at least one window".into()));
    }
    let m = config.pattern_len;
    for w in windows {
        if w.values.len() != m {
            return Err(Error::Dimension(format!(
                "train: window at {} has {} samples, config says {m}",
                w.start,
                w.values.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = T2PModel::init(config, &mut rng)?;
    let adam = AdamParams::with_learning_rate(config.learning_rate);
    let mut states: Vec<AdamState> =
        model.arrays().iter().map(|a| AdamState::new(a.len())).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..windows.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut mse_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut latents: Vec<Vec<f64>> = vec![Vec::new(); windows.len()];
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[f64]> =
                chunk.iter().map(|&i| windows[i].values.as_slice()).collect();
            let noise: Vec<WindowNoise> =
                chunk.iter().map(|_| draw_window_noise(config, &mut rng)).collect();
            let mut tape = Tape::new();
            let params = model.insert_params(&mut tape, true)?;
            let breakdown = batch_loss(&model, &mut tape, &params, &batch, &noise)?;
            if !breakdown.loss.is_finite() {
                return Err(Error::Numerical {
                    epoch,
                    learning_rate: config.learning_rate,
                    message: "loss became non-finite".into(),
                });
            }
            tape.backward(breakdown.total)?;
            let handles = params.all();
            for ((handle, state), values) in
                handles.iter().zip(states.iter_mut()).zip(model.arrays_mut())
            {
                let grad = tape.grad(*handle).to_vec();
                adam_step(&adam, state, values, &grad)?;
            }
            let weight = chunk.len() as f64;
            loss_sum += breakdown.loss * weight;
            mse_sum += breakdown.mse * weight;
            kl_sum += breakdown.kl * weight;
            for (&i, z) in chunk.iter().zip(breakdown.latents) {
                latents[i] = z;
            }
        }
        let n = windows.len() as f64;
        let sparsity = if config.n_patterns >= 2 && windows.len() >= 2 {
            hoyer_sparsity(&latents)?
        } else {
            0.0
        };
        trace.push(EpochStats {
            epoch,
            loss: loss_sum / n,
            mse: mse_sum / n,
            kl: kl_sum / n,
            sparsity,
        });
    }
    Ok((model, trace))
}

/// Segment a labeled series and train on its windows.
pub fn train_on_series(series: &TimeSeries, config: &T2PConfig) -> Result<(T2PModel, TrainTrace)> {
    let seg = segment(series, config.pattern_len)?;
    train(&seg.windows, config)
}
