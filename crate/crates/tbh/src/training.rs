//! Losses, the gradient path through the binary bottleneck, the alternating
//! optimization loop, and checkpointing.
//!
//! One iteration runs a *discriminating* step (updates the discriminator
//! scope phi from `L_D`) followed by an *auto-encoding* step (updates the
//! encoder/GCN/decoder scope theta from `L_AE`), reusing the same stochastic
//! draws. The two parameter scopes never overlap.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diffcore::{AdamScope, Mat, Scalar};
use crate::error::{Error, Result};
use crate::model::{
    sample_eps, sample_priors, BatchLatents, DiscCache, ModelConfig, TbhModel, Variant,
    VariantCache,
};

/// Inputs to `log` are clamped here to avoid infinities.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the regularization terms (default 1).
    pub lambda: f64,
    /// Mini-batch size (default 400).
    pub batch_size: usize,
    /// Adam learning rate (default 1e-4).
    pub learning_rate: f64,
    /// Iteration cap T.
    pub max_iterations: u64,
    pub seed: u64,
    /// Emit one log record every this many iterations.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            batch_size: 400,
            learning_rate: 1e-4,
            max_iterations: 10_000,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        let min_batch = if model.variant == Variant::SingleBottleneck {
            1
        } else {
            // A batch-wise graph needs at least two vertices.
            2
        };
        if self.batch_size < min_batch {
            return Err(Error::Config(format!(
                "batch_size must be >= {min_batch} for variant {}",
                model.variant
            )));
        }
        Ok(())
    }
}

/// Identity pass-through surrogate for the gradient across the sampled
/// binary code: the upstream gradient w.r.t. `B` is forwarded to the
/// encoder probabilities unchanged. Single-sample Monte Carlo realization
/// of the distributional-derivative estimator.
pub fn backward_through_binary<F: Scalar>(upstream_grad_wrt_binary: &Mat<F>) -> Mat<F> {
    upstream_grad_wrt_binary.clone()
}

fn clamped_log<F: Scalar>(v: F) -> F {
    v.max(F::from_f64(LOG_CLAMP)).ln()
}

/// The auto-encoding objective, split into its parts.
#[derive(Debug, Clone, Copy)]
pub struct AeLoss<F> {
    pub total: F,
    pub recon: F,
    pub regularizer: F,
}

/// Forward state of the regularizer terms, needed by the backward pass.
pub struct AeRegCache<F: Scalar> {
    d1_out: Option<(Mat<F>, DiscCache<F>)>,
    d2_out: Option<(Mat<F>, DiscCache<F>)>,
}

/// Whether the variant uses the adversarial regularizer, an explicit
/// penalty, or none.
fn uses_adversarial_reg(variant: Variant) -> bool {
    !matches!(variant, Variant::ExplicitReg | Variant::NoReg)
}

/// Computes `L_AE` for the given latents. Mean over the batch of
/// `(1/2M) ||x - xhat||^2 - lambda log d1(b) - lambda log d2(z')`, with the
/// variant adjustments for explicit/no regularization and the quantization
/// penalty of the no-stochastic baseline.
pub fn loss_ae<F: Scalar>(
    model: &TbhModel<F>,
    x: &Mat<F>,
    latents: &BatchLatents<F>,
    lambda: F,
) -> Result<(AeLoss<F>, AeRegCache<F>)> {
    let nb = F::from_f64(x.nrows() as f64);
    let m = F::from_f64(model.config.code_bits as f64);
    let two = F::from_f64(2.0);

    let diff = &latents.xhat - x;
    let recon = diff.iter().map(|&v| v * v).fold(F::zero(), |a, b| a + b) / (two * m * nb);

    let mut regularizer = F::zero();
    let mut cache = AeRegCache {
        d1_out: None,
        d2_out: None,
    };
    match model.config.variant {
        Variant::NoReg => {}
        Variant::ExplicitReg => {
            // Entropy penalty on the code probabilities (confident bits
            // score 0) plus an l2 penalty on z'.
            let probs = &latents.probs;
            let mut entropy = F::zero();
            for &p in probs.iter() {
                entropy = entropy - p * clamped_log(p)
                    - (F::one() - p) * clamped_log(F::one() - p);
            }
            entropy = entropy / (nb * m);
            let zp = latents.zp.as_ref().expect("explicit_reg has z'");
            let l2 = zp.iter().map(|&v| v * v).fold(F::zero(), |a, b| a + b) / nb;
            regularizer = lambda * (entropy + l2);
        }
        _ => {
            let (o1, c1) = model.d1.forward(&latents.binary)?;
            let mut term = F::zero();
            for &o in o1.iter() {
                term = term - clamped_log(o);
            }
            cache.d1_out = Some((o1, c1));
            if let (Some(d2), Some(zp)) = (&model.d2, &latents.zp) {
                let (o2, c2) = d2.forward(zp)?;
                for &o in o2.iter() {
                    term = term - clamped_log(o);
                }
                cache.d2_out = Some((o2, c2));
            }
            regularizer = lambda * term / nb;
        }
    }

    let mut total = recon + regularizer;
    if model.config.variant == Variant::NoStochastic {
        // Bit quantization penalty, weight 1.
        let q = latents
            .probs
            .iter()
            .map(|&p| {
                let d = p.min(F::one() - p);
                d * d
            })
            .fold(F::zero(), |a, b| a + b)
            / (nb * m);
        total = total + q;
    }

    Ok((
        AeLoss {
            total,
            recon,
            regularizer,
        },
        cache,
    ))
}

/// Backpropagates `L_AE` into the theta scope. Discriminators are traversed
/// input-only so the phi scope stays untouched. When `freeze_binary` is
/// set the sampled code is treated as a constant (no pass-through into the
/// encoder probabilities); this is the regime finite-difference checks run
/// in, since the surrogate path has no finite-difference counterpart.
pub fn backward_ae<F: Scalar>(
    model: &mut TbhModel<F>,
    x: &Mat<F>,
    latents: &BatchLatents<F>,
    vcache: &VariantCache<F>,
    reg_cache: &AeRegCache<F>,
    lambda: F,
    freeze_binary: bool,
) -> Result<()> {
    let nb = F::from_f64(x.nrows() as f64);
    let m = F::from_f64(model.config.code_bits as f64);
    let variant = model.config.variant;

    // Reconstruction: d/dxhat of (1/(2M N_B)) ||x - xhat||^2.
    let d_xhat = (&latents.xhat - x).mapv(|v| v / (nb * m));
    let d_h = model.dec2.backward(&d_xhat, &vcache.dec2);
    let d_dec_in = model.dec1.backward(&d_h, &vcache.dec1);

    // Regularizer contributions.
    let mut d_b_extra: Option<Mat<F>> = None;
    let mut d_zp_extra: Option<Mat<F>> = None;
    let mut d_probs_extra: Option<Mat<F>> = None;
    match variant {
        Variant::NoReg => {}
        Variant::ExplicitReg => {
            let probs = &latents.probs;
            let floor = F::from_f64(LOG_CLAMP);
            let scale = lambda / (nb * m);
            d_probs_extra = Some(probs.mapv(|p| {
                let p = p.max(floor).min(F::one() - floor);
                scale * ((F::one() - p).ln() - p.ln())
            }));
            let zp = latents.zp.as_ref().unwrap();
            d_zp_extra = Some(zp.mapv(|v| (lambda + lambda) * v / nb));
        }
        _ => {
            if let Some((o1, c1)) = &reg_cache.d1_out {
                let up = o1.mapv(|o| {
                    if o <= F::from_f64(LOG_CLAMP) {
                        F::zero()
                    } else {
                        -lambda / (nb * o)
                    }
                });
                d_b_extra = Some(model.d1.backward_input_only(&up, c1));
            }
            if let (Some(d2), Some((o2, c2))) = (&model.d2, &reg_cache.d2_out) {
                let up = o2.mapv(|o| {
                    if o <= F::from_f64(LOG_CLAMP) {
                        F::zero()
                    } else {
                        -lambda / (nb * o)
                    }
                });
                d_zp_extra = Some(d2.backward_input_only(&up, c2));
            }
        }
    }
    if variant == Variant::NoStochastic {
        let half = F::from_f64(0.5);
        let q_grad = latents.probs.mapv(|p| {
            let (d, sign) = if p <= half {
                (p, F::one())
            } else {
                (F::one() - p, -F::one())
            };
            (d + d) * sign / (nb * m)
        });
        d_probs_extra = Some(match d_probs_extra {
            Some(g) => g + q_grad,
            None => q_grad,
        });
    }

    // Route the decoder-input gradient through the mixing structure down to
    // d_b (gradient w.r.t. the code matrix) and d_z.
    let mut d_b: Mat<F>;
    let mut d_z: Option<Mat<F>> = None;
    match variant {
        Variant::SingleBottleneck => {
            d_b = d_dec_in;
        }
        Variant::AttentionEquilibrium => {
            let mut d_zp = d_dec_in;
            if let Some(extra) = &d_zp_extra {
                d_zp += extra;
            }
            let cache = vcache.attn.as_ref().unwrap();
            let adjacency = latents.adjacency.as_ref().unwrap();
            let (dz, d_adj) = crate::model::attention_backward(&d_zp, adjacency, cache);
            d_z = Some(dz);
            d_b = crate::model::adjacency_backward(&d_adj, &latents.binary);
        }
        Variant::Swapped | Variant::FixedGraph => {
            let mut d_zp = d_dec_in;
            if let Some(extra) = &d_zp_extra {
                d_zp += extra;
            }
            let cache = vcache.gcn.as_ref().unwrap();
            let w = model.gcn_weight.as_mut().unwrap();
            // The feature-space adjacency is treated as a constant: its
            // gradient is discarded.
            let (db, _d_adj) =
                crate::model::gcn_backward(&d_zp, cache, &w.value.clone(), Some(&mut w.grad));
            d_b = db;
        }
        _ => {
            let mut d_zp = d_dec_in;
            if let Some(extra) = &d_zp_extra {
                d_zp += extra;
            }
            let cache = vcache.gcn.as_ref().unwrap();
            let w_value = model.gcn_weight.as_ref().unwrap().value.clone();
            let w = model.gcn_weight.as_mut().unwrap();
            let (dz, d_adj) =
                crate::model::gcn_backward(&d_zp, cache, &w_value, Some(&mut w.grad));
            d_z = Some(dz);
            d_b = crate::model::adjacency_backward(&d_adj, &latents.binary);
        }
    }
    if let Some(extra) = &d_b_extra {
        d_b += extra;
    }

    // Across the stochastic neuron: identity pass-through (or the direct
    // path when the code *is* the probability vector).
    let mut d_probs = if freeze_binary && variant != Variant::NoStochastic {
        Mat::zeros(latents.probs.raw_dim())
    } else {
        backward_through_binary(&d_b)
    };
    if let Some(extra) = &d_probs_extra {
        d_probs += extra;
    }

    // Encoder heads share the first layer.
    let mut d_shared_out = model.bin_head.backward(&d_probs, &vcache.bin_head);
    if let (Some(head), Some(dz), Some(cache)) =
        (&mut model.cont_head, &d_z, &vcache.cont_head)
    {
        d_shared_out += &head.backward(dz, cache);
    }
    model.shared.backward(&d_shared_out, &vcache.shared);
    Ok(())
}

/// The discriminating objective
/// `-(lambda/N_B) sum [log d1(y_b) + log d2(y_c) + log(1 - d1(b)) + log(1 - d2(z'))]`.
///
/// Model samples are treated as constants: no gradient reaches the
/// auto-encoder. When `accumulate` is set, phi gradients are accumulated.
pub fn loss_d<F: Scalar>(
    model: &mut TbhModel<F>,
    binary: &Mat<F>,
    zp: Option<&Mat<F>>,
    prior_b: &Mat<F>,
    prior_c: Option<&Mat<F>>,
    lambda: F,
    accumulate: bool,
) -> Result<F> {
    let nb = F::from_f64(binary.nrows() as f64);
    let floor = F::from_f64(LOG_CLAMP);
    let mut total = F::zero();

    let one_disc = |d: &mut crate::model::Discriminator<F>,
                        real: &Mat<F>,
                        fake: &Mat<F>|
     -> Result<F> {
        let (o_real, c_real) = d.forward(real)?;
        let (o_fake, c_fake) = d.forward(fake)?;
        let mut s = F::zero();
        for &o in o_real.iter() {
            s = s - clamped_log(o);
        }
        for &o in o_fake.iter() {
            s = s - clamped_log(F::one() - o);
        }
        if accumulate {
            let up_real = o_real.mapv(|o| {
                if o <= floor {
                    F::zero()
                } else {
                    -lambda / (nb * o)
                }
            });
            let up_fake = o_fake.mapv(|o| {
                if F::one() - o <= floor {
                    F::zero()
                } else {
                    lambda / (nb * (F::one() - o))
                }
            });
            d.backward(&up_real, &c_real);
            d.backward(&up_fake, &c_fake);
        }
        Ok(s)
    };

    total = total + one_disc(&mut model.d1, prior_b, binary)?;
    if let Some(zp) = zp {
        if let Some(prior_c) = prior_c {
            let mut d2 = model.d2.take().expect("d2 present when z' exists");
            let r = one_disc(&mut d2, prior_c, zp);
            model.d2 = Some(d2);
            total = total + r?;
        }
    }
    Ok(lambda * total / nb)
}

#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub l_ae: f64,
    pub recon: f64,
    pub l_d: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainLogRecord {
    pub iteration: u64,
    pub l_ae: f64,
    pub recon: f64,
    pub l_d: f64,
}

/// One training run: model, two optimizer scopes, RNG stream.
pub struct Trainer {
    pub model: TbhModel<f32>,
    pub config: TrainConfig,
    pub theta_opt: AdamScope,
    pub phi_opt: AdamScope,
    pub iteration: u64,
    pub rng: ChaCha20Rng,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate(&model_config)?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let model = TbhModel::new(model_config, &mut rng)?;
        Ok(Trainer {
            model,
            config,
            theta_opt: AdamScope::new(),
            phi_opt: AdamScope::new(),
            iteration: 0,
            rng,
        })
    }

    /// One iteration: discriminating step (phi), then auto-encoding step
    /// (theta), sharing one set of eps draws.
    pub fn train_step(&mut self, batch: &Mat<f32>) -> Result<StepStats> {
        if batch.nrows() != self.config.batch_size {
            return Err(Error::Config(format!(
                "batch has {} rows, expected {}",
                batch.nrows(),
                self.config.batch_size
            )));
        }
        let nb = batch.nrows();
        let m = self.model.config.code_bits;
        let lambda = self.config.lambda as f32;
        let lr = self.config.learning_rate as f32;
        let variant = self.model.config.variant;

        let eps = sample_eps::<f32, _>(nb, m, &mut self.rng);
        let adversarial = uses_adversarial_reg(variant);
        let priors = if adversarial {
            let zp_dim = self.model.config.zp_dim().unwrap_or(0);
            let (yb, yc) = sample_priors::<f32, _>(nb, m, zp_dim.max(1), &mut self.rng);
            Some((yb, yc))
        } else {
            None
        };

        let (latents, vcache) = self.model.forward_variant(batch, &eps)?;

        // Discriminating step.
        let l_d = if let Some((yb, yc)) = &priors {
            let zp = latents.zp.as_ref();
            let yc_opt = zp.is_some().then_some(yc);
            let value = loss_d(&mut self.model, &latents.binary, zp, yb, yc_opt, lambda, true)?;
            let mut phi = self.model.phi_parameters_mut();
            self.phi_opt.step(&mut phi, lr);
            value as f64
        } else {
            0.0
        };

        // Auto-encoding step (same eps; the forward pass is deterministic
        // given eps, so the cached latents are reused).
        let (parts, reg_cache) = loss_ae(&self.model, batch, &latents, lambda)?;
        backward_ae(
            &mut self.model,
            batch,
            &latents,
            &vcache,
            &reg_cache,
            lambda,
            false,
        )?;
        let mut theta = self.model.theta_parameters_mut();
        self.theta_opt.step(&mut theta, lr);

        let stats = StepStats {
            l_ae: parts.total as f64,
            recon: parts.recon as f64,
            l_d,
        };
        if !stats.l_ae.is_finite() || !stats.l_d.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at iteration {}: l_ae={} l_d={} (variant {variant}, lambda {lambda})",
                self.iteration, stats.l_ae, stats.l_d
            )));
        }
        self.iteration += 1;
        Ok(stats)
    }

    /// Runs until the iteration cap, drawing shuffled full batches per epoch
    /// (remainder rows dropped) and emitting periodic log records.
    pub fn train(
        &mut self,
        train_features: &Mat<f32>,
        mut sink: impl FnMut(&TrainLogRecord),
    ) -> Result<()> {
        let n = train_features.nrows();
        let nb = self.config.batch_size;
        if n < nb {
            return Err(Error::Config(format!(
                "training split has {n} rows, smaller than batch size {nb}"
            )));
        }
        let mut epoch = self.iteration / (n / nb) as u64;
        while self.iteration < self.config.max_iterations {
            let order = crate::data::epoch_shuffle(n, self.config.seed, epoch);
            for chunk in order.chunks_exact(nb) {
                if self.iteration >= self.config.max_iterations {
                    break;
                }
                let batch = train_features.select(Axis(0), chunk);
                let stats = self.train_step(&batch)?;
                let it = self.iteration; // already incremented
                if it % self.config.log_every.max(1) == 0
                    || it == self.config.max_iterations
                {
                    sink(&TrainLogRecord {
                        iteration: it,
                        l_ae: stats.l_ae,
                        recon: stats.recon,
                        l_d: stats.l_d,
                    });
                }
            }
            epoch += 1;
        }
        Ok(())
    }

    /// Serializes the full training state (versioned little-endian binary,
    /// magic "TBHC"), writing atomically via a temp file.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(file);
            self.write_checkpoint(&mut w)
                .map_err(|e| Error::io(&tmp, e))?;
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    fn write_checkpoint<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"TBHC")?;
        w.write_u32::<LittleEndian>(1)?;
        let header = CheckpointHeader {
            model_config: self.model.config.clone(),
            train_config: self.config.clone(),
            iteration: self.iteration,
            theta_steps: self.theta_opt.step_count,
            phi_steps: self.phi_opt.step_count,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        w.write_u32::<LittleEndian>(json.len() as u32)?;
        w.write_all(&json)?;

        let tensors = self.model.parameters();
        w.write_u32::<LittleEndian>(tensors.len() as u32)?;
        for t in tensors {
            w.write_u32::<LittleEndian>(t.name.len() as u32)?;
            w.write_all(t.name.as_bytes())?;
            w.write_u32::<LittleEndian>(2)?;
            w.write_u32::<LittleEndian>(t.value.nrows() as u32)?;
            w.write_u32::<LittleEndian>(t.value.ncols() as u32)?;
            for m in [&t.value, &t.adam_m, &t.adam_v] {
                for &v in m.iter() {
                    w.write_f32::<LittleEndian>(v)?;
                }
            }
        }

        // RNG state blob: seed (32) + stream (8) + word position (16).
        let mut blob = Vec::with_capacity(56);
        blob.extend_from_slice(&self.rng.get_seed());
        blob.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        blob.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        w.write_u32::<LittleEndian>(blob.len() as u32)?;
        w.write_all(&blob)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_checkpoint(&mut r).map_err(|e| match e {
            CheckpointReadError::Io(io) => Error::io(path, io),
            CheckpointReadError::Format(msg) => {
                Error::Format(format!("{}: {msg}", path.display()))
            }
        })
    }

    fn read_checkpoint<R: Read>(r: &mut R) -> std::result::Result<Trainer, CheckpointReadError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TBHC" {
            return Err(CheckpointReadError::Format("bad magic, expected TBHC".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != 1 {
            return Err(CheckpointReadError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let json_len = r.read_u32::<LittleEndian>()? as usize;
        let mut json = vec![0u8; json_len];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)
            .map_err(|e| CheckpointReadError::Format(format!("bad header: {e}")))?;

        let mut rng = ChaCha20Rng::seed_from_u64(header.train_config.seed);
        let mut model = TbhModel::new(header.model_config, &mut rng)
            .map_err(|e| CheckpointReadError::Format(e.to_string()))?;

        let count = r.read_u32::<LittleEndian>()? as usize;
        let mut params = model.parameters_mut_ordered();
        if count != params.len() {
            return Err(CheckpointReadError::Format(format!(
                "checkpoint has {count} tensors, model expects {}",
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let name_len = r.read_u32::<LittleEndian>()? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| CheckpointReadError::Format("non-utf8 tensor name".into()))?;
            if name != p.name {
                return Err(CheckpointReadError::Format(format!(
                    "tensor order mismatch: found '{name}', expected '{}'",
                    p.name
                )));
            }
            let rank = r.read_u32::<LittleEndian>()?;
            if rank != 2 {
                return Err(CheckpointReadError::Format(format!("rank {rank} != 2")));
            }
            let rows = r.read_u32::<LittleEndian>()? as usize;
            let cols = r.read_u32::<LittleEndian>()? as usize;
            if (rows, cols) != (p.value.nrows(), p.value.ncols()) {
                return Err(CheckpointReadError::Format(format!(
                    "tensor '{name}' shape {rows}x{cols} != expected {}x{}",
                    p.value.nrows(),
                    p.value.ncols()
                )));
            }
            for target in [&mut p.value, &mut p.adam_m, &mut p.adam_v] {
                for v in target.iter_mut() {
                    *v = r.read_f32::<LittleEndian>()?;
                }
            }
        }
        drop(params);

        let blob_len = r.read_u32::<LittleEndian>()? as usize;
        if blob_len != 56 {
            return Err(CheckpointReadError::Format(format!(
                "rng blob length {blob_len} != 56"
            )));
        }
        let mut blob = vec![0u8; blob_len];
        r.read_exact(&mut blob)?;
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&blob[..32]);
        let stream = u64::from_le_bytes(blob[32..40].try_into().unwrap());
        let word_pos = u128::from_le_bytes(blob[40..56].try_into().unwrap());
        let mut rng = ChaCha20Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        Ok(Trainer {
            model,
            config: header.train_config,
            theta_opt: AdamScope {
                step_count: header.theta_steps,
            },
            phi_opt: AdamScope {
                step_count: header.phi_steps,
            },
            iteration: header.iteration,
            rng,
        })
    }
}

impl TbhModel<f32> {
    /// Mutable tensors in the checkpoint's on-disk order (theta then phi).
    fn parameters_mut_ordered(&mut self) -> Vec<&mut crate::diffcore::ParameterTensor<f32>> {
        use crate::diffcore::HasParameters;
        self.parameters_mut()
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    model_config: ModelConfig,
    train_config: TrainConfig,
    iteration: u64,
    theta_steps: u64,
    phi_steps: u64,
}

enum CheckpointReadError {
    Io(std::io::Error),
    Format(String),
}

impl From<std::io::Error> for CheckpointReadError {
    fn from(e: std::io::Error) -> Self {
        CheckpointReadError::Io(e)
    }
}
