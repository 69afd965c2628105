//! The twin-bottleneck hashing network.
//!
//! An input batch is encoded into a binary code `b` (through a discrete
//! stochastic neuron) and a continuous latent `z`. The batch-wise adjacency
//! built from code Hamming distances steers one graph-convolution layer that
//! mixes the continuous latents before decoding. Two small discriminators
//! adversarially push `b` toward Bernoulli(0.5) bits and the mixed latent
//! `z'` toward U(0,1).
//!
//! The seven ablation variants from the component analysis are expressed as
//! structural configurations of the same network.

use ndarray::{Array1, Axis};
use rand::distributions::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::diffcore::{
    ensure_finite, sigmoid, Activation, DenseCache, DenseLayer, HasParameters, Mat,
    ParameterTensor, Scalar,
};
use crate::error::{Error, Result};

/// Structural variants: the full model plus the ablation baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    SingleBottleneck,
    Swapped,
    ExplicitReg,
    NoReg,
    NoStochastic,
    FixedGraph,
    AttentionEquilibrium,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Full,
        Variant::SingleBottleneck,
        Variant::Swapped,
        Variant::ExplicitReg,
        Variant::NoReg,
        Variant::NoStochastic,
        Variant::FixedGraph,
        Variant::AttentionEquilibrium,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SingleBottleneck => "single_bottleneck",
            Variant::Swapped => "swapped",
            Variant::ExplicitReg => "explicit_reg",
            Variant::NoReg => "no_reg",
            Variant::NoStochastic => "no_stochastic",
            Variant::FixedGraph => "fixed_graph",
            Variant::AttentionEquilibrium => "attention_equilibrium",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub code_bits: usize,
    pub latent_dim: usize,
    pub shared_hidden: usize,
    pub decoder_hidden: usize,
    pub discriminator_hidden: usize,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn new(input_dim: usize, code_bits: usize) -> Self {
        ModelConfig {
            input_dim,
            code_bits,
            latent_dim: 512,
            shared_hidden: 1024,
            decoder_hidden: 1024,
            discriminator_hidden: 256,
            variant: Variant::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.code_bits < 1 || self.latent_dim < 1 {
            return Err(Error::Config(
                "input_dim, code_bits and latent_dim must all be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Whether the continuous encoding head exists in this variant.
    pub fn has_cont_head(&self) -> bool {
        !matches!(
            self.variant,
            Variant::SingleBottleneck | Variant::FixedGraph
        )
    }

    /// Dimension of the mixed latent `z'` fed to the decoder, when present.
    pub fn zp_dim(&self) -> Option<usize> {
        match self.variant {
            Variant::SingleBottleneck => None,
            Variant::Swapped | Variant::FixedGraph => Some(self.code_bits),
            _ => Some(self.latent_dim),
        }
    }

    /// Input dimension of the GCN mixing layer, when a learned square
    /// weight is present.
    pub fn gcn_dim(&self) -> Option<usize> {
        match self.variant {
            Variant::SingleBottleneck | Variant::AttentionEquilibrium => None,
            Variant::Swapped | Variant::FixedGraph => Some(self.code_bits),
            _ => Some(self.latent_dim),
        }
    }

    pub fn decoder_in_dim(&self) -> usize {
        self.zp_dim().unwrap_or(self.code_bits)
    }
}

/// One latent-regularization discriminator: hidden ReLU layer then a single
/// sigmoid unit.
#[derive(Debug, Clone)]
pub struct Discriminator<F: Scalar> {
    pub hidden: DenseLayer<F>,
    pub output: DenseLayer<F>,
}

#[derive(Debug, Clone)]
pub struct DiscCache<F: Scalar> {
    pub hidden: DenseCache<F>,
    pub output: DenseCache<F>,
}

impl<F: Scalar> Discriminator<F> {
    pub fn new<R: Rng>(name: &str, in_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        Discriminator {
            hidden: DenseLayer::new(&format!("{name}.hidden"), in_dim, hidden_dim, Activation::Relu, rng),
            output: DenseLayer::new(&format!("{name}.out"), hidden_dim, 1, Activation::Sigmoid, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    /// Scores a batch of row vectors; output is `n x 1`, strictly in (0,1).
    pub fn forward(&self, rows: &Mat<F>) -> Result<(Mat<F>, DiscCache<F>)> {
        let (h, hidden) = self.hidden.forward(rows)?;
        let (o, output) = self.output.forward(&h)?;
        Ok((o, DiscCache { hidden, output }))
    }

    /// Full backward: accumulates this discriminator's own gradients.
    pub fn backward(&mut self, upstream: &Mat<F>, cache: &DiscCache<F>) -> Mat<F> {
        let dh = self.output.backward(upstream, &cache.output);
        self.hidden.backward(&dh, &cache.hidden)
    }

    /// Backward to the input only; discriminator parameters stay untouched.
    /// Used in the auto-encoding step where only the encoder scope learns.
    pub fn backward_input_only(&self, upstream: &Mat<F>, cache: &DiscCache<F>) -> Mat<F> {
        let dh = self.output.backward_input_only(upstream, &cache.output);
        self.hidden.backward_input_only(&dh, &cache.hidden)
    }
}

/// Per-batch latents from one forward pass.
///
/// `adjacency` is symmetric with unit diagonal and entries on the grid
/// `{0, 1/M, ..., 1}` whenever it is built from binary codes.
#[derive(Debug, Clone)]
pub struct BatchLatents<F: Scalar> {
    pub probs: Mat<F>,
    pub binary: Mat<F>,
    pub z: Option<Mat<F>>,
    pub adjacency: Option<Mat<F>>,
    pub zp: Option<Mat<F>>,
    pub xhat: Mat<F>,
}

#[derive(Debug, Clone)]
pub struct GcnCache<F: Scalar> {
    /// Symmetric-normalized adjacency `D^{-1/2} A D^{-1/2}`.
    pub norm_adj: Mat<F>,
    /// Row sums of A.
    pub degree: Array1<F>,
    /// `input . W`.
    pub input_w: Mat<F>,
    pub input: Mat<F>,
    pub pre_activation: Mat<F>,
    pub zp: Mat<F>,
}

#[derive(Debug, Clone)]
pub struct AttnCache<F: Scalar> {
    pub degree: Array1<F>,
    pub input: Mat<F>,
    pub zp: Mat<F>,
}

/// Layer caches from `forward_variant`, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct VariantCache<F: Scalar> {
    pub shared: DenseCache<F>,
    pub bin_head: DenseCache<F>,
    pub cont_head: Option<DenseCache<F>>,
    pub gcn: Option<GcnCache<F>>,
    pub attn: Option<AttnCache<F>>,
    pub dec1: DenseCache<F>,
    pub dec2: DenseCache<F>,
}

#[derive(Debug, Clone)]
pub struct TbhModel<F: Scalar> {
    pub config: ModelConfig,
    pub shared: DenseLayer<F>,
    pub bin_head: DenseLayer<F>,
    pub cont_head: Option<DenseLayer<F>>,
    pub gcn_weight: Option<ParameterTensor<F>>,
    pub dec1: DenseLayer<F>,
    pub dec2: DenseLayer<F>,
    pub d1: Discriminator<F>,
    pub d2: Option<Discriminator<F>>,
}

impl<F: Scalar> TbhModel<F> {
    /// Builds all layers in a fixed order so a seeded RNG yields
    /// reproducible initial weights.
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let shared = DenseLayer::new(
            "enc.shared",
            config.input_dim,
            config.shared_hidden,
            Activation::Relu,
            rng,
        );
        let bin_head = DenseLayer::new(
            "enc.bin",
            config.shared_hidden,
            config.code_bits,
            Activation::Sigmoid,
            rng,
        );
        let cont_head = config.has_cont_head().then(|| {
            DenseLayer::new(
                "enc.cont",
                config.shared_hidden,
                config.latent_dim,
                Activation::Relu,
                rng,
            )
        });
        let gcn_weight = config
            .gcn_dim()
            .map(|d| ParameterTensor::new("gcn.w", crate::diffcore::glorot_uniform(d, d, rng)));
        let dec1 = DenseLayer::new(
            "dec.hidden",
            config.decoder_in_dim(),
            config.decoder_hidden,
            Activation::Relu,
            rng,
        );
        let dec2 = DenseLayer::new(
            "dec.out",
            config.decoder_hidden,
            config.input_dim,
            Activation::Identity,
            rng,
        );
        let d1 = Discriminator::new("d1", config.code_bits, config.discriminator_hidden, rng);
        let d2 = config
            .zp_dim()
            .map(|d| Discriminator::new("d2", d, config.discriminator_hidden, rng));
        Ok(TbhModel {
            config,
            shared,
            bin_head,
            cont_head,
            gcn_weight,
            dec1,
            dec2,
            d1,
            d2,
        })
    }

    /// Shared layer plus both heads: probs in (0,1), z >= 0.
    pub fn encode(&self, x: &Mat<F>) -> Result<(Mat<F>, Option<Mat<F>>, EncodeCaches<F>)> {
        let (h, shared) = self.shared.forward(x)?;
        let (probs, bin_head) = self.bin_head.forward(&h)?;
        let (z, cont_head) = match &self.cont_head {
            Some(layer) => {
                let (z, c) = layer.forward(&h)?;
                (Some(z), Some(c))
            }
            None => (None, None),
        };
        Ok((
            probs,
            z,
            EncodeCaches {
                shared,
                bin_head,
                cont_head,
            },
        ))
    }

    /// Deterministic encoder probabilities for out-of-sample encoding.
    pub fn encode_probs(&self, x: &Mat<F>) -> Result<Mat<F>> {
        let (probs, _, _) = self.encode(x)?;
        Ok(probs)
    }

    /// Full forward pass of the configured variant.
    pub fn forward_variant(
        &self,
        x: &Mat<F>,
        eps: &Mat<F>,
    ) -> Result<(BatchLatents<F>, VariantCache<F>)> {
        let (probs, z, enc) = self.encode(x)?;
        let binary = if self.config.variant == Variant::NoStochastic {
            // Stochastic neuron deprecated: probabilities flow forward.
            probs.clone()
        } else {
            sample_binary(&probs, eps)?
        };

        let mut adjacency = None;
        let mut gcn_cache = None;
        let mut attn_cache = None;
        let (zp, decoder_in): (Option<Mat<F>>, Mat<F>) = match self.config.variant {
            Variant::SingleBottleneck => (None, binary.clone()),
            Variant::AttentionEquilibrium => {
                let a = build_adjacency(&binary);
                let (zp, cache) = attention_forward(z.as_ref().unwrap(), &a)?;
                adjacency = Some(a);
                attn_cache = Some(cache);
                (Some(zp.clone()), zp)
            }
            Variant::Swapped => {
                let a = cosine_adjacency(z.as_ref().unwrap());
                let w = self.gcn_weight.as_ref().unwrap();
                let (zp, cache) = gcn_forward(&binary, &a, &w.value)?;
                adjacency = Some(a);
                gcn_cache = Some(cache);
                (Some(zp.clone()), zp)
            }
            Variant::FixedGraph => {
                let a = cosine_adjacency(x);
                let w = self.gcn_weight.as_ref().unwrap();
                let (zp, cache) = gcn_forward(&binary, &a, &w.value)?;
                adjacency = Some(a);
                gcn_cache = Some(cache);
                (Some(zp.clone()), zp)
            }
            // Full, ExplicitReg, NoReg, NoStochastic share the full pipeline.
            _ => {
                let a = build_adjacency(&binary);
                let w = self.gcn_weight.as_ref().unwrap();
                let (zp, cache) = gcn_forward(z.as_ref().unwrap(), &a, &w.value)?;
                adjacency = Some(a);
                gcn_cache = Some(cache);
                (Some(zp.clone()), zp)
            }
        };

        let (h, dec1) = self.dec1.forward(&decoder_in)?;
        let (xhat, dec2) = self.dec2.forward(&h)?;
        Ok((
            BatchLatents {
                probs,
                binary,
                z,
                adjacency,
                zp,
                xhat,
            },
            VariantCache {
                shared: enc.shared,
                bin_head: enc.bin_head,
                cont_head: enc.cont_head,
                gcn: gcn_cache,
                attn: attn_cache,
                dec1,
                dec2,
            },
        ))
    }

    /// Auto-encoder scope (theta): encoder, GCN weight, decoder.
    pub fn theta_parameters_mut(&mut self) -> Vec<&mut ParameterTensor<F>> {
        let mut out = vec![
            &mut self.shared.weight,
            &mut self.shared.bias,
            &mut self.bin_head.weight,
            &mut self.bin_head.bias,
        ];
        if let Some(l) = &mut self.cont_head {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        if let Some(w) = &mut self.gcn_weight {
            out.push(w);
        }
        out.push(&mut self.dec1.weight);
        out.push(&mut self.dec1.bias);
        out.push(&mut self.dec2.weight);
        out.push(&mut self.dec2.bias);
        out
    }

    /// Immutable view of every parameter, theta scope then phi scope, in
    /// the same stable order as the `_mut` accessors.
    pub fn parameters(&self) -> Vec<&ParameterTensor<F>> {
        let mut out = vec![
            &self.shared.weight,
            &self.shared.bias,
            &self.bin_head.weight,
            &self.bin_head.bias,
        ];
        if let Some(l) = &self.cont_head {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        if let Some(w) = &self.gcn_weight {
            out.push(w);
        }
        out.push(&self.dec1.weight);
        out.push(&self.dec1.bias);
        out.push(&self.dec2.weight);
        out.push(&self.dec2.bias);
        out.push(&self.d1.hidden.weight);
        out.push(&self.d1.hidden.bias);
        out.push(&self.d1.output.weight);
        out.push(&self.d1.output.bias);
        if let Some(d) = &self.d2 {
            out.push(&d.hidden.weight);
            out.push(&d.hidden.bias);
            out.push(&d.output.weight);
            out.push(&d.output.bias);
        }
        out
    }

    /// Discriminator scope (phi).
    pub fn phi_parameters_mut(&mut self) -> Vec<&mut ParameterTensor<F>> {
        let mut out = vec![
            &mut self.d1.hidden.weight,
            &mut self.d1.hidden.bias,
            &mut self.d1.output.weight,
            &mut self.d1.output.bias,
        ];
        if let Some(d) = &mut self.d2 {
            out.push(&mut d.hidden.weight);
            out.push(&mut d.hidden.bias);
            out.push(&mut d.output.weight);
            out.push(&mut d.output.bias);
        }
        out
    }
}

impl<F: Scalar> HasParameters<F> for TbhModel<F> {
    fn parameters_mut(&mut self) -> Vec<&mut ParameterTensor<F>> {
        let mut out = vec![
            &mut self.shared.weight,
            &mut self.shared.bias,
            &mut self.bin_head.weight,
            &mut self.bin_head.bias,
        ];
        if let Some(l) = &mut self.cont_head {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        if let Some(w) = &mut self.gcn_weight {
            out.push(w);
        }
        out.push(&mut self.dec1.weight);
        out.push(&mut self.dec1.bias);
        out.push(&mut self.dec2.weight);
        out.push(&mut self.dec2.bias);
        out.push(&mut self.d1.hidden.weight);
        out.push(&mut self.d1.hidden.bias);
        out.push(&mut self.d1.output.weight);
        out.push(&mut self.d1.output.bias);
        if let Some(d) = &mut self.d2 {
            out.push(&mut d.hidden.weight);
            out.push(&mut d.hidden.bias);
            out.push(&mut d.output.weight);
            out.push(&mut d.output.bias);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EncodeCaches<F: Scalar> {
    pub shared: DenseCache<F>,
    pub bin_head: DenseCache<F>,
    pub cont_head: Option<DenseCache<F>>,
}

/// Discrete stochastic neuron: bit 1 where `probs >= eps`.
pub fn sample_binary<F: Scalar>(probs: &Mat<F>, eps: &Mat<F>) -> Result<Mat<F>> {
    if probs.raw_dim() != eps.raw_dim() {
        return Err(Error::Dimension(format!(
            "probs shape {:?} vs eps shape {:?}",
            probs.shape(),
            eps.shape()
        )));
    }
    let mut b = Mat::zeros(probs.raw_dim());
    ndarray::Zip::from(&mut b)
        .and(probs)
        .and(eps)
        .for_each(|bij, &p, &e| *bij = if p >= e { F::one() } else { F::zero() });
    Ok(b)
}

/// Code-driven adjacency `J + (1/M)(B(B-J)^T + (B-J)B^T)`, entrywise equal
/// to `1 - Hamming(b_i, b_j)/M`.
pub fn build_adjacency<F: Scalar>(binary: &Mat<F>) -> Mat<F> {
    let m = F::from_f64(binary.ncols() as f64);
    let shifted = binary.mapv(|v| v - F::one());
    let mut a = binary.dot(&shifted.t()) + shifted.dot(&binary.t());
    a.mapv_inplace(|v| F::one() + v / m);
    a
}

/// Gradient of a scalar loss w.r.t. `B` given its gradient w.r.t. the
/// code-driven adjacency: `(1/M) (G + G^T)(2B - J)`.
pub fn adjacency_backward<F: Scalar>(d_adj: &Mat<F>, binary: &Mat<F>) -> Mat<F> {
    let m = F::from_f64(binary.ncols() as f64);
    let sym = d_adj + &d_adj.t();
    let two_b_minus_j = binary.mapv(|v| v + v - F::one());
    let mut out = sym.dot(&two_b_minus_j);
    out.mapv_inplace(|v| v / m);
    out
}

/// Feature-space adjacency for the swapped / fixed-graph variants:
/// cosine similarity mapped to `[0,1]` via `(1+cos)/2`, diagonal forced
/// to 1 so GCN row sums stay positive.
pub fn cosine_adjacency<F: Scalar>(rows: &Mat<F>) -> Mat<F> {
    let n = rows.nrows();
    let floor = F::from_f64(1e-12);
    let norms: Vec<F> = rows
        .axis_iter(Axis(0))
        .map(|r| r.dot(&r).sqrt().max(floor))
        .collect();
    let gram = rows.dot(&rows.t());
    let half = F::from_f64(0.5);
    let mut a = Mat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let cos = gram[[i, j]] / (norms[i] * norms[j]);
            a[[i, j]] = half * (F::one() + cos.min(F::one()).max(-F::one()));
        }
        a[[i, i]] = F::one();
    }
    a
}

/// One graph convolution: `sigmoid(D^{-1/2} A D^{-1/2} . input . W)` with
/// `D = diag(A 1)`.
pub fn gcn_forward<F: Scalar>(
    input: &Mat<F>,
    adjacency: &Mat<F>,
    weight: &Mat<F>,
) -> Result<(Mat<F>, GcnCache<F>)> {
    let degree: Array1<F> = adjacency.sum_axis(Axis(1));
    if degree.iter().any(|&d| d <= F::zero()) {
        return Err(Error::Numeric("gcn: non-positive adjacency row sum".into()));
    }
    let inv_sqrt: Array1<F> = degree.mapv(|d| F::one() / d.sqrt());
    let mut norm_adj = adjacency.clone();
    for ((i, j), v) in norm_adj.indexed_iter_mut() {
        *v = *v * inv_sqrt[i] * inv_sqrt[j];
    }
    let input_w = input.dot(weight);
    let pre = norm_adj.dot(&input_w);
    let zp = pre.mapv(sigmoid);
    ensure_finite("gcn", &zp)?;
    Ok((
        zp.clone(),
        GcnCache {
            norm_adj,
            degree,
            input_w,
            input: input.clone(),
            pre_activation: pre,
            zp,
        },
    ))
}

/// Backward through the GCN layer. Returns gradients w.r.t. the input and
/// the (un-normalized) adjacency; the weight gradient is accumulated into
/// `weight.grad` when a tensor is supplied.
pub fn gcn_backward<F: Scalar>(
    d_zp: &Mat<F>,
    cache: &GcnCache<F>,
    weight: &Mat<F>,
    weight_grad: Option<&mut Mat<F>>,
) -> (Mat<F>, Mat<F>) {
    // Through the sigmoid.
    let g = d_zp * &cache.zp.mapv(|s| s * (F::one() - s));
    // pre = S . (input W): gradients w.r.t. the two factors.
    let d_input_w = cache.norm_adj.t().dot(&g);
    let d_input = d_input_w.dot(&weight.t());
    if let Some(wg) = weight_grad {
        *wg += &cache.input.t().dot(&d_input_w);
    }
    // d/dS of <G, S.(input W)> is G (input W)^T; then through the
    // degree-dependent normalization S_ij = A_ij d_i^{-1/2} d_j^{-1/2}.
    let t = g.dot(&cache.input_w.t());
    let ts = &t * &cache.norm_adj;
    let row_sum = ts.sum_axis(Axis(1));
    let col_sum = ts.sum_axis(Axis(0));
    let inv_sqrt: Array1<F> = cache.degree.mapv(|d| F::one() / d.sqrt());
    let half = F::from_f64(0.5);
    let n = t.nrows();
    let mut d_adj = Mat::zeros((n, n));
    for i in 0..n {
        let row_term = half * (row_sum[i] + col_sum[i]) / cache.degree[i];
        for j in 0..n {
            d_adj[[i, j]] = t[[i, j]] * inv_sqrt[i] * inv_sqrt[j] - row_term;
        }
    }
    (d_input, d_adj)
}

/// Attention-equilibrium mixing: row-normalized `A . Z`, no weight, no
/// sigmoid.
pub fn attention_forward<F: Scalar>(z: &Mat<F>, adjacency: &Mat<F>) -> Result<(Mat<F>, AttnCache<F>)> {
    let degree: Array1<F> = adjacency.sum_axis(Axis(1));
    if degree.iter().any(|&d| d <= F::zero()) {
        return Err(Error::Numeric(
            "attention: non-positive adjacency row sum".into(),
        ));
    }
    let mut zp = adjacency.dot(z);
    for (i, mut row) in zp.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| v / degree[i]);
    }
    ensure_finite("attention", &zp)?;
    Ok((
        zp.clone(),
        AttnCache {
            degree,
            input: z.clone(),
            zp,
        },
    ))
}

/// Backward through the attention mixing; returns (d_z, d_adjacency).
pub fn attention_backward<F: Scalar>(d_zp: &Mat<F>, adjacency: &Mat<F>, cache: &AttnCache<F>) -> (Mat<F>, Mat<F>) {
    let n = adjacency.nrows();
    // d_z = R^T d_zp with R = diag(1/d) A.
    let mut scaled = d_zp.clone();
    for (i, mut row) in scaled.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| v / cache.degree[i]);
    }
    let d_z = adjacency.t().dot(&scaled);
    // d_adj[i][j] = (d_zp_i . z_j - d_zp_i . zp_i) / d_i
    let p = d_zp.dot(&cache.input.t());
    let mut d_adj = Mat::zeros((n, n));
    for i in 0..n {
        let c = d_zp.row(i).dot(&cache.zp.row(i));
        for j in 0..n {
            d_adj[[i, j]] = (p[[i, j]] - c) / cache.degree[i];
        }
    }
    (d_z, d_adj)
}

/// Prior draws for the discriminating step: `yb` rows are independent
/// Bernoulli(0.5) bits, `yc` entries are i.i.d. U(0,1).
pub fn sample_priors<F: Scalar, R: Rng>(
    n: usize,
    code_bits: usize,
    latent_dim: usize,
    rng: &mut R,
) -> (Mat<F>, Mat<F>) {
    let unit = Uniform::new(F::from_f64(0.0), F::from_f64(1.0));
    let half = F::from_f64(0.5);
    let yb = Mat::from_shape_simple_fn((n, code_bits), || {
        if rng.sample(&unit) < half {
            F::zero()
        } else {
            F::one()
        }
    });
    let yc = Mat::from_shape_simple_fn((n, latent_dim), || rng.sample(&unit));
    (yb, yc)
}

/// Fresh uniform draws for the stochastic neuron.
pub fn sample_eps<F: Scalar, R: Rng>(n: usize, code_bits: usize, rng: &mut R) -> Mat<F> {
    let unit = Uniform::new(F::from_f64(0.0), F::from_f64(1.0));
    Mat::from_shape_simple_fn((n, code_bits), || rng.sample(&unit))
}
