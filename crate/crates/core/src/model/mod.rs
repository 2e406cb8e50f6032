//! Small convolutional trunk with an actor head and an object head.
//!
//! Each trunk layer is `conv -> bias -> activation`; the heads are 1x1
//! convolutions followed by a sigmoid, producing `num_verbs + 1` channels at
//! `1/stride` of the input resolution. Everything runs in `f64`.

mod adam;
mod checkpoint;
mod conv;

use ndarray::{ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::GridShape;
use crate::grid::ChannelGrid;
use crate::rng::{item_rng, Stream};
use crate::supervision::ModelInput;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint};
pub use conv::{col2im, im2col, ConvGeometry};

/// Default initial sigmoid output of the heads.
pub const HEAD_PRIOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn grad_from_output(&self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub channels: usize,
    pub stride: usize,
    #[serde(default = "one")]
    pub dilation: usize,
    pub activation: Activation,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(-sqrt(3 / fan_in), sqrt(3 / fan_in))`, zero trunk biases, head
    /// weights scaled by 0.1 and head biases at `logit(head_prior)`.
    #[default]
    FanInUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub input_channels: usize,
    pub layers: Vec<ConvSpec>,
    pub num_verbs: usize,
    #[serde(default)]
    pub init: InitScheme,
    /// Initial sigmoid output of both heads.
    #[serde(default = "default_head_prior")]
    pub head_prior: f64,
    pub seed: u64,
}

fn default_head_prior() -> f64 {
    HEAD_PRIOR
}

impl Default for ModelConfig {
    fn default() -> Self {
        // ReLU, not tanh: with Adam and the default 0.1 head prior, the
        // all-cells-negative gradient drives tanh features to a constant +-1
        // within ~100 steps and training stalls.
        let layer = |channels, stride| ConvSpec {
            kernel: 3,
            channels,
            stride,
            dilation: 1,
            activation: Activation::Relu,
        };
        Self {
            input_width: 64,
            input_height: 64,
            input_channels: 4,
            layers: vec![layer(8, 2), layer(16, 2), layer(32, 1), layer(32, 1)],
            num_verbs: 3,
            init: InitScheme::FanInUniform,
            head_prior: HEAD_PRIOR,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn stride(&self) -> usize {
        self.layers.iter().map(|l| l.stride).product()
    }

    pub fn head_channels(&self) -> usize {
        self.num_verbs + 1
    }

    pub fn grid_shape(&self) -> GridShape {
        GridShape::for_input(self.input_width, self.input_height, self.stride())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.layers.is_empty() {
            return bad("model needs at least one conv layer");
        }
        if self.input_width == 0 || self.input_height == 0 || self.input_channels == 0 {
            return bad("input dimensions must be positive");
        }
        if self.num_verbs == 0 {
            return bad("num_verbs must be >= 1");
        }
        if !(self.head_prior > 0.0 && self.head_prior < 1.0) {
            return bad("head_prior must be in (0, 1)");
        }
        for l in &self.layers {
            if l.kernel % 2 == 0 || l.channels == 0 || l.stride == 0 || l.dilation == 0 {
                return bad("conv layers need an odd kernel and positive channels/stride/dilation");
            }
        }
        let (h, w) = self.trunk_geometries().last().map(|g| (g.out_h, g.out_w)).unwrap();
        let grid = self.grid_shape();
        if (w, h) != (grid.width, grid.height) {
            return bad("trunk output does not match ceil(input / stride)");
        }
        Ok(())
    }

    fn trunk_geometries(&self) -> Vec<ConvGeometry> {
        let mut out = Vec::with_capacity(self.layers.len());
        let (mut c, mut h, mut w) = (self.input_channels, self.input_height, self.input_width);
        for l in &self.layers {
            let g = ConvGeometry::new(c, h, w, l.kernel, l.stride, l.dilation);
            (c, h, w) = (l.channels, g.out_h, g.out_w);
            out.push(g);
        }
        out
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let mut c_in = self.input_channels;
        let mut total = 0;
        for l in &self.layers {
            total += l.channels * c_in * l.kernel * l.kernel + l.channels;
            c_in = l.channels;
        }
        total + 2 * (self.head_channels() * c_in + self.head_channels())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("model config serializes");
        Sha256::digest(&json).into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named arrays in a fixed registration order: for every trunk layer
/// `convN.weight`, `convN.bias`; then `actor_head.*`, `object_head.*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub tensors: Vec<Tensor>,
}

impl Parameters {
    fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = config.input_channels;
        for (i, l) in config.layers.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![l.channels, c_in, l.kernel, l.kernel]));
            out.push((format!("conv{i}.bias"), vec![l.channels]));
            c_in = l.channels;
        }
        for head in ["actor_head", "object_head"] {
            out.push((format!("{head}.weight"), vec![config.head_channels(), c_in, 1, 1]));
            out.push((format!("{head}.bias"), vec![config.head_channels()]));
        }
        out
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            tensors: Self::layout(config)
                .into_iter()
                .map(|(name, shape)| {
                    let n = shape.iter().product();
                    Tensor {
                        name,
                        shape,
                        data: vec![0.0; n],
                    }
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn same_layout(&self, other: &Parameters) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape == b.shape && a.data.len() == b.data.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }
}

/// Seeded initialization; bit-identical for the same config.
pub fn init(config: &ModelConfig) -> Result<Parameters> {
    config.validate()?;
    let mut params = Parameters::zeros(config);
    let mut rng = item_rng(config.seed, 0, Stream::Init);
    let prior_logit = (config.head_prior / (1.0 - config.head_prior)).ln();
    for t in params.tensors.iter_mut() {
        let is_head = t.name.contains("head");
        if t.name.ends_with(".weight") {
            let fan_in: usize = t.shape[1..].iter().product();
            let mut bound = (3.0 / fan_in as f64).sqrt();
            if is_head {
                bound *= 0.1;
            }
            for v in t.data.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        } else if is_head {
            t.data.fill(prior_logit);
        }
    }
    Ok(params)
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// im2col of each trunk layer's input.
    cols: Vec<Vec<f64>>,
    /// Post-activation output of each trunk layer.
    acts: Vec<Vec<f64>>,
    actor: Vec<f64>,
    object: Vec<f64>,
}

impl ForwardCache {
    /// Post-activation output of every trunk layer, channel-major.
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.acts
    }
}

pub struct Network {
    config: ModelConfig,
    geoms: Vec<ConvGeometry>,
}

fn gemm(a: &[f64], (m, k): (usize, usize), b: &[f64], n: usize) -> Vec<f64> {
    let av = ArrayView2::from_shape((m, k), a).expect("gemm lhs shape");
    let bv = ArrayView2::from_shape((k, n), b).expect("gemm rhs shape");
    av.dot(&bv).into_raw_vec_and_offset().0
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let geoms = config.trunk_geometries();
        Ok(Self { config, geoms })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid_shape(&self) -> GridShape {
        self.config.grid_shape()
    }

    fn check_params(&self, params: &Parameters) -> Result<()> {
        if params.same_layout(&Parameters::zeros(&self.config)) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("parameters do not match the model config".into()))
        }
    }

    fn head_forward(&self, w: &[f64], b: &[f64], feat: &[f64], c_in: usize, cells: usize) -> Vec<f64> {
        let mut z = gemm(w, (self.config.head_channels(), c_in), feat, cells);
        for (k, row) in z.chunks_mut(cells).enumerate() {
            for v in row.iter_mut() {
                *v = sigmoid(*v + b[k]);
            }
        }
        z
    }

    /// Returns `(actor map, object map, cache)`, both maps in `(0, 1)`.
    pub fn forward(&self, params: &Parameters, input: &ModelInput) -> Result<(ChannelGrid, ChannelGrid, ForwardCache)> {
        let cfg = &self.config;
        if (input.width, input.height, input.channels) != (cfg.input_width, cfg.input_height, cfg.input_channels) {
            return Err(Error::ResolutionMismatch {
                got_w: input.width,
                got_h: input.height,
                got_c: input.channels,
                want_w: cfg.input_width,
                want_h: cfg.input_height,
                want_c: cfg.input_channels,
            });
        }
        self.check_params(params)?;
        let mut cols = Vec::with_capacity(self.geoms.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.geoms.len());
        for (i, (g, spec)) in self.geoms.iter().zip(&cfg.layers).enumerate() {
            let x = if i == 0 { &input.data } else { &acts[i - 1] };
            let c = im2col(x, g);
            let w = &params.tensors[2 * i].data;
            let b = &params.tensors[2 * i + 1].data;
            let mut z = gemm(w, (spec.channels, g.patch_len()), &c, g.out_cells());
            let n = g.out_cells();
            for (k, row) in z.chunks_mut(n).enumerate() {
                for v in row.iter_mut() {
                    *v = spec.activation.apply(*v + b[k]);
                }
            }
            cols.push(c);
            acts.push(z);
        }
        let last = self.geoms.last().unwrap();
        let (c_feat, cells) = (cfg.layers.last().unwrap().channels, last.out_cells());
        let h = 2 * cfg.layers.len();
        let feat = acts.last().unwrap();
        let actor = self.head_forward(&params.tensors[h].data, &params.tensors[h + 1].data, feat, c_feat, cells);
        let object = self.head_forward(&params.tensors[h + 2].data, &params.tensors[h + 3].data, feat, c_feat, cells);
        let (gw, gh, gc) = (last.out_w, last.out_h, cfg.head_channels());
        let actor_map = ChannelGrid::from_vec(gw, gh, gc, actor.clone())?;
        let object_map = ChannelGrid::from_vec(gw, gh, gc, object.clone())?;
        Ok((actor_map, object_map, ForwardCache { cols, acts, actor, object }))
    }

    /// Gradients of the loss with respect to every parameter, given the
    /// gradients with respect to the two sigmoid output maps.
    pub fn backward(
        &self,
        params: &Parameters,
        cache: &ForwardCache,
        grad_actor: &ChannelGrid,
        grad_object: &ChannelGrid,
    ) -> Result<Parameters> {
        let cfg = &self.config;
        self.check_params(params)?;
        let last = *self.geoms.last().unwrap();
        let want = (last.out_w, last.out_h, cfg.head_channels());
        for g in [grad_actor, grad_object] {
            if g.shape() != want {
                return Err(Error::ShapeMismatch(format!("output gradient {:?} vs {want:?}", g.shape())));
            }
        }
        let mut grads = params.zeros_like();
        let n_layers = cfg.layers.len();
        let (c_feat, cells) = (cfg.layers[n_layers - 1].channels, last.out_cells());
        let kh = cfg.head_channels();
        let feat = ArrayView2::from_shape((c_feat, cells), &cache.acts[n_layers - 1][..]).unwrap();

        let mut dfeat = ndarray::Array2::<f64>::zeros((c_feat, cells));
        for (head, (out, g)) in [(&cache.actor, grad_actor), (&cache.object, grad_object)].into_iter().enumerate() {
            let dz: Vec<f64> = out.iter().zip(g.as_slice()).map(|(&p, &d)| d * p * (1.0 - p)).collect();
            let dz = ArrayView2::from_shape((kh, cells), &dz[..]).unwrap();
            let wi = 2 * n_layers + 2 * head;
            let dw = dz.dot(&feat.t());
            grads.tensors[wi].data.copy_from_slice(dw.as_slice().unwrap());
            let db = dz.sum_axis(Axis(1));
            grads.tensors[wi + 1].data.copy_from_slice(db.as_slice().unwrap());
            let w = ArrayView2::from_shape((kh, c_feat), &params.tensors[wi].data[..]).unwrap();
            dfeat += &w.t().dot(&dz);
        }

        let mut dact = dfeat.into_raw_vec_and_offset().0;
        for i in (0..n_layers).rev() {
            let g = &self.geoms[i];
            let spec = &cfg.layers[i];
            let n = g.out_cells();
            let a = &cache.acts[i];
            for (d, &av) in dact.iter_mut().zip(a) {
                *d *= spec.activation.grad_from_output(av);
            }
            let dz = ArrayView2::from_shape((spec.channels, n), &dact[..]).unwrap();
            let cols = ArrayView2::from_shape((g.patch_len(), n), &cache.cols[i][..]).unwrap();
            let dw = dz.dot(&cols.t());
            grads.tensors[2 * i].data.copy_from_slice(dw.as_slice().unwrap());
            let db = dz.sum_axis(Axis(1));
            grads.tensors[2 * i + 1].data.copy_from_slice(db.as_slice().unwrap());
            if i > 0 {
                let w = ArrayView2::from_shape((spec.channels, g.patch_len()), &params.tensors[2 * i].data[..]).unwrap();
                let dcols = w.t().dot(&dz);
                dact = col2im(dcols.as_slice().unwrap(), g);
            }
        }
        Ok(grads)
    }
}

/// A network paired with a parameter set for inference.
pub struct Model {
    pub network: Network,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: ModelConfig, params: Parameters) -> Result<Self> {
        let network = Network::new(config)?;
        network.check_params(&params)?;
        Ok(Self { network, params })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        Self::new(ckpt.config, ckpt.params)
    }

    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    /// Actor and object maps for one input.
    pub fn predict(&self, input: &ModelInput) -> Result<(ChannelGrid, ChannelGrid)> {
        let (a, o, _) = self.network.forward(&self.params, input)?;
        Ok((a, o))
    }
}
