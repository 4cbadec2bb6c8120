//! Hypernetworks mapping a labelled support set to downstream weights
//! `gamma`, through a bottleneck of selected examples and/or a message.
//!
//! * `Pbh`: Gaussian latent `mu + eps` decoded into `gamma`.
//! * `SchMinus`: `c` selected examples only.
//! * `SchPlus`: `c` selected examples and a `b`-bit message.
//! * `PbSch`: `c` selected examples and a Gaussian latent message.

mod checkpoint;
mod downstream;
mod nets;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use downstream::{downstream_forward, downstream_layer_sizes, downstream_logits, gamma_len};
pub use nets::{DeepSet, Dense, Mlp, NamedParam, ParamStore};

use crate::tensor::{Graph, NodeId, Rng, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum HypernetError {
    #[error("invalid hypernetwork config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "PBH")]
    Pbh,
    #[serde(rename = "SCH_MINUS")]
    SchMinus,
    #[serde(rename = "SCH_PLUS")]
    SchPlus,
    #[serde(rename = "PBSCH")]
    PbSch,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Pbh => "PBH",
            Architecture::SchMinus => "SCH_MINUS",
            Architecture::SchPlus => "SCH_PLUS",
            Architecture::PbSch => "PBSCH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "PBH" => Some(Architecture::Pbh),
            "SCH_MINUS" | "SCH-" => Some(Architecture::SchMinus),
            "SCH_PLUS" | "SCH+" => Some(Architecture::SchPlus),
            "PBSCH" | "PB_SCH" => Some(Architecture::PbSch),
            _ => None,
        }
    }

    /// The message is a Gaussian mean rather than a bit string.
    pub fn gaussian_message(self) -> bool {
        matches!(self, Architecture::Pbh | Architecture::PbSch)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepSetConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// 2 selects the binary path.
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypernetConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    /// Compression-set size.
    pub c: usize,
    /// Message size: bits for `SchPlus`, latent dimension for `Pbh`/`PbSch`.
    pub b: usize,
    /// Hidden sizes of the compressor keys, the encoder and the reconstructor.
    pub mlp1: Vec<usize>,
    /// Hidden sizes of every DeepSet's per-example network.
    pub mlp2: Vec<usize>,
    /// Hidden sizes of the downstream predictor.
    pub mlp3: Vec<usize>,
    pub embed_dim: usize,
    pub key_dim: usize,
}

impl HypernetConfig {
    pub fn validate(&self) -> Result<(), HypernetError> {
        let bad = |m: String| Err(HypernetError::Config(m));
        let (c, b) = (self.c, self.b);
        match self.architecture {
            Architecture::Pbh if c != 0 || b == 0 => return bad(format!("PBH needs c = 0 and b >= 1, got c = {c}, b = {b}")),
            Architecture::SchMinus if c == 0 || b != 0 => {
                return bad(format!("SCH_MINUS needs c >= 1 and b = 0, got c = {c}, b = {b}"))
            }
            Architecture::SchPlus if c == 0 || b == 0 => {
                return bad(format!("SCH_PLUS needs c >= 1 and b >= 1, got c = {c}, b = {b}"))
            }
            Architecture::PbSch if b == 0 => return bad(format!("PBSCH needs b >= 1, got b = {b}")),
            _ => {}
        }
        if self.input_dim == 0 || self.embed_dim == 0 || self.key_dim == 0 {
            return bad("input_dim, embed_dim and key_dim must be >= 1".into());
        }
        if [&self.mlp1, &self.mlp2, &self.mlp3].iter().any(|l| l.contains(&0)) {
            return bad("layer sizes must be >= 1".into());
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        downstream_layer_sizes(self.input_dim, &self.mlp3)
    }

    pub fn gamma_len(&self) -> usize {
        gamma_len(&self.layer_sizes())
    }

    pub fn deepset(&self) -> DeepSetConfig {
        DeepSetConfig { input_dim: self.input_dim, hidden: self.mlp2.clone(), embed_dim: self.embed_dim, classes: 2 }
    }
}

/// The information that leaves a task through the bottleneck, plus the
/// resulting downstream weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionArtifacts {
    /// One index per attention head, in head order. Heads may coincide.
    pub indices: Vec<usize>,
    pub binary_message: Option<Vec<f64>>,
    pub gaussian_mean: Option<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub layer_sizes: Vec<usize>,
}

impl CompressionArtifacts {
    pub fn distinct_indices(&self) -> Vec<usize> {
        let mut j = self.indices.clone();
        j.sort_unstable();
        j.dedup();
        j
    }
}

/// How the Gaussian latent is perturbed before decoding.
pub enum Noise<'a> {
    Zero,
    Sample(&'a mut Rng),
    Given(&'a [f64]),
}

#[derive(Debug, Clone)]
struct Compressor {
    deepset: DeepSet,
    queries: Vec<Dense>,
    key_trunk: Mlp,
    keys: Vec<Dense>,
}

#[derive(Debug, Clone)]
struct Encoder {
    deepset: DeepSet,
    mlp: Mlp,
}

#[derive(Debug, Clone)]
enum SetBranch {
    DeepSet(DeepSet),
    Const(usize),
}

#[derive(Debug, Clone)]
struct Modules {
    compressor: Option<Compressor>,
    encoder: Option<Encoder>,
    recon_set: SetBranch,
    recon_mlp: Mlp,
}

/// Graph nodes produced by one pass of [`Hypernet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub gamma: NodeId,
    /// Head-ordered selected indices.
    pub indices: Vec<usize>,
    /// Selected `[x, y]` rows, `c x (d + 1)`.
    pub rows: Option<NodeId>,
    /// What the reconstructor receives: `omega`, or `mu + eps`.
    pub message: Option<NodeId>,
    /// The Gaussian mean before noise.
    pub mu: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Hypernet {
    pub config: HypernetConfig,
    pub params: ParamStore,
    modules: Modules,
}

impl Hypernet {
    /// Kaiming-uniform weights and zero biases drawn from `rng`.
    pub fn new(config: HypernetConfig, rng: &mut Rng) -> Result<Self, HypernetError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let modules = Self::register(&config, &mut params, rng);
        Ok(Hypernet { config, params, modules })
    }

    /// Rebuilds the module layout for `config` and loads `values` into it.
    pub fn from_params(config: HypernetConfig, values: &[NamedParam]) -> Result<Self, HypernetError> {
        let mut net = Hypernet::new(config, &mut Rng::from_seed(0))?;
        net.params.load_from(values)?;
        Ok(net)
    }

    fn register(cfg: &HypernetConfig, store: &mut ParamStore, rng: &mut Rng) -> Modules {
        let d = cfg.input_dim;
        let compressor = (cfg.c > 0).then(|| {
            let deepset = DeepSet::register(store, "compressor.deepset", d, &cfg.mlp2, cfg.embed_dim, rng);
            let queries =
                (0..cfg.c).map(|h| Dense::register(store, &format!("compressor.query{h}"), cfg.embed_dim, cfg.key_dim, rng)).collect();
            let mut trunk_sizes = vec![d];
            trunk_sizes.extend_from_slice(&cfg.mlp1);
            let key_trunk = Mlp::register(store, "compressor.key_trunk", &trunk_sizes, true, rng);
            let trunk_out = *trunk_sizes.last().unwrap();
            let keys = (0..cfg.c).map(|h| Dense::register(store, &format!("compressor.key{h}"), trunk_out, cfg.key_dim, rng)).collect();
            Compressor { deepset, queries, key_trunk, keys }
        });
        let encoder = (cfg.b > 0).then(|| {
            let deepset = DeepSet::register(store, "encoder.deepset", d, &cfg.mlp2, cfg.embed_dim, rng);
            let mut sizes = vec![cfg.embed_dim];
            sizes.extend_from_slice(&cfg.mlp1);
            sizes.push(cfg.b);
            let mlp = Mlp::register(store, "encoder.mlp", &sizes, false, rng);
            Encoder { deepset, mlp }
        });
        let recon_set = if cfg.c > 0 {
            SetBranch::DeepSet(DeepSet::register(store, "reconstructor.deepset", d, &cfg.mlp2, cfg.embed_dim, rng))
        } else {
            let bound = (6.0 / cfg.embed_dim as f64).sqrt();
            let v = (0..cfg.embed_dim).map(|_| rng.uniform_range(-bound, bound)).collect();
            SetBranch::Const(store.push("reconstructor.const".into(), 1, cfg.embed_dim, v))
        };
        let mut sizes = vec![cfg.embed_dim + cfg.b];
        sizes.extend_from_slice(&cfg.mlp1);
        sizes.push(cfg.gamma_len());
        let recon_mlp = Mlp::register(store, "reconstructor.mlp", &sizes, false, rng);
        Modules { compressor, encoder, recon_set, recon_mlp }
    }

    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> Vec<NodeId> {
        self.params.bind(g, requires_grad)
    }

    /// The `c` attention heads over the support set `(x, y)`. Keys see
    /// standardized features only; values are the raw `[x, y]` rows. Returns
    /// every head's index and one row per distinct index, in first-seen order.
    pub fn sample_compress(
        &self,
        g: &mut Graph,
        bound: &[NodeId],
        x: NodeId,
        y: NodeId,
    ) -> Result<(Vec<usize>, NodeId), HypernetError> {
        let comp = self.modules.compressor.as_ref().ok_or_else(|| HypernetError::Config("no compressor when c = 0".into()))?;
        let m = g.shape(x).0;
        if self.config.c > m {
            return Err(HypernetError::Config(format!("c = {} exceeds support size {m}", self.config.c)));
        }
        let values = g.concat(&[x, y], 1)?;
        let xs = standardized(g, x)?;
        let z = comp.deepset.embed_binary(g, bound, xs, y)?;
        let trunk = comp.key_trunk.forward(g, bound, xs)?;
        let scale = 1.0 / (self.config.key_dim as f64).sqrt();
        let mut heads = Vec::new();
        let mut indices = Vec::with_capacity(self.config.c);
        for (q, k) in comp.queries.iter().zip(&comp.keys) {
            let query = q.forward(g, bound, z)?;
            let keys = k.forward(g, bound, trunk)?;
            let kt = g.transpose(keys);
            let logits = g.matmul(query, kt)?;
            let logits = g.mul_scalar(logits, scale);
            let probs = g.softmax(logits, 1)?;
            let row = g.hard_select_st(probs, values)?;
            let i = g.selected_index(row).expect("hard select node");
            if !indices.contains(&i) {
                heads.push(row);
            }
            indices.push(i);
        }
        Ok((indices, g.concat(&heads, 0)?))
    }

    /// Encoder output before the final activation, `1 x b`.
    fn encode_raw(&self, g: &mut Graph, bound: &[NodeId], x: NodeId, y: NodeId) -> Result<NodeId, HypernetError> {
        let enc = self.modules.encoder.as_ref().ok_or_else(|| HypernetError::Config("no message when b = 0".into()))?;
        let xs = standardized(g, x)?;
        let z = enc.deepset.embed_binary(g, bound, xs, y)?;
        Ok(enc.mlp.forward(g, bound, z)?)
    }

    /// Gaussian mean `mu = tanh(MLP(DeepSet(S)))`.
    pub fn pb_encode(&self, g: &mut Graph, bound: &[NodeId], x: NodeId, y: NodeId) -> Result<NodeId, HypernetError> {
        let raw = self.encode_raw(g, bound, x, y)?;
        Ok(g.tanh(raw))
    }

    /// Binary message `omega = sign(MLP(DeepSet(S)))` with a straight-through gradient.
    pub fn msg_compress(&self, g: &mut Graph, bound: &[NodeId], x: NodeId, y: NodeId) -> Result<NodeId, HypernetError> {
        let raw = self.encode_raw(g, bound, x, y)?;
        Ok(g.sign_st(raw))
    }

    /// `gamma = MLP([DeepSet(rows), message])`; the DeepSet is replaced by a
    /// learned constant when there are no rows. With rows, the predictor works
    /// in the frame of the selected points and that frame is folded into the
    /// first downstream layer, so `gamma` acts on raw features.
    pub fn reconstruct(
        &self,
        g: &mut Graph,
        bound: &[NodeId],
        rows: Option<NodeId>,
        message: Option<NodeId>,
    ) -> Result<NodeId, HypernetError> {
        if rows.is_none() && message.is_none() {
            return Err(HypernetError::Config("reconstruct needs compression rows or a message".into()));
        }
        let d = self.config.input_dim;
        let (set, frame) = match (&self.modules.recon_set, rows) {
            (SetBranch::DeepSet(ds), Some(r)) => {
                let xs = g.cols(r, 0, d)?;
                let frame = Frame::of(g, xs)?;
                let xs = frame.apply(g, xs)?;
                let ys = g.cols(r, d, 1)?;
                (ds.embed_binary(g, bound, xs, ys)?, Some(frame))
            }
            (SetBranch::Const(idx), None) => (bound[*idx], None),
            _ => return Err(HypernetError::Config("compression rows do not match c".into())),
        };
        let input = match message {
            Some(msg) => g.concat(&[set, msg], 1)?,
            None => set,
        };
        let gamma = self.modules.recon_mlp.forward(g, bound, input)?;
        match frame {
            Some(f) => Ok(f.fold_into(g, gamma, &self.config.layer_sizes())?),
            None => Ok(gamma),
        }
    }

    /// Full pass over the support set `(features, labels)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &[NodeId],
        features: &Tensor,
        labels: &[f64],
        noise: Noise<'_>,
    ) -> Result<ForwardOutput, HypernetError> {
        let m = features.rows();
        if m == 0 || labels.len() != m || features.cols() != self.config.input_dim {
            return Err(HypernetError::Config(format!(
                "support set of {m}x{} with {} labels does not fit input_dim {}",
                features.cols(),
                labels.len(),
                self.config.input_dim
            )));
        }
        let x = g.constant(m, features.cols(), features.values.clone())?;
        let y = g.constant(m, 1, labels.to_vec())?;
        let (indices, rows) = if self.config.c > 0 {
            let (i, r) = self.sample_compress(g, bound, x, y)?;
            (i, Some(r))
        } else {
            (Vec::new(), None)
        };
        let (message, mu) = match self.config.architecture {
            Architecture::SchMinus => (None, None),
            Architecture::SchPlus => (Some(self.msg_compress(g, bound, x, y)?), None),
            Architecture::Pbh | Architecture::PbSch => {
                let mu = self.pb_encode(g, bound, x, y)?;
                let b = self.config.b;
                let eps = match noise {
                    Noise::Zero => None,
                    Noise::Sample(rng) => Some(rng.normals(b)),
                    Noise::Given(e) => {
                        if e.len() != b {
                            return Err(HypernetError::Config(format!("noise of length {} for b = {b}", e.len())));
                        }
                        Some(e.to_vec())
                    }
                };
                let msg = match eps {
                    Some(e) => {
                        let en = g.constant(1, b, e)?;
                        g.add(mu, en)?
                    }
                    None => mu,
                };
                (Some(msg), Some(mu))
            }
        };
        let gamma = self.reconstruct(g, bound, rows, message)?;
        Ok(ForwardOutput { gamma, indices, rows, message, mu })
    }

    pub fn artifacts(&self, g: &Graph, out: &ForwardOutput) -> CompressionArtifacts {
        let gaussian = self.config.architecture.gaussian_message();
        CompressionArtifacts {
            indices: out.indices.clone(),
            binary_message: (!gaussian).then(|| out.message.map(|m| g.values(m).to_vec())).flatten(),
            gaussian_mean: out.mu.map(|m| g.values(m).to_vec()),
            gamma: g.values(out.gamma).to_vec(),
            layer_sizes: self.config.layer_sizes(),
        }
    }

    /// Evaluation-mode pass: returns the artifacts without tracking gradients.
    pub fn infer(&self, features: &Tensor, labels: &[f64], noise: Noise<'_>) -> Result<CompressionArtifacts, HypernetError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let out = self.forward(&mut g, &bound, features, labels, noise)?;
        Ok(self.artifacts(&g, &out))
    }

    /// Non-differentiable [`Hypernet::reconstruct`] from stored artifacts.
    pub fn reconstruct_values(&self, rows: Option<&Tensor>, message: Option<&[f64]>) -> Result<Vec<f64>, HypernetError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let r = match rows {
            Some(t) => Some(g.constant(t.rows(), t.cols(), t.values.clone())?),
            None => None,
        };
        let m = match message {
            Some(v) => Some(g.constant(1, v.len(), v.to_vec())?),
            None => None,
        };
        let gamma = self.reconstruct(&mut g, &bound, r, m)?;
        Ok(g.values(gamma).to_vec())
    }
}

/// Centre and radius of a point set as graph nodes: the mean (`1 x d`) and
/// the root mean squared distance to it (`1 x 1`, fixed at 1 when the points
/// coincide).
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub center: NodeId,
    pub scale: NodeId,
}

impl Frame {
    /// Frame of the rows of `x` (`k x d`).
    pub fn of(g: &mut Graph, x: NodeId) -> Result<Frame, TensorError> {
        let (k, d) = g.shape(x);
        let ones = g.constant(k, 1, vec![1.0; k])?;
        let center = g.weighted_set_mean(x, ones)?;
        let centred = g.sub_row(x, center)?;
        let sq = g.mul(centred, centred)?;
        let ms = g.mean(sq);
        let ms = g.mul_scalar(ms, d as f64);
        let scale = if g.values(ms)[0].sqrt() > 1e-8 { g.sqrt(ms) } else { g.constant(1, 1, vec![1.0])? };
        Ok(Frame { center, scale })
    }

    /// `(x - center) / scale`, row-wise.
    pub fn apply(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
        let centred = g.sub_row(x, self.center)?;
        g.div_scalar(centred, self.scale)
    }

    /// Rewrites `gamma` so that the network applied to raw `x` equals the
    /// original network applied to `(x - center) / scale`.
    pub fn fold_into(&self, g: &mut Graph, gamma: NodeId, layer_sizes: &[usize]) -> Result<NodeId, TensorError> {
        let (d, h) = (layer_sizes[0], layer_sizes[1]);
        let total = g.values(gamma).len();
        let w = g.slice(gamma, 0, d * h)?;
        let w = g.reshape(w, d, h)?;
        let w = g.div_scalar(w, self.scale)?;
        let b = g.slice(gamma, d * h, h)?;
        let shift = g.matmul(self.center, w)?;
        let b = g.sub(b, shift)?;
        let w = g.reshape(w, 1, d * h)?;
        let mut parts = vec![w, b];
        if total > d * h + h {
            parts.push(g.slice(gamma, d * h + h, total - d * h - h)?);
        }
        g.concat(&parts, 1)
    }
}

/// Features of a whole support set expressed in its own frame.
fn standardized(g: &mut Graph, x: NodeId) -> Result<NodeId, TensorError> {
    let frame = Frame::of(g, x)?;
    frame.apply(g, x)
}

/// `[x, y]` rows for the given indices of a task.
pub fn compression_rows(features: &Tensor, labels: &[f64], indices: &[usize]) -> Tensor {
    let d = features.cols();
    let mut v = Vec::with_capacity(indices.len() * (d + 1));
    for &i in indices {
        v.extend_from_slice(features.row_slice(i));
        v.push(labels[i]);
    }
    Tensor { shape: vec![indices.len(), d + 1], values: v, requires_grad: false, grad: None }
}
