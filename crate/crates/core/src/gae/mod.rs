//! Quantile-headed graph autoencoder: a source/target encoder over the
//! masked weighted adjacency, an inner-product decoder, and one mean plus
//! two quantile output heads trained jointly.

mod encoder;
mod train;

pub use encoder::{standardize_features, LossBreakdown};
pub use train::train;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::{FillStrategy, Graph, MaskedWeightMatrix};
use crate::numerics::{check_alpha, Matrix, ParamSet};

use encoder::{
    backward_on_batch, decode_pairs, forward, head_param_names, kink_margin_of,
    layer_param_names, loss_on_batch, EdgeBatch, SparseAdjacency,
};

/// The three output heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Mean = 0,
    Lower = 1,
    Upper = 2,
}

impl Head {
    pub fn key(self) -> &'static str {
        match self {
            Head::Mean => "mean",
            Head::Lower => "lower",
            Head::Upper => "upper",
        }
    }
}

pub const HEADS: &[Head] = &[Head::Mean, Head::Lower, Head::Upper];

/// Model architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    /// Trunk layer widths; length is the number of propagation layers.
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    /// Miscoverage rate; the quantile heads target `alpha/2` and `1 - alpha/2`.
    pub alpha: f64,
    pub fill: FillStrategy,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    /// Early-stopping patience on the validation loss, in epochs.
    pub patience: usize,
    pub seed: u64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 32],
            embedding_dim: 16,
            alpha: 0.05,
            fill: FillStrategy::GlobalMean,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 2000,
            patience: 100,
            seed: 0,
        }
    }
}

impl GaeConfig {
    pub fn layers(&self) -> usize {
        self.hidden_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(CoreError::Config("at least one trunk layer required".into()));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) || self.embedding_dim == 0 {
            return Err(CoreError::Config("layer dimensions must be positive".into()));
        }
        check_alpha(self.alpha)?;
        if self.learning_rate <= 0.0 {
            return Err(CoreError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(CoreError::Config("max_epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Per-edge triple prediction. Edges are kept sorted by index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgePrediction {
    edges: Vec<usize>,
    mean: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl EdgePrediction {
    pub(crate) fn new(mut rows: Vec<(usize, f64, f64, f64)>) -> Self {
        rows.sort_by_key(|r| r.0);
        let edges = rows.iter().map(|r| r.0).collect();
        let mean = rows.iter().map(|r| r.1).collect();
        let lo = rows.iter().map(|r| r.2).collect();
        let hi = rows.iter().map(|r| r.3).collect();
        Self {
            edges,
            mean,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// `(mean, lo, hi)` for an edge index; error when not covered.
    pub fn lookup(&self, edge: usize) -> Result<(f64, f64, f64)> {
        let i = self
            .edges
            .binary_search(&edge)
            .map_err(|_| CoreError::Missing(format!("prediction for edge {edge}")))?;
        Ok((self.mean[i], self.lo[i], self.hi[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, f64, f64)> + '_ {
        self.edges
            .iter()
            .zip(self.mean.iter())
            .zip(self.lo.iter())
            .zip(self.hi.iter())
            .map(|(((&e, &m), &l), &h)| (e, m, l, h))
    }
}

/// Per-head `(source, target)` node embeddings from one forward pass.
pub struct Embeddings {
    pub mean: (Matrix, Matrix),
    pub lower: (Matrix, Matrix),
    pub upper: (Matrix, Matrix),
}

/// One epoch of the training curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Training trajectory and the selected snapshot.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Trained model: shared trunk plus three output projections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileModel {
    config: GaeConfig,
    params: ParamSet,
    trained: bool,
    history: TrainingHistory,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: QuantileModel,
}

impl QuantileModel {
    /// Freshly initialized, untrained model.
    pub fn init(config: GaeConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, input_dim);
        Ok(Self {
            config,
            params,
            trained: false,
            history: TrainingHistory::default(),
        })
    }

    pub fn config(&self) -> &GaeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn history(&self) -> &TrainingHistory {
        &self.history
    }

    pub(crate) fn set_trained(&mut self, params: ParamSet, history: TrainingHistory) {
        self.params = params;
        self.history = history;
        self.trained = true;
    }

    /// Triple prediction for the requested edges, with quantile crossings
    /// repaired by sorting `(lo, hi)` per edge.
    pub fn predict(
        &self,
        g: &Graph,
        masked: &MaskedWeightMatrix,
        edges: &[usize],
    ) -> Result<EdgePrediction> {
        if !self.trained {
            return Err(CoreError::ModelState(
                "predict called on an untrained model".into(),
            ));
        }
        if masked.fill_strategy() != self.config.fill {
            return Err(CoreError::Config(format!(
                "masked matrix uses fill {}, model was trained with {}",
                masked.fill_strategy(),
                self.config.fill
            )));
        }
        let emb = encode(g, masked, &self.params)?;
        let pairs: Vec<(usize, usize)> = edges
            .iter()
            .map(|&i| {
                if i < g.n_edges() {
                    Ok(g.edge(i))
                } else {
                    Err(CoreError::Validation(format!(
                        "edge index {i} outside 0..{}",
                        g.n_edges()
                    )))
                }
            })
            .collect::<Result<_>>()?;
        let mean = decode(&emb.mean.0, &emb.mean.1, &pairs)?;
        let lo = decode(&emb.lower.0, &emb.lower.1, &pairs)?;
        let hi = decode(&emb.upper.0, &emb.upper.1, &pairs)?;
        let rows = edges
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let (a, b) = if lo[i] <= hi[i] {
                    (lo[i], hi[i])
                } else {
                    (hi[i], lo[i])
                };
                (e, mean[i], a, b)
            })
            .collect();
        Ok(EdgePrediction::new(rows))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let json = serde_json::to_string(&ck)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(CoreError::Validation(format!(
                "checkpoint version {} not supported (expected {})",
                ck.version, CHECKPOINT_VERSION
            )));
        }
        Ok(ck.model)
    }
}

/// Glorot-style uniform initialization of all trunk and head parameters.
pub fn init_params(config: &GaeConfig, input_dim: usize) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::new();
    let glorot = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("sized buffer")
    };

    let mut in_dim = input_dim;
    for (l, &h) in config.hidden_dims.iter().enumerate() {
        let (src_name, tgt_name) = layer_param_names(l);
        params.insert(src_name, glorot(in_dim, h, &mut rng));
        params.insert(tgt_name, glorot(h, h, &mut rng));
        in_dim = h;
    }
    let last = *config.hidden_dims.last().expect("validated nonempty");
    for &head in HEADS {
        let (src_name, tgt_name) = head_param_names(head);
        params.insert(src_name, glorot(last, config.embedding_dim, &mut rng));
        params.insert(tgt_name, glorot(last, config.embedding_dim, &mut rng));
    }
    params
}

/// Dense view of the encoder's propagation operator: the masked weighted
/// adjacency normalized by weighted out/in degrees. Exposed so tests can
/// reproduce the encoder with plain matrix products.
pub fn propagation_matrix(g: &Graph, masked: &MaskedWeightMatrix) -> Matrix {
    SparseAdjacency::new(g, masked).to_dense()
}

/// Run the encoder: per-head source/target node embeddings.
pub fn encode(g: &Graph, masked: &MaskedWeightMatrix, params: &ParamSet) -> Result<Embeddings> {
    let adj = SparseAdjacency::new(g, masked);
    let x_std = standardize_features(g.node_features());
    let fwd = forward(&adj, &x_std, params)?;
    let mut it = fwd.embeddings.into_iter();
    Ok(Embeddings {
        mean: it.next().expect("three heads"),
        lower: it.next().expect("three heads"),
        upper: it.next().expect("three heads"),
    })
}

/// Inner-product decoder for one head over explicit node pairs.
pub fn decode(z_src: &Matrix, z_tgt: &Matrix, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    decode_pairs(z_src, z_tgt, pairs)
}

/// Evaluate the combined objective on the given edges.
pub fn training_loss(
    g: &Graph,
    masked: &MaskedWeightMatrix,
    params: &ParamSet,
    edges: &[usize],
    alpha: f64,
) -> Result<LossBreakdown> {
    check_alpha(alpha)?;
    let adj = SparseAdjacency::new(g, masked);
    let x_std = standardize_features(g.node_features());
    let fwd = forward(&adj, &x_std, params)?;
    let batch = EdgeBatch::gather(g, edges)?;
    loss_on_batch(&fwd, &batch, alpha)
}

/// Evaluate the combined objective and accumulate its gradients into the
/// parameter set's gradient buffers.
pub fn training_loss_and_grad(
    g: &Graph,
    masked: &MaskedWeightMatrix,
    params: &mut ParamSet,
    edges: &[usize],
    alpha: f64,
) -> Result<LossBreakdown> {
    check_alpha(alpha)?;
    let adj = SparseAdjacency::new(g, masked);
    let x_std = standardize_features(g.node_features());
    let fwd = forward(&adj, &x_std, params)?;
    let batch = EdgeBatch::gather(g, edges)?;
    let loss = loss_on_batch(&fwd, &batch, alpha)?;
    backward_on_batch(&adj, &fwd, &batch, params, alpha)?;
    Ok(loss)
}

/// Distance to the nearest nondifferentiable point of the objective at the
/// current parameters. Finite-difference gradient checks are reliable only
/// when this comfortably exceeds the probe step.
pub fn kink_margin(
    g: &Graph,
    masked: &MaskedWeightMatrix,
    params: &ParamSet,
    edges: &[usize],
    alpha: f64,
) -> Result<f64> {
    let adj = SparseAdjacency::new(g, masked);
    let x_std = standardize_features(g.node_features());
    let fwd = forward(&adj, &x_std, params)?;
    let batch = EdgeBatch::gather(g, edges)?;
    kink_margin_of(&fwd, &batch, alpha)
}
