//! Forward and backward passes of the source/target graph autoencoder.
//!
//! The trunk alternates source and target propagation steps through the
//! masked weighted adjacency; three output projection pairs over the shared
//! final hidden layer produce the mean, lower-quantile and upper-quantile
//! node embeddings. Gradients are hand-derived reverse-mode.

use crate::error::{CoreError, Result};
use crate::gae::{Head, HEADS};
use crate::graph::{Graph, MaskedWeightMatrix};
use crate::numerics::{pinball, pinball_grad, Matrix, ParamSet};

/// Edge-list view of the two propagation operators built from the masked
/// weighted adjacency.
///
/// Raw traffic volumes as propagation coefficients blow activations up
/// geometrically with depth, so each direction is normalized to a weighted
/// average: the source update gathers out-neighbors with coefficients
/// `w_uv / dout_u`, the target update gathers in-neighbors with
/// `w_uv / din_v`. Both keep layer outputs O(1) at any weight scale and
/// propagate constant signals exactly. Entries follow the graph's
/// canonical edge order, which fixes the accumulation order of the
/// products below and keeps them bitwise deterministic.
pub(crate) struct SparseAdjacency {
    n: usize,
    /// `(source, target, out-normalized coeff, in-normalized coeff)`.
    entries: Vec<(usize, usize, f64, f64)>,
}

impl SparseAdjacency {
    pub(crate) fn new(g: &Graph, masked: &MaskedWeightMatrix) -> Self {
        let n = g.n_nodes();
        let mut out_degree = vec![0.0f64; n];
        let mut in_degree = vec![0.0f64; n];
        for &(u, v) in g.edges() {
            let w = masked.values().get(u, v);
            out_degree[u] += w;
            in_degree[v] += w;
        }
        let entries = g
            .edges()
            .iter()
            .map(|&(u, v)| {
                let w = masked.values().get(u, v);
                let fwd = if out_degree[u] > 0.0 { w / out_degree[u] } else { 0.0 };
                let bwd = if in_degree[v] > 0.0 { w / in_degree[v] } else { 0.0 };
                (u, v, fwd, bwd)
            })
            .collect();
        Self { n, entries }
    }

    /// Dense renderings of the source-direction and target-direction
    /// operators, for cross-checks.
    pub(crate) fn to_dense(&self) -> (Matrix, Matrix) {
        let mut fwd = Matrix::zeros(self.n, self.n);
        let mut bwd = Matrix::zeros(self.n, self.n);
        for &(u, v, f, b) in &self.entries {
            fwd.set(u, v, f);
            bwd.set(v, u, b);
        }
        (fwd, bwd)
    }

    /// Source aggregate: `out[u] += coeff_uv * h[v]` over out-edges.
    fn src_propagate(&self, h: &Matrix) -> Matrix {
        let d = h.cols();
        let mut out = Matrix::zeros(self.n, d);
        for &(u, v, f, _) in &self.entries {
            let row = u * d;
            let out_data = out.data_mut();
            for (k, &hv) in h.row(v).iter().enumerate() {
                out_data[row + k] += f * hv;
            }
        }
        out
    }

    /// Adjoint of [`Self::src_propagate`].
    fn src_propagate_adjoint(&self, g: &Matrix) -> Matrix {
        let d = g.cols();
        let mut out = Matrix::zeros(self.n, d);
        for &(u, v, f, _) in &self.entries {
            let row = v * d;
            let out_data = out.data_mut();
            for (k, &gu) in g.row(u).iter().enumerate() {
                out_data[row + k] += f * gu;
            }
        }
        out
    }

    /// Target aggregate: `out[v] += coeff_uv * h[u]` over in-edges.
    fn tgt_propagate(&self, h: &Matrix) -> Matrix {
        let d = h.cols();
        let mut out = Matrix::zeros(self.n, d);
        for &(u, v, _, b) in &self.entries {
            let row = v * d;
            let out_data = out.data_mut();
            for (k, &hu) in h.row(u).iter().enumerate() {
                out_data[row + k] += b * hu;
            }
        }
        out
    }

    /// Adjoint of [`Self::tgt_propagate`].
    fn tgt_propagate_adjoint(&self, g: &Matrix) -> Matrix {
        let d = g.cols();
        let mut out = Matrix::zeros(self.n, d);
        for &(u, v, _, b) in &self.entries {
            let row = u * d;
            let out_data = out.data_mut();
            for (k, &gv) in g.row(v).iter().enumerate() {
                out_data[row + k] += b * gv;
            }
        }
        out
    }
}

/// Standardize features column-wise to zero mean and unit variance.
/// Constant columns are centered only.
pub fn standardize_features(x: &Matrix) -> Matrix {
    let (n, p) = x.shape();
    let mut out = x.clone();
    for c in 0..p {
        let mut mean = 0.0;
        for r in 0..n {
            mean += x.get(r, c);
        }
        mean /= n as f64;
        let mut var = 0.0;
        for r in 0..n {
            let d = x.get(r, c) - mean;
            var += d * d;
        }
        var /= n as f64;
        let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        for r in 0..n {
            out.set(r, c, (x.get(r, c) - mean) / scale);
        }
    }
    out
}

pub(crate) fn layer_param_names(layer: usize) -> (String, String) {
    (
        format!("layer{layer}.src_weight"),
        format!("layer{layer}.tgt_weight"),
    )
}

pub(crate) fn head_param_names(head: Head) -> (String, String) {
    (
        format!("{}.src_proj", head.key()),
        format!("{}.tgt_proj", head.key()),
    )
}

/// Number of trunk layers encoded in a parameter set.
pub(crate) fn trunk_depth(params: &ParamSet) -> usize {
    let mut l = 0;
    while params.value(&layer_param_names(l).0).is_ok() {
        l += 1;
    }
    l
}

/// Cached activations of one full forward pass.
pub(crate) struct Forward {
    /// Pre-projection source aggregate per layer: `W * input`.
    src_agg: Vec<Matrix>,
    src_pre: Vec<Matrix>,
    src_hidden: Vec<Matrix>,
    /// Pre-projection target aggregate per layer: `W^T * src_hidden`.
    tgt_agg: Vec<Matrix>,
    tgt_pre: Vec<Matrix>,
    src_context: Matrix,
    tgt_context: Matrix,
    /// Per-head (source, target) embeddings, in `HEADS` order.
    pub embeddings: Vec<(Matrix, Matrix)>,
}

impl Forward {
    pub(crate) fn head(&self, head: Head) -> &(Matrix, Matrix) {
        &self.embeddings[head as usize]
    }

    /// Smallest absolute pre-activation across the trunk; finite-difference
    /// checks are only trustworthy when this is well above the step size.
    pub(crate) fn min_relu_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for mat in self.src_pre.iter().chain(self.tgt_pre.iter()) {
            for &v in mat.data() {
                m = m.min(v.abs());
            }
        }
        m
    }
}

pub(crate) fn forward(
    adj: &SparseAdjacency,
    x_std: &Matrix,
    params: &ParamSet,
) -> Result<Forward> {
    let depth = trunk_depth(params);
    if depth == 0 {
        return Err(CoreError::ModelState(
            "parameter set has no trunk layers".into(),
        ));
    }
    let mut src_agg = Vec::with_capacity(depth);
    let mut src_pre = Vec::with_capacity(depth);
    let mut src_hidden = Vec::with_capacity(depth);
    let mut tgt_agg = Vec::with_capacity(depth);
    let mut tgt_pre = Vec::with_capacity(depth);
    let mut prev_tgt = x_std.clone();

    for l in 0..depth {
        let (src_name, tgt_name) = layer_param_names(l);
        let src_weight = params.value(&src_name)?;
        let tgt_weight = params.value(&tgt_name)?;

        let agg_s = adj.src_propagate(&prev_tgt);
        let pre_s = agg_s.matmul(src_weight)?;
        let hid_s = pre_s.relu();

        let agg_t = adj.tgt_propagate(&hid_s);
        let pre_t = agg_t.matmul(tgt_weight)?;
        prev_tgt = pre_t.relu();

        src_agg.push(agg_s);
        src_pre.push(pre_s);
        src_hidden.push(hid_s);
        tgt_agg.push(agg_t);
        tgt_pre.push(pre_t);
    }

    let src_context = adj.src_propagate(&prev_tgt);
    let tgt_context = adj.tgt_propagate(&src_hidden[depth - 1]);

    let mut embeddings = Vec::with_capacity(HEADS.len());
    for &head in HEADS {
        let (src_name, tgt_name) = head_param_names(head);
        let z_src = src_context.matmul(params.value(&src_name)?)?;
        let z_tgt = tgt_context.matmul(params.value(&tgt_name)?)?;
        embeddings.push((z_src, z_tgt));
    }

    Ok(Forward {
        src_agg,
        src_pre,
        src_hidden,
        tgt_agg,
        tgt_pre,
        src_context,
        tgt_context,
        embeddings,
    })
}

/// Inner product of embedding rows for the given node pairs.
pub(crate) fn decode_pairs(
    z_src: &Matrix,
    z_tgt: &Matrix,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    if z_src.cols() != z_tgt.cols() {
        return Err(CoreError::Dimension {
            op: "decode",
            lhs: format!("{}x{}", z_src.rows(), z_src.cols()),
            rhs: format!("{}x{}", z_tgt.rows(), z_tgt.cols()),
        });
    }
    let mut out = Vec::with_capacity(pairs.len());
    for &(u, v) in pairs {
        if u >= z_src.rows() || v >= z_tgt.rows() {
            return Err(CoreError::Validation(format!(
                "edge ({u}, {v}) outside embedding rows {}x{}",
                z_src.rows(),
                z_tgt.rows()
            )));
        }
        let mut acc = 0.0;
        for (a, b) in z_src.row(u).iter().zip(z_tgt.row(v)) {
            acc += a * b;
        }
        out.push(acc);
    }
    Ok(out)
}

/// The combined training objective on one edge list, term by term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Masked Frobenius error of the mean head over the edge list.
    pub frobenius: f64,
    /// Summed pinball loss of the lower-quantile head at level `alpha/2`.
    pub pinball_lower: f64,
    /// Summed pinball loss of the upper-quantile head at level `1 - alpha/2`.
    pub pinball_upper: f64,
    pub total: f64,
}

pub(crate) struct EdgeBatch {
    pub pairs: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
}

impl EdgeBatch {
    pub(crate) fn gather(g: &Graph, edges: &[usize]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(edges.len());
        let mut weights = Vec::with_capacity(edges.len());
        for &idx in edges {
            if idx >= g.n_edges() {
                return Err(CoreError::Validation(format!(
                    "edge index {idx} outside 0..{}",
                    g.n_edges()
                )));
            }
            pairs.push(g.edge(idx));
            weights.push(g.require_weight(idx)?);
        }
        Ok(Self { pairs, weights })
    }
}

pub(crate) fn loss_on_batch(fwd: &Forward, batch: &EdgeBatch, alpha: f64) -> Result<LossBreakdown> {
    let (zs_m, zt_m) = fwd.head(Head::Mean);
    let (zs_l, zt_l) = fwd.head(Head::Lower);
    let (zs_u, zt_u) = fwd.head(Head::Upper);
    let mean = decode_pairs(zs_m, zt_m, &batch.pairs)?;
    let lower = decode_pairs(zs_l, zt_l, &batch.pairs)?;
    let upper = decode_pairs(zs_u, zt_u, &batch.pairs)?;

    let mut sq = 0.0;
    for (p, w) in mean.iter().zip(&batch.weights) {
        let r = p - w;
        sq += r * r;
    }
    let frobenius = sq.sqrt();

    let lo_level = alpha / 2.0;
    let hi_level = 1.0 - alpha / 2.0;
    let mut pinball_lower = 0.0;
    let mut pinball_upper = 0.0;
    for ((w, lo), hi) in batch.weights.iter().zip(&lower).zip(&upper) {
        pinball_lower += pinball(*w, *lo, lo_level);
        pinball_upper += pinball(*w, *hi, hi_level);
    }

    Ok(LossBreakdown {
        frobenius,
        pinball_lower,
        pinball_upper,
        total: frobenius + pinball_lower + pinball_upper,
    })
}

/// Distance from the loss surface to its nearest kink: ReLU zero crossings
/// and pinball `y == y_hat` points, plus the Frobenius root at zero
/// residual.
pub(crate) fn kink_margin_of(fwd: &Forward, batch: &EdgeBatch, _alpha: f64) -> Result<f64> {
    let mut margin = fwd.min_relu_margin();
    let (zs_l, zt_l) = fwd.head(Head::Lower);
    let (zs_u, zt_u) = fwd.head(Head::Upper);
    let (zs_m, zt_m) = fwd.head(Head::Mean);
    let lower = decode_pairs(zs_l, zt_l, &batch.pairs)?;
    let upper = decode_pairs(zs_u, zt_u, &batch.pairs)?;
    let mean = decode_pairs(zs_m, zt_m, &batch.pairs)?;
    let mut sq = 0.0;
    for ((w, lo), hi) in batch.weights.iter().zip(&lower).zip(&upper) {
        margin = margin.min((w - lo).abs());
        margin = margin.min((w - hi).abs());
    }
    for (p, w) in mean.iter().zip(&batch.weights) {
        let r = p - w;
        sq += r * r;
    }
    margin = margin.min(sq.sqrt());
    Ok(margin)
}

/// Backward pass: accumulate gradients of [`loss_on_batch`] into `params`.
pub(crate) fn backward_on_batch(
    adj: &SparseAdjacency,
    fwd: &Forward,
    batch: &EdgeBatch,
    params: &mut ParamSet,
    alpha: f64,
) -> Result<()> {
    let depth = fwd.src_hidden.len();
    let n = fwd.src_context.rows();
    let ctx_dim = fwd.src_context.cols();

    // Per-edge gradients of the three loss terms.
    let (zs_m, zt_m) = fwd.head(Head::Mean);
    let mean = decode_pairs(zs_m, zt_m, &batch.pairs)?;
    let mut sq = 0.0;
    for (p, w) in mean.iter().zip(&batch.weights) {
        let r = p - w;
        sq += r * r;
    }
    let frob = sq.sqrt();

    let lo_level = alpha / 2.0;
    let hi_level = 1.0 - alpha / 2.0;

    let mut d_src_context = Matrix::zeros(n, ctx_dim);
    let mut d_tgt_context = Matrix::zeros(n, ctx_dim);

    for &head in HEADS {
        let (z_src, z_tgt) = fwd.head(head);
        let k = z_src.cols();
        let preds = decode_pairs(z_src, z_tgt, &batch.pairs)?;

        let mut d_z_src = Matrix::zeros(n, k);
        let mut d_z_tgt = Matrix::zeros(n, k);
        for (i, (&(u, v), w)) in batch.pairs.iter().zip(&batch.weights).enumerate() {
            let g = match head {
                Head::Mean => {
                    if frob > 0.0 {
                        (preds[i] - w) / frob
                    } else {
                        0.0
                    }
                }
                Head::Lower => pinball_grad(*w, preds[i], lo_level),
                Head::Upper => pinball_grad(*w, preds[i], hi_level),
            };
            if g == 0.0 {
                continue;
            }
            for t in 0..k {
                let zsv = z_src.get(u, t);
                let ztv = z_tgt.get(v, t);
                let cur_s = d_z_src.get(u, t);
                d_z_src.set(u, t, cur_s + g * ztv);
                let cur_t = d_z_tgt.get(v, t);
                d_z_tgt.set(v, t, cur_t + g * zsv);
            }
        }

        let (src_name, tgt_name) = head_param_names(head);
        // d proj = context^T · d z ; d context += d z · proj^T
        let d_src_proj = fwd.src_context.transpose().matmul(&d_z_src)?;
        let d_tgt_proj = fwd.tgt_context.transpose().matmul(&d_z_tgt)?;
        let src_proj = params.value(&src_name)?.clone();
        let tgt_proj = params.value(&tgt_name)?.clone();
        d_src_context = d_src_context.add(&d_z_src.matmul(&src_proj.transpose())?)?;
        d_tgt_context = d_tgt_context.add(&d_z_tgt.matmul(&tgt_proj.transpose())?)?;
        accumulate(params, &src_name, &d_src_proj)?;
        accumulate(params, &tgt_name, &d_tgt_proj)?;
    }

    // Contexts: src_context = W · tgt_hidden[depth-1], tgt_context = W^T · src_hidden[depth-1].
    let mut d_tgt_hidden = adj.mul_transposed(&d_src_context);
    let mut d_src_hidden = adj.mul(&d_tgt_context);

    for l in (0..depth).rev() {
        let (src_name, tgt_name) = layer_param_names(l);
        let src_weight = params.value(&src_name)?.clone();
        let tgt_weight = params.value(&tgt_name)?.clone();

        // Target step: tgt_hidden = relu(tgt_agg · tgt_weight)
        let d_tgt_pre = relu_backward(&d_tgt_hidden, &fwd.tgt_pre[l])?;
        let d_tgt_weight = fwd.tgt_agg[l].transpose().matmul(&d_tgt_pre)?;
        let d_tgt_agg = d_tgt_pre.matmul(&tgt_weight.transpose())?;
        // tgt_agg = W^T · src_hidden
        d_src_hidden = d_src_hidden.add(&adj.mul(&d_tgt_agg))?;
        accumulate(params, &tgt_name, &d_tgt_weight)?;

        // Source step: src_hidden = relu(src_agg · src_weight)
        let d_src_pre = relu_backward(&d_src_hidden, &fwd.src_pre[l])?;
        let d_src_weight = fwd.src_agg[l].transpose().matmul(&d_src_pre)?;
        accumulate(params, &src_name, &d_src_weight)?;
        if l > 0 {
            // src_agg = W · tgt_hidden[l-1]
            let d_src_agg = d_src_pre.matmul(&src_weight.transpose())?;
            d_tgt_hidden = adj.mul_transposed(&d_src_agg);
            d_src_hidden = Matrix::zeros(n, fwd.src_hidden[l - 1].cols());
        }
    }

    Ok(())
}

fn relu_backward(upstream: &Matrix, pre: &Matrix) -> Result<Matrix> {
    let mut out = upstream.clone();
    for (o, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *o = 0.0;
        }
    }
    Ok(out)
}

fn accumulate(params: &mut ParamSet, name: &str, delta: &Matrix) -> Result<()> {
    let grad = params.grad_mut(name)?;
    for (g, d) in grad.data_mut().iter_mut().zip(delta.data()) {
        *g += d;
    }
    Ok(())
}
