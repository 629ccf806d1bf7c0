//! Vector-quantization codebooks.
//!
//! A codebook is an ordered set of K learnable D-dimensional embeddings with
//! usage statistics. Two update mechanisms exist: exponential-moving-average
//! cluster statistics (the shared book) and plain gradient descent through a
//! stop-gradient loss (the private books). Quantization itself copies
//! embeddings verbatim, so `quantized[j] == codes[indices[j]]` holds exactly
//! in floating point.

use crate::error::{CoreError, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// How a codebook's embeddings move during training.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateMode {
    /// Cluster-statistics EMA: per-code running size and embedding sum,
    /// Laplace-smoothed by `eps`. Codes never receive gradients.
    Ema {
        cluster_size: Vec<f64>,
        embed_sum: Vec<f64>,
        eps: f64,
    },
    /// Codes are ordinary parameters updated by the optimizer.
    Loss,
}

#[derive(Debug, Clone)]
pub struct Codebook {
    codes: Tensor,
    update: UpdateMode,
    usage: Vec<u64>,
    /// Updates since each code was last assigned a token (dead-code reseeding).
    idle: Vec<u32>,
}

/// Per-token quantization output.
#[derive(Debug, Clone)]
pub struct QuantizationResult {
    pub indices: Vec<usize>,
    /// L x D, rows copied from the codebook.
    pub quantized: Tensor,
    pub distances: Vec<f64>,
}

/// Nearest code to `z` by Euclidean distance; ties break to the lower index.
pub fn nearest_code(z: &[f64], cb: &Codebook) -> Result<(usize, f64)> {
    if z.len() != cb.dim() {
        return Err(CoreError::shape(
            "nearest_code",
            format!("query dim {} vs codebook dim {}", z.len(), cb.dim()),
        ));
    }
    let d = cb.dim();
    let mut best = 0usize;
    let mut best_sq = f64::INFINITY;
    for k in 0..cb.len() {
        let code = &cb.codes.data()[k * d..(k + 1) * d];
        let mut sq = 0.0;
        for (a, b) in z.iter().zip(code) {
            let diff = a - b;
            sq += diff * diff;
        }
        if sq < best_sq {
            best_sq = sq;
            best = k;
        }
    }
    Ok((best, best_sq.sqrt()))
}

impl Codebook {
    /// Codes drawn uniformly from [-1/K, 1/K].
    pub fn init_uniform(k: usize, d: usize, mode_ema: Option<f64>, rng: &mut ChaCha8Rng) -> Self {
        assert!(k >= 1 && d >= 1);
        let bound = 1.0 / k as f64;
        let data: Vec<f64> = (0..k * d).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::from_codes(Tensor::matrix(k, d, data).unwrap(), mode_ema)
    }

    /// Wrap existing codes; `mode_ema = Some(eps)` selects EMA updates with
    /// fresh statistics (size 1, sum = code), `None` selects loss mode.
    pub fn from_codes(codes: Tensor, mode_ema: Option<f64>) -> Self {
        let k = codes.rows();
        let update = match mode_ema {
            Some(eps) => UpdateMode::Ema {
                cluster_size: vec![1.0; k],
                embed_sum: codes.data().to_vec(),
                eps,
            },
            None => UpdateMode::Loss,
        };
        Codebook {
            usage: vec![0; k],
            idle: vec![0; k],
            codes,
            update,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.codes.cols()
    }

    pub fn codes(&self) -> &Tensor {
        &self.codes
    }

    pub fn codes_mut(&mut self) -> &mut Tensor {
        &mut self.codes
    }

    pub fn code(&self, k: usize) -> &[f64] {
        self.codes.row(k)
    }

    pub fn is_ema(&self) -> bool {
        matches!(self.update, UpdateMode::Ema { .. })
    }

    pub fn usage(&self) -> &[u64] {
        &self.usage
    }

    pub fn reset_usage(&mut self) {
        self.usage.iter_mut().for_each(|u| *u = 0);
    }

    pub fn note_usage(&mut self, index: usize) {
        self.usage[index] += 1;
    }

    pub fn ema_state(&self) -> Option<(&[f64], &[f64], f64)> {
        match &self.update {
            UpdateMode::Ema { cluster_size, embed_sum, eps } => {
                Some((cluster_size, embed_sum, *eps))
            }
            UpdateMode::Loss => None,
        }
    }

    /// Restore EMA statistics (checkpoint load).
    pub fn set_ema_state(&mut self, cluster_size: Vec<f64>, embed_sum: Vec<f64>) -> Result<()> {
        match &mut self.update {
            UpdateMode::Ema { cluster_size: cs, embed_sum: es, .. } => {
                if cluster_size.len() != cs.len() || embed_sum.len() != es.len() {
                    return Err(CoreError::Checkpoint(
                        "EMA state size mismatch".to_string(),
                    ));
                }
                *cs = cluster_size;
                *es = embed_sum;
                Ok(())
            }
            UpdateMode::Loss => Err(CoreError::InvalidArgument(
                "loss-mode codebook has no EMA state".to_string(),
            )),
        }
    }

    /// Quantize each row of `z` (L x D). Usage counts increment per selected
    /// index.
    pub fn quantize(&mut self, z: &Tensor) -> Result<QuantizationResult> {
        if z.cols() != self.dim() {
            return Err(CoreError::shape(
                "quantize",
                format!("token dim {} vs codebook dim {}", z.cols(), self.dim()),
            ));
        }
        let l = z.rows();
        let d = self.dim();
        let mut indices = Vec::with_capacity(l);
        let mut distances = Vec::with_capacity(l);
        let mut out = Vec::with_capacity(l * d);
        for j in 0..l {
            let (k, dist) = nearest_code(z.row(j), self)?;
            indices.push(k);
            distances.push(dist);
            out.extend_from_slice(self.code(k));
            self.usage[k] += 1;
        }
        Ok(QuantizationResult {
            indices,
            quantized: Tensor::matrix(l, d, out)?,
            distances,
        })
    }

    /// EMA update from one batch of assignments: per-code token count `n_k`
    /// and per-code sum of assigned latent rows.
    ///
    /// size_k <- alpha*size_k + (1-alpha)*n_k;
    /// sum_k  <- alpha*sum_k  + (1-alpha)*assigned_sum_k;
    /// code_k <- sum_k / (size_k + eps).
    ///
    /// Codes with n_k == 0 keep their direction (both statistics decay by the
    /// same factor).
    pub fn ema_update(&mut self, counts: &[f64], assigned_sums: &[f64], alpha: f64) -> Result<()> {
        let (k, d) = (self.len(), self.dim());
        if !(0.0..1.0).contains(&alpha) {
            return Err(CoreError::InvalidArgument(format!(
                "EMA alpha must be in [0, 1), got {alpha}"
            )));
        }
        if counts.len() != k || assigned_sums.len() != k * d {
            return Err(CoreError::shape(
                "ema_update",
                format!(
                    "counts {} / sums {} vs K={k}, D={d}",
                    counts.len(),
                    assigned_sums.len()
                ),
            ));
        }
        match &mut self.update {
            UpdateMode::Loss => Err(CoreError::InvalidArgument(
                "ema_update on a loss-mode codebook".to_string(),
            )),
            UpdateMode::Ema { cluster_size, embed_sum, eps } => {
                for i in 0..k {
                    cluster_size[i] = alpha * cluster_size[i] + (1.0 - alpha) * counts[i];
                    for j in 0..d {
                        embed_sum[i * d + j] =
                            alpha * embed_sum[i * d + j] + (1.0 - alpha) * assigned_sums[i * d + j];
                    }
                    let denom = cluster_size[i] + *eps;
                    for j in 0..d {
                        self.codes.data_mut()[i * d + j] = embed_sum[i * d + j] / denom;
                    }
                    if counts[i] > 0.0 {
                        self.idle[i] = 0;
                    } else {
                        self.idle[i] = self.idle[i].saturating_add(1);
                    }
                }
                self.codes.assert_finite("ema_update")?;
                Ok(())
            }
        }
    }

    /// Optional dead-code reseeding: any code idle for `threshold` updates
    /// jumps to the batch latent row farthest from its assigned code
    /// (deterministic; ties to the lower row). Returns reseeded count.
    pub fn reseed_dead(&mut self, threshold: u32, batch_rows: &Tensor, row_dist: &[f64]) -> usize {
        if batch_rows.rows() == 0 {
            return 0;
        }
        let mut far = 0usize;
        for (i, &dv) in row_dist.iter().enumerate() {
            if dv > row_dist[far] {
                far = i;
            }
        }
        let d = self.dim();
        let mut n = 0;
        for k in 0..self.len() {
            if self.idle[k] >= threshold {
                let dst = &mut self.codes.data_mut()[k * d..(k + 1) * d];
                dst.copy_from_slice(batch_rows.row(far));
                if let UpdateMode::Ema { cluster_size, embed_sum, .. } = &mut self.update {
                    cluster_size[k] = 1.0;
                    embed_sum[k * d..(k + 1) * d].copy_from_slice(batch_rows.row(far));
                }
                self.idle[k] = 0;
                n += 1;
            }
        }
        n
    }
}

/// VQ training objective: reconstruction + codebook + beta * commitment,
/// every term mean-reduced over all elements.
///
/// `z_hat` must be the quantized embeddings as a differentiable node (rows
/// gathered from a codes leaf) for the codebook term to reach the codes.
/// Returns (total, rec, code, commit).
pub fn vq_loss(
    g: &mut Graph,
    x: NodeId,
    x_hat: NodeId,
    z: NodeId,
    z_hat: NodeId,
    beta: f64,
) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
    if beta < 0.0 {
        return Err(CoreError::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    let rec = g.mse(x, x_hat)?;
    let z_sg = g.stop_grad(z);
    let code = g.mse(z_sg, z_hat)?;
    let zh_sg = g.stop_grad(z_hat);
    let commit = g.mse(z, zh_sg)?;
    let bc = g.scale(commit, beta);
    let partial = g.add(rec, code)?;
    let total = g.add(partial, bc)?;
    Ok((total, rec, code, commit))
}

/// Private-codebook objective over private-routed tokens only:
/// mean((sg(z) - z_hat)^2). Gradient reaches the code embeddings, never the
/// latent side.
pub fn private_codebook_loss(g: &mut Graph, z_private: NodeId, z_hat_private: NodeId) -> Result<NodeId> {
    let z_sg = g.stop_grad(z_private);
    g.mse(z_sg, z_hat_private)
}

/// exp(entropy) of the normalized usage distribution; ranges over [1, K].
pub fn perplexity(usage: &[u64]) -> Result<f64> {
    let total: u64 = usage.iter().sum();
    if total == 0 {
        return Err(CoreError::InvalidArgument(
            "perplexity of all-zero usage counts".to_string(),
        ));
    }
    let t = total as f64;
    let mut h = 0.0;
    for &u in usage {
        if u > 0 {
            let p = u as f64 / t;
            h -= p * p.ln();
        }
    }
    Ok(h.exp())
}
