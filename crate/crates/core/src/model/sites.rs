//! The four regularization sites of the forward pass.
//!
//! Each site optionally batch-normalizes its input per feature and then
//! applies inverted dropout. Activations are laid out row-major as
//! `rows × features`.

use alloc::vec;
use alloc::vec::Vec;

use super::SiteConfig;

/// Which activation a site wraps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    /// Relation partitions `r_k`.
    RelationInput,
    /// Matching matrices `W_k ×̄₃ r_k`, each `C_e × C_e` entry a feature.
    MatchingMatrix,
    /// Head partitions `h_k`.
    HeadInput,
    /// Hidden layer `h_kᵀ M_k`.
    HiddenOutput,
}

impl Site {
    pub const ALL: [Site; 4] = [
        Site::RelationInput,
        Site::MatchingMatrix,
        Site::HeadInput,
        Site::HiddenOutput,
    ];

    pub fn index(self) -> usize {
        match self {
            Site::RelationInput => 0,
            Site::MatchingMatrix => 1,
            Site::HeadInput => 2,
            Site::HiddenOutput => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Site::RelationInput => "relation_input",
            Site::MatchingMatrix => "matching_matrix",
            Site::HeadInput => "head_input",
            Site::HiddenOutput => "hidden_output",
        }
    }

    pub fn from_name(name: &str) -> Option<Site> {
        Site::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Batch statistics and normalized activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct SiteCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub mask: Option<Vec<f64>>,
}

pub(crate) struct Affine<'a> {
    pub scale: &'a [f64],
    pub shift: &'a [f64],
}

/// Inference: batchnorm with running statistics, no dropout.
pub(crate) fn forward_inference(
    cfg: &SiteConfig,
    epsilon: f64,
    affine: &Affine<'_>,
    running_mean: &[f64],
    running_var: &[f64],
    x: &mut [f64],
) {
    if !cfg.batchnorm {
        return;
    }
    let features = affine.scale.len();
    for row in x.chunks_exact_mut(features) {
        for (j, v) in row.iter_mut().enumerate() {
            let inv = 1.0 / libm::sqrt(running_var[j] + epsilon);
            *v = affine.scale[j] * (*v - running_mean[j]) * inv + affine.shift[j];
        }
    }
}

/// Inference-mode site as a per-feature affine map `x ↦ a x + b`.
pub(crate) fn inference_affine(
    cfg: &SiteConfig,
    epsilon: f64,
    affine: &Affine<'_>,
    running_mean: &[f64],
    running_var: &[f64],
    features: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    if !cfg.batchnorm {
        return None;
    }
    let mut a = vec![0.0; features];
    let mut b = vec![0.0; features];
    for j in 0..features {
        a[j] = affine.scale[j] / libm::sqrt(running_var[j] + epsilon);
        b[j] = affine.shift[j] - a[j] * running_mean[j];
    }
    Some((a, b))
}

/// Training: batchnorm with batch statistics, then the given dropout mask.
pub(crate) fn forward_training(
    cfg: &SiteConfig,
    epsilon: f64,
    affine: &Affine<'_>,
    rows: usize,
    x: &mut [f64],
    mask: Option<&[f64]>,
) -> SiteCache {
    let mut cache = SiteCache::default();
    if cfg.batchnorm {
        let features = affine.scale.len();
        let mut mean = vec![0.0; features];
        let mut var = vec![0.0; features];
        for row in x.chunks_exact(features) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        for row in x.chunks_exact(features) {
            for j in 0..features {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= rows as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + epsilon)).collect();
        let mut xhat = vec![0.0; x.len()];
        for (row, hat) in x.chunks_exact_mut(features).zip(xhat.chunks_exact_mut(features)) {
            for j in 0..features {
                hat[j] = (row[j] - mean[j]) * inv_std[j];
                row[j] = affine.scale[j] * hat[j] + affine.shift[j];
            }
        }
        cache.xhat = xhat;
        cache.inv_std = inv_std;
        cache.mean = mean;
        cache.var = var;
    }
    if let Some(mask) = mask {
        for (v, m) in x.iter_mut().zip(mask) {
            *v *= m;
        }
        cache.mask = Some(mask.to_vec());
    }
    cache
}

/// Turns `dy` (gradient w.r.t. the site output) into the gradient w.r.t. the
/// site input, accumulating batchnorm scale/shift gradients.
pub(crate) fn backward(
    cfg: &SiteConfig,
    scale: &[f64],
    cache: &SiteCache,
    rows: usize,
    dy: &mut [f64],
    dscale: &mut [f64],
    dshift: &mut [f64],
) {
    if let Some(mask) = &cache.mask {
        for (d, m) in dy.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    if !cfg.batchnorm {
        return;
    }
    let features = scale.len();
    let n = rows as f64;
    let mut sum_dxhat = vec![0.0; features];
    let mut sum_dxhat_xhat = vec![0.0; features];
    for (row, hat) in dy.chunks_exact(features).zip(cache.xhat.chunks_exact(features)) {
        for j in 0..features {
            dshift[j] += row[j];
            dscale[j] += row[j] * hat[j];
            let dxhat = row[j] * scale[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * hat[j];
        }
    }
    for (row, hat) in dy.chunks_exact_mut(features).zip(cache.xhat.chunks_exact(features)) {
        for j in 0..features {
            let dxhat = row[j] * scale[j];
            row[j] = cache.inv_std[j] / n * (n * dxhat - sum_dxhat[j] - hat[j] * sum_dxhat_xhat[j]);
        }
    }
}
