//! Trainable parameters and the inference-mode forward pass.
//!
//! The score of `(h, t, r)` is computed as a small linear network per
//! partition `k`:
//!
//! ```text
//! r_k ─[site 1]→ M_k = W_k ×̄₃ r_k ─[site 2]─┐
//! h_k ─[site 3]────────────────────────────→ g_k = h_kᵀ M_k ─[site 4]→ g_k · t_k
//! ```
//!
//! Summing `g_k · t_k` over partitions gives the block term score. Because the
//! tail only enters in the last dot product, one query `(h, r)` can be scored
//! against every tail by reusing `g`.

mod fixed;
pub(crate) mod sites;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::score::{contract_relation_mode, CoreTensor};

pub use fixed::{make_fixed_core, FixedPattern};
pub use sites::Site;
use sites::Affine;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SiteConfig {
    /// Dropout probability in `[0, 1)`.
    pub dropout: f64,
    pub batchnorm: bool,
}

impl SiteConfig {
    pub const OFF: SiteConfig = SiteConfig {
        dropout: 0.0,
        batchnorm: false,
    };

    pub fn is_identity(&self) -> bool {
        self.dropout == 0.0 && !self.batchnorm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of partitions `K`.
    pub partitions: usize,
    /// Entity partition size `C_e`.
    pub entity_width: usize,
    /// Relation partition size `C_r`.
    pub relation_width: usize,
    /// One core for all partitions instead of one per partition.
    pub shared_core: bool,
    pub sites: [SiteConfig; 4],
    /// Parameters start i.i.d. uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Frozen core pattern; `None` learns the core.
    pub fixed_core: Option<FixedPattern>,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl ModelConfig {
    pub fn new(partitions: usize, entity_width: usize, relation_width: usize) -> Self {
        Self {
            partitions,
            entity_width,
            relation_width,
            shared_core: true,
            sites: [SiteConfig::OFF; 4],
            init_scale: 0.1,
            fixed_core: None,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }

    /// A model whose single shared core is frozen to `pattern`.
    pub fn fixed(pattern: FixedPattern, partitions: usize) -> Self {
        let (ce, cr) = pattern.widths();
        Self {
            fixed_core: Some(pattern),
            ..Self::new(partitions, ce, cr)
        }
    }

    pub fn site(&self, site: Site) -> &SiteConfig {
        &self.sites[site.index()]
    }

    pub fn with_site(mut self, site: Site, cfg: SiteConfig) -> Self {
        self.sites[site.index()] = cfg;
        self
    }

    /// `D_e = K * C_e`.
    pub fn entity_dim(&self) -> usize {
        self.partitions * self.entity_width
    }

    /// `D_r = K * C_r`.
    pub fn relation_dim(&self) -> usize {
        self.partitions * self.relation_width
    }

    pub fn num_cores(&self) -> usize {
        if self.shared_core {
            1
        } else {
            self.partitions
        }
    }

    pub fn core_len(&self) -> usize {
        self.entity_width * self.entity_width * self.relation_width
    }

    /// Number of per-row features at a site.
    pub fn site_features(&self, site: Site) -> usize {
        match site {
            Site::RelationInput => self.relation_dim(),
            Site::MatchingMatrix => self.partitions * self.entity_width * self.entity_width,
            Site::HeadInput | Site::HiddenOutput => self.entity_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions == 0 || self.entity_width == 0 || self.relation_width == 0 {
            return Err(Error::Config(format!(
                "partitions and partition sizes must be >= 1 (K={}, C_e={}, C_r={})",
                self.partitions, self.entity_width, self.relation_width
            )));
        }
        for site in Site::ALL {
            let d = self.site(site).dropout;
            if !(0.0..1.0).contains(&d) {
                return Err(Error::Config(format!(
                    "dropout at {} must be in [0, 1), got {d}",
                    site.name()
                )));
            }
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(Error::Config(format!("init_scale must be finite and >= 0, got {}", self.init_scale)));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config(format!("bn_momentum must be in [0, 1], got {}", self.bn_momentum)));
        }
        if !self.bn_epsilon.is_finite() || self.bn_epsilon < 0.0 {
            return Err(Error::Config(format!("bn_epsilon must be >= 0, got {}", self.bn_epsilon)));
        }
        if let Some(pattern) = self.fixed_core {
            if pattern.widths() != (self.entity_width, self.relation_width) {
                let (ce, cr) = pattern.widths();
                return Err(Error::Config(format!(
                    "{} core needs C_e={ce}, C_r={cr}, got C_e={}, C_r={}",
                    pattern.name(),
                    self.entity_width,
                    self.relation_width
                )));
            }
            if !self.shared_core {
                return Err(Error::Config(format!("{} core must be shared", pattern.name())));
            }
        }
        Ok(())
    }
}

/// Every trainable tensor, flattened row-major. Gradients and optimizer
/// moments use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// `|E| × D_e`.
    pub entity: Vec<f64>,
    /// `|R| × D_r`.
    pub relation: Vec<f64>,
    /// One or `K` cores of `C_e·C_e·C_r` entries each.
    pub cores: Vec<f64>,
    /// Batchnorm scale per site; empty when the site has no batchnorm.
    pub scale: [Vec<f64>; 4],
    /// Batchnorm shift per site.
    pub shift: [Vec<f64>; 4],
}

impl Parameters {
    pub const TENSOR_NAMES: [&'static str; 11] = [
        "entity",
        "relation",
        "cores",
        "scale.relation_input",
        "scale.matching_matrix",
        "scale.head_input",
        "scale.hidden_output",
        "shift.relation_input",
        "shift.matching_matrix",
        "shift.head_input",
        "shift.hidden_output",
    ];

    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        Self {
            entity: z(&self.entity),
            relation: z(&self.relation),
            cores: z(&self.cores),
            scale: self.scale.each_ref().map(z),
            shift: self.shift.each_ref().map(z),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 11] {
        let [s0, s1, s2, s3] = &self.scale;
        let [b0, b1, b2, b3] = &self.shift;
        [&self.entity, &self.relation, &self.cores, s0, s1, s2, s3, b0, b1, b2, b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 11] {
        let [s0, s1, s2, s3] = &mut self.scale;
        let [b0, b1, b2, b3] = &mut self.shift;
        [
            &mut self.entity,
            &mut self.relation,
            &mut self.cores,
            s0,
            s1,
            s2,
            s3,
            b0,
            b1,
            b2,
            b3,
        ]
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Batchnorm running statistics per site (empty when disabled).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: [Vec<f64>; 4],
    pub var: [Vec<f64>; 4],
}

/// Model parameters plus the configuration and vocabulary sizes they were
/// built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
    pub params: Parameters,
    pub stats: RunningStats,
}

impl Model {
    /// Draws every learnable tensor i.i.d. uniform in `[-s, s]` from a
    /// seeded stream: entity table, relation table, then cores. Batchnorm
    /// starts at scale 1, shift 0, mean 0, variance 1.
    pub fn new(config: ModelConfig, num_entities: usize, num_relations: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_entities == 0 || num_relations == 0 {
            return Err(Error::Config(format!(
                "need at least one entity and one relation (got {num_entities}, {num_relations})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = config.init_scale;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| s * (2.0 * rng.gen::<f64>() - 1.0)).collect()
        };
        let entity = draw(num_entities * config.entity_dim());
        let relation = draw(num_relations * config.relation_dim());
        let cores = match config.fixed_core {
            Some(pattern) => pattern.core().into_vec(),
            None => draw(config.num_cores() * config.core_len()),
        };
        let per_site = |value: f64| {
            Site::ALL.map(|site| {
                if config.site(site).batchnorm {
                    vec![value; config.site_features(site)]
                } else {
                    Vec::new()
                }
            })
        };
        let params = Parameters {
            entity,
            relation,
            cores,
            scale: per_site(1.0),
            shift: per_site(0.0),
        };
        let stats = RunningStats {
            mean: per_site(0.0),
            var: per_site(1.0),
        };
        Ok(Self {
            config,
            num_entities,
            num_relations,
            seed,
            params,
            stats,
        })
    }

    /// Reassembles a model from stored tensors, checking every shape.
    pub fn from_parts(
        config: ModelConfig,
        num_entities: usize,
        num_relations: usize,
        seed: u64,
        params: Parameters,
        stats: RunningStats,
    ) -> Result<Self> {
        let template = Self::new(
            ModelConfig {
                init_scale: 0.0,
                ..config.clone()
            },
            num_entities,
            num_relations,
            seed,
        )?;
        for ((a, b), name) in template
            .params
            .tensors()
            .iter()
            .zip(params.tensors().iter())
            .zip(Parameters::TENSOR_NAMES)
        {
            if a.len() != b.len() {
                return Err(Error::Config(format!(
                    "tensor `{name}` has {} entries, expected {}",
                    b.len(),
                    a.len()
                )));
            }
        }
        for i in 0..4 {
            if stats.mean[i].len() != template.stats.mean[i].len()
                || stats.var[i].len() != template.stats.var[i].len()
            {
                return Err(Error::Config(format!(
                    "running statistics for site {} have the wrong length",
                    Site::ALL[i].name()
                )));
            }
            if stats.var[i].iter().any(|v| *v < 0.0) {
                return Err(Error::Config("negative running variance".into()));
            }
        }
        Ok(Self {
            config,
            num_entities,
            num_relations,
            seed,
            params,
            stats,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_core_frozen(&self) -> bool {
        self.config.fixed_core.is_some()
    }

    pub fn entity_row(&self, id: usize) -> &[f64] {
        let d = self.config.entity_dim();
        &self.params.entity[id * d..(id + 1) * d]
    }

    pub fn relation_row(&self, id: usize) -> &[f64] {
        let d = self.config.relation_dim();
        &self.params.relation[id * d..(id + 1) * d]
    }

    /// Core used by partition `k` (the shared core when sharing).
    pub fn core_slice(&self, k: usize) -> &[f64] {
        let n = self.config.core_len();
        let i = if self.config.shared_core { 0 } else { k };
        &self.params.cores[i * n..(i + 1) * n]
    }

    pub fn cores(&self) -> Vec<CoreTensor> {
        let cfg = &self.config;
        self.params
            .cores
            .chunks_exact(cfg.core_len())
            .map(|c| CoreTensor::from_vec(cfg.entity_width, cfg.relation_width, c.to_vec()).expect("core shape"))
            .collect()
    }

    pub(crate) fn affine(&self, site: Site) -> Affine<'_> {
        Affine {
            scale: &self.params.scale[site.index()],
            shift: &self.params.shift[site.index()],
        }
    }

    pub(crate) fn check_entity(&self, id: usize) -> Result<()> {
        if id >= self.num_entities {
            return Err(Error::IdOutOfRange {
                kind: "entity",
                id,
                len: self.num_entities,
            });
        }
        Ok(())
    }

    pub(crate) fn check_relation(&self, id: usize) -> Result<()> {
        if id >= self.num_relations {
            return Err(Error::IdOutOfRange {
                kind: "relation",
                id,
                len: self.num_relations,
            });
        }
        Ok(())
    }

    fn site_inference(&self, site: Site, x: &mut [f64]) {
        let i = site.index();
        sites::forward_inference(
            self.config.site(site),
            self.config.bn_epsilon,
            &self.affine(site),
            &self.stats.mean[i],
            &self.stats.var[i],
            x,
        );
    }

    fn site_inference_affine(&self, site: Site) -> Option<(Vec<f64>, Vec<f64>)> {
        let i = site.index();
        sites::inference_affine(
            self.config.site(site),
            self.config.bn_epsilon,
            &self.affine(site),
            &self.stats.mean[i],
            &self.stats.var[i],
            self.config.site_features(site),
        )
    }

    /// Post-site matching matrices for relation `r`, `K × C_e × C_e`.
    fn inference_matching(&self, relation: usize) -> Vec<f64> {
        let cfg = &self.config;
        let (ce, cr) = (cfg.entity_width, cfg.relation_width);
        let mut r = self.relation_row(relation).to_vec();
        self.site_inference(Site::RelationInput, &mut r);
        let mut m = vec![0.0; cfg.partitions * ce * ce];
        for (k, block) in m.chunks_exact_mut(ce * ce).enumerate() {
            contract_relation_mode(self.core_slice(k), &r[k * cr..(k + 1) * cr], block);
        }
        self.site_inference(Site::MatchingMatrix, &mut m);
        m
    }

    /// Hidden vector `g` (length `D_e`) of query `(h, r)` in inference mode;
    /// the score of tail `t` is `g · e_t`.
    pub fn query_hidden(&self, head: usize, relation: usize) -> Result<Vec<f64>> {
        self.check_entity(head)?;
        self.check_relation(relation)?;
        let m = self.inference_matching(relation);
        let mut h = self.entity_row(head).to_vec();
        self.site_inference(Site::HeadInput, &mut h);
        let mut g = hidden_from(&h, &m, self.config.partitions, self.config.entity_width);
        self.site_inference(Site::HiddenOutput, &mut g);
        Ok(g)
    }

    /// Inference-mode score of `(h, t, r)`: dropout off, batchnorm with
    /// running statistics.
    pub fn forward_score(&self, head: usize, tail: usize, relation: usize) -> Result<f64> {
        self.check_entity(tail)?;
        let g = self.query_hidden(head, relation)?;
        Ok(dot(&g, self.entity_row(tail)))
    }

    /// Scores of `(h, e, r)` for every entity `e`, sharing one matching
    /// matrix computation.
    pub fn forward_scores_1n(&self, head: usize, relation: usize) -> Result<Vec<f64>> {
        let g = self.query_hidden(head, relation)?;
        Ok(self
            .params
            .entity
            .chunks_exact(self.config.entity_dim())
            .map(|e| dot(&g, e))
            .collect())
    }

    /// Scores of `(e, t, r)` for every entity `e`.
    ///
    /// In inference mode the score is affine in the head embedding, so it is
    /// reduced to one weight vector and a constant before sweeping heads.
    pub fn forward_scores_heads(&self, tail: usize, relation: usize) -> Result<Vec<f64>> {
        self.check_entity(tail)?;
        self.check_relation(relation)?;
        let cfg = &self.config;
        let (k_parts, ce) = (cfg.partitions, cfg.entity_width);
        let m = self.inference_matching(relation);
        let t = self.entity_row(tail);
        let mut constant = 0.0;
        // u = a_D ⊙ t, constant += b_D · t
        let u: Vec<f64> = match self.site_inference_affine(Site::HiddenOutput) {
            Some((a, b)) => {
                constant += dot(&b, t);
                a.iter().zip(t).map(|(a, t)| a * t).collect()
            }
            None => t.to_vec(),
        };
        // v_kx = Σ_y M_kxy u_ky
        let mut v = vec![0.0; cfg.entity_dim()];
        for k in 0..k_parts {
            let block = &m[k * ce * ce..(k + 1) * ce * ce];
            for x in 0..ce {
                v[k * ce + x] = dot(&block[x * ce..(x + 1) * ce], &u[k * ce..(k + 1) * ce]);
            }
        }
        let w: Vec<f64> = match self.site_inference_affine(Site::HeadInput) {
            Some((a, b)) => {
                constant += dot(&b, &v);
                a.iter().zip(&v).map(|(a, v)| a * v).collect()
            }
            None => v,
        };
        Ok(self
            .params
            .entity
            .chunks_exact(cfg.entity_dim())
            .map(|e| dot(&w, e) + constant)
            .collect())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `g_ky = Σ_x h_kx M_kxy` for one row.
#[inline]
pub(crate) fn hidden_from(h: &[f64], m: &[f64], parts: usize, ce: usize) -> Vec<f64> {
    let mut g = vec![0.0; parts * ce];
    for k in 0..parts {
        let block = &m[k * ce * ce..(k + 1) * ce * ce];
        let gk = &mut g[k * ce..(k + 1) * ce];
        for x in 0..ce {
            let hx = h[k * ce + x];
            for (gy, mxy) in gk.iter_mut().zip(&block[x * ce..(x + 1) * ce]) {
                *gy += hx * mxy;
            }
        }
    }
    g
}
