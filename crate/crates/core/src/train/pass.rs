//! Training-mode forward pass with caches and its hand-derived reverse pass.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::loss::{binary_ce_term, log_sum_exp, sigmoid};
use super::sampling::LabeledTriple;
use super::LossMode;
use crate::error::{Error, Result};
use crate::model::sites::{self, SiteCache};
use crate::model::{dot, hidden_from, Model, Parameters, Site};
use crate::score::contract_relation_mode;

/// One `(h, r)` query of a 1-N batch with its train-split tails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub head: u32,
    pub relation: u32,
    pub tails: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    /// Labeled triples, each scored once.
    Sampled(Vec<LabeledTriple>),
    /// Queries scored against every entity.
    OneToN(Vec<Query>),
}

impl Batch {
    pub fn rows(&self) -> usize {
        match self {
            Batch::Sampled(v) => v.len(),
            Batch::OneToN(v) => v.len(),
        }
    }

    fn head_relation(&self, row: usize) -> (usize, usize) {
        match self {
            Batch::Sampled(v) => (v[row].triple.head as usize, v[row].triple.relation as usize),
            Batch::OneToN(v) => (v[row].head as usize, v[row].relation as usize),
        }
    }
}

/// Dropout masks for one pass, already scaled by `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiteMasks {
    pub masks: [Option<Vec<f64>>; 4],
}

impl SiteMasks {
    pub fn none() -> Self {
        Self::default()
    }

    /// Draws a fresh inverted-dropout mask for every site with `p > 0`.
    pub fn sample<R: Rng + ?Sized>(model: &Model, rows: usize, rng: &mut R) -> Self {
        let cfg = model.config();
        let masks = Site::ALL.map(|site| {
            let p = cfg.site(site).dropout;
            if p == 0.0 {
                return None;
            }
            let keep = 1.0 / (1.0 - p);
            let n = rows * cfg.site_features(site);
            Some((0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect())
        });
        Self { masks }
    }
}

/// The training objective: data loss plus optional L3 decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub loss: LossMode,
    pub l3_weight: f64,
    pub l3_include_cores: bool,
}

impl Objective {
    pub fn new(loss: LossMode) -> Self {
        Self {
            loss,
            l3_weight: 0.0,
            l3_include_cores: false,
        }
    }
}

/// Activations and site caches of one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchPass {
    rows: usize,
    /// Post-site relation rows, `B × D_r`.
    r: Vec<f64>,
    /// Post-site matching matrices, `B × K·C_e²`.
    m: Vec<f64>,
    /// Post-site heads, `B × D_e`.
    h: Vec<f64>,
    /// Post-site hidden vectors, `B × D_e`.
    g: Vec<f64>,
    caches: [SiteCache; 4],
    /// One score per row (sampled) or `B × |E|` (1-N).
    scores: Vec<f64>,
}

impl BatchPass {
    /// Runs the network with batch statistics and the given masks.
    pub fn forward(model: &Model, batch: &Batch, masks: &SiteMasks) -> Result<Self> {
        let rows = batch.rows();
        if rows == 0 {
            return Err(Error::Config("empty batch".into()));
        }
        let cfg = model.config();
        let (parts, ce, cr) = (cfg.partitions, cfg.entity_width, cfg.relation_width);
        let (de, dr) = (cfg.entity_dim(), cfg.relation_dim());
        check_batch(model, batch)?;
        for (site, mask) in Site::ALL.iter().zip(&masks.masks) {
            if let Some(mask) = mask {
                crate::error::check_len("dropout mask", rows * cfg.site_features(*site), mask.len())?;
            }
        }
        let site = |s: Site, x: &mut [f64]| {
            sites::forward_training(
                cfg.site(s),
                cfg.bn_epsilon,
                &model.affine(s),
                rows,
                x,
                masks.masks[s.index()].as_deref(),
            )
        };

        let mut r = Vec::with_capacity(rows * dr);
        let mut h = Vec::with_capacity(rows * de);
        for b in 0..rows {
            let (head, relation) = batch.head_relation(b);
            r.extend_from_slice(model.relation_row(relation));
            h.extend_from_slice(model.entity_row(head));
        }
        let c0 = site(Site::RelationInput, &mut r);

        let mut m = vec![0.0; rows * parts * ce * ce];
        for (rb, mb) in r.chunks_exact(dr).zip(m.chunks_exact_mut(parts * ce * ce)) {
            for (k, block) in mb.chunks_exact_mut(ce * ce).enumerate() {
                contract_relation_mode(model.core_slice(k), &rb[k * cr..(k + 1) * cr], block);
            }
        }
        let c1 = site(Site::MatchingMatrix, &mut m);
        let c2 = site(Site::HeadInput, &mut h);

        let mut g = Vec::with_capacity(rows * de);
        for (hb, mb) in h.chunks_exact(de).zip(m.chunks_exact(parts * ce * ce)) {
            g.extend(hidden_from(hb, mb, parts, ce));
        }
        let c3 = site(Site::HiddenOutput, &mut g);

        let scores = match batch {
            Batch::Sampled(items) => items
                .iter()
                .zip(g.chunks_exact(de))
                .map(|(item, gb)| dot(gb, model.entity_row(item.triple.tail as usize)))
                .collect(),
            Batch::OneToN(_) => {
                let mut out = Vec::with_capacity(rows * model.num_entities());
                for gb in g.chunks_exact(de) {
                    out.extend(model.params.entity.chunks_exact(de).map(|e| dot(gb, e)));
                }
                out
            }
        };
        Ok(Self {
            rows,
            r,
            m,
            h,
            g,
            caches: [c0, c1, c2, c3],
            scores,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn max_abs_score(&self) -> f64 {
        self.scores.iter().fold(0.0, |a: f64, s| a.max(s.abs()))
    }

    /// Batch mean and biased variance at `site` (empty without batchnorm).
    pub fn batch_stats(&self, site: Site) -> (&[f64], &[f64]) {
        let c = &self.caches[site.index()];
        (&c.mean, &c.var)
    }

    /// Data loss and its derivative with respect to every score.
    fn data_loss(&self, model: &Model, batch: &Batch, loss: LossMode) -> Result<(f64, Vec<f64>)> {
        let mut dscores = vec![0.0; self.scores.len()];
        let value = match (batch, loss) {
            (Batch::Sampled(items), LossMode::BinaryCeSampled) => {
                let n = items.len() as f64;
                let mut total = 0.0;
                for ((item, &s), d) in items.iter().zip(&self.scores).zip(&mut dscores) {
                    total += binary_ce_term(s, item.label);
                    *d = (sigmoid(s) - item.label) / n;
                }
                total / n
            }
            (Batch::OneToN(queries), LossMode::BinaryCe1N) => {
                let ne = model.num_entities();
                let n = (queries.len() * ne) as f64;
                let mut total = 0.0;
                for ((q, s), d) in queries
                    .iter()
                    .zip(self.scores.chunks_exact(ne))
                    .zip(dscores.chunks_exact_mut(ne))
                {
                    let mut labels = vec![0.0; ne];
                    for &t in &q.tails {
                        labels[t as usize] = 1.0;
                    }
                    for e in 0..ne {
                        total += binary_ce_term(s[e], labels[e]);
                        d[e] = (sigmoid(s[e]) - labels[e]) / n;
                    }
                }
                total / n
            }
            (Batch::OneToN(queries), LossMode::Softmax1N) => {
                let ne = model.num_entities();
                let b = queries.len() as f64;
                let mut total = 0.0;
                for ((q, s), d) in queries
                    .iter()
                    .zip(self.scores.chunks_exact(ne))
                    .zip(dscores.chunks_exact_mut(ne))
                {
                    if q.tails.is_empty() {
                        return Err(Error::EmptyTrueSet);
                    }
                    let lse = log_sum_exp(s);
                    let share = 1.0 / q.tails.len() as f64;
                    let mut query_loss = 0.0;
                    for &t in &q.tails {
                        query_loss += lse - s[t as usize];
                        d[t as usize] -= share / b;
                    }
                    total += query_loss * share;
                    for (de, se) in d.iter_mut().zip(s) {
                        *de += libm::exp(se - lse) / b;
                    }
                }
                total / b
            }
            (Batch::Sampled(_), _) => {
                return Err(Error::Config("sampled batches need the sampled binary cross-entropy loss".into()))
            }
            (Batch::OneToN(_), LossMode::BinaryCeSampled) => {
                return Err(Error::Config("1-N batches need a 1-N loss".into()))
            }
        };
        Ok((value, dscores))
    }

    /// Objective value without gradients.
    pub fn loss(&self, model: &Model, batch: &Batch, objective: &Objective) -> Result<f64> {
        let (data, _) = self.data_loss(model, batch, objective.loss)?;
        let (entities, relations) = touched_rows(model, batch);
        Ok(data + l3_touched(model, &entities, &relations, objective, None))
    }

    /// Objective value and its exact gradient with respect to every
    /// parameter. Rows outside the batch get zero gradient; a frozen core
    /// gets none.
    pub fn backward(&self, model: &Model, batch: &Batch, objective: &Objective) -> Result<(f64, Parameters)> {
        let cfg = model.config();
        let (parts, ce, cr) = (cfg.partitions, cfg.entity_width, cfg.relation_width);
        let (de, dr) = (cfg.entity_dim(), cfg.relation_dim());
        let mm = parts * ce * ce;
        let rows = self.rows;
        let (data, dscores) = self.data_loss(model, batch, objective.loss)?;
        let mut grad = model.params.zeros_like();

        // score = g̃ · e_t
        let mut dg = vec![0.0; rows * de];
        match batch {
            Batch::Sampled(items) => {
                for (b, item) in items.iter().enumerate() {
                    let tail = item.triple.tail as usize;
                    let ds = dscores[b];
                    let et = model.entity_row(tail);
                    let gb = &self.g[b * de..(b + 1) * de];
                    for j in 0..de {
                        dg[b * de + j] += ds * et[j];
                        grad.entity[tail * de + j] += ds * gb[j];
                    }
                }
            }
            Batch::OneToN(_) => {
                let ne = model.num_entities();
                for b in 0..rows {
                    let gb = &self.g[b * de..(b + 1) * de];
                    let dgb = &mut dg[b * de..(b + 1) * de];
                    for e in 0..ne {
                        let ds = dscores[b * ne + e];
                        if ds == 0.0 {
                            continue;
                        }
                        let row = model.entity_row(e);
                        let ge = &mut grad.entity[e * de..(e + 1) * de];
                        for j in 0..de {
                            dgb[j] += ds * row[j];
                            ge[j] += ds * gb[j];
                        }
                    }
                }
            }
        }

        let site_back = |s: Site, dy: &mut [f64], grad: &mut Parameters| {
            let i = s.index();
            sites::backward(
                cfg.site(s),
                &model.params.scale[i],
                &self.caches[i],
                rows,
                dy,
                &mut grad.scale[i],
                &mut grad.shift[i],
            );
        };
        site_back(Site::HiddenOutput, &mut dg, &mut grad);

        // g_ky = Σ_x h_kx M_kxy
        let mut dh = vec![0.0; rows * de];
        let mut dm = vec![0.0; rows * mm];
        for b in 0..rows {
            for k in 0..parts {
                let block = &self.m[b * mm + k * ce * ce..b * mm + (k + 1) * ce * ce];
                let dblock = &mut dm[b * mm + k * ce * ce..b * mm + (k + 1) * ce * ce];
                let dgk = &dg[b * de + k * ce..b * de + (k + 1) * ce];
                for x in 0..ce {
                    let hx = self.h[b * de + k * ce + x];
                    let mut acc = 0.0;
                    for y in 0..ce {
                        acc += dgk[y] * block[x * ce + y];
                        dblock[x * ce + y] = hx * dgk[y];
                    }
                    dh[b * de + k * ce + x] = acc;
                }
            }
        }
        site_back(Site::HeadInput, &mut dh, &mut grad);
        for b in 0..rows {
            let (head, _) = batch.head_relation(b);
            for j in 0..de {
                grad.entity[head * de + j] += dh[b * de + j];
            }
        }
        site_back(Site::MatchingMatrix, &mut dm, &mut grad);

        // M_kxy = Σ_z W_kxyz r_kz
        let frozen = model.is_core_frozen();
        let core_len = cfg.core_len();
        let mut dr_rows = vec![0.0; rows * dr];
        for b in 0..rows {
            for k in 0..parts {
                let core = model.core_slice(k);
                let slot = if cfg.shared_core { 0 } else { k };
                let rk = &self.r[b * dr + k * cr..b * dr + (k + 1) * cr];
                let dblock = &dm[b * mm + k * ce * ce..b * mm + (k + 1) * ce * ce];
                let drk = &mut dr_rows[b * dr + k * cr..b * dr + (k + 1) * cr];
                for (xy, &d) in dblock.iter().enumerate() {
                    let w = &core[xy * cr..(xy + 1) * cr];
                    for z in 0..cr {
                        drk[z] += d * w[z];
                    }
                    if !frozen {
                        let gw = &mut grad.cores[slot * core_len + xy * cr..slot * core_len + (xy + 1) * cr];
                        for z in 0..cr {
                            gw[z] += d * rk[z];
                        }
                    }
                }
            }
        }
        site_back(Site::RelationInput, &mut dr_rows, &mut grad);
        for b in 0..rows {
            let (_, relation) = batch.head_relation(b);
            for j in 0..dr {
                grad.relation[relation * dr + j] += dr_rows[b * dr + j];
            }
        }

        let (entities, relations) = touched_rows(model, batch);
        let penalty = l3_touched(model, &entities, &relations, objective, Some(&mut grad));
        Ok((data + penalty, grad))
    }

    /// Moves the running statistics towards this batch's statistics.
    pub fn update_running_stats(&self, model: &mut Model) {
        let momentum = model.config().bn_momentum;
        for site in Site::ALL {
            if !model.config().site(site).batchnorm {
                continue;
            }
            let i = site.index();
            let cache = &self.caches[i];
            for (run, batch) in model.stats.mean[i].iter_mut().zip(&cache.mean) {
                *run = (1.0 - momentum) * *run + momentum * batch;
            }
            for (run, batch) in model.stats.var[i].iter_mut().zip(&cache.var) {
                *run = (1.0 - momentum) * *run + momentum * batch;
            }
        }
    }
}

fn check_batch(model: &Model, batch: &Batch) -> Result<()> {
    match batch {
        Batch::Sampled(items) => {
            for item in items {
                let t = item.triple;
                model.check_entity(t.head as usize)?;
                model.check_entity(t.tail as usize)?;
                model.check_relation(t.relation as usize)?;
            }
        }
        Batch::OneToN(queries) => {
            for q in queries {
                model.check_entity(q.head as usize)?;
                model.check_relation(q.relation as usize)?;
                for &t in &q.tails {
                    model.check_entity(t as usize)?;
                }
            }
        }
    }
    Ok(())
}

/// Entity and relation rows that receive a data gradient from `batch`,
/// each as a 0/1 flag per row.
fn touched_rows(model: &Model, batch: &Batch) -> (Vec<bool>, Vec<bool>) {
    let mut entities = vec![false; model.num_entities()];
    let mut relations = vec![false; model.num_relations()];
    match batch {
        Batch::Sampled(items) => {
            for item in items {
                entities[item.triple.head as usize] = true;
                entities[item.triple.tail as usize] = true;
                relations[item.triple.relation as usize] = true;
            }
        }
        Batch::OneToN(queries) => {
            entities.fill(true);
            for q in queries {
                relations[q.relation as usize] = true;
            }
        }
    }
    (entities, relations)
}

/// `w Σ |θ|³` over the touched rows (and the cores when requested), adding
/// `3w |θ| θ` to `grad` when given.
fn l3_touched(
    model: &Model,
    entities: &[bool],
    relations: &[bool],
    objective: &Objective,
    mut grad: Option<&mut Parameters>,
) -> f64 {
    let w = objective.l3_weight;
    if w == 0.0 {
        return 0.0;
    }
    let cfg = model.config();
    let mut total = 0.0;
    let mut visit = |values: &[f64], grads: Option<&mut [f64]>| {
        for v in values {
            total += w * v.abs() * v.abs() * v.abs();
        }
        if let Some(g) = grads {
            for (g, v) in g.iter_mut().zip(values) {
                *g += 3.0 * w * v.abs() * v;
            }
        }
    };
    let (de, dr) = (cfg.entity_dim(), cfg.relation_dim());
    for (e, _) in entities.iter().enumerate().filter(|(_, t)| **t) {
        let g = grad.as_deref_mut().map(|g| &mut g.entity[e * de..(e + 1) * de]);
        visit(model.entity_row(e), g);
    }
    for (r, _) in relations.iter().enumerate().filter(|(_, t)| **t) {
        let g = grad.as_deref_mut().map(|g| &mut g.relation[r * dr..(r + 1) * dr]);
        visit(model.relation_row(r), g);
    }
    if objective.l3_include_cores && !model.is_core_frozen() {
        let g = grad.map(|g| g.cores.as_mut_slice());
        visit(&model.params.cores, g);
    }
    total
}

/// `weight · Σ |θ|³` over the full entity and relation tables.
pub fn l3_penalty(model: &Model, weight: f64) -> f64 {
    model
        .params
        .entity
        .iter()
        .chain(&model.params.relation)
        .map(|v| weight * v.abs() * v.abs() * v.abs())
        .sum()
}

/// Objective value of `batch` under fixed masks.
pub fn objective(model: &Model, batch: &Batch, masks: &SiteMasks, objective: &Objective) -> Result<f64> {
    BatchPass::forward(model, batch, masks)?.loss(model, batch, objective)
}

/// Objective value and gradient of `batch` under fixed masks.
pub fn backward(
    model: &Model,
    batch: &Batch,
    masks: &SiteMasks,
    objective: &Objective,
) -> Result<(f64, Parameters)> {
    BatchPass::forward(model, batch, masks)?.backward(model, batch, objective)
}
