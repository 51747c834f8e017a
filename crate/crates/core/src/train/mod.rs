//! Losses, exact gradients, negative sampling and mini-batch Adam.

mod adam;
mod loss;
mod pass;
mod sampling;

use alloc::format;
use alloc::vec::Vec;

use hashbrown::HashMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::TripleStore;
use crate::error::{Error, Result};
use crate::model::Model;

pub use adam::{Adam, AdamConfig};
pub use loss::{log_sum_exp, loss_binary_ce, loss_softmax_1n, sigmoid, softplus};
pub use pass::{backward, l3_penalty, objective, Batch, BatchPass, Objective, Query, SiteMasks};
pub use sampling::{negative_sample, LabeledTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossMode {
    /// Binary cross-entropy on positives plus random corruptions.
    BinaryCeSampled,
    /// Binary cross-entropy of every `(h, r)` query against all tails.
    BinaryCe1N,
    /// Softmax cross-entropy of every `(h, r)` query against all tails.
    Softmax1N,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [LossMode::BinaryCeSampled, LossMode::BinaryCe1N, LossMode::Softmax1N];

    pub fn name(self) -> &'static str {
        match self {
            LossMode::BinaryCeSampled => "binary_ce_sampled",
            LossMode::BinaryCe1N => "binary_ce_1n",
            LossMode::Softmax1N => "softmax_1n",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        LossMode::ALL.into_iter().find(|m| m.name() == lower)
    }

    pub fn is_one_to_n(self) -> bool {
        !matches!(self, LossMode::BinaryCeSampled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate is multiplied by this after every epoch.
    pub decay_rate: f64,
    pub epochs: usize,
    pub loss: LossMode,
    /// Corruptions per positive in sampled mode.
    pub negatives_per_positive: usize,
    pub l3_weight: f64,
    pub l3_include_cores: bool,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 3e-3,
            decay_rate: 1.0,
            epochs: 100,
            loss: LossMode::BinaryCe1N,
            negatives_per_positive: 10,
            l3_weight: 0.0,
            l3_include_cores: false,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::Config(format!("decay_rate must be in (0, 1], got {}", self.decay_rate)));
        }
        if !(self.l3_weight >= 0.0 && self.l3_weight.is_finite()) {
            return Err(Error::Config(format!("l3_weight must be >= 0, got {}", self.l3_weight)));
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Config("adam needs beta1, beta2 in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        Objective {
            loss: self.loss,
            l3_weight: self.l3_weight,
            l3_include_cores: self.l3_include_cores,
        }
    }

    /// `learning_rate · decay_rate^epoch`, with epochs counted from 0.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.learning_rate * libm::pow(self.decay_rate, epoch as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over the epoch's batches.
    pub loss: f64,
    pub learning_rate: f64,
}

/// Mini-batch training loop over one store. Shuffling, negative sampling
/// and dropout draw from one stream seeded by `TrainConfig::seed`.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    config: TrainConfig,
    store: &'a TripleStore,
    model: Model,
    adam: Adam,
    rng: ChaCha8Rng,
    queries: Vec<Query>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, store: &'a TripleStore, model: Model) -> Result<Self> {
        config.validate()?;
        if model.num_entities() != store.num_entities() || model.num_relations() != store.num_relations() {
            return Err(Error::Config(format!(
                "model has {} entities and {} relations, store has {} and {}",
                model.num_entities(),
                model.num_relations(),
                store.num_entities(),
                store.num_relations()
            )));
        }
        let shapes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
        let adam = Adam::new(config.adam, &shapes);
        let queries = if config.loss.is_one_to_n() {
            train_queries(store)
        } else {
            Vec::new()
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            store,
            model,
            adam,
            queries,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn optimizer(&self) -> &Adam {
        &self.adam
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.config.learning_rate(epoch)
    }

    /// `(h, r)` queries with their train tails, as used by 1-N losses.
    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    /// One pass over the training data.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let lr = self.learning_rate(epoch);
        let objective = self.config.objective();
        let bs = self.config.batch_size;
        let batches: Vec<Batch> = if self.config.loss.is_one_to_n() {
            let mut order: Vec<usize> = (0..self.queries.len()).collect();
            order.shuffle(&mut self.rng);
            order
                .chunks(bs)
                .map(|c| Batch::OneToN(c.iter().map(|&i| self.queries[i].clone()).collect()))
                .collect()
        } else {
            let mut triples = self.store.train().to_vec();
            triples.shuffle(&mut self.rng);
            let ne = self.store.num_entities();
            let k = self.config.negatives_per_positive;
            triples
                .chunks(bs)
                .map(|c| Batch::Sampled(negative_sample(c, k, ne, &mut self.rng)))
                .collect()
        };
        let mut total = 0.0;
        for (index, batch) in batches.iter().enumerate() {
            let masks = SiteMasks::sample(&self.model, batch.rows(), &mut self.rng);
            let pass = BatchPass::forward(&self.model, batch, &masks)?;
            let (loss, grad) = pass.backward(&self.model, batch, &objective)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: index,
                    max_abs_score: pass.max_abs_score(),
                });
            }
            self.adam.step(&mut self.model.params.tensors_mut(), &grad.tensors(), lr);
            pass.update_running_stats(&mut self.model);
            total += loss;
        }
        self.epoch += 1;
        Ok(EpochRecord {
            epoch,
            loss: total / batches.len() as f64,
            learning_rate: lr,
        })
    }
}

/// Distinct train `(h, r)` pairs in first-appearance order, each with its
/// sorted train tails.
fn train_queries(store: &TripleStore) -> Vec<Query> {
    let mut index: HashMap<(u32, u32), usize> = HashMap::new();
    let mut queries: Vec<Query> = Vec::new();
    for t in store.train() {
        let slot = *index.entry((t.head, t.relation)).or_insert_with(|| {
            queries.push(Query {
                head: t.head,
                relation: t.relation,
                tails: Vec::new(),
            });
            queries.len() - 1
        });
        queries[slot].tails.push(t.tail);
    }
    for q in &mut queries {
        q.tails.sort_unstable();
        q.tails.dedup();
    }
    queries
}

/// Trains for `config.epochs` epochs and returns the final model with one
/// record per epoch.
pub fn train(store: &TripleStore, model: Model, config: TrainConfig) -> Result<(Model, Vec<EpochRecord>)> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(config, store, model)?;
    let mut log = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        log.push(trainer.run_epoch()?);
    }
    Ok((trainer.into_model(), log))
}
