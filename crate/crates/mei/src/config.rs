//! Run configuration: a flat `key = value` file, overridable from the
//! command line.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mei_core::model::{FixedPattern, ModelConfig, Site, SiteConfig};
use mei_core::train::{AdamConfig, LossMode, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}:{line}: expected `key = value`", path.display())]
    Syntax { path: PathBuf, line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    Value { key: String, value: String },
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn render<T: Display>(v: &T) -> String {
    v.to_string()
}

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr, )*) => {
        /// Every setting of a training run.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $( stringify!($field) => self.$field = parse_value(key, value)?, )*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// One `key = value` line per setting, in declaration order.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $( out.push_str(&format!("{} = {}\n", stringify!($field), render(&self.$field))); )*
                out
            }
        }

        /// Command-line overrides; each flag replaces the matching key.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct RunArgs {
            $( $(#[doc = $doc])* #[arg(long)] pub $field: Option<$ty>, )*
        }

        impl RunArgs {
            pub fn apply(&self, config: &mut RunConfig) {
                $( if let Some(v) = &self.$field { config.$field = v.clone(); } )*
            }
        }
    };
}

run_config! {
    /// Dataset directory, or a name under $MEI_DATA_DIR.
    dataset: String = String::new(),
    /// Parent directory for run directories.
    output_dir: String = "runs".to_string(),
    /// Number of partitions K.
    partitions: usize = 3,
    /// Entity partition size C_e (ignored with a fixed core).
    entity_width: usize = 40,
    /// Relation partition size C_r (ignored with a fixed core).
    relation_width: usize = 40,
    /// Share one core across partitions.
    shared_core: bool = true,
    /// none, distmult, complex, simple or cp.
    fixed_core: String = "none".to_string(),
    /// Parameters start uniform in [-init_scale, init_scale].
    init_scale: f64 = 0.1,
    bn_momentum: f64 = 0.1,
    bn_epsilon: f64 = 1e-5,
    relation_input_dropout: f64 = 0.0,
    relation_input_batchnorm: bool = false,
    matching_matrix_dropout: f64 = 0.0,
    matching_matrix_batchnorm: bool = false,
    head_input_dropout: f64 = 0.0,
    head_input_batchnorm: bool = false,
    hidden_output_dropout: f64 = 0.0,
    hidden_output_batchnorm: bool = false,
    batch_size: usize = 128,
    learning_rate: f64 = 3e-3,
    /// Learning rate multiplier per epoch, in (0, 1].
    decay_rate: f64 = 1.0,
    epochs: usize = 100,
    /// binary_ce_sampled, binary_ce_1n or softmax_1n.
    loss: String = "binary_ce_1n".to_string(),
    negatives_per_positive: usize = 10,
    l3_weight: f64 = 0.0,
    l3_include_cores: bool = false,
    adam_beta1: f64 = 0.9,
    adam_beta2: f64 = 0.999,
    adam_epsilon: f64 = 1e-8,
    seed: u64 = 0,
    /// Add a reverse relation for every relation.
    inverse_relations: bool = true,
    /// Validate every this many epochs (0 = only after the last).
    eval_every: usize = 10,
}

impl RunConfig {
    /// Applies a config file on top of `self`. `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.merge_text(&text, path)
    }

    fn site_config(&self, site: Site) -> SiteConfig {
        let (dropout, batchnorm) = match site {
            Site::RelationInput => (self.relation_input_dropout, self.relation_input_batchnorm),
            Site::MatchingMatrix => (self.matching_matrix_dropout, self.matching_matrix_batchnorm),
            Site::HeadInput => (self.head_input_dropout, self.head_input_batchnorm),
            Site::HiddenOutput => (self.hidden_output_dropout, self.hidden_output_batchnorm),
        };
        SiteConfig { dropout, batchnorm }
    }

    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let mut cfg = match self.fixed_core.as_str() {
            "none" => ModelConfig::new(self.partitions, self.entity_width, self.relation_width),
            name => {
                let pattern = FixedPattern::from_name(name).ok_or_else(|| ConfigError::Value {
                    key: "fixed_core".into(),
                    value: name.into(),
                })?;
                ModelConfig::fixed(pattern, self.partitions)
            }
        };
        if cfg.fixed_core.is_none() {
            cfg.shared_core = self.shared_core;
        }
        cfg.init_scale = self.init_scale;
        cfg.bn_momentum = self.bn_momentum;
        cfg.bn_epsilon = self.bn_epsilon;
        for site in Site::ALL {
            cfg.sites[site.index()] = self.site_config(site);
        }
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let loss = LossMode::from_name(&self.loss).ok_or_else(|| ConfigError::Value {
            key: "loss".into(),
            value: self.loss.clone(),
        })?;
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            decay_rate: self.decay_rate,
            epochs: self.epochs,
            loss,
            negatives_per_positive: self.negatives_per_positive,
            l3_weight: self.l3_weight,
            l3_include_cores: self.l3_include_cores,
            seed: self.seed,
            adam: AdamConfig {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                epsilon: self.adam_epsilon,
            },
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without the dataset.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset.is_empty() {
            return Err(ConfigError::Invalid("dataset is not set".into()));
        }
        self.model_config()?;
        self.train_config()?;
        Ok(())
    }
}
