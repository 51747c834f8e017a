//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes   "MEICKPT\0"
//! version  u32 LE
//! header   u64 LE length + UTF-8 `key=value` lines
//! names    u64 LE count + (u32 LE length + UTF-8) per entity, then relations
//! tensors  u64 LE length + f64 LE values, in this order:
//!          entity, relation, cores, scale ×4, shift ×4, running mean ×4,
//!          running variance ×4 (sites in the order relation_input,
//!          matching_matrix, head_input, hidden_output)
//! ```
//!
//! Values are stored as raw IEEE bits, so a reload is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mei_core::data::Vocabulary;
use mei_core::model::{FixedPattern, Model, ModelConfig, Parameters, RunningStats, Site, SiteConfig};

pub const MAGIC: &[u8; 8] = b"MEICKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (this build reads version {VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupted checkpoint header: {0}")]
    Header(String),
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
    #[error(transparent)]
    Core(#[from] mei_core::Error),
}

/// A model plus the vocabulary and training flags needed to use it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    /// Whether the relation vocabulary was augmented with inverses.
    pub inverse_relations: bool,
}

fn header_text(ckpt: &Checkpoint) -> String {
    let m = &ckpt.model;
    let cfg = m.config();
    let mut lines = vec![
        format!("version={VERSION}"),
        format!("num_entities={}", m.num_entities()),
        format!("num_relations={}", m.num_relations()),
        format!("partitions={}", cfg.partitions),
        format!("entity_width={}", cfg.entity_width),
        format!("relation_width={}", cfg.relation_width),
        format!("shared_core={}", cfg.shared_core),
        format!("fixed_core={}", cfg.fixed_core.map_or("none", FixedPattern::name)),
        format!("init_scale={}", cfg.init_scale),
        format!("bn_momentum={}", cfg.bn_momentum),
        format!("bn_epsilon={}", cfg.bn_epsilon),
        format!("seed={}", m.seed()),
        format!("inverse_relations={}", ckpt.inverse_relations),
    ];
    for site in Site::ALL {
        let s = cfg.site(site);
        lines.push(format!("{}_dropout={}", site.name(), s.dropout));
        lines.push(format!("{}_batchnorm={}", site.name(), s.batchnorm));
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let header = header_text(ckpt);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for names in [ckpt.vocab.entity_names(), ckpt.vocab.relation_names()] {
        out.extend_from_slice(&(names.len() as u64).to_le_bytes());
        for name in names {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
    }
    let model = &ckpt.model;
    let stats = model.stats.mean.iter().chain(&model.stats.var).map(Vec::as_slice);
    for tensor in model.params.tensors().into_iter().chain(stats) {
        out.extend_from_slice(&(tensor.len() as u64).to_le_bytes());
        for v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| CheckpointError::Truncated(what))
    }

    fn string(&mut self, len: usize, what: &'static str) -> Result<String, CheckpointError> {
        String::from_utf8(self.take(len, what)?.to_vec())
            .map_err(|_| CheckpointError::Header(format!("{what} is not valid UTF-8")))
    }

    fn tensor(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let len = self.u64("tensor length")?;
        let bytes = self.take(len.checked_mul(8).ok_or(CheckpointError::Truncated("tensor"))?, "tensor")?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

struct Header(BTreeMap<String, String>);

impl Header {
    fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Header(format!("line `{line}` is not key=value")))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let raw = self.0.get(key).ok_or_else(|| CheckpointError::Header(format!("missing `{key}`")))?;
        raw.parse()
            .map_err(|_| CheckpointError::Header(format!("bad value `{raw}` for `{key}`")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes };
    if r.take(8, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let len = r.u64("header length")?;
    let header = Header::parse(&r.string(len, "header")?)?;
    if header.get::<u32>("version")? != version {
        return Err(CheckpointError::Header("header version disagrees with container".into()));
    }

    let mut config = ModelConfig::new(
        header.get("partitions")?,
        header.get("entity_width")?,
        header.get("relation_width")?,
    );
    config.shared_core = header.get("shared_core")?;
    let fixed: String = header.get("fixed_core")?;
    config.fixed_core = match fixed.as_str() {
        "none" => None,
        name => Some(
            FixedPattern::from_name(name).ok_or_else(|| CheckpointError::Header(format!("unknown fixed core `{name}`")))?,
        ),
    };
    config.init_scale = header.get("init_scale")?;
    config.bn_momentum = header.get("bn_momentum")?;
    config.bn_epsilon = header.get("bn_epsilon")?;
    for site in Site::ALL {
        config.sites[site.index()] = SiteConfig {
            dropout: header.get(&format!("{}_dropout", site.name()))?,
            batchnorm: header.get(&format!("{}_batchnorm", site.name()))?,
        };
    }
    let num_entities: usize = header.get("num_entities")?;
    let num_relations: usize = header.get("num_relations")?;
    let seed: u64 = header.get("seed")?;
    let inverse_relations: bool = header.get("inverse_relations")?;

    let mut names = [Vec::new(), Vec::new()];
    for list in &mut names {
        let count = r.u64("name count")?;
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            list.push(r.string(len, "name")?);
        }
    }
    let [entities, relations] = names;
    if entities.len() != num_entities || relations.len() != num_relations {
        return Err(CheckpointError::Header(format!(
            "header declares {num_entities} entities and {num_relations} relations, vocabulary has {} and {}",
            entities.len(),
            relations.len()
        )));
    }
    let vocab = Vocabulary::from_names(entities, relations)?;

    let mut next = || r.tensor();
    let params = Parameters {
        entity: next()?,
        relation: next()?,
        cores: next()?,
        scale: [next()?, next()?, next()?, next()?],
        shift: [next()?, next()?, next()?, next()?],
    };
    let stats = RunningStats {
        mean: [next()?, next()?, next()?, next()?],
        var: [next()?, next()?, next()?, next()?],
    };
    if !r.bytes.is_empty() {
        return Err(CheckpointError::TrailingBytes(r.bytes.len()));
    }
    let model = Model::from_parts(config, num_entities, num_relations, seed, params, stats)?;
    Ok(Checkpoint {
        model,
        vocab,
        inverse_relations,
    })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, encode(ckpt)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut cfg = ModelConfig::new(2, 3, 2).with_site(
            Site::MatchingMatrix,
            SiteConfig {
                dropout: 0.1,
                batchnorm: true,
            },
        );
        cfg.shared_core = false;
        let mut model = Model::new(cfg, 3, 2, 42).unwrap();
        model.stats.var[1][0] = 0.123456789012345;
        model.params.entity[0] = f64::MIN_POSITIVE;
        let vocab = Vocabulary::from_names(
            vec!["a".into(), "β".into(), "c d".into()],
            vec!["r".into(), "r_reverse".into()],
        )
        .unwrap();
        Checkpoint {
            model,
            vocab,
            inverse_relations: true,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let bytes = encode(&ckpt);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(encode(&back), bytes);
        let fixed = Checkpoint {
            model: Model::new(ModelConfig::fixed(FixedPattern::SimplE, 2), 3, 2, 1).unwrap(),
            ..sample()
        };
        assert_eq!(decode(&encode(&fixed)).unwrap(), fixed);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode(&sample());
        assert!(matches!(decode(b"NOTACKPT"), Err(CheckpointError::BadMagic)));
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(CheckpointError::TrailingBytes(1))));
        let mut version = bytes.clone();
        version[8] = 9;
        assert!(matches!(decode(&version), Err(CheckpointError::UnsupportedVersion(9))));
        // flip the first header byte: "version=1" -> "wersion=1"
        let mut header = bytes.clone();
        header[20] = b'w';
        assert!(matches!(decode(&header), Err(CheckpointError::Header(_))));
    }
}
