//! The four subcommands, as library functions that write to any `Write`.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context, Result};
use mei_core::data::{augment_inverse_relations, Split, Triple, TripleStore, Vocabulary};
use mei_core::efficiency::EfficiencyReport;
use mei_core::train::EpochRecord;
use mei_core::{evaluate_triples, MetricsReport, Model, Trainer};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, resolve_dataset, Dataset, DatasetPaths};

/// Default run directory: `<output_dir>/<unix seconds>-seed<seed>`.
pub fn default_run_dir(config: &RunConfig) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Path::new(&config.output_dir).join(format!("{secs}-seed{}", config.seed))
}

pub fn open_dataset(name: &str) -> Result<Dataset> {
    let dir = resolve_dataset(name)?;
    let data = load_dataset(&DatasetPaths::in_dir(&dir)).with_context(|| format!("loading dataset {}", dir.display()))?;
    Ok(data)
}

/// Triples of `split` over the original relations only. With inverse
/// augmentation each original triple is still ranked in both directions,
/// so reverse copies would count twice.
fn original_triples(store: &TripleStore, split: Split, num_original: usize) -> Vec<Triple> {
    store
        .split(split)
        .iter()
        .copied()
        .filter(|t| (t.relation as usize) < num_original)
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub epochs: Vec<EpochRecord>,
    /// Every validation report, paired with its epoch (1-based).
    pub validations: Vec<(usize, MetricsReport)>,
    pub best: Option<(usize, MetricsReport)>,
}

pub fn train(config: &RunConfig, run_dir: &Path, out: &mut dyn Write) -> Result<TrainSummary> {
    config.validate()?;
    let model_config = config.model_config()?;
    let train_config = config.train_config()?;

    let Dataset { mut store, mut vocab, report } = open_dataset(&config.dataset)?;
    let num_original = store.num_relations();
    if report.warnings() > 0 {
        writeln!(
            out,
            "warning: {} duplicate triples dropped, {} entities and {} relations absent from train",
            report.duplicates_dropped, report.unseen_entities, report.unseen_relations
        )?;
    }
    if config.inverse_relations {
        augment_inverse_relations(&mut store, &mut vocab)?;
    }
    writeln!(
        out,
        "{} entities, {} relations, {} train / {} valid / {} test triples",
        vocab.num_entities(),
        num_original,
        report.train,
        report.valid,
        report.test
    )?;

    fs::create_dir_all(run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    fs::write(run_dir.join("config.txt"), config.to_text())?;
    let mut log = File::create(run_dir.join("epochs.tsv"))?;
    writeln!(log, "epoch\tloss\tlearning_rate\tvalid_mrr")?;

    let model = Model::new(model_config, store.num_entities(), store.num_relations(), config.seed)?;
    let mut trainer = Trainer::new(train_config, &store, model)?;
    let valid = original_triples(&store, Split::Valid, num_original);
    if valid.is_empty() {
        writeln!(out, "warning: validation split is empty, skipping validation")?;
    }
    let save = |model: &Model, name: &str| -> Result<()> {
        let ckpt = Checkpoint {
            model: model.clone(),
            vocab: vocab.clone(),
            inverse_relations: config.inverse_relations,
        };
        checkpoint::save(&run_dir.join(name), &ckpt)?;
        Ok(())
    };

    let mut summary = TrainSummary {
        run_dir: run_dir.to_path_buf(),
        epochs: Vec::new(),
        validations: Vec::new(),
        best: None,
    };
    for epoch in 1..=config.epochs {
        let record = trainer.run_epoch()?;
        let due = epoch == config.epochs || (config.eval_every > 0 && epoch % config.eval_every == 0);
        let mut mrr = String::new();
        if due && !valid.is_empty() {
            let report = evaluate_triples(trainer.model(), &store, Split::Valid, &valid)?;
            mrr = format!("{:.6}", report.mrr);
            if summary.best.is_none_or(|(_, best)| report.mrr > best.mrr) {
                summary.best = Some((epoch, report));
                save(trainer.model(), "best.ckpt")?;
            }
            summary.validations.push((epoch, report));
        }
        writeln!(log, "{}\t{:.6}\t{:.6e}\t{mrr}", epoch, record.loss, record.learning_rate)?;
        write!(out, "epoch {epoch:>4}  loss {:.6}  lr {:.3e}", record.loss, record.learning_rate)?;
        if !mrr.is_empty() {
            write!(out, "  valid mrr {mrr}")?;
        }
        writeln!(out)?;
        summary.epochs.push(record);
    }
    save(trainer.model(), "final.ckpt")?;
    if let Some((epoch, best)) = &summary.best {
        writeln!(out, "best validation at epoch {epoch}:\n{best}")?;
    }
    writeln!(out, "run directory: {}", run_dir.display())?;
    Ok(summary)
}

/// Loads `dataset` in the id space of `ckpt`, augmenting it the same way.
fn dataset_for(ckpt: &Checkpoint, dataset: &str) -> Result<(TripleStore, Vocabulary, usize)> {
    let Dataset { mut store, mut vocab, .. } = open_dataset(dataset)?;
    let num_original = store.num_relations();
    if ckpt.inverse_relations {
        augment_inverse_relations(&mut store, &mut vocab)?;
    }
    let (ours, theirs) = (&ckpt.vocab, &vocab);
    ensure!(
        ours.num_entities() == theirs.num_entities() && ours.num_relations() == theirs.num_relations(),
        "dataset does not match checkpoint: checkpoint has {} entities and {} relations, dataset has {} and {}",
        ours.num_entities(),
        ours.num_relations(),
        theirs.num_entities(),
        theirs.num_relations()
    );
    if ours != theirs {
        let entity = ours.entity_names().iter().zip(theirs.entity_names()).position(|(a, b)| a != b);
        match entity {
            Some(i) => bail!(
                "dataset does not match checkpoint: entity {i} is `{}` in the checkpoint but `{}` in the dataset",
                ours.entity_names()[i],
                theirs.entity_names()[i]
            ),
            None => bail!("dataset does not match checkpoint: relation names differ"),
        }
    }
    Ok((store, vocab, num_original))
}

pub fn evaluate(checkpoint: &Path, dataset: &str, split: Split, out: &mut dyn Write) -> Result<MetricsReport> {
    let ckpt = checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let (store, _, num_original) = dataset_for(&ckpt, dataset)?;
    let triples = original_triples(&store, split, num_original);
    let report = evaluate_triples(&ckpt.model, &store, split, &triples)
        .with_context(|| format!("evaluating the {split} split"))?;
    writeln!(out, "{report}")?;
    writeln!(out, "{}", report.record())?;
    Ok(report)
}

fn nearest<'a>(names: &'a [String], query: &str) -> Vec<&'a str> {
    let mut scored: Vec<(usize, &str)> = names
        .iter()
        .map(|n| (strsim::levenshtein(n, query), n.as_str()))
        .collect();
    scored.sort();
    scored.into_iter().take(5).map(|(_, n)| n).collect()
}

fn lookup(kind: &str, names: &[String], id: Option<u32>, query: &str) -> Result<usize> {
    match id {
        Some(id) => Ok(id as usize),
        None => bail!("unknown {kind} `{query}`; nearest: {}", nearest(names, query).join(", ")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub rank: usize,
    pub entity: String,
    pub score: f64,
    /// `None` when no dataset was given.
    pub known: Option<bool>,
}

pub fn predict(
    checkpoint: &Path,
    head: &str,
    relation: &str,
    top_n: usize,
    dataset: Option<&str>,
    out: &mut dyn Write,
) -> Result<Vec<Prediction>> {
    let ckpt = checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let vocab = &ckpt.vocab;
    let h = lookup("entity", vocab.entity_names(), vocab.entity_id(head), head)?;
    let r = lookup("relation", vocab.relation_names(), vocab.relation_id(relation), relation)?;
    let store = match dataset {
        Some(d) => Some(dataset_for(&ckpt, d)?.0),
        None => None,
    };

    let scores = ckpt.model.forward_scores_1n(h, r)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(top_n);

    writeln!(out, "rank\tentity\tscore\tknown")?;
    let mut predictions = Vec::with_capacity(order.len());
    for (i, e) in order.into_iter().enumerate() {
        let known = store
            .as_ref()
            .map(|s| s.is_known(&Triple::new(h as u32, e as u32, r as u32)));
        let p = Prediction {
            rank: i + 1,
            entity: vocab.entity_names()[e].clone(),
            score: scores[e],
            known,
        };
        let flag = match p.known {
            Some(true) => "yes",
            Some(false) => "no",
            None => "-",
        };
        writeln!(out, "{}\t{}\t{:.6}\t{flag}", p.rank, p.entity, p.score)?;
        predictions.push(p);
    }
    Ok(predictions)
}

/// Inputs of the `efficiency` command. Two of `d`, `k`, `c` determine the
/// third.
#[derive(Debug, Clone, Default)]
pub struct EfficiencyArgs {
    pub entities: Option<u64>,
    pub relations: Option<u64>,
    pub d: Option<u64>,
    pub k: Option<u64>,
    pub c: Option<u64>,
    pub shared: bool,
    pub dataset: Option<String>,
}

pub fn efficiency(args: &EfficiencyArgs, out: &mut dyn Write) -> Result<EfficiencyReport> {
    let (d, k, c) = match (args.d, args.k, args.c) {
        (Some(d), Some(k), Some(c)) => {
            ensure!(d == k * c, "D = {d} but K * C = {k} * {c} = {}", k * c);
            (d, k, c)
        }
        (None, Some(k), Some(c)) => (k * c, k, c),
        (Some(d), Some(k), None) => {
            ensure!(k > 0 && d % k == 0, "D = {d} is not divisible by K = {k}");
            (d, k, d / k)
        }
        (Some(d), None, Some(c)) => {
            ensure!(c > 0 && d % c == 0, "D = {d} is not divisible by C = {c}");
            (d, d / c, c)
        }
        _ => bail!("give at least two of --d, --k and --c"),
    };
    let (mut entities, mut relations) = (args.entities, args.relations);
    if let Some(name) = &args.dataset {
        let data = open_dataset(name)?;
        entities = entities.or(Some(data.vocab.num_entities() as u64));
        relations = relations.or(Some(data.vocab.num_relations() as u64));
    }
    let entities = entities.context("--entities (or --dataset) is required")?;
    let relations = relations.context("--relations (or --dataset) is required")?;
    let report = EfficiencyReport::new(entities, relations, d, k, c, args.shared)?;
    writeln!(out, "{report}")?;
    writeln!(out, "{}", EfficiencyReport::RECORD_HEADER)?;
    writeln!(out, "{}", report.record())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_names_rank_by_edit_distance() {
        let names: Vec<String> = ["hypernym", "hyponym", "part_of", "member_of"].map(String::from).to_vec();
        assert_eq!(nearest(&names, "hypernim")[..2], ["hypernym", "hyponym"]);
        let err = lookup("relation", &names, None, "hypernim").unwrap_err().to_string();
        assert!(err.starts_with("unknown relation `hypernim`; nearest: hypernym, hyponym"), "{err}");
    }

    #[test]
    fn efficiency_derives_the_missing_size() {
        let mut sink = Vec::new();
        let base = EfficiencyArgs {
            entities: Some(40943),
            relations: Some(11),
            ..Default::default()
        };
        let r = efficiency(&EfficiencyArgs { d: Some(200), k: Some(2), ..base.clone() }, &mut sink).unwrap();
        assert_eq!(r.c, 100);
        let r = efficiency(&EfficiencyArgs { d: Some(200), c: Some(50), ..base.clone() }, &mut sink).unwrap();
        assert_eq!(r.k, 4);
        assert!(efficiency(&EfficiencyArgs { d: Some(200), k: Some(3), c: Some(50), ..base.clone() }, &mut sink).is_err());
        assert!(efficiency(&EfficiencyArgs { d: Some(200), k: Some(3), ..base.clone() }, &mut sink).is_err());
        assert!(efficiency(&EfficiencyArgs { d: Some(200), ..base }, &mut sink).is_err());
    }
}
