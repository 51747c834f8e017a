//! Filtered link-prediction ranking.
//!
//! A candidate is removed from the pool when it forms a known triple in any
//! split, except for the true entity itself. Ties count half, so the rank is
//! `1 + #greater + #equal / 2`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::data::{Split, Triple, TripleStore};
use crate::error::{Error, Result};
use crate::model::Model;

/// Which slot of the triple is replaced by every entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankResult {
    pub triple: Triple,
    pub direction: Direction,
    /// Filtered rank in `[1, |E|]`, a half-integer under ties.
    pub rank: f64,
}

/// Rank of `scores[truth]` among the candidates not listed in `filter`
/// (a sorted id list). The true entity always stays in the pool.
pub fn rank_from_scores(scores: &[f64], truth: usize, filter: &[u32]) -> f64 {
    let target = scores[truth];
    let mut greater = 0usize;
    let mut equal = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        if e == truth || filter.binary_search(&(e as u32)).is_ok() {
            continue;
        }
        if s > target {
            greater += 1;
        } else if s == target {
            equal += 1;
        }
    }
    1.0 + greater as f64 + equal as f64 / 2.0
}

/// Ranks the true entity of `triple` against every corruption of one slot,
/// in inference mode.
pub fn rank_triple(model: &Model, triple: Triple, direction: Direction, store: &TripleStore) -> Result<RankResult> {
    let (h, t, r) = (triple.head as usize, triple.tail as usize, triple.relation as usize);
    let rank = match direction {
        Direction::Tail => {
            model.check_entity(t)?;
            let scores = model.forward_scores_1n(h, r)?;
            rank_from_scores(&scores, t, store.tail_candidates(triple.head, triple.relation))
        }
        Direction::Head => {
            model.check_entity(h)?;
            let scores = model.forward_scores_heads(t, r)?;
            rank_from_scores(&scores, h, store.head_candidates(triple.tail, triple.relation))
        }
    };
    Ok(RankResult {
        triple,
        direction,
        rank,
    })
}

/// Head and tail ranks of every triple in `split`, tail first.
pub fn rank_split(model: &Model, store: &TripleStore, split: Split) -> Result<Vec<RankResult>> {
    rank_triples(model, store, store.split(split))
}

/// Head and tail ranks of `triples` against the filters of `store`.
pub fn rank_triples(model: &Model, store: &TripleStore, triples: &[Triple]) -> Result<Vec<RankResult>> {
    if triples.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut out = Vec::with_capacity(2 * triples.len());
    for &triple in triples {
        out.push(rank_triple(model, triple, Direction::Tail, store)?);
        out.push(rank_triple(model, triple, Direction::Head, store)?);
    }
    Ok(out)
}

/// Filtered MRR and hits over both directions of every triple in `split`.
pub fn evaluate(model: &Model, store: &TripleStore, split: Split) -> Result<MetricsReport> {
    evaluate_triples(model, store, split, store.split(split))
}

/// Like [`evaluate`] on a subset of a split, e.g. the original triples of
/// an inverse-augmented store.
pub fn evaluate_triples(model: &Model, store: &TripleStore, split: Split, triples: &[Triple]) -> Result<MetricsReport> {
    let ranks: Vec<f64> = rank_triples(model, store, triples)?.iter().map(|r| r.rank).collect();
    metrics_from_ranks(split, &ranks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub split: Split,
    /// Number of ranked predictions (twice the number of triples).
    pub count: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

pub fn metrics_from_ranks(split: Split, ranks: &[f64]) -> Result<MetricsReport> {
    if ranks.is_empty() {
        return Err(Error::EmptySplit);
    }
    let n = ranks.len() as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(MetricsReport {
        split,
        count: ranks.len(),
        mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits1: hits(1.0),
        hits3: hits(3.0),
        hits10: hits(10.0),
    })
}

impl MetricsReport {
    pub fn hits(&self, k: usize) -> Option<f64> {
        match k {
            1 => Some(self.hits1),
            3 => Some(self.hits3),
            10 => Some(self.hits10),
            _ => None,
        }
    }

    /// `split  count  mrr  h1  h3  h10`, tab separated.
    pub fn record(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.split, self.count, self.mrr, self.hits1, self.hits3, self.hits10
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "split  {}", self.split)?;
        writeln!(f, "count  {}", self.count)?;
        writeln!(f, "mrr    {:.6}", self.mrr)?;
        writeln!(f, "h@1    {:.6}", self.hits1)?;
        writeln!(f, "h@3    {:.6}", self.hits3)?;
        write!(f, "h@10   {:.6}", self.hits10)
    }
}
