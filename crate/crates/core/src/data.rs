//! Vocabularies, id-mapped triples and the filter sets used by filtered
//! ranking.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use hashbrown::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Suffix appended to a relation name to form its inverse.
pub const INVERSE_SUFFIX: &str = "_reverse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: u32,
    pub tail: u32,
    pub relation: u32,
}

impl Triple {
    pub fn new(head: u32, tail: u32, relation: u32) -> Self {
        Self { head, tail, relation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(alloc::format!("unknown split `{other}`"))),
        }
    }
}

/// Bidirectional name/id maps for entities and relations. Ids are dense and
/// assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_index: HashMap<String, u32>,
    relation_index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a vocabulary from ordered name lists. Names must be distinct.
    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let mut vocab = Self::new();
        for name in entities {
            if vocab.entity_index.contains_key(&name) {
                return Err(Error::Config(alloc::format!("duplicate entity name `{name}`")));
            }
            vocab.intern_entity(&name);
        }
        for name in relations {
            if vocab.relation_index.contains_key(&name) {
                return Err(Error::Config(alloc::format!("duplicate relation name `{name}`")));
            }
            vocab.intern_relation(&name);
        }
        Ok(vocab)
    }

    pub fn intern_entity(&mut self, name: &str) -> u32 {
        intern(&mut self.entities, &mut self.entity_index, name)
    }

    pub fn intern_relation(&mut self, name: &str) -> u32 {
        intern(&mut self.relations, &mut self.relation_index, name)
    }

    pub fn entity_id(&self, name: &str) -> Option<u32> {
        self.entity_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<u32> {
        self.relation_index.get(name).copied()
    }

    pub fn entity_name(&self, id: u32) -> Option<&str> {
        self.entities.get(id as usize).map(String::as_str)
    }

    pub fn relation_name(&self, id: u32) -> Option<&str> {
        self.relations.get(id as usize).map(String::as_str)
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Appends `<name>_reverse` for every current relation, so that relation
    /// `r + |R|` is the inverse of `r`.
    pub fn add_inverse_relations(&mut self) {
        let names: Vec<String> = self.relations.clone();
        for name in names {
            let mut inverse = name;
            inverse.push_str(INVERSE_SUFFIX);
            self.intern_relation(&inverse);
        }
    }
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, u32>, name: &str) -> u32 {
    if let Some(&id) = index.get(name) {
        return id;
    }
    let id = names.len() as u32;
    names.push(name.to_string());
    index.insert(name.to_string(), id);
    id
}

/// Counts gathered while building a store.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Duplicate triples dropped within a split.
    pub duplicates_dropped: usize,
    /// Entities that never occur in the training split.
    pub unseen_entities: usize,
    /// Relations that never occur in the training split.
    pub unseen_relations: usize,
}

impl LoadReport {
    pub fn warnings(&self) -> usize {
        self.duplicates_dropped + self.unseen_entities + self.unseen_relations
    }
}

/// Collects named triples per split and assigns ids in first-appearance
/// order over train, then valid, then test (head before tail within a line).
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    splits: [Vec<(String, String, String)>; 3],
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `(head, relation, tail)` to `split`.
    pub fn push(&mut self, split: Split, head: &str, relation: &str, tail: &str) {
        self.splits[split_slot(split)].push((head.to_string(), relation.to_string(), tail.to_string()));
    }

    pub fn build(self) -> Result<(TripleStore, Vocabulary, LoadReport)> {
        if self.splits[0].is_empty() {
            return Err(Error::NoTrainingTriples);
        }
        let mut vocab = Vocabulary::new();
        let mut report = LoadReport::default();
        let mut ids: [Vec<Triple>; 3] = Default::default();
        let mut trained_entities = 0;
        let mut trained_relations = 0;
        for (slot, named) in self.splits.iter().enumerate() {
            let mut seen = HashSet::with_capacity(named.len());
            for (h, r, t) in named {
                let head = vocab.intern_entity(h);
                let tail = vocab.intern_entity(t);
                let relation = vocab.intern_relation(r);
                let triple = Triple::new(head, tail, relation);
                if seen.insert(triple) {
                    ids[slot].push(triple);
                } else {
                    report.duplicates_dropped += 1;
                }
            }
            if slot == 0 {
                trained_entities = vocab.num_entities();
                trained_relations = vocab.num_relations();
            }
        }
        report.unseen_entities = vocab.num_entities() - trained_entities;
        report.unseen_relations = vocab.num_relations() - trained_relations;
        let [train, valid, test] = ids;
        report.train = train.len();
        report.valid = valid.len();
        report.test = test.len();
        let store = TripleStore::new(vocab.num_entities(), vocab.num_relations(), train, valid, test)?;
        Ok((store, vocab, report))
    }
}

fn split_slot(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Valid => 1,
        Split::Test => 2,
    }
}

/// Train/valid/test triples plus the filter maps over their union.
///
/// `(h, r) → {t}` and `(t, r) → {h}` hold every true triple from all three
/// splits; candidate sets are sorted and free of duplicates.
#[derive(Debug, Clone)]
pub struct TripleStore {
    num_entities: usize,
    num_relations: usize,
    splits: [Vec<Triple>; 3],
    tail_filter: HashMap<(u32, u32), Vec<u32>>,
    head_filter: HashMap<(u32, u32), Vec<u32>>,
    inverse_augmented: bool,
}

impl TripleStore {
    pub fn new(
        num_entities: usize,
        num_relations: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::NoTrainingTriples);
        }
        let mut store = Self {
            num_entities,
            num_relations,
            splits: [dedup(train), dedup(valid), dedup(test)],
            tail_filter: HashMap::new(),
            head_filter: HashMap::new(),
            inverse_augmented: false,
        };
        for split in &store.splits {
            for t in split {
                check_triple(t, num_entities, num_relations)?;
            }
        }
        store.rebuild_filters();
        Ok(store)
    }

    fn rebuild_filters(&mut self) {
        let mut tails: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut heads: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for t in self.splits.iter().flatten() {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
            heads.entry((t.tail, t.relation)).or_default().push(t.head);
        }
        for set in tails.values_mut().chain(heads.values_mut()) {
            set.sort_unstable();
            set.dedup();
        }
        self.tail_filter = tails;
        self.head_filter = heads;
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        &self.splits[split_slot(split)]
    }

    pub fn train(&self) -> &[Triple] {
        self.split(Split::Train)
    }

    pub fn valid(&self) -> &[Triple] {
        self.split(Split::Valid)
    }

    pub fn test(&self) -> &[Triple] {
        self.split(Split::Test)
    }

    pub fn is_inverse_augmented(&self) -> bool {
        self.inverse_augmented
    }

    /// Every known true tail for `(head, relation)`; empty when the pair is
    /// unknown.
    pub fn tail_candidates(&self, head: u32, relation: u32) -> &[u32] {
        self.tail_filter
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every known true head for `(tail, relation)`.
    pub fn head_candidates(&self, tail: u32, relation: u32) -> &[u32] {
        self.head_filter
            .get(&(tail, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_known(&self, triple: &Triple) -> bool {
        self.tail_candidates(triple.head, triple.relation)
            .binary_search(&triple.tail)
            .is_ok()
    }

    /// Total size of the tail filter sets, equal to the number of distinct
    /// triples over all splits.
    pub fn filter_size(&self) -> usize {
        self.tail_filter.values().map(Vec::len).sum()
    }

    /// Adds `(t, h, r + |R|)` for every `(h, t, r)` in each split and doubles
    /// the relation count. Fails if the store was already augmented.
    pub fn augment_inverse_relations(&mut self) -> Result<()> {
        if self.inverse_augmented {
            return Err(Error::AlreadyAugmented);
        }
        let offset = self.num_relations as u32;
        for split in &mut self.splits {
            let inverse: Vec<Triple> = split
                .iter()
                .map(|t| Triple::new(t.tail, t.head, t.relation + offset))
                .collect();
            split.extend(inverse);
        }
        self.num_relations *= 2;
        self.inverse_augmented = true;
        self.rebuild_filters();
        Ok(())
    }
}

/// Augments both the store and its vocabulary with inverse relations.
pub fn augment_inverse_relations(store: &mut TripleStore, vocab: &mut Vocabulary) -> Result<()> {
    store.augment_inverse_relations()?;
    vocab.add_inverse_relations();
    Ok(())
}

fn dedup(triples: Vec<Triple>) -> Vec<Triple> {
    let mut seen = HashSet::with_capacity(triples.len());
    triples.into_iter().filter(|t| seen.insert(*t)).collect()
}

fn check_triple(t: &Triple, entities: usize, relations: usize) -> Result<()> {
    for (kind, id, len) in [
        ("entity", t.head as usize, entities),
        ("entity", t.tail as usize, entities),
        ("relation", t.relation as usize, relations),
    ] {
        if id >= len {
            return Err(Error::IdOutOfRange { kind, id, len });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn tiny() -> (TripleStore, Vocabulary, LoadReport) {
        let mut b = DatasetBuilder::new();
        b.push(Split::Train, "a", "likes", "b");
        b.push(Split::Train, "a", "likes", "c");
        b.push(Split::Train, "b", "knows", "a");
        b.push(Split::Valid, "c", "likes", "a");
        b.push(Split::Test, "a", "likes", "d");
        b.build().unwrap()
    }

    #[test]
    fn ids_follow_first_appearance() {
        let (store, vocab, report) = tiny();
        assert_eq!(vocab.entity_names(), &["a", "b", "c", "d"]);
        assert_eq!(vocab.relation_names(), &["likes", "knows"]);
        for (i, name) in vocab.entity_names().iter().enumerate() {
            assert_eq!(vocab.entity_id(name), Some(i as u32));
        }
        assert_eq!((report.train, report.valid, report.test), (3, 1, 1));
        assert_eq!(report.unseen_entities, 1);
        assert_eq!(store.num_entities(), 4);
    }

    #[test]
    fn empty_train_is_rejected() {
        let mut b = DatasetBuilder::new();
        b.push(Split::Test, "a", "r", "b");
        assert_eq!(b.build().unwrap_err(), Error::NoTrainingTriples);
    }

    #[test]
    fn duplicates_dropped_within_split() {
        let mut b = DatasetBuilder::new();
        b.push(Split::Train, "a", "r", "b");
        b.push(Split::Train, "a", "r", "b");
        b.push(Split::Test, "a", "r", "b");
        let (store, _, report) = b.build().unwrap();
        assert_eq!(report.duplicates_dropped, 1);
        assert_eq!(store.train().len(), 1);
        assert_eq!(store.test().len(), 1);
    }

    #[test]
    fn filters_match_brute_force_scan() {
        let (store, _, _) = tiny();
        let all: Vec<Triple> = Split::ALL.iter().flat_map(|s| store.split(*s).to_vec()).collect();
        for h in 0..4u32 {
            for r in 0..2u32 {
                let expected: BTreeSet<u32> = all
                    .iter()
                    .filter(|t| t.head == h && t.relation == r)
                    .map(|t| t.tail)
                    .collect();
                let got: BTreeSet<u32> = store.tail_candidates(h, r).iter().copied().collect();
                assert_eq!(got, expected);
                let expected: BTreeSet<u32> = all
                    .iter()
                    .filter(|t| t.tail == h && t.relation == r)
                    .map(|t| t.head)
                    .collect();
                let got: BTreeSet<u32> = store.head_candidates(h, r).iter().copied().collect();
                assert_eq!(got, expected);
            }
        }
        assert_eq!(store.filter_size(), 5);
        assert!(store.tail_candidates(3, 1).is_empty());
        assert!(store.tail_candidates(99, 99).is_empty());
    }

    #[test]
    fn inverse_augmentation() {
        let mut b = DatasetBuilder::new();
        b.push(Split::Train, "a", "r0", "b");
        let (mut store, mut vocab, _) = b.build().unwrap();
        augment_inverse_relations(&mut store, &mut vocab).unwrap();
        assert_eq!(store.num_relations(), 2);
        assert_eq!(store.train(), &[Triple::new(0, 1, 0), Triple::new(1, 0, 1)]);
        assert_eq!(vocab.relation_name(1), Some("r0_reverse"));
        assert_eq!(store.tail_candidates(1, 1), &[0]);
        assert_eq!(store.augment_inverse_relations(), Err(Error::AlreadyAugmented));
    }

    #[test]
    fn out_of_range_ids_rejected() {
        let err = TripleStore::new(2, 1, alloc::vec![Triple::new(0, 2, 0)], Vec::new(), Vec::new());
        assert!(matches!(err, Err(Error::IdOutOfRange { .. })));
    }

    #[test]
    fn vocabulary_from_names_rejects_duplicates() {
        let names = alloc::vec!["a".to_string(), "a".to_string()];
        assert!(Vocabulary::from_names(names, Vec::new()).is_err());
    }
}
