//! Triple data: vocabularies, TSV ingestion, splits, negative sampling and
//! filtered candidate sets.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relation name used to tie the subject and object populations of one entity together.
pub const IDENTITY_RELATION: &str = "#isIdenticalTo";

/// Dense, first-appearance indexed entity and relation names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from explicit name lists, rejecting duplicates.
    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        for name in entities {
            if vocab.entity_id(&name).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate entity `{name}`")));
            }
            vocab.intern_entity(&name);
        }
        for name in relations {
            if vocab.relation_id(&name).is_some() {
                return Err(Error::RelationExists(name));
            }
            vocab.intern_relation(&name);
        }
        Ok(vocab)
    }

    pub fn intern_entity(&mut self, name: &str) -> usize {
        intern(&mut self.entities, &mut self.entity_index, name)
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        intern(&mut self.relations, &mut self.relation_index, name)
    }

    /// Registers a relation that must not exist yet.
    pub fn register_relation(&mut self, name: &str) -> Result<usize> {
        if self.relation_index.contains_key(name) {
            return Err(Error::RelationExists(name.to_owned()));
        }
        Ok(self.intern_relation(name))
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> &str {
        &self.entities[id]
    }

    pub fn relation_name(&self, id: usize) -> &str {
        &self.relations[id]
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Resolves a named triple without extending the vocabulary.
    pub fn resolve(&self, s: &str, p: &str, o: &str) -> Result<Triple> {
        let entity = |name: &str| {
            self.entity_id(name).ok_or_else(|| Error::UnknownName {
                kind: "entity",
                name: name.to_owned(),
            })
        };
        let p = self.relation_id(p).ok_or_else(|| Error::UnknownName {
            kind: "relation",
            name: p.to_owned(),
        })?;
        Ok(Triple::new(entity(s)?, p, entity(o)?))
    }
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&id) = index.get(name) {
        return id;
    }
    let id = names.len();
    names.push(name.to_owned());
    index.insert(name.to_owned(), id);
    id
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub s: usize,
    pub p: usize,
    pub o: usize,
}

impl Triple {
    pub const fn new(s: usize, p: usize, o: usize) -> Self {
        Triple { s, p, o }
    }

    /// Entity occupying `slot`.
    pub fn entity(&self, slot: Slot) -> usize {
        match slot {
            Slot::Subject => self.s,
            Slot::Object => self.o,
        }
    }

    /// Copy of the triple with `slot` replaced by `entity`.
    pub fn with(&self, slot: Slot, entity: usize) -> Triple {
        match slot {
            Slot::Subject => Triple::new(entity, self.p, self.o),
            Slot::Object => Triple::new(self.s, self.p, entity),
        }
    }
}

/// Position of an entity within a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Subject,
    Object,
}

impl Slot {
    pub const BOTH: [Slot; 2] = [Slot::Subject, Slot::Object];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Subject => "subject",
            Slot::Object => "object",
        }
    }
}

/// How unknown names are treated while reading a triple file.
enum Names<'a> {
    Extend(&'a mut Vocabulary),
    Strict(&'a Vocabulary),
}

fn read_triples(path: &Path, mut names: Names<'_>) -> Result<Vec<Triple>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if let Some(empty) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("field {} is empty", empty + 1),
            });
        }
        let triple = match &mut names {
            Names::Extend(vocab) => {
                let s = vocab.intern_entity(fields[0]);
                let p = vocab.intern_relation(fields[1]);
                let o = vocab.intern_entity(fields[2]);
                Triple::new(s, p, o)
            }
            Names::Strict(vocab) => vocab.resolve(fields[0], fields[1], fields[2])?,
        };
        triples.push(triple);
    }
    if triples.is_empty() {
        return Err(Error::Empty(format!(
            "{} contains no triples",
            path.display()
        )));
    }
    Ok(triples)
}

/// Reads a `subject<TAB>predicate<TAB>object` file, building a fresh vocabulary
/// in first-appearance order. Duplicate lines are kept.
pub fn load_triples(path: impl AsRef<Path>) -> Result<(Vocabulary, Vec<Triple>)> {
    let mut vocab = Vocabulary::new();
    let triples = read_triples(path.as_ref(), Names::Extend(&mut vocab))?;
    Ok((vocab, triples))
}

/// Like [`load_triples`] but appends new names to an existing vocabulary.
pub fn load_triples_into(path: impl AsRef<Path>, vocab: &mut Vocabulary) -> Result<Vec<Triple>> {
    read_triples(path.as_ref(), Names::Extend(vocab))
}

/// Reads triples whose names must all exist in `vocab`.
pub fn load_triples_strict(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Triple>> {
    read_triples(path.as_ref(), Names::Strict(vocab))
}

/// Seeded train/test split.
///
/// Distinct triples are shuffled and the first `round(ratio * distinct)` go to
/// train; duplicate lines follow their first occurrence, so the two sides never
/// share a fact.
pub fn split(triples: &[Triple], ratio: f64, seed: u64) -> Result<(Vec<Triple>, Vec<Triple>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio {ratio} not in (0, 1)"
        )));
    }
    if triples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 triples to split, got {}",
            triples.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut distinct: Vec<Triple> = triples
        .iter()
        .copied()
        .filter(|t| seen.insert(*t))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let n_train = (ratio * distinct.len() as f64).round() as usize;
    let train_set: HashSet<Triple> = distinct[..n_train].iter().copied().collect();
    let (train, test) = triples.iter().partition(|t| train_set.contains(t));
    Ok((train, test))
}

/// Corrupts `t`: `k_subj` copies with a new subject and `k_obj` with a new object,
/// each drawn uniformly from the other `num_entities - 1` entities.
///
/// Accidental hits on known-true triples are not filtered.
pub fn negative_samples<R: Rng + ?Sized>(
    t: Triple,
    k_subj: usize,
    k_obj: usize,
    num_entities: usize,
    rng: &mut R,
) -> Vec<Triple> {
    let mut out = Vec::with_capacity(k_subj + k_obj);
    if k_subj + k_obj == 0 {
        return out;
    }
    assert!(
        num_entities >= 2,
        "negative sampling needs at least 2 entities"
    );
    let mut other = |current: usize| {
        let e = rng.gen_range(0..num_entities - 1);
        if e >= current {
            e + 1
        } else {
            e
        }
    };
    for _ in 0..k_subj {
        out.push(t.with(Slot::Subject, other(t.s)));
    }
    for _ in 0..k_obj {
        out.push(t.with(Slot::Object, other(t.o)));
    }
    out
}

/// Train and test triples plus the set of every known-true fact.
#[derive(Debug, Clone)]
pub struct TripleStore {
    train: Vec<Triple>,
    test: Vec<Triple>,
    known: HashSet<Triple>,
    objects_of: HashMap<(usize, usize), BTreeSet<usize>>,
    subjects_of: HashMap<(usize, usize), BTreeSet<usize>>,
    num_entities: usize,
    frozen_zero: BTreeSet<usize>,
}

impl TripleStore {
    /// Fails if a fact appears in both lists or an index is out of range.
    pub fn new(
        train: Vec<Triple>,
        test: Vec<Triple>,
        num_entities: usize,
        num_relations: usize,
    ) -> Result<Self> {
        for t in train.iter().chain(&test) {
            if t.s >= num_entities || t.o >= num_entities || t.p >= num_relations {
                return Err(Error::InvalidArgument(format!(
                    "triple {t:?} outside vocabulary"
                )));
            }
        }
        let train_set: HashSet<Triple> = train.iter().copied().collect();
        if let Some(t) = test.iter().find(|t| train_set.contains(t)) {
            return Err(Error::InvalidArgument(format!(
                "triple {t:?} is in both train and test"
            )));
        }
        let mut store = TripleStore {
            train,
            test,
            known: HashSet::new(),
            objects_of: HashMap::new(),
            subjects_of: HashMap::new(),
            num_entities,
            frozen_zero: BTreeSet::new(),
        };
        let all: Vec<Triple> = store.train.iter().chain(&store.test).copied().collect();
        for t in all {
            store.index(t);
        }
        Ok(store)
    }

    fn index(&mut self, t: Triple) {
        if self.known.insert(t) {
            self.objects_of.entry((t.s, t.p)).or_default().insert(t.o);
            self.subjects_of.entry((t.p, t.o)).or_default().insert(t.s);
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn is_known(&self, t: &Triple) -> bool {
        self.known.contains(t)
    }

    pub fn known_len(&self) -> usize {
        self.known.len()
    }

    /// Relations whose vector is pinned at zero (alignment relations).
    pub fn frozen_zero_relations(&self) -> &BTreeSet<usize> {
        &self.frozen_zero
    }

    /// Entities that may fill `slot` of `t` in filtered ranking: every entity
    /// except those completing another known-true triple, plus the original one.
    /// Returned in ascending index order.
    pub fn candidates_filtered(&self, t: &Triple, slot: Slot) -> Vec<usize> {
        let known = match slot {
            Slot::Subject => self.subjects_of.get(&(t.p, t.o)),
            Slot::Object => self.objects_of.get(&(t.s, t.p)),
        };
        let target = t.entity(slot);
        (0..self.num_entities)
            .filter(|e| *e == target || !known.is_some_and(|k| k.contains(e)))
            .collect()
    }

    /// Appends `<e, name, e>` to train for every entity and registers `name` as a
    /// relation whose vector stays at zero. Meant for separate subject/object
    /// populations, where it pulls the two representations of an entity together.
    pub fn add_alignment_triples(&mut self, vocab: &mut Vocabulary, name: &str) -> Result<usize> {
        let p = vocab.register_relation(name)?;
        self.frozen_zero.insert(p);
        for e in 0..self.num_entities {
            let t = Triple::new(e, p, e);
            self.train.push(t);
            self.index(t);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}
