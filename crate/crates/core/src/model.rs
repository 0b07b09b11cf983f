//! Triple scoring for SpikE, SpikE-S, TransE and TransE-S, the soft-margin
//! loss, and its analytic gradients.
//!
//! A triple `(s, p, o)` scores `sum_i |d(e_s, e_o)_i - r_p,i|`, where `d` is the
//! signed difference `e_s - e_o` (SpikE, TransE) or its absolute value
//! (SpikE-S, TransE-S). Plausible triples score close to zero.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Slot, Triple};
use crate::nlif::{EntityPopulation, NeuronParams, StimulusLayer};
use crate::scalar::{sigmoid, sign0, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    SpikE,
    SpikES,
    TransE,
    TransES,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::SpikE,
        ModelKind::SpikES,
        ModelKind::TransE,
        ModelKind::TransES,
    ];

    /// Entities are nLIF spike times rather than free vectors.
    pub fn is_spiking(self) -> bool {
        matches!(self, ModelKind::SpikE | ModelKind::SpikES)
    }

    /// Uses the absolute difference `|e_s - e_o|`.
    pub fn is_symmetric(self) -> bool {
        matches!(self, ModelKind::SpikES | ModelKind::TransES)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SpikE => "spike",
            ModelKind::SpikES => "spike-s",
            ModelKind::TransE => "transe",
            ModelKind::TransES => "transe-s",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spike" | "spike-a" => Ok(ModelKind::SpikE),
            "spike-s" => Ok(ModelKind::SpikES),
            "transe" => Ok(ModelKind::TransE),
            "transe-s" => Ok(ModelKind::TransES),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}`"
            ))),
        }
    }
}

/// Whether one population (or vector) serves an entity in both slots, or each
/// entity has distinct subject and object representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PopulationMode {
    #[default]
    Shared,
    Separate,
}

impl PopulationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PopulationMode::Shared => "shared",
            PopulationMode::Separate => "separate",
        }
    }
}

impl FromStr for PopulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(PopulationMode::Shared),
            "separate" => Ok(PopulationMode::Separate),
            other => Err(Error::InvalidArgument(format!(
                "unknown population mode `{other}`"
            ))),
        }
    }
}

/// Teaching signal: `+1` for observed triples, `-1` for corrupted ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn eta<T: Scalar>(self) -> T {
        match self {
            Label::Positive => T::one(),
            Label::Negative => -T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationEmbedding<T> {
    pub vector: Vec<T>,
    /// Frozen relations are never touched by an update.
    pub frozen: bool,
}

impl<T: Scalar> RelationEmbedding<T> {
    pub fn new(vector: Vec<T>) -> Self {
        RelationEmbedding {
            vector,
            frozen: false,
        }
    }

    pub fn frozen_zero(dim: usize) -> Self {
        RelationEmbedding {
            vector: vec![T::zero(); dim],
            frozen: true,
        }
    }
}

fn check_lengths<T>(s: &[T], o: &[T], r: &[T]) -> Result<()> {
    for found in [o.len(), r.len()] {
        if found != s.len() {
            return Err(Error::LengthMismatch {
                expected: s.len(),
                found,
            });
        }
    }
    Ok(())
}

#[inline]
fn difference<T: Scalar>(kind: ModelKind, s: T, o: T) -> T {
    if kind.is_symmetric() {
        (s - o).abs()
    } else {
        s - o
    }
}

pub(crate) fn score_unchecked<T: Scalar>(kind: ModelKind, s: &[T], o: &[T], r: &[T]) -> T {
    s.iter()
        .zip(o)
        .zip(r)
        .map(|((&s, &o), &r)| (difference(kind, s, o) - r).abs())
        .sum()
}

/// Triple score; `0` for a perfect fit.
pub fn score<T: Scalar>(kind: ModelKind, s: &[T], o: &[T], r: &[T]) -> Result<T> {
    check_lengths(s, o, r)?;
    Ok(score_unchecked(kind, s, o, r))
}

/// Soft-margin loss `log(1 + exp(score * eta))`.
pub fn loss<T: Scalar>(score: T, label: Label) -> T {
    softplus(score * label.eta())
}

/// Derivatives of the loss of one triple with respect to its subject
/// embedding, object embedding and relation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleGradient<T> {
    pub d_subject: Vec<T>,
    pub d_object: Vec<T>,
    pub d_relation: Vec<T>,
    /// `eta * sigmoid(score * eta)`, the loss derivative with respect to the score.
    pub epsilon: T,
}

/// Analytic loss gradient of one triple, using `sign(0) = 0` at kinks.
pub fn triple_gradient<T: Scalar>(
    kind: ModelKind,
    s: &[T],
    o: &[T],
    r: &[T],
    label: Label,
) -> Result<TripleGradient<T>> {
    check_lengths(s, o, r)?;
    let eta: T = label.eta();
    let epsilon = eta * sigmoid(score_unchecked(kind, s, o, r) * eta);
    let n = s.len();
    let mut d_subject = Vec::with_capacity(n);
    let mut d_relation = Vec::with_capacity(n);
    for i in 0..n {
        let diff = s[i] - o[i];
        let residual = sign0(difference(kind, s[i], o[i]) - r[i]);
        if kind.is_symmetric() {
            d_subject.push(epsilon * sign0(diff) * residual);
            d_relation.push(-epsilon * residual);
        } else {
            let ds = epsilon * residual;
            d_subject.push(ds);
            d_relation.push(-ds);
        }
    }
    let d_object = d_subject.iter().map(|&g| -g).collect();
    Ok(TripleGradient {
        d_subject,
        d_object,
        d_relation,
        epsilon,
    })
}

/// Loss gradient of one triple with respect to the underlying weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGradient<T> {
    /// `N x M` row-major, same layout as the subject population's weights.
    pub subject_weights: Vec<T>,
    pub object_weights: Vec<T>,
    pub relation: Vec<T>,
    pub loss: T,
}

/// Chains the spike-time error through `d t / d W` for both populations.
///
/// Both populations must hold valid spike times. Silent neurons contribute
/// zero weight gradient; a frozen relation gets a zero relation gradient.
#[allow(clippy::too_many_arguments)]
pub fn full_chain_gradient<T: Scalar>(
    kind: ModelKind,
    subject: &EntityPopulation<T>,
    object: &EntityPopulation<T>,
    relation: &RelationEmbedding<T>,
    stimulus: &StimulusLayer<T>,
    params: &NeuronParams<T>,
    label: Label,
) -> Result<ChainGradient<T>> {
    if !kind.is_spiking() {
        return Err(Error::Unsupported(format!("{kind} has no spiking encoder")));
    }
    let ts = subject.spike_times();
    let to = object.spike_times();
    let tg = triple_gradient(kind, ts, to, &relation.vector, label)?;
    let loss = loss(score_unchecked(kind, ts, to, &relation.vector), label);
    let mut scratch = vec![T::zero(); stimulus.len()];
    let mut subject_weights = vec![T::zero(); subject.weights().len()];
    subject.accumulate_chain(
        stimulus,
        params,
        &tg.d_subject,
        &mut subject_weights,
        &mut scratch,
    );
    let mut object_weights = vec![T::zero(); object.weights().len()];
    object.accumulate_chain(
        stimulus,
        params,
        &tg.d_object,
        &mut object_weights,
        &mut scratch,
    );
    let relation = if relation.frozen {
        vec![T::zero(); relation.vector.len()]
    } else {
        tg.d_relation
    };
    Ok(ChainGradient {
        subject_weights,
        object_weights,
        relation,
        loss,
    })
}

/// Entity parameters: nLIF populations driven by a shared stimulus, or free vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum EntityTable<T> {
    Spiking {
        stimulus: StimulusLayer<T>,
        params: NeuronParams<T>,
        populations: Vec<EntityPopulation<T>>,
    },
    Free {
        vectors: Vec<Vec<T>>,
    },
}

/// Complete parameter state of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub kind: ModelKind,
    pub mode: PopulationMode,
    pub dim: usize,
    num_entities: usize,
    pub entities: EntityTable<T>,
    pub relations: Vec<RelationEmbedding<T>>,
}

impl<T: Scalar> Model<T> {
    /// Assembles a model and embeds every population. In separate mode the
    /// table holds subject representations first, then object representations.
    pub fn new(
        kind: ModelKind,
        mode: PopulationMode,
        dim: usize,
        num_entities: usize,
        mut entities: EntityTable<T>,
        relations: Vec<RelationEmbedding<T>>,
    ) -> Result<Self> {
        let expected = match mode {
            PopulationMode::Shared => num_entities,
            PopulationMode::Separate => 2 * num_entities,
        };
        let found = match &entities {
            EntityTable::Spiking { populations, .. } => populations.len(),
            EntityTable::Free { vectors } => vectors.len(),
        };
        if found != expected {
            return Err(Error::LengthMismatch { expected, found });
        }
        match (&mut entities, kind.is_spiking()) {
            (
                EntityTable::Spiking {
                    stimulus,
                    params,
                    populations,
                },
                true,
            ) => {
                for p in populations.iter() {
                    if p.neurons() != dim || p.inputs() != stimulus.len() {
                        return Err(Error::InvalidArgument(format!(
                            "population shape {}x{} does not match {}x{}",
                            p.neurons(),
                            p.inputs(),
                            dim,
                            stimulus.len()
                        )));
                    }
                }
                for p in populations.iter_mut() {
                    p.embed(stimulus, params);
                }
            }
            (EntityTable::Free { vectors }, false) => {
                if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
                    return Err(Error::LengthMismatch {
                        expected: dim,
                        found: v.len(),
                    });
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "entity table does not match model kind {kind}"
                )))
            }
        }
        if let Some(r) = relations.iter().find(|r| r.vector.len() != dim) {
            return Err(Error::LengthMismatch {
                expected: dim,
                found: r.vector.len(),
            });
        }
        Ok(Model {
            kind,
            mode,
            dim,
            num_entities,
            entities,
            relations,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Row of the entity table representing `entity` in `slot`.
    pub fn table_index(&self, entity: usize, slot: Slot) -> usize {
        match (self.mode, slot) {
            (PopulationMode::Separate, Slot::Object) => self.num_entities + entity,
            _ => entity,
        }
    }

    pub fn table_len(&self) -> usize {
        match self.mode {
            PopulationMode::Shared => self.num_entities,
            PopulationMode::Separate => 2 * self.num_entities,
        }
    }

    /// Spike times (spiking kinds) or embedding vector of `entity` in `slot`.
    pub fn embedding(&self, entity: usize, slot: Slot) -> &[T] {
        let idx = self.table_index(entity, slot);
        match &self.entities {
            EntityTable::Spiking { populations, .. } => populations[idx].spike_times(),
            EntityTable::Free { vectors } => &vectors[idx],
        }
    }

    pub fn score_triple(&self, t: &Triple) -> T {
        score_unchecked(
            self.kind,
            self.embedding(t.s, Slot::Subject),
            self.embedding(t.o, Slot::Object),
            &self.relations[t.p].vector,
        )
    }

    pub fn populations(&self) -> Option<&[EntityPopulation<T>]> {
        match &self.entities {
            EntityTable::Spiking { populations, .. } => Some(populations),
            EntityTable::Free { .. } => None,
        }
    }

    pub fn stimulus(&self) -> Option<(&StimulusLayer<T>, &NeuronParams<T>)> {
        match &self.entities {
            EntityTable::Spiking {
                stimulus, params, ..
            } => Some((stimulus, params)),
            EntityTable::Free { .. } => None,
        }
    }

    /// Silent neurons over all populations, `(silent, total)`.
    pub fn silent_neurons(&self) -> (usize, usize) {
        match self.populations() {
            Some(pops) => (
                pops.iter().map(|p| p.silent_count()).sum(),
                pops.len() * self.dim,
            ),
            None => (0, 0),
        }
    }

    /// Raw parameters of one entity-table row: weights or the free vector.
    pub fn entity_params(&self, idx: usize) -> &[T] {
        match &self.entities {
            EntityTable::Spiking { populations, .. } => populations[idx].weights(),
            EntityTable::Free { vectors } => &vectors[idx],
        }
    }

    /// Mutable raw parameters of one row; call [`Model::refresh`] afterwards.
    pub fn entity_params_mut(&mut self, idx: usize) -> &mut [T] {
        match &mut self.entities {
            EntityTable::Spiking { populations, .. } => populations[idx].weights_mut(),
            EntityTable::Free { vectors } => &mut vectors[idx],
        }
    }

    /// Re-embeds every population whose weights changed.
    pub fn refresh(&mut self) {
        if let EntityTable::Spiking {
            stimulus,
            params,
            populations,
        } = &mut self.entities
        {
            for p in populations.iter_mut().filter(|p| !p.is_valid()) {
                p.embed(stimulus, params);
            }
        }
    }

    /// Loss and parameter gradient of one labelled triple.
    pub fn param_gradient(&self, t: &Triple, label: Label) -> ParamGradient<T> {
        let relation = &self.relations[t.p];
        let si = self.table_index(t.s, Slot::Subject);
        let oi = self.table_index(t.o, Slot::Object);
        match &self.entities {
            EntityTable::Spiking {
                stimulus,
                params,
                populations,
            } => {
                let g = full_chain_gradient(
                    self.kind,
                    &populations[si],
                    &populations[oi],
                    relation,
                    stimulus,
                    params,
                    label,
                )
                .expect("model shapes validated on construction");
                ParamGradient {
                    subject: (si, g.subject_weights),
                    object: (oi, g.object_weights),
                    relation: g.relation,
                    loss: g.loss,
                }
            }
            EntityTable::Free { vectors } => {
                let (s, o) = (&vectors[si], &vectors[oi]);
                let tg = triple_gradient(self.kind, s, o, &relation.vector, label)
                    .expect("model shapes validated on construction");
                let loss = loss(score_unchecked(self.kind, s, o, &relation.vector), label);
                let relation = if relation.frozen {
                    vec![T::zero(); self.dim]
                } else {
                    tg.d_relation
                };
                ParamGradient {
                    subject: (si, tg.d_subject),
                    object: (oi, tg.d_object),
                    relation,
                    loss,
                }
            }
        }
    }
}

/// Per-triple gradient addressed to entity-table rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient<T> {
    pub subject: (usize, Vec<T>),
    pub object: (usize, Vec<T>),
    pub relation: Vec<T>,
    pub loss: T,
}
