//! Mini-batch training with negative sampling, Adagrad and the silent-neuron
//! regularizer.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{negative_samples, Triple, TripleStore};
use crate::model::{EntityTable, Label, Model, ModelKind, PopulationMode, RelationEmbedding};
use crate::nlif::{EntityPopulation, NeuronParams, StimulusLayer};
use crate::optim::{Adagrad, OptimizerState};
use crate::scalar::Scalar;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub mode: PopulationMode,
    pub dim: usize,
    pub stimulus_neurons: usize,
    pub learning_rate: f64,
    /// Epoch index from which `lr_after` replaces `learning_rate`.
    pub lr_drop_epoch: Option<usize>,
    pub lr_after: Option<f64>,
    pub batch_size: usize,
    pub neg_subj: usize,
    pub neg_obj: usize,
    pub l2_reg: f64,
    pub tau_s: f64,
    pub u_th: f64,
    pub t0: f64,
    pub t_max: f64,
    pub delta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub freeze_relations: bool,
    pub freeze_entities: bool,
    pub weight_init_mean: f64,
    pub weight_init_std: f64,
    pub embed_init_std: f64,
    pub relation_init_std: f64,
    /// Add `#isIdenticalTo` alignment triples (separate populations only).
    pub align: bool,
}

impl TrainConfig {
    /// Simulation parameters used for the main experiments of each model kind.
    pub fn preset(kind: ModelKind) -> Self {
        let base = TrainConfig {
            kind,
            mode: PopulationMode::Shared,
            dim: 20,
            stimulus_neurons: 40,
            learning_rate: 1.0,
            lr_drop_epoch: None,
            lr_after: None,
            batch_size: 50,
            neg_subj: 2,
            neg_obj: 2,
            l2_reg: 0.0,
            tau_s: 0.5,
            u_th: 1.0,
            t0: -1.0,
            t_max: 1.0,
            delta: 0.01,
            epochs: 100,
            seed: 0,
            freeze_relations: false,
            freeze_entities: false,
            weight_init_mean: 0.2,
            weight_init_std: 1.0,
            embed_init_std: 1.0,
            relation_init_std: 1.0,
            align: false,
        };
        match kind {
            ModelKind::SpikE => base,
            ModelKind::SpikES => TrainConfig {
                t0: -3.0,
                t_max: 3.0,
                lr_drop_epoch: Some(36),
                lr_after: Some(0.1),
                ..base
            },
            ModelKind::TransE | ModelKind::TransES => TrainConfig {
                learning_rate: 0.1,
                l2_reg: 1e-4,
                delta: 0.0,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.kind.is_spiking() && self.stimulus_neurons == 0 {
            return bad("stim must be positive for spiking models".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("lr must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch must be positive".into());
        }
        if !(self.tau_s > 0.0) || !(self.u_th > 0.0) {
            return bad("tau_s and u_th must be positive".into());
        }
        if !(self.t0 < self.t_max) {
            return bad(format!("window [{}, {}] is empty", self.t0, self.t_max));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("l2", self.l2_reg),
            ("weight_init_std", self.weight_init_std),
            ("embed_init_std", self.embed_init_std),
            ("relation_init_std", self.relation_init_std),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!(
                    "{name} must be a finite non-negative number, got {v}"
                ));
            }
        }
        match (self.lr_drop_epoch, self.lr_after) {
            (Some(e), Some(lr)) => {
                if e >= self.epochs {
                    return bad(format!(
                        "lr_drop_epoch {e} must be below epochs {}",
                        self.epochs
                    ));
                }
                if !(lr > 0.0) {
                    return bad(format!("lr_after must be positive, got {lr}"));
                }
            }
            (None, None) => {}
            _ => return bad("lr_drop_epoch and lr_after must be set together".into()),
        }
        if self.align && self.mode != PopulationMode::Separate {
            return bad("align requires population_mode=separate".into());
        }
        Ok(())
    }

    /// Learning rate in effect during epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match (self.lr_drop_epoch, self.lr_after) {
            (Some(drop), Some(after)) if epoch >= drop => after,
            _ => self.learning_rate,
        }
    }

    /// Flat `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let pairs: Vec<(&str, String)> = vec![
            ("model", self.kind.to_string()),
            ("population_mode", self.mode.as_str().into()),
            ("dim", self.dim.to_string()),
            ("stim", self.stimulus_neurons.to_string()),
            ("lr", self.learning_rate.to_string()),
            (
                "lr_drop_epoch",
                opt(self.lr_drop_epoch.map(|v| v.to_string())),
            ),
            ("lr_after", opt(self.lr_after.map(|v| v.to_string()))),
            ("batch", self.batch_size.to_string()),
            ("neg_subj", self.neg_subj.to_string()),
            ("neg_obj", self.neg_obj.to_string()),
            ("l2", self.l2_reg.to_string()),
            ("tau_s", self.tau_s.to_string()),
            ("u_th", self.u_th.to_string()),
            ("t0", self.t0.to_string()),
            ("t_max", self.t_max.to_string()),
            ("delta", self.delta.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("freeze_relations", self.freeze_relations.to_string()),
            ("freeze_entities", self.freeze_entities.to_string()),
            ("weight_init_mean", self.weight_init_mean.to_string()),
            ("weight_init_std", self.weight_init_std.to_string()),
            ("embed_init_std", self.embed_init_std.to_string()),
            ("relation_init_std", self.relation_init_std.to_string()),
            ("align", self.align.to_string()),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Applies one `key=value` setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        fn opt<V: std::str::FromStr>(key: &str, value: &str) -> Result<Option<V>> {
            if value == "none" {
                Ok(None)
            } else {
                num(key, value).map(Some)
            }
        }
        match key {
            "model" => {
                self.kind = value
                    .parse()
                    .map_err(|e: Error| Error::Config(e.to_string()))?
            }
            "population_mode" => {
                self.mode = value
                    .parse()
                    .map_err(|e: Error| Error::Config(e.to_string()))?
            }
            "dim" => self.dim = num(key, value)?,
            "stim" => self.stimulus_neurons = num(key, value)?,
            "lr" => self.learning_rate = num(key, value)?,
            "lr_drop_epoch" => self.lr_drop_epoch = opt(key, value)?,
            "lr_after" => self.lr_after = opt(key, value)?,
            "batch" => self.batch_size = num(key, value)?,
            "neg_subj" => self.neg_subj = num(key, value)?,
            "neg_obj" => self.neg_obj = num(key, value)?,
            "l2" => self.l2_reg = num(key, value)?,
            "tau_s" => self.tau_s = num(key, value)?,
            "u_th" => self.u_th = num(key, value)?,
            "t0" => self.t0 = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "freeze_relations" => self.freeze_relations = num(key, value)?,
            "freeze_entities" => self.freeze_entities = num(key, value)?,
            "weight_init_mean" => self.weight_init_mean = num(key, value)?,
            "weight_init_std" => self.weight_init_std = num(key, value)?,
            "embed_init_std" => self.embed_init_std = num(key, value)?,
            "relation_init_std" => self.relation_init_std = num(key, value)?,
            "align" => self.align = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses the output of [`TrainConfig::to_kv`]; the model kind selects the
    /// preset that unspecified keys fall back to.
    pub fn from_kv(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let kind = match pairs.get("model") {
            Some(v) => v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            None => ModelKind::SpikE,
        };
        let mut config = TrainConfig::preset(kind);
        for (k, v) in &pairs {
            config.set(k, v)?;
        }
        Ok(config)
    }
}

/// Parses flat `key=value` text; `#` starts a comment line, duplicate keys are errors.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", idx + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if out.insert(k.to_owned(), v.to_owned()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{k}`",
                idx + 1
            )));
        }
    }
    Ok(out)
}

/// Gradient of the silent-neuron penalty `delta * (u_th - sum_j W_ij)`, active
/// for every neuron whose summed afferent weight is at most `u_th`.
pub fn regularizer_grad<T: Scalar>(
    population: &EntityPopulation<T>,
    params: &NeuronParams<T>,
    delta: T,
) -> Vec<T> {
    let mut out = vec![T::zero(); population.weights().len()];
    add_regularizer_grad(population, params, delta, &mut out);
    out
}

fn add_regularizer_grad<T: Scalar>(
    population: &EntityPopulation<T>,
    params: &NeuronParams<T>,
    delta: T,
    out: &mut [T],
) -> bool {
    let m = population.inputs();
    let mut any = false;
    for i in 0..population.neurons() {
        let row_sum: T = population.row(i).iter().copied().sum();
        if row_sum <= params.u_th {
            out[i * m..(i + 1) * m].iter_mut().for_each(|g| *g -= delta);
            any = true;
        }
    }
    any
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Number of completed epochs after this one.
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub wall_time: f64,
}

/// Everything needed to continue training bit-for-bit.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub config: TrainConfig,
    pub model: Model<T>,
    pub optimizer: OptimizerState<T>,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
}

impl<T: Scalar> TrainState<T> {
    /// Draws the stimulus layer, entity parameters and relation vectors from
    /// the configured distributions. Relations in `frozen_zero` start at zero
    /// and never move.
    pub fn initialize(
        config: &TrainConfig,
        num_entities: usize,
        num_relations: usize,
        frozen_zero: &BTreeSet<usize>,
    ) -> Result<Self> {
        config.validate()?;
        if !frozen_zero.is_empty() && config.mode != PopulationMode::Separate {
            return Err(Error::Config(
                "alignment relations require population_mode=separate".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let rows = match config.mode {
            PopulationMode::Shared => num_entities,
            PopulationMode::Separate => 2 * num_entities,
        };
        let normal = |mean: f64, std: f64| {
            Normal::new(mean, std).map_err(|e| Error::Config(format!("normal({mean}, {std}): {e}")))
        };
        let dim = config.dim;
        let entities = if config.kind.is_spiking() {
            let t0 = T::lit(config.t0);
            let t_max = T::lit(config.t_max);
            let stimulus = StimulusLayer::sample(config.stimulus_neurons, t0, t_max, &mut rng)?;
            let params = NeuronParams::new(T::lit(config.tau_s), T::lit(config.u_th), t_max)?;
            let dist = normal(config.weight_init_mean, config.weight_init_std)?;
            let m = config.stimulus_neurons;
            let populations = (0..rows)
                .map(|_| {
                    let w = (0..dim * m)
                        .map(|_| T::lit(dist.sample(&mut rng)))
                        .collect();
                    EntityPopulation::new(dim, m, w)
                })
                .collect::<Result<Vec<_>>>()?;
            EntityTable::Spiking {
                stimulus,
                params,
                populations,
            }
        } else {
            let dist = normal(0.0, config.embed_init_std)?;
            let vectors = (0..rows)
                .map(|_| (0..dim).map(|_| T::lit(dist.sample(&mut rng))).collect())
                .collect();
            EntityTable::Free { vectors }
        };
        let dist = normal(0.0, config.relation_init_std)?;
        let relations = (0..num_relations)
            .map(|p| {
                if frozen_zero.contains(&p) {
                    return RelationEmbedding::frozen_zero(dim);
                }
                let v = (0..dim).map(|_| T::lit(dist.sample(&mut rng))).collect();
                RelationEmbedding {
                    vector: v,
                    frozen: config.freeze_relations,
                }
            })
            .collect();
        let model = Model::new(
            config.kind,
            config.mode,
            dim,
            num_entities,
            entities,
            relations,
        )?;
        let optimizer = OptimizerState::zeros(
            (0..model.table_len()).map(|i| model.entity_params(i).len()),
            num_relations,
            dim,
        );
        Ok(TrainState {
            config: config.clone(),
            model,
            optimizer,
            epoch: 0,
            rng,
        })
    }

    /// Initializes against a triple store, honouring its alignment relations.
    pub fn for_store(
        config: &TrainConfig,
        store: &TripleStore,
        num_relations: usize,
    ) -> Result<Self> {
        Self::initialize(
            config,
            store.num_entities(),
            num_relations,
            store.frozen_zero_relations(),
        )
    }

    /// One pass over the shuffled training triples.
    ///
    /// Each mini-batch holds its positives plus `neg_subj + neg_obj` corruptions
    /// of each. Gradients are summed over the batch and divided by its size
    /// (positives and negatives), regularizer gradients are added, and a single
    /// Adagrad step is applied before spike times are recomputed.
    pub fn train_epoch(&mut self, store: &TripleStore) -> Result<EpochStats> {
        let started = Instant::now();
        let train = store.train();
        if train.is_empty() {
            return Err(Error::Empty("training split has no triples".into()));
        }
        if store.num_entities() != self.model.num_entities() {
            return Err(Error::InvalidArgument(format!(
                "store has {} entities, model has {}",
                store.num_entities(),
                self.model.num_entities()
            )));
        }
        if let Some(t) = train.iter().find(|t| t.p >= self.model.num_relations()) {
            return Err(Error::InvalidArgument(format!(
                "relation of {t:?} unknown to the model"
            )));
        }
        let config = &self.config;
        let lr = config.lr_at(self.epoch);
        let lr_t = T::lit(lr);
        let adagrad = Adagrad::<T>::default();
        let num_entities = self.model.num_entities();

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);

        let rows = self.model.table_len();
        let mut ent_grad: Vec<Vec<T>> = (0..rows)
            .map(|i| vec![T::zero(); self.model.entity_params(i).len()])
            .collect();
        let mut ent_touched = vec![false; rows];
        let mut rel_grad = vec![vec![T::zero(); config.dim]; self.model.num_relations()];
        let mut rel_touched = vec![false; self.model.num_relations()];

        let mut loss_total = 0.0;
        let mut count_total = 0usize;
        let mut batch: Vec<(Triple, Label)> = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            for &i in chunk {
                let pos = train[i];
                batch.push((pos, Label::Positive));
                for neg in negative_samples(
                    pos,
                    config.neg_subj,
                    config.neg_obj,
                    num_entities,
                    &mut self.rng,
                ) {
                    batch.push((neg, Label::Negative));
                }
            }

            let mut batch_loss = T::zero();
            for (t, label) in &batch {
                let g = self.model.param_gradient(t, *label);
                batch_loss += g.loss;
                for (row, grad) in [g.subject, g.object] {
                    add_into(&mut ent_grad[row], &grad);
                    ent_touched[row] = true;
                }
                add_into(&mut rel_grad[t.p], &g.relation);
                rel_touched[t.p] = true;
            }
            let scale = T::one() / T::lit(batch.len() as f64);
            loss_total += batch_loss.as_f64();
            count_total += batch.len();

            for (row, touched) in ent_touched.iter().enumerate() {
                if *touched {
                    ent_grad[row].iter_mut().for_each(|g| *g *= scale);
                }
            }
            for (p, touched) in rel_touched.iter().enumerate() {
                if *touched {
                    rel_grad[p].iter_mut().for_each(|g| *g *= scale);
                }
            }

            self.add_regularizers(
                &mut ent_grad,
                &mut ent_touched,
                &mut rel_grad,
                &mut rel_touched,
            );

            if !config.freeze_entities {
                for row in 0..rows {
                    if ent_touched[row] {
                        adagrad.step(
                            self.model.entity_params_mut(row),
                            &ent_grad[row],
                            &mut self.optimizer.entities[row],
                            lr_t,
                        );
                    }
                }
            }
            for p in 0..rel_grad.len() {
                if rel_touched[p] && !self.model.relations[p].frozen {
                    adagrad.step(
                        &mut self.model.relations[p].vector,
                        &rel_grad[p],
                        &mut self.optimizer.relations[p],
                        lr_t,
                    );
                }
            }
            self.model.refresh();

            for row in 0..rows {
                if std::mem::take(&mut ent_touched[row]) {
                    ent_grad[row].iter_mut().for_each(|g| *g = T::zero());
                }
            }
            for p in 0..rel_grad.len() {
                if std::mem::take(&mut rel_touched[p]) {
                    rel_grad[p].iter_mut().for_each(|g| *g = T::zero());
                }
            }
        }
        self.epoch += 1;
        Ok(EpochStats {
            epoch: self.epoch,
            mean_loss: loss_total / count_total as f64,
            lr,
            wall_time: started.elapsed().as_secs_f64(),
        })
    }

    /// L_delta on every population for spiking models, L2 on every vector for
    /// the free-embedding models.
    fn add_regularizers(
        &self,
        ent_grad: &mut [Vec<T>],
        ent_touched: &mut [bool],
        rel_grad: &mut [Vec<T>],
        rel_touched: &mut [bool],
    ) {
        let config = &self.config;
        if config.freeze_entities {
            return;
        }
        match &self.model.entities {
            EntityTable::Spiking {
                params,
                populations,
                ..
            } => {
                if config.delta > 0.0 {
                    let delta = T::lit(config.delta);
                    for (row, pop) in populations.iter().enumerate() {
                        if add_regularizer_grad(pop, params, delta, &mut ent_grad[row]) {
                            ent_touched[row] = true;
                        }
                    }
                }
            }
            EntityTable::Free { vectors } => {
                if config.l2_reg > 0.0 {
                    let c = T::lit(2.0 * config.l2_reg);
                    for (row, v) in vectors.iter().enumerate() {
                        for (g, &x) in ent_grad[row].iter_mut().zip(v) {
                            *g += c * x;
                        }
                        ent_touched[row] = true;
                    }
                    for (p, rel) in self.model.relations.iter().enumerate() {
                        if rel.frozen {
                            continue;
                        }
                        for (g, &x) in rel_grad[p].iter_mut().zip(&rel.vector) {
                            *g += c * x;
                        }
                        rel_touched[p] = true;
                    }
                }
            }
        }
    }

    /// Runs epochs until `config.epochs` have completed, reporting each one.
    pub fn fit(
        &mut self,
        store: &TripleStore,
        mut on_epoch: impl FnMut(&Self, &EpochStats),
    ) -> Result<Vec<EpochStats>> {
        let mut history = Vec::new();
        while self.epoch < self.config.epochs {
            let stats = self.train_epoch(store)?;
            on_epoch(self, &stats);
            history.push(stats);
        }
        Ok(history)
    }
}

fn add_into<T: Scalar>(acc: &mut [T], grad: &[T]) {
    for (a, &g) in acc.iter_mut().zip(grad) {
        *a += g;
    }
}
