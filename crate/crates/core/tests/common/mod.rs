#![allow(dead_code)]

use spike_embed::train::TrainConfig;
use spike_embed::{ModelKind, Triple, TripleStore};

pub const ENTITIES: usize = 10;
pub const RELATIONS: usize = 3;

/// Four entity clusters placed on the corners of a parallelogram. Relation 0
/// maps cluster 0 to 1 and 2 to 3, relation 2 maps 0 to 2 and 1 to 3, and
/// relation 1 maps 1 to 2. Every relation is a single translation and no
/// entity is both a subject and an object of the same relation, so all four
/// model kinds can represent the graph exactly. 33 triples.
pub fn cluster_graph() -> Vec<Triple> {
    let clusters: [&[usize]; 4] = [&[0, 1], &[2, 3, 4], &[5, 6, 7], &[8, 9]];
    let maps: [&[(usize, usize)]; RELATIONS] = [&[(0, 1), (2, 3)], &[(1, 2)], &[(0, 2), (1, 3)]];
    let mut out = Vec::new();
    for (p, pairs) in maps.iter().enumerate() {
        for &(a, b) in pairs.iter() {
            for &s in clusters[a] {
                for &o in clusters[b] {
                    out.push(Triple::new(s, p, o));
                }
            }
        }
    }
    out
}

pub fn cluster_store() -> TripleStore {
    TripleStore::new(cluster_graph(), Vec::new(), ENTITIES, RELATIONS).unwrap()
}

/// Small-graph settings: N = 4, batch 8, two subject and two object
/// corruptions per positive, 200 epochs.
pub fn small_config(kind: ModelKind, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::preset(kind);
    c.dim = 4;
    c.batch_size = 8;
    c.neg_subj = 2;
    c.neg_obj = 2;
    c.epochs = 200;
    c.seed = seed;
    c.lr_drop_epoch = None;
    c.lr_after = None;
    if kind.is_spiking() {
        c.stimulus_neurons = 8;
        c.tau_s = 0.5;
        c.t0 = -1.0;
        c.t_max = 1.0;
        c.delta = 0.01;
        c.learning_rate = 1.0;
    } else {
        c.learning_rate = 0.3;
    }
    c
}
