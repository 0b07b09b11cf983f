mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spike_embed::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use spike_embed::eval::{evaluate, rank_events, score_distribution};
use spike_embed::graph::IDENTITY_RELATION;
use spike_embed::report::TrainingLog;
use spike_embed::train::TrainState;
use spike_embed::{ModelKind, PopulationMode, Split, Triple, TripleStore, Vocabulary};

use common::{cluster_store, small_config, ENTITIES, RELATIONS};

/// Two translations along a chain of six entities.
fn chain_store() -> TripleStore {
    let mut train = Vec::new();
    for i in 0..4 {
        train.push(Triple::new(i, 0, i + 1));
        train.push(Triple::new(i, 1, i + 2));
    }
    TripleStore::new(train, Vec::new(), 6, 2).unwrap()
}

#[test]
fn tiny_chain_is_learned_by_spike() {
    let store = chain_store();
    let mut config = small_config(ModelKind::SpikE, 0);
    config.epochs = 50;
    let mut state = TrainState::<f64>::for_store(&config, &store, 2).unwrap();
    let history = state.fit(&store, |_, _| {}).unwrap();
    assert!(history.last().unwrap().mean_loss < history[0].mean_loss);
    let report = evaluate(&state.model, &store, Split::Train, &[1]).unwrap();
    assert_eq!(report.hits_total[0], 1.0);
}

#[test]
fn frozen_relations_are_bit_identical() {
    let store = cluster_store();
    for kind in ModelKind::ALL {
        let mut config = small_config(kind, 1);
        config.freeze_relations = true;
        config.epochs = 20;
        let mut state = TrainState::<f64>::for_store(&config, &store, RELATIONS).unwrap();
        let before = state.model.relations.clone();
        state.fit(&store, |_, _| {}).unwrap();
        assert_eq!(state.model.relations, before, "{kind}");
    }
}

#[test]
fn adagrad_accumulators_never_shrink() {
    let store = cluster_store();
    let mut state = TrainState::<f64>::for_store(&small_config(ModelKind::SpikE, 2), &store, RELATIONS).unwrap();
    let mut prev = state.optimizer.clone();
    for _ in 0..5 {
        state.train_epoch(&store).unwrap();
        let now = &state.optimizer;
        let grew = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| y >= x && *y >= 0.0)
        };
        assert!(grew(&prev.entities, &now.entities));
        assert!(grew(&prev.relations, &now.relations));
        prev = now.clone();
    }
}

#[test]
fn alignment_relation_stays_at_zero() {
    let mut vocab = Vocabulary::from_names(
        (0..ENTITIES).map(|i| format!("e{i}")).collect(),
        (0..RELATIONS).map(|i| format!("r{i}")).collect(),
    )
    .unwrap();
    let mut store = cluster_store();
    let id = store.add_alignment_triples(&mut vocab, IDENTITY_RELATION).unwrap();
    assert_eq!(store.train().len(), 33 + ENTITIES);
    assert!(store.add_alignment_triples(&mut vocab, IDENTITY_RELATION).is_err());

    let mut config = small_config(ModelKind::SpikE, 4);
    config.mode = PopulationMode::Separate;
    config.align = true;
    config.epochs = 30;
    let mut state = TrainState::<f64>::for_store(&config, &store, vocab.num_relations()).unwrap();
    state.fit(&store, |_, _| {}).unwrap();
    assert!(state.model.relations[id].vector.iter().all(|&x| x == 0.0));
    assert!(state.model.relations[id].frozen);
}

#[test]
fn untrained_scores_do_not_separate_but_trained_ones_do() {
    let store = cluster_store();
    let mut config = small_config(ModelKind::SpikE, 0);
    config.epochs = 1000;
    let mut state = TrainState::<f64>::for_store(&config, &store, RELATIONS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let before = score_distribution(&state.model, store.train(), 2, 2, &mut rng);
    assert!(before.location_p_value() > 0.01);

    state.fit(&store, |_, _| {}).unwrap();
    let after = score_distribution(&state.model, store.train(), 2, 2, &mut rng);
    assert!(after.positives.iter().all(|&s| s < 0.5), "{:?}", after.positives);
    assert!(after.positive_summary().mean < after.negative_summary().mean);
    assert!(after.location_p_value() < 0.01);
}

#[test]
fn trained_objects_rank_as_least_anomalous() {
    let store = cluster_store();
    let models: Vec<_> = (0..3)
        .map(|seed| {
            let mut s = TrainState::<f64>::for_store(&small_config(ModelKind::SpikE, seed), &store, RELATIONS).unwrap();
            s.fit(&store, |_, _| {}).unwrap();
            s.model
        })
        .collect();
    let refs: Vec<_> = models.iter().collect();
    // entity 0 reaches 2, 3 and 4 through relation 0
    let report = rank_events(&refs, 0, 0, &(0..ENTITIES).collect::<Vec<_>>()).unwrap();
    let bottom: Vec<usize> = report.entries[ENTITIES - 3..].iter().map(|e| e.candidate).collect();
    let mut sorted = bottom.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![2, 3, 4]);
    assert!(report.entries.windows(2).all(|w| w[0].band.median >= w[1].band.median));
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let store = cluster_store();
    let vocab = Vocabulary::from_names(
        (0..ENTITIES).map(|i| format!("e{i}")).collect(),
        (0..RELATIONS).map(|i| format!("r{i}")).collect(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let mut config = small_config(kind, 5);
        config.epochs = 6;
        let mut straight = TrainState::<f64>::for_store(&config, &store, RELATIONS).unwrap();
        straight.fit(&store, |_, _| {}).unwrap();

        let mut first = TrainState::<f64>::for_store(&config, &store, RELATIONS).unwrap();
        for _ in 0..3 {
            first.train_epoch(&store).unwrap();
        }
        let path = dir.path().join(format!("{kind}.bin"));
        save_checkpoint(&Checkpoint { state: first, vocab: vocab.clone() }, &path).unwrap();
        let mut resumed = load_checkpoint::<f64>(&path).unwrap().state;
        assert_eq!(resumed.epoch, 3);
        resumed.fit(&store, |_, _| {}).unwrap();
        assert_eq!(resumed.model, straight.model, "{kind}");
        assert_eq!(resumed.optimizer, straight.optimizer, "{kind}");
    }
}

#[test]
fn same_seed_same_log() {
    let store = cluster_store();
    let run = || {
        let mut config = small_config(ModelKind::SpikES, 11);
        config.epochs = 25;
        let mut state = TrainState::<f64>::for_store(&config, &store, RELATIONS).unwrap();
        let mut log = TrainingLog::new(Vec::new(), true).unwrap();
        state.fit(&store, |_, s| log.record(s).unwrap()).unwrap();
        log.into_inner().unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 26);
}

#[test]
fn single_precision_trains_too() {
    let store = cluster_store();
    let mut state = TrainState::<f32>::for_store(&small_config(ModelKind::SpikE, 0), &store, RELATIONS).unwrap();
    state.fit(&store, |_, _| {}).unwrap();
    let report = evaluate(&state.model, &store, Split::Train, &[1]).unwrap();
    assert!(report.mrr_total > 0.9, "{}", report.mrr_total);
}
