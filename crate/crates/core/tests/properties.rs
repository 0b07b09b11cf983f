use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spike_embed::eval::{evaluate, temporal_score, temporal_trace};
use spike_embed::graph::{negative_samples, split};
use spike_embed::model::{score, triple_gradient};
use spike_embed::nlif::{membrane_potential, spike_time, NeuronParams, Spike, StimulusLayer};
use spike_embed::train::{TrainConfig, TrainState};
use spike_embed::{Label, ModelKind, Slot, Split, Triple, TripleStore};

fn triples(entities: usize, relations: usize, max: usize) -> impl Strategy<Value = Vec<Triple>> {
    prop::collection::vec((0..entities, 0..relations, 0..entities), 2..max)
        .prop_map(|v| v.into_iter().map(|(s, p, o)| Triple::new(s, p, o)).collect())
}

fn kind() -> impl Strategy<Value = ModelKind> {
    prop::sample::select(ModelKind::ALL.to_vec())
}

fn vectors(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    let v = || prop::collection::vec(-3.0..3.0_f64, n);
    (v(), v(), v())
}

fn neuron() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (5usize..30).prop_flat_map(|m| {
        (
            prop::collection::vec(-1.0..2.0_f64, m),
            prop::collection::vec(-1.0..1.0_f64, m),
        )
    })
}

fn count(v: &[Triple]) -> BTreeMap<Triple, usize> {
    let mut m = BTreeMap::new();
    for t in v {
        *m.entry(*t).or_default() += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn split_is_a_disjoint_partition(ts in triples(12, 3, 60), ratio in 0.05..0.95_f64, seed in any::<u64>()) {
        let distinct: HashSet<_> = ts.iter().copied().collect();
        prop_assume!(distinct.len() >= 2);
        let (train, test) = split(&ts, ratio, seed).unwrap();
        let mut joined = train.clone();
        joined.extend(&test);
        prop_assert_eq!(count(&joined), count(&ts));
        let a: HashSet<_> = train.iter().collect();
        prop_assert!(test.iter().all(|t| !a.contains(t)));
        if distinct.len() == ts.len() {
            prop_assert_eq!(train.len(), (ratio * ts.len() as f64).round() as usize);
        }
        prop_assert_eq!(split(&ts, ratio, seed).unwrap(), (train, test));
    }

    #[test]
    fn negatives_change_the_corrupted_slot(
        s in 0usize..6, p in 0usize..3, o in 0usize..6,
        ks in 0usize..5, ko in 0usize..5, seed in any::<u64>(),
    ) {
        let t = Triple::new(s, p, o);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let negs = negative_samples(t, ks, ko, 6, &mut rng);
        prop_assert_eq!(negs.len(), ks + ko);
        for (i, n) in negs.iter().enumerate() {
            prop_assert_eq!(n.p, p);
            if i < ks {
                prop_assert!(n.s != s && n.o == o);
            } else {
                prop_assert!(n.o != o && n.s == s);
            }
        }
    }

    #[test]
    fn filtered_candidates_match_brute_force(ts in triples(50, 3, 120), pick in any::<prop::sample::Index>()) {
        let known: HashSet<_> = ts.iter().copied().collect();
        let unique: Vec<Triple> = known.iter().copied().collect();
        let store = TripleStore::new(unique.clone(), Vec::new(), 50, 3).unwrap();
        let t = *pick.get(&unique);
        for slot in Slot::BOTH {
            let brute: Vec<usize> = (0..50)
                .filter(|&e| {
                    let c = t.with(slot, e);
                    c == t || !known.contains(&c)
                })
                .collect();
            prop_assert_eq!(store.candidates_filtered(&t, slot), brute);
        }
    }

    #[test]
    fn score_shape_properties(k in kind(), (s, o, r) in vectors(6)) {
        let v = score(k, &s, &o, &r).unwrap();
        prop_assert!(v >= 0.0);
        let swapped = score(k, &o, &s, &r).unwrap();
        if k.is_symmetric() {
            prop_assert_eq!(v, swapped);
        } else {
            let neg: Vec<f64> = r.iter().map(|x| -x).collect();
            prop_assert!((v - score(k, &o, &s, &neg).unwrap()).abs() < 1e-12);
        }
        let exact: Vec<f64> = s
            .iter()
            .zip(&o)
            .map(|(a, b)| if k.is_symmetric() { (a - b).abs() } else { a - b })
            .collect();
        prop_assert_eq!(score(k, &s, &o, &exact).unwrap(), 0.0);
    }

    #[test]
    fn error_terms(k in kind(), (s, o, r) in vectors(5), positive in any::<bool>()) {
        let label = if positive { Label::Positive } else { Label::Negative };
        let g = triple_gradient(k, &s, &o, &r, label).unwrap();
        prop_assert!(g.epsilon.abs() > 0.0 && g.epsilon.abs() < 1.0);
        prop_assert_eq!(g.epsilon.signum(), if positive { 1.0 } else { -1.0 });
        for i in 0..5 {
            prop_assert_eq!(g.d_object[i], -g.d_subject[i]);
            if !k.is_symmetric() {
                prop_assert_eq!(g.d_relation[i], -g.d_subject[i]);
            }
        }
    }

    #[test]
    fn spike_reaches_threshold_exactly_once((w, times) in neuron()) {
        let stim = StimulusLayer::new(times, -1.0, 1.0).unwrap();
        let params = NeuronParams::new(0.5, 1.0, 1.0).unwrap();
        if let Spike::Fired { time, .. } = spike_time(&w, &stim, &params) {
            prop_assert!((membrane_potential(&w, &stim, &params, time) - 1.0).abs() < 1e-9);
            for i in 0..1000 {
                let t = -1.0 + (time + 1.0) * i as f64 / 1000.0;
                prop_assert!(membrane_potential(&w, &stim, &params, t) < 1.0);
            }
        }
    }

    #[test]
    fn stronger_causal_weight_never_delays((w, times) in neuron(), bump in 0.0..0.5_f64, pick in any::<prop::sample::Index>()) {
        let stim = StimulusLayer::new(times, -1.0, 1.0).unwrap();
        let params = NeuronParams::new(0.5, 1.0, 1.0).unwrap();
        if let Spike::Fired { time, causal } = spike_time(&w, &stim, &params) {
            let k = stim.order()[pick.index(causal)];
            let mut stronger = w.clone();
            stronger[k] += bump;
            let later = spike_time(&stronger, &stim, &params).time().unwrap();
            prop_assert!(later <= time + 1e-12);
        }
    }

    #[test]
    fn temporal_score_is_monotone(spiking_s in any::<bool>(), seed in any::<u64>(), mean in -0.5..0.8_f64) {
        let kind = if spiking_s { ModelKind::SpikES } else { ModelKind::SpikE };
        let mut config = TrainConfig::preset(kind);
        config.dim = 6;
        config.stimulus_neurons = 10;
        config.seed = seed;
        config.weight_init_mean = mean;
        let state = TrainState::<f64>::initialize(&config, 4, 2, &Default::default()).unwrap();
        let t = Triple::new(0, 1, 3);
        let trace = temporal_trace(&state.model, &t).unwrap();
        prop_assert!(trace.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        let last = trace.points.last().unwrap();
        prop_assert_eq!(last.1, trace.final_score);
        prop_assert_eq!(temporal_score(&state.model, &t, f64::NEG_INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn report_invariants(seed in any::<u64>(), k in kind(), ts in triples(8, 2, 30)) {
        let unique: Vec<Triple> = ts.iter().copied().collect::<HashSet<_>>().into_iter().collect();
        let store = TripleStore::new(unique, Vec::new(), 8, 2).unwrap();
        let mut config = TrainConfig::preset(k);
        config.dim = 3;
        config.stimulus_neurons = 6;
        config.seed = seed;
        let state = TrainState::<f64>::for_store(&config, &store, 2).unwrap();
        let r = evaluate(&state.model, &store, Split::Train, &[1, 3, 10]).unwrap();
        prop_assert!(r.mrr_total > 0.0 && r.mrr_total <= 1.0);
        prop_assert!(r.hits_total[0] <= r.hits_total[1] && r.hits_total[1] <= r.hits_total[2]);
        prop_assert!(r.mrr_total >= r.hits_total[0]);
        for tr in &r.ranks {
            let cs = store.candidates_filtered(&tr.triple, Slot::Subject).len();
            let co = store.candidates_filtered(&tr.triple, Slot::Object).len();
            prop_assert!(tr.subject_rank >= 1 && tr.subject_rank <= cs);
            prop_assert!(tr.object_rank >= 1 && tr.object_rank <= co);
        }
    }
}
