use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use spike_embed::checkpoint::{export_text, load_checkpoint, save_checkpoint, Checkpoint};
use spike_embed::eval::{evaluate as rank_split, rank_events as score_candidates, temporal_trace};
use spike_embed::graph::{load_triples, load_triples_into, load_triples_strict, split as split_triples, IDENTITY_RELATION};
use spike_embed::report::{csv_file, fmt6, write_aggregate_file, write_anomalies, write_ranks_file, write_trace, TrainingLog};
use spike_embed::train::{parse_kv, TrainState};
use spike_embed::{Checkpoint64, ModelKind, Slot, Split, TrainConfig, Triple, TripleStore, Vocabulary};

use crate::failure::{Context, Failure, Outcome};
use crate::names;
use crate::{EvaluateArgs, ExportArgs, HyperFlags, InspectArgs, RankEventsArgs, SplitArgs, TrainArgs};

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const CONFIG_FILE: &str = "config.txt";
const LOG_FILE: &str = "train_log.csv";

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file", path.display())))
    }
}

fn create_dir(path: &Path) -> Outcome {
    fs::create_dir_all(path).runtime(path.display())
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).runtime(path.display())
}

impl HyperFlags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("model", self.model.clone());
        put("population_mode", self.population_mode.clone());
        put("dim", self.dim.map(|v| v.to_string()));
        put("stim", self.stim.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("lr_drop_epoch", self.lr_drop_epoch.map(|v| v.to_string()));
        put("lr_after", self.lr_after.map(|v| v.to_string()));
        put("batch", self.batch.map(|v| v.to_string()));
        if let Some(n) = &self.neg {
            put("neg_subj", Some(n[0].to_string()));
            put("neg_obj", Some(n[1].to_string()));
        }
        put("l2", self.l2.map(|v| v.to_string()));
        put("tau_s", self.tau_s.map(|v| v.to_string()));
        put("u_th", self.u_th.map(|v| v.to_string()));
        if let Some(w) = &self.window {
            put("t0", Some(w[0].to_string()));
            put("t_max", Some(w[1].to_string()));
        }
        put("delta", self.delta.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("freeze_relations", self.freeze_relations.then(|| "true".into()));
        put("freeze_entities", self.freeze_entities.then(|| "true".into()));
        put("align", self.align.then(|| "true".into()));
        put("weight_init_mean", self.weight_init_mean.map(|v| v.to_string()));
        put("weight_init_std", self.weight_init_std.map(|v| v.to_string()));
        out
    }
}

/// Preset of the chosen model, then the config file, then command-line flags.
fn effective_config(file: Option<&Path>, flags: &HyperFlags) -> Outcome<TrainConfig> {
    let file_pairs = match file {
        Some(path) => {
            require_file(path)?;
            let text = fs::read_to_string(path).usage(path.display())?;
            parse_kv(&text).usage(path.display())?
        }
        None => Default::default(),
    };
    let kind_name = flags
        .model
        .as_deref()
        .or(file_pairs.get("model").map(String::as_str))
        .unwrap_or("spike");
    let kind: ModelKind = kind_name.parse::<ModelKind>().usage("--model")?;
    let mut config = TrainConfig::preset(kind);
    if let Some(path) = file {
        for (k, v) in &file_pairs {
            config.set(k, v).usage(path.display())?;
        }
    }
    for (k, v) in flags.overrides() {
        config.set(k, &v).usage(format!("--{}", k.replace('_', "-")))?;
    }
    config.validate().usage("config")?;
    Ok(config)
}

pub fn train(args: TrainArgs) -> Outcome {
    let base = effective_config(args.config.as_deref(), &args.hyper)?;
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    require_file(&args.train)?;
    let (mut vocab, train) = load_triples(&args.train).usage(args.train.display())?;
    let test = match &args.test {
        Some(path) => {
            require_file(path)?;
            load_triples_into(path, &mut vocab).usage(path.display())?
        }
        None => Vec::new(),
    };
    let mut store = TripleStore::new(train, test, vocab.num_entities(), vocab.num_relations()).usage("data")?;
    if base.align {
        store.add_alignment_triples(&mut vocab, IDENTITY_RELATION).usage("--align")?;
    }

    let mut runs = Vec::with_capacity(args.seeds);
    for k in 0..args.seeds {
        let mut config = base.clone();
        config.seed = base.seed.wrapping_add(k as u64);
        let state = TrainState::<f64>::for_store(&config, &store, vocab.num_relations()).usage("config")?;
        runs.push(state);
    }

    create_dir(&args.out)?;
    write_file(&args.out.join(CONFIG_FILE), &base.to_kv())?;
    for (k, mut state) in runs.into_iter().enumerate() {
        let dir = args.out.join(format!("seed_{k}"));
        create_dir(&dir)?;
        write_file(&dir.join(CONFIG_FILE), &state.config.to_kv())?;
        let log_path = dir.join(LOG_FILE);
        let mut log = TrainingLog::create(&log_path, !args.wall_time).runtime(log_path.display())?;
        let mut logged = Ok(());
        let history = state
            .fit(&store, |_, stats| {
                if logged.is_ok() {
                    logged = log.record(stats);
                }
            })
            .runtime(format!("seed {}", state.config.seed))?;
        logged.runtime(log_path.display())?;
        log.into_inner().runtime(log_path.display())?;
        let seed = state.config.seed;
        let ckpt = Checkpoint { state, vocab: vocab.clone() };
        let ckpt_path = dir.join(CHECKPOINT_FILE);
        save_checkpoint(&ckpt, &ckpt_path).runtime(ckpt_path.display())?;
        let loss = history.last().map_or(f64::NAN, |s| s.mean_loss);
        println!("seed {seed}: {} epochs, final loss {}", ckpt.state.epoch, fmt6(loss));
    }
    Ok(())
}

/// A checkpoint file, a run directory holding one, or a training output
/// directory with `seed_<k>` subdirectories.
fn resolve_checkpoints(paths: &[PathBuf]) -> Outcome<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_file() {
            out.push(path.clone());
            continue;
        }
        if !path.is_dir() {
            return Err(usage(format!("{}: no such checkpoint", path.display())));
        }
        let direct = path.join(CHECKPOINT_FILE);
        if direct.is_file() {
            out.push(direct);
            continue;
        }
        let mut seeds: Vec<(u64, PathBuf)> = fs::read_dir(path)
            .usage(path.display())?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let k = name.strip_prefix("seed_")?.parse().ok()?;
                let file = e.path().join(CHECKPOINT_FILE);
                file.is_file().then_some((k, file))
            })
            .collect();
        if seeds.is_empty() {
            return Err(usage(format!("{}: no checkpoints found", path.display())));
        }
        seeds.sort();
        out.extend(seeds.into_iter().map(|(_, p)| p));
    }
    Ok(out)
}

fn load_all(paths: &[PathBuf]) -> Outcome<Vec<Checkpoint64>> {
    let files = resolve_checkpoints(paths)?;
    let ckpts = files
        .iter()
        .map(|p| load_checkpoint::<f64>(p).usage(p.display()))
        .collect::<Outcome<Vec<_>>>()?;
    let first = &ckpts[0].vocab;
    for (c, path) in ckpts.iter().zip(&files).skip(1) {
        vocab_agrees(first, &c.vocab).map_err(|m| usage(format!("{}: {m}", path.display())))?;
    }
    Ok(ckpts)
}

fn vocab_agrees(a: &Vocabulary, b: &Vocabulary) -> Result<(), String> {
    let diff = |kind: &str, x: &[String], y: &[String]| -> Result<(), String> {
        if let Some(i) = (0..x.len().max(y.len())).find(|&i| x.get(i) != y.get(i)) {
            let name = y.get(i).or(x.get(i)).expect("index within one side");
            return Err(format!("vocabulary differs from the first checkpoint at {kind} `{name}`"));
        }
        Ok(())
    };
    diff("entity", a.entities(), b.entities())?;
    diff("relation", a.relations(), b.relations())
}

fn load_strict(path: &Path, vocab: &Vocabulary) -> Outcome<Vec<Triple>> {
    require_file(path)?;
    load_triples_strict(path, vocab).map_err(|e| names::explain(&path.display().to_string(), vocab, e))
}

pub fn evaluate(args: EvaluateArgs) -> Outcome {
    if args.hits.contains(&0) {
        return Err(usage("--hits values must be positive"));
    }
    let splits: Vec<Split> = if args.splits.is_empty() {
        let mut s = vec![Split::Train];
        if args.test.is_some() {
            s.push(Split::Test);
        }
        s
    } else {
        let mut seen = Vec::new();
        for name in &args.splits {
            let s: Split = name.parse::<Split>().usage("--splits")?;
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
        seen
    };
    if splits.contains(&Split::Test) && args.test.is_none() {
        return Err(usage("the test split needs --test"));
    }
    let ckpts = load_all(&args.checkpoint)?;
    let vocab = &ckpts[0].vocab;
    let train = load_strict(&args.train, vocab)?;
    let test = match &args.test {
        Some(p) => load_strict(p, vocab)?,
        None => Vec::new(),
    };
    let store = TripleStore::new(train, test, vocab.num_entities(), vocab.num_relations()).usage("data")?;

    create_dir(&args.out)?;
    for split in splits {
        let mut reports = Vec::with_capacity(ckpts.len());
        for (i, c) in ckpts.iter().enumerate() {
            let report = rank_split(&c.state.model, &store, split, &args.hits).runtime(split.as_str())?;
            let path = args.out.join(format!("{}_ranks_{i}.csv", split.as_str()));
            write_ranks_file(&path, &report, vocab).runtime(path.display())?;
            reports.push(report);
        }
        let path = args.out.join(format!("{}_aggregate.csv", split.as_str()));
        write_aggregate_file(&path, &reports).runtime(path.display())?;
        let mrr: Vec<f64> = reports.iter().map(|r| r.mrr_total).collect();
        let band = spike_embed::eval::Band::of(&mrr);
        println!(
            "{}: mrr {} [{}, {}] over {} checkpoint(s)",
            split.as_str(),
            fmt6(band.median),
            fmt6(band.low),
            fmt6(band.high),
            mrr.len()
        );
    }
    Ok(())
}

fn read_candidates(path: &Path) -> Outcome<Vec<String>> {
    require_file(path)?;
    let text = fs::read_to_string(path).usage(path.display())?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let name = line.trim();
        if name.is_empty() || name.starts_with('#') {
            continue;
        }
        if seen.insert(name.to_owned()) {
            out.push(name.to_owned());
        } else {
            eprintln!("warning: {}:{}: duplicate candidate `{name}` ignored", path.display(), i + 1);
        }
    }
    if out.is_empty() {
        return Err(usage(format!("{}: no candidates", path.display())));
    }
    Ok(out)
}

pub fn rank_events(args: RankEventsArgs) -> Outcome {
    let candidates = read_candidates(&args.candidates)?;
    let ckpts = load_all(&args.checkpoint)?;
    let vocab = &ckpts[0].vocab;
    let subject = names::entity(vocab, &args.subject)?;
    let relation = names::relation(vocab, &args.relation)?;
    let ids = candidates
        .iter()
        .map(|c| names::entity(vocab, c).map_err(|e| usage(format!("{}: {e}", args.candidates.display()))))
        .collect::<Outcome<Vec<_>>>()?;

    let models: Vec<_> = ckpts.iter().map(|c| &c.state.model).collect();
    let report = score_candidates(&models, subject, relation, &ids).runtime("rank-events")?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = fs::File::create(&args.out).runtime(args.out.display())?;
    write_anomalies(file, &report, vocab).runtime(args.out.display())?;
    Ok(())
}

pub fn inspect(args: InspectArgs) -> Outcome {
    require_file(&args.checkpoint)?;
    let ckpt = load_checkpoint::<f64>(&args.checkpoint).usage(args.checkpoint.display())?;
    let model = &ckpt.state.model;
    if !model.kind.is_spiking() {
        return Err(usage(format!("inspect needs a spiking model, checkpoint holds {}", model.kind)));
    }
    let vocab = &ckpt.vocab;
    let t = Triple::new(
        names::entity(vocab, &args.triple[0])?,
        names::relation(vocab, &args.triple[1])?,
        names::entity(vocab, &args.triple[2])?,
    );
    let trace = temporal_trace(model, &t).runtime("inspect")?;

    create_dir(&args.out)?;
    let trace_path = args.out.join("trace.csv");
    let file = fs::File::create(&trace_path).runtime(trace_path.display())?;
    write_trace(file, &trace).runtime(trace_path.display())?;

    let raster_path = args.out.join("raster.csv");
    write_raster(&raster_path, &ckpt, &t).runtime(raster_path.display())?;
    println!("score {}", fmt6(trace.final_score));
    Ok(())
}

/// `role,index,value,difference,residual,silent`: spike times of both
/// populations, then relation components with the matching spike-time
/// difference and its distance to the relation.
fn write_raster(path: &Path, ckpt: &Checkpoint64, t: &Triple) -> spike_embed::Result<()> {
    let model = &ckpt.state.model;
    let subject = model.embedding(t.s, Slot::Subject);
    let object = model.embedding(t.o, Slot::Object);
    let relation = &model.relations[t.p].vector;
    let silent_at = model.stimulus().map(|(_, p)| p.t_silent).unwrap_or(f64::INFINITY);
    let mut w = csv_file(path)?;
    w.write_record(["role", "index", "value", "difference", "residual", "silent"])?;
    for (role, times) in [("subject", subject), ("object", object)] {
        for (i, &x) in times.iter().enumerate() {
            let silent = (x >= silent_at).to_string();
            w.write_record([role, &i.to_string(), &fmt6(x), "", "", &silent])?;
        }
    }
    for (i, &r) in relation.iter().enumerate() {
        let d = subject[i] - object[i];
        let d = if model.kind.is_symmetric() { d.abs() } else { d };
        w.write_record(["relation", &i.to_string(), &fmt6(r), &fmt6(d), &fmt6((d - r).abs()), ""])?;
    }
    w.flush().map_err(|e| spike_embed::Error::Csv(e.into()))
}

pub fn split(args: SplitArgs) -> Outcome {
    require_file(&args.data)?;
    let (vocab, triples) = load_triples(&args.data).usage(args.data.display())?;
    let (train, test) = split_triples(&triples, args.ratio, args.seed).usage("split")?;
    create_dir(&args.out)?;
    for (name, part) in [("train.tsv", &train), ("test.tsv", &test)] {
        let path = args.out.join(name);
        let mut text = String::new();
        for t in part {
            text.push_str(&format!(
                "{}\t{}\t{}\n",
                vocab.entity_name(t.s),
                vocab.relation_name(t.p),
                vocab.entity_name(t.o)
            ));
        }
        write_file(&path, &text)?;
    }
    println!("train {} / test {}", train.len(), test.len());
    Ok(())
}

pub fn export(args: ExportArgs) -> Outcome {
    require_file(&args.checkpoint)?;
    let ckpt = load_checkpoint::<f64>(&args.checkpoint).usage(args.checkpoint.display())?;
    let text = export_text(&ckpt);
    match &args.out {
        Some(path) => write_file(path, &text),
        None => std::io::stdout().write_all(text.as_bytes()).runtime("stdout"),
    }
}
