use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CLUSTERS: [&[usize]; 4] = [&[0, 1], &[2, 3, 4], &[5, 6, 7], &[8, 9]];
const LINKS: [(usize, &[(usize, usize)]); 3] = [(0, &[(0, 1), (2, 3)]), (1, &[(1, 2)]), (2, &[(0, 2), (1, 3)])];
const DIM: usize = 4;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spike-embed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn graph_lines() -> Vec<String> {
    let mut rows = Vec::new();
    for (r, pairs) in LINKS {
        for &(a, b) in pairs {
            for s in CLUSTERS[a] {
                for o in CLUSTERS[b] {
                    rows.push(format!("e{s}\tr{r}\te{o}"));
                }
            }
        }
    }
    rows
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let rows = graph_lines();
        fs::write(dir.path().join("all.tsv"), rows.join("\n") + "\n").unwrap();
        let (train, test) = rows.split_at(rows.len() - 4);
        fs::write(dir.path().join("train.tsv"), train.join("\n") + "\n").unwrap();
        fs::write(dir.path().join("test.tsv"), test.join("\n") + "\n").unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (train, test, out) = (self.path("train.tsv"), self.path("test.tsv"), self.path(out));
        let dim = DIM.to_string();
        let mut args = vec![
            "train", "--train", p(&train), "--test", p(&test), "--out", p(&out),
            "--dim", &dim, "--stim", "8", "--tau-s", "0.5", "--window", "-1", "1",
            "--lr", "1.0", "--batch", "8", "--neg", "2", "2", "--delta", "0.01",
        ];
        if !extra.contains(&"--epochs") {
            args.extend_from_slice(&["--epochs", "60"]);
        }
        args.extend_from_slice(extra);
        run(&args)
    }

    fn trained(&self, out: &str, extra: &[&str]) -> PathBuf {
        let o = self.train(out, extra);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        self.path(out)
    }
}

#[test]
fn help_and_bad_flags() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["train", "--bogus"])), 2);
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn missing_data_file_leaves_no_outputs() {
    let f = Fixture::new();
    let out = f.path("run");
    let o = run(&["train", "--train", p(&f.path("missing.tsv")), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.tsv"));
    assert!(!out.exists());
}

#[test]
fn bad_config_is_a_usage_error() {
    let f = Fixture::new();
    let cfg = f.path("bad.txt");
    fs::write(&cfg, "model=spike\nlearning_speed=3\n").unwrap();
    let o = f.train("run", &["--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_speed"));
    assert!(!f.path("run").exists());

    let o = f.train("run", &["--model", "rotate"]);
    assert_eq!(code(&o), 2);
    let o = f.train("run", &["--align"]);
    assert_eq!(code(&o), 2, "alignment needs separate populations");
    assert!(!f.path("run").exists());
}

#[test]
fn one_checkpoint_and_log_per_seed() {
    let f = Fixture::new();
    let out = f.trained("run", &["--seeds", "3", "--seed", "7"]);
    assert!(out.join("config.txt").is_file());
    for k in 0..3 {
        let dir = out.join(format!("seed_{k}"));
        assert!(dir.join("checkpoint.bin").is_file());
        let cfg = fs::read_to_string(dir.join("config.txt")).unwrap();
        assert!(cfg.contains(&format!("seed={}\n", 7 + k)));
        let log = fs::read_to_string(dir.join("train_log.csv")).unwrap();
        assert_eq!(log.lines().count(), 61);
        assert!(log.lines().skip(1).all(|l| l.ends_with(",0")));
    }
}

#[test]
fn persisted_config_reproduces_the_run() {
    let f = Fixture::new();
    let first = f.trained("run", &["--seeds", "2"]);
    let cfg = first.join("seed_1/config.txt");
    let o = run(&[
        "train", "--config", p(&cfg),
        "--train", p(&f.path("train.tsv")), "--test", p(&f.path("test.tsv")),
        "--out", p(&f.path("again")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for file in ["checkpoint.bin", "train_log.csv", "config.txt"] {
        let a = fs::read(first.join("seed_1").join(file)).unwrap();
        let b = fs::read(f.path("again/seed_0").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn evaluation_reports_are_deterministic() {
    let f = Fixture::new();
    let run_dir = f.trained("run", &["--seeds", "2"]);
    let eval = |out: &str| {
        let o = run(&[
            "evaluate", "--checkpoint", p(&run_dir),
            "--train", p(&f.path("train.tsv")), "--test", p(&f.path("test.tsv")),
            "--hits", "1", "3", "10", "--out", p(&f.path(out)),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        f.path(out)
    };
    let a = eval("ev1");
    let b = eval("ev2");
    for split in ["train", "test"] {
        let agg = fs::read_to_string(a.join(format!("{split}_aggregate.csv"))).unwrap();
        assert!(agg.starts_with("metric,median,p15,p85,seeds,seed_0,seed_1\n"));
        let hits_rows = agg.lines().filter(|l| l.starts_with("hits@")).count();
        assert_eq!(hits_rows, 9);
        assert_eq!(agg, fs::read_to_string(b.join(format!("{split}_aggregate.csv"))).unwrap());
        for i in 0..2 {
            let name = format!("{split}_ranks_{i}.csv");
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        }
    }
    let ranks = fs::read_to_string(a.join("test_ranks_0.csv")).unwrap();
    assert_eq!(ranks.lines().count(), 5);
}

#[test]
fn evaluation_names_the_unknown_entity() {
    let f = Fixture::new();
    let run_dir = f.trained("run", &[]);
    let odd = f.path("odd.tsv");
    fs::write(&odd, "e0\tr0\te2\ne1\tr0\tpump7\ne1\tr0\tvalve\n").unwrap();
    let o = run(&[
        "evaluate", "--checkpoint", p(&run_dir), "--train", p(&f.path("train.tsv")),
        "--test", p(&odd), "--out", p(&f.path("ev")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`pump7`"), "{}", stderr(&o));
    assert!(!f.path("ev").exists());
}

#[test]
fn checkpoints_must_share_a_vocabulary() {
    let f = Fixture::new();
    let a = f.trained("a", &[]);
    let mut rows = graph_lines();
    rows.push("e0\tr0\textra".into());
    fs::write(f.path("train.tsv"), rows.join("\n") + "\n").unwrap();
    fs::write(f.path("test.tsv"), "").unwrap();
    let o = run(&["train", "--train", p(&f.path("train.tsv")), "--out", p(&f.path("b")), "--dim", "4", "--stim", "8", "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cands = f.path("c.txt");
    fs::write(&cands, "e1\n").unwrap();
    let o = run(&[
        "rank-events", "--checkpoint", p(&a), p(&f.path("b")),
        "--subject", "e0", "--relation", "r0", "--candidates", p(&cands), "--out", p(&f.path("x.csv")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`extra`"), "{}", stderr(&o));
}

#[test]
fn rank_events_puts_known_objects_last() {
    let f = Fixture::new();
    let run_dir = f.trained("run", &["--seeds", "3", "--epochs", "200"]);
    let cands = f.path("cands.txt");
    fs::write(&cands, "e9\ne2\ne5\n\ne3\ne2\ne8\ne4\n").unwrap();
    let out = f.path("re/anomalies.csv");
    let o = run(&[
        "rank-events", "--checkpoint", p(&run_dir), "--subject", "e0", "--relation", "r0",
        "--candidates", p(&cands), "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("duplicate candidate `e2`"));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    let mut tail: Vec<&str> = rows[3..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    tail.sort_unstable();
    assert_eq!(tail, ["e2", "e3", "e4"]);

    fs::write(&cands, "\n# nothing\n").unwrap();
    let o = run(&[
        "rank-events", "--checkpoint", p(&run_dir), "--subject", "e0", "--relation", "r0",
        "--candidates", p(&cands), "--out", p(&f.path("none.csv")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!f.path("none.csv").exists());
}

#[test]
fn inspect_writes_trace_and_raster() {
    let f = Fixture::new();
    let run_dir = f.trained("run", &["--epochs", "200"]);
    let ckpt = run_dir.join("seed_0/checkpoint.bin");
    let out = f.path("insp");
    let o = run(&["inspect", "--checkpoint", p(&ckpt), "--triple", "e0", "r0", "e2", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let score: f64 = String::from_utf8(o.stdout).unwrap().trim().strip_prefix("score ").unwrap().parse().unwrap();
    assert!(score < 0.5, "{score}");

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let last: f64 = trace.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(last, score);
    let raster = fs::read_to_string(out.join("raster.csv")).unwrap();
    assert_eq!(raster.lines().count(), 1 + 3 * DIM);
    let roles: Vec<&str> = raster.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(roles.iter().filter(|r| **r == "relation").count(), DIM);

    let o = run(&["inspect", "--checkpoint", p(&ckpt), "--triple", "e0", "r00", "e2", "--out", p(&f.path("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nearest matches: r0"), "{}", stderr(&o));
}

#[test]
fn inspect_rejects_translation_models() {
    let f = Fixture::new();
    let run_dir = f.trained("run", &["--model", "transe", "--epochs", "2"]);
    let o = run(&[
        "inspect", "--checkpoint", p(&run_dir.join("seed_0/checkpoint.bin")),
        "--triple", "e0", "r0", "e2", "--out", p(&f.path("insp")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!f.path("insp").exists());
}

#[test]
fn split_partitions_the_file() {
    let f = Fixture::new();
    let out = f.path("parts");
    let o = run(&["split", "--data", p(&f.path("all.tsv")), "--ratio", "0.75", "--seed", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let train = fs::read_to_string(out.join("train.tsv")).unwrap();
    let test = fs::read_to_string(out.join("test.tsv")).unwrap();
    let mut joined: Vec<&str> = train.lines().chain(test.lines()).collect();
    joined.sort_unstable();
    let mut all = graph_lines();
    all.sort();
    assert_eq!(joined, all);
    assert_eq!(train.lines().count(), 25);

    let o = run(&["split", "--data", p(&f.path("all.tsv")), "--ratio", "1.5", "--out", p(&f.path("bad"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn export_prints_the_checkpoint() {
    let f = Fixture::new();
    let run_dir = f.trained("run", &["--epochs", "1"]);
    let o = run(&["export", "--checkpoint", p(&run_dir.join("seed_0/checkpoint.bin"))]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("model=spike"));
    assert!(text.contains("e9"));

    let junk = f.path("junk.bin");
    fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(code(&run(&["export", "--checkpoint", p(&junk)])), 2);
}
