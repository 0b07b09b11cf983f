//! CSV emitters for training logs, rankings, traces, histograms and anomaly
//! tables. Every float is written with 6 significant digits.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{AnomalyReport, Band, RankingReport, ScoreDistribution, TemporalTrace};
use crate::graph::Vocabulary;
use crate::scalar::Scalar;
use crate::train::EpochStats;

/// `%g`-style formatting with 6 significant digits.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (5 - exp) as usize, x)).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Per-epoch training log: `epoch,mean_loss,lr,wall_time`.
///
/// With `deterministic` set the wall-time column is written as `0` so that
/// repeated runs produce identical files.
pub struct TrainingLog<W: Write> {
    out: csv::Writer<W>,
    deterministic: bool,
}

impl TrainingLog<File> {
    pub fn create(path: impl AsRef<Path>, deterministic: bool) -> Result<Self> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        TrainingLog::new(f, deterministic)
    }
}

impl<W: Write> TrainingLog<W> {
    pub fn new(writer: W, deterministic: bool) -> Result<Self> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["epoch", "mean_loss", "lr", "wall_time"])?;
        Ok(TrainingLog { out, deterministic })
    }

    pub fn record(&mut self, stats: &EpochStats) -> Result<()> {
        let wall = if self.deterministic { 0.0 } else { stats.wall_time };
        self.out.write_record([
            stats.epoch.to_string(),
            fmt6(stats.mean_loss),
            fmt6(stats.lr),
            fmt6(wall),
        ])?;
        self.out.flush().map_err(|e| Error::Csv(e.into()))
    }

    pub fn into_inner(self) -> Result<W> {
        self.out
            .into_inner()
            .map_err(|e| Error::Csv(csv::Error::from(e.into_error())))
    }
}

/// `subject,predicate,object,subject_rank,object_rank`, one row per triple.
pub fn write_ranks<W: Write>(out: W, report: &RankingReport, vocab: &Vocabulary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject", "predicate", "object", "subject_rank", "object_rank"])?;
    for r in &report.ranks {
        w.write_record([
            vocab.entity_name(r.triple.s),
            vocab.relation_name(r.triple.p),
            vocab.entity_name(r.triple.o),
            &r.subject_rank.to_string(),
            &r.object_rank.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

pub fn write_ranks_file(path: impl AsRef<Path>, report: &RankingReport, vocab: &Vocabulary) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ranks(f, report, vocab)
}

/// Aggregate metrics over one report per seed:
/// `metric,median,p15,p85,seeds` followed by one column per seed.
pub fn write_aggregate<W: Write>(out: W, reports: &[RankingReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_owned(), "median".into(), "p15".into(), "p85".into(), "seeds".into()];
    header.extend((0..reports.len()).map(|i| format!("seed_{i}")));
    w.write_record(&header)?;
    if let Some(first) = reports.first() {
        let per_seed: Vec<Vec<(String, f64)>> = reports.iter().map(|r| r.metrics()).collect();
        for (i, (name, _)) in first.metrics().iter().enumerate() {
            let values: Vec<f64> = per_seed.iter().map(|m| m[i].1).collect();
            let band = Band::of(&values);
            let mut row = vec![
                name.clone(),
                fmt6(band.median),
                fmt6(band.low),
                fmt6(band.high),
                values.len().to_string(),
            ];
            row.extend(values.iter().map(|&v| fmt6(v)));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

pub fn write_aggregate_file(path: impl AsRef<Path>, reports: &[RankingReport]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_aggregate(f, reports)
}

/// `time,partial_score`, one row per spike event.
pub fn write_trace<T: Scalar, W: Write>(out: W, trace: &TemporalTrace<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "partial_score"])?;
    for (t, s) in &trace.points {
        w.write_record([fmt6(t.as_f64()), fmt6(s.as_f64())])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

/// `bin_low,bin_high,positives,negatives`.
pub fn write_histogram<W: Write>(out: W, dist: &ScoreDistribution, bins: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_low", "bin_high", "positives", "negatives"])?;
    for (lo, hi, p, n) in dist.histogram(bins) {
        w.write_record([fmt6(lo), fmt6(hi), p.to_string(), n.to_string()])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

/// `rank,candidate,median,p15,p85` then one score column per model.
pub fn write_anomalies<W: Write>(out: W, report: &AnomalyReport, vocab: &Vocabulary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let seeds = report.entries.first().map_or(0, |e| e.scores.len());
    let mut header = vec!["rank".to_owned(), "candidate".into(), "median".into(), "p15".into(), "p85".into()];
    header.extend((0..seeds).map(|i| format!("seed_{i}")));
    w.write_record(&header)?;
    for (i, e) in report.entries.iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            vocab.entity_name(e.candidate).to_owned(),
            fmt6(e.band.median),
            fmt6(e.band.low),
            fmt6(e.band.high),
        ];
        row.extend(e.scores.iter().map(|&s| fmt6(s)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

/// Opens a CSV file for ad-hoc tables.
pub fn csv_file(path: impl AsRef<Path>) -> Result<csv::Writer<File>> {
    create(path.as_ref())
}
