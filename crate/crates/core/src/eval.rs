//! Filtered link-prediction metrics, score distributions, event-based
//! temporal scoring and anomaly ranking.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{negative_samples, Slot, Split, Triple, TripleStore};
use crate::model::Model;
use crate::scalar::Scalar;

pub const DEFAULT_HITS: [usize; 3] = [1, 3, 10];

/// Lower and upper percentiles used for every uncertainty band.
pub const BAND: (f64, f64) = (15.0, 85.0);

/// Rank of a target among candidates: `1 + #better + floor(#ties / 2)`, where
/// lower scores are better and `ties` excludes the target itself.
pub fn rank_from_scores<T: Scalar>(target: T, others: impl IntoIterator<Item = T>) -> usize {
    let (mut better, mut ties) = (0usize, 0usize);
    for s in others {
        if s < target {
            better += 1;
        } else if s == target {
            ties += 1;
        }
    }
    1 + better + ties / 2
}

/// Filtered rank of `t` when its `slot` is replaced by every admissible entity.
pub fn rank<T: Scalar>(model: &Model<T>, store: &TripleStore, t: &Triple, slot: Slot) -> usize {
    let target_entity = t.entity(slot);
    let target = model.score_triple(t);
    let others = store
        .candidates_filtered(t, slot)
        .into_iter()
        .filter(|&e| e != target_entity)
        .map(|e| model.score_triple(&t.with(slot, e)));
    rank_from_scores(target, others)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleRank {
    pub triple: Triple,
    pub subject_rank: usize,
    pub object_rank: usize,
}

/// Ranks of every triple in a split and their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub split: Split,
    pub hits_at: Vec<usize>,
    pub ranks: Vec<TripleRank>,
    pub mrr_subject: f64,
    pub mrr_object: f64,
    /// Mean reciprocal rank pooled over both slots.
    pub mrr_total: f64,
    pub hits_subject: Vec<f64>,
    pub hits_object: Vec<f64>,
    pub hits_total: Vec<f64>,
}

impl RankingReport {
    /// Aggregates in a fixed order: `(name, value)`.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("mrr_subject".to_owned(), self.mrr_subject),
            ("mrr_object".to_owned(), self.mrr_object),
            ("mrr_total".to_owned(), self.mrr_total),
        ];
        for (i, k) in self.hits_at.iter().enumerate() {
            out.push((format!("hits@{k}_subject"), self.hits_subject[i]));
            out.push((format!("hits@{k}_object"), self.hits_object[i]));
            out.push((format!("hits@{k}_total"), self.hits_total[i]));
        }
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Subject- and object-slot filtered ranks of every triple in `split`.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    store: &TripleStore,
    split: Split,
    hits_at: &[usize],
) -> Result<RankingReport> {
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(Error::Empty(format!("{} split has no triples", split.as_str())));
    }
    let ranks: Vec<TripleRank> = triples
        .iter()
        .map(|t| TripleRank {
            triple: *t,
            subject_rank: rank(model, store, t, Slot::Subject),
            object_rank: rank(model, store, t, Slot::Object),
        })
        .collect();
    let recip = |r: usize| 1.0 / r as f64;
    let hits = |k: usize, r: usize| if r <= k { 1.0 } else { 0.0 };
    let subj = || ranks.iter().map(|r| r.subject_rank);
    let obj = || ranks.iter().map(|r| r.object_rank);
    let both = || subj().chain(obj());
    Ok(RankingReport {
        split,
        hits_at: hits_at.to_vec(),
        mrr_subject: mean(subj().map(recip)),
        mrr_object: mean(obj().map(recip)),
        mrr_total: mean(both().map(recip)),
        hits_subject: hits_at.iter().map(|&k| mean(subj().map(|r| hits(k, r)))).collect(),
        hits_object: hits_at.iter().map(|&k| mean(obj().map(|r| hits(k, r)))).collect(),
        hits_total: hits_at.iter().map(|&k| mean(both().map(|r| hits(k, r)))).collect(),
        ranks,
    })
}

/// Linearly interpolated percentile (`q` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median with the 15th/85th percentile band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub median: f64,
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Band {
        Band {
            median: percentile(values, 50.0),
            low: percentile(values, BAND.0),
            high: percentile(values, BAND.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p15: f64,
    pub median: f64,
    pub p85: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        Summary {
            count: values.len(),
            mean: mean(values.iter().copied()),
            min: percentile(values, 0.0),
            p15: percentile(values, BAND.0),
            median: percentile(values, 50.0),
            p85: percentile(values, BAND.1),
            max: percentile(values, 100.0),
        }
    }
}

/// Scores of positive triples and of freshly corrupted negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoreDistribution {
    pub fn positive_summary(&self) -> Summary {
        Summary::of(&self.positives)
    }

    pub fn negative_summary(&self) -> Summary {
        Summary::of(&self.negatives)
    }

    /// Shared equal-width bins over both samples: `(lo, hi, positives, negatives)`.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, usize, usize)> {
        let bins = bins.max(1);
        let all = self.positives.iter().chain(&self.negatives);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![(0usize, 0usize); bins];
        let bin = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
        for &x in &self.positives {
            counts[bin(x)].0 += 1;
        }
        for &x in &self.negatives {
            counts[bin(x)].1 += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, (p, n))| (lo + i as f64 * width, lo + (i + 1) as f64 * width, p, n))
            .collect()
    }

    /// Two-sided p-value of a location shift between positives and negatives.
    pub fn location_p_value(&self) -> f64 {
        mann_whitney_p(&self.positives, &self.negatives)
    }
}

/// Scores `triples` and `k_subj + k_obj` corruptions of each.
pub fn score_distribution<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    triples: &[Triple],
    k_subj: usize,
    k_obj: usize,
    rng: &mut R,
) -> ScoreDistribution {
    let mut positives = Vec::with_capacity(triples.len());
    let mut negatives = Vec::with_capacity(triples.len() * (k_subj + k_obj));
    for t in triples {
        positives.push(model.score_triple(t).as_f64());
        for n in negative_samples(*t, k_subj, k_obj, model.num_entities(), rng) {
            negatives.push(model.score_triple(&n).as_f64());
        }
    }
    ScoreDistribution {
        positives,
        negatives,
    }
}

/// Mann-Whitney U test, normal approximation with tie correction; two-sided p.
pub fn mann_whitney_p(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return 1.0;
    }
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&x| (x, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = pooled.len();
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let group = (j - i + 1) as f64;
        tie_term += group * group * group - group;
        rank_sum_a += avg_rank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = rank_sum_a - n1f * (n1f + 1.0) / 2.0;
    let mu = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - mu).abs() / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

fn require_spiking<T: Scalar>(model: &Model<T>) -> Result<()> {
    if model.kind.is_spiking() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "temporal scoring needs a spiking model, not {}",
            model.kind
        )))
    }
}

/// Score accumulated by time `t`: a component counts once both of its
/// neurons have spiked. Silent neurons count as spiking at `t_silent`.
pub fn temporal_score<T: Scalar>(model: &Model<T>, t: &Triple, time: T) -> Result<T> {
    require_spiking(model)?;
    Ok(partial_score(model, t, time))
}

fn partial_score<T: Scalar>(model: &Model<T>, t: &Triple, time: T) -> T {
    let ts = model.embedding(t.s, Slot::Subject);
    let to = model.embedding(t.o, Slot::Object);
    let r = &model.relations[t.p].vector;
    let symmetric = model.kind.is_symmetric();
    // same fold order as the static score so the two agree bit-for-bit
    ts.iter()
        .zip(to)
        .zip(r)
        .map(|((&s, &o), &r)| {
            if s <= time && o <= time {
                let d = if symmetric { (s - o).abs() } else { s - o };
                (d - r).abs()
            } else {
                T::zero()
            }
        })
        .sum()
}

/// Partial score sampled at every spike of either population.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTrace<T> {
    pub triple: Triple,
    /// `(event time, partial score)`, times strictly increasing.
    pub points: Vec<(T, T)>,
    pub final_score: T,
}

impl<T: Scalar> TemporalTrace<T> {
    /// First event time at which the partial score reaches `fraction` of the final score.
    pub fn time_to_fraction(&self, fraction: f64) -> T {
        let goal = self.final_score * T::lit(fraction);
        self.points
            .iter()
            .find(|(_, s)| *s >= goal)
            .map(|(t, _)| *t)
            .unwrap_or_else(|| self.points.last().map(|p| p.0).unwrap_or(T::zero()))
    }
}

pub fn temporal_trace<T: Scalar>(model: &Model<T>, t: &Triple) -> Result<TemporalTrace<T>> {
    require_spiking(model)?;
    let mut events: Vec<T> = model
        .embedding(t.s, Slot::Subject)
        .iter()
        .chain(model.embedding(t.o, Slot::Object))
        .copied()
        .collect();
    events.sort_by(|a, b| a.partial_cmp(b).expect("spike times are finite"));
    events.dedup();
    let points = events.into_iter().map(|e| (e, partial_score(model, t, e))).collect();
    Ok(TemporalTrace {
        triple: *t,
        points,
        final_score: model.score_triple(t),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyEntry {
    pub candidate: usize,
    /// One score per model, in the order the models were given.
    pub scores: Vec<f64>,
    pub band: Band,
}

/// Candidates sorted from least to most plausible.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub subject: usize,
    pub relation: usize,
    pub entries: Vec<AnomalyEntry>,
}

/// Scores `<subject, relation, candidate>` under every model (e.g. one per
/// seed) and sorts by median score, highest first. Ties keep input order.
pub fn rank_events<T: Scalar>(
    models: &[&Model<T>],
    subject: usize,
    relation: usize,
    candidates: &[usize],
) -> Result<AnomalyReport> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("rank_events needs at least one model".into()));
    }
    for m in models {
        if subject >= m.num_entities() || relation >= m.num_relations() {
            return Err(Error::InvalidArgument("subject or relation outside the model".into()));
        }
        if let Some(c) = candidates.iter().find(|&&c| c >= m.num_entities()) {
            return Err(Error::InvalidArgument(format!("candidate {c} outside the model")));
        }
    }
    let mut entries: Vec<AnomalyEntry> = candidates
        .iter()
        .map(|&c| {
            let t = Triple::new(subject, relation, c);
            let scores: Vec<f64> = models.iter().map(|m| m.score_triple(&t).as_f64()).collect();
            AnomalyEntry {
                candidate: c,
                band: Band::of(&scores),
                scores,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.band.median.total_cmp(&a.band.median));
    Ok(AnomalyReport {
        subject,
        relation,
        entries,
    })
}
