use spike_embed::{Error, Vocabulary};

use crate::failure::Failure;

const SUGGESTIONS: usize = 3;

/// Up to three vocabulary names closest to `name`, best first.
pub fn nearest<'a>(name: &str, pool: &'a [String]) -> Vec<&'a str> {
    let mut scored: Vec<(f64, &str)> = pool
        .iter()
        .map(|c| (strsim::normalized_levenshtein(name, c), c.as_str()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(SUGGESTIONS).map(|(_, c)| c).collect()
}

pub fn unknown(kind: &str, name: &str, pool: &[String]) -> Failure {
    let near = nearest(name, pool);
    let hint = if near.is_empty() {
        String::new()
    } else {
        format!("; nearest matches: {}", near.join(", "))
    };
    Failure::Usage(format!("unknown {kind} `{name}`{hint}"))
}

pub fn entity(vocab: &Vocabulary, name: &str) -> Result<usize, Failure> {
    vocab
        .entity_id(name)
        .ok_or_else(|| unknown("entity", name, vocab.entities()))
}

pub fn relation(vocab: &Vocabulary, name: &str) -> Result<usize, Failure> {
    vocab
        .relation_id(name)
        .ok_or_else(|| unknown("relation", name, vocab.relations()))
}

/// Turns a strict-load error into a usage failure, adding suggestions for unknown names.
pub fn explain(context: &str, vocab: &Vocabulary, err: Error) -> Failure {
    match err {
        Error::UnknownName { kind, name } => {
            let pool = if kind == "relation" { vocab.relations() } else { vocab.entities() };
            match unknown(kind, &name, pool) {
                Failure::Usage(m) | Failure::Runtime(m) => {
                    Failure::Usage(format!("{context}: {m} (not in the checkpoint vocabulary)"))
                }
            }
        }
        other => Failure::Usage(format!("{context}: {other}")),
    }
}
