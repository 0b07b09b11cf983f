//! Versioned single-file checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "SPKEMBCK"
//! version  u32
//! sections repeated: tag [u8; 4], len u64, payload[len]
//! crc32    u32 over everything before it
//! ```
//!
//! Sections appear in the order `CONF VOCB STIM ENTS RELS OPTM EPCH RNGS`.
//! Floats are stored as `f64` regardless of the in-memory scalar type, so
//! `f32` states round-trip exactly too.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Vocabulary;
use crate::model::{EntityTable, Model, RelationEmbedding};
use crate::nlif::{EntityPopulation, NeuronParams, StimulusLayer};
use crate::optim::OptimizerState;
use crate::scalar::Scalar;
use crate::train::{TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"SPKEMBCK";
pub const VERSION: u32 = 1;

const SECTIONS: [&[u8; 4]; 8] = [
    b"CONF", b"VOCB", b"STIM", b"ENTS", b"RELS", b"OPTM", b"EPCH", b"RNGS",
];

/// A training state together with the vocabulary it was trained on.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub state: TrainState<T>,
    pub vocab: Vocabulary,
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64s<T: Scalar>(&mut self, v: &[T]) {
        self.len(v.len());
        for x in v {
            self.buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, tag: &[u8; 4], payload: Writer) {
        self.buf.extend_from_slice(tag);
        self.len(payload.buf.len());
        self.buf.extend_from_slice(&payload.buf);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated {} section at byte {}",
                    self.what, self.pos
                ))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // every element occupies at least one byte
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(Error::Checkpoint(format!(
                "implausible length {n} in {} section",
                self.what
            )));
        }
        Ok(n as usize)
    }
    fn f64s<T: Scalar>(&mut self) -> Result<Vec<T>> {
        let n = self.len()?;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Checkpoint(format!("length overflow in {} section", self.what))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("invalid UTF-8 in {} section", self.what)))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes in {} section",
                self.buf.len() - self.pos,
                self.what
            )));
        }
        Ok(())
    }
}

/// Serializes a checkpoint into bytes.
pub fn encode<T: Scalar>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    let state = &ckpt.state;
    let model = &state.model;
    let mut out = Writer::default();
    out.buf.extend_from_slice(MAGIC);
    out.u32(VERSION);

    let mut conf = Writer::default();
    conf.str(&state.config.to_kv());
    out.section(b"CONF", conf);

    let mut vocab = Writer::default();
    for names in [ckpt.vocab.entities(), ckpt.vocab.relations()] {
        vocab.len(names.len());
        for name in names {
            vocab.str(name);
        }
    }
    out.section(b"VOCB", vocab);

    let mut stim = Writer::default();
    match model.stimulus() {
        Some((layer, _)) => stim.f64s(layer.times()),
        None => stim.len(0),
    }
    out.section(b"STIM", stim);

    let mut ents = Writer::default();
    ents.len(model.table_len());
    for row in 0..model.table_len() {
        ents.f64s(model.entity_params(row));
    }
    out.section(b"ENTS", ents);

    let mut rels = Writer::default();
    rels.len(model.relations.len());
    for r in &model.relations {
        rels.u8(r.frozen as u8);
        rels.f64s(&r.vector);
    }
    out.section(b"RELS", rels);

    let mut optm = Writer::default();
    for group in [&state.optimizer.entities, &state.optimizer.relations] {
        optm.len(group.len());
        for acc in group {
            optm.f64s(acc);
        }
    }
    out.section(b"OPTM", optm);

    let mut epoch = Writer::default();
    epoch.len(state.epoch);
    out.section(b"EPCH", epoch);

    let mut rng = Writer::default();
    rng.buf.extend_from_slice(&state.rng.get_seed());
    rng.u64(state.rng.get_stream());
    rng.buf
        .extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    out.section(b"RNGS", rng);

    let crc = crc32fast::hash(&out.buf);
    out.u32(crc);
    out.buf
}

/// Parses bytes produced by [`encode`]. Nothing is constructed unless the
/// whole file validates.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint(
            "not a checkpoint file (bad magic bytes)".into(),
        ));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let mut header = Reader::new(&body[MAGIC.len()..], "header");
    let version = header.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint(
            "checksum mismatch, file is corrupt".into(),
        ));
    }

    let mut sections: Vec<&[u8]> = Vec::with_capacity(SECTIONS.len());
    for tag in SECTIONS {
        let found = header.take(4)?;
        if found != tag {
            return Err(Error::Checkpoint(format!(
                "expected section {}, found {:?}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(found)
            )));
        }
        let n = header.len()?;
        sections.push(header.take(n)?);
    }
    header.finish()?;

    let mut r = Reader::new(sections[0], "CONF");
    let config = TrainConfig::from_kv(&r.str()?)?;
    r.finish()?;
    config.validate()?;

    let mut r = Reader::new(sections[1], "VOCB");
    let mut names = [Vec::new(), Vec::new()];
    for list in names.iter_mut() {
        let n = r.len()?;
        for _ in 0..n {
            list.push(r.str()?);
        }
    }
    r.finish()?;
    let [entities, relations] = names;
    let vocab = Vocabulary::from_names(entities, relations)
        .map_err(|e| Error::Checkpoint(format!("vocabulary: {e}")))?;

    let mut r = Reader::new(sections[2], "STIM");
    let stim_times: Vec<T> = r.f64s()?;
    r.finish()?;

    let mut r = Reader::new(sections[3], "ENTS");
    let rows = r.len()?;
    let entity_params = (0..rows)
        .map(|_| r.f64s::<T>())
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;

    let mut r = Reader::new(sections[4], "RELS");
    let n_rel = r.len()?;
    let mut rels = Vec::with_capacity(n_rel);
    for _ in 0..n_rel {
        let frozen = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Checkpoint(format!("bad frozen flag {other}"))),
        };
        rels.push(RelationEmbedding {
            vector: r.f64s()?,
            frozen,
        });
    }
    r.finish()?;

    let mut r = Reader::new(sections[5], "OPTM");
    let mut groups = [Vec::new(), Vec::new()];
    for g in groups.iter_mut() {
        let n = r.len()?;
        for _ in 0..n {
            g.push(r.f64s::<T>()?);
        }
    }
    r.finish()?;
    let [opt_entities, opt_relations] = groups;

    let mut r = Reader::new(sections[6], "EPCH");
    let epoch = r.u64()? as usize;
    r.finish()?;

    let mut r = Reader::new(sections[7], "RNGS");
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    r.finish()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);

    let invalid = |e: Error| Error::Checkpoint(format!("inconsistent model state: {e}"));
    let dim = config.dim;
    let entities = if config.kind.is_spiking() {
        let t_max = T::lit(config.t_max);
        let stimulus = StimulusLayer::new(stim_times, T::lit(config.t0), t_max).map_err(invalid)?;
        let params =
            NeuronParams::new(T::lit(config.tau_s), T::lit(config.u_th), t_max).map_err(invalid)?;
        let populations = entity_params
            .into_iter()
            .map(|w| EntityPopulation::new(dim, stimulus.len(), w))
            .collect::<Result<Vec<_>>>()
            .map_err(invalid)?;
        EntityTable::Spiking {
            stimulus,
            params,
            populations,
        }
    } else {
        EntityTable::Free {
            vectors: entity_params,
        }
    };
    if rels.len() != vocab.num_relations() {
        return Err(Error::Checkpoint(format!(
            "{} relation vectors for {} relation names",
            rels.len(),
            vocab.num_relations()
        )));
    }
    let model = Model::new(
        config.kind,
        config.mode,
        dim,
        vocab.num_entities(),
        entities,
        rels,
    )
    .map_err(invalid)?;
    let shapes_match = opt_entities.len() == model.table_len()
        && opt_entities
            .iter()
            .enumerate()
            .all(|(i, a)| a.len() == model.entity_params(i).len())
        && opt_relations.len() == model.num_relations()
        && opt_relations.iter().all(|a| a.len() == dim);
    if !shapes_match {
        return Err(Error::Checkpoint(
            "optimizer state does not match model shape".into(),
        ));
    }
    Ok(Checkpoint {
        state: TrainState {
            config,
            model,
            optimizer: OptimizerState {
                entities: opt_entities,
                relations: opt_relations,
            },
            epoch,
            rng,
        },
        vocab,
    })
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(ckpt);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Human-readable dump of a checkpoint for inspection.
pub fn export_text<T: Scalar>(ckpt: &Checkpoint<T>) -> String {
    use std::fmt::Write as _;
    let state = &ckpt.state;
    let model = &state.model;
    let mut s = String::new();
    let _ = writeln!(s, "# checkpoint version {VERSION}");
    let _ = writeln!(s, "[config]");
    s.push_str(&state.config.to_kv());
    let _ = writeln!(s, "[state]\nepoch={}", state.epoch);
    if let Some((stim, params)) = model.stimulus() {
        let _ = writeln!(s, "[stimulus]");
        for (j, t) in stim.times().iter().enumerate() {
            let _ = writeln!(s, "{j}\t{t:e}");
        }
        let _ = writeln!(s, "t_silent={:e}", params.t_silent);
    }
    let _ = writeln!(s, "[entities]");
    for e in 0..model.num_entities() {
        for slot in crate::graph::Slot::BOTH {
            let row = model.table_index(e, slot);
            if slot == crate::graph::Slot::Object && row == e {
                continue;
            }
            let values: Vec<String> = model
                .embedding(e, slot)
                .iter()
                .map(|x| format!("{x:e}"))
                .collect();
            let tag = match model.mode {
                crate::model::PopulationMode::Shared => String::new(),
                crate::model::PopulationMode::Separate => format!("\t{}", slot.as_str()),
            };
            let _ = writeln!(
                s,
                "{}{tag}\t{}",
                ckpt.vocab.entity_name(e),
                values.join("\t")
            );
        }
    }
    let _ = writeln!(s, "[relations]");
    for (p, r) in model.relations.iter().enumerate() {
        let values: Vec<String> = r.vector.iter().map(|x| format!("{x:e}")).collect();
        let frozen = if r.frozen { "\tfrozen" } else { "" };
        let _ = writeln!(
            s,
            "{}{frozen}\t{}",
            ckpt.vocab.relation_name(p),
            values.join("\t")
        );
    }
    s
}
