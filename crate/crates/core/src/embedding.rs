//! Knowledge-entry embeddings: the map from an entry phrase to a real vector
//! used by the joint visual-knowledge embedding.
//!
//! Two sources are supported. A bag-of-words table averages per-token vectors
//! (pretrained word2vec/GloVe-style text files, or deterministic hashed
//! vectors). A TransE table is trained here on the knowledge graph with a
//! margin ranking loss and filtered negative sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::KnowledgeGraph;
use crate::numeric::Vector;

/// Knowledge embedding width used when nothing else is configured.
pub const DEFAULT_TRANSE_DIM: usize = 300;

/// Marker prefixed to relation rows in an embedding file.
const RELATION_MARKER: char = '@';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Bow,
    Transe,
}

#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    kind: EmbeddingKind,
    entities: BTreeMap<String, Vector>,
    relations: BTreeMap<String, Vector>,
    /// Token vectors for the bag-of-words path.
    words: BTreeMap<String, Vector>,
    lookups: AtomicUsize,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        EmbeddingTable {
            dim: self.dim,
            kind: self.kind,
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            words: self.words.clone(),
            lookups: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.kind == other.kind
            && self.entities == other.entities
            && self.relations == other.relations
            && self.words == other.words
    }
}

impl EmbeddingTable {
    pub fn transe(
        dim: usize,
        entities: BTreeMap<String, Vector>,
        relations: BTreeMap<String, Vector>,
    ) -> Result<Self> {
        check_table_dims(dim, entities.values().chain(relations.values()))?;
        Ok(EmbeddingTable {
            dim,
            kind: EmbeddingKind::Transe,
            entities,
            relations,
            words: BTreeMap::new(),
            lookups: AtomicUsize::new(0),
        })
    }

    pub fn bow(dim: usize, words: BTreeMap<String, Vector>) -> Result<Self> {
        check_table_dims(dim, words.values())?;
        Ok(EmbeddingTable {
            dim,
            kind: EmbeddingKind::Bow,
            entities: BTreeMap::new(),
            relations: BTreeMap::new(),
            words,
            lookups: AtomicUsize::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn entities(&self) -> &BTreeMap<String, Vector> {
        &self.entities
    }

    pub fn relations(&self) -> &BTreeMap<String, Vector> {
        &self.relations
    }

    pub fn words(&self) -> &BTreeMap<String, Vector> {
        &self.words
    }

    pub fn entity(&self, phrase: &str) -> Option<&Vector> {
        self.entities.get(phrase)
    }

    pub fn relation(&self, phrase: &str) -> Option<&Vector> {
        self.relations.get(phrase)
    }

    /// Number of entry lookups served so far.
    pub fn lookup_count(&self) -> usize {
        self.lookups.load(Ordering::Relaxed)
    }
}

fn check_table_dims<'a>(dim: usize, vectors: impl Iterator<Item = &'a Vector>) -> Result<()> {
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                op: "embedding table",
                left: dim,
                right: v.dim(),
            });
        }
    }
    Ok(())
}

/// Mean of per-token vectors; tokens missing from `word_table` add zero but
/// still count in the denominator.
fn token_mean(entry: &str, word_table: &BTreeMap<String, Vector>, dim: usize) -> Vector {
    let mut acc = Vector::zeros(dim);
    let mut n = 0usize;
    for tok in entry.split_whitespace() {
        n += 1;
        if let Some(v) = word_table.get(tok) {
            for (a, b) in acc.iter_mut().zip(v.iter()) {
                *a += b;
            }
        }
    }
    if n > 0 {
        for a in acc.iter_mut() {
            *a /= n as f64;
        }
    }
    acc
}

pub fn bow_embed(entry: &str, word_table: &BTreeMap<String, Vector>, dim: usize) -> Result<Vector> {
    if entry.split_whitespace().next().is_none() {
        return Err(Error::EmptyInput("bag-of-words entry"));
    }
    Ok(token_mean(entry, word_table, dim))
}

/// The entry-to-vector map. TransE tables return stored vectors (relations
/// first), falling back to the token mean over entity vectors, which is zero
/// for a fully unknown entry. BoW tables average word vectors.
pub fn embed_entry(entry: &str, table: &EmbeddingTable) -> Vector {
    table.lookups.fetch_add(1, Ordering::Relaxed);
    match table.kind {
        EmbeddingKind::Transe => table
            .relations
            .get(entry)
            .or_else(|| table.entities.get(entry))
            .cloned()
            .unwrap_or_else(|| token_mean(entry, &table.entities, table.dim)),
        EmbeddingKind::Bow => token_mean(entry, &table.words, table.dim),
    }
}

fn distance(s: &Vector, r: &Vector, t: &Vector) -> f64 {
    s.iter()
        .zip(r.iter())
        .zip(t.iter())
        .map(|((a, b), c)| {
            let d = a + b - c;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `-‖s + r - t‖₂`; higher means more plausible.
pub fn transe_score(s: &str, r: &str, t: &str, table: &EmbeddingTable) -> Result<f64> {
    fn get<'a>(map: &'a BTreeMap<String, Vector>, k: &str) -> Result<&'a Vector> {
        map.get(k).ok_or_else(|| Error::MissingEntry(k.to_string()))
    }
    Ok(-distance(
        get(&table.entities, s)?,
        get(&table.relations, r)?,
        get(&table.entities, t)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransEConfig {
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig {
            dim: DEFAULT_TRANSE_DIM,
            margin: 1.0,
            lr: 0.01,
            epochs: 1000,
            negatives_per_positive: 1,
            seed: 42,
        }
    }
}

impl TransEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig("transe dim must be >= 2".into()));
        }
        if self.margin.is_nan() || self.margin <= 0.0 || self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::InvalidConfig("transe margin and lr must be positive".into()));
        }
        Ok(())
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Index form of a graph used by the TransE trainer.
struct IndexedTriples {
    entities: Vec<String>,
    relations: Vec<String>,
    triples: Vec<(usize, usize, usize)>,
    known: HashSet<(usize, usize, usize)>,
}

impl IndexedTriples {
    fn new(graph: &KnowledgeGraph) -> Self {
        let es = graph.entry_set();
        let entities: Vec<String> = es.entities.iter().cloned().collect();
        let relations: Vec<String> = es.relations.iter().cloned().collect();
        let eidx: HashMap<&str, usize> = entities.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
        let ridx: HashMap<&str, usize> = relations.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let triples: Vec<(usize, usize, usize)> = graph
            .triples()
            .iter()
            .map(|t| (eidx[t.subject.as_str()], ridx[t.relation.as_str()], eidx[t.target.as_str()]))
            .collect();
        let known = triples.iter().copied().collect();
        IndexedTriples {
            entities,
            relations,
            triples,
            known,
        }
    }
}

/// Train TransE and return the table plus the mean margin loss of each epoch
/// (evaluated on the negatives drawn during that epoch).
pub fn train_transe_logged(graph: &KnowledgeGraph, config: &TransEConfig) -> Result<(EmbeddingTable, Vec<f64>)> {
    train_transe_observed(graph, config, |_, _| {})
}

/// [`train_transe_logged`] that also hands the entity vectors to `observe`
/// after initialization (epoch 0) and after every epoch.
pub fn train_transe_observed<F>(
    graph: &KnowledgeGraph,
    config: &TransEConfig,
    mut observe: F,
) -> Result<(EmbeddingTable, Vec<f64>)>
where
    F: FnMut(usize, &[Vec<f64>]),
{
    config.validate()?;
    let idx = IndexedTriples::new(graph);
    let n_ent = idx.entities.len();
    if n_ent < 2 {
        return Err(Error::InvalidConfig(format!(
            "TransE needs at least 2 entities to corrupt triples, graph has {n_ent}"
        )));
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 6.0 / (dim as f64).sqrt();
    let mut ent: Vec<Vec<f64>> = (0..n_ent)
        .map(|_| (0..dim).map(|_| rng.gen_range(-bound..bound)).collect())
        .collect();
    let mut rel: Vec<Vec<f64>> = (0..idx.relations.len())
        .map(|_| (0..dim).map(|_| rng.gen_range(-bound..bound)).collect())
        .collect();
    for e in ent.iter_mut() {
        normalize(e);
    }
    observe(0, &ent);

    let mut order: Vec<usize> = (0..idx.triples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let lr = config.lr;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for &ti in &order {
            let (s, r, t) = idx.triples[ti];
            for _ in 0..config.negatives_per_positive {
                let Some((cs, ct)) = corrupt(&idx, (s, r, t), &mut rng) else {
                    continue;
                };
                let pos: Vec<f64> = (0..dim).map(|k| ent[s][k] + rel[r][k] - ent[t][k]).collect();
                let neg: Vec<f64> = (0..dim).map(|k| ent[cs][k] + rel[r][k] - ent[ct][k]).collect();
                let dp = pos.iter().map(|x| x * x).sum::<f64>().sqrt();
                let dn = neg.iter().map(|x| x * x).sum::<f64>().sqrt();
                let loss = (config.margin + dp - dn).max(0.0);
                total += loss;
                count += 1;
                if loss <= 0.0 {
                    continue;
                }
                // d‖x‖/dx = x/‖x‖, zero subgradient at the origin.
                let gp: Vec<f64> = pos.iter().map(|x| if dp > 0.0 { x / dp } else { 0.0 }).collect();
                let gn: Vec<f64> = neg.iter().map(|x| if dn > 0.0 { x / dn } else { 0.0 }).collect();
                for k in 0..dim {
                    ent[s][k] -= lr * gp[k];
                    ent[t][k] += lr * gp[k];
                    rel[r][k] -= lr * (gp[k] - gn[k]);
                    ent[cs][k] += lr * gn[k];
                    ent[ct][k] -= lr * gn[k];
                }
                for e in [s, t, cs, ct] {
                    normalize(&mut ent[e]);
                }
            }
        }
        epoch_losses.push(if count > 0 { total / count as f64 } else { 0.0 });
        observe(epoch, &ent);
    }

    let entities = idx
        .entities
        .into_iter()
        .zip(ent)
        .map(|(k, v)| (k, Vector::new(v)))
        .collect();
    let relations = idx
        .relations
        .into_iter()
        .zip(rel)
        .map(|(k, v)| (k, Vector::new(v)))
        .collect();
    Ok((EmbeddingTable::transe(dim, entities, relations)?, epoch_losses))
}

pub fn train_transe(graph: &KnowledgeGraph, config: &TransEConfig) -> Result<EmbeddingTable> {
    train_transe_logged(graph, config).map(|(t, _)| t)
}

/// Replace head or tail (chosen uniformly) with a random entity until the
/// result is not a stored triple. Gives up after a bounded number of draws,
/// which only happens when nearly every corruption is itself a fact.
fn corrupt(idx: &IndexedTriples, (s, r, t): (usize, usize, usize), rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
    let n = idx.entities.len();
    for _ in 0..(64 * n).max(1024) {
        let e = rng.gen_range(0..n);
        let cand = if rng.gen_bool(0.5) { (e, r, t) } else { (s, r, e) };
        if !idx.known.contains(&cand) {
            return Some((cand.0, cand.2));
        }
    }
    None
}

/// Mean margin loss over every stored triple, pairing each with its
/// head-corrupted and tail-corrupted variants against every entity
/// (filtered). Deterministic; used for monitoring.
pub fn margin_loss(graph: &KnowledgeGraph, table: &EmbeddingTable, margin: f64) -> Result<f64> {
    let entities: Vec<&String> = table.entities.keys().collect();
    let known: HashSet<(&str, &str, &str)> = graph
        .triples()
        .iter()
        .map(|t| (t.subject.as_str(), t.relation.as_str(), t.target.as_str()))
        .collect();
    let mut total = 0.0;
    let mut n = 0usize;
    for t in graph.triples() {
        let pos = -transe_score(&t.subject, &t.relation, &t.target, table)?;
        for e in &entities {
            for (cs, ct) in [(e.as_str(), t.target.as_str()), (t.subject.as_str(), e.as_str())] {
                if known.contains(&(cs, t.relation.as_str(), ct)) {
                    continue;
                }
                let neg = -transe_score(cs, &t.relation, ct, table)?;
                total += (margin + pos - neg).max(0.0);
                n += 1;
            }
        }
    }
    Ok(if n > 0 { total / n as f64 } else { 0.0 })
}

/// Filtered rank of `t` among all entities as the tail of `(s, r, ?)`.
/// Other true tails of `(s, r)` are skipped; 1 is best and ties do not
/// push `t` down.
pub fn rank_tail(s: &str, r: &str, t: &str, table: &EmbeddingTable, graph: &KnowledgeGraph) -> Result<usize> {
    let true_tails: BTreeSet<&str> = graph
        .triples()
        .iter()
        .filter(|x| x.subject == s && x.relation == r)
        .map(|x| x.target.as_str())
        .collect();
    let target = transe_score(s, r, t, table)?;
    let mut rank = 1;
    for e in table.entities.keys() {
        if e == t || true_tails.contains(e.as_str()) {
            continue;
        }
        if transe_score(s, r, e, table)? > target {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Mean of [`rank_tail`] over every stored triple.
pub fn mean_filtered_rank(table: &EmbeddingTable, graph: &KnowledgeGraph) -> Result<f64> {
    let triples = graph.triples();
    if triples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0usize;
    for t in triples {
        total += rank_tail(&t.subject, &t.relation, &t.target, table, graph)?;
    }
    Ok(total as f64 / triples.len() as f64)
}

// --- hashed word vectors ----------------------------------------------------

pub(crate) fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic pseudo-random vector for a token, uniform in [-1, 1].
/// Depends only on the token and the width, so tables built from different
/// corpora agree on shared tokens.
pub fn hashed_word_vector(token: &str, dim: usize) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token));
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// BoW table over every token in the graph's entries, using hashed vectors.
pub fn hashed_bow_table(graph: &KnowledgeGraph, dim: usize) -> Result<EmbeddingTable> {
    let words = graph
        .entry_set()
        .combined
        .iter()
        .flat_map(|e| e.split_whitespace())
        .map(|tok| (tok.to_string(), hashed_word_vector(tok, dim)))
        .collect();
    EmbeddingTable::bow(dim, words)
}

// --- file format --------------------------------------------------------------

fn phrase_to_field(p: &str) -> String {
    p.split_whitespace().collect::<Vec<_>>().join("_")
}

fn field_to_phrase(f: &str) -> String {
    f.split('_').filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ")
}

/// Text format: header `<count> <dim>`, then `<phrase_with_underscores> v1 .. v_dim`
/// per row with 17 significant digits. Relation rows carry a leading `@`;
/// BoW tables write one row per word.
pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let count = table.entities.len() + table.relations.len() + table.words.len();
    writeln!(out, "{} {}", count, table.dim)?;
    let rows = table
        .entities
        .iter()
        .chain(table.words.iter())
        .map(|(k, v)| (phrase_to_field(k), v))
        .chain(
            table
                .relations
                .iter()
                .map(|(k, v)| (format!("{RELATION_MARKER}{}", phrase_to_field(k)), v)),
        );
    for (name, v) in rows {
        write!(out, "{name}")?;
        for x in v.iter() {
            write!(out, " {x:.16e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Load an embedding file as `kind`. For BoW every row is a word vector (a
/// plain word2vec/GloVe text file works); for TransE `@`-prefixed rows are
/// relations and the rest entities.
pub fn load_embeddings(path: impl AsRef<Path>, kind: EmbeddingKind) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let malformed = |line: usize, reason: String| Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| malformed(1, "missing header".into()))?;
    let mut parts = header.split_whitespace();
    let (count, dim) = match (
        parts.next().and_then(|x| x.parse::<usize>().ok()),
        parts.next().and_then(|x| x.parse::<usize>().ok()),
        parts.next(),
    ) {
        (Some(c), Some(d), None) => (c, d),
        _ => return Err(malformed(1, "header must be `<count> <dim>`".into())),
    };
    let mut entities = BTreeMap::new();
    let mut relations = BTreeMap::new();
    let mut seen = 0usize;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let name = fields.next().unwrap_or_default();
        let values: Vec<f64> = fields
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| malformed(lineno, format!("bad number: {e}")))?;
        if values.len() != dim {
            return Err(malformed(lineno, format!("expected {dim} values, found {}", values.len())));
        }
        seen += 1;
        match (kind, name.strip_prefix(RELATION_MARKER)) {
            (EmbeddingKind::Transe, Some(rel)) => {
                relations.insert(field_to_phrase(rel), Vector::new(values));
            }
            _ => {
                entities.insert(field_to_phrase(name), Vector::new(values));
            }
        }
    }
    if seen != count {
        return Err(malformed(1, format!("header declares {count} rows, file has {seen}")));
    }
    match kind {
        EmbeddingKind::Transe => EmbeddingTable::transe(dim, entities, relations),
        EmbeddingKind::Bow => EmbeddingTable::bow(dim, entities),
    }
}
