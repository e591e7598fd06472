//! Training loop, per-answer-type evaluation, the ablation driver and the
//! gradient-check harness.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{hashed_bow_table, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kb::{normalize_tokens, KnowledgeGraph, Triple};
use crate::model::{backward, forward, AblationMode, Knowledge, ModelDims, ModelParams, ParamSet, Query};
use crate::numeric::{finite_diff_grad, max_relative_error, sgd_step, Vector, DEFAULT_FD_EPS};
use crate::spotting::{spot, SlotAssignment, DEFAULT_SLOTS};

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Yesno,
    Number,
    Other,
}

/// `yes`/`no` -> yes/no; an integer or a number word up to twenty -> number;
/// anything else -> other.
pub fn classify_answer_type(answer: &str) -> AnswerType {
    let a = answer.trim().to_lowercase();
    if a == "yes" || a == "no" {
        AnswerType::Yesno
    } else if a.parse::<i64>().is_ok() || NUMBER_WORDS.contains(&a.as_str()) {
        AnswerType::Number
    } else {
        AnswerType::Other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaExample {
    pub question: Vec<String>,
    pub feature: Vector,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_type: Option<AnswerType>,
    /// Extra text (e.g. a generated caption) used only for spotting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<Vec<String>>,
}

impl VqaExample {
    pub fn new(question: Vec<String>, feature: Vector, answer: impl Into<String>) -> Self {
        VqaExample {
            question,
            feature,
            answer: answer.into(),
            answer_type: None,
            caption: None,
        }
    }

    pub fn resolved_type(&self) -> AnswerType {
        self.answer_type.unwrap_or_else(|| classify_answer_type(&self.answer))
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<VqaExample>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: VqaExample = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn save_dataset(examples: &[VqaExample], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// The `k` most frequent answers, frequency descending then lexicographic.
/// Position in the returned list is the class index.
pub fn build_answer_vocab(examples: &[VqaExample], k: usize) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ex in examples {
        *counts.entry(ex.answer.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(a, _)| a.to_string()).collect()
}

/// Sorted set of normalized question tokens.
pub fn build_word_vocab(examples: &[VqaExample]) -> Vec<String> {
    examples
        .iter()
        .flat_map(|ex| normalize_tokens(&ex.question))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// An example with tokens normalized, memory slots chosen and the answer
/// mapped to a class (None when out of vocabulary).
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    pub tokens: Vec<String>,
    pub visual: Vector,
    pub slots: SlotAssignment,
    pub label: Option<usize>,
    pub answer: String,
    pub answer_type: AnswerType,
}

impl PreparedExample {
    pub fn query(&self) -> Query<'_> {
        Query {
            tokens: &self.tokens,
            visual: &self.visual,
            slots: &self.slots,
        }
    }
}

pub fn prepare_example(ex: &VqaExample, graph: &KnowledgeGraph, answers: &[String], m: usize) -> PreparedExample {
    let tokens = normalize_tokens(&ex.question);
    let caption = ex.caption.as_deref().map(normalize_tokens).unwrap_or_default();
    let (_, slots) = spot(&[tokens.as_slice(), caption.as_slice()], graph, m);
    PreparedExample {
        slots,
        visual: ex.feature.clone(),
        label: answers.iter().position(|a| *a == ex.answer),
        answer: ex.answer.clone(),
        answer_type: ex.resolved_type(),
        tokens,
    }
}

pub fn prepare_examples(
    examples: &[VqaExample],
    graph: &KnowledgeGraph,
    answers: &[String],
    m: usize,
) -> Vec<PreparedExample> {
    examples.iter().map(|ex| prepare_example(ex, graph, answers, m)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Memory slots per block.
    pub slots: usize,
    /// Model widths; the answer count is taken from the built vocabulary.
    pub dims: ModelDims,
    pub mode: AblationMode,
    pub answer_vocab_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            epochs: 50,
            seed: 7,
            slots: DEFAULT_SLOTS,
            dims: ModelDims::default(),
            mode: AblationMode::Full,
            answer_vocab_size: 50,
        }
    }
}

impl TrainConfig {
    /// The reference configuration for the synthetic task.
    pub fn reference() -> Self {
        TrainConfig {
            lr: 0.05,
            epochs: 500,
            seed: 7,
            slots: DEFAULT_SLOTS,
            dims: ModelDims {
                d: 32,
                d_j: 32,
                d_e: 32,
                d_w: 32,
                slots: DEFAULT_SLOTS,
                answers: 50,
            },
            mode: AblationMode::Full,
            answer_vocab_size: 50,
        }
    }

    /// A zero learning rate is accepted (it leaves parameters untouched).
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.answer_vocab_size < 1 {
            return Err(Error::InvalidConfig("answer vocabulary size must be >= 1".into()));
        }
        if self.slots < 1 {
            return Err(Error::InvalidConfig("slot count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Freshly initialized parameters sized for `train_set` under `config`.
pub fn init_params(train_set: &[VqaExample], config: &TrainConfig) -> Result<ModelParams> {
    let answers = build_answer_vocab(train_set, config.answer_vocab_size);
    let dims = ModelDims {
        answers: answers.len(),
        slots: config.slots,
        ..config.dims
    };
    ModelParams::init(dims, build_word_vocab(train_set), answers, config.seed)
}

pub fn train(train_set: &[VqaExample], knowledge: &Knowledge, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let mut params = init_params(train_set, config)?;
    let prepared = prepare_examples(train_set, knowledge.graph, &params.answers, config.slots);
    let loss_curve = train_prepared(&mut params, &prepared, knowledge, config)?;
    Ok(TrainOutcome { params, loss_curve })
}

/// Per-example SGD over prepared examples in a seeded shuffled order.
/// Out-of-vocabulary examples are skipped.
pub fn train_prepared(
    params: &mut ModelParams,
    data: &[PreparedExample],
    knowledge: &Knowledge,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let usable: Vec<&PreparedExample> = data.iter().filter(|ex| ex.label.is_some()).collect();
    if usable.is_empty() {
        return Err(Error::EmptyInput("training set (after vocabulary filtering)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        // Summed in example order so the mean does not depend on the shuffle.
        let mut losses = vec![0.0; usable.len()];
        for &i in &order {
            let ex = usable[i];
            let label = ex.label.expect("filtered");
            let trace = forward(params, &ex.query(), knowledge, config.mode, Some(label))?;
            losses[i] = trace.loss.expect("label given");
            let grads = backward(params, &trace, label)?;
            sgd_step(params.tensors.iter_mut(), grads.params.iter(), config.lr)?;
        }
        let mean = losses.iter().sum::<f64>() / usable.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {}", epoch + 1)));
        }
        if !params.tensors.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {}", epoch + 1)));
        }
        curve.push(mean);
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub total: usize,
    pub correct: usize,
}

impl Bucket {
    /// `None` for an empty bucket.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: AblationMode,
    pub accuracy_all: Option<f64>,
    pub accuracy_yesno: Option<f64>,
    pub accuracy_number: Option<f64>,
    pub accuracy_other: Option<f64>,
    pub all: Bucket,
    pub yesno: Bucket,
    pub number: Bucket,
    pub other: Bucket,
    /// Gold answers outside the answer vocabulary (all counted wrong).
    pub out_of_vocab: usize,
    #[serde(default)]
    pub loss_curve: Vec<f64>,
}

impl EvalReport {
    pub fn from_outcomes(mode: AblationMode, outcomes: &[(AnswerType, bool)], out_of_vocab: usize) -> Self {
        let mut buckets: BTreeMap<AnswerType, Bucket> = BTreeMap::new();
        for &(ty, ok) in outcomes {
            let b = buckets.entry(ty).or_default();
            b.total += 1;
            b.correct += usize::from(ok);
        }
        let get = |t| buckets.get(&t).copied().unwrap_or_default();
        let (yesno, number, other) = (get(AnswerType::Yesno), get(AnswerType::Number), get(AnswerType::Other));
        let all = Bucket {
            total: outcomes.len(),
            correct: outcomes.iter().filter(|(_, ok)| *ok).count(),
        };
        EvalReport {
            mode,
            accuracy_all: all.accuracy(),
            accuracy_yesno: yesno.accuracy(),
            accuracy_number: number.accuracy(),
            accuracy_other: other.accuracy(),
            all,
            yesno,
            number,
            other,
            out_of_vocab,
            loss_curve: Vec::new(),
        }
    }

    /// Overall accuracy rebuilt from the per-type counts.
    pub fn recombined_accuracy(&self) -> Option<f64> {
        let total = self.yesno.total + self.number.total + self.other.total;
        let correct = self.yesno.correct + self.number.correct + self.other.correct;
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

/// Greedy prediction per example; a gold answer outside the vocabulary is a
/// miss. Results do not depend on `threads`.
pub fn evaluate(
    data: &[PreparedExample],
    params: &ModelParams,
    knowledge: &Knowledge,
    mode: AblationMode,
    threads: usize,
) -> Result<EvalReport> {
    let judge = |ex: &PreparedExample| -> Result<(AnswerType, bool)> {
        let trace = forward(params, &ex.query(), knowledge, mode, None)?;
        let predicted = &params.answers[trace.prediction()];
        Ok((ex.answer_type, ex.label.is_some() && *predicted == ex.answer))
    };
    let outcomes: Vec<(AnswerType, bool)> = if threads <= 1 {
        data.iter().map(judge).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| data.par_iter().map(judge).collect::<Result<_>>())?
    };
    let oov = data.iter().filter(|ex| ex.label.is_none()).count();
    Ok(EvalReport::from_outcomes(mode, &outcomes, oov))
}

/// Prepare `examples` against the model's vocabulary and slot count, then evaluate.
pub fn evaluate_examples(
    examples: &[VqaExample],
    params: &ModelParams,
    knowledge: &Knowledge,
    mode: AblationMode,
    threads: usize,
) -> Result<EvalReport> {
    let data = prepare_examples(examples, knowledge.graph, &params.answers, params.dims.slots);
    evaluate(&data, params, knowledge, mode, threads)
}

fn pct(a: Option<f64>) -> String {
    a.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// Plain-text accuracy table with columns All / Y/N / Num / Other (percent).
pub fn render_table(rows: &[(String, &EvalReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}", "", "All", "Y/N", "Num", "Other");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
            label,
            pct(r.accuracy_all),
            pct(r.accuracy_yesno),
            pct(r.accuracy_number),
            pct(r.accuracy_other)
        );
    }
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
        "count",
        rows.first().map_or(0, |r| r.1.all.total),
        rows.first().map_or(0, |r| r.1.yesno.total),
        rows.first().map_or(0, |r| r.1.number.total),
        rows.first().map_or(0, |r| r.1.other.total),
    );
    out
}

/// Table row order for ablations: the four reduced models, then the full one.
pub const ABLATION_ORDER: [AblationMode; 5] = [
    AblationMode::Bow,
    AblationMode::Blind,
    AblationMode::QOnly,
    AblationMode::NoReplication,
    AblationMode::Full,
];

/// Train and evaluate one model per ablation mode with otherwise identical
/// settings.
pub fn ablate(
    train_set: &[VqaExample],
    test_set: &[VqaExample],
    knowledge: &Knowledge,
    config: &TrainConfig,
    threads: usize,
) -> Result<Vec<EvalReport>> {
    ABLATION_ORDER
        .iter()
        .map(|&mode| {
            let cfg = TrainConfig { mode, ..config.clone() };
            let outcome = train(train_set, knowledge, &cfg)?;
            let mut report = evaluate_examples(test_set, &outcome.params, knowledge, mode, threads)?;
            report.loss_curve = outcome.loss_curve;
            Ok(report)
        })
        .collect()
}

/// Dimensions used by the gradient check unless configured otherwise.
pub fn gradcheck_dims() -> ModelDims {
    ModelDims {
        d: 8,
        d_j: 6,
        d_e: 5,
        d_w: 4,
        slots: 4,
        answers: 3,
    }
}

/// Compare [`backward`] with central finite differences over every parameter
/// entry on one random example with a three-triple memory. Returns the max
/// relative error.
pub fn gradient_check(dims: &ModelDims, mode: AblationMode, seed: u64) -> Result<f64> {
    let widths = [dims.d, dims.d_j, dims.d_e, dims.d_w, dims.slots, dims.answers];
    if widths.iter().any(|&w| w == 0 || w > 16) {
        return Err(Error::InvalidConfig("gradient check dims must be within 1..=16".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples = [
        Triple::new("ent0", "rel0", "ent3"),
        Triple::new("ent1", "rel1", "ent4"),
        Triple::new("ent0 ent4", "rel2", "ent2"),
    ];
    let graph = KnowledgeGraph::build(&triples);
    let es = graph.entry_set();
    let mut rand_vec = |n: usize| -> Vector { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let entities = es
        .entities
        .iter()
        .filter(|e| !e.contains(' '))
        .map(|e| (e.clone(), rand_vec(dims.d_e)))
        .collect();
    let relations = es.relations.iter().map(|r| (r.clone(), rand_vec(dims.d_e))).collect();
    let table = EmbeddingTable::transe(dims.d_e, entities, relations)?;
    let bow = hashed_bow_table(&graph, dims.d_e)?;
    let knowledge = Knowledge {
        graph: &graph,
        table: &table,
        bow: Some(&bow),
    };

    let words: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
    let answers: Vec<String> = (0..dims.answers).map(|i| format!("a{i}")).collect();
    let params = ModelParams::init(*dims, words, answers, seed.wrapping_add(1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let mut tokens: Vec<String> = (0..5).map(|_| format!("w{}", rng.gen_range(0..6))).collect();
    tokens.push("unknown".into());
    let visual: Vector = (0..dims.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let filled: Vec<usize> = (0..triples.len().min(dims.slots)).collect();
    let slots = SlotAssignment::from_ids(&filled, dims.slots);
    let label = rng.gen_range(0..dims.answers);
    let query = Query {
        tokens: &tokens,
        visual: &visual,
        slots: &slots,
    };

    let trace = forward(&params, &query, &knowledge, mode, Some(label))?;
    let grads = backward(&params, &trace, label)?;
    let numeric = finite_diff_grad(
        |mats| {
            let p = params.with_tensors(ParamSet::from_slice(mats).expect("same layout"));
            forward(&p, &query, &knowledge, mode, Some(label))
                .and_then(|t| t.loss.ok_or(Error::EmptyInput("label")))
                .unwrap_or(f64::NAN)
        },
        &params.tensors.to_vec(),
        DEFAULT_FD_EPS,
    );
    let err = max_relative_error(&grads.params.to_vec(), &numeric);
    if !err.is_finite() {
        return Err(Error::NonFinite("gradient check".into()));
    }
    Ok(err)
}
