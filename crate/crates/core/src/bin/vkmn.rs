use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use vkmn::checkpoint::{load_checkpoint, save_checkpoint};
use vkmn::embedding::{
    hashed_bow_table, load_embeddings, mean_filtered_rank, save_embeddings, train_transe_logged, EmbeddingKind,
    EmbeddingTable, TransEConfig,
};
use vkmn::kb::{
    canonicalize_relation, dedup_triples, extract_triples_from_qa, filter_by_frequency, load_kb, load_qa_pairs,
    load_triples, normalize_phrase, normalize_tokens, save_triples, KnowledgeGraph, Triple,
};
use vkmn::model::{forward, AblationMode, Knowledge, ModelDims, Query};
use vkmn::numeric::Vector;
use vkmn::spotting::spot;
use vkmn::synth::{make_synthetic_task, SynthConfig};
use vkmn::train::{
    ablate, evaluate_examples, gradcheck_dims, gradient_check, load_dataset, prepare_example, render_table,
    save_dataset, train, EvalReport, TrainConfig,
};
use vkmn::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "vkmn", version, about = "Visual knowledge memory network for VQA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract, normalize, canonicalize and frequency-filter triples into a KB file.
    BuildKb(BuildKbArgs),
    /// Train TransE embeddings on a KB.
    TrainTranse(TrainTranseArgs),
    /// Show entry matches, spotted triples and memory slots for a question.
    Spot(SpotArgs),
    /// Train the memory network and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Answer questions from stdin, one per line; a blank line exits.
    Query(QueryArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate every ablation mode.
    Ablate(AblateArgs),
    /// Write a seeded synthetic task (KB files and datasets).
    MakeSynth(MakeSynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Full,
    Bow,
    Blind,
    QOnly,
    NoReplication,
}

impl From<Mode> for AblationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full => AblationMode::Full,
            Mode::Bow => AblationMode::Bow,
            Mode::Blind => AblationMode::Blind,
            Mode::QOnly => AblationMode::QOnly,
            Mode::NoReplication => AblationMode::NoReplication,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct Output {
    /// Emit machine-readable JSON instead of tables.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug, Serialize)]
struct BuildKbArgs {
    /// QA pairs, one JSON object per line: {"question": [tokens], "answer": "..."}.
    #[arg(long)]
    qa: Option<PathBuf>,
    /// Curated triples, tab-separated subject/relation/target.
    #[arg(long)]
    triples: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Drop triples containing a phrase seen fewer times than this.
    #[arg(long, default_value_t = 3)]
    min_count: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct TrainTranseArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long, default_value_t = 1)]
    negatives: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct SpotArgs {
    #[arg(long)]
    kb: PathBuf,
    /// Question text.
    #[arg(long)]
    question: String,
    /// Optional caption text used as an extra spotting source.
    #[arg(long)]
    caption: Option<String>,
    #[arg(long, default_value_t = 8)]
    slots: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct KnowledgeArgs {
    #[arg(long)]
    kb: PathBuf,
    /// TransE embedding file.
    #[arg(long)]
    embeddings: PathBuf,
    /// Word vectors for bow mode (text format); hashed vectors when absent.
    #[arg(long)]
    word_vectors: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct HyperArgs {
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    #[arg(long, default_value_t = 8)]
    slots: usize,
    /// Query / visual feature width.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 64)]
    joint_dim: usize,
    #[arg(long, default_value_t = 32)]
    word_dim: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Answer vocabulary size.
    #[arg(long, default_value_t = 50)]
    answers: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    knowledge: KnowledgeArgs,
    #[arg(long)]
    dataset: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    knowledge: KnowledgeArgs,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct QueryArgs {
    #[command(flatten)]
    knowledge: KnowledgeArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// File holding the visual feature as a JSON array.
    #[arg(long)]
    feature: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    /// Single mode to check; every mode when absent.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct AblateArgs {
    #[command(flatten)]
    knowledge: KnowledgeArgs,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    test_dataset: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct MakeSynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    entities: usize,
    #[arg(long, default_value_t = 6)]
    relations: usize,
    /// Visual feature width.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    confusable_pairs: usize,
    #[command(flatten)]
    output: Output,
}

fn echo_config(name: &str, args: &impl Serialize, json_mode: bool) -> Result<Value> {
    let cfg = json!({ "command": name, "args": args });
    if !json_mode {
        println!("config {}", serde_json::to_string(&cfg)?);
    }
    Ok(cfg)
}

fn emit(json_mode: bool, config: Value, result: Value, text: impl FnOnce() -> String) -> Result<()> {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&json!({ "config": config, "result": result }))?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Attach the offending path to bare I/O errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

struct LoadedKnowledge {
    graph: KnowledgeGraph,
    table: EmbeddingTable,
    bow: EmbeddingTable,
}

impl LoadedKnowledge {
    fn load(args: &KnowledgeArgs) -> Result<Self> {
        let graph = at(&args.kb, load_kb(&args.kb))?;
        let table = at(&args.embeddings, load_embeddings(&args.embeddings, EmbeddingKind::Transe))?;
        let bow = match &args.word_vectors {
            Some(p) => at(p, load_embeddings(p, EmbeddingKind::Bow))?,
            None => hashed_bow_table(&graph, table.dim())?,
        };
        Ok(LoadedKnowledge { graph, table, bow })
    }

    fn knowledge(&self) -> Knowledge<'_> {
        Knowledge {
            graph: &self.graph,
            table: &self.table,
            bow: Some(&self.bow),
        }
    }
}

fn train_config(h: &HyperArgs, d_e: usize) -> TrainConfig {
    TrainConfig {
        lr: h.lr,
        epochs: h.epochs,
        seed: h.seed,
        slots: h.slots,
        dims: ModelDims {
            d: h.dim,
            d_j: h.joint_dim,
            d_e,
            d_w: h.word_dim,
            slots: h.slots,
            answers: h.answers,
        },
        mode: h.mode.into(),
        answer_vocab_size: h.answers,
    }
}

fn cmd_build_kb(a: &BuildKbArgs) -> Result<()> {
    let cfg = echo_config("build-kb", a, a.output.json)?;
    if a.qa.is_none() && a.triples.is_none() {
        return Err(Error::InvalidConfig("build-kb needs --qa and/or --triples".into()));
    }
    let curated = a.triples.as_ref().map(|p| at(p, load_triples(p))).transpose()?.unwrap_or_default();
    let mut extracted = Vec::new();
    if let Some(p) = &a.qa {
        for pair in at(p, load_qa_pairs(p))? {
            extracted.extend(extract_triples_from_qa(&pair.question, &pair.answer));
        }
    }
    let n_extracted = extracted.len();
    let n_curated = curated.len();
    let lemmatized: Vec<Triple> = curated
        .iter()
        .chain(&extracted)
        .map(|t| Triple::new(normalize_phrase(&t.subject), normalize_phrase(&t.relation), normalize_phrase(&t.target)))
        .collect();
    // Relations of the curated triples are the canonical set; without any,
    // extracted relations stay as they are.
    let canon: BTreeSet<String> = lemmatized[..n_curated].iter().map(|t| t.relation.clone()).collect();
    let canonical: Vec<Triple> = lemmatized
        .iter()
        .map(|t| {
            let r = if canon.is_empty() {
                t.relation.clone()
            } else {
                canonicalize_relation(&t.relation, canon.iter().map(String::as_str))
            };
            Triple::new(t.subject.clone(), r, t.target.clone())
        })
        .collect();
    let n_dedup = dedup_triples(&canonical).len();
    let filtered = filter_by_frequency(&canonical, a.min_count);
    at(&a.out, save_triples(&filtered, &a.out))?;
    let stats = json!({
        "curated": n_curated,
        "extracted": n_extracted,
        "combined": canonical.len(),
        "deduplicated": n_dedup,
        "output": filtered.len(),
    });
    emit(a.output.json, cfg, stats, || {
        format!(
            "curated {n_curated}\nextracted {n_extracted}\ncombined {}\ndeduplicated {n_dedup}\noutput {}\nwrote {}\n",
            canonical.len(),
            filtered.len(),
            a.out.display()
        )
    })
}

fn cmd_train_transe(a: &TrainTranseArgs) -> Result<()> {
    let cfg = echo_config("train-transe", a, a.output.json)?;
    let graph = at(&a.kb, load_kb(&a.kb))?;
    let config = TransEConfig {
        dim: a.dim,
        margin: a.margin,
        lr: a.lr,
        epochs: a.epochs,
        negatives_per_positive: a.negatives,
        seed: a.seed,
    };
    let (init, _) = train_transe_logged(&graph, &TransEConfig { epochs: 0, ..config.clone() })?;
    let (table, losses) = train_transe_logged(&graph, &config)?;
    at(&a.out, save_embeddings(&table, &a.out))?;
    let rank_before = mean_filtered_rank(&init, &graph)?;
    let rank_after = mean_filtered_rank(&table, &graph)?;
    let result = json!({
        "triples": graph.len(),
        "entities": table.entities().len(),
        "relations": table.relations().len(),
        "first_epoch_loss": losses.first(),
        "last_epoch_loss": losses.last(),
        "mean_filtered_rank_init": rank_before,
        "mean_filtered_rank_final": rank_after,
    });
    emit(a.output.json, cfg, result, || {
        format!(
            "triples {}\nloss first {:?} last {:?}\nmean filtered tail rank {rank_before:.3} -> {rank_after:.3}\nwrote {}\n",
            graph.len(),
            losses.first(),
            losses.last(),
            a.out.display()
        )
    })
}

fn cmd_spot(a: &SpotArgs) -> Result<()> {
    let cfg = echo_config("spot", a, a.output.json)?;
    let graph = at(&a.kb, load_kb(&a.kb))?;
    let q = normalize_tokens(&tokens(&a.question));
    let c = a.caption.as_deref().map(|c| normalize_tokens(&tokens(c))).unwrap_or_default();
    let (spotted, slots) = spot(&[q.as_slice(), c.as_slice()], &graph, a.slots);
    let show = |id: usize| graph.triple(id).to_string();
    let result = json!({
        "matched_entries": spotted.matched_entries,
        "core": spotted.core.iter().map(|&i| json!({"id": i, "triple": show(i)})).collect::<Vec<_>>(),
        "expanded": spotted.expanded,
        "slots": slots.slots,
    });
    emit(a.output.json, cfg, result, || {
        let mut s = format!(
            "matched {}\n",
            spotted.matched_entries.iter().cloned().collect::<Vec<_>>().join(", ")
        );
        s += &format!("core {} expanded {}\n", spotted.core.len(), spotted.expanded.len());
        for (i, slot) in slots.slots.iter().enumerate() {
            match slot {
                Some(id) => s += &format!("slot {i}: #{id} {}\n", show(*id)),
                None => s += &format!("slot {i}: -\n"),
            }
        }
        s
    })
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = echo_config("train", a, a.output.json)?;
    let lk = LoadedKnowledge::load(&a.knowledge)?;
    let data = at(&a.dataset, load_dataset(&a.dataset))?;
    let config = train_config(&a.hyper, lk.table.dim());
    let outcome = train(&data, &lk.knowledge(), &config)?;
    at(&a.checkpoint, save_checkpoint(&outcome.params, &a.checkpoint))?;
    let result = json!({
        "examples": data.len(),
        "answers": outcome.params.answers.len(),
        "words": outcome.params.words.len(),
        "loss_curve": outcome.loss_curve,
    });
    emit(a.output.json, cfg, result, || {
        let mut s = String::new();
        for (i, l) in outcome.loss_curve.iter().enumerate() {
            s += &format!("epoch {:>4} loss {l:.6}\n", i + 1);
        }
        s + &format!("wrote {}\n", a.checkpoint.display())
    })
}

fn report_text(rows: &[(String, &EvalReport)]) -> String {
    render_table(rows)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = echo_config("eval", a, a.output.json)?;
    let lk = LoadedKnowledge::load(&a.knowledge)?;
    let params = at(&a.checkpoint, load_checkpoint(&a.checkpoint))?;
    let data = at(&a.dataset, load_dataset(&a.dataset))?;
    let mode: AblationMode = a.mode.into();
    let report = evaluate_examples(&data, &params, &lk.knowledge(), mode, a.threads)?;
    emit(a.output.json, cfg, serde_json::to_value(&report)?, || {
        report_text(&[(mode.to_string(), &report)])
    })
}

fn read_feature(path: &Path) -> Result<Vector> {
    let text = fs::read_to_string(path)?;
    let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| Error::MalformedLine {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    Ok(Vector::new(values))
}

fn cmd_query(a: &QueryArgs) -> Result<()> {
    let cfg = echo_config("query", a, a.output.json)?;
    let lk = LoadedKnowledge::load(&a.knowledge)?;
    let params = at(&a.checkpoint, load_checkpoint(&a.checkpoint))?;
    let feature = at(&a.feature, read_feature(&a.feature))?;
    if feature.dim() != params.dims.d {
        return Err(Error::DimensionMismatch {
            op: "query feature",
            left: params.dims.d,
            right: feature.dim(),
        });
    }
    let mode: AblationMode = a.mode.into();
    let knowledge = lk.knowledge();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            break;
        }
        let ex = vkmn::train::VqaExample::new(tokens(&line), feature.clone(), "");
        if ex.question.is_empty() {
            continue;
        }
        let prepared = prepare_example(&ex, &lk.graph, &params.answers, params.dims.slots);
        let query = Query {
            tokens: &prepared.tokens,
            visual: &prepared.visual,
            slots: &prepared.slots,
        };
        let trace = forward(&params, &query, &knowledge, mode, None)?;
        let best = trace.prediction();
        let mut blocks = Vec::new();
        for bt in &trace.blocks {
            let mut ranked: Vec<(usize, f64)> = prepared
                .slots
                .slots
                .iter()
                .enumerate()
                .filter_map(|(i, s)| s.map(|id| (id, bt.p[i])))
                .collect();
            ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            ranked.truncate(5);
            blocks.push((bt.block.kind.label(), ranked));
        }
        if a.output.json {
            let value = json!({
                "config": cfg,
                "question": line,
                "answer": params.answers[best],
                "probability": trace.probs[best],
                "blocks": blocks.iter().map(|(k, r)| json!({
                    "block": k,
                    "top": r.iter().map(|(id, p)| json!({"triple": lk.graph.triple(*id).to_string(), "p": p})).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            });
            writeln!(stdout, "{}", serde_json::to_string(&value)?)?;
        } else {
            writeln!(stdout, "answer: {} (p={:.4})", params.answers[best], trace.probs[best])?;
            if prepared.slots.filled() == 0 {
                writeln!(stdout, "no supporting facts")?;
            } else {
                for (kind, ranked) in &blocks {
                    writeln!(stdout, "block {kind}")?;
                    for (id, p) in ranked {
                        writeln!(stdout, "  {p:.4}  {}", lk.graph.triple(*id))?;
                    }
                }
            }
        }
        stdout.flush()?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let cfg = echo_config("gradcheck", a, a.output.json)?;
    let modes: Vec<AblationMode> = match a.mode {
        Some(m) => vec![m.into()],
        None => AblationMode::ALL.to_vec(),
    };
    let dims = gradcheck_dims();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &mode in &modes {
        let mut mode_worst = 0.0f64;
        for seed in a.seed..a.seed + a.seeds {
            mode_worst = mode_worst.max(gradient_check(&dims, mode, seed)?);
        }
        worst = worst.max(mode_worst);
        rows.push((mode, mode_worst));
    }
    let pass = worst <= a.tolerance;
    let result = json!({
        "dims": dims,
        "modes": rows.iter().map(|(m, e)| json!({"mode": m, "max_relative_error": e})).collect::<Vec<_>>(),
        "max_relative_error": worst,
        "pass": pass,
    });
    emit(a.output.json, cfg, result, || {
        let mut s = String::new();
        for (m, e) in &rows {
            s += &format!("{:<16} max rel. error {e:.3e}\n", m.to_string());
        }
        s + &format!("max rel. error {worst:.3e} {}\n", if pass { "PASS" } else { "FAIL" })
    })?;
    if pass {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "gradient check failed: {worst:.3e} > {:.1e}",
            a.tolerance
        )))
    }
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = echo_config("ablate", a, a.output.json)?;
    let lk = LoadedKnowledge::load(&a.knowledge)?;
    let train_set = at(&a.dataset, load_dataset(&a.dataset))?;
    let test_set = at(&a.test_dataset, load_dataset(&a.test_dataset))?;
    let config = train_config(&a.hyper, lk.table.dim());
    let reports = ablate(&train_set, &test_set, &lk.knowledge(), &config, a.threads)?;
    let rows: Vec<(String, &EvalReport)> = reports.iter().map(|r| (r.mode.to_string(), r)).collect();
    emit(a.output.json, cfg, serde_json::to_value(&reports)?, || report_text(&rows))
}

fn cmd_make_synth(a: &MakeSynthArgs) -> Result<()> {
    let cfg = echo_config("make-synth", a, a.output.json)?;
    let task = make_synthetic_task(&SynthConfig {
        seed: a.seed,
        n_entities: a.entities,
        n_relations: a.relations,
        feature_dim: a.dim,
        confusable_pairs: a.confusable_pairs,
    })?;
    fs::create_dir_all(&a.out)?;
    save_triples(&task.kb, a.out.join("kb.tsv"))?;
    save_triples(&task.base, a.out.join("kb_base.tsv"))?;
    save_dataset(&task.train, a.out.join("train.jsonl"))?;
    save_dataset(&task.test, a.out.join("test.jsonl"))?;
    let result = json!({
        "triples": task.kb.len(),
        "base_triples": task.base.len(),
        "train": task.train.len(),
        "test": task.test.len(),
        "confusable_pairs": task.confusable,
    });
    emit(a.output.json, cfg, result, || {
        format!(
            "triples {} (base {})\ntrain {} test {}\nwrote kb.tsv kb_base.tsv train.jsonl test.jsonl to {}\n",
            task.kb.len(),
            task.base.len(),
            task.train.len(),
            task.test.len(),
            a.out.display()
        )
    })
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::BuildKb(a) => cmd_build_kb(a),
        Command::TrainTranse(a) => cmd_train_transe(a),
        Command::Spot(a) => cmd_spot(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Query(a) => cmd_query(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::MakeSynth(a) => cmd_make_synth(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
