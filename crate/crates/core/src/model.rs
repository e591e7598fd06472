//! Key-value memory network over visual knowledge.
//!
//! Pipeline for one question:
//!
//! ```text
//! t  = tanh(W_t · mean(word rows))          question encoding
//! q  = t ⊙ u                                query
//! x  = tanh(W_e Φ(e)) ⊙ tanh(W_u u)         joint embedding of entry e
//! k_i, v_i per block (SR, ST, RT)           triple replication
//! p  = softmax_i(q · A k_i)                 addressing (masked)
//! o  = Σ_i p_i A v_i                        reading
//! q' = q + o_SR + o_ST + o_RT
//! logits = W_o q'
//! ```
//!
//! Gradients are derived by hand in [`backward`] and checked against central
//! finite differences in the tests and by the `gradcheck` command.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed_entry, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kb::KnowledgeGraph;
use crate::numeric::{
    cross_entropy_loss, hadamard, masked_softmax, matvec, softmax, tanh_map, Matrix, SlotMask, Vector,
};
use crate::spotting::SlotAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Query / visual feature width.
    pub d: usize,
    /// Joint embedding width.
    pub d_j: usize,
    /// Knowledge embedding width.
    pub d_e: usize,
    /// Word embedding width.
    pub d_w: usize,
    /// Memory slots per block.
    pub slots: usize,
    /// Answer classes.
    pub answers: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d: 64,
            d_j: 64,
            d_e: 32,
            d_w: 32,
            slots: crate::spotting::DEFAULT_SLOTS,
            answers: 50,
        }
    }
}

/// Which pair of triple fields forms the key; the remaining one is the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    /// key (s, r), value t
    SrKey,
    /// key (s, t), value r
    StKey,
    /// key (r, t), value s
    RtKey,
}

impl BlockKind {
    pub const ALL: [BlockKind; 3] = [BlockKind::SrKey, BlockKind::StKey, BlockKind::RtKey];

    pub fn index(self) -> usize {
        match self {
            BlockKind::SrKey => 0,
            BlockKind::StKey => 1,
            BlockKind::RtKey => 2,
        }
    }

    /// Field positions (0 = s, 1 = r, 2 = t) of the two key parts and the value.
    pub fn layout(self) -> ([usize; 2], usize) {
        match self {
            BlockKind::SrKey => ([0, 1], 2),
            BlockKind::StKey => ([0, 2], 1),
            BlockKind::RtKey => ([1, 2], 0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BlockKind::SrKey => "(s,r)->t",
            BlockKind::StKey => "(s,t)->r",
            BlockKind::RtKey => "(r,t)->s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    Full,
    Bow,
    Blind,
    QOnly,
    NoReplication,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::Full,
        AblationMode::Bow,
        AblationMode::Blind,
        AblationMode::QOnly,
        AblationMode::NoReplication,
    ];

    pub fn blocks(self) -> &'static [BlockKind] {
        match self {
            AblationMode::QOnly => &[],
            AblationMode::NoReplication => &[BlockKind::SrKey],
            _ => &BlockKind::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::Bow => "bow",
            AblationMode::Blind => "blind",
            AblationMode::QOnly => "q-only",
            AblationMode::NoReplication => "no-replication",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

/// Every trainable matrix, in checkpoint order. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub word_table: Matrix,
    pub w_t: Matrix,
    pub w_e: Matrix,
    pub w_u: Matrix,
    /// One per block, indexed by [`BlockKind::index`].
    pub a: [Matrix; 3],
    pub w_o: Matrix,
}

impl ParamSet {
    pub const NAMES: [&'static str; 8] = ["word_table", "W_t", "W_e", "W_u", "A_sr", "A_st", "A_rt", "W_o"];

    pub fn zeros(dims: &ModelDims, vocab: usize) -> Self {
        ParamSet {
            word_table: Matrix::zeros(vocab, dims.d_w),
            w_t: Matrix::zeros(dims.d, dims.d_w),
            w_e: Matrix::zeros(dims.d_j, dims.d_e),
            w_u: Matrix::zeros(dims.d_j, dims.d),
            a: std::array::from_fn(|_| Matrix::zeros(dims.d, dims.d_j)),
            w_o: Matrix::zeros(dims.answers, dims.d),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix> {
        [&self.word_table, &self.w_t, &self.w_e, &self.w_u, &self.a[0], &self.a[1], &self.a[2], &self.w_o].into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        let [a0, a1, a2] = &mut self.a;
        [&mut self.word_table, &mut self.w_t, &mut self.w_e, &mut self.w_u, a0, a1, a2, &mut self.w_o].into_iter()
    }

    pub fn to_vec(&self) -> Vec<Matrix> {
        self.iter().cloned().collect()
    }

    pub fn from_slice(mats: &[Matrix]) -> Result<Self> {
        match mats {
            [word_table, w_t, w_e, w_u, a0, a1, a2, w_o] => Ok(ParamSet {
                word_table: word_table.clone(),
                w_t: w_t.clone(),
                w_e: w_e.clone(),
                w_u: w_u.clone(),
                a: [a0.clone(), a1.clone(), a2.clone()],
                w_o: w_o.clone(),
            }),
            _ => Err(Error::DimensionMismatch {
                op: "param set",
                left: 8,
                right: mats.len(),
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(Matrix::is_finite)
    }
}

/// Trainable state plus the vocabularies that give it meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub words: Vec<String>,
    pub answers: Vec<String>,
    pub tensors: ParamSet,
    word_index: HashMap<String, usize>,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

impl ModelParams {
    /// Scaled-uniform initialization, `±sqrt(6 / (fan_in + fan_out))`.
    pub fn init(dims: ModelDims, words: Vec<String>, answers: Vec<String>, seed: u64) -> Result<Self> {
        if answers.len() != dims.answers {
            return Err(Error::InvalidConfig(format!(
                "{} answers given for {} answer classes",
                answers.len(),
                dims.answers
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = ParamSet {
            word_table: xavier(words.len(), dims.d_w, &mut rng),
            w_t: xavier(dims.d, dims.d_w, &mut rng),
            w_e: xavier(dims.d_j, dims.d_e, &mut rng),
            w_u: xavier(dims.d_j, dims.d, &mut rng),
            a: std::array::from_fn(|_| xavier(dims.d, dims.d_j, &mut rng)),
            w_o: xavier(dims.answers, dims.d, &mut rng),
        };
        Self::from_parts(dims, words, answers, tensors)
    }

    pub fn from_parts(dims: ModelDims, words: Vec<String>, answers: Vec<String>, tensors: ParamSet) -> Result<Self> {
        let expected = ParamSet::zeros(&dims, words.len());
        for ((got, want), name) in tensors.iter().zip(expected.iter()).zip(ParamSet::NAMES) {
            if got.shape() != want.shape() {
                return Err(Error::InvalidConfig(format!(
                    "{name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        if answers.len() != dims.answers {
            return Err(Error::InvalidConfig("answer vocabulary does not match dims".into()));
        }
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(ModelParams {
            dims,
            words,
            answers,
            tensors,
            word_index,
        })
    }

    pub fn word_row(&self, token: &str) -> Option<usize> {
        self.word_index.get(token).copied()
    }

    pub fn with_tensors(&self, tensors: ParamSet) -> Self {
        ModelParams {
            tensors,
            ..self.clone()
        }
    }
}

/// Knowledge sources consulted by the memory: the graph that slot ids refer
/// to, the knowledge embedding table, and an optional BoW table for the
/// bag-of-words ablation.
#[derive(Debug, Clone, Copy)]
pub struct Knowledge<'a> {
    pub graph: &'a KnowledgeGraph,
    pub table: &'a EmbeddingTable,
    pub bow: Option<&'a EmbeddingTable>,
}

impl<'a> Knowledge<'a> {
    fn phi_table(&self, mode: AblationMode) -> Result<&'a EmbeddingTable> {
        match mode {
            AblationMode::Bow => self
                .bow
                .ok_or_else(|| Error::InvalidConfig("bow mode needs a bag-of-words table".into())),
            _ => Ok(self.table),
        }
    }
}

/// One question as the model sees it.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub tokens: &'a [String],
    pub visual: &'a Vector,
    pub slots: &'a SlotAssignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBlock {
    pub kind: BlockKind,
    pub keys: Vec<Vector>,
    pub values: Vec<Vector>,
    pub mask: SlotMask,
}

/// Per-slot embeddings for the three triple fields (s, r, t).
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub phi: [Vector; 3],
    /// `tanh(W_e Φ(e))`
    pub f: [Vector; 3],
    /// `f ⊙ g`, the joint embedding.
    pub x: [Vector; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub block: MemoryBlock,
    pub a_keys: Vec<Vector>,
    pub a_values: Vec<Vector>,
    pub scores: Vector,
    pub p: Vector,
    pub o: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub mode: AblationMode,
    /// Word-table rows of known tokens (with repeats), ascending.
    pub token_rows: Vec<usize>,
    pub n_tokens: usize,
    pub h: Vector,
    pub t: Vector,
    pub u: Vector,
    /// Vector fed to `W_u`: `u`, or `t` in blind mode.
    pub visual_in: Vector,
    pub q: Vector,
    /// `tanh(W_u visual_in)`, shared by every slot.
    pub g: Vector,
    pub slots: Vec<Option<SlotTrace>>,
    pub blocks: Vec<BlockTrace>,
    pub q_prime: Vector,
    pub logits: Vector,
    pub probs: Vector,
    pub loss: Option<f64>,
    pub label: Option<usize>,
}

impl ForwardTrace {
    /// Predicted answer index (lowest index on ties).
    pub fn prediction(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Gradients of the loss for every parameter, plus the visual feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ParamSet,
    pub visual: Vector,
}

fn check_dim(op: &'static str, want: usize, got: usize) -> Result<()> {
    if want != got {
        return Err(Error::DimensionMismatch { op, left: want, right: got });
    }
    Ok(())
}

fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct Encoded {
    rows: Vec<usize>,
    n: usize,
    h: Vector,
    t: Vector,
}

fn encode(tokens: &[String], params: &ModelParams) -> Result<Encoded> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("question tokens"));
    }
    let mut rows: Vec<usize> = tokens.iter().filter_map(|t| params.word_row(t)).collect();
    // Fixed summation order makes the encoding bitwise order-invariant.
    rows.sort_unstable();
    let mut h = Vector::zeros(params.dims.d_w);
    for &r in &rows {
        for (a, b) in h.iter_mut().zip(params.tensors.word_table.row(r)) {
            *a += b;
        }
    }
    let n = tokens.len();
    for a in h.iter_mut() {
        *a /= n as f64;
    }
    let t = tanh_map(&matvec(&params.tensors.w_t, &h)?);
    Ok(Encoded { rows, n, h, t })
}

/// `t = tanh(W_t · mean(word rows))`; unknown tokens count as zero rows.
pub fn encode_question(tokens: &[String], params: &ModelParams) -> Result<Vector> {
    encode(tokens, params).map(|e| e.t)
}

/// `q = t ⊙ u`.
pub fn build_query(t: &Vector, u: &Vector) -> Result<Vector> {
    hadamard(t, u)
}

/// `x = tanh(W_e Φ(e)) ⊙ tanh(W_u u)`.
pub fn joint_embed(entry: &str, u: &Vector, params: &ModelParams, table: &EmbeddingTable) -> Result<Vector> {
    let f = tanh_map(&matvec(&params.tensors.w_e, &embed_entry(entry, table))?);
    let g = tanh_map(&matvec(&params.tensors.w_u, u)?);
    hadamard(&f, &g)
}

fn slot_traces(
    slots: &SlotAssignment,
    g: &Vector,
    params: &ModelParams,
    table: &EmbeddingTable,
    graph: &KnowledgeGraph,
) -> Result<Vec<Option<SlotTrace>>> {
    check_dim("embedding table width", params.dims.d_e, table.dim())?;
    slots
        .slots
        .iter()
        .map(|slot| {
            slot.map(|id| {
                let triple = graph.triple(id);
                let phi = triple.fields().map(|e| embed_entry(e, table));
                let f = phi
                    .iter()
                    .map(|p| matvec(&params.tensors.w_e, p).map(|x| tanh_map(&x)))
                    .collect::<Result<Vec<_>>>()?;
                let x = f.iter().map(|fi| hadamard(fi, g)).collect::<Result<Vec<_>>>()?;
                let f: [Vector; 3] = f.try_into().expect("three fields");
                let x: [Vector; 3] = x.try_into().expect("three fields");
                Ok(SlotTrace { phi, f, x })
            })
            .transpose()
        })
        .collect()
}

fn assemble_block(kind: BlockKind, slots: &[Option<SlotTrace>], d_j: usize) -> Result<MemoryBlock> {
    let ([k0, k1], v) = kind.layout();
    let mut keys = Vec::with_capacity(slots.len());
    let mut values = Vec::with_capacity(slots.len());
    for slot in slots {
        match slot {
            Some(s) => {
                keys.push(s.x[k0].add(&s.x[k1])?);
                values.push(s.x[v].clone());
            }
            None => {
                keys.push(Vector::zeros(d_j));
                values.push(Vector::zeros(d_j));
            }
        }
    }
    Ok(MemoryBlock {
        kind,
        keys,
        values,
        mask: SlotMask::new(slots.iter().map(Option::is_some).collect()),
    })
}

/// Build one replicated memory block: keys are the sum of two joint
/// embeddings, values the third, with the same visual vector for every slot.
pub fn build_memory(
    slots: &SlotAssignment,
    u: &Vector,
    kind: BlockKind,
    params: &ModelParams,
    table: &EmbeddingTable,
    graph: &KnowledgeGraph,
) -> Result<MemoryBlock> {
    let g = tanh_map(&matvec(&params.tensors.w_u, u)?);
    let traces = slot_traces(slots, &g, params, table, graph)?;
    assemble_block(kind, &traces, params.dims.d_j)
}

fn address(q: &Vector, block: &MemoryBlock, a: &Matrix) -> Result<(Vec<Vector>, Vector, Vector)> {
    let m = block.keys.len();
    let mut a_keys = Vec::with_capacity(m);
    let mut scores = Vector::zeros(m);
    for (i, k) in block.keys.iter().enumerate() {
        let ak = matvec(a, k)?;
        if block.mask.is_set(i) {
            scores[i] = q.dot(&ak)?;
        }
        a_keys.push(ak);
    }
    let p = if block.mask.any() {
        masked_softmax(&scores, &block.mask)?
    } else {
        Vector::zeros(m)
    };
    Ok((a_keys, scores, p))
}

/// `p_i = softmax(q · A k_i)` over unmasked slots; an all-masked block gets
/// `p = 0` and contributes nothing.
pub fn address_keys(q: &Vector, block: &MemoryBlock, a: &Matrix) -> Result<Vector> {
    address(q, block, a).map(|(_, _, p)| p)
}

fn read(p: &Vector, a_values: &[Vector], dim: usize) -> Result<Vector> {
    let mut o = Vector::zeros(dim);
    for (pi, av) in p.iter().zip(a_values) {
        if *pi != 0.0 {
            o.axpy(*pi, av)?;
        }
    }
    Ok(o)
}

/// `o = Σ_i p_i A v_i`.
pub fn read_values(p: &Vector, block: &MemoryBlock, a: &Matrix) -> Result<Vector> {
    check_dim("read_values", block.values.len(), p.dim())?;
    let a_values = block
        .values
        .iter()
        .zip(p.iter())
        .map(|(v, &pi)| if pi != 0.0 { matvec(a, v) } else { Ok(Vector::zeros(a.rows())) })
        .collect::<Result<Vec<_>>>()?;
    read(p, &a_values, a.rows())
}

/// `q' = q + o_SR + o_ST + o_RT`, summed in that order.
pub fn update_query(q: &Vector, outputs: &[Vector]) -> Result<Vector> {
    let mut out = q.clone();
    for o in outputs {
        check_dim("update_query", out.dim(), o.dim())?;
        for (a, b) in out.iter_mut().zip(o.iter()) {
            *a += b;
        }
    }
    Ok(out)
}

/// `argmax softmax(W_o q')`, lowest index on ties.
pub fn predict(q_prime: &Vector, w_o: &Matrix) -> Result<(usize, Vector)> {
    let probs = softmax(&matvec(w_o, q_prime)?);
    Ok((argmax(&probs), probs))
}

pub fn forward(
    params: &ModelParams,
    query: &Query,
    knowledge: &Knowledge,
    mode: AblationMode,
    label: Option<usize>,
) -> Result<ForwardTrace> {
    let dims = &params.dims;
    check_dim("visual feature", dims.d, query.visual.dim())?;
    check_dim("slot count", dims.slots, query.slots.len())?;
    let enc = encode(query.tokens, params)?;
    let u = query.visual.clone();
    let (q, visual_in) = match mode {
        AblationMode::Blind => (enc.t.clone(), enc.t.clone()),
        _ => (build_query(&enc.t, &u)?, u.clone()),
    };

    let (g, slots, blocks) = if mode.blocks().is_empty() {
        (Vector::zeros(dims.d_j), Vec::new(), Vec::new())
    } else {
        let g = tanh_map(&matvec(&params.tensors.w_u, &visual_in)?);
        let table = knowledge.phi_table(mode)?;
        let slots = slot_traces(query.slots, &g, params, table, knowledge.graph)?;
        let mut blocks = Vec::with_capacity(mode.blocks().len());
        for &kind in mode.blocks() {
            let block = assemble_block(kind, &slots, dims.d_j)?;
            let a = &params.tensors.a[kind.index()];
            let (a_keys, scores, p) = address(&q, &block, a)?;
            let a_values = block
                .values
                .iter()
                .zip(block.mask.flags())
                .map(|(v, &m)| if m { matvec(a, v) } else { Ok(Vector::zeros(dims.d)) })
                .collect::<Result<Vec<_>>>()?;
            let o = read(&p, &a_values, dims.d)?;
            blocks.push(BlockTrace {
                block,
                a_keys,
                a_values,
                scores,
                p,
                o,
            });
        }
        (g, slots, blocks)
    };

    let outputs: Vec<Vector> = blocks.iter().map(|b| b.o.clone()).collect();
    let q_prime = update_query(&q, &outputs)?;
    let logits = matvec(&params.tensors.w_o, &q_prime)?;
    let probs = softmax(&logits);
    let loss = label.map(|l| cross_entropy_loss(&logits, l)).transpose()?;
    Ok(ForwardTrace {
        mode,
        token_rows: enc.rows,
        n_tokens: enc.n,
        h: enc.h,
        t: enc.t,
        u,
        visual_in,
        q,
        g,
        slots,
        blocks,
        q_prime,
        logits,
        probs,
        loss,
        label,
    })
}

fn one_minus_sq(x: &Vector) -> Vector {
    x.iter().map(|v| 1.0 - v * v).collect()
}

/// Exact gradients of the cross-entropy loss for every parameter. The
/// knowledge embedding table is treated as constant.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, label: usize) -> Result<Gradients> {
    let dims = &params.dims;
    let p = &params.tensors;
    let mut grads = ParamSet::zeros(dims, params.words.len());

    let mut dlogits = trace.probs.clone();
    if label >= dlogits.dim() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: dlogits.dim(),
        });
    }
    dlogits[label] -= 1.0;
    grads.w_o.add_outer(1.0, &dlogits, &trace.q_prime)?;
    let dq_prime = p.w_o.matvec_transposed(&dlogits)?;

    // q' = q + Σ o, so each o and q receive dq' directly.
    let mut dq = dq_prime.clone();
    let mut dx: Vec<[Vector; 3]> = trace
        .slots
        .iter()
        .map(|_| std::array::from_fn(|_| Vector::zeros(dims.d_j)))
        .collect();

    for bt in &trace.blocks {
        if !bt.block.mask.any() {
            continue;
        }
        let kind = bt.block.kind;
        let a = &p.a[kind.index()];
        let ga = &mut grads.a[kind.index()];
        let mask = &bt.block.mask;

        // Reading: o = Σ p_i A v_i.
        let mut v_bar = Vector::zeros(dims.d_j);
        let mut dp = Vector::zeros(mask.len());
        for i in 0..mask.len() {
            if mask.is_set(i) {
                v_bar.axpy(bt.p[i], &bt.block.values[i])?;
                dp[i] = dq_prime.dot(&bt.a_values[i])?;
            }
        }
        ga.add_outer(1.0, &dq_prime, &v_bar)?;
        let at_do = a.matvec_transposed(&dq_prime)?;

        // Softmax: dz_i = p_i (dp_i - Σ_j p_j dp_j).
        let mean_dp: f64 = bt.p.iter().zip(dp.iter()).map(|(pi, di)| pi * di).sum();
        let dz: Vector = bt.p.iter().zip(dp.iter()).map(|(pi, di)| pi * (di - mean_dp)).collect();

        // Addressing: z_i = q · A k_i.
        let mut k_bar = Vector::zeros(dims.d_j);
        for i in 0..mask.len() {
            if mask.is_set(i) {
                k_bar.axpy(dz[i], &bt.block.keys[i])?;
                dq.axpy(dz[i], &bt.a_keys[i])?;
            }
        }
        ga.add_outer(1.0, &trace.q, &k_bar)?;
        let at_q = a.matvec_transposed(&trace.q)?;

        let ([k0, k1], v) = kind.layout();
        for i in 0..mask.len() {
            if mask.is_set(i) {
                dx[i][k0].axpy(dz[i], &at_q)?;
                dx[i][k1].axpy(dz[i], &at_q)?;
                dx[i][v].axpy(bt.p[i], &at_do)?;
            }
        }
    }

    // Joint embedding: x = f ⊙ g with f = tanh(W_e Φ), g = tanh(W_u visual_in).
    let mut dg = Vector::zeros(dims.d_j);
    for (slot, dxs) in trace.slots.iter().zip(&dx) {
        let Some(st) = slot else { continue };
        for ((dx, f), phi) in dxs.iter().zip(&st.f).zip(&st.phi) {
            let df = hadamard(dx, &trace.g)?;
            dg = dg.add(&hadamard(dx, f)?)?;
            let dpre = hadamard(&df, &one_minus_sq(f))?;
            grads.w_e.add_outer(1.0, &dpre, phi)?;
        }
    }
    let mut dvisual_in = Vector::zeros(trace.visual_in.dim());
    if !trace.blocks.is_empty() {
        let dpre_g = hadamard(&dg, &one_minus_sq(&trace.g))?;
        grads.w_u.add_outer(1.0, &dpre_g, &trace.visual_in)?;
        dvisual_in = p.w_u.matvec_transposed(&dpre_g)?;
    }

    let (dt, du) = match trace.mode {
        AblationMode::Blind => (dq.add(&dvisual_in)?, Vector::zeros(trace.u.dim())),
        _ => (
            hadamard(&dq, &trace.u)?,
            hadamard(&dq, &trace.t)?.add(&dvisual_in)?,
        ),
    };

    // Question encoder: t = tanh(W_t h), h = Σ rows / n.
    let da = hadamard(&dt, &one_minus_sq(&trace.t))?;
    grads.w_t.add_outer(1.0, &da, &trace.h)?;
    let dh = p.w_t.matvec_transposed(&da)?;
    let scale = 1.0 / trace.n_tokens as f64;
    for &r in &trace.token_rows {
        for (gw, d) in grads.word_table.row_mut(r).iter_mut().zip(dh.iter()) {
            *gw += scale * d;
        }
    }

    Ok(Gradients {
        params: grads,
        visual: du,
    })
}
