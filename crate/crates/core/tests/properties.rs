use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vkmn::embedding::{hashed_bow_table, EmbeddingTable};
use vkmn::kb::{KnowledgeGraph, Triple};
use vkmn::model::{forward, joint_embed, predict, update_query, AblationMode, Knowledge, ModelDims, ModelParams, Query};
use vkmn::numeric::{Matrix, Vector};
use vkmn::spotting::SlotAssignment;

struct Instance {
    graph: KnowledgeGraph,
    table: EmbeddingTable,
    bow: EmbeddingTable,
    params: ModelParams,
    tokens: Vec<String>,
    u: Vector,
    slots: SlotAssignment,
}

impl Instance {
    fn knowledge(&self) -> Knowledge<'_> {
        Knowledge {
            graph: &self.graph,
            table: &self.table,
            bow: Some(&self.bow),
        }
    }

    fn query(&self) -> Query<'_> {
        Query {
            tokens: &self.tokens,
            visual: &self.u,
            slots: &self.slots,
        }
    }
}

fn instance(seed: u64, filled: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims {
        d: 6,
        d_j: 5,
        d_e: 4,
        d_w: 3,
        slots: 5,
        answers: 4,
    };
    let n = rng.gen_range(1..6);
    let triples: Vec<Triple> = (0..n)
        .map(|i| Triple::new(format!("e{}", rng.gen_range(0..5)), format!("r{i}"), format!("e{} x", rng.gen_range(0..5))))
        .collect();
    let graph = KnowledgeGraph::build(&triples);
    let mut vec4 = |_: &String| -> Vector { (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let es = graph.entry_set().clone();
    let table = EmbeddingTable::transe(
        4,
        es.entities.iter().filter(|e| !e.contains(' ')).map(|e| (e.clone(), vec4(e))).collect(),
        es.relations.iter().map(|r| (r.clone(), vec4(r))).collect(),
    )
    .unwrap();
    let bow = hashed_bow_table(&graph, 4).unwrap();
    let words: Vec<String> = (0..5).map(|i| format!("w{i}")).collect();
    let answers: Vec<String> = (0..4).map(|i| format!("a{i}")).collect();
    let params = ModelParams::init(dims, words, answers, seed).unwrap();
    let tokens: Vec<String> = (0..rng.gen_range(1..7)).map(|_| format!("w{}", rng.gen_range(0..7))).collect();
    let u: Vector = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let ids: Vec<usize> = (0..graph.len().min(filled)).collect();
    Instance {
        slots: SlotAssignment::from_ids(&ids, 5),
        graph,
        table,
        bow,
        params,
        tokens,
        u,
    }
}

fn bits(v: &Vector) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn attention_mass_is_zero_or_one(seed in any::<u64>(), filled in 0usize..6) {
        let inst = instance(seed, filled);
        for mode in AblationMode::ALL {
            let tr = forward(&inst.params, &inst.query(), &inst.knowledge(), mode, Some(1)).unwrap();
            for b in &tr.blocks {
                let mass: f64 = b.p.iter().sum();
                let want = if b.block.mask.any() { 1.0 } else { 0.0 };
                prop_assert!((mass - want).abs() <= 1e-12);
            }
            let loss = tr.loss.unwrap();
            prop_assert!(loss.is_finite() && loss >= 0.0);
        }
    }

    #[test]
    fn query_update_is_exact_sum(seed in any::<u64>(), filled in 0usize..6) {
        let inst = instance(seed, filled);
        for mode in AblationMode::ALL {
            let tr = forward(&inst.params, &inst.query(), &inst.knowledge(), mode, None).unwrap();
            let outs: Vec<Vector> = tr.blocks.iter().map(|b| b.o.clone()).collect();
            prop_assert_eq!(bits(&update_query(&tr.q, &outs).unwrap()), bits(&tr.q_prime));
        }
    }

    #[test]
    fn blind_mode_ignores_visual_feature(seed in any::<u64>(), filled in 0usize..6, shift in -10.0f64..10.0) {
        let inst = instance(seed, filled);
        let base = forward(&inst.params, &inst.query(), &inst.knowledge(), AblationMode::Blind, None).unwrap();
        let u: Vector = inst.u.iter().enumerate().map(|(i, x)| x + shift * (i as f64 + 1.0)).collect();
        let q = Query { visual: &u, ..inst.query() };
        let moved = forward(&inst.params, &q, &inst.knowledge(), AblationMode::Blind, None).unwrap();
        prop_assert_eq!(bits(&base.logits), bits(&moved.logits));
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), filled in 0usize..6) {
        let inst = instance(seed, filled);
        for mode in AblationMode::ALL {
            let a = forward(&inst.params, &inst.query(), &inst.knowledge(), mode, None).unwrap();
            let b = forward(&inst.params, &inst.query(), &inst.knowledge(), mode, None).unwrap();
            prop_assert_eq!(bits(&a.logits), bits(&b.logits));
        }
    }

    #[test]
    fn joint_embedding_is_bounded(seed in any::<u64>(), entry in "e[0-4]( x)?|r[0-5]|zzz") {
        let inst = instance(seed, 0);
        let x = joint_embed(&entry, &inst.u, &inst.params, &inst.table).unwrap();
        prop_assert!(x.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn argmax_ignores_logit_shift(
        rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 2..6),
        q in proptest::collection::vec(-1.0f64..1.0, 3),
        c in -10.0f64..10.0,
    ) {
        let k = rows.len();
        let w = Matrix::from_vec(k, 3, rows.concat()).unwrap();
        let (idx, _) = predict(&Vector::new(q.clone()), &w).unwrap();
        // An extra unit input with weight c adds c to every logit.
        let mut shifted = Vec::new();
        for r in &rows {
            shifted.extend_from_slice(r);
            shifted.push(c);
        }
        let w2 = Matrix::from_vec(k, 4, shifted).unwrap();
        let mut q2 = q.clone();
        q2.push(1.0);
        let logits: Vec<f64> = rows.iter().map(|r| r.iter().zip(&q).map(|(a, b)| a * b).sum()).collect();
        let mut sorted = logits.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|p| p[1] - p[0] > 1e-9));
        let (idx2, _) = predict(&Vector::new(q2), &w2).unwrap();
        prop_assert_eq!(idx, idx2);
    }
}
