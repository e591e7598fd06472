//! Seeded synthetic VQA task over a random triple graph.
//!
//! Every base triple ⟨s, r, t⟩ yields three questions, one per missing field:
//!
//! ```text
//! what does s r      -> t
//! what r t           -> s
//! what links s and t -> r
//! ```
//!
//! Any two fields of a base triple identify it uniquely, so each question
//! spots its source triple. The visual feature is a pseudo-random vector per
//! triple.
//!
//! Confusable pairs are built from two base entities `x`, `y` and four filler
//! phrases `a b c d` (absent from any embedding table, so their embedding is
//! zero):
//!
//! ```text
//! T1 = ⟨"x y", a, b⟩   question "what x y a c" -> "x y"
//! T2 = ⟨c, "y x", d⟩   question "what y x a c" -> "y x"
//! ```
//!
//! Both questions share one visual feature and the same multiset of tokens.
//! "x y" and "y x" embed identically (token mean), so the single (s,r)-keyed
//! block sees identical keys and values for the pair; only the (s,t) and
//! (r,t) blocks tell them apart.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a;
use crate::error::{Error, Result};
use crate::kb::{Triple, TripleId};
use crate::numeric::Vector;
use crate::train::VqaExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_entities: usize,
    pub n_relations: usize,
    /// Visual feature width (the model's `d`).
    pub feature_dim: usize,
    pub confusable_pairs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_entities: 24,
            n_relations: 6,
            feature_dim: 32,
            confusable_pairs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    /// Base triples followed by the confusable-pair triples.
    pub kb: Vec<Triple>,
    /// Triples generated from entities and relations only.
    pub base: Vec<Triple>,
    pub train: Vec<VqaExample>,
    pub test: Vec<VqaExample>,
    /// Source triple id (into `kb`) of each training / test example.
    pub train_sources: Vec<TripleId>,
    pub test_sources: Vec<TripleId>,
    /// Index pairs into `train` forming confusable pairs.
    pub confusable: Vec<(usize, usize)>,
}

pub fn entity_name(i: usize) -> String {
    format!("ent{i}")
}

pub fn relation_name(j: usize) -> String {
    format!("rel{j}")
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn feature(seed: u64, stream: u64, dim: usize) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn is_test(seed: u64, id: TripleId) -> bool {
    fnv1a(&format!("{seed}:{id}")).is_multiple_of(5)
}

fn base_questions(t: &Triple) -> [(Vec<String>, &str); 3] {
    [
        (words(&format!("what does {} {}", t.subject, t.relation)), t.target.as_str()),
        (words(&format!("what {} {}", t.relation, t.target)), t.subject.as_str()),
        (words(&format!("what links {} and {}", t.subject, t.target)), t.relation.as_str()),
    ]
}

pub fn make_synthetic_task(config: &SynthConfig) -> Result<SyntheticTask> {
    if config.n_entities < 4 {
        return Err(Error::InvalidConfig("synthetic task needs at least 4 entities".into()));
    }
    if config.n_relations < 1 || config.feature_dim < 1 {
        return Err(Error::InvalidConfig("synthetic task needs relations and a feature width".into()));
    }
    if 2 * config.confusable_pairs > config.n_entities {
        return Err(Error::InvalidConfig("too many confusable pairs for the entity count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let target = 2 * config.n_entities;
    // Unordered field pairs already used; keeps every two-field question unambiguous.
    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    let key = |a: &str, b: &str| {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    };
    let mut base = Vec::new();
    let attempts = 100 * target;
    for _ in 0..attempts {
        if base.len() == target {
            break;
        }
        let s = rng.gen_range(0..config.n_entities);
        let t = rng.gen_range(0..config.n_entities);
        let r = rng.gen_range(0..config.n_relations);
        if s == t {
            continue;
        }
        let (s, r, t) = (entity_name(s), relation_name(r), entity_name(t));
        let ks = [key(&s, &r), key(&r, &t), key(&s, &t)];
        if ks.iter().any(|k| pairs.contains(k)) {
            continue;
        }
        pairs.extend(ks);
        base.push(Triple::new(s, r, t));
    }

    let mut kb = base.clone();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut train_sources = Vec::new();
    let mut test_sources = Vec::new();
    for (id, t) in base.iter().enumerate() {
        let u = feature(config.seed, id as u64 + 1, config.feature_dim);
        let held_out = is_test(config.seed, id);
        for (question, answer) in base_questions(t) {
            let ex = VqaExample::new(question, u.clone(), answer);
            if held_out {
                test.push(ex);
                test_sources.push(id);
            } else {
                train.push(ex);
                train_sources.push(id);
            }
        }
    }

    let mut confusable = Vec::new();
    for i in 0..config.confusable_pairs {
        let (x, y) = (entity_name(2 * i), entity_name(2 * i + 1));
        let [a, b, c, d] = ["a", "b", "c", "d"].map(|s| format!("pad{i}{s}"));
        let xy = format!("{x} {y}");
        let yx = format!("{y} {x}");
        let u = feature(config.seed, (1 << 32) + i as u64, config.feature_dim);
        let id1 = kb.len();
        kb.push(Triple::new(xy.clone(), a.clone(), b));
        let id2 = kb.len();
        kb.push(Triple::new(c.clone(), yx.clone(), d));
        confusable.push((train.len(), train.len() + 1));
        train.push(VqaExample::new(words(&format!("what {x} {y} {a} {c}")), u.clone(), xy));
        train_sources.push(id1);
        train.push(VqaExample::new(words(&format!("what {y} {x} {a} {c}")), u, yx));
        train_sources.push(id2);
    }

    Ok(SyntheticTask {
        kb,
        base,
        train,
        test,
        train_sources,
        test_sources,
        confusable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::KnowledgeGraph;
    use crate::train::prepare_example;

    #[test]
    fn fixed_seed_gives_identical_task() {
        let c = SynthConfig::default();
        assert_eq!(make_synthetic_task(&c).unwrap(), make_synthetic_task(&c).unwrap());
        let other = make_synthetic_task(&SynthConfig { seed: 8, ..c.clone() }).unwrap();
        assert_ne!(other.base, make_synthetic_task(&c).unwrap().base);
    }

    #[test]
    fn every_question_spots_its_source() {
        let task = make_synthetic_task(&SynthConfig::default()).unwrap();
        let graph = KnowledgeGraph::build(&task.kb);
        assert_eq!(graph.len(), task.kb.len());
        let all = task.train.iter().zip(&task.train_sources).chain(task.test.iter().zip(&task.test_sources));
        for (ex, &src) in all {
            let p = prepare_example(ex, &graph, &[], 8);
            assert!(p.slots.slots.contains(&Some(src)), "{:?} misses {src}", ex.question);
        }
    }

    #[test]
    fn split_is_disjoint_by_triple() {
        let task = make_synthetic_task(&SynthConfig::default()).unwrap();
        let tr: BTreeSet<_> = task.train_sources.iter().collect();
        assert!(task.test_sources.iter().all(|s| !tr.contains(s)));
        assert!(!task.test.is_empty());
        assert_eq!(task.train.len() + task.test.len(), 3 * task.base.len() + 2 * 4);
    }

    #[test]
    fn confusable_pairs_share_tokens_and_feature() {
        let task = make_synthetic_task(&SynthConfig::default()).unwrap();
        for &(i, j) in &task.confusable {
            let (a, b) = (&task.train[i], &task.train[j]);
            let mut ta = a.question.clone();
            let mut tb = b.question.clone();
            ta.sort();
            tb.sort();
            assert_eq!(ta, tb);
            assert_eq!(a.feature, b.feature);
            assert_ne!(a.answer, b.answer);
        }
    }

    #[test]
    fn rejects_tiny_graphs() {
        let c = SynthConfig {
            n_entities: 3,
            ..SynthConfig::default()
        };
        assert!(make_synthetic_task(&c).is_err());
    }
}
