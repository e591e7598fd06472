//! Knowledge spotting: match question phrases against the entry set, keep
//! triples anchored by at least two matched entries, expand one hop, and
//! fill a fixed number of memory slots.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::kb::{EntrySet, KnowledgeGraph, TripleId};
use crate::numeric::SlotMask;

/// Longest phrase, in tokens, that entry matching will try.
pub const MAX_PHRASE_TOKENS: usize = 4;

/// Number of memory slots used unless configured otherwise.
pub const DEFAULT_SLOTS: usize = 8;

/// Minimum number of distinct matched entries a triple needs to be spotted.
pub const MIN_MATCHED_ENTRIES: usize = 2;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpottedSet {
    pub matched_entries: BTreeSet<String>,
    /// Directly spotted triples, ascending id.
    pub core: Vec<TripleId>,
    /// Core first, then one-hop neighbors in ascending id.
    pub expanded: Vec<TripleId>,
    pub match_count: HashMap<TripleId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub slots: Vec<Option<TripleId>>,
    pub mask: SlotMask,
}

impl SlotAssignment {
    pub fn empty(m: usize) -> Self {
        SlotAssignment {
            slots: vec![None; m],
            mask: SlotMask::none(m),
        }
    }

    /// Slots filled in order, padded with nulls up to `m`.
    pub fn from_ids(ids: &[TripleId], m: usize) -> Self {
        let mut slots: Vec<Option<TripleId>> = ids.iter().take(m).map(|&i| Some(i)).collect();
        slots.resize(m, None);
        let mask = SlotMask::new(slots.iter().map(Option::is_some).collect());
        SlotAssignment { slots, mask }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn filled(&self) -> usize {
        self.slots.iter().flatten().count()
    }
}

/// Greedy longest-match scan: at each position take the longest n-gram
/// (n <= 4) present in the entry set and jump past it.
pub fn match_entries<S: AsRef<str>>(tokens: &[S], entries: &EntrySet) -> BTreeSet<String> {
    let mut matched = BTreeSet::new();
    let mut pos = 0;
    while pos < tokens.len() {
        let longest = (1..=MAX_PHRASE_TOKENS.min(tokens.len() - pos)).rev().find_map(|n| {
            let phrase = tokens[pos..pos + n]
                .iter()
                .map(AsRef::as_ref)
                .collect::<Vec<&str>>()
                .join(" ");
            entries.contains(&phrase).then_some((n, phrase))
        });
        match longest {
            Some((n, phrase)) => {
                matched.insert(phrase);
                pos += n;
            }
            None => pos += 1,
        }
    }
    matched
}

/// Union of [`match_entries`] over several token sources (question text plus
/// optional generated captions).
pub fn match_entries_multi<S: AsRef<str>>(sources: &[&[S]], entries: &EntrySet) -> BTreeSet<String> {
    sources
        .iter()
        .flat_map(|toks| match_entries(toks, entries))
        .collect()
}

fn count_matched(graph: &KnowledgeGraph, id: TripleId, matched: &BTreeSet<String>) -> usize {
    graph
        .triple(id)
        .entries()
        .into_iter()
        .filter(|e| matched.contains(*e))
        .count()
}

/// Triples with at least two distinct matched entries, found through the
/// entry index.
pub fn spot_triples(matched: &BTreeSet<String>, graph: &KnowledgeGraph) -> SpottedSet {
    let candidates: BTreeSet<TripleId> = matched
        .iter()
        .filter_map(|m| graph.triples_with(m))
        .flatten()
        .copied()
        .collect();
    let mut match_count = HashMap::new();
    let mut core = Vec::new();
    for id in candidates {
        let n = count_matched(graph, id, matched);
        if n >= MIN_MATCHED_ENTRIES {
            core.push(id);
            match_count.insert(id, n);
        }
    }
    SpottedSet {
        matched_entries: matched.clone(),
        expanded: core.clone(),
        core,
        match_count,
    }
}

/// Add every triple sharing an entry with a core triple.
pub fn expand_neighborhood(spotted: &SpottedSet, graph: &KnowledgeGraph) -> SpottedSet {
    let core_set: BTreeSet<TripleId> = spotted.core.iter().copied().collect();
    let neighbors: BTreeSet<TripleId> = spotted
        .core
        .iter()
        .flat_map(|&id| graph.neighbors(id).iter().copied())
        .filter(|id| !core_set.contains(id))
        .collect();
    let mut out = spotted.clone();
    out.expanded = spotted.core.clone();
    for id in neighbors {
        out.match_count
            .insert(id, count_matched(graph, id, &spotted.matched_entries));
        out.expanded.push(id);
    }
    out
}

/// Rank expanded triples by (match count desc, frequency sum desc, id asc),
/// keep the top `m`, and pad the rest with null slots.
pub fn select_slots(spotted: &SpottedSet, graph: &KnowledgeGraph, m: usize) -> SlotAssignment {
    let mut ranked = spotted.expanded.clone();
    ranked.sort_by_key(|&id| {
        (
            Reverse(spotted.match_count.get(&id).copied().unwrap_or(0)),
            Reverse(graph.frequency_sum(id)),
            id,
        )
    });
    ranked.dedup();
    SlotAssignment::from_ids(&ranked, m)
}

/// Full spotting pipeline for one question.
pub fn spot<S: AsRef<str>>(sources: &[&[S]], graph: &KnowledgeGraph, m: usize) -> (SpottedSet, SlotAssignment) {
    let matched = match_entries_multi(sources, graph.entry_set());
    let spotted = expand_neighborhood(&spot_triples(&matched, graph), graph);
    let slots = select_slots(&spotted, graph, m);
    (spotted, slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::Triple;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn entry_set(phrases: &[&str]) -> EntrySet {
        let combined: BTreeSet<String> = phrases.iter().map(|s| s.to_string()).collect();
        EntrySet {
            entities: combined.clone(),
            relations: BTreeSet::new(),
            combined,
        }
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn match_examples() {
        let s = entry_set(&["dog", "eat", "bone"]);
        assert_eq!(match_entries(&toks("what do dog eat"), &s), set(&["dog", "eat"]));
        let s = entry_set(&["sit on top", "on"]);
        assert_eq!(match_entries(&toks("sit on top"), &s), set(&["sit on top"]));
        assert!(match_entries(&toks("what do dog eat"), &EntrySet::default()).is_empty());
    }

    #[test]
    fn caption_tokens_extend_matches() {
        let s = entry_set(&["dog", "frisbee"]);
        let q = toks("what is the dog holding");
        let cap = toks("a dog with a frisbee");
        assert_eq!(match_entries_multi(&[&q, &cap], &s), set(&["dog", "frisbee"]));
    }

    #[test]
    fn spot_examples() {
        let g = KnowledgeGraph::build(&[Triple::new("dog", "eat", "bone")]);
        let s = spot_triples(&set(&["dog", "eat"]), &g);
        assert_eq!(s.core, vec![0]);
        assert_eq!(s.match_count[&0], 2);
        assert!(spot_triples(&set(&["dog"]), &g).core.is_empty());
        assert!(spot_triples(&BTreeSet::new(), &g).core.is_empty());
    }

    #[test]
    fn expansion_examples() {
        let g = KnowledgeGraph::build(&[
            Triple::new("dog", "eat", "bone"),
            Triple::new("cat", "eat", "fish"),
        ]);
        let empty = spot_triples(&BTreeSet::new(), &g);
        assert!(expand_neighborhood(&empty, &g).expanded.is_empty());
        let s = expand_neighborhood(&spot_triples(&set(&["dog", "bone"]), &g), &g);
        assert_eq!(s.expanded, vec![0, 1]);
        assert_eq!(s.match_count[&1], 0);

        let lone = KnowledgeGraph::build(&[
            Triple::new("dog", "eat", "bone"),
            Triple::new("cat", "chase", "mouse"),
        ]);
        let s = expand_neighborhood(&spot_triples(&set(&["dog", "eat"]), &lone), &lone);
        assert_eq!(s.expanded, s.core);
    }

    #[test]
    fn slot_padding_and_truncation() {
        let g = KnowledgeGraph::build(&[
            Triple::new("a", "r", "b"),
            Triple::new("a", "r", "c"),
            Triple::new("a", "q", "b"),
        ]);
        let (_, slots) = spot(&[&toks("a r b")], &g, 8);
        assert_eq!(slots.len(), 8);
        assert_eq!(slots.mask.flags(), &[true, true, true, false, false, false, false, false]);
        // <a,r,b> matches three entries, the others two
        assert_eq!(slots.slots[0], Some(0));

        let none = select_slots(&SpottedSet::default(), &g, 8);
        assert_eq!(none, SlotAssignment::empty(8));
    }

    #[test]
    fn overflow_drops_lowest_ranked() {
        // Ten triples around hub "h"; question mentions "h" and "x".
        let mut triples = vec![Triple::new("h", "x", "t0"), Triple::new("h", "x", "t1")];
        for i in 2..10 {
            triples.push(Triple::new("h", format!("r{i}"), format!("t{i}")));
        }
        // Make t9 and t8 more frequent so they outrank the other neighbors.
        triples.push(Triple::new("z", "y", "t9"));
        triples.push(Triple::new("z", "w", "t8"));
        let g = KnowledgeGraph::build(&triples);
        let (spotted, slots) = spot(&[&toks("h x")], &g, 8);
        assert_eq!(spotted.core, vec![0, 1]);
        // core (match 2, ids 0,1), then neighbors with match 1: all of 2..=9 share "h".
        // frequency sums: h=10, r_i=1, t_i=1 -> 12, except t8/t9 -> 13.
        let expected: Vec<Option<usize>> = [0, 1, 8, 9, 2, 3, 4, 5].iter().map(|&i| Some(i)).collect();
        assert_eq!(spotted.expanded.len(), 10);
        assert_eq!(slots.slots, expected);
    }
}
