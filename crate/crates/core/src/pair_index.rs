//! Entity-pair inverted index and query/evidence pairing.
//!
//! Every sentence and every non-header table row posts each pair of distinct
//! entities it contains. Pairing then looks up the pairs of a query sentence
//! and keeps the evidence that passes the relatedness constraints:
//!
//! * the evidence is not the query sentence (nor a byte-identical copy),
//! * text evidence lives on the query page or on a page the query sentence
//!   hyperlinks to, and the pair contains the query page's topic entity,
//! * table evidence additionally qualifies when the table itself links back
//!   to the query page.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_pair_key, EntityId, MentionSource, Page, PairKey, Sentence, SentenceLoc, TableLoc};
use crate::error::{Error, Result};
use crate::ingest::CorpusStore;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvidenceLoc {
    Text { sentence: SentenceLoc },
    Table { table: TableLoc, row: usize },
}

impl EvidenceLoc {
    pub fn page(&self) -> &str {
        match self {
            EvidenceLoc::Text { sentence } => &sentence.page,
            EvidenceLoc::Table { table, .. } => &table.page,
        }
    }

    pub fn is_table(&self) -> bool {
        matches!(self, EvidenceLoc::Table { .. })
    }

    fn sort_key(&self) -> (&str, u8, usize, usize) {
        match self {
            EvidenceLoc::Text { sentence } => (&sentence.page, 0, sentence.paragraph, sentence.sentence),
            EvidenceLoc::Table { table, row } => (&table.page, 1, table.table, *row),
        }
    }
}

impl Ord for EvidenceLoc {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for EvidenceLoc {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EvidenceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvidenceLoc::Text { sentence } => write!(f, "{sentence}"),
            EvidenceLoc::Table { table, row } => write!(f, "{}/t{}/r{}", table.page, table.table, row),
        }
    }
}

/// Position of a mention inside a piece of evidence. `cell` is the column
/// for table evidence and `None` for text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MentionCoord {
    pub cell: Option<usize>,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub loc: EvidenceLoc,
    pub pair: PairKey,
    /// First mention of `pair.lo` in the evidence.
    pub lo_at: MentionCoord,
    /// First mention of `pair.hi` in the evidence.
    pub hi_at: MentionCoord,
}

#[derive(Debug, Clone, Default)]
pub struct PairIndex {
    pub postings: BTreeMap<PairKey, Vec<EvidenceRef>>,
}

impl PairIndex {
    pub fn get(&self, pair: &PairKey) -> &[EvidenceRef] {
        self.postings.get(pair).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Text,
    Hybrid,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Profile::Text),
            "hybrid" => Ok(Profile::Hybrid),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected text|hybrid)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Text => "text",
            Profile::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPair {
    pub pair: PairKey,
    pub text_eligible: bool,
    pub table_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPair {
    pub pair: PairKey,
    pub text_eligible: bool,
    /// Byte spans of every mention of `pair.lo` in the query sentence.
    pub lo_spans: Vec<(usize, usize)>,
    /// Byte spans of every mention of `pair.hi` in the query sentence.
    pub hi_spans: Vec<(usize, usize)>,
    pub candidates: Vec<EvidenceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryGroup {
    pub query: SentenceLoc,
    pub pairs: Vec<GroupPair>,
}

impl QueryGroup {
    pub fn has_table_candidate(&self) -> bool {
        self.pairs.iter().any(|p| p.candidates.iter().any(|c| c.loc.is_table()))
    }
}

/// All entity pairs of a query sentence that may seek evidence.
pub fn extract_query_pairs(sentence: &Sentence, page: &Page) -> Vec<QueryPair> {
    let entities: Vec<&EntityId> = sentence.entities().into_iter().collect();
    let mut out = Vec::new();
    for (i, a) in entities.iter().enumerate() {
        for b in &entities[i + 1..] {
            let pair = make_pair_key((*a).clone(), (*b).clone()).expect("entities are distinct");
            if !pair.has_real_world() {
                continue;
            }
            let text_eligible = pair.contains(&page.topic_entity);
            out.push(QueryPair {
                pair,
                text_eligible,
                table_eligible: true,
            });
        }
    }
    out
}

fn first_coord<'a>(
    mentions: impl Iterator<Item = (Option<usize>, &'a crate::corpus::Mention)>,
    e: &EntityId,
) -> Option<MentionCoord> {
    let mut found = None;
    for (cell, m) in mentions {
        if &m.entity == e {
            found = Some(MentionCoord {
                cell,
                start: m.start,
                end: m.end,
            });
            break;
        }
    }
    found
}

fn page_postings(page: &Page) -> Vec<(PairKey, EvidenceRef)> {
    let mut out = Vec::new();
    for s in page.sentences() {
        let ents: Vec<&EntityId> = s.entities().into_iter().collect();
        for (i, a) in ents.iter().enumerate() {
            for b in &ents[i + 1..] {
                let pair = make_pair_key((*a).clone(), (*b).clone()).expect("distinct");
                let coord = |e: &EntityId| first_coord(s.mentions.iter().map(|m| (None, m)), e).expect("present");
                let r = EvidenceRef {
                    loc: EvidenceLoc::Text {
                        sentence: s.locator.clone(),
                    },
                    lo_at: coord(&pair.lo),
                    hi_at: coord(&pair.hi),
                    pair: pair.clone(),
                };
                out.push((pair, r));
            }
        }
    }
    for t in &page.tables {
        // row 0 is the header row and never serves as evidence
        for row in 1..t.n_rows {
            let ents: Vec<&EntityId> = t.row_entities(row).into_iter().collect();
            let cells = || {
                t.rows[row]
                    .iter()
                    .enumerate()
                    .flat_map(|(c, cell)| cell.mentions.iter().map(move |m| (Some(c), m)))
            };
            for (i, a) in ents.iter().enumerate() {
                for b in &ents[i + 1..] {
                    let pair = make_pair_key((*a).clone(), (*b).clone()).expect("distinct");
                    let r = EvidenceRef {
                        loc: EvidenceLoc::Table {
                            table: t.locator.clone(),
                            row,
                        },
                        lo_at: first_coord(cells(), &pair.lo).expect("present"),
                        hi_at: first_coord(cells(), &pair.hi).expect("present"),
                        pair: pair.clone(),
                    };
                    out.push((pair, r));
                }
            }
        }
    }
    out
}

pub fn build_index(store: &CorpusStore) -> PairIndex {
    let pages: Vec<&Page> = store.pages.values().collect();
    let per_page: Vec<Vec<(PairKey, EvidenceRef)>> = pages.par_iter().map(|p| page_postings(p)).collect();
    let mut postings: BTreeMap<PairKey, Vec<EvidenceRef>> = BTreeMap::new();
    for (pair, r) in per_page.into_iter().flatten() {
        postings.entry(pair).or_default().push(r);
    }
    for list in postings.values_mut() {
        list.sort_by(|a, b| a.loc.cmp(&b.loc));
        list.dedup_by(|a, b| a.loc == b.loc);
    }
    PairIndex { postings }
}

/// Page ids the sentence hyperlinks to.
pub fn sentence_link_targets(s: &Sentence) -> BTreeSet<&str> {
    s.mentions
        .iter()
        .filter(|m| m.source == MentionSource::Hyperlink)
        .filter_map(|m| m.entity.page_id())
        .collect()
}

/// Relatedness predicate between a query sentence and one piece of evidence.
pub fn evidence_admissible(store: &CorpusStore, query: &Sentence, evidence: &EvidenceLoc) -> bool {
    let qpage = query.locator.page.as_str();
    let epage = evidence.page();
    let linked = epage == qpage || sentence_link_targets(query).contains(epage);
    match evidence {
        EvidenceLoc::Text { sentence } => {
            if sentence == &query.locator {
                return false;
            }
            match store.sentence(sentence) {
                Some(ev) => linked && ev.text != query.text,
                None => false,
            }
        }
        EvidenceLoc::Table { table, .. } => {
            linked || store.table(table).is_some_and(|t| t.link_targets().contains(qpage))
        }
    }
}

/// Candidate evidence for `pair` relative to the query sentence at `query`.
pub fn lookup(index: &PairIndex, pair: &PairKey, query: &SentenceLoc, store: &CorpusStore) -> Vec<EvidenceRef> {
    let Some(q) = store.sentence(query) else {
        return Vec::new();
    };
    index
        .get(pair)
        .iter()
        .filter(|r| evidence_admissible(store, q, &r.loc))
        .cloned()
        .collect()
}

fn spans_of(s: &Sentence, e: &EntityId) -> Vec<(usize, usize)> {
    s.mentions
        .iter()
        .filter(|m| &m.entity == e)
        .map(|m| (m.start, m.end))
        .collect()
}

/// Query groups for one sentence, or `None` when nothing survives.
pub fn query_group_for(
    store: &CorpusStore,
    index: &PairIndex,
    page: &Page,
    s: &Sentence,
    profile: Profile,
) -> Option<QueryGroup> {
    let mut pairs = Vec::new();
    for qp in extract_query_pairs(s, page) {
        let candidates: Vec<EvidenceRef> = lookup(index, &qp.pair, &s.locator, store)
            .into_iter()
            .filter(|r| match r.loc {
                EvidenceLoc::Text { .. } => qp.text_eligible,
                EvidenceLoc::Table { .. } => qp.table_eligible && profile == Profile::Hybrid,
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        pairs.push(GroupPair {
            lo_spans: spans_of(s, &qp.pair.lo),
            hi_spans: spans_of(s, &qp.pair.hi),
            pair: qp.pair,
            text_eligible: qp.text_eligible,
            candidates,
        });
    }
    let group = QueryGroup {
        query: s.locator.clone(),
        pairs,
    };
    let keep = !group.pairs.is_empty() && (profile == Profile::Text || group.has_table_candidate());
    keep.then_some(group)
}

/// One group per query sentence with at least one pair that found evidence.
/// Under the hybrid profile a group must offer at least one table candidate;
/// under the text profile table candidates are dropped.
pub fn build_query_groups(store: &CorpusStore, index: &PairIndex, profile: Profile) -> Vec<QueryGroup> {
    let pages: Vec<&Page> = store.pages.values().collect();
    let per_page: Vec<Vec<QueryGroup>> = pages
        .par_iter()
        .map(|page| {
            page.sentences()
                .filter_map(|s| query_group_for(store, index, page, s, profile))
                .collect()
        })
        .collect();
    let mut groups: Vec<QueryGroup> = per_page.into_iter().flatten().collect();
    groups.sort_by(|a, b| a.query.cmp(&b.query));
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ingest;
    use serde_json::json;

    fn id(s: &str) -> EntityId {
        EntityId::parse(s).unwrap()
    }

    fn corpus(lines: &[serde_json::Value]) -> CorpusStore {
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        ingest(text.as_bytes()).unwrap()
    }

    fn link(text: &str, needle: &str, target: &str) -> serde_json::Value {
        let s = text.find(needle).unwrap();
        json!({"start": s, "end": s + needle.len(), "target": target})
    }

    fn sent(text: &str, links: &[(&str, &str)]) -> serde_json::Value {
        let links: Vec<_> = links.iter().map(|(n, t)| link(text, n, t)).collect();
        json!({"text": text, "links": links})
    }

    #[test]
    fn query_pairs_and_eligibility() {
        let q = "Fates Warning released Awaken the Guardian in 1986.";
        let store = corpus(&[json!({"id": "P1", "title": "Fates Warning",
            "paragraphs": [[sent(q, &[("Awaken the Guardian", "P2")])]]})]);
        let page = store.page("P1").unwrap();
        let s = page.sentence(0, 0).unwrap();
        let pairs = extract_query_pairs(s, page);
        let got: Vec<(String, bool)> = pairs.iter().map(|p| (p.pair.to_string(), p.text_eligible)).collect();
        assert_eq!(
            got,
            vec![
                ("(P1, P2)".to_string(), true),
                ("(P1, T:1986)".to_string(), true),
                ("(P2, T:1986)".to_string(), false),
            ]
        );
        assert!(pairs.iter().all(|p| p.table_eligible));
    }

    #[test]
    fn value_only_and_single_mention_sentences_have_no_pairs() {
        let store = corpus(&[json!({"id": "P1", "title": "X",
            "paragraphs": [[sent("In 1986 it sold 42 copies.", &[]), sent("Only 1986 here.", &[])]]})]);
        let page = store.page("P1").unwrap();
        assert!(extract_query_pairs(page.sentence(0, 0).unwrap(), page).is_empty());
        assert!(extract_query_pairs(page.sentence(0, 1).unwrap(), page).is_empty());
    }

    fn linking_corpus() -> CorpusStore {
        corpus(&[
            json!({"id": "P1", "title": "Fates Warning", "paragraphs": [[
                sent("Fates Warning released Awaken the Guardian.", &[("Awaken the Guardian", "P2")]),
                sent("Fates Warning toured with Awaken the Guardian material.", &[("Awaken the Guardian", "P2")])
            ]]}),
            json!({"id": "P2", "title": "Awaken the Guardian", "paragraphs": [[
                sent("Awaken the Guardian is an album by Fates Warning.", &[("Fates Warning", "P1")])
            ]]}),
            json!({"id": "P5", "title": "Unrelated", "paragraphs": [[
                sent("Fates Warning and Awaken the Guardian appear here.", &[("Fates Warning", "P1"), ("Awaken the Guardian", "P2")])
            ]]}),
        ])
    }

    #[test]
    fn index_postings_and_lookup_constraints() {
        let store = linking_corpus();
        let index = build_index(&store);
        let pair = make_pair_key(id("P1"), id("P2")).unwrap();
        assert_eq!(index.get(&pair).len(), 4);

        let query = SentenceLoc { page: "P1".into(), paragraph: 0, sentence: 0 };
        let found: Vec<String> = lookup(&index, &pair, &query, &store).iter().map(|r| r.loc.to_string()).collect();
        // same-page sentence and linked P2 sentence; P5 unrelated; self excluded
        assert_eq!(found, vec!["P1/p0/s1", "P2/p0/s0"]);
    }

    #[test]
    fn table_rows_post_pairs() {
        let store = corpus(&[json!({"id": "P1", "title": "List", "tables": [{"rows": [
            [{"text": "Name"}, {"text": "Note"}],
            [{"text": "Rowland Barran", "links": [{"start": 0, "end": 14, "target": "P9"}]}, {"text": "aka Chicago II"}]
        ]}]})]);
        let index = build_index(&store);
        let pair = make_pair_key(id("P9"), id("C:P1:0:1:1")).unwrap();
        let refs = index.get(&pair);
        assert_eq!(refs.len(), 1);
        assert!(matches!(refs[0].loc, EvidenceLoc::Table { row: 1, .. }));
        assert_eq!(refs[0].lo_at.cell, Some(1));
        assert_eq!(refs[0].hi_at.cell, Some(0));
    }

    #[test]
    fn empty_store_gives_empty_index_and_groups() {
        let store = CorpusStore::default();
        let index = build_index(&store);
        assert!(index.is_empty());
        assert!(build_query_groups(&store, &index, Profile::Text).is_empty());
    }

    #[test]
    fn groups_for_linking_corpus() {
        let store = linking_corpus();
        let index = build_index(&store);
        let groups = build_query_groups(&store, &index, Profile::Text);
        let queries: Vec<String> = groups.iter().map(|g| g.query.to_string()).collect();
        // P2's sentence has topic P2 in the pair and links to P1; P5's sentence
        // links to both, but P5 is not part of the pair so no text evidence.
        assert_eq!(queries, vec!["P1/p0/s0", "P1/p0/s1", "P2/p0/s0"]);
        for g in &groups {
            for p in &g.pairs {
                assert!(p.candidates.iter().all(|c| !matches!(&c.loc, EvidenceLoc::Text { sentence } if sentence == &g.query)));
            }
        }
        assert!(build_query_groups(&store, &index, Profile::Hybrid).is_empty());
    }

    #[test]
    fn identical_text_is_not_evidence() {
        let t = "Fates Warning released Awaken the Guardian.";
        let store = corpus(&[json!({"id": "P1", "title": "Fates Warning", "paragraphs": [[
            sent(t, &[("Awaken the Guardian", "P2")]),
            sent(t, &[("Awaken the Guardian", "P2")])
        ]]})]);
        let index = build_index(&store);
        let pair = make_pair_key(id("P1"), id("P2")).unwrap();
        assert_eq!(index.get(&pair).len(), 2);
        let q = SentenceLoc { page: "P1".into(), paragraph: 0, sentence: 0 };
        assert!(lookup(&index, &pair, &q, &store).is_empty());
    }

    #[test]
    fn table_linking_back_to_query_page_is_admissible() {
        let q = "Fates Warning released Awaken the Guardian.";
        let store = corpus(&[
            json!({"id": "P1", "title": "Fates Warning", "paragraphs": [[sent(q, &[("Awaken the Guardian", "P2")])]]}),
            json!({"id": "P7", "title": "Albums of 1986", "tables": [{"rows": [
                [{"text": "Album"}, {"text": "Artist"}],
                [{"text": "Awaken the Guardian", "links": [{"start": 0, "end": 19, "target": "P2"}]},
                 {"text": "Fates Warning", "links": [{"start": 0, "end": 13, "target": "P1"}]}]
            ]}]}),
            json!({"id": "P8", "title": "Other list", "tables": [{"rows": [
                [{"text": "Album"}, {"text": "Artist"}],
                [{"text": "Awaken the Guardian", "links": [{"start": 0, "end": 19, "target": "P2"}]},
                 {"text": "Fates Warning"}]
            ]}]}),
        ]);
        let index = build_index(&store);
        let pair = make_pair_key(id("P1"), id("P2")).unwrap();
        let query = SentenceLoc { page: "P1".into(), paragraph: 0, sentence: 0 };
        let found: Vec<String> = lookup(&index, &pair, &query, &store).iter().map(|r| r.loc.to_string()).collect();
        assert_eq!(found, vec!["P7/t0/r1"]);

        let groups = build_query_groups(&store, &index, Profile::Hybrid);
        assert_eq!(groups.len(), 1);
        assert!(groups[0].has_table_candidate());
    }
}
