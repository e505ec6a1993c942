mod common;

use serde_json::json;
use spanreason::artifact::sha256_hex;
use spanreason::corpus::{EntityId, MentionSource, SentenceLoc};
use spanreason::ingest::{self, detect_self_mentions, detect_value_mentions, parse_corpus_str, CorpusStore};
use spanreason::synth::{self, RandomCorpusConfig};
use spanreason::Error;

fn corpus(lines: &[serde_json::Value]) -> spanreason::Result<CorpusStore> {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    ingest::ingest(text.as_bytes())
}

fn loc(page: &str, p: usize, s: usize) -> SentenceLoc {
    SentenceLoc {
        page: page.into(),
        paragraph: p,
        sentence: s,
    }
}

fn id(s: &str) -> EntityId {
    EntityId::parse(s).unwrap()
}

#[test]
fn hyperlink_offsets_become_mentions() {
    let text = "Fates Warning released Awaken the Guardian.";
    // independent offset computation
    let start = text.find("Awaken the Guardian").unwrap();
    assert_eq!((start, start + "Awaken the Guardian".len()), (23, 42));
    let store = parse_corpus_str(
        &json!({"id": "P1", "title": "Fates Warning",
            "paragraphs": [[{"text": text, "links": [{"start": 23, "end": 42, "target": "P2"}]}]]})
        .to_string(),
    )
    .unwrap();
    let s = store.sentence(&loc("P1", 0, 0)).unwrap();
    let links: Vec<_> = s.mentions.iter().filter(|m| m.source == MentionSource::Hyperlink).collect();
    assert_eq!(links.len(), 1);
    assert_eq!((links[0].entity.as_str(), links[0].start, links[0].end), ("P2", 23, 42));
    assert_eq!(links[0].surface(&s.text), "Awaken the Guardian");
}

#[test]
fn empty_stream_gives_zero_stats() {
    let store = parse_corpus_str("").unwrap();
    assert!(store.pages.is_empty());
    assert_eq!(store.stats.n_pages + store.stats.n_sentences + store.stats.n_tables, 0);
    assert!(store.stats.n_mentions.values().all(|&n| n == 0));
}

#[test]
fn ragged_table_rejected() {
    let err = corpus(&[json!({"id": "P1", "title": "T", "tables": [{"rows": [
        [{"text": "a"}, {"text": "b"}, {"text": "c"}],
        [{"text": "d"}, {"text": "e"}]
    ]}]})])
    .unwrap_err();
    assert!(matches!(err, Error::RaggedTable { got: 2, expected: 3, .. }), "{err}");
}

#[test]
fn malformed_input_rejected() {
    assert!(matches!(parse_corpus_str("{not json"), Err(Error::MalformedRecord { line: 1, .. })));
    let dup = format!("{}\n{}\n", json!({"id": "P1", "title": "A"}), json!({"id": "P1", "title": "B"}));
    assert!(matches!(parse_corpus_str(&dup), Err(Error::DuplicatePageId(_))));
    let bad = json!({"id": "P1", "title": "A", "paragraphs": [[{"text": "abc", "links": [{"start": 1, "end": 9, "target": "P2"}]}]]});
    assert!(matches!(parse_corpus_str(&bad.to_string()), Err(Error::OffsetOutOfRange { .. })));
    let mid_char = json!({"id": "P1", "title": "A", "paragraphs": [[{"text": "Citroën", "links": [{"start": 0, "end": 6, "target": "P2"}]}]]});
    assert!(matches!(parse_corpus_str(&mid_char.to_string()), Err(Error::OffsetOutOfRange { .. })));
}

#[test]
fn self_mention_from_title() {
    let store = corpus(&[json!({"id": "P1", "title": "Fates Warning",
        "paragraphs": [[{"text": "Fates Warning released an album."}]]})])
    .unwrap();
    let s = store.sentence(&loc("P1", 0, 0)).unwrap();
    let selfs: Vec<_> = s.mentions.iter().filter(|m| m.source == MentionSource::SelfMention).collect();
    assert_eq!(selfs.len(), 1);
    // substring-search oracle
    let at = s.text.find("Fates Warning").unwrap();
    assert_eq!((selfs[0].start, selfs[0].end), (at, at + 13));
    assert_eq!(selfs[0].entity, id("P1"));
    let page = store.page("P1").unwrap();
    assert!(detect_self_mentions(page).is_empty(), "already detected mentions are not re-proposed");
}

#[test]
fn hyperlinked_title_adds_no_self_mention() {
    let text = "Fates Warning released an album.";
    let store = corpus(&[json!({"id": "P1", "title": "Fates Warning",
        "paragraphs": [[{"text": text, "links": [{"start": 0, "end": 13, "target": "P9"}]}]]})])
    .unwrap();
    let s = store.sentence(&loc("P1", 0, 0)).unwrap();
    assert_eq!(s.mentions.iter().filter(|m| m.source == MentionSource::SelfMention).count(), 0);
}

#[test]
fn longest_alias_only() {
    let store = corpus(&[json!({"id": "P1", "title": "Citroën C6", "aliases": ["Citroën C6", "C6"],
        "paragraphs": [[{"text": "The Citroën C6 is a car."}]]})])
    .unwrap();
    let s = store.sentence(&loc("P1", 0, 0)).unwrap();
    let selfs: Vec<_> = s.mentions.iter().filter(|m| m.source == MentionSource::SelfMention).collect();
    assert_eq!(selfs.len(), 1);
    assert_eq!(selfs[0].surface(&s.text), "Citroën C6");
    // the digit inside the alias mention is not a numeric value
    assert!(s.mentions.iter().all(|m| m.source != MentionSource::ValueDetector));
}

#[test]
fn alias_matching_is_case_sensitive() {
    let store = corpus(&[json!({"id": "P1", "title": "It", "paragraphs": [[{"text": "it rained and It stopped."}]]})]).unwrap();
    let s = store.sentence(&loc("P1", 0, 0)).unwrap();
    let surfaces: Vec<&str> = s.mentions.iter().map(|m| m.surface(&s.text)).collect();
    assert_eq!(surfaces, vec!["It"]);
}

#[test]
fn value_mentions() {
    let store = corpus(&[json!({"id": "P1", "title": "Copa",
        "paragraphs": [[{"text": "The cup was established in 1998."}, {"text": "It ran from 2005 to 2012 with 1,250 fans."}]]})])
    .unwrap();
    let s0 = store.sentence(&loc("P1", 0, 0)).unwrap();
    let vals: Vec<&str> = s0.mentions.iter().filter(|m| m.source == MentionSource::ValueDetector).map(|m| m.entity.as_str()).collect();
    assert_eq!(vals, vec!["T:1998"]);
    let s1 = store.sentence(&loc("P1", 0, 1)).unwrap();
    let vals: Vec<&str> = s1.mentions.iter().filter(|m| m.source == MentionSource::ValueDetector).map(|m| m.entity.as_str()).collect();
    assert_eq!(vals, vec!["T:2005", "T:2012", "N:1250"]);
    assert!(detect_value_mentions(s1).is_empty(), "nothing left to detect after enrichment");
}

#[test]
fn table_cells_link_through_related_sentences() {
    let text = "Rowland Barran was a Liberal politician.";
    let store = corpus(&[
        json!({"id": "P1", "title": "Leeds North",
            "paragraphs": [[{"text": text, "links": [{"start": 0, "end": 14, "target": "P9"}]}]],
            "tables": [{"caption": "Members", "rows": [
                [{"text": "Member"}, {"text": "Party"}],
                [{"text": " Rowland Barran "}, {"text": "aka Chicago II"}],
                [{"text": ""}, {"text": "Liberal"}]
            ]}]}),
        json!({"id": "P9", "title": "Rowland Barran"}),
    ])
    .unwrap();
    let t = &store.page("P1").unwrap().tables[0];
    let cell = &t.rows[1][0];
    assert_eq!(cell.mentions.len(), 1);
    assert_eq!(cell.mentions[0].entity, id("P9"));
    assert_eq!(cell.mentions[0].source, MentionSource::CellLink);
    assert_eq!(cell.mentions[0].surface(&cell.text), "Rowland Barran");
    assert_eq!(t.rows[1][1].mentions[0].entity, EntityId::unique_cell("P1", 0, 1, 1));
    assert!(t.rows[2][0].mentions.is_empty(), "empty cell has no mention");
}

#[test]
fn cells_match_sentences_of_linking_pages_only() {
    let store = corpus(&[
        json!({"id": "P1", "title": "Roster", "tables": [{"rows": [[{"text": "Name"}], [{"text": "Kai Moreno"}]]}]}),
        json!({"id": "P2", "title": "Linker", "paragraphs": [[{"text": "Kai Moreno plays for Roster.",
            "links": [{"start": 0, "end": 10, "target": "P7"}, {"start": 21, "end": 27, "target": "P1"}]}]]}),
        json!({"id": "P3", "title": "Stranger", "paragraphs": [[{"text": "Kai Moreno also appears here.",
            "links": [{"start": 0, "end": 10, "target": "P8"}]}]]}),
    ])
    .unwrap();
    let cell = &store.page("P1").unwrap().tables[0].rows[1][0];
    assert_eq!(cell.mentions[0].entity, id("P7"));
}

#[test]
fn partial_cover_is_ignored() {
    let store = corpus(&[json!({"id": "P1", "title": "X",
        "paragraphs": [[{"text": "Blue Harbor Music signed them.", "links": [{"start": 0, "end": 4, "target": "P5"}]}]],
        "tables": [{"rows": [[{"text": "Label"}], [{"text": "Blue Harbor"}]]}]})])
    .unwrap();
    let cell = &store.page("P1").unwrap().tables[0].rows[1][0];
    assert_eq!(cell.mentions[0].entity, EntityId::unique_cell("P1", 0, 1, 0));
}

fn check_store_invariants(store: &CorpusStore) {
    for page in store.pages.values() {
        let sentence_mentions: Vec<_> = page.sentences().flat_map(|s| s.mentions.iter().map(move |m| (s, m))).collect();
        for s in page.sentences() {
            for (i, a) in s.mentions.iter().enumerate() {
                for b in &s.mentions[i + 1..] {
                    assert!(!a.overlaps(b.start, b.end), "overlap in {}", s.locator);
                }
                assert_eq!(EntityId::parse(a.entity.as_str()).unwrap(), a.entity);
            }
        }
        for t in &page.tables {
            for row in &t.rows {
                for cell in row {
                    for (i, a) in cell.mentions.iter().enumerate() {
                        for b in &cell.mentions[i + 1..] {
                            assert!(!a.overlaps(b.start, b.end));
                        }
                    }
                }
            }
        }
        let _ = sentence_mentions;
    }
    // CellLink entities come from a covering mention of a related sentence
    let inlinks = store.inlinks();
    for page in store.pages.values() {
        let mut related: Vec<&spanreason::corpus::Sentence> = page.sentences().collect();
        for p in inlinks.get(page.id.as_str()).into_iter().flatten() {
            related.extend(store.page(p).unwrap().sentences());
        }
        for t in &page.tables {
            for row in &t.rows {
                for cell in row {
                    for m in cell.mentions.iter().filter(|m| m.source == MentionSource::CellLink) {
                        if m.entity.cell_coords().is_some() {
                            continue;
                        }
                        let surface = m.surface(&cell.text);
                        let covered = related.iter().any(|s| {
                            s.mentions.iter().any(|sm| sm.entity == m.entity && s.text[sm.start..sm.end].contains(surface))
                        });
                        assert!(covered, "cell {surface:?} links {} without a covering sentence mention", m.entity);
                    }
                }
            }
        }
    }
    let mut alias_oracle: std::collections::BTreeMap<String, std::collections::BTreeSet<String>> = Default::default();
    for page in store.pages.values() {
        for a in page.aliases.iter().chain(std::iter::once(&page.title)) {
            alias_oracle.entry(a.clone()).or_default().insert(page.id.clone());
        }
    }
    assert_eq!(store.alias_index, alias_oracle);
    assert_eq!(store.stats, store.compute_stats());
}

#[test]
fn mini_corpus_invariants() {
    check_store_invariants(&common::mini_store());
}

#[test]
fn random_corpora_invariants() {
    for seed in 0..30 {
        let pages = synth::random_corpus(seed, RandomCorpusConfig::default());
        check_store_invariants(&common::store_of(&pages));
    }
}

#[test]
fn ingest_is_a_pure_function_of_bytes() {
    let text = synth::mini_corpus_jsonl();
    let a = serde_json::to_vec(&ingest::ingest(text.as_bytes()).unwrap()).unwrap();
    let b = serde_json::to_vec(&ingest::ingest(text.as_bytes()).unwrap()).unwrap();
    assert_eq!(sha256_hex(&a), sha256_hex(&b));
}

#[test]
fn bundled_corpus_matches_generator() {
    let on_disk = std::fs::read_to_string(common::mini_corpus_path()).unwrap();
    assert_eq!(on_disk, synth::mini_corpus_jsonl());
    assert_eq!(on_disk.lines().count(), 50);
}
