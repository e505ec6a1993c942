//! Corpus ingestion: JSONL parsing, validation and mention enrichment.
//!
//! Mentions come from four sources, applied in priority order so that a
//! lower-priority mention never overlaps an earlier one:
//! hyperlinks from the record, self-mentions of the page's topic entity,
//! rule-based temporal/numeric values, and finally table cells linked to
//! related sentences.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    valid_span, Cell, EntityId, Mention, MentionSource, Page, Sentence, SentenceLoc, Table, TableLoc,
    MAX_TABLE_CELLS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub start: usize,
    pub end: usize,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRecord {
    pub text: String,
    #[serde(default)]
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRecord {
    #[serde(default)]
    pub caption: String,
    pub rows: Vec<Vec<TextRecord>>,
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageRecord {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub paragraphs: Vec<Vec<TextRecord>>,
    #[serde(default)]
    pub tables: Vec<TableRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub n_pages: usize,
    pub n_sentences: usize,
    pub n_tables: usize,
    pub n_mentions: BTreeMap<MentionSource, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStore {
    pub pages: BTreeMap<String, Page>,
    pub alias_index: BTreeMap<String, BTreeSet<String>>,
    pub stats: IngestStats,
}

impl CorpusStore {
    pub fn page(&self, id: &str) -> Option<&Page> {
        self.pages.get(id)
    }

    pub fn sentence(&self, loc: &SentenceLoc) -> Option<&Sentence> {
        self.pages.get(&loc.page)?.sentence(loc.paragraph, loc.sentence)
    }

    pub fn table(&self, loc: &TableLoc) -> Option<&Table> {
        self.pages.get(&loc.page)?.tables.get(loc.table)
    }

    /// For every page id, the corpus pages that hyperlink to it.
    pub fn inlinks(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut map: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for page in self.pages.values() {
            for target in &page.outlinks {
                map.entry(target.as_str()).or_default().insert(page.id.as_str());
            }
        }
        map
    }

    pub fn compute_stats(&self) -> IngestStats {
        let mut stats = IngestStats {
            n_pages: self.pages.len(),
            ..Default::default()
        };
        for source in MentionSource::ALL {
            stats.n_mentions.insert(source, 0);
        }
        for page in self.pages.values() {
            stats.n_tables += page.tables.len();
            for s in page.sentences() {
                stats.n_sentences += 1;
                for m in &s.mentions {
                    *stats.n_mentions.entry(m.source).or_default() += 1;
                }
            }
            for cell in page.tables.iter().flat_map(|t| t.rows.iter().flatten()) {
                for m in &cell.mentions {
                    *stats.n_mentions.entry(m.source).or_default() += 1;
                }
            }
        }
        stats
    }

    fn rebuild_indexes(&mut self) {
        let mut alias_index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for page in self.pages.values() {
            for alias in &page.aliases {
                alias_index.entry(alias.clone()).or_default().insert(page.id.clone());
            }
        }
        self.alias_index = alias_index;
        self.stats = self.compute_stats();
    }
}

/// Parses JSONL page records into a validated store with hyperlink mentions.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<CorpusStore> {
    let mut store = CorpusStore::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PageRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let page = build_page(record, line_no)?;
        if store.pages.contains_key(&page.id) {
            return Err(Error::DuplicatePageId(page.id));
        }
        store.pages.insert(page.id.clone(), page);
    }
    store.rebuild_indexes();
    Ok(store)
}

pub fn parse_corpus_str(text: &str) -> Result<CorpusStore> {
    parse_corpus(text.as_bytes())
}

fn build_page(record: PageRecord, line: usize) -> Result<Page> {
    let malformed = |reason: String| Error::MalformedRecord { line, reason };
    let topic = EntityId::page(&record.id).map_err(|_| malformed(format!("invalid page id {:?}", record.id)))?;
    if record.title.is_empty() {
        return Err(malformed("empty title".into()));
    }
    let mut aliases = vec![record.title.clone()];
    for a in record.aliases {
        if !a.is_empty() && !aliases.contains(&a) {
            aliases.push(a);
        }
    }

    let mut paragraphs = Vec::with_capacity(record.paragraphs.len());
    for (pi, para) in record.paragraphs.into_iter().enumerate() {
        let mut sentences = Vec::with_capacity(para.len());
        for (si, rec) in para.into_iter().enumerate() {
            let mentions = link_mentions(&record.id, &rec, line)?;
            sentences.push(Sentence {
                text: rec.text,
                mentions,
                locator: SentenceLoc {
                    page: record.id.clone(),
                    paragraph: pi,
                    sentence: si,
                },
            });
        }
        paragraphs.push(sentences);
    }

    let mut tables = Vec::with_capacity(record.tables.len());
    for (ti, t) in record.tables.into_iter().enumerate() {
        let n_rows = t.rows.len();
        let n_cols = t.rows.first().map_or(0, Vec::len);
        for (ri, row) in t.rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::RaggedTable {
                    page: record.id.clone(),
                    table: ti,
                    row: ri,
                    got: row.len(),
                    expected: n_cols,
                });
            }
        }
        if n_rows * n_cols > MAX_TABLE_CELLS {
            return Err(Error::TableTooLarge {
                page: record.id.clone(),
                table: ti,
                cells: n_rows * n_cols,
            });
        }
        let mut rows = Vec::with_capacity(n_rows);
        for row in t.rows {
            let mut cells = Vec::with_capacity(n_cols);
            for rec in row {
                let mentions = link_mentions(&record.id, &rec, line)?;
                cells.push(Cell {
                    text: rec.text,
                    mentions,
                });
            }
            rows.push(cells);
        }
        tables.push(Table {
            locator: TableLoc {
                page: record.id.clone(),
                table: ti,
            },
            caption: t.caption,
            rows,
            n_rows,
            n_cols,
        });
    }

    let mut page = Page {
        id: record.id,
        title: record.title,
        aliases,
        topic_entity: topic,
        paragraphs,
        tables,
        outlinks: BTreeSet::new(),
    };
    page.recompute_outlinks();
    Ok(page)
}

/// Validates link annotations and turns them into hyperlink mentions.
/// Overlapping links keep the one that starts first.
fn link_mentions(page: &str, rec: &TextRecord, line: usize) -> Result<Vec<Mention>> {
    let mut links: Vec<&LinkRecord> = rec.links.iter().collect();
    links.sort_by_key(|l| (l.start, l.end));
    let mut out: Vec<Mention> = Vec::with_capacity(links.len());
    for l in links {
        if !valid_span(&rec.text, l.start, l.end) {
            return Err(Error::OffsetOutOfRange {
                page: page.to_string(),
                start: l.start,
                end: l.end,
                len: rec.text.len(),
            });
        }
        let entity = EntityId::page(&l.target).map_err(|_| Error::MalformedRecord {
            line,
            reason: format!("link target {:?} is not a page id", l.target),
        })?;
        if out.iter().any(|m| m.overlaps(l.start, l.end)) {
            continue;
        }
        out.push(Mention {
            entity,
            start: l.start,
            end: l.end,
            source: MentionSource::Hyperlink,
        });
    }
    Ok(out)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// True when `[start, end)` is not glued to a word character on either side.
fn at_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    let first = text[start..end].chars().next();
    let last = text[start..end].chars().next_back();
    let left_ok = !(first.is_some_and(is_word_char) && before.is_some_and(is_word_char));
    let right_ok = !(last.is_some_and(is_word_char) && after.is_some_and(is_word_char));
    left_ok && right_ok
}

/// Word-boundary occurrences of `needle` in `text`, left to right.
pub fn find_occurrences(text: &str, needle: &str) -> Vec<(usize, usize)> {
    if needle.is_empty() {
        return Vec::new();
    }
    text.match_indices(needle)
        .map(|(s, m)| (s, s + m.len()))
        .filter(|&(s, e)| at_word_boundary(text, s, e))
        .collect()
}

/// Self-mentions for one text: longest alias first, left to right, skipping
/// anything that overlaps `existing` or an earlier match.
pub fn self_mentions_in(text: &str, existing: &[Mention], aliases: &[String], topic: &EntityId) -> Vec<Mention> {
    let mut ordered: Vec<&String> = aliases.iter().filter(|a| !a.is_empty()).collect();
    ordered.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    ordered.dedup();
    let mut found: Vec<Mention> = Vec::new();
    for alias in ordered {
        for (s, e) in find_occurrences(text, alias) {
            let blocked = existing.iter().chain(found.iter()).any(|m| m.overlaps(s, e));
            if !blocked {
                found.push(Mention {
                    entity: topic.clone(),
                    start: s,
                    end: e,
                    source: MentionSource::SelfMention,
                });
            }
        }
    }
    found.sort_by_key(|m| m.start);
    found
}

pub fn detect_self_mentions(page: &Page) -> Vec<(SentenceLoc, Mention)> {
    page.sentences()
        .flat_map(|s| {
            self_mentions_in(&s.text, &s.mentions, &page.aliases, &page.topic_entity)
                .into_iter()
                .map(move |m| (s.locator.clone(), m))
        })
        .collect()
}

fn value_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[0-9]{4}-[0-9]{2}-[0-9]{2}|[0-9]{1,3}(?:,[0-9]{3})+(?:\.[0-9]+)?|[0-9]+(?:\.[0-9]+)?")
            .expect("value regex")
    })
}

/// Classifies a detected numeric surface into a temporal or numeric id.
pub fn value_entity(surface: &str) -> Option<EntityId> {
    let bytes = surface.as_bytes();
    if bytes.len() == 10 && bytes[4] == b'-' && bytes[7] == b'-' {
        let month: u32 = surface[5..7].parse().ok()?;
        let day: u32 = surface[8..10].parse().ok()?;
        if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return None;
        }
        return Some(EntityId::temporal(surface));
    }
    if bytes.len() == 4 && bytes.iter().all(u8::is_ascii_digit) {
        let year: u32 = surface.parse().ok()?;
        if (1000..=2999).contains(&year) {
            return Some(EntityId::temporal(surface));
        }
    }
    Some(EntityId::numeric(&surface.replace(',', "")))
}

/// Rule-based temporal/numeric detection over one text.
pub fn value_mentions_in(text: &str, existing: &[Mention]) -> Vec<Mention> {
    let mut out = Vec::new();
    for m in value_regex().find_iter(text) {
        let (s, e) = (m.start(), m.end());
        let before = text[..s].chars().next_back();
        if before.is_some_and(|c| is_word_char(c) || c == '.' || c == ',') {
            continue;
        }
        let mut after = text[e..].chars();
        match after.next() {
            Some(c) if is_word_char(c) => continue,
            Some('.' | ',') if after.next().is_some_and(|c| c.is_ascii_digit()) => continue,
            _ => {}
        }
        if existing.iter().any(|x| x.overlaps(s, e)) {
            continue;
        }
        if let Some(entity) = value_entity(m.as_str()) {
            out.push(Mention {
                entity,
                start: s,
                end: e,
                source: MentionSource::ValueDetector,
            });
        }
    }
    out
}

pub fn detect_value_mentions(sentence: &Sentence) -> Vec<Mention> {
    value_mentions_in(&sentence.text, &sentence.mentions)
}

fn enrich_sentences(page: &Page) -> Page {
    let mut page = page.clone();
    let aliases = page.aliases.clone();
    let topic = page.topic_entity.clone();
    for s in page.paragraphs.iter_mut().flatten() {
        let selfs = self_mentions_in(&s.text, &s.mentions, &aliases, &topic);
        s.mentions.extend(selfs);
        let values = value_mentions_in(&s.text, &s.mentions);
        s.mentions.extend(values);
        s.mentions.sort_by_key(|m| m.start);
    }
    page
}

/// Links unlinked table cells of `page` to entities of related sentences,
/// falling back to a unique-cell entity. Related sentences are those on the
/// same page, then on pages hyperlinking to it (in page-id order).
pub fn link_table_cells(page: &Page, store: &CorpusStore) -> Vec<Table> {
    let inlinks = store.inlinks();
    link_table_cells_with(page, store, inlinks.get(page.id.as_str()))
}

fn link_table_cells_with(page: &Page, store: &CorpusStore, linking: Option<&BTreeSet<&str>>) -> Vec<Table> {
    let mut related: Vec<&Sentence> = page.sentences().collect();
    if let Some(pages) = linking {
        for id in pages {
            if *id == page.id {
                continue;
            }
            if let Some(p) = store.page(id) {
                related.extend(p.sentences());
            }
        }
    }
    let mut tables = page.tables.clone();
    for table in &mut tables {
        let ti = table.locator.table;
        for (ri, row) in table.rows.iter_mut().enumerate() {
            for (ci, cell) in row.iter_mut().enumerate() {
                if !cell.mentions.is_empty() {
                    continue;
                }
                let trimmed = cell.text.trim();
                if trimmed.is_empty() {
                    continue;
                }
                let start = cell.text.len() - cell.text.trim_start().len();
                let end = start + trimmed.len();
                let entity = match_cell_text(trimmed, &related)
                    .unwrap_or_else(|| EntityId::unique_cell(&page.id, ti, ri, ci));
                cell.mentions.push(Mention {
                    entity,
                    start,
                    end,
                    source: MentionSource::CellLink,
                });
            }
        }
    }
    tables
}

fn match_cell_text(needle: &str, related: &[&Sentence]) -> Option<EntityId> {
    for s in related {
        for (ms, me) in find_occurrences(&s.text, needle) {
            if let Some(m) = s.mentions.iter().find(|m| m.start <= ms && me <= m.end) {
                return Some(m.entity.clone());
            }
        }
    }
    None
}

/// Runs self-mention, value and cell enrichment over every page.
pub fn enrich(store: CorpusStore) -> CorpusStore {
    let pages: Vec<Page> = store.pages.values().collect::<Vec<_>>().par_iter().map(|p| enrich_sentences(p)).collect();
    let mut staged = CorpusStore {
        pages: pages.into_iter().map(|p| (p.id.clone(), p)).collect(),
        alias_index: store.alias_index,
        stats: store.stats,
    };
    let inlinks = staged.inlinks();
    let linked: Vec<(String, Vec<Table>)> = staged
        .pages
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| (p.id.clone(), link_table_cells_with(p, &staged, inlinks.get(p.id.as_str()))))
        .collect();
    drop(inlinks);
    for (id, tables) in linked {
        if let Some(p) = staged.pages.get_mut(&id) {
            p.tables = tables;
        }
    }
    staged.rebuild_indexes();
    staged
}

/// Parse and enrich in one call.
pub fn ingest<R: BufRead>(reader: R) -> Result<CorpusStore> {
    Ok(enrich(parse_corpus(reader)?))
}
