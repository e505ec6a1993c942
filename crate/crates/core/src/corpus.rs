//! Canonical corpus types: entity ids, mentions, pages, sentences and tables.
//!
//! Entity ids are stored as their canonical string. The kind is recovered
//! from the prefix: `T:` temporal, `N:` numeric, `C:` unique table cell,
//! anything else is a page id.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum number of cells a table may hold.
pub const MAX_TABLE_CELLS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IdKind {
    Page,
    Temporal,
    Numeric,
    UniqueCell,
}

/// Coarse entity class used by the pairing constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntityClass {
    RealWorld,
    Value,
}

/// An entity identifier in canonical string form.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct EntityId(String);

impl EntityId {
    /// Parses and validates a canonical id string.
    pub fn parse(s: &str) -> Result<Self> {
        let malformed = || Error::MalformedId(s.to_string());
        if s.is_empty() || s.chars().any(char::is_whitespace) {
            return Err(malformed());
        }
        if let Some(v) = s.strip_prefix("T:") {
            if v.is_empty() {
                return Err(malformed());
            }
        } else if let Some(v) = s.strip_prefix("N:") {
            if v.is_empty() || v.parse::<f64>().is_err() {
                return Err(malformed());
            }
        } else if let Some(v) = s.strip_prefix("C:") {
            let parts: Vec<&str> = v.rsplitn(4, ':').collect();
            if parts.len() != 4 || parts[3].is_empty() {
                return Err(malformed());
            }
            for p in &parts[..3] {
                if p.parse::<usize>().is_err() {
                    return Err(malformed());
                }
            }
        } else if s.len() > 1 && s.as_bytes()[1] == b':' {
            // reserved single-letter prefix we do not know about
            return Err(malformed());
        }
        Ok(EntityId(s.to_string()))
    }

    pub fn page(id: &str) -> Result<Self> {
        let e = Self::parse(id)?;
        if e.kind() != IdKind::Page {
            return Err(Error::MalformedId(id.to_string()));
        }
        Ok(e)
    }

    pub fn temporal(value: &str) -> Self {
        EntityId(format!("T:{value}"))
    }

    pub fn numeric(value: &str) -> Self {
        EntityId(format!("N:{value}"))
    }

    pub fn unique_cell(page: &str, table: usize, row: usize, col: usize) -> Self {
        EntityId(format!("C:{page}:{table}:{row}:{col}"))
    }

    pub fn kind(&self) -> IdKind {
        match self.0.get(..2) {
            Some("T:") => IdKind::Temporal,
            Some("N:") => IdKind::Numeric,
            Some("C:") => IdKind::UniqueCell,
            _ => IdKind::Page,
        }
    }

    pub fn class(&self) -> EntityClass {
        match self.kind() {
            IdKind::Page | IdKind::UniqueCell => EntityClass::RealWorld,
            IdKind::Temporal | IdKind::Numeric => EntityClass::Value,
        }
    }

    pub fn is_real_world(&self) -> bool {
        self.class() == EntityClass::RealWorld
    }

    /// For page ids, the page id itself.
    pub fn page_id(&self) -> Option<&str> {
        (self.kind() == IdKind::Page).then_some(self.0.as_str())
    }

    /// `(page, table, row, col)` for unique-cell ids.
    pub fn cell_coords(&self) -> Option<(&str, usize, usize, usize)> {
        let v = self.0.strip_prefix("C:")?;
        let mut parts = v.rsplitn(4, ':');
        let col = parts.next()?.parse().ok()?;
        let row = parts.next()?.parse().ok()?;
        let table = parts.next()?.parse().ok()?;
        let page = parts.next()?;
        Some((page, table, row, col))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Classifies a canonical id string.
pub fn entity_kind(id: &str) -> Result<EntityClass> {
    Ok(EntityId::parse(id)?.class())
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl PartialOrd for EntityId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EntityId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl Serialize for EntityId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        EntityId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Where a mention came from. Declaration order is overlap priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MentionSource {
    Hyperlink,
    SelfMention,
    ValueDetector,
    CellLink,
}

impl MentionSource {
    pub const ALL: [MentionSource; 4] = [
        MentionSource::Hyperlink,
        MentionSource::SelfMention,
        MentionSource::ValueDetector,
        MentionSource::CellLink,
    ];
}

/// An entity mention over a half-open byte range of its owning text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub entity: EntityId,
    pub start: usize,
    pub end: usize,
    pub source: MentionSource,
}

impl Mention {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }

    pub fn surface<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

/// Checks that `[start, end)` is a non-empty range on char boundaries of `text`.
pub fn valid_span(text: &str, start: usize, end: usize) -> bool {
    start < end && end <= text.len() && text.is_char_boundary(start) && text.is_char_boundary(end)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceLoc {
    pub page: String,
    pub paragraph: usize,
    pub sentence: usize,
}

impl fmt::Display for SentenceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/p{}/s{}", self.page, self.paragraph, self.sentence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TableLoc {
    pub page: String,
    pub table: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub mentions: Vec<Mention>,
    pub locator: SentenceLoc,
}

impl Sentence {
    /// Distinct entities mentioned in the sentence, in id order.
    pub fn entities(&self) -> BTreeSet<&EntityId> {
        self.mentions.iter().map(|m| &m.entity).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    pub mentions: Vec<Mention>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub locator: TableLoc,
    pub caption: String,
    /// Row-major grid; row 0 is the header row.
    pub rows: Vec<Vec<Cell>>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Table {
    pub fn cell(&self, row: usize, col: usize) -> Option<&Cell> {
        self.rows.get(row)?.get(col)
    }

    /// Distinct entities in one row.
    pub fn row_entities(&self, row: usize) -> BTreeSet<&EntityId> {
        self.rows[row]
            .iter()
            .flat_map(|c| c.mentions.iter().map(|m| &m.entity))
            .collect()
    }

    /// Page ids this table links to through hyperlinks.
    pub fn link_targets(&self) -> BTreeSet<&str> {
        self.rows
            .iter()
            .flatten()
            .flat_map(|c| c.mentions.iter())
            .filter(|m| m.source == MentionSource::Hyperlink)
            .filter_map(|m| m.entity.page_id())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub id: String,
    pub title: String,
    pub aliases: Vec<String>,
    pub topic_entity: EntityId,
    pub paragraphs: Vec<Vec<Sentence>>,
    pub tables: Vec<Table>,
    /// Page ids linked from anywhere on this page.
    pub outlinks: BTreeSet<String>,
}

impl Page {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.paragraphs.iter().flatten()
    }

    pub fn sentence(&self, paragraph: usize, sentence: usize) -> Option<&Sentence> {
        self.paragraphs.get(paragraph)?.get(sentence)
    }

    /// Recomputes `outlinks` from hyperlink mentions in sentences and cells.
    pub fn recompute_outlinks(&mut self) {
        let mut out = BTreeSet::new();
        let sentence_mentions = self.paragraphs.iter().flatten().flat_map(|s| s.mentions.iter());
        let cell_mentions = self
            .tables
            .iter()
            .flat_map(|t| t.rows.iter().flatten())
            .flat_map(|c| c.mentions.iter());
        for m in sentence_mentions.chain(cell_mentions) {
            if m.source == MentionSource::Hyperlink {
                if let Some(p) = m.entity.page_id() {
                    out.insert(p.to_string());
                }
            }
        }
        self.outlinks = out;
    }
}

/// Unordered entity pair, stored with `lo < hi` in canonical-string order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub lo: EntityId,
    pub hi: EntityId,
}

impl PairKey {
    pub fn contains(&self, e: &EntityId) -> bool {
        &self.lo == e || &self.hi == e
    }

    /// The member that is not `e`, if `e` is a member.
    pub fn other(&self, e: &EntityId) -> Option<&EntityId> {
        if &self.lo == e {
            Some(&self.hi)
        } else if &self.hi == e {
            Some(&self.lo)
        } else {
            None
        }
    }

    pub fn has_real_world(&self) -> bool {
        self.lo.is_real_world() || self.hi.is_real_world()
    }

    /// The entity both pairs share, when they share exactly one.
    pub fn shared_with(&self, other: &PairKey) -> Option<&EntityId> {
        let shared: Vec<&EntityId> = [&self.lo, &self.hi]
            .into_iter()
            .filter(|e| other.contains(e))
            .collect();
        match shared.as_slice() {
            [e] => Some(e),
            _ => None,
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

pub fn make_pair_key(e1: EntityId, e2: EntityId) -> Result<PairKey> {
    match e1.cmp(&e2) {
        Ordering::Less => Ok(PairKey { lo: e1, hi: e2 }),
        Ordering::Greater => Ok(PairKey { lo: e2, hi: e1 }),
        Ordering::Equal => Err(Error::IdenticalEntities(e1.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(s: &str) -> EntityId {
        EntityId::parse(s).unwrap()
    }

    #[test]
    fn pair_key_is_sorted() {
        let k = make_pair_key(id("P2"), id("P1")).unwrap();
        assert_eq!(k, make_pair_key(id("P1"), id("P2")).unwrap());
        assert_eq!(k.lo.as_str(), "P1");

        let k = make_pair_key(id("P1"), id("T:1986")).unwrap();
        assert_eq!(k.lo.as_str(), "P1");
        assert!("P1" < "T:1986");
    }

    #[test]
    fn identical_entities_rejected() {
        assert!(matches!(
            make_pair_key(id("P1"), id("P1")),
            Err(Error::IdenticalEntities(_))
        ));
    }

    #[test]
    fn entity_classes() {
        assert_eq!(entity_kind("P7").unwrap(), EntityClass::RealWorld);
        assert_eq!(entity_kind("T:1986").unwrap(), EntityClass::Value);
        assert_eq!(entity_kind("N:42").unwrap(), EntityClass::Value);
        assert_eq!(entity_kind("C:P3:0:2:1").unwrap(), EntityClass::RealWorld);
        for bad in ["", "C:P3:0:x:1", "C:P3:1", "N:abc", "T:", "X:foo", "has space"] {
            assert!(matches!(entity_kind(bad), Err(Error::MalformedId(_))), "{bad}");
        }
    }

    #[test]
    fn cell_coords_allow_colons_in_page_ids() {
        let e = EntityId::unique_cell("Talk:X", 1, 2, 3);
        assert_eq!(e.cell_coords(), Some(("Talk:X", 1, 2, 3)));
        assert_eq!(EntityId::parse(e.as_str()).unwrap(), e);
    }

    #[test]
    fn shared_entity() {
        let a = make_pair_key(id("A"), id("B")).unwrap();
        let b = make_pair_key(id("B"), id("C")).unwrap();
        let c = make_pair_key(id("C"), id("D")).unwrap();
        assert_eq!(a.shared_with(&b), Some(&id("B")));
        assert_eq!(a.shared_with(&c), None);
        assert_eq!(a.shared_with(&a), None);
    }

    fn arb_id() -> impl Strategy<Value = EntityId> {
        prop_oneof![
            "[A-Z][a-z0-9_]{0,6}".prop_map(|s| EntityId::parse(&s).unwrap()),
            (1000u32..3000).prop_map(|y| EntityId::temporal(&y.to_string())),
            (0u32..100000).prop_map(|n| EntityId::numeric(&n.to_string())),
            ("[A-Z][a-z]{0,4}", 0usize..5, 0usize..9, 0usize..9)
                .prop_map(|(p, t, r, c)| EntityId::unique_cell(&p, t, r, c)),
        ]
    }

    proptest! {
        #[test]
        fn pair_key_commutes(a in arb_id(), b in arb_id()) {
            prop_assume!(a != b);
            let k1 = make_pair_key(a.clone(), b.clone()).unwrap();
            let k2 = make_pair_key(b, a).unwrap();
            prop_assert!(k1.lo < k1.hi);
            prop_assert_eq!(&k1, &k2);
            let again = make_pair_key(k1.lo.clone(), k1.hi.clone()).unwrap();
            prop_assert_eq!(k1, again);
        }

        #[test]
        fn ids_round_trip(a in arb_id()) {
            let json = serde_json::to_string(&a).unwrap();
            let back: EntityId = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&back, &a);
            prop_assert_eq!(EntityId::parse(a.as_str()).unwrap(), a);
        }
    }
}
