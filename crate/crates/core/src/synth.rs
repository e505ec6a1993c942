//! Synthetic corpora: the bundled mini corpus and seeded random corpora.
//!
//! Text uses a small markup where `[[Surface|Page_id]]` is a hyperlink and
//! `[[Surface]]` links to the page whose id is the surface with spaces
//! replaced by underscores.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{LinkRecord, PageRecord, TableRecord, TextRecord};

/// Parses link markup into plain text and link records.
pub fn marked(src: &str) -> TextRecord {
    let mut text = String::new();
    let mut links = Vec::new();
    let mut rest = src;
    while let Some(open) = rest.find("[[") {
        text.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("]]").expect("unclosed link markup");
        let inner = &after[..close];
        let (surface, target) = match inner.split_once('|') {
            Some((s, t)) => (s.to_string(), t.to_string()),
            None => (inner.to_string(), inner.replace(' ', "_")),
        };
        let start = text.len();
        text.push_str(&surface);
        links.push(LinkRecord {
            start,
            end: text.len(),
            target,
        });
        rest = &after[close + 2..];
    }
    text.push_str(rest);
    TextRecord { text, links }
}

fn para(lines: &[String]) -> Vec<TextRecord> {
    lines.iter().map(|l| marked(l)).collect()
}

fn table(caption: &str, rows: Vec<Vec<String>>) -> TableRecord {
    TableRecord {
        caption: caption.to_string(),
        rows: rows.iter().map(|r| r.iter().map(|c| marked(c)).collect()).collect(),
    }
}

fn page(id: &str, title: &str, aliases: &[&str], paragraphs: Vec<Vec<TextRecord>>, tables: Vec<TableRecord>) -> PageRecord {
    PageRecord {
        id: id.to_string(),
        title: title.to_string(),
        aliases: aliases.iter().map(|s| s.to_string()).collect(),
        paragraphs,
        tables,
    }
}

fn pid(name: &str) -> String {
    name.replace(' ', "_")
}

struct Band {
    name: &'static str,
    genre: &'static str,
    city: &'static str,
    label: &'static str,
    formed: u32,
    signed: u32,
    albums: [(&'static str, u32, &'static str); 2],
}

const GENRES: [(&str, &str); 5] = [
    ("progressive metal", "a subgenre of heavy metal built on complex song structures"),
    ("thrash metal", "an aggressive style of heavy metal"),
    ("post-punk", "a broad style of rock music that followed punk"),
    ("shoegaze", "a style of alternative rock known for layered guitars"),
    ("jazz fusion", "a genre that mixes jazz harmony with rock rhythms"),
];

const CITIES: [(&str, &str); 6] = [
    ("Hartford", "Connecticut"),
    ("Leeds", "England"),
    ("Rio de Janeiro", "Brazil"),
    ("Lisbon", "Portugal"),
    ("Osaka", "Japan"),
    ("Tampere", "Finland"),
];

const LABELS: [(&str, u32, &str); 5] = [
    ("Metal Blade Records", 1982, "Los Angeles"),
    ("Northgate Records", 1979, "Leeds"),
    ("Blue Harbor Music", 1991, "Lisbon"),
    ("Crescent Sound", 1988, "Osaka"),
    ("Ironwood Records", 1985, "Hartford"),
];

const BANDS: [Band; 8] = [
    Band {
        name: "Fates Warning",
        genre: "progressive metal",
        city: "Hartford",
        label: "Metal Blade Records",
        formed: 1982,
        signed: 1984,
        albums: [("Awaken the Guardian", 1986, "Anders Kvist"), ("Perfect Symmetry", 1989, "Mara Solberg")],
    },
    Band {
        name: "Iron Vale",
        genre: "thrash metal",
        city: "Hartford",
        label: "Ironwood Records",
        formed: 1984,
        signed: 1985,
        albums: [("Rust Cathedral", 1987, "Anders Kvist"), ("Broken Anvil", 1990, "Anders Kvist")],
    },
    Band {
        name: "Ashen Tide",
        genre: "thrash metal",
        city: "Leeds",
        label: "Northgate Records",
        formed: 1983,
        signed: 1986,
        albums: [("Salt and Cinder", 1988, "Mara Solberg"), ("Low Tide Rising", 1991, "Anders Kvist")],
    },
    Band {
        name: "Velvet Meridian",
        genre: "post-punk",
        city: "Leeds",
        label: "Northgate Records",
        formed: 1979,
        signed: 1980,
        albums: [("Grey Avenues", 1981, "Mara Solberg"), ("Lantern Hours", 1983, "Mara Solberg")],
    },
    Band {
        name: "Glass Orchard",
        genre: "shoegaze",
        city: "Lisbon",
        label: "Blue Harbor Music",
        formed: 1990,
        signed: 1992,
        albums: [("Pale Fields", 1993, "Ines Moura"), ("Weightless Summer", 1995, "Ines Moura")],
    },
    Band {
        name: "Paper Satellites",
        genre: "shoegaze",
        city: "Osaka",
        label: "Crescent Sound",
        formed: 1991,
        signed: 1993,
        albums: [("Quiet Orbit", 1994, "Ines Moura"), ("Static Bloom", 1997, "Mara Solberg")],
    },
    Band {
        name: "Silent Harbor",
        genre: "progressive metal",
        city: "Lisbon",
        label: "Blue Harbor Music",
        formed: 1993,
        signed: 1995,
        albums: [("Tidal Engines", 1996, "Anders Kvist"), ("Northern Vaults", 1999, "Ines Moura")],
    },
    Band {
        name: "Northern Lanterns",
        genre: "jazz fusion",
        city: "Tampere",
        label: "Crescent Sound",
        formed: 1986,
        signed: 1988,
        albums: [("Aurora Suite", 1989, "Ines Moura"), ("Frozen Lakes", 1992, "Anders Kvist")],
    },
];

const PRODUCERS: [(&str, &str); 3] = [("Anders Kvist", "Tampere"), ("Mara Solberg", "Leeds"), ("Ines Moura", "Lisbon")];

struct Competition {
    name: &'static str,
    sport: &'static str,
    founded: u32,
    city: &'static str,
    teams: u32,
}

const COMPETITIONS: [Competition; 5] = [
    Competition { name: "Copa Arena", sport: "beach soccer", founded: 1998, city: "Rio de Janeiro", teams: 8 },
    Competition { name: "Atlantic Sand Cup", sport: "beach soccer", founded: 2003, city: "Lisbon", teams: 12 },
    Competition { name: "Harbor Futsal Cup", sport: "futsal", founded: 1998, city: "Osaka", teams: 16 },
    Competition { name: "Leeds Futsal League", sport: "futsal", founded: 1995, city: "Leeds", teams: 10 },
    Competition { name: "Lisbon Beach Masters", sport: "beach soccer", founded: 2010, city: "Lisbon", teams: 6 },
];

const ORDINALS: [&str; 2] = ["debut", "second"];

fn l(s: &str) -> String {
    format!("[[{s}]]")
}

fn band_page(b: &Band) -> PageRecord {
    let [(a1, y1, _), (a2, y2, _)] = b.albums;
    let p0 = vec![
        format!("{} is a {} band from {}, formed in {}.", b.name, l(b.genre), l(b.city), b.formed),
        format!("{} signed with {} in {}.", b.name, l(b.label), b.signed),
        format!("{} released its debut album {}, a {} record, in {}.", b.name, l(a1), l(b.genre), y1),
    ];
    let p1 = vec![
        format!("{} followed it with {} in {}, again on {}.", b.name, l(a2), y2, l(b.label)),
        format!("The band still performs in {} every summer.", l(b.city)),
        format!("{} remains one of the best known acts from {}.", b.name, l(b.city)),
    ];
    let rows = vec![
        vec!["Album".into(), "Year".into(), "Label".into(), "Notes".into()],
        vec![a1.into(), y1.to_string(), b.label.into(), "Debut".into()],
        vec![a2.into(), y2.to_string(), b.label.into(), format!("Remastered {}", y2 + 20)],
    ];
    page(
        &pid(b.name),
        b.name,
        &[],
        vec![para(&p0), para(&p1)],
        vec![table("Discography", rows)],
    )
}

fn album_page(b: &Band, i: usize) -> PageRecord {
    let (name, year, producer) = b.albums[i];
    let chart = 3 + (name.len() % 17);
    let sold = 40 + 15 * (name.len() % 9);
    let p0 = vec![
        format!(
            "{} is the {} studio album by the {} band {}, released in {} through {}.",
            name,
            ORDINALS[i],
            l(b.genre),
            l(b.name),
            year,
            l(b.label)
        ),
        format!("{} was recorded in {} and issued by {}.", name, l(b.city), l(b.label)),
        format!("Critics described {} as a landmark {} record.", name, l(b.genre)),
    ];
    let p1 = vec![
        format!("In {year}, {name} reached number {chart} on the national chart."),
        format!("The album was produced by {}.", l(producer)),
        format!("{name} sold {sold},000 copies in its first year."),
    ];
    page(&pid(name), name, &[], vec![para(&p0), para(&p1)], vec![])
}

fn producer_page(name: &str, city: &str) -> PageRecord {
    let mut rows = vec![vec!["Album".to_string(), "Artist".to_string(), "Year".to_string()]];
    let mut credits = Vec::new();
    for b in &BANDS {
        for (a, y, p) in b.albums {
            if p == name {
                rows.push(vec![l(a), l(b.name), y.to_string()]);
                credits.push(a);
            }
        }
    }
    let p0 = vec![
        format!("{} is a record producer from {}.", name, l(city)),
        format!("{} first worked on {} and {}.", name, l(credits[0]), l(credits[1])),
    ];
    page(&pid(name), name, &[], vec![para(&p0)], vec![table("Productions", rows)])
}

fn genre_page(name: &str, gloss: &str) -> PageRecord {
    let title = capitalize(name);
    let bands: Vec<&Band> = BANDS.iter().filter(|b| b.genre == name).collect();
    let mut p0 = vec![format!("{title} is {gloss}.")];
    match bands.as_slice() {
        [one] => p0.push(format!("A well known {name} band is {}.", l(one.name))),
        [first, second, ..] => p0.push(format!(
            "Notable {name} bands include {} and {}.",
            l(first.name),
            l(second.name)
        )),
        [] => {}
    }
    page(&pid(name), &title, &[name], vec![para(&p0)], vec![])
}

fn city_page(name: &str, region: &str) -> PageRecord {
    let bands: Vec<&Band> = BANDS.iter().filter(|b| b.city == name).collect();
    let mut p0 = vec![format!("{name} is a city in {region}.")];
    for b in bands {
        p0.push(format!("{name} is home to the {} band {}.", b.genre, l(b.name)));
    }
    for c in COMPETITIONS.iter().filter(|c| c.city == name) {
        p0.push(format!("{name} hosts the {} tournament {}.", c.sport, l(c.name)));
    }
    page(&pid(name), name, &[], vec![para(&p0)], vec![])
}

fn label_page(name: &str, founded: u32, base: &str) -> PageRecord {
    let bands: Vec<&Band> = BANDS.iter().filter(|b| b.label == name).collect();
    let mut p0 = vec![format!("{name} is an independent record label founded in {founded} in {base}.")];
    let mut rows = vec![vec!["Band".to_string(), "Signed".to_string()]];
    for b in &bands {
        p0.push(format!("{name} signed {} in {}.", l(b.name), b.signed));
        rows.push(vec![b.name.to_string(), b.signed.to_string()]);
    }
    let short = name.split(' ').next().unwrap_or(name);
    page(&pid(name), name, &[short], vec![para(&p0)], vec![table("Roster", rows)])
}

fn sport_page(name: &str, gloss: &str) -> PageRecord {
    let title = capitalize(name);
    let comps: Vec<&Competition> = COMPETITIONS.iter().filter(|c| c.sport == name).collect();
    let mut p0 = vec![format!("{title} is {gloss}.")];
    let links: Vec<String> = comps.iter().map(|c| l(c.name)).collect();
    p0.push(format!("Major {name} tournaments include {}.", links.join(" and ")));
    let mut rows = vec![vec!["Tournament".to_string(), "Founded".to_string(), "Teams".to_string()]];
    for c in &comps {
        rows.push(vec![c.name.to_string(), c.founded.to_string(), c.teams.to_string()]);
    }
    rows.push(vec!["aka Sand Classic".to_string(), "".to_string(), "4".to_string()]);
    page(&pid(name), &title, &[name], vec![para(&p0)], vec![table("Tournaments", rows)])
}

fn competition_page(c: &Competition) -> PageRecord {
    let p0 = vec![
        format!("{} is an international {} competition established in {}.", c.name, l(c.sport), c.founded),
        format!("The first {} edition in {} took place in {}.", c.name, c.founded, l(c.city)),
        format!("{} is the oldest {} event in {}.", c.name, l(c.sport), l(c.city)),
    ];
    let p1 = vec![format!("{} teams compete in {} each year.", c.teams, c.name)];
    page(&pid(c.name), c.name, &[], vec![para(&p0), para(&p1)], vec![])
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

/// The bundled 50-page corpus, in page-id order.
pub fn mini_corpus() -> Vec<PageRecord> {
    let mut pages = Vec::new();
    for b in &BANDS {
        pages.push(band_page(b));
        pages.push(album_page(b, 0));
        pages.push(album_page(b, 1));
    }
    for (g, gloss) in GENRES {
        pages.push(genre_page(g, gloss));
    }
    for (c, r) in CITIES {
        pages.push(city_page(c, r));
    }
    for (n, f, base) in LABELS {
        pages.push(label_page(n, f, base));
    }
    for (n, c) in PRODUCERS {
        pages.push(producer_page(n, c));
    }
    pages.push(sport_page("beach soccer", "a variant of association football played on sand"));
    pages.push(sport_page("futsal", "a form of association football played indoors"));
    for c in &COMPETITIONS {
        pages.push(competition_page(c));
    }
    pages.sort_by(|a, b| a.id.cmp(&b.id));
    pages
}

pub fn to_jsonl(pages: &[PageRecord]) -> String {
    let mut out = String::new();
    for p in pages {
        out.push_str(&serde_json::to_string(p).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn mini_corpus_jsonl() -> String {
    to_jsonl(&mini_corpus())
}

/// Limits for [`random_corpus`].
#[derive(Debug, Clone, Copy)]
pub struct RandomCorpusConfig {
    pub max_pages: usize,
    /// Cap on sentences plus tables across the corpus.
    pub max_units: usize,
}

impl Default for RandomCorpusConfig {
    fn default() -> Self {
        RandomCorpusConfig { max_pages: 12, max_units: 100 }
    }
}

const WORDS: [&str; 16] = [
    "river", "stone", "north", "album", "league", "castle", "song", "market", "garden", "tower", "signal", "harbor",
    "winter", "record", "club", "bridge",
];

/// A seeded random corpus with dense cross-links, values and tables, meant
/// to exercise every branch of pairing.
pub fn random_corpus(seed: u64, cfg: RandomCorpusConfig) -> Vec<PageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pages = rng.random_range(2..=cfg.max_pages.max(2));
    let titles: Vec<String> = (0..n_pages).map(|i| format!("Topic {}", WORDS[i % WORDS.len()]) + &format!(" {i}")).collect();
    let ids: Vec<String> = (0..n_pages).map(|i| format!("R{i}")).collect();
    let values = ["1998", "2003", "42", "7", "1,200", "2001-05-04"];
    let mut budget = cfg.max_units;
    let mut pages = Vec::new();

    let phrase = |rng: &mut ChaCha8Rng, own: usize| -> String {
        match rng.random_range(0..5) {
            0 => titles[own].clone(),
            1 => {
                let t = rng.random_range(0..n_pages);
                format!("[[{}|{}]]", titles[t], ids[t])
            }
            2 => values.choose(rng).expect("non-empty").to_string(),
            3 => {
                // a mention of another page without a hyperlink
                titles[rng.random_range(0..n_pages)].clone()
            }
            _ => WORDS.choose(rng).expect("non-empty").to_string(),
        }
    };

    for i in 0..n_pages {
        if budget == 0 {
            break;
        }
        let mut paragraphs = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let mut p = Vec::new();
            for _ in 0..rng.random_range(1..=3) {
                if budget == 0 {
                    break;
                }
                budget -= 1;
                let n = rng.random_range(2..=5);
                let parts: Vec<String> = (0..n).map(|_| phrase(&mut rng, i)).collect();
                let mut line = parts.join(" and ");
                line.push('.');
                p.push(line);
            }
            if !p.is_empty() {
                // duplicate a sentence sometimes to hit the identical-text rule
                if budget > 0 && rng.random_bool(0.1) {
                    budget -= 1;
                    let d = p[0].clone();
                    p.push(d);
                }
                paragraphs.push(para(&p));
            }
        }
        let mut tables = Vec::new();
        if budget > 0 && rng.random_bool(0.5) {
            budget -= 1;
            let cols = rng.random_range(1..=4);
            let rows_n = rng.random_range(1..=4);
            let mut rows = vec![(0..cols).map(|c| format!("Col {c}")).collect::<Vec<_>>()];
            for _ in 0..rows_n {
                rows.push(
                    (0..cols)
                        .map(|_| match rng.random_range(0..4) {
                            0 => {
                                let t = rng.random_range(0..n_pages);
                                format!("[[{}|{}]]", titles[t], ids[t])
                            }
                            1 => titles[rng.random_range(0..n_pages)].clone(),
                            2 => values.choose(&mut rng).expect("non-empty").to_string(),
                            _ => WORDS.choose(&mut rng).expect("non-empty").to_string(),
                        })
                        .collect(),
                );
            }
            tables.push(table("Random", rows));
        }
        let aliases: Vec<&str> = if rng.random_bool(0.3) { vec![WORDS[i % WORDS.len()]] } else { vec![] };
        pages.push(page(&ids[i], &titles[i], &aliases, paragraphs, tables));
    }
    pages
}
