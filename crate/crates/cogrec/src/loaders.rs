//! Dataset files: MovieLens `.dat`, CSV with a header row and JSON lines
//! described by a field mapping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cogrec_core::data::{preprocess_with, Catalog, DataError, Interaction, ItemMeta};
use serde::Deserialize;

use crate::config::{Config, DatasetFormat};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("dataset needs '{0}' to be set")]
    Missing(&'static str),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A line that was skipped, with the reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Malformed {
    pub file: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct Loaded {
    pub interactions: Vec<Interaction>,
    pub items: Vec<ItemMeta>,
    pub malformed: Vec<Malformed>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, LoadError> {
    std::fs::read(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

/// UTF-8 when valid, otherwise each byte as a Latin-1 code point.
fn decode(bytes: Vec<u8>) -> String {
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().into_iter().map(char::from).collect(),
    }
}

fn read_text(path: &Path) -> Result<String, LoadError> {
    read_bytes(path).map(decode)
}

/// Lowercase with runs of other characters collapsed to `-`.
pub fn normalize_value(raw: &str) -> String {
    let mut out = String::new();
    for c in raw.trim().chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn parse_rating_line(line: &str) -> Result<Interaction, String> {
    let f: Vec<&str> = line.split("::").collect();
    if f.len() != 4 {
        return Err(format!("expected 4 '::' fields, found {}", f.len()));
    }
    let rating: f64 = f[2].trim().parse().map_err(|_| format!("bad rating '{}'", f[2]))?;
    let ts: i64 = f[3].trim().parse().map_err(|_| format!("bad timestamp '{}'", f[3]))?;
    if f[0].trim().is_empty() || f[1].trim().is_empty() {
        return Err("empty user or item".into());
    }
    Ok(Interaction::new(f[0].trim(), f[1].trim(), rating, ts))
}

fn parse_movie_line(line: &str) -> Result<ItemMeta, String> {
    let f: Vec<&str> = line.splitn(3, "::").collect();
    if f.len() != 3 || f[0].trim().is_empty() {
        return Err("expected id::title::genres".into());
    }
    let mut item = ItemMeta::new(f[0].trim(), f[1].trim());
    for g in f[2].split('|').map(normalize_value).filter(|g| !g.is_empty()) {
        item = item.with("genre", &g);
    }
    Ok(item)
}

/// `ratings.dat` and, when present, `movies.dat` in `dir`.
pub fn load_movielens(dir: &Path) -> Result<Loaded, LoadError> {
    let mut out = Loaded::default();
    let ratings = dir.join("ratings.dat");
    for (i, line) in read_text(&ratings)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_rating_line(line) {
            Ok(x) => out.interactions.push(x),
            Err(reason) => out.malformed.push(Malformed { file: ratings.clone(), line: i + 1, reason }),
        }
    }
    let movies = dir.join("movies.dat");
    if movies.exists() {
        for (i, line) in read_text(&movies)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_movie_line(line) {
                Ok(m) => out.items.push(m),
                Err(reason) => out.malformed.push(Malformed { file: movies.clone(), line: i + 1, reason }),
            }
        }
    }
    Ok(out)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::io::Cursor<Vec<u8>>>, LoadError> {
    let bytes = read_bytes(path)?;
    Ok(csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(std::io::Cursor::new(bytes)))
}

fn header_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, LoadError> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| LoadError::Format {
        path: path.to_path_buf(),
        line: 1,
        message: format!("missing column '{name}'"),
    })
}

/// Interactions with columns `user,item,rating,timestamp`; item metadata
/// with `item,title` and one column per attribute, multiple values split
/// on `|`.
pub fn load_csv(interactions: &Path, items: Option<&Path>) -> Result<Loaded, LoadError> {
    let mut out = Loaded::default();
    let mut r = csv_reader(interactions)?;
    if read_bytes(interactions)?.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(out);
    }
    let headers = r.headers().map_err(|e| fmt_err(interactions, 1, e))?.clone();
    let cols: Vec<usize> = ["user", "item", "rating", "timestamp"]
        .into_iter()
        .map(|c| header_index(&headers, c, interactions))
        .collect::<Result<_, _>>()?;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            let get = |c: usize| rec.get(cols[c]).filter(|s| !s.is_empty()).ok_or(format!("missing field {}", headers[cols[c]].to_string()));
            let rating: f64 = get(2)?.parse().map_err(|_| "bad rating".to_string())?;
            let ts: i64 = get(3)?.parse().map_err(|_| "bad timestamp".to_string())?;
            Ok(Interaction::new(get(0)?, get(1)?, rating, ts))
        });
        match parsed {
            Ok(x) => out.interactions.push(x),
            Err(reason) => out.malformed.push(Malformed { file: interactions.to_path_buf(), line, reason }),
        }
    }
    if let Some(path) = items {
        let mut r = csv_reader(path)?;
        let headers = r.headers().map_err(|e| fmt_err(path, 1, e))?.clone();
        let id = header_index(&headers, "item", path)?;
        let title = header_index(&headers, "title", path)?;
        for (i, rec) in r.records().enumerate() {
            let rec = match rec {
                Ok(rec) => rec,
                Err(e) => {
                    out.malformed.push(Malformed { file: path.to_path_buf(), line: i + 2, reason: e.to_string() });
                    continue;
                }
            };
            let (Some(item_id), Some(item_title)) = (rec.get(id).filter(|s| !s.is_empty()), rec.get(title)) else {
                out.malformed.push(Malformed { file: path.to_path_buf(), line: i + 2, reason: "missing item or title".into() });
                continue;
            };
            let mut meta = ItemMeta::new(item_id, item_title);
            for (c, name) in headers.iter().enumerate() {
                if c == id || c == title {
                    continue;
                }
                for v in rec.get(c).unwrap_or("").split('|').map(normalize_value).filter(|v| !v.is_empty()) {
                    meta = meta.with(&normalize_value(name), &v);
                }
            }
            out.items.push(meta);
        }
    }
    Ok(out)
}

fn fmt_err(path: &Path, line: usize, e: impl std::fmt::Display) -> LoadError {
    LoadError::Format { path: path.to_path_buf(), line, message: e.to_string() }
}

/// Field roles for JSON-lines sources.
///
/// ```toml
/// user = "user_id"
/// item = "business_id"
/// rating = "stars"
/// timestamp = "date"          # integer, or a date "YYYY-MM-DD[ hh:mm:ss]"
/// title = "name"              # in the items file
/// [attributes]
/// category = { field = "categories", split = "," }
/// city = { field = "city" }
/// ```
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JsonlMapping {
    pub user: String,
    pub item: String,
    pub rating: Option<String>,
    pub timestamp: String,
    #[serde(default = "default_title")]
    pub title: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeField>,
}

fn default_title() -> String {
    String::from("title")
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AttributeField {
    pub field: String,
    pub split: Option<String>,
}

impl JsonlMapping {
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        toml::from_str(&read_text(path)?).map_err(|e| fmt_err(path, 0, e))
    }
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Seconds since the epoch from an integer or a `YYYY-MM-DD[ hh:mm:ss]` date.
fn timestamp(v: &serde_json::Value) -> Option<i64> {
    if let Some(n) = v.as_i64() {
        return Some(n);
    }
    let s = v.as_str()?.trim();
    if let Ok(n) = s.parse::<i64>() {
        return Some(n);
    }
    let (date, time) = s.split_once([' ', 'T']).unwrap_or((s, "00:00:00"));
    let d: Vec<i64> = date.split('-').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    let t: Vec<i64> = time.trim_end_matches('Z').split(':').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    let [y, m, day] = d[..] else { return None };
    let (hh, mm, ss) = (*t.first()?, *t.get(1).unwrap_or(&0), *t.get(2).unwrap_or(&0));
    Some(days_from_civil(y, m, day) * 86_400 + hh * 3600 + mm * 60 + ss)
}

/// Days since 1970-01-01 in the proleptic Gregorian calendar.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let doy = (153 * (m + if m > 2 { -3 } else { 9 }) + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

pub fn load_jsonl(interactions: &Path, items: Option<&Path>, mapping: &JsonlMapping) -> Result<Loaded, LoadError> {
    let mut out = Loaded::default();
    for (i, line) in read_text(interactions)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<serde_json::Value>(line).map_err(|e| e.to_string()).and_then(|v| {
            let user = scalar(&v[&mapping.user]).ok_or(format!("missing '{}'", mapping.user))?;
            let item = scalar(&v[&mapping.item]).ok_or(format!("missing '{}'", mapping.item))?;
            let rating = match &mapping.rating {
                Some(f) => v[f].as_f64().ok_or(format!("missing '{f}'"))?,
                None => 1.0,
            };
            let ts = timestamp(&v[&mapping.timestamp]).ok_or(format!("bad '{}'", mapping.timestamp))?;
            Ok(Interaction::new(user.as_str(), item.as_str(), rating, ts))
        });
        match parsed {
            Ok(x) => out.interactions.push(x),
            Err(reason) => out.malformed.push(Malformed { file: interactions.to_path_buf(), line: i + 1, reason }),
        }
    }
    if let Some(path) = items {
        for (i, line) in read_text(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<serde_json::Value>(line).map_err(|e| e.to_string()).and_then(|v| {
                let id = scalar(&v[&mapping.item]).ok_or(format!("missing '{}'", mapping.item))?;
                let title = scalar(&v[&mapping.title]).unwrap_or_else(|| id.clone());
                let mut meta = ItemMeta::new(id.as_str(), &title);
                for (attr, spec) in &mapping.attributes {
                    let raw: Vec<String> = match &v[&spec.field] {
                        serde_json::Value::Array(xs) => xs.iter().filter_map(scalar).collect(),
                        other => scalar(other).into_iter().collect(),
                    };
                    for r in raw {
                        let parts: Vec<&str> = match &spec.split {
                            Some(sep) => r.split(sep.as_str()).collect(),
                            None => vec![r.as_str()],
                        };
                        for p in parts.into_iter().map(normalize_value).filter(|p| !p.is_empty()) {
                            meta = meta.with(attr, &p);
                        }
                    }
                }
                Ok(meta)
            });
            match parsed {
                Ok(m) => out.items.push(m),
                Err(reason) => out.malformed.push(Malformed { file: path.to_path_buf(), line: i + 1, reason }),
            }
        }
    }
    Ok(out)
}

/// Gives repeated titles a ` (id)` suffix and fills in missing items so
/// every interaction has metadata.
pub fn build_catalog(mut items: Vec<ItemMeta>, interactions: &[Interaction]) -> Result<Catalog, DataError> {
    let mut seen_ids = std::collections::BTreeSet::new();
    items.retain(|i| seen_ids.insert(i.id.clone()));
    for x in interactions {
        if seen_ids.insert(x.item.clone()) {
            items.push(ItemMeta::new(x.item.clone(), &format!("Item {}", x.item)));
        }
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for i in &items {
        *counts.entry(i.title.clone()).or_default() += 1;
    }
    for i in &mut items {
        if counts[&i.title] > 1 || i.title.contains(['"', '\n']) {
            i.title = format!("{} ({})", i.title.replace(['"', '\n'], "'"), i.id);
        }
    }
    Catalog::infer(1, items)
}

/// A dataset ready for evaluation.
pub struct Dataset {
    pub id: String,
    pub catalog: Arc<Catalog>,
    pub interactions: Vec<Interaction>,
    pub malformed: Vec<Malformed>,
}

/// Loads and filters the configured dataset.
pub fn load_dataset(config: &Config) -> Result<Dataset, LoadError> {
    let d = &config.dataset;
    let path = || d.path.as_deref().ok_or(LoadError::Missing("dataset.path"));
    let (catalog, raw, malformed) = match d.format {
        DatasetFormat::Synthetic => {
            let s = crate::synthetic::generate(&config.synthetic, config.experiment.seed)?;
            (s.catalog, s.interactions, Vec::new())
        }
        DatasetFormat::CaseStudy => {
            let f = crate::fixtures::case_study();
            (f.catalog, f.interactions, Vec::new())
        }
        DatasetFormat::MovielensDat => {
            let l = load_movielens(path()?)?;
            (build_catalog(l.items, &l.interactions)?, l.interactions, l.malformed)
        }
        DatasetFormat::Csv => {
            let l = load_csv(path()?, d.items.as_deref())?;
            (build_catalog(l.items, &l.interactions)?, l.interactions, l.malformed)
        }
        DatasetFormat::Jsonl => {
            let mapping = JsonlMapping::load(d.mapping.as_deref().ok_or(LoadError::Missing("dataset.mapping"))?)?;
            let l = load_jsonl(path()?, d.items.as_deref(), &mapping)?;
            (build_catalog(l.items, &l.interactions)?, l.interactions, l.malformed)
        }
    };
    for m in malformed.iter().take(20) {
        log::warn!("skipped {}:{}: {}", m.file.display(), m.line, m.reason);
    }
    let interactions = if d.format == DatasetFormat::CaseStudy { raw } else { preprocess_with(raw, d.min_interactions)? };
    Ok(Dataset { id: d.id.clone(), catalog: Arc::new(catalog), interactions, malformed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movielens_line_layout() {
        let x = parse_rating_line("1::1193::5::978300760").unwrap();
        assert_eq!(x, Interaction::new(1u64, 1193u64, 5.0, 978300760));
        assert!(parse_rating_line("1::1193::5").is_err());
        let m = parse_movie_line("1::Toy Story (1995)::Animation|Children's|Comedy").unwrap();
        assert_eq!(m.title, "Toy Story (1995)");
        let genres: Vec<&str> = m.values().map(|a| a.as_str()).collect();
        assert_eq!(genres, ["animation", "children-s", "comedy"]);
    }

    #[test]
    fn latin1_titles_are_decoded() {
        assert_eq!(decode(vec![b'C', 0xe9, b'z', b'a']), "Céza");
        assert_eq!(decode("Céza".as_bytes().to_vec()), "Céza");
    }

    #[test]
    fn movielens_directory_with_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ratings.dat"), "1::10::5::100\nbroken\n2::10::3::101\n").unwrap();
        std::fs::write(dir.path().join("movies.dat"), b"10::Am\xe9lie (2001)::Comedy|Romance\n").unwrap();
        let l = load_movielens(dir.path()).unwrap();
        assert_eq!(l.interactions.len(), 2);
        assert_eq!(l.malformed.len(), 1);
        assert_eq!(l.malformed[0].line, 2);
        assert_eq!(l.items[0].title, "Amélie (2001)");
    }

    #[test]
    fn csv_fixture_gives_six_interactions() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "user,item,rating,timestamp\n1,a,5,1\n1,b,4,2\n2,a,3,3\n2,c,5,4\n3,b,2,5\n3,c,1,6\n").unwrap();
        let items = dir.path().join("items.csv");
        std::fs::write(&items, "item,title,genre\na,Alpha,Drama|Crime\nb,Beta,Comedy\n").unwrap();
        let l = load_csv(&p, Some(&items)).unwrap();
        assert_eq!(l.interactions.len(), 6);
        assert_eq!(l.items.len(), 2);
        assert!(l.items[0].values().any(|v| v.as_str() == "crime"));
        let c = build_catalog(l.items, &l.interactions).unwrap();
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn empty_files_load_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "").unwrap();
        let l = load_csv(&p, None).unwrap();
        assert!(l.interactions.is_empty() && l.items.is_empty());
        std::fs::write(dir.path().join("ratings.dat"), "").unwrap();
        let l = load_movielens(dir.path()).unwrap();
        assert!(l.interactions.is_empty() && l.items.is_empty());
    }

    #[test]
    fn jsonl_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let map: JsonlMapping = toml::from_str(
            "user = \"user_id\"\nitem = \"business_id\"\nrating = \"stars\"\ntimestamp = \"date\"\ntitle = \"name\"\n\
             [attributes]\ncategory = { field = \"categories\", split = \",\" }\ncity = { field = \"city\" }\n",
        )
        .unwrap();
        let inter = dir.path().join("reviews.jsonl");
        std::fs::write(
            &inter,
            "{\"user_id\":\"u1\",\"business_id\":\"b1\",\"stars\":4.0,\"date\":\"2018-07-07 22:09:11\"}\n{\"user_id\":\"u1\"}\n",
        )
        .unwrap();
        let items = dir.path().join("business.jsonl");
        std::fs::write(&items, "{\"business_id\":\"b1\",\"name\":\"Cafe\",\"categories\":\"Coffee & Tea, Bakeries\",\"city\":\"Las Vegas\"}\n")
            .unwrap();
        let l = load_jsonl(&inter, Some(&items), &map).unwrap();
        assert_eq!(l.interactions.len(), 1);
        assert_eq!(l.malformed.len(), 1);
        assert_eq!(l.interactions[0].timestamp, 1_531_001_351);
        let values: Vec<&str> = l.items[0].values().map(|a| a.as_str()).collect();
        assert_eq!(values, ["bakeries", "coffee-tea", "las-vegas"]);
    }

    #[test]
    fn civil_dates() {
        assert_eq!(days_from_civil(1970, 1, 1), 0);
        assert_eq!(days_from_civil(2000, 3, 1), 11_017);
        assert_eq!(timestamp(&serde_json::json!("1970-01-02")), Some(86_400));
    }
}
