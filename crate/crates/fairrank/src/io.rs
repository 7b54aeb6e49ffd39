//! Line-delimited file formats.
//!
//! * Embeddings: `id<TAB>v1,v2,...,vD`, one record per line.
//! * Tags: `id<TAB>tag1,tag2,...`; the tag list may be empty.
//! * Group mapping: YAML with a `groups:` list and a `rules:` map from tag
//!   to group.
//! * Representations: the embeddings format with `group:<name>` ids. A
//!   preceding `# group:<name> sample_size=N fraction=F seed=S` comment
//!   carries the sampling metadata.
//! * Curves: `lambda<TAB>p@k<TAB>fr@k`, `NA` for undefined values.
//!
//! Blank lines and lines starting with `#` are ignored on input. Floats are
//! written in shortest round-trip form, so a load/save/load cycle is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fairrank_core::tuning::CurvePoint;
use fairrank_core::{Catalog, FairnessRepresentation, GroupMapping, RepresentationSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EmbeddingRecord = (String, Vec<f64>);
pub type TagRecord = (String, Vec<String>);

const GROUP_PREFIX: &str = "group:";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Parses embeddings text; `path` is only used in error messages.
pub fn parse_embeddings(text: &str, path: &Path) -> Result<Vec<EmbeddingRecord>> {
    records(text)
        .map(|(line, rec)| {
            let (id, values) =
                rec.split_once('\t').ok_or_else(|| parse_error(path, line, "expected `id<TAB>values`"))?;
            let id = id.trim();
            if id.is_empty() {
                return Err(parse_error(path, line, "empty id"));
            }
            let vector = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_error(path, line, format!("`{}`: bad number `{}`", id, v.trim())))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((id.to_string(), vector))
        })
        .collect()
}

pub fn parse_tags(text: &str, path: &Path) -> Result<Vec<TagRecord>> {
    records(text)
        .map(|(line, rec)| {
            let (id, tags) = rec.split_once('\t').unwrap_or((rec, ""));
            let id = id.trim();
            if id.is_empty() {
                return Err(parse_error(path, line, "empty id"));
            }
            let tags = tags.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect();
            Ok((id.to_string(), tags))
        })
        .collect()
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    parse_embeddings(&read_text(path)?, path)
}

pub fn read_tags(path: &Path) -> Result<Vec<TagRecord>> {
    parse_tags(&read_text(path)?, path)
}

fn push_vector(out: &mut String, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{x}").unwrap();
    }
}

pub fn format_embeddings<'a>(records: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
    let mut out = String::new();
    for (id, v) in records {
        out.push_str(id);
        out.push('\t');
        push_vector(&mut out, v);
        out.push('\n');
    }
    out
}

pub fn format_tags<'a, I, T>(records: I) -> String
where
    I: IntoIterator<Item = (&'a str, T)>,
    T: IntoIterator,
    T::Item: AsRef<str>,
{
    let mut out = String::new();
    for (id, tags) in records {
        out.push_str(id);
        out.push('\t');
        for (i, t) in tags.into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(t.as_ref());
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    groups: Vec<String>,
    #[serde(default)]
    rules: BTreeMap<String, String>,
}

pub fn parse_mapping(text: &str, path: &Path) -> Result<GroupMapping> {
    let file: MappingFile =
        serde_yaml::from_str(text).map_err(|source| Error::Yaml { path: path.to_path_buf(), source })?;
    Ok(GroupMapping::new(file.groups, file.rules)?)
}

pub fn read_mapping(path: &Path) -> Result<GroupMapping> {
    parse_mapping(&read_text(path)?, path)
}

pub fn format_mapping(mapping: &GroupMapping) -> String {
    let file = MappingFile { groups: mapping.groups().to_vec(), rules: mapping.rules().clone() };
    serde_yaml::to_string(&file).expect("mapping serializes")
}

/// The three files that make up a catalog on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogPaths {
    pub embeddings: PathBuf,
    pub tags: PathBuf,
    pub mapping: PathBuf,
}

impl CatalogPaths {
    /// `embeddings.tsv`, `tags.tsv` and `mapping.yaml` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self { embeddings: dir.join("embeddings.tsv"), tags: dir.join("tags.tsv"), mapping: dir.join("mapping.yaml") }
    }
}

pub fn load_catalog(embeddings: &Path, tags: &Path, mapping: &Path) -> Result<Catalog> {
    let mapping = read_mapping(mapping)?;
    let embeddings = read_embeddings(embeddings)?;
    let tags = read_tags(tags)?;
    Ok(Catalog::from_records(embeddings, tags, mapping)?)
}

pub fn load_catalog_from(paths: &CatalogPaths) -> Result<Catalog> {
    load_catalog(&paths.embeddings, &paths.tags, &paths.mapping)
}

/// Writes all three catalog files in id order.
pub fn save_catalog(catalog: &Catalog, paths: &CatalogPaths) -> Result<()> {
    write_text(&paths.embeddings, &format_embeddings(catalog.iter().map(|it| (it.id.as_str(), &it.vector[..]))))?;
    write_text(&paths.tags, &format_tags(catalog.iter().map(|it| (it.id.as_str(), &it.tags))))?;
    write_text(&paths.mapping, &format_mapping(catalog.mapping()))
}

pub fn format_representations(reps: &RepresentationSet) -> String {
    let mut out = String::new();
    for r in reps {
        writeln!(
            out,
            "# {GROUP_PREFIX}{} sample_size={} fraction={} seed={}",
            r.group, r.sample_size, r.sampling_fraction, r.seed
        )
        .unwrap();
        out.push_str(&format_embeddings([(format!("{GROUP_PREFIX}{}", r.group).as_str(), &r.vector[..])]));
    }
    out
}

struct RepMeta {
    sample_size: usize,
    fraction: f64,
    seed: u64,
}

fn parse_rep_meta(fields: &str, path: &Path, line: usize) -> Result<RepMeta> {
    let mut meta = RepMeta { sample_size: 1, fraction: 1.0, seed: 0 };
    for field in fields.split_whitespace() {
        let bad = || parse_error(path, line, format!("bad metadata field `{field}`"));
        let (key, value) = field.split_once('=').ok_or_else(bad)?;
        match key {
            "sample_size" => meta.sample_size = value.parse().map_err(|_| bad())?,
            "fraction" => meta.fraction = value.parse().map_err(|_| bad())?,
            "seed" => meta.seed = value.parse().map_err(|_| bad())?,
            _ => return Err(bad()),
        }
    }
    Ok(meta)
}

pub fn parse_representations(text: &str, path: &Path) -> Result<RepresentationSet> {
    let mut meta = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix("# ").and_then(|l| l.strip_prefix(GROUP_PREFIX)) {
            let (group, fields) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.insert(group.to_string(), parse_rep_meta(fields, path, i + 1)?);
        }
    }
    let mut reps = Vec::new();
    for (id, vector) in parse_embeddings(text, path)? {
        let group = id.strip_prefix(GROUP_PREFIX).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("representation id `{id}` lacks the `{GROUP_PREFIX}` prefix"),
        })?;
        let mut rep = FairnessRepresentation::external(group, vector);
        if let Some(m) = meta.get(group) {
            rep.sample_size = m.sample_size;
            rep.sampling_fraction = m.fraction;
            rep.seed = m.seed;
        }
        reps.push(rep);
    }
    Ok(RepresentationSet::new(reps)?)
}

pub fn read_representations(path: &Path) -> Result<RepresentationSet> {
    parse_representations(&read_text(path)?, path)
}

pub fn write_representations(path: &Path, reps: &RepresentationSet) -> Result<()> {
    write_text(path, &format_representations(reps))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn format_curve(curve: &[CurvePoint]) -> String {
    let mut out = String::from("# lambda\tp@k\tfr@k\n");
    for pt in curve {
        writeln!(out, "{}\t{}\t{}", pt.lambda, opt(pt.p_at_k), opt(pt.fr_at_k)).unwrap();
    }
    out
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    write_text(path, &format_curve(curve))
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn embeddings_skip_comments_and_report_lines() {
        let recs = parse_embeddings("# header\n\na\t1,2.5\nb\t-0,1e-3\n", p()).unwrap();
        assert_eq!(recs, [("a".into(), vec![1.0, 2.5]), ("b".into(), vec![0.0, 0.001])]);
        let err = parse_embeddings("a\t1,2\nb\t1,x\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_embeddings("a 1,2\n", p()).is_err());
    }

    #[test]
    fn tags_allow_empty_lists() {
        let recs = parse_tags("a\tMan, beach\nb\t\nc\n", p()).unwrap();
        assert_eq!(recs[0].1, ["Man", "beach"]);
        assert!(recs[1].1.is_empty() && recs[2].1.is_empty());
    }

    #[test]
    fn mapping_round_trip() {
        let m = parse_mapping("groups: [M, W]\nrules:\n  man: M\n  woman: W\n", p()).unwrap();
        assert_eq!(m.groups(), ["M", "W"]);
        assert_eq!(parse_mapping(&format_mapping(&m), p()).unwrap(), m);
        assert!(parse_mapping("groups: [M]\nrules: {man: X}\n", p()).is_err());
        assert!(matches!(parse_mapping("groups: [", p()), Err(Error::Yaml { .. })));
    }

    #[test]
    fn representation_metadata_round_trip() {
        let mut a = FairnessRepresentation::external("m", vec![0.1, 1.0 / 3.0]);
        a.sample_size = 73;
        a.sampling_fraction = 0.25;
        a.seed = 9;
        let b = FairnessRepresentation::external("w", vec![-2.0, 5e-300]);
        let set = RepresentationSet::new(vec![a, b]).unwrap();
        let text = format_representations(&set);
        assert_eq!(parse_representations(&text, p()).unwrap(), set);
        assert!(parse_representations("m\t1,2\n", p()).is_err());
    }

    #[test]
    fn curve_marks_undefined() {
        let pts = [CurvePoint { lambda: 0.5, p_at_k: Some(0.9), fr_at_k: None, entropy_at_k: None }];
        assert_eq!(format_curve(&pts), "# lambda\tp@k\tfr@k\n0.5\t0.9\tNA\n");
    }
}
