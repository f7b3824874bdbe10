//! On-disk formats.
//!
//! * word vectors: text, one `token v1 … v_dim` entry per line; an optional
//!   leading `count dim` header line is skipped
//! * lexicon: JSON `[{"label": …, "count": …}, …]`
//! * hierarchy: JSON `{"coarse": [names…], "fine": [{"label": …, "coarse_index": …}, …]}`
//! * ground truth: JSON lines `{"image_id", "objects": [{"label", "bbox"}], "relations": [{"subj", "obj", "predicate"}]}`
//! * predictions: JSON lines `{"image_id", "triplets": [{"subj_label", "subj_bbox", "obj_label", "obj_bbox", "predicate", "score"}]}`
//!
//! Boxes are `[x1, y1, x2, y2]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use hgsg_core::hierarchy::{HierarchyMap, PredicateLexicon, WordVectorTable};
use hgsg_core::sgeval::{BBox, GroundTruthGraph, GtRelation, ImagePredictions, LabeledBox, PredictionTriplet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn json_error(path: &Path, e: serde_json::Error) -> CliError {
    parse_error(path, e.line(), e.to_string())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn parse_word_vectors(text: &str, path: &Path) -> Result<WordVectorTable> {
    let mut table: Option<WordVectorTable> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if table.is_none() && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() < 2 {
            return Err(parse_error(path, lineno, format!("token {:?} has no vector", fields[0])));
        }
        let values = fields[1..]
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_error(path, lineno, format!("bad component {f:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let t = match &mut table {
            Some(t) => t,
            None => table.insert(WordVectorTable::new(values.len())?),
        };
        if values.len() != t.dim() {
            return Err(parse_error(path, lineno, format!("expected {} components, found {}", t.dim(), values.len())));
        }
        t.insert(fields[0], values)?;
    }
    table.ok_or_else(|| CliError::Invalid { path: path.to_path_buf(), message: "no word vectors".into() })
}

pub fn read_word_vectors(path: &Path) -> Result<WordVectorTable> {
    parse_word_vectors(&read_text(path)?, path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconEntry {
    pub label: String,
    pub count: u64,
}

pub fn parse_lexicon(text: &str, path: &Path) -> Result<Vec<(String, u64)>> {
    let entries: Vec<LexiconEntry> = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    Ok(entries.into_iter().map(|e| (e.label, e.count)).collect())
}

pub fn read_lexicon(path: &Path) -> Result<Vec<(String, u64)>> {
    parse_lexicon(&read_text(path)?, path)
}

pub fn lexicon_json(lexicon: &PredicateLexicon) -> String {
    let entries: Vec<LexiconEntry> =
        lexicon.entries().map(|(label, count)| LexiconEntry { label: label.to_string(), count }).collect();
    to_json(&entries)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HierarchyFile {
    coarse: Vec<String>,
    fine: Vec<FineEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FineEntry {
    label: String,
    coarse_index: usize,
}

pub fn hierarchy_json(map: &HierarchyMap) -> String {
    let file = HierarchyFile {
        coarse: map.coarse_names().to_vec(),
        fine: map
            .fine_labels()
            .iter()
            .zip(map.fine_to_coarse())
            .map(|(label, &coarse_index)| FineEntry { label: label.clone(), coarse_index })
            .collect(),
    };
    to_json(&file)
}

fn line_of_nth(text: &str, needle: &str, nth: usize) -> usize {
    text.lines().enumerate().filter(|(_, l)| l.contains(needle)).nth(nth).map_or(0, |(i, _)| i + 1)
}

pub fn parse_hierarchy(text: &str, path: &Path) -> Result<HierarchyMap> {
    let file: HierarchyFile = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    let mut seen = BTreeSet::new();
    for entry in &file.fine {
        if !seen.insert(entry.label.as_str()) {
            let needle = serde_json::to_string(&entry.label).expect("string");
            return Err(parse_error(path, line_of_nth(text, &needle, 1), format!("duplicate fine label {needle}")));
        }
    }
    let (labels, parents) = file.fine.into_iter().map(|e| (e.label, e.coarse_index)).unzip();
    HierarchyMap::new(labels, file.coarse, parents)
        .map_err(|e| CliError::Invalid { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_hierarchy(path: &Path) -> Result<HierarchyMap> {
    parse_hierarchy(&read_text(path)?, path)
}

/// Every label must have a parent in `map`.
pub fn check_hierarchy_covers(map: &HierarchyMap, labels: &[String], path: &Path) -> Result<()> {
    map.check_covers(labels).map_err(|e| CliError::Invalid { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub label: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRecord {
    pub subj: usize,
    pub obj: usize,
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtRecord {
    pub image_id: String,
    pub objects: Vec<ObjectRecord>,
    #[serde(default)]
    pub relations: Vec<RelationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletRecord {
    pub subj_label: String,
    pub subj_bbox: [f64; 4],
    pub obj_label: String,
    pub obj_bbox: [f64; 4],
    pub predicate: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredRecord {
    pub image_id: String,
    #[serde(default)]
    pub triplets: Vec<TripletRecord>,
}

/// A record with the line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Located<T> {
    pub line: usize,
    pub value: T,
}

/// One JSON value per non-blank line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<Located<T>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|value| Located { line: i + 1, value })
                .map_err(|e| parse_error(path, i + 1, e.to_string()))
        })
        .collect()
}

pub fn jsonl<T: Serialize>(records: &[T]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
}

/// String labels ↔ dense ids, ids in sorted label order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        let names: Vec<String> = set.into_iter().map(str::to_string).collect();
        let ids = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Vocab { names, ids }
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Ground truth and predictions with labels replaced by ids.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub gts: Vec<GroundTruthGraph>,
    pub preds: Vec<ImagePredictions>,
    pub objects: Vocab,
    /// Predicate names in id order.
    pub predicates: Vec<String>,
}

fn bbox(c: [f64; 4], path: &Path, line: usize) -> Result<BBox> {
    BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| parse_error(path, line, e.to_string()))
}

/// Resolves labels. With `hierarchy`, predicate ids are the hierarchy's
/// fine indices and every predicate must appear in it; otherwise ids are
/// assigned in sorted order over both files.
pub fn encode(
    gt: &[Located<GtRecord>],
    gt_path: &Path,
    pred: &[Located<PredRecord>],
    pred_path: &Path,
    hierarchy: Option<(&HierarchyMap, &Path)>,
) -> Result<EvalData> {
    let object_labels = gt
        .iter()
        .flat_map(|r| r.value.objects.iter().map(|o| o.label.as_str()))
        .chain(pred.iter().flat_map(|r| r.value.triplets.iter().flat_map(|t| [t.subj_label.as_str(), t.obj_label.as_str()])));
    let objects = Vocab::from_labels(object_labels);
    let used_predicates = Vocab::from_labels(
        gt.iter()
            .flat_map(|r| r.value.relations.iter().map(|x| x.predicate.as_str()))
            .chain(pred.iter().flat_map(|r| r.value.triplets.iter().map(|t| t.predicate.as_str()))),
    );
    let predicates: Vec<String> = match hierarchy {
        Some((map, path)) => {
            check_hierarchy_covers(map, used_predicates.names(), path)?;
            map.fine_labels().to_vec()
        }
        None => used_predicates.names().to_vec(),
    };
    let predicate_ids: BTreeMap<&str, usize> = predicates.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let obj_id = |l: &str| objects.id(l).expect("vocab covers every label");
    let pred_id = |p: &str| predicate_ids[p];

    let gts = gt
        .iter()
        .map(|Located { line, value: r }| {
            let objs = r
                .objects
                .iter()
                .map(|o| Ok(LabeledBox { label: obj_id(&o.label), bbox: bbox(o.bbox, gt_path, *line)? }))
                .collect::<Result<Vec<_>>>()?;
            let rels = r
                .relations
                .iter()
                .map(|x| GtRelation { subject: x.subj, object: x.obj, predicate: pred_id(&x.predicate) })
                .collect();
            GroundTruthGraph::new(r.image_id.clone(), objs, rels).map_err(|e| parse_error(gt_path, *line, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let preds = pred
        .iter()
        .map(|Located { line, value: r }| {
            let triplets = r
                .triplets
                .iter()
                .map(|t| {
                    if !t.score.is_finite() {
                        return Err(parse_error(pred_path, *line, format!("non-finite score {}", t.score)));
                    }
                    Ok(PredictionTriplet {
                        subject: LabeledBox { label: obj_id(&t.subj_label), bbox: bbox(t.subj_bbox, pred_path, *line)? },
                        object: LabeledBox { label: obj_id(&t.obj_label), bbox: bbox(t.obj_bbox, pred_path, *line)? },
                        predicate: pred_id(&t.predicate),
                        score: t.score,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ImagePredictions { image_id: r.image_id.clone(), triplets })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalData { gts, preds, objects, predicates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn word_vectors_with_header_and_errors() {
        let t = parse_word_vectors("2 3\non 1 0 0\n\nunder 0 1 0.5\n", p()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("under"), Some(&[0.0, 1.0, 0.5][..]));
        match parse_word_vectors("on 1 0\nin 1 x\n", p()) {
            Err(CliError::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_word_vectors("on 1 0\nin 1\n", p()), Err(CliError::Parse { line: 2, .. })));
        assert!(matches!(parse_word_vectors("\n", p()), Err(CliError::Invalid { .. })));
    }

    #[test]
    fn hierarchy_round_trip_and_errors() {
        let map = HierarchyMap::new(
            vec!["on".into(), "sitting on".into(), "in".into()],
            vec!["on".into(), "in".into()],
            vec![0, 0, 1],
        )
        .unwrap();
        let text = hierarchy_json(&map);
        assert_eq!(parse_hierarchy(&text, p()).unwrap(), map);

        let dup = text.replacen("\"sitting on\"", "\"on\"", 1);
        match parse_hierarchy(&dup, p()) {
            Err(e @ CliError::Parse { .. }) => assert_eq!(e.exit_code(), 2),
            other => panic!("{other:?}"),
        }
        match parse_hierarchy("{\"coarse\": [\"a\"],\n \"fine\": [\n{\"label\": 3}]}", p()) {
            Err(CliError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        let missing = check_hierarchy_covers(&map, &["on".into(), "near".into()], p()).unwrap_err();
        assert!(matches!(missing, CliError::Invalid { .. }), "{missing:?}");
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let text = "{\"image_id\": \"a\", \"objects\": []}\n\n{\"image_id\": 5}\n";
        match parse_jsonl::<GtRecord>(text, p()) {
            Err(CliError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn encoding_shares_label_ids() {
        let gt = parse_jsonl::<GtRecord>(
            r#"{"image_id":"x","objects":[{"label":"man","bbox":[0,0,1,1]},{"label":"horse","bbox":[1,1,3,3]}],"relations":[{"subj":0,"obj":1,"predicate":"riding"}]}"#,
            p(),
        )
        .unwrap();
        let pred = parse_jsonl::<PredRecord>(
            r#"{"image_id":"x","triplets":[{"subj_label":"man","subj_bbox":[0,0,1,1],"obj_label":"horse","obj_bbox":[1,1,3,3],"predicate":"riding","score":0.9}]}"#,
            p(),
        )
        .unwrap();
        let data = encode(&gt, p(), &pred, p(), None).unwrap();
        assert_eq!(data.objects.names(), ["horse", "man"]);
        let t = data.gts[0].triplet(0);
        assert_eq!(t, data.preds[0].triplets[0].triplet());

        let bad = parse_jsonl::<GtRecord>(r#"{"image_id":"x","objects":[{"label":"man","bbox":[2,0,1,1]}]}"#, p()).unwrap();
        assert!(matches!(encode(&bad, p(), &[], p(), None), Err(CliError::Parse { line: 1, .. })));
    }
}
