//! Scene-graph evaluation: IoU, triplet matching and Recall@K.
//!
//! Three tasks share one matching loop and differ only in the localization
//! test applied on top of label equality:
//!
//! - `PredDet`: subject label, predicate and object label must agree.
//! - `PhrDet`: additionally the subject∪object boxes must overlap with
//!   IoU ≥ threshold.
//! - `SGGen`: additionally subject boxes and object boxes must each overlap
//!   with IoU ≥ threshold (or strictly greater, when configured).
//!
//! Recall@K sorts predictions by score (stable), keeps the top K and matches
//! greedily in rank order: each prediction takes the first unmatched GT
//! relation it satisfies.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::hierarchy::HierarchyMap;

/// Axis-aligned box in pixel coordinates with `x2 > x1` and `y2 > y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "[f64; 4]", into = "[f64; 4]"))]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x2 <= x1 || y2 <= y1 {
            return Err(Error::Validation(format!("degenerate box [{x1}, {y1}, {x2}, {y2}]")));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

/// Intersection area over union area; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Tightest box covering both inputs.
pub fn union_box(a: &BBox, b: &BBox) -> BBox {
    BBox { x1: a.x1.min(b.x1), y1: a.y1.min(b.y1), x2: a.x2.max(b.x2), y2: a.y2.max(b.y2) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledBox {
    pub label: usize,
    pub bbox: BBox,
}

/// Relation between two objects of a [`GroundTruthGraph`], by object index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GtRelation {
    pub subject: usize,
    pub object: usize,
    pub predicate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthGraph {
    pub image_id: String,
    pub objects: Vec<LabeledBox>,
    pub relations: Vec<GtRelation>,
}

impl GroundTruthGraph {
    /// Validates relation indices (in range, subject ≠ object).
    pub fn new(image_id: impl Into<String>, objects: Vec<LabeledBox>, relations: Vec<GtRelation>) -> Result<Self> {
        let image_id = image_id.into();
        for (i, r) in relations.iter().enumerate() {
            if r.subject >= objects.len() || r.object >= objects.len() {
                return Err(Error::Validation(format!(
                    "image {image_id}: relation {i} refers to object outside 0..{}",
                    objects.len()
                )));
            }
            if r.subject == r.object {
                return Err(Error::Validation(format!("image {image_id}: relation {i} relates an object to itself")));
            }
        }
        Ok(GroundTruthGraph { image_id, objects, relations })
    }

    /// Relation `index` with its boxes resolved.
    pub fn triplet(&self, index: usize) -> Triplet {
        let r = self.relations[index];
        Triplet { subject: self.objects[r.subject], object: self.objects[r.object], predicate: r.predicate }
    }
}

/// Subject/predicate/object with boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub subject: LabeledBox,
    pub object: LabeledBox,
    pub predicate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionTriplet {
    pub subject: LabeledBox,
    pub object: LabeledBox,
    pub predicate: usize,
    pub score: f64,
}

impl PredictionTriplet {
    pub fn triplet(&self) -> Triplet {
        Triplet { subject: self.subject, object: self.object, predicate: self.predicate }
    }
}

/// All predictions for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePredictions {
    pub image_id: String,
    pub triplets: Vec<PredictionTriplet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Task {
    PredDet,
    PhrDet,
    #[cfg_attr(feature = "serde", serde(rename = "SGGen"))]
    SgGen,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PredDet, Task::PhrDet, Task::SgGen];

    pub fn name(self) -> &'static str {
        match self {
            Task::PredDet => "PredDet",
            Task::PhrDet => "PhrDet",
            Task::SgGen => "SGGen",
        }
    }

    /// Case-insensitive parse of `preddet`, `phrdet` or `sggen`.
    pub fn parse(s: &str) -> Result<Task> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parameter(format!("unknown task {s:?}")))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub iou_thresh: f64,
    /// SGGen requires IoU strictly above the threshold.
    pub sggen_strict: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { iou_thresh: 0.5, sggen_strict: false }
    }
}

/// Whether `pred` hits `gt` under `task`.
pub fn match_triplet(pred: &Triplet, gt: &Triplet, task: Task, cfg: &MatchConfig) -> bool {
    let labels = pred.subject.label == gt.subject.label
        && pred.object.label == gt.object.label
        && pred.predicate == gt.predicate;
    if !labels {
        return false;
    }
    match task {
        Task::PredDet => true,
        Task::PhrDet => {
            let p = union_box(&pred.subject.bbox, &pred.object.bbox);
            let g = union_box(&gt.subject.bbox, &gt.object.bbox);
            iou(&p, &g) >= cfg.iou_thresh
        }
        Task::SgGen => {
            let pass = |v: f64| if cfg.sggen_strict { v > cfg.iou_thresh } else { v >= cfg.iou_thresh };
            pass(iou(&pred.subject.bbox, &gt.subject.bbox)) && pass(iou(&pred.object.bbox, &gt.object.bbox))
        }
    }
}

/// Indices of `preds` sorted by descending score, ties in input order.
pub fn rank_predictions(preds: &[PredictionTriplet]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

/// Outcome of matching one image at one K.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecallCount {
    pub hits: usize,
    pub gt_count: usize,
    /// `(prediction index, GT relation index)` in rank order.
    pub matches: Vec<(usize, usize)>,
}

impl RecallCount {
    pub fn recall(&self) -> f64 {
        if self.gt_count == 0 {
            0.0
        } else {
            self.hits as f64 / self.gt_count as f64
        }
    }
}

/// Greedy one-to-one matching of the top-`k` predictions against `gt`.
pub fn recall_at_k(
    gt: &GroundTruthGraph,
    preds: &[PredictionTriplet],
    k: usize,
    task: Task,
    cfg: &MatchConfig,
) -> Result<RecallCount> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let gt_triplets: Vec<Triplet> = (0..gt.relations.len()).map(|i| gt.triplet(i)).collect();
    let mut taken = alloc::vec![false; gt_triplets.len()];
    let mut matches = Vec::new();
    for pi in rank_predictions(preds).into_iter().take(k) {
        let pred = preds[pi].triplet();
        if let Some(gi) = (0..gt_triplets.len()).find(|&gi| !taken[gi] && match_triplet(&pred, &gt_triplets[gi], task, cfg)) {
            taken[gi] = true;
            matches.push((pi, gi));
        }
    }
    Ok(RecallCount { hits: matches.len(), gt_count: gt_triplets.len(), matches })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub tasks: Vec<Task>,
    pub matching: MatchConfig,
    /// Pool hits and GT counts over the dataset instead of averaging
    /// per-image recalls.
    pub micro: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { ks: alloc::vec![50, 100], tasks: Task::ALL.to_vec(), matching: MatchConfig::default(), micro: false }
    }
}

/// Recall per task and K.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecallReport {
    pub recall: BTreeMap<Task, BTreeMap<usize, f64>>,
    /// Images with at least one GT relation.
    pub images: usize,
    pub gt_relations: usize,
    pub micro: bool,
}

impl RecallReport {
    pub fn get(&self, task: Task, k: usize) -> Option<f64> {
        self.recall.get(&task).and_then(|m| m.get(&k)).copied()
    }
}

/// Recall@K for every configured task and K over a dataset.
///
/// Images without GT relations are skipped. Images without predictions count
/// as zero hits. Aggregation runs in image-id order, so the result does not
/// depend on input order.
pub fn evaluate_dataset(gts: &[GroundTruthGraph], preds: &[ImagePredictions], cfg: &EvalConfig) -> Result<RecallReport> {
    if cfg.ks.contains(&0) {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let mut by_id: BTreeMap<&str, &GroundTruthGraph> = BTreeMap::new();
    for g in gts {
        if by_id.insert(g.image_id.as_str(), g).is_some() {
            return Err(Error::Data(format!("duplicate ground-truth image id {}", g.image_id)));
        }
    }
    let mut pred_by_id: BTreeMap<&str, &[PredictionTriplet]> = BTreeMap::new();
    for p in preds {
        if !by_id.contains_key(p.image_id.as_str()) {
            return Err(Error::Data(format!("predictions for unknown image id {}", p.image_id)));
        }
        if pred_by_id.insert(p.image_id.as_str(), &p.triplets).is_some() {
            return Err(Error::Data(format!("duplicate prediction image id {}", p.image_id)));
        }
    }

    let included: Vec<&GroundTruthGraph> = by_id.values().copied().filter(|g| !g.relations.is_empty()).collect();
    let gt_relations = included.iter().map(|g| g.relations.len()).sum();
    let mut recall = BTreeMap::new();
    for &task in &cfg.tasks {
        let mut per_k = BTreeMap::new();
        for &k in &cfg.ks {
            let mut hits_total = 0usize;
            let mut mean_sum = 0.0;
            for g in &included {
                let p = pred_by_id.get(g.image_id.as_str()).copied().unwrap_or(&[]);
                let count = recall_at_k(g, p, k, task, &cfg.matching)?;
                hits_total += count.hits;
                mean_sum += count.recall();
            }
            let value = if included.is_empty() {
                0.0
            } else if cfg.micro {
                hits_total as f64 / gt_relations as f64
            } else {
                mean_sum / included.len() as f64
            };
            per_k.insert(k, value);
        }
        recall.insert(task, per_k);
    }
    Ok(RecallReport { recall, images: included.len(), gt_relations, micro: cfg.micro })
}

/// Rewrites every predicate id through `map` for coarse-level evaluation.
pub fn map_predicates(
    gts: &[GroundTruthGraph],
    preds: &[ImagePredictions],
    map: &HierarchyMap,
) -> Result<(Vec<GroundTruthGraph>, Vec<ImagePredictions>)> {
    let coarse = |p: usize, image: &str| {
        map.coarse_of(p).ok_or_else(|| {
            Error::Data(format!("image {image}: predicate {p} outside the {} fine labels", map.fine_labels().len()))
        })
    };
    let gts = gts
        .iter()
        .map(|g| {
            let relations = g
                .relations
                .iter()
                .map(|r| Ok(GtRelation { predicate: coarse(r.predicate, &g.image_id)?, ..*r }))
                .collect::<Result<Vec<_>>>()?;
            Ok(GroundTruthGraph { relations, ..g.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let preds = preds
        .iter()
        .map(|p| {
            let triplets = p
                .triplets
                .iter()
                .map(|t| Ok(PredictionTriplet { predicate: coarse(t.predicate, &p.image_id)?, ..*t }))
                .collect::<Result<Vec<_>>>()?;
            Ok(ImagePredictions { image_id: p.image_id.to_string(), triplets })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((gts, preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn lb(label: usize, b: BBox) -> LabeledBox {
        LabeledBox { label, bbox: b }
    }

    fn scene() -> GroundTruthGraph {
        GroundTruthGraph::new(
            "img",
            vec![lb(1, bx(0., 0., 10., 10.)), lb(2, bx(20., 0., 30., 10.)), lb(3, bx(0., 20., 10., 30.))],
            vec![
                GtRelation { subject: 0, object: 1, predicate: 7 },
                GtRelation { subject: 2, object: 1, predicate: 8 },
            ],
        )
        .unwrap()
    }

    fn copy_pred(g: &GroundTruthGraph, rel: usize, score: f64) -> PredictionTriplet {
        let t = g.triplet(rel);
        PredictionTriplet { subject: t.subject, object: t.object, predicate: t.predicate, score }
    }

    #[test]
    fn iou_cases() {
        let a = bx(0., 0., 10., 10.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20., 20., 30., 30.)), 0.0);
        assert!((iou(&a, &bx(5., 0., 15., 10.)) - 1.0 / 3.0).abs() < 1e-12);
        // Touching edges do not overlap.
        assert_eq!(iou(&a, &bx(10., 0., 20., 10.)), 0.0);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(0., 0., 0., 5.).is_err());
        assert!(BBox::new(0., 5., 3., 1.).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 1.).is_err());
    }

    #[test]
    fn union_box_cases() {
        let a = bx(0., 0., 1., 1.);
        assert_eq!(union_box(&a, &a), a);
        assert_eq!(union_box(&a, &bx(2., 2., 3., 3.)), bx(0., 0., 3., 3.));
    }

    #[test]
    fn exact_copy_matches_every_task() {
        let g = scene();
        let p = copy_pred(&g, 0, 1.0).triplet();
        for task in Task::ALL {
            assert!(match_triplet(&p, &g.triplet(0), task, &MatchConfig::default()));
        }
    }

    #[test]
    fn shifted_boxes_only_pass_preddet() {
        // Object nested in subject, so the union box is the subject box.
        // Shifting both by d along x gives IoU (10-d)/(10+d) = 0.4 at d = 30/7.
        let g = GroundTruthGraph::new(
            "nest",
            vec![lb(1, bx(0., 0., 10., 10.)), lb(2, bx(2., 2., 8., 8.))],
            vec![GtRelation { subject: 0, object: 1, predicate: 7 }],
        )
        .unwrap();
        let t = g.triplet(0);
        let d = 30.0 / 7.0;
        let sh = |b: BBox| {
            let c = b.coords();
            bx(c[0] + d, c[1], c[2] + d, c[3])
        };
        let p = Triplet { subject: lb(1, sh(t.subject.bbox)), object: lb(2, sh(t.object.bbox)), predicate: 7 };
        assert!((iou(&t.subject.bbox, &p.subject.bbox) - 0.4).abs() < 1e-12);
        let pu = union_box(&p.subject.bbox, &p.object.bbox);
        let gu = union_box(&t.subject.bbox, &t.object.bbox);
        assert!((iou(&pu, &gu) - 0.4).abs() < 1e-12);
        let cfg = MatchConfig::default();
        assert!(match_triplet(&p, &t, Task::PredDet, &cfg));
        assert!(!match_triplet(&p, &t, Task::PhrDet, &cfg));
        assert!(!match_triplet(&p, &t, Task::SgGen, &cfg));
    }

    #[test]
    fn phrase_can_match_when_objects_do_not() {
        // Union boxes overlap well even though the subject box is off.
        let g = scene();
        let t = g.triplet(0);
        let p = Triplet { subject: lb(1, bx(0., 0., 4., 10.)), object: t.object, predicate: 7 };
        let cfg = MatchConfig::default();
        assert!(iou(&p.subject.bbox, &t.subject.bbox) < 0.5);
        assert!(match_triplet(&p, &t, Task::PhrDet, &cfg));
        assert!(!match_triplet(&p, &t, Task::SgGen, &cfg));
    }

    #[test]
    fn wrong_predicate_never_matches() {
        let g = scene();
        let mut p = copy_pred(&g, 0, 1.0);
        p.predicate = 99;
        for task in Task::ALL {
            assert!(!match_triplet(&p.triplet(), &g.triplet(0), task, &MatchConfig::default()));
        }
    }

    #[test]
    fn strict_sggen_threshold() {
        // IoU exactly 0.5: shift d with (10-d)/(10+d) = 1/2 → d = 10/3.
        let g = GroundTruthGraph::new(
            "x",
            vec![lb(0, bx(0., 0., 10., 10.)), lb(1, bx(0., 0., 8., 8.))],
            vec![GtRelation { subject: 0, object: 1, predicate: 0 }],
        )
        .unwrap();
        let d = 10.0 / 3.0;
        let p = Triplet { subject: lb(0, bx(d, 0., 10. + d, 10.)), object: lb(1, bx(0., 0., 8., 8.)), predicate: 0 };
        let v = iou(&p.subject.bbox, &g.triplet(0).subject.bbox);
        let mut cfg = MatchConfig { iou_thresh: v, sggen_strict: false };
        assert!(match_triplet(&p, &g.triplet(0), Task::SgGen, &cfg));
        cfg.sggen_strict = true;
        assert!(!match_triplet(&p, &g.triplet(0), Task::SgGen, &cfg));
    }

    #[test]
    fn recall_cases() {
        let g = scene();
        let cfg = MatchConfig::default();
        let perfect = [copy_pred(&g, 0, 0.9), copy_pred(&g, 1, 0.8)];
        assert_eq!(recall_at_k(&g, &perfect, 5, Task::SgGen, &cfg).unwrap().recall(), 1.0);
        let mut wrong = copy_pred(&g, 1, 0.95);
        wrong.predicate = 50;
        let half = [wrong, copy_pred(&g, 0, 0.5)];
        assert_eq!(recall_at_k(&g, &half, 2, Task::PredDet, &cfg).unwrap().recall(), 0.5);
        // The only correct prediction is ranked second.
        let single = GroundTruthGraph { relations: vec![g.relations[0]], ..g.clone() };
        let ranked = [wrong, copy_pred(&g, 0, 0.1)];
        assert_eq!(recall_at_k(&single, &ranked, 1, Task::PredDet, &cfg).unwrap().hits, 0);
        assert_eq!(recall_at_k(&single, &[], 50, Task::PredDet, &cfg).unwrap().gt_count, 1);
        assert!(recall_at_k(&g, &perfect, 0, Task::PredDet, &cfg).is_err());
    }

    #[test]
    fn duplicate_predictions_hit_once() {
        let g = scene();
        let preds = [copy_pred(&g, 0, 0.9), copy_pred(&g, 0, 0.8), copy_pred(&g, 0, 0.7)];
        let r = recall_at_k(&g, &preds, 10, Task::SgGen, &MatchConfig::default()).unwrap();
        assert_eq!(r.matches, vec![(0, 0)]);
    }

    #[test]
    fn score_ties_keep_input_order() {
        let g = scene();
        let preds = [copy_pred(&g, 1, 0.5), copy_pred(&g, 0, 0.5)];
        let r = recall_at_k(&g, &preds, 1, Task::PredDet, &MatchConfig::default()).unwrap();
        assert_eq!(r.matches, vec![(0, 1)]);
    }

    #[test]
    fn greedy_keeps_rank_priority_over_matching_size() {
        // Two GT relations share labels; the top prediction overlaps both
        // subject boxes, the second only the first one. Greedy gives the
        // first GT to the top prediction and the second prediction misses.
        let g = GroundTruthGraph::new(
            "dup",
            vec![
                lb(0, bx(0., 0., 10., 10.)),
                lb(0, bx(2., 0., 12., 10.)),
                lb(1, bx(50., 50., 60., 60.)),
            ],
            vec![
                GtRelation { subject: 0, object: 2, predicate: 3 },
                GtRelation { subject: 1, object: 2, predicate: 3 },
            ],
        )
        .unwrap();
        let obj = lb(1, bx(50., 50., 60., 60.));
        let top = PredictionTriplet { subject: lb(0, bx(1., 0., 11., 10.)), object: obj, predicate: 3, score: 0.9 };
        let second = PredictionTriplet { subject: lb(0, bx(-3., 0., 7., 10.)), object: obj, predicate: 3, score: 0.8 };
        let cfg = MatchConfig::default();
        assert!(iou(&second.subject.bbox, &g.objects[1].bbox) < 0.5);
        let r = recall_at_k(&g, &[top, second], 2, Task::SgGen, &cfg).unwrap();
        assert_eq!(r.hits, 1);
        assert_eq!(crate::reference::max_matching_hits(&g, &[top, second], 2, Task::SgGen, &cfg), 2);
    }

    #[test]
    fn dataset_aggregation() {
        let g1 = scene();
        let g2 = GroundTruthGraph { image_id: "b".into(), ..scene() };
        let empty = GroundTruthGraph::new("c", vec![], vec![]).unwrap();
        let preds = vec![ImagePredictions { image_id: "img".into(), triplets: vec![copy_pred(&g1, 0, 1.0)] }];
        let mut cfg = EvalConfig::default();
        let report = evaluate_dataset(&[g1.clone(), g2.clone(), empty.clone()], &preds, &cfg).unwrap();
        assert_eq!(report.images, 2);
        assert_eq!(report.get(Task::PredDet, 50), Some(0.25));
        cfg.micro = true;
        let report = evaluate_dataset(&[g1.clone(), g2, empty], &preds, &cfg).unwrap();
        assert_eq!(report.get(Task::PredDet, 100), Some(0.25));

        let unknown = vec![ImagePredictions { image_id: "zzz".into(), triplets: vec![] }];
        assert!(matches!(evaluate_dataset(&[g1], &unknown, &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn task_parse() {
        assert_eq!(Task::parse("sggen").unwrap(), Task::SgGen);
        assert_eq!(Task::parse("PredDet").unwrap(), Task::PredDet);
        assert!(matches!(Task::parse("relcls"), Err(Error::Parameter(_))));
    }

    #[test]
    fn relation_validation() {
        let objs = vec![lb(0, bx(0., 0., 1., 1.))];
        assert!(GroundTruthGraph::new("x", objs.clone(), vec![GtRelation { subject: 0, object: 0, predicate: 0 }]).is_err());
        assert!(GroundTruthGraph::new("x", objs, vec![GtRelation { subject: 0, object: 3, predicate: 0 }]).is_err());
    }
}
