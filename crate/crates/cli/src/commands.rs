use std::fmt::Write as _;
use std::path::PathBuf;

use hgsg_core::hgfl::{train_toy, HgflModel, HierLossConfig, StepRecord, SyntheticRegionSpec, TrainingReport};
use hgsg_core::hierarchy::{
    build_hierarchy_auto_with, build_hierarchy_by_keyword, clean_labels, CleaningConfig, HierarchyMap,
    KMeansConfig, KeywordRuleConfig, OovPolicy, PredicateLexicon,
};
use hgsg_core::sgeval::{evaluate_dataset, map_predicates, EvalConfig, MatchConfig, RecallReport, Task};
use hgsg_core::PoolMode;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::formats::{self, GtRecord, PredRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyMethod {
    /// k-means over label embeddings.
    Auto,
    /// Keyword rules.
    Keyword,
}

#[derive(Debug, Clone)]
pub struct HierarchyBuildConfig {
    pub lexicon: PathBuf,
    pub vectors: Option<PathBuf>,
    pub method: HierarchyMethod,
    pub k: Option<usize>,
    pub seed: u64,
    pub oov: OovPolicy,
    pub min_freq: u64,
    pub out: PathBuf,
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct ClusterSummary<'a> {
    index: usize,
    name: &'a str,
    size: usize,
    exemplars: Vec<&'a str>,
}

#[derive(Debug, Serialize)]
struct HierarchySummary<'a> {
    output: String,
    fine: usize,
    coarse: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    clusters: Vec<ClusterSummary<'a>>,
}

const EXEMPLARS: usize = 5;

/// Builds a hierarchy from a lexicon, writes it to `out` and returns the
/// summary printed on standard output.
pub fn cmd_hierarchy_build(cfg: &HierarchyBuildConfig) -> Result<String> {
    let raw = formats::read_lexicon(&cfg.lexicon)?;
    let lexicon = clean_labels(&raw, &CleaningConfig { min_freq: cfg.min_freq, ..CleaningConfig::default() })?;
    if lexicon.is_empty() {
        return Err(CliError::Invalid { path: cfg.lexicon.clone(), message: "no labels left after cleaning".into() });
    }
    let (map, fit) = match cfg.method {
        HierarchyMethod::Auto => {
            let k = cfg.k.ok_or_else(|| CliError::Parameter("--k is required for automatic clustering".into()))?;
            if k == 0 || k > lexicon.len() {
                return Err(CliError::Parameter(format!("k = {k} outside 1..={} labels", lexicon.len())));
            }
            let path = cfg.vectors.as_ref().ok_or_else(|| CliError::Parameter("--vectors is required".into()))?;
            let table = formats::read_word_vectors(path)?;
            let (map, result) = build_hierarchy_auto_with(&lexicon, &table, &KMeansConfig::new(k, cfg.seed), cfg.oov)?;
            (map, Some(result))
        }
        HierarchyMethod::Keyword => (build_hierarchy_by_keyword(&lexicon, &KeywordRuleConfig::english())?, None),
    };
    formats::write_text(&cfg.out, &formats::hierarchy_json(&map))?;
    let summary = HierarchySummary {
        output: cfg.out.display().to_string(),
        fine: map.fine_count(),
        coarse: map.coarse_count(),
        sse: fit.as_ref().map(|r| r.sse),
        iterations: fit.as_ref().map(|r| r.iterations),
        clusters: clusters(&map, &lexicon),
    };
    if cfg.json {
        return Ok(formats::to_json(&summary));
    }
    let mut out = String::new();
    writeln!(out, "wrote {} ({} fine labels → {} parents)", summary.output, summary.fine, summary.coarse).unwrap();
    if let (Some(sse), Some(it)) = (summary.sse, summary.iterations) {
        writeln!(out, "k-means SSE {sse:.6} after {it} iterations").unwrap();
    }
    for c in &summary.clusters {
        writeln!(out, "{:>3}  {:<20} {:>3}  {}", c.index, c.name, c.size, c.exemplars.join(", ")).unwrap();
    }
    Ok(out)
}

/// Members of each parent, most frequent first.
fn clusters<'a>(map: &'a HierarchyMap, lexicon: &PredicateLexicon) -> Vec<ClusterSummary<'a>> {
    (0..map.coarse_count())
        .map(|c| {
            let mut members = map.children(c);
            members.sort_by_key(|&f| std::cmp::Reverse(lexicon.counts()[f]));
            ClusterSummary {
                index: c,
                name: &map.coarse_names()[c],
                size: members.len(),
                exemplars: members.iter().take(EXEMPLARS).map(|&f| map.fine_labels()[f].as_str()).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvalCommandConfig {
    pub gt: PathBuf,
    pub pred: PathBuf,
    pub hierarchy: Option<PathBuf>,
    pub ks: Vec<usize>,
    pub tasks: Vec<Task>,
    pub micro: bool,
    pub iou: f64,
    pub strict_sggen: bool,
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    fine: RecallReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    coarse: Option<RecallReport>,
}

/// Recall@K per task; with a hierarchy also at the parent level.
pub fn cmd_eval(cfg: &EvalCommandConfig) -> Result<String> {
    if cfg.ks.is_empty() || cfg.ks.contains(&0) {
        return Err(CliError::Parameter("--ks needs positive values".into()));
    }
    if !(0.0..=1.0).contains(&cfg.iou) {
        return Err(CliError::Parameter(format!("IoU threshold {} outside [0, 1]", cfg.iou)));
    }
    let gt = formats::parse_jsonl::<GtRecord>(&formats::read_text(&cfg.gt)?, &cfg.gt)?;
    let pred = formats::parse_jsonl::<PredRecord>(&formats::read_text(&cfg.pred)?, &cfg.pred)?;
    let hierarchy = cfg.hierarchy.as_ref().map(|p| formats::read_hierarchy(p).map(|m| (m, p))).transpose()?;
    let data = formats::encode(&gt, &cfg.gt, &pred, &cfg.pred, hierarchy.as_ref().map(|(m, p)| (m, p.as_path())))?;
    let eval_cfg = EvalConfig {
        ks: cfg.ks.clone(),
        tasks: cfg.tasks.clone(),
        matching: MatchConfig { iou_thresh: cfg.iou, sggen_strict: cfg.strict_sggen },
        micro: cfg.micro,
    };
    let fine = evaluate_dataset(&data.gts, &data.preds, &eval_cfg)?;
    let coarse = match &hierarchy {
        Some((map, _)) => {
            let (g, p) = map_predicates(&data.gts, &data.preds, map)?;
            Some(evaluate_dataset(&g, &p, &eval_cfg)?)
        }
        None => None,
    };
    let output = EvalOutput { fine, coarse };
    if cfg.json {
        return Ok(formats::to_json(&output));
    }
    let mut out = String::new();
    let level = |out: &mut String, title: &str, r: &RecallReport| {
        writeln!(out, "{title} ({} images, {} relations, {})", r.images, r.gt_relations, if r.micro { "micro" } else { "per-image mean" }).unwrap();
        write!(out, "{:<8}", "task").unwrap();
        for k in &cfg.ks {
            write!(out, " {:>8}", format!("R@{k}")).unwrap();
        }
        out.push('\n');
        for task in &cfg.tasks {
            write!(out, "{:<8}", task.name()).unwrap();
            for &k in &cfg.ks {
                write!(out, " {:>8.4}", r.get(*task, k).unwrap_or(0.0)).unwrap();
            }
            out.push('\n');
        }
    };
    level(&mut out, "fine predicates", &output.fine);
    if let Some(c) = &output.coarse {
        out.push('\n');
        level(&mut out, "parent predicates", c);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ToyTrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub steps: usize,
    pub hgm: bool,
    pub pooling: PoolMode,
    pub batch_norm: bool,
    pub regions: Option<usize>,
    pub noise: Option<f64>,
    pub separation: Option<f64>,
    pub out: Option<PathBuf>,
    pub json: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub name: &'static str,
    pub with_hgm: bool,
    pub weight_coarse: f64,
    #[serde(rename = "final")]
    pub final_metrics: StepRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub lr: f64,
    pub steps: usize,
    pub regions: usize,
    pub noise: f64,
    pub separation: f64,
    pub variants: Vec<VariantSummary>,
}

fn curve_csv(report: &TrainingReport) -> String {
    let mut s = String::from("step,coarse_loss,fine_loss\n");
    for r in report.history.iter().chain([&report.final_metrics]) {
        writeln!(s, "{},{},{}", r.step, r.coarse_loss, r.fine_loss).unwrap();
    }
    s
}

/// Trains the fine-only baseline and the dual-branch variant on the same
/// synthetic data.
pub fn cmd_toy_train(cfg: &ToyTrainConfig) -> Result<(String, Comparison)> {
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(CliError::Parameter(format!("learning rate {} must be finite and non-negative", cfg.lr)));
    }
    let mut spec = SyntheticRegionSpec::separable(cfg.seed);
    spec.n_regions = cfg.regions.unwrap_or(spec.n_regions);
    spec.noise = cfg.noise.unwrap_or(spec.noise);
    spec.separation = cfg.separation.unwrap_or(spec.separation);
    let (c, kc, kf) = (spec.channels, spec.hierarchy.coarse_count(), spec.hierarchy.fine_count());

    let baseline = HgflModel::init(c, c, kc, kf, None, cfg.seed);
    let mut dual = HgflModel::init(c, c, kc, kf, cfg.hgm.then_some((c / 2, c / 2)), cfg.seed);
    dual.hgm = dual.hgm.map(|h| {
        let h = h.with_pooling(cfg.pooling);
        if cfg.batch_norm {
            h.with_batch_norm()
        } else {
            h
        }
    });
    let runs = [
        ("baseline", baseline, HierLossConfig { weight_coarse: 0.0, weight_fine: 1.0 }),
        (if cfg.hgm { "hgfl_hgm" } else { "hgfl" }, dual, HierLossConfig::default()),
    ];
    let mut variants = Vec::new();
    for (name, model, loss) in runs {
        let (report, _) = train_toy(&spec, model, &loss, cfg.lr, cfg.steps)?;
        if let Some(dir) = &cfg.out {
            formats::write_text(&dir.join(format!("{name}.json")), &formats::to_json(&report))?;
            formats::write_text(&dir.join(format!("{name}.csv")), &curve_csv(&report))?;
        }
        variants.push(VariantSummary {
            name,
            with_hgm: report.with_hgm,
            weight_coarse: loss.weight_coarse,
            final_metrics: report.final_metrics,
        });
    }
    let comparison = Comparison {
        seed: cfg.seed,
        lr: cfg.lr,
        steps: cfg.steps,
        regions: spec.n_regions,
        noise: spec.noise,
        separation: spec.separation,
        variants,
    };
    if let Some(dir) = &cfg.out {
        formats::write_text(&dir.join("comparison.json"), &formats::to_json(&comparison))?;
    }
    let text = if cfg.json {
        formats::to_json(&comparison)
    } else {
        let mut s = format!("{:<10} {:>10} {:>10} {:>9} {:>9} {:>9}\n", "variant", "fine CE", "coarse CE", "fine acc", "coarse", "derived");
        for v in &comparison.variants {
            let m = &v.final_metrics;
            writeln!(
                s,
                "{:<10} {:>10.6} {:>10.6} {:>9.4} {:>9.4} {:>9.4}",
                v.name, m.fine_loss, m.coarse_loss, m.fine_accuracy, m.coarse_accuracy, m.derived_coarse_accuracy
            )
            .unwrap();
        }
        s
    };
    Ok((text, comparison))
}
