//! Straight-line reference implementations used for verification.
//!
//! Nothing here touches the tape or the tensor ops; every routine is a plain
//! loop nest (or exhaustive search) written directly from the definitions so
//! it can serve as an independent check of the optimized paths.

#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;

use crate::hgm::{FeaturePair, HgmParams};
use crate::sgeval::{GroundTruthGraph, MatchConfig, PredictionTriplet, Task};
use crate::tape::PoolMode;

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Hierarchy guided module as nested loops. Batch norm is not modelled;
/// `params.batch_norm` must be `None`.
pub fn hgm_forward(pair: &FeaturePair, params: &HgmParams) -> Vec<f64> {
    assert!(params.batch_norm.is_none(), "reference HGM has no batch norm");
    let sh = pair.a.shape();
    let (n, c, l) = (sh[0], sh[1], sh[2]);
    let dims = params.dims();
    let (c1, c2) = (dims.coarse_channels, dims.fine_channels);
    let a = |i: usize, ch: usize, p: usize| pair.a.data()[(i * c + ch) * l + p];
    let b = |i: usize, ch: usize, p: usize| pair.b.data()[(i * c + ch) * l + p];
    let w = |t: &crate::tensor::Tensor, r: usize, col: usize, cols: usize| t.data()[r * cols + col];

    let wta = &params.transform_coarse;
    let wtb = &params.transform_fine;
    let mut at = vec![vec![vec![0.0; l]; c1]; n];
    let mut bt = vec![vec![vec![0.0; l]; c2]; n];
    for i in 0..n {
        for p in 0..l {
            for k in 0..c1 {
                let mut acc = wta.bias.data()[k];
                for ch in 0..c {
                    acc += w(&wta.weight, k, ch, c) * a(i, ch, p);
                }
                at[i][k][p] = relu(acc);
            }
            for k in 0..c2 {
                let mut acc = wtb.bias.data()[k];
                for ch in 0..c {
                    acc += w(&wtb.weight, k, ch, c) * b(i, ch, p);
                }
                bt[i][k][p] = relu(acc);
            }
        }
    }

    let mut sqz = vec![vec![0.0; l]; n];
    for i in 0..n {
        for p in 0..l {
            let mut acc = params.squeeze.bias.data()[0];
            for k in 0..c2 {
                acc += params.squeeze.weight.data()[k] * bt[i][k][p];
            }
            sqz[i][p] = relu(acc);
        }
    }

    let mut s = vec![vec![0.0; c1]; n];
    for i in 0..n {
        for k in 0..c1 {
            let mut pooled = 0.0;
            for j in 0..n {
                let mut dot = 0.0;
                for p in 0..l {
                    dot += at[i][k][p] * sqz[j][p];
                }
                pooled = match params.pooling {
                    PoolMode::Max if j == 0 => dot,
                    PoolMode::Max => f64::max(pooled, dot),
                    PoolMode::Mean => pooled + dot / n as f64,
                };
            }
            s[i][k] = pooled;
        }
    }

    let wc = params.channel_reduce.weight.data();
    let bc = params.channel_reduce.bias.data()[0];
    let mut cc = vec![vec![0.0; c1]; n];
    for j in 0..n {
        for k in 0..c1 {
            let mut acc = bc;
            for r in 0..c2 {
                let mut dot = 0.0;
                for p in 0..l {
                    dot += bt[j][r][p] * at[j][k][p];
                }
                acc += wc[r] * dot;
            }
            cc[j][k] = relu(acc);
        }
    }

    let wac = &params.refine_channel;
    let wbs = &params.refine_region;
    let mut out = vec![0.0; n * c * l];
    for i in 0..n {
        for p in 0..l {
            let x1: Vec<f64> = (0..c1).map(|k| at[i][k][p] + at[i][k][p] * cc[i][k]).collect();
            let aout: Vec<f64> = (0..c1)
                .map(|k| {
                    let mut acc = wac.bias.data()[k];
                    for m in 0..c1 {
                        acc += w(&wac.weight, k, m, c1) * x1[m];
                    }
                    relu(acc)
                })
                .collect();
            let x2: Vec<f64> = (0..c1).map(|k| aout[k] + aout[k] * s[i][k]).collect();
            for co in 0..c {
                let mut acc = wbs.bias.data()[co];
                for k in 0..c1 {
                    acc += w(&wbs.weight, co, k, c1) * x2[k];
                }
                out[(i * c + co) * l + p] = b(i, co, p) + relu(acc);
            }
        }
    }
    out
}

/// Maximum number of ground-truth relations that can be matched one-to-one
/// by the `k` highest-scored predictions, by exhaustive search over all
/// assignments. Ties in score keep input order.
pub fn max_matching_hits(
    gt: &GroundTruthGraph,
    preds: &[PredictionTriplet],
    k: usize,
    task: Task,
    cfg: &MatchConfig,
) -> usize {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&x, &y| preds[y].score.total_cmp(&preds[x].score));
    order.truncate(k);
    let candidates: Vec<Vec<usize>> = order
        .iter()
        .map(|&pi| {
            (0..gt.relations.len())
                .filter(|&gi| triplet_hits(&preds[pi], gt, gi, task, cfg))
                .collect()
        })
        .collect();
    let mut used = vec![false; gt.relations.len()];
    best_assignment(&candidates, 0, &mut used)
}

fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    if inter == 0.0 {
        0.0
    } else {
        inter / (area(a) + area(b) - inter)
    }
}

fn enclosing(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]
}

/// Match test written out from the task definitions.
pub fn triplet_hits(pred: &PredictionTriplet, gt: &GroundTruthGraph, rel: usize, task: Task, cfg: &MatchConfig) -> bool {
    let r = gt.relations[rel];
    let (gs, go) = (gt.objects[r.subject], gt.objects[r.object]);
    if pred.subject.label != gs.label || pred.object.label != go.label || pred.predicate != r.predicate {
        return false;
    }
    let (ps, po) = (pred.subject.bbox.coords(), pred.object.bbox.coords());
    let (gs, go) = (gs.bbox.coords(), go.bbox.coords());
    match task {
        Task::PredDet => true,
        Task::PhrDet => box_iou(enclosing(ps, po), enclosing(gs, go)) >= cfg.iou_thresh,
        Task::SgGen if cfg.sggen_strict => box_iou(ps, gs) > cfg.iou_thresh && box_iou(po, go) > cfg.iou_thresh,
        Task::SgGen => box_iou(ps, gs) >= cfg.iou_thresh && box_iou(po, go) >= cfg.iou_thresh,
    }
}

fn best_assignment(candidates: &[Vec<usize>], at: usize, used: &mut [bool]) -> usize {
    if at == candidates.len() {
        return 0;
    }
    let mut best = best_assignment(candidates, at + 1, used);
    for &g in &candidates[at] {
        if !used[g] {
            used[g] = true;
            best = best.max(1 + best_assignment(candidates, at + 1, used));
            used[g] = false;
        }
    }
    best
}
