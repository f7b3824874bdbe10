//! Invariant suite run by `hgsg selftest`.

use std::collections::BTreeSet;

use hgsg_core::hgfl::{dual_loss, forward_branches, HgflModel, HierLossConfig, ModelVars};
use hgsg_core::hgm::{FeaturePair, HgmDims, HgmParams};
use hgsg_core::hierarchy::{build_hierarchy_auto, kmeans, HierarchyMap, KMeansConfig, PredicateLexicon, WordVectorTable};
use hgsg_core::sgeval::{recall_at_k, BBox, GroundTruthGraph, GtRelation, LabeledBox, MatchConfig, PredictionTriplet, Task};
use hgsg_core::{reference, BackwardFault, GradCheck, PoolMode, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Check = fn(Option<BackwardFault>) -> Result<String, String>;

const PROPERTIES: [(&str, Check); 7] = [
    ("grad_check", grad_check),
    ("hgm_zero_identity", hgm_zero_identity),
    ("hgm_loop_oracle", hgm_loop_oracle),
    ("dual_loss_contract", dual_loss_contract),
    ("kmeans_planted_clusters", kmeans_planted),
    ("hierarchy_totality", hierarchy_totality),
    ("recall_oracle", recall_oracle),
];

/// Runs every property; `fault` corrupts backward rules to demonstrate that
/// the gradient check notices.
pub fn run(fault: Option<BackwardFault>) -> Vec<PropertyResult> {
    PROPERTIES
        .iter()
        .map(|(name, check)| {
            let (pass, detail) = match check(fault) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyResult { name, pass, detail }
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn grad_check(fault: Option<BackwardFault>) -> Result<String, String> {
    let checker = GradCheck { fault, ..GradCheck::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let a = uniform(&mut rng, &[3, 4]);
    let b = uniform(&mut rng, &[4, 2]);
    let probe = uniform(&mut rng, &[3, 2]);
    let ops = checker
        .run(
            |tape: &mut Tape, v: &[Var]| {
                let y = tape.matmul(v[0], v[1])?;
                let r = tape.relu(y);
                let w = tape.leaf(probe.clone());
                let m = tape.mul(r, w)?;
                Ok(tape.sum(m))
            },
            &[a, b],
        )
        .map_err(|e| e.to_string())?;

    let fine = (0..4).map(|i| format!("f{i}")).collect();
    let map = HierarchyMap::new(fine, vec!["x".into(), "y".into()], vec![0, 0, 1, 1]).map_err(|e| e.to_string())?;
    let x = uniform(&mut rng, &[3, 4, 5]);
    let mut model = HgflModel::init(4, 4, 2, 4, Some((3, 3)), 7);
    for t in model.tensors_mut() {
        *t = uniform(&mut rng, t.shape());
    }
    let params: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
    let full = checker
        .run(
            |tape: &mut Tape, v: &[Var]| {
                let vars = ModelVars::from_slice(v, &model);
                let xv = tape.leaf(x.clone());
                let out = forward_branches(tape, xv, &model, &vars)?;
                Ok(dual_loss(tape, out.coarse_logits, out.fine_logits, &[0, 3, 1], &map, &HierLossConfig::default())?.total)
            },
            &params,
        )
        .map_err(|e| e.to_string())?;
    let worst = ops.worst().max(full.worst());
    let detail = format!("max relative error {worst:.3e} over {} tensors", 2 + params.len());
    if ops.pass && full.pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> (FeaturePair, HgmDims) {
    let (n, c, c1, c2, l) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=8));
    let pair = FeaturePair::new(uniform(rng, &[n, c, l]), uniform(rng, &[n, c, l])).expect("equal shapes");
    (pair, HgmDims::new(c, c1, c2))
}

fn hgm_zero_identity(_: Option<BackwardFault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..20 {
        let (pair, dims) = random_config(&mut rng);
        let out = HgmParams::zeros(dims).forward(&pair).map_err(|e| e.to_string())?;
        if out != pair.b {
            return Err(format!("instance {i} differs from B"));
        }
    }
    Ok("20 configurations".into())
}

fn hgm_loop_oracle(_: Option<BackwardFault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (pair, dims) = random_config(&mut rng);
        let pooling = if i % 2 == 0 { PoolMode::Max } else { PoolMode::Mean };
        let mut params = HgmParams::zeros(dims).with_pooling(pooling);
        for t in params.tensors_mut() {
            *t = Tensor::from_fn(t.shape(), |_| rng.gen_range(-1.0..1.0) + 0.2);
        }
        let fast = params.forward(&pair).map_err(|e| e.to_string())?;
        let slow = reference::hgm_forward(&pair, &params);
        worst = fast.data().iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let detail = format!("max abs difference {worst:.3e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dual_loss_contract(_: Option<BackwardFault>) -> Result<String, String> {
    let fine = (0..275).map(|i| format!("p{i}")).collect();
    let coarse = (0..30).map(|i| format!("c{i}")).collect();
    let map = HierarchyMap::new(fine, coarse, (0..275).map(|i| i % 30).collect()).map_err(|e| e.to_string())?;
    let mut tape = Tape::new();
    let c = tape.leaf(Tensor::zeros(&[4, 30]));
    let f = tape.leaf(Tensor::zeros(&[4, 275]));
    let loss = dual_loss(&mut tape, c, f, &[0, 100, 200, 274], &map, &HierLossConfig::default()).map_err(|e| e.to_string())?;
    let err = (tape.value(loss.total).item() - (275f64.ln() + 30f64.ln())).abs();
    let detail = format!("uniform-logit error {err:.3e}");
    if err <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kmeans_planted(_: Option<BackwardFault>) -> Result<String, String> {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        for i in 0..30 {
            let centre = if i % 2 == 0 { 0.0 } else { 2.0 };
            points.push(vec![centre + rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]);
        }
        let r = kmeans(&points, &KMeansConfig::new(2, seed)).map_err(|e| e.to_string())?;
        if r.sse_history.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("seed {seed}: SSE increased"));
        }
        let consistent = r.assignments.iter().enumerate().all(|(i, &a)| (a == r.assignments[0]) == (i % 2 == 0));
        if !consistent {
            return Err(format!("seed {seed}: planted partition not recovered"));
        }
    }
    Ok("10 seeds".into())
}

fn hierarchy_totality(_: Option<BackwardFault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels: Vec<String> = (0..50).map(|i| format!("w{} w{}", i, (i * 7) % 50)).collect();
    let mut table = WordVectorTable::new(8).map_err(|e| e.to_string())?;
    for i in 0..50 {
        table.insert(format!("w{i}"), (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).map_err(|e| e.to_string())?;
    }
    let lex = PredicateLexicon::new(labels.iter().map(|l| (l.clone(), 1)).collect()).map_err(|e| e.to_string())?;
    let map = build_hierarchy_auto(&lex, &table, 8, 0).map_err(|e| e.to_string())?;
    let parents: BTreeSet<usize> = (0..50).filter_map(|f| map.coarse_of(f)).collect();
    if map.coarse_count() == 8 && parents.len() == 8 && map.fine_count() == 50 {
        Ok("50 labels → 8 parents".into())
    } else {
        Err(format!("{} parents used of {}", parents.len(), map.coarse_count()))
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let (x, y) = (rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0));
    BBox::new(x, y, x + rng.gen_range(4.0..20.0), y + rng.gen_range(4.0..20.0)).expect("positive extent")
}

fn shifted(b: BBox, rng: &mut ChaCha8Rng) -> BBox {
    let c = b.coords();
    let d = rng.gen_range(0.0..0.4) * (c[2] - c[0]);
    BBox::new(c[0] + d, c[1], c[2] + d, c[3]).expect("positive extent")
}

fn recall_oracle(_: Option<BackwardFault>) -> Result<String, String> {
    let cfg = MatchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for task in Task::ALL {
        for i in 0..50 {
            let objects: Vec<LabeledBox> =
                (0..4).map(|_| LabeledBox { label: rng.gen_range(0..3), bbox: random_box(&mut rng) }).collect();
            let mut seen = BTreeSet::new();
            let relations: Vec<GtRelation> = (0..6)
                .map(|_| GtRelation { subject: rng.gen_range(0..4), object: rng.gen_range(0..4), predicate: rng.gen_range(0..3) })
                .filter(|r| r.subject != r.object && seen.insert((objects[r.subject].label, r.predicate, objects[r.object].label)))
                .collect();
            let gt = GroundTruthGraph::new(format!("{i}"), objects.clone(), relations.clone()).map_err(|e| e.to_string())?;
            let mut preds: Vec<PredictionTriplet> = relations
                .iter()
                .map(|r| PredictionTriplet {
                    subject: LabeledBox { bbox: shifted(objects[r.subject].bbox, &mut rng), ..objects[r.subject] },
                    object: LabeledBox { bbox: shifted(objects[r.object].bbox, &mut rng), ..objects[r.object] },
                    predicate: r.predicate,
                    score: rng.gen(),
                })
                .collect();
            for _ in 0..rng.gen_range(0..80) {
                preds.push(PredictionTriplet {
                    subject: LabeledBox { label: rng.gen_range(0..3), bbox: objects[rng.gen_range(0..4)].bbox },
                    object: LabeledBox { label: rng.gen_range(0..3), bbox: objects[rng.gen_range(0..4)].bbox },
                    predicate: rng.gen_range(0..3),
                    score: rng.gen(),
                });
            }
            let mut last = 0;
            for k in [50, 100] {
                let hits = recall_at_k(&gt, &preds, k, task, &cfg).map_err(|e| e.to_string())?.hits;
                if hits != reference::max_matching_hits(&gt, &preds, k, task, &cfg) {
                    return Err(format!("{task} scene {i} k {k}: greedy disagrees with exhaustive matching"));
                }
                if hits < last {
                    return Err(format!("{task} scene {i}: recall fell from K=50 to K=100"));
                }
                last = hits;
            }
        }
    }
    Ok("50 scenes per task".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_build_passes_everything() {
        let results = run(None);
        assert!(results.iter().all(|r| r.pass), "{results:?}");
    }

    #[test]
    fn corrupted_rules_fail_only_the_gradient_check() {
        for fault in [BackwardFault::ReluDoubled, BackwardFault::MatMulRhsZeroed] {
            let failed: Vec<&str> = run(Some(fault)).into_iter().filter(|r| !r.pass).map(|r| r.name).collect();
            assert_eq!(failed, ["grad_check"]);
        }
    }
}
