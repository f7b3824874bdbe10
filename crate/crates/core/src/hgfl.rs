//! Hierarchy guided feature learning.
//!
//! Shared region features feed two branches. The coarse branch produces
//! features `A`, the fine branch features `B`; when a hierarchy guided module
//! is attached, `B` is refined with `A` before classification. Each branch is
//! supervised by its own cross-entropy: fine labels for the fine branch, their
//! parents for the coarse branch. At inference only the fine branch is needed
//! when no module is attached.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, Error, Result};
use crate::hgm::{hgm_forward, HgmDims, HgmParams, HgmTrace, HgmVars, Pointwise, PointwiseVars};
use crate::hierarchy::HierarchyMap;
use crate::tape::{PoolMode, Tape, Var};
use crate::tensor::Tensor;

/// One branch: a 1×1 convolution + ReLU producing branch features, then
/// mean pooling over pixels and a linear classifier.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchHead {
    /// `C × C_in`.
    pub transform: Pointwise,
    /// `K × C`.
    pub classifier: Pointwise,
}

impl BranchHead {
    pub fn init(input_channels: usize, channels: usize, classes: usize, rng: &mut impl Rng) -> Self {
        BranchHead {
            transform: Pointwise::uniform(channels, input_channels, rng),
            classifier: Pointwise::uniform(classes, channels, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.classifier.weight.shape()[0]
    }

    pub fn input_channels(&self) -> usize {
        self.transform.weight.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.transform.weight.shape()[0]
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.transform.weight, &self.transform.bias, &self.classifier.weight, &self.classifier.bias]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.transform.weight,
            &mut self.transform.bias,
            &mut self.classifier.weight,
            &mut self.classifier.bias,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub transform: PointwiseVars,
    pub classifier: PointwiseVars,
}

impl HeadVars {
    fn from_slice(v: &[Var]) -> Self {
        HeadVars {
            transform: PointwiseVars { weight: v[0], bias: v[1] },
            classifier: PointwiseVars { weight: v[2], bias: v[3] },
        }
    }
}

/// Coarse and fine branches plus an optional hierarchy guided module.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HgflModel {
    pub coarse: BranchHead,
    pub fine: BranchHead,
    pub hgm: Option<HgmParams>,
}

impl HgflModel {
    /// Seeded uniform initialization. `hgm` gives the module's `(C1, C2)`.
    pub fn init(
        input_channels: usize,
        channels: usize,
        coarse_classes: usize,
        fine_classes: usize,
        hgm: Option<(usize, usize)>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse = BranchHead::init(input_channels, channels, coarse_classes, &mut rng);
        let fine = BranchHead::init(input_channels, channels, fine_classes, &mut rng);
        let hgm = hgm.map(|(c1, c2)| HgmParams::init_with(HgmDims::new(channels, c1, c2), &mut rng));
        HgflModel { coarse, fine, hgm }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, f) = (&self.coarse, &self.fine);
        if c.input_channels() != f.input_channels() || c.channels() != f.channels() {
            return Err(dim_err(
                "hgfl model",
                format!(
                    "branches disagree: coarse {}→{}, fine {}→{}",
                    c.input_channels(),
                    c.channels(),
                    f.input_channels(),
                    f.channels()
                ),
            ));
        }
        for head in [c, f] {
            if head.classifier.weight.shape()[1] != head.channels() || head.classifier.bias.shape() != [head.classes()] {
                return Err(dim_err("hgfl model", "classifier does not match branch channels".into()));
            }
        }
        if c.classes() > f.classes() {
            return Err(Error::Validation(format!(
                "{} coarse classes exceed {} fine classes",
                c.classes(),
                f.classes()
            )));
        }
        if let Some(h) = &self.hgm {
            h.validate()?;
            if h.dims().channels != c.channels() {
                return Err(dim_err(
                    "hgfl model",
                    format!("module expects {} channels, branches give {}", h.dims().channels, c.channels()),
                ));
            }
        }
        Ok(())
    }

    /// Coarse head, fine head, then module tensors.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.coarse.tensors().into_iter().chain(self.fine.tensors()).collect();
        if let Some(h) = &self.hgm {
            out.extend(h.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.coarse.tensors_mut().into_iter().chain(self.fine.tensors_mut()).collect();
        if let Some(h) = &mut self.hgm {
            out.extend(h.tensors_mut());
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        ModelVars::from_slice(&vars, self)
    }
}

/// Leaves of an [`HgflModel`], in [`HgflModel::tensors`] order.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub coarse: HeadVars,
    pub fine: HeadVars,
    pub hgm: Option<HgmVars>,
}

impl ModelVars {
    pub fn from_slice(vars: &[Var], model: &HgflModel) -> Self {
        let hgm = model.hgm.as_ref().map(|h| {
            let n = HgmVars::count(h.batch_norm.is_some());
            HgmVars::from_slice(&vars[8..8 + n])
        });
        ModelVars { coarse: HeadVars::from_slice(&vars[0..4]), fine: HeadVars::from_slice(&vars[4..8]), hgm }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BranchOutputs {
    /// Coarse branch features `A`.
    pub a: Var,
    /// Fine branch features, refined by the module when attached.
    pub b: Var,
    pub coarse_logits: Var,
    pub fine_logits: Var,
    pub hgm: Option<HgmTrace>,
}

fn branch_features(tape: &mut Tape, x: Var, head: &HeadVars) -> Result<Var> {
    let y = tape.conv1x1(x, head.transform.weight, head.transform.bias)?;
    Ok(tape.relu(y))
}

fn classify(tape: &mut Tape, features: Var, head: &HeadVars) -> Result<Var> {
    let n = tape.shape(features)[0];
    let c = tape.shape(features)[1];
    let pooled = tape.pool_axis(features, 2, PoolMode::Mean)?;
    let pooled = tape.reshape(pooled, &[n, c, 1])?;
    let logits = tape.conv1x1(pooled, head.classifier.weight, head.classifier.bias)?;
    let k = tape.shape(logits)[1];
    tape.reshape(logits, &[n, k])
}

/// Both branches on `x: N×C_in×L`.
pub fn forward_branches(tape: &mut Tape, x: Var, model: &HgflModel, vars: &ModelVars) -> Result<BranchOutputs> {
    let a = branch_features(tape, x, &vars.coarse)?;
    let mut b = branch_features(tape, x, &vars.fine)?;
    let mut trace = None;
    match (&model.hgm, &vars.hgm) {
        (Some(params), Some(hv)) => {
            let t = hgm_forward(tape, a, b, hv, params)?;
            b = t.b_out;
            trace = Some(t);
        }
        (None, None) => {}
        _ => return Err(Error::Contract("module params and vars disagree".into())),
    }
    let coarse_logits = classify(tape, a, &vars.coarse)?;
    let fine_logits = classify(tape, b, &vars.fine)?;
    Ok(BranchOutputs { a, b, coarse_logits, fine_logits, hgm: trace })
}

/// Fine-branch logits without evaluating the coarse branch. Only valid
/// when no module is attached, since the module consumes coarse features.
pub fn predict_fine_only(x: &Tensor, model: &HgflModel) -> Result<Tensor> {
    if model.hgm.is_some() {
        return Err(Error::Config("fine-only inference needs the coarse branch when a module is attached".into()));
    }
    let mut tape = Tape::new();
    let head: Vec<Var> = model.fine.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
    let head = HeadVars::from_slice(&head);
    let x = tape.leaf(x.clone());
    let features = branch_features(&mut tape, x, &head)?;
    let logits = classify(&mut tape, features, &head)?;
    Ok(tape.value(logits).clone())
}

/// Parent of every fine target.
pub fn derive_coarse_targets(fine_targets: &[usize], map: &HierarchyMap) -> Result<Vec<usize>> {
    fine_targets
        .iter()
        .map(|&t| map.coarse_of(t).ok_or(Error::Label { index: t, classes: map.fine_count() }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HierLossConfig {
    pub weight_coarse: f64,
    pub weight_fine: f64,
}

impl Default for HierLossConfig {
    fn default() -> Self {
        HierLossConfig { weight_coarse: 1.0, weight_fine: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DualLoss {
    pub total: Var,
    pub coarse: Var,
    pub fine: Var,
}

/// `weight_fine·CE(fine) + weight_coarse·CE(coarse, parents of fine targets)`.
pub fn dual_loss(
    tape: &mut Tape,
    coarse_logits: Var,
    fine_logits: Var,
    fine_targets: &[usize],
    map: &HierarchyMap,
    cfg: &HierLossConfig,
) -> Result<DualLoss> {
    if !(cfg.weight_coarse >= 0.0 && cfg.weight_fine >= 0.0) {
        return Err(Error::Parameter(format!(
            "loss weights must be non-negative, got ({}, {})",
            cfg.weight_coarse, cfg.weight_fine
        )));
    }
    let widths = (tape.shape(coarse_logits).get(1).copied(), tape.shape(fine_logits).get(1).copied());
    if widths != (Some(map.coarse_count()), Some(map.fine_count())) {
        return Err(dim_err(
            "dual_loss",
            format!(
                "logit widths {:?} / {:?} do not match hierarchy {} coarse / {} fine",
                tape.shape(coarse_logits),
                tape.shape(fine_logits),
                map.coarse_count(),
                map.fine_count()
            ),
        ));
    }
    let coarse_targets = derive_coarse_targets(fine_targets, map)?;
    let fine = tape.cross_entropy(fine_logits, fine_targets)?;
    let coarse = tape.cross_entropy(coarse_logits, &coarse_targets)?;
    let wf = tape.scale(fine, cfg.weight_fine);
    let wc = tape.scale(coarse, cfg.weight_coarse);
    let total = tape.add(wf, wc)?;
    Ok(DualLoss { total, coarse, fine })
}

/// Index of the largest logit per row (first on ties).
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Class-conditional Gaussian region features with hierarchical means.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRegionSpec {
    pub n_regions: usize,
    pub channels: usize,
    pub pixels: usize,
    pub hierarchy: HierarchyMap,
    /// Scale of the parent means; child offsets use half of it.
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticRegionSpec {
    /// Well separated preset: 6 fine classes under 3 parents, 60 regions of
    /// 8 channels × 4 pixels, separation ten times the noise.
    pub fn separable(seed: u64) -> Self {
        let fine = (0..6).map(|i| format!("fine{i}")).collect();
        let coarse = (0..3).map(|i| format!("coarse{i}")).collect();
        let hierarchy = HierarchyMap::new(fine, coarse, alloc::vec![0, 0, 1, 1, 2, 2]).expect("static hierarchy");
        SyntheticRegionSpec { n_regions: 60, channels: 8, pixels: 4, hierarchy, separation: 1.0, noise: 0.1, seed }
    }

    /// Features `N×C×L` and fine targets. Region `i` has fine class
    /// `i mod K_fine`; its pixels are `parent_mean + child_offset + noise`.
    pub fn generate(&self) -> Result<(Tensor, Vec<usize>)> {
        if self.n_regions == 0 || self.channels == 0 || self.pixels == 0 {
            return Err(Error::Parameter("synthetic spec needs positive N, C and L".into()));
        }
        if !(self.separation >= 0.0 && self.noise >= 0.0) {
            return Err(Error::Parameter("separation and noise must be non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let c = self.channels;
        let parent_means: Vec<Vec<f64>> = (0..self.hierarchy.coarse_count())
            .map(|_| (0..c).map(|_| self.separation * unit.sample(&mut rng)).collect())
            .collect();
        let class_means: Vec<Vec<f64>> = (0..self.hierarchy.fine_count())
            .map(|f| {
                let parent = &parent_means[self.hierarchy.fine_to_coarse()[f]];
                parent.iter().map(|m| m + 0.5 * self.separation * unit.sample(&mut rng)).collect()
            })
            .collect();
        let k = self.hierarchy.fine_count();
        let targets: Vec<usize> = (0..self.n_regions).map(|i| i % k).collect();
        let mut data = Vec::with_capacity(self.n_regions * c * self.pixels);
        for &t in &targets {
            for &mean in &class_means[t] {
                for _ in 0..self.pixels {
                    data.push(mean + self.noise * unit.sample(&mut rng));
                }
            }
        }
        Ok((Tensor::new(alloc::vec![self.n_regions, c, self.pixels], data)?, targets))
    }
}

/// Losses and accuracies of one training step, measured before its update.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub coarse_loss: f64,
    pub fine_loss: f64,
    pub fine_accuracy: f64,
    pub coarse_accuracy: f64,
    /// Accuracy of parents derived from the fine prediction.
    pub derived_coarse_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingReport {
    pub seed: u64,
    pub steps: usize,
    pub lr: f64,
    pub with_hgm: bool,
    pub loss: HierLossConfig,
    pub history: Vec<StepRecord>,
    /// Evaluation after the last update.
    #[cfg_attr(feature = "serde", serde(rename = "final"))]
    pub final_metrics: StepRecord,
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

fn evaluate(
    tape: &mut Tape,
    x: &Tensor,
    targets: &[usize],
    model: &HgflModel,
    map: &HierarchyMap,
    cfg: &HierLossConfig,
    step: usize,
) -> Result<(StepRecord, DualLoss, ModelVars, Option<HgmTrace>)> {
    let vars = model.bind(tape);
    let xv = tape.leaf(x.clone());
    let out = forward_branches(tape, xv, model, &vars)?;
    let loss = dual_loss(tape, out.coarse_logits, out.fine_logits, targets, map, cfg)?;
    let coarse_targets = derive_coarse_targets(targets, map)?;
    let fine_pred = argmax_rows(tape.value(out.fine_logits));
    let coarse_pred = argmax_rows(tape.value(out.coarse_logits));
    let derived = derive_coarse_targets(&fine_pred, map)?;
    let record = StepRecord {
        step,
        coarse_loss: tape.value(loss.coarse).item(),
        fine_loss: tape.value(loss.fine).item(),
        fine_accuracy: accuracy(&fine_pred, targets),
        coarse_accuracy: accuracy(&coarse_pred, &coarse_targets),
        derived_coarse_accuracy: accuracy(&derived, &coarse_targets),
    };
    if !tape.value(loss.total).item().is_finite() {
        return Err(Error::Divergence { step });
    }
    Ok((record, loss, vars, out.hgm))
}

/// Full-batch gradient descent on the dual loss over synthetic features.
/// Returns the report and the trained model. Bit-deterministic for fixed
/// inputs.
pub fn train_toy(
    spec: &SyntheticRegionSpec,
    model: HgflModel,
    loss_cfg: &HierLossConfig,
    lr: f64,
    steps: usize,
) -> Result<(TrainingReport, HgflModel)> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::Parameter(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    if steps == 0 {
        return Err(Error::Parameter("steps must be at least 1".into()));
    }
    model.validate()?;
    let map = &spec.hierarchy;
    if model.coarse.classes() != map.coarse_count() || model.fine.classes() != map.fine_count() {
        return Err(dim_err("train_toy", "head widths do not match the hierarchy".into()));
    }
    if model.fine.input_channels() != spec.channels {
        return Err(dim_err("train_toy", "input channels do not match the synthetic spec".into()));
    }
    let (x, targets) = spec.generate()?;
    let mut model = model;
    let mut history = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut tape = Tape::new();
        let (record, loss, vars, trace) = evaluate(&mut tape, &x, &targets, &model, map, loss_cfg, step)?;
        history.push(record);
        let grads = tape.backward(loss.total)?;
        let leaves: Vec<Var> = param_vars(&vars);
        for (p, v) in model.tensors_mut().into_iter().zip(leaves) {
            *p = p.descend(&grads.wrt(v), lr)?;
        }
        if let (Some(h), Some(t)) = (model.hgm.as_mut(), trace) {
            h.update_running_stats(&tape, &t);
        }
        if !model.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    let mut tape = Tape::new();
    let (final_metrics, ..) = evaluate(&mut tape, &x, &targets, &model, map, loss_cfg, steps)?;
    let report = TrainingReport {
        seed: spec.seed,
        steps,
        lr,
        with_hgm: model.hgm.is_some(),
        loss: *loss_cfg,
        history,
        final_metrics,
    };
    Ok((report, model))
}

fn param_vars(vars: &ModelVars) -> Vec<Var> {
    let head = |h: &HeadVars| [h.transform.weight, h.transform.bias, h.classifier.weight, h.classifier.bias];
    let mut out: Vec<Var> = head(&vars.coarse).into_iter().chain(head(&vars.fine)).collect();
    if let Some(h) = &vars.hgm {
        for pw in [h.transform_coarse, h.transform_fine, h.squeeze, h.channel_reduce, h.refine_channel, h.refine_region] {
            out.extend([pw.weight, pw.bias]);
        }
        if let Some(n) = h.norms {
            out.extend(n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::{String, ToString};
    use alloc::vec;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| alloc::format!("p{i}")).collect()
    }

    fn two_level_map() -> HierarchyMap {
        HierarchyMap::new(labels(6), vec!["a".to_string(), "b".into(), "c".into()], vec![0, 0, 1, 1, 2, 2]).unwrap()
    }

    fn input(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[4, 6, 9], |_| rng.gen_range(-1.0..1.0))
    }

    fn logits(model: &HgflModel, x: &Tensor) -> (Tensor, Tensor) {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let out = forward_branches(&mut tape, xv, model, &vars).unwrap();
        (tape.value(out.coarse_logits).clone(), tape.value(out.fine_logits).clone())
    }

    #[test]
    fn output_shapes() {
        let model = HgflModel::init(6, 6, 3, 6, Some((3, 3)), 1);
        let (c, f) = logits(&model, &input(2));
        assert_eq!(c.shape(), [4, 3]);
        assert_eq!(f.shape(), [4, 6]);
    }

    #[test]
    fn fine_branch_ignores_coarse_weights_without_module() {
        let model = HgflModel::init(6, 5, 3, 6, None, 1);
        let mut perturbed = model.clone();
        perturbed.coarse.transform.weight = perturbed.coarse.transform.weight.map(|v| v * 3.0 + 0.1);
        let x = input(3);
        assert_eq!(logits(&model, &x).1, logits(&perturbed, &x).1);
        assert_eq!(predict_fine_only(&x, &model).unwrap(), logits(&model, &x).1);
        assert_eq!(predict_fine_only(&x, &perturbed).unwrap(), logits(&model, &x).1);
    }

    #[test]
    fn zero_module_matches_no_module() {
        let base = HgflModel::init(6, 4, 3, 6, None, 5);
        let mut with = base.clone();
        with.hgm = Some(HgmParams::zeros(HgmDims::new(4, 2, 2)));
        let x = input(4);
        assert_eq!(logits(&base, &x).1, logits(&with, &x).1);
    }

    #[test]
    fn fine_only_rejects_attached_module() {
        let model = HgflModel::init(6, 4, 3, 6, Some((2, 2)), 5);
        assert!(matches!(predict_fine_only(&input(1), &model), Err(Error::Config(_))));
    }

    #[test]
    fn coarse_targets() {
        let map = two_level_map();
        assert_eq!(derive_coarse_targets(&[0, 1, 2, 5], &map).unwrap(), [0, 0, 1, 2]);
        assert!(matches!(derive_coarse_targets(&[6], &map), Err(Error::Label { index: 6, .. })));
        let id = HierarchyMap::identity(labels(4)).unwrap();
        assert_eq!(derive_coarse_targets(&[3, 1, 2], &id).unwrap(), [3, 1, 2]);
        let one = HierarchyMap::new(labels(4), vec!["all".into()], vec![0; 4]).unwrap();
        assert_eq!(derive_coarse_targets(&[3, 1, 2], &one).unwrap(), [0, 0, 0]);
    }

    #[test]
    fn dual_loss_rejects_bad_widths_and_weights() {
        let map = two_level_map();
        let mut tape = Tape::new();
        let c = tape.leaf(Tensor::zeros(&[2, 3]));
        let f = tape.leaf(Tensor::zeros(&[2, 5]));
        assert!(matches!(
            dual_loss(&mut tape, c, f, &[0, 1], &map, &HierLossConfig::default()),
            Err(Error::Dimension { .. })
        ));
        let f = tape.leaf(Tensor::zeros(&[2, 6]));
        let neg = HierLossConfig { weight_coarse: -1.0, weight_fine: 1.0 };
        assert!(dual_loss(&mut tape, c, f, &[0, 1], &map, &neg).is_err());
    }

    #[test]
    fn module_couples_coarse_parameters_to_fine_loss() {
        let map = two_level_map();
        let model = HgflModel::init(6, 4, 3, 6, Some((3, 3)), 8);
        let cfg = HierLossConfig { weight_coarse: 0.0, weight_fine: 1.0 };
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let xv = tape.leaf(input(9));
        let out = forward_branches(&mut tape, xv, &model, &vars).unwrap();
        let loss = dual_loss(&mut tape, out.coarse_logits, out.fine_logits, &[0, 1, 2, 3], &map, &cfg).unwrap();
        let g = tape.backward(loss.total).unwrap();
        let coarse_grad = g.wrt(vars.coarse.transform.weight);
        assert!(coarse_grad.data().iter().any(|&v| v != 0.0));
        // The coarse classifier is outside the fine path.
        assert!(g.wrt(vars.coarse.classifier.weight).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lr_keeps_losses_constant() {
        let spec = SyntheticRegionSpec {
            n_regions: 12,
            channels: 4,
            pixels: 3,
            hierarchy: two_level_map(),
            separation: 1.0,
            noise: 0.1,
            seed: 4,
        };
        let model = HgflModel::init(4, 4, 3, 6, Some((2, 2)), 1);
        let (report, trained) = train_toy(&spec, model.clone(), &HierLossConfig::default(), 0.0, 5).unwrap();
        assert!(report.history.windows(2).all(|w| w[0].fine_loss == w[1].fine_loss && w[0].coarse_loss == w[1].coarse_loss));
        assert_eq!(trained, model);
        assert!(train_toy(&spec, HgflModel::init(4, 4, 3, 6, None, 1), &HierLossConfig::default(), 0.1, 0).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let spec = SyntheticRegionSpec {
            n_regions: 12,
            channels: 4,
            pixels: 3,
            hierarchy: two_level_map(),
            separation: 50.0,
            noise: 1.0,
            seed: 4,
        };
        let model = HgflModel::init(4, 4, 3, 6, Some((2, 2)), 1);
        let r = train_toy(&spec, model, &HierLossConfig::default(), 1e6, 50);
        assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
    }
}
