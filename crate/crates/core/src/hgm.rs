//! Hierarchy guided module.
//!
//! Given coarse-grained region features `A` and fine-grained region features
//! `B` (both `N×C×L`: regions × channels × pixels), the module
//!
//! 1. transforms them with pointwise convolutions and ReLU into
//!    `A_t: N×C1×L` and `B_t: N×C2×L`;
//! 2. computes region-wise correlations `S: N×C1` by squeezing `B_t` to one
//!    channel, correlating every region of `A_t` against all squeezed regions
//!    and pooling over the region axis;
//! 3. computes channel-wise correlations `Cc: N×C1` from the per-region
//!    `C2×C1` channel correlation matrix reduced over its `C2` axis;
//! 4. refines: `A_out = relu(W_ac(A_t + A_t∘Cc))`,
//!    `A_out' = relu(W_bs(A_out + A_out∘S))`, and returns `B + A_out'`.
//!
//! ReLU is used at every activation site.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::tape::{BatchStats, PoolMode, Tape, Var};
use crate::tensor::Tensor;

/// Channel configuration: input channels `C`, transformed coarse channels
/// `C1`, transformed fine channels `C2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HgmDims {
    pub channels: usize,
    pub coarse_channels: usize,
    pub fine_channels: usize,
}

impl HgmDims {
    pub fn new(channels: usize, coarse_channels: usize, fine_channels: usize) -> Self {
        HgmDims { channels, coarse_channels, fine_channels }
    }

    /// `C1 = C2 = C/2` (at least 1).
    pub fn halved(channels: usize) -> Self {
        let half = (channels / 2).max(1);
        HgmDims::new(channels, half, half)
    }
}

/// Weight and bias of a 1×1 convolution, `weight: Cout×Cin`, `bias: Cout`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pointwise {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Pointwise {
    pub fn zeros(cout: usize, cin: usize) -> Self {
        Pointwise { weight: Tensor::zeros(&[cout, cin]), bias: Tensor::zeros(&[cout]) }
    }

    /// Identity weights (square) with zero bias.
    pub fn identity(channels: usize) -> Self {
        Pointwise { weight: Tensor::eye(channels), bias: Tensor::zeros(&[channels]) }
    }

    /// Weights and biases uniform in `±1/sqrt(cin)`.
    pub fn uniform(cout: usize, cin: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / libm::sqrt(cin as f64);
        Pointwise {
            weight: Tensor::from_fn(&[cout, cin], |_| rng.gen_range(-bound..bound)),
            bias: Tensor::from_fn(&[cout], |_| rng.gen_range(-bound..bound)),
        }
    }

    fn check(&self, name: &str, cout: usize, cin: usize) -> Result<()> {
        if self.weight.shape() != [cout, cin] || self.bias.shape() != [cout] {
            return Err(dim_err(
                "hgm params",
                format!(
                    "{name}: expected weight [{cout}, {cin}] and bias [{cout}], got {:?} and {:?}",
                    self.weight.shape(),
                    self.bias.shape()
                ),
            ));
        }
        Ok(())
    }
}

/// Channel-reducing weighted sum over the `C2` axis: `weight: C2`, scalar
/// `bias` stored as a one-element tensor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RowReduce {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl RowReduce {
    pub fn zeros(rows: usize) -> Self {
        RowReduce { weight: Tensor::zeros(&[rows]), bias: Tensor::zeros(&[1]) }
    }
}

/// Per-channel batch normalization with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    /// Normalize with batch statistics (true) or the running ones.
    pub training: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: alloc::vec![0.0; channels],
            running_var: alloc::vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            training: true,
        }
    }

    /// Exponential moving average update of the running statistics.
    pub fn update_running(&mut self, batch: &BatchStats) {
        let m = self.momentum;
        for (r, b) in self.running_mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&batch.var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }

    fn running(&self) -> BatchStats {
        BatchStats { mean: self.running_mean.clone(), var: self.running_var.clone() }
    }
}

/// Batch norms inserted between convolution and ReLU in the two transforms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransformNorms {
    pub coarse: BatchNorm,
    pub fine: BatchNorm,
}

/// All learnable state of the module.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HgmParams {
    /// `W^t_a`: C → C1.
    pub transform_coarse: Pointwise,
    /// `W^t_b`: C → C2.
    pub transform_fine: Pointwise,
    /// `W_s`: C2 → 1.
    pub squeeze: Pointwise,
    /// `W_c`: reduces C2 rows to one.
    pub channel_reduce: RowReduce,
    /// `W_ac`: C1 → C1.
    pub refine_channel: Pointwise,
    /// `W_bs`: C1 → C.
    pub refine_region: Pointwise,
    #[cfg_attr(feature = "serde", serde(default))]
    pub pooling: PoolMode,
    #[cfg_attr(feature = "serde", serde(default))]
    pub batch_norm: Option<TransformNorms>,
}

impl HgmParams {
    /// All weights and biases zero; the module then returns `B` unchanged.
    pub fn zeros(dims: HgmDims) -> Self {
        let HgmDims { channels: c, coarse_channels: c1, fine_channels: c2 } = dims;
        HgmParams {
            transform_coarse: Pointwise::zeros(c1, c),
            transform_fine: Pointwise::zeros(c2, c),
            squeeze: Pointwise::zeros(1, c2),
            channel_reduce: RowReduce::zeros(c2),
            refine_channel: Pointwise::zeros(c1, c1),
            refine_region: Pointwise::zeros(c, c1),
            pooling: PoolMode::Max,
            batch_norm: None,
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization from a seeded generator.
    pub fn init(dims: HgmDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(dims, &mut rng)
    }

    pub fn init_with(dims: HgmDims, rng: &mut impl Rng) -> Self {
        let HgmDims { channels: c, coarse_channels: c1, fine_channels: c2 } = dims;
        let transform_coarse = Pointwise::uniform(c1, c, rng);
        let transform_fine = Pointwise::uniform(c2, c, rng);
        let squeeze = Pointwise::uniform(1, c2, rng);
        let reduce = Pointwise::uniform(1, c2, rng);
        let channel_reduce = RowReduce {
            weight: reduce.weight.reshape(&[c2]).expect("reshape"),
            bias: reduce.bias,
        };
        HgmParams {
            transform_coarse,
            transform_fine,
            squeeze,
            channel_reduce,
            refine_channel: Pointwise::uniform(c1, c1, rng),
            refine_region: Pointwise::uniform(c, c1, rng),
            pooling: PoolMode::Max,
            batch_norm: None,
        }
    }

    pub fn with_pooling(mut self, pooling: PoolMode) -> Self {
        self.pooling = pooling;
        self
    }

    /// Enables Conv-BN-ReLU in both transforms.
    pub fn with_batch_norm(mut self) -> Self {
        let dims = self.dims();
        self.batch_norm = Some(TransformNorms {
            coarse: BatchNorm::new(dims.coarse_channels),
            fine: BatchNorm::new(dims.fine_channels),
        });
        self
    }

    pub fn dims(&self) -> HgmDims {
        let w = self.transform_coarse.weight.shape();
        HgmDims::new(w[1], w[0], self.transform_fine.weight.shape()[0])
    }

    /// Checks that every tensor agrees with [`HgmParams::dims`] and is finite.
    pub fn validate(&self) -> Result<()> {
        let HgmDims { channels: c, coarse_channels: c1, fine_channels: c2 } = self.dims();
        self.transform_coarse.check("transform_coarse", c1, c)?;
        self.transform_fine.check("transform_fine", c2, c)?;
        self.squeeze.check("squeeze", 1, c2)?;
        self.refine_channel.check("refine_channel", c1, c1)?;
        self.refine_region.check("refine_region", c, c1)?;
        let cr = &self.channel_reduce;
        if cr.weight.shape() != [c2] || cr.bias.numel() != 1 {
            return Err(dim_err(
                "hgm params",
                format!("channel_reduce: expected weight [{c2}] and scalar bias, got {:?} and {:?}", cr.weight.shape(), cr.bias.shape()),
            ));
        }
        if let Some(norms) = &self.batch_norm {
            for (name, bn, ch) in [("coarse", &norms.coarse, c1), ("fine", &norms.fine, c2)] {
                if bn.gamma.shape() != [ch]
                    || bn.beta.shape() != [ch]
                    || bn.running_mean.len() != ch
                    || bn.running_var.len() != ch
                {
                    return Err(dim_err("hgm params", format!("{name} batch norm does not cover {ch} channels")));
                }
            }
        }
        if self.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("non-finite HGM weight".into()));
        }
        Ok(())
    }

    /// Learnable tensors in a fixed order: the six weight groups (weight then
    /// bias), then batch-norm scale/shift for coarse and fine when enabled.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = alloc::vec![
            &self.transform_coarse.weight,
            &self.transform_coarse.bias,
            &self.transform_fine.weight,
            &self.transform_fine.bias,
            &self.squeeze.weight,
            &self.squeeze.bias,
            &self.channel_reduce.weight,
            &self.channel_reduce.bias,
            &self.refine_channel.weight,
            &self.refine_channel.bias,
            &self.refine_region.weight,
            &self.refine_region.bias,
        ];
        if let Some(n) = &self.batch_norm {
            out.extend([&n.coarse.gamma, &n.coarse.beta, &n.fine.gamma, &n.fine.beta]);
        }
        out
    }

    /// Mutable counterpart of [`HgmParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = alloc::vec![
            &mut self.transform_coarse.weight,
            &mut self.transform_coarse.bias,
            &mut self.transform_fine.weight,
            &mut self.transform_fine.bias,
            &mut self.squeeze.weight,
            &mut self.squeeze.bias,
            &mut self.channel_reduce.weight,
            &mut self.channel_reduce.bias,
            &mut self.refine_channel.weight,
            &mut self.refine_channel.bias,
            &mut self.refine_region.weight,
            &mut self.refine_region.bias,
        ];
        if let Some(n) = &mut self.batch_norm {
            out.extend([&mut n.coarse.gamma, &mut n.coarse.beta, &mut n.fine.gamma, &mut n.fine.beta]);
        }
        out
    }

    /// Records every learnable tensor as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> HgmVars {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
        HgmVars::from_slice(&vars)
    }

    /// Tensor-level forward pass on a fresh tape.
    pub fn forward(&self, pair: &FeaturePair) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let a = tape.leaf(pair.a.clone());
        let b = tape.leaf(pair.b.clone());
        let trace = hgm_forward(&mut tape, a, b, &vars, self)?;
        Ok(tape.value(trace.b_out).clone())
    }

    /// Folds the batch statistics of a training-mode forward into the
    /// running statistics.
    pub fn update_running_stats(&mut self, tape: &Tape, trace: &HgmTrace) {
        if let (Some(norms), Some((ca, cb))) = (&mut self.batch_norm, trace.norm_nodes) {
            if let Some(s) = tape.batch_stats(ca) {
                norms.coarse.update_running(s);
            }
            if let Some(s) = tape.batch_stats(cb) {
                norms.fine.update_running(s);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PointwiseVars {
    pub weight: Var,
    pub bias: Var,
}

/// Leaves of [`HgmParams`] on a tape.
#[derive(Debug, Clone, Copy)]
pub struct HgmVars {
    pub transform_coarse: PointwiseVars,
    pub transform_fine: PointwiseVars,
    pub squeeze: PointwiseVars,
    pub channel_reduce: PointwiseVars,
    pub refine_channel: PointwiseVars,
    pub refine_region: PointwiseVars,
    /// `(coarse γ, coarse β, fine γ, fine β)`.
    pub norms: Option<[Var; 4]>,
}

impl HgmVars {
    /// Inverse of [`HgmParams::tensors`] ordering: 12 vars, or 16 with
    /// batch norm.
    pub fn from_slice(vars: &[Var]) -> Self {
        assert!(vars.len() == 12 || vars.len() == 16, "expected 12 or 16 HGM vars, got {}", vars.len());
        let pw = |i: usize| PointwiseVars { weight: vars[i], bias: vars[i + 1] };
        HgmVars {
            transform_coarse: pw(0),
            transform_fine: pw(2),
            squeeze: pw(4),
            channel_reduce: pw(6),
            refine_channel: pw(8),
            refine_region: pw(10),
            norms: (vars.len() == 16).then(|| [vars[12], vars[13], vars[14], vars[15]]),
        }
    }

    pub fn count(has_norm: bool) -> usize {
        if has_norm {
            16
        } else {
            12
        }
    }
}

/// Coarse (`a`) and fine (`b`) region features of identical shape `N×C×L`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeaturePair {
    pub a: Tensor,
    pub b: Tensor,
}

impl FeaturePair {
    pub fn new(a: Tensor, b: Tensor) -> Result<Self> {
        if a.rank() != 3 || a.shape() != b.shape() {
            return Err(dim_err(
                "feature pair",
                format!("expected two equal N×C×L shapes, got {:?} and {:?}", a.shape(), b.shape()),
            ));
        }
        Ok(FeaturePair { a, b })
    }
}

/// Intermediate nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct HgmTrace {
    pub a_t: Var,
    pub b_t: Var,
    pub b_sqz: Var,
    pub s: Var,
    pub cc: Var,
    pub a_out: Var,
    pub a_out_refined: Var,
    pub b_out: Var,
    norm_nodes: Option<(Var, Var)>,
}

fn conv_relu(tape: &mut Tape, x: Var, pw: PointwiseVars) -> Result<Var> {
    let y = tape.conv1x1(x, pw.weight, pw.bias)?;
    Ok(tape.relu(y))
}

/// Transformed coarse and fine features, plus the batch-norm nodes when
/// normalization is enabled.
pub type Transformed = (Var, Var, Option<(Var, Var)>);

/// `A_t = relu(conv(A))`, `B_t = relu(conv(B))`, with optional batch norm
/// between convolution and activation. Also returns the batch-norm nodes.
pub fn transform(
    tape: &mut Tape,
    a: Var,
    b: Var,
    vars: &HgmVars,
    params: &HgmParams,
) -> Result<Transformed> {
    if tape.shape(a) != tape.shape(b) {
        return Err(dim_err(
            "transform",
            format!("A {:?} and B {:?} differ", tape.shape(a), tape.shape(b)),
        ));
    }
    let ya = tape.conv1x1(a, vars.transform_coarse.weight, vars.transform_coarse.bias)?;
    let yb = tape.conv1x1(b, vars.transform_fine.weight, vars.transform_fine.bias)?;
    let (ya, yb, nodes) = match (&params.batch_norm, vars.norms) {
        (Some(norms), Some([ga, ba, gb, bb])) => {
            let fixed_a = (!norms.coarse.training).then(|| norms.coarse.running());
            let fixed_b = (!norms.fine.training).then(|| norms.fine.running());
            let na = tape.batch_norm(ya, ga, ba, norms.coarse.eps, fixed_a.as_ref())?;
            let nb = tape.batch_norm(yb, gb, bb, norms.fine.eps, fixed_b.as_ref())?;
            (na, nb, Some((na, nb)))
        }
        (None, None) => (ya, yb, None),
        _ => return Err(Error::Contract("batch-norm params and vars disagree".into())),
    };
    Ok((tape.relu(ya), tape.relu(yb), nodes))
}

/// Region-wise correlations `S: N×C1`. Returns `(B_sqz as N×L, S)`.
pub fn region_correlation(
    tape: &mut Tape,
    a_t: Var,
    b_t: Var,
    vars: &HgmVars,
    pooling: PoolMode,
) -> Result<(Var, Var)> {
    let (n, c1, l) = dims3("region_correlation", tape.shape(a_t))?;
    let (nb, _, lb) = dims3("region_correlation", tape.shape(b_t))?;
    if (nb, lb) != (n, l) {
        return Err(dim_err(
            "region_correlation",
            format!("A_t {:?} and B_t {:?} disagree on N or L", tape.shape(a_t), tape.shape(b_t)),
        ));
    }
    let sq = conv_relu(tape, b_t, vars.squeeze)?;
    let sq = tape.reshape(sq, &[n, l])?;
    let sq_t = tape.transpose(sq)?;
    let regions = tape.reshape(a_t, &[n * c1, l])?;
    let full = tape.matmul(regions, sq_t)?;
    let full = tape.reshape(full, &[n, c1, n])?;
    let s = tape.pool_axis(full, 2, pooling)?;
    Ok((sq, s))
}

/// Channel-wise correlations `Cc: N×C1`.
pub fn channel_correlation(tape: &mut Tape, a_t: Var, b_t: Var, vars: &HgmVars) -> Result<Var> {
    let (n, c1, l) = dims3("channel_correlation", tape.shape(a_t))?;
    let (nb, _, lb) = dims3("channel_correlation", tape.shape(b_t))?;
    if (nb, lb) != (n, l) {
        return Err(dim_err(
            "channel_correlation",
            format!("A_t {:?} and B_t {:?} disagree on N or L", tape.shape(a_t), tape.shape(b_t)),
        ));
    }
    let a_tt = tape.transpose(a_t)?;
    let corr = tape.batched_matmul(b_t, a_tt)?;
    let reduced = tape.row_reduce_conv(corr, vars.channel_reduce.weight, vars.channel_reduce.bias)?;
    let reduced = tape.relu(reduced);
    tape.reshape(reduced, &[n, c1])
}

/// Residual refinement of `B`. Returns `(A_out, A_out', B_out)`.
pub fn refine(
    tape: &mut Tape,
    b: Var,
    a_t: Var,
    s: Var,
    cc: Var,
    vars: &HgmVars,
) -> Result<(Var, Var, Var)> {
    let gated = tape.broadcast_mul_over_pixels(a_t, cc)?;
    let x = tape.add(a_t, gated)?;
    let a_out = conv_relu(tape, x, vars.refine_channel)?;
    let gated = tape.broadcast_mul_over_pixels(a_out, s)?;
    let x = tape.add(a_out, gated)?;
    let a_out_refined = conv_relu(tape, x, vars.refine_region)?;
    if tape.shape(a_out_refined) != tape.shape(b) {
        return Err(dim_err(
            "refine",
            format!("refined features {:?} do not match B {:?}", tape.shape(a_out_refined), tape.shape(b)),
        ));
    }
    let b_out = tape.add(b, a_out_refined)?;
    Ok((a_out, a_out_refined, b_out))
}

/// Full module: transform, both correlations, refinement.
pub fn hgm_forward(tape: &mut Tape, a: Var, b: Var, vars: &HgmVars, params: &HgmParams) -> Result<HgmTrace> {
    dims3("hgm_forward", tape.shape(a))?;
    let (a_t, b_t, norm_nodes) = transform(tape, a, b, vars, params)?;
    let (b_sqz, s) = region_correlation(tape, a_t, b_t, vars, params.pooling)?;
    let cc = channel_correlation(tape, a_t, b_t, vars)?;
    let (a_out, a_out_refined, b_out) = refine(tape, b, a_t, s, cc, vars)?;
    Ok(HgmTrace { a_t, b_t, b_sqz, s, cc, a_out, a_out_refined, b_out, norm_nodes })
}

fn dims3(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [n, c, l] => Ok((n, c, l)),
        _ => Err(dim_err(op, format!("expected N×C×L, got {shape:?}"))),
    }
}
