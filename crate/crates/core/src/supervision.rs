//! Depth and binary supervision.
//!
//! Depth losses are sums over cells (and frames), not means. The contrastive
//! term compares each pixel with its eight neighbours through eight `3×3`
//! kernels applied depthwise with zero padding; a constant offset therefore
//! leaks into the loss along the border only.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tensor::Tensor;

/// Floor applied to the true-class probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Hidden width of the binary head.
pub const DEFAULT_HEAD_HIDDEN: usize = 128;

pub type Stencil = [[f64; 3]; 3];

/// The eight centre-minus-neighbour kernels, `+1` positions in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveKernelSet {
    kernels: [Stencil; 8],
}

impl Default for ContrastiveKernelSet {
    fn default() -> Self {
        let mut kernels = [[[0.0; 3]; 3]; 8];
        let neighbours = (0..9).filter(|&p| p != 4);
        for (k, p) in kernels.iter_mut().zip(neighbours) {
            k[1][1] = -1.0;
            k[p / 3][p % 3] = 1.0;
        }
        ContrastiveKernelSet { kernels }
    }
}

impl ContrastiveKernelSet {
    pub fn kernels(&self) -> &[Stencil; 8] {
        &self.kernels
    }
}

/// Same-size cross-correlation of one map with one stencil, zero padded.
pub fn stencil_response(x: &Grid, k: &Stencil) -> Grid {
    Grid::from_fn(x.rows(), x.cols(), |r, c| {
        let mut acc = 0.0;
        for (a, row) in k.iter().enumerate() {
            for (b, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    acc += kv * x.get_or_zero(r as isize + a as isize - 1, c as isize + b as isize - 1);
                }
            }
        }
        acc
    })
}

/// Adjoint of [`stencil_response`]: correlation with the flipped stencil.
fn stencil_adjoint(y: &Grid, k: &Stencil) -> Grid {
    Grid::from_fn(y.rows(), y.cols(), |r, c| {
        let mut acc = 0.0;
        for (a, row) in k.iter().enumerate() {
            for (b, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    acc += kv * y.get_or_zero(r as isize - a as isize + 1, c as isize - b as isize + 1);
                }
            }
        }
        acc
    })
}

/// `‖pred − label‖²`.
pub fn euclidean_depth_loss(pred: &Grid, label: &Grid) -> Result<f64> {
    pred.check_same_shape(label)?;
    Ok(pred
        .as_slice()
        .iter()
        .zip(label.as_slice())
        .map(|(p, l)| (p - l).powi(2))
        .sum())
}

/// `Σᵢ ‖Kᵢ ⊛ pred − Kᵢ ⊛ label‖²` over the eight contrastive kernels.
///
/// The kernels are linear, so this is evaluated on `pred − label` directly:
/// each kernel response at a cell is the neighbour's difference (zero off the
/// grid) minus the cell's own.
pub fn contrastive_depth_loss(pred: &Grid, label: &Grid) -> Result<f64> {
    let diff = pred.zip_map(label, |p, l| p - l)?;
    let (rows, cols) = diff.shape();
    let d = diff.as_slice();
    let mut total = 0.0;
    for (dr, dc) in NEIGHBOUR_OFFSETS {
        for r in 0..rows {
            let nr = r as isize + dr;
            let row_inside = nr >= 0 && (nr as usize) < rows;
            for c in 0..cols {
                let nc = c as isize + dc;
                let neighbour = if row_inside && nc >= 0 && (nc as usize) < cols {
                    d[nr as usize * cols + nc as usize]
                } else {
                    0.0
                };
                let v = neighbour - d[r * cols + c];
                total += v * v;
            }
        }
    }
    Ok(total)
}

/// Offsets of the `+1` tap of each contrastive kernel, in kernel order.
const NEIGHBOUR_OFFSETS: [(isize, isize); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Gradient of `euclidean + contrastive` with respect to `pred`.
pub fn depth_loss_gradient(pred: &Grid, label: &Grid) -> Result<Grid> {
    pred.check_same_shape(label)?;
    let mut grad = pred.zip_map(label, |p, l| 2.0 * (p - l))?;
    for k in ContrastiveKernelSet::default().kernels() {
        let residual = stencil_response(pred, k).zip_map(&stencil_response(label, k), |a, b| a - b)?;
        let back = stencil_adjoint(&residual, k);
        for (g, b) in grad.as_mut_slice().iter_mut().zip(back.as_slice()) {
            *g += 2.0 * b;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthLoss {
    pub absolute: f64,
    pub contrastive: f64,
    pub total: f64,
}

impl std::ops::Add for DepthLoss {
    type Output = DepthLoss;

    fn add(self, o: DepthLoss) -> DepthLoss {
        let absolute = self.absolute + o.absolute;
        let contrastive = self.contrastive + o.contrastive;
        DepthLoss {
            absolute,
            contrastive,
            total: absolute + contrastive,
        }
    }
}

/// Absolute plus contrastive loss of one frame.
pub fn single_frame_loss(pred: &Grid, label: &Grid) -> Result<DepthLoss> {
    let absolute = euclidean_depth_loss(pred, label)?;
    let contrastive = contrastive_depth_loss(pred, label)?;
    Ok(DepthLoss {
        absolute,
        contrastive,
        total: absolute + contrastive,
    })
}

/// Per-frame depth losses summed over the sequence.
pub fn multi_frame_depth_loss(preds: &[Grid], labels: &[Grid]) -> Result<DepthLoss> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            format!("{} label frames", preds.len()),
            labels.len(),
        ));
    }
    preds
        .iter()
        .zip(labels)
        .try_fold(DepthLoss::default(), |acc, (p, l)| Ok(acc + single_frame_loss(p, l)?))
}

/// Class index of the living output of the binary head.
pub const LIVING_CLASS: usize = 1;

/// Two dense layers (ReLU between them) and a softmax over `[attack, living]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryHead {
    input: usize,
    hidden: usize,
    /// `hidden × input`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `2 × hidden`, row-major.
    w2: Vec<f64>,
    b2: [f64; 2],
}

impl BinaryHead {
    pub fn new(input: usize, hidden: usize, w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: [f64; 2]) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::shape("non-empty head", format!("{input} -> {hidden}")));
        }
        if w1.len() != hidden * input || b1.len() != hidden || w2.len() != 2 * hidden {
            return Err(Error::shape(
                format!("w1 {}, b1 {hidden}, w2 {}", hidden * input, 2 * hidden),
                format!("w1 {}, b1 {}, w2 {}", w1.len(), b1.len(), w2.len()),
            ));
        }
        if w1.iter().chain(&b1).chain(&w2).chain(&b2).any(|v| !v.is_finite()) {
            return Err(Error::domain("head weights must be finite"));
        }
        Ok(BinaryHead { input, hidden, w1, b1, w2, b2 })
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        BinaryHead {
            input,
            hidden,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; 2 * hidden],
            b2: [0.0; 2],
        }
    }

    /// Uniform `±sqrt(3 / fan_in)` weights, zero biases.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut fill = |n: usize, fan_in: usize| {
            let bound = (3.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<_>>()
        };
        let w1 = fill(hidden * input, input);
        let w2 = fill(2 * hidden, hidden);
        BinaryHead {
            input,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: [0.0; 2],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input
    }

    pub fn hidden_len(&self) -> usize {
        self.hidden
    }

    /// Seeds the second layer so the softmax returns `logits` whatever the input.
    pub fn with_output_bias(mut self, logits: [f64; 2]) -> Self {
        self.w2.iter_mut().for_each(|w| *w = 0.0);
        self.b2 = logits;
        self
    }

    /// Class logits for a flat input vector.
    pub fn logits(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.input {
            return Err(Error::shape(format!("{} head inputs", self.input), x.len()));
        }
        let hidden: Vec<f64> = self
            .w1
            .chunks_exact(self.input)
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).max(0.0))
            .collect();
        let mut out = self.b2;
        for (o, row) in out.iter_mut().zip(self.w2.chunks_exact(self.hidden)) {
            *o += row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        Ok(out)
    }

    /// Writes `head_w1`, `head_b1`, `head_w2`, `head_b2` tensor files into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        let files = [
            ("head_w1", Tensor::from_vec(self.hidden, self.input, 1, self.w1.clone())?),
            ("head_b1", Tensor::from_vec(self.hidden, 1, 1, self.b1.clone())?),
            ("head_w2", Tensor::from_vec(2, self.hidden, 1, self.w2.clone())?),
            ("head_b2", Tensor::from_vec(2, 1, 1, self.b2.to_vec())?),
        ];
        for (name, t) in files {
            t.save(&dir.join(format!("{name}.tensor")))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let load = |name: &str| Tensor::load(&dir.join(format!("{name}.tensor")));
        let w1 = load("head_w1")?;
        let (hidden, input, _) = w1.shape();
        let b2 = load("head_b2")?;
        if b2.as_slice().len() != 2 {
            return Err(Error::shape("2 output biases", b2.as_slice().len()));
        }
        BinaryHead::new(
            input,
            hidden,
            w1.as_slice().to_vec(),
            load("head_b1")?.as_slice().to_vec(),
            load("head_w2")?.as_slice().to_vec(),
            [b2.as_slice()[0], b2.as_slice()[1]],
        )
    }
}

pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryOutput {
    /// Cross-entropy of the true class.
    pub loss: f64,
    /// Softmax probability of the living class.
    pub living_prob: f64,
    pub probs: [f64; 2],
}

/// Runs the head over the concatenated fused maps and scores the true class.
pub fn binary_loss(head: &BinaryHead, fused: &[Grid], living: bool) -> Result<BinaryOutput> {
    let x: Vec<f64> = fused.iter().flat_map(|g| g.as_slice().iter().copied()).collect();
    let probs = softmax(head.logits(&x)?);
    let truth = if living { LIVING_CLASS } else { 1 - LIVING_CLASS };
    Ok(BinaryOutput {
        loss: -probs[truth].max(PROB_FLOOR).ln(),
        living_prob: probs[LIVING_CLASS],
        probs,
    })
}

/// `beta · binary + (1 − beta) · depth`.
pub fn multi_frame_loss(depth: f64, binary: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    Ok(beta * binary + (1.0 - beta) * depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub absolute: f64,
    pub contrastive: f64,
    pub depth_total: f64,
    pub binary: f64,
    pub multi_total: f64,
}

impl LossReport {
    /// Every multi-frame loss for one sequence of fused maps, plus the head output.
    pub fn evaluate(
        fused: &[Grid],
        labels: &[Grid],
        head: &BinaryHead,
        living: bool,
        beta: f64,
    ) -> Result<(LossReport, BinaryOutput)> {
        let depth = multi_frame_depth_loss(fused, labels)?;
        let bin = binary_loss(head, fused, living)?;
        let report = LossReport {
            absolute: depth.absolute,
            contrastive: depth.contrastive,
            depth_total: depth.total,
            binary: bin.loss,
            multi_total: multi_frame_loss(depth.total, bin.loss, beta)?,
        };
        Ok((report, bin))
    }
}
