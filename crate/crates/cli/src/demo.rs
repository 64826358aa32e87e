//! `demo`: a synthetic living face and a planar print run through the whole
//! pipeline with fixed weights.
//!
//! Frames are rendered on the 32×32 label grid. A two-level backbone
//! (3×3 conv + tanh each) feeds one OFF block per level; the second block
//! also takes the first block's output. The ConvGRU over the second-level
//! blocks gives the multi-frame depth, a sigmoid 1×1 head on the backbone
//! gives the single-frame depth, and their fusion is scored against the
//! depth labels and by the binary head.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tempdepth::depthlabel::{
    generate_living_depth, hull_mask, spoof_depth, synthesize_face_surface, FaceMask, FaceSurfaceParams,
    ImageBounds, VertexSet, DEPTH_SIDE,
};
use tempdepth::features::{off_block, OffBlockWeights};
use tempdepth::metrics::living_score;
use tempdepth::recurrent::{convgru_run, fuse_depth, ConvGruCell, HiddenState};
use tempdepth::supervision::{BinaryHead, LossReport};
use tempdepth::{conv2d, ConvKernel, Grid, Padding, Tensor};

use crate::config::{DemoConfig, RunConfig};
use crate::{write_output, CliError};

pub const JSON_NAME: &str = "demo.json";

const CELLS: usize = DEPTH_SIDE * DEPTH_SIDE;

/// All fixed weights of the demo network.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoWeights {
    pub backbone: [ConvKernel; 2],
    pub single_head: ConvKernel,
    pub off: [OffBlockWeights; 2],
    pub gru: ConvGruCell,
    pub head: BinaryHead,
}

fn kernel_file(dir: &Path, name: &str) -> std::path::PathBuf {
    dir.join(format!("{name}.tensor"))
}

impl DemoWeights {
    /// Seeded weights sized for `frames` input frames.
    pub fn random(cfg: &DemoConfig, frames: usize, rng: &mut ChaCha8Rng) -> Result<Self, CliError> {
        let c = cfg.backbone_channels;
        let b0 = ConvKernel::random(3, 3, 1, c, Padding::Replicate, rng)?;
        let b1 = ConvKernel::random(3, 3, c, c, Padding::Replicate, rng)?;
        let single_head = ConvKernel::random(1, 1, c, 1, Padding::Zero, rng)?;
        let off0 = OffBlockWeights::random(c, cfg.reduced_channels, 0, cfg.fused_channels, rng)?;
        let off1 = OffBlockWeights::random(c, cfg.reduced_channels, cfg.fused_channels, cfg.fused_channels, rng)?;
        let gru = ConvGruCell::random(1, cfg.fused_channels, rng)?;
        let head = BinaryHead::random((frames - 1) * CELLS, cfg.head_hidden, rng);
        let w = DemoWeights {
            backbone: [b0, b1],
            single_head,
            off: [off0, off1],
            gru,
            head,
        };
        w.check(frames)?;
        Ok(w)
    }

    /// Channel and size consistency, including the head input for `frames`.
    pub fn check(&self, frames: usize) -> Result<(), CliError> {
        let mismatch = |what: &str, expected: usize, got: usize| {
            Err(CliError::Data(format!("weight mismatch: {what}: expected {expected}, got {got}")))
        };
        let [b0, b1] = &self.backbone;
        let [o0, o1] = &self.off;
        if b0.in_channels() != 1 {
            return mismatch("backbone 1 input channels", 1, b0.in_channels());
        }
        if b1.in_channels() != b0.out_channels() {
            return mismatch("backbone 2 input channels", b0.out_channels(), b1.in_channels());
        }
        if self.single_head.in_channels() != b1.out_channels() || self.single_head.out_channels() != 1 {
            return mismatch("single-frame head input channels", b1.out_channels(), self.single_head.in_channels());
        }
        if o0.reduce().in_channels() != b0.out_channels() {
            return mismatch("OFF 1 input channels", b0.out_channels(), o0.reduce().in_channels());
        }
        if o0.prev_channels() != 0 {
            return mismatch("OFF 1 previous-level channels", 0, o0.prev_channels());
        }
        if o1.reduce().in_channels() != b1.out_channels() {
            return mismatch("OFF 2 input channels", b1.out_channels(), o1.reduce().in_channels());
        }
        if o1.prev_channels() != o0.out_channels() {
            return mismatch("OFF 2 previous-level channels", o0.out_channels(), o1.prev_channels());
        }
        if self.gru.input_channels() != o1.out_channels() {
            return mismatch("ConvGRU input channels", o1.out_channels(), self.gru.input_channels());
        }
        if self.gru.hidden_channels() != 1 {
            return mismatch("ConvGRU hidden channels", 1, self.gru.hidden_channels());
        }
        if self.head.input_len() != (frames - 1) * CELLS {
            return mismatch("binary head inputs", (frames - 1) * CELLS, self.head.input_len());
        }
        Ok(())
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        self.backbone[0].save(&kernel_file(dir, "backbone_1"))?;
        self.backbone[1].save(&kernel_file(dir, "backbone_2"))?;
        self.single_head.save(&kernel_file(dir, "single_head"))?;
        for (i, off) in self.off.iter().enumerate() {
            off.reduce().save(&kernel_file(dir, &format!("off_{}_reduce", i + 1)))?;
            off.fuse().save(&kernel_file(dir, &format!("off_{}_fuse", i + 1)))?;
        }
        self.gru.save_dir(dir)?;
        self.head.save_dir(dir)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path, frames: usize) -> Result<Self, CliError> {
        let load = |name: &str| ConvKernel::load(&kernel_file(dir, name));
        let off = |i: usize| -> Result<OffBlockWeights, CliError> {
            Ok(OffBlockWeights::new(
                load(&format!("off_{i}_reduce"))?,
                load(&format!("off_{i}_fuse"))?,
            )?)
        };
        let w = DemoWeights {
            backbone: [load("backbone_1")?, load("backbone_2")?],
            single_head: load("single_head")?,
            off: [off(1)?, off(2)?],
            gru: ConvGruCell::load_dir(dir)?,
            head: BinaryHead::load_dir(dir)?,
        };
        w.check(frames)?;
        Ok(w)
    }
}

/// Per-frame depth estimates of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub single: Vec<Grid>,
    pub multi: Vec<Grid>,
    pub fused: Vec<Grid>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Runs `frames` (32×32×1 each) through the network.
pub fn run_pipeline(frames: &[Tensor], w: &DemoWeights, alpha: f64) -> Result<PipelineOutput, CliError> {
    if frames.len() < 2 {
        return Err(CliError::Usage(format!("need at least 2 frames, got {}", frames.len())));
    }
    let levels: Vec<(Tensor, Tensor)> = frames
        .iter()
        .map(|x| {
            let f1 = conv2d(x, &w.backbone[0])?.map(f64::tanh);
            let f2 = conv2d(&f1, &w.backbone[1])?.map(f64::tanh);
            Ok((f1, f2))
        })
        .collect::<Result<_, tempdepth::Error>>()?;

    let mut xs = Vec::with_capacity(frames.len() - 1);
    let mut single = Vec::with_capacity(frames.len() - 1);
    for pair in levels.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let first = off_block(&a.0, &b.0, None, &w.off[0])?;
        xs.push(off_block(&a.1, &b.1, Some(&first), &w.off[1])?);
        single.push(conv2d(&a.1, &w.single_head)?.map(sigmoid));
    }
    let h0 = HiddenState::zeros(DEPTH_SIDE, DEPTH_SIDE, 1);
    let states = convgru_run(&w.gru, &h0, &xs)?;

    let mut out = PipelineOutput {
        single: Vec::new(),
        multi: Vec::new(),
        fused: Vec::new(),
    };
    for (s, h) in single.iter().zip(&states) {
        out.fused.push(fuse_depth(s, &h.h, alpha)?.channel(0));
        out.single.push(s.channel(0));
        out.multi.push(h.h.channel(0));
    }
    Ok(out)
}

/// Vertical offset of frame `t`: a triangle wave so long sequences stay in frame.
fn frame_shift(t: usize, motion: f64) -> f64 {
    let phase = t % 8;
    motion * if phase <= 4 { phase as f64 } else { (8 - phase) as f64 }
}

/// A face sample: surface, per-frame vertex sets and rendered frames.
#[derive(Debug, Clone)]
pub struct Sample {
    pub living: bool,
    pub vertices: Vec<VertexSet>,
    pub frames: Vec<Tensor>,
    pub labels: Vec<Grid>,
    pub masks: Vec<FaceMask>,
}

fn albedo(dx: f64, dy: f64) -> f64 {
    0.5 + 0.25 * (0.15 * dx).sin() * (0.11 * dy).cos()
}

/// Shaded, textured face disk at cell centres; `shift` gives each face
/// point's vertical image offset from its rest position.
fn render(params: &FaceSurfaceParams, bounds: &ImageBounds, shift: impl Fn(f64, f64) -> f64) -> Tensor {
    let cell = bounds.width / DEPTH_SIDE as f64;
    Tensor::from_fn(DEPTH_SIDE, DEPTH_SIDE, 1, |i, j, _| {
        let (px, py) = ((j as f64 + 0.5) * cell, (i as f64 + 0.5) * cell);
        // one fixed-point step for the rest position under depth-dependent motion
        let guess = py - shift(px, py);
        let qy = py - shift(px, guess);
        let (dx, dy) = (px - params.center.0, qy - params.center.1);
        let rho2 = (dx * dx + dy * dy) / (params.radius * params.radius);
        if rho2 >= 1.0 {
            0.1
        } else {
            albedo(dx, dy) * (0.4 + 0.6 * (1.0 - rho2).sqrt())
        }
    })
}

/// Builds the living dome or the planar print with the same motion.
pub fn make_sample(living: bool, cfg: &RunConfig) -> Result<Sample, CliError> {
    let bounds = ImageBounds::default();
    let dome = FaceSurfaceParams {
        jitter: Some((cfg.seed, 0.5)),
        ..FaceSurfaceParams::default()
    };
    let params = FaceSurfaceParams {
        amplitude: if living { dome.amplitude } else { 0.0 },
        ..dome
    };
    let surface = synthesize_face_surface(&params)?;
    let mut sample = Sample {
        living,
        vertices: Vec::new(),
        frames: Vec::new(),
        labels: Vec::new(),
        masks: Vec::new(),
    };
    // depth of a rest-position point on the dome, for motion parallax
    let depth_at = |x: f64, y: f64| {
        let rho2 = ((x - params.center.0).powi(2) + (y - params.center.1).powi(2)) / params.radius.powi(2);
        params.base_depth - params.amplitude * (1.0 - rho2.min(1.0)).sqrt()
    };
    for t in 0..cfg.frames {
        let s = frame_shift(t, cfg.demo.motion);
        // nearer points move further on the image, a print moves rigidly
        let shift = |x: f64, y: f64| s * params.base_depth / depth_at(x, y);
        let moved = VertexSet::new(
            surface
                .vertices
                .iter()
                .map(|v| [v[0], v[1] + s * params.base_depth / v[2], v[2]])
                .collect(),
        );
        let mask = hull_mask(&moved, &bounds)?;
        let label = if living {
            generate_living_depth(&moved, &bounds)?.into_grid()
        } else {
            spoof_depth().into_grid()
        };
        sample.frames.push(if living {
            render(&dome, &bounds, shift)
        } else {
            // a photo of the resting face, displaced as a whole
            render(&dome, &bounds, |_, _| s)
        });
        sample.labels.push(label);
        sample.masks.push(mask);
        sample.vertices.push(moved);
    }
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub losses: LossReport,
    /// Softmax probability of the living class.
    pub living_prob: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub living_score: f64,
    pub spoof_score: f64,
    pub gap: f64,
    /// `(1 - beta) · mean masked living depth`.
    pub expected_gap: f64,
    pub mean_masked_living_depth: f64,
    /// The gap must reach `0.5 · (1 - beta)`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub frames: usize,
    pub living: SampleReport,
    pub spoof: SampleReport,
    pub score_gap: f64,
    pub oracle: OracleReport,
}

fn score_sample(sample: &Sample, fused: &[Grid], head: &BinaryHead, beta: f64) -> Result<SampleReport, CliError> {
    let n = fused.len();
    let (losses, out) = LossReport::evaluate(fused, &sample.labels[..n], head, sample.living, beta)?;
    let score = living_score(out.living_prob, fused, &sample.masks[..n], beta)?;
    Ok(SampleReport {
        losses,
        living_prob: out.living_prob,
        score,
    })
}

/// Mean over frames of the label's mean over its face mask.
fn mean_masked_depth(labels: &[Grid], masks: &[FaceMask]) -> f64 {
    let per_frame: Vec<f64> = labels
        .iter()
        .zip(masks)
        .map(|(l, m)| {
            let inside: Vec<f64> = l
                .as_slice()
                .iter()
                .zip(m.values().as_slice())
                .filter(|(_, &w)| w == 1.0)
                .map(|(&v, _)| v)
                .collect();
            inside.iter().sum::<f64>() / inside.len() as f64
        })
        .collect();
    per_frame.iter().sum::<f64>() / per_frame.len() as f64
}

/// Scores with the labels themselves as fused maps and a neutral head.
fn oracle(living: &Sample, spoof: &Sample, cfg: &RunConfig, head: &BinaryHead) -> Result<OracleReport, CliError> {
    let n = cfg.frames - 1;
    let neutral = BinaryHead::zeros(head.input_len(), head.hidden_len());
    let living_score = score_sample(living, &living.labels[..n], &neutral, cfg.beta)?.score;
    let spoof_score = score_sample(spoof, &spoof.labels[..n], &neutral, cfg.beta)?.score;
    let mean = mean_masked_depth(&living.labels[..n], &living.masks[..n]);
    Ok(OracleReport {
        living_score,
        spoof_score,
        gap: living_score - spoof_score,
        expected_gap: (1.0 - cfg.beta) * mean,
        mean_masked_living_depth: mean,
        margin: 0.5 * (1.0 - cfg.beta),
    })
}

pub fn run_demo(cfg: &RunConfig) -> Result<DemoReport, CliError> {
    let weights = match &cfg.demo.weights_dir {
        Some(dir) => DemoWeights::load_dir(dir, cfg.frames)?,
        None => DemoWeights::random(&cfg.demo, cfg.frames, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?,
    };
    if let Some(dir) = &cfg.demo.export_weights {
        weights.save_dir(dir)?;
    }
    let living = make_sample(true, cfg)?;
    let spoof = make_sample(false, cfg)?;
    let living_out = run_pipeline(&living.frames, &weights, cfg.alpha)?;
    let spoof_out = run_pipeline(&spoof.frames, &weights, cfg.alpha)?;
    let living_report = score_sample(&living, &living_out.fused, &weights.head, cfg.beta)?;
    let spoof_report = score_sample(&spoof, &spoof_out.fused, &weights.head, cfg.beta)?;
    let oracle = oracle(&living, &spoof, cfg, &weights.head)?;
    if oracle.gap < oracle.margin {
        return Err(CliError::Data(format!(
            "oracle score gap {} is below the margin {}",
            oracle.gap, oracle.margin
        )));
    }
    Ok(DemoReport {
        seed: cfg.seed,
        alpha: cfg.alpha,
        beta: cfg.beta,
        frames: cfg.frames,
        score_gap: living_report.score - spoof_report.score,
        living: living_report,
        spoof: spoof_report,
        oracle,
    })
}

pub fn cmd_demo(cfg: &RunConfig) -> Result<DemoReport, CliError> {
    let report = run_demo(cfg)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    write_output(&cfg.out, JSON_NAME, &(json + "\n"))?;
    Ok(report)
}
