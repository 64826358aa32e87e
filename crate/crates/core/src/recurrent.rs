//! Convolutional GRU over OFF features and single/multi-frame depth fusion.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{conv2d, ConvKernel, Padding, Tensor};

/// Gate and candidate kernels, each reading `[hidden, input]` stacked on channels.
///
/// No bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGruCell {
    k_r: ConvKernel,
    k_u: ConvKernel,
    k_h: ConvKernel,
    hidden: usize,
    input: usize,
}

impl ConvGruCell {
    pub fn new(k_r: ConvKernel, k_u: ConvKernel, k_h: ConvKernel) -> Result<Self> {
        let hidden = k_r.out_channels();
        let cin = k_r.in_channels();
        if cin <= hidden {
            return Err(Error::shape(
                format!("more than {hidden} input channels"),
                format!("{cin}"),
            ));
        }
        for (name, k) in [("k_u", &k_u), ("k_h", &k_h)] {
            if k.in_channels() != cin || k.out_channels() != hidden {
                return Err(Error::shape(
                    format!("{name} {cin}->{hidden}"),
                    format!("{}->{}", k.in_channels(), k.out_channels()),
                ));
            }
        }
        Ok(ConvGruCell {
            k_r,
            k_u,
            k_h,
            hidden,
            input: cin - hidden,
        })
    }

    /// All-zero `3×3` kernels.
    pub fn zeros(hidden: usize, input: usize) -> Result<Self> {
        let k = ConvKernel::zeros(3, 3, hidden + input, hidden, Padding::Zero)?;
        Self::new(k.clone(), k.clone(), k)
    }

    pub fn random(hidden: usize, input: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut kernel = || ConvKernel::random(3, 3, hidden + input, hidden, Padding::Zero, rng);
        Self::new(kernel()?, kernel()?, kernel()?)
    }

    pub fn hidden_channels(&self) -> usize {
        self.hidden
    }

    pub fn input_channels(&self) -> usize {
        self.input
    }

    pub fn kernels(&self) -> [&ConvKernel; 3] {
        [&self.k_r, &self.k_u, &self.k_h]
    }

    /// Writes `gru_r`, `gru_u` and `gru_h` kernel files into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        for (name, k) in ["gru_r", "gru_u", "gru_h"].iter().zip(self.kernels()) {
            k.save(&dir.join(format!("{name}.tensor")))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let load = |name: &str| ConvKernel::load(&dir.join(format!("{name}.tensor")));
        Self::new(load("gru_r")?, load("gru_u")?, load("gru_h")?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Tensor,
}

impl HiddenState {
    pub fn zeros(h: usize, w: usize, channels: usize) -> Self {
        HiddenState {
            h: Tensor::zeros(h, w, channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub reset: Tensor,
    pub update: Tensor,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One recurrence step.
///
/// ```text
/// R = σ(K_r ⊛ [H, X])      U = σ(K_u ⊛ [H, X])
/// Ĥ = tanh(K_h ⊛ [R∗H, X])  H' = (1 − U)∗H + U∗Ĥ
/// ```
pub fn convgru_step(cell: &ConvGruCell, h_prev: &HiddenState, x: &Tensor) -> Result<(HiddenState, Gates)> {
    let h = &h_prev.h;
    if (h.height(), h.width()) != (x.height(), x.width()) {
        return Err(Error::shape(
            format!("{}x{} input", h.height(), h.width()),
            format!("{}x{}", x.height(), x.width()),
        ));
    }
    if h.channels() != cell.hidden || x.channels() != cell.input {
        return Err(Error::shape(
            format!("hidden {} / input {} channels", cell.hidden, cell.input),
            format!("hidden {} / input {}", h.channels(), x.channels()),
        ));
    }
    let stacked = Tensor::concat_channels(&[h, x])?;
    let reset = conv2d(&stacked, &cell.k_r)?.map(sigmoid);
    let update = conv2d(&stacked, &cell.k_u)?.map(sigmoid);
    let gated = reset.zip_map(h, |r, hv| r * hv)?;
    let candidate = conv2d(&Tensor::concat_channels(&[&gated, x])?, &cell.k_h)?.map(f64::tanh);
    let blended = update.zip_map(h, |u, hv| (1.0 - u) * hv)?;
    let h_new = update
        .zip_map(&candidate, |u, c| u * c)?
        .zip_map(&blended, |a, b| a + b)?;
    Ok((HiddenState { h: h_new }, Gates { reset, update }))
}

/// Folds [`convgru_step`] over `xs`, returning every state after `h0`.
pub fn convgru_run(cell: &ConvGruCell, h0: &HiddenState, xs: &[Tensor]) -> Result<Vec<HiddenState>> {
    if xs.is_empty() {
        return Err(Error::domain("recurrence needs at least one input (two frames)"));
    }
    let mut states = Vec::with_capacity(xs.len());
    let mut h = h0.clone();
    for x in xs {
        h = convgru_step(cell, &h, x)?.0;
        states.push(h.clone());
    }
    Ok(states)
}

/// `alpha · d_single + (1 − alpha) · d_multi`.
pub fn fuse_depth(d_single: &Tensor, d_multi: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    d_single.zip_map(d_multi, |s, m| alpha * s + (1.0 - alpha) * m)
}
