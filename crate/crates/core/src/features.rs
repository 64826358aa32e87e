//! Optical-flow-guided features.
//!
//! Brightness constancy says the feature gradient `[Fx, Fy, Ft]` is
//! orthogonal to `[vx, vy, 1]`. The OFF block feeds the spatial and temporal
//! gradients of reduced features, together with the reduced features
//! themselves and the previous level's block output, into a `3×3` fusion
//! convolution.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{conv2d, ConvKernel, Padding, Tensor};

/// Response of either Sobel stencil to a unit-slope ramp.
///
/// The stencils sum central differences over three rows with weights
/// `1, 2, 1`, so `gx = SOBEL_GAIN · ∂x` on smooth input. Velocities passed to
/// [`off_vector_residual`] must be divided by this gain.
pub const SOBEL_GAIN: f64 = 8.0;

const SOBEL_SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];

/// Per-channel Sobel responses `(gx, gy)` with replicate padding.
///
/// `x` runs along columns, `y` down the rows.
pub fn spatial_gradient(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let (h, w, c) = x.shape();
    if h < 3 || w < 3 {
        return Err(Error::shape("at least 3x3", format!("{h}x{w}")));
    }
    let mut gx = Tensor::zeros(h, w, c);
    let mut gy = Tensor::zeros(h, w, c);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let (up, down) = (clamp(i as isize - 1, h), clamp(i as isize + 1, h));
                let (left, right) = (clamp(j as isize - 1, w), clamp(j as isize + 1, w));
                let rows = [up, i, down];
                let cols = [left, j, right];
                let (mut sx, mut sy) = (0.0, 0.0);
                for k in 0..3 {
                    sx += SOBEL_SMOOTH[k] * (x.get(rows[k], right, ch) - x.get(rows[k], left, ch));
                    sy += SOBEL_SMOOTH[k] * (x.get(down, cols[k], ch) - x.get(up, cols[k], ch));
                }
                gx.set(i, j, ch, sx);
                gy.set(i, j, ch, sy);
            }
        }
    }
    Ok((gx, gy))
}

/// `x_t1 - x_t`.
pub fn temporal_gradient(x_t: &Tensor, x_t1: &Tensor) -> Result<Tensor> {
    x_t1.zip_map(x_t, |b, a| b - a)
}

/// Brightness-constancy residual `gx·vx + gy·vy + gt`, with gradients taken on `x_t`.
///
/// For `x_t1` equal to `x_t` shifted by `(px, py)` pixels the residual
/// vanishes (up to discretization) at `v = (px, py) / SOBEL_GAIN`.
pub fn off_vector_residual(x_t: &Tensor, x_t1: &Tensor, v: (f64, f64)) -> Result<Tensor> {
    x_t.check_same_shape(x_t1)?;
    let (gx, gy) = spatial_gradient(x_t)?;
    let gt = temporal_gradient(x_t, x_t1)?;
    let spatial = gx.zip_map(&gy, |a, b| a * v.0 + b * v.1)?;
    spatial.zip_map(&gt, |s, t| s + t)
}

/// Weights of one OFF block.
#[derive(Debug, Clone, PartialEq)]
pub struct OffBlockWeights {
    reduce: ConvKernel,
    fuse: ConvKernel,
}

/// Channels of the five concatenated branches per reduced channel:
/// features, two spatial gradients at each of two times, one temporal gradient.
const BRANCHES_PER_CHANNEL: usize = 6;

impl OffBlockWeights {
    /// `reduce` must be `1×1`, `fuse` `3×3` with
    /// `6·reduce.cout + prev_channels` inputs.
    pub fn new(reduce: ConvKernel, fuse: ConvKernel) -> Result<Self> {
        let (rh, rw, _, _) = reduce.shape();
        if (rh, rw) != (1, 1) {
            return Err(Error::shape("1x1 reduction kernel", format!("{rh}x{rw}")));
        }
        let (fh, fw, fin, _) = fuse.shape();
        if (fh, fw) != (3, 3) {
            return Err(Error::shape("3x3 fusion kernel", format!("{fh}x{fw}")));
        }
        let own = BRANCHES_PER_CHANNEL * reduce.out_channels();
        if fin < own {
            return Err(Error::shape(
                format!("fusion input >= {own} channels"),
                format!("{fin}"),
            ));
        }
        Ok(OffBlockWeights { reduce, fuse })
    }

    /// Seeded weights: `in_channels → reduced` (1×1), then `→ out_channels` (3×3).
    pub fn random(
        in_channels: usize,
        reduced: usize,
        prev_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let reduce = ConvKernel::random(1, 1, in_channels, reduced, Padding::Zero, rng)?;
        let fuse = ConvKernel::random(
            3,
            3,
            BRANCHES_PER_CHANNEL * reduced + prev_channels,
            out_channels,
            Padding::Zero,
            rng,
        )?;
        Self::new(reduce, fuse)
    }

    pub fn reduce(&self) -> &ConvKernel {
        &self.reduce
    }

    pub fn fuse(&self) -> &ConvKernel {
        &self.fuse
    }

    /// Channels the previous-level branch must supply; zero for a first level.
    pub fn prev_channels(&self) -> usize {
        self.fuse.in_channels() - BRANCHES_PER_CHANNEL * self.reduce.out_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.fuse.out_channels()
    }
}

/// One OFF block over the features of frames `t` and `t + Δt`.
///
/// Branch order in the concatenation: reduced features, spatial gradients at
/// `t` (gx then gy), spatial gradients at `t + Δt`, temporal gradient, then
/// the previous level's output when present.
pub fn off_block(
    f_t: &Tensor,
    f_t1: &Tensor,
    prev: Option<&Tensor>,
    w: &OffBlockWeights,
) -> Result<Tensor> {
    f_t.check_same_shape(f_t1)?;
    match (prev, w.prev_channels()) {
        (None, 0) => {}
        (Some(p), n) if p.channels() == n => {
            if (p.height(), p.width()) != (f_t.height(), f_t.width()) {
                return Err(Error::shape(
                    format!("{}x{} previous level", f_t.height(), f_t.width()),
                    format!("{}x{}", p.height(), p.width()),
                ));
            }
        }
        (p, n) => {
            return Err(Error::shape(
                format!("previous level with {n} channels"),
                p.map_or("none".to_string(), |p| format!("{} channels", p.channels())),
            ))
        }
    }
    let r_t = conv2d(f_t, &w.reduce)?;
    let r_t1 = conv2d(f_t1, &w.reduce)?;
    let (sx_t, sy_t) = spatial_gradient(&r_t)?;
    let (sx_t1, sy_t1) = spatial_gradient(&r_t1)?;
    let temporal = temporal_gradient(&r_t, &r_t1)?;
    let mut parts = vec![&r_t, &sx_t, &sy_t, &sx_t1, &sy_t1, &temporal];
    if let Some(p) = prev {
        parts.push(p);
    }
    conv2d(&Tensor::concat_channels(&parts)?, &w.fuse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn constant_has_zero_gradient() {
        let x = Tensor::filled(5, 6, 2, 3.7);
        let (gx, gy) = spatial_gradient(&x).unwrap();
        assert!(gx.as_slice().iter().chain(gy.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_gives_sobel_gain() {
        let x = Tensor::from_fn(6, 7, 1, |_, j, _| j as f64);
        let (gx, gy) = spatial_gradient(&x).unwrap();
        for i in 1..5 {
            for j in 1..6 {
                assert_eq!(gx.get(i, j, 0), SOBEL_GAIN);
                assert_eq!(gy.get(i, j, 0), 0.0);
            }
        }
    }

    #[test]
    fn transpose_swaps_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(5, 5, 1, &mut rng);
        let xt = Tensor::from_fn(5, 5, 1, |i, j, _| x.get(j, i, 0));
        let (gx, gy) = spatial_gradient(&x).unwrap();
        let (tgx, tgy) = spatial_gradient(&xt).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((gx.get(i, j, 0) - tgy.get(j, i, 0)).abs() < 1e-12);
                assert!((gy.get(i, j, 0) - tgx.get(j, i, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_needs_three_by_three() {
        assert!(spatial_gradient(&Tensor::zeros(2, 5, 1)).is_err());
    }

    #[test]
    fn temporal_gradient_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_tensor(4, 4, 2, &mut rng);
        let b = random_tensor(4, 4, 2, &mut rng);
        assert!(temporal_gradient(&a, &a).unwrap().as_slice().iter().all(|&v| v == 0.0));
        let plus = a.map(|v| v + 1.0);
        assert!(temporal_gradient(&a, &plus)
            .unwrap()
            .as_slice()
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-15));
        let ab = temporal_gradient(&a, &b).unwrap();
        let ba = temporal_gradient(&b, &a).unwrap();
        assert_eq!(ab, ba.scale(-1.0));
        assert!(temporal_gradient(&a, &Tensor::zeros(4, 4, 1)).is_err());
    }

    #[test]
    fn residual_static_and_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_tensor(6, 6, 1, &mut rng);
        let b = random_tensor(6, 6, 1, &mut rng);
        let r = off_vector_residual(&a, &a, (0.0, 0.0)).unwrap();
        assert!(r.as_slice().iter().all(|&v| v == 0.0));
        let v = (0.3, -0.2);
        let r1 = off_vector_residual(&a, &b, v).unwrap();
        let r2 = off_vector_residual(&a.scale(2.0), &b.scale(2.0), v).unwrap();
        for (x, y) in r1.as_slice().iter().zip(r2.as_slice()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    fn weights(rng: &mut ChaCha8Rng, prev: usize) -> OffBlockWeights {
        OffBlockWeights::random(3, 4, prev, 5, rng).unwrap()
    }

    #[test]
    fn off_block_shapes_and_branch_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_tensor(6, 7, 3, &mut rng);
        let b = random_tensor(6, 7, 3, &mut rng);
        let first = weights(&mut rng, 0);
        let out = off_block(&a, &b, None, &first).unwrap();
        assert_eq!(out.shape(), (6, 7, 5));

        let second = weights(&mut rng, 5);
        assert_eq!(second.prev_channels(), 5);
        assert_eq!(off_block(&a, &b, Some(&out), &second).unwrap().shape(), (6, 7, 5));
        assert!(off_block(&a, &b, None, &second).is_err());
        assert!(off_block(&a, &b, Some(&out), &first).is_err());
        assert!(off_block(&a, &Tensor::zeros(6, 7, 2), None, &first).is_err());
    }

    #[test]
    fn off_block_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_tensor(5, 5, 3, &mut rng);
        let b = random_tensor(5, 5, 3, &mut rng);
        let w = OffBlockWeights::new(
            ConvKernel::zeros(1, 1, 3, 4, Padding::Zero).unwrap(),
            ConvKernel::zeros(3, 3, 24, 6, Padding::Zero).unwrap(),
        )
        .unwrap();
        let out = off_block(&a, &b, None, &w).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn off_block_weight_validation() {
        let r = ConvKernel::zeros(3, 3, 3, 4, Padding::Zero).unwrap();
        let f = ConvKernel::zeros(3, 3, 24, 6, Padding::Zero).unwrap();
        assert!(OffBlockWeights::new(r, f.clone()).is_err());
        let r = ConvKernel::zeros(1, 1, 3, 5, Padding::Zero).unwrap();
        assert!(OffBlockWeights::new(r, f).is_err());
    }

    #[test]
    fn off_block_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_tensor(8, 8, 3, &mut rng);
        let b = random_tensor(8, 8, 3, &mut rng);
        let w = weights(&mut rng, 0);
        let x = off_block(&a, &b, None, &w).unwrap();
        let y = off_block(&a, &b, None, &w).unwrap();
        assert_eq!(x.as_slice(), y.as_slice());
    }
}
