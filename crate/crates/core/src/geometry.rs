//! Two-camera motion model for live, print, replay and rotated-carrier scenes.
//!
//! Three facial points are tracked: the near point `l`, a middle point `m`
//! lying `d1` behind it, and a far point `r` lying `d2` behind it. All motion
//! is vertical. In a live scene one camera films the face directly. In an
//! attack scene a recording camera (`fa`, `za`) produced the content that a
//! carrier (screen or printed photo) shows to the realistic camera (`fb`, `zb`).
//!
//! From the three observed flows the relative depth `d1/d2` can be recovered
//! exactly for a live face. Carrier shake or rotation distorts that estimate,
//! and a print collapses it to a plane.
//!
//! All lengths share one arbitrary unit; only ratios matter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `du_l/du_p - 1` below which an observation counts as flat.
pub const FLAT_EPSILON: f64 = 1e-9;

/// Perspective projection of a point at height `x` and distance `z`.
pub fn project(f: f64, z: f64, x: f64) -> Result<f64> {
    if z.is_nan() || z <= 0.0 {
        return Err(Error::domain(format!("projection needs z > 0, got {z}")));
    }
    Ok(f * x / z)
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be > 0, got {v}")))
    }
}

fn check_offsets(d1: f64, d2: f64) -> Result<()> {
    check_positive("d2", d2)?;
    check_finite("d1", d1)?;
    if d1 < 0.0 || d1 > d2 {
        return Err(Error::domain(format!(
            "depth offsets need 0 <= d1 <= d2, got d1 = {d1}, d2 = {d2}"
        )));
    }
    Ok(())
}

/// A face filmed directly by one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealScene {
    pub f: f64,
    pub z: f64,
    pub d1: f64,
    pub d2: f64,
    pub dx: f64,
}

impl RealScene {
    pub fn validate(&self) -> Result<()> {
        check_positive("f", self.f)?;
        check_positive("z", self.z)?;
        check_offsets(self.d1, self.d2)?;
        check_finite("dx", self.dx)
    }

    /// The living relative depth, always in `[0, 1]` for a valid scene.
    pub fn true_ratio(&self) -> f64 {
        self.d1 / self.d2
    }
}

impl Default for RealScene {
    fn default() -> Self {
        RealScene {
            f: 1.0,
            z: 10.0,
            d1: 1.0,
            d2: 2.0,
            dx: 0.5,
        }
    }
}

/// A recorded face shown on a carrier to the realistic camera.
///
/// `dx` is the facial motion inside the recorded content (zero for a print),
/// `dv` the vertical carrier shake over one frame step and `theta` the
/// carrier rotation. `ul1`, `um1`, `ur1` are the starting coordinates of the
/// three points on the recording plane; only the rotated case reads them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackScene {
    pub fa: f64,
    pub fb: f64,
    pub za: f64,
    pub zb: f64,
    pub d1: f64,
    pub d2: f64,
    pub dx: f64,
    pub dv: f64,
    pub theta: f64,
    pub ul1: f64,
    pub um1: f64,
    pub ur1: f64,
}

impl AttackScene {
    pub fn validate(&self) -> Result<()> {
        check_positive("fa", self.fa)?;
        check_positive("fb", self.fb)?;
        check_positive("za", self.za)?;
        check_positive("zb", self.zb)?;
        check_offsets(self.d1, self.d2)?;
        check_finite("dx", self.dx)?;
        check_finite("dv", self.dv)?;
        check_finite("theta", self.theta)?;
        if self.theta.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::domain(format!(
                "theta must lie in (-pi/2, pi/2), got {}",
                self.theta
            )));
        }
        check_finite("ul1", self.ul1)?;
        check_finite("um1", self.um1)?;
        check_finite("ur1", self.ur1)
    }

    pub fn true_ratio(&self) -> f64 {
        self.d1 / self.d2
    }

    /// Flows of the three points on the recording plane (face motion only).
    pub fn recording_flow(&self) -> FlowObservation {
        let rec = |d: f64| self.fa * self.dx / (self.za + d);
        FlowObservation {
            du_l: rec(0.0),
            du_m: rec(self.d1),
            du_r: rec(self.d2),
        }
    }
}

impl Default for AttackScene {
    fn default() -> Self {
        AttackScene {
            fa: 1.0,
            fb: 1.0,
            za: 10.0,
            zb: 10.0,
            d1: 1.0,
            d2: 2.0,
            dx: 0.5,
            dv: 0.0,
            theta: 0.0,
            ul1: 1.0,
            um1: 1.2,
            ur1: 0.8,
        }
    }
}

/// Vertical image-plane displacements of the near, middle and far points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowObservation {
    pub du_l: f64,
    pub du_m: f64,
    pub du_r: f64,
}

/// Outcome of inverting three flows into a relative depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ratio", rename_all = "snake_case")]
pub enum RelativeDepth {
    /// Estimated `d1'/d2'`.
    Ratio(f64),
    /// All three flows coincide: both estimated depths are zero, the scene is a plane.
    Flat,
}

impl RelativeDepth {
    pub fn ratio(&self) -> Option<f64> {
        match *self {
            RelativeDepth::Ratio(r) => Some(r),
            RelativeDepth::Flat => None,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, RelativeDepth::Flat)
    }
}

pub fn flow_real(cfg: &RealScene) -> Result<FlowObservation> {
    cfg.validate()?;
    let flow = |d: f64| cfg.f * cfg.dx / (cfg.z + d);
    Ok(FlowObservation {
        du_l: flow(0.0),
        du_m: flow(cfg.d1),
        du_r: flow(cfg.d2),
    })
}

/// Relative depth from three flows: `(du_l/du_m - 1) / (du_l/du_r - 1)`.
pub fn estimate_relative_depth(obs: &FlowObservation) -> Result<RelativeDepth> {
    let FlowObservation { du_l, du_m, du_r } = *obs;
    if !(du_l.is_finite() && du_m.is_finite() && du_r.is_finite()) {
        return Err(Error::InconsistentObservation(format!(
            "non-finite flow {obs:?}"
        )));
    }
    if du_m == 0.0 || du_r == 0.0 {
        return Err(Error::InconsistentObservation(format!(
            "zero divisor flow: du_m = {du_m}, du_r = {du_r}"
        )));
    }
    let near_mid = du_l / du_m - 1.0;
    let near_far = du_l / du_r - 1.0;
    let flat_far = near_far.abs() <= FLAT_EPSILON;
    match (near_mid.abs() <= FLAT_EPSILON, flat_far) {
        (true, true) => Ok(RelativeDepth::Flat),
        (false, true) => Err(Error::InconsistentObservation(format!(
            "du_l/du_r = 1 while du_l/du_m - 1 = {near_mid}"
        ))),
        _ => Ok(RelativeDepth::Ratio(near_mid / near_far)),
    }
}

fn require_parallel(cfg: &AttackScene) -> Result<()> {
    if cfg.theta != 0.0 {
        return Err(Error::domain(format!(
            "translating-carrier model needs theta = 0, got {}",
            cfg.theta
        )));
    }
    Ok(())
}

/// Flows seen by the realistic camera when a parallel carrier shakes by `dv`.
///
/// A print is the case `dx = 0`.
pub fn flow_replay(cfg: &AttackScene) -> Result<FlowObservation> {
    cfg.validate()?;
    require_parallel(cfg)?;
    let flow = |d: f64| {
        let za = cfg.za + d;
        (cfg.fa * cfg.fb * cfg.dx + za * cfg.fb * cfg.dv) / (za * cfg.zb)
    };
    Ok(FlowObservation {
        du_l: flow(0.0),
        du_m: flow(cfg.d1),
        du_r: flow(cfg.d2),
    })
}

/// Multiplier the carrier shake applies to the true relative depth.
pub fn replay_distortion_factor(cfg: &AttackScene) -> Result<f64> {
    cfg.validate()?;
    require_parallel(cfg)?;
    let num = cfg.fa * cfg.dx + (cfg.za + cfg.d2) * cfg.dv;
    let den = cfg.fa * cfg.dx + (cfg.za + cfg.d1) * cfg.dv;
    if den == 0.0 {
        return Err(Error::SingularConfiguration(
            "fa*dx + (za + d1)*dv = 0".into(),
        ));
    }
    Ok(num / den)
}

fn rotation_denominator(u: f64, zb: f64, theta: f64) -> Result<f64> {
    let den = zb - u * theta.sin();
    if den > 0.0 {
        Ok(den)
    } else {
        Err(Error::DegenerateRotation {
            coordinate: u,
            denominator: den,
        })
    }
}

/// Maps coordinate `u` on a carrier rotated by `theta` back onto the vertical
/// plane at distance `zb`.
pub fn map_rotated_coordinate(u: f64, zb: f64, theta: f64) -> Result<f64> {
    let den = rotation_denominator(u, zb, theta)?;
    Ok(zb * u * theta.cos() / den)
}

/// Per-point end coordinates `(u_p1, u_p2)` on the recording plane.
fn endpoints(cfg: &AttackScene) -> [(f64, f64); 3] {
    let rec = cfg.recording_flow();
    [
        (cfg.ul1, cfg.ul1 + rec.du_l),
        (cfg.um1, cfg.um1 + rec.du_m),
        (cfg.ur1, cfg.ur1 + rec.du_r),
    ]
}

/// Flows seen by the realistic camera when the carrier is rotated by `theta`.
///
/// The carrier does not shake here; `dv` is ignored.
pub fn flow_rotated(cfg: &AttackScene) -> Result<FlowObservation> {
    cfg.validate()?;
    let (zb, theta) = (cfg.zb, cfg.theta);
    let gain = zb * zb * theta.cos();
    let mut mapped = [0.0; 3];
    for (out, (u1, u2)) in mapped.iter_mut().zip(endpoints(cfg)) {
        let den1 = rotation_denominator(u1, zb, theta)?;
        let den2 = rotation_denominator(u2, zb, theta)?;
        let du_theta = (u2 - u1) * gain / (den1 * den2);
        *out = cfg.fb * du_theta / zb;
    }
    Ok(FlowObservation {
        du_l: mapped[0],
        du_m: mapped[1],
        du_r: mapped[2],
    })
}

/// `(beta1, beta2)`: how rotation rescales the middle and far flow ratios.
pub fn rotation_beta_factors(cfg: &AttackScene) -> Result<(f64, f64)> {
    cfg.validate()?;
    let (zb, theta) = (cfg.zb, cfg.theta);
    let [l, m, r] = endpoints(cfg);
    let pair = |(u1, u2): (f64, f64)| -> Result<f64> {
        Ok(rotation_denominator(u1, zb, theta)? * rotation_denominator(u2, zb, theta)?)
    };
    let near = pair(l)?;
    Ok((pair(m)? / near, pair(r)? / near))
}

/// Closed-form rotated estimate `((d1/za + 1)b1 - 1) / ((d2/za + 1)b2 - 1)`.
pub fn rotation_closed_form_ratio(cfg: &AttackScene) -> Result<f64> {
    let (b1, b2) = rotation_beta_factors(cfg)?;
    let den = (cfg.d2 / cfg.za + 1.0) * b2 - 1.0;
    if den == 0.0 {
        return Err(Error::SingularConfiguration(
            "(d2/za + 1)*beta2 = 1".into(),
        ));
    }
    Ok(((cfg.d1 / cfg.za + 1.0) * b1 - 1.0) / den)
}

/// Which physical setup a sequence simulates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scene {
    Real(RealScene),
    /// Uses the attack geometry with `dx` forced to zero.
    Print(AttackScene),
    Replay(AttackScene),
    Rotated(AttackScene),
}

impl Scene {
    pub fn name(&self) -> &'static str {
        match self {
            Scene::Real(_) => "real",
            Scene::Print(_) => "print",
            Scene::Replay(_) => "replay",
            Scene::Rotated(_) => "rotated",
        }
    }
}

/// One frame step of a simulated sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimate {
    /// Index of the later frame of the pair, starting at 1.
    pub frame: usize,
    pub flow: FlowObservation,
    pub estimate: RelativeDepth,
    /// What the closed form predicts for this step; `None` for a print.
    pub closed_form: Option<f64>,
}

/// Estimates for each of the `frames - 1` consecutive frame pairs.
///
/// `dv_schedule` gives the carrier shake per step and repeats when shorter
/// than the sequence; an empty schedule keeps the scene's own `dv`. Real
/// scenes ignore it. For a rotated carrier the recording-plane coordinates
/// advance with the face, so the `beta` factors drift from step to step.
pub fn simulate_sequence(
    scene: &Scene,
    frames: usize,
    dv_schedule: &[f64],
) -> Result<Vec<FrameEstimate>> {
    if frames < 2 {
        return Err(Error::domain(format!(
            "a sequence needs at least 2 frames, got {frames}"
        )));
    }
    let dv_at = |step: usize, fallback: f64| {
        if dv_schedule.is_empty() {
            fallback
        } else {
            dv_schedule[step % dv_schedule.len()]
        }
    };
    let mut out = Vec::with_capacity(frames - 1);
    match *scene {
        Scene::Real(cfg) => {
            for step in 0..frames - 1 {
                let flow = flow_real(&cfg)?;
                out.push(FrameEstimate {
                    frame: step + 1,
                    flow,
                    estimate: estimate_relative_depth(&flow)?,
                    closed_form: Some(cfg.true_ratio()),
                });
            }
        }
        Scene::Print(base) | Scene::Replay(base) => {
            let print = matches!(scene, Scene::Print(_));
            for step in 0..frames - 1 {
                let cfg = AttackScene {
                    dx: if print { 0.0 } else { base.dx },
                    dv: dv_at(step, base.dv),
                    ..base
                };
                let flow = flow_replay(&cfg)?;
                let closed_form = if print {
                    None
                } else {
                    Some(cfg.true_ratio() * replay_distortion_factor(&cfg)?)
                };
                out.push(FrameEstimate {
                    frame: step + 1,
                    flow,
                    estimate: estimate_relative_depth(&flow)?,
                    closed_form,
                });
            }
        }
        Scene::Rotated(base) => {
            let mut cfg = base;
            for step in 0..frames - 1 {
                let flow = flow_rotated(&cfg)?;
                out.push(FrameEstimate {
                    frame: step + 1,
                    flow,
                    estimate: estimate_relative_depth(&flow)?,
                    closed_form: Some(rotation_closed_form_ratio(&cfg)?),
                });
                let rec = cfg.recording_flow();
                cfg.ul1 += rec.du_l;
                cfg.um1 += rec.du_m;
                cfg.ur1 += rec.du_r;
            }
        }
    }
    Ok(out)
}

/// Population variance of the non-flat ratios in a series; `None` when every
/// step was flat.
pub fn ratio_variance(series: &[FrameEstimate]) -> Option<f64> {
    let ratios: Vec<f64> = series.iter().filter_map(|s| s.estimate.ratio()).collect();
    if ratios.is_empty() {
        return None;
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    Some(ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn unit_attack() -> AttackScene {
        AttackScene {
            fa: 1.0,
            fb: 1.0,
            za: 1.0,
            zb: 1.0,
            d1: 1.0,
            d2: 2.0,
            dx: 1.0,
            dv: 0.0,
            ..AttackScene::default()
        }
    }

    #[test]
    fn project_examples() {
        assert_eq!(project(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(project(2.0, 4.0, 3.0).unwrap(), 1.5);
        assert_eq!(project(1.0, 2.0, 0.0).unwrap(), 0.0);
        assert!(matches!(project(1.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(project(1.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn flow_real_examples() {
        let cfg = RealScene { f: 1.0, z: 1.0, d1: 1.0, d2: 2.0, dx: 1.0 };
        let obs = flow_real(&cfg).unwrap();
        assert_eq!((obs.du_l, obs.du_m), (1.0, 0.5));
        assert!(close(obs.du_r, 1.0 / 3.0, 1e-15));

        let still = flow_real(&RealScene { dx: 0.0, ..cfg }).unwrap();
        assert_eq!((still.du_l, still.du_m, still.du_r), (0.0, 0.0, 0.0));

        let obs = flow_real(&RealScene { f: 2.0, z: 1.0, d1: 0.0, d2: 1.0, dx: 0.5 }).unwrap();
        assert_eq!((obs.du_l, obs.du_m, obs.du_r), (1.0, 1.0, 0.5));
    }

    #[test]
    fn real_scene_rejects_bad_offsets() {
        let bad = RealScene { d1: 3.0, d2: 2.0, ..RealScene::default() };
        assert!(flow_real(&bad).is_err());
        let bad = RealScene { d2: 0.0, d1: 0.0, ..RealScene::default() };
        assert!(flow_real(&bad).is_err());
    }

    #[test]
    fn estimate_examples() {
        let obs = FlowObservation { du_l: 1.0, du_m: 0.5, du_r: 1.0 / 3.0 };
        assert!(close(estimate_relative_depth(&obs).unwrap().ratio().unwrap(), 0.5, 1e-12));

        for c in [0.3, -2.0, 7.5] {
            let flat = FlowObservation { du_l: c, du_m: c, du_r: c };
            assert!(estimate_relative_depth(&flat).unwrap().is_flat());
        }

        let obs = FlowObservation { du_l: 2.0, du_m: 1.0, du_r: 0.8 };
        assert!(close(estimate_relative_depth(&obs).unwrap().ratio().unwrap(), 2.0 / 3.0, 1e-12));
    }

    #[test]
    fn estimate_error_paths() {
        let inconsistent = FlowObservation { du_l: 1.0, du_m: 0.5, du_r: 1.0 };
        assert!(matches!(
            estimate_relative_depth(&inconsistent),
            Err(Error::InconsistentObservation(_))
        ));
        let zero_mid = FlowObservation { du_l: 1.0, du_m: 0.0, du_r: 0.5 };
        assert!(estimate_relative_depth(&zero_mid).is_err());
        let zero_far = FlowObservation { du_l: 1.0, du_m: 0.5, du_r: 0.0 };
        assert!(estimate_relative_depth(&zero_far).is_err());
    }

    #[test]
    fn flat_estimate_has_no_ratio() {
        assert_eq!(RelativeDepth::Flat.ratio(), None);
    }

    #[test]
    fn flow_replay_examples() {
        let obs = flow_replay(&unit_attack()).unwrap();
        assert_eq!((obs.du_l, obs.du_m), (1.0, 0.5));
        assert!(close(obs.du_r, 1.0 / 3.0, 1e-15));

        let print = flow_replay(&AttackScene { dx: 0.0, dv: 1.0, ..unit_attack() }).unwrap();
        assert!(close(print.du_l, 1.0, 1e-15));
        assert!(close(print.du_m, 1.0, 1e-15));
        assert!(close(print.du_r, 1.0, 1e-15));
        assert!(estimate_relative_depth(&print).unwrap().is_flat());

        let shaken = flow_replay(&AttackScene { dv: 0.1, ..unit_attack() }).unwrap();
        assert!(close(shaken.du_l, 1.1, 1e-15));
        assert!(close(shaken.du_m, 0.6, 1e-15));
        assert!(close(shaken.du_r, 1.3 / 3.0, 1e-15));
    }

    #[test]
    fn replay_needs_parallel_carrier() {
        let tilted = AttackScene { theta: 0.1, ..unit_attack() };
        assert!(flow_replay(&tilted).is_err());
        assert!(replay_distortion_factor(&tilted).is_err());
    }

    #[test]
    fn distortion_factor_examples() {
        assert_eq!(replay_distortion_factor(&unit_attack()).unwrap(), 1.0);

        let shaken = AttackScene { dv: 0.1, ..unit_attack() };
        let factor = replay_distortion_factor(&shaken).unwrap();
        assert!(close(factor, 1.3 / 1.2, 1e-14));
        let est = estimate_relative_depth(&flow_replay(&shaken).unwrap()).unwrap();
        assert!(close(est.ratio().unwrap(), 0.5 * 1.3 / 1.2, 1e-12));
        assert!((est.ratio().unwrap() - 0.541_67).abs() < 1e-5);

        let equal = AttackScene { d1: 2.0, d2: 2.0, dv: 0.7, ..unit_attack() };
        assert!(close(replay_distortion_factor(&equal).unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn distortion_factor_singular() {
        // fa*dx + (za + d1)*dv = 1 + 2*(-0.5) = 0
        let cfg = AttackScene { dv: -0.5, ..unit_attack() };
        assert!(matches!(
            replay_distortion_factor(&cfg),
            Err(Error::SingularConfiguration(_))
        ));
    }

    /// Places the rotated carrier point in the camera frame and intersects the
    /// ray through it with the vertical plane at `zb`.
    fn ray_plane_oracle(u: f64, zb: f64, theta: f64) -> f64 {
        // Carrier direction after rotating the vertical axis (0, 1) by theta
        // towards the camera; the pivot sits on the optical axis at depth zb.
        let (dir_depth, dir_height) = (-theta.sin(), theta.cos());
        let point = (zb + u * dir_depth, u * dir_height);
        // Ray s*point meets depth zb at s = zb / point.0.
        let s = zb / point.0;
        s * point.1
    }

    #[test]
    fn map_rotated_examples() {
        assert!(close(map_rotated_coordinate(0.7, 3.0, 0.0).unwrap(), 0.7, 1e-15));
        let v = map_rotated_coordinate(1.0, 2.0, PI / 6.0).unwrap();
        assert!(close(v, 2.0 * (3f64.sqrt() / 2.0) / 1.5, 1e-14));
        assert!((v - 1.154_700_538).abs() < 1e-9);
        assert!(close(v, ray_plane_oracle(1.0, 2.0, PI / 6.0), 1e-14));
        for zb in [0.5, 4.0] {
            for theta in [-1.0, 0.3] {
                assert_eq!(map_rotated_coordinate(0.0, zb, theta).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn map_rotated_degenerate() {
        // zb - u sin(theta) = 0 at u = 2, negative beyond
        for u in [2.5, 4.0] {
            assert!(matches!(
                map_rotated_coordinate(u, 1.0, PI / 6.0),
                Err(Error::DegenerateRotation { .. })
            ));
        }
    }

    #[test]
    fn flow_rotated_matches_replay_at_zero_angle() {
        let cfg = AttackScene { dv: 0.0, ..AttackScene::default() };
        let rot = flow_rotated(&cfg).unwrap();
        let rep = flow_replay(&cfg).unwrap();
        assert!(close(rot.du_l, rep.du_l, 1e-14));
        assert!(close(rot.du_m, rep.du_m, 1e-14));
        assert!(close(rot.du_r, rep.du_r, 1e-14));
    }

    #[test]
    fn flow_rotated_against_ray_oracle() {
        let cfg = AttackScene {
            fa: 1.0,
            fb: 1.0,
            za: 10.0,
            zb: 10.0,
            d1: 0.0,
            d2: 1.0,
            dx: 1.0,
            theta: PI / 12.0,
            ul1: 1.0,
            um1: 1.2,
            ur1: 0.8,
            ..AttackScene::default()
        };
        // du_l on the recording plane = fa*dx/za = 0.1
        assert!(close(cfg.recording_flow().du_l, 0.1, 1e-15));
        let rot = flow_rotated(&cfg).unwrap();
        let oracle = (ray_plane_oracle(1.1, 10.0, PI / 12.0) - ray_plane_oracle(1.0, 10.0, PI / 12.0))
            * cfg.fb
            / cfg.zb;
        assert!(close(rot.du_l, oracle, 1e-12));
    }

    #[test]
    fn beta_factors_collapse_without_rotation() {
        let (b1, b2) = rotation_beta_factors(&AttackScene::default()).unwrap();
        assert_eq!((b1, b2), (1.0, 1.0));
    }

    #[test]
    fn beta_sufficient_condition() {
        // um > ul and ur < ul at both endpoints, all positive.
        let cfg = AttackScene {
            d1: 0.0,
            d2: 1.0,
            theta: 0.4,
            ul1: 1.0,
            um1: 1.5,
            ur1: 0.5,
            ..AttackScene::default()
        };
        let rec = cfg.recording_flow();
        assert!(cfg.um1 + rec.du_m > cfg.ul1 + rec.du_l);
        assert!(cfg.ur1 + rec.du_r < cfg.ul1 + rec.du_l);
        let (b1, b2) = rotation_beta_factors(&cfg).unwrap();
        assert!(b1 < 1.0 && b2 > 1.0, "beta1 = {b1}, beta2 = {b2}");
    }

    #[test]
    fn rotated_estimate_matches_closed_form() {
        let cfg = AttackScene { theta: 0.3, ..AttackScene::default() };
        let est = estimate_relative_depth(&flow_rotated(&cfg).unwrap()).unwrap();
        let closed = rotation_closed_form_ratio(&cfg).unwrap();
        assert!(close(est.ratio().unwrap(), closed, 1e-9));
        assert!((closed - cfg.true_ratio()).abs() > 1e-6);
    }

    #[test]
    fn sequence_needs_two_frames() {
        let scene = Scene::Real(RealScene::default());
        assert!(simulate_sequence(&scene, 1, &[]).is_err());
        assert!(simulate_sequence(&scene, 0, &[]).is_err());
    }

    #[test]
    fn real_sequence_is_constant() {
        let cfg = RealScene::default();
        let series = simulate_sequence(&Scene::Real(cfg), 10, &[0.3, 0.1]).unwrap();
        assert_eq!(series.len(), 9);
        for s in &series {
            assert!(close(s.estimate.ratio().unwrap(), cfg.true_ratio(), 1e-12));
        }
        assert!(ratio_variance(&series).unwrap() < 1e-24);
    }

    #[test]
    fn replay_sequence_varies_with_shake() {
        let cfg = AttackScene::default();
        let schedule = [0.05, 0.1, -0.05, 0.0];
        let series = simulate_sequence(&Scene::Replay(cfg), 9, &schedule).unwrap();
        for (i, s) in series.iter().enumerate() {
            let step = AttackScene { dv: schedule[i % 4], ..cfg };
            let expected = cfg.true_ratio() * replay_distortion_factor(&step).unwrap();
            assert!(close(s.estimate.ratio().unwrap(), expected, 1e-9));
            assert!(close(s.closed_form.unwrap(), expected, 1e-15));
        }
        assert!(ratio_variance(&series).unwrap() > 1e-6);
    }

    #[test]
    fn print_sequence_is_flat() {
        let series =
            simulate_sequence(&Scene::Print(AttackScene::default()), 6, &[0.05, -0.2, 0.1]).unwrap();
        assert!(series.iter().all(|s| s.estimate.is_flat() && s.closed_form.is_none()));
        assert_eq!(ratio_variance(&series), None);
    }

    #[test]
    fn rotated_sequence_drifts() {
        let cfg = AttackScene { theta: 0.5, ..AttackScene::default() };
        let series = simulate_sequence(&Scene::Rotated(cfg), 8, &[]).unwrap();
        for s in &series {
            assert!(close(s.estimate.ratio().unwrap(), s.closed_form.unwrap(), 1e-9));
        }
        assert!(ratio_variance(&series).unwrap() > 0.0);
    }
}
