//! Ground-truth depth labels and face masks.
//!
//! A living label is the face surface rasterized onto a 32×32 grid and
//! min-max normalized so the point nearest the camera reads 1 and the
//! farthest in-face point reads 0. A spoof label is identically zero.
//!
//! Vertex `z` is the distance from the camera, so smaller `z` is nearer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Side length of label grids.
pub const DEPTH_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageBounds {
    pub width: f64,
    pub height: f64,
}

impl Default for ImageBounds {
    fn default() -> Self {
        ImageBounds {
            width: 256.0,
            height: 256.0,
        }
    }
}

/// Facial keypoints in image-aligned coordinates: `x` across, `y` down, `z` away from the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSet {
    pub vertices: Vec<[f64; 3]>,
}

impl VertexSet {
    pub fn new(vertices: Vec<[f64; 3]>) -> Self {
        VertexSet { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn validate(&self, bounds: &ImageBounds) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::domain(format!(
                "need at least 3 vertices, got {}",
                self.vertices.len()
            )));
        }
        if bounds.width.is_nan() || bounds.height.is_nan() || bounds.width <= 0.0 || bounds.height <= 0.0 {
            return Err(Error::domain(format!("invalid image bounds {bounds:?}")));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::domain(format!("vertex {i} is not finite: {v:?}")));
            }
            if v[0] < 0.0 || v[0] > bounds.width || v[1] < 0.0 || v[1] > bounds.height {
                return Err(Error::domain(format!(
                    "vertex {i} at ({}, {}) lies outside {}x{}",
                    v[0], v[1], bounds.width, bounds.height
                )));
            }
        }
        Ok(())
    }

    /// Shifts every vertex by `(dx, dy, dz)`.
    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> VertexSet {
        VertexSet {
            vertices: self
                .vertices
                .iter()
                .map(|v| [v[0] + dx, v[1] + dy, v[2] + dz])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Living,
    Spoof,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    values: Grid,
    kind: LabelKind,
}

impl DepthMap {
    /// Validates range and, for spoof labels, that every value is zero.
    pub fn new(values: Grid, kind: LabelKind) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("depth value {v} outside [0, 1]")));
        }
        if kind == LabelKind::Spoof && values.as_slice().iter().any(|&v| v != 0.0) {
            return Err(Error::domain("spoof depth map must be all zero"));
        }
        Ok(DepthMap { values, kind })
    }

    pub fn values(&self) -> &Grid {
        &self.values
    }

    pub fn into_grid(self) -> Grid {
        self.values
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn to_csv(&self) -> String {
        grid_to_csv(&self.values)
    }

    /// An all-zero grid reads back as a spoof label, anything else as living.
    pub fn from_csv(text: &str) -> Result<Self> {
        Self::infer(grid_from_csv(text)?)
    }

    pub fn to_json(&self) -> String {
        grid_to_json(&self.values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::infer(grid_from_json(text)?)
    }

    fn infer(values: Grid) -> Result<Self> {
        let kind = if values.as_slice().iter().all(|&v| v == 0.0) {
            LabelKind::Spoof
        } else {
            LabelKind::Living
        };
        DepthMap::new(values, kind)
    }
}

/// Binary face region on the label grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceMask {
    values: Grid,
}

impl FaceMask {
    pub fn new(values: Grid) -> Result<Self> {
        if values.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::domain("face mask values must be 0 or 1"));
        }
        Ok(FaceMask { values })
    }

    pub fn values(&self) -> &Grid {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.as_slice().iter().filter(|&&v| v == 1.0).count()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.values.get(r, c) == 1.0
    }

    pub fn to_csv(&self) -> String {
        grid_to_csv(&self.values)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        FaceMask::new(grid_from_csv(text)?)
    }

    pub fn to_json(&self) -> String {
        grid_to_json(&self.values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        FaceMask::new(grid_from_json(text)?)
    }
}

/// One line per row, values comma separated in shortest round-trip form.
pub fn grid_to_csv(grid: &Grid) -> String {
    let mut out = String::new();
    for r in 0..grid.rows() {
        let line: Vec<String> = grid.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn grid_from_csv(text: &str) -> Result<Grid> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|e| {
                    Error::parse(Some(format!("row {}, column {}", i + 1, j + 1)), e.to_string())
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    rows_to_grid(rows)
}

pub fn grid_to_json(grid: &Grid) -> String {
    let rows: Vec<&[f64]> = (0..grid.rows()).map(|r| grid.row(r)).collect();
    serde_json::to_string(&rows).expect("f64 rows always serialize")
}

pub fn grid_from_json(text: &str) -> Result<Grid> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
    rows_to_grid(rows)
}

fn rows_to_grid(rows: Vec<Vec<f64>>) -> Result<Grid> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
        return Err(Error::parse(
            Some(format!("row {}", i + 1)),
            format!("expected {n_cols} values, found {}", row.len()),
        ));
    }
    Grid::from_vec(n_rows, n_cols, rows.into_iter().flatten().collect())
}

/// The all-zero spoof label.
pub fn spoof_depth() -> DepthMap {
    DepthMap {
        values: Grid::zeros(DEPTH_SIDE, DEPTH_SIDE),
        kind: LabelKind::Spoof,
    }
}

/// Projected vertex positions in cell units, together with the cell they fall in.
fn cell_positions(v: &VertexSet, bounds: &ImageBounds, side: usize) -> Vec<(f64, f64, usize, usize)> {
    let to_index = |p: f64| (p.floor().max(0.0) as usize).min(side - 1);
    v.vertices
        .iter()
        .map(|p| {
            let cx = p[0] / bounds.width * side as f64;
            let cy = p[1] / bounds.height * side as f64;
            (cx, cy, to_index(cy), to_index(cx))
        })
        .collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    points.dedup();
    if points.len() < 3 {
        return points;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * points.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(points.iter())
        } else {
            Box::new(points.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_convex(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= -1e-12)
}

/// Cells whose centre lies inside the convex hull of the projected
/// vertices, plus every cell a vertex lands in.
fn hull_cells(positions: &[(f64, f64, usize, usize)], side: usize) -> Vec<bool> {
    let hull = convex_hull(positions.iter().map(|p| (p.0, p.1)).collect());
    let mut inside = vec![false; side * side];
    for r in 0..side {
        for c in 0..side {
            inside[r * side + c] = inside_convex(&hull, (c as f64 + 0.5, r as f64 + 0.5));
        }
    }
    for p in positions {
        inside[p.2 * side + p.3] = true;
    }
    inside
}

/// Face-hull mask of a vertex set on the 32×32 grid.
pub fn hull_mask(v: &VertexSet, bounds: &ImageBounds) -> Result<FaceMask> {
    hull_mask_sized(v, bounds, DEPTH_SIDE)
}

pub fn hull_mask_sized(v: &VertexSet, bounds: &ImageBounds, side: usize) -> Result<FaceMask> {
    v.validate(bounds)?;
    let inside = hull_cells(&cell_positions(v, bounds, side), side);
    let data = inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    FaceMask::new(Grid::from_vec(side, side, data)?)
}

/// Living depth label on the standard 32×32 grid.
pub fn generate_living_depth(v: &VertexSet, bounds: &ImageBounds) -> Result<DepthMap> {
    generate_living_depth_sized(v, bounds, DEPTH_SIDE)
}

/// Splats vertices onto a `side`×`side` grid keeping the nearest vertex per
/// cell, fills in-hull holes by repeated 8-neighbour averaging, then
/// min-max normalizes the face region.
pub fn generate_living_depth_sized(v: &VertexSet, bounds: &ImageBounds, side: usize) -> Result<DepthMap> {
    v.validate(bounds)?;
    let (z_min, z_max) = v
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])));
    let scale = z_min.abs().max(z_max.abs()).max(1.0);
    if z_max - z_min <= 1e-12 * scale {
        return Err(Error::DegenerateExtent(z_min));
    }

    let positions = cell_positions(v, bounds, side);
    let inside = hull_cells(&positions, side);

    // Nearness to the camera; larger is nearer.
    let mut value: Vec<Option<f64>> = vec![None; side * side];
    for (p, &(_, _, r, c)) in v.vertices.iter().zip(&positions) {
        let near = z_max - p[2];
        let cell = &mut value[r * side + c];
        *cell = Some(cell.map_or(near, |old| old.max(near)));
    }

    let mut holes: Vec<usize> = (0..side * side)
        .filter(|&i| inside[i] && value[i].is_none())
        .collect();
    while !holes.is_empty() {
        let filled: Vec<(usize, f64)> = holes
            .iter()
            .filter_map(|&i| {
                let (r, c) = ((i / side) as isize, (i % side) as isize);
                let mut sum = 0.0;
                let mut n = 0usize;
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (rr, cc) = (r + dr, c + dc);
                        if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr >= side as isize || cc >= side as isize {
                            continue;
                        }
                        if let Some(x) = value[rr as usize * side + cc as usize] {
                            sum += x;
                            n += 1;
                        }
                    }
                }
                (n > 0).then(|| (i, sum / n as f64))
            })
            .collect();
        if filled.is_empty() {
            // Unreachable holes are left outside the face.
            break;
        }
        for &(i, x) in &filled {
            value[i] = Some(x);
        }
        holes.retain(|&i| value[i].is_none());
    }

    let (lo, hi) = value
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi - lo <= 1e-12 * scale {
        return Err(Error::DegenerateExtent(z_min));
    }
    let data = value
        .into_iter()
        .map(|x| x.map_or(0.0, |x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)))
        .collect();
    DepthMap::new(Grid::from_vec(side, side, data)?, LabelKind::Living)
}

/// Parameters of the synthetic dome used as a stand-in face surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceSurfaceParams {
    /// How far the dome top rises towards the camera; zero gives a plane.
    pub amplitude: f64,
    pub center: (f64, f64),
    pub radius: f64,
    /// The surface has `grid_size²` vertices.
    pub grid_size: usize,
    /// Distance of the dome rim from the camera.
    pub base_depth: f64,
    /// Seeded in-plane jitter of up to this many image units; `None` for none.
    pub jitter: Option<(u64, f64)>,
}

impl Default for FaceSurfaceParams {
    fn default() -> Self {
        FaceSurfaceParams {
            amplitude: 40.0,
            center: (128.0, 128.0),
            radius: 96.0,
            grid_size: 48,
            base_depth: 500.0,
            jitter: None,
        }
    }
}

/// Deterministic dome-shaped vertex cloud.
///
/// A square lattice is mapped onto the disk of the given radius with the
/// concentric (Shirley-Chiu) mapping, so every vertex lies on the face.
pub fn synthesize_face_surface(params: &FaceSurfaceParams) -> Result<VertexSet> {
    if params.radius.is_nan() || params.radius <= 0.0 {
        return Err(Error::domain(format!("radius must be > 0, got {}", params.radius)));
    }
    if params.grid_size < 2 {
        return Err(Error::domain("grid_size must be at least 2"));
    }
    let n = params.grid_size;
    let mut rng = params.jitter.map(|(seed, _)| ChaCha8Rng::seed_from_u64(seed));
    let mut vertices = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let a = 2.0 * j as f64 / (n - 1) as f64 - 1.0;
            let b = 2.0 * i as f64 / (n - 1) as f64 - 1.0;
            let (rho, phi) = concentric(a, b);
            let (mut x, mut y) = (
                params.center.0 + params.radius * rho * phi.cos(),
                params.center.1 + params.radius * rho * phi.sin(),
            );
            if let (Some(rng), Some((_, amount))) = (rng.as_mut(), params.jitter) {
                x += rng.gen_range(-amount..=amount);
                y += rng.gen_range(-amount..=amount);
            }
            let height = params.amplitude * (1.0 - rho * rho).max(0.0).sqrt();
            vertices.push([x, y, params.base_depth - height]);
        }
    }
    Ok(VertexSet { vertices })
}

/// Maps `[-1, 1]²` onto the unit disk, returning `(radius, angle)`.
fn concentric(a: f64, b: f64) -> (f64, f64) {
    use std::f64::consts::FRAC_PI_4;
    if a == 0.0 && b == 0.0 {
        (0.0, 0.0)
    } else if a.abs() > b.abs() {
        (a.abs(), FRAC_PI_4 * (b / a) + if a < 0.0 { std::f64::consts::PI } else { 0.0 })
    } else {
        (b.abs(), std::f64::consts::FRAC_PI_2 - FRAC_PI_4 * (a / b) + if b < 0.0 { std::f64::consts::PI } else { 0.0 })
    }
}

/// Cells whose depth exceeds `threshold` (0 by default).
pub fn mask_from_depth(d: &DepthMap, threshold: f64) -> FaceMask {
    FaceMask {
        values: d.values().map(|v| if v > threshold { 1.0 } else { 0.0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hemisphere_grid(side: usize, radius: f64) -> (VertexSet, ImageBounds) {
        let bounds = ImageBounds { width: side as f64, height: side as f64 };
        let center = side as f64 / 2.0;
        let mut vertices = Vec::new();
        for r in 0..side * 4 {
            for c in 0..side * 4 {
                let (x, y) = ((c as f64 + 0.5) / 4.0, (r as f64 + 0.5) / 4.0);
                let d2 = (x - center).powi(2) + (y - center).powi(2);
                if d2 <= radius * radius {
                    vertices.push([x, y, 100.0 - (radius * radius - d2).sqrt()]);
                }
            }
        }
        (VertexSet::new(vertices), bounds)
    }

    #[test]
    fn planar_set_is_rejected() {
        let flat = synthesize_face_surface(&FaceSurfaceParams { amplitude: 0.0, ..Default::default() }).unwrap();
        assert!(matches!(
            generate_living_depth(&flat, &ImageBounds::default()),
            Err(Error::DegenerateExtent(_))
        ));
    }

    #[test]
    fn too_few_or_out_of_bounds_vertices() {
        let bounds = ImageBounds { width: 10.0, height: 10.0 };
        let two = VertexSet::new(vec![[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]);
        assert!(generate_living_depth(&two, &bounds).is_err());
        let outside = VertexSet::new(vec![[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [11.0, 2.0, 3.0]]);
        assert!(generate_living_depth(&outside, &bounds).is_err());
    }

    #[test]
    fn living_map_spans_unit_range() {
        let v = synthesize_face_surface(&FaceSurfaceParams::default()).unwrap();
        let d = generate_living_depth(&v, &ImageBounds::default()).unwrap();
        assert_eq!(d.values().shape(), (DEPTH_SIDE, DEPTH_SIDE));
        assert_eq!(d.kind(), LabelKind::Living);
        assert_eq!(d.values().max(), 1.0);
        assert_eq!(d.values().min(), 0.0);
    }

    #[test]
    fn hemisphere_peaks_at_center_cell() {
        let (v, bounds) = hemisphere_grid(DEPTH_SIDE, 12.0);
        let d = generate_living_depth(&v, &bounds).unwrap();
        // The four cells around the pole all contain points nearest the pole.
        let peak = d.values().max();
        assert_eq!(peak, 1.0);
        let c = DEPTH_SIDE / 2;
        assert!(d.values().get(c, c) > 0.99);
        // rim cells hold the smallest face values
        let rim = d.values().get(c, c + 11);
        assert!(rim < 0.35, "rim {rim}");
        assert_eq!(d.values().get(0, 0), 0.0);
    }

    #[test]
    fn z_translation_invariance() {
        let v = synthesize_face_surface(&FaceSurfaceParams::default()).unwrap();
        let bounds = ImageBounds::default();
        let a = generate_living_depth(&v, &bounds).unwrap();
        let b = generate_living_depth(&v.translated(0.0, 0.0, 37.25), &bounds).unwrap();
        for (x, y) in a.values().as_slice().iter().zip(b.values().as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spoof_depth_is_zero() {
        let d = spoof_depth();
        assert_eq!(d.values().shape(), (32, 32));
        assert_eq!(d.kind(), LabelKind::Spoof);
        assert_eq!(d.values().sum(), 0.0);
        assert_eq!(d.values().max(), 0.0);
        assert_eq!(mask_from_depth(&d, 0.0).count(), 0);
    }

    #[test]
    fn depth_map_validation() {
        assert!(DepthMap::new(Grid::filled(2, 2, 1.5), LabelKind::Living).is_err());
        assert!(DepthMap::new(Grid::filled(2, 2, 0.5), LabelKind::Spoof).is_err());
        assert!(FaceMask::new(Grid::filled(2, 2, 0.5)).is_err());
    }

    #[test]
    fn synthesize_counts_and_determinism() {
        let p = FaceSurfaceParams::default();
        let a = synthesize_face_surface(&p).unwrap();
        assert_eq!(a.len(), p.grid_size * p.grid_size);
        assert_eq!(a, synthesize_face_surface(&p).unwrap());
        let jittered = FaceSurfaceParams { jitter: Some((7, 0.5)), ..p };
        assert_eq!(
            synthesize_face_surface(&jittered).unwrap(),
            synthesize_face_surface(&jittered).unwrap()
        );
        assert_ne!(a, synthesize_face_surface(&jittered).unwrap());
        assert!(synthesize_face_surface(&FaceSurfaceParams { radius: 0.0, ..p }).is_err());
    }

    #[test]
    fn mask_threshold_one_keeps_at_most_the_peak() {
        let v = synthesize_face_surface(&FaceSurfaceParams::default()).unwrap();
        let d = generate_living_depth(&v, &ImageBounds::default()).unwrap();
        assert!(mask_from_depth(&d, 1.0).count() <= 1);
        assert!(mask_from_depth(&d, 0.0).count() > 100);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let v = synthesize_face_surface(&FaceSurfaceParams::default()).unwrap();
        let d = generate_living_depth(&v, &ImageBounds::default()).unwrap();
        let csv = d.to_csv();
        assert_eq!(csv.lines().count(), 32);
        assert!(csv.lines().all(|l| l.split(',').count() == 32));
        assert_eq!(DepthMap::from_csv(&csv).unwrap(), d);
        assert_eq!(DepthMap::from_json(&d.to_json()).unwrap(), d);
        assert_eq!(DepthMap::from_csv(&spoof_depth().to_csv()).unwrap(), spoof_depth());

        let m = hull_mask(&v, &ImageBounds::default()).unwrap();
        assert_eq!(FaceMask::from_csv(&m.to_csv()).unwrap(), m);
        assert_eq!(FaceMask::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let err = grid_from_csv("1,2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(grid_from_csv("1,x\n").is_err());
    }
}
